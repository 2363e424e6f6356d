"""Hold-n streaming policy.

At each decision point the whole received prefix is re-encoded and
re-decoded with the already committed tokens forced as the decoder prefix.
The last ``hold_n`` tokens of the resulting hypothesis are withheld until
more audio arrives; whatever remains beyond the committed output is
written. Once the source is finished the full hypothesis is released.
"""

from __future__ import annotations

import time
from dataclasses import dataclass, field
from typing import Callable, List, Optional, Sequence, Tuple, Union

from .adapter import AdapterConfig, Encoder, adapt
from .decoding import Hypothesis, ScoreModel, beam_search
from .errors import ConfigError, ContractError
from .stream import (
    AgentAction,
    ChunkSchedule,
    CommitLog,
    SpeechStream,
    build_schedule,
    commit,
    frames_available,
)

# Maps measured wall seconds of one decision to the milliseconds charged on
# the simulated clock.
ComputeCost = Callable[[float], int]


def wall_cost(seconds: float) -> int:
    return int(round(seconds * 1000))


def fixed_cost(ms: int) -> ComputeCost:
    if ms < 0:
        raise ConfigError(f"compute cost must be >= 0, got {ms}")
    return lambda _seconds: ms


@dataclass(frozen=True)
class PolicyConfig:
    start_ms: int = 2000
    chunk_ms: int = 2500
    hold_n: int = 7
    beam: int = 4
    max_len: int = 256

    def __post_init__(self):
        if self.start_ms < 1 or self.chunk_ms < 1:
            raise ConfigError(f"start_ms and chunk_ms must be >= 1, got {self.start_ms}, {self.chunk_ms}")
        if self.hold_n < 0:
            raise ConfigError(f"hold_n must be >= 0, got {self.hold_n}")
        if self.beam < 1:
            raise ConfigError(f"beam must be >= 1, got {self.beam}")
        if self.max_len < 1:
            raise ConfigError(f"max_len must be >= 1, got {self.max_len}")


@dataclass(frozen=True)
class PrunedPrefix:
    tokens: Tuple[int, ...]


@dataclass(frozen=True)
class ReadAction:
    pass


SelectiveResult = Union[PrunedPrefix, ReadAction]


def selective_output(hypothesis: Hypothesis, n: int, source_finished: bool) -> SelectiveResult:
    """Withhold the last ``min(n, l)`` tokens of a partial-input hypothesis."""
    tokens = tuple(hypothesis.tokens)
    if source_finished:
        return PrunedPrefix(tokens)
    l = len(tokens)
    prefix = tokens[: l - min(n, l)]
    if prefix:
        return PrunedPrefix(prefix)
    return ReadAction()


@dataclass(frozen=True)
class Decision:
    """What happened at one decision point; kept for inspection and tests."""

    t_ms: int
    frames: int
    finished: bool
    hypothesis: Optional[Tuple[int, ...]]  # None when decoding was skipped
    action: AgentAction
    compute_ms: int


@dataclass
class StreamSession:
    stream: SpeechStream
    schedule: ChunkSchedule
    committed: CommitLog = field(default_factory=CommitLog)
    chunk_index: int = 0
    compute_ms: int = 0  # accumulated charged computation
    trace: List[Decision] = field(default_factory=list)

    @classmethod
    def start(cls, stream: SpeechStream, config: PolicyConfig) -> "StreamSession":
        return cls(stream, build_schedule(stream.duration_ms, config.start_ms, config.chunk_ms))

    @property
    def done(self) -> bool:
        return self.chunk_index >= len(self.schedule)

    @property
    def pending_time(self) -> int:
        return self.schedule.decision_times_ms[self.chunk_index]


def step(
    session: StreamSession,
    encoder: Encoder,
    adapter: AdapterConfig,
    model: ScoreModel,
    config: PolicyConfig,
    cost: ComputeCost = wall_cost,
) -> AgentAction:
    """Run one decision: encode, decode, withhold, commit."""
    if session.done:
        raise ContractError("step called on a finished session")
    t = session.pending_time
    finished = session.schedule.is_finished(t)
    f = frames_available(session.stream, t)
    committed = session.committed.tokens

    tic = time.perf_counter()
    features = adapt(encoder.encode(session.stream, f), adapter)
    hyp_tokens = None
    result: SelectiveResult = ReadAction()
    if finished or not features.degenerate:
        top = beam_search(model, features, config.beam, config.max_len, committed)[0]
        hyp_tokens = top.tokens
        if hyp_tokens[: len(committed)] != committed:
            raise ContractError(f"hypothesis {hyp_tokens} does not extend committed {committed}")
        result = selective_output(top, config.hold_n, finished)
    charged = cost(time.perf_counter() - tic)
    session.compute_ms += charged

    action = AgentAction.read()
    if isinstance(result, PrunedPrefix):
        # A prefix shorter than the committed output leaves nothing new.
        delta = result.tokens[len(committed):]
        if delta:
            session.committed = commit(session.committed, delta, t, t + session.compute_ms)
            action = AgentAction.write(delta)

    session.trace.append(Decision(t, f, finished, hyp_tokens, action, charged))
    session.chunk_index += 1
    return action


def run_session(
    stream: SpeechStream,
    encoder: Encoder,
    adapter: AdapterConfig,
    model: ScoreModel,
    config: PolicyConfig,
    cost: ComputeCost = wall_cost,
) -> StreamSession:
    session = StreamSession.start(stream, config)
    while not session.done:
        step(session, encoder, adapter, model, config, cost)
    return session


def run_stream(
    stream: SpeechStream,
    encoder: Encoder,
    adapter: AdapterConfig,
    model: ScoreModel,
    config: PolicyConfig,
    cost: ComputeCost = wall_cost,
) -> CommitLog:
    """Stream ``stream`` through the policy and return the commit log."""
    return run_session(stream, encoder, adapter, model, config, cost).committed


def written_tokens(actions: Sequence[AgentAction]) -> Tuple[int, ...]:
    return tuple(tok for a in actions for tok in a.tokens)
