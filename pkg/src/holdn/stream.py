"""Time bookkeeping for chunked streaming.

All times are integer milliseconds measured from the start of the source.
A stream is consumed in decision points: the agent first waits ``start_ms``,
then gets a new decision every ``chunk_ms`` until the source runs out.
"""

from __future__ import annotations

from dataclasses import dataclass, field
from enum import Enum
from typing import Optional, Sequence, Tuple

import numpy as np

from .errors import ConfigError, ContractError, RangeError

DEFAULT_FRAME_RATE_HZ = 50  # 20 ms per frame


@dataclass(frozen=True)
class SpeechStream:
    """A timed source signal.

    ``frames`` holds precomputed feature vectors, one row per frame. When it
    is ``None`` the stream is synthetic and the encoder derives features from
    the frame index alone.
    """

    id: str
    duration_ms: int
    frame_rate_hz: int = DEFAULT_FRAME_RATE_HZ
    frames: Optional[np.ndarray] = field(default=None, repr=False, compare=False)

    def __post_init__(self):
        if self.duration_ms <= 0:
            raise ConfigError(f"duration_ms must be > 0, got {self.duration_ms}")
        if self.frame_rate_hz <= 0:
            raise ConfigError(f"frame_rate_hz must be > 0, got {self.frame_rate_hz}")
        if self.frames is not None:
            if self.frames.ndim != 2 or self.frames.shape[0] != self.num_frames:
                raise ConfigError(
                    f"stream {self.id!r}: expected {self.num_frames} stored frames, "
                    f"got array of shape {self.frames.shape}"
                )

    @property
    def num_frames(self) -> int:
        return self.duration_ms * self.frame_rate_hz // 1000


def frames_available(stream: SpeechStream, t_ms: int) -> int:
    """Number of whole frames that have arrived by time ``t_ms``."""
    if not 0 <= t_ms <= stream.duration_ms:
        raise RangeError(f"t_ms={t_ms} outside [0, {stream.duration_ms}]")
    return t_ms * stream.frame_rate_hz // 1000


@dataclass(frozen=True)
class ChunkSchedule:
    decision_times_ms: Tuple[int, ...]

    @property
    def source_finished_at(self) -> int:
        return self.decision_times_ms[-1]

    def is_finished(self, t_ms: int) -> bool:
        return t_ms >= self.source_finished_at

    def __len__(self):
        return len(self.decision_times_ms)


def build_schedule(duration_ms: int, start_ms: int, chunk_ms: int) -> ChunkSchedule:
    """Decision points: ``start_ms``, then every ``chunk_ms``, clamped to the end.

    A stream shorter than the start wait gets a single decision at its end.
    A residual chunk shorter than ``chunk_ms`` still gets a decision at
    ``duration_ms``.
    """
    for name, value in (("duration_ms", duration_ms), ("start_ms", start_ms), ("chunk_ms", chunk_ms)):
        if value <= 0:
            raise ConfigError(f"{name} must be > 0, got {value}")
    times = []
    t = min(start_ms, duration_ms)
    while t < duration_ms:
        times.append(t)
        t += chunk_ms
    times.append(duration_ms)
    return ChunkSchedule(tuple(times))


class ActionKind(Enum):
    READ = "read"
    WRITE = "write"


@dataclass(frozen=True)
class AgentAction:
    kind: ActionKind
    tokens: Tuple[int, ...] = ()

    def __post_init__(self):
        if self.kind is ActionKind.WRITE and not self.tokens:
            raise ContractError("Write action must carry at least one token")
        if self.kind is ActionKind.READ and self.tokens:
            raise ContractError("Read action cannot carry tokens")

    @classmethod
    def read(cls) -> "AgentAction":
        return cls(ActionKind.READ)

    @classmethod
    def write(cls, tokens: Sequence[int]) -> "AgentAction":
        return cls(ActionKind.WRITE, tuple(tokens))

    @property
    def is_read(self) -> bool:
        return self.kind is ActionKind.READ


@dataclass(frozen=True)
class CommitEntry:
    token: int
    delay_ms: int  # source audio consumed when the token was emitted
    elapsed_ms: int  # clock time since stream start, including compute


@dataclass(frozen=True)
class CommitLog:
    """Append-only record of emitted tokens. ``commit`` returns a new log."""

    entries: Tuple[CommitEntry, ...] = ()

    @property
    def tokens(self) -> Tuple[int, ...]:
        return tuple(e.token for e in self.entries)

    @property
    def delays(self) -> list:
        return [e.delay_ms for e in self.entries]

    @property
    def elapsed(self) -> list:
        return [e.elapsed_ms for e in self.entries]

    def __len__(self):
        return len(self.entries)


def commit(log: CommitLog, tokens: Sequence[int], delay_ms: int, elapsed_ms: int) -> CommitLog:
    """Append ``tokens`` stamped with one (delay, elapsed) pair."""
    if not tokens:
        raise ContractError("commit requires at least one token")
    if log.entries:
        last = log.entries[-1]
        if delay_ms < last.delay_ms:
            raise ContractError(f"delay regression: {delay_ms} < {last.delay_ms}")
        if elapsed_ms < last.elapsed_ms:
            raise ContractError(f"elapsed regression: {elapsed_ms} < {last.elapsed_ms}")
    if elapsed_ms < delay_ms:
        raise ContractError(f"elapsed {elapsed_ms} precedes consumed audio {delay_ms}")
    new = tuple(CommitEntry(int(tok), delay_ms, elapsed_ms) for tok in tokens)
    return CommitLog(log.entries + new)
