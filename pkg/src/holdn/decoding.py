"""Tokenization, prompt composition and prefix-constrained beam search.

Score models expose ``next_logprobs(speech, prefix)`` returning a
log-probability vector over the whole vocabulary. Two are provided:
``TableModel`` (a deterministic oracle that emits a fixed target as audio
arrives) and ``ReadoutModel`` (a seeded linear readout of the adapted
speech features, one token per adapted row).
"""

from __future__ import annotations

from dataclasses import dataclass
from typing import Iterable, Protocol, Sequence, Tuple, Union

import numpy as np

from .adapter import FeatureMatrix
from .errors import ConfigError, ContractError

BOS, EOS, PAD, UNK = 0, 1, 2, 3
RESERVED = ("<s>", "</s>", "<pad>", "<unk>")

LOGPROB_FLOOR = -1e9


class WhitespaceTokenizer:
    """Word-level tokenizer; ids 0-3 are BOS/EOS/PAD/UNK."""

    bos_id, eos_id, pad_id, unk_id = BOS, EOS, PAD, UNK

    def __init__(self, words: Iterable[str] = ()):
        self._itos = list(RESERVED)
        self._stoi = {w: i for i, w in enumerate(self._itos)}
        for w in words:
            self.add(w)

    @classmethod
    def from_texts(cls, texts: Iterable[str]) -> "WhitespaceTokenizer":
        return cls(w for text in texts for w in text.split())

    def add(self, word: str) -> int:
        if word not in self._stoi:
            self._stoi[word] = len(self._itos)
            self._itos.append(word)
        return self._stoi[word]

    def __len__(self):
        return len(self._itos)

    @property
    def vocab_size(self) -> int:
        return len(self._itos)

    def tokenize(self, text: str) -> list[int]:
        return [self._stoi.get(w, UNK) for w in text.split()]

    def detokenize(self, ids: Sequence[int]) -> str:
        return " ".join(self._itos[i] for i in ids if i not in (BOS, EOS, PAD))


# --- prompt template ------------------------------------------------------


@dataclass(frozen=True)
class SystemPrompt:
    ids: Tuple[int, ...]


@dataclass(frozen=True)
class Marker:
    name: str  # "USER" or "ASSISTANT"


@dataclass(frozen=True)
class SpeechEmbedding:
    features: FeatureMatrix


@dataclass(frozen=True)
class TargetPrefix:
    ids: Tuple[int, ...]


Segment = Union[SystemPrompt, Marker, SpeechEmbedding, TargetPrefix]
TEMPLATE_ORDER = (SystemPrompt, Marker, SpeechEmbedding, Marker, TargetPrefix)


@dataclass(frozen=True)
class PromptSequence:
    segments: Tuple[Segment, ...]

    def __post_init__(self):
        kinds = tuple(type(s) for s in self.segments)
        if kinds != TEMPLATE_ORDER or [s.name for s in self.segments if isinstance(s, Marker)] != ["USER", "ASSISTANT"]:
            raise ContractError(f"malformed prompt layout {kinds}")

    @property
    def system_prompt(self) -> Tuple[int, ...]:
        return self.segments[0].ids

    @property
    def speech(self) -> FeatureMatrix:
        return self.segments[2].features

    @property
    def target_prefix(self) -> Tuple[int, ...]:
        return self.segments[4].ids

    def render(self, tokenizer: WhitespaceTokenizer) -> str:
        """Human-readable form, e.g. ``"<P> USER: <S x16> ASSISTANT: ein"``."""
        s = self.speech
        parts = [
            tokenizer.detokenize(self.system_prompt),
            "USER:",
            f"<S {s.rows}x{s.dim}>",
            "ASSISTANT:",
            tokenizer.detokenize(self.target_prefix),
        ]
        return " ".join(p for p in parts if p)


def compose_template(system_prompt: Sequence[int], speech: FeatureMatrix, target_prefix: Sequence[int]) -> PromptSequence:
    """Lay out ``<P> USER: <S> ASSISTANT: <T>`` as five symbolic segments."""
    return PromptSequence((
        SystemPrompt(tuple(system_prompt)),
        Marker("USER"),
        SpeechEmbedding(speech),
        Marker("ASSISTANT"),
        TargetPrefix(tuple(target_prefix)),
    ))


# --- score models ---------------------------------------------------------


class ScoreModel(Protocol):
    vocab_size: int
    eos_id: int

    def next_logprobs(self, speech: FeatureMatrix, prefix: Sequence[int]) -> np.ndarray:
        ...


def _one_hot_logprobs(vocab_size: int, index: int) -> np.ndarray:
    out = np.full(vocab_size, LOGPROB_FLOOR)
    out[index] = 0.0
    return out


@dataclass(frozen=True)
class TableModel:
    """Emits ``target[i]`` once at least ``reveal[i]`` source frames are seen.

    The decision depends only on the prefix length, so hypotheses are stable
    prefixes of the target as audio accumulates.
    """

    target: Tuple[int, ...]
    reveal: Tuple[int, ...]
    vocab_size: int
    eos_id: int = EOS

    def __post_init__(self):
        object.__setattr__(self, "target", tuple(int(t) for t in self.target))
        object.__setattr__(self, "reveal", tuple(int(r) for r in self.reveal))
        if len(self.target) != len(self.reveal):
            raise ConfigError(f"target has {len(self.target)} tokens but reveal has {len(self.reveal)}")
        if any(b < a for a, b in zip(self.reveal, self.reveal[1:])):
            raise ConfigError(f"reveal frames must be non-decreasing: {self.reveal}")
        if any(not 0 <= t < self.vocab_size or t == self.eos_id for t in self.target):
            raise ConfigError("target ids must be non-EOS ids inside the vocabulary")

    def next_logprobs(self, speech: FeatureMatrix, prefix: Sequence[int]) -> np.ndarray:
        return table_model_next(self, speech.source_frames, prefix)


def table_model_next(model: TableModel, f: int, prefix: Sequence[int]) -> np.ndarray:
    i = len(prefix)
    if i < len(model.target) and model.reveal[i] <= f:
        return _one_hot_logprobs(model.vocab_size, model.target[i])
    return _one_hot_logprobs(model.vocab_size, model.eos_id)


class ReadoutModel:
    """Seeded linear readout: token ``j`` is scored from adapted row ``j``.

    Rows near the right edge of a partial input change as more audio
    arrives (the convs see new context past the zero padding), so this model
    produces hypotheses that are not always stable prefixes.
    """

    def __init__(self, vocab_size: int, dim: int, *, seed: int = 0, eos_bias: float = -4.0, eos_id: int = EOS):
        if vocab_size <= len(RESERVED):
            raise ConfigError("readout model needs at least one non-reserved token")
        self.vocab_size = vocab_size
        self.eos_id = eos_id
        self.dim = dim
        rng = np.random.default_rng(seed)
        self.weights = rng.normal(0.0, 2.0 * dim ** -0.5, size=(vocab_size, dim))
        self.eos_bias = eos_bias

    def next_logprobs(self, speech: FeatureMatrix, prefix: Sequence[int]) -> np.ndarray:
        j = len(prefix)
        if j >= speech.rows:
            return _one_hot_logprobs(self.vocab_size, self.eos_id)
        if speech.dim != self.dim:
            raise ConfigError(f"readout expects dim {self.dim}, got {speech.dim}")
        logits = self.weights @ speech.values[j]
        logits[self.eos_id] = self.eos_bias
        for r in (BOS, PAD, UNK):
            if r != self.eos_id:
                logits[r] = LOGPROB_FLOOR
        shifted = logits - logits.max()
        return shifted - np.log(np.exp(shifted).sum())


# --- beam search ----------------------------------------------------------


@dataclass(frozen=True)
class Hypothesis:
    tokens: Tuple[int, ...]  # EOS never stored
    score: float
    finished: bool = False

    @property
    def length(self) -> int:
        return len(self.tokens)


def _rank_key(h: Hypothesis):
    return (-h.score, len(h.tokens), h.tokens)


def beam_search(
    model: ScoreModel,
    speech: FeatureMatrix,
    beam: int,
    max_len: int,
    forced_prefix: Sequence[int] = (),
    *,
    early_stop: bool = True,
) -> list[Hypothesis]:
    """Length-synchronous beam search with a scored, unsearched forced prefix.

    Scores are raw cumulative log-probs. Finished hypotheses stay in the beam
    and compete with live ones; ties go to the shorter, then the
    lexicographically smaller, sequence. A hypothesis holds at most
    ``max_len`` tokens; live hypotheses that hit the cap are returned
    unfinished.

    With ``early_stop`` the search ends once the best entry is finished and
    every live hypothesis scores strictly below it. Log-probs are
    non-positive, so this never changes the top result.
    """
    if beam < 1:
        raise ConfigError(f"beam must be >= 1, got {beam}")
    forced = tuple(int(t) for t in forced_prefix)
    if len(forced) > max_len:
        raise ConfigError(f"forced prefix of {len(forced)} tokens exceeds max_len={max_len}")
    eos = model.eos_id
    if eos in forced:
        raise ContractError("forced prefix contains EOS")

    score = 0.0
    for i, tok in enumerate(forced):
        score += float(model.next_logprobs(speech, forced[:i])[tok])
    live = [Hypothesis(forced, score)]
    finished: list[Hypothesis] = []

    while live and len(live[0].tokens) < max_len:
        candidates = list(finished)
        for h in live:
            lp = np.asarray(model.next_logprobs(speech, h.tokens), dtype=float)
            ids = np.arange(lp.size)
            # Within one parent the global key reduces to (-logprob, EOS first, id).
            order = np.lexsort((ids, ids != eos, -lp))[:beam]
            for v in order.tolist():
                s = h.score + float(lp[v])
                if v == eos:
                    candidates.append(Hypothesis(h.tokens, s, True))
                else:
                    candidates.append(Hypothesis(h.tokens + (v,), s))
        candidates.sort(key=_rank_key)
        kept = candidates[:beam]
        finished = [c for c in kept if c.finished]
        live = [c for c in kept if not c.finished]
        if early_stop and live and kept[0].finished and max(h.score for h in live) < kept[0].score:
            break

    return sorted(finished + live, key=_rank_key)
