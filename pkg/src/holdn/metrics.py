"""Latency (AL, LAAL, computation-aware LAAL) and corpus BLEU.

Latency follows the SimulEval speech convention: for token ``i`` (0-based)
with delay ``d_i`` the lag is ``d_i - i * T / R`` where ``T`` is the source
duration and ``R`` the reference length (AL) or ``max(|hyp|, |ref|)``
(LAAL). The average is taken over tokens up to and including the first one
emitted after the whole source was read.
"""

from __future__ import annotations

import math
import re
from collections import Counter
from dataclasses import dataclass, field
from typing import List, Optional, Sequence

from .errors import ConfigError

MAX_ORDER = 4


@dataclass(frozen=True)
class DelaySeries:
    delays_ms: Sequence[float]
    elapsed_ms: Sequence[float]
    source_duration_ms: float
    ref_len: int

    def __post_init__(self):
        object.__setattr__(self, "delays_ms", tuple(self.delays_ms))
        object.__setattr__(self, "elapsed_ms", tuple(self.elapsed_ms))
        d, e = self.delays_ms, self.elapsed_ms
        if len(d) != len(e):
            raise ConfigError(f"{len(d)} delays but {len(e)} elapsed stamps")
        if self.ref_len < 1:
            raise ConfigError(f"ref_len must be >= 1, got {self.ref_len}")
        if self.source_duration_ms <= 0:
            raise ConfigError("source duration must be positive")
        if any(b < a for a, b in zip(d, d[1:])):
            raise ConfigError("delays must be non-decreasing")
        if any(x > self.source_duration_ms for x in d):
            raise ConfigError("delay beyond source duration")
        if any(ee < dd for dd, ee in zip(d, e)):
            raise ConfigError("elapsed stamp precedes its delay")

    @property
    def hyp_len(self) -> int:
        return len(self.delays_ms)


def _cutoff(delays: Sequence[float], source_len: float) -> int:
    """Number of tokens up to and including the first with delay >= source_len."""
    for i, d in enumerate(delays):
        if d >= source_len:
            return i + 1
    return len(delays)


def _lagging(values, delays, source_len, rate_len) -> Optional[float]:
    if not delays:
        return None
    tau = _cutoff(delays, source_len)
    step = source_len / rate_len
    return sum(values[i] - i * step for i in range(tau)) / tau


def average_lagging(series: DelaySeries) -> Optional[float]:
    """AL in ms, or ``None`` for an empty hypothesis."""
    return _lagging(series.delays_ms, series.delays_ms, series.source_duration_ms, series.ref_len)


def laal(series: DelaySeries) -> Optional[float]:
    rate_len = max(series.hyp_len, series.ref_len)
    return _lagging(series.delays_ms, series.delays_ms, series.source_duration_ms, rate_len)


def laal_ca(series: DelaySeries) -> Optional[float]:
    """LAAL with clock stamps in place of delays; the cutoff still uses delays."""
    rate_len = max(series.hyp_len, series.ref_len)
    return _lagging(series.elapsed_ms, series.delays_ms, series.source_duration_ms, rate_len)


@dataclass(frozen=True)
class LatencyReport:
    AL_ms: Optional[float]
    LAAL_ms: Optional[float]
    LAAL_CA_ms: Optional[float]

    @property
    def missing(self) -> bool:
        return self.AL_ms is None

    def seconds(self) -> dict:
        return {k: to_seconds(v) for k, v in (("AL", self.AL_ms), ("LAAL", self.LAAL_ms), ("LAAL_CA", self.LAAL_CA_ms))}


def to_seconds(ms: Optional[float]) -> Optional[float]:
    return None if ms is None else round(ms / 1000.0, 2)


def latency_report(series: DelaySeries) -> LatencyReport:
    return LatencyReport(average_lagging(series), laal(series), laal_ca(series))


# --- BLEU -----------------------------------------------------------------

_PUNCT = re.compile(r"([.,!?])")


def bleu_tokenize(text: str) -> List[str]:
    """Whitespace tokens after splitting off ``. , ! ?``."""
    return _PUNCT.sub(r" \1 ", text).split()


def _ngrams(tokens: Sequence[str], n: int) -> Counter:
    return Counter(tuple(tokens[i:i + n]) for i in range(len(tokens) - n + 1))


@dataclass(frozen=True)
class BleuReport:
    score: float
    precisions: tuple  # p1..p4 as fractions
    brevity_penalty: float
    hyp_len: int
    ref_len: int
    matches: tuple = field(default=(), repr=False)
    totals: tuple = field(default=(), repr=False)

    def rounded(self) -> float:
        return round(self.score, 1)


def corpus_bleu(hypotheses: Sequence[str], references: Sequence[str]) -> BleuReport:
    """Corpus BLEU-4, single reference, no smoothing."""
    if len(hypotheses) != len(references):
        raise ConfigError(f"{len(hypotheses)} hypotheses vs {len(references)} references")
    if not hypotheses:
        raise ConfigError("corpus_bleu needs at least one sentence pair")
    matches = [0] * MAX_ORDER
    totals = [0] * MAX_ORDER
    hyp_len = ref_len = 0
    for hyp, ref in zip(hypotheses, references):
        h, r = bleu_tokenize(hyp), bleu_tokenize(ref)
        hyp_len += len(h)
        ref_len += len(r)
        for n in range(1, MAX_ORDER + 1):
            hc, rc = _ngrams(h, n), _ngrams(r, n)
            matches[n - 1] += sum(min(c, rc[g]) for g, c in hc.items())
            totals[n - 1] += max(len(h) - n + 1, 0)
    precisions = tuple(m / t if t else 0.0 for m, t in zip(matches, totals))
    if hyp_len == 0:
        bp = 0.0
    elif hyp_len < ref_len:
        bp = math.exp(1.0 - ref_len / hyp_len)
    else:
        bp = 1.0
    if min(precisions) > 0.0:
        score = 100.0 * bp * math.exp(sum(math.log(p) for p in precisions) / MAX_ORDER)
    else:
        score = 0.0
    return BleuReport(score, precisions, bp, hyp_len, ref_len, tuple(matches), tuple(totals))


# --- corpus aggregation ---------------------------------------------------


@dataclass(frozen=True)
class CorpusReport:
    latency: LatencyReport  # unweighted means over non-missing utterances, ms
    bleu: BleuReport
    n_utterances: int
    n_missing: int


def _mean(values) -> Optional[float]:
    values = [v for v in values if v is not None]
    return sum(values) / len(values) if values else None


def aggregate(latencies: Sequence[LatencyReport], hypotheses: Sequence[str], references: Sequence[str]) -> CorpusReport:
    """Mean per-utterance latency; BLEU computed at corpus level."""
    if not latencies:
        raise ConfigError("aggregate needs at least one utterance")
    if len(latencies) != len(hypotheses):
        raise ConfigError("one latency report per hypothesis required")
    present = [r for r in latencies if not r.missing]
    corpus = LatencyReport(
        _mean(r.AL_ms for r in present),
        _mean(r.LAAL_ms for r in present),
        _mean(r.LAAL_CA_ms for r in present),
    )
    return CorpusReport(corpus, corpus_bleu(hypotheses, references), len(latencies), len(latencies) - len(present))
