"""Batch evaluation: manifest in, instance logs and corpus report out.

Manifest lines are JSON objects with ``id``, ``reference`` and exactly one
of ``features_path`` (a feature text file, resolved relative to the
manifest) or ``synthetic`` (``target`` tokens, ``reveal`` frame counts,
``duration_ms`` and ``frame_rate_hz``).
"""

from __future__ import annotations

import json
import logging
import math
from concurrent.futures import ProcessPoolExecutor
from dataclasses import asdict, dataclass, field, replace
from pathlib import Path
from typing import List, Optional, Sequence, Tuple

import numpy as np

from .adapter import DECODER_DIM, ENCODER_DIM, StoredFrameEncoder, default_adapter
from .decoding import ReadoutModel, ScoreModel, TableModel, WhitespaceTokenizer
from .errors import ConfigError, ManifestError
from .metrics import DelaySeries, corpus_bleu, latency_report, to_seconds
from .policy import PolicyConfig, fixed_cost, run_stream
from .stream import DEFAULT_FRAME_RATE_HZ, SpeechStream

logger = logging.getLogger(__name__)

MODELS = ("table", "file")


@dataclass(frozen=True)
class SyntheticSource:
    target: Tuple[str, ...]
    reveal: Tuple[int, ...]
    duration_ms: int
    frame_rate_hz: int = DEFAULT_FRAME_RATE_HZ


@dataclass(frozen=True)
class ManifestEntry:
    id: str
    reference: str
    features_path: Optional[Path] = None
    synthetic: Optional[SyntheticSource] = None


def _parse_entry(record, base: Path) -> ManifestEntry:
    if not isinstance(record, dict):
        raise ValueError("record is not a JSON object")
    for key in ("id", "reference"):
        if key not in record:
            raise ValueError(f"missing field {key!r}")
    if not isinstance(record["reference"], str) or not record["reference"].strip():
        raise ValueError("reference must be a non-empty string")
    has_file, has_synth = "features_path" in record, "synthetic" in record
    if has_file == has_synth:
        raise ValueError("exactly one of 'features_path' or 'synthetic' is required")
    if has_file:
        return ManifestEntry(str(record["id"]), record["reference"], features_path=base / record["features_path"])
    s = record["synthetic"]
    try:
        synth = SyntheticSource(
            tuple(str(t) for t in s["target"]),
            tuple(int(r) for r in s["reveal"]),
            int(s["duration_ms"]),
            int(s.get("frame_rate_hz", DEFAULT_FRAME_RATE_HZ)),
        )
    except (KeyError, TypeError) as exc:
        raise ValueError(f"bad synthetic spec: {exc!r}") from None
    if len(synth.target) != len(synth.reveal):
        raise ValueError("synthetic target and reveal lengths differ")
    return ManifestEntry(str(record["id"]), record["reference"], synthetic=synth)


def load_manifest(path) -> List[ManifestEntry]:
    path = Path(path)
    entries = []
    with path.open(encoding="utf-8") as fh:
        for lineno, line in enumerate(fh, 1):
            if not line.strip():
                continue
            try:
                entries.append(_parse_entry(json.loads(line), path.parent))
            except ValueError as exc:  # JSONDecodeError is a ValueError
                raise ManifestError(path, lineno, str(exc)) from exc
    return entries


def load_features(path) -> Tuple[int, np.ndarray]:
    """Read ``frame_rate_hz=<int> dim=<int>`` then one row of reals per frame."""
    path = Path(path)
    with path.open(encoding="utf-8") as fh:
        header = fh.readline().split()
        try:
            fields = dict(item.split("=", 1) for item in header)
            rate, dim = int(fields["frame_rate_hz"]), int(fields["dim"])
        except (ValueError, KeyError):
            raise ConfigError(f"{path}: bad feature header {' '.join(header)!r}") from None
        rows = [line.split() for line in fh if line.strip()]
    for i, row in enumerate(rows, 2):
        if len(row) != dim:
            raise ConfigError(f"{path}:{i}: expected {dim} values, got {len(row)}")
    values = np.array(rows, dtype=float).reshape(len(rows), dim)
    return rate, values


def write_features(path, frame_rate_hz: int, values: np.ndarray) -> None:
    lines = [f"frame_rate_hz={frame_rate_hz} dim={values.shape[1]}"]
    lines += [" ".join(repr(float(x)) for x in row) for row in values]
    Path(path).write_text("\n".join(lines) + "\n", encoding="utf-8")


def build_stream(entry: ManifestEntry) -> SpeechStream:
    if entry.synthetic is not None:
        s = entry.synthetic
        return SpeechStream(entry.id, s.duration_ms, s.frame_rate_hz)
    rate, values = load_features(entry.features_path)
    duration = values.shape[0] * 1000 // rate
    if duration <= 0:
        raise ConfigError(f"{entry.features_path}: fewer than one frame's worth of audio")
    return SpeechStream(entry.id, duration, rate, frames=values[: duration * rate // 1000])


def build_tokenizer(entries: Sequence[ManifestEntry]) -> WhitespaceTokenizer:
    tok = WhitespaceTokenizer()
    for e in entries:
        if e.synthetic is not None:
            for w in e.synthetic.target:
                tok.add(w)
        for w in e.reference.split():
            tok.add(w)
    return tok


def build_model(entry: ManifestEntry, stream: SpeechStream, tokenizer: WhitespaceTokenizer, kind: str) -> ScoreModel:
    if kind == "table":
        if entry.synthetic is not None:
            target = [tokenizer.tokenize(w)[0] for w in entry.synthetic.target]
            return TableModel(tuple(target), entry.synthetic.reveal, tokenizer.vocab_size)
        # Feature files carry no alignment: reveal reference tokens evenly.
        target = tokenizer.tokenize(entry.reference)
        n = len(target)
        reveal = [math.ceil((i + 1) * stream.num_frames / n) for i in range(n)]
        return TableModel(tuple(target), tuple(reveal), tokenizer.vocab_size)
    if kind == "file":
        return ReadoutModel(tokenizer.vocab_size, DECODER_DIM, seed=0)
    raise ConfigError(f"unknown model {kind!r}; choose from {MODELS}")


@dataclass(frozen=True)
class InstanceLog:
    id: str
    prediction: str
    delays_ms: List[int]
    elapsed_ms: List[int]
    source_duration_ms: int
    reference: str

    def __post_init__(self):
        n = len(self.prediction.split())
        if not len(self.delays_ms) == len(self.elapsed_ms) == n:
            raise ConfigError(f"instance {self.id!r}: {n} tokens, {len(self.delays_ms)} delays, {len(self.elapsed_ms)} elapsed")

    def to_json(self) -> str:
        return json.dumps(asdict(self), sort_keys=True, ensure_ascii=False)

    @classmethod
    def from_json(cls, line: str) -> "InstanceLog":
        d = json.loads(line)
        return cls(d["id"], d["prediction"], list(d["delays_ms"]), list(d["elapsed_ms"]), d["source_duration_ms"], d["reference"])

    def series(self) -> DelaySeries:
        return DelaySeries(self.delays_ms, self.elapsed_ms, self.source_duration_ms, len(self.reference.split()))


def read_instances(path) -> List[InstanceLog]:
    with Path(path).open(encoding="utf-8") as fh:
        return [InstanceLog.from_json(line) for line in fh if line.strip()]


@dataclass
class RunReport:
    config: dict
    instances: List[dict] = field(default_factory=list)
    corpus: dict = field(default_factory=dict)
    failures: List[dict] = field(default_factory=list)
    curve: List[dict] = field(default_factory=list)

    def to_dict(self) -> dict:
        return asdict(self)


def corpus_metrics(logs: Sequence[InstanceLog]) -> dict:
    """Corpus BLEU and mean latencies, recomputed from instance logs."""
    out = {"n_instances": len(logs), "n_missing": 0, "BLEU": None, "BLEU_rounded": None}
    for key in ("AL", "LAAL", "LAAL_CA"):
        out[f"{key}_ms"] = out[f"{key}_s"] = None
    if not logs:
        return out
    reports = [latency_report(log.series()) for log in logs]
    present = [r for r in reports if not r.missing]
    out["n_missing"] = len(reports) - len(present)
    bleu = corpus_bleu([log.prediction for log in logs], [log.reference for log in logs])
    out["BLEU"] = bleu.score
    out["BLEU_rounded"] = bleu.rounded()
    for key, attr in (("AL", "AL_ms"), ("LAAL", "LAAL_ms"), ("LAAL_CA", "LAAL_CA_ms")):
        if present:
            mean = sum(getattr(r, attr) for r in present) / len(present)
            out[f"{key}_ms"] = mean
            out[f"{key}_s"] = to_seconds(mean)
    return out


def _run_one(job) -> Tuple[Optional[InstanceLog], Optional[str]]:
    entry, tokenizer, model_kind, config, cost_ms = job
    cost = fixed_cost(cost_ms) if cost_ms is not None else None
    try:
        stream = build_stream(entry)
        model = build_model(entry, stream, tokenizer, model_kind)
        dim = stream.frames.shape[1] if stream.frames is not None else ENCODER_DIM
        encoder = StoredFrameEncoder(dim)
        adapter = default_adapter(dim_in=dim, seed=0)
        kwargs = {"cost": cost} if cost is not None else {}
        log = run_stream(stream, encoder, adapter, model, config, **kwargs)
    except Exception as exc:  # recorded per instance; the run continues
        logger.warning("instance %s failed: %s", entry.id, exc)
        return None, f"{type(exc).__name__}: {exc}"
    return InstanceLog(
        entry.id,
        tokenizer.detokenize(log.tokens),
        log.delays,
        log.elapsed,
        stream.duration_ms,
        entry.reference,
    ), None


def run_instances(entries, config: PolicyConfig, model: str, cost_ms: Optional[int], workers: int = 1):
    """Run every entry; returns (logs, failures) in manifest order."""
    if model not in MODELS:
        raise ConfigError(f"unknown model {model!r}; choose from {MODELS}")
    tokenizer = build_tokenizer(entries)
    jobs = [(e, tokenizer, model, config, cost_ms) for e in entries]
    if workers > 1 and len(jobs) > 1:
        with ProcessPoolExecutor(max_workers=workers) as pool:
            results = list(pool.map(_run_one, jobs))
    else:
        results = [_run_one(j) for j in jobs]
    logs, failures = [], []
    for entry, (log, err) in zip(entries, results):
        if err is None:
            logs.append(log)
        else:
            failures.append({"id": entry.id, "error": err})
    return logs, failures


def run_eval(
    entries: Sequence[ManifestEntry],
    config: PolicyConfig = PolicyConfig(),
    model: str = "table",
    cost_ms: Optional[int] = 0,
    sweep_hold_n: Optional[Sequence[int]] = None,
    workers: int = 1,
) -> Tuple[RunReport, List[InstanceLog]]:
    """Evaluate a manifest under ``config``.

    ``cost_ms`` is the simulated compute charge per decision; ``None``
    charges measured wall time instead. A hold-n sweep adds one curve point
    per value; without one the curve holds the main configuration only.
    """
    logs, failures = run_instances(entries, config, model, cost_ms, workers)
    report = RunReport(
        config={**asdict(config), "model": model, "compute_cost_ms": "wall" if cost_ms is None else cost_ms},
        instances=[
            {"id": log.id, **_instance_metrics(log)} for log in logs
        ],
        corpus=corpus_metrics(logs),
        failures=failures,
    )
    points = sweep_hold_n if sweep_hold_n else [config.hold_n]
    for n in points:
        if n == config.hold_n:
            corpus = report.corpus
        else:
            sweep_logs, _ = run_instances(entries, replace(config, hold_n=n), model, cost_ms, workers)
            corpus = corpus_metrics(sweep_logs)
        report.curve.append({"label": f"hold_n={n}", "BLEU": corpus["BLEU"], "AL_s": corpus["AL_s"], "AL_ms": corpus["AL_ms"]})
    return report, logs


def _instance_metrics(log: InstanceLog) -> dict:
    r = latency_report(log.series())
    return {"AL_ms": r.AL_ms, "LAAL_ms": r.LAAL_ms, "LAAL_CA_ms": r.LAAL_CA_ms, "missing": r.missing}


def _fmt(x, places: int) -> str:
    return "NA" if x is None else f"{x:.{places}f}"


def write_outputs(report: RunReport, logs: Sequence[InstanceLog], out_dir) -> List[Path]:
    out = Path(out_dir)
    files = {
        out / "instances.jsonl": "".join(log.to_json() + "\n" for log in logs),
        out / "report.json": json.dumps(report.to_dict(), indent=2, sort_keys=True) + "\n",
        out / "curve.tsv": "label\tBLEU\tAL_s\n" + "".join(
            f"{p['label']}\t{_fmt(p['BLEU'], 1)}\t{_fmt(p['AL_s'], 2)}\n" for p in report.curve
        ),
    }
    try:
        out.mkdir(parents=True, exist_ok=True)
    except OSError as exc:
        raise OSError(f"cannot create output directory {out}: {exc}") from exc
    for path, text in files.items():
        try:
            path.write_text(text, encoding="utf-8")
        except OSError as exc:
            raise OSError(f"cannot write {path}: {exc}") from exc
    return list(files)
