"""Exit criteria for the build. Each test carries a ``criterion`` marker and
shows up as one PASS/FAIL line in the terminal summary.

Run alone with ``pytest tests/test_acceptance.py``.
"""

import json
import random
import time

import numpy as np
import pytest

from holdn import (
    ConvSpec,
    DelaySeries,
    FeatureMatrix,
    PolicyConfig,
    SpeechStream,
    StoredFrameEncoder,
    StreamSession,
    TableModel,
    adapt,
    average_lagging,
    beam_search,
    conv1d_forward,
    corpus_bleu,
    default_adapter,
    fixed_cost,
    laal,
    laal_ca,
    mock_encode,
    output_length,
    run_stream,
    selective_output,
    step,
)
from holdn.decoding import Hypothesis
from holdn.harness import ManifestEntry, SyntheticSource, load_manifest, run_eval
from holdn.cli import main
from holdn.policy import PrunedPrefix, ReadAction, written_tokens
from oracles import selective_output_literal

criterion = pytest.mark.criterion
EXACT = 1e-9  # metric hand-value tolerance


def random_table_case(rng, chunk_covers_stream=False):
    duration = rng.randint(200, 15_000)
    stream = SpeechStream(f"s{rng.randrange(10**9)}", duration, rng.choice([25, 50, 100]))
    L = rng.randint(1, 30)
    vocab = 4 + rng.randint(1, 20)
    target = tuple(rng.randrange(4, vocab) for _ in range(L))
    reveal = tuple(sorted(rng.randint(0, stream.num_frames) for _ in range(L)))
    chunk = rng.randint(duration, 2 * duration) if chunk_covers_stream else rng.randint(50, 4000)
    config = PolicyConfig(rng.randint(50, 4000), chunk, rng.randint(0, 12), rng.choice([1, 2, 3, 4]))
    return stream, TableModel(target, reveal, vocab), config


def table_corpus(rng, size):
    entries = []
    for i in range(size):
        duration = rng.randint(1500, 14_000)
        frames = duration * 50 // 1000
        L = rng.randint(2, 25)
        target = tuple(f"w{rng.randrange(40)}" for _ in range(L))
        reveal = tuple(sorted(rng.randint(0, frames) for _ in range(L)))
        entries.append(ManifestEntry(f"u{i}", " ".join(target), synthetic=SyntheticSource(target, reveal, duration, 50)))
    return entries


@criterion("Algorithm-1 oracle equivalence: 1000 randomized cases, exact, < 1 s")
def test_algorithm1_oracle_equivalence():
    rng = random.Random(2024)
    cases = []
    for _ in range(1000):
        tokens = [rng.randint(4, 99) for _ in range(rng.randint(0, 30))]
        cases.append((tokens, rng.randint(0, 15), rng.random() < 0.25))
    tic = time.perf_counter()
    mismatches = 0
    for tokens, n, finished in cases:
        pruned, action = selective_output_literal({1: tokens}, n, finished)
        expected = ReadAction() if action == "Read" else PrunedPrefix(tuple(pruned[1]))
        mismatches += selective_output(Hypothesis(tuple(tokens), 0.0), n, finished) != expected
    runtime = time.perf_counter() - tic
    assert mismatches == 0
    assert runtime < 1.0


@criterion("No-revision invariant: 200 randomized TableModel streams/configs, exact")
def test_no_revision_invariant():
    rng = random.Random(7)
    encoder, adapter = StoredFrameEncoder(), default_adapter()
    for _ in range(200):
        stream, model, config = random_table_case(rng)
        session = StreamSession.start(stream, config)
        cost = fixed_cost(rng.randint(0, 500))
        actions, snapshots = [], []
        while not session.done:
            actions.append(step(session, encoder, adapter, model, config, cost))
            snapshots.append(session.committed)
        final = session.committed
        assert written_tokens(actions) == final.tokens
        assert session.trace[-1].hypothesis == final.tokens
        for snap in snapshots:
            assert final.entries[: len(snap)] == snap.entries


@criterion("Offline/streaming equivalence: chunk_ms >= duration, 100 randomized instances, exact")
def test_offline_streaming_equivalence():
    rng = random.Random(99)
    encoder, adapter = StoredFrameEncoder(), default_adapter()
    for _ in range(100):
        stream, model, config = random_table_case(rng, chunk_covers_stream=True)
        log = run_stream(stream, encoder, adapter, model, config, fixed_cost(0))
        features = adapt(mock_encode(stream, stream.num_frames), adapter)
        offline = beam_search(model, features, config.beam, config.max_len)[0]
        assert log.tokens == offline.tokens


@criterion("Conv length law: 500 randomized (T,k,s,p) row counts exact; T=100 through two 5/2/2 convs -> 25")
def test_conv_length_law():
    rng = np.random.default_rng(3)
    for _ in range(500):
        T, k, s, p = int(rng.integers(0, 401)), int(rng.integers(1, 10)), int(rng.integers(1, 5)), int(rng.integers(0, 5))
        spec = ConvSpec(k, s, p, rng.normal(size=(2, 2 * k)), np.zeros(2), "none")
        out = conv1d_forward(FeatureMatrix(rng.normal(size=(T, 2))), spec)
        assert out.rows == output_length(T, k, s, p)
    out = adapt(FeatureMatrix(rng.normal(size=(100, 8))), default_adapter())
    assert out.rows == 25


@criterion("Metric hand-values: AL 500, LAAL 625, LAAL_CA 1500 (1e-9); LAAL >= AL on 1000 random series")
def test_metric_hand_values():
    assert abs(average_lagging(DelaySeries([500, 1000, 1500], [500, 1000, 1500], 1500, 3)) - 500.0) <= EXACT
    assert abs(laal(DelaySeries([500, 1000, 1500, 1500], [500, 1000, 1500, 1500], 1500, 3)) - 625.0) <= EXACT
    assert abs(laal_ca(DelaySeries([1000, 2000], [1400, 2600], 2000, 2)) - 1500.0) <= EXACT
    rng = random.Random(5)
    for _ in range(1000):
        T = rng.randint(1, 30_000)
        hyp_len, ref_len = rng.randint(1, 50), rng.randint(1, 50)
        delays = sorted(rng.randint(0, T) for _ in range(hyp_len))
        s = DelaySeries(delays, delays, T, ref_len)
        assert laal(s) >= average_lagging(s)


@criterion("Offline latency: per-utterance offline AL == duration exactly; corpus AL == mean duration")
def test_offline_latency_relationship():
    rng = random.Random(11)
    for _ in range(5):
        entries = table_corpus(rng, 12)
        longest = max(e.synthetic.duration_ms for e in entries)
        offline = PolicyConfig(start_ms=longest, chunk_ms=longest, hold_n=7, beam=4)
        report, logs = run_eval(entries, offline, "table", cost_ms=0)
        durations = [e.synthetic.duration_ms for e in entries]
        for inst, log, T in zip(report.instances, logs, durations):
            assert set(log.delays_ms) == {T}
            assert inst["AL_ms"] == T
        assert report.corpus["AL_ms"] == pytest.approx(sum(durations) / len(durations), abs=EXACT)


@criterion("Hold-n trade: corpus AL non-decreasing over n in {0,2,4,7,10}; BLEU unchanged across n")
def test_hold_n_latency_quality_trade():
    rng = random.Random(13)
    grid = [0, 2, 4, 7, 10]
    for _ in range(4):
        entries = table_corpus(rng, 10)
        report, _ = run_eval(entries, PolicyConfig(), "table", cost_ms=0, sweep_hold_n=grid)
        als = [p["AL_ms"] for p in report.curve]
        bleus = [p["BLEU"] for p in report.curve]
        assert [p["label"] for p in report.curve] == [f"hold_n={n}" for n in grid]
        assert all(a <= b for a, b in zip(als, als[1:]))
        assert len(set(bleus)) == 1


@criterion("BLEU: identity 100; hand case 66.87 +- 0.01; no 4-gram match 0")
def test_bleu_values():
    refs = ["das ist ein kleiner Test .", "wir gehen heute nach Hause"]
    assert corpus_bleu(refs, refs).score == pytest.approx(100.0, abs=1e-9)
    assert abs(corpus_bleu(["a b c d e"], ["a b c d f"]).score - 66.87) <= 0.01
    assert corpus_bleu(["a b c x y z"], ["a b c d e f"]).score == 0.0


@criterion("End-to-end golden trace: 't1 t2 t3 t4', delays [4500,6000,6000,6000], AL 4.50 s")
def test_end_to_end_golden_trace(tmp_path):
    record = ('{"id": "golden", "reference": "t1 t2 t3 t4", "synthetic": {"target": ["t1", "t2", "t3", "t4"], '
              '"reveal": [50, 100, 200, 250], "duration_ms": 6000, "frame_rate_hz": 50}}\n')
    manifest = tmp_path / "golden.jsonl"
    manifest.write_text(record)
    out = tmp_path / "out"
    code = main(["--manifest", str(manifest), "--out", str(out), "--hold-n", "2", "--beam", "1"])
    assert code == 0
    (line,) = (out / "instances.jsonl").read_text().splitlines()
    inst = json.loads(line)
    report = json.loads((out / "report.json").read_text())
    assert inst["prediction"] == "t1 t2 t3 t4"
    assert inst["delays_ms"] == [4500, 6000, 6000, 6000]
    assert report["corpus"]["AL_s"] == 4.50
    assert report["corpus"]["AL_ms"] == 4500.0
    assert report["corpus"]["BLEU"] == pytest.approx(100.0)
    assert load_manifest(manifest)[0].synthetic.reveal == (50, 100, 200, 250)
