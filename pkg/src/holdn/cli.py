"""Command-line entry point: ``holdn-eval --manifest M --out DIR``."""

from __future__ import annotations

import argparse
import logging
import sys

from .errors import ConfigError, ManifestError
from .harness import MODELS, load_manifest, run_eval, write_outputs
from .policy import PolicyConfig

logger = logging.getLogger("holdn")


def _hold_n_list(text):
    try:
        values = [int(x) for x in text.split(",") if x.strip()]
    except ValueError:
        raise argparse.ArgumentTypeError(f"expected comma-separated integers, got {text!r}")
    if not values or any(v < 0 for v in values):
        raise argparse.ArgumentTypeError("hold-n values must be non-negative integers")
    return values


def _compute_cost(text):
    if text == "wall":
        return None
    try:
        value = int(text)
    except ValueError:
        raise argparse.ArgumentTypeError(f"expected 'wall' or a non-negative integer, got {text!r}")
    if value < 0:
        raise argparse.ArgumentTypeError("compute cost must be >= 0")
    return value


def build_parser() -> argparse.ArgumentParser:
    defaults = PolicyConfig()
    p = argparse.ArgumentParser(prog="holdn-eval", description="Simultaneous translation evaluation with the hold-n policy.")
    p.add_argument("--manifest", required=True, help="JSONL manifest")
    p.add_argument("--out", required=True, help="output directory")
    p.add_argument("--start-ms", type=int, default=defaults.start_ms)
    p.add_argument("--chunk-ms", type=int, default=defaults.chunk_ms)
    p.add_argument("--hold-n", type=int, default=defaults.hold_n)
    p.add_argument("--beam", type=int, default=defaults.beam)
    p.add_argument("--max-len", type=int, default=defaults.max_len)
    p.add_argument("--model", choices=MODELS, default="table")
    p.add_argument("--sweep-hold-n", type=_hold_n_list, default=None, metavar="LIST",
                   help="comma-separated hold-n values for the latency/quality curve")
    p.add_argument("--compute-cost-ms", type=_compute_cost, default=0, metavar="N",
                   help="simulated compute charge per decision in ms, or 'wall' for measured time")
    p.add_argument("--workers", type=int, default=1)
    p.add_argument("-v", "--verbose", action="store_true")
    return p


def main(argv=None) -> int:
    args = build_parser().parse_args(argv)
    logging.basicConfig(level=logging.INFO if args.verbose else logging.WARNING, format="%(levelname)s %(name)s: %(message)s")
    try:
        config = PolicyConfig(args.start_ms, args.chunk_ms, args.hold_n, args.beam, args.max_len)
        entries = load_manifest(args.manifest)
    except (ConfigError, ManifestError, OSError) as exc:
        print(f"error: {exc}", file=sys.stderr)
        return 2
    report, logs = run_eval(entries, config, args.model, args.compute_cost_ms, args.sweep_hold_n, args.workers)
    write_outputs(report, logs, args.out)
    c = report.corpus
    print(f"instances={c['n_instances']} failed={len(report.failures)} BLEU={c['BLEU_rounded']} "
          f"AL={c['AL_s']} LAAL={c['LAAL_s']} LAAL_CA={c['LAAL_CA_s']}")
    return 1 if report.failures else 0


if __name__ == "__main__":
    sys.exit(main())
