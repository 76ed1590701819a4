"""Command line entry point, ``prsim <subcommand> [flags]``.

Flags mirror :class:`prsim.harness.ExperimentConfig` fields. A JSON file
given with ``--config`` overrides flags; ``PRSIM_OUTPUT_DIR`` sets the
output directory when ``--output`` is absent.
"""

from __future__ import annotations

import argparse
import json
import logging
import sys
from pathlib import Path

from .errors import ConfigurationError
from .harness import ExperimentConfig, reproduce_figure, rerun, run_experiment

COMMANDS = {
    "train": "train-predict",
    "sweep-hyper": "hyperparam-sweep",
    "outage": "outage-sweep",
    "capacity": "capacity-sweep",
    "contend": "contention-demo",
    "complexity": "complexity-report",
}


def _floats(text: str) -> list[float]:
    return [float(v) for v in text.split(",") if v]


def _ints(text: str) -> list[int]:
    return [int(v) for v in text.split(",") if v]


def _words(text: str) -> list[str]:
    return [v.strip() for v in text.split(",") if v.strip()]


def _snr_grid(text: str) -> list[float]:
    """``0:30:2`` (inclusive range) or a comma list."""
    if ":" in text:
        lo, hi, step = (float(v) for v in text.split(":"))
        n = int(round((hi - lo) / step)) + 1
        return [lo + i * step for i in range(n)]
    return _floats(text)


def _hidden(text: str) -> list[list]:
    """``lstm:25,lstm:25``."""
    out = []
    for item in _words(text):
        kind, _, n = item.partition(":")
        out.append([kind, int(n)])
    return out


def _common(p: argparse.ArgumentParser) -> None:
    p.add_argument("--config", type=Path, help="JSON file whose fields override flags")
    p.add_argument("--output", help="output directory")
    p.add_argument("--seed", type=int)
    p.add_argument("--workers", type=int)
    p.add_argument("-v", "--verbose", action="store_true")


def _scenario(p: argparse.ArgumentParser) -> None:
    p.add_argument("--relay-count", "-K", dest="relay_count", type=int)
    p.add_argument("--target-rate", "-R", dest="target_rate", type=float)
    p.add_argument("--doppler-hz", type=float)
    p.add_argument("--sample-rate-hz", type=float)
    p.add_argument("--delays-ms", type=_floats, help="comma list, e.g. 2,3")
    p.add_argument("--schemes", type=_words, help="comma list of perfect,ors,prs,ostc")
    p.add_argument("--snr-db", type=_snr_grid, help="lo:hi:step or comma list")
    p.add_argument("--mode", choices=("statistical", "timeseries"))
    p.add_argument("--rho-p", type=float)
    p.add_argument("--trials", type=int)


def _predictor(p: argparse.ArgumentParser) -> None:
    p.add_argument("--hidden", type=_hidden, help="e.g. lstm:25,lstm:25")
    p.add_argument("--horizon-steps", type=int)
    p.add_argument("--trace-length", type=int)
    p.add_argument("--epochs", type=int)
    p.add_argument("--batch-size", type=int)
    p.add_argument("--lr", type=float)
    p.add_argument("--stride", type=int)


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(prog="prsim", description=__doc__.splitlines()[0])
    sub = parser.add_subparsers(dest="command", required=True)

    p = sub.add_parser("train", help="train and evaluate a channel predictor")
    _common(p), _predictor(p)
    p.add_argument("--doppler-hz", type=float)
    p.add_argument("--sample-rate-hz", type=float)

    p = sub.add_parser("sweep-hyper", help="median test MSE over models and neuron counts")
    _common(p), _predictor(p)
    p.add_argument("--models", type=_words, help="e.g. LSTM-1,LSTM-2,GRU-2")
    p.add_argument("--neurons", type=_ints, help="total neurons, e.g. 20,40,60")
    p.add_argument("--seeds", type=int)

    for name, what in (("outage", "outage probability"), ("capacity", "average capacity")):
        p = sub.add_parser(name, help=f"{what} against SNR")
        _common(p), _scenario(p), _predictor(p)

    p = sub.add_parser("contend", help="frame-level relay contention with a trained predictor")
    _common(p), _scenario(p), _predictor(p)
    p.add_argument("--frames", type=int)
    p.add_argument("--base-time-us", type=float)
    p.add_argument("--guard-us", type=float)

    p = sub.add_parser("complexity", help="operations and FLOPS per prediction")
    _common(p)
    p.add_argument("--hidden", type=_hidden)
    p.add_argument("--prediction-rate-hz", type=float)
    p.add_argument("--capacities-gflops", type=_floats)

    p = sub.add_parser("figure", help="canned desk-scale reproduction of a results panel")
    p.add_argument("tag", help="3a, 3b or 3c")
    p.add_argument("--output")
    p.add_argument("--trials", type=int)
    p.add_argument("--workers", type=int)
    p.add_argument("-v", "--verbose", action="store_true")

    p = sub.add_parser("rerun", help="replay the config recorded in a manifest")
    p.add_argument("manifest", type=Path)
    p.add_argument("--output")
    p.add_argument("-v", "--verbose", action="store_true")
    return parser


_META = {"command", "config", "verbose", "tag", "manifest"}


def config_from_args(args: argparse.Namespace) -> ExperimentConfig:
    data = {"kind": COMMANDS[args.command]}
    data.update({k: v for k, v in vars(args).items() if k not in _META and v is not None})
    if args.config is not None:
        try:
            data.update(json.loads(args.config.read_text()))
        except (OSError, json.JSONDecodeError) as exc:
            raise ConfigurationError(f"cannot read config {args.config}: {exc}") from exc
    return ExperimentConfig.from_dict(data)


def main(argv: list[str] | None = None) -> int:
    args = build_parser().parse_args(argv)
    logging.basicConfig(level=logging.INFO if args.verbose else logging.WARNING,
                        format="%(levelname)s %(name)s: %(message)s")
    try:
        if args.command == "figure":
            extra = {k: v for k in ("trials", "workers") if (v := getattr(args, k)) is not None}
            paths = reproduce_figure(args.tag, args.output, **extra)
        elif args.command == "rerun":
            paths = rerun(args.manifest, args.output)
        else:
            paths = run_experiment(config_from_args(args))
    except ConfigurationError as exc:
        print(f"prsim: error: {exc}", file=sys.stderr)
        return 2
    for path in paths.values():
        print(path)
    return 0
