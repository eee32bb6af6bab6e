"""Command-line entry point for the experiment harness.

One executable with subcommands ``accept-ratio``, ``sample-rmse``, ``bo`` and
``sweep``; flags override values from an optional JSON config file.  Results
go to a CSV plus a JSON sidecar carrying the full configuration and its hash.
Exits 0 on success; failures print a machine-readable error record to stderr
and exit nonzero.
"""

from __future__ import annotations

import argparse
import json
import sys

from .harness import (
    ExperimentConfig,
    run_accept_ratio,
    run_bo_regret,
    run_m_sweep,
    run_misspec_sweep,
    run_sampling_rmse,
    write_csv,
)

_RUNNERS = {
    "accept-ratio": run_accept_ratio,
    "sampling-rmse": run_sampling_rmse,
    "bo-regret": run_bo_regret,
    "misspec-sweep": run_misspec_sweep,
    "m-sweep": run_m_sweep,
}


def _add_common(p: argparse.ArgumentParser):
    p.add_argument("--config", help="JSON file with ExperimentConfig fields")
    p.add_argument("--seed", type=int, help="base seed (repetition r adds r)")
    p.add_argument("--out", help="output CSV path")
    p.add_argument("--reps", type=int, help="number of repetitions")
    p.add_argument("--function", action="append",
                   help="benchmark name; repeat for several")
    p.add_argument("--eta-plus-sq", type=float, help="upper-bound looseness variance")
    p.add_argument("--eta-minus-sq", type=float, help="lower-bound looseness variance")
    p.add_argument("--samples", type=int, metavar="M", help="posterior samples per fit")
    p.add_argument("--select", type=int, metavar="M_PRIME",
                   help="samples kept after ranking")
    p.add_argument("--n-train", type=int, action="append", metavar="K",
                   help="training points per input dimension; repeat for a schedule")
    p.add_argument("--workers", type=int, help="worker processes for repetitions")


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(
        prog="boundedgp",
        description="Bound-aware GP sampling and optimization experiments")
    sub = parser.add_subparsers(dest="command", required=True)

    p = sub.add_parser("accept-ratio", help="two-sigma acceptance ratios")
    _add_common(p)
    p.add_argument("--eta", type=float, action="append",
                   help="band width in standard deviations per input dimension")

    p = sub.add_parser("sample-rmse", help="posterior-sampling RMSE study")
    _add_common(p)

    p = sub.add_parser("bo", help="sequential optimization regret traces")
    _add_common(p)
    p.add_argument("--acq", action="append",
                   choices=["bes", "bes-nw", "ei", "ucb", "ts", "random"],
                   help="acquisition; repeat for several")
    p.add_argument("--iters", type=int, metavar="T", help="iterations (default 10d)")

    p = sub.add_parser("sweep", help="misspecification or sample-count sweep")
    _add_common(p)
    p.add_argument("--param", choices=["eta", "m"], required=True,
                   help="which knob to sweep")
    p.add_argument("--values", help="comma-separated schedule")
    p.add_argument("--target", choices=["sampling", "bo"], default="sampling",
                   help="what the eta sweep drives")
    p.add_argument("--acq", action="append",
                   choices=["bes", "bes-nw", "ei", "ucb", "ts", "random"])
    p.add_argument("--iters", type=int, metavar="T")
    return parser


def _config_from_args(args) -> tuple[ExperimentConfig, str]:
    base: dict = {}
    if args.config:
        with open(args.config) as fh:
            base.update(json.load(fh))

    if args.command == "accept-ratio":
        kind = "accept-ratio"
        if getattr(args, "eta", None):
            base["eta_schedule"] = tuple(args.eta)
        base.setdefault("eta_schedule", (0.5, 1.0))
    elif args.command == "sample-rmse":
        kind = "sampling-rmse"
        base.setdefault("n_train_per_dim", (3, 5, 10, 20))
    elif args.command == "bo":
        kind = "bo-regret"
        if getattr(args, "acq", None):
            base["acquisitions"] = tuple(args.acq)
        if getattr(args, "iters", None) is not None:
            base["T"] = args.iters
    else:
        kind = "misspec-sweep" if args.param == "eta" else "m-sweep"
        values = [float(v) for v in args.values.split(",")] if args.values else None
        if args.param == "eta":
            base["eta_schedule"] = tuple(values if values is not None else (0, 1, 3, 5))
            base["misspec_target"] = args.target
            if getattr(args, "acq", None):
                base["acquisitions"] = tuple(args.acq)
            if getattr(args, "iters", None) is not None:
                base["T"] = args.iters
        else:
            if values is not None:
                base["m_schedule"] = tuple(int(v) for v in values)

    if args.function:
        base["functions"] = tuple(args.function)
    if args.seed is not None:
        base["base_seed"] = args.seed
    if args.reps is not None:
        base["repetitions"] = args.reps
    if args.eta_plus_sq is not None:
        base["eta_plus_sq"] = args.eta_plus_sq
    if args.eta_minus_sq is not None:
        base["eta_minus_sq"] = args.eta_minus_sq
    if args.samples is not None:
        base["M"] = args.samples
    if args.select is not None:
        base["m_select"] = args.select
    if args.n_train:
        base["n_train_per_dim"] = tuple(args.n_train)
    if args.workers is not None:
        base["workers"] = args.workers

    for key in ("functions", "n_train_per_dim", "eta_schedule", "m_schedule",
                "acquisitions"):
        if key in base and isinstance(base[key], list):
            base[key] = tuple(base[key])
    out = args.out or f"{kind}.csv"
    return ExperimentConfig(kind=kind, **base), out


def main(argv: list[str] | None = None) -> int:
    args = build_parser().parse_args(argv)
    try:
        config, out = _config_from_args(args)
        result = _RUNNERS[config.kind](config)
        path = write_csv(result, out)
        print(f"wrote {path} ({len(result.rows)} rows, config {config.hash()})")
        return 0
    except Exception as exc:  # noqa: BLE001 - report and signal failure
        record = {"error": type(exc).__name__, "message": str(exc)}
        print(json.dumps(record), file=sys.stderr)
        return 1


if __name__ == "__main__":
    sys.exit(main())
