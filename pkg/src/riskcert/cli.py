"""``riskcert`` command line: certify, simulate, sweep.

Exit codes: 0 success, 2 invalid config, 3 infeasible certificate/radius,
4 I/O failure. Errors are also printed to stderr as one JSON object.
"""

from __future__ import annotations

import argparse
import json
import logging
import sys
from pathlib import Path

from .config import ExperimentConfig, load_config, preset
from .errors import InfeasibleRadiusError, RiskCertError
from .reports import (
    SWEEP_PARAMS,
    certify_report,
    format_certify_table,
    simulate_experiment,
    sweep_csv,
    sweep_rows,
    trajectory_csv,
)

log = logging.getLogger("riskcert")

EXIT_OK = 0
EXIT_INVALID = 2
EXIT_INFEASIBLE = 3
EXIT_IO = 4


def _sigma_or_corollary(text: str) -> str:
    text = text.strip().lower()
    if text in ("cor1", "cor2", "cor3", "cor4") or text.startswith("sigma="):
        return text
    raise argparse.ArgumentTypeError("expected cor1|cor2|cor3|cor4|sigma=VALUE")


def build_parser() -> argparse.ArgumentParser:
    common = argparse.ArgumentParser(add_help=False)
    src = common.add_mutually_exclusive_group()
    src.add_argument("--config", type=Path, help="YAML experiment config")
    src.add_argument("--preset", choices=["paper-example"], help="built-in experiment")
    common.add_argument("--seed", type=int)
    common.add_argument("--runs", type=int)
    common.add_argument("--horizon", type=int)
    common.add_argument("--radius", "-r", type=float)
    common.add_argument("--epsilon", type=float)
    common.add_argument("--out", type=str, help="output directory")
    common.add_argument("--trigger", type=_sigma_or_corollary, help="cor1|cor2|cor3|cor4|sigma=VALUE")
    common.add_argument("--sampler", choices=["gaussian", "student_t", "uniform", "two_point"])
    common.add_argument("--workers", type=int)
    common.add_argument("--baseline-periodic", action="store_true", default=None)
    common.add_argument("-v", "--verbose", action="store_true")

    parser = argparse.ArgumentParser(
        prog="riskcert", description="Worst-case CVaR certificates and event-triggered control experiments"
    )
    sub = parser.add_subparsers(dest="command", required=True)
    sub.add_parser("certify", parents=[common], help="certificates, thresholds and maximal sigmas")
    sub.add_parser("simulate", parents=[common], help="seeded trajectory plus Monte Carlo ensemble")
    sweep = sub.add_parser("sweep", parents=[common], help="sweep r, epsilon or sigma")
    sweep.add_argument("--param", choices=SWEEP_PARAMS, required=True)
    sweep.add_argument("--grid", required=True, help="comma-separated values")
    return parser


def resolve_config(args) -> ExperimentConfig:
    cfg = load_config(args.config) if args.config else preset(args.preset or "paper-example")
    return cfg.with_overrides(
        seed=args.seed,
        runs=args.runs,
        horizon=args.horizon,
        radius=args.radius,
        epsilon=args.epsilon,
        out=args.out,
        trigger=args.trigger,
        sampler=args.sampler,
        workers=args.workers,
        baseline_periodic=args.baseline_periodic,
    )


def _write(path: Path, text: str) -> None:
    path.parent.mkdir(parents=True, exist_ok=True)
    path.write_text(text)
    log.info("wrote %s", path)


def cmd_certify(cfg: ExperimentConfig) -> int:
    report = certify_report(cfg)
    _write(Path(cfg.out) / "report.json", json.dumps(report, indent=2))
    print(format_certify_table(report))
    trig = report["configured_trigger"]
    if not trig["feasible"]:
        print(json.dumps({"error": trig["error"], "message": trig["message"]}), file=sys.stderr)
        return EXIT_INFEASIBLE
    return EXIT_OK


def cmd_simulate(cfg: ExperimentConfig) -> int:
    result = simulate_experiment(cfg)
    out = Path(cfg.out)
    for name, record in result.trajectories.items():
        _write(out / f"{name}.csv", trajectory_csv(record))
    _write(out / "summary.json", json.dumps(result.summary, indent=2))
    event = result.summary["event_triggered"]["update_counts"]
    print(
        f"{result.summary['trigger']['kind']} sigma={result.summary['trigger']['sigma']:.4f}: "
        f"updates mean {event['mean']:.2f} (min {event['min']}, max {event['max']}) over {cfg.horizon} steps"
    )
    if "baseline_periodic" in result.summary:
        print(f"periodic baseline: {result.summary['baseline_periodic']['update_counts']['mean']:.0f} updates")
    return EXIT_OK


def cmd_sweep(cfg: ExperimentConfig, param: str, grid_text: str) -> int:
    try:
        grid = [float(v) for v in grid_text.split(",") if v.strip()]
    except ValueError:
        raise RiskCertError(f"cannot parse grid {grid_text!r}") from None
    rows = sweep_rows(cfg, param, grid)
    text = sweep_csv(rows)
    _write(Path(cfg.out) / "sweep.csv", text)
    print(text, end="")
    return EXIT_OK


def _fail(exc: Exception, code: int) -> int:
    kind = getattr(exc, "code", "io-error" if isinstance(exc, OSError) else "error")
    print(json.dumps({"error": kind, "message": str(exc)}), file=sys.stderr)
    return code


def main(argv=None) -> int:
    args = build_parser().parse_args(argv)
    logging.basicConfig(level=logging.INFO if args.verbose else logging.WARNING, format="%(message)s")
    try:
        cfg = resolve_config(args)
        if args.command == "certify":
            return cmd_certify(cfg)
        if args.command == "simulate":
            return cmd_simulate(cfg)
        return cmd_sweep(cfg, args.param, args.grid)
    except InfeasibleRadiusError as exc:
        return _fail(exc, EXIT_INFEASIBLE)
    except RiskCertError as exc:
        return _fail(exc, EXIT_INVALID)
    except OSError as exc:
        return _fail(exc, EXIT_IO)


if __name__ == "__main__":
    sys.exit(main())
