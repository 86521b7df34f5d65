"""Report builders behind the CLI subcommands.

Every number placed in a report is produced here from the library
operations; the CLI only formats and writes what these functions return.
"""

from __future__ import annotations

import csv
import io
from dataclasses import dataclass, field

import numpy as np

from .certificates import (
    invariance_certificate,
    robust_invariance_certificate,
    robust_ultimate_bound_certificate,
    stability_envelope,
    ultimate_bound_certificate,
)
from .config import ExperimentConfig
from .errors import InfeasibleRadiusError, InvalidInputError
from .simulation import EventTriggered, PeriodicFeedback, RiskSummary, TrajectoryRecord, ensemble, rollout
from .triggers import SIGMA_RULES, policy_input_system

TRAJECTORY_COLUMNS_DOC = "t, x1..xn, u1..um, norm_sq, triggered"
SWEEP_COLUMNS = (
    "param",
    "value",
    "ultimate_radius",
    "invariance_radius",
    "sigma_max",
    "sigma",
    "mean_updates",
    "cvar_final",
    "cvar_tail_max",
    "status",
)
SWEEP_PARAMS = ("r", "epsilon", "sigma")


def sigma_table(cfg: ExperimentConfig) -> tuple[dict, dict]:
    """Maximal sigma of each corollary at ``cfg.radius``; infeasible ones map to ``None``."""
    cl = cfg.closed_loop()
    values, errors = {}, {}
    for i, rule in SIGMA_RULES.items():
        try:
            values[f"sigma{i}"] = rule(cl, cfg.radius)
        except InfeasibleRadiusError as exc:
            values[f"sigma{i}"] = None
            errors[f"sigma{i}"] = {"error": exc.code, "message": str(exc)}
    return values, errors


def certify_report(cfg: ExperimentConfig) -> dict:
    cl = cfg.closed_loop()
    auto = cl.autonomous
    r = cfg.radius
    sigmas, sigma_errors = sigma_table(cfg)
    certs = {
        "ultimate_bound": ultimate_bound_certificate(auto, r, x0=cfg.x0).to_dict(),
        "invariance": invariance_certificate(auto, r).to_dict(),
        "robust_ultimate_bound": None,
        "robust_invariance": None,
    }
    if sigmas["sigma1"] is not None:
        certs["robust_ultimate_bound"] = robust_ultimate_bound_certificate(
            cl.with_state_error(sigmas["sigma1"]), r
        ).to_dict()
    if sigmas["sigma3"] is not None:
        certs["robust_invariance"] = robust_invariance_certificate(cl.with_state_error(sigmas["sigma3"]), r).to_dict()

    configured = {"spec": cfg.trigger.to_dict()}
    try:
        configured.update(sigma=cfg.trigger.resolve_sigma(cl, r), feasible=True)
    except InfeasibleRadiusError as exc:
        configured.update(sigma=None, feasible=False, error=exc.code, message=str(exc))

    return {
        "epsilon": cfg.epsilon,
        "radius": r,
        "trace_P": float(np.trace(cl.lyapunov)),
        "norm_A_cl": cl.norm_acl,
        "norm_BK": cl.norm_bk,
        "norm_B": cl.norm_b,
        "ultimate_radius": cl.ultimate_radius,
        "invariance_radius": cl.invariance_radius,
        "certificates": certs,
        "sigma_max": sigmas,
        "sigma_errors": sigma_errors,
        "configured_trigger": configured,
        "config": cfg.to_dict(),
    }


def format_certify_table(report: dict) -> str:
    lines = [
        f"epsilon = {report['epsilon']:g}   r = {report['radius']:g}",
        f"Tr(P) = {report['trace_P']:.6f}   ||A+BK|| = {report['norm_A_cl']:.6f}",
        f"sqrt(Tr(P)/eps)                    = {report['ultimate_radius']:.4f}",
        f"sqrt(Tr(Sw E'E)/eps)/(1-||A+BK||)  = {report['invariance_radius']:.4f}",
        "",
        f"{'certificate':<24}{'threshold':>12}{'margin':>12}  satisfied",
    ]
    for name, cert in report["certificates"].items():
        if cert is None:
            lines.append(f"{name:<24}{'-':>12}{'-':>12}  (no feasible sigma)")
        else:
            lines.append(f"{name:<24}{cert['threshold_value']:>12.4f}{cert['margin']:>12.4f}  {cert['satisfied']}")
    lines.append("")
    for name, value in report["sigma_max"].items():
        shown = "infeasible-radius" if value is None else f"{value:.4f}"
        lines.append(f"{name}_max = {shown}")
    return "\n".join(lines)


def trajectory_csv(record: TrajectoryRecord) -> str:
    """CSV text with columns ``t, x1..xn, u1..um, norm_sq, triggered``.

    The final row (``t = horizon``) has no input and an empty trigger flag.
    """
    n = record.states.shape[1]
    m = record.inputs.shape[1]
    buf = io.StringIO()
    writer = csv.writer(buf, lineterminator="\n")
    writer.writerow(["t", *[f"x{i + 1}" for i in range(n)], *[f"u{j + 1}" for j in range(m)], "norm_sq", "triggered"])
    sq = record.sq_norms
    for t in range(record.horizon + 1):
        x = [repr(float(v)) for v in record.states[t]]
        if t < record.horizon:
            u = [repr(float(v)) for v in record.inputs[t]]
            flag = str(int(record.triggered[t]))
        else:
            u = [""] * m
            flag = ""
        writer.writerow([t, *x, *u, repr(float(sq[t])), flag])
    return buf.getvalue()


@dataclass
class SimulationResult:
    summary: dict
    trajectories: dict[str, TrajectoryRecord] = field(default_factory=dict)
    ensembles: dict[str, RiskSummary] = field(default_factory=dict)


def _echo_certificate(cfg, cl, policy):
    """Certificate guaranteed by an absolute policy, plus the matching envelope."""
    if policy.relative:
        return None, None
    sys_in = policy_input_system(cl, policy)
    corollary = cfg.trigger.corollary
    if corollary in (3, 4):
        cert = robust_invariance_certificate(sys_in, cfg.radius)
    else:
        cert = robust_ultimate_bound_certificate(sys_in, cfg.radius)
    alpha2 = cert.alpha2 or 1.0
    env = stability_envelope(sys_in, 1.0, alpha2)
    return cert, env


def simulate_experiment(cfg: ExperimentConfig) -> SimulationResult:
    """Seeded single trajectory + ensemble for the configured trigger (and optional periodic baseline)."""
    cl = cfg.closed_loop()
    policy = cfg.trigger.policy(cl, cfg.radius)
    sampler = cfg.sampler_for()
    x0 = np.array(cfg.x0)
    controller = EventTriggered(policy)
    x0_sq = float(x0 @ x0)
    t = np.arange(cfg.horizon + 1)

    traj = rollout(cl, controller, x0, cfg.horizon, sampler, stream=0)
    ens = ensemble(cl, controller, x0, cfg.horizon, sampler, runs=cfg.runs, radius=cfg.radius, workers=cfg.workers)
    cert, env = _echo_certificate(cfg, cl, policy)

    event = ens.to_dict()
    event["single_run_update_count"] = traj.update_count
    event["single_run_trigger_times"] = traj.trigger_times
    if env is not None:
        event["envelope"] = env.value(t, x0_sq, policy.sigma**2).tolist()
    summary = {
        "seed": cfg.seed,
        "sampler": cfg.sampler,
        "horizon": cfg.horizon,
        "runs": cfg.runs,
        "trigger": {"kind": policy.kind, "sigma": policy.sigma, "spec": cfg.trigger.to_dict()},
        "certificate": None if cert is None else cert.to_dict(),
        "event_triggered": event,
    }
    result = SimulationResult(summary, {f"trajectory_{cfg.seed}": traj}, {"event_triggered": ens})

    if cfg.baseline_periodic:
        periodic = PeriodicFeedback()
        ptraj = rollout(cl, periodic, x0, cfg.horizon, sampler, stream=0)
        pens = ensemble(cl, periodic, x0, cfg.horizon, sampler, runs=cfg.runs, radius=cfg.radius, workers=cfg.workers)
        penv = stability_envelope(cl.autonomous, 1.0)
        base = pens.to_dict()
        base["single_run_update_count"] = ptraj.update_count
        base["envelope"] = penv.value(t, x0_sq).tolist()
        summary["baseline_periodic"] = base
        result.trajectories[f"trajectory_{cfg.seed}_periodic"] = ptraj
        result.ensembles["baseline_periodic"] = pens
    return result


def sweep_rows(cfg: ExperimentConfig, param: str, grid) -> list[dict]:
    """One row per grid value of ``r``, ``epsilon`` or ``sigma`` (columns: ``SWEEP_COLUMNS``)."""
    if param not in SWEEP_PARAMS:
        raise InvalidInputError(f"sweep parameter must be one of {SWEEP_PARAMS}, got {param!r}")
    grid = [float(v) for v in grid]
    if not grid:
        raise InvalidInputError("sweep grid is empty")
    rows = []
    for value in grid:
        if param == "r":
            point = cfg.with_overrides(radius=value)
        elif param == "epsilon":
            point = cfg.with_overrides(epsilon=value)
        else:
            if value < 0.0:
                raise InvalidInputError(f"sigma values must be nonnegative, got {value}")
            point = cfg
        cl = point.closed_loop()
        row = dict.fromkeys(SWEEP_COLUMNS, "")
        row.update(
            param=param,
            value=value,
            ultimate_radius=cl.ultimate_radius,
            invariance_radius=cl.invariance_radius,
        )
        try:
            row["sigma_max"] = (
                "" if point.trigger.corollary is None else SIGMA_RULES[point.trigger.corollary](cl, point.radius)
            )
            policy = point.trigger.policy(cl, point.radius)
        except InfeasibleRadiusError as exc:
            row["status"] = exc.code
            rows.append(row)
            continue
        if param == "sigma":
            policy = type(policy)(policy.kind, value, policy.gain_k)
        ens = ensemble(
            cl,
            EventTriggered(policy),
            np.array(point.x0),
            point.horizon,
            point.sampler_for(),
            runs=point.runs,
            workers=point.workers,
        )
        tail_start = point.horizon // 3
        row.update(
            sigma=policy.sigma,
            mean_updates=ens.update_stats["mean"],
            cvar_final=float(ens.cvar[-1]),
            cvar_tail_max=float(np.max(ens.cvar[tail_start:])),
            status="ok",
        )
        rows.append(row)
    return rows


def sweep_csv(rows: list[dict]) -> str:
    buf = io.StringIO()
    writer = csv.DictWriter(buf, fieldnames=SWEEP_COLUMNS, lineterminator="\n")
    writer.writeheader()
    for row in rows:
        writer.writerow(row)
    return buf.getvalue()
