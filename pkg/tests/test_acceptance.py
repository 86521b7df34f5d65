"""Acceptance gate: one PASS/FAIL line per criterion.

Run with ``pytest tests/test_acceptance.py`` (lines are printed even without ``-s``).
"""

import math
import time

import numpy as np
import pytest

from riskcert import ClosedLoopSystem, MomentAmbiguitySet
from riskcert.certificates import (
    canonical_alpha,
    invariance_certificate,
    invariance_certificate_general_alpha,
    robust_ultimate_bound_certificate,
    stability_envelope,
)
from riskcert.errors import InfeasibleAlphaError
from riskcert.linalg import solve_discrete_lyapunov
from riskcert.risk import QuadraticLoss, coherence_check, empirical_cvar
from riskcert.simulation import (
    SAMPLER_KINDS,
    DisturbanceSampler,
    EventTriggered,
    PeriodicFeedback,
    Plant,
    closed_form_crosscheck,
    ensemble,
    rollout,
)
from riskcert.triggers import (
    INPUT_ERROR_ABS,
    STATE_ERROR_ABS,
    TriggerPolicy,
    policy_input_system,
    sigma1_max,
    sigma2_max,
    sigma3_max,
    sigma4_max,
)

from conftest import A, B, E, EPS, K, SIGMA_W, X0, random_contractive, random_psd

HORIZON = 60


@pytest.fixture
def verdict(capsys):
    def emit(number, title, ok, elapsed, limit=None, detail=""):
        timed = limit is None or elapsed < limit
        status = "PASS" if ok and timed else "FAIL"
        budget = f" (limit {limit:g} s)" if limit is not None else ""
        with capsys.disabled():
            print(f"\n[{status}] criterion {number}: {title}; {elapsed:.2f} s{budget}. {detail}".rstrip())
        assert ok, detail
        assert timed, f"took {elapsed:.2f} s, limit {limit} s"

    return emit


def _example_cl():
    return ClosedLoopSystem(A, B, E, K, MomentAmbiguitySet(SIGMA_W, EPS))


def test_criterion_1_reported_values(verdict):
    start = time.perf_counter()
    cl = _example_cl()
    computed = {
        "sqrt(TrP/eps) at r=6": (cl.ultimate_radius, 2.94),
        "sigma1 at r=6": (sigma1_max(cl, 6.0), 1.36),
        "sigma2 at r=6": (sigma2_max(cl, 6.0), 0.99),
        "invariance radius at r=10": (cl.invariance_radius, 6.54),
        "sigma3 at r=10": (sigma3_max(cl, 10.0), 1.52),
        "sigma4 at r=10": (sigma4_max(cl, 10.0), 1.11),
    }
    elapsed = time.perf_counter() - start
    misses = [f"{k} = {v:.5f} (expected {ref} +/- 0.01)" for k, (v, ref) in computed.items() if abs(v - ref) > 0.01]
    shown = ", ".join(f"{k} = {v:.4f}" for k, (v, _) in computed.items())
    detail = ("mismatch: " + "; ".join(misses)) if misses else shown
    verdict(1, "reported thresholds within +/-0.01", not misses, elapsed, 1.0, detail)


def test_criterion_2_lyapunov(verdict):
    rng = np.random.default_rng(2024)
    start = time.perf_counter()
    worst_res = worst_series = 0.0
    for _ in range(100):
        n = int(rng.integers(1, 7))
        a = random_contractive(rng, n, 0.9)
        q = random_psd(rng, n)
        p = solve_discrete_lyapunov(a, q)
        res = np.linalg.norm(a @ p @ a.T - p + q) / (1 + np.linalg.norm(q))
        series = np.zeros_like(q)
        ak = np.eye(n)
        for _ in range(201):
            series += ak @ q @ ak.T
            ak = a @ ak
        worst_res = max(worst_res, res)
        worst_series = max(worst_series, np.max(np.abs(p - series)))
    elapsed = time.perf_counter() - start
    ok = worst_res <= 1e-8 and worst_series <= 1e-8
    detail = f"max scaled residual {worst_res:.2e}, max series gap {worst_series:.2e}"
    verdict(2, "Lyapunov solver on 100 random systems", ok, elapsed, 5.0, detail)


def _brute_force_cvar(s, level):
    betas = np.concatenate([s, np.linspace(s.min() - 1.0, s.max() + 1.0, 501)])
    excess = np.maximum(s[None, :] - betas[:, None], 0.0)
    return float(np.min(betas + excess.mean(axis=1) / level))


def test_criterion_3_risk_properties(verdict):
    rng = np.random.default_rng(3)
    start = time.perf_counter()
    failures = 0
    for _ in range(1000):
        n = int(rng.integers(1, 5))
        amb = MomentAmbiguitySet(random_psd(rng, n) + 0.05 * np.eye(n), rng.uniform(0.01, 0.99))
        a1 = rng.standard_normal((int(rng.integers(1, 4)), n))
        a2 = np.vstack([a1, rng.standard_normal((1, n))]) if rng.random() < 0.5 else rng.standard_normal((2, n))
        rep = coherence_check(amb, QuadraticLoss(a1), QuadraticLoss(a2), rng.uniform(0.01, 10), rng.normal(0, 10))
        failures += not rep.all_hold
    worst = 0.0
    for _ in range(1000):
        s = rng.normal(0, 10, size=int(rng.integers(1, 51)))
        level = rng.uniform(0.01, 1.0)
        gap = abs(empirical_cvar(s, level) - _brute_force_cvar(s, level))
        worst = max(worst, gap / max(1.0, float(np.max(np.abs(s)))))
    elapsed = time.perf_counter() - start
    ok = failures == 0 and worst <= 1e-9
    detail = f"coherence failures {failures}/1000, max CVaR gap vs brute force {worst:.2e}"
    verdict(3, "coherence and empirical CVaR", ok, elapsed, 10.0, detail)


def test_criterion_4_certificate_soundness(verdict):
    cl = _example_cl()
    r = 6.0
    t = np.arange(HORIZON + 1)
    x0_sq = float(X0 @ X0)
    policy = TriggerPolicy(STATE_ERROR_ABS, sigma1_max(cl, r))
    sys_in = policy_input_system(cl, policy)
    cert = robust_ultimate_bound_certificate(sys_in, r)
    env_event = stability_envelope(sys_in, 1.0, cert.alpha2).value(t, x0_sq, policy.sigma**2)
    env_periodic = stability_envelope(cl.autonomous, 1.0).value(t, x0_sq)

    start = time.perf_counter()
    problems = []
    slack = []
    for kind in SAMPLER_KINDS:
        sampler = DisturbanceSampler(kind, SIGMA_W, seed=42)
        for name, ctrl, env in (
            ("periodic", PeriodicFeedback(), env_periodic),
            ("trigger", EventTriggered(policy), env_event),
        ):
            s = ensemble(cl, ctrl, X0, HORIZON, sampler, runs=1000, workers=4)
            excess = s.cvar - env - 3 * s.cvar_stderr
            if np.any(excess > 0):
                problems.append(f"{kind}/{name} envelope exceeded at t={int(np.argmax(excess))}")
            slack.append(float(np.min(env - s.cvar)))
            if name == "trigger":
                tail = s.cvar[20:] - r * r - 3 * s.cvar_stderr[20:]
                if np.any(tail > 0):
                    problems.append(f"{kind}/{name} CVaR above r^2 at t={20 + int(np.argmax(tail))}")
                slack.append(float(np.min(r * r - s.cvar[20:])))
    elapsed = time.perf_counter() - start
    detail = "; ".join(problems) if problems else f"smallest raw slack {min(slack):.3f}"
    verdict(4, "CVaR below envelope and r^2 for all samplers", not problems, elapsed, 60.0, detail)


def test_criterion_5_update_counts(verdict):
    cl = _example_cl()
    sampler = DisturbanceSampler("gaussian", SIGMA_W, seed=42)
    cases = {
        "sigma1=1.36": (TriggerPolicy(STATE_ERROR_ABS, 1.36), (20, 35)),
        "sigma2=0.99": (TriggerPolicy(INPUT_ERROR_ABS, 0.99, K), (20, 35)),
        "sigma3=1.52": (TriggerPolicy(STATE_ERROR_ABS, 1.52), (18, 33)),
        "sigma4=1.11": (TriggerPolicy(INPUT_ERROR_ABS, 1.11, K), (18, 33)),
    }
    start = time.perf_counter()
    problems, shown = [], []
    for name, (policy, (lo, hi)) in cases.items():
        mean = ensemble(cl, EventTriggered(policy), X0, HORIZON, sampler, runs=500).update_stats["mean"]
        shown.append(f"{name}: {mean:.1f}")
        if not (lo <= mean <= hi and mean <= 0.6 * HORIZON):
            problems.append(f"{name} mean {mean:.2f} outside [{lo}, {hi}]")
    periodic = ensemble(cl, PeriodicFeedback(), X0, HORIZON, sampler, runs=500).update_counts
    shown.append(f"periodic: {periodic.min()}..{periodic.max()}")
    if not np.all(periodic == HORIZON):
        problems.append("periodic baseline is not exactly 60")
    elapsed = time.perf_counter() - start
    detail = "; ".join(problems) if problems else ", ".join(shown)
    verdict(5, "mean update counts over 500 runs", not problems, elapsed, None, detail)


def test_criterion_6_canonical_alpha(verdict):
    sys = _example_cl().autonomous
    start = time.perf_counter()
    canonical = invariance_certificate(sys, 10.0).threshold_value
    best = math.inf
    for alpha in np.logspace(-4, 4, 10_000):
        try:
            best = min(best, invariance_certificate_general_alpha(sys, 10.0, alpha).threshold_value)
        except InfeasibleAlphaError:
            continue
    elapsed = time.perf_counter() - start
    gain = (canonical - best) / canonical
    ok = gain <= 1e-6
    detail = f"canonical alpha {canonical_alpha(sys.norm_a):.6f}, best grid improvement {gain:.2e} (relative)"
    verdict(6, "no grid alpha beats the canonical one", ok, elapsed, 5.0, detail)


def test_criterion_7_self_consistency(verdict):
    rng = np.random.default_rng(7)
    start = time.perf_counter()
    worst = 0.0
    for i in range(100):
        n, m, p = (int(v) for v in rng.integers(1, 5, size=3))
        plant = Plant(
            random_contractive(rng, n, 1.1),
            rng.standard_normal((n, p)),
            rng.standard_normal((n, m)),
            0.3 * rng.standard_normal((m, n)),
        )
        sampler = DisturbanceSampler("gaussian", random_psd(rng, p), seed=i)
        ctrl = PeriodicFeedback() if i % 2 else EventTriggered(TriggerPolicy(STATE_ERROR_ABS, 0.5))
        horizon = int(rng.integers(1, 30))
        rec = rollout(plant, ctrl, rng.standard_normal(n), horizon, sampler)
        for t in range(1, horizon + 1):
            x = closed_form_crosscheck(
                plant.a, plant.e, rec.states[0], rec.disturbances[:t], plant.b, rec.inputs[:t]
            )
            worst = max(worst, np.max(np.abs(x - rec.states[t])) / (1 + np.max(np.abs(rec.states[t]))))

    cl = _example_cl()
    sampler = DisturbanceSampler("student_t", SIGMA_W, seed=42)
    ctrl = EventTriggered(TriggerPolicy(STATE_ERROR_ABS, 1.36))
    one = ensemble(cl, ctrl, X0, HORIZON, sampler, runs=1000, workers=1)
    eight = ensemble(cl, ctrl, X0, HORIZON, sampler, runs=1000, workers=8)
    identical = (
        np.array_equal(one.sq_norms, eight.sq_norms)
        and np.array_equal(one.update_counts, eight.update_counts)
        and np.array_equal(one.cvar, eight.cvar)
    )
    elapsed = time.perf_counter() - start
    ok = worst <= 1e-10 and identical
    detail = f"max recursion/stacked gap {worst:.2e}, 1 vs 8 workers bit-identical: {identical}"
    verdict(7, "recursive vs stacked form and parallel determinism", ok, elapsed, None, detail)
