"""Seeded Monte Carlo rollouts of open-loop, periodic and event-triggered loops.

Randomness: run ``i`` of an experiment with seed ``s`` draws from a Philox
(counter-based) generator keyed by ``splitmix64(s ^ i)``. Runs never share a
stream, so an ensemble can be split across any number of workers.

The dynamics are evaluated batch-wise, one column at a time with scalar
multiply-adds, so a run's arithmetic does not depend on how many runs share
its batch. That is what makes 1-worker and N-worker ensembles bit-identical.
"""

from __future__ import annotations

import math
from concurrent.futures import ThreadPoolExecutor
from dataclasses import dataclass, field

import numpy as np

from .errors import InvalidInputError
from .linalg import as_matrix, as_vector, symmetric_eigh
from .risk import cvar_standard_error, empirical_cvar
from .triggers import INPUT_ERROR_ABS, INPUT_ERROR_REL, STATE_ERROR_REL, TriggerPolicy

MASK64 = (1 << 64) - 1
SAMPLER_KINDS = ("gaussian", "student_t", "scaled_uniform", "two_point")


def splitmix64(x: int) -> int:
    x = (x + 0x9E3779B97F4A7C15) & MASK64
    x = ((x ^ (x >> 30)) * 0xBF58476D1CE4E5B9) & MASK64
    x = ((x ^ (x >> 27)) * 0x94D049BB133111EB) & MASK64
    return x ^ (x >> 31)


def derive_stream_seed(seed: int, index: int) -> int:
    """64-bit key of run ``index``: ``splitmix64(seed XOR index)``."""
    return splitmix64((int(seed) & MASK64) ^ (int(index) & MASK64))


def stream_generator(seed: int, index: int) -> np.random.Generator:
    return np.random.Generator(np.random.Philox(key=derive_stream_seed(seed, index)))


@dataclass(frozen=True, eq=False)
class DisturbanceSampler:
    """Zero-mean disturbances with covariance exactly ``covariance``.

    Every kind draws a standardized vector (zero mean, identity covariance)
    and maps it through a square-root factor of the covariance, so all kinds
    belong to the same moment ambiguity set. ``student_t`` is a multivariate
    t rescaled by ``sqrt((dof - 2) / dof)``.
    """

    kind: str
    covariance: np.ndarray
    seed: int = 42
    dof: float = 5.0

    def __post_init__(self):
        if self.kind not in SAMPLER_KINDS:
            raise InvalidInputError(f"unknown sampler kind {self.kind!r}; expected one of {SAMPLER_KINDS}")
        if self.kind == "student_t" and not self.dof > 2.0:
            raise InvalidInputError(f"student_t needs dof > 2, got {self.dof}")
        cov = as_matrix(self.covariance, "covariance")
        object.__setattr__(self, "covariance", cov)
        w, v = symmetric_eigh(cov)
        if w[0] < -1e-12 * max(1.0, abs(w[-1])):
            raise InvalidInputError("covariance is not PSD")
        object.__setattr__(self, "_factor", v * np.sqrt(np.clip(w, 0.0, None)))

    @property
    def dimension(self) -> int:
        return self.covariance.shape[0]

    def standardized(self, rng: np.random.Generator, count: int) -> np.ndarray:
        shape = (count, self.dimension)
        if self.kind == "gaussian":
            return rng.standard_normal(shape)
        if self.kind == "student_t":
            z = rng.standard_normal(shape)
            g = rng.chisquare(self.dof, size=count)
            return z * np.sqrt((self.dof - 2.0) / g)[:, None]
        if self.kind == "scaled_uniform":
            return rng.uniform(-math.sqrt(3.0), math.sqrt(3.0), size=shape)
        return 2.0 * rng.integers(0, 2, size=shape).astype(float) - 1.0

    def draw(self, count: int, stream: int = 0) -> np.ndarray:
        """``count`` disturbance vectors (rows) from stream ``stream`` of this seed."""
        z = self.standardized(stream_generator(self.seed, stream), count)
        return z @ self._factor.T

    def with_seed(self, seed: int) -> "DisturbanceSampler":
        return DisturbanceSampler(self.kind, self.covariance, seed, self.dof)


@dataclass(frozen=True, eq=False)
class Plant:
    """Bare ``x+ = a x + b u + e w`` with optional gain ``k``; no stability requirements."""

    a: np.ndarray
    e: np.ndarray
    b: np.ndarray | None = None
    k: np.ndarray | None = None

    def __post_init__(self):
        a = as_matrix(self.a, "a")
        e = as_matrix(self.e, "e")
        n = a.shape[0]
        if a.shape != (n, n) or e.shape[0] != n:
            raise InvalidInputError(f"inconsistent shapes a{a.shape} e{e.shape}")
        object.__setattr__(self, "a", a)
        object.__setattr__(self, "e", e)
        if self.b is not None:
            b = as_matrix(self.b, "b")
            if b.shape[0] != n:
                raise InvalidInputError(f"b has {b.shape[0]} rows, expected {n}")
            object.__setattr__(self, "b", b)
        if self.k is not None:
            if self.b is None:
                raise InvalidInputError("gain k given without input matrix b")
            k = as_matrix(self.k, "k")
            if k.shape != (self.b.shape[1], n):
                raise InvalidInputError(f"k has shape {k.shape}, expected {(self.b.shape[1], n)}")
            object.__setattr__(self, "k", k)


def as_plant(system) -> Plant:
    if isinstance(system, Plant):
        return system
    return Plant(system.a, system.e, getattr(system, "b", None), getattr(system, "k", None))


@dataclass(frozen=True)
class NoControl:
    pass


@dataclass(frozen=True)
class PeriodicFeedback:
    pass


@dataclass(frozen=True)
class EventTriggered:
    policy: TriggerPolicy


@dataclass
class TrajectoryRecord:
    """One rollout; arrays are indexed by time step ``t``.

    ``states`` has ``horizon + 1`` rows; ``inputs``, ``held_states``,
    ``disturbances`` and ``triggered`` have ``horizon`` rows.
    """

    states: np.ndarray
    inputs: np.ndarray
    held_states: np.ndarray
    disturbances: np.ndarray
    triggered: np.ndarray

    @property
    def trigger_times(self) -> list[int]:
        return [int(t) for t in np.flatnonzero(self.triggered)]

    @property
    def update_count(self) -> int:
        return int(np.sum(self.triggered))

    @property
    def sq_norms(self) -> np.ndarray:
        return np.sum(self.states**2, axis=1)

    @property
    def horizon(self) -> int:
        return self.inputs.shape[0]


def _matvec(m: np.ndarray, x: np.ndarray) -> np.ndarray:
    """Rows of ``x`` times ``m^T`` with a fixed per-row operation order."""
    out = np.zeros((x.shape[0], m.shape[0]))
    for j in range(m.shape[1]):
        out += x[:, j : j + 1] * m[:, j][None, :]
    return out


def _row_norms(x: np.ndarray) -> np.ndarray:
    acc = np.zeros(x.shape[0])
    for j in range(x.shape[1]):
        acc += x[:, j] * x[:, j]
    return np.sqrt(acc)


def _simulate_batch(plant: Plant, controller, x0: np.ndarray, w: np.ndarray):
    runs, horizon, _ = w.shape
    n = plant.a.shape[0]
    m = 0 if plant.b is None else plant.b.shape[1]
    if not isinstance(controller, NoControl) and plant.k is None:
        raise InvalidInputError("feedback controllers need a gain k")

    states = np.empty((runs, horizon + 1, n))
    inputs = np.zeros((runs, horizon, m))
    held_states = np.empty((runs, horizon, n))
    triggered = np.zeros((runs, horizon), dtype=bool)

    x = np.repeat(x0[None, :], runs, axis=0)
    held = x.copy()
    states[:, 0] = x
    policy = controller.policy if isinstance(controller, EventTriggered) else None
    for t in range(horizon):
        if isinstance(controller, NoControl):
            fire = np.zeros(runs, dtype=bool)
        elif policy is None or t == 0:
            fire = np.ones(runs, dtype=bool)
        else:
            err = held - x
            if policy.kind in (INPUT_ERROR_ABS, INPUT_ERROR_REL):
                err = _matvec(policy.gain_k, err)
            phi = _row_norms(err)
            if policy.kind in (STATE_ERROR_REL, INPUT_ERROR_REL):
                fire = phi > policy.sigma * _row_norms(x)
            else:
                fire = phi > policy.sigma
        held = np.where(fire[:, None], x, held)
        triggered[:, t] = fire
        held_states[:, t] = held

        nxt = _matvec(plant.a, x) + _matvec(plant.e, w[:, t])
        if not isinstance(controller, NoControl):
            u = _matvec(plant.k, held)
            inputs[:, t] = u
            nxt = nxt + _matvec(plant.b, u)
        x = nxt
        states[:, t + 1] = x
    return states, inputs, held_states, triggered


def _check_x0(plant: Plant, x0, horizon: int) -> np.ndarray:
    x0 = as_vector(x0, "x0")
    if x0.shape[0] != plant.a.shape[0]:
        raise InvalidInputError(f"x0 has length {x0.shape[0]}, state dimension is {plant.a.shape[0]}")
    if int(horizon) != horizon or horizon < 1:
        raise InvalidInputError(f"horizon must be a positive integer, got {horizon}")
    return x0


def _check_sampler(plant: Plant, sampler: DisturbanceSampler) -> None:
    if sampler.dimension != plant.e.shape[1]:
        raise InvalidInputError(
            f"sampler dimension {sampler.dimension} does not match e with {plant.e.shape[1]} columns"
        )


def rollout(system, controller, x0, horizon: int, sampler: DisturbanceSampler, stream: int = 0) -> TrajectoryRecord:
    """Single seeded trajectory (run ``stream`` of ``sampler.seed``).

    Within a step: observe ``x_t``, compare with the held state, update the
    held state if triggered, apply ``u_t = K x_hat_t``, advance. ``t = 0``
    always updates.
    """
    plant = as_plant(system)
    x0 = _check_x0(plant, x0, horizon)
    _check_sampler(plant, sampler)
    w = sampler.draw(int(horizon), stream)
    states, inputs, held, trig = _simulate_batch(plant, controller, x0, w[None])
    return TrajectoryRecord(states[0], inputs[0], held[0], w, trig[0])


@dataclass
class RiskSummary:
    """Per-time-step ensemble statistics of ``||x_t||^2``."""

    level: float
    sq_norms: np.ndarray
    update_counts: np.ndarray
    cvar: np.ndarray
    cvar_stderr: np.ndarray
    mean: np.ndarray
    max: np.ndarray
    radius: float | None = None
    exceed_fraction: np.ndarray | None = None
    cvar_violation: np.ndarray | None = None
    extra: dict = field(default_factory=dict)

    @property
    def runs(self) -> int:
        return self.sq_norms.shape[0]

    @property
    def update_stats(self) -> dict:
        c = self.update_counts
        return {"mean": float(np.mean(c)), "min": int(np.min(c)), "max": int(np.max(c))}

    def run_violation_fraction(self, start: int = 0) -> float:
        """Fraction of runs with ``||x_t||^2 > r^2`` for some ``t >= start``."""
        if self.radius is None:
            raise InvalidInputError("summary has no radius")
        return float(np.mean(np.any(self.sq_norms[:, start:] > self.radius**2, axis=1)))

    def to_dict(self) -> dict:
        out = {
            "level": self.level,
            "runs": self.runs,
            "update_counts": self.update_stats,
            "cvar": self.cvar.tolist(),
            "cvar_stderr": self.cvar_stderr.tolist(),
            "mean": self.mean.tolist(),
            "max": self.max.tolist(),
        }
        if self.radius is not None:
            out["radius"] = self.radius
            out["exceed_fraction"] = self.exceed_fraction.tolist()
            out["cvar_violation"] = self.cvar_violation.tolist()
        return out


def summarize(sq_norms: np.ndarray, update_counts: np.ndarray, level: float, radius: float | None = None) -> RiskSummary:
    horizon = sq_norms.shape[1]
    cvar = np.array([empirical_cvar(sq_norms[:, t], level) for t in range(horizon)])
    stderr = np.array([cvar_standard_error(sq_norms[:, t], level) for t in range(horizon)])
    summary = RiskSummary(
        level=level,
        sq_norms=sq_norms,
        update_counts=update_counts,
        cvar=cvar,
        cvar_stderr=stderr,
        mean=np.mean(sq_norms, axis=0),
        max=np.max(sq_norms, axis=0),
    )
    if radius is not None:
        summary.radius = float(radius)
        summary.exceed_fraction = np.mean(sq_norms > radius**2, axis=0)
        summary.cvar_violation = cvar > radius**2
    return summary


def ensemble(
    system,
    controller,
    x0,
    horizon: int,
    sampler: DisturbanceSampler,
    runs: int | None = None,
    level: float | None = None,
    radius: float | None = None,
    workers: int = 1,
    streams=None,
) -> RiskSummary:
    """Monte Carlo ensemble; run ``i`` uses stream ``i`` unless ``streams`` is given.

    ``level`` defaults to the system's ambiguity-set level. Runs are split
    into ``workers`` contiguous chunks evaluated on a thread pool and
    reassembled in run order.
    """
    plant = as_plant(system)
    x0 = _check_x0(plant, x0, horizon)
    _check_sampler(plant, sampler)
    if streams is None:
        if runs is None:
            raise InvalidInputError("give runs or streams")
        streams = list(range(int(runs)))
    streams = [int(s) for s in streams]
    if len(streams) < 2:
        raise InvalidInputError("an ensemble needs at least 2 runs")
    if level is None:
        level = system.level
    workers = max(1, min(int(workers), len(streams)))

    def work(chunk):
        w = np.stack([sampler.draw(int(horizon), s) for s in chunk])
        states, _, _, trig = _simulate_batch(plant, controller, x0, w)
        sq = np.zeros(states.shape[:2])
        for j in range(states.shape[2]):
            sq += states[:, :, j] * states[:, :, j]
        return sq, np.sum(trig, axis=1)

    chunks = [c.tolist() for c in np.array_split(np.array(streams), workers) if len(c)]
    if workers == 1:
        parts = [work(c) for c in chunks]
    else:
        with ThreadPoolExecutor(max_workers=workers) as pool:
            parts = list(pool.map(work, chunks))
    sq_norms = np.concatenate([p[0] for p in parts])
    counts = np.concatenate([p[1] for p in parts])
    return summarize(sq_norms, counts, float(level), radius)


def stacked_response(a, m, t: int) -> np.ndarray:
    """``[a^{t-1} m, a^{t-2} m, ..., m]``."""
    a = as_matrix(a, "a")
    m = as_matrix(m, "m")
    blocks = [m]
    for _ in range(t - 1):
        blocks.append(a @ blocks[-1])
    return np.hstack(blocks[::-1])


def closed_form_crosscheck(a, e, x0, disturbances, d=None, inputs=None) -> np.ndarray:
    """``x_t = a^t x0 + G_t vbar + H_t wbar`` evaluated with the stacked matrices.

    ``disturbances`` (and ``inputs``) hold one row per step; ``t`` is their length.
    """
    a = as_matrix(a, "a")
    e = as_matrix(e, "e")
    x0 = as_vector(x0, "x0")
    w = np.atleast_2d(np.asarray(disturbances, dtype=float))
    t = w.shape[0]
    if w.shape[1] != e.shape[1]:
        raise InvalidInputError("disturbance width does not match e")
    x = np.linalg.matrix_power(a, t) @ x0 + stacked_response(a, e, t) @ w.reshape(-1)
    if d is not None or inputs is not None:
        if d is None or inputs is None:
            raise InvalidInputError("d and inputs must be given together")
        d = as_matrix(d, "d")
        v = np.atleast_2d(np.asarray(inputs, dtype=float))
        if v.shape != (t, d.shape[1]):
            raise InvalidInputError(f"inputs have shape {v.shape}, expected {(t, d.shape[1])}")
        x = x + stacked_response(a, d, t) @ v.reshape(-1)
    return x
