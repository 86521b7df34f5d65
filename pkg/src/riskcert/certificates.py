"""Worst-case CVaR stability, ultimate-bound and invariance certificates.

All certificates concern the ball ``{x : ||x||^2 <= r^2}`` for

    x_{t+1} = A x_t + E w_t                (autonomous)
    x_{t+1} = A x_t + D v_t + E w_t        (bounded input, ||v_t|| <= d)

with ``||A|| < 1`` and ``(A, E)`` reachable. Thresholds are reported in
squared-radius units, so ``margin = r^2 - threshold`` for every kind.
Ultimate bounds use a strict inequality, invariance a non-strict one.
"""

from __future__ import annotations

import math
from dataclasses import asdict, dataclass, field, replace
from functools import cached_property

import numpy as np

from .errors import InfeasibleAlphaError, InvalidInputError, NotContractiveError, WrongKindError
from .linalg import as_matrix, reachability_rank, solve_discrete_lyapunov, spectral_norm
from .risk import MomentAmbiguitySet

# relative slack used when comparing r^2 with a threshold at the boundary
BOUNDARY_RTOL = 1e-12
MAX_BETA_COEFF = 100.0

ULTIMATE_BOUND = "ultimate_bound"
INVARIANCE = "invariance"
ROBUST_ULTIMATE_BOUND = "robust_ultimate_bound"
ROBUST_INVARIANCE = "robust_invariance"


@dataclass(frozen=True, eq=False)
class LinearStochasticSystem:
    """``x+ = a x (+ d v) + e w`` with ``w`` drawn from ``disturbance``.

    ``d``/``input_bound`` describe the optional bounded-input channel.
    Contractivity is recorded (``is_contractive``), not enforced, at
    construction; each certificate raises :class:`NotContractiveError` itself.
    """

    a: np.ndarray
    e: np.ndarray
    disturbance: MomentAmbiguitySet
    d: np.ndarray | None = None
    input_bound: float | None = None

    def __post_init__(self):
        a = as_matrix(self.a, "a")
        e = as_matrix(self.e, "e")
        n = a.shape[0]
        if a.shape[1] != n:
            raise InvalidInputError(f"a must be square, got {a.shape}")
        if e.shape[0] != n:
            raise InvalidInputError(f"e has {e.shape[0]} rows, expected {n}")
        if e.shape[1] != self.disturbance.dimension:
            raise InvalidInputError(
                f"e has {e.shape[1]} columns, disturbance has dimension {self.disturbance.dimension}"
            )
        object.__setattr__(self, "a", a)
        object.__setattr__(self, "e", e)
        if self.d is not None:
            d = as_matrix(self.d, "d")
            if d.shape[0] != n:
                raise InvalidInputError(f"d has {d.shape[0]} rows, expected {n}")
            object.__setattr__(self, "d", d)
        if self.input_bound is not None:
            if self.d is None:
                raise InvalidInputError("input_bound given without an input channel d")
            if not (math.isfinite(self.input_bound) and self.input_bound >= 0.0):
                raise InvalidInputError(f"input_bound must be a nonnegative real, got {self.input_bound}")
            object.__setattr__(self, "input_bound", float(self.input_bound))
        if reachability_rank(a, e) != n:
            raise InvalidInputError("(a, e) is not reachable")

    @property
    def n(self) -> int:
        return self.a.shape[0]

    @property
    def has_input(self) -> bool:
        return self.d is not None

    @property
    def level(self) -> float:
        return self.disturbance.level

    @cached_property
    def norm_a(self) -> float:
        return spectral_norm(self.a)

    @property
    def is_contractive(self) -> bool:
        return self.norm_a < 1.0

    @cached_property
    def norm_d(self) -> float:
        return 0.0 if self.d is None else spectral_norm(self.d)

    @cached_property
    def lyapunov(self) -> np.ndarray:
        """``P`` solving ``a P a^T - P + e Sigma_w e^T = 0``."""
        self.require_contractive()
        return solve_discrete_lyapunov(self.a, self.e @ self.disturbance.covariance @ self.e.T)

    @cached_property
    def risk_trace(self) -> float:
        """``Tr(P) / eps``: worst-case CVaR of the stationary noise response."""
        return float(np.trace(self.lyapunov)) / self.level

    @cached_property
    def noise_trace(self) -> float:
        """``Tr(Sigma_w e^T e) / eps``: worst-case CVaR of one noise step."""
        return float(np.trace(self.disturbance.covariance @ self.e.T @ self.e)) / self.level

    @property
    def input_gain(self) -> float:
        """``||D|| d``, zero without a channel or bound."""
        if self.d is None or self.input_bound is None:
            return 0.0
        return self.norm_d * self.input_bound

    def require_contractive(self) -> None:
        if not self.is_contractive:
            raise NotContractiveError(f"||a|| = {self.norm_a:.6g} >= 1")

    def with_input(self, d, input_bound: float) -> "LinearStochasticSystem":
        return LinearStochasticSystem(self.a, self.e, self.disturbance, d=d, input_bound=input_bound)

    def without_input(self) -> "LinearStochasticSystem":
        return LinearStochasticSystem(self.a, self.e, self.disturbance)


def canonical_alpha(norm_a: float) -> float:
    """The ``alpha`` with ``(1 + alpha^2) ||A|| = 1``; infinite when ``||A|| = 0``."""
    if norm_a <= 0.0:
        return math.inf
    return math.sqrt(1.0 / norm_a - 1.0)


@dataclass(frozen=True)
class StabilityEnvelope:
    """``beta_coeff * lam^t * ||x0||^2 + gamma_coeff * vbar^2 + offset_c``."""

    lam: float
    beta_coeff: float
    gamma_coeff: float
    offset_c: float
    alpha1: float
    alpha2: float | None = None

    def value(self, t, x0_norm_sq: float, input_sup_sq: float = 0.0):
        t = np.asarray(t, dtype=float)
        return self.beta_coeff * self.lam**t * x0_norm_sq + self.gamma_coeff * input_sup_sq + self.offset_c


def stability_envelope(
    sys: LinearStochasticSystem, alpha1: float = 1.0, alpha2: float | None = None
) -> StabilityEnvelope:
    sys.require_contractive()
    if alpha1 <= 0.0:
        raise InvalidInputError(f"alpha1 must be positive, got {alpha1}")
    lam = sys.norm_a**2
    beta = 1.0 + alpha1**2
    outer = 1.0 + 1.0 / alpha1**2
    if not sys.has_input:
        if alpha2 is not None:
            raise InvalidInputError("alpha2 given for a system without input channel")
        return StabilityEnvelope(lam, beta, 0.0, outer * sys.risk_trace, alpha1)
    if alpha2 is None or alpha2 <= 0.0:
        raise InvalidInputError("a positive alpha2 is required for a system with an input channel")
    gamma = outer * (1.0 + alpha2**2) * (sys.norm_d / (1.0 - sys.norm_a)) ** 2
    offset = outer * (1.0 + 1.0 / alpha2**2) * sys.risk_trace
    return StabilityEnvelope(lam, beta, gamma, offset, alpha1, alpha2)


@dataclass(frozen=True)
class RiskCertificate:
    kind: str
    radius: float
    threshold_value: float
    margin: float
    satisfied: bool
    alpha1: float | None = None
    alpha2: float | None = None
    settling_time: int | None = None
    degenerate: bool = False
    notes: tuple[str, ...] = field(default_factory=tuple)

    def to_dict(self) -> dict:
        out = asdict(self)
        out["notes"] = list(self.notes)
        for key in ("alpha1", "alpha2"):
            if out[key] is not None and not math.isfinite(out[key]):
                out[key] = None
        return out


def _strict(r: float, threshold: float) -> bool:
    return r * r > threshold * (1.0 + BOUNDARY_RTOL)


def _nonstrict(r: float, threshold: float) -> bool:
    return r * r >= threshold * (1.0 - BOUNDARY_RTOL)


def _mark_boundary(cert: RiskCertificate) -> RiskCertificate:
    if not cert.satisfied and abs(cert.margin) <= 1e-9 * max(1.0, cert.threshold_value):
        return replace(cert, notes=cert.notes + ("on the boundary of a strict inequality",))
    return cert


def _check_radius(r: float) -> float:
    r = float(r)
    if not r > 0.0:
        raise InvalidInputError(f"radius must be positive, got {r}")
    return r


def settling_alpha(risk_trace: float, r: float) -> float:
    """Deterministic choice of ``alpha1`` for the settling-time witness.

    With limiting slack ``g = r^2 - risk_trace`` we take
    ``alpha1^2 = clip(10 risk_trace / g, 1, MAX_BETA_COEFF - 1)``; the cap is
    dropped if it would leave no positive slack.
    """
    g = r * r - risk_trace
    if g <= 0.0:
        raise InvalidInputError("no positive slack: the ultimate-bound condition fails")
    needed = risk_trace / g
    a2 = min(max(10.0 * needed, 1.0), MAX_BETA_COEFF - 1.0)
    if a2 <= needed:
        a2 = 10.0 * needed
    return math.sqrt(a2)


def settling_time(beta_coeff: float, lam: float, x0_norm_sq: float, delta: float) -> int:
    """Smallest ``T >= 0`` with ``beta_coeff * lam^T * x0_norm_sq <= delta``."""
    if delta <= 0.0:
        raise InvalidInputError("delta must be positive")
    head = beta_coeff * x0_norm_sq
    if head <= delta:
        return 0
    if lam == 0.0:
        return 1
    t = max(0, math.floor(math.log(delta / head) / math.log(lam)))
    while beta_coeff * lam**t * x0_norm_sq > delta:
        t += 1
    while t > 0 and beta_coeff * lam ** (t - 1) * x0_norm_sq <= delta:
        t -= 1
    return t


def _ultimate_bound(sys: LinearStochasticSystem, r: float, x0=None, kind=ULTIMATE_BOUND) -> RiskCertificate:
    threshold = sys.risk_trace
    ok = _strict(r, threshold)
    alpha1 = None
    t_settle = None
    if ok:
        alpha1 = settling_alpha(threshold, r)
        if x0 is not None:
            delta = r * r - (1.0 + 1.0 / alpha1**2) * threshold
            x0 = np.asarray(x0, dtype=float).reshape(-1)
            t_settle = settling_time(1.0 + alpha1**2, sys.norm_a**2, float(x0 @ x0), delta)
    return _mark_boundary(
        RiskCertificate(kind, r, threshold, r * r - threshold, ok, alpha1=alpha1, settling_time=t_settle)
    )


def ultimate_bound_certificate(sys: LinearStochasticSystem, r: float, x0=None) -> RiskCertificate:
    """Ultimate bound without inputs: ``r^2 > Tr(P) / eps``.

    If ``x0`` is given the certificate carries the settling time ``T(x0)``
    after which the envelope stays inside the ball.
    """
    if sys.has_input:
        raise WrongKindError("system has an input channel; use robust_ultimate_bound_certificate")
    sys.require_contractive()
    return _ultimate_bound(sys, _check_radius(r), x0)


def invariance_certificate(sys: LinearStochasticSystem, r: float) -> RiskCertificate:
    if sys.has_input:
        raise WrongKindError("system has an input channel; use robust_invariance_certificate")
    sys.require_contractive()
    r = _check_radius(r)
    threshold = sys.noise_trace / (1.0 - sys.norm_a) ** 2
    return RiskCertificate(
        INVARIANCE,
        r,
        threshold,
        r * r - threshold,
        _nonstrict(r, threshold),
        alpha1=canonical_alpha(sys.norm_a),
    )


def invariance_coefficient(norm_a: float, alpha: float) -> float:
    """``alpha^2 (1/(1+alpha^2) - ||A||^2)``, the factor multiplying ``r^2``."""
    a2 = alpha * alpha
    return a2 * (1.0 / (1.0 + a2) - norm_a * norm_a)


def invariance_certificate_general_alpha(sys: LinearStochasticSystem, r: float, alpha: float) -> RiskCertificate:
    """Invariance with a free ``alpha``: ``Tr(Sigma_w E^T E)/eps <= coeff(alpha) r^2``."""
    if sys.has_input:
        raise WrongKindError("system has an input channel")
    sys.require_contractive()
    r = _check_radius(r)
    coeff = invariance_coefficient(sys.norm_a, alpha) if alpha > 0.0 else 0.0
    if not coeff > 0.0:
        raise InfeasibleAlphaError(f"alpha = {alpha} gives a nonpositive coefficient {coeff:.3g}")
    threshold = sys.noise_trace / coeff
    return RiskCertificate(
        INVARIANCE, r, threshold, r * r - threshold, _nonstrict(r, threshold), alpha1=float(alpha)
    )


def _require_bounded_input(sys: LinearStochasticSystem) -> None:
    if not sys.has_input or sys.input_bound is None:
        raise WrongKindError("robust certificates need an input channel d and an input_bound")
    sys.require_contractive()


def robust_ultimate_bound_certificate(sys: LinearStochasticSystem, r: float) -> RiskCertificate:
    """Ultimate bound under ``||v|| <= d``: ``r^2 > (||D|| d/(1-||A||) + sqrt(Tr(P)/eps))^2``."""
    _require_bounded_input(sys)
    r = _check_radius(r)
    gain = sys.input_gain
    if gain == 0.0:
        cert = _ultimate_bound(sys, r, kind=ROBUST_ULTIMATE_BOUND)
        return replace(cert, degenerate=True, notes=("zero input gain: alpha2 undefined",))
    root = math.sqrt(sys.risk_trace)
    threshold = (gain / (1.0 - sys.norm_a) + root) ** 2
    alpha2 = math.sqrt((1.0 - sys.norm_a) / gain * root)
    return _mark_boundary(
        RiskCertificate(ROBUST_ULTIMATE_BOUND, r, threshold, r * r - threshold, _strict(r, threshold), alpha2=alpha2)
    )


def robust_invariance_certificate(sys: LinearStochasticSystem, r: float) -> RiskCertificate:
    """Robust invariance: ``r^2 >= (||D|| d + sqrt(Tr(Sigma_w E^T E)/eps))^2 / (1-||A||)^2``."""
    _require_bounded_input(sys)
    r = _check_radius(r)
    gain = sys.input_gain
    root = math.sqrt(sys.noise_trace)
    threshold = (gain + root) ** 2 / (1.0 - sys.norm_a) ** 2
    alpha2 = math.sqrt(root / gain) if gain > 0.0 else None
    notes = () if gain > 0.0 else ("zero input gain: alpha2 undefined",)
    return RiskCertificate(
        ROBUST_INVARIANCE,
        r,
        threshold,
        r * r - threshold,
        _nonstrict(r, threshold),
        alpha1=canonical_alpha(sys.norm_a),
        alpha2=alpha2,
        degenerate=gain == 0.0,
        notes=notes,
    )


def one_step_risk_map(sys: LinearStochasticSystem, state_norm_sq: float) -> float:
    """Bound on ``sup CVaR[||x_{t+1}||^2]`` given ``||x_t||^2``, at the canonical alphas.

    ``||A|| s + (||D|| d + sqrt(q))^2 / (1 - ||A||)`` with
    ``q = Tr(Sigma_w E^T E)/eps``; the input term vanishes without a channel.
    The slope is ``||A||`` rather than ``||A||^2``: this is the conservative
    chain used to prove invariance.
    """
    sys.require_contractive()
    if state_norm_sq < 0.0:
        raise InvalidInputError("state_norm_sq must be nonnegative")
    norm_a = sys.norm_a
    return norm_a * state_norm_sq + (sys.input_gain + math.sqrt(sys.noise_trace)) ** 2 / (1.0 - norm_a)


def risk_map_fixed_point(sys: LinearStochasticSystem) -> float:
    sys.require_contractive()
    return (sys.input_gain + math.sqrt(sys.noise_trace)) ** 2 / (1.0 - sys.norm_a) ** 2
