"""Event-trigger threshold synthesis and trigger evaluation.

The closed loop ``x+ = (A+BK) x + BK e + E w`` with held-state error
``e = x_hat - x`` is a bounded-input system, so the robust certificates
yield the largest admissible thresholds:

    sigma1 = (1-||A+BK||)/||BK|| (r - sqrt(Tr(P)/eps))                 ||e|| > sigma1
    sigma2 = (1-||A+BK||)/||B||  (r - sqrt(Tr(P)/eps))                 ||K e|| > sigma2
    sigma3 = ((1-||A+BK||) r - sqrt(Tr(Sigma_w E^T E)/eps)) / ||BK||   ||e|| > sigma3
    sigma4 = ((1-||A+BK||) r - sqrt(Tr(Sigma_w E^T E)/eps)) / ||B||    ||K e|| > sigma4 (||x||)

The fourth rule is stated with a relative trigger; the absolute variant is
the one the threshold formula actually protects, so both are available.
"""

from __future__ import annotations

import math
from dataclasses import dataclass
from functools import cached_property

import numpy as np

from .certificates import LinearStochasticSystem
from .errors import InfeasibleRadiusError, InvalidInputError, NotContractiveError
from .linalg import as_matrix, as_vector, spectral_norm
from .risk import MomentAmbiguitySet

STATE_ERROR_ABS = "state_error_abs"
INPUT_ERROR_ABS = "input_error_abs"
STATE_ERROR_REL = "state_error_rel"
INPUT_ERROR_REL = "input_error_rel"
TRIGGER_KINDS = (STATE_ERROR_ABS, INPUT_ERROR_ABS, STATE_ERROR_REL, INPUT_ERROR_REL)

_RADIUS_RTOL = 1e-12


@dataclass(frozen=True, eq=False)
class ClosedLoopSystem:
    """``x+ = A x + B u + E w`` under the gain ``u = K x_hat``."""

    a: np.ndarray
    b: np.ndarray
    e: np.ndarray
    k: np.ndarray
    disturbance: MomentAmbiguitySet

    def __post_init__(self):
        a, b, e, k = (as_matrix(m, name) for m, name in ((self.a, "A"), (self.b, "B"), (self.e, "E"), (self.k, "K")))
        n = a.shape[0]
        if a.shape != (n, n) or b.shape[0] != n or e.shape[0] != n or k.shape != (b.shape[1], n):
            raise InvalidInputError(f"inconsistent shapes A{a.shape} B{b.shape} E{e.shape} K{k.shape}")
        for name, value in (("a", a), ("b", b), ("e", e), ("k", k)):
            object.__setattr__(self, name, value)
        if self.norm_acl >= 1.0:
            raise NotContractiveError(f"||A+BK|| = {self.norm_acl:.6g} >= 1")
        # reachability of (A+BK, E) is enforced here
        _ = self.autonomous

    @property
    def n(self) -> int:
        return self.a.shape[0]

    @property
    def level(self) -> float:
        return self.disturbance.level

    @cached_property
    def a_cl(self) -> np.ndarray:
        return self.a + self.b @ self.k

    @cached_property
    def bk(self) -> np.ndarray:
        return self.b @ self.k

    @cached_property
    def norm_acl(self) -> float:
        return spectral_norm(self.a + self.b @ self.k)

    @cached_property
    def norm_bk(self) -> float:
        return spectral_norm(self.bk)

    @cached_property
    def norm_b(self) -> float:
        return spectral_norm(self.b)

    @cached_property
    def autonomous(self) -> LinearStochasticSystem:
        """The periodically updated loop ``x+ = (A+BK) x + E w``."""
        return LinearStochasticSystem(self.a_cl, self.e, self.disturbance)

    def with_state_error(self, sigma: float) -> LinearStochasticSystem:
        """Bounded-input view with ``D = BK`` and ``||e|| <= sigma``."""
        return self.autonomous.with_input(self.bk, sigma)

    def with_input_error(self, sigma: float) -> LinearStochasticSystem:
        """Bounded-input view with ``D = B`` and ``||K e|| <= sigma``."""
        return self.autonomous.with_input(self.b, sigma)

    @property
    def lyapunov(self) -> np.ndarray:
        return self.autonomous.lyapunov

    @property
    def ultimate_radius(self) -> float:
        """``sqrt(Tr(P)/eps)``: radii above it admit the ultimate-bound triggers."""
        return math.sqrt(self.autonomous.risk_trace)

    @property
    def invariance_radius(self) -> float:
        """``sqrt(Tr(Sigma_w E^T E)/eps) / (1 - ||A+BK||)``: radii above it admit the invariance triggers."""
        return math.sqrt(self.autonomous.noise_trace) / (1.0 - self.norm_acl)

    def with_level(self, level: float) -> "ClosedLoopSystem":
        return ClosedLoopSystem(self.a, self.b, self.e, self.k, self.disturbance.with_level(level))


def _slack(r: float, boundary: float, what: str) -> float:
    r = float(r)
    if not r > 0.0:
        raise InvalidInputError(f"radius must be positive, got {r}")
    if r < boundary * (1.0 - _RADIUS_RTOL):
        raise InfeasibleRadiusError(f"r = {r:.6g} is below the {what} radius {boundary:.6g}")
    return max(r - boundary, 0.0)


def sigma1_max(cl: ClosedLoopSystem, r: float) -> float:
    """Largest state-error threshold keeping the ball an ultimate bound."""
    return (1.0 - cl.norm_acl) / cl.norm_bk * _slack(r, cl.ultimate_radius, "ultimate-bound")


def sigma2_max(cl: ClosedLoopSystem, r: float) -> float:
    """Largest input-error threshold keeping the ball an ultimate bound."""
    return (1.0 - cl.norm_acl) / cl.norm_b * _slack(r, cl.ultimate_radius, "ultimate-bound")


def _invariance_slack(cl: ClosedLoopSystem, r: float) -> float:
    # (1-||A+BK||) r - sqrt(q) == (1-||A+BK||) (r - invariance_radius)
    return (1.0 - cl.norm_acl) * _slack(r, cl.invariance_radius, "invariance")


def sigma3_max(cl: ClosedLoopSystem, r: float) -> float:
    """Largest state-error threshold keeping the ball positively invariant."""
    return _invariance_slack(cl, r) / cl.norm_bk


def sigma4_max(cl: ClosedLoopSystem, r: float) -> float:
    """Largest input-error threshold keeping the ball positively invariant."""
    return _invariance_slack(cl, r) / cl.norm_b


SIGMA_RULES = {1: sigma1_max, 2: sigma2_max, 3: sigma3_max, 4: sigma4_max}


@dataclass(frozen=True, eq=False)
class TriggerPolicy:
    kind: str
    sigma: float
    gain_k: np.ndarray | None = None

    def __post_init__(self):
        if self.kind not in TRIGGER_KINDS:
            raise InvalidInputError(f"unknown trigger kind {self.kind!r}")
        if not (math.isfinite(self.sigma) and self.sigma >= 0.0):
            raise InvalidInputError(f"sigma must be a nonnegative real, got {self.sigma}")
        object.__setattr__(self, "sigma", float(self.sigma))
        if self.kind in (INPUT_ERROR_ABS, INPUT_ERROR_REL):
            if self.gain_k is None:
                raise InvalidInputError(f"{self.kind} needs the feedback gain")
            object.__setattr__(self, "gain_k", as_matrix(self.gain_k, "gain_k"))

    @property
    def relative(self) -> bool:
        return self.kind in (STATE_ERROR_REL, INPUT_ERROR_REL)

    def phi(self, current_state, held_state) -> float:
        """Trigger function: ``||e||`` or ``||K e||`` with ``e = held - current``."""
        x = as_vector(current_state, "current_state")
        xh = as_vector(held_state, "held_state")
        if x.shape != xh.shape:
            raise InvalidInputError(f"state dimensions differ: {x.shape} vs {xh.shape}")
        err = xh - x
        if self.gain_k is not None and self.kind in (INPUT_ERROR_ABS, INPUT_ERROR_REL):
            if self.gain_k.shape[1] != err.shape[0]:
                raise InvalidInputError("gain_k does not match the state dimension")
            err = self.gain_k @ err
        return float(np.linalg.norm(err))

    def threshold(self, current_state) -> float:
        if self.relative:
            return self.sigma * float(np.linalg.norm(as_vector(current_state, "current_state")))
        return self.sigma


def should_trigger(policy: TriggerPolicy, current_state, held_state) -> bool:
    """True iff ``phi(x, x_hat)`` strictly exceeds the policy threshold."""
    return policy.phi(current_state, held_state) > policy.threshold(current_state)


def corollary_policy(cl: ClosedLoopSystem, r: float, corollary: int, relative: bool = False) -> TriggerPolicy:
    """Policy using the maximal threshold of ``corollary`` (1-4) at radius ``r``.

    ``relative`` only applies to rule 4 (``||K e|| > sigma ||x||``).
    """
    if corollary not in SIGMA_RULES:
        raise InvalidInputError(f"corollary must be 1..4, got {corollary}")
    sigma = SIGMA_RULES[corollary](cl, r)
    if corollary in (1, 3):
        return TriggerPolicy(STATE_ERROR_ABS, sigma)
    kind = INPUT_ERROR_REL if (relative and corollary == 4) else INPUT_ERROR_ABS
    return TriggerPolicy(kind, sigma, cl.k)


def policy_input_system(cl: ClosedLoopSystem, policy: TriggerPolicy) -> LinearStochasticSystem:
    """Bounded-input system the policy induces (absolute kinds only)."""
    if policy.kind == STATE_ERROR_ABS:
        return cl.with_state_error(policy.sigma)
    if policy.kind == INPUT_ERROR_ABS:
        return cl.with_input_error(policy.sigma)
    raise InvalidInputError(f"{policy.kind} does not bound the error by a constant")
