"""Worst-case CVaR over zero-mean, fixed-covariance ambiguity sets.

For a quadratic loss ``L(xi) = ||A xi + b||^2 + c`` with ``xi`` zero mean and
covariance ``Sigma`` the worst case over all such distributions is sandwiched
between two closed forms, and is exact when ``b = 0, c = 0``:

    sup CVaR_eps[||A xi||^2] = Tr(Sigma A^T A) / eps

The empirical estimator here is the sample-average version of the
Rockafellar-Uryasev infimum, minimized exactly over order statistics.
"""

from __future__ import annotations

import math
from dataclasses import dataclass, field

import numpy as np

from .errors import InvalidInputError
from .linalg import as_matrix, as_vector, symmetric_eigvals

SYMMETRY_TOL = 1e-12


@dataclass(frozen=True, eq=False)
class MomentAmbiguitySet:
    """All zero-mean distributions with covariance ``covariance``, analysed at level ``level``.

    ``allow_singular`` admits a PSD (rather than PD) covariance, used for the
    noise-free limit of the certificates.
    """

    covariance: np.ndarray
    level: float
    allow_singular: bool = False

    def __post_init__(self):
        cov = as_matrix(self.covariance, "covariance")
        if cov.shape[0] != cov.shape[1]:
            raise InvalidInputError(f"covariance must be square, got {cov.shape}")
        if np.max(np.abs(cov - cov.T)) > SYMMETRY_TOL * max(1.0, np.max(np.abs(cov))):
            raise InvalidInputError("covariance is not symmetric")
        lam_min = symmetric_eigvals(cov)[0]
        if self.allow_singular:
            if lam_min < -SYMMETRY_TOL * max(1.0, np.max(np.abs(cov))):
                raise InvalidInputError(f"covariance is not PSD (min eigenvalue {lam_min:.3g})")
        elif lam_min <= 0.0:
            raise InvalidInputError(f"covariance is not positive definite (min eigenvalue {lam_min:.3g})")
        if not 0.0 < float(self.level) < 1.0:
            raise InvalidInputError(f"level must lie in (0, 1), got {self.level}")
        object.__setattr__(self, "covariance", cov)
        object.__setattr__(self, "level", float(self.level))

    @property
    def dimension(self) -> int:
        return self.covariance.shape[0]

    def with_level(self, level: float) -> "MomentAmbiguitySet":
        return MomentAmbiguitySet(self.covariance, level, self.allow_singular)


@dataclass(frozen=True, eq=False)
class QuadraticLoss:
    """``L(xi) = ||a xi + b||^2 + c``; ``b`` defaults to zero."""

    a: np.ndarray
    b: np.ndarray | None = None
    c: float = 0.0

    def __post_init__(self):
        a = as_matrix(self.a, "loss matrix")
        b = np.zeros(a.shape[0]) if self.b is None else np.asarray(self.b, dtype=float).reshape(-1)
        if b.shape[0] != a.shape[0]:
            raise InvalidInputError(f"b has length {b.shape[0]}, loss matrix has {a.shape[0]} rows")
        if not (np.all(np.isfinite(b)) and math.isfinite(self.c)):
            raise InvalidInputError("loss offset is not finite")
        object.__setattr__(self, "a", a)
        object.__setattr__(self, "b", b)
        object.__setattr__(self, "c", float(self.c))

    @property
    def is_centered(self) -> bool:
        return self.c == 0.0 and not np.any(self.b)

    def __call__(self, xi) -> np.ndarray:
        """Evaluate the loss on a sample (1-D) or a batch of samples (rows)."""
        xi = np.asarray(xi, dtype=float)
        z = xi @ self.a.T + self.b
        return np.sum(z * z, axis=-1) + self.c


@dataclass(frozen=True)
class CvarBounds:
    lower: float
    upper: float
    exact: float | None = None


def _check_dims(amb: MomentAmbiguitySet, a: np.ndarray) -> None:
    if a.shape[1] != amb.dimension:
        raise InvalidInputError(
            f"loss acts on dimension {a.shape[1]}, ambiguity set has dimension {amb.dimension}"
        )


def worst_case_cvar_bounds(amb: MomentAmbiguitySet, loss: QuadraticLoss) -> CvarBounds:
    _check_dims(amb, loss.a)
    eps = amb.level
    tr = float(np.trace(amb.covariance @ loss.a.T @ loss.a))
    btb = float(loss.b @ loss.b)
    lower = loss.c + btb + tr / eps
    upper = loss.c + (tr + btb) / eps
    exact = tr / eps if loss.is_centered else None
    return CvarBounds(lower=lower, upper=upper, exact=exact)


def worst_case_cvar_augmented(amb: MomentAmbiguitySet, horizon: int, a) -> float:
    """Exact worst-case CVaR of ``||a xi_bar||^2`` for ``horizon`` i.i.d. stacked copies of ``xi``."""
    if int(horizon) != horizon or horizon < 1:
        raise InvalidInputError(f"horizon must be a positive integer, got {horizon}")
    a = as_matrix(a, "a")
    n = amb.dimension
    if a.shape[1] != n * horizon:
        raise InvalidInputError(f"a has {a.shape[1]} columns, expected {n * horizon}")
    cov = np.kron(np.eye(int(horizon)), amb.covariance)
    return float(np.trace(cov @ a.T @ a)) / amb.level


def _check_level(level: float) -> float:
    level = float(level)
    if not 0.0 < level < 1.0:
        raise InvalidInputError(f"level must lie in (0, 1), got {level}")
    return level


def empirical_cvar(samples, level: float) -> float:
    """Sample CVaR: ``min_beta beta + mean((s - beta)^+) / level``.

    The objective is convex and piecewise linear with kinks at the samples, so
    evaluating it at every order statistic gives the exact minimum.
    """
    level = _check_level(level)
    s = np.sort(as_vector(samples, "samples"))
    n = s.size
    # tail[k] = sum_{j >= k} s_j
    tail = np.concatenate([np.cumsum(s[::-1])[::-1], [0.0]])
    idx = np.arange(n)
    # for beta = s_k: sum (s_j - beta)^+ = sum_{j > k} s_j - (n - k - 1) s_k (ties contribute 0)
    excess = tail[idx + 1] - (n - idx - 1) * s
    objective = s + excess / (level * n)
    return float(np.min(objective))


def empirical_var(samples, level: float) -> float:
    """Upper ``(1 - level)`` empirical quantile (a minimizer of the CVaR objective)."""
    level = _check_level(level)
    s = np.sort(as_vector(samples, "samples"))
    k = min(s.size - 1, max(0, math.ceil((1.0 - level) * s.size) - 1))
    return float(s[k])


def cvar_standard_error(samples, level: float) -> float:
    """Asymptotic standard error of :func:`empirical_cvar`.

    Uses ``sd((L - VaR)^+) / (level * sqrt(N))``; the VaR estimate does not
    contribute to first order because the objective is stationary there.
    """
    level = _check_level(level)
    s = as_vector(samples, "samples")
    if s.size < 2:
        return 0.0
    var = empirical_var(s, level)
    excess = np.maximum(s - var, 0.0)
    return float(np.std(excess, ddof=1) / (level * math.sqrt(s.size)))


@dataclass(frozen=True)
class CoherenceReport:
    positive_homogeneity: bool
    translation_invariance: bool
    subadditivity: bool
    monotonicity: bool
    details: dict = field(default_factory=dict)

    @property
    def all_hold(self) -> bool:
        return (
            self.positive_homogeneity
            and self.translation_invariance
            and self.subadditivity
            and self.monotonicity
        )


def coherence_check(
    amb: MomentAmbiguitySet,
    l1: QuadraticLoss,
    l2: QuadraticLoss,
    scale: float = 1.0,
    shift: float = 0.0,
    tol: float = 1e-9,
) -> CoherenceReport:
    """Check the four coherence axioms on the exact (centered) closed-form values.

    Sub-additivity uses the stacked matrix ``[a1; a2]``, whose squared norm is
    ``L1 + L2`` pointwise. Monotonicity is only tested when ``a1^T a1 <= a2^T a2``
    in the Loewner order; otherwise it holds vacuously.
    """
    if not (l1.is_centered and l2.is_centered):
        raise InvalidInputError("coherence_check needs losses with b = 0 and c = 0")
    _check_dims(amb, l1.a)
    _check_dims(amb, l2.a)
    if scale <= 0.0:
        raise InvalidInputError(f"scale must be positive, got {scale}")

    v1 = worst_case_cvar_bounds(amb, l1).exact
    v2 = worst_case_cvar_bounds(amb, l2).exact

    scaled = worst_case_cvar_bounds(amb, QuadraticLoss(math.sqrt(scale) * l1.a)).exact
    homogeneity = abs(scaled - scale * v1) <= tol * max(1.0, abs(scale * v1))

    shifted = worst_case_cvar_bounds(amb, QuadraticLoss(l1.a, c=shift))
    translation = abs(shifted.lower - (v1 + shift)) <= tol * max(1.0, abs(v1 + shift)) and abs(
        shifted.upper - (v1 + shift)
    ) <= tol * max(1.0, abs(v1 + shift))

    summed = worst_case_cvar_bounds(amb, QuadraticLoss(np.vstack([l1.a, l2.a]))).exact
    subadditive = summed <= v1 + v2 + tol

    gap = symmetric_eigvals(l2.a.T @ l2.a - l1.a.T @ l1.a)[0]
    ordered = gap >= -SYMMETRY_TOL * max(1.0, float(np.max(np.abs(l2.a.T @ l2.a))))
    monotone = (v1 <= v2 + tol) if ordered else True

    return CoherenceReport(
        positive_homogeneity=bool(homogeneity),
        translation_invariance=bool(translation),
        subadditivity=bool(subadditive),
        monotonicity=bool(monotone),
        details={"exact1": v1, "exact2": v2, "scaled": scaled, "sum": summed, "ordered": bool(ordered)},
    )
