"""Small dense real-matrix kernel.

Matrices are plain 2-D ``numpy`` float arrays; :func:`as_matrix` is the single
entry point that validates shape and finiteness. The eigen/singular value
routines are cyclic Jacobi iterations so the kernel does not depend on LAPACK
drivers for its core quantities (norms, ranks, PSD checks).
"""

from __future__ import annotations

import math

import numpy as np

from .errors import InvalidInputError, NotContractiveError

JACOBI_TOL = 1e-12
RANK_RTOL = 1e-10
KRON_MAX_DIM = 20
_MAX_SWEEPS = 100


def as_matrix(m, name: str = "matrix") -> np.ndarray:
    """Return ``m`` as a finite, non-empty 2-D float array (copy-free when possible)."""
    arr = np.asarray(m, dtype=float)
    if arr.ndim == 1:
        arr = arr.reshape(1, -1)
    if arr.ndim != 2:
        raise InvalidInputError(f"{name} must be 2-D, got shape {arr.shape}")
    if arr.shape[0] == 0 or arr.shape[1] == 0:
        raise InvalidInputError(f"{name} has a zero dimension: {arr.shape}")
    if not np.all(np.isfinite(arr)):
        raise InvalidInputError(f"{name} has non-finite entries")
    return arr


def as_vector(v, name: str = "vector") -> np.ndarray:
    arr = np.asarray(v, dtype=float).reshape(-1)
    if arr.size == 0:
        raise InvalidInputError(f"{name} is empty")
    if not np.all(np.isfinite(arr)):
        raise InvalidInputError(f"{name} has non-finite entries")
    return arr


def _require_square(m: np.ndarray, name: str) -> None:
    if m.shape[0] != m.shape[1]:
        raise InvalidInputError(f"{name} must be square, got {m.shape}")


def symmetric_eigh(s, tol: float = JACOBI_TOL) -> tuple[np.ndarray, np.ndarray]:
    """Eigen-decomposition of a symmetric matrix by cyclic Jacobi rotations.

    Returns ``(eigenvalues, eigenvectors)`` with eigenvalues in ascending order
    and eigenvectors as columns. Sweeps stop once the off-diagonal Frobenius
    mass drops below ``tol`` times the Frobenius norm of ``s``.
    """
    a = as_matrix(s, "symmetric matrix").copy()
    _require_square(a, "symmetric matrix")
    a = 0.5 * (a + a.T)
    n = a.shape[0]
    v = np.eye(n)
    scale = np.linalg.norm(a)
    if scale == 0.0:
        return np.zeros(n), v

    for _ in range(_MAX_SWEEPS):
        off = math.sqrt(max(np.sum(a * a) - np.sum(np.diag(a) ** 2), 0.0))
        if off <= tol * scale:
            break
        for p in range(n - 1):
            for q in range(p + 1, n):
                apq = a[p, q]
                if apq == 0.0:
                    continue
                diff = a[q, q] - a[p, p]
                if abs(apq) < 1e-36 * abs(diff):
                    t = apq / diff
                else:
                    theta = diff / (2.0 * apq)
                    t = math.copysign(1.0, theta) / (abs(theta) + math.hypot(1.0, theta))
                c = 1.0 / math.hypot(1.0, t)
                sn = t * c
                # rotate rows/cols p and q
                ap = a[:, p].copy()
                aq = a[:, q].copy()
                a[:, p] = c * ap - sn * aq
                a[:, q] = sn * ap + c * aq
                ap = a[p, :].copy()
                aq = a[q, :].copy()
                a[p, :] = c * ap - sn * aq
                a[q, :] = sn * ap + c * aq
                a[p, q] = a[q, p] = 0.0
                vp = v[:, p].copy()
                vq = v[:, q].copy()
                v[:, p] = c * vp - sn * vq
                v[:, q] = sn * vp + c * vq

    w = np.diag(a).copy()
    order = np.argsort(w)
    return w[order], v[:, order]


def symmetric_eigvals(s) -> np.ndarray:
    return symmetric_eigh(s)[0]


def singular_values(m, tol: float = JACOBI_TOL) -> np.ndarray:
    """Singular values in descending order.

    One-sided (Hestenes) Jacobi: columns of ``m`` are orthogonalized pairwise,
    which is the implicit form of Jacobi on ``m^T m`` without squaring the
    condition number, so small singular values stay accurate for rank tests.
    """
    u = as_matrix(m).copy()
    if u.shape[0] < u.shape[1]:
        u = u.T.copy()
    n = u.shape[1]
    for _ in range(_MAX_SWEEPS):
        rotated = False
        for i in range(n - 1):
            for j in range(i + 1, n):
                alpha = float(u[:, i] @ u[:, i])
                beta = float(u[:, j] @ u[:, j])
                gamma = float(u[:, i] @ u[:, j])
                if gamma == 0.0 or abs(gamma) <= tol * math.sqrt(alpha * beta):
                    continue
                rotated = True
                zeta = (beta - alpha) / (2.0 * gamma)
                t = math.copysign(1.0, zeta) / (abs(zeta) + math.hypot(1.0, zeta))
                c = 1.0 / math.hypot(1.0, t)
                s = c * t
                ui = u[:, i].copy()
                uj = u[:, j]
                u[:, i] = c * ui - s * uj
                u[:, j] = s * ui + c * uj
        if not rotated:
            break
    sv = np.sqrt(np.sum(u * u, axis=0))
    return np.sort(sv)[::-1]


def spectral_norm(m) -> float:
    """Largest singular value of ``m``."""
    return float(singular_values(m)[0])


def trace(m) -> float:
    m = as_matrix(m)
    _require_square(m, "trace argument")
    return float(np.trace(m))


def kron(x, y) -> np.ndarray:
    return np.kron(as_matrix(x, "x"), as_matrix(y, "y"))


def solve_discrete_lyapunov(a, q, method: str = "auto") -> np.ndarray:
    """Solve ``a P a^T - P + q = 0`` for a contractive ``a``.

    ``method`` is ``"kron"`` (vectorized linear solve, the default up to
    ``KRON_MAX_DIM``), ``"doubling"`` (squared Smith iteration) or ``"auto"``.
    The result is symmetrized.
    """
    a = as_matrix(a, "a")
    q = as_matrix(q, "q")
    _require_square(a, "a")
    _require_square(q, "q")
    if a.shape != q.shape:
        raise InvalidInputError(f"dimension mismatch: a {a.shape}, q {q.shape}")
    norm_a = spectral_norm(a)
    if norm_a >= 1.0:
        raise NotContractiveError(f"||a|| = {norm_a:.6g} >= 1")
    n = a.shape[0]
    if method == "auto":
        method = "kron" if n <= KRON_MAX_DIM else "doubling"

    if method == "kron":
        # row-major vec: vec(a P a^T) = (a kron a) vec(P)
        lhs = np.eye(n * n) - np.kron(a, a)
        p = np.linalg.solve(lhs, q.reshape(-1)).reshape(n, n)
    elif method == "doubling":
        p = q.copy()
        ak = a.copy()
        for _ in range(64):
            step = ak @ p @ ak.T
            p = p + step
            ak = ak @ ak
            if np.linalg.norm(step) <= 1e-17 * (1.0 + np.linalg.norm(p)):
                break
    else:
        raise InvalidInputError(f"unknown Lyapunov method {method!r}")
    return 0.5 * (p + p.T)


def controllability_matrix(a, e) -> np.ndarray:
    a = as_matrix(a, "a")
    e = as_matrix(e, "e")
    _require_square(a, "a")
    if e.shape[0] != a.shape[0]:
        raise InvalidInputError(f"dimension mismatch: a {a.shape}, e {e.shape}")
    blocks = [e]
    for _ in range(a.shape[0] - 1):
        blocks.append(a @ blocks[-1])
    return np.hstack(blocks)


def reachability_rank(a, e) -> int:
    """Numerical rank of ``[e, a e, ..., a^{n-1} e]`` (relative threshold 1e-10)."""
    sv = singular_values(controllability_matrix(a, e))
    if sv[0] == 0.0:
        return 0
    return int(np.sum(sv > RANK_RTOL * sv[0]))
