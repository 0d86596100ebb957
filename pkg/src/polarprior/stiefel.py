"""Polar projection onto the Stiefel manifold and SPD functional calculus.

The Stiefel manifold V(k, p) is the set of p x k real matrices with
orthonormal columns.  Every full-column-rank X factors uniquely as
X = Q * S^{1/2} with Q in V(k, p) and S = X^T X symmetric positive
definite; Q is the Frobenius-closest point of V(k, p) to X.  This
module computes that factorization, the symmetric square root and
inverse square root it relies on, and the exact chain rule through the
projection X -> Q(X) = X (X^T X)^{-1/2} needed by gradient-based MCMC.

All functions are pure and safe to call concurrently.
"""

from __future__ import annotations

from typing import Callable, NamedTuple

import numpy as np

from .exceptions import DimensionMismatch, NotPositiveDefinite, RankDeficient

# Relative singular-value cutoff below which a matrix is treated as rank
# deficient (the factorization is then numerically undefined).
RANK_TOL = 1e-10

# Eigenvalue gaps below this fraction of the largest eigenvalue use the
# pointwise derivative instead of a divided difference, avoiding
# catastrophic cancellation in the Daleckii-Krein table.
_GAP_TOL = 1e-8


class PolarFactors(NamedTuple):
    """Result of :func:`polar_project`: x = q @ s_sqrt."""

    q: np.ndarray
    s_sqrt: np.ndarray


def check_semi_orthogonal(q: np.ndarray, tol: float = 1e-10) -> np.ndarray:
    """Validate that q has orthonormal columns within ``tol`` (max-abs norm)."""
    q = np.asarray(q, dtype=float)
    if q.ndim != 2 or q.shape[0] < q.shape[1] or q.shape[1] < 1:
        raise DimensionMismatch(f"expected p x k with p >= k >= 1, got {q.shape}")
    gram = q.T @ q
    err = np.max(np.abs(gram - np.eye(q.shape[1])))
    if err > tol:
        raise NotPositiveDefinite(
            f"columns are not orthonormal: max |Q^T Q - I| = {err:.3e} > {tol:.1e}"
        )
    return q


def _check_spd(s: np.ndarray, sym_tol: float = 1e-12) -> np.ndarray:
    s = np.asarray(s, dtype=float)
    if s.ndim != 2 or s.shape[0] != s.shape[1]:
        raise DimensionMismatch(f"expected a square matrix, got {s.shape}")
    scale = max(np.max(np.abs(s)), 1.0)
    asym = np.max(np.abs(s - s.T))
    if asym > sym_tol * scale:
        raise NotPositiveDefinite(f"matrix is not symmetric: max asymmetry {asym:.3e}")
    return 0.5 * (s + s.T)


def _eigh_spd(s: np.ndarray) -> tuple[np.ndarray, np.ndarray]:
    """Eigendecompose an SPD matrix, rejecting non-positive spectra."""
    s = _check_spd(s)
    w, v = np.linalg.eigh(s)
    k = s.shape[0]
    if w[0] <= 1e-12 * k * max(w[-1], 0.0):
        raise NotPositiveDefinite(
            f"matrix is not positive definite: min eigenvalue {w[0]:.3e}"
        )
    return w, v


def sqrt_spd(s: np.ndarray) -> np.ndarray:
    """Symmetric square root of an SPD matrix via eigendecomposition."""
    w, v = _eigh_spd(s)
    return (v * np.sqrt(w)) @ v.T


def inv_sqrt_spd(s: np.ndarray) -> np.ndarray:
    """Symmetric inverse square root of an SPD matrix."""
    w, v = _eigh_spd(s)
    return (v / np.sqrt(w)) @ v.T


def polar_project(x: np.ndarray) -> PolarFactors:
    """Project a full-column-rank matrix onto the Stiefel manifold.

    Returns ``PolarFactors(q, s_sqrt)`` with ``q`` the Frobenius-closest
    matrix with orthonormal columns and ``s_sqrt`` the symmetric square
    root of ``x.T @ x``, so that ``q @ s_sqrt`` reconstructs ``x``.
    """
    x = np.asarray(x, dtype=float)
    if x.ndim != 2 or x.shape[0] < x.shape[1] or x.shape[1] < 1:
        raise DimensionMismatch(f"expected p x k with p >= k >= 1, got {x.shape}")
    if not np.all(np.isfinite(x)):
        raise RankDeficient("input contains non-finite entries")
    try:
        u, sv, vt = np.linalg.svd(x, full_matrices=False)
    except np.linalg.LinAlgError as exc:
        raise RankDeficient("singular value decomposition failed") from exc
    if not np.all(np.isfinite(sv)) or sv[-1] <= RANK_TOL * sv[0] or sv[0] == 0.0:
        raise RankDeficient(
            f"smallest/largest singular value ratio {sv[-1]:.3e}/{sv[0]:.3e} "
            f"below {RANK_TOL:.1e}"
        )
    q = u @ vt
    s_sqrt = (vt.T * sv) @ vt
    return PolarFactors(q=q, s_sqrt=s_sqrt)


def frechet_inv_sqrt(s: np.ndarray, e: np.ndarray) -> np.ndarray:
    """Directional derivative of s -> s^{-1/2} at ``s`` in direction ``e``.

    Uses the Daleckii-Krein divided-difference table on the eigenbasis of
    ``s``; ``e`` must be symmetric.  Near-degenerate eigenvalue pairs fall
    back to the pointwise derivative -lambda^{-3/2}/2.
    """
    w, v = _eigh_spd(s)
    e = np.asarray(e, dtype=float)
    if e.shape != s.shape:
        raise DimensionMismatch(f"direction shape {e.shape} != matrix shape {s.shape}")
    h = 1.0 / np.sqrt(w)
    table = _divided_difference(w, h, lambda lam: -0.5 * lam ** (-1.5))
    et = v.T @ (0.5 * (e + e.T)) @ v
    return v @ (table * et) @ v.T


def frechet_sqrt(s: np.ndarray, e: np.ndarray) -> np.ndarray:
    """Directional derivative of s -> s^{1/2}, same scheme as frechet_inv_sqrt."""
    w, v = _eigh_spd(s)
    e = np.asarray(e, dtype=float)
    if e.shape != s.shape:
        raise DimensionMismatch(f"direction shape {e.shape} != matrix shape {s.shape}")
    h = np.sqrt(w)
    table = _divided_difference(w, h, lambda lam: 0.5 / np.sqrt(lam))
    et = v.T @ (0.5 * (e + e.T)) @ v
    return v @ (table * et) @ v.T


def _divided_difference(
    w: np.ndarray, h: np.ndarray, deriv: Callable[[np.ndarray], np.ndarray]
) -> np.ndarray:
    """Daleckii-Krein first divided differences of h over eigenvalues w."""
    gap = w[:, None] - w[None, :]
    degenerate = np.abs(gap) < _GAP_TOL * max(w[-1], 1e-300)
    num = h[:, None] - h[None, :]
    table = np.where(degenerate, 0.0, num) / np.where(degenerate, 1.0, gap)
    dvals = deriv(w)
    return np.where(degenerate, 0.5 * (dvals[:, None] + dvals[None, :]), table)


def polar_pullback_grad(x: np.ndarray, grad_q: np.ndarray) -> np.ndarray:
    """Pull a gradient in Q back through the projection Q(X) = X (X^T X)^{-1/2}.

    Given ``grad_q`` = dg/dQ evaluated at Q(x), returns dg(Q(X))/dX.  The
    differential is dQ = dX S^{-1/2} + X d(S^{-1/2}) with S = X^T X; the
    adjoint of the second term runs through :func:`frechet_inv_sqrt`.
    """
    x = np.asarray(x, dtype=float)
    grad_q = np.asarray(grad_q, dtype=float)
    if grad_q.shape != x.shape:
        raise DimensionMismatch(f"gradient shape {grad_q.shape} != input shape {x.shape}")
    if not np.all(np.isfinite(x)):
        raise RankDeficient("input contains non-finite entries")
    try:
        sv = np.linalg.svd(x, compute_uv=False)
    except np.linalg.LinAlgError as exc:
        raise RankDeficient("singular value decomposition failed") from exc
    if not np.all(np.isfinite(sv)) or sv[-1] <= RANK_TOL * sv[0] or sv[0] == 0.0:
        raise RankDeficient("input is numerically rank deficient")
    s = x.T @ x
    m = x.T @ grad_q
    sym_m = 0.5 * (m + m.T)
    return grad_q @ inv_sqrt_spd(s) + 2.0 * (x @ frechet_inv_sqrt(s, sym_m))
