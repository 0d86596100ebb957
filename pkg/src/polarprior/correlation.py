"""Stationary correlation-matrix families on a one-dimensional grid.

Entries are Omega[i, j] = C(spacing * |i - j|) for one of four correlation
functions: power (rho^d), squared exponential, Matern, and a banded
truncation of any of those.  The identity family is included as the
no-dependence case.  These matrices induce row dependence (smoothness) in
the latent matrix and hence in its Stiefel projection.
"""

from __future__ import annotations

import csv
import io
import threading
from dataclasses import dataclass, field
from typing import Optional

import numpy as np
from scipy.special import gammaln, kv

from .exceptions import DomainError, NotPsd, NumericOverflow, NumericUnderflow

FAMILIES = ("identity", "power", "squared_exponential", "matern", "banded")

# Constructed matrices may have slightly negative eigenvalues from roundoff;
# anything below this is treated as a genuine PSD failure.
_PSD_TOL = -1e-8
_BANDED_PSD_TOL = -1e-6


def bessel_k(nu: float, x: float) -> float:
    """Modified Bessel function of the second kind K_nu(x), nu > 0, x > 0.

    Raises on overflow (large nu / small x) and on underflow to zero
    (large x), rather than returning inf or 0 silently.
    """
    if not (nu > 0.0):
        raise DomainError(f"nu must be > 0, got {nu}")
    if not (x > 0.0):
        raise DomainError(f"x must be > 0, got {x}")
    val = float(kv(nu, x))
    if not np.isfinite(val):
        raise NumericOverflow(f"K_{nu}({x}) overflows double precision")
    if val == 0.0:
        raise NumericUnderflow(f"K_{nu}({x}) underflows to zero")
    return val


def _log_matern_mpmath(u: np.ndarray, nu: float) -> np.ndarray:
    """log C as a function of the scaled argument u, in arbitrary precision.

    Fallback for large nu where the double-precision route overflows.
    """
    import mpmath

    out = np.empty(u.shape)
    for i, ui in np.ndenumerate(u):
        logc = (
            (1.0 - nu) * mpmath.log(2)
            - mpmath.loggamma(nu)
            + nu * mpmath.log(ui)
            + mpmath.log(mpmath.besselk(nu, ui))
        )
        out[i] = float(logc)
    return out


def matern_corr(d, rho: float, nu: float):
    """Matern correlation C(d) = 2^(1-nu)/Gamma(nu) (sqrt(2 nu) d/rho)^nu K_nu(...).

    C(0) = 1 by the limit convention.  Vectorized over d.
    """
    if not (rho > 0.0) or not (nu > 0.0):
        raise DomainError(f"rho and nu must be > 0, got rho={rho}, nu={nu}")
    d = np.asarray(d, dtype=float)
    if np.any(d < 0.0):
        raise DomainError("distances must be >= 0")
    scalar = d.ndim == 0
    d = np.atleast_1d(d)
    out = np.ones_like(d)
    pos = d > 0.0
    if np.any(pos):
        u = np.sqrt(2.0 * nu) * d[pos] / rho
        with np.errstate(over="ignore", invalid="ignore", under="ignore"):
            logc = (1.0 - nu) * np.log(2.0) - gammaln(nu) + nu * np.log(u)
            vals = np.exp(logc) * kv(nu, u)
        bad = ~np.isfinite(vals)
        if np.any(bad):
            # kv overflows for large nu at small u; redo those points in
            # arbitrary precision on the log scale.
            vals[bad] = np.exp(_log_matern_mpmath(u[bad], nu))
        out[pos] = vals
    return float(out[0]) if scalar else out


@dataclass(frozen=True)
class CorrelationMatrix:
    """A p x p unit-diagonal correlation matrix with its construction tag."""

    entries: np.ndarray
    family: str
    rho: Optional[float] = None
    nu: Optional[float] = None
    tau: Optional[int] = None
    spacing: float = 1.0
    _sqrt_cache: dict = field(
        default_factory=dict, repr=False, compare=False, hash=False
    )
    _lock: threading.Lock = field(
        default_factory=threading.Lock, repr=False, compare=False, hash=False
    )

    def __post_init__(self):
        m = np.asarray(self.entries, dtype=float)
        if m.ndim != 2 or m.shape[0] != m.shape[1]:
            raise DomainError(f"correlation matrix must be square, got {m.shape}")
        if np.max(np.abs(np.diag(m) - 1.0)) > 1e-12:
            raise DomainError("correlation matrix must have unit diagonal")
        if np.max(np.abs(m - m.T)) > 1e-12:
            raise DomainError("correlation matrix must be symmetric")
        object.__setattr__(self, "entries", m)

    @property
    def p(self) -> int:
        return self.entries.shape[0]

    def sqrt(self) -> np.ndarray:
        """Symmetric PSD square root, computed once and cached (thread safe).

        Smooth kernels are often singular to machine precision, so
        eigenvalues in the roundoff band [-1e-8, 0) are clipped to zero;
        anything more negative is a genuine PSD failure.
        """
        with self._lock:
            if "sqrt" not in self._sqrt_cache:
                w, v = np.linalg.eigh(self.entries)
                if w[0] < _PSD_TOL * max(w[-1], 1.0):
                    raise NotPsd(f"min eigenvalue {w[0]:.3e} below roundoff tolerance")
                w = np.clip(w, 0.0, None)
                self._sqrt_cache["sqrt"] = (v * np.sqrt(w)) @ v.T
            return self._sqrt_cache["sqrt"]

    def to_csv(self, path) -> None:
        """Write the dense entries as header-free row-major CSV."""
        with open(path, "w", newline="") as fh:
            writer = csv.writer(fh)
            for row in self.entries:
                writer.writerow([repr(float(v)) for v in row])

    @classmethod
    def from_csv(cls, path) -> "CorrelationMatrix":
        """Read a dense header-free CSV written by :meth:`to_csv`."""
        with open(path, newline="") as fh:
            rows = [[float(v) for v in row] for row in csv.reader(fh) if row]
        return cls(entries=np.array(rows), family="custom")


def correlation_matrix(
    family: str,
    p: int,
    rho: Optional[float] = None,
    nu: Optional[float] = None,
    tau: Optional[int] = None,
    spacing: float = 1.0,
    banded_family: Optional[str] = None,
) -> CorrelationMatrix:
    """Build a correlation matrix from one of the supported families.

    family one of ``identity``, ``power``, ``squared_exponential``,
    ``matern``, ``banded``; ``banded`` truncates ``banded_family`` at
    bandwidth ``tau`` and rejects the result if truncation destroys
    positive semi-definiteness.
    """
    if family not in FAMILIES:
        raise DomainError(f"unknown family {family!r}; expected one of {FAMILIES}")
    if p < 1:
        raise DomainError(f"p must be >= 1, got {p}")
    if not (spacing > 0.0):
        raise DomainError(f"spacing must be > 0, got {spacing}")

    if family == "identity":
        return CorrelationMatrix(np.eye(p), family="identity", spacing=spacing)

    if family == "banded":
        if tau is None or not (0 <= tau < p):
            raise DomainError(f"bandwidth tau must satisfy 0 <= tau < p, got {tau}")
        inner = banded_family or "power"
        if inner == "banded" or inner not in FAMILIES or inner == "identity":
            raise DomainError(f"invalid inner family for banding: {inner!r}")
        base = correlation_matrix(inner, p, rho=rho, nu=nu, spacing=spacing)
        idx = np.arange(p)
        mask = np.abs(idx[:, None] - idx[None, :]) <= tau
        m = np.where(mask, base.entries, 0.0)
        min_eig = np.linalg.eigvalsh(m)[0]
        if min_eig < _BANDED_PSD_TOL:
            raise NotPsd(
                f"banding {inner} at tau={tau} loses positive semi-definiteness "
                f"(min eigenvalue {min_eig:.3e})"
            )
        return CorrelationMatrix(
            m, family="banded", rho=rho, nu=nu, tau=tau, spacing=spacing
        )

    idx = np.arange(p, dtype=float)
    d = spacing * np.abs(idx[:, None] - idx[None, :])
    if family == "power":
        if rho is None or not (0.0 < rho < 1.0):
            raise DomainError(f"power family needs rho in (0, 1), got {rho}")
        m = rho**d
    elif family == "squared_exponential":
        if rho is None or not (rho > 0.0):
            raise DomainError(f"squared exponential needs rho > 0, got {rho}")
        m = np.exp(-0.5 * d**2 / rho**2)
    else:  # matern
        if rho is None or not (rho > 0.0):
            raise DomainError(f"matern needs rho > 0, got {rho}")
        if nu is None or not (nu > 0.0):
            raise DomainError(f"matern needs nu > 0, got {nu}")
        # Only p distinct lags; evaluate each once.
        lags = spacing * np.arange(p, dtype=float)
        vals = matern_corr(lags, rho, nu)
        m = vals[np.abs(np.arange(p)[:, None] - np.arange(p)[None, :])]

    np.fill_diagonal(m, 1.0)
    m = 0.5 * (m + m.T)
    min_eig = np.linalg.eigvalsh(m)[0]
    if min_eig < _PSD_TOL:
        raise NotPsd(f"{family} matrix has min eigenvalue {min_eig:.3e}")
    return CorrelationMatrix(m, family=family, rho=rho, nu=nu, spacing=spacing)


def se_correlation_with_gradient(
    p: int, rho: float, spacing: float = 1.0
) -> tuple[np.ndarray, np.ndarray]:
    """Squared-exponential matrix and its elementwise derivative in rho.

    d/drho exp(-d^2/(2 rho^2)) = exp(-d^2/(2 rho^2)) * d^2 / rho^3.
    Used by models that treat the length scale as a free parameter.
    """
    if not (rho > 0.0):
        raise DomainError(f"rho must be > 0, got {rho}")
    idx = np.arange(p, dtype=float)
    d2 = (spacing * (idx[:, None] - idx[None, :])) ** 2
    omega = np.exp(-0.5 * d2 / rho**2)
    return omega, omega * d2 / rho**3
