"""Constraint transforms between constrained parameters and R^n.

HMC runs on unconstrained coordinates; each parameter block declares a
constraint (none, positive, or a bounded interval) and the corresponding
smooth bijection.  Log densities stated on the constrained scale pick up
the log absolute Jacobian of the map u -> value automatically through
:class:`TransformedDensity`.
"""

from __future__ import annotations

from dataclasses import dataclass, field
from typing import Callable, Optional, Sequence

import numpy as np

from .exceptions import DomainError


class Constraint:
    """Bijection between an open subset of R and R (elementwise)."""

    name = "none"

    def to_unconstrained(self, value):
        return np.asarray(value, dtype=float)

    def to_constrained(self, u):
        return np.asarray(u, dtype=float)

    def constrain_with_jacobian(self, u):
        """Return (value, d value/d u, log|d value/d u|, d log-jac/d u)."""
        u = np.asarray(u, dtype=float)
        ones = np.ones_like(u)
        return u, ones, np.zeros_like(u), np.zeros_like(u)


class Positive(Constraint):
    """value = exp(u) for value > 0."""

    name = "positive"

    def to_unconstrained(self, value):
        value = np.asarray(value, dtype=float)
        if np.any(value <= 0.0):
            raise DomainError("positive constraint violated")
        return np.log(value)

    def to_constrained(self, u):
        return np.exp(np.asarray(u, dtype=float))

    def constrain_with_jacobian(self, u):
        u = np.asarray(u, dtype=float)
        v = np.exp(u)
        return v, v, u.copy(), np.ones_like(u)


@dataclass(frozen=True)
class Interval(Constraint):
    """value = a + (b - a) * expit(u) for value in (a, b)."""

    a: float
    b: float
    name: str = "interval"

    def __post_init__(self):
        if not self.a < self.b:
            raise DomainError(f"interval needs a < b, got ({self.a}, {self.b})")

    def to_unconstrained(self, value):
        value = np.asarray(value, dtype=float)
        if np.any(value <= self.a) or np.any(value >= self.b):
            raise DomainError(f"value outside open interval ({self.a}, {self.b})")
        t = (value - self.a) / (self.b - self.a)
        return np.log(t) - np.log1p(-t)

    def to_constrained(self, u):
        u = np.asarray(u, dtype=float)
        return self.a + (self.b - self.a) * _expit(u)

    def constrain_with_jacobian(self, u):
        u = np.asarray(u, dtype=float)
        s = _expit(u)
        width = self.b - self.a
        v = self.a + width * s
        dv = width * s * (1.0 - s)
        logj = np.log(width) + np.log(s) + np.log1p(-s)
        return v, dv, logj, 1.0 - 2.0 * s


def _expit(u):
    out = np.empty_like(u)
    pos = u >= 0
    out[pos] = 1.0 / (1.0 + np.exp(-u[pos]))
    eu = np.exp(u[~pos])
    out[~pos] = eu / (1.0 + eu)
    return out


def to_unconstrained(value, constraint: Constraint):
    """Map a constrained value to R, returning (u, log|d value/d u| at u)."""
    u = constraint.to_unconstrained(value)
    _, _, logj, _ = constraint.constrain_with_jacobian(np.asarray(u, dtype=float))
    if np.ndim(value) == 0:
        return float(np.asarray(u)), float(np.sum(logj))
    return u, float(np.sum(logj))


def to_constrained(u, constraint: Constraint):
    v = constraint.to_constrained(np.asarray(u, dtype=float))
    return float(v) if np.ndim(u) == 0 else v


@dataclass(frozen=True)
class ParameterBlock:
    """A named, shaped parameter with its constraint."""

    name: str
    shape: tuple[int, ...]
    constraint: Constraint = field(default_factory=Constraint)

    def __post_init__(self):
        if any(s < 1 for s in self.shape):
            raise DomainError(f"block {self.name!r} has non-positive shape {self.shape}")

    @property
    def size(self) -> int:
        return int(np.prod(self.shape)) if self.shape else 1


class BlockLayout:
    """Pack/unpack a list of parameter blocks into a flat vector."""

    def __init__(self, blocks: Sequence[ParameterBlock]):
        self.blocks = list(blocks)
        names = [b.name for b in self.blocks]
        if len(set(names)) != len(names):
            raise DomainError(f"duplicate block names in {names}")
        self.dim = sum(b.size for b in self.blocks)
        self._offsets = {}
        off = 0
        for b in self.blocks:
            self._offsets[b.name] = (off, off + b.size)
            off += b.size

    def slice_of(self, name: str) -> slice:
        lo, hi = self._offsets[name]
        return slice(lo, hi)

    def pack(self, values: dict) -> np.ndarray:
        out = np.empty(self.dim)
        for b in self.blocks:
            out[self.slice_of(b.name)] = np.asarray(values[b.name], dtype=float).ravel()
        return out

    def unpack(self, vec: np.ndarray) -> dict:
        return {
            b.name: np.asarray(vec[self.slice_of(b.name)]).reshape(b.shape)
            for b in self.blocks
        }

    def flat_names(self) -> list[str]:
        names = []
        for b in self.blocks:
            if b.size == 1:
                names.append(b.name)
            else:
                for idx in np.ndindex(b.shape):
                    names.append(b.name + "." + ".".join(str(i) for i in idx))
        return names


@dataclass
class ModelPosterior:
    """Unconstrained log density with gradient, plus its block layout.

    ``logpdf_grad`` maps a flat unconstrained vector to (value, gradient)
    inclusive of all constraint-transform Jacobians.
    """

    blocks: list[ParameterBlock]
    logpdf_grad: Callable[[np.ndarray], tuple[float, np.ndarray]]
    initializer: Optional[Callable[[np.random.Generator], np.ndarray]] = None

    def __post_init__(self):
        self.layout = BlockLayout(self.blocks)

    @property
    def dim(self) -> int:
        return self.layout.dim

    def constrain(self, u: np.ndarray) -> dict:
        vals = self.layout.unpack(np.asarray(u, dtype=float))
        return {
            b.name: b.constraint.to_constrained(vals[b.name]) for b in self.blocks
        }

    def constrain_vector(self, u: np.ndarray) -> np.ndarray:
        c = self.constrain(u)
        return self.layout.pack(c)

    def unconstrain(self, values: dict) -> np.ndarray:
        u = {
            b.name: b.constraint.to_unconstrained(values[b.name]) for b in self.blocks
        }
        return self.layout.pack(u)


class TransformedDensity:
    """Build a ModelPosterior from a density stated on the constrained scale.

    ``logp`` maps a dict of constrained block values to
    (value, dict of gradients on the constrained scale); this wrapper adds
    the transform log-Jacobians and chain rules the gradients to R^n.
    """

    def __init__(self, blocks: Sequence[ParameterBlock], logp, initializer=None):
        self.blocks = list(blocks)
        self.layout = BlockLayout(self.blocks)
        self.logp = logp
        self.initializer = initializer

    def build(self) -> ModelPosterior:
        blocks = self.blocks
        layout = self.layout
        logp = self.logp

        def logpdf_grad(u_vec: np.ndarray) -> tuple[float, np.ndarray]:
            u = layout.unpack(np.asarray(u_vec, dtype=float))
            values = {}
            dv = {}
            logjac = 0.0
            dlogjac = {}
            for b in blocks:
                v, d, lj, dlj = b.constraint.constrain_with_jacobian(u[b.name])
                values[b.name] = v
                dv[b.name] = d
                logjac += float(np.sum(lj))
                dlogjac[b.name] = dlj
            value, grads = logp(values)
            total = value + logjac
            grad_u = {
                b.name: np.asarray(grads[b.name]) * dv[b.name] + dlogjac[b.name]
                for b in blocks
            }
            return total, layout.pack(grad_u)

        return ModelPosterior(
            blocks=list(blocks), logpdf_grad=logpdf_grad, initializer=self.initializer
        )
