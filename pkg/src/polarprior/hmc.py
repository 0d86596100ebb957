"""Hamiltonian Monte Carlo on unconstrained parameter vectors.

A plain HMC sampler with Stoermer-Verlet (leapfrog) trajectories,
dual-averaging step-size adaptation toward a target acceptance rate, a
jittered fixed path length (uniform over [0.5 L, 1.5 L] with L set so
stepsize * L is about one unit of integration time), and an optional
diagonal mass matrix estimated from the second half of warmup.  Chains
are seeded independently from the master seed and may run concurrently;
draws are reported on the constrained scale.

The module also provides the parameter-expansion glue for densities on
the Stiefel manifold: sampling runs on the unconstrained matrix X and the
likelihood sees Q(X) = X (X^T X)^{-1/2}, with gradients pulled back
through the projection.
"""

from __future__ import annotations

import json
from concurrent.futures import ThreadPoolExecutor
from dataclasses import dataclass, field
from typing import Callable, Optional

import numpy as np

from .diagnostics import diagnostics as _diagnostics
from .exceptions import (
    AllDivergent,
    DomainError,
    GradientAuditFailed,
    NotPositiveDefinite,
    RankDeficient,
)
from .stiefel import polar_project, polar_pullback_grad
from .transforms import ModelPosterior, ParameterBlock

# Trajectories with an energy error beyond this are divergent and rejected.
DIVERGENCE_ENERGY = 1000.0


@dataclass(frozen=True)
class HmcConfig:
    warmup: int = 1000
    draws: int = 1000
    chains: int = 4
    target_accept: float = 0.8
    max_leapfrog: int = 1024
    seed: int = 0
    init_stepsize: float = 0.1
    mass: str = "unit"  # "unit" | "diagonal"
    init_scale: float = np.sqrt(0.1)

    def __post_init__(self):
        if self.warmup < 1 or self.draws < 1 or self.chains < 1:
            raise DomainError("warmup, draws, and chains must be >= 1")
        if not (0.0 < self.target_accept < 1.0):
            raise DomainError("target_accept must lie in (0, 1)")
        if self.mass not in ("unit", "diagonal"):
            raise DomainError(f"mass must be 'unit' or 'diagonal', got {self.mass!r}")


@dataclass
class ChainOutput:
    """Posterior draws (constrained scale) with sampler diagnostics."""

    draws: np.ndarray  # (chains * draws, dim)
    chain_draws: np.ndarray  # (chains, draws, dim)
    names: list[str]
    accept_rate: float
    stepsize: np.ndarray  # per-chain adapted step size
    stepsize_trace: np.ndarray  # (chains, warmup)
    divergence_count: int
    ess: Optional[np.ndarray]
    split_rhat: Optional[np.ndarray]
    config: HmcConfig

    def __post_init__(self):
        if not (0.0 <= self.accept_rate <= 1.0):
            raise DomainError("acceptance rate outside [0, 1]")

    def column(self, name: str) -> np.ndarray:
        return self.draws[:, self.names.index(name)]

    def block(self, prefix: str) -> np.ndarray:
        idx = [
            i
            for i, n in enumerate(self.names)
            if n == prefix or n.startswith(prefix + ".")
        ]
        return self.draws[:, idx]

    def summary(self) -> dict:
        """Per-parameter mean/sd/quantiles with convergence diagnostics."""
        qs = np.percentile(self.draws, [5, 25, 50, 75, 95], axis=0)
        out = {}
        for j, name in enumerate(self.names):
            out[name] = {
                "mean": float(self.draws[:, j].mean()),
                "sd": float(self.draws[:, j].std(ddof=1)),
                "q5": float(qs[0, j]),
                "q25": float(qs[1, j]),
                "median": float(qs[2, j]),
                "q75": float(qs[3, j]),
                "q95": float(qs[4, j]),
                "ess": float(self.ess[j]) if self.ess is not None else None,
                "split_rhat": (
                    float(self.split_rhat[j]) if self.split_rhat is not None else None
                ),
            }
        return out

    def to_csv(self, path) -> None:
        """One row per draw (chain-major), header = flattened parameter names."""
        header = ",".join(self.names)
        with open(path, "w", newline="") as fh:
            fh.write(header + "\n")
            for row in self.draws:
                fh.write(",".join(repr(float(v)) for v in row) + "\n")

    def diagnostics_jsonl(self, path) -> None:
        """JSON-lines sidecar: one record per chain plus one summary record."""
        with open(path, "w") as fh:
            for c in range(self.chain_draws.shape[0]):
                rec = {
                    "record": "chain",
                    "chain": c,
                    "draws": int(self.chain_draws.shape[1]),
                    "stepsize": float(self.stepsize[c]),
                }
                fh.write(json.dumps(rec) + "\n")
            summary = {
                "record": "summary",
                "accept_rate": self.accept_rate,
                "divergence_count": int(self.divergence_count),
                "ess": None if self.ess is None else [float(v) for v in self.ess],
                "split_rhat": (
                    None
                    if self.split_rhat is None
                    else [float(v) for v in self.split_rhat]
                ),
                "names": self.names,
            }
            fh.write(json.dumps(summary) + "\n")


def leapfrog(
    q: np.ndarray,
    p_mom: np.ndarray,
    stepsize: float,
    nsteps: int,
    grad_fn: Callable[[np.ndarray], np.ndarray],
    inv_mass: Optional[np.ndarray] = None,
) -> tuple[np.ndarray, np.ndarray]:
    """Stoermer-Verlet integration of Hamilton's equations.

    ``grad_fn`` returns the gradient of the log density (so the force on
    the momentum is +grad).  Reversible: negating the returned momentum
    and integrating again returns the start to roundoff.
    """
    if stepsize <= 0.0 or nsteps < 1:
        raise DomainError("stepsize must be > 0 and nsteps >= 1")
    q = np.array(q, dtype=float)
    p_mom = np.array(p_mom, dtype=float)
    scale = 1.0 if inv_mass is None else inv_mass
    p_mom = p_mom + 0.5 * stepsize * grad_fn(q)
    for step in range(nsteps):
        q = q + stepsize * (scale * p_mom)
        g = grad_fn(q)
        if step != nsteps - 1:
            p_mom = p_mom + stepsize * g
    p_mom = p_mom + 0.5 * stepsize * g
    return q, p_mom


class DualAveraging:
    """Nesterov dual averaging of log step size toward a target acceptance."""

    def __init__(self, init_stepsize, target, gamma=0.05, t0=10.0, kappa=0.75):
        self.mu = np.log(10.0 * init_stepsize)
        self.target = target
        self.gamma = gamma
        self.t0 = t0
        self.kappa = kappa
        self.log_eps = np.log(init_stepsize)
        self.log_eps_bar = 0.0
        self.h_bar = 0.0
        self.t = 0

    def update(self, accept_prob: float) -> float:
        self.t += 1
        eta = 1.0 / (self.t + self.t0)
        self.h_bar = (1.0 - eta) * self.h_bar + eta * (self.target - accept_prob)
        self.log_eps = self.mu - self.h_bar * np.sqrt(self.t) / self.gamma
        w = self.t ** (-self.kappa)
        self.log_eps_bar = w * self.log_eps + (1.0 - w) * self.log_eps_bar
        return float(np.exp(self.log_eps))

    @property
    def adapted_stepsize(self) -> float:
        return float(np.exp(self.log_eps_bar))


def gradient_audit(
    model: ModelPosterior,
    point: np.ndarray,
    n_coords: int = 10,
    rel_tol: float = 1e-4,
    rng: Optional[np.random.Generator] = None,
) -> float:
    """Check the model gradient against central finite differences.

    Raises GradientAuditFailed when any probed coordinate disagrees
    beyond ``rel_tol`` relative error; returns the worst error seen.
    """
    rng = rng or np.random.default_rng(0)
    _, grad = model.logpdf_grad(point)
    dim = len(point)
    coords = rng.permutation(dim)[: min(n_coords, dim)]
    worst = 0.0
    for j in coords:
        h = 1e-5 * max(1.0, abs(point[j]))
        xp = point.copy()
        xp[j] += h
        xm = point.copy()
        xm[j] -= h
        fp, _ = model.logpdf_grad(xp)
        fm, _ = model.logpdf_grad(xm)
        fd = (fp - fm) / (2.0 * h)
        err = abs(grad[j] - fd) / max(abs(grad[j]), abs(fd), 1e-8)
        worst = max(worst, err)
        if err > rel_tol:
            raise GradientAuditFailed(
                f"gradient mismatch at coordinate {j}: analytic {grad[j]:.6g}, "
                f"finite difference {fd:.6g}, rel err {err:.2e}"
            )
    return worst


def estimate_diagonal_inv_mass(
    model: ModelPosterior, point: np.ndarray, h: float = 1e-4
) -> np.ndarray:
    """Per-coordinate curvature probe, giving a starting diagonal mass.

    One forward difference of the gradient per coordinate; the inverse
    mass is 1/|curvature| clipped to a broad dynamic range.  Useful when
    the target mixes likelihood-tight and prior-loose coordinates whose
    scales differ by orders of magnitude.
    """
    _, g0 = model.logpdf_grad(point)
    dim = len(point)
    curv = np.empty(dim)
    for j in range(dim):
        step = h * max(1.0, abs(point[j]))
        xp = point.copy()
        xp[j] += step
        _, gp = model.logpdf_grad(xp)
        curv[j] = (gp[j] - g0[j]) / step
    scale = max(np.median(np.abs(curv)), 1e-12)
    curv = np.clip(np.abs(curv), 1e-4 * scale, None)
    inv_mass = 1.0 / curv
    return inv_mass / np.max(inv_mass)


def _path_length(stepsize: float, max_leapfrog: int) -> int:
    return int(np.clip(round(1.0 / stepsize), 1, max_leapfrog))


def _jittered_steps(base: int, rng: np.random.Generator, max_leapfrog: int) -> int:
    lo = max(1, int(np.ceil(0.5 * base)))
    hi = max(lo, int(np.floor(1.5 * base)))
    return int(min(rng.integers(lo, hi + 1), max_leapfrog))


def _run_chain(model: ModelPosterior, config: HmcConfig, chain_index: int):
    rng = np.random.default_rng((config.seed, chain_index))
    dim = model.dim

    def value_and_grad(vec):
        # Extreme trajectory points saturate transforms and can make the
        # projection undefined; evaluate quietly and turn numeric failures
        # into a -inf value so the proposal is rejected as a divergence.
        try:
            with np.errstate(divide="ignore", invalid="ignore", over="ignore"):
                val, grad = model.logpdf_grad(vec)
        except (
            DomainError,
            RankDeficient,
            NotPositiveDefinite,
            OverflowError,
            ZeroDivisionError,
            np.linalg.LinAlgError,
        ):
            return -np.inf, np.full(dim, np.nan)
        if not np.isfinite(val):
            return -np.inf, np.full(dim, np.nan)
        return val, grad

    def draw_init():
        if model.initializer is not None:
            return np.asarray(model.initializer(rng), dtype=float)
        return config.init_scale * rng.standard_normal(dim)

    u = draw_init()
    logp, grad = value_and_grad(u)
    for _ in range(99):
        if np.isfinite(logp):
            break
        u = draw_init()
        logp, grad = value_and_grad(u)
    else:
        raise GradientAuditFailed("no finite initialization found in 100 attempts")

    gradient_audit(model, u, rng=np.random.default_rng((config.seed, chain_index, 1)))
    inv_mass = np.ones(dim)
    refine_mass = config.mass == "diagonal"
    if config.mass == "diagonal":
        hint = getattr(model, "inv_mass_hint", None)
        if callable(hint):
            inv_mass = np.asarray(hint(u), dtype=float)
            refine_mass = False
        elif hint is not None:
            inv_mass = np.asarray(hint, dtype=float)
            refine_mass = False
    adapt = DualAveraging(config.init_stepsize, config.target_accept)
    stepsize = config.init_stepsize
    stepsize_trace = np.empty(config.warmup)
    warmup_tail = []  # second-half draws feeding the mass estimate
    mass_switch = config.warmup - max(25, config.warmup // 10)

    draws = np.empty((config.draws, dim))
    accepts = 0.0
    divergences = 0

    total = config.warmup + config.draws
    for it in range(total):
        warm = it < config.warmup
        base = _path_length(stepsize, config.max_leapfrog)
        nsteps = _jittered_steps(base, rng, config.max_leapfrog)
        p0 = rng.standard_normal(dim) / np.sqrt(inv_mass)
        h0 = -logp + 0.5 * np.sum(inv_mass * p0 * p0)

        def grad_only(vec):
            return value_and_grad(vec)[1]

        q_new, p_new = leapfrog(u, p0, stepsize, nsteps, grad_only, inv_mass=inv_mass)
        logp_new, grad_new = value_and_grad(q_new)
        h1 = -logp_new + 0.5 * np.sum(inv_mass * p_new * p_new)
        delta = h1 - h0
        diverged = not np.isfinite(delta) or delta > DIVERGENCE_ENERGY
        accept_prob = 0.0 if diverged else float(np.exp(min(0.0, -delta)))

        if not diverged and np.log(rng.random()) < -delta:
            u, logp, grad = q_new, logp_new, grad_new

        if warm:
            stepsize = adapt.update(accept_prob)
            stepsize_trace[it] = stepsize
            if refine_mass and it >= config.warmup // 2:
                warmup_tail.append(u.copy())
                if it == mass_switch and len(warmup_tail) > 10:
                    var = np.var(np.asarray(warmup_tail), axis=0, ddof=1)
                    inv_mass = np.clip(var, 1e-6, 1e6)
                    # Fresh step-size search under the new metric.
                    adapt = DualAveraging(stepsize, config.target_accept)
            if it == config.warmup - 1:
                stepsize = adapt.adapted_stepsize
        else:
            accepts += accept_prob
            divergences += int(diverged)
            draws[it - config.warmup] = model.constrain_vector(u)

    return draws, accepts / config.draws, stepsize, stepsize_trace, divergences


def hmc_sample(
    model: ModelPosterior, config: HmcConfig, n_jobs: int = 1
) -> ChainOutput:
    """Run :class:`HmcConfig.chains` chains and assemble a ChainOutput.

    Raises AllDivergent when more than half of the post-warmup
    trajectories diverge, GradientAuditFailed when the startup
    finite-difference check fails.
    """
    idx = list(range(config.chains))
    if n_jobs > 1:
        with ThreadPoolExecutor(max_workers=n_jobs) as pool:
            results = list(pool.map(lambda c: _run_chain(model, config, c), idx))
    else:
        results = [_run_chain(model, config, c) for c in idx]

    chain_draws = np.stack([r[0] for r in results])
    accept_rate = float(np.mean([r[1] for r in results]))
    stepsize = np.array([r[2] for r in results])
    stepsize_trace = np.stack([r[3] for r in results])
    divergence_count = int(sum(r[4] for r in results))
    if divergence_count > 0.5 * config.chains * config.draws:
        raise AllDivergent(
            f"{divergence_count} of {config.chains * config.draws} trajectories diverged"
        )

    ess = rhat = None
    if config.chains >= 2 and config.draws >= 100:
        diag = _diagnostics(chain_draws)
        ess, rhat = diag["ess"], diag["split_rhat"]

    return ChainOutput(
        draws=chain_draws.reshape(-1, model.dim),
        chain_draws=chain_draws,
        names=model.layout.flat_names(),
        accept_rate=accept_rate,
        stepsize=stepsize,
        stepsize_trace=stepsize_trace,
        divergence_count=divergence_count,
        ess=ess,
        split_rhat=rhat,
        config=config,
    )


def polar_expand(
    p: int,
    k: int,
    loglik_q: Callable[[np.ndarray], tuple[float, np.ndarray]],
    logprior_x: Callable[[np.ndarray], tuple[float, np.ndarray]],
    name: str = "x",
) -> tuple[ParameterBlock, Callable[[np.ndarray], tuple[float, np.ndarray]]]:
    """Parameter-expanded density fragment for a Stiefel-valued parameter.

    The likelihood is stated in Q and the prior in the unconstrained
    expansion matrix X; the fragment evaluates
    loglik(Q(X)) + logprior(X) with gradient
    pullback(X, dloglik/dQ) + dlogprior/dX.  A rank-deficient X raises
    RankDeficient, which the sampler treats as a divergence.
    """
    block = ParameterBlock(name=name, shape=(p, k))

    def value_and_grad(x: np.ndarray) -> tuple[float, np.ndarray]:
        q = polar_project(x).q
        lik, grad_q = loglik_q(q)
        pri, grad_x = logprior_x(x)
        return lik + pri, polar_pullback_grad(x, grad_q) + grad_x

    return block, value_and_grad


def derived_q_draws(x_draws: np.ndarray, p: int, k: int) -> np.ndarray:
    """Per-draw projections Q_t = X_t (X_t^T X_t)^{-1/2} from flat X draws."""
    out = np.empty_like(x_draws)
    for t in range(x_draws.shape[0]):
        out[t] = polar_project(x_draws[t].reshape(p, k)).q.ravel()
    return out
