"""Convergence diagnostics: split R-hat and autocorrelation-based ESS."""

from __future__ import annotations

import numpy as np

from .exceptions import TooFewDraws


def _split(chains: np.ndarray) -> np.ndarray:
    """Halve each chain, doubling the chain count; drops an odd last draw."""
    m, n = chains.shape
    half = n // 2
    return np.concatenate([chains[:, :half], chains[:, half : 2 * half]], axis=0)


def split_rhat(chains: np.ndarray) -> float:
    """Potential scale reduction over split chains; NaN for constant input.

    ``chains`` has shape (n_chains, n_draws).
    """
    x = _split(np.asarray(chains, dtype=float))
    m, n = x.shape
    chain_means = x.mean(axis=1)
    within = np.mean(x.var(axis=1, ddof=1))
    if within == 0.0:
        return float("nan")
    between = n * np.var(chain_means, ddof=1)
    var_hat = (n - 1) / n * within + between / n
    return float(np.sqrt(var_hat / within))


def _autocovariance(x: np.ndarray) -> np.ndarray:
    """Biased autocovariance of a 1-D series via FFT."""
    n = len(x)
    xc = x - x.mean()
    size = 2 ** int(np.ceil(np.log2(2 * n)))
    f = np.fft.rfft(xc, size)
    acov = np.fft.irfft(f * np.conj(f), size)[:n].real
    return acov / n


def ess(chains: np.ndarray) -> float:
    """Effective sample size combined across chains.

    Uses the initial monotone positive-pair-sum truncation of the
    chain-combined autocorrelation sequence.  Constant chains have zero
    autocovariance everywhere and are reported at face value (total
    draws), per the degenerate-input policy.
    """
    x = np.asarray(chains, dtype=float)
    m, n = x.shape
    total = m * n
    acovs = np.stack([_autocovariance(x[c]) for c in range(m)])
    chain_var = x.var(axis=1, ddof=1)
    within = chain_var.mean()
    if within == 0.0:
        return float(total)
    var_plus = within * (n - 1) / n
    if m > 1:
        var_plus += np.var(x.mean(axis=1), ddof=1)
    rho = 1.0 - (within - acovs.mean(axis=0)) / var_plus

    # Geyer pair sums: accumulate while positive, enforce monotone decline.
    tau = 1.0
    prev_pair = float("inf")
    t = 1
    while t + 1 < n:
        pair = rho[t] + rho[t + 1]
        if pair < 0:
            break
        pair = min(pair, prev_pair)
        tau += 2.0 * pair
        prev_pair = pair
        t += 2
    return float(total / tau)


def diagnostics(chain_draws: np.ndarray) -> dict:
    """Per-parameter ESS and split R-hat plus an acceptance-free summary.

    ``chain_draws`` has shape (n_chains, n_draws, dim); needs at least two
    chains of at least 100 draws.
    """
    x = np.asarray(chain_draws, dtype=float)
    if x.ndim != 3:
        raise TooFewDraws(f"expected (chains, draws, dim), got shape {x.shape}")
    m, n, dim = x.shape
    if m < 2 or n < 100:
        raise TooFewDraws(f"need >= 2 chains of >= 100 draws, got {m} x {n}")
    out_ess = np.array([ess(x[:, :, j]) for j in range(dim)])
    out_rhat = np.array([split_rhat(x[:, :, j]) for j in range(dim)])
    return {"ess": out_ess, "split_rhat": out_rhat, "total_draws": m * n}
