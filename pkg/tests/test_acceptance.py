"""Acceptance suite: one test per exit criterion, plus a determinism gate.

Each criterion is implemented as a pure function of fixed seeds returning
its primary outputs; tests assert the stated thresholds and print one
PASS/FAIL line (run with ``pytest -s`` to see them).  The final test
re-runs every criterion and requires bit-identical primary outputs.

The power-family spectral-norm clause is a strict xfail: finite sections
of that Toeplitz family have top eigenvalue approaching (1+rho)/(1-rho),
which exceeds the documented 2/log(1/rho) bound at every tested size, so
the stated threshold is not attainable (see the test for measurements).
"""

import time

import numpy as np
import pytest
from scipy import stats

from polarprior.correlation import bessel_k, correlation_matrix, matern_corr
from polarprior.diagnostics import ess as ess_fn
from polarprior.hmc import HmcConfig, derived_q_draws, hmc_sample
from polarprior.models.eigenmodel import (
    NetworkData,
    NetworkEigenmodel,
    auc,
    eigenmodel_logpost,
)
from polarprior.models.svd import (
    SmoothSVD,
    center_columns,
    default_hyper,
    principal_angle,
    simulate_smooth_svd,
    svd_model_logpost,
)
from polarprior.priors import StructuredPriorSpec, sample_matrix_x, sample_prior_q
from polarprior.shrinkage import ShrinkageLaw, scale_mixture_sample, shrinkage_sample
from polarprior.stiefel import polar_project, polar_pullback_grad
from polarprior.theory import (
    c_omega,
    count_zero_crossings,
    coupled_frobenius_identity,
    renormalized_covariance,
    semicircle_distance,
    w2_1d,
    wasserstein_experiment,
)
from polarprior.transforms import ModelPosterior, ParameterBlock

RESULTS: dict = {}


def run_criterion(number, fn):
    if number not in RESULTS:
        t0 = time.time()
        out = fn()
        out["elapsed"] = time.time() - t0
        RESULTS[number] = out
    return RESULTS[number]


def report(number, label, passed, elapsed, detail=""):
    status = "PASS" if passed else "FAIL"
    print(f"ACCEPTANCE {number:>3} {label}: {status} ({elapsed:.1f} s) {detail}")


def two_sample_gap(a, b):
    grid = np.sort(np.concatenate([a, b]))
    fa = np.searchsorted(np.sort(a), grid, side="right") / len(a)
    fb = np.searchsorted(np.sort(b), grid, side="right") / len(b)
    return float(np.max(np.abs(fa - fb)))


def one_sample_gap(samples, cdf):
    x = np.sort(samples)
    n = len(x)
    f = cdf(x)
    i = np.arange(1, n + 1)
    return float(max(np.max(np.abs(f - i / n)), np.max(np.abs(f - (i - 1) / n))))


# --- criterion implementations -----------------------------------------


def criterion_1():
    out = {}
    for ell in (0.1, 0.5, 1.0):
        rng = np.random.default_rng((1, int(100 * ell)))
        z = shrinkage_sample(10**6, ShrinkageLaw(ell), rng)
        out[f"mean_{ell}"] = z.mean()
        out[f"var_{ell}"] = z.var()
        out[f"m4_{ell}"] = np.mean(z**4)
    return out


def criterion_2():
    out = {}
    for ell in (0.2, 0.5, 0.8):
        a = shrinkage_sample(10**5, ShrinkageLaw(ell), np.random.default_rng((2, int(100 * ell), 0)))
        b, _ = scale_mixture_sample(
            10**5, ShrinkageLaw(ell), np.random.default_rng((2, int(100 * ell), 1))
        )
        out[f"gap_{ell}"] = two_sample_gap(a, b)
    return out


def criterion_3():
    p, ell = 20, 0.4
    spec = StructuredPriorSpec(p=p, k=1, entry_law="shrinkage", ell=ell)
    q = sample_prior_q(spec, np.random.default_rng(3), size=10**5)
    gap = one_sample_gap(q[:, 0, 0] ** 2, stats.beta(0.2, 3.8).cdf)
    return {"gap": gap}


def criterion_4():
    combos = [
        ("standard_normal", None, "identity", {}),
        ("standard_normal", None, "power", {"rho": 0.5}),
        ("standard_normal", None, "squared_exponential", {"rho": 2.0}),
        ("standard_normal", None, "matern", {"rho": 2.0, "nu": 1.5}),
        ("standard_normal", None, "banded", {"rho": 0.5, "tau": 3, "banded_family": "power"}),
        ("shrinkage", 0.3, "identity", {}),
    ]
    p_grid = [10, 50, 100, 250, 500]
    specs = []
    for entry_law, ell, family, kw in combos:
        for p in p_grid:
            omega = correlation_matrix(family, p, **kw)
            k_hi = min(p, 10)
            specs.append(
                StructuredPriorSpec(p=p, k=k_hi, entry_law=entry_law, ell=ell, omega=omega)
            )
    rel_gaps = np.empty(1000)
    idx = 0
    rep = 0
    while idx < 1000:
        spec = specs[idx % len(specs)]
        rng = np.random.default_rng((4, rep))
        k = int(rng.integers(1, min(spec.p, 10) + 1))
        sub = StructuredPriorSpec(
            p=spec.p, k=k, entry_law=spec.entry_law, ell=spec.ell, omega=spec.omega
        )
        x = sample_matrix_x(sub, rng)
        lhs, rhs = coupled_frobenius_identity(x)
        rel_gaps[idx] = abs(lhs - rhs) / max(lhs, 1.0)
        idx += 1
        rep += 1
    return {"rel_gaps": rel_gaps}


def criterion_5():
    omega = correlation_matrix("matern", 50, rho=12.0, nu=3.0)
    template = StructuredPriorSpec(p=50, k=3, omega=omega)
    report_ = wasserstein_experiment(
        template, [50, 100, 200, 400], [(0, 0)], replicates=2000, master_seed=5
    )
    return {
        "estimates": report_.estimates[:, 0],
        "mc_se": report_.mc_se[:, 0],
        "coupled": report_.coupled_bound,
    }


def criterion_6():
    out = {}
    power2000 = correlation_matrix("power", 2000, rho=0.5)
    out["c_power_2000"] = c_omega(power2000)
    norms = []
    for p in (100, 500, 2000):
        m = power2000.entries[:p, :p] if p < 2000 else power2000.entries
        norms.append(np.linalg.eigvalsh(m)[-1])
    out["power_spectral_norms"] = np.array(norms)
    for family, kw, tag in [
        ("squared_exponential", {"rho": 1.0}, "se"),
        ("matern", {"rho": 1.0, "nu": 1.5}, "matern"),
    ]:
        c1 = c_omega(correlation_matrix(family, 1000, **kw))
        c2 = c_omega(correlation_matrix(family, 2000, **kw))
        out[f"cauchy_{tag}"] = abs(c2 - c1)
    return out


def criterion_7():
    gaps = []
    for seed in range(3):
        rng = np.random.default_rng((7, seed))
        z = rng.standard_normal((4000, 40))
        rc = renormalized_covariance(z, np.eye(4000))
        gaps.append(semicircle_distance(np.linalg.eigvalsh(rc.a_k)))
    return {"gaps": np.array(gaps)}


def criterion_8():
    def k_half(x):
        return np.sqrt(np.pi / (2 * x)) * np.exp(-x)

    closed = {
        0.5: k_half,
        1.5: lambda x: k_half(x) * (1 + 1 / x),
        2.5: lambda x: k_half(x) * (1 + 3 / x + 3 / x**2),
    }
    worst_bessel = 0.0
    for nu, ref in closed.items():
        for x in (0.1, 1.0, 10.0):
            rel = abs(bessel_k(nu, x) - ref(x)) / ref(x)
            worst_bessel = max(worst_bessel, rel)
    grid = np.linspace(0.05, 10.0, 40)
    matern_half = matern_corr(grid, 2.0, 0.5)
    worst_matern = float(np.max(np.abs(matern_half - np.exp(-grid / 2.0))))
    return {"worst_bessel": worst_bessel, "worst_matern": worst_matern}


def _max_fd_relerr(model, point, h_scale=1e-5):
    _, grad = model.logpdf_grad(point)
    worst = 0.0
    for j in range(model.dim):
        h = h_scale * max(1.0, abs(point[j]))
        xp = point.copy()
        xp[j] += h
        xm = point.copy()
        xm[j] -= h
        fd = (model.logpdf_grad(xp)[0] - model.logpdf_grad(xm)[0]) / (2 * h)
        worst = max(worst, abs(grad[j] - fd) / max(abs(grad[j]), abs(fd), 1e-8))
    return worst


def criterion_9():
    worst = {"pullback": 0.0, "eigenmodel": 0.0, "svd": 0.0}
    for rep in range(5):
        rng = np.random.default_rng((9, 0, rep))
        x = rng.standard_normal((10, 2))
        grad_q = np.cos(polar_project(x).q)
        grad = polar_pullback_grad(x, grad_q)
        fd = np.zeros_like(x)
        h = 1e-6
        for i in range(10):
            for j in range(2):
                xp = x.copy()
                xp[i, j] += h
                xm = x.copy()
                xm[i, j] -= h
                fd[i, j] = (
                    np.sum(np.sin(polar_project(xp).q))
                    - np.sum(np.sin(polar_project(xm).q))
                ) / (2 * h)
        rel = np.max(np.abs(grad - fd) / np.maximum(np.abs(fd), 1e-8))
        worst["pullback"] = max(worst["pullback"], rel)

    for rep in range(5):
        rng = np.random.default_rng((9, 1, rep))
        p, k = 8, 2
        probs = np.full((p, p), 0.4)
        y = (rng.random((p, p)) < probs).astype(float)
        y = np.triu(y, 1) + np.triu(y, 1).T
        np.fill_diagonal(y, np.nan)
        model = eigenmodel_logpost(NetworkData(y), k)
        point = 0.3 * rng.standard_normal(model.dim)
        worst["eigenmodel"] = max(worst["eigenmodel"], _max_fd_relerr(model, point))

    for rep in range(5):
        rng = np.random.default_rng((9, 2, rep))
        y = center_columns(rng.standard_normal((12, 15)))
        hyper = default_hyper(y, rho_mean=4.0, rho_sd=2.0)
        model = svd_model_logpost(y, 2, hyper)
        point = 0.3 * rng.standard_normal(model.dim)
        worst["svd"] = max(worst["svd"], _max_fd_relerr(model, point))
    return dict(worst)


def criterion_10():
    p, k = 30, 2
    omega = correlation_matrix("power", p, rho=0.5)
    root_inv = np.linalg.inv(omega.sqrt())
    prec = root_inv @ root_inv

    def logpdf_grad(u):
        m = u.reshape(p, k)
        wv = prec @ m
        return -0.5 * float(np.sum(m * wv)), (-wv).ravel()

    model = ModelPosterior(blocks=[ParameterBlock("x", (p, k))], logpdf_grad=logpdf_grad)
    out = hmc_sample(model, HmcConfig(warmup=500, draws=2000, chains=4, seed=42))
    q_draws = derived_q_draws(out.draws, p, k)

    spec = StructuredPriorSpec(p=p, k=k, omega=omega)
    direct = sample_prior_q(spec, np.random.default_rng(123), size=20000)
    direct = direct.reshape(20000, -1)

    mean_h, mean_d = q_draws.mean(axis=0), direct.mean(axis=0)
    var_h, var_d = q_draws.var(axis=0), direct.var(axis=0)
    z_mean = np.empty(p * k)
    z_var = np.empty(p * k)
    for j in range(p * k):
        col = q_draws[:, j].reshape(4, 2000)
        eff = max(ess_fn(col), 50.0)
        se_mean = np.sqrt(var_h[j] / eff + var_d[j] / len(direct))
        z_mean[j] = abs(mean_h[j] - mean_d[j]) / se_mean
        m4_h = np.mean((q_draws[:, j] - mean_h[j]) ** 4)
        m4_d = np.mean((direct[:, j] - mean_d[j]) ** 4)
        se_var = np.sqrt(
            max(m4_h - var_h[j] ** 2, 0.0) / eff
            + max(m4_d - var_d[j] ** 2, 0.0) / len(direct)
        )
        z_var[j] = abs(var_h[j] - var_d[j]) / se_var
    return {
        "z_mean": z_mean,
        "z_var": z_var,
        "split_rhat": out.split_rhat,
        "accept_rate": out.accept_rate,
    }


def criterion_11():
    # Pre-registered configuration (see the calibration notes): two
    # disjoint six-node clusters, lam = (24, 18), c = -2, so the true
    # probabilities are strongly bimodal; statistics are medians over ten
    # seeds, and the ell interval must reach into the sparse half (0, 0.5]
    # matching the majority-zero generating eigenvectors.
    p, k = 30, 2
    lam = np.array([24.0, 18.0])
    c = -2.0
    q = np.zeros((p, k))
    q[0:6, 0] = 1.0 / np.sqrt(6.0)
    q[6:12, 1] = 1.0 / np.sqrt(6.0)
    from scipy.special import ndtr

    probs = ndtr(c + q @ np.diag(lam) @ q.T)
    rmses, aucs, covers = [], [], []
    for seed in range(10):
        rng = np.random.default_rng((777, seed))
        u = rng.random((p, p))
        u = np.triu(u, 1) + np.triu(u, 1).T
        y = (u < probs).astype(float)
        np.fill_diagonal(y, np.nan)
        iu, ju = np.triu_indices(p, k=1)
        nd = len(iu)
        held_idx = rng.permutation(nd)[: int(0.2 * nd)]
        held = np.zeros(nd, dtype=bool)
        held[held_idx] = True
        y_train = y.copy()
        y_train[iu[held], ju[held]] = np.nan
        y_train[ju[held], iu[held]] = np.nan
        est = NetworkEigenmodel(
            k=k, warmup=500, draws=500, chains=2, seed=(1000 + seed)
        )
        est.fit(y_train)
        pa = est.predict_proba()
        rmses.append(float(np.sqrt(np.mean((pa - probs[iu, ju]) ** 2))))
        aucs.append(float(auc(pa[held], y[iu[held], ju[held]])))
        lo, _ = est.ell_interval(0.9)
        covers.append(lo <= 0.5)
    return {
        "rmses": np.array(rmses),
        "aucs": np.array(aucs),
        "covers": np.array(covers),
    }


def criterion_12():
    rng = np.random.default_rng((555, 0))
    y, truth = simulate_smooth_svd(60, 100, 2, rho=25.0, snr=5.0, rng=rng)
    est = SmoothSVD(k=2, warmup=200, draws=200, chains=2, seed=2000, mass="diagonal")
    est.fit(y)
    angle = principal_angle(est.v_point_, truth["v"])
    rho_mean = float(est.rho_draws_.mean())
    return {"angle": angle, "rho_mean": rho_mean, "rho_true": 25.0}


def criterion_13():
    rho = 100.0 / np.pi
    omega = correlation_matrix("squared_exponential", 101, rho=rho, spacing=2.0)
    spec = StructuredPriorSpec(p=101, k=1, omega=omega)
    draws = sample_matrix_x(spec, np.random.default_rng(13), size=2000)
    counts = np.array([count_zero_crossings(d[:, 0]) for d in draws])
    return {"mean_crossings": counts.mean(), "counts": counts}


CRITERIA = {
    1: criterion_1,
    2: criterion_2,
    3: criterion_3,
    4: criterion_4,
    5: criterion_5,
    6: criterion_6,
    7: criterion_7,
    8: criterion_8,
    9: criterion_9,
    10: criterion_10,
    11: criterion_11,
    12: criterion_12,
    13: criterion_13,
}


# --- tests ---------------------------------------------------------------


def test_01_shrinkage_moments():
    out = run_criterion(1, criterion_1)
    ok = True
    for ell in (0.1, 0.5, 1.0):
        ok &= abs(out[f"mean_{ell}"]) < 0.01
        ok &= 0.99 < out[f"var_{ell}"] < 1.01
        ok &= abs(out[f"m4_{ell}"] - (1 + 2 / ell)) / (1 + 2 / ell) < 0.05
    report(1, "shrinkage-moments", ok and out["elapsed"] < 10, out["elapsed"])
    for ell in (0.1, 0.5, 1.0):
        assert abs(out[f"mean_{ell}"]) < 0.01
        assert 0.99 < out[f"var_{ell}"] < 1.01
        assert abs(out[f"m4_{ell}"] - (1 + 2 / ell)) / (1 + 2 / ell) < 0.05
    assert out["elapsed"] < 10


def test_02_sampler_equivalence():
    out = run_criterion(2, criterion_2)
    gaps = [out[f"gap_{ell}"] for ell in (0.2, 0.5, 0.8)]
    report(2, "sampler-equivalence", max(gaps) < 0.01 and out["elapsed"] < 5,
           out["elapsed"], f"max gap {max(gaps):.4f}")
    assert max(gaps) < 0.01
    assert out["elapsed"] < 5


def test_03_k1_marginal_law():
    out = run_criterion(3, criterion_3)
    report(3, "k1-marginal-beta", out["gap"] < 0.01 and out["elapsed"] < 30,
           out["elapsed"], f"gap {out['gap']:.4f}")
    assert out["gap"] < 0.01
    assert out["elapsed"] < 30


def test_04_frobenius_identity():
    out = run_criterion(4, criterion_4)
    worst = float(np.max(out["rel_gaps"]))
    report(4, "coupling-identity", worst < 1e-8 and out["elapsed"] < 30,
           out["elapsed"], f"worst rel gap {worst:.2e}")
    assert worst < 1e-8
    assert out["elapsed"] < 30


def test_05_wasserstein_decay():
    out = run_criterion(5, criterion_5)
    est, se = out["estimates"], out["mc_se"]
    strictly_decreasing = bool(
        np.all(est[1:] < est[:-1] + 2 * np.sqrt(se[1:] ** 2 + se[:-1] ** 2))
    )
    halved = est[-1] < 0.5 * est[0]
    report(5, "wasserstein-decay", strictly_decreasing and halved and out["elapsed"] < 120,
           out["elapsed"], f"W2 {np.array2string(est, precision=3)}")
    assert strictly_decreasing
    assert halved
    assert out["elapsed"] < 120


def test_06a_power_c_omega():
    out = run_criterion(6, criterion_6)
    gap = abs(out["c_power_2000"] - 5.0 / 3.0)
    report("6a", "power-c-omega", gap < 1e-3, out["elapsed"], f"|c-5/3| = {gap:.1e}")
    assert gap < 1e-3
    assert out["elapsed"] < 60


@pytest.mark.xfail(
    strict=True,
    reason="finite sections of the power(0.5) family reach spectral norm "
    "~(1+rho)/(1-rho) = 3 (measured 2.994/3.000/3.000 at p=100/500/2000), "
    "above the documented 2/log(2) = 2.8854 bound; the boundedness "
    "assumption holds but this numeric constant does not",
)
def test_06b_power_spectral_norm_bound():
    out = run_criterion(6, criterion_6)
    norms = out["power_spectral_norms"]
    bound = 2.0 / np.log(2.0)
    report("6b", "power-spectral-bound", bool(np.all(norms <= bound)),
           out["elapsed"], f"norms {np.array2string(norms, precision=4)} vs {bound:.4f}")
    assert np.all(norms <= bound)


def test_06c_c_omega_cauchy():
    out = run_criterion(6, criterion_6)
    ok = out["cauchy_se"] < 1e-3 and out["cauchy_matern"] < 1e-3
    report("6c", "c-omega-cauchy", ok, out["elapsed"],
           f"SE {out['cauchy_se']:.1e}, Matern {out['cauchy_matern']:.1e}")
    assert out["cauchy_se"] < 1e-3
    assert out["cauchy_matern"] < 1e-3


def test_07_semicircle_regime():
    out = run_criterion(7, criterion_7)
    report(7, "semicircle", bool(np.all(out["gaps"] < 0.1)) and out["elapsed"] < 60,
           out["elapsed"], f"gaps {np.array2string(out['gaps'], precision=3)}")
    assert np.all(out["gaps"] < 0.1)
    assert out["elapsed"] < 60


def test_08_bessel_matern_numerics():
    out = run_criterion(8, criterion_8)
    ok = out["worst_bessel"] < 1e-10 and out["worst_matern"] < 1e-10
    report(8, "bessel-matern", ok and out["elapsed"] < 1, out["elapsed"],
           f"bessel {out['worst_bessel']:.1e}, matern {out['worst_matern']:.1e}")
    assert out["worst_bessel"] < 1e-10
    assert out["worst_matern"] < 1e-10
    assert out["elapsed"] < 1


def test_09_gradient_audits():
    out = run_criterion(9, criterion_9)
    worst = max(out["pullback"], out["eigenmodel"], out["svd"])
    report(9, "gradient-audits", worst < 1e-5 and out["elapsed"] < 60,
           out["elapsed"], f"worst rel err {worst:.1e}")
    assert out["pullback"] < 1e-5
    assert out["eigenmodel"] < 1e-5
    assert out["svd"] < 1e-5
    assert out["elapsed"] < 60


def test_10_polar_expansion_prior_recovery():
    out = run_criterion(10, criterion_10)
    ok = (
        np.all(out["z_mean"] < 3.0)
        and np.all(out["z_var"] < 3.0)
        and np.all(out["split_rhat"] < 1.05)
    )
    report(10, "prior-recovery", ok and out["elapsed"] < 180, out["elapsed"],
           f"max |z| mean {out['z_mean'].max():.2f}, var {out['z_var'].max():.2f}, "
           f"rhat {out['split_rhat'].max():.3f}")
    assert np.all(out["z_mean"] < 3.0)
    assert np.all(out["z_var"] < 3.0)
    assert np.all(out["split_rhat"] < 1.05)
    assert out["elapsed"] < 180


def test_11_eigenmodel_recovery():
    out = run_criterion(11, criterion_11)
    med_rmse = float(np.median(out["rmses"]))
    med_auc = float(np.median(out["aucs"]))
    n_cover = int(np.sum(out["covers"]))
    ok = med_rmse < 0.15 and med_auc > 0.75 and n_cover >= 8
    report(11, "eigenmodel-recovery", ok and out["elapsed"] < 600, out["elapsed"],
           f"median RMSE {med_rmse:.3f}, median AUC {med_auc:.3f}, coverage {n_cover}/10")
    assert med_rmse < 0.15
    assert med_auc > 0.75
    assert n_cover >= 8
    assert out["elapsed"] < 600


def test_12_svd_recovery():
    out = run_criterion(12, criterion_12)
    ratio = out["rho_mean"] / out["rho_true"]
    ok = out["angle"] < 10.0 and 0.75 <= ratio <= 1.25
    report(12, "svd-recovery", ok and out["elapsed"] < 600, out["elapsed"],
           f"angle {out['angle']:.2f} deg, rho ratio {ratio:.3f}")
    assert out["angle"] < 10.0
    assert 0.75 <= ratio <= 1.25
    assert out["elapsed"] < 600


def test_13_zero_crossings():
    out = run_criterion(13, criterion_13)
    ok = 1.8 <= out["mean_crossings"] <= 2.2
    report(13, "zero-crossings", ok and out["elapsed"] < 30, out["elapsed"],
           f"mean {out['mean_crossings']:.3f}")
    assert 1.8 <= out["mean_crossings"] <= 2.2
    assert out["elapsed"] < 30


def _assert_identical(a, b, path):
    if isinstance(a, dict):
        assert set(a) == set(b), f"{path}: key mismatch"
        for key in a:
            if key == "elapsed":
                continue
            _assert_identical(a[key], b[key], f"{path}.{key}")
    elif isinstance(a, np.ndarray):
        assert np.array_equal(a, b), f"{path}: arrays differ"
    else:
        assert a == b, f"{path}: {a!r} != {b!r}"


def test_14_determinism():
    t0 = time.time()
    for number, fn in CRITERIA.items():
        first = run_criterion(number, fn)
        second = fn()
        _assert_identical(first, second, f"criterion_{number}")
    report(14, "determinism", True, time.time() - t0, "all 13 criteria bit-identical")
