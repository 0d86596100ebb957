"""Command-line front end.

    polarprior <command> [--config run.json] [--set key=value ...]

Inline ``--set`` values are JSON fragments (bare words fall back to
strings) and override the config file; dotted keys reach nested
sections, e.g. ``--set omega.family=power --set omega.rho=0.5``.  Every
stochastic command requires a seed, and identical configurations produce
bit-identical primary outputs.  Failures exit nonzero with a one-line
machine-readable error JSON on stderr.
"""

from __future__ import annotations

import argparse
import hashlib
import json
import os
import sys

import numpy as np

from . import __version__
from .config import COMMANDS, RunConfig, parse_config
from .correlation import correlation_matrix
from .diagnostics import diagnostics
from .exceptions import PolarPriorError
from .io import load_matrix_csv, write_matrix_csv
from .priors import StructuredPriorSpec, sample_matrix_x
from .stiefel import polar_project
from .theory import (
    coupled_frobenius_identity,
    count_zero_crossings,
    operator_norm_ratio,
    renormalized_covariance,
    semicircle_distance,
    wasserstein_experiment,
)


def _threads() -> int:
    # Env override for chain-level parallelism only.
    try:
        return max(1, int(os.environ.get("POLARPRIOR_THREADS", "1")))
    except ValueError:
        return 1


def _build_omega(doc: dict, p: int):
    if doc is None or doc.get("family", "identity") == "identity":
        return None
    return correlation_matrix(
        doc["family"],
        p,
        rho=doc.get("rho"),
        nu=doc.get("nu"),
        tau=doc.get("tau"),
        spacing=doc.get("spacing", 1.0),
        banded_family=doc.get("banded_family"),
    )


def _spec_from_config(config: RunConfig, p: int, k: int) -> StructuredPriorSpec:
    return StructuredPriorSpec(
        p=p,
        k=k,
        entry_law=config["entry_law"],
        ell=config.get("ell"),
        omega=_build_omega(config.get("omega"), p),
    )


def _write_draws_csv(path, draws: np.ndarray, names: list[str]) -> None:
    with open(path, "w", newline="\n") as fh:
        fh.write(",".join(names) + "\n")
        for row in draws:
            fh.write(",".join(repr(float(v)) for v in row) + "\n")


def _run_log(config: RunConfig, out_path) -> None:
    normal = config.normal_form()
    log = {
        "command": config.command,
        "config_sha256": hashlib.sha256(normal.encode()).hexdigest(),
        "effective_config": json.loads(normal),
        "package_version": __version__,
        "numpy_version": np.__version__,
    }
    with open(out_path, "w") as fh:
        json.dump(log, fh, sort_keys=True, indent=2)
        fh.write("\n")


def _cmd_sample_prior(config: RunConfig) -> None:
    spec = _spec_from_config(config, config["p"], config["k"])
    rng = np.random.default_rng(config["seed"])
    xs = sample_matrix_x(spec, rng, size=config["draws"])
    qs = np.stack([polar_project(x).q for x in xs])
    flat = qs.reshape(config["draws"], -1)
    names = [f"q.{i}.{j}" for i in range(spec.p) for j in range(spec.k)]
    _write_draws_csv(config["out"], flat, names)
    if config.get("x_out"):
        xnames = [f"x.{i}.{j}" for i in range(spec.p) for j in range(spec.k)]
        _write_draws_csv(config["x_out"], xs.reshape(config["draws"], -1), xnames)


def _cmd_project(config: RunConfig) -> None:
    x = load_matrix_csv(config["data"], kind="numeric")
    factors = polar_project(x)
    write_matrix_csv(config["q_out"], factors.q)
    write_matrix_csv(config["s_sqrt_out"], factors.s_sqrt)


def _cmd_theory_check(config: RunConfig) -> None:
    preset = config["preset"]
    seed = config["seed"]
    out = config["out"]
    if preset == "wasserstein":
        p_grid = config.get("p_grid") or [25, 50, 100, 200]
        entries = [tuple(e) for e in (config.get("entries") or [[0, 0]])]
        template = _spec_from_config(config, min(p_grid), config["k"])
        report = wasserstein_experiment(
            template,
            p_grid,
            entries,
            replicates=config["replicates"],
            master_seed=seed,
            n_jobs=_threads(),
        )
        report.to_csv(out)
        if config.get("report_out"):
            with open(config["report_out"], "w") as fh:
                fh.write(report.to_text())
        return
    rows = []
    if preset == "semicircle":
        spec = _spec_from_config(config, config["p"], config["k"])
        omega = spec.resolved_omega()
        for r in range(config["replicates"]):
            rng = np.random.default_rng((seed, r))
            z = rng.standard_normal((config["p"], config["k"]))
            rc = renormalized_covariance(z, omega)
            gap = semicircle_distance(np.linalg.eigvalsh(rc.a_k))
            rows.append([r, gap, rc.c_omega])
        header = ["replicate", "semicircle_gap", "c_omega"]
    elif preset == "frobenius":
        spec = _spec_from_config(config, config["p"], config["k"])
        for r in range(config["replicates"]):
            rng = np.random.default_rng((seed, r))
            lhs, rhs = coupled_frobenius_identity(sample_matrix_x(spec, rng))
            rows.append([r, lhs, rhs, abs(lhs - rhs) / max(lhs, 1.0)])
        header = ["replicate", "direct", "eigenvalue_form", "rel_gap"]
    elif preset == "operator-norm":
        spec = _spec_from_config(config, config["p"], config["k"])
        omega = spec.resolved_omega()
        c_om = float(np.sum(omega.entries**2) / omega.p)
        for r in range(config["replicates"]):
            rng = np.random.default_rng((seed, r))
            rows.append([r, operator_norm_ratio(sample_matrix_x(spec, rng), c_om)])
        header = ["replicate", "opnorm_ratio"]
    else:  # zero-crossings
        spec = _spec_from_config(config, config["p"], 1)
        for r in range(config["replicates"]):
            rng = np.random.default_rng((seed, r))
            x = sample_matrix_x(spec, rng)
            rows.append([r, count_zero_crossings(x[:, 0])])
        header = ["replicate", "crossings"]
    with open(out, "w", newline="\n") as fh:
        fh.write(",".join(header) + "\n")
        for row in rows:
            fh.write(",".join(repr(v) if isinstance(v, float) else str(v) for v in row) + "\n")


def _summary_json(path, chain) -> None:
    with open(path, "w") as fh:
        json.dump(
            {
                "parameters": chain.summary(),
                "accept_rate": chain.accept_rate,
                "divergence_count": int(chain.divergence_count),
            },
            fh,
            sort_keys=True,
            indent=2,
        )
        fh.write("\n")


def _cmd_fit_eigenmodel(config: RunConfig) -> None:
    from .models.eigenmodel import NetworkEigenmodel, eigenmodel_qlamqt_draws

    adjacency = load_matrix_csv(config["data"], kind="adjacency")
    hmc = config["hmc"]
    est = NetworkEigenmodel(
        k=config["k"],
        warmup=hmc["warmup"],
        draws=hmc["draws"],
        chains=hmc["chains"],
        target_accept=hmc["target_accept"],
        seed=config["seed"],
        mass=hmc["mass"],
        n_jobs=_threads(),
    )
    est.fit(adjacency)
    out_dir = config["out_dir"]
    os.makedirs(out_dir, exist_ok=True)
    chain = est.chain_
    chain.to_csv(os.path.join(out_dir, "draws.csv"))
    chain.diagnostics_jsonl(os.path.join(out_dir, "diagnostics.jsonl"))
    _summary_json(os.path.join(out_dir, "summary.json"), chain)
    p, k = est.p_, est.k
    mats = eigenmodel_qlamqt_draws(chain, p, k)
    write_matrix_csv(
        os.path.join(out_dir, "qlamqt_median.csv"), np.median(mats, axis=0)
    )
    from .models.eigenmodel import _chain_z_draws

    z = _chain_z_draws(chain, p, k)
    q_flat = np.stack([polar_project(zt.reshape(p, k)).q.ravel() for zt in z])
    _write_draws_csv(
        os.path.join(out_dir, "q_draws.csv"),
        q_flat,
        [f"q.{i}.{j}" for i in range(p) for j in range(k)],
    )


def _cmd_fit_svd(config: RunConfig) -> None:
    from .models.svd import SmoothSVD

    y = load_matrix_csv(config["data"], kind="numeric")
    hmc = config["hmc"]
    est = SmoothSVD(
        k=config["k"],
        spacing=config["spacing"],
        rho_mean=config.get("rho_mean"),
        rho_sd=config.get("rho_sd"),
        nu_err=config["nu_err"],
        s2=config.get("s2"),
        tau=config.get("tau"),
        warmup=hmc["warmup"],
        draws=hmc["draws"],
        chains=hmc["chains"],
        target_accept=hmc["target_accept"],
        seed=config["seed"],
        mass=hmc["mass"],
        n_jobs=_threads(),
    )
    est.fit(y)
    out_dir = config["out_dir"]
    os.makedirs(out_dir, exist_ok=True)
    chain = est.chain_
    chain.to_csv(os.path.join(out_dir, "draws.csv"))
    chain.diagnostics_jsonl(os.path.join(out_dir, "diagnostics.jsonl"))
    _summary_json(os.path.join(out_dir, "summary.json"), chain)
    write_matrix_csv(os.path.join(out_dir, "v_point.csv"), est.v_point_)
    ndraws, _, k = est.v_draws_.shape
    _write_draws_csv(
        os.path.join(out_dir, "v_draws.csv"),
        est.v_draws_.reshape(ndraws, -1),
        [f"v.{i}.{j}" for i in range(est.v_draws_.shape[1]) for j in range(k)],
    )


def _cmd_diagnose(config: RunConfig) -> None:
    with open(config["draws_csv"]) as fh:
        header = fh.readline().strip().split(",")
    flat = np.loadtxt(config["draws_csv"], delimiter=",", skiprows=1, ndmin=2)
    chains = config["chains"]
    if flat.shape[0] % chains != 0:
        raise PolarPriorError(
            f"{flat.shape[0]} rows do not split into {chains} equal chains"
        )
    per = flat.shape[0] // chains
    out = diagnostics(flat.reshape(chains, per, flat.shape[1]))
    doc = {
        name: {"ess": float(out["ess"][j]), "split_rhat": float(out["split_rhat"][j])}
        for j, name in enumerate(header)
    }
    with open(config["out"], "w") as fh:
        json.dump(doc, fh, sort_keys=True, indent=2)
        fh.write("\n")


_RUNNERS = {
    "sample-prior": _cmd_sample_prior,
    "project": _cmd_project,
    "theory-check": _cmd_theory_check,
    "fit-eigenmodel": _cmd_fit_eigenmodel,
    "fit-svd": _cmd_fit_svd,
    "diagnose": _cmd_diagnose,
}


def run_command(config: RunConfig, log_path=None) -> None:
    _RUNNERS[config.command](config)
    if log_path:
        _run_log(config, log_path)


def _parse_set(pairs: list[str]) -> dict:
    doc: dict = {}
    for pair in pairs:
        if "=" not in pair:
            raise PolarPriorError(f"--set expects key=value, got {pair!r}")
        key, raw = pair.split("=", 1)
        try:
            value = json.loads(raw)
        except json.JSONDecodeError:
            value = raw
        target = doc
        parts = key.split(".")
        for part in parts[:-1]:
            target = target.setdefault(part, {})
        target[parts[-1]] = value
    return doc


def _merge(base: dict, override: dict) -> dict:
    out = dict(base)
    for key, value in override.items():
        if isinstance(value, dict) and isinstance(out.get(key), dict):
            out[key] = _merge(out[key], value)
        else:
            out[key] = value
    return out


def main(argv=None) -> int:
    parser = argparse.ArgumentParser(
        prog="polarprior",
        description="Structured priors on semi-orthogonal matrices: sampling, "
        "theory checks, and HMC model fitting.",
    )
    parser.add_argument("command", choices=COMMANDS)
    parser.add_argument("--config", help="path to a JSON config document")
    parser.add_argument(
        "--set",
        dest="overrides",
        action="append",
        default=[],
        metavar="KEY=VALUE",
        help="inline config override (JSON value; dotted keys nest)",
    )
    parser.add_argument(
        "--log", help="write a run log (seed, config hash, versions) to this path"
    )
    args = parser.parse_args(argv)

    try:
        doc: dict = {}
        if args.config:
            with open(args.config) as fh:
                doc = json.load(fh)
        doc = _merge(doc, _parse_set(args.overrides))
        doc["command"] = args.command
        config = parse_config(doc)
        run_command(config, log_path=args.log)
    except PolarPriorError as exc:
        print(
            json.dumps({"error": type(exc).__name__, "message": str(exc)}),
            file=sys.stderr,
        )
        return 1
    except (OSError, json.JSONDecodeError) as exc:
        print(
            json.dumps({"error": type(exc).__name__, "message": str(exc)}),
            file=sys.stderr,
        )
        return 1
    return 0


if __name__ == "__main__":
    sys.exit(main())
