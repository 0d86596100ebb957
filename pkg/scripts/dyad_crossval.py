#!/usr/bin/env python3
"""Desk-scale dyad cross-validation: sparse vs standard network eigenmodel.

Simulates a network, repeatedly holds out one third of the dyads, fits
both eigenvector priors on the remainder, and compares held-out AUC.
Three folds at p = 30 keep the runtime in the minutes range; pass
--folds/--p to scale up.

    python3 scripts/dyad_crossval.py --seed 1 --folds 3
"""

import argparse
import sys

import numpy as np

from polarprior.models.eigenmodel import NetworkEigenmodel, auc, simulate_network


def main(argv=None):
    parser = argparse.ArgumentParser(description=__doc__.splitlines()[0])
    parser.add_argument("--seed", type=int, default=1)
    parser.add_argument("--p", type=int, default=30)
    parser.add_argument("--k", type=int, default=2)
    parser.add_argument("--folds", type=int, default=3)
    parser.add_argument("--warmup", type=int, default=400)
    parser.add_argument("--draws", type=int, default=400)
    args = parser.parse_args(argv)

    rng = np.random.default_rng(args.seed)
    data, truth = simulate_network(
        args.p, args.k, c=-1.0, lam=np.array([18.0, -12.0]), rng=rng, ell=0.3
    )
    iu, ju = np.triu_indices(args.p, k=1)
    nd = len(iu)
    order = rng.permutation(nd)
    fold_size = nd // args.folds

    rows = []
    for fold in range(args.folds):
        held = order[fold * fold_size : (fold + 1) * fold_size]
        mask = np.zeros(nd, dtype=bool)
        mask[held] = True
        y_train = data.adjacency.copy()
        y_train[iu[mask], ju[mask]] = np.nan
        y_train[ju[mask], iu[mask]] = np.nan
        labels = data.adjacency[iu[mask], ju[mask]]
        if len(np.unique(labels)) < 2:
            print(f"fold {fold}: single-class holdout, skipped")
            continue
        scores = {}
        for prior_idx, prior in enumerate(("sparse", "uniform")):
            est = NetworkEigenmodel(
                k=args.k,
                prior=prior,
                warmup=args.warmup,
                draws=args.draws,
                chains=2,
                seed=1000 * args.seed + 10 * fold + prior_idx,
            )
            est.fit(y_train)
            scores[prior] = auc(
                est.predict_proba((iu[mask], ju[mask])), labels
            )
        rows.append((fold, scores["sparse"], scores["uniform"]))
        print(
            f"fold {fold}: sparse AUC {scores['sparse']:.3f}  "
            f"uniform AUC {scores['uniform']:.3f}"
        )

    if rows:
        diffs = [s - u for _, s, u in rows]
        print(
            f"\nmedian AUC difference (sparse - uniform): {np.median(diffs):+.4f} "
            f"over {len(rows)} folds"
        )
    return 0


if __name__ == "__main__":
    sys.exit(main())
