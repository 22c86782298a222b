"""Spread of repeated estimates as the number of years grows.

For each N in the list, trains a network on panels with N years and fits 50
fresh datasets at a fixed truth; reports the interquartile range per
parameter. The spread should shrink as N grows.

Usage: python scripts/consistency_study.py [--years 20 100] [--k 3000]
"""

from __future__ import annotations

import argparse
import sys
from pathlib import Path

import numpy as np

sys.path.insert(0, str(Path(__file__).resolve().parent.parent / "src"))

from stmix.chi import chi_grid
from stmix.estimator import PARAM_NAMES, estimate, generate_training_set, train_estimator
from stmix.mixture import CopulaSpec, simulate_copula
from stmix.network import TrainConfig
from stmix.rng import derive_seed

TRUTH = CopulaSpec(variant="M1", delta=0.7, phi=1.0, psi1=7.0, psi2=0.4)


def main() -> None:
    ap = argparse.ArgumentParser()
    ap.add_argument("--years", type=int, nargs="+", default=[20, 100])
    ap.add_argument("--k", type=int, default=3000)
    ap.add_argument("--fits", type=int, default=50)
    ap.add_argument("--epochs", type=int, default=40)
    ap.add_argument("--seed", type=int, default=0)
    args = ap.parse_args()

    rng = np.random.default_rng(99)
    coords = rng.uniform(0.0, 40.0, size=(15, 2))
    for n_years in args.years:
        ts = generate_training_set(
            "M1", coords, n_years, 60, args.k, derive_seed(args.seed, 1, n_years), p_censor=0.0
        )
        est = train_estimator(ts, train_config=TrainConfig(epochs=args.epochs, seed=args.seed))
        draws = {k: [] for k in PARAM_NAMES}
        for i in range(args.fits):
            panel = simulate_copula(
                TRUTH, coords, n_years, 60, derive_seed(args.seed, 2, n_years, i)
            )
            theta = estimate(est, chi_grid(panel, est.grid_config))
            for k in PARAM_NAMES:
                draws[k].append(theta[k])
        iqr = {k: float(np.subtract(*np.percentile(draws[k], [75, 25]))) for k in PARAM_NAMES}
        print(f"N={n_years}: IQR " + ", ".join(f"{k}={v:.3f}" for k, v in iqr.items()))


if __name__ == "__main__":
    main()
