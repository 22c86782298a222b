"""Recovery study for the mixing weight across its two regimes.

Trains one network per variant on a small layout, then estimates delta on
fresh datasets simulated at delta in {0.2, 0.8}. Prints the fraction landing
on the correct side of 0.5 and the median absolute error.

Usage: python scripts/delta_recovery.py [--k 5000] [--tests 50] [--seed 0]
"""

from __future__ import annotations

import argparse
import sys
from pathlib import Path

import numpy as np

sys.path.insert(0, str(Path(__file__).resolve().parent.parent / "src"))

from stmix.chi import chi_grid
from stmix.estimator import estimate, generate_training_set, train_estimator
from stmix.mixture import CopulaSpec, simulate_copula
from stmix.network import TrainConfig
from stmix.rng import derive_seed


def layout(n: int = 15, span: float = 40.0, seed: int = 99) -> np.ndarray:
    rng = np.random.default_rng(seed)
    return rng.uniform(0.0, span, size=(n, 2))


def main() -> None:
    ap = argparse.ArgumentParser()
    ap.add_argument("--k", type=int, default=5000)
    ap.add_argument("--tests", type=int, default=50)
    ap.add_argument("--epochs", type=int, default=40)
    ap.add_argument("--seed", type=int, default=0)
    args = ap.parse_args()

    coords = layout()
    n_years, n_days = 10, 60
    for variant in ("M1", "M3"):
        ts = generate_training_set(
            variant, coords, n_years, n_days, args.k, derive_seed(args.seed, 1), p_censor=0.0
        )
        est = train_estimator(ts, train_config=TrainConfig(epochs=args.epochs, seed=args.seed))
        for delta in (0.2, 0.8):
            spec = CopulaSpec(variant=variant, delta=delta, phi=1.0, psi1=9.0, psi2=0.5)
            errs, correct = [], 0
            for i in range(args.tests):
                panel = simulate_copula(
                    spec, coords, n_years, n_days, derive_seed(args.seed, 2, i)
                )
                d_hat = estimate(est, chi_grid(panel, est.grid_config))["delta"]
                errs.append(abs(d_hat - delta))
                correct += (d_hat > 0.5) == (delta > 0.5)
            print(
                f"{variant} delta={delta}: correct side {correct}/{args.tests}, "
                f"median |err| {np.median(errs):.3f}"
            )


if __name__ == "__main__":
    main()
