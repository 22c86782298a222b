"""Monte Carlo tail-class check over all eight variants and three regimes.

Prints one row per (variant, delta, mode) with the chi ladder, the slope
estimate, the verdict, and whether it matches the analytic classification.

Usage: python scripts/verify_classes_all.py [--pairs 1000000] [--seed 0]
"""

from __future__ import annotations

import argparse
import sys
from pathlib import Path

sys.path.insert(0, str(Path(__file__).resolve().parent.parent / "src"))

from stmix.chi import verify_dependence_class
from stmix.mixture import VARIANTS, CopulaSpec
from stmix.rng import derive_seed


def main() -> None:
    ap = argparse.ArgumentParser()
    ap.add_argument("--pairs", type=int, default=1_000_000)
    ap.add_argument("--seed", type=int, default=0)
    args = ap.parse_args()

    i = 0
    for variant in VARIANTS:
        for delta in (0.3, 0.5, 0.7):
            spec = CopulaSpec(variant=variant, delta=delta, phi=1.0, psi1=9.0, psi2=0.5)
            for mode in ("space", "time", "space_time"):
                rep = verify_dependence_class(
                    spec, mode, n_pairs=args.pairs, seed=derive_seed(args.seed, i)
                )
                i += 1
                flag = "ok" if rep.match else "MISMATCH"
                chis = ", ".join(f"{c:.4f}" for c in rep.chi)
                print(
                    f"{variant} delta={delta} {mode:10s}: chi [{chis}] "
                    f"slope {rep.eta_slope:.2f} -> {rep.verdict} (expect {rep.expected}) {flag}"
                )


if __name__ == "__main__":
    main()
