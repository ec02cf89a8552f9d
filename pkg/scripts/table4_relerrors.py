"""Relative errors for every (sigma_z2, R_z) cell and estimator."""

import argparse

from _common import PARAMS

from surme import simulate


def main():
    ap = argparse.ArgumentParser(description=__doc__)
    ap.add_argument("--reps", type=int, default=20)
    ap.add_argument("--gibbs-reps", type=int, default=0, help="Gibbs replications per cell (slow)")
    ap.add_argument("--seed", type=int, default=2024)
    a = ap.parse_args()
    cols = [p for p in PARAMS]
    print(f"{'cell':>6s} {'estimator':>12s} " + " ".join(f"{c:>8s}" for c in cols))
    for case in simulate.CASES:
        dgp = simulate.case_config(case)
        runs = [("fgls", a.reps), ("mfvb", a.reps)]
        if a.gibbs_reps:
            runs.insert(1, ("gibbs-surme", a.gibbs_reps))
        for est, reps in runs:
            s = simulate.replicate_study(dgp, est, reps, seed=a.seed)
            vals = [s.rel_error.get(c, float("nan")) for c in cols]
            print(f"{case:>6s} {est:>12s} " + " ".join(f"{v:8.3f}" for v in vals))


if __name__ == "__main__":
    main()
