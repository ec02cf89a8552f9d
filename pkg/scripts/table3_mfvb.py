"""Mean-field variational fit: estimates, cycles to convergence and final ELBO."""

import argparse
import time

from _common import PARAMS, StudyConfig, print_table, save

from surme import simulate


def main():
    ap = argparse.ArgumentParser(description=__doc__)
    ap.add_argument("--case", default="I-1", choices=sorted(simulate.CASES))
    ap.add_argument("--reps", type=int, default=20)
    ap.add_argument("--seed", type=int, default=2024)
    ap.add_argument("--out")
    a = ap.parse_args()
    cfg = StudyConfig(case=a.case, estimator="mfvb", reps=a.reps, seed=a.seed, out=a.out)
    dgp = simulate.case_config(cfg.case)
    t = time.perf_counter()
    s = simulate.replicate_study(dgp, "mfvb", cfg.reps, seed=cfg.seed)
    print(f"MFVB, case {cfg.case}, {cfg.reps} reps, {time.perf_counter() - t:.1f}s")
    print_table(s, PARAMS, dgp.truth())
    print(f"cycles = {s.extra['cycles']:.1f}, ELBO = {s.extra['elbo']:.1f}, "
          f"converged {s.extra['converged']}/{cfg.reps}")
    save(s, cfg)


if __name__ == "__main__":
    main()
