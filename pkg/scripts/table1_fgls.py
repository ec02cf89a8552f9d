"""Two-step FGLS on Case-I data with W used as the covariate: attenuation of gamma."""

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
    cfg = StudyConfig(case=a.case, estimator="fgls", reps=a.reps, seed=a.seed, out=a.out)
    dgp = simulate.case_config(cfg.case)
    t = time.perf_counter()
    s = simulate.replicate_study(dgp, "fgls", cfg.reps, seed=cfg.seed)
    print(f"FGLS, case {cfg.case}, {cfg.reps} reps, {time.perf_counter() - t:.1f}s, {s.failures} failed")
    print_table(s, PARAMS, dgp.truth())
    print(f"rho_eps12 = {s.extra['derived'].get('rho_eps12', float('nan')):.3f}")
    save(s, cfg)


if __name__ == "__main__":
    main()
