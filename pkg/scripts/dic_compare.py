"""DIC and p_D for Bayesian SUR (W as covariate) versus the measurement-error
model, over several simulated datasets."""

import argparse

from surme import gibbs, simulate
from surme.model import PriorSpec
from surme.stats_core import make_rng, spawn_seeds


def main():
    ap = argparse.ArgumentParser(description=__doc__)
    ap.add_argument("--case", default="I-1", choices=sorted(simulate.CASES))
    ap.add_argument("--seeds", type=int, default=10)
    ap.add_argument("--seed", type=int, default=2031)
    ap.add_argument("--draws", type=int, default=11_000)
    ap.add_argument("--thin", type=int, default=10)
    a = ap.parse_args()
    print(f"{'rep':>4s} {'pD SUR':>9s} {'pD SURME':>9s} {'DIC SUR':>10s} {'DIC SURME':>10s}")
    for i, seq in enumerate(spawn_seeds(a.seed, a.seeds)):
        data = simulate.generate_dataset(simulate.case_config(a.case), make_rng(seq.spawn(1)[0]))
        priors = PriorSpec.default(data.k, data.M)
        cfg = gibbs.McmcConfig(draws=a.draws, burnin=1_000, thin=a.thin, seed=i)
        s1 = gibbs.gibbs_sur(data, priors, cfg)[1].scores
        s2 = gibbs.gibbs_surme(data, priors, cfg)[1].scores
        print(f"{i:4d} {s1['p_d']:9.2f} {s2['p_d']:9.2f} {s1['dic']:10.1f} {s2['dic']:10.1f}")


if __name__ == "__main__":
    main()
