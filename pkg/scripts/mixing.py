"""Unthinned-chain autocorrelation of gamma and the implied optimal thinning."""

import argparse
import time

import numpy as np

from surme import diagnostics as dg
from surme import gibbs, simulate
from surme.model import PriorSpec
from surme.stats_core import make_rng


def main():
    ap = argparse.ArgumentParser(description=__doc__)
    ap.add_argument("--case", default="I-1", choices=sorted(simulate.CASES))
    ap.add_argument("--draws", type=int, default=51_000)
    ap.add_argument("--seed", type=int, default=1)
    ap.add_argument("--cost-ratio", type=float, default=2.71,
                    help="cost of a retained draw relative to one sweep")
    a = ap.parse_args()
    data = simulate.generate_dataset(simulate.case_config(a.case), make_rng(a.seed))
    priors = PriorSpec.default(data.k, data.M)
    t = time.perf_counter()
    chain, _ = gibbs.gibbs_surme(data, priors, gibbs.McmcConfig(draws=a.draws, burnin=1_000, thin=1, seed=a.seed))
    print(f"{a.draws} sweeps in {time.perf_counter() - t:.1f}s")
    for m in range(data.M):
        g = chain.draws["gamma"][:, m]
        r = dg.acf(g, 100)
        k = dg.optimal_thinning(min(r[1], 0.999999), a.cost_ratio)
        thinned = g[99::100]
        ineff = dg.inefficiency_factor(thinned) if len(thinned) >= 100 else float("nan")
        print(f"gamma{m + 1}: rho1={r[1]:.3f} rho10={r[10]:.3f} rho100={r[100]:.3f} "
              f"optimal k={k} IF(thin 100)={ineff:.3f}")
    print(f"reference: optimal_thinning(0.995, {a.cost_ratio}) = {dg.optimal_thinning(0.995, a.cost_ratio)}")
    lags = np.array([1, 2, 5, 10, 20, 50, 100])
    print("lag   " + " ".join(f"{x:6d}" for x in lags))
    print("rho   " + " ".join(f"{v:6.3f}" for v in dg.acf(chain.draws['gamma'][:, 0], 100)[lags]))


if __name__ == "__main__":
    main()
