import math

import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st
from scipy import stats

from surme import diagnostics as dg
from surme.gibbs import GibbsChain, McmcConfig
from surme.model import ParamState
from surme.stats_core import make_rng

pytestmark = pytest.mark.property


def ar1(rho, n, seed):
    rng = make_rng(seed)
    e = rng.standard_normal(n)
    x = np.empty(n)
    x[0] = e[0] / math.sqrt(1 - rho**2)
    for t in range(1, n):
        x[t] = rho * x[t - 1] + e[t]
    return x


def test_acf_of_ar1():
    x = ar1(0.7, 200_000, 1)
    r = dg.acf(x, 5)
    assert r[0] == 1.0
    assert np.allclose(r[1:], 0.7 ** np.arange(1, 6), atol=0.01)
    assert dg.autocorrelation(x, 3) == pytest.approx(r[3], abs=1e-12)


def test_inefficiency_factor_of_ar1():
    for rho in (0.0, 0.5, 0.9):
        x = ar1(rho, 200_000, 2)
        assert dg.inefficiency_factor(x) == pytest.approx((1 + rho) / (1 - rho), rel=0.08)


def test_inefficiency_factor_needs_100_draws():
    with pytest.raises(ValueError):
        dg.inefficiency_factor(np.zeros(99))


def test_constant_chain():
    x = np.full(500, 3.0)
    assert dg.acf(x, 3).tolist() == [1.0, 0.0, 0.0, 0.0]
    assert dg.inefficiency_factor(x) >= 0


def test_geweke_size_calibration():
    # the first-10% window needs a few hundred draws before the 4% taper is
    # accurate; at length 1000 acceptance sits near 93.4%
    rng = make_rng(3)
    p = np.array([dg.geweke_cd(rng.standard_normal(5000))[1] for _ in range(1000)])
    accept = np.mean(p > 0.05)
    assert 0.93 <= accept <= 0.97, accept


def test_geweke_detects_drift():
    x = make_rng(4).standard_normal(2000) + np.linspace(0, 2, 2000)
    z, p = dg.geweke_cd(x)
    assert p < 0.01 and z < 0


def test_geweke_needs_200_draws():
    with pytest.raises(ValueError):
        dg.geweke_cd(np.zeros(199))


def test_optimal_thinning_reference_value():
    assert dg.optimal_thinning(0.995, 2.71) == 86


def test_optimal_thinning_edges():
    assert dg.optimal_thinning(0.0, 5.0) == 1
    with pytest.raises(ValueError):
        dg.optimal_thinning(1.0, 1.0)
    # brute-force check of the objective
    rho, c = 0.9, 3.0
    k = np.arange(1, 500)
    obj = (k + c) * (1 + rho**k) / (1 - rho**k)
    assert dg.optimal_thinning(rho, c) == k[np.argmin(obj)]


def test_hpdi_examples():
    x = np.arange(1, 11, dtype=float)
    assert dg.hpdi(x, 0.5) == (1.0, 5.0)  # all windows equal width: lowest start wins
    skew = np.array([0, 0.1, 0.2, 0.3, 5, 9, 10.0])
    assert dg.hpdi(skew, 0.5) == (0.0, 0.3)


def test_hpdi_of_normal_draws():
    x = make_rng(5).standard_normal(200_000)
    lo, hi = dg.hpdi(x, 0.95)
    assert lo == pytest.approx(-1.96, abs=0.03) and hi == pytest.approx(1.96, abs=0.03)


@settings(max_examples=60, deadline=None)
@given(st.lists(st.floats(-1e3, 1e3), min_size=5, max_size=200), st.floats(0.5, 0.99))
def test_hpdi_properties(values, prob):
    x = np.array(values)
    lo, hi = dg.hpdi(x, prob)
    assert np.mean((x >= lo) & (x <= hi)) >= prob - 1e-12
    elo, ehi = dg.equal_tailed(x, prob)
    s = np.sort(x)
    m = math.ceil(prob * len(x))
    assert hi - lo <= np.min(s[m - 1:] - s[: len(s) - m + 1]) + 1e-9
    assert lo >= x.min() and hi <= x.max()


@settings(max_examples=40, deadline=None)
@given(st.lists(st.floats(-100, 100), min_size=3, max_size=300))
def test_acf_bounded(values):
    x = np.array(values)
    r = dg.acf(x, min(10, len(x) - 1))
    assert np.all(np.abs(r) <= 1 + 1e-9)


@settings(max_examples=30, deadline=None)
@given(st.integers(0, 10_000), st.floats(-0.9, 0.95))
def test_inefficiency_nonnegative(seed, rho):
    assert dg.inefficiency_factor(ar1(rho, 300, seed)) >= 0


def test_kde_density_normal():
    x = make_rng(6).standard_normal(50_000)
    grid, dens = dg.kde_density(x, 512)
    assert np.trapezoid(dens, grid) == pytest.approx(1.0, abs=1e-9)
    mid = np.abs(grid) < 2
    assert np.max(np.abs(dens[mid] - stats.norm.pdf(grid[mid]))) < 0.02


def test_kde_rejects_constant_draws():
    with pytest.raises(ValueError):
        dg.kde_density(np.ones(50))


# ---------------------------------------------------------------------------
# integrated likelihood


def _fixture():
    rng = make_rng(8)
    N = 3
    X = tuple(np.column_stack([np.ones(N), rng.uniform(0, 2, N)]) for _ in range(2))
    from surme.model import SurDataset

    data = SurDataset(rng.normal(3, 1, (N, 2)), X, rng.normal(1, 0.5, (N, 2)))
    params = ParamState(
        beta=np.array([1.0, 0.5, 0.8, -0.2]), gamma=np.array([1.2, 0.7]),
        sigma_eps=np.array([[0.6, 0.2], [0.2, 0.4]]), sigma_z2=0.5, sigma_u2=0.3,
        Z=np.zeros((N, 2)), omega=np.array([0.6, 0.3, 0.9, 0.1]),
    )
    return data, params


def test_integrated_loglik_matches_monte_carlo():
    data, p = _fixture()
    rng = make_rng(9)
    n = 200_000
    mean_z = p.exposure_mean(data)
    total, var = 0.0, 0.0
    ydist = stats.multivariate_normal(np.zeros(2), p.sigma_eps)
    for i in range(data.N):
        z = mean_z[i] + math.sqrt(p.sigma_z2) * rng.standard_normal((n, 2))
        resid = data.y[i] - data.xprod(p.beta)[i] - z * p.gamma
        like = ydist.pdf(resid) * np.prod(stats.norm.pdf(data.W[i], z, math.sqrt(p.sigma_u2)), axis=1)
        m = like.mean()
        total += math.log(m)
        var += like.var() / n / m**2
    assert dg.integrated_loglik(p, data) == pytest.approx(total, abs=3 * math.sqrt(var))


def test_sur_loglik_is_gaussian():
    data, p = _fixture()
    resid = data.y - data.xprod(p.beta) - data.W * p.gamma
    ref = stats.multivariate_normal(np.zeros(2), p.sigma_eps).logpdf(resid).sum()
    assert dg.sur_loglik(p, data) == pytest.approx(ref)


def test_dic_identity_and_sign_of_pd():
    data, p = _fixture()
    rng = make_rng(10)
    n = 400
    draws = {
        "beta": p.beta + 0.05 * rng.standard_normal((n, 4)),
        "gamma": p.gamma + 0.05 * rng.standard_normal((n, 2)),
        "sigma_eps": np.repeat(p.sigma_eps[None], n, axis=0),
        "sigma_z2": np.full(n, p.sigma_z2), "sigma_u2": np.full(n, p.sigma_u2),
        "omega": p.omega + 0.05 * rng.standard_normal((n, 4)),
    }
    chain = GibbsChain("surme", draws, McmcConfig(draws=n + 1, burnin=1, thin=1), k=(2, 2))
    s = dg.dic(chain, data, "surme")
    assert s.dic == s.mean_deviance + s.p_d
    # deviance is convex-ish near the mode, so jitter raises the mean deviance
    assert s.p_d > 0


def test_chain_diag_fields():
    d = dg.chain_diag(ar1(0.5, 1000, 11), thin=10)
    assert len(d.rho) == dg.LAG_CAP and d.thin == 10 and d.n == 1000
    assert np.isfinite(d.inefficiency) and np.isfinite(d.geweke_cd) and 0 <= d.geweke_p <= 1
