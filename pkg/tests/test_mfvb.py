import math

import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st
from scipy import stats

from _helpers import small_dataset
from surme import mfvb
from surme.model import PriorSpec

pytestmark = pytest.mark.property


@pytest.fixture(scope="module")
def small():
    data = small_dataset(N=8, seed=21)
    priors = PriorSpec.default(data.k, data.M)
    return data, priors


@pytest.fixture(scope="module")
def converged(small):
    data, priors = small
    st, _ = mfvb.cavi_fit(data, priors, tol=1e-13, max_cycles=100_000)
    return st


def _blockdiag_X(data):
    rows = []
    for i in range(data.N):
        for m in range(data.M):
            r = np.zeros(data.K)
            r[data.offsets[m]:data.offsets[m + 1]] = data.X[m][i]
            rows.append(r)
    return np.array(rows)


def test_cycle_matches_dense_formulas(small):
    data, priors = small
    st0 = mfvb.initial_state(data, priors)
    st0 = mfvb.cavi_cycle(st0, data, priors)  # non-trivial starting point
    st1 = mfvb.cavi_cycle(st0, data, priors)
    X = _blockdiag_X(data)
    N, M = data.N, data.M
    lam = st0.nu1 * st0.B_sigma
    Om = np.kron(np.eye(N), lam)
    # q(beta)
    Sb = np.linalg.inv(X.T @ Om @ X + np.linalg.inv(priors.B0))
    mb = Sb @ (X.T @ Om @ (data.y - st0.mu_Z * st0.mu_gamma).ravel() + np.linalg.inv(priors.B0) @ priors.beta0)
    assert np.allclose(st1.Sigma_beta, Sb) and np.allclose(st1.mu_beta, mb)
    # q(gamma): E[D' Om D] with D the NM x M design of Z
    ezz = sum(np.outer(st0.mu_Z[i], st0.mu_Z[i]) + st0.Sigma_Z for i in range(N))
    Sg = np.linalg.inv(ezz * lam + np.linalg.inv(priors.G0))
    ytil = data.y - (X @ mb).reshape(N, M)
    lin = sum(np.diag(st0.mu_Z[i]) @ lam @ ytil[i] for i in range(N))
    mg = Sg @ (lin + np.linalg.inv(priors.G0) @ priors.gamma0)
    assert np.allclose(st1.Sigma_gamma, Sg) and np.allclose(st1.mu_gamma, mg)
    # q(Sigma^-1): E[sum_i e_i e_i'] with all second moments
    R = np.zeros((M, M))
    egg = Sg + np.outer(mg, mg)
    for i in range(N):
        Xi = X[i * M:(i + 1) * M]
        e = data.y[i] - Xi @ mb - st0.mu_Z[i] * mg
        ezi = st0.Sigma_Z + np.outer(st0.mu_Z[i], st0.mu_Z[i])
        R += np.outer(e, e) + Xi @ Sb @ Xi.T + egg * ezi - np.outer(st0.mu_Z[i] * mg, st0.mu_Z[i] * mg)
    assert np.allclose(np.linalg.inv(st1.B_sigma), np.linalg.inv(priors.S0) + R)
    # q(Z_i) given the updated factors
    lam1 = st1.nu1 * st1.B_sigma
    ez, eu = st1.delta1_star / st1.B_sigma_z2, st1.delta3_star / st1.B_sigma_u2
    SZ = np.linalg.inv(egg * lam1 + (ez + eu) * np.eye(M))
    assert np.allclose(st1.Sigma_Z, SZ)
    xo = (X @ st1.mu_omega).reshape(N, M)
    for i in (0, N - 1):
        mz = SZ @ (np.diag(mg) @ lam1 @ ytil[i] + eu * data.W[i] + ez * xo[i])
        assert np.allclose(st1.mu_Z[i], mz)


def _log_joint(data, priors, beta, gamma, lam, Z, sz2, su2, omega):
    M = data.M
    cov = np.linalg.inv(lam)
    e = data.y - data.xprod(beta) - Z * gamma
    v = stats.multivariate_normal(np.zeros(M), cov).logpdf(e).sum()
    v += stats.norm.logpdf(data.W, Z, math.sqrt(su2)).sum()
    v += stats.norm.logpdf(Z, data.xprod(omega), math.sqrt(sz2)).sum()
    v += stats.multivariate_normal(priors.beta0, priors.B0).logpdf(beta)
    v += stats.multivariate_normal(priors.gamma0, priors.G0).logpdf(gamma)
    v += stats.multivariate_normal(priors.omega0, priors.O0).logpdf(omega)
    v += stats.wishart(priors.nu0, priors.S0).logpdf(lam)
    v += stats.invgamma(priors.delta1, scale=priors.delta2).logpdf(sz2)
    v += stats.invgamma(priors.delta3, scale=priors.delta4).logpdf(su2)
    return v


def test_elbo_matches_monte_carlo(small, converged):
    data, priors = small
    st = converged
    rng = np.random.default_rng(5)
    qb = stats.multivariate_normal(st.mu_beta, st.Sigma_beta)
    qg = stats.multivariate_normal(st.mu_gamma, st.Sigma_gamma)
    qo = stats.multivariate_normal(st.mu_omega, st.Sigma_omega)
    ql = stats.wishart(st.nu1, st.B_sigma)
    qz = stats.invgamma(st.delta1_star, scale=st.B_sigma_z2)
    qu = stats.invgamma(st.delta3_star, scale=st.B_sigma_u2)
    qZ = stats.multivariate_normal(np.zeros(data.M), st.Sigma_Z)
    vals = []
    for _ in range(4000):
        b, g, o = qb.rvs(random_state=rng), qg.rvs(random_state=rng), qo.rvs(random_state=rng)
        lam = ql.rvs(random_state=rng)
        sz2, su2 = qz.rvs(random_state=rng), qu.rvs(random_state=rng)
        dZ = qZ.rvs(size=data.N, random_state=rng)
        Z = st.mu_Z + dZ
        lq = (qb.logpdf(b) + qg.logpdf(g) + qo.logpdf(o) + ql.logpdf(lam) + qz.logpdf(sz2)
              + qu.logpdf(su2) + qZ.logpdf(dZ).sum())
        vals.append(_log_joint(data, priors, b, g, lam, Z, sz2, su2, o) - lq)
    vals = np.array(vals)
    se = vals.std(ddof=1) / math.sqrt(len(vals))
    assert mfvb.elbo(st, data, priors) == pytest.approx(vals.mean(), abs=3 * se)


def _perturbed(st, name, factor):
    s = st.copy()
    v = getattr(s, name)
    setattr(s, name, v * factor)
    return s


@pytest.mark.parametrize("name", ["B_sigma_z2", "B_sigma_u2", "B_sigma", "mu_beta", "mu_gamma",
                                  "mu_omega", "mu_Z", "Sigma_Z", "Sigma_gamma", "Sigma_omega"])
def test_fixed_point_is_coordinate_optimal(small, converged, name):
    data, priors = small
    base = mfvb.elbo(converged, data, priors)
    for f in (0.99, 1.01):
        assert mfvb.elbo(_perturbed(converged, name, f), data, priors) < base


def test_elbo_monotone_every_cycle():
    for seed in range(5):
        data = small_dataset(N=60, seed=100 + seed)
        priors = PriorSpec.default(data.k, data.M)
        st, _ = mfvb.cavi_fit(data, priors, tol=1e-10)
        tr = np.array(st.elbo_trace)
        assert np.all(np.diff(tr) >= -1e-8 * np.abs(tr[1:]))


def test_elbo_monotone_without_exposure():
    data = small_dataset(N=60, seed=7)
    priors = PriorSpec.default(data.k, data.M, exposure=False)
    st, rep = mfvb.cavi_fit(data, priors, tol=1e-10)
    tr = np.array(st.elbo_trace)
    assert np.all(np.diff(tr) >= -1e-8 * np.abs(tr[1:]))
    assert "mu1" in rep.params


def test_determinism(small):
    data, priors = small
    a, ra = mfvb.cavi_fit(data, priors)
    b, rb = mfvb.cavi_fit(data, priors)
    assert a.elbo_trace == b.elbo_trace
    ra.runtime = rb.runtime = 0.0
    assert ra.to_dict() == rb.to_dict()


def test_report_fields(small):
    data, priors = small
    st, rep = mfvb.cavi_fit(data, priors)
    assert rep.info["converged"] and rep.info["cycles"] == st.cycles == len(rep.info["elbo_trace"])
    assert rep.info["elbo"] == st.elbo_trace[-1]
    assert all(p.interval == "equal-tailed" for p in rep.params.values())
    raw = rep.derived["gamma_sd_uncorrected"]
    corr = math.sqrt(data.M * data.K / st.E_sigma_z2)
    assert rep.params["gamma1"].sd == pytest.approx(raw[0] * corr)


def test_gamma_correction_formula():
    st = mfvb.VariationalState(
        mu_beta=np.zeros(6), Sigma_beta=np.eye(6), mu_gamma=np.zeros(2), Sigma_gamma=np.eye(2),
        nu1=10, B_sigma=np.eye(2), mu_Z=np.zeros((1, 2)), Sigma_Z=np.eye(2),
        delta1_star=5.0, B_sigma_z2=8.0, delta3_star=3.0, B_sigma_u2=1.0)
    # E_q sigma_z2 = 8 / 4 = 2 -> factor sqrt(2 * 6 / 2)
    assert mfvb.gamma_sd_correction([1.0, 2.0], st) == pytest.approx([math.sqrt(6), 2 * math.sqrt(6)])


def test_max_cycles_reports_not_converged(small):
    data, priors = small
    st, rep = mfvb.cavi_fit(data, priors, max_cycles=3)
    assert st.cycles == 3 and not rep.info["converged"]


@settings(max_examples=8, deadline=None)
@given(st.integers(0, 2**31 - 1), st.integers(15, 40))
def test_elbo_monotone_property(seed, n):
    data = small_dataset(N=n, seed=seed)
    priors = PriorSpec.default(data.k, data.M)
    st, _ = mfvb.cavi_fit(data, priors, tol=1e-9, max_cycles=3000)
    tr = np.array(st.elbo_trace)
    assert np.all(np.diff(tr) >= -1e-8 * np.abs(tr[1:]))
