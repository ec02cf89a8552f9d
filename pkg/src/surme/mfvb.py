"""Mean-field variational Bayes (coordinate ascent) for the measurement-error SUR model.

The factorization is q(beta) q(gamma) q(Sigma^-1) q(omega) q(sigma_z2)
q(sigma_u2) prod_i q(Z_i), with normal, Wishart and inverse-gamma factors.
"""

from __future__ import annotations

import logging
import math
import time
from dataclasses import dataclass, field, fields

import numpy as np
from scipy import special, stats

from .gibbs import w_residual_variance
from .model import FitReport, ParamSummary, PriorSpec, SurDataset, validate
from .stats_core import PdError, pd_inverse, pd_logdet

log = logging.getLogger(__name__)

LOG2PI = math.log(2 * math.pi)


class CaviError(PdError):
    def __init__(self, step: str, cause: PdError):
        self.step = step
        super().__init__(cause.name, f"CAVI step ({step})")


@dataclass
class VariationalState:
    mu_beta: np.ndarray
    Sigma_beta: np.ndarray
    mu_gamma: np.ndarray
    Sigma_gamma: np.ndarray
    nu1: float
    B_sigma: np.ndarray  # Wishart scale of q(Sigma^-1); E[Sigma^-1] = nu1 * B_sigma
    mu_Z: np.ndarray
    Sigma_Z: np.ndarray  # shared by every observation
    delta1_star: float
    B_sigma_z2: float
    delta3_star: float
    B_sigma_u2: float
    mu_omega: np.ndarray | None = None
    Sigma_omega: np.ndarray | None = None
    mu_mu: np.ndarray | None = None
    var_mu: float | None = None  # q(mu) covariance is var_mu * I
    elbo_trace: list = field(default_factory=list)
    cycles: int = 0
    converged: bool = False

    def copy(self) -> "VariationalState":
        kw = {}
        for f in fields(self):
            v = getattr(self, f.name)
            kw[f.name] = v.copy() if isinstance(v, (np.ndarray, list)) else v
        return VariationalState(**kw)

    @property
    def E_prec(self) -> np.ndarray:
        return self.nu1 * self.B_sigma

    @property
    def E_inv_sz2(self) -> float:
        return self.delta1_star / self.B_sigma_z2

    @property
    def E_inv_su2(self) -> float:
        return self.delta3_star / self.B_sigma_u2

    @property
    def E_sigma_z2(self) -> float:
        if self.delta1_star <= 1:
            raise ValueError("E_q(sigma_z2) undefined for shape <= 1")
        return self.B_sigma_z2 / (self.delta1_star - 1)

    def exposure_mean(self, data: SurDataset) -> np.ndarray:
        if self.mu_omega is not None:
            return data.xprod(self.mu_omega)
        return np.broadcast_to(self.mu_mu, (data.N, data.M))

    def exposure_trace(self, data: SurDataset) -> float:
        """Sum_i tr(Cov_q of the exposure mean of observation i)."""
        if self.Sigma_omega is not None:
            return float(np.sum(self.Sigma_omega * data.XtX))
        return data.N * data.M * self.var_mu


def initial_state(data: SurDataset, priors: PriorSpec) -> VariationalState:
    N, M = data.N, data.M
    v = w_residual_variance(data)
    d1 = priors.delta1 + 0.5 * N * M
    d3 = priors.delta3 + 0.5 * N * M
    nu1 = priors.nu0 + N
    # E_q[1/sigma^2] starts at 1/(0.8 v) and 1/(0.2 v)
    st = VariationalState(
        mu_beta=np.array(priors.beta0, dtype=float), Sigma_beta=np.array(priors.B0, dtype=float),
        mu_gamma=np.array(priors.gamma0, dtype=float), Sigma_gamma=np.array(priors.G0, dtype=float),
        nu1=nu1, B_sigma=priors.nu0 * np.asarray(priors.S0, dtype=float) / nu1,
        mu_Z=np.array(data.W, dtype=float),
        Sigma_Z=np.eye(M) / (1.0 / (0.8 * v) + 1.0 / (0.2 * v)),
        delta1_star=d1, B_sigma_z2=0.8 * v * d1, delta3_star=d3, B_sigma_u2=0.2 * v * d3,
    )
    if priors.exposure:
        st.mu_omega = np.array(priors.omega0, dtype=float)
        st.Sigma_omega = np.array(priors.O0, dtype=float)
    else:
        st.mu_mu = np.array(priors.mu0, dtype=float)
        st.var_mu = float(priors.sigma_mu2)
    return st


def _inv(a: np.ndarray, step: str) -> np.ndarray:
    try:
        return pd_inverse(a, f"step {step}")
    except PdError as exc:
        raise CaviError(step, exc) from None


def expected_resid_outer(st: VariationalState, data: SurDataset) -> np.ndarray:
    """Sum_i E_q[r_i r_i'] for r_i = y_i - X_i beta - diag(Z_i) gamma."""
    r = data.y - data.xprod(st.mu_beta) - st.mu_Z * st.mu_gamma
    zz = st.mu_Z.T @ st.mu_Z
    return (
        r.T @ r
        + np.einsum("mlkj,kj->ml", data.cross, st.Sigma_beta)
        + zz * st.Sigma_gamma
        + data.N * st.Sigma_Z * (st.Sigma_gamma + np.outer(st.mu_gamma, st.mu_gamma))
    )


def cavi_cycle(state: VariationalState, data: SurDataset, priors: PriorSpec) -> VariationalState:
    """One coordinate-ascent pass, updates (a) through (k) in order."""
    st = state.copy()
    N, M = data.N, data.M
    eye = np.eye(M)

    lam = st.E_prec
    # (a), (b) q(beta)
    st.Sigma_beta = _inv(np.einsum("ml,mlkj->kj", lam, data.cross) + priors.B0_inv, "a")
    ystar = data.y - st.mu_Z * st.mu_gamma
    st.mu_beta = st.Sigma_beta @ (data.xt(ystar @ lam) + priors.B0_inv @ priors.beta0)
    # (c), (d) q(gamma)
    ezz = N * st.Sigma_Z + st.mu_Z.T @ st.mu_Z
    st.Sigma_gamma = _inv(ezz * lam + priors.G0_inv, "c")
    ytilde = data.y - data.xprod(st.mu_beta)
    st.mu_gamma = st.Sigma_gamma @ ((st.mu_Z * (ytilde @ lam)).sum(axis=0) + priors.G0_inv @ priors.gamma0)
    # (e) q(Sigma^-1)
    st.B_sigma = _inv(priors.S0_inv + expected_resid_outer(st, data), "e")
    lam = st.E_prec
    # (f), (g) inverse-gamma rates
    dz = st.mu_Z - st.exposure_mean(data)
    trz = N * np.trace(st.Sigma_Z)
    st.B_sigma_z2 = priors.delta2 + 0.5 * (float(np.sum(dz * dz)) + trz + st.exposure_trace(data))
    du = data.W - st.mu_Z
    st.B_sigma_u2 = priors.delta4 + 0.5 * (float(np.sum(du * du)) + trz)
    ez = st.E_inv_sz2
    eu = st.E_inv_su2
    # (h), (i) q(omega) or q(mu)
    if priors.exposure:
        st.Sigma_omega = _inv(ez * data.XtX + priors.O0_inv, "h")
        st.mu_omega = st.Sigma_omega @ (ez * data.xt(st.mu_Z) + priors.O0_inv @ priors.omega0)
    else:
        st.var_mu = 1.0 / (ez * N + 1.0 / priors.sigma_mu2)
        st.mu_mu = st.var_mu * (ez * st.mu_Z.sum(axis=0) + np.asarray(priors.mu0) / priors.sigma_mu2)
    # (j), (k) q(Z_i); the covariance is common to all i
    egg = st.Sigma_gamma + np.outer(st.mu_gamma, st.mu_gamma)
    st.Sigma_Z = _inv(egg * lam + (ez + eu) * eye, "j")
    rhs = (ytilde @ lam) * st.mu_gamma + eu * data.W + ez * st.exposure_mean(data)
    st.mu_Z = rhs @ st.Sigma_Z
    st.cycles += 1
    return st


# ---------------------------------------------------------------------------
# evidence lower bound


def _mvdigamma(a: float, M: int) -> float:
    return float(sum(special.digamma(a - 0.5 * j) for j in range(M)))


def _normal_prior_term(mu, Sigma, m0, S0, S0_inv) -> float:
    d = mu - m0
    k = len(mu)
    return -0.5 * (k * LOG2PI + pd_logdet(S0) + d @ S0_inv @ d + np.sum(S0_inv * Sigma))


def _normal_entropy(Sigma) -> float:
    k = Sigma.shape[0]
    return 0.5 * (k * (1 + LOG2PI) + pd_logdet(Sigma))


def _ig_terms(shape, rate, a0, b0):
    """E_q[log p] + H[q] for sigma^2 ~ IG(a0, b0) prior and IG(shape, rate) q."""
    e_log = math.log(rate) - special.digamma(shape)
    e_inv = shape / rate
    prior = a0 * math.log(b0) - special.gammaln(a0) - (a0 + 1) * e_log - b0 * e_inv
    entropy = shape + math.log(rate) + special.gammaln(shape) - (shape + 1) * special.digamma(shape)
    return prior + entropy, e_log, e_inv


def elbo(state: VariationalState, data: SurDataset, priors: PriorSpec) -> float:
    """E_q[log p(y, W, Z, params)] - E_q[log q], all normalizing constants included."""
    st = state
    N, M = data.N, data.M
    nu1, B = st.nu1, st.B_sigma
    lam = nu1 * B
    e_logdet_lam = _mvdigamma(0.5 * nu1, M) + M * math.log(2) + pd_logdet(B)

    # y | Z, beta, gamma, Sigma
    R = expected_resid_outer(st, data)
    val = -0.5 * N * M * LOG2PI + 0.5 * N * e_logdet_lam - 0.5 * float(np.sum(lam * R))

    # sigma_u2 / sigma_z2 factors (prior + entropy), and their log-expectations
    t_u, elog_u, einv_u = _ig_terms(st.delta3_star, st.B_sigma_u2, priors.delta3, priors.delta4)
    t_z, elog_z, einv_z = _ig_terms(st.delta1_star, st.B_sigma_z2, priors.delta1, priors.delta2)
    val += t_u + t_z

    trz = N * np.trace(st.Sigma_Z)
    du = data.W - st.mu_Z
    val += -0.5 * N * M * (LOG2PI + elog_u) - 0.5 * einv_u * (float(np.sum(du * du)) + trz)
    dz = st.mu_Z - st.exposure_mean(data)
    val += -0.5 * N * M * (LOG2PI + elog_z) - 0.5 * einv_z * (
        float(np.sum(dz * dz)) + trz + st.exposure_trace(data))

    # normal priors and entropies
    val += _normal_prior_term(st.mu_beta, st.Sigma_beta, priors.beta0, priors.B0, priors.B0_inv)
    val += _normal_entropy(st.Sigma_beta)
    val += _normal_prior_term(st.mu_gamma, st.Sigma_gamma, priors.gamma0, priors.G0, priors.G0_inv)
    val += _normal_entropy(st.Sigma_gamma)
    if priors.exposure:
        val += _normal_prior_term(st.mu_omega, st.Sigma_omega, priors.omega0, priors.O0, priors.O0_inv)
        val += _normal_entropy(st.Sigma_omega)
    else:
        s2 = priors.sigma_mu2
        d = st.mu_mu - np.asarray(priors.mu0)
        val += -0.5 * (M * (LOG2PI + math.log(s2)) + (d @ d + M * st.var_mu) / s2)
        val += 0.5 * M * (1 + LOG2PI + math.log(st.var_mu))
    val += N * _normal_entropy(st.Sigma_Z)

    # Wishart prior on Sigma^-1 and entropy of q(Sigma^-1)
    nu0, S0 = priors.nu0, priors.S0
    val += (0.5 * (nu0 - M - 1) * e_logdet_lam - 0.5 * float(np.sum(priors.S0_inv * lam))
            - 0.5 * nu0 * M * math.log(2) - 0.5 * nu0 * pd_logdet(S0) - special.multigammaln(0.5 * nu0, M))
    val += (-0.5 * (nu1 - M - 1) * e_logdet_lam + 0.5 * nu1 * M + 0.5 * nu1 * M * math.log(2)
            + 0.5 * nu1 * pd_logdet(B) + special.multigammaln(0.5 * nu1, M))
    return float(val)


# ---------------------------------------------------------------------------
# driver and reporting


def gamma_sd_correction(sigma_gamma, state: VariationalState, K: int | None = None) -> np.ndarray:
    """Inflate reported gamma standard deviations by sqrt(M K / E_q[sigma_z2])."""
    sd = np.asarray(sigma_gamma, dtype=float)
    M = len(state.mu_gamma)
    K = len(state.mu_beta) if K is None else K
    if state.delta1_star <= 1:
        raise ValueError("gamma correction needs delta1_star > 1")
    return sd * math.sqrt(M * K / state.E_sigma_z2)


def cavi_fit(data: SurDataset, priors: PriorSpec, tol: float = 1e-7, max_cycles: int = 5000,
             state: VariationalState | None = None) -> tuple[VariationalState, FitReport]:
    """Iterate CAVI cycles until the relative ELBO increase drops below ``tol``."""
    if not tol > 0:
        raise ValueError("tol must be positive")
    validate(data, priors)
    start = time.perf_counter()
    st = state.copy() if state is not None else initial_state(data, priors)
    prev = elbo(st, data, priors)
    st.elbo_trace = []
    st.converged = False
    for _ in range(max_cycles):
        st = cavi_cycle(st, data, priors)
        cur = elbo(st, data, priors)
        st.elbo_trace.append(cur)
        if (cur - prev) / abs(prev) < tol:
            st.converged = True
            break
        prev = cur
    if not st.converged:
        log.warning("CAVI did not converge in %d cycles", max_cycles)
    report = summarize_state(st, data, priors)
    report.runtime = time.perf_counter() - start
    return st, report


def _normal_summary(mean, sd, prob=0.95) -> ParamSummary:
    z = stats.norm.ppf(0.5 + prob / 2)
    return ParamSummary(mean=float(mean), sd=float(sd), lower=float(mean - z * sd),
                        upper=float(mean + z * sd), interval="equal-tailed")


def _ig_summary(shape, rate, prob=0.95) -> ParamSummary:
    dist = stats.invgamma(shape, scale=rate)
    a = (1 - prob) / 2
    return ParamSummary(mean=float(dist.mean()), sd=float(dist.std()), lower=float(dist.ppf(a)),
                        upper=float(dist.ppf(1 - a)), interval="equal-tailed")


def sigma_eps_moments(st: VariationalState):
    """Mean and elementwise sd of Sigma_eps when Sigma_eps^-1 ~ W(nu1, B)."""
    M = st.B_sigma.shape[0]
    psi = pd_inverse(st.B_sigma, "B_sigma")
    nu = st.nu1
    mean = psi / (nu - M - 1)
    d = np.diag(psi)
    var = ((nu - M + 1) * psi**2 + (nu - M - 1) * np.outer(d, d)) / (
        (nu - M) * (nu - M - 1) ** 2 * (nu - M - 3))
    return mean, np.sqrt(var), psi


def summarize_state(st: VariationalState, data: SurDataset, priors: PriorSpec,
                    prob: float = 0.95) -> FitReport:
    report = FitReport(method="mfvb")
    sd_beta = np.sqrt(np.diag(st.Sigma_beta))
    for name, m, s in zip(data.coef_names("beta"), st.mu_beta, sd_beta):
        report.params[name] = _normal_summary(m, s, prob)
    raw_sd = np.sqrt(np.diag(st.Sigma_gamma))
    sd_gamma = gamma_sd_correction(raw_sd, st, data.K)
    for j, (m, s) in enumerate(zip(st.mu_gamma, sd_gamma)):
        report.params[f"gamma{j + 1}"] = _normal_summary(m, s, prob)
    report.params["sigma_z2"] = _ig_summary(st.delta1_star, st.B_sigma_z2, prob)
    report.params["sigma_u2"] = _ig_summary(st.delta3_star, st.B_sigma_u2, prob)
    mean, sd, psi = sigma_eps_moments(st)
    M = data.M
    a = (1 - prob) / 2
    for i in range(M):
        for j in range(i, M):
            name = f"sigma{i + 1}{j + 1}"
            if i == j:
                # diagonal entries of an inverse Wishart are inverse gamma
                dist = stats.invgamma(0.5 * (st.nu1 - M + 1), scale=0.5 * psi[i, i])
                report.params[name] = ParamSummary(float(mean[i, i]), float(sd[i, i]),
                                                   float(dist.ppf(a)), float(dist.ppf(1 - a)),
                                                   "equal-tailed")
            else:
                report.params[name] = _normal_summary(mean[i, j], sd[i, j], prob)
    if st.mu_omega is not None:
        sd_om = np.sqrt(np.diag(st.Sigma_omega))
        for name, m, s in zip(data.coef_names("omega"), st.mu_omega, sd_om):
            report.params[name] = _normal_summary(m, s, prob)
    else:
        for j, m in enumerate(st.mu_mu):
            report.params[f"mu{j + 1}"] = _normal_summary(m, math.sqrt(st.var_mu), prob)
    if M >= 2:
        report.derived["rho_eps12"] = float(mean[0, 1] / math.sqrt(mean[0, 0] * mean[1, 1]))
    ez = st.E_sigma_z2
    eu = st.B_sigma_u2 / (st.delta3_star - 1)
    report.derived["reliability_ratio"] = float(ez / (ez + eu))
    report.derived["gamma_sd_uncorrected"] = [float(s) for s in raw_sd]
    report.info.update(
        cycles=st.cycles, converged=st.converged,
        elbo=st.elbo_trace[-1] if st.elbo_trace else None,
        elbo_trace=[float(v) for v in st.elbo_trace],
        N=data.N, M=data.M, K=data.K, dataset=data.digest(),
    )
    return report
