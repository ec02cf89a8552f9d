"""Gibbs samplers: the measurement-error SUR model and the plain Bayesian SUR baseline."""

from __future__ import annotations

import logging
import time
from dataclasses import dataclass, field

import numpy as np
from scipy import linalg

from . import diagnostics as diag
from .model import FitReport, ParamState, ParamSummary, PriorSpec, SurDataset, validate
from .stats_core import (
    PdError,
    cholesky,
    make_rng,
    pd_inverse,
    sample_invgamma,
    sample_mvn_precision,
    sample_wishart_inv_scale,
)

log = logging.getLogger(__name__)


class SamplerError(RuntimeError):
    """A sweep failed irrecoverably; ``draw`` is the 1-based sweep index."""

    def __init__(self, draw: int, cause: Exception):
        self.draw = draw
        super().__init__(f"sampler failed at draw {draw}: {cause}")


@dataclass(frozen=True)
class McmcConfig:
    draws: int = 51_000
    burnin: int = 1_000
    thin: int = 100
    seed: int = 0
    store_z: bool = False

    def __post_init__(self):
        if not self.draws > self.burnin >= 0:
            raise ValueError("need draws > burnin >= 0")
        if self.thin < 1:
            raise ValueError("thin must be >= 1")

    @property
    def retained(self) -> int:
        return (self.draws - self.burnin) // self.thin


@dataclass
class GibbsChain:
    """Retained (post burn-in, thinned) draws."""

    model: str
    draws: dict[str, np.ndarray]
    config: McmcConfig
    digest: str = ""
    z_mean: np.ndarray | None = None
    z_var: np.ndarray | None = None
    z_draws: np.ndarray | None = None
    k: tuple[int, ...] = ()
    exposure: bool = True

    def __len__(self) -> int:
        return len(self.draws["gamma"])

    def scalar_draws(self) -> dict[str, np.ndarray]:
        """Flatten to named scalar series (beta11, gamma1, sigma12, ...)."""
        out: dict[str, np.ndarray] = {}
        k = self.k
        for m, km in enumerate(k):
            off = sum(k[:m])
            for j in range(km):
                out[f"beta{m + 1}{j + 1}"] = self.draws["beta"][:, off + j]
        M = self.draws["gamma"].shape[1]
        for m in range(M):
            out[f"gamma{m + 1}"] = self.draws["gamma"][:, m]
        if "sigma_z2" in self.draws:
            out["sigma_z2"] = self.draws["sigma_z2"]
            out["sigma_u2"] = self.draws["sigma_u2"]
        for a in range(M):
            for b in range(a, M):
                out[f"sigma{a + 1}{b + 1}"] = self.draws["sigma_eps"][:, a, b]
        if "omega" in self.draws:
            for m, km in enumerate(k):
                off = sum(k[:m])
                for j in range(km):
                    out[f"omega{m + 1}{j + 1}"] = self.draws["omega"][:, off + j]
        if "mu" in self.draws:
            for m in range(M):
                out[f"mu{m + 1}"] = self.draws["mu"][:, m]
        return out

    def posterior_mean_state(self, data: SurDataset) -> ParamState:
        d = self.draws
        mean = lambda key: d[key].mean(axis=0) if key in d else None  # noqa: E731
        z = self.z_mean if self.z_mean is not None else np.asarray(data.W, dtype=float)
        return ParamState(
            beta=mean("beta"), gamma=mean("gamma"), sigma_eps=mean("sigma_eps"),
            sigma_z2=float(mean("sigma_z2")) if "sigma_z2" in d else np.nan,
            sigma_u2=float(mean("sigma_u2")) if "sigma_u2" in d else np.nan,
            Z=z, omega=mean("omega"), mu=mean("mu"),
        )

    def states(self, data: SurDataset):
        """Iterate retained draws as ParamState objects (Z set to the observed readings)."""
        d = self.draws
        for r in range(len(self)):
            yield ParamState(
                beta=d["beta"][r], gamma=d["gamma"][r], sigma_eps=d["sigma_eps"][r],
                sigma_z2=float(d["sigma_z2"][r]) if "sigma_z2" in d else np.nan,
                sigma_u2=float(d["sigma_u2"][r]) if "sigma_u2" in d else np.nan,
                Z=data.W,
                omega=d["omega"][r] if "omega" in d else None,
                mu=d["mu"][r] if "mu" in d else None,
            )


# ---------------------------------------------------------------------------
# conditional updates (Algorithm steps 1-7 and the no-exposure mean update)


def update_beta(state: ParamState, data: SurDataset, priors: PriorSpec, rng) -> np.ndarray:
    lam = state.precision()
    prec = np.einsum("ml,mlkj->kj", lam, data.cross) + priors.B0_inv
    ystar = data.y - state.Z * state.gamma
    lin = data.xt(ystar @ lam) + priors.B0_inv @ priors.beta0
    return sample_mvn_precision(lin, prec, rng, "B1^-1")[0]


def update_gamma(state: ParamState, data: SurDataset, priors: PriorSpec, rng) -> np.ndarray:
    lam = state.precision()
    Z = state.Z
    prec = (Z.T @ Z) * lam + priors.G0_inv
    ytilde = data.y - data.xprod(state.beta)
    lin = (Z * (ytilde @ lam)).sum(axis=0) + priors.G0_inv @ priors.gamma0
    return sample_mvn_precision(lin, prec, rng, "G1^-1")[0]


def update_sigma_eps(state: ParamState, data: SurDataset, priors: PriorSpec, rng) -> np.ndarray:
    """Draw the error precision from its Wishart conditional and return its inverse."""
    resid = data.y - data.xprod(state.beta) - state.Z * state.gamma
    inv_scale = priors.S0_inv + resid.T @ resid
    lam = sample_wishart_inv_scale(priors.nu0 + data.N, inv_scale, rng)
    return pd_inverse(lam, "Sigma_eps^-1 draw")


def update_z(state: ParamState, data: SurDataset, priors: PriorSpec, rng) -> np.ndarray:
    lam = state.precision()
    g = state.gamma
    # M2 is shared by every observation
    m2_inv = np.outer(g, g) * lam + (1.0 / state.sigma_z2 + 1.0 / state.sigma_u2) * np.eye(data.M)
    chol = cholesky(m2_inv, "M2^-1")
    rhs = (
        ((data.y - data.xprod(state.beta)) @ lam) * g
        + data.W / state.sigma_u2
        + state.exposure_mean(data) / state.sigma_z2
    )
    mean = linalg.cho_solve((chol, True), rhs.T, check_finite=False).T
    noise = rng.standard_normal((data.N, data.M))
    return mean + linalg.solve_triangular(chol, noise.T, lower=True, trans="T", check_finite=False).T


def update_omega(state: ParamState, data: SurDataset, priors: PriorSpec, rng) -> np.ndarray:
    s = 1.0 / state.sigma_z2
    prec = s * data.XtX + priors.O0_inv
    lin = s * data.xt(state.Z) + priors.O0_inv @ priors.omega0
    return sample_mvn_precision(lin, prec, rng, "Sigma_omega^-1")[0]


def update_mu(state: ParamState, data: SurDataset, priors: PriorSpec, rng) -> np.ndarray:
    prec = data.N / state.sigma_z2 + 1.0 / priors.sigma_mu2
    mean = (state.Z.sum(axis=0) / state.sigma_z2 + np.asarray(priors.mu0) / priors.sigma_mu2) / prec
    return mean + rng.standard_normal(data.M) / np.sqrt(prec)


def update_sigma_z2(state: ParamState, data: SurDataset, priors: PriorSpec, rng) -> float:
    resid = state.Z - state.exposure_mean(data)
    shape = priors.delta1 + 0.5 * data.N * data.M
    rate = priors.delta2 + 0.5 * float(np.sum(resid * resid))
    return sample_invgamma(shape, rate, rng)


def update_sigma_u2(state: ParamState, data: SurDataset, priors: PriorSpec, rng) -> float:
    resid = data.W - state.Z
    shape = priors.delta3 + 0.5 * data.N * data.M
    rate = priors.delta4 + 0.5 * float(np.sum(resid * resid))
    return sample_invgamma(shape, rate, rng)


def sweep(state: ParamState, data: SurDataset, priors: PriorSpec, rng) -> ParamState:
    """One full pass in the fixed order beta, gamma, Sigma_eps, Z, omega|mu, sigma_z2, sigma_u2.

    Updates ``state`` in place and returns it.
    """
    state.beta = update_beta(state, data, priors, rng)
    state.gamma = update_gamma(state, data, priors, rng)
    state.sigma_eps = update_sigma_eps(state, data, priors, rng)
    state.Z = update_z(state, data, priors, rng)
    if priors.exposure:
        state.omega = update_omega(state, data, priors, rng)
    else:
        state.mu = update_mu(state, data, priors, rng)
    state.sigma_z2 = update_sigma_z2(state, data, priors, rng)
    state.sigma_u2 = update_sigma_u2(state, data, priors, rng)
    return state


def initial_sigma_eps(priors: PriorSpec) -> np.ndarray:
    """Prior mean of Sigma_eps under the precision-Wishart prior (falls back to
    the inverse of the prior precision mean when nu0 <= M + 1)."""
    M = priors.S0.shape[0]
    if priors.nu0 > M + 1:
        return priors.S0_inv / (priors.nu0 - M - 1)
    return priors.S0_inv / priors.nu0


def w_residual_variance(data: SurDataset) -> float:
    """Pooled residual variance of the readings regressed on each equation's covariates."""
    ss = 0.0
    dof = 0
    for m, x in enumerate(data.X):
        coef, *_ = np.linalg.lstsq(x, data.W[:, m], rcond=None)
        r = data.W[:, m] - x @ coef
        ss += float(r @ r)
        dof += data.N - x.shape[1]
    return ss / max(dof, 1)


def initial_state(data: SurDataset, priors: PriorSpec) -> ParamState:
    v = w_residual_variance(data)
    return ParamState(
        beta=np.array(priors.beta0, dtype=float),
        gamma=np.array(priors.gamma0, dtype=float),
        sigma_eps=initial_sigma_eps(priors),
        sigma_z2=0.8 * v,
        sigma_u2=0.2 * v,
        Z=np.array(data.W, dtype=float),
        omega=np.array(priors.omega0, dtype=float) if priors.exposure else None,
        mu=None if priors.exposure else np.array(priors.mu0, dtype=float),
    )


# ---------------------------------------------------------------------------
# drivers


@dataclass
class _Store:
    n: int
    arrays: dict[str, np.ndarray] = field(default_factory=dict)
    pos: int = 0

    def put(self, **values):
        for key, v in values.items():
            arr = self.arrays.get(key)
            if arr is None:
                arr = self.arrays[key] = np.empty((self.n, *np.shape(v)))
            arr[self.pos] = v
        self.pos += 1


def _run(step, state, cfg: McmcConfig, record, on_keep=None):
    store = _Store(cfg.retained)
    for t in range(1, cfg.draws + 1):
        try:
            step(state)
        except PdError as exc:
            raise SamplerError(t, exc) from exc
        if t > cfg.burnin and (t - cfg.burnin) % cfg.thin == 0 and store.pos < store.n:
            store.put(**record(state))
            if on_keep is not None:
                on_keep(state)
    return store.arrays


def gibbs_surme(data: SurDataset, priors: PriorSpec, cfg: McmcConfig | None = None,
                state: ParamState | None = None) -> tuple[GibbsChain, FitReport]:
    """Gibbs sampler for SUR with a mismeasured covariate per equation."""
    cfg = cfg or McmcConfig()
    validate(data, priors)
    start = time.perf_counter()
    rng = make_rng(cfg.seed)
    state = state.copy() if state is not None else initial_state(data, priors)

    z_sum = np.zeros((data.N, data.M))
    z_sq = np.zeros((data.N, data.M))
    z_all = np.empty((cfg.retained, data.N, data.M)) if cfg.store_z else None
    kept = [0]

    def record(s: ParamState) -> dict:
        out = dict(beta=s.beta, gamma=s.gamma, sigma_eps=s.sigma_eps,
                   sigma_z2=s.sigma_z2, sigma_u2=s.sigma_u2)
        out["omega" if priors.exposure else "mu"] = s.omega if priors.exposure else s.mu
        return out

    def on_keep(s: ParamState):
        np.add(z_sum, s.Z, out=z_sum)
        np.add(z_sq, s.Z * s.Z, out=z_sq)
        if z_all is not None:
            z_all[kept[0]] = s.Z
        kept[0] += 1

    arrays = _run(lambda s: sweep(s, data, priors, rng), state, cfg, record, on_keep)
    n = max(kept[0], 1)
    z_mean = z_sum / n
    chain = GibbsChain(
        model="surme", draws=arrays, config=cfg, digest=data.digest(),
        z_mean=z_mean, z_var=np.maximum(z_sq / n - z_mean**2, 0.0), z_draws=z_all,
        k=data.k, exposure=priors.exposure,
    )
    report = summarize_chain(chain, data, method="gibbs-surme")
    report.runtime = time.perf_counter() - start
    return chain, report


def augmented_dataset(data: SurDataset) -> SurDataset:
    """Treat the readings W as an exact covariate appended to each equation's X."""
    X = tuple(np.column_stack([x, data.W[:, m]]) for m, x in enumerate(data.X))
    return SurDataset(data.y, X, data.W, data.truth, data.names)


def _augmented_prior(data: SurDataset, priors: PriorSpec):
    """Interleave (beta0, B0) and (gamma0, G0) into the augmented coefficient order.

    Cross-covariances between beta and gamma are zero a priori.
    """
    K = data.K
    order = []
    for m, km in enumerate(data.k):
        off = sum(data.k[:m])
        order.extend(range(off, off + km))
        order.append(K + m)
    order = np.array(order)
    mean = np.concatenate([priors.beta0, priors.gamma0])[order]
    cov = linalg.block_diag(priors.B0, priors.G0)[np.ix_(order, order)]
    return mean, cov, order


def gibbs_sur(data: SurDataset, priors: PriorSpec, cfg: McmcConfig | None = None
              ) -> tuple[GibbsChain, FitReport]:
    """Two-block Gibbs sampler for Bayesian SUR using W as an error-free covariate."""
    cfg = cfg or McmcConfig()
    validate(data, priors)
    start = time.perf_counter()
    rng = make_rng(cfg.seed)
    aug = augmented_dataset(data)
    mean0, cov0, order = _augmented_prior(data, priors)
    prec0 = np.linalg.inv(cov0)
    lin0 = prec0 @ mean0
    back = np.argsort(order)  # augmented position -> (beta..., gamma...) position

    st = {"theta": mean0.copy(), "sigma_eps": initial_sigma_eps(priors)}

    def step(s):
        lam = pd_inverse(s["sigma_eps"], "sigma_eps")
        prec = np.einsum("ml,mlkj->kj", lam, aug.cross) + prec0
        lin = aug.xt(aug.y @ lam) + lin0
        s["theta"] = sample_mvn_precision(lin, prec, rng, "coefficient precision")[0]
        resid = aug.y - aug.xprod(s["theta"])
        lam = sample_wishart_inv_scale(priors.nu0 + aug.N, priors.S0_inv + resid.T @ resid, rng)
        s["sigma_eps"] = pd_inverse(lam, "Sigma_eps^-1 draw")

    def record(s):
        flat = s["theta"][back]
        return dict(beta=flat[:data.K], gamma=flat[data.K:], sigma_eps=s["sigma_eps"])

    arrays = _run(step, st, cfg, record)
    chain = GibbsChain(model="sur", draws=arrays, config=cfg, digest=data.digest(),
                       k=data.k, exposure=False)
    report = summarize_chain(chain, data, method="gibbs-sur")
    report.runtime = time.perf_counter() - start
    return chain, report


def gls_coefficients(data: SurDataset, sigma_eps: np.ndarray, prior_prec=None, prior_lin=None):
    """Posterior/GLS mean of the stacked coefficients for fixed Sigma_eps (no measurement error)."""
    lam = pd_inverse(sigma_eps, "sigma_eps")
    prec = np.einsum("ml,mlkj->kj", lam, data.cross)
    lin = data.xt(data.y @ lam)
    if prior_prec is not None:
        prec = prec + prior_prec
        lin = lin + prior_lin
    return np.linalg.solve(prec, lin)


# ---------------------------------------------------------------------------
# summaries


def summarize_chain(chain: GibbsChain, data: SurDataset, method: str,
                    prob: float = 0.95, with_scores: bool = True) -> FitReport:
    report = FitReport(method=method, seed=chain.config.seed)
    series = chain.scalar_draws()
    n = len(chain)
    for name, x in series.items():
        lo, hi = diag.hpdi(x, prob) if n > 0 else (np.nan, np.nan)
        report.params[name] = ParamSummary(
            mean=float(x.mean()) if n else np.nan,
            sd=float(x.std(ddof=1)) if n > 1 else 0.0,
            lower=float(lo), upper=float(hi), interval="hpdi",
        )
        report.diagnostics[name] = diag.chain_diag(x, thin=chain.config.thin).to_dict()
    if n:
        s = chain.draws["sigma_eps"]
        rho = s[:, 0, 1] / np.sqrt(s[:, 0, 0] * s[:, 1, 1]) if data.M >= 2 else np.zeros(n)
        report.derived["rho_eps12"] = float(rho.mean())
        if "sigma_z2" in chain.draws:
            rr = chain.draws["sigma_z2"] / (chain.draws["sigma_z2"] + chain.draws["sigma_u2"])
            report.derived["reliability_ratio"] = float(rr.mean())
    if with_scores and n:
        try:
            report.scores = diag.dic(chain, data, chain.model).to_dict()
        except (PdError, np.linalg.LinAlgError) as exc:  # pragma: no cover - defensive
            log.warning("DIC failed: %s", exc)
    report.info.update(
        draws=chain.config.draws, burnin=chain.config.burnin, thin=chain.config.thin,
        retained=n, dataset=chain.digest, N=data.N, M=data.M, K=data.K,
    )
    return report
