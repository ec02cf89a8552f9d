"""Data-generating process for the two-equation Monte Carlo designs, the
two-step FGLS baseline, and the replication harness."""

from __future__ import annotations

import logging
import os
import time
from concurrent.futures import ProcessPoolExecutor
from dataclasses import asdict, dataclass, field, replace

import numpy as np
from scipy import stats

from .model import FitReport, ParamSummary, PriorSpec, SurDataset
from .stats_core import make_rng, spawn_seeds

log = logging.getLogger(__name__)


@dataclass(frozen=True)
class DgpConfig:
    N: int = 300
    beta_true: tuple = (3.0, 5.0, 4.0, 4.0, 3.8, 3.0)
    gamma_true: tuple = (4.0, 4.0)
    omega_true: tuple = (1.5, 0.75, 0.3, 1.5, 1.05, 0.45)
    sigma_eps_true: tuple = ((1.0, 0.5), (0.5, 1.0))
    sigma_z2: float = 1.0
    R_z: float = 0.8
    common_high: float = 2.0   # shared covariate ~ U(0, common_high)
    exclusive_high: float = 4.0  # equation-specific covariate ~ U(0, exclusive_high)
    seed: int = 0

    def __post_init__(self):
        if not 0 < self.R_z <= 1:
            raise ValueError("R_z must lie in (0, 1]")
        if not self.sigma_z2 > 0:
            raise ValueError("sigma_z2 must be positive")

    @property
    def M(self) -> int:
        return len(self.gamma_true)

    @property
    def sigma_u2(self) -> float:
        return self.sigma_z2 * (1 - self.R_z) / self.R_z

    def truth(self) -> dict:
        """Named true values, same keys as FitReport.params."""
        out = {}
        M = self.M
        for m in range(M):
            for j in range(3):
                out[f"beta{m + 1}{j + 1}"] = self.beta_true[3 * m + j]
                out[f"omega{m + 1}{j + 1}"] = self.omega_true[3 * m + j]
            out[f"gamma{m + 1}"] = self.gamma_true[m]
        s = np.asarray(self.sigma_eps_true)
        for a in range(M):
            for b in range(a, M):
                out[f"sigma{a + 1}{b + 1}"] = float(s[a, b])
        out["sigma_z2"] = self.sigma_z2
        out["sigma_u2"] = self.sigma_u2
        return out


# sigma_z2, R_z cells of the simulation studies
CASES = {
    "I-1": dict(sigma_z2=1.0, R_z=0.8),
    "I-2": dict(sigma_z2=0.0625, R_z=0.8),
    "II-1": dict(sigma_z2=1.0, R_z=0.5714),
    "II-2": dict(sigma_z2=0.0625, R_z=0.5714),
}


def case_config(name: str, **overrides) -> DgpConfig:
    if name not in CASES:
        raise KeyError(f"unknown case {name!r}; choose from {sorted(CASES)}")
    return DgpConfig(**{**CASES[name], **overrides})


def generate_dataset(cfg: DgpConfig, rng=None) -> SurDataset:
    """Simulate one dataset. Every equation has an intercept, the shared
    covariate and its own exclusive covariate."""
    rng = make_rng(cfg.seed) if rng is None else rng
    N, M = cfg.N, cfg.M
    common = rng.uniform(0, cfg.common_high, N)
    X = tuple(np.column_stack([np.ones(N), common, rng.uniform(0, cfg.exclusive_high, N)])
              for _ in range(M))
    data0 = SurDataset(np.zeros((N, M)), X, np.zeros((N, M)))
    beta = np.asarray(cfg.beta_true, dtype=float)
    gamma = np.asarray(cfg.gamma_true, dtype=float)
    omega = np.asarray(cfg.omega_true, dtype=float)
    Z = data0.xprod(omega) + np.sqrt(cfg.sigma_z2) * rng.standard_normal((N, M))
    W = Z + np.sqrt(cfg.sigma_u2) * rng.standard_normal((N, M)) if cfg.sigma_u2 > 0 else Z.copy()
    eps = rng.multivariate_normal(np.zeros(M), np.asarray(cfg.sigma_eps_true), size=N, method="cholesky")
    y = data0.xprod(beta) + Z * gamma + eps
    truth = {"Z": Z, "params": cfg.truth()}
    return SurDataset(y, X, W, truth=truth)


# ---------------------------------------------------------------------------
# frequentist baseline


class RankError(np.linalg.LinAlgError):
    pass


def fit_sur_fgls(data: SurDataset, prob: float = 0.95) -> FitReport:
    """Two-step feasible GLS with the readings W used as an exact covariate.

    Step 1 fits each equation by OLS to estimate the residual covariance;
    step 2 is GLS with that covariance. Standard errors come from the GLS
    covariance with no degrees-of-freedom correction, intervals are normal.
    """
    start = time.perf_counter()
    N, M = data.N, data.M
    if N <= data.K + M:
        raise RankError("need N > K + M")
    D = [np.column_stack([x, data.W[:, m]]) for m, x in enumerate(data.X)]
    for m, d in enumerate(D):
        if np.linalg.matrix_rank(d) < d.shape[1]:
            raise RankError(f"design of equation {m + 1} is rank deficient")
    resid = np.column_stack([data.y[:, m] - d @ np.linalg.lstsq(d, data.y[:, m], rcond=None)[0]
                             for m, d in enumerate(D)])
    sigma1 = resid.T @ resid / N
    lam = np.linalg.inv(sigma1)
    sizes = [d.shape[1] for d in D]
    off = np.concatenate([[0], np.cumsum(sizes)])
    P = off[-1]
    A = np.zeros((P, P))
    b = np.zeros(P)
    for m in range(M):
        for l in range(M):
            A[off[m]:off[m + 1], off[l]:off[l + 1]] = lam[m, l] * D[m].T @ D[l]
        b[off[m]:off[m + 1]] = D[m].T @ (data.y @ lam[:, m])
    cov = np.linalg.inv(A)
    theta = cov @ b
    fitted = np.column_stack([D[m] @ theta[off[m]:off[m + 1]] for m in range(M)])
    resid2 = data.y - fitted
    sigma2 = resid2.T @ resid2 / N

    z = stats.norm.ppf(0.5 + prob / 2)
    se = np.sqrt(np.diag(cov))
    report = FitReport(method="fgls")
    for m in range(M):
        names = [f"beta{m + 1}{j + 1}" for j in range(data.k[m])] + [f"gamma{m + 1}"]
        for name, idx in zip(names, range(off[m], off[m + 1])):
            report.params[name] = ParamSummary(float(theta[idx]), float(se[idx]),
                                               float(theta[idx] - z * se[idx]),
                                               float(theta[idx] + z * se[idx]), "normal-ci")
    # keep beta..., gamma... ordering
    report.params = dict(sorted(report.params.items(), key=lambda kv: (not kv[0].startswith("beta"), kv[0])))
    for a in range(M):
        for c in range(a, M):
            report.params[f"sigma{a + 1}{c + 1}"] = ParamSummary(float(sigma2[a, c]), float("nan"),
                                                                float("nan"), float("nan"), "none")
    if M >= 2:
        report.derived["rho_eps12"] = float(sigma2[0, 1] / np.sqrt(sigma2[0, 0] * sigma2[1, 1]))
    report.info.update(N=N, M=M, K=data.K, dataset=data.digest())
    report.runtime = time.perf_counter() - start
    return report


# ---------------------------------------------------------------------------
# replication harness


ESTIMATORS = ("fgls", "gibbs-surme", "gibbs-sur", "mfvb")


@dataclass
class StudySummary:
    estimator: str
    case: dict
    reps: int
    failures: int = 0
    mean: dict = field(default_factory=dict)
    rel_error: dict = field(default_factory=dict)
    sd: dict = field(default_factory=dict)
    lower: dict = field(default_factory=dict)
    upper: dict = field(default_factory=dict)
    diagnostics: dict = field(default_factory=dict)
    extra: dict = field(default_factory=dict)
    reports: list = field(default_factory=list, repr=False)

    def to_dict(self, with_reports: bool = False) -> dict:
        d = asdict(self)
        d["reports"] = [r.to_dict() for r in self.reports] if with_reports else []
        return d


def run_estimator(name: str, data: SurDataset, seed: int, priors: PriorSpec | None = None,
                  mcmc: dict | None = None, vb: dict | None = None) -> FitReport:
    from . import gibbs, mfvb

    if priors is None:
        priors = PriorSpec.default(data.k, data.M)
    if name == "fgls":
        rep = fit_sur_fgls(data)
    elif name == "gibbs-surme":
        rep = gibbs.gibbs_surme(data, priors, gibbs.McmcConfig(seed=seed, **(mcmc or {})))[1]
    elif name == "gibbs-sur":
        rep = gibbs.gibbs_sur(data, priors, gibbs.McmcConfig(seed=seed, **(mcmc or {})))[1]
    elif name == "mfvb":
        rep = mfvb.cavi_fit(data, priors, **(vb or {}))[1]
    else:
        raise ValueError(f"unknown estimator {name!r}; choose from {ESTIMATORS}")
    rep.seed = seed
    return rep


def _one_replication(args) -> tuple[int, FitReport | None, str | None]:
    idx, cfg, estimator, seq, priors, mcmc, vb = args
    data_rng = make_rng(seq.spawn(1)[0])
    est_seed = int(seq.generate_state(1)[0])
    data = generate_dataset(cfg, data_rng)
    try:
        return idx, run_estimator(estimator, data, est_seed, priors, mcmc, vb), None
    except (np.linalg.LinAlgError, ValueError, RuntimeError) as exc:
        log.warning("replication %d failed: %s", idx, exc)
        return idx, None, str(exc)


def default_workers() -> int:
    env = os.environ.get("SURME_THREADS")
    if env:
        return max(1, int(env))
    return os.cpu_count() or 1


def replicate_study(cfg: DgpConfig, estimator: str, reps: int, seed: int | None = None,
                    priors: PriorSpec | None = None, mcmc: dict | None = None,
                    vb: dict | None = None, workers: int | None = None) -> StudySummary:
    """Fit ``estimator`` on ``reps`` independent datasets and average the results.

    Replication seeds are spawned from the master seed, so the summary is
    reproducible regardless of how many workers run it.
    """
    if reps < 1:
        raise ValueError("reps must be >= 1")
    seed = cfg.seed if seed is None else seed
    seqs = spawn_seeds(seed, reps)
    jobs = [(i, cfg, estimator, s, priors, mcmc, vb) for i, s in enumerate(seqs)]
    workers = default_workers() if workers is None else workers
    if workers > 1 and reps > 1:
        with ProcessPoolExecutor(max_workers=min(workers, reps)) as pool:
            results = list(pool.map(_one_replication, jobs))
    else:
        results = [_one_replication(j) for j in jobs]
    results.sort(key=lambda r: r[0])
    reports = [r for _, r, _ in results if r is not None]
    summary = summarize_reports(reports, estimator, cfg)
    summary.reps = reps
    summary.failures = sum(1 for _, r, _ in results if r is None)
    return summary


def summarize_reports(reports: list[FitReport], estimator: str, cfg: DgpConfig) -> StudySummary:
    case = asdict(cfg)
    out = StudySummary(estimator=estimator, case=case, reps=len(reports), reports=reports)
    if not reports:
        return out
    truth = cfg.truth()
    names = list(reports[0].params)
    for name in names:
        vals = [r.params[name] for r in reports if name in r.params]
        mean = float(np.mean([v.mean for v in vals]))
        out.mean[name] = mean
        out.sd[name] = float(np.mean([v.sd for v in vals]))
        out.lower[name] = float(np.mean([v.lower for v in vals]))
        out.upper[name] = float(np.mean([v.upper for v in vals]))
        if name in truth and truth[name] != 0:
            out.rel_error[name] = mean / truth[name] - 1
        diags = [r.diagnostics[name] for r in reports if name in r.diagnostics]
        if diags:
            ifs = [d["inefficiency"] for d in diags if np.isfinite(d["inefficiency"])]
            ps = [d["geweke_p"] for d in diags if np.isfinite(d["geweke_p"])]
            out.diagnostics[name] = {
                "inefficiency": float(np.mean(ifs)) if ifs else float("nan"),
                "cd_accept": float(np.mean([p > 0.05 for p in ps])) if ps else float("nan"),
                "rho1": float(np.mean([d["rho"][0] for d in diags if d["rho"]])) if diags[0]["rho"] else float("nan"),
            }
    derived = {}
    for key in reports[0].derived:
        vals = [r.derived[key] for r in reports if isinstance(r.derived.get(key), (int, float))]
        if vals:
            derived[key] = float(np.mean(vals))
    out.extra["derived"] = derived
    if "cycles" in reports[0].info:
        out.extra["cycles"] = float(np.mean([r.info["cycles"] for r in reports]))
        out.extra["elbo"] = float(np.mean([r.info["elbo"] for r in reports]))
        out.extra["converged"] = int(sum(bool(r.info["converged"]) for r in reports))
    scores = [r.scores for r in reports if r.scores]
    if scores:
        out.extra["dic"] = float(np.mean([s["dic"] for s in scores]))
        out.extra["p_d"] = float(np.mean([s["p_d"] for s in scores]))
    out.extra["runtime"] = float(np.mean([r.runtime for r in reports]))
    return out


def with_seed(cfg: DgpConfig, seed: int) -> DgpConfig:
    return replace(cfg, seed=seed)
