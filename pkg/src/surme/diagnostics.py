"""Chain diagnostics, interval construction and deviance-based model comparison."""

from __future__ import annotations

import math
from dataclasses import asdict, dataclass, field

import numpy as np
from scipy import stats
from scipy.linalg import solve_triangular

from .model import ParamState, SurDataset
from .stats_core import cholesky

LAG_CAP = 30


@dataclass
class ChainDiag:
    rho: list[float] = field(default_factory=list)
    inefficiency: float = float("nan")
    geweke_cd: float = float("nan")
    geweke_p: float = float("nan")
    n: int = 0
    thin: int = 1

    def to_dict(self) -> dict:
        return asdict(self)


@dataclass
class ModelScore:
    dic: float
    p_d: float
    mean_deviance: float
    deviance_at_mean: float

    def to_dict(self) -> dict:
        return asdict(self)


# ---------------------------------------------------------------------------
# autocorrelation and mixing


def acf(draws, max_lag: int) -> np.ndarray:
    """Sample autocorrelations for lags 0..max_lag (biased estimator, FFT based)."""
    x = np.asarray(draws, dtype=float)
    n = x.size
    x = x - x.mean()
    var = x @ x
    if var == 0:
        out = np.zeros(max_lag + 1)
        out[0] = 1.0
        return out
    nfft = 1 << (2 * n - 1).bit_length()
    f = np.fft.rfft(x, nfft)
    r = np.fft.irfft((f * np.conj(f)).real, nfft)[: max_lag + 1]
    return r / r[0]


def autocorrelation(draws, lag: int) -> float:
    x = np.asarray(draws, dtype=float)
    if not 0 <= lag < x.size:
        raise ValueError(f"lag {lag} must be in [0, {x.size})")
    x = x - x.mean()
    denom = x @ x
    if denom == 0:
        return 1.0 if lag == 0 else 0.0
    return float(x[: x.size - lag] @ x[lag:] / denom)


def inefficiency_factor(draws) -> float:
    """1 + 2 * sum of autocorrelations, truncated by Geyer's initial
    monotone positive sequence."""
    x = np.asarray(draws, dtype=float)
    n = x.size
    if n < 100:
        raise ValueError("inefficiency factor needs at least 100 draws")
    rho = acf(x, n - 1)
    pairs = rho[: 2 * ((n) // 2)].reshape(-1, 2).sum(axis=1)  # Gamma_k = rho_2k + rho_2k+1
    total = 0.0
    prev = np.inf
    for g in pairs:
        if g <= 0:
            break
        g = min(g, prev)
        total += g
        prev = g
    return float(max(2.0 * total - 1.0, 0.0))


def spectral_variance(x: np.ndarray, taper: float = 0.04) -> float:
    """Spectral density at frequency zero with a Bartlett lag window whose
    width is ``taper`` times the series length."""
    n = x.size
    lags = max(1, int(math.ceil(taper * n)))
    lags = min(lags, n - 1)
    r = acf(x, lags) * np.var(x)
    w = 1.0 - np.arange(1, lags + 1) / (lags + 1)
    return float(r[0] + 2.0 * np.sum(w * r[1:]))


def geweke_cd(draws, first: float = 0.1, last: float = 0.5) -> tuple[float, float]:
    """Z-score comparing the means of the first 10% and last 50% of a chain."""
    x = np.asarray(draws, dtype=float)
    n = x.size
    if n < 200:
        raise ValueError("Geweke diagnostic needs at least 200 draws")
    a = x[: int(first * n)]
    b = x[n - int(last * n):]
    va = spectral_variance(a) / a.size
    vb = spectral_variance(b) / b.size
    if va + vb <= 0:
        return 0.0, 1.0
    z = (a.mean() - b.mean()) / math.sqrt(va + vb)
    return float(z), float(2.0 * stats.norm.sf(abs(z)))


def optimal_thinning(rho1: float, cost_ratio: float, k_max: int = 10_000) -> int:
    """Thinning factor minimizing (k + cost) * (1 + rho^k) / (1 - rho^k).

    The chain is modelled as AR(1) with lag-one autocorrelation ``rho1``;
    ``cost_ratio`` is the cost of evaluating the retained quantity relative to
    one sweep.
    """
    if not 0 <= rho1 < 1:
        raise ValueError("rho1 must lie in [0, 1)")
    if not cost_ratio > 0:
        raise ValueError("cost_ratio must be positive")
    if rho1 == 0:
        return 1
    k = np.arange(1, k_max + 1, dtype=float)
    rk = rho1**k
    obj = (k + cost_ratio) * (1 + rk) / (1 - rk)
    return int(k[np.argmin(obj)])


def chain_diag(draws, thin: int = 1, lag_cap: int = LAG_CAP) -> ChainDiag:
    x = np.asarray(draws, dtype=float)
    n = x.size
    out = ChainDiag(n=n, thin=thin)
    if n >= 2:
        out.rho = acf(x, min(lag_cap, n - 1))[1:].tolist()
    if n >= 100:
        out.inefficiency = inefficiency_factor(x)
    if n >= 200:
        out.geweke_cd, out.geweke_p = geweke_cd(x)
    return out


# ---------------------------------------------------------------------------
# intervals and densities


def hpdi(draws, prob: float = 0.95) -> tuple[float, float]:
    """Shortest interval holding ceil(prob * n) of the sorted draws; ties go to the lowest start."""
    if not 0 < prob < 1:
        raise ValueError("prob must be in (0, 1)")
    x = np.sort(np.asarray(draws, dtype=float))
    n = x.size
    m = min(n, int(math.ceil(prob * n)))
    widths = x[m - 1:] - x[: n - m + 1]
    i = int(np.argmin(widths))
    return float(x[i]), float(x[i + m - 1])


def equal_tailed(draws, prob: float = 0.95) -> tuple[float, float]:
    a = (1 - prob) / 2
    lo, hi = np.quantile(np.asarray(draws, dtype=float), [a, 1 - a])
    return float(lo), float(hi)


def kde_density(draws, grid_size: int = 512) -> tuple[np.ndarray, np.ndarray]:
    """Gaussian KDE with Silverman's bandwidth on a grid spanning the draws +/- 3 bandwidths."""
    x = np.asarray(draws, dtype=float)
    n = x.size
    if grid_size < 2:
        raise ValueError("grid_size must be >= 2")
    sd = x.std(ddof=1) if n > 1 else 0.0
    iqr = np.subtract(*np.percentile(x, [75, 25]))
    spread = min(sd, iqr / 1.34) if iqr > 0 else sd
    h = 0.9 * spread * n ** (-0.2)
    if not h > 0:
        raise ValueError("zero bandwidth: draws have no spread")
    grid = np.linspace(x.min() - 3 * h, x.max() + 3 * h, grid_size)
    if n > 20_000:
        # bin onto a fine mesh first; the mesh spacing is far below h
        counts, edges = np.histogram(x, bins=1 << 14)
        pts = 0.5 * (edges[1:] + edges[:-1])
        keep = counts > 0
        pts, wts = pts[keep], counts[keep].astype(float)
    else:
        pts, wts = x, np.ones(n)
    dens = np.zeros(grid_size)
    for start in range(0, pts.size, 4096):
        p = pts[start:start + 4096]
        u = (grid[:, None] - p[None, :]) / h
        dens += np.exp(-0.5 * u * u) @ wts[start:start + 4096]
    dens /= wts.sum() * h * math.sqrt(2 * math.pi)
    area = np.trapezoid(dens, grid)
    if area > 0:
        dens = dens / area
    return grid, dens


# ---------------------------------------------------------------------------
# likelihoods and DIC


def integrated_loglik(params: ParamState, data: SurDataset) -> float:
    """Log-likelihood of (y, W) with the latent Z integrated out.

    For each i, (y_i, W_i) is 2M-variate normal with mean
    (X_i beta + gamma * m_i, m_i), m_i the exposure mean, and covariance
    [[s2 diag(g)^2 + Sigma, s2 diag(g)], [s2 diag(g), (s2 + su2) I]].
    """
    M = data.M
    g = np.asarray(params.gamma, dtype=float)
    s2z, s2u = params.sigma_z2, params.sigma_u2
    mean_z = params.exposure_mean(data)
    cov = np.empty((2 * M, 2 * M))
    dg = np.diag(g)
    cov[:M, :M] = s2z * dg @ dg + params.sigma_eps
    cov[:M, M:] = s2z * dg
    cov[M:, :M] = s2z * dg
    cov[M:, M:] = (s2z + s2u) * np.eye(M)
    resid = np.hstack([data.y - data.xprod(params.beta) - mean_z * g, data.W - mean_z])
    return _gauss_loglik(resid, cov, "integrated covariance")


def sur_loglik(params: ParamState, data: SurDataset) -> float:
    """Gaussian SUR log-likelihood of y treating W as an exact covariate."""
    resid = data.y - data.xprod(params.beta) - data.W * params.gamma
    return _gauss_loglik(resid, params.sigma_eps, "sigma_eps")


def _gauss_loglik(resid: np.ndarray, cov: np.ndarray, name: str) -> float:
    n, d = resid.shape
    chol = cholesky(cov, name)
    sol = solve_triangular(chol, resid.T, lower=True)
    logdet = 2.0 * np.log(np.diag(chol)).sum()
    return float(-0.5 * (n * d * math.log(2 * math.pi) + n * logdet + np.sum(sol * sol)))


def dic(chain, data: SurDataset, model: str = "surme") -> ModelScore:
    """DIC = mean deviance + p_D, with p_D = mean deviance - deviance at the posterior mean."""
    if len(chain) == 0:
        raise ValueError("empty chain: posterior mean undefined")
    loglik = integrated_loglik if model == "surme" else sur_loglik
    devs = np.array([-2.0 * loglik(s, data) for s in chain.states(data)])
    dbar = float(devs.mean())
    d_hat = -2.0 * loglik(chain.posterior_mean_state(data), data)
    p_d = dbar - d_hat
    return ModelScore(dic=dbar + p_d, p_d=p_d, mean_deviance=dbar, deviance_at_mean=d_hat)
