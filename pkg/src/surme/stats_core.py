"""Random variates and positive-definite linear algebra shared by the estimators."""

from __future__ import annotations

import numpy as np
from scipy import linalg

RngStream = np.random.Generator


class PdError(np.linalg.LinAlgError):
    """A matrix that must be positive definite failed its Cholesky factorization."""

    def __init__(self, name: str, detail: str = ""):
        self.name = name
        msg = f"matrix {name!r} is not positive definite"
        if detail:
            msg += f" ({detail})"
        super().__init__(msg)


def make_rng(seed: int | np.random.SeedSequence) -> RngStream:
    """PCG64 generator; equal seeds give bit-identical streams."""
    return np.random.Generator(np.random.PCG64(seed))


def spawn_seeds(seed: int, n: int) -> list[np.random.SeedSequence]:
    return np.random.SeedSequence(seed).spawn(n)


def is_pd(a: np.ndarray, rtol: float = 1e-12) -> bool:
    a = np.asarray(a, dtype=float)
    if a.ndim != 2 or a.shape[0] != a.shape[1]:
        return False
    scale = max(np.abs(a).max(), 1.0)
    if np.abs(a - a.T).max() > rtol * scale:
        return False
    try:
        np.linalg.cholesky(a)
    except np.linalg.LinAlgError:
        return False
    return True


def cholesky(a: np.ndarray, name: str = "matrix") -> np.ndarray:
    """Lower Cholesky factor.

    On failure the symmetrized matrix gets a single jitter of
    ``1e-10 * trace / dim`` on the diagonal; a second failure raises ``PdError``.
    """
    a = np.asarray(a, dtype=float)
    try:
        return np.linalg.cholesky(a)
    except np.linalg.LinAlgError:
        pass
    sym = 0.5 * (a + a.T)
    dim = sym.shape[0]
    jitter = 1e-10 * abs(np.trace(sym)) / dim
    try:
        return np.linalg.cholesky(sym + jitter * np.eye(dim))
    except np.linalg.LinAlgError as exc:
        raise PdError(name, str(exc)) from None


def pd_solve(a: np.ndarray, b: np.ndarray, name: str = "matrix") -> np.ndarray:
    """Solve ``a @ x = b`` for PD ``a`` through its Cholesky factor."""
    chol = cholesky(a, name)
    return linalg.cho_solve((chol, True), b, check_finite=False)


def pd_inverse(a: np.ndarray, name: str = "matrix") -> np.ndarray:
    inv = pd_solve(a, np.eye(a.shape[0]), name)
    return 0.5 * (inv + inv.T)


def pd_logdet(a: np.ndarray, name: str = "matrix") -> float:
    return 2.0 * float(np.log(np.diag(cholesky(a, name))).sum())


def sample_mvn(mean, cov, rng: RngStream, name: str = "cov") -> np.ndarray:
    """One draw from N(mean, cov). A zero covariance returns the mean."""
    mean = np.asarray(mean, dtype=float)
    cov = np.atleast_2d(np.asarray(cov, dtype=float))
    if cov.shape != (mean.size, mean.size):
        raise ValueError(f"mean has dim {mean.size} but {name} is {cov.shape}")
    z = rng.standard_normal(mean.size)
    if not np.any(cov):
        return mean.copy()
    return mean + cholesky(cov, name) @ z


def sample_mvn_precision(linear, precision, rng: RngStream, name: str = "precision"):
    """Draw from N(P^{-1} b, P^{-1}) given the precision P and linear term b.

    Returns ``(draw, mean)``.
    """
    chol = cholesky(precision, name)
    mean = linalg.cho_solve((chol, True), linear, check_finite=False)
    z = rng.standard_normal(mean.shape[0])
    draw = mean + linalg.solve_triangular(chol, z, lower=True, trans="T", check_finite=False)
    return draw, mean


def _bartlett(df: float, factor: np.ndarray, rng: RngStream) -> np.ndarray:
    dim = factor.shape[0]
    a = np.zeros((dim, dim))
    a[np.diag_indices(dim)] = np.sqrt(rng.chisquare(df - np.arange(dim)))
    low = np.tril_indices(dim, -1)
    a[low] = rng.standard_normal(len(low[0]))
    la = factor @ a
    out = la @ la.T
    return 0.5 * (out + out.T)


def sample_wishart(df: float, scale: np.ndarray, rng: RngStream) -> np.ndarray:
    """Wishart draw with mean ``df * scale`` (Bartlett decomposition)."""
    scale = np.atleast_2d(np.asarray(scale, dtype=float))
    dim = scale.shape[0]
    if df < dim:
        raise ValueError(f"Wishart df={df} must be >= dim={dim}")
    return _bartlett(df, cholesky(scale, "scale"), rng)


def sample_wishart_inv_scale(df: float, inv_scale: np.ndarray, rng: RngStream) -> np.ndarray:
    """Wishart draw parameterized by the inverse of its scale matrix.

    If ``inv_scale = L L'`` then ``L^{-T}`` is a factor of the scale, which
    avoids forming the inverse explicitly.
    """
    inv_scale = np.atleast_2d(np.asarray(inv_scale, dtype=float))
    dim = inv_scale.shape[0]
    if df < dim:
        raise ValueError(f"Wishart df={df} must be >= dim={dim}")
    chol = cholesky(inv_scale, "inverse scale")
    factor = linalg.solve_triangular(chol, np.eye(dim), lower=True, trans="T", check_finite=False)
    return _bartlett(df, factor, rng)


def sample_invgamma(shape: float, rate: float, rng: RngStream) -> float:
    """Inverse-gamma draw, density proportional to x^-(shape+1) exp(-rate/x)."""
    if not (shape > 0 and rate > 0):
        raise ValueError(f"inverse-gamma needs shape>0, rate>0; got ({shape}, {rate})")
    return float(rate / rng.standard_gamma(shape))
