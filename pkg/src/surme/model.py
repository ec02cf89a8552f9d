"""Data model for SUR systems with a mismeasured covariate per equation."""

from __future__ import annotations

import dataclasses
import hashlib
from dataclasses import dataclass, field
from functools import cached_property
from typing import Any

import numpy as np

from .stats_core import is_pd


class ValidationError(ValueError):
    """Collects every violated invariant of a dataset/prior pair."""

    def __init__(self, problems: list[str]):
        self.problems = list(problems)
        super().__init__("; ".join(self.problems))


@dataclass(frozen=True, eq=False)
class SurDataset:
    """Observed data: responses ``y`` (N x M), per-equation covariates ``X``
    (a tuple of N x k_m matrices) and noisy readings ``W`` (N x M)."""

    y: np.ndarray
    X: tuple
    W: np.ndarray
    truth: dict | None = None
    names: dict | None = None

    @property
    def N(self) -> int:
        return self.y.shape[0]

    @property
    def M(self) -> int:
        return self.y.shape[1]

    @property
    def k(self) -> tuple[int, ...]:
        return tuple(x.shape[1] for x in self.X)

    @property
    def K(self) -> int:
        return sum(self.k)

    @cached_property
    def offsets(self) -> np.ndarray:
        return np.concatenate([[0], np.cumsum(self.k)])

    @cached_property
    def Xs(self) -> np.ndarray:
        """Block-diagonal designs X_i stacked as an (N, M, K) array."""
        out = np.zeros((self.N, self.M, self.K))
        for m, x in enumerate(self.X):
            out[:, m, self.offsets[m]:self.offsets[m + 1]] = x
        return out

    @cached_property
    def Xflat(self) -> np.ndarray:
        return self.Xs.reshape(self.N * self.M, self.K)

    @cached_property
    def XtX(self) -> np.ndarray:
        """Sum_i X_i' X_i (K x K, block diagonal)."""
        return self.Xflat.T @ self.Xflat

    @cached_property
    def cross(self) -> np.ndarray:
        """C[m, l] = Sum_i X_{i,m}' X_{i,l} as an (M, M, K, K) array, so that
        Sum_i X_i' A X_i = einsum('ml,mlkj->kj', A, C)."""
        return np.einsum("imk,ilj->mlkj", self.Xs, self.Xs)

    def xprod(self, coef: np.ndarray) -> np.ndarray:
        """Rows X_i @ coef as an N x M matrix."""
        return (self.Xflat @ coef).reshape(self.N, self.M)

    def xt(self, v: np.ndarray) -> np.ndarray:
        """Sum_i X_i' v_i for an N x M matrix v."""
        return self.Xflat.T @ v.ravel()

    def digest(self) -> str:
        h = hashlib.sha256()
        for a in (self.y, self.W, *self.X):
            h.update(np.ascontiguousarray(a, dtype=float).tobytes())
        return h.hexdigest()[:16]

    def subset(self, idx) -> "SurDataset":
        truth = None
        if self.truth is not None:
            truth = dict(self.truth)
            if "Z" in truth:
                truth["Z"] = truth["Z"][idx]
        return SurDataset(self.y[idx], tuple(x[idx] for x in self.X), self.W[idx], truth, self.names)

    def coef_names(self, prefix: str = "beta") -> list[str]:
        return [f"{prefix}{m + 1}{j + 1}" for m, km in enumerate(self.k) for j in range(km)]


@dataclass(frozen=True, eq=False)
class PriorSpec:
    """Hyperparameters. ``S0`` is the Wishart scale of the prior on the
    error precision, so E[Sigma_eps^{-1}] = nu0 * S0 a priori."""

    beta0: np.ndarray
    B0: np.ndarray
    gamma0: np.ndarray
    G0: np.ndarray
    nu0: float
    S0: np.ndarray
    omega0: np.ndarray
    O0: np.ndarray
    delta1: float = 0.01
    delta2: float = 0.01
    delta3: float = 0.01
    delta4: float = 0.01
    exposure: bool = True
    mu0: np.ndarray | None = None
    sigma_mu2: float = 100.0

    @classmethod
    def default(cls, k, M: int = 2, exposure: bool = True, nu0: float = 50.0) -> "PriorSpec":
        """Defaults of the simulation studies: unit-mean normal priors with
        identity covariances, all deltas 0.01, nu0=50 and an inverse-Wishart
        scale nu0*[[1,.5],[.5,1]] for Sigma_eps (equicorrelation 0.5 for M>2).

        The inverse-Wishart scale V maps to the precision-Wishart scale V^-1,
        which centres the prior on Sigma_eps near [[1,.5],[.5,1]].
        """
        K = sum(k) if not isinstance(k, int) else k
        corr = np.full((M, M), 0.5) + 0.5 * np.eye(M)
        return cls(
            beta0=np.ones(K), B0=np.eye(K),
            gamma0=np.ones(M), G0=np.eye(M),
            nu0=nu0, S0=np.linalg.inv(nu0 * corr),
            omega0=np.ones(K), O0=np.eye(K),
            exposure=exposure, mu0=np.zeros(M),
        )

    @classmethod
    def from_iw_scale(cls, iw_scale, **kw) -> "PriorSpec":
        """Build from an inverse-Wishart scale V for Sigma_eps (Sigma_eps ~ IW(nu0, V))."""
        return cls(S0=np.linalg.inv(np.asarray(iw_scale, dtype=float)), **kw)

    @cached_property
    def B0_inv(self) -> np.ndarray:
        return np.linalg.inv(self.B0)

    @cached_property
    def G0_inv(self) -> np.ndarray:
        return np.linalg.inv(self.G0)

    @cached_property
    def O0_inv(self) -> np.ndarray:
        return np.linalg.inv(self.O0)

    @cached_property
    def S0_inv(self) -> np.ndarray:
        return np.linalg.inv(self.S0)

    def replace(self, **changes) -> "PriorSpec":
        return dataclasses.replace(self, **changes)


@dataclass
class ParamState:
    """One point in parameter space plus the latent true covariate values."""

    beta: np.ndarray
    gamma: np.ndarray
    sigma_eps: np.ndarray
    sigma_z2: float
    sigma_u2: float
    Z: np.ndarray
    omega: np.ndarray | None = None
    mu: np.ndarray | None = None

    def precision(self) -> np.ndarray:
        """Inverse of sigma_eps, cached until sigma_eps is reassigned."""
        cache = self.__dict__.get("_prec")
        if cache is None or cache[0] is not self.sigma_eps:
            from .stats_core import pd_inverse

            cache = (self.sigma_eps, pd_inverse(self.sigma_eps, "sigma_eps"))
            self.__dict__["_prec"] = cache
        return cache[1]

    def copy(self) -> "ParamState":
        return ParamState(**{f.name: _copy(getattr(self, f.name)) for f in dataclasses.fields(self)})

    def exposure_mean(self, data: SurDataset) -> np.ndarray:
        """N x M matrix of E[Z_i]: X_i omega, or mu broadcast when there is no exposure model."""
        if self.omega is not None:
            return data.xprod(self.omega)
        return np.broadcast_to(self.mu, (data.N, data.M))

    def to_dict(self) -> dict:
        return {f.name: _jsonable(getattr(self, f.name)) for f in dataclasses.fields(self)}

    @classmethod
    def from_dict(cls, d: dict) -> "ParamState":
        kw = {}
        for f in dataclasses.fields(cls):
            v = d.get(f.name)
            if v is None:
                kw[f.name] = None
            elif f.name in ("sigma_z2", "sigma_u2"):
                kw[f.name] = float(v)
            else:
                kw[f.name] = np.asarray(v, dtype=float)
        return cls(**kw)

    def __eq__(self, other) -> bool:
        if not isinstance(other, ParamState):
            return NotImplemented
        for f in dataclasses.fields(self):
            a, b = getattr(self, f.name), getattr(other, f.name)
            if (a is None) != (b is None):
                return False
            if a is not None and not np.array_equal(a, b):
                return False
        return True


def _copy(v):
    return v.copy() if isinstance(v, np.ndarray) else v


def _jsonable(v):
    if isinstance(v, np.ndarray):
        return v.tolist()
    return v


@dataclass
class ParamSummary:
    mean: float
    sd: float
    lower: float
    upper: float
    interval: str = "hpdi"


@dataclass
class FitReport:
    method: str
    params: dict[str, ParamSummary] = field(default_factory=dict)
    derived: dict[str, float] = field(default_factory=dict)
    diagnostics: dict[str, dict] = field(default_factory=dict)
    scores: dict[str, float] | None = None
    runtime: float = 0.0
    seed: int | None = None
    info: dict[str, Any] = field(default_factory=dict)

    def mean(self, name: str) -> float:
        return self.params[name].mean

    def to_dict(self) -> dict:
        return {
            "schema": "surme-report/1",
            "method": self.method,
            "seed": self.seed,
            "runtime": self.runtime,
            "params": {k: dataclasses.asdict(v) for k, v in self.params.items()},
            "derived": dict(self.derived),
            "diagnostics": self.diagnostics,
            "scores": self.scores,
            "info": self.info,
        }

    @classmethod
    def from_dict(cls, d: dict) -> "FitReport":
        if d.get("schema") != "surme-report/1":
            raise ValueError(f"unsupported report schema {d.get('schema')!r}")
        return cls(
            method=d["method"],
            params={k: ParamSummary(**v) for k, v in d["params"].items()},
            derived=d.get("derived", {}),
            diagnostics=d.get("diagnostics", {}),
            scores=d.get("scores"),
            runtime=d.get("runtime", 0.0),
            seed=d.get("seed"),
            info=d.get("info", {}),
        )


def reliability_ratio(sigma_z2: float, sigma_u2: float) -> float:
    """Share of the observed reading's variance that is signal."""
    if not sigma_z2 > 0 or sigma_u2 < 0:
        raise ValueError("need sigma_z2 > 0 and sigma_u2 >= 0")
    return sigma_z2 / (sigma_z2 + sigma_u2)


def validate(data: SurDataset, priors: PriorSpec) -> tuple[SurDataset, PriorSpec]:
    """Check shapes, finiteness and prior admissibility; raise listing every problem."""
    problems: list[str] = []
    y, W = np.asarray(data.y), np.asarray(data.W)
    if y.ndim != 2:
        problems.append(f"y must be N x M, got shape {y.shape}")
        raise ValidationError(problems)
    N, M = y.shape
    if W.shape != (N, M):
        problems.append(f"dimension mismatch: W has shape {W.shape}, y has {(N, M)}")
    if len(data.X) != M:
        problems.append(f"dimension mismatch: {len(data.X)} covariate blocks for {M} equations")
    for m, x in enumerate(data.X):
        if np.ndim(x) != 2 or x.shape[0] != N:
            problems.append(f"dimension mismatch: X[{m}] has shape {np.shape(x)}, expected {N} rows")
        elif not np.all(np.isfinite(x)):
            problems.append(f"X[{m}] has missing or non-finite values")
    for name, a in (("y", y), ("W", W)):
        if not np.all(np.isfinite(a)):
            problems.append(f"{name} has missing or non-finite values")

    K = sum(np.shape(x)[1] for x in data.X if np.ndim(x) == 2)
    vec_dims = {"beta0": K, "gamma0": M}
    mat_dims = {"B0": K, "G0": M, "S0": M}
    if priors.exposure:
        vec_dims["omega0"] = K
        mat_dims["O0"] = K
    elif priors.mu0 is not None:
        vec_dims["mu0"] = M
    for name, dim in vec_dims.items():
        v = np.asarray(getattr(priors, name))
        if v.shape != (dim,):
            problems.append(f"dimension mismatch: {name} has shape {v.shape}, expected ({dim},)")
    for name, dim in mat_dims.items():
        a = np.asarray(getattr(priors, name), dtype=float)
        if a.shape != (dim, dim):
            problems.append(f"dimension mismatch: {name} has shape {a.shape}, expected ({dim}, {dim})")
        elif not is_pd(a):
            problems.append(f"PD failure: {name} is not symmetric positive definite")
    if priors.nu0 < M:
        problems.append(f"nu0={priors.nu0} must be >= M={M}")
    for name in ("delta1", "delta2", "delta3", "delta4"):
        if not getattr(priors, name) > 0:
            problems.append(f"{name} must be positive")
    if not priors.exposure and not priors.sigma_mu2 > 0:
        problems.append("sigma_mu2 must be positive")
    if problems:
        raise ValidationError(problems)
    return data, priors
