"""Seemingly unrelated regressions with a mismeasured covariate per equation.

Estimators: a Gibbs sampler and a mean-field variational fit for the
measurement-error model, plus Bayesian SUR and two-step FGLS baselines.
"""

from .diagnostics import chain_diag, dic, hpdi, inefficiency_factor, optimal_thinning
from .gibbs import GibbsChain, McmcConfig, gibbs_sur, gibbs_surme
from .mfvb import cavi_fit
from .model import FitReport, ParamState, PriorSpec, SurDataset, ValidationError, validate
from .simulate import DgpConfig, case_config, fit_sur_fgls, generate_dataset, replicate_study

__version__ = "0.1.0"

__all__ = [
    "DgpConfig", "FitReport", "GibbsChain", "McmcConfig", "ParamState", "PriorSpec",
    "SurDataset", "ValidationError", "case_config", "cavi_fit", "chain_diag", "dic",
    "fit_sur_fgls", "generate_dataset", "gibbs_sur", "gibbs_surme", "hpdi",
    "inefficiency_factor", "optimal_thinning", "replicate_study", "validate",
]
