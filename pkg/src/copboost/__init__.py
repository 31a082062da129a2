"""Component-wise gradient boosting for bivariate distributional copula regression.

Marginal families (Gaussian, log-normal, log-logistic, gamma) are joined by
a Gaussian, Clayton or Gumbel copula; every distribution parameter gets its
own additive predictor, fitted by non-cyclic boosting. Probing, stability
selection and deselection reduce the selected model.
"""

from .baselearners import LearnerSpec, intercept, linear, pspline
from .boosting import BoostFit, Booster, cv_risk, fit_boost, fit_tuned, predict_params, select_mstop
from .copulas import (
    COPULAS, copula_cdf, copula_logdensity, copula_sample, copula_score, get_copula, kendall_tau,
)
from .errors import ConfigError, CopboostError, DomainError, NumericalError, ParseError, SchemaError
from .marginals import (
    FAMILIES, get_marginal, marginal_cdf, marginal_cdf_score, marginal_pdf, marginal_quantile, marginal_score,
)
from .model import PARAMS, CopulaModel, Dataset, ModelSpec, empirical_risk, negative_gradients
from .scoring import energy_score, neg_log_lik, sample_predictive, score_record
from .selection import (
    SelectionReport, deselect_refit, pfer_solve, probing_fit, risk_attribution, stability_select,
)
from .simulation import ScenarioSpec, TruthTable, gen_scenario, run_study, tp_fp_counts

__version__ = "0.1.0"

__all__ = [
    "BoostFit", "Booster", "COPULAS", "ConfigError", "CopboostError", "CopulaModel", "Dataset", "DomainError",
    "FAMILIES", "LearnerSpec", "ModelSpec", "NumericalError", "PARAMS", "ParseError", "ScenarioSpec",
    "SchemaError", "SelectionReport", "TruthTable", "copula_cdf", "copula_logdensity", "copula_sample",
    "copula_score", "cv_risk", "deselect_refit", "empirical_risk", "energy_score", "fit_boost", "fit_tuned",
    "gen_scenario", "get_copula", "get_marginal", "intercept", "kendall_tau", "linear", "marginal_cdf",
    "marginal_cdf_score", "marginal_pdf", "marginal_quantile", "marginal_score", "neg_log_lik",
    "negative_gradients", "pfer_solve", "predict_params", "probing_fit", "pspline", "risk_attribution",
    "run_study", "sample_predictive", "score_record", "select_mstop", "stability_select", "tp_fp_counts",
]
