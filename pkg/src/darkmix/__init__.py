"""Structured Gaussian mixtures for dark-frame pixel panels.

Fits finite mixtures whose components have a diagonal-plus-rank-one
Kronecker covariance to repeated readings of sensor pixels under several
temperature/exposure conditions, and provides the matching simulator,
model-selection criteria, bootstrap and exploratory diagnostics.
"""

from .diagnostics import (
    block_avg_cov,
    classify,
    cross_condition_regression,
    hm_test,
    qq_data,
    trend_table,
    trim_by_mean,
)
from .em import (
    FitConfig,
    FitResult,
    Responsibilities,
    component_loglik,
    component_objective,
    e_step,
    evaluate,
    fit,
    m_step_weights,
    scoring_update,
    weighted_score,
)
from .inference import bootstrap_se, criteria, lr_test, sweep_k
from .model import (
    ComponentParameters,
    Condition,
    ExperimentDesign,
    LEIMean,
    MixtureModel,
    MixtureWeights,
    NPMMean,
    PixelPanel,
    build_design,
    default_duration_groups,
    logits_from_weights,
    mean_vector,
    sigma_vector,
    tau_vector,
    weights_from_logits,
)
from .simulate import SimOutput, boost_separation, preset_atik, simulate_panel
from .structcov import StructuredCov

__version__ = "0.1.0"
