"""Causally regularized logistic regression.

Logistic regression whose coefficients stay predictive under agnostic
selection bias: sample weights balance confounders for every feature taken
as treatment, and coefficients are learned jointly with the weights.

All classes and functions can be imported from the root `crlr` module.
For convenience, the API reference is provided by submodules:

- `crlr.core`: Datasets, binarization and the indicator matrix.
- `crlr.loss`: Objective components and gradients.
- `crlr.solver`: Alternating minimization, prediction and model files.
- `crlr.baselines`: Logistic regression and the two-step method.
- `crlr.datasets`: Synthetic datasets with selection bias.
- `crlr.evaluation`: Prediction metrics and bias level.
- `crlr.experiment`: Bias-shift experiments and grid search.
- `crlr.config`: Global configuration.
- `crlr.utils`: Useful functions and classes.
"""
# pyright: reportUnusedImport=false

from crlr.baselines import (
    estimate_effect,
    fit_logistic,
    single_treatment_weights,
    two_step_fit,
)
from crlr.config import config_context, get_config, set_config
from crlr.core import (
    ConfounderView,
    Dataset,
    IndicatorMatrix,
    add_intercept,
    binarize,
    indicator_from_features,
    load_dataset,
    read_dataset,
)
from crlr.datasets import SynthConfig, generate, resample_test_grid
from crlr.evaluation import (
    bias_level,
    effective_sample_size,
    metrics,
    relative_improvement,
    top_features,
)
from crlr.experiment import grid_search, run_bias_sweep
from crlr.loss import (
    Hyperparams,
    balancing_loss,
    grad_omega,
    grad_smooth_beta,
    objective,
    weighted_logistic_loss,
)
from crlr.solver import (
    SolverConfig,
    fit,
    load_model,
    predict,
    predict_proba,
    save_model,
    update_beta,
    update_omega,
)
from crlr.version import __version__
