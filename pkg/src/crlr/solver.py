"""Alternating minimization over coefficients and sample weights."""
# ruff: noqa: PLR0913

from __future__ import annotations

import json
import logging
import math
import pathlib
from typing import TYPE_CHECKING, NamedTuple

import numpy as np
import scipy.special

import crlr.config
import crlr.core
import crlr.evaluation
import crlr.loss
import crlr.utils


if TYPE_CHECKING:
    from collections.abc import Sequence
    from os import PathLike
    from typing import Literal

    import numpy.typing as npt


logger = logging.getLogger(__name__)

MODEL_FORMAT = "crlr-model"
MODEL_FORMAT_VERSION = 1

_STEP_TOL = 1e-12
_COLLAPSED_FRACTION = 0.1


class SolverConfig(crlr.utils.ReprMixin):
    """Iteration caps, tolerances and line search parameters of the solver."""
    max_outer_iters: int
    inner_beta_iters: int
    inner_omega_iters: int
    rel_tol: float
    armijo_shrink: float
    armijo_slope: float
    initial_step: float
    max_shrinks: int
    grad_tol: float
    reduction: Literal["blas", "fixed"]
    seed: int
    learn_weights: bool

    def __init__(
        self,
        max_outer_iters: int | None = None,
        inner_beta_iters: int | None = None,
        inner_omega_iters: int | None = None,
        rel_tol: float | None = None,
        armijo_shrink: float | None = None,
        armijo_slope: float | None = None,
        initial_step: float | None = None,
        max_shrinks: int | None = None,
        grad_tol: float | None = None,
        reduction: Literal["blas", "fixed"] | None = None,
        seed: int = 0,
        *,
        learn_weights: bool = True,
    ) -> None:
        """Iteration caps, tolerances and line search parameters of the solver.

        Parameters not provided are taken from the global configuration.

        Args:
            max_outer_iters: Maximum number of alternating iterations.
            inner_beta_iters: Proximal gradient steps per outer iteration.
            inner_omega_iters: Weight descent steps per outer iteration.
            rel_tol: Relative objective change that stops the alternating
                iterations.
            armijo_shrink: Step shrink factor of the backtracking line search.
            armijo_slope: Sufficient decrease constant of the Armijo condition.
            initial_step: Initial step size of both subproblem solvers.
            max_shrinks: Maximum number of step shrinks in a single line search.
            grad_tol: Gradient norm below which a weight update stops.
            reduction: Reduction mode, `"blas"` or `"fixed"`.
            seed: Seed recorded with the fit. The default initialization
                is deterministic and draws no random numbers.
            learn_weights: If `False`, sample weights stay at their uniform
                initialization.
        """
        for name, value in (
            ("max_outer_iters", max_outer_iters),
            ("inner_beta_iters", inner_beta_iters),
            ("inner_omega_iters", inner_omega_iters),
            ("rel_tol", rel_tol),
            ("armijo_shrink", armijo_shrink),
            ("armijo_slope", armijo_slope),
            ("initial_step", initial_step),
            ("max_shrinks", max_shrinks),
            ("grad_tol", grad_tol),
            ("reduction", reduction),
        ):
            setattr(
                self,
                name,
                crlr.utils.auto_check(value, name)
                if value is not None
                else crlr.config.get_config(name),
            )
        self.seed = crlr.utils.auto_check(seed, "seed")
        self.learn_weights = crlr.utils.check_scalar(
            learn_weights, "learn_weights", typ=bool)

    def with_params(self, **params: object) -> SolverConfig:
        """Copy the config with some of the values replaced.

        Args:
            **params: New parameter values.

        Returns:
            New solver config.
        """
        return SolverConfig(**(
            {name: getattr(self, name) for name in self._get_param_names()} |
            params
        ))  # type: ignore


class ModelState(NamedTuple):
    """Current iterate of the solver.

    Attributes:
        beta: Coefficients.
        omega: Square roots of sample weights.
        objective_trace: Pairs of outer iteration number and objective value.
    """
    beta: np.ndarray
    omega: np.ndarray
    objective_trace: tuple[tuple[int, float], ...] = ()

    @property
    def weights(self) -> np.ndarray:
        """Sample weights `W = omega * omega`."""
        return self.omega * self.omega


class CoefficientUpdate(NamedTuple):
    """Result of a coefficient update.

    Attributes:
        beta: Updated coefficients.
        step: Step size of the last accepted proximal step.
        objective_values: Subproblem objective before the first step
            and after every accepted step.
    """
    beta: np.ndarray
    step: float
    objective_values: tuple[float, ...]


class WeightUpdate(NamedTuple):
    """Result of a sample weight update.

    Attributes:
        omega: Updated square roots of sample weights.
        objective_values: Objective before the first step and after every
            accepted step.
        line_search_failed: `True` if the inner loop stopped because the line
            search found no decreasing step.
    """
    omega: np.ndarray
    objective_values: tuple[float, ...]
    line_search_failed: bool


class FitResult(NamedTuple):
    """Result of a fit.

    Attributes:
        state: Final model state.
        converged: `True` if the relative objective change fell below `rel_tol`.
        iterations_used: Number of outer iterations.
        objective_trace: Pairs of outer iteration number and objective value,
            starting with the initial objective at iteration `0`.
        balance: Balance report at the solution, or `None` if every feature
            is degenerate.
        line_search_failures: Number of weight updates stopped by the line search.
        effective_sample_size: Effective sample size of the final weights.
    """
    state: ModelState
    converged: bool
    iterations_used: int
    objective_trace: tuple[tuple[int, float], ...]
    balance: crlr.loss.BalanceReport | None
    line_search_failures: int
    effective_sample_size: float


def soft_threshold(values: np.ndarray, level: float) -> np.ndarray:
    """Proximal operator of `level * ||.||_1`."""
    return np.sign(values) * np.maximum(np.abs(values) - level, 0)


def update_beta(
    state: ModelState,
    x: npt.ArrayLike,
    y: npt.ArrayLike,
    hyper: crlr.loss.Hyperparams | None = None,
    config: SolverConfig | None = None,
) -> CoefficientUpdate:
    """Update coefficients with sample weights fixed.

    Runs proximal gradient steps on the weighted logistic loss with the ridge
    penalty, soft-thresholding at `step * lambda4`. The step size starts at
    `initial_step` and shrinks until the quadratic upper bound holds.
    A step that would increase the subproblem objective is never accepted.

    Args:
        state: Current state. Its weights stay fixed.
        x: Feature matrix.
        y: Binary labels.
        hyper: Hyperparameters. If `None`, the global configuration is used.
        config: Solver config. If `None`, the global configuration is used.

    Returns:
        Updated coefficients with the subproblem objective values.
    """
    if hyper is None:
        hyper = crlr.loss.Hyperparams()
    if config is None:
        config = SolverConfig()
    x = np.asarray(x, dtype=np.float64)
    y = np.asarray(y, dtype=np.float64)
    w = state.weights
    reduction = config.reduction

    def smooth(beta: np.ndarray) -> float:
        return crlr.loss.smooth_beta_objective(
            x, y, beta, w, hyper.lambda3, reduction=reduction)

    beta = np.array(state.beta, dtype=np.float64)
    step = config.initial_step
    f_val = smooth(beta)
    total = f_val + hyper.lambda4 * float(np.sum(np.abs(beta)))
    values = [total]

    for _ in range(config.inner_beta_iters):
        grad = crlr.loss.grad_smooth_beta(
            x, y, beta, w, hyper.lambda3, reduction=reduction)
        if not np.isfinite(grad).all():
            raise crlr.loss.NumericalError("Non-finite gradient of coefficients.")

        for _ in range(config.max_shrinks + 1):
            candidate = soft_threshold(beta - step*grad, step*hyper.lambda4)
            delta = candidate - beta
            f_candidate = smooth(candidate)
            bound = f_val + float(grad @ delta) + float(delta @ delta) / (2*step)
            if f_candidate <= bound:
                break
            step *= config.armijo_shrink
        else:
            break

        total_candidate = f_candidate + hyper.lambda4 * float(
            np.sum(np.abs(candidate)))
        if not total_candidate <= total:
            break
        beta, f_val, total = candidate, f_candidate, total_candidate
        values.append(total)
        if float(np.max(np.abs(delta))) < _STEP_TOL:
            break

    return CoefficientUpdate(beta=beta, step=step, objective_values=tuple(values))


def update_omega(
    state: ModelState,
    x: npt.ArrayLike,
    y: npt.ArrayLike,
    indicator: crlr.core.IndicatorMatrix | npt.ArrayLike,
    hyper: crlr.loss.Hyperparams | None = None,
    config: SolverConfig | None = None,
) -> WeightUpdate:
    """Update sample weights with coefficients fixed.

    Runs gradient descent steps on `omega` with a backtracking line search.
    A step is accepted if it satisfies the Armijo condition, so every accepted
    step strictly reduces the objective. If no step is accepted after
    `max_shrinks` shrinks, the inner loop stops at the current `omega`.

    Args:
        state: Current state. Its coefficients stay fixed.
        x: Feature matrix.
        y: Binary labels.
        indicator: Indicator matrix.
        hyper: Hyperparameters. If `None`, the global configuration is used.
        config: Solver config. If `None`, the global configuration is used.

    Returns:
        Updated `omega` with the objective values.
    """
    if hyper is None:
        hyper = crlr.loss.Hyperparams()
    if config is None:
        config = SolverConfig()
    reduction = config.reduction
    beta = state.beta

    def objective(omega: np.ndarray) -> float:
        return crlr.loss.objective(
            x, y, indicator, beta, omega, hyper, reduction=reduction).total

    omega = np.array(state.omega, dtype=np.float64)
    value = objective(omega)
    values = [value]
    failed = False

    for _ in range(config.inner_omega_iters):
        grad = crlr.loss.grad_omega(
            x, y, indicator, beta, omega, hyper, reduction=reduction)
        grad_sq = float(grad @ grad)
        if math.sqrt(grad_sq) <= config.grad_tol:
            break

        step = config.initial_step
        for _ in range(config.max_shrinks + 1):
            candidate = omega - step*grad
            value_candidate = objective(candidate)
            if (
                math.isfinite(value_candidate) and
                value_candidate <= value - config.armijo_slope*step*grad_sq and
                value_candidate < value
            ):
                break
            step *= config.armijo_shrink
        else:
            failed = True
            logger.debug("Weight line search found no decreasing step.")
            break

        omega, value = candidate, value_candidate
        values.append(value)

    return WeightUpdate(
        omega=omega,
        objective_values=tuple(values),
        line_search_failed=failed,
    )


def fit(
    data: crlr.core.Dataset,
    hyper: crlr.loss.Hyperparams | None = None,
    config: SolverConfig | None = None,
) -> FitResult:
    """Fit causally regularized logistic regression.

    Starts from zero coefficients and uniform weights `W = 1/n`, then alternates
    a coefficient update and a weight update until the relative objective
    change is at most `rel_tol` or `max_outer_iters` is reached.

    The weights sum to about one, so the penalty `lambda2 * ||W||**2` is of order
    `lambda2 / n`. Unless `lambda2` grows with `n`, the weights can concentrate
    on a few well-fitted samples or on one label class. A warning is logged if
    the effective sample size of the final weights is below `n / 10`, or if the
    weighted share of a label is below a tenth of its unweighted share.

    Args:
        data: Training dataset.
        hyper: Hyperparameters. If `None`, the global configuration is used.
        config: Solver config. If `None`, the global configuration is used.

    Returns:
        Fit result.

    Examples:
        ```pycon
        >>> import crlr

        >>> data = crlr.Dataset(
        ...     [[1, 0], [1, 0], [0, 1], [0, 1]],
        ...     [1, 1, 0, 0],
        ... )
        >>> result = crlr.fit(data, crlr.Hyperparams(0, 0, 0.01, 0, 0))
        >>> crlr.predict(result.state.beta, data.features)
        array([1, 1, 0, 0])

        ```
    """
    if hyper is None:
        hyper = crlr.loss.Hyperparams()
    if config is None:
        config = SolverConfig()
    x, y = data.features, data.labels
    indicator = crlr.core.indicator_from_features(data)
    if hyper.lambda1 > 0 and bool(indicator.degenerate.all()):
        raise crlr.loss.EmptyBalancingError(
            "Every feature is degenerate: no feature has both treated "
            "and control samples.")

    beta = np.zeros(data.p)
    omega = np.full(data.n, 1 / math.sqrt(data.n))
    value = crlr.loss.objective(
        x, y, indicator, beta, omega, hyper, reduction=config.reduction).total
    trace = [(0, value)]
    if not math.isfinite(value):
        raise crlr.loss.NumericalError("Non-finite initial objective.", trace=trace)

    converged = False
    failures = 0
    iteration = 0
    for iteration in range(1, config.max_outer_iters + 1):
        beta = update_beta(
            ModelState(beta, omega, tuple(trace)), x, y, hyper, config).beta
        if config.learn_weights:
            weight_update = update_omega(
                ModelState(beta, omega, tuple(trace)), x, y, indicator, hyper, config)
            omega = weight_update.omega
            failures += weight_update.line_search_failed

        new_value = crlr.loss.objective(
            x, y, indicator, beta, omega, hyper, reduction=config.reduction).total
        if not math.isfinite(new_value):
            raise crlr.loss.NumericalError(
                f"Non-finite objective at iteration {iteration}.", trace=trace)
        trace.append((iteration, new_value))
        logger.debug("Iteration %d: objective %.17g", iteration, new_value)

        if abs(value - new_value) <= config.rel_tol * abs(value):
            converged = True
            break
        value = new_value

    if converged:
        logger.info("Converged after %d iterations.", iteration)
    else:
        logger.info(
            "Stopped after %d iterations without convergence.", iteration)

    state = ModelState(beta, omega, tuple(trace))
    weights = state.weights
    ess = crlr.evaluation.effective_sample_size(weights)
    share = float(crlr.utils.div(float(weights @ y), float(weights.sum()), 0))
    base = float(np.mean(y))
    if (
        ess < _COLLAPSED_FRACTION * data.n or
        min(share, 1 - share) < _COLLAPSED_FRACTION * min(base, 1 - base)
    ):
        logger.warning(
            "Sample weights collapsed: effective sample size %.4g out of %d, "
            "weighted share of positive labels %.4g against %.4g unweighted; "
            "increase lambda2 relative to the number of samples.",
            ess,
            data.n,
            share,
            base,
        )
    balance = crlr.loss.balancing_loss(
        x, indicator, state.weights, hyper.denom_epsilon,
        feature_names=data.feature_names, reduction=config.reduction,
    ) if not bool(indicator.degenerate.all()) else None

    return FitResult(
        state=state,
        converged=converged,
        iterations_used=iteration,
        objective_trace=tuple(trace),
        balance=balance,
        line_search_failures=failures,
        effective_sample_size=ess,
    )


def _check_beta(beta: npt.ArrayLike, x: npt.ArrayLike) -> tuple[np.ndarray, np.ndarray]:
    beta = np.asarray(beta, dtype=np.float64)
    x = np.asarray(x, dtype=np.float64)
    if x.ndim != 2 or beta.shape != (x.shape[1],):  # noqa: PLR2004
        raise ValueError(
            f"Dimension mismatch: beta has shape {beta.shape}, "
            f"features have shape {x.shape}.")
    return beta, x


def predict_proba(beta: npt.ArrayLike, x: npt.ArrayLike) -> np.ndarray:
    """Predict probabilities of the positive label.

    Args:
        beta: Coefficients.
        x: Feature matrix.

    Returns:
        Probabilities `sigmoid(x_i beta)`.

    Examples:
        ```pycon
        >>> import crlr

        >>> crlr.predict_proba([0, 0], [[1, 0], [0, 1]])
        array([0.5, 0.5])

        ```
    """
    beta, x = _check_beta(beta, x)
    return scipy.special.expit(crlr.loss.contract("ij,j->i", x, beta))


def predict(
    beta: npt.ArrayLike,
    x: npt.ArrayLike,
    threshold: float | None = None,
) -> np.ndarray:
    """Predict binary labels.

    Args:
        beta: Coefficients.
        x: Feature matrix.
        threshold: Probability threshold. A probability equal to the threshold
            maps to label `1`. If `None`, the global configuration is used.

    Returns:
        Labels, `1` where the probability is at least the threshold.
    """
    threshold = (
        crlr.utils.auto_check(threshold, "threshold")
        if threshold is not None
        else crlr.config.get_config("threshold")
    )
    return (predict_proba(beta, x) >= threshold).astype(np.int64)


class SavedModel(NamedTuple):
    """Model read from a file.

    Attributes:
        beta: Coefficients.
        feature_names: Feature names.
        hyper: Hyperparameters of the fit.
        config: Solver config of the fit.
        intercept: `True` if the last feature is a constant intercept column.
    """
    beta: np.ndarray
    feature_names: tuple[str, ...]
    hyper: crlr.loss.Hyperparams
    config: SolverConfig
    intercept: bool


class ModelFormatError(ValueError):
    """Invalid model file."""


_HYPER_KEYS = ("lambda1", "lambda2", "lambda3", "lambda4", "lambda5", "denom_epsilon")
_FLOAT_CONFIG_KEYS = (
    "rel_tol", "armijo_shrink", "armijo_slope", "initial_step", "grad_tol")
_INT_CONFIG_KEYS = (
    "max_outer_iters", "inner_beta_iters", "inner_omega_iters", "max_shrinks", "seed")


def save_model(
    path: str | PathLike[str],
    beta: npt.ArrayLike,
    feature_names: Sequence[str],
    hyper: crlr.loss.Hyperparams,
    config: SolverConfig,
    *,
    intercept: bool = False,
) -> None:
    """Write a model to a versioned plain-text file.

    Floats are written with 17 significant digits, so reading the file
    gives exactly the same coefficients.

    Args:
        path: Output file path.
        beta: Coefficients.
        feature_names: Feature names.
        hyper: Hyperparameters of the fit.
        config: Solver config of the fit.
        intercept: `True` if the last feature is a constant intercept column.
    """
    beta = np.asarray(beta, dtype=np.float64)
    if len(feature_names) != beta.shape[0]:
        raise ValueError("Number of feature names must match the coefficients.")

    lines = [
        f"format={MODEL_FORMAT}",
        f"version={MODEL_FORMAT_VERSION}",
        f"p={beta.shape[0]}",
        f"feature_names={json.dumps(list(feature_names), ensure_ascii=False)}",
        f"beta={','.join(format(float(b), '.17g') for b in beta)}",
        f"intercept={int(intercept)}",
        *(f"{key}={float(getattr(hyper, key)):.17g}" for key in _HYPER_KEYS),
        *(f"{key}={float(getattr(config, key)):.17g}" for key in _FLOAT_CONFIG_KEYS),
        *(f"{key}={getattr(config, key)}" for key in _INT_CONFIG_KEYS),
        f"reduction={config.reduction}",
        f"learn_weights={int(config.learn_weights)}",
    ]
    pathlib.Path(path).write_text("\n".join(lines) + "\n", encoding="utf-8")


def load_model(path: str | PathLike[str]) -> SavedModel:
    """Read a model written by `save_model`.

    Args:
        path: Model file path.

    Returns:
        Saved model.
    """
    path = pathlib.Path(path)
    if not path.is_file():
        raise FileNotFoundError(f"Model file not found: {path}")

    fields: dict[str, str] = {}
    for line in path.read_text(encoding="utf-8").splitlines():
        if line.strip() == "":
            continue
        key, sep, value = line.partition("=")
        if sep == "":
            raise ModelFormatError(f"Invalid model file line: {line!r}.")
        fields[key.strip()] = value.strip()

    if fields.get("format") != MODEL_FORMAT:
        raise ModelFormatError(f"{path} is not a model file.")
    if fields.get("version") != str(MODEL_FORMAT_VERSION):
        raise ModelFormatError(
            f"Unsupported model format version {fields.get('version')!r}.")

    try:
        beta = np.array(
            [float(b) for b in fields["beta"].split(",")], dtype=np.float64)
        feature_names = tuple(json.loads(fields["feature_names"]))
        if int(fields["p"]) != beta.shape[0] or len(feature_names) != beta.shape[0]:
            raise ModelFormatError("Inconsistent number of features in model file.")
        hyper = crlr.loss.Hyperparams(
            **{key: float(fields[key]) for key in _HYPER_KEYS})
        config = SolverConfig(
            **{key: float(fields[key]) for key in _FLOAT_CONFIG_KEYS},
            **{key: int(fields[key]) for key in _INT_CONFIG_KEYS},
            reduction=fields["reduction"],  # type: ignore
            learn_weights=fields["learn_weights"] == "1",
        )
    except KeyError as e:
        raise ModelFormatError(f"Missing key {e.args[0]!r} in model file.") from e
    except ModelFormatError:
        raise
    except (TypeError, ValueError) as e:
        raise ModelFormatError(f"Invalid value in model file: {e}") from e

    return SavedModel(
        beta=beta,
        feature_names=feature_names,
        hyper=hyper,
        config=config,
        intercept=fields.get("intercept") == "1",
    )
