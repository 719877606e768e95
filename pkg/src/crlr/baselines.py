"""Baselines: logistic regression and the two-step balance-then-regress method."""

from __future__ import annotations

import logging
import math
from typing import TYPE_CHECKING, NamedTuple

import numpy as np

import crlr.core
import crlr.loss
import crlr.solver
import crlr.utils


if TYPE_CHECKING:
    from collections.abc import Callable, Iterable
    from typing import Any, TypeAlias

    import numpy.typing as npt


    MapLike: TypeAlias = Callable[[Callable[[int], Any], Iterable[int]], Iterable[Any]]


logger = logging.getLogger(__name__)


class DegenerateTreatmentError(ValueError):
    """Treatment feature has no treated or no control samples."""


class SingleBalanceResult(NamedTuple):
    """Control-group weights balancing confounders for a single treatment.

    Attributes:
        treatment_feature: Index of the treatment feature.
        weights: Nonnegative weights of the control samples, in row order.
        residual_imbalance: Squared norm of the difference between the treated
            confounder mean and the weighted sum of control confounders.
        control_indices: Row indices of the control samples.
        iterations: Number of projected gradient iterations.
    """
    treatment_feature: int
    weights: np.ndarray
    residual_imbalance: float
    control_indices: np.ndarray
    iterations: int


class TwoStepResult(NamedTuple):
    """Result of the two-step method.

    Attributes:
        beta: Coefficients over all features, zero for unselected features.
        selected: Sorted indices of the selected features.
        effects: Estimated causal effect of every feature, zero for
            degenerate features.
    """
    beta: np.ndarray
    selected: np.ndarray
    effects: np.ndarray


def fit_logistic(
    data: crlr.core.Dataset,
    l1: float = 0,
    l2: float = 0,
    config: crlr.solver.SolverConfig | None = None,
) -> np.ndarray:
    """Fit logistic regression with an elastic net penalty.

    Equivalent to `fit` with `lambda1 = lambda2 = lambda5 = 0` and sample
    weights frozen at `1/n`.

    Args:
        data: Training dataset.
        l1: Lasso penalty.
        l2: Ridge penalty.
        config: Solver config. If `None`, the global configuration is used.

    Returns:
        Coefficients.

    Examples:
        ```pycon
        >>> import crlr

        >>> data = crlr.Dataset([[1, 0], [1, 0], [0, 1], [0, 1]], [1, 1, 0, 0])
        >>> beta = crlr.fit_logistic(data, l2=0.01)
        >>> bool(beta[0] > 0 > beta[1])
        True

        ```
    """
    crlr.utils.check_scalar(l1, "l1", typ=float | int, ge=0)
    crlr.utils.check_scalar(l2, "l2", typ=float | int, ge=0)
    if config is None:
        config = crlr.solver.SolverConfig()
    hyper = crlr.loss.Hyperparams(
        lambda1=0, lambda2=0, lambda3=l2, lambda4=l1, lambda5=0)
    result = crlr.solver.fit(data, hyper, config.with_params(learn_weights=False))
    return result.state.beta


def single_treatment_weights(
    x: npt.ArrayLike,
    treatment: int,
    *,
    tol: float = 1e-8,
    max_iter: int = 10_000,
) -> SingleBalanceResult:
    """Learn control-group weights balancing confounders for a single treatment.

    Minimizes `||mean_treated - X_c^T W||^2` over nonnegative `W`, where
    `X_c` holds the confounders of the control samples, by projected gradient
    descent with step `1 / L`, `L = 2 ||X_c||_2^2`. Starts from uniform weights
    `1 / n_c`. Stops when the projected gradient norm is below `tol`
    or after `max_iter` iterations.

    Args:
        x: Binary feature matrix.
        treatment: Index of the treatment feature.
        tol: Tolerance of the projected gradient norm.
        max_iter: Maximum number of iterations.

    Returns:
        Control-group weights with the residual imbalance.

    Examples:
        ```pycon
        >>> import crlr

        >>> result = crlr.single_treatment_weights(
        ...     [[1, 1, 0], [1, 0, 1], [0, 1, 0], [0, 0, 1]], treatment=0)
        >>> result.residual_imbalance < 1e-12
        True

        ```
    """
    x = np.asarray(x, dtype=np.float64)
    crlr.utils.check_scalar(tol, "tol", typ=float | int, gt=0)
    crlr.utils.check_scalar(max_iter, "max_iter", typ=int, gt=0)
    view = crlr.core.ConfounderView(x, treatment)
    treated = x[:, treatment] == 1
    control_indices = np.flatnonzero(~treated)
    n_treated = int(np.count_nonzero(treated))
    if n_treated == 0 or len(control_indices) == 0:
        raise DegenerateTreatmentError(
            f"Treatment feature {treatment} has no treated or no control samples.")

    target = view.rmatvec(treated.astype(np.float64)) / n_treated
    lipschitz = 2 * np.linalg.norm(view.take(control_indices), 2) ** 2

    n = x.shape[0]
    full = np.zeros(n)

    def residual(weights: np.ndarray) -> np.ndarray:
        full[control_indices] = weights
        return target - view.rmatvec(full)

    def gradient(res: np.ndarray) -> np.ndarray:
        return -2 * view.matvec(res)[control_indices]

    weights = np.full(len(control_indices), 1 / len(control_indices))
    res = residual(weights)
    iterations = 0
    if lipschitz > 0:
        for iterations in range(1, max_iter + 1):  # noqa: B007
            grad = gradient(res)
            if np.linalg.norm(weights - np.maximum(weights - grad, 0)) < tol:
                break
            weights = np.maximum(weights - grad/lipschitz, 0)
            res = residual(weights)

    return SingleBalanceResult(
        treatment_feature=int(treatment),
        weights=weights,
        residual_imbalance=float(res @ res),
        control_indices=control_indices,
        iterations=iterations,
    )


def estimate_effect(
    x: npt.ArrayLike,
    y: npt.ArrayLike,
    treatment: int,
    balance: SingleBalanceResult | None = None,
) -> float:
    """Estimate the causal effect of a feature on the label.

    The effect is the mean label of treated samples minus the balanced
    weighted mean label of control samples. If the balancing weights sum
    to zero, the unweighted control mean is used.

    Args:
        x: Binary feature matrix.
        y: Binary labels.
        treatment: Index of the treatment feature.
        balance: Control-group weights. If `None`, they are computed with
            `single_treatment_weights`.

    Returns:
        Effect estimate.
    """
    x = np.asarray(x, dtype=np.float64)
    y = np.asarray(y, dtype=np.float64)
    if balance is None:
        balance = single_treatment_weights(x, treatment)
    treated_mean = float(np.mean(y[x[:, treatment] == 1]))
    control_y = y[balance.control_indices]
    weight_sum = float(np.sum(balance.weights))
    if weight_sum > 0:
        control_mean = float(balance.weights @ control_y) / weight_sum
    else:
        logger.info(
            "Balancing weights of feature %d sum to zero, "
            "using the unweighted control mean.",
            treatment,
        )
        control_mean = float(np.mean(control_y))
    return treated_mean - control_mean


def two_step_fit(
    data: crlr.core.Dataset,
    top_k: int | None = None,
    config: crlr.solver.SolverConfig | None = None,
    *,
    l1: float = 0,
    l2: float = 0,
    map_: MapLike = map,
) -> TwoStepResult:
    """Fit the two-step method: select features by balanced effects, then regress.

    For every non-degenerate feature, balances confounders with
    `single_treatment_weights` and estimates the causal effect with
    `estimate_effect`. Selects `top_k` features with the largest absolute
    effect, ties broken by feature order, and fits `fit_logistic`
    on the selected features only. A column named `intercept` is always
    kept in addition to the `top_k` selected features.

    Args:
        data: Training dataset.
        top_k: Number of features to select. Default is `ceil(p / 2)`.
        config: Solver config. If `None`, the global configuration is used.
        l1: Lasso penalty of the regression step.
        l2: Ridge penalty of the regression step.
        map_: Map-like function to run the per-feature balancing.

    Returns:
        Coefficients over all features with the selection and effects.
    """
    if top_k is None:
        top_k = math.ceil(data.p / 2)
    crlr.utils.check_scalar(top_k, "top_k", typ=int, gt=0, le=data.p)
    x, y = data.features, data.labels
    indicator = crlr.core.indicator_from_features(data)

    def effect(j: int) -> float:
        if indicator.degenerate[j]:
            return 0.0
        return estimate_effect(x, y, j)

    effects = np.array(list(map_(effect, range(data.p))), dtype=np.float64)
    order = np.argsort(-np.abs(effects), kind="stable")
    intercept = [
        j for j, name in enumerate(data.feature_names)
        if name == crlr.core.INTERCEPT_NAME
    ]
    selected = np.union1d(order[:top_k], intercept).astype(np.int64)

    mask = np.zeros(data.p)
    mask[selected] = 1
    masked = crlr.core.Dataset(x * mask, y, data.feature_names)
    beta = fit_logistic(masked, l1=l1, l2=l2, config=config)
    beta[mask == 0] = 0
    return TwoStepResult(beta=beta, selected=selected, effects=effects)
