"""Prediction metrics and bias level."""

from __future__ import annotations

import math
from typing import TYPE_CHECKING, NamedTuple

import numpy as np

import crlr.core
import crlr.utils


if TYPE_CHECKING:
    from collections.abc import Sequence

    import numpy.typing as npt


class MetricReport(NamedTuple):
    """Prediction quality.

    Attributes:
        accuracy: Fraction of correctly predicted labels.
        f1: Harmonic mean of precision and recall on the positive class,
            `0` if both are zero.
        rmse: Root mean squared difference between predicted probabilities
            and labels.
        n_test: Number of samples.
    """
    accuracy: float
    f1: float
    rmse: float
    n_test: int


def metrics(
    y_true: npt.ArrayLike,
    y_pred_labels: npt.ArrayLike,
    y_pred_proba: npt.ArrayLike,
) -> MetricReport:
    """Compute accuracy, F1 and RMSE of predictions.

    RMSE is computed between predicted probabilities and binary labels.

    Args:
        y_true: True binary labels.
        y_pred_labels: Predicted binary labels.
        y_pred_proba: Predicted probabilities of the positive label.

    Returns:
        Metric report.

    Examples:
        ```pycon
        >>> import crlr

        >>> report = crlr.metrics([1, 0, 1], [1, 0, 1], [0.8, 0.4, 0.6])
        >>> report.accuracy, report.f1, round(report.rmse, 4)
        (1.0, 1.0, 0.3464)

        ```
    """
    y_true = np.asarray(y_true, dtype=np.float64)
    y_pred_labels = np.asarray(y_pred_labels, dtype=np.float64)
    y_pred_proba = np.asarray(y_pred_proba, dtype=np.float64)
    if y_true.ndim != 1 or y_pred_labels.shape != y_true.shape or (
        y_pred_proba.shape != y_true.shape
    ):
        raise ValueError("Labels and predictions must be vectors of equal length.")
    if y_true.shape[0] == 0:
        raise ValueError("Labels and predictions must not be empty.")
    if not np.isin(y_true, (0, 1)).all() or not np.isin(y_pred_labels, (0, 1)).all():
        raise ValueError("Labels must be binary.")
    if not ((y_pred_proba >= 0) & (y_pred_proba <= 1)).all():
        raise ValueError("Probabilities must be in [0, 1].")

    positive = y_true == 1
    predicted = y_pred_labels == 1
    true_pos = int(np.count_nonzero(positive & predicted))
    precision = crlr.utils.div(true_pos, int(np.count_nonzero(predicted)), 0)
    recall = crlr.utils.div(true_pos, int(np.count_nonzero(positive)), 0)
    return MetricReport(
        accuracy=float(np.mean(y_true == y_pred_labels)),
        f1=float(crlr.utils.div(2 * precision * recall, precision + recall, 0)),
        rmse=math.sqrt(float(np.mean((y_pred_proba - y_true) ** 2))),
        n_test=int(y_true.shape[0]),
    )


def bias_level(train: crlr.core.Dataset, test: crlr.core.Dataset) -> float:
    """Distance between the mean feature vectors of two datasets.

    Computed as the 1-norm of the difference of the mean vectors.

    Args:
        train: First dataset.
        test: Second dataset.

    Returns:
        Bias level.
    """
    if train.p != test.p:
        raise ValueError(
            f"Dimension mismatch: datasets have {train.p} and {test.p} features.")
    diff = train.features.mean(axis=0) - test.features.mean(axis=0)
    return float(np.sum(np.abs(diff)))


def effective_sample_size(weights: npt.ArrayLike) -> float:
    """Kish effective sample size of sample weights.

    Computed as `sum(w)**2 / sum(w**2)`. Equals `n` for uniform weights and
    `1` if all the weight is on a single sample.

    Args:
        weights: Nonnegative sample weights.

    Returns:
        Effective sample size, or `0` if all weights are zero.

    Examples:
        ```pycon
        >>> import crlr

        >>> crlr.effective_sample_size([0.25, 0.25, 0.25, 0.25])
        4.0
        >>> crlr.effective_sample_size([0.5, 0.5, 0, 0])
        2.0

        ```
    """
    w = np.asarray(weights, dtype=np.float64)
    if w.ndim != 1 or w.shape[0] == 0:
        raise ValueError("weights must be a non-empty 1-D array.")
    if not np.isfinite(w).all() or bool((w < 0).any()):
        raise ValueError("weights must be finite and nonnegative.")
    return float(crlr.utils.div(float(np.sum(w))**2, float(w @ w), 0))


def top_features(
    beta: npt.ArrayLike,
    k: int = 5,
    feature_names: Sequence[str] | None = None,
) -> list[tuple[str, float]]:
    """Features with the largest absolute coefficients.

    Args:
        beta: Coefficients.
        k: Number of features.
        feature_names: Feature names. If `None`, names `x0`, `x1`, ... are used.

    Returns:
        Pairs of feature name and coefficient, the largest absolute value first.
        Ties are broken by feature order.

    Examples:
        ```pycon
        >>> import crlr

        >>> crlr.top_features([0.1, -2.0, 0.5], k=2, feature_names=["a", "b", "c"])
        [('b', -2.0), ('c', 0.5)]

        ```
    """
    beta = np.asarray(beta, dtype=np.float64)
    crlr.utils.check_scalar(k, "k", typ=int, gt=0)
    if feature_names is None:
        feature_names = [f"x{j}" for j in range(beta.shape[0])]
    order = np.argsort(-np.abs(beta), kind="stable")[:k]
    return [(feature_names[j], float(beta[j])) for j in order]


def relative_improvement(score: float, baseline_scores: Sequence[float]) -> float:
    """Relative improvement of a score over the best baseline score.

    Args:
        score: Score of the method, higher is better.
        baseline_scores: Scores of the baselines.

    Returns:
        `(score - best) / best`, where `best` is the largest baseline score.

    Examples:
        ```pycon
        >>> import crlr

        >>> round(crlr.relative_improvement(0.6, [0.4, 0.5]), 4)
        0.2

        ```
    """
    if len(baseline_scores) == 0:
        raise ValueError("baseline_scores must not be empty.")
    best = max(baseline_scores)
    return float(crlr.utils.div(score - best, best))
