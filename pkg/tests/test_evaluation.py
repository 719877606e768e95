from __future__ import annotations

import math

import numpy as np
import pytest

import crlr.core
import crlr.evaluation


def test_metrics() -> None:
    report = crlr.evaluation.metrics([1, 0, 1], [1, 0, 1], [0.8, 0.4, 0.6])
    assert isinstance(report, crlr.evaluation.MetricReport)
    assert report.accuracy == 1
    assert report.f1 == 1
    assert report.rmse == pytest.approx(math.sqrt(0.12))
    assert report.n_test == 3

def test_metrics_partial() -> None:
    report = crlr.evaluation.metrics(
        [1, 1, 0, 0], [1, 0, 1, 0], [0.9, 0.2, 0.7, 0.1])
    assert report.accuracy == 0.5
    assert report.f1 == pytest.approx(0.5)
    assert report.rmse == pytest.approx(
        math.sqrt((0.01 + 0.64 + 0.49 + 0.01) / 4))

def test_metrics_no_positive_predictions() -> None:
    report = crlr.evaluation.metrics([1, 0], [0, 0], [0.3, 0.1])
    assert report.f1 == 0
    assert report.accuracy == 0.5

@pytest.mark.parametrize(
    ("y_true", "y_pred", "y_proba", "match"),
    [
        ([1, 0], [1], [0.5, 0.5], "equal length"),
        ([[1, 0]], [[1, 0]], [[0.5, 0.5]], "equal length"),
        ([], [], [], "must not be empty"),
        ([1, 2], [1, 0], [0.5, 0.5], "binary"),
        ([1, 0], [1, 0.5], [0.5, 0.5], "binary"),
        ([1, 0], [1, 0], [1.5, 0.5], r"\[0, 1\]"),
        ([1, 0], [1, 0], [-0.1, 0.5], r"\[0, 1\]"),
    ],
)
def test_metrics_invalid(
    y_true: list[float],
    y_pred: list[float],
    y_proba: list[float],
    match: str,
) -> None:
    with pytest.raises(ValueError, match=match):
        crlr.evaluation.metrics(y_true, y_pred, y_proba)


def test_bias_level() -> None:
    train = crlr.core.Dataset([[1, 0], [1, 1], [0, 1], [1, 0]], [1, 0, 1, 0])
    test = crlr.core.Dataset([[0, 0], [0, 1], [1, 1], [0, 1]], [1, 0, 1, 0])
    assert crlr.evaluation.bias_level(train, test) == pytest.approx(0.75)
    assert crlr.evaluation.bias_level(train, train) == 0

def test_bias_level_symmetric() -> None:
    rng = np.random.default_rng(0)
    for _ in range(10):
        train = crlr.core.Dataset(
            rng.integers(0, 2, size=(30, 4)), rng.integers(0, 2, 30))
        test = crlr.core.Dataset(
            rng.integers(0, 2, size=(20, 4)), rng.integers(0, 2, 20))
        forward = crlr.evaluation.bias_level(train, test)
        assert forward == crlr.evaluation.bias_level(test, train)

def test_bias_level_dimension_mismatch() -> None:
    train = crlr.core.Dataset([[1, 0], [0, 1]], [1, 0])
    test = crlr.core.Dataset([[1, 0, 1], [0, 1, 0]], [1, 0])
    with pytest.raises(ValueError, match="Dimension mismatch"):
        crlr.evaluation.bias_level(train, test)


def test_effective_sample_size() -> None:
    assert crlr.evaluation.effective_sample_size(np.full(8, 0.125)) == 8
    assert crlr.evaluation.effective_sample_size([0, 0, 2.0]) == 1
    assert crlr.evaluation.effective_sample_size([0.5, 0.5, 0, 0]) == 2
    assert crlr.evaluation.effective_sample_size([0.0, 0.0]) == 0

@pytest.mark.parametrize("weights", [[], [[0.5, 0.5]], [0.5, -0.1], [0.5, math.nan]])
def test_effective_sample_size_invalid(weights: list[float]) -> None:
    with pytest.raises(ValueError, match="weights must be"):
        crlr.evaluation.effective_sample_size(weights)


def test_top_features() -> None:
    assert crlr.evaluation.top_features(
        [0.1, -2.0, 0.5], k=2, feature_names=["a", "b", "c"],
    ) == [("b", -2.0), ("c", 0.5)]
    assert crlr.evaluation.top_features([1.0, -1.0, 0.0], k=5) == [
        ("x0", 1.0), ("x1", -1.0), ("x2", 0.0)]

def test_top_features_invalid() -> None:
    with pytest.raises(ValueError, match="must be >"):
        crlr.evaluation.top_features(np.zeros(3), k=0)


def test_relative_improvement() -> None:
    assert crlr.evaluation.relative_improvement(0.6, [0.4, 0.5]) == pytest.approx(0.2)
    assert crlr.evaluation.relative_improvement(0.4, [0.5]) == pytest.approx(-0.2)

def test_relative_improvement_empty() -> None:
    with pytest.raises(ValueError, match="must not be empty"):
        crlr.evaluation.relative_improvement(0.5, [])
