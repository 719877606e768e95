from __future__ import annotations

from typing import TYPE_CHECKING

import numpy as np
import pandas as pd
import polars as pl
import pyarrow as pa
import pytest

import crlr.core


if TYPE_CHECKING:
    import pathlib


@pytest.fixture
def data() -> crlr.core.Dataset:
    return crlr.core.Dataset(
        [[1, 0, 1], [0, 1, 1], [1, 1, 0], [0, 0, 1]],
        [1, 0, 1, 0],
        ["a", "b", "c"],
    )


def test_binarize() -> None:
    np.testing.assert_array_equal(
        crlr.core.binarize([-1.5, -0.0, 0.0, 2.0]),
        [0.0, 1.0, 1.0, 1.0],
    )
    np.testing.assert_array_equal(
        crlr.core.binarize([0.2, 0.7], threshold=0.5), [0.0, 1.0])
    assert crlr.core.binarize([[1.0]]).dtype == np.float64

def test_binarize_keeps_binary_columns() -> None:
    np.testing.assert_array_equal(
        crlr.core.binarize([[0.7, 0.0], [-0.2, 1.0], [0.0, 0.0]]),
        [[1.0, 0.0], [0.0, 1.0], [1.0, 0.0]],
    )
    binary = np.array([[1.0, 0.0], [0.0, 1.0]])
    np.testing.assert_array_equal(crlr.core.binarize(binary), binary)
    np.testing.assert_array_equal(crlr.core.binarize([0.0, 1.0, 0.0]), [0, 1, 0])

def test_binarize_idempotent() -> None:
    rng = np.random.default_rng(3)
    for _ in range(100):
        values = rng.normal(size=(int(rng.integers(1, 8)), int(rng.integers(1, 5))))
        values[rng.random(values.shape) < 0.2] = 0.0
        once = crlr.core.binarize(values)
        np.testing.assert_array_equal(crlr.core.binarize(once), once)

def test_binarize_non_finite() -> None:
    with pytest.raises(crlr.core.NonFiniteValueError):
        crlr.core.binarize([0.0, np.nan])
    with pytest.raises(crlr.core.NonFiniteValueError):
        crlr.core.binarize([np.inf])


def test_dataset_init(data: crlr.core.Dataset) -> None:
    assert data.n == 4
    assert data.p == 3
    assert data.feature_names == ("a", "b", "c")
    assert data.features.dtype == np.float64
    assert not data.features.flags.writeable
    assert not data.labels.flags.writeable

def test_dataset_copies_input() -> None:
    features = np.array([[1.0, 0.0], [0.0, 1.0]])
    data = crlr.core.Dataset(features, [0, 1])
    features[0, 0] = 0
    assert data.features[0, 0] == 1
    assert data.feature_names == ("x0", "x1")

def test_dataset_repr(data: crlr.core.Dataset) -> None:
    assert repr(data).startswith("Dataset(features=")

@pytest.mark.parametrize(
    ("features", "labels", "names", "match"),
    [
        ([1, 0], [1, 0], None, "two-dimensional"),
        ([[1, 0], [0, 1]], [1, 0, 1], None, "Labels must be a vector"),
        ([[1, 0]], [1], None, "n >= 2 and p >= 2"),
        ([[1], [0]], [1, 0], None, "n >= 2 and p >= 2"),
        ([[1, 0.5], [0, 1]], [1, 0], None, "feature entry"),
        ([[1, 0], [0, 1]], [1, 2], None, "label entry"),
        ([[1, 0], [0, 1]], [1, 0], ["a"], "feature names"),
        ([[1, 0], [0, 1]], [1, 0], ["a", "a"], "unique"),
    ],
)
def test_dataset_invalid(
    features: object,
    labels: object,
    names: list[str] | None,
    match: str,
) -> None:
    with pytest.raises(crlr.core.DatasetError, match=match):
        crlr.core.Dataset(features, labels, names)  # type: ignore


def test_indicator_from_features(data: crlr.core.Dataset) -> None:
    ind = crlr.core.indicator_from_features(data)
    np.testing.assert_array_equal(ind.entries, data.features)
    np.testing.assert_array_equal(ind.treated_counts, [2, 2, 3])
    np.testing.assert_array_equal(ind.control_counts, [2, 2, 1])
    np.testing.assert_array_equal(
        ind.treated_counts + ind.control_counts, [data.n] * data.p)
    assert not ind.degenerate.any()

def test_indicator_from_features_degenerate() -> None:
    ind = crlr.core.indicator_from_features([[1, 0, 1], [1, 0, 0]])
    np.testing.assert_array_equal(ind.degenerate, [True, True, False])

def test_indicator_from_features_not_binary() -> None:
    with pytest.raises(crlr.core.DatasetError):
        crlr.core.indicator_from_features([[0.5, 1.0], [1.0, 0.0]])


def test_confounder_view(data: crlr.core.Dataset) -> None:
    view = crlr.core.ConfounderView(data.features, treatment=1)
    assert view.shape == (4, 3)
    assert view.features is data.features

    masked = np.array(data.features)
    masked[:, 1] = 0
    coef = np.array([0.5, 2.0, -1.0])
    np.testing.assert_array_equal(view.matvec(coef), masked @ coef)
    np.testing.assert_array_equal(coef, [0.5, 2.0, -1.0])

    weights = np.array([0.1, 0.2, 0.3, 0.4])
    np.testing.assert_array_equal(view.rmatvec(weights), weights @ masked)

    rows = view.take([0, 2])
    np.testing.assert_array_equal(rows, masked[[0, 2]])
    rows[0, 0] = 42
    assert data.features[0, 0] == 1

def test_confounder_view_invalid_treatment(data: crlr.core.Dataset) -> None:
    with pytest.raises(ValueError, match="must be <"):
        crlr.core.ConfounderView(data.features, treatment=3)


def test_add_intercept(data: crlr.core.Dataset) -> None:
    with_intercept = crlr.core.add_intercept(data)
    assert with_intercept.p == 4
    assert with_intercept.feature_names[-1] == crlr.core.INTERCEPT_NAME
    np.testing.assert_array_equal(with_intercept.features[:, -1], 1)
    assert crlr.core.indicator_from_features(with_intercept).degenerate[-1]
    with pytest.raises(crlr.core.DatasetError):
        crlr.core.add_intercept(with_intercept)


def test_load_dataset(tmp_path: pathlib.Path) -> None:
    path = tmp_path / "data.csv"
    path.write_text("a,y,b\n1,1,0\n0,0,1\n1,0,1\n", encoding="utf-8")
    data = crlr.core.load_dataset(path, "y")
    assert data.feature_names == ("a", "b")
    np.testing.assert_array_equal(data.features, [[1, 0], [0, 1], [1, 1]])
    np.testing.assert_array_equal(data.labels, [1, 0, 0])

    by_index = crlr.core.load_dataset(path, 1)
    np.testing.assert_array_equal(by_index.features, data.features)
    by_digit = crlr.core.load_dataset(path, "1")
    np.testing.assert_array_equal(by_digit.labels, data.labels)

def test_load_dataset_binarizes_real_values(tmp_path: pathlib.Path) -> None:
    path = tmp_path / "data.csv"
    path.write_text("a,b,y\n0.5,1,2.5\n-0.5,0,-1\n", encoding="utf-8")
    with pytest.warns(UserWarning, match="Binarized"):
        data = crlr.core.load_dataset(path, "y")
    np.testing.assert_array_equal(data.features, [[1, 1], [0, 0]])
    np.testing.assert_array_equal(data.labels, [1, 0])

def test_load_dataset_mixed_columns(tmp_path: pathlib.Path) -> None:
    path = tmp_path / "data.csv"
    path.write_text("a,b,y\n0.5,1,1\n-0.5,0,0\n0.3,0,1\n", encoding="utf-8")
    with pytest.warns(UserWarning, match="Binarized real-valued columns: a[.]"):
        data = crlr.core.load_dataset(path, "y")
    np.testing.assert_array_equal(data.features, [[1, 1], [0, 0], [1, 0]])
    assert not crlr.core.indicator_from_features(data).degenerate.any()

def test_load_dataset_missing_file(tmp_path: pathlib.Path) -> None:
    with pytest.raises(FileNotFoundError):
        crlr.core.load_dataset(tmp_path / "missing.csv", "y")

def test_load_dataset_ragged(tmp_path: pathlib.Path) -> None:
    path = tmp_path / "data.csv"
    path.write_text("a,b,y\n1,0,1\n0,1\n", encoding="utf-8")
    with pytest.raises(crlr.core.RaggedRowsError):
        crlr.core.load_dataset(path, "y")

def test_load_dataset_missing_label(tmp_path: pathlib.Path) -> None:
    path = tmp_path / "data.csv"
    path.write_text("a,b,y\n1,0,1\n0,1,0\n", encoding="utf-8")
    with pytest.raises(crlr.core.LabelColumnError):
        crlr.core.load_dataset(path, "label")
    with pytest.raises(crlr.core.LabelColumnError):
        crlr.core.load_dataset(path, 3)

def test_load_dataset_non_numeric(tmp_path: pathlib.Path) -> None:
    path = tmp_path / "data.csv"
    path.write_text("a,b,y\n1,0,1\n0,abc,0\n", encoding="utf-8")
    with pytest.raises(crlr.core.NonNumericCellError) as exc_info:
        crlr.core.load_dataset(path, "y")
    assert exc_info.value.row == 2
    assert exc_info.value.column == "b"
    assert exc_info.value.value == "abc"

def test_load_dataset_empty_cell(tmp_path: pathlib.Path) -> None:
    path = tmp_path / "data.csv"
    path.write_text("a,b,y\n1,,1\n0,1,0\n", encoding="utf-8")
    with pytest.raises(crlr.core.NonNumericCellError):
        crlr.core.load_dataset(path, "y")

def test_load_dataset_non_finite(tmp_path: pathlib.Path) -> None:
    path = tmp_path / "data.csv"
    path.write_text("a,b,y\n1,nan,1\n0,1,0\n", encoding="utf-8")
    with pytest.raises(crlr.core.NonFiniteValueError):
        crlr.core.load_dataset(path, "y")

def test_load_dataset_duplicate_columns(tmp_path: pathlib.Path) -> None:
    path = tmp_path / "data.csv"
    path.write_text("a,a,y\n1,0,1\n0,1,0\n", encoding="utf-8")
    with pytest.raises(crlr.core.DatasetError, match="unique"):
        crlr.core.load_dataset(path, "y")


def test_columns_from_table() -> None:
    table = pa.table({"a": [1, 0], "b": [0.25, 3.5], "c": [0, 1]})
    np.testing.assert_array_equal(
        crlr.core.columns_from_table(table, ["c", "a"]), [[0, 1], [1, 0]])
    np.testing.assert_array_equal(
        crlr.core.columns_from_table(table, ["b"], binarize_real=False),
        [[0.25], [3.5]],
    )
    with pytest.warns(UserWarning):
        crlr.core.columns_from_table(table, ["b"])
    with pytest.raises(crlr.core.DatasetError, match="Missing columns: d"):
        crlr.core.columns_from_table(table, ["a", "d"])


@pytest.mark.parametrize(
    "frame",
    [
        pa.table({"a": [1, 0, 1], "b": [0, 1, 1], "y": [1, 0, 1]}),
        pd.DataFrame({"a": [1, 0, 1], "b": [0, 1, 1], "y": [1, 0, 1]}),
        pl.DataFrame({"a": [1, 0, 1], "b": [0, 1, 1], "y": [1, 0, 1]}),
    ],
)
def test_read_dataset(frame: object) -> None:
    data = crlr.core.read_dataset(frame, "y")  # type: ignore
    assert data.feature_names == ("a", "b")
    np.testing.assert_array_equal(data.features, [[1, 0], [0, 1], [1, 1]])
    np.testing.assert_array_equal(data.labels, [1, 0, 1])


def test_write_dataset(data: crlr.core.Dataset, tmp_path: pathlib.Path) -> None:
    path = tmp_path / "data.csv"
    crlr.core.write_dataset(data, path, "label")
    loaded = crlr.core.load_dataset(path, "label")
    assert loaded.feature_names == data.feature_names
    np.testing.assert_array_equal(loaded.features, data.features)
    np.testing.assert_array_equal(loaded.labels, data.labels)
    with pytest.raises(crlr.core.LabelColumnError):
        crlr.core.write_dataset(data, path, "a")
