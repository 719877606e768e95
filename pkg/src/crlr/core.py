"""Datasets, binarization and the treatment indicator matrix."""

from __future__ import annotations

import pathlib
from typing import TYPE_CHECKING, NamedTuple
import warnings

import narwhals as nw
import numpy as np
import pyarrow as pa
import pyarrow.compute as pc
import pyarrow.csv

import crlr.utils


if TYPE_CHECKING:
    from collections.abc import Sequence
    from os import PathLike

    import narwhals.typing  # noqa: TC004
    import numpy.typing as npt


INTERCEPT_NAME = "intercept"


class DatasetError(ValueError):
    """Invalid dataset."""


class RaggedRowsError(DatasetError):
    """Rows of a CSV file have different numbers of cells."""


class LabelColumnError(DatasetError):
    """Label column is missing."""


class NonNumericCellError(DatasetError):
    """A data cell cannot be parsed as a number.

    Attributes:
        row: One-based data row number, the header row excluded.
        column: Column name.
        value: Cell text.
    """
    def __init__(self, row: int, column: str, value: str) -> None:
        """Create the error for a cell.

        Args:
            row: One-based data row number, the header row excluded.
            column: Column name.
            value: Cell text.
        """
        self.row = row
        self.column = column
        self.value = value
        super().__init__(
            f"Non-numeric cell {value!r} in row {row}, column {column!r}.")


class NonFiniteValueError(DatasetError):
    """Input contains NaN or infinite values."""


def binarize(values: npt.ArrayLike, threshold: float = 0.0) -> np.ndarray:
    """Binarize real values: `1` where a value is `>= threshold`, `0` otherwise.

    Columns of a matrix that already contain only zeros and ones are kept
    as is, so binarizing a binary matrix, or the output of `binarize`,
    changes nothing. Arrays of other dimensions are treated as one column.

    Args:
        values: Real values, any shape.
        threshold: Threshold of the rule. Zero maps to `1` at the default threshold.

    Returns:
        Float array of zeros and ones with the same shape.

    Examples:
        ```pycon
        >>> import crlr

        >>> crlr.binarize([[0.7, -0.2, 0.0], [0.0, 3.1, 1.0]])
        array([[1., 0., 0.],
               [1., 1., 1.]])

        ```
    """
    arr = np.asarray(values, dtype=np.float64)
    if not np.isfinite(arr).all():
        raise NonFiniteValueError("Values must be finite to be binarized.")
    is_binary = np.isin(arr, (0, 1))
    keep = is_binary.all(axis=0) if arr.ndim == 2 else is_binary.all()  # noqa: PLR2004
    return np.where(keep, arr, arr >= threshold).astype(np.float64)


def _is_binary(arr: np.ndarray) -> bool:
    return bool(np.isin(arr, (0, 1)).all())


def _read_only(arr: np.ndarray) -> np.ndarray:
    arr = np.array(arr, dtype=np.float64, copy=True)
    arr.flags.writeable = False
    return arr


class Dataset(crlr.utils.ReprMixin):
    """Binary feature matrix with a binary label vector."""

    def __init__(
        self,
        features: npt.ArrayLike,
        labels: npt.ArrayLike,
        feature_names: Sequence[str] | None = None,
    ) -> None:
        """Binary feature matrix with a binary label vector.

        Arrays are copied and stored read-only as `float64`.

        Args:
            features: Feature matrix with `n` rows and `p` columns of zeros and ones.
            labels: Label vector of length `n`, zeros and ones.
            feature_names: Feature names. If `None`, names `x0`, `x1`, ...
                are used.

        Examples:
            ```pycon
            >>> import crlr

            >>> data = crlr.Dataset([[1, 0], [0, 1], [1, 1]], [1, 0, 1])
            >>> data.n, data.p
            (3, 2)
            >>> data.feature_names
            ('x0', 'x1')

            ```
        """
        features = np.asarray(features, dtype=np.float64)
        labels = np.asarray(labels, dtype=np.float64)
        if features.ndim != 2:  # noqa: PLR2004
            raise DatasetError("Features must be a two-dimensional matrix.")
        if labels.ndim != 1 or labels.shape[0] != features.shape[0]:
            raise DatasetError(
                f"Labels must be a vector of length {features.shape[0]}.")
        if features.shape[0] < 2 or features.shape[1] < 2:  # noqa: PLR2004
            raise DatasetError(
                f"Dataset must have n >= 2 and p >= 2, got shape {features.shape}.")
        if not _is_binary(features):
            raise DatasetError("Every feature entry must be exactly 0 or 1.")
        if not _is_binary(labels):
            raise DatasetError("Every label entry must be exactly 0 or 1.")

        if feature_names is None:
            feature_names = tuple(f"x{j}" for j in range(features.shape[1]))
        feature_names = tuple(str(name) for name in feature_names)
        if len(feature_names) != features.shape[1]:
            raise DatasetError(
                f"Expected {features.shape[1]} feature names, "
                f"got {len(feature_names)}.")
        if len(set(feature_names)) != len(feature_names):
            raise DatasetError("Feature names must be unique.")

        self.features = _read_only(features)
        self.labels = _read_only(labels)
        self.feature_names = feature_names

    @property
    def n(self) -> int:
        """Number of samples."""
        return self.features.shape[0]

    @property
    def p(self) -> int:
        """Number of features."""
        return self.features.shape[1]


class IndicatorMatrix(NamedTuple):
    """Treatment status of every sample for every feature taken as treatment.

    Attributes:
        entries: Matrix with `n` rows and `p` columns. Column `j` is the
            treatment-status vector when feature `j` is the treatment.
        treated_counts: Number of treated samples per feature.
        control_counts: Number of control samples per feature.
        degenerate: `True` for features without a treated or a control group.
    """
    entries: np.ndarray
    treated_counts: np.ndarray
    control_counts: np.ndarray
    degenerate: np.ndarray


def indicator_from_features(data: Dataset | npt.ArrayLike) -> IndicatorMatrix:
    """Compute the indicator matrix of a dataset.

    A sample is treated for feature `j` if the feature is present,
    so the indicator matrix equals the binary feature matrix.

    Args:
        data: Dataset or binary feature matrix.

    Returns:
        Indicator matrix with treated and control counts per feature.

    Examples:
        ```pycon
        >>> import crlr

        >>> ind = crlr.indicator_from_features([[1, 1], [0, 1], [1, 1]])
        >>> ind.treated_counts
        array([2, 3])
        >>> ind.degenerate
        array([False,  True])

        ```
    """
    features = data.features if isinstance(data, Dataset) else _read_only(
        np.asarray(data, dtype=np.float64))
    if features.ndim != 2 or not _is_binary(features):  # noqa: PLR2004
        raise DatasetError("Indicator matrix requires a binary feature matrix.")
    treated = np.count_nonzero(features, axis=0)
    control = features.shape[0] - treated
    return IndicatorMatrix(
        entries=features,
        treated_counts=treated,
        control_counts=control,
        degenerate=(treated == 0) | (control == 0),
    )


class ConfounderView:
    """Feature matrix with the treatment column replaced by zeros.

    The view holds a reference to the feature matrix and never copies it.

    Examples:
        ```pycon
        >>> import numpy as np
        >>> import crlr

        >>> view = crlr.ConfounderView(np.array([[1., 1.], [0., 1.]]), treatment=1)
        >>> view.rmatvec(np.array([1.0, 1.0]))
        array([1., 0.])

        ```
    """
    def __init__(self, features: np.ndarray, treatment: int) -> None:
        """Feature matrix with the treatment column replaced by zeros.

        Args:
            features: Feature matrix.
            treatment: Index of the treatment feature.
        """
        crlr.utils.check_scalar(
            treatment, "treatment", typ=int | np.integer, ge=0, lt=features.shape[1])
        self.features = features
        self.treatment = int(treatment)

    @property
    def shape(self) -> tuple[int, int]:
        """Shape of the view."""
        return self.features.shape

    def matvec(self, coef: np.ndarray) -> np.ndarray:
        """Product of the view and a vector of length `p`."""
        masked = np.array(coef, dtype=np.float64)
        masked[self.treatment] = 0
        return self.features @ masked

    def rmatvec(self, weights: np.ndarray) -> np.ndarray:
        """Product of the transposed view and a vector of length `n`."""
        result = weights @ self.features
        result[self.treatment] = 0
        return result

    def take(self, rows: npt.ArrayLike) -> np.ndarray:
        """Materialize the selected rows of the view.

        Args:
            rows: Row indices or boolean mask.

        Returns:
            A new array with the treatment column set to zero.
        """
        result = np.array(self.features[rows], dtype=np.float64)
        result[:, self.treatment] = 0
        return result


def add_intercept(data: Dataset) -> Dataset:
    """Append a constant column named `intercept`.

    The constant column has no control group, so it is always degenerate
    and never enters the balancing regularizer.

    Args:
        data: Dataset.

    Returns:
        New dataset with `p + 1` features.
    """
    if INTERCEPT_NAME in data.feature_names:
        raise DatasetError(f"Dataset already has a column {INTERCEPT_NAME!r}.")
    return Dataset(
        np.column_stack((data.features, np.ones(data.n))),
        data.labels,
        (*data.feature_names, INTERCEPT_NAME),
    )


def _column_to_numpy(column: pa.ChunkedArray, name: str) -> np.ndarray:
    if pa.types.is_integer(column.type) or pa.types.is_floating(column.type):
        return column.to_numpy().astype(np.float64)

    texts = pc.cast(column, pa.string()).to_pylist()
    values = np.empty(len(texts), dtype=np.float64)
    for i, text in enumerate(texts):
        try:
            values[i] = float(text)
        except (TypeError, ValueError):
            raise NonNumericCellError(i + 1, name, str(text)) from None
    return values


def _label_index(column_names: list[str], label_column: str | int) -> int:
    if isinstance(label_column, str):
        if label_column in column_names:
            return column_names.index(label_column)
        if not label_column.isdigit():
            raise LabelColumnError(f"Label column {label_column!r} not found.")
        label_column = int(label_column)

    if not 0 <= label_column < len(column_names):
        raise LabelColumnError(
            f"Label column index {label_column} is out of range "
            f"for {len(column_names)} columns.")
    return label_column


def _dataset_from_table(table: pa.Table, label_column: str | int) -> Dataset:
    names = list(table.column_names)
    if len(set(names)) != len(names):
        raise DatasetError("Column names must be unique.")
    label_idx = _label_index(names, label_column)
    feature_names = [name for i, name in enumerate(names) if i != label_idx]
    features = columns_from_table(table, feature_names)

    labels = _column_to_numpy(table.column(label_idx), names[label_idx])
    if not np.isfinite(labels).all():
        raise NonFiniteValueError("Labels contain NaN or infinite values.")
    if not _is_binary(labels):
        warnings.warn(
            f"Binarized real-valued label column {names[label_idx]!r}.",
            UserWarning,
            stacklevel=3,
        )
        labels = binarize(labels)

    return Dataset(features, labels, feature_names)


def load_table(path: str | PathLike[str]) -> pa.Table:
    """Read a CSV file into a PyArrow Table.

    Empty cells and strings like `NA` are kept as text, never as nulls.

    Args:
        path: File path.

    Returns:
        Table with the columns of the file.
    """
    path = pathlib.Path(path)
    if not path.is_file():
        raise FileNotFoundError(f"File not found: {path}")

    try:
        return pyarrow.csv.read_csv(
            path,
            convert_options=pyarrow.csv.ConvertOptions(
                null_values=[],
                strings_can_be_null=False,
                quoted_strings_can_be_null=False,
            ),
        )
    except pa.ArrowInvalid as e:
        if "columns" in str(e):
            raise RaggedRowsError(f"Ragged rows in {path}: {e}") from e
        raise DatasetError(f"Cannot parse {path}: {e}") from e


def columns_from_table(
    table: pa.Table,
    names: Sequence[str],
    *,
    binarize_real: bool = True,
) -> np.ndarray:
    """Extract numeric columns by name, binarizing real values with a warning.

    Args:
        table: Table.
        names: Column names.
        binarize_real: If `False`, real values are returned as is.

    Returns:
        Matrix with one column per name, binary if `binarize_real` is `True`.
    """
    missing = [name for name in names if name not in table.column_names]
    if len(missing) > 0:
        raise DatasetError(f"Missing columns: {', '.join(missing)}.")
    columns = [_column_to_numpy(table.column(name), name) for name in names]
    values = np.column_stack(columns) if len(columns) > 0 else np.empty(
        (table.num_rows, 0))
    if not np.isfinite(values).all():
        raise NonFiniteValueError("Data contain NaN or infinite values.")
    if not binarize_real:
        return values
    real_cols = [
        name for j, name in enumerate(names) if not _is_binary(values[:, j])]
    if len(real_cols) > 0:
        warnings.warn(
            f"Binarized real-valued columns: {', '.join(real_cols)}.",
            UserWarning,
            stacklevel=2,
        )
        values = binarize(values)
    return values


def load_dataset(path: str | PathLike[str], label_column: str | int) -> Dataset:
    """Load a dataset from a CSV file.

    The file must be UTF-8, comma-separated, with a header row.
    Real-valued columns are binarized with a warning.

    Args:
        path: File path.
        label_column: Label column name or zero-based index. A name consisting
            of digits which is not a column name is treated as an index.

    Returns:
        Dataset with the label column removed from the features.
        Feature order follows the file.
    """
    return _dataset_from_table(load_table(path), label_column)


def read_dataset(
    data: narwhals.typing.IntoDataFrame,
    label_column: str | int,
) -> Dataset:
    """Convert a dataframe to a dataset.

    Applies the same validation and binarization as `load_dataset`.

    Args:
        data: Any dataframe supported by narwhals (pandas, polars, PyArrow Table).
        label_column: Label column name or zero-based index.

    Returns:
        Dataset with the label column removed from the features.

    Examples:
        ```pycon
        >>> import pyarrow as pa
        >>> import crlr

        >>> table = pa.table({"a": [1, 0, 1], "b": [0, 0, 1], "y": [1, 0, 1]})
        >>> crlr.read_dataset(table, "y").feature_names
        ('a', 'b')

        ```
    """
    table = nw.from_native(data, eager_only=True).to_arrow()
    return _dataset_from_table(table, label_column)


def write_dataset(
    data: Dataset,
    path: str | PathLike[str],
    label_column: str = "y",
) -> None:
    """Write a dataset to a CSV file, the label column last.

    Args:
        data: Dataset.
        path: Output file path.
        label_column: Label column name.
    """
    if label_column in data.feature_names:
        raise LabelColumnError(
            f"Label column {label_column!r} clashes with a feature name.")
    table = pa.table(
        {
            **{
                name: pa.array(data.features[:, j].astype(np.int64))
                for j, name in enumerate(data.feature_names)
            },
            label_column: pa.array(data.labels.astype(np.int64)),
        },
    )
    pyarrow.csv.write_csv(
        table,
        path,
        write_options=pyarrow.csv.WriteOptions(quoting_style="needed"),
    )
