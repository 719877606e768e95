"""Parameter checks, seeds, number formatting and table helpers."""
# pyright: reportOperatorIssue=false

from __future__ import annotations

import abc
import inspect
import math
import operator
from typing import TYPE_CHECKING, overload

import numpy as np
import pyarrow as pa
import pyarrow.csv


if TYPE_CHECKING:
    from collections.abc import Callable, Iterator, Sequence
    from os import PathLike
    from typing import Literal, TypeVar

    import pandas as pd
    import polars as pl


    DictsReprMixinT = TypeVar("DictsReprMixinT", bound="DictsReprMixin")
    R = TypeVar("R")


_BOUND_CHECKS: tuple[tuple[str, str, Callable[[object, object], bool]], ...] = (
    ("ge", ">=", operator.ge),
    ("gt", ">", operator.gt),
    ("le", "<=", operator.le),
    ("lt", "<", operator.lt),
    ("ne", "!=", operator.ne),
)


def check_scalar(  # noqa: PLR0913
    value: R,
    name: str = "value",
    *,
    typ: object = None,
    ge: object = None,
    gt: object = None,
    le: object = None,
    lt: object = None,
    ne: object = None,
    in_: object = None,
) -> R:
    """Validate the type and range of a scalar parameter.

    Args:
        value: Parameter value.
        name: Parameter name used in error messages.
        typ: Required type or union of types.
        ge: Inclusive lower bound.
        gt: Exclusive lower bound.
        le: Inclusive upper bound.
        lt: Exclusive upper bound.
        ne: Forbidden value.
        in_: Collection of allowed values.

    Returns:
        The value, unchanged.

    Examples:
        ```pycon
        >>> import crlr.utils

        >>> crlr.utils.check_scalar(0.5, "bias_rate", typ=float, gt=0, lt=1)
        0.5
        >>> crlr.utils.check_scalar(1.0, "bias_rate", typ=float, gt=0, lt=1)
        Traceback (most recent call last):
        ...
        ValueError: bias_rate == 1.0, must be < 1.

        ```
    """
    if typ is not None and not isinstance(value, typ):  # type: ignore
        raise TypeError(f"{name} must be an instance of {typ}.")
    bounds = {"ge": ge, "gt": gt, "le": le, "lt": lt, "ne": ne}
    for key, symbol, holds in _BOUND_CHECKS:
        bound = bounds[key]
        if bound is not None and not holds(value, bound):
            raise ValueError(f"{name} == {value}, must be {symbol} {bound}.")
    if in_ is not None and value not in in_:  # type: ignore
        raise ValueError(f"{name} == {value}, must be in {in_}.")
    return value


_NONNEGATIVE = {"lambda1", "lambda2", "lambda3", "lambda4", "lambda5", "grad_tol"}
_POSITIVE = {"denom_epsilon", "initial_step", "rel_tol"}
_POSITIVE_INT = {
    "inner_beta_iters",
    "inner_omega_iters",
    "max_outer_iters",
    "max_shrinks",
}
_UNIT_OPEN = {"armijo_shrink", "armijo_slope", "bias_rate"}


@overload
def auto_check(value: str, name: Literal["reduction"]) -> Literal["blas", "fixed"]:
    ...

@overload
def auto_check(value: R, name: str) -> R:
    ...

def auto_check(value: R, name: str) -> R:
    """Check a parameter with the rules registered for its name.

    Known names: `"armijo_shrink"`, `"armijo_slope"`, `"bias_rate"`,
    `"denom_epsilon"`, `"grad_tol"`, `"initial_step"`, `"inner_beta_iters"`,
    `"inner_omega_iters"`, `"lambda1"`, ..., `"lambda5"`, `"max_outer_iters"`,
    `"max_shrinks"`, `"reduction"`, `"rel_tol"`, `"seed"`, `"threshold"`.
    Other names pass unchecked.

    Args:
        value: Parameter value.
        name: Parameter name.

    Returns:
        The value, unchanged.
    """
    if name in _NONNEGATIVE:
        check_scalar(value, name, typ=float | int, ge=0)
    elif name in _POSITIVE:
        check_scalar(value, name, typ=float | int, gt=0)
    elif name in _POSITIVE_INT:
        check_scalar(value, name, typ=int, gt=0)
    elif name in _UNIT_OPEN:
        check_scalar(value, name, typ=float | int, gt=0, lt=1)
    elif name == "threshold":
        check_scalar(value, name, typ=float | int, ge=0, le=1)
    elif name == "reduction":
        check_scalar(value, name, typ=str, in_={"blas", "fixed"})
    elif name == "seed":
        check_scalar(value, name, typ=int, ge=0)
    return value


def derive_seed(seed: int, index: int) -> int:
    """Derive an independent seed from a parent seed and a work unit index.

    Args:
        seed: Parent seed.
        index: Work unit index.

    Returns:
        Derived seed, an unsigned 63-bit integer.
    """
    state = np.random.SeedSequence(seed, spawn_key=(index,)).generate_state(
        1, dtype=np.uint64)
    return int(state[0] >> np.uint64(1))


def format_num(
    val: float | int | None,
    sig: int = 3,
    *,
    pct: bool = False,
    nan: str = "-",
    inf: str = "∞",
) -> str:
    """Render a number with a fixed count of significant digits.

    Magnitudes below `0.001` or from `10_000_000` up use exponent notation.

    Args:
        val: Number.
        sig: Significant digits.
        pct: Multiply by `100` and append `"%"`.
        nan: Text for `None` and `nan`.
        inf: Text for infinity; negative infinity gets a minus sign.

    Returns:
        Formatted number.

    Examples:
        ```pycon
        >>> import crlr.utils

        >>> crlr.utils.format_num(0.0123456)
        '0.0123'
        >>> crlr.utils.format_num(0.9999)
        '1.00'
        >>> crlr.utils.format_num(0.1234, sig=2, pct=True)
        '12%'

        ```
    """
    if val is None or math.isnan(val):
        return nan
    if math.isinf(val):
        return inf if val > 0 else "-" + inf

    suffix = "%" if pct else ""
    if pct:
        val = val * 100
    if val == 0:
        return format(0, f".{max(0, sig - 1)}f") + suffix
    if not 0.001 <= abs(val) < 10_000_000:
        return format(val, f".{max(0, sig - 1)}e") + suffix

    digits = sig - 1 - math.floor(math.log10(abs(val)))
    if digits > 0:
        val = round(val, digits)
        # Rounding may add a digit: 0.9999 becomes 1.0.
        digits = sig - 1 - math.floor(math.log10(abs(val)))
    return format(val, f".{max(0, digits)}f") + suffix


def get_and_format_num(data: dict[str, object], key: str) -> str:
    """Format the value of a table cell for display.

    Integers, booleans and text are shown as is, missing values as `"-"`.
    Floats under keys starting with `"rel_"` are percentages with 2 significant
    digits, other floats have 3 significant digits.

    Args:
        data: Row.
        key: Column name.

    Returns:
        Cell text.
    """
    val = data.get(key)
    if val is not None and not isinstance(val, float):
        return str(val)
    if key.startswith("rel_"):
        return format_num(val, sig=2, pct=True)
    return format_num(val)


def round_sig(val: object, sig: int = 6) -> object:
    """Prepare a value for CSV output.

    Floats are rounded to `sig` significant digits, booleans become `0`/`1`,
    NumPy scalars become Python scalars.

    Args:
        val: Value.
        sig: Number of significant digits of floats.

    Returns:
        Converted value.
    """
    if isinstance(val, bool | np.bool_):
        return int(val)
    if isinstance(val, np.integer):
        return int(val)
    if isinstance(val, float | np.floating):
        val = float(val)
        return float(format(val, f".{sig}g")) if math.isfinite(val) else val
    return val


def write_csv(
    rows: Sequence[dict[str, object]],
    path: str | PathLike[str],
    keys: Sequence[str],
    sig: int = 6,
) -> None:
    """Write rows to a UTF-8, comma-separated CSV file with a header row.

    Args:
        rows: Rows as dictionaries.
        path: Output file path.
        keys: Column names, in order.
        sig: Number of significant digits of floats.
    """
    table = pa.table({
        key: pa.array([round_sig(row.get(key), sig) for row in rows])
        for key in keys
    })
    pyarrow.csv.write_csv(
        table,
        path,
        write_options=pyarrow.csv.WriteOptions(quoting_style="needed"),
    )


def _cache_method(
    method: Callable[[DictsReprMixinT], R],
) -> Callable[[DictsReprMixinT], R]:
    def cached_method(self: DictsReprMixinT) -> R:
        if self._cache is None:
            self._cache = {}
        if method.__name__ not in self._cache:
            self._cache[method.__name__] = method(self)
        return self._cache[method.__name__]  # type: ignore
    return cached_method


class DictsReprMixin(abc.ABC):
    """Table of rows with dataframe conversion, CSV output and text rendering.

    Subclasses implement `to_dicts` and set `default_keys`, the columns shown
    and written by default. Columns in `default_text_keys` are left-aligned
    in text output. Cells are formatted with `get_and_format_num`.
    """
    default_keys: Sequence[str]
    default_text_keys: Sequence[str] = ()
    default_max_rows: int = 0
    _cache: dict[str, object] | None = None

    @abc.abstractmethod
    def to_dicts(self) -> Sequence[dict[str, object]]:
        """Rows as dictionaries."""

    @_cache_method
    def to_arrow(self) -> pa.Table:
        """Rows as a PyArrow Table."""
        return pa.Table.from_pylist(list(self.to_dicts()))

    @_cache_method
    def to_pandas(self) -> pd.DataFrame:
        """Rows as a pandas DataFrame."""
        import pandas as pd  # noqa: PLC0415
        return pd.DataFrame.from_records(self.to_dicts())

    @_cache_method
    def to_polars(self) -> pl.DataFrame:
        """Rows as a Polars DataFrame."""
        import polars as pl  # noqa: PLC0415
        return pl.from_dicts(self.to_dicts())

    def to_csv(
        self,
        path: str | PathLike[str],
        keys: Sequence[str] | None = None,
    ) -> None:
        """Write the rows to a CSV file, floats with 6 significant digits.

        Args:
            path: Output file path.
            keys: Columns to write. Defaults to `default_keys`.
        """
        write_csv(self.to_dicts(), path, self.default_keys if keys is None else keys)

    def to_pretty_dicts(
        self,
        keys: Sequence[str] | None = None,
        *,
        max_rows: int | None = None,
    ) -> list[dict[str, str]]:
        """Rows with every cell formatted as text.

        Args:
            keys: Columns. Defaults to `default_keys`. Missing cells are shown
                as `"-"`.
            max_rows: Row limit. Rows in the middle are replaced with a single
                row of `"…"`. Defaults to `default_max_rows`; `0` or less
                shows every row.

        Returns:
            Formatted rows.
        """
        keys = self.default_keys if keys is None else keys
        max_rows = self.default_max_rows if max_rows is None else max_rows

        def pretty(rows: Sequence[dict[str, object]]) -> list[dict[str, str]]:
            return [{key: get_and_format_num(row, key) for key in keys} for row in rows]

        rows = self.to_dicts()
        if max_rows <= 0 or len(rows) <= max_rows:
            return pretty(rows)
        tail = max_rows // 2
        head = max_rows - tail
        return [*pretty(rows[:head]), dict.fromkeys(keys, "…"), *pretty(rows[-tail:])]

    def to_string(
        self,
        keys: Sequence[str] | None = None,
        *,
        max_rows: int | None = None,
    ) -> str:
        """Render the rows as a plain-text table.

        Args:
            keys: Columns. Defaults to `default_keys`.
            max_rows: Row limit, see `to_pretty_dicts`.

        Returns:
            Table text with a header line.
        """
        keys = self.default_keys if keys is None else keys
        rows = self.to_pretty_dicts(keys, max_rows=max_rows)
        widths = {
            key: max(len(key), *(len(row[key]) for row in rows)) if rows else len(key)
            for key in keys
        }

        def line(cells: dict[str, str]) -> str:
            return " ".join(
                cells[key].ljust(widths[key])
                if key in self.default_text_keys
                else cells[key].rjust(widths[key])
                for key in keys
            ).rstrip()

        return "\n".join([line({key: key for key in keys}), *map(line, rows)])

    def with_keys(self: DictsReprMixinT, keys: Sequence[str]) -> DictsReprMixinT:
        """Shallow copy with other default columns.

        Args:
            keys: New `default_keys`.

        Returns:
            Copy of the table.
        """
        copy = self.__class__.__new__(self.__class__)
        copy.__dict__.update(self.__dict__)
        copy._cache = None
        copy.default_keys = keys
        return copy

    @_cache_method
    def __repr__(self) -> str:
        """Plain-text table."""
        return self.to_string()

    @_cache_method
    def __str__(self) -> str:
        """Plain-text table."""
        return self.to_string()


class ReprMixin:
    """`repr` of the form `ClassName(param=value, ...)`.

    Parameter names come from the `__init__` signature; values are read from
    attributes of the same names.
    """
    @classmethod
    def _get_param_names(cls) -> Iterator[str]:
        if cls.__init__ is object.__init__:
            return
        for param in inspect.signature(cls.__init__).parameters.values():
            if param.kind == param.VAR_POSITIONAL:
                raise RuntimeError(f"{cls.__name__}.__init__ must not take *args.")
            if param.name != "self" and param.kind != param.VAR_KEYWORD:
                yield param.name

    def __repr__(self) -> str:
        """Class name and parameter values."""
        params = ", ".join(
            f"{name}={getattr(self, name)!r}" for name in self._get_param_names())
        return f"{self.__class__.__name__}({params})"


def div(
    numer: float | int,
    denom: float | int,
    fill_zero_div: float | int | Literal["auto"] = "auto",
) -> float | int:
    """Divide, with a fixed result for a zero denominator.

    Args:
        numer: Numerator.
        denom: Denominator.
        fill_zero_div: Result for a zero denominator. With `"auto"`, it is
            `inf` for a positive numerator and `nan` otherwise.

    Returns:
        Quotient.
    """
    if denom != 0:
        return numer / denom
    if fill_zero_div == "auto":
        return math.inf if numer > 0 else math.nan
    return fill_zero_div
