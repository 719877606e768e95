"""Bias-shift experiments and hyperparameter grid search."""
# ruff: noqa: PLR0913

from __future__ import annotations

from collections import UserList
import functools
import itertools
import logging
import math
from typing import TYPE_CHECKING, NamedTuple
import warnings

import numpy as np

import crlr.baselines
import crlr.core
import crlr.datasets
import crlr.evaluation
import crlr.loss
import crlr.solver
import crlr.utils


if TYPE_CHECKING:
    from collections.abc import Callable, Iterable, Mapping, Sequence
    from typing import Any, Concatenate, TypeAlias, TypeVar


    T = TypeVar("T")
    MapLike: TypeAlias = Callable[Concatenate[Callable[..., T], ...], Iterable[T]]
    ProgressFn: TypeAlias = Callable[Concatenate[Iterable[T], ...], Iterable[T]]


logger = logging.getLogger(__name__)

METHODS = ("crlr", "lr", "lr_l1", "two_step")


class SweepRecord(NamedTuple):
    """Metrics of a method on a test dataset in a single repeat.

    Attributes:
        method: Method name.
        bias_rate: Bias rate of the test dataset.
        repeat: Repeat number.
        rmse: RMSE of predicted probabilities.
        accuracy: Accuracy.
        f1: F1 score.
        n_test: Number of test samples.
    """
    method: str
    bias_rate: float
    repeat: int
    rmse: float
    accuracy: float
    f1: float
    n_test: int


class SweepFailure(NamedTuple):
    """Failed repeat of a sweep.

    Attributes:
        repeat: Repeat number.
        seed: Seed of the repeat.
        method: Method that failed, or `None` if data generation failed.
        error: Error description.
    """
    repeat: int
    seed: int
    method: str | None
    error: str


def _std(values: Sequence[float]) -> float:
    if len(values) < 2:  # noqa: PLR2004
        return float("nan")
    return float(np.std(values, ddof=1))


class SweepTable(crlr.utils.DictsReprMixin, UserList[dict[str, object]]):
    """Table of aggregated sweep statistics."""
    default_text_keys = ("method",)

    def __init__(
        self,
        rows: Iterable[dict[str, object]] = (),
        keys: Sequence[str] = (),
    ) -> None:
        """Table of aggregated sweep statistics.

        Args:
            rows: Rows as dictionaries.
            keys: Column names.
        """
        super().__init__(rows)
        self.default_keys = tuple(keys)

    def to_dicts(self) -> tuple[dict[str, object], ...]:
        """Convert the table to a sequence of dictionaries."""
        return tuple(self)


class SweepResult(crlr.utils.DictsReprMixin, UserList[SweepRecord]):
    """Per repeat, method and test bias rate metrics of a bias-shift sweep.

    Attributes:
        failures: Failed repeats, excluded from the records.
        seeds: Seed of every repeat, failed ones included.
        methods: Method names, in order.
        bias_rates: Test bias rates, in order.
    """
    default_keys = ("method", "bias_rate", "repeat", "rmse", "accuracy", "f1")
    default_text_keys = ("method",)

    def __init__(
        self,
        records: Iterable[SweepRecord] = (),
        *,
        failures: Sequence[SweepFailure] = (),
        seeds: Sequence[int] = (),
        methods: Sequence[str] = (),
        bias_rates: Sequence[float] = (),
    ) -> None:
        """Per repeat, method and test bias rate metrics of a bias-shift sweep.

        Args:
            records: Metric records.
            failures: Failed repeats.
            seeds: Seed of every repeat.
            methods: Method names, in order.
            bias_rates: Test bias rates, in order.
        """
        super().__init__(records)
        self.failures = tuple(failures)
        self.seeds = tuple(seeds)
        self.methods = tuple(methods)
        self.bias_rates = tuple(bias_rates)

    @crlr.utils._cache_method
    def to_dicts(self) -> tuple[dict[str, object], ...]:
        """Convert the result to a sequence of dictionaries."""
        return tuple(record._asdict() for record in self)

    def _rmse(
        self,
        method: str,
        bias_rate: float | None,
        repeat: int | None,
    ) -> list[float]:
        return [
            record.rmse for record in self
            if record.method == method
            and (bias_rate is None or record.bias_rate == bias_rate)
            and (repeat is None or record.repeat == repeat)
        ]

    def summary(self) -> SweepTable:
        """Mean and standard deviation of RMSE across repeats.

        Returns:
            One row per method and test bias rate, with columns `method`,
            `bias_rate`, `mean_rmse`, `std_rmse` and `n_repeats`.
        """
        rows = []
        for method in self.methods:
            for rate in self.bias_rates:
                values = self._rmse(method, rate, None)
                rows.append({
                    "method": method,
                    "bias_rate": rate,
                    "mean_rmse": float(np.mean(values)) if values else float("nan"),
                    "std_rmse": _std(values),
                    "n_repeats": len(values),
                })
        return SweepTable(
            rows, ("method", "bias_rate", "mean_rmse", "std_rmse", "n_repeats"))

    def grid_stats(self) -> SweepTable:
        """Mean and standard deviation of RMSE across the test grid, per repeat.

        Returns:
            One row per method and successful repeat, with columns `method`,
            `repeat`, `mean_rmse` and `std_rmse`.
        """
        repeats = sorted({record.repeat for record in self})
        rows = []
        for method in self.methods:
            for repeat in repeats:
                values = self._rmse(method, None, repeat)
                if values:
                    rows.append({
                        "method": method,
                        "repeat": repeat,
                        "mean_rmse": float(np.mean(values)),
                        "std_rmse": _std(values),
                    })
        return SweepTable(rows, ("method", "repeat", "mean_rmse", "std_rmse"))

    def method_summary(self) -> SweepTable:
        """Mean RMSE and its spread across the test grid, per method.

        Returns:
            One row per method with columns `method`, `mean_rmse` (mean over all
            records) and `std_rmse` (standard deviation of the per bias rate
            mean RMSE across the grid).
        """
        summary = self.summary()
        rows = []
        for method in self.methods:
            grid_means = [
                row["mean_rmse"] for row in summary
                if row["method"] == method and row["n_repeats"] > 0  # type: ignore
            ]
            values = self._rmse(method, None, None)
            rows.append({
                "method": method,
                "mean_rmse": float(np.mean(values)) if values else float("nan"),
                "std_rmse": _std(grid_means),  # type: ignore
            })
        return SweepTable(rows, ("method", "mean_rmse", "std_rmse"))


class GridSearchResult(crlr.utils.DictsReprMixin, UserList[dict[str, object]]):
    """Validation RMSE of every hyperparameter combination.

    Attributes:
        best: Hyperparameters with the lowest validation RMSE.
    """
    default_text_keys = ()

    def __init__(
        self,
        rows: Iterable[dict[str, object]] = (),
        *,
        best: crlr.loss.Hyperparams | None = None,
        keys: Sequence[str] = (),
    ) -> None:
        """Validation RMSE of every hyperparameter combination.

        Args:
            rows: Rows with hyperparameter values and validation RMSE.
            best: Hyperparameters with the lowest validation RMSE.
            keys: Column names.
        """
        super().__init__(rows)
        self.best = best
        self.default_keys = tuple(keys)

    def to_dicts(self) -> tuple[dict[str, object], ...]:
        """Convert the result to a sequence of dictionaries."""
        return tuple(self)


def grid_search(
    train: crlr.core.Dataset,
    validation: crlr.core.Dataset,
    grid: Mapping[str, Sequence[float]],
    hyper: crlr.loss.Hyperparams | None = None,
    config: crlr.solver.SolverConfig | None = None,
) -> GridSearchResult:
    """Search hyperparameters of CRLR on a validation set.

    Fits the model on the training set for every combination of values
    and selects the combination with the lowest validation RMSE.
    Ties are broken by the order of combinations.

    Args:
        train: Training dataset.
        validation: Validation dataset.
        grid: Values per hyperparameter name, for example
            `{"lambda1": [0.1, 1.0], "lambda2": [0.01, 0.1]}`.
        hyper: Base hyperparameters. If `None`, the global configuration is used.
        config: Solver config. If `None`, the global configuration is used.

    Returns:
        Validation RMSE of every combination and the best hyperparameters.
    """
    if hyper is None:
        hyper = crlr.loss.Hyperparams()
    names = tuple(grid.keys())
    if len(names) == 0:
        raise ValueError("grid must not be empty.")

    rows: list[dict[str, object]] = []
    best: crlr.loss.Hyperparams | None = None
    best_rmse = math.inf
    for values in itertools.product(*(grid[name] for name in names)):
        params = dict(zip(names, values, strict=True))
        candidate = hyper.with_params(**params)
        beta = crlr.solver.fit(train, candidate, config).state.beta
        proba = crlr.solver.predict_proba(beta, validation.features)
        rmse = crlr.evaluation.metrics(
            validation.labels,
            crlr.solver.predict(beta, validation.features),
            proba,
        ).rmse
        rows.append(params | {"rmse": rmse})
        if rmse < best_rmse:
            best, best_rmse = candidate, rmse

    logger.info("Grid search selected %r with RMSE %.6g.", best, best_rmse)
    return GridSearchResult(rows, best=best, keys=(*names, "rmse"))


def fit_method(
    method: str,
    train: crlr.core.Dataset,
    hyper: crlr.loss.Hyperparams | None = None,
    config: crlr.solver.SolverConfig | None = None,
    *,
    top_k: int | None = None,
    baseline_l1: float = 0.01,
) -> np.ndarray:
    """Fit a method by name and return its coefficients.

    Methods:

    - `"crlr"`: causally regularized logistic regression,
    - `"lr"`: logistic regression with the ridge penalty `lambda3`,
    - `"lr_l1"`: logistic regression with the lasso penalty `baseline_l1`
        and the ridge penalty `lambda3`,
    - `"two_step"`: the two-step method with the ridge penalty `lambda3`.

    Args:
        method: Method name.
        train: Training dataset.
        hyper: Hyperparameters. If `None`, the global configuration is used.
        config: Solver config. If `None`, the global configuration is used.
        top_k: Number of features selected by the two-step method.
        baseline_l1: Lasso penalty of `"lr_l1"`.

    Returns:
        Coefficients.
    """
    crlr.utils.check_scalar(method, "method", typ=str, in_=METHODS)
    if hyper is None:
        hyper = crlr.loss.Hyperparams()
    if method == "crlr":
        return crlr.solver.fit(train, hyper, config).state.beta
    if method == "lr":
        return crlr.baselines.fit_logistic(train, l2=hyper.lambda3, config=config)
    if method == "lr_l1":
        return crlr.baselines.fit_logistic(
            train, l1=baseline_l1, l2=hyper.lambda3, config=config)
    return crlr.baselines.two_step_fit(
        train, top_k, config, l2=hyper.lambda3).beta


def run_bias_sweep(
    train_config: crlr.datasets.SynthConfig,
    test_grid: Sequence[float],
    methods: Sequence[str] = ("crlr", "lr"),
    repeats: int = 10,
    *,
    hyper: crlr.loss.Hyperparams | None = None,
    solver_config: crlr.solver.SolverConfig | None = None,
    top_k: int | None = None,
    baseline_l1: float = 0.01,
    search_grid: Mapping[str, Sequence[float]] | None = None,
    intercept: bool = False,
    map_: MapLike[Any] = map,
    progress: ProgressFn[Any] | type[Iterable[Any]] | None = None,
) -> SweepResult:
    """Train on biased data and evaluate on a grid of test bias rates.

    Every repeat uses a seed derived from `train_config.seed` and the repeat
    number. It generates a training dataset at the training bias rate,
    fits every method, and evaluates the methods on test datasets generated
    at every bias rate of the grid. A repeat in which any method fails
    is excluded for all methods and recorded in `failures` with a warning.

    Args:
        train_config: Generator config of training data.
        test_grid: Test bias rates.
        methods: Method names, see `fit_method`.
        repeats: Number of repeats.
        hyper: Hyperparameters. If `None`, the global configuration is used.
        solver_config: Solver config. If `None`, the global configuration is used.
        top_k: Number of features selected by the two-step method.
        baseline_l1: Lasso penalty of `"lr_l1"`.
        search_grid: If not `None`, CRLR hyperparameters are selected in every
            repeat by `grid_search` over this grid, on a validation dataset
            generated at the training bias rate.
        intercept: If `True`, a constant intercept column is appended to
            the training, validation and test datasets of every method.
        map_: Map-like function to run repeats.
        progress: tqdm-like class or function to show the progress of repeats.

    Returns:
        Sweep result.
    """
    crlr.utils.check_scalar(repeats, "repeats", typ=int, gt=0)
    if len(methods) == 0:
        raise ValueError("methods must not be empty.")
    for method in methods:
        crlr.utils.check_scalar(method, "method", typ=str, in_=METHODS)
    if len(test_grid) == 0:
        raise ValueError("test_grid must not be empty.")
    for rate in test_grid:
        crlr.utils.auto_check(rate, "bias_rate")
    if hyper is None:
        hyper = crlr.loss.Hyperparams()
    if solver_config is None:
        solver_config = crlr.solver.SolverConfig()

    seeds = [crlr.utils.derive_seed(train_config.seed, i) for i in range(repeats)]
    sweep = functools.partial(
        _sweep_once,
        train_config=train_config,
        test_grid=tuple(test_grid),
        methods=tuple(methods),
        hyper=hyper,
        solver_config=solver_config,
        top_k=top_k,
        baseline_l1=baseline_l1,
        search_grid=search_grid,
        intercept=intercept,
    )

    outcomes = map_(sweep, range(repeats), seeds)
    if progress is not None:
        outcomes = progress(outcomes, total=repeats)

    records: list[SweepRecord] = []
    failures: list[SweepFailure] = []
    for outcome in outcomes:
        if isinstance(outcome, SweepFailure):
            warnings.warn(
                f"Repeat {outcome.repeat} failed and is excluded: {outcome.error}",
                RuntimeWarning,
                stacklevel=2,
            )
            failures.append(outcome)
        else:
            records.extend(outcome)

    return SweepResult(
        records,
        failures=failures,
        seeds=seeds,
        methods=methods,
        bias_rates=test_grid,
    )


def _sweep_once(
    repeat: int,
    seed: int,
    *,
    train_config: crlr.datasets.SynthConfig,
    test_grid: tuple[float, ...],
    methods: tuple[str, ...],
    hyper: crlr.loss.Hyperparams,
    solver_config: crlr.solver.SolverConfig,
    top_k: int | None,
    baseline_l1: float,
    search_grid: Mapping[str, Sequence[float]] | None,
    intercept: bool,
) -> list[SweepRecord] | SweepFailure:
    logger.info("Repeat %d, seed %d.", repeat, seed)
    method: str | None = None
    try:
        train = crlr.datasets.generate(
            train_config._replace(seed=crlr.utils.derive_seed(seed, 0))).dataset
        test_sets = [
            synth.dataset for synth in crlr.datasets.resample_test_grid(
                train_config._replace(seed=crlr.utils.derive_seed(seed, 1)), test_grid)
        ]
        if intercept:
            train = crlr.core.add_intercept(train)
            test_sets = [crlr.core.add_intercept(test) for test in test_sets]

        crlr_hyper = hyper
        if search_grid is not None and "crlr" in methods:
            validation = crlr.datasets.generate(
                train_config._replace(seed=crlr.utils.derive_seed(seed, 2))).dataset
            if intercept:
                validation = crlr.core.add_intercept(validation)
            crlr_hyper = grid_search(
                train, validation, search_grid, hyper, solver_config,
            ).best  # type: ignore

        records = []
        for method in methods:
            beta = fit_method(
                method,
                train,
                crlr_hyper if method == "crlr" else hyper,
                solver_config,
                top_k=top_k,
                baseline_l1=baseline_l1,
            )
            for rate, test in zip(test_grid, test_sets, strict=True):
                x, y = test.features, test.labels
                report = crlr.evaluation.metrics(
                    y,
                    crlr.solver.predict(beta, x),
                    crlr.solver.predict_proba(beta, x),
                )
                records.append(SweepRecord(
                    method=method,
                    bias_rate=rate,
                    repeat=repeat,
                    rmse=report.rmse,
                    accuracy=report.accuracy,
                    f1=report.f1,
                    n_test=report.n_test,
                ))
    except (ValueError, ArithmeticError) as e:
        logger.info("Repeat %d failed: %r", repeat, e)
        return SweepFailure(
            repeat=repeat,
            seed=seed,
            method=method,
            error=f"{type(e).__name__}: {e}",
        )
    return records
