"""Command-line interface.

Commands: `generate`, `train`, `predict`, `sweep` and `balance`.
Every command writes its outputs and a JSON run manifest to `--out-dir`.
"""

from __future__ import annotations

import argparse
import concurrent.futures
import contextlib
import contextvars
import functools
import hashlib
import json
import logging
import pathlib
import sys
import time
from typing import TYPE_CHECKING

import numpy as np

import crlr.baselines
import crlr.config
import crlr.core
import crlr.datasets
import crlr.evaluation
import crlr.experiment
import crlr.loss
import crlr.solver
import crlr.utils
import crlr.version


if TYPE_CHECKING:
    from collections.abc import Callable, Iterator, Sequence
    from typing import Any


logger = logging.getLogger(__name__)

EXIT_OK = 0
EXIT_USAGE = 2
EXIT_MISSING_FILE = 3
EXIT_INVALID_DATASET = 4
EXIT_NUMERICAL = 5
EXIT_INVALID_INPUT = 6

_EPILOG = """\
exit codes:
  0  success
  2  usage error: unknown flag, invalid flag value, unknown config key
  3  input file not found
  4  invalid dataset: ragged rows, missing label column, non-numeric cell
  5  numerical or solver failure
  6  other invalid input

errors are printed to stderr as a single line:
  crlr: error: code=<n> type=<name> message=<text>
"""

_HYPER_DEFAULTS = ("lambda1", "lambda2", "lambda3", "lambda4", "lambda5")
_SOLVER_OPTIONS = (
    ("max_outer_iters", int),
    ("inner_beta_iters", int),
    ("inner_omega_iters", int),
    ("rel_tol", float),
    ("armijo_shrink", float),
    ("armijo_slope", float),
    ("initial_step", float),
    ("max_shrinks", int),
    ("grad_tol", float),
)


class UsageError(Exception):
    """Invalid command-line usage."""


class _HelpFormatter(
    argparse.ArgumentDefaultsHelpFormatter,
    argparse.RawDescriptionHelpFormatter,
):
    pass


class _ArgumentParser(argparse.ArgumentParser):
    def error(self, message: str) -> None:  # type: ignore[override]
        raise UsageError(message)


def _bias_rate(value: str) -> float:
    try:
        return crlr.utils.auto_check(float(value), "bias_rate")
    except ValueError as e:
        raise argparse.ArgumentTypeError(str(e)) from e


def parse_grid(value: str) -> list[float]:
    """Parse a grid of bias rates.

    Args:
        value: Either `start:stop:step`, both ends included, or a comma-separated
            list of values.

    Returns:
        Bias rates.

    Examples:
        ```pycon
        >>> import crlr.cli

        >>> crlr.cli.parse_grid("0.1:0.9:0.1")
        [0.1, 0.2, 0.3, 0.4, 0.5, 0.6, 0.7, 0.8, 0.9]
        >>> crlr.cli.parse_grid("0.2,0.8")
        [0.2, 0.8]

        ```
    """
    try:
        if ":" in value:
            start, stop, step = (float(part) for part in value.split(":"))
            if step <= 0 or stop < start:
                raise ValueError(f"Invalid grid range {value!r}.")
            count = round((stop - start) / step) + 1
            rates = [round(start + i*step, 12) for i in range(count)]
        else:
            rates = [float(part) for part in value.split(",") if part.strip() != ""]
        if len(rates) == 0:
            raise ValueError("Grid must not be empty.")
        for rate in rates:
            crlr.utils.auto_check(rate, "bias_rate")
    except ValueError as e:
        raise argparse.ArgumentTypeError(str(e)) from e
    return rates


def _float_list(value: str) -> list[float]:
    try:
        return [float(part) for part in value.split(",") if part.strip() != ""]
    except ValueError as e:
        raise argparse.ArgumentTypeError(str(e)) from e


def _add_hyper_flags(parser: argparse.ArgumentParser) -> None:
    group = parser.add_argument_group("hyperparameters")
    for name in _HYPER_DEFAULTS:
        group.add_argument(
            f"--{name}",
            type=float,
            default=crlr.config.get_config(name),
            help=f"objective weight {name}",
        )
    group.add_argument(
        "--denom-epsilon",
        type=float,
        default=crlr.config.get_config("denom_epsilon"),
        help="floor of group weight sums in the balancing loss",
    )


def _add_solver_flags(parser: argparse.ArgumentParser) -> None:
    group = parser.add_argument_group("solver")
    for name, typ in _SOLVER_OPTIONS:
        group.add_argument(
            f"--{name.replace('_', '-')}",
            type=typ,
            default=crlr.config.get_config(name),
            help=name.replace("_", " "),
        )


def _add_synth_flags(parser: argparse.ArgumentParser) -> None:
    defaults = crlr.datasets.SynthConfig()
    group = parser.add_argument_group("synthetic data")
    group.add_argument(
        "--n-pool", type=int, default=defaults.n_pool,
        help="samples drawn per pool before selection")
    group.add_argument(
        "--n-samples", type=int, default=2000,
        help="selected samples per dataset; 0 keeps every selected pool sample")
    group.add_argument(
        "--p-causal", type=int, default=defaults.p_causal,
        help="number of causal features")
    group.add_argument(
        "--p-noise", type=int, default=defaults.p_noise,
        help="number of noisy features")
    group.add_argument(
        "--noise-scale", type=float, default=defaults.noise_scale,
        help="standard deviation of the outcome noise")
    group.add_argument(
        "--bias-feature-index", type=int, default=defaults.bias_feature_index,
        help="index of the noisy feature driving the selection")


def build_parser() -> argparse.ArgumentParser:
    """Build the command-line parser.

    Returns:
        Parser with a subparser per command.
    """
    common = _ArgumentParser(add_help=False)
    group = common.add_argument_group("common")
    group.add_argument("--seed", type=int, default=0, help="random seed")
    group.add_argument(
        "--threads", type=int, default=1, help="number of worker threads")
    group.add_argument(
        "--config", type=pathlib.Path, default=None,
        help="key=value file with flag defaults; flags override it")
    group.add_argument(
        "--out-dir", type=pathlib.Path, default=pathlib.Path(),
        help="output directory")
    group.add_argument(
        "--log-level", default="WARNING",
        choices=("DEBUG", "INFO", "WARNING", "ERROR"), help="logging level")
    group.add_argument(
        "--reduction", default=crlr.config.get_config("reduction"),
        choices=("blas", "fixed"),
        help="reduction mode; fixed gives bit-identical results across runs")

    parser = _ArgumentParser(
        prog="crlr",
        description="Causally regularized logistic regression.",
        epilog=_EPILOG,
        formatter_class=_HelpFormatter,
    )
    parser.add_argument(
        "--version", action="version", version=f"%(prog)s {crlr.version.__version__}")
    subparsers = parser.add_subparsers(dest="command", required=True)

    def add_command(name: str, help_: str) -> argparse.ArgumentParser:
        return subparsers.add_parser(
            name,
            parents=[common],
            help=help_,
            description=help_,
            epilog=_EPILOG,
            formatter_class=_HelpFormatter,
        )

    generate = add_command(
        "generate", "generate synthetic datasets with selection bias")
    _add_synth_flags(generate)
    generate.add_argument(
        "--bias-rate", type=_bias_rate, default=0.85,
        help="bias rate of the training dataset")
    generate.add_argument(
        "--test-grid", type=parse_grid, default=None,
        help="also generate test datasets at these bias rates, e.g. 0.1:0.9:0.1")
    generate.add_argument(
        "--label", default="y", help="label column name")
    generate.add_argument(
        "--name", default="train", help="file name stem of the training dataset")

    train = add_command("train", "fit a model on a CSV dataset")
    train.add_argument("--data", type=pathlib.Path, required=True, help="CSV dataset")
    train.add_argument("--label", default="y", help="label column name or index")
    train.add_argument(
        "--add-intercept", action="store_true",
        help="append a constant intercept column")
    train.add_argument(
        "--method", default="crlr", choices=crlr.experiment.METHODS,
        help="method to fit")
    train.add_argument(
        "--top-k", type=int, default=None,
        help="features selected by two_step; default is ceil(p/2)")
    train.add_argument(
        "--baseline-l1", type=float, default=0.01, help="lasso penalty of lr_l1")
    _add_hyper_flags(train)
    _add_solver_flags(train)

    predict = add_command("predict", "predict labels with a saved model")
    predict.add_argument(
        "--model", type=pathlib.Path, required=True, help="model file")
    predict.add_argument("--data", type=pathlib.Path, required=True, help="CSV data")
    predict.add_argument(
        "--label", default="y",
        help="label column; if present in the data, metrics are written")
    predict.add_argument(
        "--threshold", type=float, default=crlr.config.get_config("threshold"),
        help="probability threshold of the positive label")

    sweep = add_command("sweep", "run a bias-shift experiment on synthetic data")
    _add_synth_flags(sweep)
    sweep.add_argument(
        "--train-bias", type=_bias_rate, default=0.85,
        help="bias rate of training data")
    sweep.add_argument(
        "--grid", type=parse_grid, default=parse_grid("0.1:0.9:0.1"),
        help="test bias rates, start:stop:step or a comma-separated list")
    sweep.add_argument(
        "--methods", default="crlr,lr",
        help=f"comma-separated methods from {', '.join(crlr.experiment.METHODS)}")
    sweep.add_argument("--repeats", type=int, default=10, help="number of repeats")
    sweep.add_argument(
        "--top-k", type=int, default=None,
        help="features selected by two_step; default is ceil(p/2)")
    sweep.add_argument(
        "--baseline-l1", type=float, default=0.01, help="lasso penalty of lr_l1")
    sweep.add_argument(
        "--add-intercept", action="store_true",
        help="append a constant intercept column to every dataset")
    sweep.add_argument(
        "--grid-search", action="store_true",
        help="select CRLR hyperparameters on a validation set in every repeat")
    for name in _HYPER_DEFAULTS:
        sweep.add_argument(
            f"--search-{name}", type=_float_list, default=None,
            help=f"comma-separated {name} values for --grid-search")
    _add_hyper_flags(sweep)
    _add_solver_flags(sweep)

    balance = add_command(
        "balance", "report confounder imbalance of a dataset under sample weights")
    balance.add_argument("--data", type=pathlib.Path, required=True, help="CSV dataset")
    balance.add_argument("--label", default="y", help="label column name or index")
    balance.add_argument(
        "--weights", type=pathlib.Path, default=None,
        help="CSV with a weight column, as written by train; default is uniform")
    balance.add_argument(
        "--add-intercept", action="store_true",
        help="append a constant intercept column")
    balance.add_argument(
        "--denom-epsilon", type=float,
        default=crlr.config.get_config("denom_epsilon"),
        help="floor of group weight sums")

    parser.set_defaults(_subparsers=subparsers.choices)
    return parser


def read_config_file(path: pathlib.Path) -> dict[str, str]:
    """Read a key=value config file.

    Blank lines and lines starting with `#` are ignored.

    Args:
        path: Config file path.

    Returns:
        Values by key, as text.
    """
    if not path.is_file():
        raise FileNotFoundError(f"Config file not found: {path}")
    values: dict[str, str] = {}
    for number, line in enumerate(path.read_text(encoding="utf-8").splitlines(), 1):
        stripped = line.strip()
        if stripped == "" or stripped.startswith("#"):
            continue
        key, sep, value = stripped.partition("=")
        if sep == "":
            raise UsageError(f"Invalid line {number} in config file {path}.")
        values[key.strip().replace("-", "_")] = value.strip()
    return values


def _config_defaults(
    subparser: argparse.ArgumentParser,
    values: dict[str, str],
) -> dict[str, object]:
    actions = {action.dest: action for action in subparser._actions}
    defaults: dict[str, object] = {}
    for key, value in values.items():
        action = actions.get(key)
        if action is None or key in {"help", "config"}:
            raise UsageError(f"Unknown config key {key!r}.")
        if isinstance(action, argparse._StoreTrueAction):
            if value.lower() not in {"1", "0", "true", "false"}:
                raise UsageError(f"Invalid boolean value {value!r} for {key!r}.")
            defaults[key] = value.lower() in {"1", "true"}
        else:
            defaults[key] = value
    return defaults


def parse_args(argv: Sequence[str] | None = None) -> argparse.Namespace:
    """Parse command-line arguments, applying the config file if given.

    Flags override config file values, which override built-in defaults.

    Args:
        argv: Arguments. If `None`, `sys.argv[1:]` is used.

    Returns:
        Parsed arguments.
    """
    parser = build_parser()
    args = parser.parse_args(argv)
    if args.config is not None:
        subparser = args._subparsers[args.command]
        subparser.set_defaults(
            **_config_defaults(subparser, read_config_file(args.config)))
        args = parser.parse_args(argv)
    return args


def _hyper(args: argparse.Namespace) -> crlr.loss.Hyperparams:
    return crlr.loss.Hyperparams(
        **{name: getattr(args, name) for name in _HYPER_DEFAULTS},
        denom_epsilon=args.denom_epsilon,
    )


def _solver_config(args: argparse.Namespace) -> crlr.solver.SolverConfig:
    return crlr.solver.SolverConfig(
        **{name: getattr(args, name) for name, _ in _SOLVER_OPTIONS},
        reduction=args.reduction,
        seed=args.seed,
    )


def _synth_config(
    args: argparse.Namespace,
    bias_rate: float,
) -> crlr.datasets.SynthConfig:
    return crlr.datasets.SynthConfig(
        n_pool=args.n_pool,
        p_causal=args.p_causal,
        p_noise=args.p_noise,
        bias_rate=bias_rate,
        noise_scale=args.noise_scale,
        bias_feature_index=args.bias_feature_index,
        seed=args.seed,
        n_samples=args.n_samples if args.n_samples > 0 else None,
    )


@contextlib.contextmanager
def _map_function(threads: int) -> Iterator[Callable[..., Any]]:
    crlr.utils.check_scalar(threads, "threads", typ=int, gt=0)
    if threads == 1:
        yield map
        return
    context = contextvars.copy_context()

    def run(fn: Callable[..., Any], *args: Any) -> Any:
        return context.copy().run(fn, *args)

    with concurrent.futures.ThreadPoolExecutor(max_workers=threads) as executor:
        yield lambda fn, *iterables: executor.map(
            functools.partial(run, fn), *iterables)


def _sha256(path: pathlib.Path) -> str:
    return hashlib.sha256(path.read_bytes()).hexdigest()


def cmd_generate(args: argparse.Namespace) -> list[pathlib.Path]:
    """Generate a training dataset and, optionally, a grid of test datasets.

    Args:
        args: Parsed arguments.

    Returns:
        Input files of the run (none).
    """
    config = _synth_config(args, args.bias_rate)
    synth = crlr.datasets.generate(config)
    crlr.datasets.write_synth_dataset(
        synth, args.out_dir / f"{args.name}.csv", args.label)
    logger.info("Generated %d training samples.", synth.dataset.n)

    if args.test_grid is not None:
        with _map_function(args.threads) as map_:
            grid = crlr.datasets.resample_test_grid(
                config._replace(seed=crlr.utils.derive_seed(args.seed, 1)),
                args.test_grid,
                map_=map_,
            )
        for rate, test in zip(args.test_grid, grid, strict=True):
            crlr.datasets.write_synth_dataset(
                test, args.out_dir / f"test_r{rate:g}.csv", args.label)
    return []


def cmd_train(args: argparse.Namespace) -> list[pathlib.Path]:
    """Fit a model and write the model, balance report and sample weights.

    Args:
        args: Parsed arguments.

    Returns:
        Input files of the run.
    """
    data = crlr.core.load_dataset(args.data, args.label)
    if args.add_intercept:
        data = crlr.core.add_intercept(data)
    hyper = _hyper(args)
    config = _solver_config(args)

    if args.method == "crlr":
        result = crlr.solver.fit(data, hyper, config)
        beta, weights = result.state.beta, result.state.weights
        balance = result.balance
        print(  # noqa: T201
            f"converged={int(result.converged)} "
            f"iterations={result.iterations_used} "
            f"objective={result.objective_trace[-1][1]:.17g}",
        )
    else:
        beta = crlr.experiment.fit_method(
            args.method,
            data,
            hyper,
            config,
            top_k=args.top_k,
            baseline_l1=args.baseline_l1,
        )
        weights = np.full(data.n, 1 / data.n)
        balance = None

    if balance is None:
        indicator = crlr.core.indicator_from_features(data)
        balance = (
            crlr.loss.balancing_loss(
                data.features, indicator, weights, hyper.denom_epsilon,
                feature_names=data.feature_names, reduction=config.reduction)
            if not bool(indicator.degenerate.all())
            else crlr.loss.BalanceReport(
                np.zeros(data.p), np.ones(data.p, dtype=bool), data.feature_names)
        )

    crlr.solver.save_model(
        args.out_dir / "model.txt",
        beta,
        data.feature_names,
        hyper,
        config,
        intercept=args.add_intercept,
    )
    crlr.utils.write_csv(
        balance.to_dicts(), args.out_dir / "balance.csv", balance.default_keys, sig=17)
    crlr.utils.write_csv(
        [{"row": i, "weight": float(w)} for i, w in enumerate(weights)],
        args.out_dir / "weights.csv",
        ("row", "weight"),
        sig=17,
    )
    return [args.data]


def cmd_predict(args: argparse.Namespace) -> list[pathlib.Path]:
    """Predict with a saved model, matching features by name.

    Writes `predictions.csv`, and `metrics.csv` if the data have labels.

    Args:
        args: Parsed arguments.

    Returns:
        Input files of the run.
    """
    model = crlr.solver.load_model(args.model)
    table = crlr.core.load_table(args.data)
    names = list(model.feature_names)
    if model.intercept:
        names = names[:-1]
    x = crlr.core.columns_from_table(table, names)
    if model.intercept:
        x = np.column_stack((x, np.ones(x.shape[0])))

    proba = crlr.solver.predict_proba(model.beta, x)
    labels = crlr.solver.predict(model.beta, x, args.threshold)
    crlr.utils.write_csv(
        [
            {"row": i, "probability": float(p), "label": int(label)}
            for i, (p, label) in enumerate(zip(proba, labels, strict=True))
        ],
        args.out_dir / "predictions.csv",
        ("row", "probability", "label"),
        sig=17,
    )

    if args.label in table.column_names:
        y_true = crlr.core.columns_from_table(table, [args.label])[:, 0]
        report = crlr.evaluation.metrics(y_true, labels, proba)
        crlr.utils.write_csv(
            [report._asdict()],
            args.out_dir / "metrics.csv",
            report._fields,
            sig=17,
        )
        print(  # noqa: T201
            f"accuracy={report.accuracy:.17g} f1={report.f1:.17g} "
            f"rmse={report.rmse:.17g} n_test={report.n_test}",
        )
    return [args.model, args.data]


def cmd_sweep(args: argparse.Namespace) -> list[pathlib.Path]:
    """Run a bias-shift sweep and write the records and summaries.

    Writes `sweep.csv`, `sweep_summary.csv` and `sweep_methods.csv`.

    Args:
        args: Parsed arguments.

    Returns:
        Input files of the run (none).
    """
    methods = [m.strip() for m in args.methods.split(",") if m.strip() != ""]
    for method in methods:
        if method not in crlr.experiment.METHODS:
            raise UsageError(f"Unknown method {method!r}.")

    search_grid = None
    if args.grid_search:
        search_grid = {
            name: getattr(args, f"search_{name}")
            for name in _HYPER_DEFAULTS
            if getattr(args, f"search_{name}") is not None
        }
        if len(search_grid) == 0:
            raise UsageError("--grid-search requires at least one --search-lambdaN.")

    with _map_function(args.threads) as map_:
        result = crlr.experiment.run_bias_sweep(
            _synth_config(args, args.train_bias),
            args.grid,
            methods,
            args.repeats,
            hyper=_hyper(args),
            solver_config=_solver_config(args),
            top_k=args.top_k,
            baseline_l1=args.baseline_l1,
            search_grid=search_grid,
            intercept=args.add_intercept,
            map_=map_,
        )

    result.to_csv(args.out_dir / "sweep.csv")
    result.summary().to_csv(args.out_dir / "sweep_summary.csv")
    result.method_summary().to_csv(args.out_dir / "sweep_methods.csv")
    print(result.method_summary().to_string())  # noqa: T201
    return []


def cmd_balance(args: argparse.Namespace) -> list[pathlib.Path]:
    """Write the balance report of a dataset under given sample weights.

    Args:
        args: Parsed arguments.

    Returns:
        Input files of the run.
    """
    data = crlr.core.load_dataset(args.data, args.label)
    if args.add_intercept:
        data = crlr.core.add_intercept(data)
    inputs = [args.data]
    if args.weights is not None:
        weights = crlr.core.columns_from_table(
            crlr.core.load_table(args.weights), ["weight"], binarize_real=False)[:, 0]
        inputs.append(args.weights)
        if weights.shape[0] != data.n:
            raise ValueError(
                f"Expected {data.n} weights, got {weights.shape[0]}.")
    else:
        weights = np.full(data.n, 1 / data.n)

    report = crlr.loss.balancing_loss(
        data.features,
        crlr.core.indicator_from_features(data),
        weights,
        args.denom_epsilon,
        feature_names=data.feature_names,
        reduction=args.reduction,
    )
    crlr.utils.write_csv(
        report.to_dicts(), args.out_dir / "balance.csv", report.default_keys, sig=17)
    print(f"total={report.total:.17g}")  # noqa: T201
    return inputs


_COMMANDS: dict[str, Callable[[argparse.Namespace], list[pathlib.Path]]] = {
    "generate": cmd_generate,
    "train": cmd_train,
    "predict": cmd_predict,
    "sweep": cmd_sweep,
    "balance": cmd_balance,
}


def write_manifest(
    args: argparse.Namespace,
    inputs: Sequence[pathlib.Path],
    wall_time: float,
) -> pathlib.Path:
    """Write the run manifest of a command.

    Args:
        args: Parsed arguments.
        inputs: Input files.
        wall_time: Wall time of the command in seconds.

    Returns:
        Manifest path.
    """
    flags = {
        key: str(value) if isinstance(value, pathlib.Path) else value
        for key, value in sorted(vars(args).items())
        if not key.startswith("_")
    }
    manifest = {
        "command": args.command,
        "flags": flags,
        "seed": args.seed,
        "version": crlr.version.__version__,
        "inputs": {str(path): _sha256(path) for path in inputs},
        "wall_time_seconds": wall_time,
    }
    path = args.out_dir / f"{args.command}_manifest.json"
    path.write_text(json.dumps(manifest, indent=2) + "\n", encoding="utf-8")
    return path


def _exit_code(error: Exception) -> int:
    if isinstance(error, UsageError):
        return EXIT_USAGE
    if isinstance(error, FileNotFoundError):
        return EXIT_MISSING_FILE
    if isinstance(error, crlr.core.DatasetError):
        return EXIT_INVALID_DATASET
    if isinstance(error, ArithmeticError | crlr.loss.EmptyBalancingError):
        return EXIT_NUMERICAL
    return EXIT_INVALID_INPUT


def main(argv: Sequence[str] | None = None) -> int:
    """Run the command-line interface.

    Args:
        argv: Arguments. If `None`, `sys.argv[1:]` is used.

    Returns:
        Exit code.
    """
    try:
        args = parse_args(argv)
        logging.basicConfig(
            level=args.log_level,
            stream=sys.stderr,
            format="%(levelname)s %(name)s: %(message)s",
        )
        start = time.perf_counter()
        args.out_dir.mkdir(parents=True, exist_ok=True)
        with crlr.config.config_context(reduction=args.reduction):
            inputs = _COMMANDS[args.command](args)
        write_manifest(args, inputs, time.perf_counter() - start)
    except SystemExit as e:
        return e.code if isinstance(e.code, int) else EXIT_OK
    except (
        UsageError,
        FileNotFoundError,
        ValueError,
        TypeError,
        ArithmeticError,
    ) as e:
        code = _exit_code(e)
        message = " ".join(str(e).split())
        print(  # noqa: T201
            f"crlr: error: code={code} type={type(e).__name__} message={message}",
            file=sys.stderr,
        )
        return code
    return EXIT_OK
