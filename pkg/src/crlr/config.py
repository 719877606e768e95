"""Global configuration."""
# ruff: noqa: PLR0913

from __future__ import annotations

import contextlib
import contextvars
from typing import TYPE_CHECKING, overload

import crlr.utils


if TYPE_CHECKING:
    from collections.abc import Iterator
    from typing import Literal


_DEFAULT_CONFIG: dict[str, object] = {
    "armijo_shrink": 0.5,
    "armijo_slope": 1e-4,
    "denom_epsilon": 1e-12,
    "grad_tol": 1e-10,
    "initial_step": 1.0,
    "inner_beta_iters": 50,
    "inner_omega_iters": 50,
    "lambda1": 1.0,
    "lambda2": 0.1,
    "lambda3": 0.01,
    "lambda4": 0.001,
    "lambda5": 1.0,
    "max_outer_iters": 200,
    "max_shrinks": 50,
    "reduction": "blas",
    "rel_tol": 1e-6,
    "threshold": 0.5,
}

_config_var: contextvars.ContextVar[dict[str, object]] = contextvars.ContextVar(
    "crlr.config",
    default=_DEFAULT_CONFIG.copy(),  # noqa: B039
)


@overload
def get_config(option: Literal["reduction"]) -> Literal["blas", "fixed"]:
    ...

@overload
def get_config(
    option: Literal[
        "inner_beta_iters", "inner_omega_iters", "max_outer_iters", "max_shrinks"],
) -> int:
    ...

@overload
def get_config(
    option: Literal[
        "armijo_shrink", "armijo_slope", "denom_epsilon", "grad_tol",
        "initial_step", "lambda1", "lambda2", "lambda3", "lambda4", "lambda5",
        "rel_tol", "threshold",
    ],
) -> float:
    ...

@overload
def get_config(option: str) -> object:
    ...

@overload
def get_config(option: None = None) -> dict[str, object]:
    ...

def get_config(option: str | None = None) -> object:
    """Retrieve the current settings of the global configuration.

    Args:
        option: The option name.

    Returns:
        The specified option value if its name is provided,
            or a dictionary containing all options otherwise.

    Examples:
        ```pycon
        >>> import crlr

        >>> crlr.get_config("lambda1")
        1.0

        ```
    """
    config = _config_var.get()
    return config[option] if option is not None else config.copy()


def _set_config(**params: object) -> contextvars.Token[dict[str, object]]:
    config = _config_var.get().copy()
    for name, value in params.items():
        if value is not None:
            config[name] = crlr.utils.auto_check(value, name)
    return _config_var.set(config)


def set_config(
    *,
    armijo_shrink: float | None = None,
    armijo_slope: float | None = None,
    denom_epsilon: float | None = None,
    grad_tol: float | None = None,
    initial_step: float | None = None,
    inner_beta_iters: int | None = None,
    inner_omega_iters: int | None = None,
    lambda1: float | None = None,
    lambda2: float | None = None,
    lambda3: float | None = None,
    lambda4: float | None = None,
    lambda5: float | None = None,
    max_outer_iters: int | None = None,
    max_shrinks: int | None = None,
    reduction: Literal["blas", "fixed"] | None = None,
    rel_tol: float | None = None,
    threshold: float | None = None,
    **kwargs: object,
) -> None:
    """Update the global configuration with specified settings.

    Args:
        armijo_shrink: Step shrink factor of the backtracking line search.
            Default is `0.5`.
        armijo_slope: Sufficient decrease constant of the Armijo condition.
            Default is `1e-4`.
        denom_epsilon: Floor of the group weight sums in the balancing loss.
            Default is `1e-12`.
        grad_tol: Gradient norm below which a weight update stops.
            Default is `1e-10`.
        initial_step: Initial step size of both subproblem solvers.
            Default is `1.0`.
        inner_beta_iters: Proximal gradient steps per outer iteration.
            Default is `50`.
        inner_omega_iters: Weight descent steps per outer iteration.
            Default is `50`.
        lambda1: Weight of the global balancing regularizer. Default is `1.0`.
        lambda2: Weight of the squared norm of sample weights. Default is `0.1`.
        lambda3: Ridge penalty of the coefficients. Default is `0.01`.
        lambda4: Lasso penalty of the coefficients. Default is `0.001`.
        lambda5: Penalty keeping the sample weights summing to one.
            Default is `1.0`.
        max_outer_iters: Maximum number of alternating iterations. Default is `200`.
        max_shrinks: Maximum number of step shrinks in a single line search.
            Default is `50`.
        reduction: Reduction mode:

            - `"blas"`: matrix products dispatched to BLAS,
            - `"fixed"`: fixed-order reductions, bit-identical across runs.

            Default is `"blas"`.

        rel_tol: Relative objective change that stops the alternating iterations.
            Default is `1e-6`.
        threshold: Probability threshold of the predicted label. Default is `0.5`.
        **kwargs: User-defined global parameters.

    Examples:
        ```pycon
        >>> import crlr

        >>> crlr.set_config(lambda1=2.0)
        >>> crlr.Hyperparams().lambda1
        2.0
        >>> crlr.set_config(lambda1=1.0)

        ```
    """
    _set_config(**{k: v for k, v in locals().items() if k != "kwargs"}, **kwargs)


@contextlib.contextmanager
def config_context(
    *,
    armijo_shrink: float | None = None,
    armijo_slope: float | None = None,
    denom_epsilon: float | None = None,
    grad_tol: float | None = None,
    initial_step: float | None = None,
    inner_beta_iters: int | None = None,
    inner_omega_iters: int | None = None,
    lambda1: float | None = None,
    lambda2: float | None = None,
    lambda3: float | None = None,
    lambda4: float | None = None,
    lambda5: float | None = None,
    max_outer_iters: int | None = None,
    max_shrinks: int | None = None,
    reduction: Literal["blas", "fixed"] | None = None,
    rel_tol: float | None = None,
    threshold: float | None = None,
    **kwargs: object,
) -> Iterator[object]:
    """A context manager that temporarily modifies the global configuration.

    Accepts the same parameters as `set_config`.

    Args:
        armijo_shrink: Step shrink factor of the backtracking line search.
        armijo_slope: Sufficient decrease constant of the Armijo condition.
        denom_epsilon: Floor of the group weight sums in the balancing loss.
        grad_tol: Gradient norm below which a weight update stops.
        initial_step: Initial step size of both subproblem solvers.
        inner_beta_iters: Proximal gradient steps per outer iteration.
        inner_omega_iters: Weight descent steps per outer iteration.
        lambda1: Weight of the global balancing regularizer.
        lambda2: Weight of the squared norm of sample weights.
        lambda3: Ridge penalty of the coefficients.
        lambda4: Lasso penalty of the coefficients.
        lambda5: Penalty keeping the sample weights summing to one.
        max_outer_iters: Maximum number of alternating iterations.
        max_shrinks: Maximum number of step shrinks in a single line search.
        reduction: Reduction mode, `"blas"` or `"fixed"`.
        rel_tol: Relative objective change that stops the alternating iterations.
        threshold: Probability threshold of the predicted label.
        **kwargs: User-defined global parameters.

    Examples:
        ```pycon
        >>> import crlr

        >>> with crlr.config_context(reduction="fixed", lambda1=0.5):
        ...     config = crlr.SolverConfig()
        ...     hyper = crlr.Hyperparams()
        >>> config.reduction, hyper.lambda1
        ('fixed', 0.5)

        ```
    """
    token = _set_config(
        **{k: v for k, v in locals().items() if k != "kwargs"},
        **kwargs,
    )
    try:
        yield
    finally:
        _config_var.reset(token)
