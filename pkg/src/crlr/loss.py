"""Objective components and their gradients.

The objective of causally regularized logistic regression is

```
J(W, beta) = sum_i W_i * softplus((1 - 2 Y_i) * x_i beta)
    + lambda1 * sum_j ||m_t(j) - m_c(j)||^2
    + lambda2 * ||W||^2 + lambda3 * ||beta||^2 + lambda4 * ||beta||_1
    + lambda5 * (sum_i W_i - 1)^2,
```

where `m_t(j)` and `m_c(j)` are the `W`-weighted mean vectors of all features
except `j` in the groups of samples with and without feature `j`.
Sample weights are parameterized as `W = omega * omega`.
"""
# pyright: reportUnknownMemberType=false

from __future__ import annotations

from typing import TYPE_CHECKING, NamedTuple

import numpy as np
import scipy.special

import crlr.config
import crlr.core
import crlr.utils


if TYPE_CHECKING:
    from collections.abc import Sequence
    from typing import Literal

    import numpy.typing as npt


    Reduction = Literal["blas", "fixed"]


class EmptyBalancingError(ValueError):
    """Every feature is degenerate, so there is nothing to balance."""


class NumericalError(ArithmeticError):
    """Non-finite value in the objective or its gradient.

    Attributes:
        feature: Index of the offending treatment feature, if known.
        trace: Objective trace up to the failure, if raised by the solver.
    """
    def __init__(
        self,
        message: str,
        *,
        feature: int | None = None,
        trace: Sequence[tuple[int, float]] | None = None,
    ) -> None:
        """Create the error.

        Args:
            message: Error message.
            feature: Index of the offending treatment feature, if known.
            trace: Objective trace up to the failure.
        """
        self.feature = feature
        self.trace = tuple(trace) if trace is not None else None
        super().__init__(message)


class Hyperparams(crlr.utils.ReprMixin):
    """Trade-off weights of the objective."""
    lambda1: float
    lambda2: float
    lambda3: float
    lambda4: float
    lambda5: float
    denom_epsilon: float

    def __init__(
        self,
        lambda1: float | None = None,
        lambda2: float | None = None,
        lambda3: float | None = None,
        lambda4: float | None = None,
        lambda5: float | None = None,
        denom_epsilon: float | None = None,
    ) -> None:
        """Trade-off weights of the objective.

        Parameters not provided are taken from the global configuration.

        Args:
            lambda1: Weight of the global balancing regularizer.
            lambda2: Weight of the squared norm of sample weights.
            lambda3: Ridge penalty of the coefficients.
            lambda4: Lasso penalty of the coefficients.
            lambda5: Penalty keeping the sample weights summing to one.
            denom_epsilon: Floor of the group weight sums in the balancing loss.

        Examples:
            ```pycon
            >>> import crlr

            >>> crlr.Hyperparams(lambda1=0.5, lambda4=0)
            Hyperparams(lambda1=0.5, lambda2=0.1, lambda3=0.01, lambda4=0, lambda5=1.0, denom_epsilon=1e-12)

            ```
        """  # noqa: E501
        for name, value in (
            ("lambda1", lambda1),
            ("lambda2", lambda2),
            ("lambda3", lambda3),
            ("lambda4", lambda4),
            ("lambda5", lambda5),
            ("denom_epsilon", denom_epsilon),
        ):
            setattr(
                self,
                name,
                crlr.utils.auto_check(value, name)
                if value is not None
                else crlr.config.get_config(name),
            )

    def with_params(self, **params: float) -> Hyperparams:
        """Copy the hyperparameters with some of the values replaced.

        Args:
            **params: New parameter values.

        Returns:
            New hyperparameters.
        """
        return Hyperparams(**(
            {name: getattr(self, name) for name in self._get_param_names()} |
            params
        ))  # type: ignore


class BalanceReport(crlr.utils.DictsReprMixin):
    """Imbalance of confounders for every feature taken as treatment.

    Attributes:
        per_feature_loss: Squared norm of the difference between weighted
            treated and control confounder means, per treatment feature.
            Zero for skipped features.
        skipped: `True` for degenerate features excluded from the total.
        total: Sum of the losses of the features that are not skipped.
        feature_names: Feature names.
    """
    default_keys = ("feature", "loss", "skipped")
    default_text_keys = ("feature",)

    def __init__(
        self,
        per_feature_loss: np.ndarray,
        skipped: np.ndarray,
        feature_names: Sequence[str] | None = None,
    ) -> None:
        """Imbalance of confounders for every feature taken as treatment.

        Args:
            per_feature_loss: Loss per treatment feature.
            skipped: Flags of degenerate features.
            feature_names: Feature names. If `None`, names `x0`, `x1`, ...
                are used.
        """
        self.per_feature_loss = per_feature_loss
        self.skipped = skipped
        self.total = float(np.sum(per_feature_loss[~skipped]))
        self.feature_names = (
            tuple(feature_names)
            if feature_names is not None
            else tuple(f"x{j}" for j in range(len(per_feature_loss)))
        )

    @crlr.utils._cache_method
    def to_dicts(self) -> tuple[dict[str, object], ...]:
        """Convert the report to a sequence of dictionaries, one per feature."""
        return tuple(
            {
                "feature": name,
                "loss": float(loss),
                "skipped": bool(skipped),
            }
            for name, loss, skipped in zip(
                self.feature_names,
                self.per_feature_loss,
                self.skipped,
                strict=True,
            )
        )


class ObjectiveValue(NamedTuple):
    """Value of the objective with its addends.

    Attributes:
        total: Sum of the addends.
        logistic: Weighted logistic loss.
        balancing: Balancing regularizer multiplied by `lambda1`.
        weight_l2: Squared norm of sample weights multiplied by `lambda2`.
        beta_l2: Squared norm of coefficients multiplied by `lambda3`.
        beta_l1: L1 norm of coefficients multiplied by `lambda4`.
        weight_sum: Squared deviation of the weight sum from one
            multiplied by `lambda5`.
    """
    total: float
    logistic: float
    balancing: float
    weight_l2: float
    beta_l2: float
    beta_l1: float
    weight_sum: float


_BLAS_CONTRACTIONS = {
    "ij,j->i": lambda a, b: a @ b,
    "ij,i->j": lambda a, b: b @ a,
    "ij,ik->jk": lambda a, b: a.T @ b,
    "ij,jk->ik": lambda a, b: a @ b,
    "i,i->": lambda a, b: a @ b,
}


def contract(
    subscripts: str,
    a: np.ndarray,
    b: np.ndarray,
    reduction: Reduction | None = None,
) -> np.ndarray:
    """Contract two arrays using the given reduction mode.

    Args:
        subscripts: Contraction in the `numpy.einsum` notation. Supported:
            `"ij,j->i"`, `"ij,i->j"`, `"ij,ik->jk"`, `"ij,jk->ik"`, `"i,i->"`.
        a: First operand.
        b: Second operand.
        reduction: Reduction mode. `"blas"` dispatches to matrix products,
            `"fixed"` uses `numpy.einsum` loops with a fixed summation order.
            If `None`, the value from the global configuration is used.

    Returns:
        Contraction result.
    """
    if reduction is None:
        reduction = crlr.config.get_config("reduction")
    if reduction == "fixed":
        return np.einsum(subscripts, a, b, optimize=False)
    return _BLAS_CONTRACTIONS[subscripts](a, b)


def softplus(z: npt.ArrayLike) -> np.ndarray:
    """Compute `log(1 + exp(z))` without overflow.

    Examples:
        ```pycon
        >>> import crlr.loss

        >>> crlr.loss.softplus([0.0, 1e4, -1e4])
        array([6.93147181e-01, 1.00000000e+04, 0.00000000e+00])

        ```
    """
    z = np.asarray(z, dtype=np.float64)
    return np.maximum(z, 0) + np.log1p(np.exp(-np.abs(z)))


def _as_array(value: npt.ArrayLike, name: str, ndim: int) -> np.ndarray:
    arr = np.asarray(value, dtype=np.float64)
    if arr.ndim != ndim:
        raise ValueError(f"{name} must have {ndim} dimension(s), got {arr.ndim}.")
    return arr


def _check_dims(
    x: np.ndarray,
    y: np.ndarray | None = None,
    beta: np.ndarray | None = None,
    w: np.ndarray | None = None,
) -> None:
    n, p = x.shape
    for name, arr, size in (("Y", y, n), ("beta", beta, p), ("W", w, n)):
        if arr is not None and arr.shape != (size,):
            raise ValueError(
                f"Dimension mismatch: {name} has shape {arr.shape}, "
                f"expected ({size},).")


def _as_indicator(
    indicator: crlr.core.IndicatorMatrix | npt.ArrayLike,
) -> crlr.core.IndicatorMatrix:
    if isinstance(indicator, crlr.core.IndicatorMatrix):
        return indicator
    return crlr.core.indicator_from_features(indicator)


def _margins(
    x: np.ndarray,
    y: np.ndarray,
    beta: np.ndarray,
    reduction: Reduction | None,
) -> tuple[np.ndarray, np.ndarray]:
    sign = 1 - 2 * y
    return sign, sign * contract("ij,j->i", x, beta, reduction)


def weighted_logistic_loss(
    x: npt.ArrayLike,
    y: npt.ArrayLike,
    beta: npt.ArrayLike,
    w: npt.ArrayLike,
    *,
    reduction: Reduction | None = None,
) -> float:
    """Weighted logistic loss `sum_i W_i * log(1 + exp((1 - 2 Y_i) * x_i beta))`.

    Args:
        x: Feature matrix.
        y: Binary labels.
        beta: Coefficients.
        w: Nonnegative sample weights.
        reduction: Reduction mode. If `None`, the global configuration is used.

    Returns:
        Loss value.

    Examples:
        ```pycon
        >>> import crlr

        >>> round(crlr.weighted_logistic_loss(
        ...     [[1, 0], [0, 1], [1, 1]], [1, 0, 1], [0, 0], [1, 1, 1]), 4)
        2.0794

        ```
    """
    x = _as_array(x, "X", 2)
    y = _as_array(y, "Y", 1)
    beta = _as_array(beta, "beta", 1)
    w = _as_array(w, "W", 1)
    _check_dims(x, y, beta, w)
    _, margins = _margins(x, y, beta, reduction)
    return float(contract("i,i->", w, softplus(margins), reduction))


def smooth_beta_objective(
    x: npt.ArrayLike,
    y: npt.ArrayLike,
    beta: npt.ArrayLike,
    w: npt.ArrayLike,
    lambda3: float,
    *,
    reduction: Reduction | None = None,
) -> float:
    """Smooth part of the coefficient subproblem: logistic loss plus ridge penalty.

    Args:
        x: Feature matrix.
        y: Binary labels.
        beta: Coefficients.
        w: Nonnegative sample weights.
        lambda3: Ridge penalty.
        reduction: Reduction mode. If `None`, the global configuration is used.

    Returns:
        Objective value.
    """
    beta = _as_array(beta, "beta", 1)
    return (
        weighted_logistic_loss(x, y, beta, w, reduction=reduction) +
        lambda3 * float(contract("i,i->", beta, beta, reduction))
    )


def grad_smooth_beta(
    x: npt.ArrayLike,
    y: npt.ArrayLike,
    beta: npt.ArrayLike,
    w: npt.ArrayLike,
    lambda3: float,
    *,
    reduction: Reduction | None = None,
) -> np.ndarray:
    """Gradient of the smooth part of the coefficient subproblem.

    Computes `sum_i W_i s_i sigmoid(s_i x_i beta) x_i + 2 lambda3 beta`,
    where `s_i = 1 - 2 Y_i`.

    Args:
        x: Feature matrix.
        y: Binary labels.
        beta: Coefficients.
        w: Nonnegative sample weights.
        lambda3: Ridge penalty.
        reduction: Reduction mode. If `None`, the global configuration is used.

    Returns:
        Gradient with respect to the coefficients.
    """
    x = _as_array(x, "X", 2)
    y = _as_array(y, "Y", 1)
    beta = _as_array(beta, "beta", 1)
    w = _as_array(w, "W", 1)
    _check_dims(x, y, beta, w)
    sign, margins = _margins(x, y, beta, reduction)
    return (
        contract("ij,i->j", x, w * sign * scipy.special.expit(margins), reduction) +
        2 * lambda3 * beta
    )


class _Balance(NamedTuple):
    diff: np.ndarray
    mean_treated: np.ndarray
    mean_control: np.ndarray
    treated_sum: np.ndarray
    control_sum: np.ndarray
    skipped: np.ndarray


def _balance(
    x: np.ndarray,
    indicator: crlr.core.IndicatorMatrix,
    w: np.ndarray,
    denom_epsilon: float,
    reduction: Reduction | None,
) -> _Balance:
    # Column j of the mean matrices holds the confounder means for treatment j.
    entries = indicator.entries
    treated_sum = contract("ij,i->j", entries, w, reduction)
    control_sum = contract("ij,i->j", 1 - entries, w, reduction)
    mean_treated = (
        contract("ij,ik->jk", x, w[:, None] * entries, reduction) /
        np.maximum(treated_sum, denom_epsilon)
    )
    mean_control = (
        contract("ij,ik->jk", x, w[:, None] * (1 - entries), reduction) /
        np.maximum(control_sum, denom_epsilon)
    )
    diff = mean_treated - mean_control
    np.fill_diagonal(diff, 0)
    skipped = indicator.degenerate
    diff[:, skipped] = 0
    return _Balance(
        diff=diff,
        mean_treated=mean_treated,
        mean_control=mean_control,
        treated_sum=treated_sum,
        control_sum=control_sum,
        skipped=skipped,
    )


def _check_balance_inputs(
    x: npt.ArrayLike,
    indicator: crlr.core.IndicatorMatrix | npt.ArrayLike,
    w: npt.ArrayLike,
) -> tuple[np.ndarray, crlr.core.IndicatorMatrix, np.ndarray]:
    x = _as_array(x, "X", 2)
    indicator = _as_indicator(indicator)
    w = _as_array(w, "W", 1)
    _check_dims(x, w=w)
    if indicator.entries.shape != x.shape:
        raise ValueError(
            f"Dimension mismatch: indicator matrix has shape "
            f"{indicator.entries.shape}, expected {x.shape}.")
    if bool(indicator.degenerate.all()):
        raise EmptyBalancingError(
            "Every feature is degenerate: no feature has both treated "
            "and control samples.")
    return x, indicator, w


def balancing_loss(
    x: npt.ArrayLike,
    indicator: crlr.core.IndicatorMatrix | npt.ArrayLike,
    w: npt.ArrayLike,
    denom_epsilon: float | None = None,
    *,
    feature_names: Sequence[str] | None = None,
    reduction: Reduction | None = None,
) -> BalanceReport:
    """Global balancing loss: confounder imbalance for every treatment feature.

    For every non-degenerate feature `j`, computes the squared norm of the
    difference between the `W`-weighted mean vectors of the other features
    in the treated and control groups of `j`.

    Args:
        x: Feature matrix.
        indicator: Indicator matrix, or a binary matrix to compute it from.
        w: Nonnegative sample weights.
        denom_epsilon: Floor of the group weight sums.
            If `None`, the global configuration is used.
        feature_names: Feature names for the report.
        reduction: Reduction mode. If `None`, the global configuration is used.

    Returns:
        Balance report.

    Examples:
        ```pycon
        >>> import crlr

        >>> x = [[1, 0], [1, 1], [0, 0], [0, 1]]
        >>> crlr.balancing_loss(x, x, [0.25, 0.25, 0.25, 0.25]).total
        0.0

        ```
    """
    x, indicator, w = _check_balance_inputs(x, indicator, w)
    if denom_epsilon is None:
        denom_epsilon = crlr.config.get_config("denom_epsilon")
    bal = _balance(x, indicator, w, denom_epsilon, reduction)
    per_feature_loss = np.einsum("kj,kj->j", bal.diff, bal.diff)
    return BalanceReport(per_feature_loss, bal.skipped, feature_names)


def grad_balancing_weights(
    x: npt.ArrayLike,
    indicator: crlr.core.IndicatorMatrix | npt.ArrayLike,
    w: npt.ArrayLike,
    denom_epsilon: float | None = None,
    *,
    reduction: Reduction | None = None,
) -> np.ndarray:
    """Gradient of the global balancing loss with respect to sample weights.

    A floored group weight sum is treated as a constant.

    Args:
        x: Feature matrix.
        indicator: Indicator matrix, or a binary matrix to compute it from.
        w: Nonnegative sample weights.
        denom_epsilon: Floor of the group weight sums.
            If `None`, the global configuration is used.
        reduction: Reduction mode. If `None`, the global configuration is used.

    Returns:
        Gradient with respect to `W`.
    """
    x, indicator, w = _check_balance_inputs(x, indicator, w)
    if denom_epsilon is None:
        denom_epsilon = crlr.config.get_config("denom_epsilon")
    bal = _balance(x, indicator, w, denom_epsilon, reduction)

    non_finite = ~np.isfinite(bal.diff).all(axis=0)
    if bool(non_finite.any()):
        feature = int(np.flatnonzero(non_finite)[0])
        raise NumericalError(
            f"Non-finite confounder imbalance for treatment feature {feature}.",
            feature=feature,
        )

    treated_floored = bal.treated_sum < denom_epsilon
    control_floored = bal.control_sum < denom_epsilon
    proj = contract("ij,jk->ik", x, bal.diff, reduction)
    shift_treated = np.where(
        treated_floored, 0, np.einsum("kj,kj->j", bal.diff, bal.mean_treated))
    shift_control = np.where(
        control_floored, 0, np.einsum("kj,kj->j", bal.diff, bal.mean_control))
    entries = indicator.entries
    return 2 * (
        contract(
            "ij,j->i",
            entries * (proj - shift_treated),
            1 / np.maximum(bal.treated_sum, denom_epsilon),
            reduction,
        ) -
        contract(
            "ij,j->i",
            (1 - entries) * (proj - shift_control),
            1 / np.maximum(bal.control_sum, denom_epsilon),
            reduction,
        )
    )


def objective(
    x: npt.ArrayLike,
    y: npt.ArrayLike,
    indicator: crlr.core.IndicatorMatrix | npt.ArrayLike,
    beta: npt.ArrayLike,
    omega: npt.ArrayLike,
    hyper: Hyperparams | None = None,
    *,
    reduction: Reduction | None = None,
) -> ObjectiveValue:
    """Full objective with sample weights `W = omega * omega`.

    The balancing regularizer is not evaluated if `lambda1` is zero.

    Args:
        x: Feature matrix.
        y: Binary labels.
        indicator: Indicator matrix, or a binary matrix to compute it from.
        beta: Coefficients.
        omega: Square roots of sample weights.
        hyper: Hyperparameters. If `None`, the global configuration is used.
        reduction: Reduction mode. If `None`, the global configuration is used.

    Returns:
        Objective value with its addends.

    Examples:
        ```pycon
        >>> import crlr

        >>> value = crlr.objective(
        ...     [[1, 0], [0, 1], [1, 1]], [1, 0, 1],
        ...     [[1, 0], [0, 1], [1, 1]], [0, 0], [1, 1, 1],
        ...     crlr.Hyperparams(0, 0, 0, 0, 0),
        ... )
        >>> round(value.total, 4) == round(value.logistic, 4) == 2.0794
        True

        ```
    """
    if hyper is None:
        hyper = Hyperparams()
    x = _as_array(x, "X", 2)
    beta = _as_array(beta, "beta", 1)
    omega = _as_array(omega, "omega", 1)
    w = omega * omega

    logistic = weighted_logistic_loss(x, y, beta, w, reduction=reduction)
    balancing = hyper.lambda1 * balancing_loss(
        x, indicator, w, hyper.denom_epsilon, reduction=reduction,
    ).total if hyper.lambda1 > 0 else 0.0
    weight_l2 = hyper.lambda2 * float(contract("i,i->", w, w, reduction))
    beta_l2 = hyper.lambda3 * float(contract("i,i->", beta, beta, reduction))
    beta_l1 = hyper.lambda4 * float(np.sum(np.abs(beta)))
    weight_sum = hyper.lambda5 * (float(np.sum(w)) - 1) ** 2
    return ObjectiveValue(
        total=logistic + balancing + weight_l2 + beta_l2 + beta_l1 + weight_sum,
        logistic=logistic,
        balancing=balancing,
        weight_l2=weight_l2,
        beta_l2=beta_l2,
        beta_l1=beta_l1,
        weight_sum=weight_sum,
    )


def grad_omega(
    x: npt.ArrayLike,
    y: npt.ArrayLike,
    indicator: crlr.core.IndicatorMatrix | npt.ArrayLike,
    beta: npt.ArrayLike,
    omega: npt.ArrayLike,
    hyper: Hyperparams | None = None,
    *,
    reduction: Reduction | None = None,
) -> np.ndarray:
    """Gradient of the objective with respect to `omega`.

    Computes `2 omega * (softplus + lambda1 dL/dW) + 4 lambda2 omega^3
    + 4 lambda5 (sum omega^2 - 1) omega`, where `dL/dW` is the gradient
    of the balancing loss.

    Args:
        x: Feature matrix.
        y: Binary labels.
        indicator: Indicator matrix, or a binary matrix to compute it from.
        beta: Coefficients.
        omega: Square roots of sample weights.
        hyper: Hyperparameters. If `None`, the global configuration is used.
        reduction: Reduction mode. If `None`, the global configuration is used.

    Returns:
        Gradient with respect to `omega`.
    """
    if hyper is None:
        hyper = Hyperparams()
    x = _as_array(x, "X", 2)
    y = _as_array(y, "Y", 1)
    beta = _as_array(beta, "beta", 1)
    omega = _as_array(omega, "omega", 1)
    _check_dims(x, y, beta, omega)
    w = omega * omega

    _, margins = _margins(x, y, beta, reduction)
    grad_w = softplus(margins)
    if hyper.lambda1 > 0:
        grad_w = grad_w + hyper.lambda1 * grad_balancing_weights(
            x, indicator, w, hyper.denom_epsilon, reduction=reduction)

    grad = (
        2 * omega * grad_w +
        4 * hyper.lambda2 * omega * w +
        4 * hyper.lambda5 * (float(np.sum(w)) - 1) * omega
    )
    if not np.isfinite(grad).all():
        raise NumericalError("Non-finite gradient with respect to omega.")
    return grad
