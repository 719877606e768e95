from __future__ import annotations

import logging
import math
from typing import TYPE_CHECKING
import unittest.mock

import numpy as np
import pytest
import scipy.optimize

import crlr.config
import crlr.core
import crlr.loss
import crlr.solver


if TYPE_CHECKING:
    import pathlib


DESCENT_TOL = 1e-10


def _random_dataset(
    rng: np.random.Generator,
    n: int = 60,
    p: int = 6,
) -> crlr.core.Dataset:
    x = rng.integers(0, 2, size=(n, p)).astype(np.float64)
    coef = rng.normal(0, 1, size=p)
    logits = x @ coef - coef.sum() / 2
    y = (rng.random(n) < 1 / (1 + np.exp(-logits))).astype(np.float64)
    return crlr.core.Dataset(x, y)


def _elastic_net_oracle(
    x: np.ndarray,
    y: np.ndarray,
    w: np.ndarray,
    lambda3: float,
    lambda4: float,
) -> np.ndarray:
    p = x.shape[1]

    def fun(uv: np.ndarray) -> tuple[float, np.ndarray]:
        u, v = uv[:p], uv[p:]
        beta = u - v
        value = (
            crlr.loss.smooth_beta_objective(x, y, beta, w, lambda3) +
            lambda4 * float(np.sum(u + v))
        )
        grad = crlr.loss.grad_smooth_beta(x, y, beta, w, lambda3)
        return value, np.concatenate((grad + lambda4, -grad + lambda4))

    result = scipy.optimize.minimize(
        fun,
        np.zeros(2 * p),
        jac=True,
        method="L-BFGS-B",
        bounds=[(0, None)] * (2 * p),
        options={"ftol": 1e-15, "gtol": 1e-12, "maxiter": 10_000},
    )
    return result.x[:p] - result.x[p:]


def _fd_weight_descent(
    data: crlr.core.Dataset,
    beta: np.ndarray,
    omega: np.ndarray,
    hyper: crlr.loss.Hyperparams,
    config: crlr.solver.SolverConfig,
) -> np.ndarray:
    def f(point: np.ndarray) -> float:
        return crlr.loss.objective(
            data.features, data.labels, data.features, beta, point, hyper).total

    for _ in range(config.inner_omega_iters):
        grad = np.empty_like(omega)
        for i in range(omega.shape[0]):
            step = np.zeros_like(omega)
            step[i] = 1e-6
            grad[i] = (f(omega + step) - f(omega - step)) / 2e-6
        value = f(omega)
        size = config.initial_step
        while f(omega - size*grad) > value - config.armijo_slope*size*(grad @ grad):
            size *= config.armijo_shrink
        omega = omega - size*grad
    return omega


def test_solver_config_defaults() -> None:
    config = crlr.solver.SolverConfig()
    assert config.max_outer_iters == 200
    assert config.inner_beta_iters == 50
    assert config.inner_omega_iters == 50
    assert config.rel_tol == 1e-6
    assert config.armijo_shrink == 0.5
    assert config.armijo_slope == 1e-4
    assert config.initial_step == 1.0
    assert config.max_shrinks == 50
    assert config.grad_tol == 1e-10
    assert config.reduction == "blas"
    assert config.seed == 0
    assert config.learn_weights is True

def test_solver_config_with_params() -> None:
    config = crlr.solver.SolverConfig(max_outer_iters=5, reduction="fixed")
    new = config.with_params(learn_weights=False, rel_tol=1e-3)
    assert new.max_outer_iters == 5
    assert new.reduction == "fixed"
    assert new.learn_weights is False
    assert new.rel_tol == 1e-3
    assert config.learn_weights is True

def test_solver_config_invalid() -> None:
    with pytest.raises(ValueError, match="must be >"):
        crlr.solver.SolverConfig(max_outer_iters=0)
    with pytest.raises(ValueError, match="must be <"):
        crlr.solver.SolverConfig(armijo_shrink=1.0)
    with pytest.raises(ValueError, match="must be in"):
        crlr.solver.SolverConfig(reduction="fast")  # type: ignore
    with pytest.raises(TypeError):
        crlr.solver.SolverConfig(learn_weights=1)  # type: ignore


def test_model_state_weights() -> None:
    state = crlr.solver.ModelState(np.zeros(2), np.array([0.5, 2.0]))
    np.testing.assert_array_equal(state.weights, [0.25, 4.0])
    assert state.objective_trace == ()


def test_soft_threshold() -> None:
    np.testing.assert_array_equal(
        crlr.solver.soft_threshold(np.array([-3.0, -0.5, 0.0, 0.5, 3.0]), 1.0),
        [-2.0, 0.0, 0.0, 0.0, 2.0],
    )


def test_update_beta_decreases_objective() -> None:
    rng = np.random.default_rng(0)
    data = _random_dataset(rng)
    hyper = crlr.loss.Hyperparams(1.0, 0.1, 0.01, 0.01, 1.0)
    omega = rng.uniform(0.05, 0.2, size=data.n)
    state = crlr.solver.ModelState(rng.normal(size=data.p), omega)
    update = crlr.solver.update_beta(state, data.features, data.labels, hyper)

    values = np.array(update.objective_values)
    assert len(values) > 1
    assert (np.diff(values) <= DESCENT_TOL).all()
    assert update.step > 0
    np.testing.assert_array_equal(state.omega, omega)

def test_update_beta_sparsity() -> None:
    rng = np.random.default_rng(1)
    data = _random_dataset(rng)
    state = crlr.solver.ModelState(
        np.zeros(data.p), np.full(data.n, 1 / math.sqrt(data.n)))
    update = crlr.solver.update_beta(
        state,
        data.features,
        data.labels,
        crlr.loss.Hyperparams(lambda3=0, lambda4=10.0),
        crlr.solver.SolverConfig(inner_beta_iters=200),
    )
    np.testing.assert_array_equal(update.beta, 0)

def test_update_beta_first_step() -> None:
    rng = np.random.default_rng(14)
    data = _random_dataset(rng, n=30, p=5)
    omega = rng.uniform(0.1, 0.3, size=data.n)
    hyper = crlr.loss.Hyperparams(lambda3=0, lambda4=0)
    state = crlr.solver.ModelState(np.zeros(data.p), omega)
    update = crlr.solver.update_beta(
        state,
        data.features,
        data.labels,
        hyper,
        crlr.solver.SolverConfig(inner_beta_iters=1, initial_step=0.1),
    )
    grad = crlr.loss.grad_smooth_beta(
        data.features, data.labels, np.zeros(data.p), state.weights, 0)
    assert update.step == 0.1
    np.testing.assert_allclose(update.beta, -0.1 * grad, rtol=1e-12, atol=1e-15)


def test_update_omega_matches_numerical_descent() -> None:
    rng = np.random.default_rng(15)
    hyper = crlr.loss.Hyperparams()
    config = crlr.solver.SolverConfig(inner_omega_iters=5)
    for _ in range(5):
        data = _random_dataset(rng, n=20, p=5)
        beta = rng.normal(size=data.p)
        omega = rng.uniform(0.1, 0.3, size=data.n)
        update = crlr.solver.update_omega(
            crlr.solver.ModelState(beta, omega),
            data.features,
            data.labels,
            data.features,
            hyper,
            config,
        )
        expected = _fd_weight_descent(data, beta, omega, hyper, config)
        assert len(update.objective_values) == config.inner_omega_iters + 1
        np.testing.assert_allclose(update.omega, expected, atol=1e-6)

def test_update_omega_decreases_objective() -> None:
    rng = np.random.default_rng(2)
    data = _random_dataset(rng)
    state = crlr.solver.ModelState(
        rng.normal(size=data.p), np.full(data.n, 1 / math.sqrt(data.n)))
    update = crlr.solver.update_omega(
        state, data.features, data.labels, data.features)

    values = np.array(update.objective_values)
    assert len(values) > 1
    assert (np.diff(values) < 0).all()
    assert not update.line_search_failed

def test_update_omega_line_search_failure() -> None:
    rng = np.random.default_rng(3)
    data = _random_dataset(rng)
    omega = np.full(data.n, 1 / math.sqrt(data.n))
    state = crlr.solver.ModelState(rng.normal(size=data.p), omega)
    update = crlr.solver.update_omega(
        state,
        data.features,
        data.labels,
        data.features,
        config=crlr.solver.SolverConfig(initial_step=1e8, max_shrinks=1),
    )
    assert update.line_search_failed
    np.testing.assert_array_equal(update.omega, omega)
    assert len(update.objective_values) == 1

def test_update_omega_gradient_tolerance() -> None:
    rng = np.random.default_rng(4)
    data = _random_dataset(rng)
    state = crlr.solver.ModelState(
        np.zeros(data.p), np.full(data.n, 1 / math.sqrt(data.n)))
    update = crlr.solver.update_omega(
        state,
        data.features,
        data.labels,
        data.features,
        config=crlr.solver.SolverConfig(grad_tol=1e10),
    )
    np.testing.assert_array_equal(update.omega, state.omega)
    assert not update.line_search_failed


def test_fit_descent() -> None:
    rng = np.random.default_rng(5)
    config = crlr.solver.SolverConfig(max_outer_iters=20)
    for _ in range(50):
        data = _random_dataset(rng, n=40, p=5)
        result = crlr.solver.fit(data, config=config)
        values = np.array([value for _, value in result.objective_trace])
        assert (np.diff(values) <= DESCENT_TOL).all()
        assert [it for it, _ in result.objective_trace] == list(
            range(result.iterations_used + 1))

def test_fit_line_search_steps_descend() -> None:
    rng = np.random.default_rng(6)
    hyper = crlr.loss.Hyperparams()
    config = crlr.solver.SolverConfig()
    for _ in range(10):
        data = _random_dataset(rng, n=40, p=5)
        state = crlr.solver.ModelState(
            np.zeros(data.p), np.full(data.n, 1 / math.sqrt(data.n)))
        for _ in range(5):
            beta_update = crlr.solver.update_beta(
                state, data.features, data.labels, hyper, config)
            assert (np.diff(beta_update.objective_values) <= DESCENT_TOL).all()
            state = state._replace(beta=beta_update.beta)
            omega_update = crlr.solver.update_omega(
                state, data.features, data.labels, data.features, hyper, config)
            assert (np.diff(omega_update.objective_values) <= DESCENT_TOL).all()
            state = state._replace(omega=omega_update.omega)


def test_fit_matches_elastic_net_oracle() -> None:
    rng = np.random.default_rng(7)
    hyper = crlr.loss.Hyperparams(lambda1=0, lambda2=0, lambda3=0.05, lambda4=0.01)
    config = crlr.solver.SolverConfig(
        max_outer_iters=100,
        inner_beta_iters=200,
        rel_tol=1e-14,
        learn_weights=False,
    )
    for _ in range(20):
        data = _random_dataset(rng, n=100, p=10)
        result = crlr.solver.fit(data, hyper, config)
        np.testing.assert_array_equal(
            result.state.omega, np.full(data.n, 1 / math.sqrt(data.n)))
        oracle = _elastic_net_oracle(
            data.features,
            data.labels,
            np.full(data.n, 1 / data.n),
            hyper.lambda3,
            hyper.lambda4,
        )
        assert float(np.max(np.abs(result.state.beta - oracle))) < 1e-3


def test_fit_result() -> None:
    rng = np.random.default_rng(8)
    data = _random_dataset(rng)
    result = crlr.solver.fit(data)
    assert 1 <= result.iterations_used <= 200
    assert len(result.objective_trace) == result.iterations_used + 1
    assert result.objective_trace[0][0] == 0
    assert result.state.objective_trace == result.objective_trace
    assert result.balance is not None
    assert result.balance.feature_names == data.feature_names
    assert result.line_search_failures >= 0
    assert (result.state.weights >= 0).all()
    assert 1 <= result.effective_sample_size <= data.n

def test_fit_effective_sample_size_uniform() -> None:
    rng = np.random.default_rng(16)
    data = _random_dataset(rng)
    result = crlr.solver.fit(
        data, config=crlr.solver.SolverConfig(learn_weights=False))
    assert result.effective_sample_size == pytest.approx(data.n)

def test_fit_collapsed_weights_warning(caplog: pytest.LogCaptureFixture) -> None:
    rng = np.random.default_rng(17)
    data = _random_dataset(rng)
    config = crlr.solver.SolverConfig(max_outer_iters=2)
    with (
        unittest.mock.patch(
            "crlr.evaluation.effective_sample_size", return_value=1.0),
        caplog.at_level(logging.WARNING, logger="crlr.solver"),
    ):
        result = crlr.solver.fit(data, config=config)
    assert result.effective_sample_size == 1
    assert "collapsed" in caplog.text

    caplog.clear()
    with caplog.at_level(logging.WARNING, logger="crlr.solver"):
        crlr.solver.fit(data, config=config.with_params(learn_weights=False))
    assert caplog.text == ""

def test_fit_not_converged() -> None:
    rng = np.random.default_rng(9)
    data = _random_dataset(rng)
    result = crlr.solver.fit(
        data, config=crlr.solver.SolverConfig(max_outer_iters=1, rel_tol=1e-300))
    assert not result.converged
    assert result.iterations_used == 1
    assert len(result.objective_trace) == 2

def test_fit_reduces_imbalance() -> None:
    rng = np.random.default_rng(10)
    data = _random_dataset(rng, n=80, p=6)
    uniform = crlr.loss.balancing_loss(
        data.features, data.features, np.full(data.n, 1 / data.n)).total
    result = crlr.solver.fit(data, crlr.loss.Hyperparams(lambda1=10.0))
    assert result.balance is not None
    assert result.balance.total < uniform

def test_fit_deterministic() -> None:
    rng = np.random.default_rng(11)
    data = _random_dataset(rng)
    config = crlr.solver.SolverConfig(reduction="fixed")
    first = crlr.solver.fit(data, config=config)
    second = crlr.solver.fit(data, config=config)
    assert first.state.beta.tobytes() == second.state.beta.tobytes()
    assert first.state.omega.tobytes() == second.state.omega.tobytes()
    assert first.objective_trace == second.objective_trace

def test_fit_uses_global_config() -> None:
    rng = np.random.default_rng(12)
    data = _random_dataset(rng)
    with crlr.config.config_context(max_outer_iters=1):
        result = crlr.solver.fit(data)
    assert result.iterations_used == 1

def test_fit_all_degenerate() -> None:
    data = crlr.core.Dataset([[1, 0], [1, 0], [1, 0]], [1, 0, 1])
    with pytest.raises(crlr.loss.EmptyBalancingError):
        crlr.solver.fit(data)
    result = crlr.solver.fit(data, crlr.loss.Hyperparams(lambda1=0))
    assert result.balance is None

def test_fit_non_finite_objective() -> None:
    rng = np.random.default_rng(13)
    data = _random_dataset(rng)
    bad = crlr.loss.ObjectiveValue(*([float("nan")] * 7))
    with (
        unittest.mock.patch("crlr.loss.objective", return_value=bad),
        pytest.raises(crlr.loss.NumericalError) as exc_info,
    ):
        crlr.solver.fit(data)
    assert exc_info.value.trace is not None
    assert exc_info.value.trace[0][0] == 0


def test_predict_proba() -> None:
    proba = crlr.solver.predict_proba([1.0, -1.0], [[1, 0], [0, 1], [1, 1]])
    np.testing.assert_allclose(proba, [1 / (1 + math.exp(-1)), 1 / (1 + math.e), 0.5])

def test_predict() -> None:
    labels = crlr.solver.predict([1.0, -1.0], [[1, 0], [0, 1], [1, 1]])
    np.testing.assert_array_equal(labels, [1, 0, 1])
    assert labels.dtype == np.int64
    np.testing.assert_array_equal(
        crlr.solver.predict([1.0, -1.0], [[1, 0], [0, 1], [1, 1]], threshold=0.8),
        [0, 0, 0],
    )
    with crlr.config.config_context(threshold=0.6):
        np.testing.assert_array_equal(
            crlr.solver.predict([1.0, -1.0], [[1, 0], [1, 1]]), [1, 0])

def test_predict_dimension_mismatch() -> None:
    with pytest.raises(ValueError, match="Dimension mismatch"):
        crlr.solver.predict_proba([1.0, 2.0, 3.0], [[1, 0], [0, 1]])


def test_save_load_model(tmp_path: pathlib.Path) -> None:
    path = tmp_path / "model.txt"
    beta = np.array([0.1, -1 / 3, 2e-17])
    hyper = crlr.loss.Hyperparams(0.5, 0.2, 0.3, 0.4, 0.6, 1e-10)
    config = crlr.solver.SolverConfig(
        max_outer_iters=7, reduction="fixed", seed=42, learn_weights=False)
    crlr.solver.save_model(
        path, beta, ["a", "b,c", "intercept"], hyper, config, intercept=True)

    model = crlr.solver.load_model(path)
    assert model.beta.tobytes() == beta.tobytes()
    assert model.feature_names == ("a", "b,c", "intercept")
    assert model.intercept
    assert repr(model.hyper) == repr(hyper)
    assert repr(model.config) == repr(config)

    text = path.read_text(encoding="utf-8")
    assert text.startswith(f"format={crlr.solver.MODEL_FORMAT}\nversion=1\n")

def test_save_model_names_mismatch(tmp_path: pathlib.Path) -> None:
    with pytest.raises(ValueError, match="feature names"):
        crlr.solver.save_model(
            tmp_path / "model.txt",
            [0.0, 1.0],
            ["a"],
            crlr.loss.Hyperparams(),
            crlr.solver.SolverConfig(),
        )

@pytest.mark.parametrize(
    ("replace", "match"),
    [
        (("format=crlr-model", "format=other"), "not a model file"),
        (("version=1", "version=2"), "Unsupported"),
        (("lambda2=", "lambda_two="), "Missing key"),
        (("p=2", "p=3"), "Inconsistent"),
        (("max_shrinks=50", "max_shrinks=x"), "Invalid value"),
    ],
)
def test_load_model_invalid(
    tmp_path: pathlib.Path,
    replace: tuple[str, str],
    match: str,
) -> None:
    path = tmp_path / "model.txt"
    crlr.solver.save_model(
        path, [0.5, -0.5], ["a", "b"],
        crlr.loss.Hyperparams(), crlr.solver.SolverConfig())
    path.write_text(
        path.read_text(encoding="utf-8").replace(*replace), encoding="utf-8")
    with pytest.raises(crlr.solver.ModelFormatError, match=match):
        crlr.solver.load_model(path)

def test_load_model_missing(tmp_path: pathlib.Path) -> None:
    with pytest.raises(FileNotFoundError):
        crlr.solver.load_model(tmp_path / "model.txt")
