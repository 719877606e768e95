from __future__ import annotations

from typing import TYPE_CHECKING

import pytest

import crlr.config
import crlr.loss
import crlr.solver


if TYPE_CHECKING:
    from collections.abc import Iterator


@pytest.fixture
def reset_config() -> Iterator[None]:
    try:
        yield
    finally:
        crlr.config._config_var.set(crlr.config._DEFAULT_CONFIG.copy())


@pytest.mark.usefixtures("reset_config")
def test_get_config() -> None:
    config = crlr.config.get_config()
    assert config == crlr.config._config_var.get()
    config["lambda1"] = 42.0
    assert config != crlr.config._config_var.get()

    assert (
        crlr.config.get_config("reduction") ==
        crlr.config._config_var.get()["reduction"]
    )


@pytest.mark.usefixtures("reset_config")
def test_set_config() -> None:
    crlr.config.set_config(lambda1=2.0)
    assert crlr.config._config_var.get()["lambda1"] == 2.0

    crlr.config.set_config(reduction="fixed")
    assert crlr.config._config_var.get()["reduction"] == "fixed"
    assert crlr.config._config_var.get()["lambda1"] == 2.0


@pytest.mark.usefixtures("reset_config")
def test_set_config_validates() -> None:
    with pytest.raises(ValueError, match="must be >="):
        crlr.config.set_config(lambda2=-1.0)
    with pytest.raises(ValueError, match="must be in"):
        crlr.config.set_config(reduction="fast")
    assert crlr.config.get_config("lambda2") == 0.1


@pytest.mark.usefixtures("reset_config")
def test_set_config_kwargs() -> None:
    crlr.config.set_config(my_option="x")
    assert crlr.config.get_config("my_option") == "x"


@pytest.mark.usefixtures("reset_config")
def test_config_context() -> None:
    old_lambda3 = crlr.config._config_var.get()["lambda3"]

    with crlr.config.config_context(lambda3=0.5, max_outer_iters=3):
        assert crlr.config._config_var.get()["lambda3"] == 0.5
        assert crlr.loss.Hyperparams().lambda3 == 0.5
        assert crlr.solver.SolverConfig().max_outer_iters == 3

    assert crlr.config._config_var.get()["lambda3"] == old_lambda3
    assert crlr.solver.SolverConfig().max_outer_iters == 200


@pytest.mark.usefixtures("reset_config")
def test_config_context_restores_on_error() -> None:
    with (
        pytest.raises(RuntimeError),
        crlr.config.config_context(reduction="fixed"),
    ):
        raise RuntimeError
    assert crlr.config.get_config("reduction") == "blas"
