"""Synthetic datasets with agnostic selection bias."""
# ruff: noqa: PLR0913

from __future__ import annotations

import pathlib
from typing import TYPE_CHECKING, NamedTuple

import numpy as np

import crlr.core
import crlr.utils


if TYPE_CHECKING:
    from collections.abc import Callable, Iterable, Sequence
    from os import PathLike
    from typing import Any, TypeAlias


    MapLike: TypeAlias = Callable[..., Iterable[Any]]


class EmptySelectionError(ValueError):
    """Biased selection kept too few samples."""


class SynthConfig(NamedTuple):
    """Parameters of the synthetic data generator.

    Attributes:
        n_pool: Number of samples drawn before the biased selection.
        p_causal: Number of causal features.
        p_noise: Number of noisy features.
        bias_rate: Selection probability of samples whose designated noisy
            feature equals the label. Samples where they differ are selected
            with probability `1 - bias_rate`.
        noise_scale: Standard deviation of the outcome noise.
        causal_coefficients: Coefficients of the linear outcome function
            of causal features. If `None`, all coefficients are `1`.
        bias_feature_index: Index of the designated feature in the noisy block.
        seed: Random seed.
        n_samples: If not `None`, pools are drawn until at least `n_samples`
            samples are selected, and the first `n_samples` are kept.
    """
    n_pool: int = 10_000
    p_causal: int = 10
    p_noise: int = 10
    bias_rate: float = 0.5
    noise_scale: float = 1.0
    causal_coefficients: tuple[float, ...] | None = None
    bias_feature_index: int = 0
    seed: int = 0
    n_samples: int | None = None


class SynthDataset(NamedTuple):
    """Synthetic dataset with ground-truth metadata.

    Attributes:
        dataset: Selected samples. Causal features come first,
            named `c0`, `c1`, ..., followed by noisy features `v0`, `v1`, ...
        causal_indices: Indices of causal features.
        noisy_indices: Indices of noisy features.
        pool: Binary features and labels of all samples drawn before selection,
            the label in the last column.
        selected: Selection outcome of every pool sample.
        config: Generator config.
    """
    dataset: crlr.core.Dataset
    causal_indices: np.ndarray
    noisy_indices: np.ndarray
    pool: np.ndarray
    selected: np.ndarray
    config: SynthConfig


def _check_params(config: SynthConfig) -> None:
    crlr.utils.check_scalar(config.n_pool, name="n_pool", typ=int, gt=0)
    crlr.utils.check_scalar(config.p_causal, name="p_causal", typ=int, ge=1)
    crlr.utils.check_scalar(config.p_noise, name="p_noise", typ=int, ge=1)
    crlr.utils.auto_check(config.bias_rate, "bias_rate")
    crlr.utils.check_scalar(
        config.noise_scale, name="noise_scale", typ=float | int, ge=0)
    crlr.utils.check_scalar(
        config.bias_feature_index,
        name="bias_feature_index",
        typ=int,
        ge=0,
        lt=config.p_noise,
    )
    crlr.utils.auto_check(config.seed, "seed")
    if config.n_samples is not None:
        crlr.utils.check_scalar(config.n_samples, name="n_samples", typ=int, ge=2)
    if (
        config.causal_coefficients is not None and
        len(config.causal_coefficients) != config.p_causal
    ):
        raise ValueError(
            f"causal_coefficients must have length p_causal == {config.p_causal}.")


def _draw_pool(
    config: SynthConfig,
    coef: np.ndarray,
    rng: np.random.Generator,
) -> tuple[np.ndarray, np.ndarray, np.ndarray]:
    causal = rng.standard_normal((config.n_pool, config.p_causal))
    noisy = rng.standard_normal((config.n_pool, config.p_noise))
    outcome = causal @ coef + rng.normal(0, config.noise_scale, config.n_pool)

    features = crlr.core.binarize(np.column_stack((causal, noisy)))
    labels = crlr.core.binarize(outcome)
    agree = features[:, config.p_causal + config.bias_feature_index] == labels
    prob = np.where(agree, config.bias_rate, 1 - config.bias_rate)
    selected = rng.random(config.n_pool) < prob
    return features, labels, selected


def generate(config: SynthConfig) -> SynthDataset:
    """Generate a synthetic dataset with biased sample selection.

    Draws causal and noisy features from the standard normal distribution and
    the real outcome as a linear function of the causal features plus normal
    noise. Features and outcome are binarized (`1` iff `>= 0`). Each sample is
    selected with probability `bias_rate` if its designated noisy feature
    equals the label, and with probability `1 - bias_rate` otherwise.

    Args:
        config: Generator config.

    Returns:
        Selected dataset with ground-truth metadata.

    Examples:
        ```pycon
        >>> import crlr

        >>> synth = crlr.generate(crlr.SynthConfig(n_pool=1000, bias_rate=0.8, seed=42))
        >>> synth.dataset.p
        20
        >>> synth.dataset.feature_names[:2], synth.dataset.feature_names[10:12]
        (('c0', 'c1'), ('v0', 'v1'))

        ```
    """
    _check_params(config)
    coef = (
        np.asarray(config.causal_coefficients, dtype=np.float64)
        if config.causal_coefficients is not None
        else np.ones(config.p_causal)
    )
    rng = np.random.default_rng(config.seed)

    pools: list[tuple[np.ndarray, np.ndarray, np.ndarray]] = []
    n_selected = 0
    while True:
        pool = _draw_pool(config, coef, rng)
        pools.append(pool)
        n_selected += int(np.count_nonzero(pool[2]))
        if n_selected == 0:
            raise EmptySelectionError(
                "Biased selection rejected every sample; increase n_pool.")
        if config.n_samples is None or n_selected >= config.n_samples:
            break

    features = np.concatenate([pool[0] for pool in pools])
    labels = np.concatenate([pool[1] for pool in pools])
    selected = np.concatenate([pool[2] for pool in pools])
    if config.n_samples is not None:
        keep = np.flatnonzero(selected)[config.n_samples:]
        selected[keep] = False

    if np.count_nonzero(selected) < 2:  # noqa: PLR2004
        raise EmptySelectionError(
            "Biased selection kept fewer than 2 samples; increase n_pool.")

    names = (
        *(f"c{j}" for j in range(config.p_causal)),
        *(f"v{j}" for j in range(config.p_noise)),
    )
    p = config.p_causal + config.p_noise
    return SynthDataset(
        dataset=crlr.core.Dataset(features[selected], labels[selected], names),
        causal_indices=np.arange(config.p_causal),
        noisy_indices=np.arange(config.p_causal, p),
        pool=np.column_stack((features, labels)),
        selected=selected,
        config=config,
    )


def resample_test_grid(
    config: SynthConfig,
    bias_rates: Sequence[float],
    *,
    map_: MapLike = map,
) -> list[SynthDataset]:
    """Generate one dataset per bias rate with independent draws.

    The dataset for the `i`-th bias rate uses a seed derived from
    `config.seed` and `i`.

    Args:
        config: Generator config. Its bias rate is replaced.
        bias_rates: Bias rates.
        map_: Map-like function to generate the datasets.

    Returns:
        Datasets in the order of the bias rates.

    Examples:
        ```pycon
        >>> import crlr

        >>> grid = crlr.resample_test_grid(
        ...     crlr.SynthConfig(n_pool=500, seed=7), [0.1, 0.5, 0.9])
        >>> [synth.config.bias_rate for synth in grid]
        [0.1, 0.5, 0.9]

        ```
    """
    configs = [
        config._replace(
            bias_rate=crlr.utils.auto_check(rate, "bias_rate"),
            seed=crlr.utils.derive_seed(config.seed, i),
        )
        for i, rate in enumerate(bias_rates)
    ]
    return list(map_(generate, configs))


def write_synth_dataset(
    synth: SynthDataset,
    path: str | PathLike[str],
    label_column: str = "y",
) -> pathlib.Path:
    """Write a synthetic dataset to CSV with a key=value metadata sidecar.

    The sidecar is written next to the CSV file with the suffix `.meta`.

    Args:
        synth: Synthetic dataset.
        path: CSV file path.
        label_column: Label column name.

    Returns:
        Path of the sidecar file.
    """
    path = pathlib.Path(path)
    crlr.core.write_dataset(synth.dataset, path, label_column)
    config = synth.config
    coef = (
        config.causal_coefficients
        if config.causal_coefficients is not None
        else (1.0,) * config.p_causal
    )
    meta = {
        "n_pool": config.n_pool,
        "p_causal": config.p_causal,
        "p_noise": config.p_noise,
        "bias_rate": format(config.bias_rate, ".17g"),
        "noise_scale": format(config.noise_scale, ".17g"),
        "causal_coefficients": ",".join(format(c, ".17g") for c in coef),
        "bias_feature_index": config.bias_feature_index,
        "seed": config.seed,
        "n_samples": config.n_samples if config.n_samples is not None else "",
        "n_drawn": len(synth.selected),
        "n_selected": synth.dataset.n,
        "label_column": label_column,
        "causal_indices": ",".join(str(j) for j in synth.causal_indices),
        "noisy_indices": ",".join(str(j) for j in synth.noisy_indices),
    }
    meta_path = path.with_suffix(".meta")
    meta_path.write_text(
        "".join(f"{key}={value}\n" for key, value in meta.items()),
        encoding="utf-8",
    )
    return meta_path
