"""Shared test utilities: small configs and gradient-comparison helpers."""

import numpy as np

from boostadapt.config import ExperimentConfig
from boostadapt.data import ShiftConfig
from boostadapt.model import ModelConfig


def max_rel_error(got: np.ndarray, want: np.ndarray, floor: float = 1e-3) -> float:
    """Componentwise |got-want| / max(|got|, |want|, floor).

    The floor keeps near-zero coordinates from dominating: for them the
    check degenerates to an absolute bound of tol * floor.
    """
    got = np.asarray(got, dtype=np.float64)
    want = np.asarray(want, dtype=np.float64)
    denom = np.maximum(np.maximum(np.abs(got), np.abs(want)), floor)
    return float(np.max(np.abs(got - want) / denom))


def small_model_config(**overrides) -> ModelConfig:
    base = dict(
        height=6,
        width=5,
        features=3,
        classes=3,
        hidden1=4,
        hidden2=4,
        dropout_rate=0.2,
        aux_loss_weight=0.5,
        r_aux=0,
        r_primary=1,
    )
    base.update(overrides)
    return ModelConfig(**base)


def small_shift_config(**overrides) -> ShiftConfig:
    base = dict(
        height=8,
        width=8,
        features=3,
        classes=3,
        source_count=8,
        target_count=8,
        feature_mean_shift=(0.3, 0.0, 0.0),
        seed=0,
    )
    base.update(overrides)
    return ShiftConfig(**base)


def small_experiment_config(**overrides) -> ExperimentConfig:
    base = dict(
        epochs=3,
        iters_per_epoch=6,
        batch_size=2,
        warmup_epochs=1,
        eval_last_k=2,
        shift=small_shift_config(),
        seed=0,
    )
    base.update(overrides)
    return ExperimentConfig(**base)


def random_image(rng: np.random.Generator, cfg: ModelConfig) -> np.ndarray:
    return rng.normal(0.0, 1.0, (cfg.height, cfg.width, cfg.features))


def random_labels(rng: np.random.Generator, cfg: ModelConfig) -> np.ndarray:
    return rng.integers(0, cfg.classes, (cfg.height, cfg.width))
