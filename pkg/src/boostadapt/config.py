"""Experiment configuration: dataclass, strict JSON schema, variant presets.

The JSON schema mirrors the dataclass fields. Unknown keys are rejected so a
typo cannot silently fall back to a default. The model's image dimensions and
class count are taken from the ``shift`` section (single source of truth);
the ``model`` section carries only the architectural knobs.
"""

from __future__ import annotations

import dataclasses
import json
import math
from dataclasses import dataclass, field
from typing import Any

from .data import GEOMETRIES, ShiftConfig
from .errors import ConfigError
from .model import ModelConfig

SAMPLERS = ("kl-variance", "entropy", "uniform")
AGGREGATIONS = ("running-mean", "momentum", "ema", "oracle-alpha", "none")
REGULARIZERS = ("none", "entropy-min", "self-training")

# Ablation presets: the five-row table plus baseline aggregation variants.
VARIANT_PRESETS: dict[str, dict[str, Any]] = {
    "baseline": {"sampler": "uniform", "aggregation": "none"},
    "sampler-only": {"sampler": "kl-variance", "aggregation": "none"},
    "aggregation-only": {"sampler": "uniform", "aggregation": "running-mean"},
    "full-variance": {"sampler": "kl-variance", "aggregation": "running-mean"},
    "full-entropy": {"sampler": "entropy", "aggregation": "running-mean"},
    "momentum-0.9": {"sampler": "kl-variance", "aggregation": "momentum", "momentum": 0.9},
    "momentum-0.5": {"sampler": "kl-variance", "aggregation": "momentum", "momentum": 0.5},
    "ema": {"sampler": "kl-variance", "aggregation": "ema"},
    "oracle-alpha": {"sampler": "kl-variance", "aggregation": "oracle-alpha"},
}
ABLATION_VARIANTS = (
    "baseline",
    "sampler-only",
    "aggregation-only",
    "full-variance",
    "full-entropy",
)


@dataclass(frozen=True)
class ExperimentConfig:
    epochs: int = 20
    iters_per_epoch: int = 25
    batch_size: int = 2
    lr0: float = 0.2
    aux_loss_weight: float = 0.5
    dropout_rate: float = 0.2
    warmup_epochs: int = 10
    # Poly-decay horizon as a multiple of the run length. Values > 1 leave the
    # step size finite at the last iteration, so late snapshots stay stochastic
    # and the running mean has noise left to cancel.
    lr_horizon_scale: float = 4.0
    sampler: str = "kl-variance"
    aggregation: str = "running-mean"
    momentum: float = 0.9
    ema_decay: float = 0.99
    softmax_temperature: float = 1.0
    eval_last_k: int = 5
    horizontal_flip: bool = False
    dump_distributions: bool = False
    regularizer: str = "self-training"
    regularizer_weight: float = 0.5
    hidden1: int = 8
    hidden2: int = 8
    r_aux: int = 0
    r_primary: int = 1
    shift: ShiftConfig = field(default_factory=ShiftConfig)
    seed: int = 0
    out_dir: str | None = None

    def __post_init__(self) -> None:
        if self.epochs < 1 or self.iters_per_epoch < 1:
            raise ConfigError("epochs and iters_per_epoch must be >= 1")
        if self.batch_size < 1:
            raise ConfigError("batch_size must be >= 1")
        if self.lr0 <= 0.0:
            raise ConfigError("lr0 must be positive")
        if self.warmup_epochs < 0:
            raise ConfigError("warmup_epochs must be >= 0")
        if not math.isfinite(self.lr_horizon_scale) or self.lr_horizon_scale < 1.0:
            raise ConfigError("lr_horizon_scale must be finite and >= 1")
        if self.sampler not in SAMPLERS:
            raise ConfigError(f"unknown sampler {self.sampler!r}; known: {SAMPLERS}")
        if self.aggregation not in AGGREGATIONS:
            raise ConfigError(
                f"unknown aggregation {self.aggregation!r}; known: {AGGREGATIONS}"
            )
        if not 0.0 < self.momentum < 1.0:
            raise ConfigError("momentum must be in (0, 1)")
        if not 0.0 < self.ema_decay < 1.0:
            raise ConfigError("ema_decay must be in (0, 1)")
        if self.softmax_temperature <= 0.0:
            raise ConfigError("softmax_temperature must be positive")
        if self.eval_last_k < 1 or self.eval_last_k > self.epochs:
            raise ConfigError("eval_last_k must be in [1, epochs]")
        if self.regularizer not in REGULARIZERS:
            raise ConfigError(
                f"unknown regularizer {self.regularizer!r}; known: {REGULARIZERS}"
            )
        if self.regularizer_weight < 0.0:
            raise ConfigError("regularizer_weight must be >= 0")
        if self.seed < 0:
            raise ConfigError("seed must be non-negative")
        try:
            self.model_config()
        except ValueError as exc:
            raise ConfigError(str(exc)) from exc

    def model_config(self) -> ModelConfig:
        """Full architecture config, dimensions pulled from the shift section."""
        return ModelConfig(
            height=self.shift.height,
            width=self.shift.width,
            features=self.shift.features,
            classes=self.shift.classes,
            hidden1=self.hidden1,
            hidden2=self.hidden2,
            dropout_rate=self.dropout_rate,
            aux_loss_weight=self.aux_loss_weight,
            r_aux=self.r_aux,
            r_primary=self.r_primary,
        )


_MODEL_KEYS = ("hidden1", "hidden2", "r_aux", "r_primary")
_SHIFT_KEYS = tuple(f.name for f in dataclasses.fields(ShiftConfig))
_TOP_KEYS = tuple(
    f.name
    for f in dataclasses.fields(ExperimentConfig)
    if f.name not in _MODEL_KEYS and f.name != "shift"
) + ("model", "shift")


def _check_keys(given: dict, allowed: tuple[str, ...], where: str) -> None:
    unknown = sorted(set(given) - set(allowed))
    if unknown:
        raise ConfigError(f"unknown {where} config keys: {unknown}")


def experiment_config_from_dict(raw: dict) -> ExperimentConfig:
    if not isinstance(raw, dict):
        raise ConfigError("experiment config must be a JSON object")
    _check_keys(raw, _TOP_KEYS, "top-level")
    kwargs: dict[str, Any] = {k: v for k, v in raw.items() if k not in ("model", "shift")}
    model_section = raw.get("model", {})
    if not isinstance(model_section, dict):
        raise ConfigError("'model' section must be an object")
    _check_keys(model_section, _MODEL_KEYS, "model")
    kwargs.update(model_section)
    shift_section = raw.get("shift", {})
    if not isinstance(shift_section, dict):
        raise ConfigError("'shift' section must be an object")
    _check_keys(shift_section, _SHIFT_KEYS, "shift")
    try:
        kwargs["shift"] = ShiftConfig(**shift_section)
        return ExperimentConfig(**kwargs)
    except ConfigError:
        raise
    except (TypeError, ValueError) as exc:
        raise ConfigError(f"bad config value: {exc}") from exc


def load_experiment_config(path: str) -> ExperimentConfig:
    try:
        with open(path) as fh:
            raw = json.load(fh)
    except OSError as exc:
        raise ConfigError(f"cannot read config {path}: {exc}") from exc
    except json.JSONDecodeError as exc:
        raise ConfigError(f"config {path} is not valid JSON: {exc}") from exc
    return experiment_config_from_dict(raw)


def experiment_config_to_dict(cfg: ExperimentConfig) -> dict:
    """Resolved config in the same shape the loader accepts (echo round-trips)."""
    out: dict[str, Any] = {}
    for f in dataclasses.fields(ExperimentConfig):
        if f.name in _MODEL_KEYS or f.name == "shift":
            continue
        out[f.name] = getattr(cfg, f.name)
    out["model"] = {k: getattr(cfg, k) for k in _MODEL_KEYS}
    shift = dataclasses.asdict(cfg.shift)
    shift["feature_mean_shift"] = list(cfg.shift.feature_mean_shift)
    out["shift"] = shift
    return out


def apply_variant(cfg: ExperimentConfig, variant: str) -> ExperimentConfig:
    if variant not in VARIANT_PRESETS:
        raise ConfigError(
            f"unknown variant {variant!r}; known: {sorted(VARIANT_PRESETS)}"
        )
    return dataclasses.replace(cfg, **VARIANT_PRESETS[variant])
