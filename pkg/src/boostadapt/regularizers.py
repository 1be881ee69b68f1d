"""Unlabeled-target regularizer hooks.

The training loop treats the regularizer as an opaque term: given the current
parameters and the drawn target batch it returns (loss, gradient) and the
gradient is added to the labeled-source gradient. The default hook returns an
exact zero so the base method trains on source supervision alone; an optional
entropy-minimization hook is provided to exercise the contract with a real
consumer of the adaptively sampled batches.
"""

from __future__ import annotations

from typing import Callable, Sequence

import numpy as np

from .model import TwoHeadModel
from .numerics import entropy

RegularizerHook = Callable[[np.ndarray, Sequence[np.ndarray]], tuple[float, np.ndarray]]


def zero_regularizer(model: TwoHeadModel) -> RegularizerHook:
    """No-op target term: loss 0, gradient exactly zero."""

    def hook(params: np.ndarray, images: Sequence[np.ndarray]) -> tuple[float, np.ndarray]:
        return 0.0, np.zeros(model.param_count)

    return hook


def entropy_min_regularizer(model: TwoHeadModel, weight: float) -> RegularizerHook:
    """Minimize the primary head's mean prediction entropy on the target batch.

    Eval-mode forward (no dropout); d(entropy)/d(logit_k) = -p_k (log p_k + H).
    """
    if weight < 0.0:
        raise ValueError("weight must be >= 0")

    def hook(params: np.ndarray, images: Sequence[np.ndarray]) -> tuple[float, np.ndarray]:
        if len(images) == 0:
            return 0.0, np.zeros(model.param_count)
        n_pix = model.config.height * model.config.width
        n = len(images)
        masks = (None, None)
        total = 0.0
        grad = np.zeros(model.param_count)
        for image in images:
            cache = model._forward_cache(params, np.asarray(image, dtype=np.float64), masks)
            h = entropy(cache.probs_p)  # (H*W,)
            total += weight * float(np.mean(h)) / n
            logp = np.log(np.maximum(cache.probs_p, 1e-12))
            dlogits_p = -weight * cache.probs_p * (logp + h[:, None]) / (n_pix * n)
            dlogits_a = np.zeros_like(cache.probs_a)
            grad += model._backward(params, cache, dlogits_p, dlogits_a, masks)
        return total, grad

    return hook


def self_training_regularizer(model: TwoHeadModel, weight: float) -> RegularizerHook:
    """Cross-entropy of the primary head against the model's own fused argmax.

    The pseudo-label is recomputed from the current parameters at every call,
    so confident mistakes keep attracting gradient; unlike entropy descent the
    pull does not vanish as predictions saturate.
    """
    if weight < 0.0:
        raise ValueError("weight must be >= 0")

    def hook(params: np.ndarray, images: Sequence[np.ndarray]) -> tuple[float, np.ndarray]:
        if len(images) == 0:
            return 0.0, np.zeros(model.param_count)
        n_pix = model.config.height * model.config.width
        classes = model.config.classes
        n = len(images)
        masks = (None, None)
        total = 0.0
        grad = np.zeros(model.param_count)
        for image in images:
            cache = model._forward_cache(params, np.asarray(image, dtype=np.float64), masks)
            fused = cache.probs_p + cache.probs_a
            labels = np.argmax(fused, axis=1)  # (H*W,)
            picked = cache.probs_p[np.arange(labels.size), labels]
            total += -weight * float(np.mean(np.log(np.maximum(picked, 1e-12)))) / n
            onehot = np.zeros((labels.size, classes))
            onehot[np.arange(labels.size), labels] = 1.0
            dlogits_p = weight * (cache.probs_p - onehot) / (n_pix * n)
            dlogits_a = np.zeros_like(cache.probs_a)
            grad += model._backward(params, cache, dlogits_p, dlogits_a, masks)
        return total, grad

    return hook


def make_regularizer(model: TwoHeadModel, kind: str, weight: float) -> RegularizerHook:
    if kind == "none":
        return zero_regularizer(model)
    if kind == "entropy-min":
        return entropy_min_regularizer(model, weight)
    if kind == "self-training":
        return self_training_regularizer(model, weight)
    raise ValueError(f"unknown regularizer {kind!r}")
