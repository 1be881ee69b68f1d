"""Prediction-uncertainty scoring of unlabeled images.

The variance score of an image is the pixel-mean KL divergence from the
primary head's distribution to the auxiliary head's: pixels where the two
classifiers disagree score high. The entropy alternative uses the primary
head's pixel-mean Shannon entropy instead. Scores are softmax-normalized
into a probability vector over the dataset before updating the sampling
distribution.
"""

from __future__ import annotations

from concurrent.futures import ThreadPoolExecutor
from dataclasses import dataclass
from typing import Sequence

import numpy as np

from .model import TwoHeadModel
from .numerics import entropy, kl_pointwise, softmax

CRITERIA = ("kl-variance", "entropy")


@dataclass(frozen=True)
class ScoreVector:
    values: np.ndarray
    criterion: str

    def __post_init__(self) -> None:
        if self.criterion not in CRITERIA:
            raise ValueError(f"unknown criterion {self.criterion!r}")
        if not np.all(np.isfinite(self.values)):
            raise ValueError("scores must be finite")
        if np.any(self.values < 0.0):
            raise ValueError("scores must be non-negative")

    def __len__(self) -> int:
        return int(self.values.size)


def kl_variance_image(primary: np.ndarray, aux: np.ndarray) -> float:
    """Pixel-mean KL(primary || aux) over a pair of probability maps."""
    if primary.shape != aux.shape:
        raise ValueError(f"shape mismatch: {primary.shape} vs {aux.shape}")
    per_pixel = kl_pointwise(primary, aux)
    return float(np.mean(per_pixel))


def entropy_image(primary: np.ndarray) -> float:
    """Pixel-mean Shannon entropy of a probability map."""
    return float(np.mean(entropy(primary)))


def _score_one(model: TwoHeadModel, params: np.ndarray, image: np.ndarray, criterion: str) -> float:
    primary, aux = model.forward(params, image)  # eval mode: dropout off
    if criterion == "kl-variance":
        return kl_variance_image(primary, aux)
    return entropy_image(primary)


def score_dataset(
    model: TwoHeadModel,
    params: np.ndarray,
    images: Sequence[np.ndarray],
    criterion: str = "kl-variance",
    workers: int = 1,
) -> ScoreVector:
    """Eval-mode score per image. ``workers`` > 1 fans out over a thread pool
    with pre-assigned output slots, so results are identical to serial runs."""
    if criterion not in CRITERIA:
        raise ValueError(f"unknown criterion {criterion!r}; known: {CRITERIA}")
    if len(images) == 0:
        raise ValueError("empty image list")
    values = np.empty(len(images))
    if workers <= 1:
        for i, image in enumerate(images):
            values[i] = _score_one(model, params, image, criterion)
    else:
        def fill(i: int) -> None:
            values[i] = _score_one(model, params, images[i], criterion)

        with ThreadPoolExecutor(max_workers=workers) as pool:
            list(pool.map(fill, range(len(images))))
    return ScoreVector(values=values, criterion=criterion)


def normalize_scores(
    scores: ScoreVector | np.ndarray, temperature: float = 1.0
) -> np.ndarray:
    """Softmax over the dataset's scores; temperature 1 is the plain rule."""
    if temperature <= 0.0:
        raise ValueError("temperature must be positive")
    values = scores.values if isinstance(scores, ScoreVector) else np.asarray(scores)
    if values.ndim != 1:
        raise ValueError("scores must be a 1-d vector")
    return softmax(values / temperature)
