"""Segmentation metrics: confusion matrices, per-class IoU, mIoU, trajectories.

Classes absent from both prediction and ground truth have an undefined IoU
(union zero); they are carried as NaN and excluded from the mean, never
counted as zero.
"""

from __future__ import annotations

from typing import Sequence

import numpy as np


def confusion_matrix(pred: np.ndarray, gt: np.ndarray, classes: int) -> np.ndarray:
    """(C, C) count matrix, rows = ground truth, cols = prediction."""
    pred = np.asarray(pred)
    gt = np.asarray(gt)
    if pred.shape != gt.shape:
        raise ValueError(f"shape mismatch: {pred.shape} vs {gt.shape}")
    if classes < 2:
        raise ValueError("classes must be >= 2")
    p = pred.reshape(-1).astype(np.int64)
    g = gt.reshape(-1).astype(np.int64)
    if p.size and (p.min() < 0 or p.max() >= classes or g.min() < 0 or g.max() >= classes):
        raise ValueError("class index out of range")
    return np.bincount(g * classes + p, minlength=classes * classes).reshape(
        classes, classes
    )


def iou_per_class(cm: np.ndarray) -> np.ndarray:
    """IoU = TP / (TP + FP + FN) per class; NaN where the union is empty."""
    cm = np.asarray(cm, dtype=np.float64)
    if cm.ndim != 2 or cm.shape[0] != cm.shape[1]:
        raise ValueError("confusion matrix must be square")
    tp = np.diag(cm)
    union = cm.sum(axis=0) + cm.sum(axis=1) - tp
    with np.errstate(divide="ignore", invalid="ignore"):
        return np.where(union > 0, tp / union, np.nan)


def miou(cm: np.ndarray) -> float:
    """Mean IoU over the defined classes only."""
    ious = iou_per_class(cm)
    if np.all(np.isnan(ious)):
        raise ValueError("mIoU undefined: no class present in prediction or truth")
    return float(np.nanmean(ious))


def pixel_accuracy(cm: np.ndarray) -> float:
    cm = np.asarray(cm, dtype=np.float64)
    total = cm.sum()
    if total <= 0:
        raise ValueError("empty confusion matrix")
    return float(np.trace(cm) / total)


def trajectory_stats(series: Sequence[float], last_k: int) -> tuple[float, float]:
    """Mean and population standard deviation over the last ``last_k`` values."""
    values = np.asarray(series, dtype=np.float64)
    if values.ndim != 1 or values.size == 0:
        raise ValueError("series must be a non-empty 1-d sequence")
    if not 1 <= last_k <= values.size:
        raise ValueError(f"last_k must be in [1, {values.size}], got {last_k}")
    tail = values[-last_k:]
    return float(tail.mean()), float(tail.std())
