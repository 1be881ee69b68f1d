"""Synthetic source/target domain pair with a controllable feature shift.

Each image is a label geometry (voronoi blobs, oriented stripes, or a
checkerboard) rendered to features: pixel features = class signature vector
plus isotropic Gaussian noise. Target images use the same signatures scaled
by a contrast factor, shifted per channel, and re-noised, so the two domains
share semantics but not feature statistics. Target labels are generated for
evaluation only and are structurally separated from the training view.

Determinism: signatures, label geometries, and noise come from three fixed
substreams of ``ShiftConfig.seed``; draw order is all source label maps,
all target label maps, then source noise, then target noise.
"""

from __future__ import annotations

import json
import os
from dataclasses import asdict, dataclass, replace
from typing import Sequence

import numpy as np

from .errors import FormatError
from .rng import substream

GEOMETRIES = ("blobs", "stripes", "checker")

MANIFEST_NAME = "manifest.json"
_MANIFEST_FORMAT = "domain-pair"
_MANIFEST_VERSION = 1


@dataclass(frozen=True)
class ShiftConfig:
    height: int = 16
    width: int = 16
    features: int = 3
    classes: int = 4
    source_count: int = 64
    target_count: int = 64
    geometry: str = "blobs"
    # default shift: 1.5 * noise_std on channel 0 plus 0.5x contrast
    feature_mean_shift: tuple[float, ...] = (0.375, 0.0, 0.0)
    feature_noise_std: float = 0.25
    contrast_scale: float = 0.5
    seed: int = 0

    def __post_init__(self) -> None:
        if min(self.height, self.width, self.features) < 1:
            raise ValueError("height, width, features must be >= 1")
        if self.classes < 2:
            raise ValueError("classes must be >= 2")
        if min(self.source_count, self.target_count) < 1:
            raise ValueError("dataset sizes must be >= 1")
        if self.geometry not in GEOMETRIES:
            raise ValueError(f"unknown geometry {self.geometry!r}; known: {GEOMETRIES}")
        if len(self.feature_mean_shift) != self.features:
            raise ValueError(
                f"feature_mean_shift has {len(self.feature_mean_shift)} entries "
                f"for {self.features} features"
            )
        if self.feature_noise_std < 0.0:
            raise ValueError("feature_noise_std must be >= 0")
        if self.contrast_scale <= 0.0:
            raise ValueError("contrast_scale must be positive")
        if self.seed < 0:
            raise ValueError("seed must be non-negative")
        # tolerate lists from JSON
        object.__setattr__(
            self, "feature_mean_shift", tuple(float(v) for v in self.feature_mean_shift)
        )


@dataclass(frozen=True)
class TrainView:
    """Everything the training loop may touch. No target labels, by construction."""

    source_images: np.ndarray
    source_labels: np.ndarray
    target_images: np.ndarray


@dataclass(frozen=True)
class DomainPair:
    source_images: np.ndarray  # (M, H, W, F)
    source_labels: np.ndarray  # (M, H, W) int64
    target_images: np.ndarray  # (N, H, W, F)
    target_labels_heldout: np.ndarray  # (N, H, W) int64, evaluation only
    config: ShiftConfig

    def trainer_view(self) -> TrainView:
        return TrainView(
            source_images=self.source_images,
            source_labels=self.source_labels,
            target_images=self.target_images,
        )


def _label_map(rng: np.random.Generator, cfg: ShiftConfig) -> np.ndarray:
    h, w, c = cfg.height, cfg.width, cfg.classes
    ys, xs = np.mgrid[0:h, 0:w]
    if cfg.geometry == "blobs":
        k = int(rng.integers(3, 7))
        centers = rng.random((k, 2)) * np.array([h, w])
        classes = rng.integers(0, c, k)
        d2 = (ys[..., None] - centers[:, 0]) ** 2 + (xs[..., None] - centers[:, 1]) ** 2
        return classes[np.argmin(d2, axis=-1)].astype(np.int64)
    if cfg.geometry == "stripes":
        theta = rng.uniform(0.0, np.pi)
        period = rng.uniform(4.0, 9.0)
        phase = rng.uniform(0.0, period)
        proj = xs * np.cos(theta) + ys * np.sin(theta) + phase
        return np.mod(np.floor(proj / period), c).astype(np.int64)
    tile = int(rng.integers(2, 6))
    ox, oy = rng.integers(0, tile, 2)
    return np.mod((xs + ox) // tile + (ys + oy) // tile, c).astype(np.int64)


def class_signatures(cfg: ShiftConfig) -> np.ndarray:
    """(C, F) unit-norm feature signatures, deterministic in cfg.seed."""
    rng = substream(cfg.seed, "signatures")
    sig = rng.normal(size=(cfg.classes, cfg.features))
    return sig / np.linalg.norm(sig, axis=1, keepdims=True)


def generate_domain_pair(cfg: ShiftConfig) -> DomainPair:
    """Render both domains. Bit-identical for identical configs."""
    signatures = class_signatures(cfg)
    geom_rng = substream(cfg.seed, "geometry")
    noise_rng = substream(cfg.seed, "shift-noise")

    source_labels = np.stack(
        [_label_map(geom_rng, cfg) for _ in range(cfg.source_count)]
    )
    target_labels = np.stack(
        [_label_map(geom_rng, cfg) for _ in range(cfg.target_count)]
    )
    shift = np.asarray(cfg.feature_mean_shift)
    std = cfg.feature_noise_std
    source_images = signatures[source_labels] + noise_rng.normal(
        0.0, std, (*source_labels.shape, cfg.features)
    )
    target_images = (
        cfg.contrast_scale * signatures[target_labels]
        + shift
        + noise_rng.normal(0.0, std, (*target_labels.shape, cfg.features))
    )
    return DomainPair(
        source_images=source_images,
        source_labels=source_labels,
        target_images=target_images,
        target_labels_heldout=target_labels,
        config=cfg,
    )


_ARRAY_FIELDS = (
    "source_images",
    "source_labels",
    "target_images",
    "target_labels_heldout",
)


def export_domain_pair(pair: DomainPair, out_dir: str) -> None:
    """Write a manifest plus one raw little-endian array file per field."""
    os.makedirs(out_dir, exist_ok=True)
    arrays = {}
    for name in _ARRAY_FIELDS:
        arr = getattr(pair, name)
        dtype = "<i8" if arr.dtype.kind == "i" else "<f8"
        fname = f"{name}.bin"
        arr.astype(dtype).tofile(os.path.join(out_dir, fname))
        arrays[name] = {"file": fname, "dtype": dtype, "shape": list(arr.shape)}
    manifest = {
        "format": _MANIFEST_FORMAT,
        "version": _MANIFEST_VERSION,
        "config": asdict(pair.config),
        "arrays": arrays,
    }
    with open(os.path.join(out_dir, MANIFEST_NAME), "w") as fh:
        json.dump(manifest, fh, indent=2, sort_keys=True)
        fh.write("\n")


def import_domain_pair(in_dir: str) -> DomainPair:
    """Inverse of ``export_domain_pair``; round-trips bit-exactly."""
    path = os.path.join(in_dir, MANIFEST_NAME)
    try:
        with open(path) as fh:
            manifest = json.load(fh)
    except OSError as exc:
        raise FormatError(f"cannot read dataset manifest {path}: {exc}") from exc
    except json.JSONDecodeError as exc:
        raise FormatError(f"malformed dataset manifest {path}: {exc}") from exc
    if manifest.get("format") != _MANIFEST_FORMAT:
        raise FormatError(f"{path} is not a domain-pair manifest")
    if manifest.get("version") != _MANIFEST_VERSION:
        raise FormatError(f"unsupported manifest version {manifest.get('version')}")
    try:
        cfg = ShiftConfig(**manifest["config"])
    except (KeyError, TypeError, ValueError) as exc:
        raise FormatError(f"bad config in {path}: {exc}") from exc
    loaded = {}
    for name in _ARRAY_FIELDS:
        try:
            entry = manifest["arrays"][name]
            fpath = os.path.join(in_dir, entry["file"])
            shape = tuple(int(v) for v in entry["shape"])
            arr = np.fromfile(fpath, dtype=entry["dtype"])
        except (KeyError, TypeError, OSError, ValueError) as exc:
            raise FormatError(f"bad array entry {name!r} in {path}: {exc}") from exc
        if arr.size != int(np.prod(shape)):
            raise FormatError(
                f"array {name!r} has {arr.size} values, expected shape {shape}"
            )
        kind = np.int64 if entry["dtype"] == "<i8" else np.float64
        loaded[name] = arr.astype(kind).reshape(shape)
    for name in ("source_images", "target_images"):
        if not np.all(np.isfinite(loaded[name])):
            raise FormatError(f"array {name!r} contains non-finite values")
    for name in ("source_labels", "target_labels_heldout"):
        lab = loaded[name]
        if lab.size and (lab.min() < 0 or lab.max() >= cfg.classes):
            raise FormatError(f"array {name!r} has labels outside [0, {cfg.classes})")
    return DomainPair(config=cfg, **loaded)


def with_seed(cfg: ShiftConfig, seed: int) -> ShiftConfig:
    return replace(cfg, seed=seed)
