"""Named deterministic RNG substreams derived from one master seed.

Every consumer of randomness gets its own substream keyed by a fixed name, so
changing how one consumer draws (e.g. the sampler) cannot perturb any other
(e.g. parameter init or the synthetic data). Substreams are spawned with
``np.random.SeedSequence((seed, stream_id))``; the registry of ids is frozen.
"""

from __future__ import annotations

import numpy as np

# Frozen registry. Never renumber: stream ids are part of run determinism.
STREAM_IDS = {
    "init": 0,
    "dropout": 1,
    "data": 2,
    "sampling": 3,
    "shift-noise": 4,
    "geometry": 5,
    "signatures": 6,
}


def substream(seed: int, name: str) -> np.random.Generator:
    """Independent generator for the named consumer under ``seed``."""
    if name not in STREAM_IDS:
        raise KeyError(f"unknown rng stream {name!r}; known: {sorted(STREAM_IDS)}")
    if seed < 0:
        raise ValueError("seed must be non-negative")
    return np.random.default_rng(np.random.SeedSequence((seed, STREAM_IDS[name])))


def substream_seed(seed: int, name: str) -> int:
    """Stable derived integer seed for APIs that take a plain seed."""
    return int(substream(seed, name).integers(0, 2**62))
