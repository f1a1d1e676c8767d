"""Input validation helpers shared by the functional and estimator APIs."""

from __future__ import annotations

import numbers
import os

import numpy as np
from sklearn.utils.validation import check_array

DEFAULT_SEED = 20180101


def check_series(x, min_length: int = 1) -> np.ndarray:
    """Return ``x`` as a finite, contiguous 1-D float64 array."""
    arr = check_array(np.asarray(x), ensure_2d=False, dtype=np.float64,
                      ensure_min_samples=min_length)
    if arr.ndim != 1:
        raise ValueError(f"expected a 1-D series, got shape {arr.shape}")
    return np.ascontiguousarray(arr)


def check_octave_range(rng, name="range") -> tuple[int, int]:
    """Parse ``(j1, j2)`` or ``"j1:j2"`` into a validated integer pair."""
    if isinstance(rng, str):
        parts = rng.split(":")
        if len(parts) != 2:
            raise ValueError(f"{name} must look like 'j1:j2', got {rng!r}")
        rng = parts
    j1, j2 = (int(v) for v in rng)
    if j1 >= j2:
        raise ValueError(f"{name}: j1 must be < j2, got [{j1}, {j2}]")
    return j1, j2


def check_probability(x, name, low=0.0, high=1.0):
    if not isinstance(x, numbers.Real) or not (low <= x <= high):
        raise ValueError(f"{name} must lie in [{low}, {high}], got {x!r}")
    return float(x)


def default_seed() -> int:
    """Package default seed, overridable through ``BISCALE_SEED``."""
    env = os.environ.get("BISCALE_SEED")
    return int(env) if env not in (None, "") else DEFAULT_SEED


def as_generator(seed) -> np.random.Generator:
    if isinstance(seed, np.random.Generator):
        return seed
    if seed is None:
        seed = default_seed()
    return np.random.default_rng(seed)
