"""Clipping, normalization, smoothing and differencing primitives.

All functions take anything array-like (including :class:`TimeSeries`) and
return a new float ndarray.
"""

from __future__ import annotations

from dataclasses import dataclass
from typing import Literal

import numpy as np
from numpy.lib.stride_tricks import sliding_window_view
from scipy.ndimage import median_filter

from .core import DataError

CLIP_HIGH = 1.01
CLIP_LOW = 0.99


@dataclass(frozen=True)
class SmoothKind:
    kind: Literal["mean", "median"] = "mean"
    window: int = 1

    def __post_init__(self):
        if self.kind not in ("mean", "median"):
            raise DataError(f"unknown smoother {self.kind!r}")
        if self.window < 1 or self.window % 2 == 0:
            raise DataError(f"smoothing window must be a positive odd integer, got {self.window}")


def _values(series) -> np.ndarray:
    return np.asarray(series, dtype=float).reshape(-1)


def clip_bounds(series) -> tuple[float, float]:
    """Clip band ``(lower, upper)`` from the 1st/99th percentiles.

    The band is widened, never narrowed, so negative percentiles keep
    ``lower <= upper``.
    """
    x = _values(series)
    p1, p99 = np.percentile(x, [1, 99])
    upper = max(CLIP_HIGH * p99, p99)
    lower = min(CLIP_LOW * p1, p1)
    return float(lower), float(upper)


def clip_impulses(series) -> np.ndarray:
    x = _values(series)
    lower, upper = clip_bounds(x)
    return np.minimum(upper, np.maximum(lower, x))


def minmax_normalize(series) -> np.ndarray:
    x = _values(series)
    lo, hi = x.min(), x.max()
    if hi == lo:
        return np.zeros_like(x)
    return (x - lo) / (hi - lo)


def smooth(series, how: SmoothKind) -> np.ndarray:
    """Centered rolling mean/median; edge windows shrink so length is kept."""
    x = _values(series)
    w = how.window
    if w > x.size:
        raise DataError(f"smoothing window {w} exceeds series length {x.size}")
    if w == 1:
        return x.copy()
    reduce = np.mean if how.kind == "mean" else np.median
    half = w // 2
    if how.kind == "median":
        out = median_filter(x, size=w, mode="nearest")
    else:
        out = np.empty_like(x)
        out[half:x.size - half] = sliding_window_view(x, w).mean(axis=1)
    for i in range(half):
        out[i] = reduce(x[: i + half + 1])
        j = x.size - 1 - i
        out[j] = reduce(x[j - half:])
    return out


def first_diff(series, absolute: bool = False) -> np.ndarray:
    x = _values(series)
    if x.size < 2:
        raise DataError("first difference needs at least 2 points")
    d = np.diff(x)
    return np.abs(d) if absolute else d
