"""Windowed feature extractors that drive the three clustering levels.

* ``section_sign`` - trend signature per window (periodicity level)
* ``swing``        - p80 - p20 of first differences per window (amplitude level)
* ``diff_thres``   - threshold-crossing counts of |first differences| (impulse level)
"""

from __future__ import annotations

from dataclasses import dataclass
from typing import Literal, Sequence

import numpy as np
from numpy.lib.stride_tricks import sliding_window_view

from .core import DataError
from .preprocess import clip_impulses, first_diff, minmax_normalize

CrossMode = Literal["stride2", "every"]


@dataclass(frozen=True)
class WindowSpec:
    m: int
    s: int

    def __post_init__(self):
        if self.m < 2:
            raise DataError(f"window length must be >= 2, got {self.m}")
        if self.s < 1:
            raise DataError(f"stride must be >= 1, got {self.s}")

    def count(self, n: int) -> int:
        """Number of full windows over a sequence of length ``n``."""
        if n < self.m:
            raise DataError(f"sequence of length {n} is shorter than window {self.m}")
        return (n - self.m) // self.s + 1

    def windows(self, x: np.ndarray) -> np.ndarray:
        """``(h, m)`` read-only view of the windows; trailing leftovers dropped."""
        self.count(x.size)
        return sliding_window_view(x, self.m)[:: self.s]


SECTION_SIGN_WINDOW = WindowSpec(90, 30)
SWING_WINDOW = WindowSpec(90, 30)
DIFF_THRES_WINDOW = WindowSpec(180, 30)
DIFF_THRES_DIVS = (2, 3, 4)


def feature_lengths(n: int, section=SECTION_SIGN_WINDOW, swing_w=SWING_WINDOW,
                    diff_w=DIFF_THRES_WINDOW, n_divs: int = len(DIFF_THRES_DIVS)) -> tuple[int, int, int]:
    return 2 * section.count(n), swing_w.count(n - 1), n_divs * diff_w.count(n - 1)


# ------------------------------
# Section-sign
# ------------------------------

def window_center(windows: np.ndarray) -> np.ndarray:
    """Center value of each window: middle element for odd m, mean of the two middles for even m."""
    m = windows.shape[1]
    if m % 2:
        return windows[:, m // 2]
    return (windows[:, m // 2 - 1] + windows[:, m // 2]) / 2


def sign_signature(x, window: WindowSpec = SECTION_SIGN_WINDOW) -> np.ndarray:
    """Section-sign computation on an already clipped series.

    Output is ``[L1, R1, L2, R2, ...]`` where L/R are the mean signs of the
    left/right halves of each window relative to its center value. For odd m
    the center element itself belongs to neither half.
    """
    x = np.asarray(x, dtype=float)
    win = window.windows(x)
    diff = np.sign(win - window_center(win)[:, None])
    half = window.m // 2
    out = np.empty((win.shape[0], 2))
    out[:, 0] = diff[:, :half].mean(axis=1)
    out[:, 1] = diff[:, window.m - half:].mean(axis=1)
    return out.reshape(-1)


def section_sign(series, window: WindowSpec = SECTION_SIGN_WINDOW) -> np.ndarray:
    return sign_signature(clip_impulses(series), window)


# ------------------------------
# Swing
# ------------------------------

def swing_from_normalized(x, window: WindowSpec = SWING_WINDOW) -> np.ndarray:
    d = first_diff(x)
    p20, p80 = np.percentile(window.windows(d), [20, 80], axis=1)
    return p80 - p20


def swing(series, window: WindowSpec = SWING_WINDOW) -> np.ndarray:
    """Clip, min-max normalize, difference, then p80 - p20 per window."""
    return swing_from_normalized(minmax_normalize(clip_impulses(series)), window)


# ------------------------------
# Diff-Thres
# ------------------------------

def pair_starts(m: int, mode: CrossMode = "stride2") -> np.ndarray:
    """0-based index ``j`` of each compared pair ``(d[j], d[j+1])`` within a window.

    ``stride2`` walks non-overlapping pairs (0,1), (2,3), ...; ``every``
    takes every adjacent pair for 1-based k in [2, m-2].
    """
    if mode == "stride2":
        return np.arange(0, m - 1, 2)
    if mode == "every":
        return np.arange(0, max(m - 3, 0))
    raise DataError(f"unknown crossing mode {mode!r}")


def crossing_counts(d, window: WindowSpec = DIFF_THRES_WINDOW, div: float = 2,
                    mode: CrossMode = "stride2") -> np.ndarray:
    """Per-window number of pairs straddling ``max(window) / div`` strictly."""
    win = window.windows(np.asarray(d, dtype=float))
    thr = win.max(axis=1, keepdims=True) / div
    j = pair_starts(window.m, mode)
    a, b = win[:, j], win[:, j + 1]
    hits = ((a < thr) & (thr < b)) | ((b < thr) & (thr < a))
    return hits.sum(axis=1)


def diff_thres_counts(series, window: WindowSpec = DIFF_THRES_WINDOW,
                      divs: Sequence[float] = DIFF_THRES_DIVS,
                      mode: CrossMode = "stride2") -> np.ndarray:
    """Raw concatenated crossing counts ``[cross_div1 | cross_div2 | ...]``."""
    d = first_diff(series, absolute=True)
    return np.concatenate([crossing_counts(d, window, div, mode) for div in divs])


def diff_thres(series, window: WindowSpec = DIFF_THRES_WINDOW,
               divs: Sequence[float] = DIFF_THRES_DIVS,
               mode: CrossMode = "stride2") -> np.ndarray:
    """Crossing counts on the raw series, min-max normalized over the whole vector."""
    return minmax_normalize(diff_thres_counts(series, window, divs, mode).astype(float))
