"""Configurable detection pipeline: normalize, smooth, then a union of detectors."""

from __future__ import annotations

import csv
import json
from dataclasses import dataclass, field
from pathlib import Path
from typing import Callable, Optional

import numpy as np
from scipy.ndimage import maximum_filter1d, minimum_filter1d

from .core import DataError
from .preprocess import SmoothKind, first_diff, minmax_normalize, smooth

EPS = 1e-9
MAD_SCALE = 1.4826

DETECTORS = ("global_threshold", "dynamic_threshold", "local_steep", "global_steep")

SENSITIVITY_RANGE = (0.5, 10.0)
WINDOW_RANGE = (3, 360)
MIN_PERIOD = 2


@dataclass(frozen=True)
class DetectorParams:
    sensitivity: float = 3.0
    window: int = 3
    period: Optional[int] = None

    def __post_init__(self):
        lo, hi = SENSITIVITY_RANGE
        if not lo <= self.sensitivity <= hi:
            raise DataError(f"sensitivity {self.sensitivity} outside [{lo}, {hi}]")
        lo, hi = WINDOW_RANGE
        if not lo <= self.window <= hi:
            raise DataError(f"window {self.window} outside [{lo}, {hi}]")
        if self.period is not None and self.period < MIN_PERIOD:
            raise DataError(f"period must be >= {MIN_PERIOD}, got {self.period}")

    def to_dict(self) -> dict:
        d = {"sensitivity": self.sensitivity, "window": self.window}
        if self.period is not None:
            d["period"] = self.period
        return d


# ------------------------------
# Detectors
# ------------------------------

def global_threshold(x, p: DetectorParams) -> np.ndarray:
    """Points further than ``sensitivity`` standard deviations from the mean."""
    x = np.asarray(x, dtype=float)
    sd = x.std()
    if sd == 0:
        return np.empty(0, dtype=int)
    return np.flatnonzero(np.abs(x - x.mean()) > p.sensitivity * sd)


def dynamic_threshold(x, p: DetectorParams) -> np.ndarray:
    """Compare each point with the same phase of all earlier periods.

    Flags ``i`` when ``|x[i] - median(H)| > sensitivity * (1.4826 * MAD(H) + eps)``
    with ``H = {x[i - period], x[i - 2 period], ...}``. The first period is
    never flagged.
    """
    x = np.asarray(x, dtype=float)
    if p.period is None:
        raise DataError("dynamic_threshold requires a period")
    period = p.period
    n = x.size
    rows = -(-n // period)
    grid = np.full(rows * period, np.nan)
    grid[:n] = x
    grid = grid.reshape(rows, period)
    flagged = np.zeros(rows * period, dtype=bool).reshape(rows, period)
    for r in range(1, rows):
        hist = grid[:r]
        med = np.median(hist, axis=0)
        mad = np.median(np.abs(hist - med), axis=0)
        cur = grid[r]
        with np.errstate(invalid="ignore"):
            flagged[r] = np.abs(cur - med) > p.sensitivity * (MAD_SCALE * mad + EPS)
    return np.flatnonzero(flagged.reshape(-1)[:n])


def _rolling_mean_std(v: np.ndarray, w: int) -> tuple[np.ndarray, np.ndarray]:
    """Mean and population std of every length-``w`` window, via centred cumulative sums."""
    c = v - v.mean()
    s1 = np.concatenate(([0.0], np.cumsum(c)))
    s2 = np.concatenate(([0.0], np.cumsum(c * c)))
    m = (s1[w:] - s1[:-w]) / w
    var = (s2[w:] - s2[:-w]) / w - m * m
    # exactly flat windows must give exactly zero spread
    span = sliding_max_minus_min(v, w)
    var = np.where(span == 0, 0.0, np.maximum(var, 0.0))
    return m + v.mean(), np.sqrt(var)


def sliding_max_minus_min(v: np.ndarray, w: int) -> np.ndarray:
    return maximum_filter1d(v, w, origin=-(w // 2))[: v.size - w + 1] - \
        minimum_filter1d(v, w, origin=-(w // 2))[: v.size - w + 1]


def local_steep(x, p: DetectorParams) -> np.ndarray:
    """Steps that stand out against the preceding ``window`` differences.

    For difference ``d[i]`` the context is ``d[i-window : i]``; index ``i+1``
    is flagged when ``|d[i] - mean(ctx)| > sensitivity * max(std(ctx), eps)``.
    Differences without a full context window are never flagged.
    """
    d = first_diff(x)
    w = p.window
    if d.size <= w:
        return np.empty(0, dtype=int)
    mu, sd = _rolling_mean_std(d[:-1], w)  # entry k summarizes d[k : k + w], the context of d[k + w]
    sd = np.maximum(sd, EPS)
    cur = d[w:]
    hits = np.abs(cur - mu) > p.sensitivity * sd
    return np.flatnonzero(hits) + w + 1


def global_steep(x, p: DetectorParams) -> np.ndarray:
    """Steps whose difference deviates from the mean difference by > sensitivity * std."""
    d = first_diff(x)
    sd = max(d.std(), EPS)
    return np.flatnonzero(np.abs(d - d.mean()) > p.sensitivity * sd) + 1


DETECTOR_FUNCS: dict[str, Callable[[np.ndarray, DetectorParams], np.ndarray]] = {
    "global_threshold": global_threshold,
    "dynamic_threshold": dynamic_threshold,
    "local_steep": local_steep,
    "global_steep": global_steep,
}


# ------------------------------
# Pipeline
# ------------------------------

@dataclass(frozen=True)
class PipelineConfig:
    detectors: tuple[str, ...]
    params: dict = field(default_factory=dict)
    normalize: bool = False
    smoother: SmoothKind = SmoothKind("mean", 1)

    def __post_init__(self):
        dets = tuple(self.detectors)
        if not dets:
            raise DataError("pipeline needs at least one detector")
        if len(set(dets)) != len(dets):
            raise DataError("detectors must not repeat")
        for name in dets:
            if name not in DETECTOR_FUNCS:
                raise DataError(f"unknown detector {name!r}")
            if name not in self.params:
                raise DataError(f"detector {name!r} has no parameters")
        if "dynamic_threshold" in dets and self.params["dynamic_threshold"].period is None:
            raise DataError("dynamic_threshold requires a period")
        object.__setattr__(self, "detectors", dets)

    def to_dict(self) -> dict:
        return {
            "normalize": self.normalize,
            "smoother": {"kind": self.smoother.kind, "window": self.smoother.window},
            "detectors": list(self.detectors),
            "params": {name: self.params[name].to_dict() for name in self.detectors},
        }

    @classmethod
    def from_dict(cls, d: dict) -> "PipelineConfig":
        try:
            params = {name: DetectorParams(**v) for name, v in d["params"].items()}
            return cls(
                detectors=tuple(d["detectors"]),
                params=params,
                normalize=bool(d["normalize"]),
                smoother=SmoothKind(d["smoother"]["kind"], int(d["smoother"]["window"])),
            )
        except (KeyError, TypeError) as exc:
            raise DataError(f"malformed pipeline config: {exc}") from None

    def save(self, path) -> None:
        Path(path).write_text(json.dumps(self.to_dict(), indent=1, sort_keys=True) + "\n")

    @classmethod
    def load(cls, path) -> "PipelineConfig":
        return cls.from_dict(json.loads(Path(path).read_text()))


@dataclass(frozen=True)
class DetectionResult:
    anomalous_indices: np.ndarray
    per_detector: dict

    def rows(self):
        """``(index, detector)`` pairs sorted by index then pipeline order."""
        out = []
        for name, idx in self.per_detector.items():
            out.extend((int(i), name) for i in idx)
        order = {name: k for k, name in enumerate(self.per_detector)}
        return sorted(out, key=lambda r: (r[0], order[r[1]]))

    def save_csv(self, path) -> None:
        path = Path(path)
        path.parent.mkdir(parents=True, exist_ok=True)
        with path.open("w", newline="") as fh:
            w = csv.writer(fh, lineterminator="\n")
            w.writerow(["index", "detector"])
            w.writerows(self.rows())


def check_applicable(config: PipelineConfig, n: int) -> None:
    if n < max(config.smoother.window, 2):
        raise DataError(f"smoother window {config.smoother.window} needs at least that many points, got {n}")
    for name in config.detectors:
        p = config.params[name]
        if p.window > n:
            raise DataError(f"{name} window {p.window} exceeds series length {n}")
        if name == "dynamic_threshold" and 2 * p.period > n:
            raise DataError(f"dynamic_threshold period {p.period} needs 2*period <= length {n}")


def preprocess_for(config: PipelineConfig, x: np.ndarray) -> np.ndarray:
    if config.normalize:
        x = minmax_normalize(x)
    return smooth(x, config.smoother)


def run_detectors(config: PipelineConfig, y: np.ndarray) -> DetectionResult:
    """Detector stage only, on an already preprocessed series."""
    per = {name: DETECTOR_FUNCS[name](y, config.params[name]) for name in config.detectors}
    union = np.unique(np.concatenate(list(per.values())))
    return DetectionResult(union.astype(int), per)


def run_pipeline(config: PipelineConfig, series) -> DetectionResult:
    x = np.asarray(series, dtype=float)
    check_applicable(config, x.size)
    return run_detectors(config, preprocess_for(config, x))
