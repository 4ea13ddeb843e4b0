"""Synthetic KPI generator: archetype baselines plus Gaussian and salt-and-pepper noise."""

from __future__ import annotations

import json
from dataclasses import asdict, dataclass, field
from pathlib import Path
from typing import Literal, Optional

import numpy as np

from .core import AnomalyLabels, ClusterCode, DataError, Entry, LabeledDataset, TimeSeries
from .preprocess import SmoothKind, smooth

BaselineKind = Literal["sinusoid", "piecewise_flat", "random_walk_smoothed"]


@dataclass(frozen=True)
class NoiseSpec:
    gaussian_sigma: float = 0.0  # fraction of baseline amplitude
    impulse_prob: float = 0.0
    impulse_magnitude: float = 1.0  # multiple of baseline amplitude

    def __post_init__(self):
        if self.gaussian_sigma < 0:
            raise DataError("gaussian_sigma must be non-negative")
        if not 0.0 <= self.impulse_prob <= 1.0:
            raise DataError("impulse_prob must lie in [0, 1]")
        if self.impulse_magnitude <= 0:
            raise DataError("impulse_magnitude must be positive")


@dataclass(frozen=True)
class ArchetypeSpec:
    code: ClusterCode
    length: int = 5760
    baseline: BaselineKind = "sinusoid"
    period: int = 1440
    phase: float = 0.0  # fraction of a period
    amplitude: float = 1.0
    level: float = 10.0
    n_levels: int = 6
    ramp: tuple = (151, 401)
    noise: NoiseSpec = field(default_factory=NoiseSpec)

    def __post_init__(self):
        if self.length < 2:
            raise DataError("archetype length must be >= 2")
        if (self.baseline == "sinusoid") != self.code.periodic:
            raise DataError(f"code {self.code} requires "
                            f"{'a sinusoid' if self.code.periodic else 'a non-periodic'} baseline")


@dataclass(frozen=True)
class GeneratorParams:
    """Archetype knobs shared by every code; the 10:1 amplitude ratio lives here."""

    period: int = 1440
    period_jitter: float = 0.03
    phase_jitter: float = 0.03
    large_sigma: float = 0.05
    small_sigma: float = 0.005
    dense_prob: float = 0.05
    sparse_prob: float = 0.0005
    impulse_magnitude: float = 1.0
    level_range: tuple = (5.0, 20.0)
    amplitude_range: tuple = (0.8, 1.25)
    nonperiodic_baselines: tuple = ("piecewise_flat", "random_walk_smoothed")

    @classmethod
    def from_json(cls, path) -> "GeneratorParams":
        path = Path(path)
        if not path.exists():
            raise DataError(f"generator spec not found: {path}")
        try:
            raw = json.loads(path.read_text())
            known = {k: v for k, v in raw.items() if k in cls.__dataclass_fields__}
            unknown = set(raw) - set(known)
            if unknown:
                raise DataError(f"{path}: unknown generator fields {sorted(unknown)}")
            for k in ("level_range", "amplitude_range", "nonperiodic_baselines"):
                if k in known:
                    known[k] = tuple(known[k])
            return cls(**known)
        except (json.JSONDecodeError, TypeError) as exc:
            raise DataError(f"{path}: invalid generator spec: {exc}") from None

    def to_dict(self) -> dict:
        return asdict(self)


# ------------------------------
# Baselines
# ------------------------------

def extract_baseline(series, mean_window: int, median_window: int) -> np.ndarray:
    """Median smoothing (drops impulses) followed by mean smoothing (flattens noise)."""
    x = smooth(series, SmoothKind("median", median_window))
    return smooth(x, SmoothKind("mean", mean_window))


def _unit_baseline(spec: ArchetypeSpec, rng: np.random.Generator) -> np.ndarray:
    """Baseline shape spanning roughly [-1, 1] before amplitude and level."""
    n = spec.length
    t = np.arange(n)
    if spec.baseline == "sinusoid":
        return np.sin(2 * np.pi * (t / spec.period + spec.phase))
    if spec.baseline == "piecewise_flat":
        cuts = np.sort(rng.choice(np.arange(1, n), size=min(spec.n_levels - 1, n - 1), replace=False))
        heights = rng.uniform(-1.0, 1.0, size=cuts.size + 1)
        steps = heights[np.searchsorted(cuts, t, side="right")]
        # level changes are ramps, not jumps, so they stay distinct from planted level shifts
        ramp = int(rng.integers(spec.ramp[0], spec.ramp[1] + 1)) | 1
        return smooth(steps, SmoothKind("mean", min(ramp, n if n % 2 else n - 1)))
    if spec.baseline == "random_walk_smoothed":
        walk = np.cumsum(rng.standard_normal(n))
        w = min(n - 1 if n % 2 == 0 else n, 181)
        walk = smooth(walk, SmoothKind("mean", w if w % 2 else w - 1))
        span = walk.max() - walk.min()
        return (walk - walk.min()) / span * 2 - 1 if span > 0 else np.zeros(n)
    raise DataError(f"unknown baseline {spec.baseline!r}")


def synthesize(spec: ArchetypeSpec, rng: np.random.Generator) -> tuple[TimeSeries, ClusterCode]:
    """Baseline + Gaussian noise + salt-and-pepper impulses.

    Each point independently becomes an impulse with ``impulse_prob``:
    the value is replaced by ``baseline +/- impulse_magnitude * amplitude``.
    """
    base = spec.level + spec.amplitude * _unit_baseline(spec, rng)
    x = base.copy()
    noise = spec.noise
    if noise.gaussian_sigma > 0:
        x += rng.normal(0.0, noise.gaussian_sigma * spec.amplitude, size=x.size)
    if noise.impulse_prob > 0:
        hit = rng.random(x.size) < noise.impulse_prob
        signs = rng.choice([-1.0, 1.0], size=x.size)
        x[hit] = base[hit] + signs[hit] * noise.impulse_magnitude * spec.amplitude
    return TimeSeries(x), spec.code


def archetype(code: ClusterCode, length: int, rng: np.random.Generator,
              params: GeneratorParams = GeneratorParams()) -> ArchetypeSpec:
    """Draw one jittered archetype spec for ``code``."""
    noise = NoiseSpec(
        gaussian_sigma=params.large_sigma if code.large_amplitude else params.small_sigma,
        impulse_prob=params.dense_prob if code.dense_impulses else params.sparse_prob,
        impulse_magnitude=params.impulse_magnitude,
    )
    level = float(rng.uniform(*params.level_range))
    amplitude = float(rng.uniform(*params.amplitude_range))
    if code.periodic:
        period = int(round(params.period * (1 + rng.uniform(-params.period_jitter, params.period_jitter))))
        phase = float(rng.uniform(-params.phase_jitter, params.phase_jitter))
        return ArchetypeSpec(code, length, "sinusoid", period=max(period, 2), phase=phase,
                             amplitude=amplitude, level=level, noise=noise)
    kind = params.nonperiodic_baselines[int(rng.integers(len(params.nonperiodic_baselines)))]
    n_levels = int(rng.integers(3, 9))
    return ArchetypeSpec(code, length, kind, amplitude=amplitude, level=level,
                         n_levels=n_levels, noise=noise)


def generate_dataset(per_cluster: int, length: int, seed: int = 0,
                     params: GeneratorParams = GeneratorParams(),
                     anomalies: int = 0) -> LabeledDataset:
    """``per_cluster`` series for each of the 8 codes, in FFF..TTT order.

    Every series draws from its own child seed so the output is stable under
    changes of ``per_cluster`` for the earlier entries of each code.
    """
    if per_cluster < 1:
        raise DataError("per_cluster must be >= 1")
    root = np.random.SeedSequence(seed)
    code_seeds = root.spawn(8)
    entries = []
    for code, cseed in zip(ClusterCode.all(), code_seeds):
        for s in cseed.spawn(per_cluster):
            rng = np.random.default_rng(s)
            spec = archetype(code, length, rng, params)
            series, _ = synthesize(spec, rng)
            labels = None
            if anomalies:
                series, labels = plant_anomalies(series, anomalies, rng, noise_scale=_noise_scale(spec))
            entries.append(Entry(series, labels or AnomalyLabels(), code))
    return LabeledDataset(tuple(entries))


def _noise_scale(spec: ArchetypeSpec) -> float:
    return max(spec.noise.gaussian_sigma, 1e-3) * spec.amplitude


# ------------------------------
# Planted anomalies
# ------------------------------

def robust_noise_scale(series) -> float:
    """Noise sigma estimate from first differences (MAD, Gaussian-consistent)."""
    d = np.diff(np.asarray(series, dtype=float))
    mad = np.median(np.abs(d - np.median(d)))
    return float(1.4826 * mad / np.sqrt(2))


def plant_anomalies(series, count: int, rng: np.random.Generator,
                    magnitude: float = 10.0, noise_scale: Optional[float] = None,
                    min_duration: int = 20, max_duration: int = 60,
                    gap: int = 30):
    """Inject ``count`` level-shift or spike-burst episodes.

    Each episode offsets a run of points by ``magnitude`` noise sigmas (sign
    random). The label covers the run plus the point after it, where the
    series steps back to normal.
    """
    x = np.array(series, dtype=float)
    n = x.size
    if count < 0:
        raise DataError("anomaly count must be >= 0")
    if count == 0:
        return TimeSeries(x), AnomalyLabels()
    scale = robust_noise_scale(x) if noise_scale is None else noise_scale
    scale = max(scale, 1e-6)
    durations = rng.integers(min_duration, max_duration + 1, size=count)
    # each segment occupies duration + 1 labelled points, separated by >= gap
    need = int(durations.sum() + count + gap * (count + 1))
    slack = n - need
    if slack < 0:
        raise DataError(f"{count} anomalies of up to {max_duration} points do not fit in {n} points")
    extra = np.sort(rng.integers(0, slack + 1, size=count))
    segments = []
    pos = gap
    prev = 0
    for k in range(count):
        pos += int(extra[k] - prev)
        prev = int(extra[k])
        start, dur = pos, int(durations[k])
        sign = rng.choice([-1.0, 1.0])
        if rng.random() < 0.5:
            offset = np.full(dur, magnitude * scale)
        else:
            offset = magnitude * scale * rng.uniform(1.0, 1.5, size=dur)
        x[start:start + dur] += sign * offset
        segments.append((start, start + dur + 1))
        pos = start + dur + 1 + gap
    return TimeSeries(x), AnomalyLabels(tuple(segments))

