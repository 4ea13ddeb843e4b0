"""Domain types and file I/O shared across the pipeline."""

from __future__ import annotations

import csv
import json
import math
from dataclasses import dataclass, field
from pathlib import Path
from typing import Iterable, Iterator, Optional

import numpy as np


class CratosError(Exception):
    """Base class for all errors raised by this package."""


class DataError(CratosError, ValueError):
    """Input data is malformed or violates a documented invariant."""


class SeriesParseError(DataError):
    def __init__(self, path, line: int, text: str):
        super().__init__(f"{path}: line {line}: cannot parse {text!r} as a number")
        self.path = path
        self.line = line


# ------------------------------
# Types
# ------------------------------

@dataclass(frozen=True)
class TimeSeries:
    """Uniformly sampled univariate series. Values are finite and read-only."""

    values: np.ndarray
    name: str = ""

    def __post_init__(self):
        arr = np.array(self.values, dtype=float, copy=True).reshape(-1)
        if arr.size == 0:
            raise DataError("empty series")
        if not np.all(np.isfinite(arr)):
            bad = int(np.flatnonzero(~np.isfinite(arr))[0])
            raise DataError(f"non-finite value at index {bad}")
        arr.setflags(write=False)
        object.__setattr__(self, "values", arr)

    def __len__(self) -> int:
        return self.values.size

    def __array__(self, dtype=None, copy=None):
        if dtype is None:
            return self.values
        return self.values.astype(dtype)

    @property
    def length(self) -> int:
        return self.values.size


@dataclass(frozen=True)
class AnomalyLabels:
    """Half-open ``[start, end)`` index intervals, one per anomalous episode."""

    segments: tuple[tuple[int, int], ...] = ()

    def __post_init__(self):
        segs = tuple((int(a), int(b)) for a, b in self.segments)
        prev_end = 0
        for start, end in segs:
            if start < 0 or end <= start:
                raise DataError(f"invalid segment [{start}, {end})")
            if start < prev_end:
                raise DataError("segments must be sorted and non-overlapping")
            prev_end = end
        object.__setattr__(self, "segments", segs)

    def __len__(self) -> int:
        return len(self.segments)

    def __iter__(self) -> Iterator[tuple[int, int]]:
        return iter(self.segments)

    def check_fits(self, length: int) -> None:
        if self.segments and self.segments[-1][1] > length:
            raise DataError(f"label segment {self.segments[-1]} exceeds series length {length}")

    def mask(self, length: int) -> np.ndarray:
        out = np.zeros(length, dtype=bool)
        for start, end in self.segments:
            out[start:end] = True
        return out


@dataclass(frozen=True, order=True)
class ClusterCode:
    """Leaf identity of the three-level tree, printed as e.g. ``"TFT"``.

    Bits in order: similar interval tendency (periodic), large amplitude,
    dense impulses.
    """

    periodic: bool
    large_amplitude: bool
    dense_impulses: bool

    def __str__(self) -> str:
        return "".join("T" if b else "F" for b in self.bits)

    @property
    def bits(self) -> tuple[bool, bool, bool]:
        return (self.periodic, self.large_amplitude, self.dense_impulses)

    @classmethod
    def parse(cls, text: str) -> "ClusterCode":
        text = text.strip().upper()
        if len(text) != 3 or any(c not in "TF" for c in text):
            raise DataError(f"unknown cluster code {text!r}; expected three of T/F, e.g. 'TTF'")
        return cls(*(c == "T" for c in text))

    @classmethod
    def all(cls) -> list["ClusterCode"]:
        """The eight codes in FFF, FFT, ..., TTT order."""
        return [cls(bool(i & 4), bool(i & 2), bool(i & 1)) for i in range(8)]


@dataclass(frozen=True)
class Entry:
    series: TimeSeries
    labels: Optional[AnomalyLabels] = None
    code: Optional[ClusterCode] = None
    source: str = ""


@dataclass(frozen=True)
class LabeledDataset:
    entries: tuple[Entry, ...]
    common_length: int = field(init=False)

    def __post_init__(self):
        entries = tuple(self.entries)
        if not entries:
            raise DataError("dataset is empty")
        first = entries[0]
        for e in entries[1:]:
            if len(e.series) != len(first.series):
                raise DataError(
                    f"length mismatch: {first.source or 'entry 0'} has {len(first.series)} points, "
                    f"{e.source or 'another entry'} has {len(e.series)}"
                )
        for e in entries:
            if e.labels is not None:
                e.labels.check_fits(len(e.series))
        object.__setattr__(self, "entries", entries)
        object.__setattr__(self, "common_length", len(first.series))

    def __len__(self) -> int:
        return len(self.entries)

    def __iter__(self) -> Iterator[Entry]:
        return iter(self.entries)

    def matrix(self) -> np.ndarray:
        return np.stack([e.series.values for e in self.entries])

    def subset(self, indices: Iterable[int]) -> "LabeledDataset":
        return LabeledDataset(tuple(self.entries[i] for i in indices))


# ------------------------------
# Series / labels CSV
# ------------------------------

def _format_float(v: float) -> str:
    return format(float(v), ".17g")


def load_series(path) -> TimeSeries:
    """Read a series CSV: one value per row, optional ``value`` header.

    Rows with two fields are read as ``timestamp,value``; the timestamp is
    dropped.
    """
    path = Path(path)
    values: list[float] = []
    with path.open(newline="") as fh:
        for lineno, row in enumerate(csv.reader(fh), start=1):
            if not row or all(not c.strip() for c in row):
                continue
            if len(row) > 2:
                raise SeriesParseError(path, lineno, ",".join(row))
            text = row[-1].strip()
            if lineno == 1 and not values and text.lower() == "value":
                continue
            try:
                v = float(text)
            except ValueError:
                raise SeriesParseError(path, lineno, text) from None
            if not math.isfinite(v):
                raise DataError(f"{path}: line {lineno}: non-finite value {text!r}")
            values.append(v)
    if not values:
        raise DataError(f"{path}: empty series")
    return TimeSeries(np.asarray(values), name=path.stem)


def save_series(series, path) -> None:
    path = Path(path)
    path.parent.mkdir(parents=True, exist_ok=True)
    with path.open("w", newline="") as fh:
        fh.write("value\n")
        for v in np.asarray(series, dtype=float):
            fh.write(_format_float(v) + "\n")


def load_labels(path) -> AnomalyLabels:
    path = Path(path)
    segs = []
    with path.open(newline="") as fh:
        for lineno, row in enumerate(csv.reader(fh), start=1):
            if not row:
                continue
            if lineno == 1 and [c.strip().lower() for c in row] == ["start", "end"]:
                continue
            if len(row) != 2:
                raise SeriesParseError(path, lineno, ",".join(row))
            try:
                segs.append((int(row[0]), int(row[1])))
            except ValueError:
                raise SeriesParseError(path, lineno, ",".join(row)) from None
    return AnomalyLabels(tuple(segs))


def save_labels(labels: AnomalyLabels, path) -> None:
    path = Path(path)
    path.parent.mkdir(parents=True, exist_ok=True)
    with path.open("w", newline="") as fh:
        fh.write("start,end\n")
        for start, end in labels:
            fh.write(f"{start},{end}\n")


# ------------------------------
# Dataset manifest
# ------------------------------

def load_dataset(manifest) -> LabeledDataset:
    """Load a JSON manifest ``[{"series": ..., "labels": ..., "code": ...}, ...]``.

    Relative paths resolve against the manifest's directory.
    """
    manifest = Path(manifest)
    if not manifest.exists():
        raise DataError(f"manifest not found: {manifest}")
    try:
        items = json.loads(manifest.read_text())
    except json.JSONDecodeError as exc:
        raise DataError(f"{manifest}: invalid JSON: {exc}") from None
    if not isinstance(items, list):
        raise DataError(f"{manifest}: expected a JSON array")
    base = manifest.parent
    entries = []
    for i, item in enumerate(items):
        if not isinstance(item, dict) or "series" not in item:
            raise DataError(f"{manifest}: item {i} lacks a 'series' path")
        src = item["series"]
        series = load_series(base / src)
        labels = load_labels(base / item["labels"]) if item.get("labels") else None
        code = ClusterCode.parse(item["code"]) if item.get("code") else None
        entries.append(Entry(series, labels, code, source=src))
    if not entries:
        raise DataError(f"{manifest}: dataset is empty")
    return LabeledDataset(tuple(entries))


def save_dataset(dataset: LabeledDataset, out_dir) -> Path:
    """Write series/labels CSVs grouped by truth code plus ``manifest.json``."""
    out_dir = Path(out_dir)
    out_dir.mkdir(parents=True, exist_ok=True)
    counters: dict[str, int] = {}
    items = []
    for entry in dataset:
        group = str(entry.code) if entry.code is not None else "unlabeled"
        n = counters.get(group, 0)
        counters[group] = n + 1
        rel = f"{group}/series_{n:04d}.csv"
        save_series(entry.series, out_dir / rel)
        item = {"series": rel}
        if entry.labels is not None:
            lrel = f"{group}/labels_{n:04d}.csv"
            save_labels(entry.labels, out_dir / lrel)
            item["labels"] = lrel
        if entry.code is not None:
            item["code"] = str(entry.code)
        items.append(item)
    path = out_dir / "manifest.json"
    path.write_text(json.dumps(items, indent=1) + "\n")
    return path

