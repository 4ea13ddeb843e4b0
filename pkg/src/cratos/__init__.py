"""Hierarchical KPI clustering with per-cluster evolved anomaly detectors."""

__version__ = "0.1.0"

from .core import (
    AnomalyLabels,
    ClusterCode,
    CratosError,
    DataError,
    Entry,
    LabeledDataset,
    TimeSeries,
    load_dataset,
    load_series,
    save_dataset,
)

__all__ = [
    "AnomalyLabels",
    "ClusterCode",
    "CratosError",
    "DataError",
    "Entry",
    "LabeledDataset",
    "TimeSeries",
    "load_dataset",
    "load_series",
    "save_dataset",
]
