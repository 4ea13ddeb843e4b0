"""Clustering precision/recall/F1 per tree level and detection pass rate."""

from __future__ import annotations

import json
from dataclasses import dataclass
from pathlib import Path
from typing import Sequence

import numpy as np

from .core import ClusterCode, DataError

LEVEL_NAMES = ("section_sign", "swing", "diff_thres")


@dataclass(frozen=True)
class StateScore:
    precision: float
    recall: float
    f1: float
    support: int


def prf(tp: int, fp: int, fn: int) -> tuple[float, float, float]:
    precision = tp / (tp + fp) if tp + fp else 0.0
    recall = tp / (tp + fn) if tp + fn else 0.0
    f1 = 2 * precision * recall / (precision + recall) if precision + recall > 0 else 0.0
    return precision, recall, f1


@dataclass(frozen=True)
class ClusteringReport:
    levels: dict  # level name -> {"T": StateScore, "F": StateScore}
    confusion: np.ndarray  # truth code index (row) x predicted code index (col), FFF..TTT

    def score(self, level: str, state: str) -> StateScore:
        return self.levels[level][state]

    def min_f1(self) -> float:
        return min(s.f1 for states in self.levels.values() for s in states.values())

    def to_dict(self) -> dict:
        codes = [str(c) for c in ClusterCode.all()]
        return {
            "levels": {
                name: {state: vars(s) for state, s in states.items()}
                for name, states in self.levels.items()
            },
            "confusion": {"codes": codes, "rows_truth_cols_predicted": self.confusion.tolist()},
        }

    def to_text(self) -> str:
        lines = [f"{'level':<14}{'state':<7}{'precision':>10}{'recall':>10}{'F1':>10}{'support':>9}"]
        for name, states in self.levels.items():
            for state in ("T", "F"):
                s = states[state]
                lines.append(f"{name:<14}{state:<7}{s.precision:>10.4f}{s.recall:>10.4f}{s.f1:>10.4f}{s.support:>9d}")
        codes = [str(c) for c in ClusterCode.all()]
        lines.append("")
        lines.append("truth\\pred " + "".join(f"{c:>6}" for c in codes))
        for c, row in zip(codes, self.confusion):
            lines.append(f"{c:<11}" + "".join(f"{int(v):>6d}" for v in row))
        return "\n".join(lines) + "\n"

    def save(self, json_path, text_path=None) -> None:
        Path(json_path).parent.mkdir(parents=True, exist_ok=True)
        Path(json_path).write_text(json.dumps(self.to_dict(), indent=1, sort_keys=True) + "\n")
        if text_path is not None:
            Path(text_path).write_text(self.to_text())


def clustering_report(predicted: Sequence[ClusterCode], truth: Sequence[ClusterCode]) -> ClusteringReport:
    """Per-level scores with T as the positive class, reported for both states."""
    predicted, truth = list(predicted), list(truth)
    if len(predicted) != len(truth):
        raise DataError(f"{len(predicted)} predicted codes for {len(truth)} truth codes")
    if not truth:
        raise DataError("no codes to evaluate")
    P = np.array([c.bits for c in predicted], dtype=bool)
    Y = np.array([c.bits for c in truth], dtype=bool)
    levels = {}
    for k, name in enumerate(LEVEL_NAMES):
        p, y = P[:, k], Y[:, k]
        states = {}
        for state, pos in (("T", True), ("F", False)):
            tp = int(np.sum((p == pos) & (y == pos)))
            fp = int(np.sum((p == pos) & (y != pos)))
            fn = int(np.sum((p != pos) & (y == pos)))
            states[state] = StateScore(*prf(tp, fp, fn), support=int(np.sum(y == pos)))
        levels[name] = states
    index = {c: i for i, c in enumerate(ClusterCode.all())}
    confusion = np.zeros((8, 8), dtype=int)
    for t, p in zip(truth, predicted):
        confusion[index[t], index[p]] += 1
    return ClusteringReport(levels, confusion)


def pass_rate(pass_count: int, total: int) -> float:
    if total < 1:
        raise DataError("pass rate needs at least one series")
    if not 0 <= pass_count <= total:
        raise DataError(f"pass count {pass_count} outside [0, {total}]")
    return pass_count / total
