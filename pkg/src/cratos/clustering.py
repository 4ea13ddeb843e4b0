"""Two-means clustering and the three-level feature tree."""

from __future__ import annotations

import json
from dataclasses import dataclass, field
from pathlib import Path
from typing import Optional, Sequence

import numpy as np

from .core import ClusterCode, DataError, LabeledDataset, TimeSeries
from .features import (
    DIFF_THRES_DIVS,
    DIFF_THRES_WINDOW,
    SECTION_SIGN_WINDOW,
    SWING_WINDOW,
    CrossMode,
    WindowSpec,
    diff_thres_counts,
    section_sign,
    swing,
)
from .preprocess import first_diff, minmax_normalize

N_RESTARTS = 10
MAX_ITER = 300
IMPULSE_Z = 6.0


# ------------------------------
# k-means, k = 2
# ------------------------------

@dataclass(frozen=True)
class KMeansModel:
    centroids: np.ndarray  # (2, dimension)
    inertia: float

    def __post_init__(self):
        c = np.array(self.centroids, dtype=float)
        if c.ndim != 2 or c.shape[0] != 2:
            raise DataError("a two-means model needs exactly 2 centroids")
        c.setflags(write=False)
        object.__setattr__(self, "centroids", c)

    @property
    def dimension(self) -> int:
        return self.centroids.shape[1]

    def to_dict(self) -> dict:
        return {"centroids": self.centroids.tolist(), "inertia": self.inertia}

    @classmethod
    def from_dict(cls, d: dict) -> "KMeansModel":
        return cls(np.asarray(d["centroids"], dtype=float), float(d["inertia"]))


def _as_matrix(vectors) -> np.ndarray:
    try:
        X = np.asarray(vectors, dtype=float)
    except ValueError:
        raise DataError("feature vectors have mismatched dimensions") from None
    if X.ndim == 1:
        X = X[:, None]
    if X.ndim != 2:
        raise DataError("feature vectors have mismatched dimensions")
    return X


def _sq_dists(X: np.ndarray, centroids: np.ndarray) -> np.ndarray:
    return ((X[:, None, :] - centroids[None, :, :]) ** 2).sum(axis=2)


def _assign(X: np.ndarray, centroids: np.ndarray) -> np.ndarray:
    d = _sq_dists(X, centroids)
    # ties go to centroid 0
    return (d[:, 1] < d[:, 0]).astype(int)


def partition_inertia(X: np.ndarray, labels: np.ndarray) -> float:
    """Sum of squared distances of each point to its cluster mean."""
    total = 0.0
    for j in (0, 1):
        members = X[labels == j]
        if len(members):
            total += float(((members - members.mean(axis=0)) ** 2).sum())
    return total


def _means(X: np.ndarray, labels: np.ndarray) -> np.ndarray:
    return np.stack([X[labels == j].mean(axis=0) for j in (0, 1)])


def _repair_empty(X: np.ndarray, labels: np.ndarray) -> np.ndarray:
    for j in (0, 1):
        if not np.any(labels == j):
            other = X[labels != j].mean(axis=0)
            far = int(np.argmax(((X - other) ** 2).sum(axis=1)))
            labels = labels.copy()
            labels[far] = j
    return labels


def _plusplus_init(X: np.ndarray, rng: np.random.Generator) -> np.ndarray:
    first = X[rng.integers(len(X))]
    d2 = ((X - first) ** 2).sum(axis=1)
    total = d2.sum()
    if total > 0:
        second = X[rng.choice(len(X), p=d2 / total)]
    else:
        second = X[rng.integers(len(X))]
    return np.stack([first, second])


def lloyd(X: np.ndarray, init: np.ndarray, max_iter: int = MAX_ITER):
    """Run Lloyd iterations from ``init``.

    Returns ``(labels, centroids, history)`` where ``history`` holds the
    partition inertia after every update step.
    """
    assigned = _assign(X, init)
    history = []
    labels = assigned
    centroids = init
    for _ in range(max_iter):
        labels = _repair_empty(X, assigned)
        centroids = _means(X, labels)
        history.append(partition_inertia(X, labels))
        new = _assign(X, centroids)
        if np.array_equal(new, assigned):
            break
        assigned = new
    return labels, centroids, history


def transfer_refine(X: np.ndarray, labels: np.ndarray) -> np.ndarray:
    """Single-point transfers (Hartigan) that strictly lower the partition inertia.

    Moving ``x`` from cluster a to b changes the inertia by
    ``nb/(nb+1) |x-cb|^2 - na/(na-1) |x-ca|^2``. A Lloyd fixed point can
    still admit such a move; the result is a partition where every point is
    strictly nearer its own mean, so nearest-centroid prediction reproduces it.
    """
    labels = labels.copy()
    counts = np.array([np.sum(labels == 0), np.sum(labels == 1)])
    sums = np.stack([X[labels == 0].sum(axis=0), X[labels == 1].sum(axis=0)])
    moved = True
    while moved:
        moved = False
        for i in range(len(X)):
            a = labels[i]
            b = 1 - a
            na, nb = counts[a], counts[b]
            if na < 2:
                continue
            loss = na / (na - 1) * float(((X[i] - sums[a] / na) ** 2).sum())
            gain = nb / (nb + 1) * float(((X[i] - sums[b] / nb) ** 2).sum()) if nb else 0.0
            if gain < loss * (1 - 1e-12):
                labels[i] = b
                counts[a] -= 1
                counts[b] += 1
                sums[a] -= X[i]
                sums[b] += X[i]
                moved = True
    return labels


def kmeans_fit(vectors, seed: int = 0, n_restarts: int = N_RESTARTS,
               max_iter: int = MAX_ITER) -> KMeansModel:
    """Best of ``n_restarts`` k-means++ seeded Lloyd runs, each polished by point transfers."""
    X = _as_matrix(vectors)
    if len(X) < 2:
        raise DataError("two-means needs at least 2 vectors")
    rng = np.random.default_rng(seed)
    best: Optional[tuple[float, np.ndarray]] = None
    for _ in range(n_restarts):
        labels, centroids, _ = lloyd(X, _plusplus_init(X, rng), max_iter)
        refined = transfer_refine(X, labels)
        if not np.array_equal(refined, labels):
            labels, centroids = refined, _means(X, refined)
        inertia = partition_inertia(X, labels)
        if best is None or inertia < best[0]:
            best = (inertia, centroids)
    return KMeansModel(best[1], best[0])


def kmeans_predict(model: KMeansModel, v) -> int:
    v = np.asarray(v, dtype=float).reshape(-1)
    if v.size != model.dimension:
        raise DataError(f"vector dimension {v.size} does not match model dimension {model.dimension}")
    return int(_assign(v[None, :], model.centroids)[0])


# ------------------------------
# Feature tree
# ------------------------------

LEVELS = ("section_sign", "swing", "diff_thres")


@dataclass(frozen=True)
class FeatureConfig:
    section_window: WindowSpec = SECTION_SIGN_WINDOW
    swing_window: WindowSpec = SWING_WINDOW
    diff_window: WindowSpec = DIFF_THRES_WINDOW
    divs: tuple = DIFF_THRES_DIVS
    cross_mode: CrossMode = "stride2"

    def to_dict(self) -> dict:
        return {
            "section_window": [self.section_window.m, self.section_window.s],
            "swing_window": [self.swing_window.m, self.swing_window.s],
            "diff_window": [self.diff_window.m, self.diff_window.s],
            "divs": list(self.divs),
            "cross_mode": self.cross_mode,
        }

    @classmethod
    def from_dict(cls, d: dict) -> "FeatureConfig":
        return cls(WindowSpec(*d["section_window"]), WindowSpec(*d["swing_window"]),
                   WindowSpec(*d["diff_window"]), tuple(d["divs"]), d["cross_mode"])


@dataclass(frozen=True)
class SeriesFeatures:
    section_sign: np.ndarray
    swing: np.ndarray
    diff_thres: np.ndarray
    impulse_rate: float

    def level(self, i: int) -> np.ndarray:
        return (self.section_sign, self.swing, self.diff_thres)[i]


def impulse_rate(series, z: float = IMPULSE_Z) -> float:
    """Fraction of first differences that are robust outliers (beyond z scaled MADs)."""
    d = first_diff(series)
    med = np.median(d)
    scale = 1.4826 * np.median(np.abs(d - med))
    if scale == 0:
        return float(np.mean(d != med))
    return float(np.mean(np.abs(d - med) > z * scale))


def extract_features(series, cfg: FeatureConfig = FeatureConfig()) -> SeriesFeatures:
    x = np.asarray(series, dtype=float)
    return SeriesFeatures(
        section_sign(x, cfg.section_window),
        swing(x, cfg.swing_window),
        minmax_normalize(diff_thres_counts(x, cfg.diff_window, cfg.divs, cfg.cross_mode).astype(float)),
        impulse_rate(x),
    )


def _semantic_score(level: int, feats: SeriesFeatures) -> float:
    """Per-series score whose larger values mean the T side of a level."""
    if level == 0:
        return float(np.mean(np.abs(feats.section_sign)))
    if level == 1:
        return float(np.mean(feats.swing))
    return feats.impulse_rate


@dataclass(frozen=True)
class Node:
    """One split of the tree. ``model is None`` marks a pass-through split."""

    model: Optional[KMeansModel]
    true_branch: int = 1

    def route(self, v) -> int:
        if self.model is None:
            return 0
        return kmeans_predict(self.model, v)

    def bit(self, branch: int) -> bool:
        return branch == self.true_branch


@dataclass(frozen=True)
class ClusterTree:
    """Seven splits keyed by branch path: ``()``, ``(b1,)``, ``(b1, b2)``."""

    nodes: dict
    length: int
    features: FeatureConfig = field(default_factory=FeatureConfig)

    def route(self, feats: SeriesFeatures) -> tuple[int, int, int]:
        path: tuple = ()
        for level in range(3):
            path = path + (self.nodes[path].route(feats.level(level)),)
        return path

    def decode(self, path: Sequence[int]) -> ClusterCode:
        bits = [self.nodes[tuple(path[:lvl])].bit(path[lvl]) for lvl in range(3)]
        return ClusterCode(*bits)

    def to_dict(self) -> dict:
        nodes = []
        for path in sorted(self.nodes, key=lambda p: (len(p), p)):
            node = self.nodes[path]
            nodes.append({
                "path": list(path),
                "level": LEVELS[len(path)],
                "true_branch": node.true_branch,
                "model": node.model.to_dict() if node.model is not None else None,
            })
        return {"length": self.length, "features": self.features.to_dict(), "nodes": nodes}

    @classmethod
    def from_dict(cls, d: dict) -> "ClusterTree":
        nodes = {}
        for item in d["nodes"]:
            model = KMeansModel.from_dict(item["model"]) if item["model"] is not None else None
            nodes[tuple(item["path"])] = Node(model, int(item["true_branch"]))
        if len(nodes) != 7:
            raise DataError(f"cluster tree must have 7 splits, found {len(nodes)}")
        return cls(nodes, int(d["length"]), FeatureConfig.from_dict(d["features"]))

    def save(self, path) -> None:
        Path(path).parent.mkdir(parents=True, exist_ok=True)
        Path(path).write_text(json.dumps(self.to_dict(), indent=1, sort_keys=True) + "\n")

    @classmethod
    def load(cls, path) -> "ClusterTree":
        path = Path(path)
        if not path.exists():
            raise DataError(f"model not found: {path}")
        try:
            return cls.from_dict(json.loads(path.read_text()))
        except (KeyError, TypeError, json.JSONDecodeError) as exc:
            raise DataError(f"{path}: malformed cluster tree: {exc}") from None


def _fit_node(level: int, members: list[int], feats: list[SeriesFeatures], seed: int):
    """Fit one split over ``members``; returns the node and each member's branch."""
    if len(members) < 2:
        return Node(None), [0] * len(members)
    X = np.stack([feats[i].level(level) for i in members])
    model = kmeans_fit(X, seed=seed)
    branches = [int(b) for b in _assign(X, model.centroids)]
    scores = np.array([_semantic_score(level, feats[i]) for i in members])
    b = np.array(branches)
    mean0 = scores[b == 0].mean() if np.any(b == 0) else -np.inf
    mean1 = scores[b == 1].mean() if np.any(b == 1) else -np.inf
    return Node(model, 1 if mean1 > mean0 else 0), branches


def hierarchical_fit(dataset: LabeledDataset, seed: int = 0,
                     features: FeatureConfig = FeatureConfig()):
    """Fit the tree; returns ``(tree, codes)`` with one code per training series."""
    feats = [extract_features(e.series, features) for e in dataset]
    seeds = np.random.SeedSequence(seed).generate_state(7)
    nodes = {}
    paths: list[tuple] = [() for _ in feats]
    groups: dict[tuple, list[int]] = {(): list(range(len(feats)))}
    k = 0
    for level in range(3):
        next_groups: dict[tuple, list[int]] = {}
        for prefix in sorted(groups) if level else [()]:
            members = groups.get(prefix, [])
            node, branches = _fit_node(level, members, feats, int(seeds[k]))
            k += 1
            nodes[prefix] = node
            for i, b in zip(members, branches):
                paths[i] = prefix + (b,)
            for b in (0, 1):
                next_groups[prefix + (b,)] = [i for i in members if paths[i] == prefix + (b,)]
        groups = next_groups
    tree = ClusterTree(nodes, dataset.common_length, features)
    return tree, [tree.decode(p) for p in paths]


def hierarchical_predict(tree: ClusterTree, series) -> ClusterCode:
    x = np.asarray(series, dtype=float)
    if x.size != tree.length:
        raise DataError(f"series length {x.size} does not match model training length {tree.length}")
    return tree.decode(tree.route(extract_features(x, tree.features)))
