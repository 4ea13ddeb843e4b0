"""Evolutionary search over detection-pipeline genomes.

Selection genes (choice, ordered subset, flag) mutate by re-initialization
when a uniform draw ``r`` exceeds the gene's rate. Numeric genes mutate by a
normal draw centred on the current value with the rate as standard
deviation. Every rate is itself a numeric quantity mutated the same way with
a fixed ``meta_rate`` that never changes.
"""

from __future__ import annotations

import json
import logging
from concurrent.futures import ProcessPoolExecutor
from dataclasses import dataclass, field, replace
from pathlib import Path
from typing import Optional, Sequence, Union

import numpy as np

from .core import ClusterCode, DataError, LabeledDataset
from .detect import (
    DETECTORS,
    SENSITIVITY_RANGE,
    WINDOW_RANGE,
    DetectorParams,
    PipelineConfig,
    check_applicable,
    preprocess_for,
    run_detectors,
    run_pipeline,
)
from .preprocess import SmoothKind

logger = logging.getLogger(__name__)

RATE_FLOOR = 1e-6
MAX_SMOOTH_HALF = 15


# ------------------------------
# Gene space
# ------------------------------

@dataclass(frozen=True)
class Choice:
    options: tuple

    def __post_init__(self):
        if not self.options:
            raise DataError("choice gene needs at least one option")


@dataclass(frozen=True)
class OrderedSubset:
    options: tuple

    def __post_init__(self):
        if not self.options:
            raise DataError("subset gene needs at least one option")


@dataclass(frozen=True)
class Flag:
    pass


@dataclass(frozen=True)
class Numeric:
    low: float
    high: float
    integer: bool = False
    rate_range: Optional[tuple] = None

    def __post_init__(self):
        if self.high < self.low:
            raise DataError(f"numeric gene range [{self.low}, {self.high}] is empty")
        if self.rate_range is None:
            span = max(self.high - self.low, 1.0)
            object.__setattr__(self, "rate_range", (span / 100, span / 10))

    def clamp(self, v: float):
        v = min(self.high, max(self.low, v))
        return int(round(v)) if self.integer else float(v)


GeneSpec = Union[Choice, OrderedSubset, Flag, Numeric]


def is_selection(spec: GeneSpec) -> bool:
    return not isinstance(spec, Numeric)


@dataclass(frozen=True)
class Gene:
    spec: GeneSpec
    value: object
    rate: float


def _draw_value(spec: GeneSpec, rng: np.random.Generator):
    if isinstance(spec, Choice):
        return spec.options[int(rng.integers(len(spec.options)))]
    if isinstance(spec, OrderedSubset):
        k = len(spec.options)
        mask = int(rng.integers(1, 2 ** k))  # uniform over non-empty subsets
        chosen = [o for i, o in enumerate(spec.options) if mask >> i & 1]
        return tuple(chosen[i] for i in rng.permutation(len(chosen)))
    if isinstance(spec, Flag):
        return bool(rng.integers(2))
    if isinstance(spec, Numeric):
        return spec.clamp(rng.uniform(spec.low, spec.high)) if spec.high > spec.low else spec.clamp(spec.low)
    raise TypeError(f"unknown gene spec {spec!r}")


def _rate_bounds(spec: GeneSpec) -> tuple[float, float]:
    if is_selection(spec):
        return RATE_FLOOR, 1.0 - RATE_FLOOR
    return max(spec.rate_range[0], RATE_FLOOR), float("inf")


def init_gene(spec: GeneSpec, rng: np.random.Generator) -> Gene:
    value = _draw_value(spec, rng)
    if is_selection(spec):
        rate = float(rng.uniform(0.0, 1.0))
    else:
        rate = float(rng.uniform(*spec.rate_range))
    lo, hi = _rate_bounds(spec)
    return Gene(spec, value, min(hi, max(lo, rate)))


def should_mutate(r: float, rate: float, literal: bool = True) -> bool:
    """Selection-gene mutation test: ``r > rate`` as written, or ``r < rate``."""
    return r > rate if literal else r < rate


def mutate_gene(gene: Gene, rng: np.random.Generator, meta_rate: float = 0.1,
                literal: bool = True) -> Gene:
    spec = gene.spec
    if is_selection(spec):
        r = rng.random()
        value = _draw_value(spec, rng) if should_mutate(r, gene.rate, literal) else gene.value
    else:
        value = spec.clamp(rng.normal(gene.value, gene.rate))
    lo, hi = _rate_bounds(spec)
    rate = min(hi, max(lo, float(rng.normal(gene.rate, meta_rate))))
    return Gene(spec, value, rate)


# ------------------------------
# Genome
# ------------------------------

@dataclass(frozen=True)
class Genome:
    genes: dict
    fitness: Optional[int] = None
    uid: int = 0

    def values(self) -> dict:
        return {name: g.value for name, g in self.genes.items()}

    def to_dict(self) -> dict:
        genes = {}
        for name, g in self.genes.items():
            spec = g.spec
            item = {"kind": type(spec).__name__, "value": list(g.value) if isinstance(g.value, tuple) else g.value,
                    "rate": g.rate}
            if isinstance(spec, (Choice, OrderedSubset)):
                item["options"] = list(spec.options)
            if isinstance(spec, Numeric):
                item.update(low=spec.low, high=spec.high, integer=spec.integer, rate_range=list(spec.rate_range))
            genes[name] = item
        return {"uid": self.uid, "fitness": self.fitness, "genes": genes,
                "pipeline": decode(self).to_dict()}

    @classmethod
    def from_dict(cls, d: dict) -> "Genome":
        genes = {}
        for name, item in d["genes"].items():
            kind = item["kind"]
            if kind == "Choice":
                spec, value = Choice(tuple(item["options"])), item["value"]
            elif kind == "OrderedSubset":
                spec, value = OrderedSubset(tuple(item["options"])), tuple(item["value"])
            elif kind == "Flag":
                spec, value = Flag(), bool(item["value"])
            elif kind == "Numeric":
                spec = Numeric(item["low"], item["high"], item["integer"], tuple(item["rate_range"]))
                value = item["value"]
            else:
                raise DataError(f"unknown gene kind {kind!r}")
            genes[name] = Gene(spec, value, float(item["rate"]))
        return cls(genes, d.get("fitness"), int(d.get("uid", 0)))


def default_space(length: int) -> dict:
    """Gene space covering every pipeline field for series of ``length`` points."""
    if length < 6:
        raise DataError(f"series of length {length} are too short to evolve a pipeline")
    space = {
        "normalize": Flag(),
        "smoother.kind": Choice(("mean", "median")),
        "smoother.half_window": Numeric(0, min(MAX_SMOOTH_HALF, (length - 1) // 2), integer=True),
        "detectors": OrderedSubset(DETECTORS),
    }
    for name in DETECTORS:
        space[f"{name}.sensitivity"] = Numeric(*SENSITIVITY_RANGE)
    space["local_steep.window"] = Numeric(WINDOW_RANGE[0], min(WINDOW_RANGE[1], length - 2), integer=True)
    space["dynamic_threshold.period"] = Numeric(2, length // 2, integer=True)
    return space


def init_genome(space: dict, rng: np.random.Generator, uid: int = 0) -> Genome:
    return Genome({name: init_gene(spec, rng) for name, spec in space.items()}, None, uid)


def mutate_genome(g: Genome, rng: np.random.Generator, meta_rate: float = 0.1,
                  literal: bool = True, uid: Optional[int] = None) -> Genome:
    genes = {name: mutate_gene(gene, rng, meta_rate, literal) for name, gene in g.genes.items()}
    return Genome(genes, None, g.uid if uid is None else uid)


def decode(g: Genome) -> PipelineConfig:
    v = g.values()
    params = {}
    for name in v["detectors"]:
        kw = {"sensitivity": float(v[f"{name}.sensitivity"])}
        if name == "local_steep":
            kw["window"] = int(v["local_steep.window"])
        if name == "dynamic_threshold":
            kw["period"] = int(v["dynamic_threshold.period"])
        params[name] = DetectorParams(**kw)
    return PipelineConfig(
        detectors=tuple(v["detectors"]),
        params=params,
        normalize=bool(v["normalize"]),
        smoother=SmoothKind(v["smoother.kind"], 2 * int(v["smoother.half_window"]) + 1),
    )


# ------------------------------
# Objective
# ------------------------------

def series_passes(flagged: np.ndarray, labels, delay_tolerance: int) -> bool:
    """No missed anomaly, no late report, no false alarm.

    Each segment needs a flagged index ``i`` with ``start <= i <= start +
    delay_tolerance`` (and inside the segment); every flagged index must lie
    inside some segment.
    """
    flagged = np.asarray(flagged, dtype=int)
    inside = np.zeros(flagged.size, dtype=bool)
    for start, end in labels:
        in_seg = (flagged >= start) & (flagged < end)
        inside |= in_seg
        if not np.any(in_seg & (flagged <= start + delay_tolerance)):
            return False
    return bool(np.all(inside))


def _require_labels(data: LabeledDataset) -> None:
    for i, e in enumerate(data):
        if e.labels is None:
            raise DataError(f"entry {e.source or i} has no anomaly labels")


def config_fitness(config: PipelineConfig, data: LabeledDataset, delay_tolerance: int = 5,
                   cache: Optional[dict] = None) -> int:
    """Pass count of ``config`` over ``data``.

    ``cache`` (if given) memoizes preprocessed series by entry and
    preprocessing settings; it must only be reused with the same ``data``.
    """
    _require_labels(data)
    if cache is None:
        return sum(series_passes(run_pipeline(config, e.series).anomalous_indices, e.labels, delay_tolerance)
                   for e in data)
    passed = 0
    pre_key = (config.normalize, config.smoother)
    for i, e in enumerate(data):
        y = cache.get((i, pre_key))
        if y is None:
            check_applicable(config, len(e.series))
            y = cache[(i, pre_key)] = preprocess_for(config, e.series.values)
        else:
            check_applicable(config, y.size)
        passed += series_passes(run_detectors(config, y).anomalous_indices, e.labels, delay_tolerance)
    return passed


def fitness(g: Genome, data: LabeledDataset, delay_tolerance: int = 5) -> int:
    """Number of series on which the decoded pipeline passes."""
    return config_fitness(decode(g), data, delay_tolerance)


# worker-process state, set once per pool
_POOL_DATA: Optional[LabeledDataset] = None
_POOL_DELAY = 5
_POOL_CACHE: dict = {}


def _pool_init(data: LabeledDataset, delay_tolerance: int) -> None:
    global _POOL_DATA, _POOL_DELAY, _POOL_CACHE
    _POOL_DATA, _POOL_DELAY, _POOL_CACHE = data, delay_tolerance, {}


def _pool_fitness(config_dict: dict) -> int:
    return config_fitness(PipelineConfig.from_dict(config_dict), _POOL_DATA, _POOL_DELAY, _POOL_CACHE)


# ------------------------------
# Evolution loop
# ------------------------------

@dataclass(frozen=True)
class EvolutionConfig:
    population: int = 200
    survivors: int = 40
    offspring: int = 160
    generations: int = 40
    seed: int = 0
    delay_tolerance: int = 5
    meta_rate: float = 0.1
    literal_rate: bool = True

    def __post_init__(self):
        if self.survivors < 1:
            raise DataError("survivors must be >= 1")
        if self.offspring < 0 or self.survivors + self.offspring != self.population:
            raise DataError(f"survivors ({self.survivors}) + offspring ({self.offspring}) "
                            f"must equal population ({self.population})")
        if self.generations < 1:
            raise DataError("generations must be >= 1")
        if self.delay_tolerance < 0:
            raise DataError("delay_tolerance must be >= 0")
        if self.meta_rate <= 0:
            raise DataError("meta_rate must be positive")


@dataclass
class EvolutionResult:
    best: Genome
    history: list = field(default_factory=list)  # (generation, best, mean)
    evaluations: int = 0

    def save(self, genome_path, history_path) -> None:
        Path(genome_path).parent.mkdir(parents=True, exist_ok=True)
        Path(genome_path).write_text(json.dumps(self.best.to_dict(), indent=1, sort_keys=True) + "\n")
        with Path(history_path).open("w") as fh:
            fh.write("generation,best,mean\n")
            for gen, best, mean in self.history:
                fh.write(f"{gen},{best},{format(mean, '.17g')}\n")


class _Evaluator:
    """Fitness with memoization on the decoded pipeline, optionally across processes."""

    def __init__(self, data: LabeledDataset, delay_tolerance: int, workers: int = 1):
        self.data = data
        self.delay_tolerance = delay_tolerance
        self.cache: dict[str, int] = {}
        self.preprocessed: dict = {}
        self.evaluations = 0
        self.pool = None
        if workers > 1:
            self.pool = ProcessPoolExecutor(max_workers=workers, initializer=_pool_init,
                                            initargs=(data, delay_tolerance))

    def __enter__(self):
        return self

    def __exit__(self, *exc):
        if self.pool is not None:
            self.pool.shutdown()

    def __call__(self, genomes: Sequence[Genome]) -> list[int]:
        keys, todo = [], {}
        for g in genomes:
            cfg = decode(g).to_dict()
            key = json.dumps(cfg, sort_keys=True)
            keys.append(key)
            if key not in self.cache and key not in todo:
                todo[key] = cfg
        if todo:
            self.evaluations += len(todo) * len(self.data)
            if self.pool is not None:
                scores = list(self.pool.map(_pool_fitness, todo.values(), chunksize=max(1, len(todo) // 32)))
            else:
                scores = [config_fitness(PipelineConfig.from_dict(c), self.data, self.delay_tolerance,
                                         self.preprocessed) for c in todo.values()]
            self.cache.update(zip(todo.keys(), scores))
        return [self.cache[k] for k in keys]


def evolve(cfg: EvolutionConfig, data: LabeledDataset, space: Optional[dict] = None,
           workers: int = 1, seed_sequence: Optional[np.random.SeedSequence] = None) -> EvolutionResult:
    """Elitist (survivors + offspring) evolution with clone-and-mutate reproduction.

    Generation ``g`` evaluates the whole population, records ``(g, best,
    mean)``, keeps the best ``survivors`` (ties by creation order) and refills
    with mutated clones of uniformly drawn survivors. Each genome's random
    stream is its own child seed, so results do not depend on ``workers``.
    """
    if len(data) == 0:
        raise DataError("cannot evolve on an empty dataset")
    _require_labels(data)
    space = default_space(data.common_length) if space is None else space
    root = seed_sequence if seed_sequence is not None else np.random.SeedSequence(cfg.seed)
    select_rng = np.random.default_rng(root.spawn(1)[0])
    next_uid = 0

    def child_rng():
        return np.random.default_rng(root.spawn(1)[0])

    population = []
    for _ in range(cfg.population):
        population.append(init_genome(space, child_rng(), uid=next_uid))
        next_uid += 1

    history = []
    with _Evaluator(data, cfg.delay_tolerance, workers) as evaluate:
        for gen in range(cfg.generations):
            pending = [i for i, g in enumerate(population) if g.fitness is None]
            for i, score in zip(pending, evaluate([population[i] for i in pending])):
                population[i] = replace(population[i], fitness=score)
            population.sort(key=lambda g: (-g.fitness, g.uid))
            scores = [g.fitness for g in population]
            history.append((gen, scores[0], float(np.mean(scores))))
            logger.info("generation %d: best %d mean %.2f", gen, scores[0], history[-1][2])
            if gen == cfg.generations - 1:
                break
            survivors = population[: cfg.survivors]
            children = []
            for _ in range(cfg.offspring):
                parent = survivors[int(select_rng.integers(len(survivors)))]
                children.append(mutate_genome(parent, child_rng(), cfg.meta_rate, cfg.literal_rate, uid=next_uid))
                next_uid += 1
            population = survivors + children
        evaluations = evaluate.evaluations
    return EvolutionResult(population[0], history, evaluations)


def evolve_per_cluster(cfg: EvolutionConfig, data: LabeledDataset, codes: Sequence[ClusterCode],
                       only: Optional[ClusterCode] = None, workers: int = 1) -> dict:
    """Evolve one pipeline per cluster code present in ``codes``.

    Returns ``{code: EvolutionResult}``; the seed for each code derives from
    ``cfg.seed`` and the code's position in FFF..TTT order.
    """
    if len(codes) != len(data):
        raise DataError("need one cluster code per series")
    results = {}
    for k, code in enumerate(ClusterCode.all()):
        if only is not None and code != only:
            continue
        members = [i for i, c in enumerate(codes) if c == code]
        if not members:
            continue
        seq = np.random.SeedSequence([cfg.seed, k])
        results[code] = evolve(cfg, data.subset(members), workers=workers, seed_sequence=seq)
    return results
