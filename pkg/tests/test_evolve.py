import json

import numpy as np
import pytest

from cratos.core import AnomalyLabels, ClusterCode, DataError, Entry, LabeledDataset, TimeSeries
from cratos.datagen import generate_dataset
from cratos.evolve import (
    Choice,
    EvolutionConfig,
    Flag,
    Gene,
    Genome,
    Numeric,
    OrderedSubset,
    decode,
    default_space,
    evolve,
    evolve_per_cluster,
    fitness,
    init_gene,
    init_genome,
    mutate_gene,
    mutate_genome,
    series_passes,
    should_mutate,
)

N = 10_000


def test_flag_init_is_fair():
    rng = np.random.default_rng(0)
    hits = sum(init_gene(Flag(), rng).value for _ in range(N))
    assert abs(hits / N - 0.5) <= 0.02


@pytest.mark.parametrize("rate", [0.05, 0.3, 0.7, 0.95])
def test_literal_selection_mutation_frequency(rate):
    rng = np.random.default_rng(int(rate * 100))
    freq = np.mean([should_mutate(rng.random(), rate) for _ in range(N)])
    assert abs(freq - (1 - rate)) <= 0.02
    flipped = np.mean([should_mutate(rng.random(), rate, literal=False) for _ in range(N)])
    assert abs(flipped - rate) <= 0.02


def test_selection_gene_reinitialized_at_expected_rate():
    # a choice over 1000 options: a redraw almost never repeats the old value
    spec = Choice(tuple(range(1000)))
    rng = np.random.default_rng(3)
    gene = Gene(spec, 0, 0.3)
    changed = np.mean([mutate_gene(gene, rng).value != 0 for _ in range(N)])
    assert abs(changed - 0.7 * 0.999) <= 0.02


def test_numeric_mutation_is_normal_around_value():
    spec = Numeric(-1000.0, 1000.0)
    rng = np.random.default_rng(4)
    gene = Gene(spec, 10.0, 1.0)
    vals = np.array([mutate_gene(gene, rng).value for _ in range(N)])
    assert abs(vals.mean() - 10.0) <= 0.05
    assert abs(vals.std() - 1.0) <= 0.03


def test_rates_mutate_with_meta_rate_and_stay_positive():
    spec = Numeric(0.0, 10.0)
    rng = np.random.default_rng(5)
    gene = Gene(spec, 5.0, 0.5)
    rates = np.array([mutate_gene(gene, rng, meta_rate=0.1).rate for _ in range(N)])
    assert abs(rates.mean() - 0.5) <= 0.01
    assert abs(rates.std() - 0.1) <= 0.01
    sel = Gene(Flag(), True, 0.5)
    sel_rates = [mutate_gene(sel, rng, meta_rate=5.0).rate for _ in range(1000)]
    assert all(0 < r < 1 for r in sel_rates)


def test_numeric_clamps_and_rounds():
    spec = Numeric(3, 10, integer=True)
    rng = np.random.default_rng(6)
    gene = Gene(spec, 10, 5.0)
    vals = [mutate_gene(gene, rng).value for _ in range(500)]
    assert all(isinstance(v, int) and 3 <= v <= 10 for v in vals)


def test_mutated_genomes_always_decode():
    space = default_space(500)
    rng = np.random.default_rng(7)
    g = init_genome(space, rng)
    for _ in range(300):
        g = mutate_genome(g, rng)
        cfg = decode(g)
        assert cfg.detectors


def test_genome_roundtrip():
    g = init_genome(default_space(1000), np.random.default_rng(8), uid=4)
    back = Genome.from_dict(json.loads(json.dumps(g.to_dict())))
    assert back.values() == g.values()
    assert decode(back) == decode(g)


# ------------------------------
# pass criterion
# ------------------------------

def test_pass_criterion():
    seg = AnomalyLabels(((10, 20),))
    assert series_passes(np.array([], dtype=int), AnomalyLabels(), 5)
    assert not series_passes(np.array([], dtype=int), seg, 5)
    assert not series_passes(np.array([3]), AnomalyLabels(), 5)
    assert series_passes(np.array([15]), seg, 5)
    assert not series_passes(np.array([16]), seg, 5)  # start + tolerance + 1: late
    assert not series_passes(np.array([12, 25]), seg, 5)  # false alarm outside
    assert series_passes(np.array([12, 19]), seg, 5)


def _toy_dataset(n=6, length=400, seed=0):
    rng = np.random.default_rng(seed)
    entries = []
    for _ in range(n):
        x = rng.normal(size=length)
        start = int(rng.integers(50, 300))
        x[start:start + 30] += 12
        entries.append(Entry(TimeSeries(x), AnomalyLabels(((start, start + 31),))))
    return LabeledDataset(tuple(entries))


def test_fitness_requires_labels():
    data = LabeledDataset((Entry(TimeSeries(np.zeros(50))),))
    g = init_genome(default_space(50), np.random.default_rng(0))
    with pytest.raises(DataError):
        fitness(g, data)


def test_evolution_config_validation():
    with pytest.raises(DataError):
        EvolutionConfig(10, 4, 5, 3)
    with pytest.raises(DataError):
        EvolutionConfig(10, 0, 10, 3)


def test_elitism_and_population_invariants():
    data = _toy_dataset()
    res = evolve(EvolutionConfig(16, 4, 12, 8, seed=1), data)
    best = [h[1] for h in res.history]
    assert len(best) == 8
    assert all(b >= a for a, b in zip(best, best[1:]))
    assert res.best.fitness == best[-1]
    assert all(h[2] <= h[1] for h in res.history)


def test_degenerate_space_gives_constant_history():
    space = {
        "normalize": Choice((False,)),
        "smoother.kind": Choice(("mean",)),
        "smoother.half_window": Numeric(0, 0, integer=True),
        "detectors": OrderedSubset(("global_steep",)),
        "global_steep.sensitivity": Numeric(3.0, 3.0),
    }
    res = evolve(EvolutionConfig(6, 2, 4, 4), _toy_dataset(), space=space)
    assert len({(h[1], h[2]) for h in res.history}) == 1


def test_evolve_is_deterministic_and_worker_independent():
    data = _toy_dataset(seed=3)
    cfg = EvolutionConfig(10, 3, 7, 4, seed=9)
    a = evolve(cfg, data)
    b = evolve(cfg, data)
    c = evolve(cfg, data, workers=2)
    assert a.best.to_dict() == b.best.to_dict() == c.best.to_dict()
    assert a.history == b.history == c.history


def test_per_cluster_and_only_filter():
    data = generate_dataset(2, 1440, seed=4, anomalies=1)
    codes = [e.code for e in data]
    cfg = EvolutionConfig(6, 2, 4, 2)
    res = evolve_per_cluster(cfg, data, codes)
    assert sorted(res) == ClusterCode.all()
    one = evolve_per_cluster(cfg, data, codes, only=ClusterCode.parse("TFT"))
    assert list(one) == [ClusterCode.parse("TFT")]
    assert one[ClusterCode.parse("TFT")].best.to_dict() == res[ClusterCode.parse("TFT")].best.to_dict()
    with pytest.raises(DataError):
        evolve_per_cluster(cfg, data, codes[:-1])


def test_result_files(tmp_path):
    res = evolve(EvolutionConfig(6, 2, 4, 3), _toy_dataset())
    res.save(tmp_path / "g.json", tmp_path / "h.csv")
    lines = (tmp_path / "h.csv").read_text().splitlines()
    assert lines[0] == "generation,best,mean" and len(lines) == 4
    assert "pipeline" in json.loads((tmp_path / "g.json").read_text())
