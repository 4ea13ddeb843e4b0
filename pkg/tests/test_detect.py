import numpy as np
import pytest

from cratos.core import DataError
from cratos.detect import (
    DetectorParams,
    PipelineConfig,
    _rolling_mean_std,
    dynamic_threshold,
    global_steep,
    global_threshold,
    local_steep,
    run_pipeline,
)
from cratos.preprocess import SmoothKind

P = DetectorParams()


def test_global_threshold_single_spike():
    # n points, one spike of 100: |100 - mean| = 100(n-1)/n and std = 100 sqrt(n-1)/n,
    # so the spike exceeds 3 std exactly when sqrt(n-1) > 3
    x = np.zeros(50)
    x[17] = 100.0
    assert global_threshold(x, P).tolist() == [17]
    x = np.zeros(10)
    x[3] = 100.0
    assert global_threshold(x, P).tolist() == []
    assert global_threshold(np.full(20, 4.0), P).tolist() == []


def test_global_threshold_sensitivity_monotone():
    x = np.random.default_rng(0).standard_t(3, size=500)
    low = set(global_threshold(x, DetectorParams(2.0)).tolist())
    high = set(global_threshold(x, DetectorParams(4.0)).tolist())
    assert high <= low


def test_dynamic_threshold():
    base = np.tile([1.0, 5.0, 2.0, 8.0], 5)
    p = DetectorParams(period=4)
    assert dynamic_threshold(base, p).tolist() == []
    x = base.copy()
    x[14] = 30.0  # phase 2, history (2, 2, 2): median 2, MAD 0
    assert dynamic_threshold(x, p).tolist() == [14]
    # period = length / 2: only the second half is eligible
    y = np.arange(10.0)
    assert dynamic_threshold(y, DetectorParams(period=5)).min() >= 5
    with pytest.raises(DataError):
        dynamic_threshold(y, DetectorParams())


def test_dynamic_threshold_uses_mad():
    # history for phase 0 is (0, 1, 2, 3): median 1.5, MAD 1, scaled 1.4826
    x = np.zeros(10)
    x[[0, 2, 4, 6]] = [0, 1, 2, 3]
    x[8] = 1.5 + 3 * 1.4826 + 0.01
    assert 8 in dynamic_threshold(x, DetectorParams(3.0, period=2)).tolist()
    x[8] = 1.5 + 3 * 1.4826 - 0.01
    assert 8 not in dynamic_threshold(x, DetectorParams(3.0, period=2)).tolist()


def test_local_steep():
    assert local_steep(np.arange(100.0), DetectorParams(3.0, 10)).tolist() == []
    x = np.zeros(50)
    x[30:] = 1.0
    assert local_steep(x, DetectorParams(3.0, 10)).tolist() == [30]


def test_local_steep_matches_naive_loop():
    rng = np.random.default_rng(8)
    x = np.cumsum(rng.normal(size=400))
    x[200] += 15
    for w in (3, 10, 57):
        d = np.diff(x)
        want = [i + 1 for i in range(w, d.size)
                if abs(d[i] - d[i - w:i].mean()) > 2.0 * max(d[i - w:i].std(), 1e-9)]
        assert local_steep(x, DetectorParams(2.0, w)).tolist() == want


def test_rolling_mean_std_flat_windows_are_exactly_zero():
    v = np.array([0.1] * 10 + [3.7] * 10)
    _, sd = _rolling_mean_std(v, 5)
    assert sd[0] == 0.0 and sd[-1] == 0.0


def test_global_steep():
    assert global_steep(np.full(30, 2.0), P).tolist() == []
    x = np.random.default_rng(1).normal(size=300)
    x[150:] += 100
    assert global_steep(x, P).tolist() == [150]


def test_pipeline_union_independent_of_order():
    x = np.random.default_rng(2).normal(size=300)
    x[100] = 25
    x[200:] += 30
    params = {"global_threshold": DetectorParams(3.0), "global_steep": DetectorParams(3.0)}
    a = run_pipeline(PipelineConfig(("global_threshold", "global_steep"), params), x)
    b = run_pipeline(PipelineConfig(("global_steep", "global_threshold"), params), x)
    assert np.array_equal(a.anomalous_indices, b.anomalous_indices)
    assert set(a.anomalous_indices) == set(a.per_detector["global_threshold"]) | set(a.per_detector["global_steep"])


def test_pipeline_config_validation_and_roundtrip(tmp_path):
    with pytest.raises(DataError):
        PipelineConfig((), {})
    with pytest.raises(DataError):
        PipelineConfig(("bogus",), {"bogus": P})
    with pytest.raises(DataError):
        PipelineConfig(("dynamic_threshold",), {"dynamic_threshold": P})
    with pytest.raises(DataError):
        DetectorParams(sensitivity=50.0)
    cfg = PipelineConfig(("dynamic_threshold", "local_steep"),
                         {"dynamic_threshold": DetectorParams(2.5, period=24), "local_steep": DetectorParams(4, 12)},
                         normalize=True, smoother=SmoothKind("median", 5))
    cfg.save(tmp_path / "p.json")
    assert PipelineConfig.load(tmp_path / "p.json") == cfg


def test_pipeline_rejects_windows_longer_than_series():
    cfg = PipelineConfig(("local_steep",), {"local_steep": DetectorParams(3.0, 50)})
    with pytest.raises(DataError):
        run_pipeline(cfg, np.zeros(20))


def test_result_csv(tmp_path):
    x = np.zeros(50)
    x[10] = 100
    cfg = PipelineConfig(("global_threshold", "global_steep"),
                         {"global_threshold": P, "global_steep": P})
    res = run_pipeline(cfg, x)
    res.save_csv(tmp_path / "r.csv")
    assert (tmp_path / "r.csv").read_text().splitlines() == [
        "index,detector", "10,global_threshold", "10,global_steep", "11,global_steep"]
