import numpy as np
import pytest

import oracles
from cratos.core import DataError
from cratos.features import (
    WindowSpec,
    crossing_counts,
    diff_thres,
    diff_thres_counts,
    feature_lengths,
    pair_starts,
    section_sign,
    sign_signature,
    swing,
    swing_from_normalized,
)


def test_feature_lengths_for_default_windows():
    assert feature_lengths(5760) == (380, 189, 558)
    x = np.random.default_rng(0).normal(size=5760)
    assert (section_sign(x).size, swing(x).size, diff_thres(x).size) == (380, 189, 558)


def test_window_starts_enumerated():
    w = WindowSpec(90, 30)
    assert w.count(150) == 3
    x = np.arange(150.0)
    assert w.windows(x)[:, 0].tolist() == [0, 30, 60]
    assert section_sign(x).size == 6


def test_too_short_raises():
    with pytest.raises(DataError):
        section_sign(np.zeros(89))
    with pytest.raises(DataError):
        swing(np.zeros(90))
    with pytest.raises(DataError):
        diff_thres(np.zeros(180))


def test_section_sign_examples():
    assert section_sign(np.full(90, 3.0)).tolist() == [0.0, 0.0]
    assert section_sign(np.arange(90.0)).tolist() == [-1.0, 1.0]


def test_section_sign_matches_oracle_odd_and_even():
    rng = np.random.default_rng(5)
    for m in (7, 8, 90):
        x = rng.integers(0, 5, size=3 * m).astype(float)  # ties with the center happen
        got = sign_signature(x, WindowSpec(m, 3))
        x = [float(v) for v in x]
        assert got.tolist() == oracles.section_sign(x, m, 3)


def test_swing_examples():
    assert swing(np.full(200, 4.0)).tolist() == [0.0] * 4
    assert np.allclose(swing(np.arange(200.0)), 0.0)
    alt = np.tile([0.0, 1.0], 100)
    assert swing_from_normalized(alt).tolist() == [2.0] * 4


def test_swing_matches_percentile_oracle():
    rng = np.random.default_rng(6)
    x = rng.uniform(size=300)
    d = list(np.diff(x))
    want = [oracles.percentile(w, 80) - oracles.percentile(w, 20) for w in oracles.windows(d, 90, 30)]
    np.testing.assert_allclose(swing_from_normalized(x), want, rtol=0, atol=1e-14)


def test_pair_starts():
    assert pair_starts(6, "stride2").tolist() == [0, 2, 4]
    assert pair_starts(6, "every").tolist() == [0, 1, 2]
    with pytest.raises(DataError):
        pair_starts(6, "odd")


def test_isolated_spike_crossings():
    # flat 181-point series with one spike: |D| has two adjacent 10s
    x = np.zeros(181)
    x[91] = 10.0
    d = np.abs(np.diff(x))
    assert np.flatnonzero(d).tolist() == [90, 91]
    w = WindowSpec(180, 30)
    for div in (2, 3, 4):
        # stride2 pairs (90,91) hold both 10s: no straddle; (88,89) and (92,93) are 0s
        assert crossing_counts(d, w, div, "stride2").tolist() == [0]
        # every: pairs (89,90) rises through the threshold, (91,92) falls through it
        assert crossing_counts(d, w, div, "every").tolist() == [2]
    x[92] = 10.0  # plateau of two: |D| = 10 at 90 and 92, pairs (90,91), (92,93) straddle
    d = np.abs(np.diff(x))
    assert crossing_counts(d, w, 2, "stride2").tolist() == [2]


def test_constant_series_diff_thres_is_zero():
    assert diff_thres(np.full(400, 2.0)).tolist() == [0.0] * 3 * 8


def test_diff_thres_layout_is_concatenated_by_div():
    rng = np.random.default_rng(7)
    x = rng.normal(size=400)
    d = np.abs(np.diff(x))
    w = WindowSpec(180, 30)
    counts = diff_thres_counts(x)
    parts = np.split(counts, 3)
    for part, div in zip(parts, (2, 3, 4)):
        assert np.array_equal(part, crossing_counts(d, w, div))


@pytest.mark.parametrize("mode", ["stride2", "every"])
def test_crossing_counter_matches_brute_force(mode):
    rng = np.random.default_rng(11)
    for _ in range(50):
        n = int(rng.integers(10, 200))
        m = int(rng.integers(2, n + 1))
        s = int(rng.integers(1, 20))
        d = list(np.abs(rng.normal(size=n)))
        for div in (2, 3, 4):
            want = [oracles.crossing_count(win, div, mode) for win in oracles.windows(d, m, s)]
            assert crossing_counts(np.array(d), WindowSpec(m, s), div, mode).tolist() == want
