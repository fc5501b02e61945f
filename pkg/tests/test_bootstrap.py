import math

import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from mebns.autodiff import ParamStore
from mebns.bootstrap import (
    collect_meta,
    estimate_uncertainty,
    filter_hard,
    hard_count,
    infer_scores,
    mc_variance,
    write_uncertainty_csv,
)
from mebns.errors import ConfigError, RangeError
from mebns.model import encode, init_gcn
from mebns.samplers import SampleSet

from conftest import random_graph


def _samples(n, rng):
    return SampleSet.build(rng.integers(0, 50, n), rng.integers(0, 50, n), (rng.random(n) < 0.5).astype(float), 0)


def two_pass_variance(preds):
    preds = np.asarray(preds)
    out = np.empty(preds.shape[1])
    for j in range(preds.shape[1]):
        col = [float(x) for x in preds[:, j]]
        m = sum(col) / len(col)
        out[j] = sum((x - m) ** 2 for x in col) / len(col)
    return out


def test_filter_example():
    s = SampleSet.build([0, 1, 2, 3], [5, 6, 7, 8], [0, 0, 1, 0], 0)
    kept, thr = filter_hard(s, np.array([0.9, 0.2, 0.7, 0.4]), 0.5)
    assert kept.u.tolist() == [0, 2]
    assert thr == 0.7


def test_filter_beta_one_keeps_everything(rng):
    s = _samples(30, rng)
    kept, _ = filter_hard(s, rng.random(30), 1.0)
    assert np.array_equal(kept.u, s.u) and np.array_equal(kept.v, s.v)


def test_filter_037_on_1000(rng):
    s = _samples(1000, rng)
    sc = rng.random(1000)
    kept, thr = filter_hard(s, sc, 0.37)
    assert len(kept) == 370
    assert thr == np.sort(sc)[::-1][369]


def test_filter_ties_truncated_by_ids():
    s = SampleSet.build([3, 1, 2, 1], [0, 5, 0, 4], 0, 0)
    kept, _ = filter_hard(s, np.full(4, 0.5), 0.5)
    assert list(zip(kept.u.tolist(), kept.v.tolist())) == [(1, 5), (1, 4)]


def test_filter_rejects_empty_and_bad_beta(rng):
    s = _samples(3, rng)
    with pytest.raises(ConfigError):
        filter_hard(s, rng.random(3), 0.2)
    with pytest.raises(RangeError, match=r"beta must be in \(0,1\]"):
        filter_hard(s, rng.random(3), 1.5)


def test_filter_negatives_only(rng):
    s = SampleSet.build(np.arange(10), np.arange(10, 20), [1] * 4 + [0] * 6, 0)
    kept, _ = filter_hard(s, np.arange(10) / 10, 0.5, scope="negatives_only")
    assert int((kept.y == 1).sum()) == 4
    assert sorted(kept.u[kept.y == 0].tolist()) == [7, 8, 9]


def test_hard_count_float_guard():
    assert hard_count(0.29, 100) == 29
    assert hard_count(0.37, 1000) == 370


@settings(max_examples=60, deadline=None)
@given(st.integers(2, 200), st.sampled_from([0.1, 0.37, 0.5, 1.0]), st.integers(0, 2**31), st.booleans())
def test_property_filter_count_and_separation(n, beta, seed, coarse):
    rng = np.random.default_rng(seed)
    sc = rng.integers(0, 4, n) / 4 if coarse else rng.random(n)
    s = _samples(n, rng)
    k = math.floor(beta * n + 1e-9)
    if k < 1:
        with pytest.raises(ConfigError):
            filter_hard(s, sc, beta)
        return
    kept, thr = filter_hard(s, sc, beta)
    assert len(kept) == k
    mask = np.zeros(n, bool)
    order = sorted(range(n), key=lambda i: (-sc[i], s.u[i], s.v[i]))
    mask[order[:k]] = True
    assert np.array_equal(kept.u, s.u[mask]) and np.array_equal(kept.v, s.v[mask])
    assert sc[mask].min() >= (sc[~mask].max() if (~mask).any() else -1)


def test_infer_scores_orthogonal_and_hand(rng):
    g = random_graph(rng, 5, 0.5)
    theta = init_gcn(3, 0, hidden=4, out=3)
    s = SampleSet.build([0, 1, 4], [2, 3, 0], 1, 0)
    tab = infer_scores(theta, g, s)
    h = encode(g, theta)
    hand = [1 / (1 + math.exp(-float(h[a] @ h[b]))) for a, b in [(0, 2), (1, 3), (4, 0)]]
    assert np.allclose(tab.scores, hand, rtol=1e-13)
    assert infer_scores(theta, g, s).scores.tobytes() == tab.scores.tobytes()
    zero = ParamStore({"W1": np.zeros((3, 4)), "W2": np.zeros((4, 3))})
    assert np.all(infer_scores(zero, g, s).scores == 0.5)


def test_mc_variance_examples(rng):
    assert mc_variance(np.full((5, 3), 0.3)).tolist() == [0.0, 0.0, 0.0]
    assert mc_variance([[0.0], [1.0]])[0] == 0.25
    p = rng.random((20, 300))
    assert np.max(np.abs(mc_variance(p) - two_pass_variance(p))) < 1e-12
    assert np.allclose(mc_variance(p[::-1]), mc_variance(p), rtol=0, atol=1e-15)


def test_uncertainty_matches_recorded_predictions(rng):
    g = random_graph(rng, 12, 0.4)
    s = SampleSet.build(rng.integers(0, 12, 40), rng.integers(0, 12, 40), 0, 0)
    theta = init_gcn(3, 5, hidden=8, out=4)
    unc = estimate_uncertainty(theta, g, s, N=20, seed=3)
    assert unc.predictions.shape == (20, 40)
    assert np.max(np.abs(unc.values - two_pass_variance(unc.predictions))) < 1e-12
    assert np.all((unc.values >= 0) & (unc.values <= 0.25))
    assert all(0 <= r <= 1 for r in unc.rhos)
    again = estimate_uncertainty(theta, g, s, N=20, seed=3)
    assert again.values.tobytes() == unc.values.tobytes()
    with pytest.raises(RangeError):
        estimate_uncertainty(theta, g, s, N=1)


def test_zero_teacher_has_zero_uncertainty(rng):
    g = random_graph(rng, 10, 0.4)
    s = SampleSet.build(rng.integers(0, 10, 30), rng.integers(0, 10, 30), 0, 0)
    zero = ParamStore({"W1": np.zeros((3, 8)), "W2": np.zeros((8, 4))})
    assert np.all(estimate_uncertainty(zero, g, s, N=5, seed=0).values == 0)


def test_collect_meta_threshold_and_monotone(rng, tmp_path):
    s = SampleSet.build([0, 1], [2, 3], [1, 0], 0)
    kept = collect_meta(s, np.array([1e-6, 5e-5]), 2e-5)
    assert kept.u.tolist() == [0] and kept.y.tolist() == [1.0]
    assert len(collect_meta(s, np.zeros(2), 1e-9)) == 2
    with pytest.raises(ConfigError, match="tau"):
        collect_meta(s, np.array([1.0, 1.0]), 0.5)
    b = rng.random(50) * 1e-4
    big = _samples(50, rng)
    small_set = set(collect_meta(big, b, 3e-5).keys(50).tolist()) if (b < 3e-5).any() else set()
    assert small_set <= set(collect_meta(big, b, 6e-5).keys(50).tolist())


def test_uncertainty_csv(tmp_path, rng):
    g = random_graph(rng, 6, 0.5)
    s = SampleSet.build([0, 1], [2, 3], [1, 0], 0)
    unc = estimate_uncertainty(init_gcn(3, 0, hidden=4, out=3), g, s, N=3, seed=0)
    write_uncertainty_csv(tmp_path / "u.csv", s, unc, 1.0)
    lines = (tmp_path / "u.csv").read_text().splitlines()
    assert lines[0] == "u,v,y,B,meta" and len(lines) == 3
