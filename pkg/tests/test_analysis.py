import json
import math

import numpy as np
import pytest

from mebns.analysis import (
    EASY,
    HARD,
    NEITHER,
    ScoreLog,
    classify_samples,
    color_sample,
    landscape_terms,
    migration_matrix,
    verify_landscape_gap,
    write_theorem_report,
)
from mebns.errors import RangeError


def test_classify_hand_example():
    scores = [0.9, 0.4, 0.2, 0.1]
    cls = classify_samples(scores, [0, 0, 0, 0], threshold=0.5)
    assert cls.tolist() == [HARD, NEITHER, NEITHER, EASY]


def test_classify_no_hard_when_all_zero():
    cls = classify_samples([0.0, 0.0, 0.0, 0.7], [0, 0, 0, 1], threshold=0.3)
    assert HARD not in cls.tolist()
    assert cls.tolist()[3] == NEITHER


def test_classify_order_invariant(rng):
    s = rng.random(60)
    y = (rng.random(60) < 0.5).astype(int)
    u, v = np.arange(60), np.arange(60, 120)
    base = classify_samples(s, y, u=u, v=v)
    perm = rng.permutation(60)
    assert classify_samples(s[perm], y[perm], u=u[perm], v=v[perm]).tolist() == base[perm].tolist()


def test_classify_easy_bound_and_errors(rng):
    s = rng.random(101)
    y = (rng.random(101) < 0.3).astype(int)
    cls = classify_samples(s, y)
    tn = int(((y == 0) & (cls != HARD)).sum())
    assert int((cls == EASY).sum()) == tn // 2 <= math.ceil(tn / 2)
    assert all(c == NEITHER for c, lab in zip(cls, y) if lab == 1)
    with pytest.raises(RangeError):
        classify_samples([0.2, 0.3], [1, 1])


def test_color_rules():
    assert color_sample(0.2, 0.25, NEITHER, NEITHER) == "green"
    assert color_sample(0.1, 0.8, EASY, HARD) == "red"
    assert color_sample(0.8, 0.1, HARD, EASY) == "red"
    assert color_sample(0.1, 0.45, EASY, NEITHER) == "yellow"
    assert color_sample(0.1, 0.9, EASY, EASY) == "yellow"


def _log(rng, n=80):
    y = (np.arange(n) < n // 2).astype(float)
    log = ScoreLog(np.arange(n), np.arange(n) + n, y)
    for e in (5, 10):
        log.record(e, np.clip(0.5 * y + 0.5 * rng.random(n), 0, 1))
    return log


def test_migration_partition_and_invariants(rng):
    log = _log(rng)
    counts, rec = migration_matrix(log, 5, 10)
    assert sum(counts.values()) == len(log)
    red = rec.color == "red"
    assert np.all(rec.gap[red] > 0.3)
    assert all({a, b} == {EASY, HARD} for a, b in zip(rec.class1[red], rec.class2[red]))
    assert np.all(rec.gap[rec.color == "green"] <= 0.3)
    with pytest.raises(RangeError):
        migration_matrix(log, 5, 11)


def test_score_log_csv_round_trip(tmp_path, rng):
    log = _log(rng, 20)
    log.write_csv(tmp_path / "s.csv")
    back = ScoreLog.read_csv(tmp_path / "s.csv")
    assert back.epochs == [5, 10]
    for e in back.epochs:
        assert back.at(e).tobytes() == log.at(e).tobytes()
    assert np.array_equal(back.u, log.u) and np.array_equal(back.y, log.y)


def test_migration_csv(tmp_path, rng):
    _, rec = migration_matrix(_log(rng, 10), 5, 10)
    rec.write_csv(tmp_path / "m.csv")
    lines = (tmp_path / "m.csv").read_text().splitlines()
    assert lines[0] == "sample,s_e1,s_e2,color" and len(lines) == 11


def brute_terms(ls, lt):
    """Direct evaluation of the two objectives with plain Python sums."""
    n = len(ls)
    us = [math.exp(-x) for x in ls]
    ut = [math.exp(-x) for x in lt]
    z = sum(us)
    rs = lambda u: sum(a / z * b for a, b in zip(us, u))  # noqa: E731
    rt = lambda u: sum(u) / n  # noqa: E731
    ms, mt = rt(us), rt(ut)
    cov = sum((a - ms) * (b - mt) for a, b in zip(us, ut)) / n
    var = sum((a - ms) ** 2 for a in us) / n
    return (rs(us) - rs(ut)) - (rt(us) - rt(ut)), cov, var


def test_equal_parameters_give_equality():
    t = landscape_terms([0.3, 1.2, 0.7], [0.3, 1.2, 0.7])
    assert t["cov"] == pytest.approx(t["var"])
    assert abs(t["margin"]) < 1e-15


def test_two_sample_anticorrelated_instance():
    t = landscape_terms([0.1, 2.3], [2.3, 0.1])
    margin, cov, var = brute_terms([0.1, 2.3], [2.3, 0.1])
    assert cov < 0 <= var
    assert t["margin"] == pytest.approx(margin, rel=1e-12)
    assert t["margin"] > 0


def test_terms_match_brute_force(rng):
    for _ in range(50):
        ls, lt = rng.exponential(size=7), rng.exponential(size=7)
        t = landscape_terms(ls, lt)
        margin, cov, var = brute_terms(ls.tolist(), lt.tolist())
        assert t["margin"] == pytest.approx(margin, rel=1e-9, abs=1e-14)
        assert t["cov"] == pytest.approx(cov, rel=1e-9, abs=1e-15)
        assert t["identity_residual"] < 1e-14


def test_sweep_200_instances(tmp_path):
    rep = verify_landscape_gap(200, 10, 42)
    assert rep["violations"] == 0 and rep["pass"]
    assert rep["checked"] + rep["skipped"] == 200
    assert rep["checked"] > 100 and rep["skipped"] > 0
    write_theorem_report(rep, tmp_path / "t.json")
    assert json.loads((tmp_path / "t.json").read_text()) == rep


def test_sweep_argument_checks():
    with pytest.raises(RangeError):
        verify_landscape_gap(10, 1, 0)
    with pytest.raises(RangeError):
        verify_landscape_gap(0, 5, 0)
