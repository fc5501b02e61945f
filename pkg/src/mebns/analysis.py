"""Easy/hard migration analysis over recorded scores and a numeric check of the
sampling-landscape inequality."""

from __future__ import annotations

import csv
import json
from collections import Counter
from dataclasses import dataclass, field

import numpy as np

from .errors import RangeError
from .evaluation import roc_optimal_threshold
from .samplers import SampleSet, sample_uniform

GAP_THRESHOLD = 0.3
EASY, HARD, NEITHER = "easy", "hard", "neither"
COLORS = ("green", "yellow", "red")
THEOREM_TOL = 1e-9


def build_probe(split, seed):
    """Train positives plus one frozen uniform negative per positive."""
    pos = SampleSet.positives(split.train)
    neg = sample_uniform(split.full, pos, np.random.default_rng([int(seed), 0xB]).integers(2**63))
    return pos.concat(neg)


@dataclass
class ScoreLog:
    """Scores of a fixed probe set at selected epochs."""

    u: np.ndarray
    v: np.ndarray
    y: np.ndarray
    scores: dict = field(default_factory=dict)  # epoch -> array aligned with the probe

    @classmethod
    def for_probe(cls, probe):
        return cls(probe.u.copy(), probe.v.copy(), probe.y.copy())

    def __len__(self):
        return self.u.size

    @property
    def epochs(self):
        return sorted(self.scores)

    def record(self, epoch, scores):
        scores = np.asarray(scores, dtype=np.float64)
        if scores.shape != self.u.shape:
            raise RangeError("score vector does not match the probe set")
        self.scores[int(epoch)] = scores.copy()

    def at(self, epoch):
        try:
            return self.scores[int(epoch)]
        except KeyError:
            raise RangeError(f"epoch {epoch} not recorded (have {self.epochs})") from None

    def write_csv(self, path):
        with open(path, "w", encoding="utf-8", newline="") as fh:
            w = csv.writer(fh)
            w.writerow(["epoch", "sample", "u", "v", "y", "score"])
            for e in self.epochs:
                for i, (a, b, y, s) in enumerate(
                    zip(self.u.tolist(), self.v.tolist(), self.y.tolist(), self.scores[e].tolist())
                ):
                    w.writerow([e, i, a, b, int(y), repr(s)])

    @classmethod
    def read_csv(cls, path):
        rows = {}
        per_epoch = {}
        with open(path, "r", encoding="utf-8", newline="") as fh:
            for rec in csv.DictReader(fh):
                i = int(rec["sample"])
                rows[i] = (int(rec["u"]), int(rec["v"]), float(rec["y"]))
                per_epoch.setdefault(int(rec["epoch"]), {})[i] = float(rec["score"])
        n = len(rows)
        if sorted(rows) != list(range(n)):
            raise RangeError(f"{path}: sample ids are not 0..{n - 1}")
        meta = np.array([rows[i] for i in range(n)]).reshape(-1, 3)
        log = cls(meta[:, 0].astype(np.int64), meta[:, 1].astype(np.int64), meta[:, 2].copy())
        for e, vals in per_epoch.items():
            if len(vals) != n:
                raise RangeError(f"{path}: epoch {e} covers {len(vals)} of {n} samples")
            log.record(e, [vals[i] for i in range(n)])
        return log


def classify_samples(scores, labels, threshold=None, u=None, v=None):
    """Per-sample class: hard (false positive), easy (bottom half of the true
    negatives) or neither.

    The threshold defaults to the ROC-optimal cut. Equal scores among the true
    negatives are ordered by ``(u, v)`` when given, else by position.
    """
    scores = np.asarray(scores, dtype=np.float64)
    labels = np.asarray(labels)
    neg = labels != 1
    if not neg.any():
        raise RangeError("classify_samples needs at least one negative")
    if threshold is None:
        threshold = roc_optimal_threshold(scores, labels)
    out = np.full(scores.size, NEITHER, dtype=object)
    out[neg & (scores > threshold)] = HARD
    tn = np.flatnonzero(neg & (scores <= threshold))
    if u is not None:
        order = np.lexsort((np.asarray(v)[tn], np.asarray(u)[tn], scores[tn]))
    else:
        order = np.argsort(scores[tn], kind="stable")
    out[tn[order[: tn.size // 2]]] = EASY
    return out


def color_sample(s1, s2, c1, c2, gap_threshold=GAP_THRESHOLD):
    gap = abs(s2 - s1)
    if gap < gap_threshold:
        return "green"
    if gap > gap_threshold and {c1, c2} == {EASY, HARD}:
        return "red"
    return "yellow"


@dataclass(frozen=True, eq=False)
class MigrationRecord:
    s1: np.ndarray
    s2: np.ndarray
    class1: np.ndarray
    class2: np.ndarray
    gap: np.ndarray
    color: np.ndarray
    thresholds: tuple

    def counts(self):
        c = Counter(self.color.tolist())
        return {k: int(c.get(k, 0)) for k in COLORS}

    def red_fraction(self):
        return float(np.mean(self.color == "red"))

    def write_csv(self, path):
        with open(path, "w", encoding="utf-8", newline="") as fh:
            w = csv.writer(fh)
            w.writerow(["sample", "s_e1", "s_e2", "color"])
            for i, (a, b, c) in enumerate(zip(self.s1.tolist(), self.s2.tolist(), self.color.tolist())):
                w.writerow([i, repr(a), repr(b), c])


def migration_matrix(log, e1, e2, gap_threshold=GAP_THRESHOLD):
    """Color every probe sample by its score move between epochs ``e1`` and ``e2``.

    Classes use each epoch's own ROC-optimal threshold.
    """
    s1, s2 = log.at(e1), log.at(e2)
    t1 = roc_optimal_threshold(s1, log.y)
    t2 = roc_optimal_threshold(s2, log.y)
    c1 = classify_samples(s1, log.y, t1, log.u, log.v)
    c2 = classify_samples(s2, log.y, t2, log.u, log.v)
    colors = np.array([color_sample(a, b, p, q, gap_threshold) for a, b, p, q in zip(s1, s2, c1, c2)], dtype=object)
    rec = MigrationRecord(s1, s2, c1, c2, np.abs(s2 - s1), colors, (t1, t2))
    return rec.counts(), rec


# -- landscape inequality ---------------------------------------------------------


def landscape_terms(loss_star, loss_theta):
    """Objective values for one instance under uniform and difficulty-aware sampling.

    Utilities are ``exp(-L)``; the aware distribution is ``p ~ exp(-L_star)``
    normalized to one, and the uniform objective is the mean utility.
    """
    ls = np.asarray(loss_star, dtype=np.float64)
    lt = np.asarray(loss_theta, dtype=np.float64)
    if ls.shape != lt.shape or ls.ndim != 1 or ls.size < 2:
        raise RangeError("need two loss vectors of equal length >= 2")
    us, ut = np.exp(-ls), np.exp(-lt)
    p = us / us.sum()
    mu_s = us.mean()
    cov = float(np.mean((us - mu_s) * (ut - ut.mean())))
    var = float(np.mean((us - mu_s) ** 2))
    rt_star, rt_theta = float(mu_s), float(ut.mean())
    rs_star, rs_theta = float(p @ us), float(p @ ut)
    return {
        "cov": cov,
        "var": var,
        "rt_star": rt_star,
        "rt_theta": rt_theta,
        "rs_star": rs_star,
        "rs_theta": rs_theta,
        "margin": (rs_star - rs_theta) - (rt_star - rt_theta),
        # R^s(theta) = R^t(theta) + Cov(U*, U) / mean(U*)
        "identity_residual": float(abs(rs_theta - rt_theta - cov / mu_s)),
    }


def _draw_instance(rng, size):
    ls = rng.exponential(1.0, size)
    mix = rng.uniform(-1.5, 2.5)
    lt = np.abs(mix * ls + rng.normal(0.0, 0.5, size))
    return ls, lt


def verify_landscape_gap(num_instances, instance_size, seed, tol=THEOREM_TOL):
    if instance_size < 2:
        raise RangeError("instance_size must be >= 2")
    if num_instances < 1:
        raise RangeError("num_instances must be >= 1")
    rng = np.random.default_rng(seed)
    checked = passed = skipped = 0
    min_margin = float("inf")
    worst_identity = 0.0
    for _ in range(num_instances):
        t = landscape_terms(*_draw_instance(rng, instance_size))
        worst_identity = max(worst_identity, t["identity_residual"])
        if t["cov"] > t["var"]:
            skipped += 1
            continue
        checked += 1
        min_margin = min(min_margin, t["margin"])
        if t["margin"] >= -tol:
            passed += 1
    return {
        "checked": checked,
        "instance_size": int(instance_size),
        "instances": int(num_instances),
        "max_identity_residual": float(worst_identity),
        "min_margin": None if checked == 0 else min_margin,
        "passed": passed,
        "pass": passed == checked,
        "seed": int(seed),
        "skipped": skipped,
        "tolerance": tol,
        "violations": checked - passed,
    }


def write_theorem_report(report, path):
    with open(path, "w", encoding="utf-8") as fh:
        fh.write(json.dumps(report, sort_keys=True, indent=2) + "\n")
