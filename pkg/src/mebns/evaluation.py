"""Link-prediction metrics and the fixed evaluation pairs they run on."""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np
from scipy.stats import rankdata

from .errors import RangeError
from .model import score_pairs

HITS_KS = (20, 30)
MIN_HITS_POOL = 1000


def _scores(x, name):
    x = np.asarray(x, dtype=np.float64).ravel()
    if x.size == 0:
        raise RangeError(f"{name} is empty")
    return x


def auc(pos_scores, neg_scores):
    """P(random positive > random negative), ties counted as one half.

    Mann-Whitney U from mid-ranks of the pooled scores, exact in O(n log n).
    """
    pos = _scores(pos_scores, "pos_scores")
    neg = _scores(neg_scores, "neg_scores")
    ranks = rankdata(np.concatenate([pos, neg]))
    n_pos, n_neg = pos.size, neg.size
    u_stat = ranks[:n_pos].sum() - n_pos * (n_pos + 1) / 2.0
    return float(u_stat / (n_pos * n_neg))


def hits_at_k(pos_scores, neg_pool_scores, K):
    """Fraction of positives scored strictly above the K-th largest pool score."""
    pos = _scores(pos_scores, "pos_scores")
    pool = _scores(neg_pool_scores, "neg_pool_scores")
    if pool.size <= K:
        raise RangeError(f"negative pool of size {pool.size} must be larger than K={K}")
    kth = np.partition(pool, pool.size - K)[pool.size - K]
    return float(np.mean(pos > kth))


def roc_optimal_threshold(scores, labels):
    """Cut-point t maximizing TPR - FPR for the rule ``score >= t``.

    Candidates are the distinct scores; among equal J the smallest t wins.
    """
    scores = np.asarray(scores, dtype=np.float64).ravel()
    labels = np.asarray(labels).ravel()
    if scores.size != labels.size:
        raise RangeError("scores and labels differ in length")
    pos = labels == 1
    n_pos = int(pos.sum())
    n_neg = scores.size - n_pos
    if n_pos == 0 or n_neg == 0:
        raise RangeError("roc_optimal_threshold needs both classes")
    cuts = np.unique(scores)
    # counts with score >= cut, via sorted scores per class
    sp_ = np.sort(scores[pos])
    sn = np.sort(scores[~pos])
    tpr = (n_pos - np.searchsorted(sp_, cuts, side="left")) / n_pos
    fpr = (n_neg - np.searchsorted(sn, cuts, side="left")) / n_neg
    j = tpr - fpr
    return float(cuts[np.flatnonzero(j == j.max())[0]])


def youden_j(scores, labels, threshold):
    scores = np.asarray(scores, dtype=np.float64)
    labels = np.asarray(labels)
    hit = scores >= threshold
    return float(hit[labels == 1].mean() - hit[labels != 1].mean())


# -- evaluation pairs -------------------------------------------------------------


def sample_non_edges(full, count, rng, exclude=None):
    """``count`` distinct unordered non-edge pairs ``u != v`` drawn uniformly."""
    n = full.num_nodes
    total = n * (n - 1) // 2 - full.num_edges - (0 if exclude is None else exclude.size)
    if count > total:
        raise RangeError(f"graph has only {total} available non-edges, {count} requested")
    taken = set() if exclude is None else set(exclude.tolist())
    out = []
    while len(out) < count:
        need = count - len(out)
        u = rng.integers(0, n, size=2 * need + 8)
        v = rng.integers(0, n, size=u.size)
        ok = (u != v) & ~full.has_edges(u, v)
        for a, b in zip(u[ok].tolist(), v[ok].tolist()):
            key = min(a, b) * n + max(a, b)
            if key not in taken:
                taken.add(key)
                out.append((min(a, b), max(a, b)))
                if len(out) == count:
                    break
    return np.array(out, dtype=np.int64).reshape(-1, 2)


@dataclass(frozen=True, eq=False)
class EvalSplit:
    positives: np.ndarray
    negatives: np.ndarray  # equal-size sample for AUC


@dataclass(frozen=True, eq=False)
class EvalSet:
    """Positive/negative pairs per split and one Hits@K pool shared by all of them."""

    splits: dict
    hits_pool: np.ndarray
    ks: tuple = HITS_KS
    seed: int = 0


def build_evalset(split, seed, ks=HITS_KS):
    rng = np.random.default_rng([int(seed), 0xE])
    size = max(MIN_HITS_POOL, len(split.test))
    pool = sample_non_edges(split.full, size, rng)
    splits = {}
    for name in ("valid", "test"):
        pos = getattr(split, name)
        if len(pos) == 0:
            raise RangeError(f"{name} split is empty")
        splits[name] = EvalSplit(pos, sample_non_edges(split.full, len(pos), rng))
    return EvalSet(splits, pool, tuple(ks), int(seed))


def evaluate(emb, evalset, name="test"):
    """{auc, hits@K...} for one split given node embeddings."""
    part = evalset.splits[name]
    pos = score_pairs(emb, part.positives[:, 0], part.positives[:, 1])
    neg = score_pairs(emb, part.negatives[:, 0], part.negatives[:, 1])
    pool = score_pairs(emb, evalset.hits_pool[:, 0], evalset.hits_pool[:, 1])
    out = {"auc": auc(pos, neg)}
    for k in evalset.ks:
        out[f"hits@{k}"] = hits_at_k(pos, pool, k)
    return out
