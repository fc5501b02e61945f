"""Teacher-side machinery: scoring, hard-sample filtering and the
uncertainty-based meta-data collector."""

from __future__ import annotations

import csv
import math
from dataclasses import dataclass

import numpy as np

from .errors import ConfigError, RangeError
from .graph import drop_edge, sample_drop_rate
from .model import encode, score_pairs

DEFAULT_DRAWS = 20


@dataclass(frozen=True, eq=False)
class ScoreTable:
    """Scores aligned index-for-index with the SampleSet they were computed on."""

    u: np.ndarray
    v: np.ndarray
    scores: np.ndarray

    def __len__(self):
        return self.scores.size

    def as_dict(self):
        return {(a, b): s for a, b, s in zip(self.u.tolist(), self.v.tolist(), self.scores.tolist())}


@dataclass(frozen=True, eq=False)
class UncertaintyTable:
    u: np.ndarray
    v: np.ndarray
    values: np.ndarray
    predictions: np.ndarray  # (N, |samples|) per-augmentation scores
    rhos: tuple
    N: int

    def __len__(self):
        return self.values.size


def infer_scores(params, view, samples, emb=None):
    if emb is None:
        emb = encode(view, params)
    return ScoreTable(samples.u, samples.v, score_pairs(emb, samples.u, samples.v))


def hard_count(beta, n):
    if not 0.0 < beta <= 1.0:
        raise RangeError("beta must be in (0,1]")
    # guard against 0.29 * 100 == 28.999999999999996
    return math.floor(beta * n + 1e-9)


def top_indices(scores, u, v, k):
    """Indices of the k largest scores, ties broken by (u asc, v asc)."""
    order = np.lexsort((v, u, -scores))
    return order[:k]


def filter_hard(samples, scores, beta, scope="all"):
    """Keep the floor(beta*|O|) highest-scored samples, in their original order.

    With ``scope="negatives_only"`` every positive is kept and the count
    applies to the negatives. Returns ``(subset, threshold)``.
    """
    sc = scores.scores if isinstance(scores, ScoreTable) else np.asarray(scores, dtype=np.float64)
    if sc.size != len(samples):
        raise RangeError("score table does not cover the sample set")
    if scope == "all":
        pool = np.arange(len(samples))
    elif scope == "negatives_only":
        pool = np.flatnonzero(samples.y == 0)
    else:
        raise RangeError(f"filter_scope must be 'all' or 'negatives_only', got {scope!r}")
    k = hard_count(beta, pool.size)
    if k < 1:
        raise ConfigError(f"beta={beta} keeps no samples out of {pool.size}; raise beta")
    top = pool[top_indices(sc[pool], samples.u[pool], samples.v[pool], k)]
    keep = np.zeros(len(samples), dtype=bool)
    keep[top] = True
    if scope == "negatives_only":
        keep[samples.y == 1] = True
    return samples.take(np.flatnonzero(keep)), float(sc[top].min())


def mc_variance(preds):
    """Biased Monte-Carlo variance per column: mean(p^2) - mean(p)^2, floored at 0."""
    preds = np.asarray(preds, dtype=np.float64)
    n = preds.shape[0]
    b = (preds * preds).sum(axis=0) / n - (preds.sum(axis=0) / n) ** 2
    return np.maximum(b, 0.0)


def estimate_uncertainty(params, g, samples, N=DEFAULT_DRAWS, seed=0, rho=None):
    """Prediction variance of each sample across ``N`` DropEdge views of ``g``.

    Each draw uses its own drop rate (truncated standard normal) unless a fixed
    ``rho`` is given.
    """
    if N < 2:
        raise RangeError("N must be >= 2")
    rng = np.random.default_rng(seed)
    preds = np.empty((N, len(samples)))
    rhos = []
    for n in range(N):
        r = sample_drop_rate(rng) if rho is None else float(rho)
        view = drop_edge(g, r, rng.integers(2**63))
        preds[n] = score_pairs(encode(view, params), samples.u, samples.v)
        rhos.append(r)
    return UncertaintyTable(samples.u, samples.v, mc_variance(preds), preds, tuple(rhos), N)


def collect_meta(samples, uncertainty, tau):
    """Samples with uncertainty strictly below ``tau``, order preserved."""
    if tau <= 0:
        raise RangeError("tau must be > 0")
    vals = uncertainty.values if isinstance(uncertainty, UncertaintyTable) else np.asarray(uncertainty)
    keep = np.flatnonzero(vals < tau)
    if keep.size == 0:
        raise ConfigError(
            f"no sample has uncertainty below tau={tau:g} (min {vals.min():.3g}); raise tau or N"
        )
    return samples.take(keep)


def write_uncertainty_csv(path, samples, uncertainty, tau):
    kept = uncertainty.values < tau
    with open(path, "w", encoding="utf-8", newline="") as fh:
        w = csv.writer(fh)
        w.writerow(["u", "v", "y", "B", "meta"])
        for a, b, y, val, k in zip(
            samples.u.tolist(), samples.v.tolist(), samples.y.tolist(), uncertainty.values.tolist(), kept.tolist()
        ):
            w.writerow([a, b, int(y), repr(val), int(k)])
