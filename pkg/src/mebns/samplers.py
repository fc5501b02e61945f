"""Negative samplers: Uniform, PNS, DNS, K-hop and the structure-mixing generator.

Every sampler rejects pairs present in the *full* edge set (train, valid and
test) so held-out positives never come back as negatives; degrees and K-hop
neighbourhoods come from the message-passing (train) graph.
"""

from __future__ import annotations

import csv
from dataclasses import dataclass

import numpy as np

from .errors import RangeError, SamplingError
from .graph import khop_array

PROVENANCE = ("positive", "uniform", "pns", "dns", "khop")
POSITIVE, UNIFORM, PNS, DNS, KHOP = range(5)
BASE_KINDS = ("uniform", "pns", "dns")
MAX_RETRIES = 100


@dataclass(frozen=True, eq=False)
class SampleSet:
    u: np.ndarray
    v: np.ndarray
    y: np.ndarray
    provenance: np.ndarray

    @classmethod
    def build(cls, u, v, y, provenance):
        u = np.asarray(u, dtype=np.int64)
        return cls(
            u,
            np.asarray(v, dtype=np.int64),
            np.broadcast_to(np.asarray(y, dtype=np.float64), u.shape).copy(),
            np.broadcast_to(np.asarray(provenance, dtype=np.int8), u.shape).copy(),
        )

    @classmethod
    def positives(cls, edges):
        edges = np.asarray(edges, dtype=np.int64).reshape(-1, 2)
        return cls.build(edges[:, 0], edges[:, 1], 1.0, POSITIVE)

    @classmethod
    def empty(cls):
        return cls.build([], [], 1.0, POSITIVE)

    def __len__(self):
        return self.u.size

    def take(self, idx):
        return SampleSet(self.u[idx], self.v[idx], self.y[idx], self.provenance[idx])

    def concat(self, other):
        return SampleSet(
            np.concatenate([self.u, other.u]),
            np.concatenate([self.v, other.v]),
            np.concatenate([self.y, other.y]),
            np.concatenate([self.provenance, other.provenance]),
        )

    def keys(self, num_nodes):
        return np.minimum(self.u, self.v) * num_nodes + np.maximum(self.u, self.v)

    def provenance_counts(self):
        return {name: int((self.provenance == i).sum()) for i, name in enumerate(PROVENANCE)}

    def to_csv(self, path, epoch=0, mode="w"):
        with open(path, mode, encoding="utf-8", newline="") as fh:
            w = csv.writer(fh)
            if mode == "w":
                w.writerow(["epoch", "u", "v", "y", "provenance"])
            for a, b, c, p in zip(self.u.tolist(), self.v.tolist(), self.y.tolist(), self.provenance.tolist()):
                w.writerow([epoch, a, b, int(c), PROVENANCE[p]])


@dataclass(frozen=True)
class SamplerConfig:
    kind: str = "uniform"
    delta: float = 0.0
    K: int = 3
    dns_pool: int = 8
    pns_exponent: float = 0.75

    def __post_init__(self):
        if self.kind not in BASE_KINDS:
            raise RangeError(f"sampler kind must be one of {BASE_KINDS}, got {self.kind!r}")
        if not 0.0 <= self.delta <= 1.0:
            raise RangeError("delta must be in [0,1]")
        if self.K < 2:
            raise RangeError("K must be >= 2")
        if self.dns_pool < 1:
            raise RangeError("dns_pool must be >= 1")


def _rng(seed):
    return np.random.default_rng(seed)


def _valid(full, centers, cand):
    return (cand != centers) & ~full.has_edges(centers, cand)


def _draw_uniform(full, centers, rng):
    out = rng.integers(0, full.num_nodes, size=centers.size)
    bad = ~_valid(full, centers, out)
    for _ in range(MAX_RETRIES):
        if not bad.any():
            return out
        idx = np.flatnonzero(bad)
        out[idx] = rng.integers(0, full.num_nodes, size=idx.size)
        bad[idx] = ~_valid(full, centers[idx], out[idx])
    if bad.any():
        raise SamplingError(f"no non-neighbour found after {MAX_RETRIES} retries", np.unique(centers[bad]))
    return out


def pns_distribution(message, exponent=0.75):
    """Node probabilities proportional to degree**exponent; isolated nodes get 0."""
    w = message.degree.astype(np.float64) ** exponent
    w[message.degree == 0] = 0.0
    total = w.sum()
    if total == 0:
        raise SamplingError("PNS needs at least one edge in the message graph")
    return w / total


def _draw_pns(full, centers, rng, probs):
    cdf = np.cumsum(probs)
    cdf[-1] = 1.0

    def draw(k):
        return np.minimum(np.searchsorted(cdf, rng.random(k), side="right"), probs.size - 1)

    out = draw(centers.size)
    bad = ~_valid(full, centers, out)
    for _ in range(MAX_RETRIES):
        if not bad.any():
            return out
        idx = np.flatnonzero(bad)
        out[idx] = draw(idx.size)
        bad[idx] = ~_valid(full, centers[idx], out[idx])
    if bad.any():
        raise SamplingError(f"no PNS non-neighbour found after {MAX_RETRIES} retries", np.unique(centers[bad]))
    return out


def _draw_dns(full, centers, rng, scorer, pool):
    cand = _draw_uniform(full, np.repeat(centers, pool), rng).reshape(centers.size, pool)
    scores = np.asarray(scorer(np.repeat(centers, pool), cand.ravel()), dtype=np.float64).reshape(cand.shape)
    best = scores.max(axis=1, keepdims=True)
    big = np.iinfo(np.int64).max
    return np.where(scores == best, cand, big).min(axis=1)


def _dedupe(full, centers, out, redraw):
    """Redraw entries whose unordered pair repeats an earlier one."""
    n = full.num_nodes
    for _ in range(MAX_RETRIES):
        keys = np.minimum(centers, out) * n + np.maximum(centers, out)
        _, first = np.unique(keys, return_index=True)
        dup = np.ones(keys.size, dtype=bool)
        dup[first] = False
        if not dup.any():
            return out
        idx = np.flatnonzero(dup)
        out[idx] = redraw(idx)
    raise SamplingError("could not draw duplicate-free negatives", np.unique(centers[idx]))


def _base_draw(kind, full, message, centers, rng, scorer=None, pool=8, exponent=0.75):
    if kind == "uniform":
        return _draw_uniform(full, centers, rng)
    if kind == "pns":
        return _draw_pns(full, centers, rng, pns_distribution(message, exponent))
    if kind == "dns":
        if scorer is None:
            raise RangeError("DNS needs a scoring function")
        return _draw_dns(full, centers, rng, scorer, pool)
    raise RangeError(f"unknown sampler {kind!r}")


_KIND_CODE = {"uniform": UNIFORM, "pns": PNS, "dns": DNS}


def _base_sampleset(kind, full, positives, seed, message=None, **kw):
    rng = _rng(seed)
    message = full if message is None else message
    centers = positives.u
    probs = pns_distribution(message, kw.get("exponent", 0.75)) if kind == "pns" else None

    def draw(c):
        if probs is not None:
            return _draw_pns(full, c, rng, probs)
        return _base_draw(kind, full, message, c, rng, **kw)

    out = draw(centers)
    out = _dedupe(full, centers, out, lambda idx: draw(centers[idx]))
    return SampleSet.build(centers, out, 0.0, _KIND_CODE[kind])


def sample_uniform(g, positives, seed):
    """One uniform non-edge negative ``(u, v')`` per positive ``(u, .)``."""
    return _base_sampleset("uniform", g, positives, seed)


def sample_pns(g, positives, seed, message=None, exponent=0.75):
    """Like :func:`sample_uniform` with ``v'`` drawn proportional to degree**0.75."""
    return _base_sampleset("pns", g, positives, seed, message=message, exponent=exponent)


def sample_dns(g, scorer, positives, M, seed):
    """Per positive, the best-scored of ``M`` uniform non-edge candidates (ties -> smaller id)."""
    if M < 1:
        raise RangeError("M must be >= 1")
    return _base_sampleset("dns", g, positives, seed, scorer=scorer, pool=M)


class KHopIndex:
    """Cached K-hop candidate sets on the message graph, minus full-graph neighbours."""

    def __init__(self, message, full, K):
        if K < 2:
            raise RangeError("K must be >= 2")
        self.message, self.full, self.K = message, full, K
        self._cache = {}

    def __call__(self, u):
        u = int(u)
        hit = self._cache.get(u)
        if hit is None:
            cand = khop_array(self.message, u, self.K)
            if self.full is not self.message and cand.size:
                cand = cand[~self.full.has_edges(np.full(cand.size, u), cand)]
            self._cache[u] = hit = cand
        return hit


def _pick_khop(index, centers, rng):
    """Uniform K-hop pick per center; -1 where the set is empty."""
    out = np.full(centers.size, -1, dtype=np.int64)
    r = rng.random(centers.size)
    for i, u in enumerate(centers.tolist()):
        cand = index(u)
        if cand.size:
            out[i] = cand[min(int(r[i] * cand.size), cand.size - 1)]
    return out


def generate_negatives(full, message, positives, cfg, seed, scorer=None, khop=None):
    """Mixture sampler: K-hop with probability ``delta`` (per draw), else the base sampler.

    Draws whose K-hop set is empty fall back to the base sampler.
    """
    rng = _rng(seed)
    centers = positives.u
    code = _KIND_CODE[cfg.kind]
    probs = pns_distribution(message, cfg.pns_exponent) if cfg.kind == "pns" else None
    if khop is None and cfg.delta > 0:
        khop = KHopIndex(message, full, cfg.K)

    def base(c):
        if probs is not None:
            return _draw_pns(full, c, rng, probs)
        return _base_draw(cfg.kind, full, message, c, rng, scorer=scorer, pool=cfg.dns_pool)

    def draw(c):
        out = np.empty(c.size, dtype=np.int64)
        prov = np.full(c.size, code, dtype=np.int8)
        use = np.zeros(c.size, dtype=bool)
        if cfg.delta > 0:
            use = rng.random(c.size) < cfg.delta
        if use.any():
            picked = _pick_khop(khop, c[use], rng)
            hit = picked >= 0
            idx = np.flatnonzero(use)
            out[idx[hit]] = picked[hit]
            prov[idx[hit]] = KHOP
            use[idx[~hit]] = False
        rest = ~use
        if rest.any():
            out[rest] = base(c[rest])
        return out, prov

    out, prov = draw(centers)

    def redraw(idx):
        o, p = draw(centers[idx])
        prov[idx] = p
        return o

    out = _dedupe(full, centers, out, redraw)
    return SampleSet.build(centers, out, 0.0, prov)


def std_generate(g, u, base="uniform", delta=0.0, K=3, seed=0, full=None, scorer=None, dns_pool=8):
    """Single mixture draw for center ``u``; returns ``(v', provenance_name)``."""
    cfg = SamplerConfig(kind=base, delta=delta, K=K, dns_pool=dns_pool)
    s = generate_negatives(g if full is None else full, g, SampleSet.build([u], [u], 1.0, POSITIVE), cfg, seed, scorer)
    return int(s.v[0]), PROVENANCE[int(s.provenance[0])]
