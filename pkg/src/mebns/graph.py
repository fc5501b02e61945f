"""Immutable CSR graphs, dataset ingestion, edge splits and DropEdge views."""

from __future__ import annotations

import csv
import json
import logging
import math
from dataclasses import dataclass
from functools import cached_property
from pathlib import Path

import numpy as np
import scipy.sparse as sp

from .errors import ParseError, RangeError

log = logging.getLogger(__name__)

MIN_SPLIT_EDGES = 10


def canonical_edges(edges, num_nodes):
    """Return (unique u<v edges sorted lexicographically, #self-loops, #duplicates)."""
    edges = np.asarray(edges, dtype=np.int64).reshape(-1, 2)
    loops = edges[:, 0] == edges[:, 1]
    edges = edges[~loops]
    lo = np.minimum(edges[:, 0], edges[:, 1])
    hi = np.maximum(edges[:, 0], edges[:, 1])
    keys = np.unique(lo * num_nodes + hi)
    out = np.stack([keys // num_nodes, keys % num_nodes], axis=1) if keys.size else np.zeros((0, 2), np.int64)
    return out, int(loops.sum()), int(len(edges) - len(out))


def _normalize(adj):
    # D^-1/2 (A + I) D^-1/2
    n = adj.shape[0]
    a = (adj + sp.identity(n, format="csr")).tocsr()
    d = np.asarray(a.sum(axis=1)).ravel()
    inv = 1.0 / np.sqrt(d)
    scale = sp.diags(inv)
    return (scale @ a @ scale).tocsr()


def _feature_operator(x):
    density = np.count_nonzero(x) / max(x.size, 1)
    return sp.csr_matrix(x) if density < 0.25 else x


@dataclass(frozen=True, eq=False)
class Graph:
    """Undirected graph in symmetric CSR form plus a dense feature matrix.

    ``edge_list`` holds each undirected edge once with ``u < v``; ``indptr`` /
    ``indices`` store both directions.
    """

    num_nodes: int
    indptr: np.ndarray
    indices: np.ndarray
    features: np.ndarray
    edge_list: np.ndarray

    @classmethod
    def from_edges(cls, num_nodes, edges, features=None):
        edges, loops, dups = canonical_edges(edges, num_nodes)
        if loops or dups:
            log.info("dropped %d self-loops and %d duplicate edges", loops, dups)
        if edges.size and edges.max() >= num_nodes:
            raise RangeError(f"node id {int(edges.max())} >= num_nodes {num_nodes}")
        if features is None:
            features = np.eye(num_nodes, dtype=np.float64)
        features = np.array(features, dtype=np.float64)
        if features.shape[0] != num_nodes:
            raise RangeError(f"feature rows {features.shape[0]} != num_nodes {num_nodes}")
        rows = np.concatenate([edges[:, 0], edges[:, 1]])
        cols = np.concatenate([edges[:, 1], edges[:, 0]])
        adj = sp.csr_matrix((np.ones(rows.size), (rows, cols)), shape=(num_nodes, num_nodes))
        adj.sort_indices()
        for a in (adj.indptr, adj.indices, edges, features):
            a.setflags(write=False)
        return cls(int(num_nodes), adj.indptr.astype(np.int64), adj.indices.astype(np.int64), features, edges)

    @property
    def num_edges(self):
        return len(self.edge_list)

    @property
    def num_features(self):
        return self.features.shape[1]

    def neighbors(self, u):
        return self.indices[self.indptr[u]:self.indptr[u + 1]]

    @cached_property
    def degree(self):
        return np.diff(self.indptr)

    @cached_property
    def adjacency(self):
        return sp.csr_matrix(
            (np.ones(self.indices.size), self.indices, self.indptr), shape=(self.num_nodes, self.num_nodes)
        )

    @cached_property
    def normalized_adjacency(self):
        return _normalize(self.adjacency)

    @cached_property
    def feature_operator(self):
        """Features as CSR when sparse enough (bag-of-words, one-hot), else dense."""
        return _feature_operator(self.features)

    @cached_property
    def edge_keys(self):
        return self.edge_list[:, 0] * self.num_nodes + self.edge_list[:, 1]

    def has_edges(self, u, v):
        """Vectorized undirected membership test."""
        u = np.asarray(u, dtype=np.int64)
        v = np.asarray(v, dtype=np.int64)
        keys = np.minimum(u, v) * self.num_nodes + np.maximum(u, v)
        if self.edge_keys.size == 0:
            return np.zeros(keys.shape, dtype=bool)
        pos = np.searchsorted(self.edge_keys, keys)
        pos = np.minimum(pos, self.edge_keys.size - 1)
        return self.edge_keys[pos] == keys

    def with_edges(self, edges):
        """Same nodes and features, different edge set."""
        return Graph.from_edges(self.num_nodes, edges, self.features)


@dataclass(frozen=True, eq=False)
class AugmentedView:
    """Edge-masked view of a graph; one mask bit per undirected edge."""

    base: Graph
    edge_mask: np.ndarray
    rho: float

    @property
    def num_nodes(self):
        return self.base.num_nodes

    @property
    def features(self):
        return self.base.features

    @property
    def feature_operator(self):
        return self.base.feature_operator

    @property
    def edge_list(self):
        return self.base.edge_list[self.edge_mask]

    @property
    def num_edges(self):
        return int(self.edge_mask.sum())

    @cached_property
    def directed_mask(self):
        """Mask aligned with the base CSR entries (both directions share a bit)."""
        g = self.base
        rows = np.repeat(np.arange(g.num_nodes), g.degree)
        lo = np.minimum(rows, g.indices)
        hi = np.maximum(rows, g.indices)
        pos = np.searchsorted(g.edge_keys, lo * g.num_nodes + hi)
        return self.edge_mask[pos]

    @cached_property
    def adjacency(self):
        g = self.base
        data = self.directed_mask.astype(np.float64)
        adj = sp.csr_matrix((data, g.indices, g.indptr), shape=(g.num_nodes, g.num_nodes))
        adj.eliminate_zeros()
        return adj

    @cached_property
    def normalized_adjacency(self):
        return _normalize(self.adjacency)


@dataclass(frozen=True, eq=False)
class EdgeSplit:
    train: np.ndarray
    valid: np.ndarray
    test: np.ndarray
    full: Graph
    message_graph: Graph
    seed: int

    def to_manifest(self):
        return {
            "seed": int(self.seed),
            "test": self.test.tolist(),
            "train": self.train.tolist(),
            "valid": self.valid.tolist(),
        }


def _open_lines(path):
    with open(path, "r", encoding="utf-8") as fh:
        for lineno, raw in enumerate(fh, start=1):
            line = raw.strip()
            if not line or line.startswith("#"):
                continue
            yield lineno, line


def _read_edges(path):
    edges = []
    for lineno, line in _open_lines(path):
        parts = line.split()
        if len(parts) != 2:
            raise ParseError(path, lineno, f"expected 'u<TAB>v', got {line!r}")
        try:
            u, v = int(parts[0]), int(parts[1])
        except ValueError:
            raise ParseError(path, lineno, f"non-integer node id in {line!r}") from None
        if u < 0 or v < 0:
            raise ParseError(path, lineno, "negative node id")
        edges.append((u, v))
    return np.array(edges, dtype=np.int64).reshape(-1, 2)


def _read_features(path):
    rows = {}
    width = None
    with open(path, "r", encoding="utf-8", newline="") as fh:
        for lineno, rec in enumerate(csv.reader(fh), start=1):
            if not rec or rec[0].lstrip().startswith("#"):
                continue
            try:
                node = int(rec[0])
                vals = [float(x) for x in rec[1:]]
            except ValueError:
                raise ParseError(path, lineno, "feature rows must be 'node_id,v1,...,vf'") from None
            if width is None:
                width = len(vals)
            elif len(vals) != width:
                raise ParseError(path, lineno, f"expected {width} feature values, got {len(vals)}")
            if node < 0:
                raise ParseError(path, lineno, "negative node id")
            rows[node] = vals
    return rows, width or 0


def load_graph(edge_file, feature_file=None, num_nodes=None, num_features=None):
    """Read an edge TSV (and optional feature CSV) into a :class:`Graph`.

    Without a feature file, nodes get one-hot identity features truncated or
    zero-padded to ``num_features`` columns (default: ``num_nodes``). Nodes
    missing from a feature file get zero rows.
    """
    edges = _read_edges(edge_file)
    frows, width = _read_features(feature_file) if feature_file is not None else ({}, 0)
    biggest = max(int(edges.max()) if edges.size else -1, max(frows, default=-1))
    if num_nodes is None:
        num_nodes = biggest + 1
    elif biggest >= num_nodes:
        raise RangeError(f"node id {biggest} >= declared num_nodes {num_nodes}")
    if feature_file is not None:
        x = np.zeros((num_nodes, width))
        for node, vals in frows.items():
            x[node] = vals
    else:
        f = num_nodes if num_features is None else int(num_features)
        x = np.eye(num_nodes, f)
    return Graph.from_edges(num_nodes, edges, x)


def split_edges(g, seed):
    """Seeded 70/10/20 split of the undirected edges; message passing uses train only."""
    m = g.num_edges
    if m < MIN_SPLIT_EDGES:
        raise RangeError(f"graph has {m} edges; at least {MIN_SPLIT_EDGES} are needed to split")
    perm = np.random.default_rng(seed).permutation(m)
    n_train = math.floor(m * 7 / 10)
    n_valid = math.floor(m / 10)
    shuffled = g.edge_list[perm]
    train = shuffled[:n_train]
    valid = shuffled[n_train:n_train + n_valid]
    test = shuffled[n_train + n_valid:]
    return EdgeSplit(train, valid, test, g, g.with_edges(train), int(seed))


def write_split_manifest(split, path):
    Path(path).write_text(json.dumps(split.to_manifest(), sort_keys=True) + "\n", encoding="utf-8")


def read_split_manifest(path, g):
    data = json.loads(Path(path).read_text(encoding="utf-8"))
    parts = {k: np.array(data[k], dtype=np.int64).reshape(-1, 2) for k in ("train", "valid", "test")}
    return EdgeSplit(parts["train"], parts["valid"], parts["test"], g, g.with_edges(parts["train"]), data["seed"])


def khop_array(g, u, K):
    """Nodes at shortest-path distance 2..K from ``u``, sorted."""
    seen = np.zeros(g.num_nodes, dtype=bool)
    seen[u] = True
    frontier = np.array([u], dtype=np.int64)
    found = []
    for depth in range(1, K + 1):
        if frontier.size == 0:
            break
        nxt = np.concatenate([g.neighbors(w) for w in frontier])
        nxt = np.unique(nxt[~seen[nxt]])
        seen[nxt] = True
        if depth >= 2:
            found.append(nxt)
        frontier = nxt
    return np.sort(np.concatenate(found)) if found else np.zeros(0, dtype=np.int64)


def k_hop_candidates(g, u, K):
    if K < 2:
        raise RangeError("K must be >= 2")
    return set(khop_array(g, u, K).tolist())


def sample_drop_rate(rng):
    """Standard normal draw rejected until it lands in [0, 1]."""
    while True:
        rho = float(rng.standard_normal())
        if 0.0 <= rho <= 1.0:
            return rho


def drop_edge(g, rho, seed):
    if not 0.0 <= rho <= 1.0:
        raise RangeError(f"rho must be in [0,1], got {rho}")
    rng = np.random.default_rng(seed)
    keep = rng.random(g.num_edges) >= rho
    keep.setflags(write=False)
    return AugmentedView(g, keep, float(rho))


def convert_linqs(content_path, cites_path, out_dir):
    """Convert the LINQS ``cora.content``/``cora.cites`` pair into edges.tsv + features.csv.

    Node ids follow the order of ``cora.content``; citations naming unknown
    papers are skipped.
    """
    ids, feats = {}, []
    for lineno, line in _open_lines(content_path):
        parts = line.split()
        if len(parts) < 3:
            raise ParseError(content_path, lineno, "expected 'paper_id w1 ... wf label'")
        ids[parts[0]] = len(ids)
        feats.append(parts[1:-1])
    edges = []
    for lineno, line in _open_lines(cites_path):
        parts = line.split()
        if len(parts) != 2:
            raise ParseError(cites_path, lineno, "expected 'cited citing'")
        if parts[0] in ids and parts[1] in ids:
            edges.append((ids[parts[0]], ids[parts[1]]))
    out = Path(out_dir)
    out.mkdir(parents=True, exist_ok=True)
    with open(out / "edges.tsv", "w", encoding="utf-8") as fh:
        for u, v in edges:
            fh.write(f"{u}\t{v}\n")
    with open(out / "features.csv", "w", encoding="utf-8") as fh:
        for node, row in enumerate(feats):
            fh.write(",".join([str(node), *row]) + "\n")
    return out / "edges.tsv", out / "features.csv"
