"""Seeded citation-like graphs for tests and offline runs.

A degree-corrected stochastic block model with bag-of-words features; the
default sizes follow the Cora citation graph (2708 nodes, 5278 undirected
edges, 1433 binary features, 7 classes).
"""

from __future__ import annotations

import argparse
from pathlib import Path

import numpy as np

from .graph import Graph, canonical_edges


def _sbm_pairs(rng, k, n, labels, members, p_all, p_cls, homophily):
    u = rng.choice(n, size=k, p=p_all)
    same = rng.random(k) < homophily
    v = rng.choice(n, size=k, p=p_all)
    for c, m in enumerate(members):
        if m.size == 0:
            continue
        sel = np.flatnonzero(same & (labels[u] == c))
        v[sel] = m[rng.choice(m.size, size=sel.size, p=p_cls[c])]
    return u, v


def _closure_pairs(rng, k, keys, n):
    a, b = keys // n, keys % n
    src = np.concatenate([a, b])
    dst = np.concatenate([b, a])
    order = np.argsort(src, kind="stable")
    src, dst = src[order], dst[order]
    ptr = np.searchsorted(src, np.arange(n + 1))
    deg = np.diff(ptr)
    # middle node w with probability ~ deg^2 so two-paths are sampled near-uniformly
    w_p = deg * (deg - 1.0)
    if w_p.sum() == 0:
        return rng.integers(0, n, k), rng.integers(0, n, k)
    w = rng.choice(n, size=k, p=w_p / w_p.sum())
    u = dst[ptr[w] + (rng.random(k) * deg[w]).astype(np.int64)]
    v = dst[ptr[w] + (rng.random(k) * deg[w]).astype(np.int64)]
    return u, v


def _unique_keys(keys, target, n, draw):
    while keys.size < target:
        u, v = draw(2 * (target - keys.size) + 16)
        ok = u != v
        new = np.minimum(u[ok], v[ok]) * n + np.maximum(u[ok], v[ok])
        new = new[~np.isin(new, keys)]
        _, first = np.unique(new, return_index=True)
        keys = np.concatenate([keys, new[np.sort(first)]])
    return keys[:target]


def citation_graph(
    num_nodes=2708,
    num_edges=5278,
    num_features=1433,
    num_classes=7,
    homophily=0.81,
    words_per_node=18,
    topic_weight=0.7,
    closure=0.4,
    seed=0,
):
    """Return ``(Graph, labels)``.

    A fraction ``closure`` of the edges closes random open two-paths, which
    gives the graph citation-like clustering.
    """
    rng = np.random.default_rng(seed)
    labels = rng.integers(0, num_classes, size=num_nodes)
    theta = rng.pareto(2.2, size=num_nodes) + 1.0
    members = [np.flatnonzero(labels == c) for c in range(num_classes)]
    p_all = theta / theta.sum()
    p_cls = [theta[m] / theta[m].sum() if m.size else None for m in members]

    base = num_edges - int(round(closure * num_edges))
    keys = _unique_keys(np.zeros(0, dtype=np.int64), base, num_nodes, lambda k: _sbm_pairs(
        rng, k, num_nodes, labels, members, p_all, p_cls, homophily))
    keys = _unique_keys(keys, num_edges, num_nodes, lambda k: _closure_pairs(rng, k, keys, num_nodes))
    edges, _, _ = canonical_edges(np.stack([keys // num_nodes, keys % num_nodes], axis=1), num_nodes)


    topics = rng.dirichlet(np.full(num_features, 0.05), size=num_classes)
    background = np.full(num_features, 1.0 / num_features)
    x = np.zeros((num_nodes, num_features))
    for i in range(num_nodes):
        p = topic_weight * topics[labels[i]] + (1 - topic_weight) * background
        words = rng.choice(num_features, size=words_per_node, p=p)
        x[i, words] = 1.0
    return Graph.from_edges(num_nodes, edges, x), labels


def write_dataset(g, out_dir):
    out = Path(out_dir)
    out.mkdir(parents=True, exist_ok=True)
    with open(out / "edges.tsv", "w", encoding="utf-8") as fh:
        for a, b in g.edge_list.tolist():
            fh.write(f"{a}\t{b}\n")
    with open(out / "features.csv", "w", encoding="utf-8") as fh:
        for i, row in enumerate(g.features):
            fh.write(",".join([str(i)] + [format(v, "g") for v in row]) + "\n")
    return out / "edges.tsv", out / "features.csv"


def main(argv=None):
    ap = argparse.ArgumentParser(description="write a synthetic citation-like dataset")
    ap.add_argument("out")
    ap.add_argument("--seed", type=int, default=0)
    ap.add_argument("--nodes", type=int, default=2708)
    ap.add_argument("--edges", type=int, default=5278)
    ap.add_argument("--features", type=int, default=1433)
    a = ap.parse_args(argv)
    g, _ = citation_graph(a.nodes, a.edges, a.features, seed=a.seed)
    e, f = write_dataset(g, a.out)
    print(f"{g.num_nodes} nodes, {g.num_edges} edges -> {e}, {f}")


if __name__ == "__main__":
    main()
