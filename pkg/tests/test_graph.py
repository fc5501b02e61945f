import json

import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from mebns.errors import ParseError, RangeError
from mebns.graph import (
    Graph,
    drop_edge,
    k_hop_candidates,
    load_graph,
    read_split_manifest,
    sample_drop_rate,
    split_edges,
    write_split_manifest,
)

from conftest import path_graph


def _write(tmp_path, name, text):
    p = tmp_path / name
    p.write_text(text)
    return p


def test_dedup_and_symmetry(tmp_path):
    g = load_graph(_write(tmp_path, "e.tsv", "0\t1\n1\t0\n"))
    assert g.num_edges == 1
    assert g.degree.tolist() == [1, 1]
    assert g.indptr[-1] == 2 * g.num_edges


def test_self_loops_dropped(tmp_path):
    g = load_graph(_write(tmp_path, "e.tsv", "# comment\n0 0\n0 2\n"), num_nodes=3)
    assert g.edge_list.tolist() == [[0, 2]]


def test_empty_edge_file(tmp_path):
    g = load_graph(_write(tmp_path, "e.tsv", ""), num_nodes=3)
    assert g.num_nodes == 3 and g.num_edges == 0
    assert g.degree.tolist() == [0, 0, 0]


def test_parse_error_has_line_number(tmp_path):
    p = _write(tmp_path, "e.tsv", "0\t1\n2\tx\n")
    with pytest.raises(ParseError) as err:
        load_graph(p)
    assert err.value.lineno == 2
    assert ":2:" in str(err.value)


def test_node_id_out_of_range(tmp_path):
    with pytest.raises(RangeError):
        load_graph(_write(tmp_path, "e.tsv", "0\t5\n"), num_nodes=3)


def test_features_and_missing_rows(tmp_path):
    e = _write(tmp_path, "e.tsv", "0\t1\n1\t2\n")
    f = _write(tmp_path, "f.csv", "0,1.5,2\n2,3,4\n")
    g = load_graph(e, f)
    assert g.features.tolist() == [[1.5, 2.0], [0.0, 0.0], [3.0, 4.0]]


def test_one_hot_features_padded(tmp_path):
    g = load_graph(_write(tmp_path, "e.tsv", "0\t1\n"), num_nodes=3, num_features=5)
    assert g.features.shape == (3, 5)
    assert np.array_equal(g.features[:, :3], np.eye(3))


def test_csr_invariants(rng):
    g = Graph.from_edges(30, rng.integers(0, 30, size=(80, 2)))
    assert np.all(np.diff(g.indptr) >= 0)
    A = g.adjacency.toarray()
    assert np.array_equal(A, A.T)
    assert np.all(np.diag(A) == 0)
    assert np.all(g.edge_list[:, 0] < g.edge_list[:, 1])


def test_graph_is_read_only():
    g = path_graph(4)
    with pytest.raises(ValueError):
        g.features[0, 0] = 9.0


def test_split_sizes_and_partition(rng):
    g = Graph.from_edges(200, np.array([(i, j) for i in range(15) for j in range(i + 1, 15)])[:100])
    s = split_edges(g, 7)
    assert (len(s.train), len(s.valid), len(s.test)) == (70, 10, 20)
    keys = [set(map(tuple, part.tolist())) for part in (s.train, s.valid, s.test)]
    assert not (keys[0] & keys[1]) and not (keys[0] & keys[2]) and not (keys[1] & keys[2])
    assert keys[0] | keys[1] | keys[2] == set(map(tuple, g.edge_list.tolist()))
    assert s.message_graph.num_edges == 70


def test_split_floor_arithmetic_on_10556_edges():
    n = 200
    pairs = np.array([(i, j) for i in range(n) for j in range(i + 1, n)])[:10556]
    s = split_edges(Graph.from_edges(n, pairs), 0)
    assert (len(s.train), len(s.valid), len(s.test)) == (7389, 1055, 2112)


def test_split_deterministic_and_manifest(tmp_path):
    g = Graph.from_edges(40, [(i, (i * 7 + 3) % 40) for i in range(40)])
    a, b = split_edges(g, 3), split_edges(g, 3)
    assert np.array_equal(a.train, b.train) and np.array_equal(a.test, b.test)
    write_split_manifest(a, tmp_path / "a.json")
    write_split_manifest(b, tmp_path / "b.json")
    assert (tmp_path / "a.json").read_bytes() == (tmp_path / "b.json").read_bytes()
    back = read_split_manifest(tmp_path / "a.json", g)
    assert np.array_equal(back.valid, a.valid) and back.seed == 3
    assert json.loads((tmp_path / "a.json").read_text())["seed"] == 3


def test_split_rejects_small_graph():
    with pytest.raises(RangeError):
        split_edges(path_graph(5), 0)


def test_khop_examples():
    assert k_hop_candidates(path_graph(4), 0, 3) == {2, 3}
    star = Graph.from_edges(5, [(0, i) for i in range(1, 5)])
    assert k_hop_candidates(star, 0, 3) == set()
    tri = Graph.from_edges(3, [(0, 1), (1, 2), (0, 2)])
    assert k_hop_candidates(tri, 0, 2) == set()
    assert k_hop_candidates(Graph.from_edges(3, []), 1, 3) == set()
    with pytest.raises(RangeError):
        k_hop_candidates(tri, 0, 1)


@settings(max_examples=40, deadline=None)
@given(st.lists(st.tuples(st.integers(0, 11), st.integers(0, 11)), max_size=30), st.integers(0, 11), st.integers(2, 4))
def test_khop_excludes_self_and_neighbours(edges, u, K):
    g = Graph.from_edges(12, edges)
    cand = k_hop_candidates(g, u, K)
    assert u not in cand
    assert not cand & set(g.neighbors(u).tolist())
    # brute-force distances with Floyd-Warshall
    d = np.full((12, 12), np.inf)
    np.fill_diagonal(d, 0)
    for a, b in g.edge_list.tolist():
        d[a, b] = d[b, a] = 1
    for k in range(12):
        d = np.minimum(d, d[:, [k]] + d[[k], :])
    assert cand == {v for v in range(12) if 2 <= d[u, v] <= K}


def test_drop_edge_extremes(rng):
    g = Graph.from_edges(20, rng.integers(0, 20, size=(40, 2)))
    v0 = drop_edge(g, 0.0, 1)
    assert (v0.adjacency != g.adjacency).nnz == 0
    assert np.allclose(v0.normalized_adjacency.toarray(), g.normalized_adjacency.toarray(), atol=0, rtol=0)
    v1 = drop_edge(g, 1.0, 1)
    assert v1.num_edges == 0
    assert np.allclose(v1.normalized_adjacency.toarray(), np.eye(20))


def test_drop_edge_binomial_band():
    n = 150
    pairs = np.array([(i, j) for i in range(n) for j in range(i + 1, n)])[:10000]
    g = Graph.from_edges(n, pairs)
    kept = drop_edge(g, 0.5, 11).num_edges
    assert 4800 <= kept <= 5200


def test_drop_edge_view_symmetric_and_deterministic(rng):
    g = Graph.from_edges(25, rng.integers(0, 25, size=(60, 2)))
    a, b = drop_edge(g, 0.3, 5), drop_edge(g, 0.3, 5)
    assert np.array_equal(a.edge_mask, b.edge_mask)
    A = a.adjacency.toarray()
    assert np.array_equal(A, A.T)
    d = a.directed_mask
    assert d.size == g.indices.size
    with pytest.raises(RangeError):
        drop_edge(g, 1.5, 0)


def test_drop_rate_in_unit_interval(rng):
    rhos = np.array([sample_drop_rate(rng) for _ in range(2000)])
    assert rhos.min() >= 0 and rhos.max() <= 1
    # truncated standard normal on [0,1] has mean ~0.46
    assert abs(rhos.mean() - 0.4599) < 0.02
