import math

import networkx as nx
import numpy as np
import pytest
from hypothesis import given
from hypothesis import strategies as st

from dcilp import graph
from dcilp.graph import CausalGraph
from conftest import all_digraphs, dags, digraphs, expm_series, to_nx


def test_is_dag_examples():
    assert graph.is_dag(np.zeros((3, 3)))
    two = np.array([[0, 1], [1, 0]])
    assert not graph.is_dag(two)
    chain = np.zeros((3, 3))
    chain[0, 1] = chain[1, 2] = 1
    assert graph.is_dag(chain)


def test_dagness_examples():
    assert graph.dagness(np.zeros((3, 3))) == pytest.approx(3.0, abs=1e-12)
    assert graph.dagness(np.array([[0, 1], [0, 0]])) == pytest.approx(2.0, abs=1e-12)
    two = np.array([[0.0, 1.0], [1.0, 0.0]])
    assert graph.dagness(two) == pytest.approx(2 * math.cosh(1), abs=1e-6)
    assert np.trace(expm_series(two * two)) == pytest.approx(2 * math.cosh(1), abs=1e-12)


@pytest.mark.parametrize("d", [1, 2, 3, 4])
def test_dagness_exhaustive(d):
    for a in all_digraphs(d):
        acyclic = nx.is_directed_acyclic_graph(to_nx(a))
        h = graph.dagness(a)
        assert graph.is_dag(a) == acyclic
        if acyclic:
            assert abs(h - d) <= 1e-9
        else:
            assert h > d + 1e-9


@given(digraphs(max_d=6), st.floats(0.1, 2.0))
def test_dagness_matches_series(a, scale):
    w = a * scale
    assert graph.dagness(w) == pytest.approx(np.trace(expm_series(w * w, 60)), rel=1e-9)


@given(dags(max_d=10))
def test_topological_order_respects_edges(a):
    order = graph.topological_order(a)
    pos = {v: k for k, v in enumerate(order)}
    assert sorted(order) == list(range(a.shape[0]))
    for i, j in graph.edge_list(a):
        assert pos[i] < pos[j]


def test_topological_order_smallest_first():
    a = np.zeros((4, 4))
    a[3, 0] = 1
    assert graph.topological_order(a) == [1, 2, 3, 0]
    assert graph.topological_order(np.array([[0, 1], [1, 0]])) is None


@given(digraphs(max_d=7))
def test_shortest_cycle_is_minimal(a):
    cyc = graph.shortest_cycle(a)
    g = to_nx(a)
    if nx.is_directed_acyclic_graph(g):
        assert cyc is None
        return
    lengths = [nx.shortest_path_length(g, j, i) + 1 for i, j in g.edges if nx.has_path(g, j, i)]
    assert len(cyc) == min(lengths)
    for t in range(len(cyc)):
        assert a[cyc[t], cyc[(t + 1) % len(cyc)]] != 0


@given(dags(max_d=9))
def test_markov_blankets_match_dsep(a):
    g = to_nx(a)
    mbs = graph.markov_blankets_from_dag(a)
    for i in g.nodes:
        expected = set(g.predecessors(i)) | set(g.successors(i))
        for c in g.successors(i):
            expected |= set(g.predecessors(c))
        expected.discard(i)
        assert mbs[i] == expected
        rest = set(g.nodes) - expected - {i}
        if rest:
            assert nx.is_d_separator(g, {i}, rest, expected)


def test_metrics_examples():
    truth = np.zeros((2, 2))
    truth[0, 1] = 1
    rev = truth.T.copy()
    m = graph.metrics(rev, truth)
    assert (m.shd, m.fdr, m.tpr) == (1, 1.0, 0.0)
    m = graph.metrics(np.zeros((2, 2)), truth)
    assert (m.shd, m.tpr) == (1, 0.0)
    chain = np.zeros((6, 6))
    for i in range(5):
        chain[i, i + 1] = 1
    m = graph.metrics(chain, chain)
    assert (m.tpr, m.fdr, m.shd, m.nnz) == (1.0, 0.0, 0, 5)


def test_metrics_undirected_counts_once():
    truth = np.zeros((3, 3))
    truth[0, 1] = 1
    est = np.zeros((3, 3))
    est[0, 1] = est[1, 0] = 1  # matches the true adjacency: reversed
    est[1, 2] = est[2, 1] = 1  # no true adjacency: extra
    m = graph.metrics(est, truth)
    assert m.nnz == 2 and m.shd == 2 and m.tpr == 0.0 and m.fdr == 1.0
    assert m.fpr == pytest.approx(2 / 2)


def test_metrics_errors():
    with pytest.raises(ValueError):
        graph.metrics(np.zeros((2, 2)), np.zeros((3, 3)))
    with pytest.raises(ValueError):
        graph.metrics(np.zeros((2, 2)), np.ones((2, 2)) - np.eye(2))


def _metrics_oracle(est, truth):
    d = truth.shape[0]
    t_edges = {(i, j) for i in range(d) for j in range(d) if truth[i, j]}
    e = {(i, j) for i in range(d) for j in range(d) if est[i, j]}
    und = {(i, j) for (i, j) in e if i < j and (j, i) in e}
    dirs = {(i, j) for (i, j) in e if (j, i) not in e}
    skel = {frozenset(x) for x in t_edges}
    tp = len(dirs & t_edges)
    rev = len({x for x in dirs if (x[1], x[0]) in t_edges}) + len({x for x in und if frozenset(x) in skel})
    extra = len({x for x in dirs | und if frozenset(x) not in skel})
    est_skel = {frozenset(x) for x in e}
    missing = len({x for x in t_edges if frozenset(x) not in est_skel})
    p = len(dirs) + len(und)
    return tp, rev, extra, missing, p


@given(dags(max_d=7), digraphs(max_d=7))
def test_metrics_against_oracle(truth, est):
    d = min(truth.shape[0], est.shape[0])
    truth, est = truth[:d, :d], est[:d, :d]
    m = graph.metrics(est, truth)
    tp, rev, extra, missing, p = _metrics_oracle(est, truth)
    t = int(truth.sum())
    f = d * (d - 1) // 2 - t
    assert m.shd == extra + missing + rev
    assert m.nnz == p
    assert m.tpr == pytest.approx(tp / t if t else 1.0)
    assert m.fdr == pytest.approx((rev + extra) / p if p else 0.0)
    assert m.fpr == pytest.approx((rev + extra) / f if f else 0.0)
    assert 0 <= m.tpr <= 1 and 0 <= m.fdr <= 1


@given(dags(max_d=8))
def test_metrics_identity(a):
    m = graph.metrics(a, a)
    assert m.shd == 0 and m.tpr == 1.0 and m.fdr == 0.0


@given(dags(max_d=7), digraphs(max_d=7), st.randoms())
def test_shd_invariant_under_relabeling(truth, est, rnd):
    d = min(truth.shape[0], est.shape[0])
    truth, est = truth[:d, :d], est[:d, :d]
    perm = list(range(d))
    rnd.shuffle(perm)
    a = graph.metrics(est, truth)
    b = graph.metrics(graph.relabel(est, perm), graph.relabel(truth, perm))
    assert a == b


@given(digraphs(max_d=6))
def test_edge_file_round_trip(a):
    w = a * 0.75
    back = graph.parse_edges(graph.format_edges(w))
    assert np.array_equal(back.adj, w)


def test_parse_edges_comments_and_errors():
    g = graph.parse_edges("# d=4\n0 1 2.5  # trailing\n\n2 3\n")
    assert g.d == 4 and g.adj[0, 1] == 2.5 and g.adj[2, 3] == 1.0
    with pytest.raises(ValueError):
        graph.parse_edges("0 1 2 3\n")


def test_causal_graph_validation():
    with pytest.raises(ValueError):
        CausalGraph(np.eye(2))
    with pytest.raises(ValueError):
        CausalGraph(np.zeros((2, 3)))
    g = CausalGraph.from_edges(3, [(0, 1), (1, 2, 0.5)])
    assert g.edges() == [(0, 1), (1, 2)]
    assert graph.has_two_cycle(np.array([[0, 1], [1, 0]]))
