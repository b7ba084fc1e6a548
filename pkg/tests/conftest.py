import itertools

import networkx as nx
import numpy as np
import pytest
from hypothesis import HealthCheck, settings
from hypothesis import strategies as st

settings.register_profile("default", max_examples=60, deadline=None,
                          suppress_health_check=[HealthCheck.too_slow])
settings.load_profile("default")


def expm_series(a, terms=40):
    """Truncated power series of the matrix exponential."""
    a = np.asarray(a, dtype=float)
    out = np.eye(a.shape[0])
    term = np.eye(a.shape[0])
    for k in range(1, terms):
        term = term @ a / k
        out = out + term
    return out


def to_nx(adj):
    g = nx.DiGraph()
    g.add_nodes_from(range(adj.shape[0]))
    g.add_edges_from(zip(*(v.tolist() for v in np.nonzero(adj))))
    return g


def all_digraphs(d):
    """Every loop-free directed graph on ``d`` nodes."""
    slots = [(i, j) for i in range(d) for j in range(d) if i != j]
    for bits in itertools.product((0, 1), repeat=len(slots)):
        a = np.zeros((d, d))
        for (i, j), b in zip(slots, bits):
            a[i, j] = b
        yield a


@st.composite
def dags(draw, max_d=8, min_d=1):
    """Random strict DAGs: upper-triangular support under a random permutation."""
    d = draw(st.integers(min_d, max_d))
    bits = draw(st.lists(st.booleans(), min_size=d * (d - 1) // 2, max_size=d * (d - 1) // 2))
    perm = draw(st.permutations(range(d)))
    a = np.zeros((d, d))
    iu = np.triu_indices(d, 1)
    a[iu] = np.asarray(bits, dtype=float)
    p = np.asarray(perm, dtype=int)
    out = np.zeros_like(a)
    out[np.ix_(p, p)] = a
    return out


@st.composite
def digraphs(draw, max_d=6):
    d = draw(st.integers(1, max_d))
    bits = draw(st.lists(st.booleans(), min_size=d * d, max_size=d * d))
    a = np.asarray(bits, dtype=float).reshape(d, d)
    np.fill_diagonal(a, 0.0)
    return a


@pytest.fixture
def collider():
    """0 -> 2 <- 1."""
    a = np.zeros((3, 3))
    a[0, 2] = a[1, 2] = 1
    return a


ACCEPTANCE_LINES: list[str] = []


@pytest.fixture
def acceptance():
    """Record one pass/fail line for an acceptance criterion."""
    def record(num, ok, detail):
        line = f"criterion {num}: {'PASS' if ok else 'FAIL'}  {detail}"
        ACCEPTANCE_LINES.append(line)
        print(line)
        return ok
    return record


def pytest_terminal_summary(terminalreporter):
    if ACCEPTANCE_LINES:
        terminalreporter.section("acceptance criteria")
        for line in sorted(ACCEPTANCE_LINES, key=lambda s: int(s.split()[1].rstrip(":"))):
            terminalreporter.write_line(line)
