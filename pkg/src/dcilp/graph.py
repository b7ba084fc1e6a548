"""Graph containers, acyclicity checks, DAGness and evaluation metrics.

Adjacency convention: ``adj[i, j] != 0`` means an edge ``i -> j``. An
undirected edge between ``i`` and ``j`` is the symmetric pair
``adj[i, j] = adj[j, i] = 1``.
"""
from __future__ import annotations

import json
from collections import deque
from dataclasses import asdict, dataclass
from pathlib import Path
from typing import Iterable, Sequence

import numpy as np
from scipy.linalg import expm


@dataclass
class CausalGraph:
    """A ``d x d`` adjacency matrix with optional variable names."""

    adj: np.ndarray
    labels: list[str] | None = None

    def __post_init__(self):
        self.adj = np.asarray(self.adj, dtype=float)
        if self.adj.ndim != 2 or self.adj.shape[0] != self.adj.shape[1]:
            raise ValueError(f"adjacency must be square, got shape {self.adj.shape}")
        if np.any(np.diag(self.adj) != 0):
            raise ValueError("adjacency has nonzero diagonal entries")
        if self.labels is not None and len(self.labels) != self.d:
            raise ValueError("labels length does not match d")

    @property
    def d(self) -> int:
        return self.adj.shape[0]

    def edges(self) -> list[tuple[int, int]]:
        return edge_list(self.adj)

    @classmethod
    def empty(cls, d: int) -> "CausalGraph":
        return cls(np.zeros((d, d)))

    @classmethod
    def from_edges(cls, d: int, edges: Iterable[tuple], labels=None) -> "CausalGraph":
        adj = np.zeros((d, d))
        for e in edges:
            i, j = int(e[0]), int(e[1])
            adj[i, j] = float(e[2]) if len(e) > 2 else 1.0
        return cls(adj, labels)


@dataclass
class MetricsReport:
    tpr: float
    fdr: float
    fpr: float
    shd: int
    nnz: int

    @property
    def edge_count(self) -> int:
        return self.nnz

    def to_dict(self) -> dict:
        return asdict(self)

    def to_json(self) -> str:
        return json.dumps(self.to_dict(), sort_keys=True)


def _as_array(g) -> np.ndarray:
    return g.adj if isinstance(g, CausalGraph) else np.asarray(g, dtype=float)


def edge_list(adj) -> list[tuple[int, int]]:
    """Directed edges ``(i, j)`` of the nonzero entries, row-major order."""
    rows, cols = np.nonzero(_as_array(adj))
    return [(int(i), int(j)) for i, j in zip(rows, cols)]


def topological_order(g) -> list[int] | None:
    """Kahn's algorithm with smallest-index-first tie breaking.

    Returns ``None`` when the graph has a directed cycle.
    """
    a = _as_array(g) != 0
    d = a.shape[0]
    indeg = a.sum(axis=0).astype(int)
    ready = [i for i in range(d) if indeg[i] == 0]
    order = []
    # ready is kept sorted; d is small enough for list insertion
    while ready:
        u = ready.pop(0)
        order.append(u)
        for v in np.flatnonzero(a[u]):
            indeg[v] -= 1
            if indeg[v] == 0:
                _insort(ready, int(v))
    return order if len(order) == d else None


def _insort(lst: list, x: int) -> None:
    lo, hi = 0, len(lst)
    while lo < hi:
        mid = (lo + hi) // 2
        if lst[mid] < x:
            lo = mid + 1
        else:
            hi = mid
    lst.insert(lo, x)


def is_dag(g) -> bool:
    return topological_order(g) is not None


def dagness(g) -> float:
    """``tr(exp(B * B))``; equals ``d`` exactly for DAGs, larger otherwise."""
    b = _as_array(g)
    if b.size == 0:
        return 0.0
    return float(np.trace(expm(b * b)))


def has_two_cycle(g) -> bool:
    a = _as_array(g) != 0
    return bool(np.any(a & a.T))


def shortest_cycle(g) -> list[int] | None:
    """Shortest directed cycle as a node list ``[v0, v1, ..., vk]`` (edge vk -> v0).

    BFS from every node in index order; ties keep the first cycle found.
    """
    a = _as_array(g) != 0
    d = a.shape[0]
    succ = [np.flatnonzero(a[u]).tolist() for u in range(d)]
    best = None
    for s in range(d):
        parent = {s: None}
        queue = deque([s])
        found = None
        while queue and found is None:
            u = queue.popleft()
            for v in succ[u]:
                if v == s:
                    found = u
                    break
                if v not in parent:
                    parent[v] = u
                    queue.append(v)
        if found is None:
            continue
        path = [found]
        while path[-1] != s:
            path.append(parent[path[-1]])
        cycle = path[::-1]
        if best is None or len(cycle) < len(best):
            best = cycle
            if len(best) == 2:
                break
    return best


def markov_blankets_from_dag(g) -> list[set[int]]:
    """Parents, children and spouses of every node of a DAG."""
    a = _as_array(g) != 0
    d = a.shape[0]
    mbs = []
    for i in range(d):
        parents = set(np.flatnonzero(a[:, i]).tolist())
        children = set(np.flatnonzero(a[i]).tolist())
        spouses = set()
        for c in children:
            spouses.update(np.flatnonzero(a[:, c]).tolist())
        mb = parents | children | spouses
        mb.discard(i)
        mbs.append(mb)
    return mbs


def metrics(estimate, truth) -> MetricsReport:
    """TPR, FDR, FPR and SHD of a binary estimate against a true DAG.

    An undirected estimate edge (symmetric pair) counts as one edge; when the
    truth has that adjacency in either orientation it is scored as reversed.
    """
    est = _as_array(estimate) != 0
    tru = _as_array(truth) != 0
    if est.shape != tru.shape:
        raise ValueError(f"dimension mismatch: {est.shape} vs {tru.shape}")
    d = tru.shape[0]
    if has_two_cycle(tru):
        raise ValueError("truth must be a strict DAG")

    undirected = est & est.T
    directed = est & ~est.T
    und_upper = np.triu(undirected, 1)
    tru_skel = tru | tru.T

    tp = int(np.sum(directed & tru))
    rev_dir = int(np.sum(directed & tru.T))
    fp_dir = int(np.sum(directed & ~tru_skel))
    rev_und = int(np.sum(und_upper & tru_skel))
    fp_und = int(np.sum(und_upper & ~tru_skel))

    n_true = int(tru.sum())
    n_pred = int(directed.sum() + und_upper.sum())
    n_false = d * (d - 1) // 2 - n_true
    reversed_ = rev_dir + rev_und
    extra = fp_dir + fp_und
    est_skel = est | est.T
    missing = int(np.sum(tru & ~est_skel))

    tpr = tp / n_true if n_true else 1.0
    fdr = (reversed_ + extra) / n_pred if n_pred else 0.0
    fpr = (reversed_ + extra) / n_false if n_false else 0.0
    return MetricsReport(tpr=float(tpr), fdr=float(fdr), fpr=float(fpr),
                         shd=extra + missing + reversed_, nnz=n_pred)


# --- edge-list text format -------------------------------------------------

def format_edges(g, weighted: bool = True) -> str:
    a = _as_array(g)
    lines = [f"# d={a.shape[0]}"]
    for i, j in edge_list(a):
        w = a[i, j] if weighted else 1.0
        lines.append(f"{i} {j} {_fmt_num(w)}")
    return "\n".join(lines) + "\n"


def _fmt_num(x: float) -> str:
    x = float(x)
    if x == int(x) and abs(x) < 1e15:
        return str(int(x))
    return repr(x)


def parse_edges(text: str, d: int | None = None) -> CausalGraph:
    """Parse ``src dst weight`` lines; ``# d=N`` fixes the node count."""
    triples = []
    for raw in text.splitlines():
        line = raw.strip()
        if line.startswith("#"):
            body = line[1:].strip()
            if body.startswith("d=") and d is None:
                d = int(body[2:])
            continue
        if not line:
            continue
        if "#" in line:
            line = line.split("#", 1)[0].strip()
        parts = line.split()
        if len(parts) not in (2, 3):
            raise ValueError(f"malformed edge line: {raw!r}")
        w = float(parts[2]) if len(parts) == 3 else 1.0
        triples.append((int(parts[0]), int(parts[1]), w))
    if d is None:
        d = 1 + max((max(i, j) for i, j, _ in triples), default=-1)
    return CausalGraph.from_edges(d, triples)


def write_edges(path, g, weighted: bool = True) -> None:
    Path(path).write_text(format_edges(g, weighted), encoding="utf-8")


def read_edges(path, d: int | None = None) -> CausalGraph:
    return parse_edges(Path(path).read_text(encoding="utf-8"), d)


def binarize(adj) -> np.ndarray:
    return (_as_array(adj) != 0).astype(float)


def relabel(adj, perm: Sequence[int]) -> np.ndarray:
    """Node ``i`` becomes node ``perm[i]``."""
    a = _as_array(adj)
    out = np.zeros_like(a)
    p = np.asarray(perm)
    out[np.ix_(p, p)] = a
    return out
