"""Reconciliation of local results into one graph through a 0/1 program.

Variables: ``B_i_j`` (edge i -> j), ``S_i_j`` (i, j share a child, i < j) and
``V_i_j_k`` (i -> k <- j, i < j). They exist only for pairs or triples whose
members are in each other's Markov blankets.
"""
from __future__ import annotations

import json
import logging
import time
from collections import Counter
from dataclasses import dataclass, field
from fractions import Fraction
from itertools import combinations

import numpy as np

from . import ilp
from .graph import dagness, shortest_cycle
from .markov import MarkovBlankets

log = logging.getLogger(__name__)

SCHEMES = ("LP1", "LP2", "LP3", "LP4")
NONE, TYPE1, TYPE2, TYPE3 = "none", "type1_addition", "type2_acute", "type3_undirected"

PAIR_STATUS = {
    (0, 0): NONE, (2, 0): NONE, (0, 2): NONE, (2, 2): NONE,
    (0, 1): TYPE1, (1, 0): TYPE1,
    (1, 1): TYPE2,
    (2, 1): TYPE3, (1, 2): TYPE3,
}

_HALF, _TWO_THIRDS = Fraction(1, 2), Fraction(2, 3)

# (raw_ij, raw_ji) -> (weight_ij, weight_ji) per scheme
WEIGHT_TABLE: dict[str, dict[tuple[int, int], tuple[Fraction, Fraction]]] = {}
for _pair in PAIR_STATUS:
    _a, _b = _pair
    _ind = (Fraction(int(_a != 0)), Fraction(int(_b != 0)))
    _id = (Fraction(_a), Fraction(_b))
    WEIGHT_TABLE.setdefault("LP1", {})[_pair] = _ind
    WEIGHT_TABLE.setdefault("LP2", {})[_pair] = _id
    WEIGHT_TABLE.setdefault("LP3", {})[_pair] = _id
    WEIGHT_TABLE.setdefault("LP4", {})[_pair] = _ind
WEIGHT_TABLE["LP3"][(2, 1)] = (Fraction(2), Fraction(0))
WEIGHT_TABLE["LP3"][(1, 2)] = (Fraction(0), Fraction(2))
WEIGHT_TABLE["LP4"].update({
    (0, 1): (Fraction(0), _HALF),
    (1, 0): (_HALF, Fraction(0)),
    (1, 1): (_HALF, _HALF),
    (2, 1): (_TWO_THIRDS, Fraction(0)),
    (1, 2): (Fraction(0), _TWO_THIRDS),
})


@dataclass
class MergedGraph:
    raw: np.ndarray
    weighted: np.ndarray | None = None
    scheme: str | None = None

    @property
    def d(self) -> int:
        return self.raw.shape[0]

    def binarized(self) -> np.ndarray:
        return (self.raw != 0).astype(float)


@dataclass
class ConflictReport:
    status: dict[tuple[int, int], str]
    counts: dict[str, int]

    def to_json(self) -> str:
        return json.dumps(self.counts, sort_keys=True)


def naive_merge(locals_, d: int | None = None) -> MergedGraph:
    """Entrywise sum of the center-restricted local adjacencies."""
    mats = [np.asarray(getattr(r, "b_hat", r)) != 0 for r in locals_]
    if d is None:
        d = mats[0].shape[0] if mats else 0
    raw = np.zeros((d, d), dtype=int)
    for m in mats:
        raw += m.astype(int)
    if raw.size and raw.max() > 2:
        i, j = np.unravel_index(int(np.argmax(raw)), raw.shape)
        raise ValueError(f"merged entry ({i}, {j}) = {raw[i, j]} > 2: "
                         "a local result has edges outside its center row/column")
    return MergedGraph(raw)


def classify_pair(a: int, b: int) -> str:
    return PAIR_STATUS[(int(a), int(b))]


def classify_quadruplet(bi_ij: int, bi_ji: int, bj_ij: int, bj_ji: int) -> str:
    """Conflict type of the four entries that two local results assign to a pair."""
    q = [int(bool(v)) for v in (bi_ij, bi_ji, bj_ij, bj_ji)]
    nnz = sum(q)
    if nnz == 0 or nnz == 4:
        return NONE
    if nnz == 1:
        return TYPE1
    if nnz == 3:
        return TYPE3
    if q == [1, 0, 1, 0] or q == [0, 1, 0, 1]:
        return NONE
    return TYPE2


def classify_conflicts(locals_or_merged, d: int | None = None) -> ConflictReport:
    merged = locals_or_merged if isinstance(locals_or_merged, MergedGraph) \
        else naive_merge(locals_or_merged, d)
    raw = merged.raw
    status = {}
    counts = Counter({NONE: 0, TYPE1: 0, TYPE2: 0, TYPE3: 0})
    for i, j in combinations(range(merged.d), 2):
        s = classify_pair(raw[i, j], raw[j, i])
        counts[s] += 1
        if raw[i, j] or raw[j, i]:
            status[(i, j)] = s
    return ConflictReport(status, dict(counts))


def apply_weighting(merged: MergedGraph, scheme: str = "LP3") -> MergedGraph:
    if scheme not in SCHEMES:
        raise ValueError(f"unknown weighting scheme {scheme!r}")
    raw = merged.raw
    if raw.size and (raw.min() < 0 or raw.max() > 2):
        raise ValueError("raw merge entries must lie in {0, 1, 2}")
    table = WEIGHT_TABLE[scheme]
    w = np.zeros(raw.shape)
    for i, j in combinations(range(merged.d), 2):
        wij, wji = table[(int(raw[i, j]), int(raw[j, i]))]
        w[i, j], w[j, i] = float(wij), float(wji)
    return MergedGraph(raw, w, scheme)


@dataclass
class Phase3Model:
    model: ilp.IlpModel
    d: int
    b_vars: dict[tuple[int, int], int]
    s_vars: dict[tuple[int, int], int]
    v_vars: dict[tuple[int, int, int], int]
    dropped_pairs: list[tuple[int, int]] = field(default_factory=list)
    cover_rows: dict[tuple[int, int], ilp.Constraint] = field(default_factory=dict)
    relaxed_pairs: list[tuple[int, int]] = field(default_factory=list)
    cycle_cuts: int = 0

    def to_adjacency(self, assignment) -> np.ndarray:
        adj = np.zeros((self.d, self.d))
        for (i, j), v in self.b_vars.items():
            if assignment[v]:
                adj[i, j] = 1.0
        return adj


def _mutual(mbs: MarkovBlankets, i: int, j: int) -> bool:
    return j in mbs.sets[i] and i in mbs.sets[j]


def build_ilp(merged: MergedGraph, mbs: MarkovBlankets) -> Phase3Model:
    """Variables, objective, consistency rows, fixings and 2-cycle exclusions.

    Row order: per mutual pair ``i < j`` the 2-cycle row then the cover row
    ``B_ij + B_ji + S_ij >= 1``; per ``V_ijk`` the rows ``V <= B_ik``,
    ``V <= B_jk``, ``B_ik + B_jk <= 1 + V``, ``V <= S_ij``; per spouse
    variable ``S_ij <= sum_k V_ijk``. A cover row whose three variables are
    all fixed to zero is dropped and reported in ``dropped_pairs``.
    """
    raw = merged.raw
    weights = merged.weighted if merged.weighted is not None else raw.astype(float)
    d = raw.shape[0]
    if mbs.d != d:
        raise ValueError(f"merged graph has d={d} but blankets have d={mbs.d}")
    m = ilp.IlpModel()
    pairs = [(i, j) for i, j in combinations(range(d), 2) if _mutual(mbs, i, j)]
    b_vars, s_vars, v_vars = {}, {}, {}
    for i, j in pairs:
        b_vars[(i, j)] = m.add_var(f"B_{i}_{j}", weights[i, j])
        b_vars[(j, i)] = m.add_var(f"B_{j}_{i}", weights[j, i])
    for i, j in pairs:
        s_vars[(i, j)] = m.add_var(f"S_{i}_{j}")
    mutual = {p for p in pairs}
    for i, j in pairs:
        for k in range(d):
            if k in (i, j):
                continue
            if tuple(sorted((i, k))) not in mutual or tuple(sorted((j, k))) not in mutual:
                continue
            if raw[i, k] != 0 and raw[j, k] != 0:
                v_vars[(i, j, k)] = m.add_var(f"V_{i}_{j}_{k}")

    # fixings: no local support for either orientation
    for i, j in pairs:
        if raw[i, j] == 0 and raw[j, i] == 0:
            m.fix(b_vars[(i, j)], 0)
            m.fix(b_vars[(j, i)], 0)
    v_by_pair: dict[tuple[int, int], list[int]] = {p: [] for p in pairs}
    for (i, j, k), v in v_vars.items():
        v_by_pair[(i, j)].append(v)
    for p in pairs:
        if not v_by_pair[p]:
            m.fix(s_vars[p], 0)

    dropped = []
    cover = {}
    for i, j in pairs:
        bij, bji, sij = b_vars[(i, j)], b_vars[(j, i)], s_vars[(i, j)]
        m.add_constraint([(bij, 1), (bji, 1)], "<=", 1)
        if all(m.fixings.get(v) == 0 for v in (bij, bji, sij)):
            dropped.append((i, j))
            log.debug("blanket pair (%d, %d): cover row dropped", i, j)
            continue
        cover[(i, j)] = m.add_constraint([(bij, 1), (bji, 1), (sij, 1)], ">=", 1)
    for (i, j, k), v in v_vars.items():
        bik, bjk, sij = b_vars[(i, k)], b_vars[(j, k)], s_vars[(i, j)]
        m.add_constraint([(v, 1), (bik, -1)], "<=", 0)
        m.add_constraint([(v, 1), (bjk, -1)], "<=", 0)
        m.add_constraint([(bik, 1), (bjk, 1), (v, -1)], "<=", 1)
        m.add_constraint([(v, 1), (sij, -1)], "<=", 0)
    for p in pairs:
        if v_by_pair[p]:
            m.add_constraint([(s_vars[p], 1)] + [(v, -1) for v in v_by_pair[p]], "<=", 0)
    if dropped:
        log.warning("%d blanket pairs have no supporting local edge and no possible common "
                    "child; their cover rows were dropped", len(dropped))
    return Phase3Model(m, d, b_vars, s_vars, v_vars, dropped, cover)


def truth_merge(truth) -> MergedGraph:
    """The merge produced when every local result is exact: ``2 * B``."""
    b = (np.asarray(getattr(truth, "adj", truth)) != 0).astype(int)
    return MergedGraph(2 * b)


def truth_assignment(p3: Phase3Model, truth) -> np.ndarray | None:
    """``B`` from the edges, ``V_ijk = 1`` iff ``i -> k <- j``, ``S`` from ``V``.

    Returns ``None`` when a true edge has no variable (blankets too small).
    """
    b = np.asarray(getattr(truth, "adj", truth)) != 0
    x = np.zeros(p3.model.num_vars, dtype=np.int8)
    for i, j in zip(*np.nonzero(b)):
        v = p3.b_vars.get((int(i), int(j)))
        if v is None:
            return None
        x[v] = 1
    for (i, j, k), v in p3.v_vars.items():
        x[v] = int(b[i, k] and b[j, k])
    for (i, j), s in p3.s_vars.items():
        x[s] = int(any(b[i, k] and b[j, k] for k in range(p3.d)))
    return x


def ground_truth_feasibility(truth, mbs_true: MarkovBlankets, scheme: str = "LP3") -> bool:
    merged = apply_weighting(truth_merge(truth), scheme)
    p3 = build_ilp(merged, mbs_true)
    x = truth_assignment(p3, truth)
    if x is None:
        return False
    ok, _ = ilp.verify(p3.model, x)
    return ok


def _selection_key(adj: np.ndarray):
    edges = tuple(zip(*(a.tolist() for a in np.nonzero(adj))))
    return (dagness(adj), int((adj != 0).sum()), edges)


def select_solution(pool) -> np.ndarray:
    """Lowest DAGness, then fewest edges, then the lexicographically smallest edge list."""
    graphs = [np.asarray(g) for g in pool]
    if not graphs:
        raise ValueError("empty solution pool")
    return min(graphs, key=_selection_key)


def relax_covers(p3: Phase3Model, conflict_vars) -> list[tuple[int, int]]:
    """Remove the cover rows that touch ``conflict_vars`` (all of them if empty)."""
    conflict = set(conflict_vars)
    doomed = [pair for pair, row in p3.cover_rows.items()
              if not conflict or conflict.intersection(row.vars)]
    rows = {id(p3.cover_rows.pop(pair)) for pair in doomed}
    p3.model.constraints = [r for r in p3.model.constraints if id(r) not in rows]
    p3.relaxed_pairs.extend(doomed)
    return doomed


def solve_phase3(p3: Phase3Model, pool_capacity: int = 16, time_budget: float = 300.0):
    """Solve; on infeasibility drop the offending cover rows and retry."""
    start = time.perf_counter()
    while True:
        left = max(time_budget - (time.perf_counter() - start), 0.0)
        pool = ilp.solve(p3.model, pool_capacity, left)
        if pool.status != "infeasible":
            return pool
        doomed = relax_covers(p3, pool.conflict_vars)
        if not doomed:
            return pool
        log.warning("0/1 model infeasible; dropped %d cover rows and re-solving", len(doomed))


@dataclass
class RepairResult:
    graph: np.ndarray
    is_dag: bool
    rounds: int
    objective: float | None
    status: str
    proven: bool
    cuts: list[list[int]] = field(default_factory=list)
    solver_stats: list[dict] = field(default_factory=list)
    pool_sizes: list[int] = field(default_factory=list)


def cycle_repair(p3: Phase3Model, pool_capacity: int = 16, max_rounds: int = 50,
                 time_budget: float = 300.0) -> RepairResult:
    """Solve, select, and cut the shortest cycle of the selection until acyclic.

    Each round adds ``sum of B over the cycle's edges <= len(cycle) - 1``. After
    ``max_rounds`` the lowest-DAGness selection seen is returned with
    ``is_dag=False``.
    """
    if max_rounds < 1:
        raise ValueError("max_rounds must be >= 1")
    best = None
    cuts = []
    stats = []
    sizes = []
    objective = None
    for rnd in range(1, max_rounds + 1):
        pool = solve_phase3(p3, pool_capacity, time_budget)
        stats.append(pool.stats)
        sizes.append(len(pool.solutions))
        if pool.status == "infeasible" or not pool.solutions:
            if best is not None:
                break
            return RepairResult(np.zeros((p3.d, p3.d)), True, rnd, None, pool.status,
                                pool.proven, cuts, stats, sizes)
        objective = pool.objective_value
        graph = select_solution([p3.to_adjacency(s) for s in pool.solutions])
        key = _selection_key(graph)
        if best is None or key < best[0]:
            best = (key, graph, pool.status, pool.proven)
        cycle = shortest_cycle(graph)
        if cycle is None:
            return RepairResult(graph, True, rnd, objective, pool.status, pool.proven,
                                cuts, stats, sizes)
        edges = [(cycle[t], cycle[(t + 1) % len(cycle)]) for t in range(len(cycle))]
        p3.model.add_constraint([(p3.b_vars[e], 1) for e in edges], "<=", len(edges) - 1,
                                f"cut{len(cuts) + 1}")
        p3.cycle_cuts += 1
        cuts.append(cycle)
    log.warning("cycle repair stopped after %d rounds without reaching a DAG", len(stats))
    _, graph, status, proven = best
    return RepairResult(graph, False, len(stats), objective, status, proven, cuts, stats, sizes)
