"""Local causal discovery on Markov-blanket scopes.

Two built-in learners share a decomposable Gaussian BIC score: greedy
equivalence search over CPDAGs (the default) and best-improvement hill
climbing over DAGs followed by CPDAG conversion. Any callable that maps an
``n x p`` data block to a ``p x p`` adjacency can replace them.
"""
from __future__ import annotations

import itertools
import logging
import math
from concurrent.futures import ProcessPoolExecutor
from dataclasses import dataclass, field

import numpy as np

from .markov import MarkovBlankets

log = logging.getLogger(__name__)

RIDGE = 1e-8
TIE_TOL = 1e-9
# move priorities for ties: delete > reverse > add
_DELETE, _REVERSE, _ADD = 0, 1, 2


@dataclass
class Subproblem:
    center: int
    scope: list[int]
    data_view: np.ndarray

    @property
    def local_center(self) -> int:
        return self.scope.index(self.center)


@dataclass
class LocalResult:
    center: int
    b_hat: np.ndarray
    diagnostic: str = ""


@dataclass
class ClimbResult:
    dag: np.ndarray
    score: float
    trace: list[float] = field(default_factory=list)
    moves: list[tuple[str, int, int]] = field(default_factory=list)


def extract_subproblem(data, mbs: MarkovBlankets, i: int) -> Subproblem:
    x = np.asarray(getattr(data, "values", data))
    scope = mbs.scope(i)
    return Subproblem(i, scope, x[:, scope])


class _BicScorer:
    """Decomposable Gaussian BIC pieces computed from the sample covariance."""

    def __init__(self, x: np.ndarray, penalty: float):
        self.n = x.shape[0]
        xc = x - x.mean(axis=0)
        self.cov = xc.T @ xc / self.n
        self.edge_cost = penalty * math.log(self.n) / 2.0
        self._floor = 1e-12 * max(float(np.max(np.diag(self.cov), initial=0.0)), 1e-300)

    def local(self, j: int, parents) -> float:
        """``-(n/2) log(RSS_j / n)`` for regressing node ``j`` on ``parents``."""
        c = self.cov
        if len(parents) == 0:
            resid = c[j, j]
        else:
            pa = list(parents)
            cpp = c[np.ix_(pa, pa)]
            cpj = c[pa, j]
            try:
                coef = np.linalg.solve(cpp, cpj)
                if not np.all(np.isfinite(coef)):
                    raise np.linalg.LinAlgError
            except np.linalg.LinAlgError:
                coef = np.linalg.solve(cpp + RIDGE * np.eye(len(pa)), cpj)
            resid = c[j, j] - cpj @ coef
        return -0.5 * self.n * math.log(max(resid, self._floor))


def _closure(adj: np.ndarray) -> np.ndarray:
    """``reach[u, v]``: a directed path of length >= 1 from ``u`` to ``v``."""
    reach = adj.copy()
    while True:
        nxt = reach | ((reach.astype(np.int32) @ reach.astype(np.int32)) > 0)
        if np.array_equal(nxt, reach):
            return reach
        reach = nxt


def hill_climb(x: np.ndarray, penalty: float = 1.0, max_moves: int | None = None) -> ClimbResult:
    """Greedy add/delete/reverse search from the empty DAG.

    Stops when no legal move improves the BIC score by more than ``TIE_TOL``.
    Moves whose gains tie within ``TIE_TOL`` are ordered delete, reverse, add,
    then by ``(src, dst)``.
    """
    x = np.asarray(x, dtype=float)
    p = x.shape[1]
    scorer = _BicScorer(x, penalty)
    adj = np.zeros((p, p), dtype=bool)
    parents = [set() for _ in range(p)]
    node_score = np.array([scorer.local(j, ()) for j in range(p)])
    # gain[i, j]: change of node j's score when toggling i in parents(j)
    gain = np.full((p, p), -np.inf)

    def refresh(j):
        for i in range(p):
            if i != j:
                gain[i, j] = scorer.local(j, sorted(parents[j] ^ {i})) - node_score[j]

    for j in range(p):
        refresh(j)

    total = float(node_score.sum())
    trace = [total]
    moves = []
    cost = scorer.edge_cost
    eye = np.eye(p, dtype=bool)
    limit = max_moves if max_moves is not None else 10 * p * p + 10

    while len(moves) < limit and p > 1:
        reach = _closure(adj)
        add_ok = ~adj & ~adj.T & ~reach.T & ~eye
        rev_ok = adj & ~((adj.astype(np.int32) @ reach.astype(np.int32)) > 0)
        cand = np.full((3, p, p), -np.inf)
        cand[_ADD][add_ok] = (gain - cost)[add_ok]
        cand[_DELETE][adj] = (gain + cost)[adj]
        cand[_REVERSE][rev_ok] = (gain + gain.T)[rev_ok]
        best = float(cand.max())
        if not best > TIE_TOL:
            break
        kind, i, j = (int(v) for v in np.argwhere(cand >= best - TIE_TOL * max(1.0, abs(best)))[0])
        if kind == _ADD:
            adj[i, j] = True
            parents[j].add(i)
            changed = (j,)
            name = "add"
        elif kind == _DELETE:
            adj[i, j] = False
            parents[j].discard(i)
            changed = (j,)
            name = "delete"
        else:
            adj[i, j] = False
            adj[j, i] = True
            parents[j].discard(i)
            parents[i].add(j)
            changed = (i, j)
            name = "reverse"
        for v in changed:
            node_score[v] = scorer.local(v, sorted(parents[v]))
        for v in changed:
            refresh(v)
        total = float(node_score.sum()) - cost * int(adj.sum())
        trace.append(total)
        moves.append((name, i, j))

    return ClimbResult(adj.astype(float), total, trace, moves)


def dag_to_cpdag(dag: np.ndarray) -> np.ndarray:
    """Compelled edges stay directed; reversible ones become symmetric pairs.

    Edges in v-structures are directed first, then Meek rules R1-R3 are
    applied to a fixed point.
    """
    a = np.asarray(dag) != 0
    p = a.shape[0]
    skel = a | a.T
    directed = np.zeros_like(a)
    for c in range(p):
        pa = np.flatnonzero(a[:, c])
        for ii, u in enumerate(pa):
            for w in pa[ii + 1:]:
                if not skel[u, w]:
                    directed[u, c] = directed[w, c] = True
    undirected = skel & ~directed & ~directed.T

    changed = True
    while changed:
        changed = False
        for u, v in zip(*np.nonzero(np.triu(undirected))):
            for b, c in ((u, v), (v, u)):
                if _meek_orients(b, c, directed, undirected, skel):
                    directed[b, c] = True
                    undirected[b, c] = undirected[c, b] = False
                    changed = True
                    break
    return (directed | undirected).astype(float)


def _meek_orients(b, c, directed, undirected, skel) -> bool:
    """Whether the undirected edge ``b - c`` must be oriented ``b -> c``."""
    # R1: a -> b - c with a, c non-adjacent
    into_b = np.flatnonzero(directed[:, b])
    if any(not skel[a, c] and a != c for a in into_b):
        return True
    # R2: b -> a -> c
    if np.any(directed[b] & directed[:, c]):
        return True
    # R3: b - a1 -> c, b - a2 -> c, a1 and a2 non-adjacent
    mids = np.flatnonzero(undirected[b] & directed[:, c])
    for k, a1 in enumerate(mids):
        for a2 in mids[k + 1:]:
            if not skel[a1, a2]:
                return True
    return False


@dataclass
class BicHillClimber:
    """Default local learner: BIC hill climbing, returned as a CPDAG."""

    penalty: float = 1.0

    def __call__(self, x: np.ndarray) -> np.ndarray:
        x = np.asarray(x, dtype=float)
        if x.shape[1] == 1:
            return np.zeros((1, 1))
        return dag_to_cpdag(hill_climb(x, self.penalty).dag)


class _CachedScore:
    def __init__(self, x: np.ndarray, penalty: float):
        self.scorer = _BicScorer(x, penalty)
        self.edge_cost = self.scorer.edge_cost
        self._cache: dict[tuple[int, frozenset], float] = {}

    def __call__(self, j: int, parents) -> float:
        key = (j, frozenset(parents))
        val = self._cache.get(key)
        if val is None:
            val = self.scorer.local(j, sorted(key[1]))
            self._cache[key] = val
        return val


def _neighbors(g: np.ndarray, y: int) -> set[int]:
    return set(np.flatnonzero(g[y] & g[:, y]).tolist())


def _parents(g: np.ndarray, y: int) -> set[int]:
    return set(np.flatnonzero(g[:, y] & ~g[y]).tolist())


def _adjacent(g: np.ndarray, x: int) -> set[int]:
    return set(np.flatnonzero(g[x] | g[:, x]).tolist())


def _is_clique(g: np.ndarray, nodes) -> bool:
    return all(g[a, b] or g[b, a] for a, b in itertools.combinations(sorted(nodes), 2))


def _clique_extensions(g: np.ndarray, base: set[int], pool: list[int]):
    """Subsets ``T`` of ``pool`` (as sorted tuples) with ``base | T`` a clique."""
    out = []

    def grow(start, chosen):
        out.append(tuple(chosen))
        for k in range(start, len(pool)):
            v = pool[k]
            if all(g[v, u] or g[u, v] for u in base) and all(g[v, u] or g[u, v] for u in chosen):
                grow(k + 1, chosen + [v])

    grow(0, [])
    return out


def _semi_directed_blocked(g: np.ndarray, y: int, x: int, block: set[int]) -> bool:
    """Every semi-directed path from ``y`` to ``x`` meets ``block``."""
    seen = {y}
    stack = [y]
    while stack:
        u = stack.pop()
        for w in np.flatnonzero(g[u]).tolist():
            if w == x:
                return False
            if w not in seen and w not in block:
                seen.add(w)
                stack.append(w)
    return True


def pdag_to_dag(pdag: np.ndarray) -> np.ndarray:
    """A consistent DAG extension of a PDAG (Dor-Tarsi sink elimination)."""
    g = np.asarray(pdag) != 0
    g = g.copy()
    p = g.shape[0]
    dag = g & ~g.T
    alive = list(range(p))
    while alive:
        for y in alive:
            if any(g[y, w] and not g[w, y] for w in alive):
                continue
            nb = [w for w in alive if g[y, w] and g[w, y]]
            adj = [w for w in alive if w != y and (g[y, w] or g[w, y])]
            if all(g[n, a] or g[a, n] for n in nb for a in adj if a != n):
                for n in nb:
                    dag[n, y] = True
                    dag[y, n] = False
                g[y, :] = False
                g[:, y] = False
                alive.remove(y)
                break
        else:
            raise ValueError("PDAG admits no consistent DAG extension")
    return dag


def _recomplete(g: np.ndarray) -> np.ndarray:
    return dag_to_cpdag(pdag_to_dag(g)) != 0


def ges(x: np.ndarray, penalty: float = 1.0) -> np.ndarray:
    """Greedy equivalence search: forward edge insertions, then deletions.

    Works on CPDAGs with the insert/delete operators and validity tests of
    Chickering (2002). Each step applies the highest-scoring valid operator;
    ties are broken by ``(x, y, subset)``. Returns the final CPDAG.
    """
    x = np.asarray(x, dtype=float)
    p = x.shape[1]
    score = _CachedScore(x, penalty)
    cost = score.edge_cost
    g = np.zeros((p, p), dtype=bool)

    while True:  # forward phase
        cands = []
        for y in range(p):
            pa_y, nb_y = _parents(g, y), _neighbors(g, y)
            for xx in range(p):
                if xx == y or g[xx, y] or g[y, xx]:
                    continue
                adj_x = _adjacent(g, xx)
                na = nb_y & adj_x
                if not _is_clique(g, na):
                    continue
                for t in _clique_extensions(g, na, sorted(nb_y - adj_x)):
                    base = pa_y | na | set(t)
                    delta = score(y, base | {xx}) - score(y, base) - cost
                    if delta > TIE_TOL:
                        cands.append((-delta, xx, y, t, na))
        cands.sort(key=lambda c: c[:4])
        for _, xx, y, t, na in cands:
            if _semi_directed_blocked(g, y, xx, na | set(t)):
                g[xx, y], g[y, xx] = True, False
                for v in t:
                    g[v, y], g[y, v] = True, False
                g = _recomplete(g)
                break
        else:
            break

    while True:  # backward phase
        cands = []
        for y in range(p):
            pa_y, nb_y = _parents(g, y), _neighbors(g, y)
            for xx in np.flatnonzero(g[:, y]).tolist():
                na = nb_y & _adjacent(g, xx)
                for r in range(len(na) + 1):
                    for h in itertools.combinations(sorted(na), r):
                        base = (na - set(h)) | pa_y
                        delta = score(y, base - {xx}) - score(y, base | {xx}) + cost
                        if delta > TIE_TOL:
                            cands.append((-delta, xx, y, h, na))
        cands.sort(key=lambda c: c[:4])
        for _, xx, y, h, na in cands:
            if _is_clique(g, na - set(h)):
                g[xx, y] = g[y, xx] = False
                for v in h:
                    g[y, v], g[v, y] = True, False
                    if g[xx, v] and g[v, xx]:
                        g[v, xx] = False
                g = _recomplete(g)
                break
        else:
            break
    return g.astype(float)


@dataclass
class GesLearner:
    """Default local learner: greedy equivalence search under BIC."""

    penalty: float = 1.0

    def __call__(self, x: np.ndarray) -> np.ndarray:
        x = np.asarray(x, dtype=float)
        if x.shape[1] == 1:
            return np.zeros((1, 1))
        return ges(x, self.penalty)


LEARNERS = {"ges": GesLearner, "hc": BicHillClimber}


def make_learner(name: str = "ges", penalty: float = 1.0):
    if name not in LEARNERS:
        raise ValueError(f"unknown learner {name!r}; expected one of {sorted(LEARNERS)}")
    return LEARNERS[name](penalty)


def greedy_bic_learn(sub: Subproblem, penalty: float = 1.0) -> np.ndarray:
    """CPDAG over ``sub.scope`` (local coordinates)."""
    return BicHillClimber(penalty)(sub.data_view)


def restrict_to_center(a: np.ndarray, scope, i: int, d: int) -> LocalResult:
    """Keep row and column ``i`` of a scope-local adjacency, embedded in ``d x d``."""
    a = np.asarray(a) != 0
    scope = list(scope)
    li = scope.index(i)
    out = np.zeros((d, d))
    for lk, k in enumerate(scope):
        if lk == li:
            continue
        if a[li, lk]:
            out[i, k] = 1.0
        if a[lk, li]:
            out[k, i] = 1.0
    return LocalResult(i, out)


def batch_local_learn(data, center: int, mb, rho: float = 0.3, learner=None) -> LocalResult:
    """Learn parents and children of ``center`` by consuming its blanket in batches.

    Each step learns on ``batch | PC | {center}`` and replaces the parent and
    child sets with those read off the learned graph. Batches are taken in
    increasing index order.
    """
    learner = learner or GesLearner()
    x = np.asarray(getattr(data, "values", data))
    d = x.shape[1]
    remaining = sorted(mb)
    if not remaining:
        return LocalResult(center, np.zeros((d, d)))
    size = max(1, math.ceil(rho * len(remaining)))
    pc: set[int] = set()
    par: set[int] = set()
    ch: set[int] = set()
    while remaining:
        batch, remaining = remaining[:size], remaining[size:]
        scope = sorted(set(batch) | pc | {center})
        a = np.asarray(learner(x[:, scope])) != 0
        li = scope.index(center)
        par = {scope[k] for k in np.flatnonzero(a[:, li])}
        ch = {scope[k] for k in np.flatnonzero(a[li])}
        pc = par | ch
    out = np.zeros((d, d))
    for k in par:
        out[k, center] = 1.0
    for k in ch:
        out[center, k] = 1.0
    return LocalResult(center, out)


def _solve_task(task):
    center, scope, view, mode, rho, learner, d = task
    try:
        if mode == "batch":
            mb = [k for k in scope if k != center]
            local = np.zeros((view.shape[0], d))
            local[:, scope] = view
            return batch_local_learn(local, center, mb, rho, learner)
        a = learner(view)
        return restrict_to_center(a, scope, center, d)
    except Exception as exc:  # noqa: BLE001 - one subproblem must not abort the run
        return LocalResult(center, np.zeros((d, d)), f"{type(exc).__name__}: {exc}")


def dispatch_order(mbs: MarkovBlankets, policy: str) -> list[int]:
    if policy == "uniform":
        return list(range(mbs.d))
    if policy == "size_ordered":
        return sorted(range(mbs.d), key=lambda i: (-len(mbs.sets[i]), i))
    raise ValueError(f"unknown policy {policy!r}")


def run_phase2(data, mbs: MarkovBlankets, policy: str = "uniform", workers: int = 1,
               learner=None, rho: float = 0.3, rho_big: float = 0.05) -> list[LocalResult]:
    """Solve all ``d`` subproblems; results are indexed by center.

    ``size_ordered`` dispatches subproblems by decreasing blanket size and
    routes the largest ``ceil(rho_big * d)`` of them to ``batch_local_learn``.
    """
    if workers < 1:
        raise ValueError("workers must be >= 1")
    learner = learner or GesLearner()
    x = np.asarray(getattr(data, "values", data))
    d = x.shape[1]
    order = dispatch_order(mbs, policy)
    n_batch = math.ceil(rho_big * d) if policy == "size_ordered" else 0
    tasks = []
    for rank, i in enumerate(order):
        scope = mbs.scope(i)
        mode = "batch" if rank < n_batch and len(scope) > 1 else "direct"
        tasks.append((i, scope, x[:, scope], mode, rho, learner, d))

    slots: list[LocalResult | None] = [None] * d
    if workers == 1:
        for t in tasks:
            slots[t[0]] = _solve_task(t)
    else:
        with ProcessPoolExecutor(max_workers=workers) as pool:
            futures = [(t[0], pool.submit(_solve_task, t)) for t in tasks]
            for i, fut in futures:
                slots[i] = fut.result()
    for r in slots:
        if r.diagnostic:
            log.warning("subproblem %d failed: %s", r.center, r.diagnostic)
    return slots
