"""Exact 0/1 linear programming by depth-first branch and bound.

Models maximize a linear objective over binary variables subject to linear
rows with small integer coefficients. The search uses bound propagation on
every row, an additive bound on the objective, and a second pass that
collects up to ``K`` distinct optimal assignments.
"""
from __future__ import annotations

import itertools
import json
import re
import time
from dataclasses import dataclass, field

import numpy as np

OBJ_TOL = 1e-9
SENSES = ("<=", ">=", "=")


@dataclass
class Constraint:
    vars: tuple[int, ...]
    coefs: tuple[int, ...]
    sense: str
    rhs: int
    name: str = ""


class IlpModel:
    """Binary decision variables, linear rows, objective (maximize), fixings."""

    def __init__(self):
        self.names: list[str] = []
        self.objective: list[float] = []
        self.constraints: list[Constraint] = []
        self.fixings: dict[int, int] = {}
        self._index: dict[str, int] = {}

    @property
    def num_vars(self) -> int:
        return len(self.names)

    def add_var(self, name: str, obj: float = 0.0) -> int:
        if name in self._index:
            raise ValueError(f"duplicate variable {name!r}")
        self._index[name] = len(self.names)
        self.names.append(name)
        self.objective.append(float(obj))
        return self._index[name]

    def var(self, name: str) -> int:
        return self._index[name]

    def add_constraint(self, terms, sense: str, rhs: int, name: str | None = None) -> Constraint:
        """``terms`` is an iterable of ``(var_index, integer_coef)`` pairs."""
        if sense not in SENSES:
            raise ValueError(f"unknown sense {sense!r}")
        merged: dict[int, int] = {}
        for v, a in terms:
            if int(a) != a:
                raise ValueError("constraint coefficients must be integers")
            merged[int(v)] = merged.get(int(v), 0) + int(a)
        items = [(v, a) for v, a in merged.items() if a != 0]
        row = Constraint(tuple(v for v, _ in items), tuple(a for _, a in items), sense, int(rhs),
                         name or f"c{len(self.constraints) + 1}")
        self.constraints.append(row)
        return row

    def fix(self, v: int, value: int) -> None:
        if value not in (0, 1):
            raise ValueError("fixings must be 0 or 1")
        if self.fixings.get(v, value) != value:
            raise ValueError(f"conflicting fixings for {self.names[v]}")
        self.fixings[v] = value

    def copy(self) -> "IlpModel":
        m = IlpModel()
        m.names = list(self.names)
        m.objective = list(self.objective)
        m.constraints = list(self.constraints)
        m.fixings = dict(self.fixings)
        m._index = dict(self._index)
        return m

    def objective_value(self, assignment) -> float:
        return float(np.dot(self.objective, np.asarray(assignment, dtype=float)))


@dataclass
class SolutionPool:
    status: str  # "optimal", "infeasible" or "time_limit"
    objective_value: float | None
    solutions: list[np.ndarray]
    proven: bool
    complete: bool = True
    stats: dict = field(default_factory=dict)
    # variables of the component found infeasible (empty: infeasible at the root)
    conflict_vars: list[int] = field(default_factory=list)

    def stats_json(self) -> str:
        return json.dumps(self.stats, sort_keys=True)


class _Search:
    def __init__(self, model: IlpModel, deadline: float):
        self.model = model
        self.deadline = deadline
        n = model.num_vars
        self.n = n
        self.obj = list(model.objective)
        self.val = [-1] * n
        self.trail: list[int] = []
        rows = model.constraints
        self.row_vars = [list(r.vars) for r in rows]
        self.row_coefs = [list(r.coefs) for r in rows]
        self.row_sense = [r.sense for r in rows]
        self.row_rhs = [r.rhs for r in rows]
        self.row_maxabs = [max((abs(a) for a in r.coefs), default=0) for r in rows]
        self.minact = [sum(min(a, 0) for a in r.coefs) for r in rows]
        self.maxact = [sum(max(a, 0) for a in r.coefs) for r in rows]
        self.var_rows: list[list[tuple[int, int]]] = [[] for _ in range(n)]
        for r, row in enumerate(rows):
            for v, a in zip(row.vars, row.coefs):
                self.var_rows[v].append((r, a))
        self.in_queue = [False] * len(rows)

        # disjoint "at most one" groups tighten the objective bound
        self.group = [-1] * n
        self.groups: list[list[int]] = []
        group_rows = set()
        for r, row in enumerate(rows):
            if (row.sense == "<=" and row.rhs == 1 and len(row.vars) > 1
                    and all(a == 1 for a in row.coefs)
                    and all(self.group[v] < 0 for v in row.vars)):
                g = len(self.groups)
                self.groups.append(list(row.vars))
                group_rows.add(r)
                for v in row.vars:
                    self.group[v] = g
        # unit "<=" rows over distinct groups: each forces some member off,
        # which costs at least the cheapest member's loss
        self.cover_rows = []
        for r, row in enumerate(rows):
            if r in group_rows or row.sense != "<=" or len(row.vars) < 2:
                continue
            if not all(a == 1 for a in row.coefs) or row.rhs >= len(row.vars):
                continue
            keys = [self._group_key(v) for v in row.vars]
            if len(set(keys)) == len(keys):
                self.cover_rows.append((list(row.vars), row.rhs, keys))
        self.group_contrib = [self._group_value(g) for g in range(len(self.groups))]
        self.cur_obj = 0.0
        self.free_pos = sum(max(c, 0.0) for v, c in enumerate(self.obj) if self.group[v] < 0)
        self.bound_extra = sum(self.group_contrib)

        self.order = sorted(range(n), key=lambda v: (-abs(self.obj[v]), v))
        self.nodes = 0
        self.propagations = 0
        self.timed_out = False

    def _group_value(self, g: int) -> float:
        best = 0.0
        for v in self.groups[g]:
            x = self.val[v]
            if x == 1:
                return 0.0
            if x < 0 and self.obj[v] > best:
                best = self.obj[v]
        return best

    def _group_key(self, v: int) -> int:
        g = self.group[v]
        return g if g >= 0 else len(self.groups) + v

    def _drop_cost(self, v: int) -> float:
        """Bound decrease when free variable ``v`` is forced to 0."""
        g = self.group[v]
        if g < 0:
            return max(self.obj[v], 0.0)
        rest = 0.0
        for u in self.groups[g]:
            if u != v and self.val[u] < 0 and self.obj[u] > rest:
                rest = self.obj[u]
        return self.group_contrib[g] - rest

    def _cover_loss(self) -> float:
        losses = []
        for vs, rhs, keys in self.cover_rows:
            ones = 0
            free = []
            for v, k in zip(vs, keys):
                x = self.val[v]
                if x == 1:
                    ones += 1
                elif x < 0:
                    free.append((v, k))
            if not free or ones + len(free) <= rhs:
                continue
            loss = min(self._drop_cost(v) for v, _ in free)
            if loss > 0:
                losses.append((-loss, [k for _, k in free]))
        if not losses:
            return 0.0
        losses.sort(key=lambda t: t[0])
        used = set()
        total = 0.0
        for neg, keys in losses:
            if used.isdisjoint(keys):
                used.update(keys)
                total -= neg
        return total

    def bound(self) -> float:
        b = self.cur_obj + self.free_pos + self.bound_extra
        if self.cover_rows:
            b -= self._cover_loss()
        return b

    def _touch_group(self, v: int) -> None:
        g = self.group[v]
        new = self._group_value(g)
        self.bound_extra += new - self.group_contrib[g]
        self.group_contrib[g] = new

    def assign(self, v: int, x: int, queue: list) -> None:
        self.val[v] = x
        self.trail.append(v)
        c = self.obj[v]
        self.cur_obj += c * x
        if self.group[v] >= 0:
            self._touch_group(v)
        elif c > 0:
            self.free_pos -= c
        for r, a in self.var_rows[v]:
            self.minact[r] += a * x - min(a, 0)
            self.maxact[r] += a * x - max(a, 0)
            if not self.in_queue[r]:
                self.in_queue[r] = True
                queue.append(r)

    def undo_to(self, mark: int) -> None:
        while len(self.trail) > mark:
            v = self.trail.pop()
            x = self.val[v]
            self.val[v] = -1
            c = self.obj[v]
            self.cur_obj -= c * x
            if self.group[v] >= 0:
                self._touch_group(v)
            elif c > 0:
                self.free_pos += c
            for r, a in self.var_rows[v]:
                self.minact[r] -= a * x - min(a, 0)
                self.maxact[r] -= a * x - max(a, 0)

    def propagate(self, queue: list) -> bool:
        ok = True
        while queue:
            r = queue.pop()
            self.in_queue[r] = False
            if not ok:
                continue
            sense, rhs = self.row_sense[r], self.row_rhs[r]
            if sense != ">=":
                slack = rhs - self.minact[r]
                if slack < 0:
                    ok = False
                    continue
                if slack < self.row_maxabs[r]:
                    for v, a in zip(self.row_vars[r], self.row_coefs[r]):
                        if self.val[v] < 0 and abs(a) > slack:
                            self.propagations += 1
                            self.assign(v, 0 if a > 0 else 1, queue)
                            slack = rhs - self.minact[r]
            if sense != "<=":
                slack = self.maxact[r] - rhs
                if slack < 0:
                    ok = False
                    continue
                if slack < self.row_maxabs[r]:
                    for v, a in zip(self.row_vars[r], self.row_coefs[r]):
                        if self.val[v] < 0 and abs(a) > slack:
                            self.propagations += 1
                            self.assign(v, 1 if a > 0 else 0, queue)
                            slack = self.maxact[r] - rhs
        return ok

    def root(self) -> bool:
        queue = []
        for v, x in sorted(self.model.fixings.items()):
            if self.val[v] >= 0:
                if self.val[v] != x:
                    return False
                continue
            self.assign(v, x, queue)
            if not self.propagate(queue):
                return False
        queue = list(range(len(self.row_vars)))
        for r in queue:
            self.in_queue[r] = True
        return self.propagate(queue)

    def dfs(self, on_leaf, prune) -> None:
        """Chronological backtracking; ``on_leaf`` returns True to stop."""
        order = self.order
        n = self.n
        stack: list[list] = []  # [var, remaining values, trail mark, order position]
        pos = 0
        while True:
            descend = False
            self.nodes += 1
            if self.nodes % 512 == 0 and time.perf_counter() > self.deadline:
                self.timed_out = True
                return
            if not prune(self.bound()):
                while pos < n and self.val[order[pos]] >= 0:
                    pos += 1
                if pos == n:
                    if on_leaf():
                        return
                else:
                    v = order[pos]
                    first = 1 if self.obj[v] > 0 else 0
                    stack.append([v, [first, 1 - first], len(self.trail), pos])
            # advance to the next untried branch
            while stack:
                frame = stack[-1]
                self.undo_to(frame[2])
                if not frame[1]:
                    stack.pop()
                    continue
                x = frame[1].pop(0)
                queue: list[int] = []
                self.assign(frame[0], x, queue)
                if self.propagate(queue):
                    pos = frame[3]
                    descend = True
                    break
            if not descend:
                return


def _components(search: _Search) -> list[list[int]]:
    """Free variables grouped by rows that still contain two or more of them."""
    parent = list(range(search.n))

    def find(v):
        while parent[v] != v:
            parent[v] = parent[parent[v]]
            v = parent[v]
        return v

    for vs in search.row_vars:
        free = [v for v in vs if search.val[v] < 0]
        for v in free[1:]:
            a, b = find(free[0]), find(v)
            if a != b:
                parent[max(a, b)] = min(a, b)
    groups: dict[int, list[int]] = {}
    for v in range(search.n):
        if search.val[v] < 0:
            groups.setdefault(find(v), []).append(v)
    return [groups[k] for k in sorted(groups)]


def _submodel(model: IlpModel, search: _Search, comp: list[int]) -> IlpModel:
    """Restriction to ``comp`` with fixed variables folded into right-hand sides."""
    local = {v: k for k, v in enumerate(comp)}
    sub = IlpModel()
    for v in comp:
        sub.add_var(model.names[v], model.objective[v])
    for row in model.constraints:
        if not any(v in local for v in row.vars):
            continue
        fixed = sum(a * search.val[v] for v, a in zip(row.vars, row.coefs) if v not in local)
        terms = [(local[v], a) for v, a in zip(row.vars, row.coefs) if v in local]
        sub.add_constraint(terms, row.sense, row.rhs - fixed, row.name)
    return sub


def _solve_connected(model: IlpModel, pool_capacity: int, deadline: float):
    """Two-pass search on one model; returns ``(status, best, pool, search)``."""
    search = _Search(model, deadline)
    if not search.root():
        return "infeasible", None, [], search
    root_mark = len(search.trail)
    best: dict = {"obj": None, "sol": None}

    def record_best():
        obj = search.cur_obj
        if best["obj"] is None or obj > best["obj"] + OBJ_TOL:
            best["obj"] = obj
            best["sol"] = np.array(search.val, dtype=np.int8)
        return False

    search.dfs(record_best,
               lambda b: best["obj"] is not None and b <= best["obj"] + OBJ_TOL)
    if best["obj"] is None:
        return ("time_limit" if search.timed_out else "infeasible"), None, [], search
    if search.timed_out:
        return "time_limit", best["obj"], [best["sol"]], search

    # second pass: enumerate optimal assignments
    search.undo_to(root_mark)
    target = best["obj"]
    pool: list[np.ndarray] = []

    def record_pool():
        if search.cur_obj >= target - OBJ_TOL:
            pool.append(np.array(search.val, dtype=np.int8))
        return len(pool) >= pool_capacity

    search.dfs(record_pool, lambda b: b < target - OBJ_TOL)
    if not pool:
        pool = [best["sol"]]
    return ("incomplete" if search.timed_out else "optimal"), target, pool, search


def solve(model: IlpModel, pool_capacity: int = 16, time_budget: float = 300.0) -> SolutionPool:
    """Proven optimum plus up to ``pool_capacity`` optimal assignments.

    After root propagation the free variables split into independent
    components; each is searched on its own and the component pools are
    combined in lexicographic order. When the time budget runs out before
    optimality is proven, the best assignment found so far is returned with
    ``proven=False``.
    """
    if pool_capacity < 1:
        raise ValueError("pool_capacity must be >= 1")
    start = time.perf_counter()
    deadline = start + time_budget
    search = _Search(model, deadline)
    counters = {"nodes": 0, "propagations": 0, "components": 0}

    def stats():
        return {"nodes": counters["nodes"], "propagations": counters["propagations"],
                "components": counters["components"],
                "wall_time": time.perf_counter() - start, "variables": model.num_vars,
                "rows": len(model.constraints)}

    if not search.root():
        return SolutionPool("infeasible", None, [], True, True, stats())
    counters["propagations"] += search.propagations
    base = np.array(search.val, dtype=np.int8)
    comps = _components(search)
    counters["components"] = len(comps)

    status = "optimal"
    total = search.cur_obj
    comp_pools = []
    for comp in comps:
        sub = _submodel(model, search, comp)
        st, obj, pool, sub_search = _solve_connected(sub, pool_capacity, deadline)
        counters["nodes"] += sub_search.nodes
        counters["propagations"] += sub_search.propagations
        if st == "infeasible":
            return SolutionPool("infeasible", None, [], True, True, stats(), list(comp))
        if obj is None:
            return SolutionPool("time_limit", None, [], False, False, stats())
        if st == "time_limit":
            status = "time_limit"
        elif st == "incomplete" and status == "optimal":
            status = "incomplete"
        total += obj
        comp_pools.append((comp, pool))

    solutions = []
    for combo in itertools.product(*(p for _, p in comp_pools)):
        x = base.copy()
        for (comp, _), part in zip(comp_pools, combo):
            x[comp] = part
        solutions.append(x)
        if len(solutions) >= pool_capacity or status == "time_limit":
            break
    if status == "time_limit":
        return SolutionPool("time_limit", float(total), solutions, False, False, stats())
    return SolutionPool("optimal", float(total), solutions, True, status == "optimal", stats())


def evaluate_row(row: Constraint, assignment) -> bool:
    act = sum(a * int(assignment[v]) for v, a in zip(row.vars, row.coefs))
    if row.sense == "<=":
        return act <= row.rhs
    if row.sense == ">=":
        return act >= row.rhs
    return act == row.rhs


def verify(model: IlpModel, assignment) -> tuple[bool, list[str]]:
    """Check every row and fixing; returns ``(ok, names of violated rows)``."""
    x = [int(v) for v in assignment]
    if len(x) != model.num_vars:
        raise ValueError("assignment length does not match the model")
    bad = [f"fix:{model.names[v]}" for v, val in sorted(model.fixings.items()) if x[v] != val]
    bad += [v for v in (model.names[i] for i, xv in enumerate(x) if xv not in (0, 1))]
    bad += [row.name for row in model.constraints if not evaluate_row(row, x)]
    return not bad, bad


# --- LP text format ------------------------------------------------------------

def _fmt_coef(c: float) -> str:
    c = float(c)
    if c == int(c):
        return str(int(c))
    return repr(c)


def _fmt_terms(terms) -> str:
    parts = []
    for k, (name, c) in enumerate(terms):
        sign = "-" if c < 0 else "+"
        mag = abs(c)
        body = name if mag == 1 else f"{_fmt_coef(mag)} {name}"
        if k == 0:
            parts.append(body if sign == "+" else f"- {body}")
        else:
            parts.append(f"{sign} {body}")
    return " ".join(parts)


def export_lp(model: IlpModel) -> str:
    """CPLEX-style LP text. Fixings are written as rows ``f1..fk`` after ``c1..cm``."""
    lines = ["Maximize"]
    obj_terms = [(model.names[v], c) for v, c in enumerate(model.objective) if c != 0]
    if obj_terms:
        lines.append(" obj: " + _fmt_terms(obj_terms))
    elif model.num_vars:
        lines.append(f" obj: 0 {model.names[0]}")
    else:
        lines.append(" obj:")
    lines.append("Subject To")
    for row in model.constraints:
        terms = [(model.names[v], a) for v, a in zip(row.vars, row.coefs)]
        sense = "=" if row.sense == "=" else row.sense
        lines.append(f" {row.name}: {_fmt_terms(terms)} {sense} {row.rhs}")
    for k, (v, x) in enumerate(sorted(model.fixings.items()), start=1):
        lines.append(f" f{k}: {model.names[v]} = {x}")
    lines.append("Binary")
    lines.extend(f" {name}" for name in model.names)
    lines.append("End")
    return "\n".join(lines) + "\n"


_TERM = re.compile(r"([+-])?\s*(\d+(?:\.\d*)?(?:[eE][+-]?\d+)?)?\s*([A-Za-z_][\w.]*)")


def _parse_terms(text: str):
    out = []
    for sign, coef, name in _TERM.findall(text):
        c = float(coef) if coef else 1.0
        out.append((name, -c if sign == "-" else c))
    return out


def parse_lp(text: str) -> IlpModel:
    """Read back the subset of the LP format written by ``export_lp``."""
    section = None
    obj_line = ""
    rows = []
    binaries = []
    for raw in text.splitlines():
        line = raw.strip()
        if not line or line.startswith("\\"):
            continue
        low = line.lower()
        if low in ("maximize", "subject to", "binary", "binaries", "end"):
            section = low
            continue
        if section == "maximize":
            obj_line += " " + line.split(":", 1)[-1]
        elif section == "subject to":
            name, body = line.split(":", 1)
            m = re.match(r"(.*?)(<=|>=|=)\s*(-?\d+)\s*$", body)
            rows.append((name.strip(), m.group(1), m.group(2), int(m.group(3))))
        elif section in ("binary", "binaries"):
            binaries.extend(line.split())
    model = IlpModel()
    obj = dict(_parse_terms(obj_line))
    for name in binaries:
        model.add_var(name, obj.get(name, 0.0))
    for name, body, sense, rhs in rows:
        terms = [(model.var(v), int(c)) for v, c in _parse_terms(body)]
        if re.fullmatch(r"f\d+", name) and len(terms) == 1 and sense == "=":
            model.fix(terms[0][0], rhs)
        else:
            model.add_constraint(terms, sense, rhs, name)
    return model
