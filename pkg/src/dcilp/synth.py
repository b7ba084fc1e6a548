"""Random DAGs, linear SEM weights and observational samples.

All randomness goes through ``numpy.random.Generator`` (PCG64) seeded with
explicit integers, so outputs are reproducible across platforms.
"""
from __future__ import annotations

import json
from dataclasses import dataclass, field
from pathlib import Path

import numpy as np

from .graph import CausalGraph, topological_order

NOISE_KINDS = ("gaussian", "gumbel", "uniform")
GRAPH_MODELS = ("ER", "SF")
SAMPLE_BLOCK = 10_000
_EULER_GAMMA = 0.5772156649015329


@dataclass
class SemSpec:
    graph: CausalGraph
    noise_kind: str = "gaussian"
    noise_scales: np.ndarray | None = None

    def __post_init__(self):
        if self.noise_kind not in NOISE_KINDS:
            raise ValueError(f"unknown noise kind {self.noise_kind!r}")
        if self.noise_scales is None:
            self.noise_scales = np.ones(self.graph.d)
        self.noise_scales = np.asarray(self.noise_scales, dtype=float)
        if self.noise_scales.shape != (self.graph.d,):
            raise ValueError("noise_scales must have length d")
        if np.any(self.noise_scales < 0):
            raise ValueError("noise scales must be non-negative")

    @property
    def weights(self) -> np.ndarray:
        return self.graph.adj

    def covariance(self) -> np.ndarray:
        """Implied covariance ``(I - B)^-T diag(s^2) (I - B)^-1``."""
        d = self.graph.d
        inv = np.linalg.inv(np.eye(d) - self.weights)
        return inv.T @ np.diag(self.noise_scales ** 2) @ inv


@dataclass
class Dataset:
    values: np.ndarray
    seed: int
    meta: dict = field(default_factory=dict)

    @property
    def n(self) -> int:
        return self.values.shape[0]

    @property
    def d(self) -> int:
        return self.values.shape[1]

    def save(self, csv_path) -> None:
        csv_path = Path(csv_path)
        np.savetxt(csv_path, self.values, delimiter=",", fmt="%.17g")
        sidecar = {"n": self.n, "d": self.d, "seed": self.seed, **self.meta}
        csv_path.with_suffix(".json").write_text(
            json.dumps(sidecar, indent=2, sort_keys=True) + "\n", encoding="utf-8")

    @classmethod
    def load(cls, csv_path) -> "Dataset":
        csv_path = Path(csv_path)
        values = np.loadtxt(csv_path, delimiter=",", ndmin=2)
        side = csv_path.with_suffix(".json")
        meta = json.loads(side.read_text(encoding="utf-8")) if side.exists() else {}
        seed = int(meta.pop("seed", 0))
        meta.pop("n", None)
        meta.pop("d", None)
        return cls(values, seed, meta)


def gen_dag(d: int, model: str = "ER", k: int = 1, seed: int = 0) -> CausalGraph:
    """Binary random DAG with a random node order.

    ``ER``: each of the ``d(d-1)/2`` pairs is an edge with probability
    ``2k/(d-1)`` (expected ``k*d`` edges), oriented along a random permutation.
    ``SF``: a complete DAG on the first ``k`` nodes, then every new node sends
    ``k`` edges to existing nodes picked proportionally to their degree.
    """
    if d < 1 or k < 1:
        raise ValueError("need d >= 1 and k >= 1")
    if model not in GRAPH_MODELS:
        raise ValueError(f"unknown graph model {model!r}")
    rng = np.random.default_rng(seed)
    adj = np.zeros((d, d))
    if d == 1:
        return CausalGraph(adj)

    if model == "ER":
        max_edges = d * (d - 1) / 2
        if k * d > max_edges:
            raise ValueError(f"k*d = {k * d} exceeds the {int(max_edges)} possible edges")
        p = k * d / max_edges
        upper = np.triu(rng.random((d, d)) < p, k=1)
        adj[upper] = 1.0
    else:
        m = min(k, d)
        for i in range(m):
            adj[i, :i] = 1.0
        for new in range(m, d):
            deg = adj[:new, :new].sum(axis=0) + adj[:new, :new].sum(axis=1)
            p = deg / deg.sum() if deg.sum() > 0 else np.full(new, 1.0 / new)
            targets = rng.choice(new, size=m, replace=False, p=p)
            adj[new, targets] = 1.0

    perm = rng.permutation(d)
    out = np.zeros_like(adj)
    out[np.ix_(perm, perm)] = adj
    return CausalGraph(out)


def assign_weights(g: CausalGraph, seed: int = 0, noise_kind: str = "gaussian",
                   equal_variance: bool = True) -> SemSpec:
    """Edge weights from ``Unif([-2, -0.5] u [0.5, 2])``.

    With ``equal_variance=False`` the per-variable noise standard deviations
    are drawn once from ``Unif([0.5, 2])``.
    """
    rng = np.random.default_rng(seed)
    mask = g.adj != 0
    mags = rng.uniform(0.5, 2.0, size=g.adj.shape)
    signs = np.where(rng.random(g.adj.shape) < 0.5, -1.0, 1.0)
    w = np.where(mask, mags * signs, 0.0)
    if equal_variance:
        scales = np.ones(g.d)
    else:
        scales = rng.uniform(0.5, 2.0, size=g.d)
    return SemSpec(CausalGraph(w, g.labels), noise_kind, scales)


def _noise(rng: np.random.Generator, kind: str, shape) -> np.ndarray:
    """Zero-mean, unit-variance noise of the requested family."""
    if kind == "gaussian":
        return rng.standard_normal(shape)
    if kind == "gumbel":
        return (rng.gumbel(0.0, 1.0, shape) - _EULER_GAMMA) * np.sqrt(6.0) / np.pi
    return rng.uniform(-np.sqrt(3.0), np.sqrt(3.0), shape)


def sample(spec: SemSpec, n: int, seed: int = 0) -> Dataset:
    """Draw ``n`` i.i.d. rows of ``X = X B + E``.

    Rows are produced in blocks of ``SAMPLE_BLOCK``; block ``b`` uses the
    stream seeded by ``(seed, b)``.
    """
    if n < 1:
        raise ValueError("n must be >= 1")
    b = spec.weights
    d = b.shape[0]
    order = topological_order(b)
    assert order is not None, "SEM graph must be acyclic"
    parents = [np.flatnonzero(b[:, j]) for j in range(d)]
    blocks = []
    for blk, start in enumerate(range(0, n, SAMPLE_BLOCK)):
        rows = min(SAMPLE_BLOCK, n - start)
        rng = np.random.default_rng([seed, blk])
        x = _noise(rng, spec.noise_kind, (rows, d)) * spec.noise_scales
        for j in order:
            pa = parents[j]
            if pa.size:
                x[:, j] += x[:, pa] @ b[pa, j]
        blocks.append(x)
    meta = {"noise_kind": spec.noise_kind}
    return Dataset(np.vstack(blocks), seed, meta)
