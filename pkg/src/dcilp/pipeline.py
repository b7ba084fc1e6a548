"""End-to-end runs, persistence and the multi-seed benchmark harness.

Every run writes its intermediate artifacts under ``<out_dir>/<run_id>/``.
Files in the determinism contract (CSV/JSON/edge lists/LP) contain no wall
times and no worker counts; those go to ``timings.json`` and
``timings.csv``.
"""
from __future__ import annotations

import csv
import dataclasses
import io
import json
import logging
import math
import time
import traceback
from dataclasses import dataclass, field
from pathlib import Path

import numpy as np

from . import graph, ilp, local, markov, reconcile, synth

log = logging.getLogger(__name__)

METRIC_KEYS = ("tpr", "fdr", "fpr", "shd", "nnz")
METHODS = ("dcilp", "naive", "standalone")
PHASES = ("data", "phase1", "phase2", "phase3", "baseline")
# fields that do not change results and are kept out of config.json
RUNTIME_ONLY = ("workers", "out_dir")


@dataclass
class RunConfig:
    graph_model: str = "ER"
    d: int = 20
    k: int = 1
    n: int | None = None
    n_ratio: float = 50.0
    noise: str = "gaussian"
    equal_variance: bool = True
    data_path: str | None = None
    truth_path: str | None = None
    lambda_min: float = 0.05
    lambda_max: float | None = 0.3
    lambda_count: int = 20
    lambda_select: str = "argmin"
    logdet: str = "abs"
    learner: str = "ges"
    penalty: float = 1.0
    policy: str = "uniform"
    rho: float = 0.3
    rho_big: float = 0.05
    scheme: str = "LP3"
    pool_size: int = 16
    time_budget: float = 300.0
    cycle_repair: bool = True
    max_rounds: int = 50
    baseline: bool = True
    workers: int = 1
    seeds: list[int] = field(default_factory=lambda: [0])
    out_dir: str = "runs"

    @property
    def num_samples(self) -> int:
        return int(self.n) if self.n is not None else int(round(self.n_ratio * self.d))

    def validate(self) -> "RunConfig":
        problems = []
        if self.graph_model not in synth.GRAPH_MODELS:
            problems.append(f"graph_model must be one of {synth.GRAPH_MODELS}")
        if self.d < 1 or self.k < 1:
            problems.append("d and k must be >= 1")
        if self.noise not in synth.NOISE_KINDS:
            problems.append(f"noise must be one of {synth.NOISE_KINDS}")
        if self.data_path is None and self.num_samples < 2:
            problems.append("need at least 2 samples")
        hi = self.lambda_max if self.lambda_max is not None else 1.0 - 1e-9
        if not 0.0 < self.lambda_min <= hi < 1.0:
            problems.append("need 0 < lambda_min <= lambda_max < 1")
        if self.lambda_count < 1:
            problems.append("lambda_count must be >= 1")
        if self.lambda_select not in ("argmin", "argmax"):
            problems.append("lambda_select must be argmin or argmax")
        if self.logdet not in ("abs", "signed"):
            problems.append("logdet must be abs or signed")
        if self.learner not in local.LEARNERS:
            problems.append(f"learner must be one of {sorted(local.LEARNERS)}")
        if self.penalty <= 0:
            problems.append("penalty must be positive")
        if self.policy not in ("uniform", "size_ordered"):
            problems.append("policy must be uniform or size_ordered")
        if not (0 < self.rho < 1 and 0 <= self.rho_big <= 1):
            problems.append("need rho in (0, 1) and rho_big in [0, 1]")
        if self.scheme not in reconcile.SCHEMES:
            problems.append(f"scheme must be one of {reconcile.SCHEMES}")
        if self.pool_size < 1 or self.max_rounds < 1 or self.workers < 1:
            problems.append("pool_size, max_rounds and workers must be >= 1")
        if self.time_budget <= 0:
            problems.append("time_budget must be positive")
        if not self.seeds or len(set(self.seeds)) != len(self.seeds):
            problems.append("seeds must be a non-empty list of distinct integers")
        if problems:
            raise ValueError("invalid config: " + "; ".join(problems))
        return self

    def to_dict(self, runtime: bool = False) -> dict:
        out = dataclasses.asdict(self)
        if not runtime:
            for key in RUNTIME_ONLY:
                out.pop(key)
        return out

    @classmethod
    def from_dict(cls, raw: dict) -> "RunConfig":
        names = {f.name for f in dataclasses.fields(cls)}
        unknown = sorted(set(raw) - names)
        if unknown:
            raise ValueError(f"unknown config keys: {unknown}")
        return cls(**raw).validate()

    @classmethod
    def from_json(cls, path) -> "RunConfig":
        return cls.from_dict(json.loads(Path(path).read_text(encoding="utf-8")))

    def replace(self, **changes) -> "RunConfig":
        return dataclasses.replace(self, **changes).validate()


def run_id(cfg: RunConfig, seed: int) -> str:
    if cfg.data_path is not None:
        return f"{Path(cfg.data_path).stem}_seed{seed}"
    var = "" if cfg.equal_variance else "_nv"
    return f"{cfg.graph_model}{cfg.k}_d{cfg.d}_n{cfg.num_samples}_{cfg.noise}{var}_seed{seed}"


@dataclass
class RunReport:
    run_id: str
    seed: int
    status: str = "ok"  # ok | infeasible | time_limit | failed
    failed_phase: str | None = None
    error: str | None = None
    metrics: dict = field(default_factory=dict)
    conflicts: dict = field(default_factory=dict)
    lambda1: float | None = None
    ilp: dict = field(default_factory=dict)
    dagness: float | None = None
    is_dag: bool | None = None
    non_dag_warning: bool = False
    two_cycle: bool | None = None
    failed_subproblems: list[int] = field(default_factory=list)
    timings: dict = field(default_factory=dict)
    path: str | None = None

    def to_dict(self) -> dict:
        out = dataclasses.asdict(self)
        out.pop("timings")
        out.pop("path")
        return out

    def to_json(self) -> str:
        return json.dumps(_jsonable(self.to_dict()), indent=2, sort_keys=True) + "\n"


def _jsonable(obj):
    if isinstance(obj, dict):
        return {str(k): _jsonable(v) for k, v in obj.items()}
    if isinstance(obj, (list, tuple)):
        return [_jsonable(v) for v in obj]
    if isinstance(obj, (np.integer,)):
        return int(obj)
    if isinstance(obj, (np.floating,)):
        return float(obj)
    if isinstance(obj, np.bool_):
        return bool(obj)
    return obj


def _load_inputs(cfg: RunConfig, seed: int):
    if cfg.data_path is not None:
        data = synth.Dataset.load(cfg.data_path)
        truth = graph.read_edges(cfg.truth_path, data.d) if cfg.truth_path else None
        return data, truth
    g = synth.gen_dag(cfg.d, cfg.graph_model, cfg.k, seed)
    spec = synth.assign_weights(g, seed, cfg.noise, cfg.equal_variance)
    data = synth.sample(spec, cfg.num_samples, seed)
    data.meta.update({"graph_model": cfg.graph_model, "k": cfg.k,
                      "equal_variance": cfg.equal_variance})
    return data, spec.graph


def _write_json(path: Path, obj) -> None:
    path.write_text(json.dumps(_jsonable(obj), indent=2, sort_keys=True) + "\n", encoding="utf-8")


def _phase3(cfg: RunConfig, merged, mbs, report: RunReport, run_dir: Path):
    weighted = reconcile.apply_weighting(merged, cfg.scheme)
    p3 = reconcile.build_ilp(weighted, mbs)
    (run_dir / "model.lp").write_text(ilp.export_lp(p3.model), encoding="utf-8")
    info = {"variables": p3.model.num_vars, "rows": len(p3.model.constraints),
            "fixings": len(p3.model.fixings), "b_vars": len(p3.b_vars),
            "s_vars": len(p3.s_vars), "v_vars": len(p3.v_vars),
            "dropped_pairs": [list(p) for p in p3.dropped_pairs]}
    if cfg.cycle_repair:
        res = reconcile.cycle_repair(p3, cfg.pool_size, cfg.max_rounds, cfg.time_budget)
        final, status, proven = res.graph, res.status, res.proven
        info.update(rounds=res.rounds, objective=res.objective, cuts=res.cuts,
                    pool_sizes=res.pool_sizes,
                    nodes=[s["nodes"] for s in res.solver_stats],
                    components=[s.get("components", 0) for s in res.solver_stats])
        report.non_dag_warning = not res.is_dag
    else:
        pool = reconcile.solve_phase3(p3, cfg.pool_size, cfg.time_budget)
        status, proven = pool.status, pool.proven
        if pool.solutions:
            final = reconcile.select_solution([p3.to_adjacency(s) for s in pool.solutions])
        else:
            final = np.zeros((merged.d, merged.d))
        info.update(rounds=1, objective=pool.objective_value, cuts=[],
                    pool_sizes=[len(pool.solutions)], nodes=[pool.stats["nodes"]],
                    components=[pool.stats.get("components", 0)])
        report.non_dag_warning = not graph.is_dag(final)
    info.update(status=status, proven=proven,
                relaxed_pairs=[list(p) for p in p3.relaxed_pairs])
    report.ilp = info
    if status in ("infeasible", "time_limit"):
        report.status = status
    return final


def run_dcilp(cfg: RunConfig, seed: int | None = None) -> RunReport:
    """Run all three phases for one seed and persist every artifact.

    A phase that raises stops the run; the returned report names it and is
    still written to ``report.json``.
    """
    cfg.validate()
    seed = cfg.seeds[0] if seed is None else seed
    rid = run_id(cfg, seed)
    run_dir = Path(cfg.out_dir) / rid
    run_dir.mkdir(parents=True, exist_ok=True)
    report = RunReport(rid, seed, path=str(run_dir))
    _write_json(run_dir / "config.json", {**cfg.to_dict(), "seeds": [seed]})

    timings = report.timings
    phase = "data"
    t_all = time.perf_counter()
    try:
        t0 = time.perf_counter()
        data, truth = _load_inputs(cfg, seed)
        data.save(run_dir / "data.csv")
        if truth is not None:
            graph.write_edges(run_dir / "truth.edges", truth)
        timings["data"] = time.perf_counter() - t0

        phase = "phase1"
        t0 = time.perf_counter()
        est, mbs, diag = markov.select_lambda1(
            data, cfg.lambda_min, cfg.lambda_max, cfg.lambda_count,
            cfg.lambda_select, cfg.logdet)
        report.lambda1 = est.lambda1
        (run_dir / "mbs.json").write_text(mbs.to_json() + "\n", encoding="utf-8")
        markov.write_diagnostics(run_dir / "lambda.csv", diag)
        timings["phase1"] = time.perf_counter() - t0

        phase = "phase2"
        t0 = time.perf_counter()
        learner = local.make_learner(cfg.learner, cfg.penalty)
        locals_ = local.run_phase2(data, mbs, cfg.policy, cfg.workers, learner,
                                   cfg.rho, cfg.rho_big)
        for r in locals_:
            graph.write_edges(run_dir / f"local_{r.center}.edges", r.b_hat)
        report.failed_subproblems = [r.center for r in locals_ if r.diagnostic]
        timings["phase2"] = time.perf_counter() - t0

        phase = "phase3"
        t0 = time.perf_counter()
        merged = reconcile.naive_merge(locals_, data.d)
        graph.write_edges(run_dir / "merged.edges", merged.raw)
        report.conflicts = reconcile.classify_conflicts(merged).counts
        final = _phase3(cfg, merged, mbs, report, run_dir)
        graph.write_edges(run_dir / "solution.edges", final)
        report.dagness = graph.dagness(final)
        report.is_dag = graph.is_dag(final)
        report.two_cycle = graph.has_two_cycle(final)
        timings["phase3"] = time.perf_counter() - t0

        phase = "baseline"
        t0 = time.perf_counter()
        if truth is not None:
            report.metrics["dcilp"] = graph.metrics(final, truth).to_dict()
            report.metrics["naive"] = graph.metrics(merged.binarized(), truth).to_dict()
            if cfg.baseline:
                full = learner(data.values)
                graph.write_edges(run_dir / "standalone.edges", full)
                report.metrics["standalone"] = graph.metrics(full, truth).to_dict()
        timings["baseline"] = time.perf_counter() - t0
    except Exception as exc:  # noqa: BLE001 - the partial report names the phase
        report.status = "failed"
        report.failed_phase = phase
        report.error = f"{type(exc).__name__}: {exc}"
        log.error("run %s failed in %s:\n%s", rid, phase, traceback.format_exc())
    timings["total"] = time.perf_counter() - t_all

    (run_dir / "report.json").write_text(report.to_json(), encoding="utf-8")
    (run_dir / "summary.csv").write_text(_csv_text([summary_row(report)]), encoding="utf-8")
    _write_json(run_dir / "timings.json", {"workers": cfg.workers, **timings})
    return report


def summary_row(report: RunReport) -> dict:
    row = {"run_id": report.run_id, "seed": report.seed, "status": report.status,
           "warning": "" if report.status == "ok" else (report.failed_phase or report.status)}
    for m in METHODS:
        vals = report.metrics.get(m, {})
        for key in METRIC_KEYS:
            row[f"{m}_{key}"] = vals.get(key, "")
    row["dagness"] = "" if report.dagness is None else report.dagness
    row["is_dag"] = "" if report.is_dag is None else int(report.is_dag)
    row["non_dag_warning"] = int(report.non_dag_warning)
    row["cycle_rounds"] = report.ilp.get("rounds", "")
    for key in ("none", "type1_addition", "type2_acute", "type3_undirected"):
        row[f"conflict_{key}"] = report.conflicts.get(key, "")
    return row


def _fmt(v) -> str:
    if isinstance(v, float):
        return "nan" if math.isnan(v) else format(v, ".10g")
    return str(v)


def _csv_text(rows: list[dict], columns: list[str] | None = None) -> str:
    columns = columns or list(rows[0])
    buf = io.StringIO()
    w = csv.writer(buf, lineterminator="\n")
    w.writerow(columns)
    for r in rows:
        w.writerow([_fmt(r.get(c, "")) for c in columns])
    return buf.getvalue()


def _aggregate_rows(rows: list[dict], columns: list[str], ok: list[bool]) -> list[dict]:
    done = [r for r, good in zip(rows, ok) if good]
    med = {"run_id": "median", "seed": "", "status": f"{len(done)}/{len(rows)} ok",
           "warning": "" if len(done) == len(rows) else "failed seeds excluded"}
    iqr = {**med, "run_id": "iqr"}
    for c in columns:
        if c in med:
            continue
        vals = [r[c] for r in done if isinstance(r.get(c), (int, float)) and r.get(c) != ""]
        if not vals or len(vals) != len(done):
            med[c] = iqr[c] = ""
            continue
        arr = np.asarray(vals, dtype=float)
        med[c] = float(np.median(arr))
        q75, q25 = np.percentile(arr, [75, 25])
        iqr[c] = float(q75 - q25)
    return [med, iqr]


def run_benchmark(cfg: RunConfig, csv_name: str = "benchmark.csv") -> tuple[list[RunReport], Path]:
    """One run per seed plus median and IQR rows, written to ``<out_dir>/<csv_name>``.

    Each row compares three methods through prefixed columns: the DCILP
    result, the binarized naive merge and the learner run standalone on all
    variables. Failed seeds are flagged and excluded from the summary rows.
    """
    cfg.validate()
    if len(cfg.seeds) < 3:
        raise ValueError("a benchmark needs at least 3 seeds")
    reports = [run_dcilp(cfg, s) for s in cfg.seeds]
    rows = [summary_row(r) for r in reports]
    columns = list(rows[0])
    ok = [r.status != "failed" for r in reports]
    if not all(ok):
        log.warning("%d of %d seeds failed; summary rows use the rest",
                    ok.count(False), len(ok))
    rows += _aggregate_rows(rows, columns, ok)
    out = Path(cfg.out_dir)
    out.mkdir(parents=True, exist_ok=True)
    path = out / csv_name
    path.write_text(_csv_text(rows, columns), encoding="utf-8")

    trows = [{"run_id": r.run_id, "workers": cfg.workers,
              **{p: r.timings.get(p, "") for p in (*PHASES, "total")}} for r in reports]
    (out / "timings.csv").write_text(_csv_text(trows), encoding="utf-8")
    return reports, path


def compare_naive(report) -> dict:
    """``naive - dcilp`` differences of FDR, TPR and SHD.

    Positive FDR and SHD deltas mean the 0/1 reconciliation improved on the
    binarized naive merge.
    """
    m = report.metrics if isinstance(report, RunReport) else report.get("metrics", report)
    if "dcilp" not in m or "naive" not in m:
        raise ValueError("report lacks dcilp or naive metrics")
    a, b = m["naive"], m["dcilp"]
    return {"fdr_delta": a["fdr"] - b["fdr"], "tpr_delta": a["tpr"] - b["tpr"],
            "shd_delta": a["shd"] - b["shd"]}


def export_model(cfg: RunConfig, seed: int | None = None) -> tuple[str, "reconcile.Phase3Model"]:
    """Phases 1-2 and model construction only; returns the LP text."""
    cfg.validate()
    seed = cfg.seeds[0] if seed is None else seed
    data, _ = _load_inputs(cfg, seed)
    _, mbs, _ = markov.select_lambda1(data, cfg.lambda_min, cfg.lambda_max, cfg.lambda_count,
                                      cfg.lambda_select, cfg.logdet)
    learner = local.make_learner(cfg.learner, cfg.penalty)
    locals_ = local.run_phase2(data, mbs, cfg.policy, cfg.workers, learner, cfg.rho, cfg.rho_big)
    merged = reconcile.apply_weighting(reconcile.naive_merge(locals_, data.d), cfg.scheme)
    p3 = reconcile.build_ilp(merged, mbs)
    return ilp.export_lp(p3.model), p3
