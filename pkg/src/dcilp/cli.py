"""Command-line entry point: ``gen``, ``run``, ``bench``, ``metrics``, ``export-lp``.

Exit codes: 0 success, 2 infeasible model or exhausted solver budget, 1 error.
"""
from __future__ import annotations

import argparse
import dataclasses
import json
import logging
import sys
import typing
from pathlib import Path

from . import graph, synth
from .pipeline import RunConfig, export_model, run_benchmark, run_dcilp, run_id

EXIT_OK, EXIT_ERROR, EXIT_SOLVER = 0, 1, 2


def _parse_bool(text: str) -> bool:
    low = text.lower()
    if low in ("1", "true", "yes", "on"):
        return True
    if low in ("0", "false", "no", "off"):
        return False
    raise argparse.ArgumentTypeError(f"not a boolean: {text!r}")


def _optional(kind):
    def parse(text: str):
        return None if text.lower() in ("none", "null") else kind(text)
    return parse


def _seeds(text: str) -> list[int]:
    return [int(s) for s in text.split(",") if s.strip()]


def _add_config_flags(p: argparse.ArgumentParser) -> None:
    p.add_argument("--config", help="JSON config file; flags below override its fields")
    hints = typing.get_type_hints(RunConfig)
    for f in dataclasses.fields(RunConfig):
        hint = hints[f.name]
        opt = type(None) in typing.get_args(hint)
        base = next((a for a in typing.get_args(hint) if a is not type(None)), hint)
        if f.name == "seeds":
            kind = _seeds
        elif base is bool:
            kind = _parse_bool
        elif base in (int, float, str):
            kind = _optional(base) if opt else base
        else:
            continue
        p.add_argument("--" + f.name.replace("_", "-"), dest=f.name, type=kind,
                       default=argparse.SUPPRESS, metavar=f.name.upper())


def _config_from_args(args) -> RunConfig:
    raw = json.loads(Path(args.config).read_text(encoding="utf-8")) if args.config else {}
    overrides = {f.name: getattr(args, f.name) for f in dataclasses.fields(RunConfig)
                 if hasattr(args, f.name)}
    return RunConfig.from_dict({**raw, **overrides})


def cmd_gen(args) -> int:
    cfg = _config_from_args(args)
    for seed in cfg.seeds:
        out = Path(cfg.out_dir) / run_id(cfg, seed)
        out.mkdir(parents=True, exist_ok=True)
        g = synth.gen_dag(cfg.d, cfg.graph_model, cfg.k, seed)
        spec = synth.assign_weights(g, seed, cfg.noise, cfg.equal_variance)
        data = synth.sample(spec, cfg.num_samples, seed)
        data.save(out / "data.csv")
        graph.write_edges(out / "truth.edges", spec.graph)
        print(out)
    return EXIT_OK


def _exit_for(status: str) -> int:
    if status == "failed":
        return EXIT_ERROR
    if status in ("infeasible", "time_limit"):
        return EXIT_SOLVER
    return EXIT_OK


def cmd_run(args) -> int:
    cfg = _config_from_args(args)
    report = run_dcilp(cfg)
    print(json.dumps({"run_dir": report.path, "status": report.status,
                      "metrics": report.metrics}, indent=2, sort_keys=True))
    return _exit_for(report.status)


def cmd_bench(args) -> int:
    cfg = _config_from_args(args)
    reports, path = run_benchmark(cfg)
    print(path)
    codes = [_exit_for(r.status) for r in reports]
    if EXIT_ERROR in codes and all(c == EXIT_ERROR for c in codes):
        return EXIT_ERROR
    return EXIT_SOLVER if EXIT_SOLVER in codes else EXIT_OK


def cmd_metrics(args) -> int:
    truth = graph.read_edges(args.truth)
    est = graph.read_edges(args.estimate, truth.d)
    print(graph.metrics(est, truth).to_json())
    return EXIT_OK


def cmd_export_lp(args) -> int:
    cfg = _config_from_args(args)
    text, _ = export_model(cfg)
    if args.output:
        Path(args.output).write_text(text, encoding="utf-8")
    else:
        sys.stdout.write(text)
    return EXIT_OK


def build_parser() -> argparse.ArgumentParser:
    p = argparse.ArgumentParser(prog="dcilp", description=__doc__.splitlines()[0])
    p.add_argument("-v", "--verbose", action="store_true")
    sub = p.add_subparsers(dest="command", required=True)

    for name, fn, help_ in (("gen", cmd_gen, "synthesize data and true graphs"),
                            ("run", cmd_run, "run the pipeline for the first seed"),
                            ("bench", cmd_bench, "run every seed and write summary CSV")):
        sp = sub.add_parser(name, help=help_)
        _add_config_flags(sp)
        sp.set_defaults(func=fn)

    sp = sub.add_parser("metrics", help="compare an estimated edge list to a true one")
    sp.add_argument("estimate")
    sp.add_argument("truth")
    sp.set_defaults(func=cmd_metrics)

    sp = sub.add_parser("export-lp", help="build the 0/1 model and write it as LP text")
    _add_config_flags(sp)
    sp.add_argument("-o", "--output")
    sp.set_defaults(func=cmd_export_lp)
    return p


def main(argv=None) -> int:
    args = build_parser().parse_args(argv)
    logging.basicConfig(level=logging.INFO if args.verbose else logging.WARNING,
                        format="%(levelname)s %(name)s: %(message)s")
    try:
        return args.func(args)
    except (ValueError, OSError) as exc:
        print(f"error: {exc}", file=sys.stderr)
        return EXIT_ERROR


if __name__ == "__main__":
    sys.exit(main())
