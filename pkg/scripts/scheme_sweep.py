"""Run the same data under each weighting scheme and tabulate median metrics."""
import argparse
import sys

import numpy as np

from dcilp import pipeline, reconcile
from dcilp.pipeline import RunConfig


def main(argv=None):
    p = argparse.ArgumentParser(description=__doc__)
    p.add_argument("--graph-model", default="ER")
    p.add_argument("--k", type=int, default=2)
    p.add_argument("--d", type=int, default=30)
    p.add_argument("--n-ratio", type=float, default=50)
    p.add_argument("--seeds", default="0,1,2")
    p.add_argument("--out-dir", default="runs/scheme_sweep")
    args = p.parse_args(argv)

    seeds = [int(s) for s in args.seeds.split(",")]
    print("scheme  tpr    fdr    shd")
    for scheme in reconcile.SCHEMES:
        cfg = RunConfig(graph_model=args.graph_model, k=args.k, d=args.d, n_ratio=args.n_ratio,
                        scheme=scheme, baseline=False, seeds=seeds,
                        out_dir=f"{args.out_dir}/{scheme}")
        reports = [pipeline.run_dcilp(cfg, s) for s in seeds]
        med = {k: np.median([r.metrics["dcilp"][k] for r in reports]) for k in ("tpr", "fdr", "shd")}
        print(f"{scheme:6}  {med['tpr']:.3f}  {med['fdr']:.3f}  {med['shd']:g}")
    return 0


if __name__ == "__main__":
    sys.exit(main())
