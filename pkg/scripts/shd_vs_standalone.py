"""Full pipeline against the same local learner run on all variables (ER1, n = 10d)."""
import argparse
import sys

from dcilp import pipeline
from dcilp.pipeline import RunConfig


def main(argv=None):
    p = argparse.ArgumentParser(description=__doc__)
    p.add_argument("--d", type=int, default=100)
    p.add_argument("--n-ratio", type=float, default=10)
    p.add_argument("--seeds", default="0,1,2,3,4")
    p.add_argument("--learner", default="ges")
    p.add_argument("--workers", type=int, default=1)
    p.add_argument("--out-dir", default="runs/shd_vs_standalone")
    args = p.parse_args(argv)

    cfg = RunConfig(graph_model="ER", k=1, d=args.d, n_ratio=args.n_ratio, learner=args.learner,
                    workers=args.workers, out_dir=args.out_dir,
                    seeds=[int(s) for s in args.seeds.split(",")])
    reports, path = pipeline.run_benchmark(cfg)
    for r in reports:
        print(f"{r.run_id}: SHD dcilp {r.metrics['dcilp']['shd']} "
              f"standalone {r.metrics['standalone']['shd']}")
    print(path)
    return 0


if __name__ == "__main__":
    sys.exit(main())
