"""Metric curves as members are added to an ensemble, averaged over seeds.

Writes a long-format CSV and one SVG per metric to --out.

    python scripts/ensemble_size_curves.py --gap 0.8 --seeds 20 --out curves/
"""
import argparse
from pathlib import Path

import numpy as np

from ensaudit.ensemble import ensemble_size_sweep
from ensaudit.report import svg_line_chart
from ensaudit.synthetic import SyntheticConfig, generate_synthetic


def main():
    p = argparse.ArgumentParser(description=__doc__, formatter_class=argparse.RawDescriptionHelpFormatter)
    p.add_argument("--gap", type=float, default=0.8)
    p.add_argument("--alpha", type=float, default=1.0)
    p.add_argument("--seeds", type=int, default=20)
    p.add_argument("--orderings", type=int, default=1)
    p.add_argument("--metrics", default="accuracy,accuracy_a0,accuracy_a1,spd_abs,eod_abs,aod,div")
    p.add_argument("--out", type=Path, default=Path("curves"))
    args = p.parse_args()

    metrics = args.metrics.split(",")
    per_seed = {m: [] for m in metrics}
    for seed in range(args.seeds):
        rs = generate_synthetic(SyntheticConfig(gap=args.gap, alpha=args.alpha, seed=seed))
        curves = ensemble_size_sweep(rs, orderings=args.orderings, seed=seed, metrics=metrics)
        for m in metrics:
            per_seed[m].append(curves[m].mean)

    args.out.mkdir(parents=True, exist_ok=True)
    lines = ["metric,n,mean,std_over_seeds"]
    for m in metrics:
        arr = np.array(per_seed[m])
        mean, std = arr.mean(axis=0), arr.std(axis=0)
        sizes = list(range(1, arr.shape[1] + 1))
        lines += [f"{m},{n},{mu!r},{sd!r}" for n, mu, sd in zip(sizes, mean.tolist(), std.tolist())]
        svg = svg_line_chart({m: (sizes, mean.tolist(), std.tolist())}, title=f"{m} (gap={args.gap})", xlabel="ensemble size", ylabel=m)
        (args.out / f"{m}.svg").write_text(svg, encoding="utf-8")
        print(f"{m:12s} n=1 {mean[0]:.4f}  n={sizes[-1]} {mean[-1]:.4f}")
    (args.out / "curves.csv").write_text("\n".join(lines) + "\n", encoding="utf-8")


if __name__ == "__main__":
    main()
