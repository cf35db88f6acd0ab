"""RL collection versus uniformly random collection at equal episode budgets.

For each seed, runs the collector twice on the training split of a bundled
dataset (once with learning agents, once with random actions) and reports
the best and mean record scores.

    python scripts/collector_ablation.py --episodes 128 --seeds 0 1 2 3 4
"""
import argparse
import json
import time

import numpy as np

from featsearch.collector import CollectorConfig, collect
from featsearch.data import load_bundled, split
from featsearch.downstream import EvalConfig


def compare(d, episodes, steps, seed, eval_cfg=None):
    row = {"seed": seed}
    for mode in ("rl", "random"):
        t0 = time.perf_counter()
        recs = collect(d, CollectorConfig(epochs=episodes, steps=steps, mode=mode, seed=seed), eval_cfg)
        scores = [r.score for r in recs]
        row[mode] = {
            "records": len(recs),
            "best": max(scores) if scores else float("nan"),
            "mean": float(np.mean(scores)) if scores else float("nan"),
            "seconds": round(time.perf_counter() - t0, 1),
        }
    return row


def main():
    ap = argparse.ArgumentParser(description=__doc__.splitlines()[0])
    ap.add_argument("--dataset", default="synthetic")
    ap.add_argument("--episodes", type=int, default=128)
    ap.add_argument("--steps", type=int, default=6)
    ap.add_argument("--seeds", type=int, nargs="+", default=[0, 1, 2, 3, 4])
    ap.add_argument("--json", help="write the rows to this file")
    args = ap.parse_args()
    d = split(load_bundled(args.dataset), 0).train
    rows = []
    for seed in args.seeds:
        row = compare(d, args.episodes, args.steps, seed, EvalConfig())
        rows.append(row)
        print(f"seed {seed}: rl best {row['rl']['best']:.4f} mean {row['rl']['mean']:.4f} "
              f"({row['rl']['seconds']}s) | random best {row['random']['best']:.4f} "
              f"mean {row['random']['mean']:.4f} ({row['random']['seconds']}s)", flush=True)
    wins = sum(r["rl"]["best"] >= r["random"]["best"] for r in rows)
    print(f"rl best >= random best in {wins}/{len(rows)} seeds")
    if args.json:
        with open(args.json, "w") as fh:
            json.dump(rows, fh, indent=2)


if __name__ == "__main__":
    main()
