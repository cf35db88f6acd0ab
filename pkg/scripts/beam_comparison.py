"""Valid rate and search score of beam width 1 (greedy) versus wider beams.

Collects one record log, trains the sequence model under several seeds, and
runs the search once per beam width on each trained model.

    python scripts/beam_comparison.py --dataset synthetic --widths 1 5 --train-seeds 0 1 2 3 4
"""
import argparse
import json
import time

from featsearch import expr
from featsearch.collector import CollectorConfig, collect
from featsearch.data import load_bundled, split
from featsearch.records import augment_corpus
from featsearch.search import SearchConfig, run_search
from featsearch.seqmodel import SeqModel, TrainConfig


def main():
    ap = argparse.ArgumentParser(description=__doc__.splitlines()[0])
    ap.add_argument("--dataset", default="synthetic")
    ap.add_argument("--episodes", type=int, default=128)
    ap.add_argument("--collector", choices=("rl", "random"), default="rl")
    ap.add_argument("--k", type=int, default=12, help="shuffles per record")
    ap.add_argument("--epochs", type=int, default=50)
    ap.add_argument("--widths", type=int, nargs="+", default=[1, 5])
    ap.add_argument("--train-seeds", type=int, nargs="+", default=[0, 1, 2, 3, 4])
    ap.add_argument("--top-t", type=int, default=20)
    ap.add_argument("--json", help="write the rows to this file")
    args = ap.parse_args()

    d = split(load_bundled(args.dataset), 0).train
    t0 = time.perf_counter()
    recs = collect(d, CollectorConfig(epochs=args.episodes, steps=6, mode=args.collector, seed=0))
    corpus = augment_corpus(recs, args.k, seed=0)
    print(f"{len(recs)} records, corpus {len(corpus)} ({time.perf_counter() - t0:.0f}s)", flush=True)

    rows = []
    for seed in args.train_seeds:
        cfg = TrainConfig(epochs=args.epochs, batch_size=64, lr=3e-3, seed=seed)
        model = SeqModel.init(expr.Vocabulary(d.n_features), cfg)
        model.fit([r.program for r in corpus], [r.score for r in corpus])
        row = {"seed": seed}
        for b in args.widths:
            res = run_search(model, recs, d, SearchConfig(top_t=args.top_t, beam=b))
            row[b] = {"valid_rate": res.report["valid_rate"],
                      "score": res.report["best"]["score"] if res.report["best"] else None}
        rows.append(row)
        print(f"seed {seed}: " + " | ".join(
            f"beam {b}: valid {row[b]['valid_rate']:.2f} score {row[b]['score']}" for b in args.widths),
            flush=True)

    lo, hi = min(args.widths), max(args.widths)
    wins = sum(r[hi]["valid_rate"] >= r[lo]["valid_rate"] for r in rows)
    print(f"beam {hi} valid rate >= beam {lo} in {wins}/{len(rows)} training seeds")
    if args.json:
        with open(args.json, "w") as fh:
            json.dump(rows, fh, indent=2)


if __name__ == "__main__":
    main()
