"""Command line pipeline: collect -> train -> search, plus eval and run.

Every stage reads its inputs from files and writes its outputs to the
output directory, so stages can be rerun or resumed independently.
"""
from __future__ import annotations

import argparse
import configparser
import dataclasses
import hashlib
import json
import logging
import os
import sys
import time
from dataclasses import asdict, dataclass, field
from pathlib import Path

import numpy as np

from . import expr
from .collector import CollectorConfig, collect
from .data import Dataset, load_bundled, load_csv, split
from .downstream import EvalConfig, holdout_score, train_eval
from .errors import InputError, InvariantError
from .records import RecordLog, augment_corpus, read_records
from .search import SearchConfig, run_search, score_program
from .seqmodel import SeqModel, TrainConfig, load_meta

log = logging.getLogger("featsearch")

OUT_ENV = "FEATSEARCH_OUT"
DEFAULT_OUT = "featsearch_out"

RECORDS = "records.jsonl"
CHECKPOINT = "checkpoint.json"
LOSS_CSV = "loss.csv"
REPORT = "report.json"
PROGRAM = "best_program.txt"
FEATURES = "features.csv"
MANIFEST = "manifest.json"


@dataclass
class DataConfig:
    path: str = ""  # CSV file; empty means use ``bundled``
    bundled: str = "synthetic"
    task: str = "regression"
    target: str = ""  # empty: last column
    split_seed: int = 0


@dataclass
class AugmentConfig:
    enabled: bool = True
    k: int = 12
    seed: int = 0


@dataclass
class PipelineConfig:
    data: DataConfig = field(default_factory=DataConfig)
    collector: CollectorConfig = field(default_factory=CollectorConfig)
    augment: AugmentConfig = field(default_factory=AugmentConfig)
    train: TrainConfig = field(default_factory=TrainConfig)
    search: SearchConfig = field(default_factory=SearchConfig)
    eval: EvalConfig = field(default_factory=EvalConfig)
    out_dir: str = DEFAULT_OUT

    SECTIONS = ("data", "collector", "augment", "train", "search", "eval")

    def to_dict(self) -> dict:
        return {s: asdict(getattr(self, s)) for s in self.SECTIONS} | {"out_dir": self.out_dir}


# ---------------------------------------------------------------------------
# configuration


def _coerce(text: str, default):
    text = text.strip()
    if isinstance(default, bool):
        low = text.lower()
        if low in ("1", "true", "yes", "on"):
            return True
        if low in ("0", "false", "no", "off"):
            return False
        raise InputError(f"not a boolean: {text!r}")
    if isinstance(default, int):
        return int(text)
    if isinstance(default, float):
        return float(text)
    if isinstance(default, str):
        return text
    # default is None or loosely typed: best effort
    if text.lower() in ("", "none"):
        return None
    for kind in (int, float):
        try:
            return kind(text)
        except ValueError:
            pass
    return text


def load_config(path=None) -> PipelineConfig:
    cfg = PipelineConfig()
    if path is None:
        return cfg
    parser = configparser.ConfigParser()
    try:
        if not parser.read(path, encoding="utf-8"):
            raise InputError(f"cannot read config file {path}")
    except configparser.Error as e:
        raise InputError(f"bad config file {path}: {e}") from None
    for section in parser.sections():
        if section == "output":
            cfg.out_dir = parser[section].get("dir", cfg.out_dir)
            continue
        if section not in PipelineConfig.SECTIONS:
            raise InputError(f"unknown config section [{section}]")
        target = getattr(cfg, section)
        names = {f.name for f in dataclasses.fields(target)}
        updates = {}
        for key, text in parser[section].items():
            if key not in names:
                raise InputError(f"unknown key {key!r} in [{section}]")
            try:
                updates[key] = _coerce(text, getattr(target, key))
            except ValueError:
                raise InputError(f"[{section}] {key} = {text!r} has the wrong type") from None
        try:
            setattr(cfg, section, dataclasses.replace(target, **updates))
        except ValueError as e:
            raise InputError(f"[{section}]: {e}") from None
    return cfg


# flag dest -> (section, field)
FLAG_MAP = {
    "data": ("data", "path"),
    "bundled": ("data", "bundled"),
    "task": ("data", "task"),
    "target": ("data", "target"),
    "split_seed": ("data", "split_seed"),
    "episodes": ("collector", "epochs"),
    "steps": ("collector", "steps"),
    "collector": ("collector", "mode"),
    "collector_seed": ("collector", "seed"),
    "augment_k": ("augment", "k"),
    "epochs": ("train", "epochs"),
    "batch_size": ("train", "batch_size"),
    "alpha": ("train", "alpha"),
    "lr": ("train", "lr"),
    "train_seed": ("train", "seed"),
    "top_t": ("search", "top_t"),
    "eta": ("search", "eta"),
    "ascent_steps": ("search", "ascent_steps"),
    "beam": ("search", "beam"),
    "max_len": ("search", "max_len"),
    "model": ("eval", "model"),
    "metric": ("eval", "metric"),
    "cv_seed": ("eval", "cv_seed"),
}


def apply_flags(cfg: PipelineConfig, args: argparse.Namespace) -> PipelineConfig:
    for dest, (section, name) in FLAG_MAP.items():
        value = getattr(args, dest, None)
        if value is not None:
            try:
                setattr(cfg, section, dataclasses.replace(getattr(cfg, section), **{name: value}))
            except ValueError as e:
                raise InputError(str(e)) from None
    if getattr(args, "seed", None) is not None:
        s = args.seed
        cfg.collector = dataclasses.replace(cfg.collector, seed=s)
        cfg.train = dataclasses.replace(cfg.train, seed=s)
        cfg.augment = dataclasses.replace(cfg.augment, seed=s)
    if getattr(args, "no_augment", False):
        cfg.augment = dataclasses.replace(cfg.augment, enabled=False)
    if getattr(args, "out", None):
        cfg.out_dir = args.out
    elif os.environ.get(OUT_ENV):
        cfg.out_dir = os.environ[OUT_ENV]
    return cfg


# ---------------------------------------------------------------------------
# helpers


def load_data(cfg: DataConfig) -> Dataset:
    if cfg.path:
        return load_csv(cfg.path, cfg.task, cfg.target or None)
    return load_bundled(cfg.bundled)


def train_split(cfg: PipelineConfig):
    parts = split(load_data(cfg.data), cfg.data.split_seed)
    return parts.train, parts.test


def fingerprint(d: Dataset) -> str:
    h = hashlib.sha256()
    h.update(np.ascontiguousarray(d.X).tobytes())
    h.update(np.ascontiguousarray(d.y).tobytes())
    return h.hexdigest()


def sha256_file(path) -> str:
    return hashlib.sha256(Path(path).read_bytes()).hexdigest()


def write_csv(path, X: np.ndarray, names) -> None:
    with open(path, "w", encoding="utf-8") as fh:
        fh.write(",".join(names) + "\n")
        for row in X:
            fh.write(",".join(repr(float(v)) for v in row) + "\n")


def update_manifest(out: Path, cfg: PipelineConfig, stage: str, seconds: float,
                    files=(), scores: dict | None = None) -> None:
    """Record config, output hashes and timings. Timings live only here, so
    every other output stays byte-identical across reruns."""
    path = out / MANIFEST
    manifest = json.loads(path.read_text()) if path.is_file() else {}
    manifest["config"] = cfg.to_dict()
    manifest.setdefault("files", {})
    for name in files:
        manifest["files"][name] = sha256_file(out / name)
    manifest.setdefault("timings", {})[stage] = round(seconds, 3)
    if scores:
        manifest.setdefault("scores", {}).update(scores)
    path.write_text(json.dumps(manifest, indent=2, sort_keys=True) + "\n")


# ---------------------------------------------------------------------------
# stages


def cmd_collect(cfg: PipelineConfig, out: Path) -> Path:
    train, _ = train_split(cfg)
    path = out / RECORDS
    t0 = time.perf_counter()
    with RecordLog(path) as rec_log:
        records = collect(train, cfg.collector, cfg.eval, on_record=rec_log.append)
    dt = time.perf_counter() - t0
    scores = [r.score for r in records]
    best = max(scores) if scores else float("nan")
    mean = float(np.mean(scores)) if scores else float("nan")
    print(f"collected {len(records)} records ({cfg.collector.mode}); best {best:.4f}, mean {mean:.4f}")
    update_manifest(out, cfg, "collect", dt, [RECORDS], {"best_collected": best})
    return path


def training_corpus(records, cfg: AugmentConfig):
    if not cfg.enabled:
        return list(records)
    return augment_corpus(records, cfg.k, cfg.seed)


def cmd_train(cfg: PipelineConfig, out: Path, records_path: Path | None = None) -> Path:
    train, _ = train_split(cfg)
    records = read_records(records_path or out / RECORDS)
    if not records:
        raise InputError("record log is empty")
    corpus = training_corpus(records, cfg.augment)
    print(f"training on {len(corpus)} programs from {len(records)} records")
    model = SeqModel.init(expr.Vocabulary(train.n_features), cfg.train)

    def progress(epoch, means):
        if epoch == 1 or epoch % max(1, cfg.train.epochs // 10) == 0:
            log.info("epoch %d  loss %.4f  rec %.4f  est %.5f  acc %.3f", epoch, *means)

    t0 = time.perf_counter()
    hist = model.fit([r.program for r in corpus], [r.score for r in corpus], cfg.train, progress)
    dt = time.perf_counter() - t0
    ckpt = out / CHECKPOINT
    model.save(ckpt, {"dataset_sha256": fingerprint(train), "corpus_size": len(corpus)})
    hist.to_csv(out / LOSS_CSV)
    print(f"final loss {hist.loss[-1]:.4f}, token accuracy {hist.token_acc[-1]:.3f}")
    update_manifest(out, cfg, "train", dt, [CHECKPOINT, LOSS_CSV])
    return ckpt


def load_model_for(train: Dataset, ckpt: Path) -> SeqModel:
    meta = load_meta(ckpt) if ckpt.is_file() else None
    if meta is None:
        raise InputError(f"no checkpoint at {ckpt}")
    model = SeqModel.load(ckpt)
    if model.vocab.n_features != train.n_features:
        raise InputError(
            f"checkpoint vocabulary has {model.vocab.n_features} features, dataset has {train.n_features}"
        )
    if meta.get("dataset_sha256") not in (None, fingerprint(train)):
        raise InputError("dataset has changed since the checkpoint was trained")
    return model


def cmd_search(cfg: PipelineConfig, out: Path, ckpt: Path | None = None,
               records_path: Path | None = None) -> dict:
    train, test = train_split(cfg)
    model = load_model_for(train, ckpt or out / CHECKPOINT)
    records = read_records(records_path or out / RECORDS)
    if not records:
        raise InputError("record log is empty")
    t0 = time.perf_counter()
    result = run_search(model, records, train, cfg.search, cfg.eval)
    dt = time.perf_counter() - t0
    if not all(np.isfinite(result.X).all(axis=0)):
        raise InvariantError("selected feature matrix has a non-finite column")
    report = result.report
    # holdout check on the untouched 20%
    base = holdout_score(train.X, train.y, test.X, test.y, train.task, cfg.eval).value
    if result.program:
        X_te = np.column_stack([test.X, expr.evaluate(result.program, test.X, cfg.search.mode)[0]])
        best = holdout_score(result.X, train.y, X_te, test.y, train.task, cfg.eval).value
    else:
        best = base
    report["holdout"] = {"baseline_score": base, "best_score": best}
    (out / REPORT).write_text(json.dumps(report, indent=2, sort_keys=True) + "\n")
    (out / PROGRAM).write_text((expr.to_text(result.program) if result.program else "") + "\n")
    n_new = result.X.shape[1] - train.n_features
    names = list(train.feature_names) + [f"g{i}" for i in range(n_new)]
    write_csv(out / FEATURES, result.X, names)
    flag = " (fallback: original features)" if result.fallback else ""
    print(f"baseline {report['baseline_score']:.4f} -> best {result.score:.4f}{flag}; "
          f"valid rate {report['valid_rate']:.2f}; holdout {base:.4f} -> {best:.4f}")
    if result.program:
        print(expr.to_text(result.program))
    update_manifest(out, cfg, "search", dt, [REPORT, PROGRAM, FEATURES], {
        "baseline": report["baseline_score"], "best": result.score, "valid_rate": report["valid_rate"],
        "holdout_baseline": base, "holdout_best": best,
    })
    return report


def cmd_eval(cfg: PipelineConfig, program_path: Path) -> float:
    train, _ = train_split(cfg)
    path = Path(program_path)
    if not path.is_file():
        raise InputError(f"no program file {path}")
    lines = [ln for ln in path.read_text(encoding="utf-8").splitlines() if ln.strip()]
    if not lines:
        raise InputError(f"{path} holds no program")
    program = expr.from_text(lines[0])
    if not expr.validate(program).sequence_valid:
        raise InputError(f"{path}: program is not well formed")
    res = score_program(program, train, cfg.eval, cfg.search.mode)
    if res.score is None:
        raise InputError("no segment of the program produced a finite column")
    print(repr(res.score))
    return res.score


def cmd_run(cfg: PipelineConfig, out: Path) -> dict:
    cmd_collect(cfg, out)
    cmd_train(cfg, out)
    return cmd_search(cfg, out)


# ---------------------------------------------------------------------------
# argument parsing


def build_parser() -> argparse.ArgumentParser:
    common = argparse.ArgumentParser(add_help=False)
    g = common.add_argument_group("data")
    g.add_argument("--config", help="INI file with [data] [collector] [augment] [train] [search] [eval] sections")
    g.add_argument("--data", help="CSV file (header row, numeric cells)")
    g.add_argument("--bundled", choices=["synthetic", "wine_red"])
    g.add_argument("--task", choices=["classification", "regression"])
    g.add_argument("--target", help="target column name (default: last column)")
    g.add_argument("--split-seed", type=int)
    g.add_argument("--out", help=f"output directory (default: ${OUT_ENV} or {DEFAULT_OUT})")
    g.add_argument("--seed", type=int, help="seed for collection, augmentation and training")
    g.add_argument("-v", "--verbose", action="store_true")
    g = common.add_argument_group("collection")
    g.add_argument("--episodes", type=int)
    g.add_argument("--steps", type=int)
    g.add_argument("--collector", choices=["rl", "random"])
    g.add_argument("--collector-seed", type=int)
    g = common.add_argument_group("training")
    g.add_argument("--no-augment", action="store_true")
    g.add_argument("--augment-k", type=int)
    g.add_argument("--epochs", type=int)
    g.add_argument("--batch-size", type=int)
    g.add_argument("--alpha", type=float)
    g.add_argument("--lr", type=float)
    g.add_argument("--train-seed", type=int)
    g = common.add_argument_group("search")
    g.add_argument("--top-t", type=int)
    g.add_argument("--eta", type=float)
    g.add_argument("--ascent-steps", type=int)
    g.add_argument("--beam", type=int)
    g.add_argument("--max-len", type=int)
    g = common.add_argument_group("downstream")
    g.add_argument("--model", choices=["random_forest", "decision_tree", "ridge"])
    g.add_argument("--metric")
    g.add_argument("--cv-seed", type=int)

    p = argparse.ArgumentParser(prog="featsearch", description=__doc__.splitlines()[0])
    sub = p.add_subparsers(dest="command", required=True)
    sub.add_parser("collect", parents=[common], help="collect (program, score) records")
    sp = sub.add_parser("train", parents=[common], help="train the sequence model on a record log")
    sp.add_argument("--records")
    sp = sub.add_parser("search", parents=[common], help="search a trained checkpoint")
    sp.add_argument("--checkpoint")
    sp.add_argument("--records")
    sp = sub.add_parser("eval", parents=[common], help="score a program file")
    sp.add_argument("program")
    sub.add_parser("run", parents=[common], help="collect, train and search")
    return p


def main(argv=None) -> int:
    args = build_parser().parse_args(argv)
    logging.basicConfig(
        level=logging.INFO if args.verbose else logging.WARNING,
        format="%(asctime)s %(name)s %(message)s", stream=sys.stderr,
    )
    try:
        cfg = apply_flags(load_config(args.config), args)
        if args.command == "eval":
            cmd_eval(cfg, Path(args.program))
            return 0
        out = Path(cfg.out_dir)
        out.mkdir(parents=True, exist_ok=True)
        if args.command == "collect":
            cmd_collect(cfg, out)
        elif args.command == "train":
            cmd_train(cfg, out, Path(args.records) if args.records else None)
        elif args.command == "search":
            cmd_search(cfg, out, Path(args.checkpoint) if args.checkpoint else None,
                       Path(args.records) if args.records else None)
        else:
            cmd_run(cfg, out)
    except InputError as e:
        print(f"error: {e}", file=sys.stderr)
        return 1
    except (InvariantError, FloatingPointError) as e:
        print(f"internal error: {e}", file=sys.stderr)
        return 2
    return 0


if __name__ == "__main__":
    sys.exit(main())
