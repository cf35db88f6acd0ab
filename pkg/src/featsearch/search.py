"""Latent search: seed selection, gradient ascent on embeddings, beam decoding,
and selection of the best transformed feature space."""
from __future__ import annotations

import logging
from dataclasses import asdict, dataclass, field
from typing import Callable, Sequence

import numpy as np

from . import expr, opset
from .data import Dataset
from .downstream import EvalConfig, train_eval
from .records import TransformationRecord

log = logging.getLogger(__name__)


@dataclass
class SearchConfig:
    top_t: int = 20
    eta: float = 1.0
    ascent_steps: int = 10
    beam: int = 5
    max_len: int | None = None  # None: twice the longest training program
    mode: str = opset.GUARDED  # operation mode for generated columns

    def __post_init__(self):
        if self.top_t < 1 or self.beam < 1 or not self.eta > 0:
            raise ValueError("need top_t >= 1, beam >= 1 and eta > 0")


# ---------------------------------------------------------------------------
# seeds


def segment_multiset(program: Sequence[str]) -> tuple:
    return tuple(sorted(tuple(s) for s in expr.split_segments(program)))


def select_seeds(records: Sequence[TransformationRecord], t: int) -> list[TransformationRecord]:
    """Top ``t`` records by score; ties go to the shorter, then lexicographically
    smaller program. Shuffles of one segment multiset count once."""
    if not records:
        raise ValueError("no records to seed from")
    ranked = sorted(records, key=lambda r: (-r.score, len(r.program), r.program))
    seen = set()
    out = []
    for r in ranked:
        key = segment_multiset(r.program)
        if key in seen:
            continue
        seen.add(key)
        out.append(r)
        if len(out) == t:
            break
    return out


# ---------------------------------------------------------------------------
# gradient ascent


@dataclass
class AscentResult:
    E: np.ndarray
    v_before: float
    v_after: float
    steps: int
    eta: float


def ascend(model, E, eta: float = 1.0, steps: int = 10, tol: float = 1e-6,
           max_halvings: int = 40) -> AscentResult:
    """Move ``E`` along the evaluator gradient, never accepting a decrease.

    ``model`` needs ``estimate_and_grad(E) -> (value, grad)``. A step that
    lowers the estimate is retried from the same point with half the step
    size; iteration stops after ``steps`` accepted steps or once the relative
    improvement drops below ``tol``.
    """
    E = np.array(getattr(E, "E", E), dtype=np.float64)
    v0, g = model.estimate_and_grad(E)
    v = v0
    taken = 0
    for _ in range(steps):
        for _ in range(max_halvings):
            E_new = E + eta * g
            v_new, g_new = model.estimate_and_grad(E_new)
            if v_new >= v:
                break
            eta /= 2.0
        else:
            break
        gain = (v_new - v) / max(abs(v), 1e-12)
        E, v, g = E_new, v_new, g_new
        taken += 1
        if gain < tol:
            break
    return AscentResult(E, v0, v, taken, eta)


# ---------------------------------------------------------------------------
# decoding

StepFn = Callable[[np.ndarray, tuple], tuple[np.ndarray, tuple]]


def _take(state: tuple, idx) -> tuple:
    return tuple(s[idx] for s in state)


def _only(logp: np.ndarray, code: int) -> np.ndarray:
    """Keep the model's log probability of ``code`` and rule out everything else."""
    out = np.full_like(logp, -np.inf)
    out[:, code] = logp[:, code]
    return out


def beam_search(step_fn: StepFn, init_state: tuple, sos: int, eos: int, b: int,
                max_len: int) -> tuple[list[int], float]:
    """Log-domain beam search over code sequences starting with ``sos``.

    ``step_fn(prev_codes (k,), state) -> (logp (k, C), new_state)`` where the
    state is a tuple of arrays whose first axis indexes beams. A beam that
    emits ``eos`` is frozen and its slot retired, so the live beam shrinks as
    sequences finish. Sequences are capped at ``max_len`` codes including
    both ends: at the last position only ``eos`` may be emitted. Returns the
    finished sequence with the highest summed log probability.
    """
    alive: list[list[int]] = [[sos]]
    alive_lp = np.zeros(1)
    state = init_state
    finished: list[tuple[list[int], float]] = []
    if max_len < 2:
        raise ValueError("max_len must leave room for sos and eos")
    for pos in range(1, max_len):
        width = b - len(finished)
        if width <= 0 or not alive:
            break
        logp, state = step_fn(np.array([s[-1] for s in alive]), state)
        if pos == max_len - 1:
            logp = _only(logp, eos)
        total = (alive_lp[:, None] + logp).ravel()
        order = np.argsort(-total, kind="stable")[:width]
        order = order[np.isfinite(total[order])]
        C = logp.shape[1]
        keep_rows, new_alive, new_lp = [], [], []
        for flat in order:
            row, code = divmod(int(flat), C)
            seq = alive[row] + [code]
            if code == eos:
                finished.append((seq, float(total[flat])))
            else:
                keep_rows.append(row)
                new_alive.append(seq)
                new_lp.append(total[flat])
        alive, alive_lp = new_alive, np.array(new_lp)
        state = _take(state, np.array(keep_rows, dtype=np.int64)) if keep_rows else state
    best = max(range(len(finished)), key=lambda i: (finished[i][1], -i))
    return finished[best]


def greedy_decode(step_fn: StepFn, init_state: tuple, sos: int, eos: int,
                  max_len: int) -> tuple[list[int], float]:
    if max_len < 2:
        raise ValueError("max_len must leave room for sos and eos")
    seq, lp, state = [sos], 0.0, init_state
    while True:
        logp, state = step_fn(np.array([seq[-1]]), state)
        if len(seq) == max_len - 1:
            logp = _only(logp, eos)
        code = int(np.argmax(logp[0]))
        lp += float(logp[0, code])
        seq.append(code)
        if code == eos:
            return seq, lp


def _model_step(model, E):
    def step(prev, state):
        logp, new_state, _ = model.decoder_step(E, prev, state)
        return logp, new_state
    return step


def beam_decode(model, E, b: int, max_len: int) -> tuple[tuple[str, ...], float]:
    """Decode an embedding into tokens with a beam of width ``b``."""
    v = model.vocab
    codes, lp = beam_search(_model_step(model, E), model.decoder_start(E), v.sos, v.eos, b, max_len)
    return v.decode(codes), lp


def greedy_program(model, E, max_len: int) -> tuple[tuple[str, ...], float]:
    v = model.vocab
    codes, lp = greedy_decode(_model_step(model, E), model.decoder_start(E), v.sos, v.eos, max_len)
    return v.decode(codes), lp


# ---------------------------------------------------------------------------
# scoring and selection


@dataclass
class ProgramScore:
    program: tuple[str, ...]  # only the segments that produced a column
    X: np.ndarray  # originals followed by the generated columns
    score: float | None  # None when no segment survived
    report: expr.ValidityReport
    strict_valid: bool


def score_program(program: Sequence[str], d: Dataset, eval_cfg: EvalConfig | None = None,
                  mode: str = opset.GUARDED) -> ProgramScore:
    """Evaluate ``program`` on ``d`` and score originals plus its columns.

    Segments that are ungrammatical or non-finite under ``mode`` are dropped.
    ``strict_valid`` tells whether the whole sequence is valid with the
    textbook (unguarded) operations; it feeds the valid rate.
    """
    eval_cfg = eval_cfg or EvalConfig()
    _, strict = expr.evaluate(program, d.X, opset.STRICT)
    cols, report = expr.evaluate(program, d.X, mode)
    segs = expr.split_segments(program)
    kept = [s for s, ok in zip(segs, report.valid_mask) if ok]
    if not kept:
        return ProgramScore((), d.X, None, report, strict.sequence_valid)
    X = np.column_stack([d.X, cols])
    score = train_eval(X, d.y, d.task, eval_cfg).value
    return ProgramScore(expr.join_segments(kept), X, score, report, strict.sequence_valid)


@dataclass
class SearchResult:
    program: tuple[str, ...]
    X: np.ndarray
    score: float
    fallback: bool
    report: dict = field(default_factory=dict)


def run_search(model, records: Sequence[TransformationRecord], d: Dataset,
               cfg: SearchConfig | None = None, eval_cfg: EvalConfig | None = None) -> SearchResult:
    """Seed, ascend, decode and score; return the best measured feature space."""
    cfg = cfg or SearchConfig()
    eval_cfg = eval_cfg or EvalConfig()
    max_len = cfg.max_len or 2 * (model.max_len or max(len(r.program) for r in records))
    baseline = train_eval(d.X, d.y, d.task, eval_cfg).value
    seeds = select_seeds(records, cfg.top_t)
    rows = []
    best_i, best = None, None
    for i, seed in enumerate(seeds):
        E = model.encode(seed.program).E
        asc = ascend(model, E, cfg.eta, cfg.ascent_steps)
        tokens, lp = beam_decode(model, asc.E, cfg.beam, max_len)
        res = score_program(tokens, d, eval_cfg, cfg.mode)
        rows.append({
            "seed_index": i,
            "seed_program": expr.to_text(seed.program),
            "seed_score": seed.score,
            "v_hat_before": asc.v_before,
            "v_hat_after": asc.v_after,
            "ascent_steps": asc.steps,
            "decoded_program": expr.to_text(tokens),
            "log_prob": lp,
            "valid": res.strict_valid,
            "valid_segments": res.report.valid_segment_count,
            "total_segments": res.report.total_segment_count,
            "kept_program": expr.to_text(res.program) if res.program else None,
            "measured_score": res.score,
        })
        if res.score is not None and (best is None or res.score > best.score):
            best_i, best = i, res
        log.info("seed %d: v_hat %.4f -> %.4f, measured %s", i, asc.v_before, asc.v_after, res.score)
    valid_rate = sum(r["valid"] for r in rows) / len(rows)
    report = {
        "metric": eval_cfg.metric_for(d.task),
        "baseline_score": baseline,
        "valid_rate": valid_rate,
        "max_len": max_len,
        "config": asdict(cfg),
        "seeds": rows,
    }
    if best is None:
        log.warning("no decoded program produced a usable column; keeping the original features")
        report.update(fallback=True, best=None)
        return SearchResult((), d.X, baseline, True, report)
    report.update(fallback=False, best={
        "seed_index": best_i, "program": expr.to_text(best.program), "score": best.score,
    })
    return SearchResult(best.program, best.X, best.score, False, report)
