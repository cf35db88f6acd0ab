"""Encoder / evaluator / decoder over postfix programs.

* encoder: token embedding (32) -> single-layer LSTM (64); its per-token
  hidden states form the embedding matrix ``E`` (M x 64).
* evaluator: mean-pool ``E`` over real tokens -> 3-layer MLP (200 wide) -> scalar.
* decoder: single-layer LSTM (64) started from a learned ``h0``; at every step
  dot-product attention over ``E`` gives a context vector, and
  ``W_c [h_dec ; context]`` gives logits over the vocabulary.

Training minimises ``alpha * L_rec + (1 - alpha) * L_est`` with teacher forcing.
"""
from __future__ import annotations

import json
from dataclasses import asdict, dataclass, field
from pathlib import Path
from typing import Sequence

import numpy as np

from . import neurocore as nc
from .errors import InputError
from .expr import Vocabulary

MASK_FILL = -1e9


@dataclass
class TrainConfig:
    alpha: float = 0.05
    batch_size: int = 1024
    epochs: int = 100
    lr: float = 1e-3
    seed: int = 0
    emb_dim: int = 32
    hidden: int = 64
    eval_hidden: int = 200
    clip_norm: float = 5.0

    def __post_init__(self):
        if not 0.0 <= self.alpha <= 1.0:
            raise InputError(f"alpha must lie in [0, 1], got {self.alpha}")


@dataclass
class EmbeddingMatrix:
    E: np.ndarray  # (M, d)

    @property
    def pooled(self) -> np.ndarray:
        return self.E.mean(axis=0)


@dataclass
class Batch:
    codes: np.ndarray  # (B, T) padded with the pad code
    lengths: np.ndarray  # (B,)
    v: np.ndarray  # (B,) normalised targets

    @property
    def mask(self) -> np.ndarray:
        return np.arange(self.codes.shape[1])[None, :] < self.lengths[:, None]


@dataclass
class LossParts:
    total: nc.Tensor
    rec: nc.Tensor
    est: nc.Tensor
    logits: nc.Tensor | None = None  # (B, T-1, C), for accuracy


@dataclass
class TrainHistory:
    loss: list = field(default_factory=list)
    rec: list = field(default_factory=list)
    est: list = field(default_factory=list)
    token_acc: list = field(default_factory=list)

    def to_csv(self, path) -> None:
        lines = ["epoch,loss,rec,est,token_acc"]
        for i, row in enumerate(zip(self.loss, self.rec, self.est, self.token_acc)):
            lines.append(",".join([str(i + 1)] + [repr(float(x)) for x in row]))
        Path(path).write_text("\n".join(lines) + "\n")


class SeqModel:
    def __init__(self, vocab: Vocabulary, params: dict, config: TrainConfig,
                 v_min: float = 0.0, v_max: float = 1.0, max_len: int = 0):
        self.vocab = vocab
        self.params = params
        self.config = config
        self.v_min = v_min
        self.v_max = v_max
        self.max_len = max_len
        self._frozen_cache = None

    # -- construction -------------------------------------------------------

    @classmethod
    def init(cls, vocab: Vocabulary, config: TrainConfig | None = None) -> "SeqModel":
        cfg = config or TrainConfig()
        rng = np.random.default_rng(cfg.seed)
        C, e, d, hid = len(vocab), cfg.emb_dim, cfg.hidden, cfg.eval_hidden
        enc = nc.LSTMCellParams.init(rng, e, d)
        dec = nc.LSTMCellParams.init(rng, e, d)
        out = nc.Dense.init(rng, 2 * d, C)
        ev1 = nc.Dense.init(rng, d, hid)
        ev2 = nc.Dense.init(rng, hid, hid)
        ev3 = nc.Dense.init(rng, hid, 1)
        params = {
            "embed": nc.parameter(rng.normal(0.0, 0.1, size=(C + 1, e))),  # last row: pad
            "enc.W": enc.W, "enc.b": enc.b,
            "dec.W": dec.W, "dec.b": dec.b,
            "dec.h0": nc.parameter(np.zeros(d)),
            "out.W": out.W, "out.b": out.b,
            "ev1.W": ev1.W, "ev1.b": ev1.b,
            "ev2.W": ev2.W, "ev2.b": ev2.b,
            "ev3.W": ev3.W, "ev3.b": ev3.b,
        }
        return cls(vocab, params, cfg)

    @property
    def pad(self) -> int:
        return len(self.vocab)

    @property
    def hidden(self) -> int:
        return self.params["dec.h0"].shape[0]

    def _frozen(self) -> dict:
        """Graph-free copies of the parameters (for inference-time gradients)."""
        key = tuple(id(p.data) for p in self.params.values())
        if self._frozen_cache is None or self._frozen_cache[0] != key:
            self._frozen_cache = (key, {k: nc.Tensor(p.data) for k, p in self.params.items()})
        return self._frozen_cache[1]

    # -- building blocks ------------------------------------------------------

    @staticmethod
    def _lstm(P, prefix):
        return nc.LSTMCellParams(P[prefix + ".W"], P[prefix + ".b"])

    def _encode(self, P, codes: np.ndarray) -> nc.Tensor:
        B, T = codes.shape
        cell = self._lstm(P, "enc")
        d = cell.hidden
        h = nc.Tensor(np.zeros((B, d)))
        c = nc.Tensor(np.zeros((B, d)))
        hs = []
        for t in range(T):
            x = nc.take_rows(P["embed"], codes[:, t])
            h, c = nc.lstm_step(cell, x, h, c)
            hs.append(h)
        return nc.stack(hs, axis=1)  # (B, T, d)

    @staticmethod
    def _pool(E: nc.Tensor, mask: np.ndarray) -> nc.Tensor:
        w = mask / mask.sum(axis=1, keepdims=True)
        return nc.sum_(nc.mul(E, w[:, :, None]), axis=1)

    @staticmethod
    def _evaluator(P, pooled: nc.Tensor) -> nc.Tensor:
        z = nc.relu(nc.add(nc.matmul(pooled, P["ev1.W"]), P["ev1.b"]))
        z = nc.relu(nc.add(nc.matmul(z, P["ev2.W"]), P["ev2.b"]))
        z = nc.add(nc.matmul(z, P["ev3.W"]), P["ev3.b"])
        return nc.reshape(z, (z.shape[0],))

    def _decoder_start(self, P, B):
        d = P["dec.h0"].shape[0]
        h = nc.add(nc.Tensor(np.zeros((B, d))), P["dec.h0"])
        c = nc.Tensor(np.zeros((B, d)))
        return h, c

    def _decoder_step(self, P, E: nc.Tensor, mask_bias: np.ndarray, prev: np.ndarray, h, c):
        B, M, d = E.shape
        x = nc.take_rows(P["embed"], prev)
        h, c = nc.lstm_step(self._lstm(P, "dec"), x, h, c)
        scores = nc.reshape(nc.matmul(E, nc.reshape(h, (B, d, 1))), (B, M))
        attn = nc.softmax(nc.add(scores, mask_bias), axis=1)
        ctx = nc.reshape(nc.matmul(nc.reshape(attn, (B, 1, M)), E), (B, d))
        logits = nc.add(nc.matmul(nc.concat([h, ctx], axis=1), P["out.W"]), P["out.b"])
        return logits, h, c, attn

    # -- batches ----------------------------------------------------------------

    def make_batch(self, programs: Sequence[Sequence[str]], v=None) -> Batch:
        encoded = [self.vocab.encode(p) for p in programs]
        lengths = np.array([len(e) for e in encoded])
        if lengths.min() < 2:
            raise InputError("programs need at least <SOS> and <EOS>")
        codes = np.full((len(encoded), lengths.max()), self.pad, dtype=np.int64)
        for i, e in enumerate(encoded):
            codes[i, : len(e)] = e
        v = np.zeros(len(encoded)) if v is None else np.asarray(v, dtype=np.float64)
        return Batch(codes, lengths, v)

    def normalise(self, v):
        span = self.v_max - self.v_min
        v = np.asarray(v, dtype=np.float64)
        return (v - self.v_min) / span if span > 0 else np.zeros_like(v)

    def denormalise(self, v):
        return np.asarray(v) * (self.v_max - self.v_min) + self.v_min

    # -- losses -----------------------------------------------------------------

    def loss(self, batch: Batch, alpha: float | None = None, P=None) -> LossParts:
        """Joint loss on a batch. ``L_rec`` is each sequence's mean token NLL
        (positions 2..M; <SOS> is never predicted), averaged over the batch."""
        P = P or self.params
        alpha = self.config.alpha if alpha is None else alpha
        codes, mask = batch.codes, batch.mask
        B, T = codes.shape
        E = self._encode(P, codes)
        v_hat = self._evaluator(P, self._pool(E, mask))
        est = nc.mse(v_hat, batch.v)

        mask_bias = np.where(mask, 0.0, MASK_FILL)
        h, c = self._decoder_start(P, B)
        logits = []
        for t in range(T - 1):
            lg, h, c, _ = self._decoder_step(P, E, mask_bias, codes[:, t], h, c)
            logits.append(lg)
        L = nc.stack(logits, axis=1)  # (B, T-1, C)
        tmask = mask[:, 1:]
        n_tgt = tmask.sum(axis=1, keepdims=True)
        weight = (tmask / n_tgt / B).reshape(-1)
        target = np.where(tmask, codes[:, 1:], 0).reshape(-1)
        rec = nc.softmax_cross_entropy(nc.reshape(L, (B * (T - 1), -1)), target, weight)
        total = nc.add(nc.mul(rec, alpha), nc.mul(est, 1.0 - alpha))
        return LossParts(total, rec, est, L)

    @staticmethod
    def token_accuracy(parts: LossParts, batch: Batch) -> float:
        pred = parts.logits.data.argmax(axis=2)
        tmask = batch.mask[:, 1:]
        return float((pred == batch.codes[:, 1:])[tmask].mean())

    def teacher_forced_accuracy(self, programs, batch_size: int = 256) -> float:
        """Fraction of target tokens the decoder ranks first given the true prefix."""
        hits = total = 0
        with nc.no_grad():
            for s in range(0, len(programs), batch_size):
                batch = self.make_batch(programs[s:s + batch_size])
                parts = self.loss(batch, 1.0, self._frozen())
                tmask = batch.mask[:, 1:]
                hits += int((parts.logits.data.argmax(axis=2) == batch.codes[:, 1:])[tmask].sum())
                total += int(tmask.sum())
        return hits / total

    # -- training ---------------------------------------------------------------

    def fit(self, programs, scores, config: TrainConfig | None = None, log=None) -> TrainHistory:
        """Train on (program, score) pairs. Deterministic given ``config.seed``."""
        cfg = config or self.config
        self.config = cfg
        if not programs:
            raise InputError("no training records")
        scores = np.asarray(scores, dtype=np.float64)
        self.v_min, self.v_max = float(scores.min()), float(scores.max())
        self.max_len = max(len(p) for p in programs)
        v_norm = self.normalise(scores)
        rng = np.random.default_rng(cfg.seed)
        adam = nc.AdamState(lr=cfg.lr, clip_norm=cfg.clip_norm)
        bs = max(1, min(cfg.batch_size, len(programs)))
        hist = TrainHistory()
        lengths = np.array([len(p) for p in programs])
        for epoch in range(cfg.epochs):
            order = rng.permutation(len(programs))
            # group similar lengths so padding stays small, then shuffle batch order
            order = order[np.argsort(lengths[order], kind="stable")]
            batches = [order[s:s + bs] for s in range(0, len(order), bs)]
            sums = np.zeros(4)
            n_seen = 0
            for b in rng.permutation(len(batches)):
                idx = batches[b]
                batch = self.make_batch([programs[i] for i in idx], v_norm[idx])
                nc.zero_grads(self.params)
                parts = self.loss(batch, cfg.alpha)
                parts.total.backward()
                nc.adam_step(adam, self.params)
                k = len(idx)
                sums += k * np.array([
                    float(parts.total.data), float(parts.rec.data), float(parts.est.data),
                    self.token_accuracy(parts, batch),
                ])
                n_seen += k
            means = sums / n_seen
            hist.loss.append(means[0])
            hist.rec.append(means[1])
            hist.est.append(means[2])
            hist.token_acc.append(means[3])
            if not all(np.isfinite(p.data).all() for p in self.params.values()):
                raise FloatingPointError(f"non-finite parameters after epoch {epoch + 1}")
            if log is not None:
                log(epoch + 1, means)
        nc.zero_grads(self.params)
        self._frozen_cache = None
        return hist

    # -- inference --------------------------------------------------------------

    def encode(self, program: Sequence[str]) -> EmbeddingMatrix:
        codes = np.asarray([self.vocab.encode(program)], dtype=np.int64)
        with nc.no_grad():
            E = self._encode(self._frozen(), codes)
        return EmbeddingMatrix(E.data[0].copy())

    def estimate(self, E) -> float:
        """Predicted score (in the corpus' original units) for an embedding matrix."""
        return self.estimate_and_grad(E, need_grad=False)[0]

    def estimate_and_grad(self, E, need_grad: bool = True):
        E = np.asarray(E.E if isinstance(E, EmbeddingMatrix) else E, dtype=np.float64)
        if E.ndim != 2 or E.shape[0] == 0:
            raise InputError("embedding matrix must be non-empty (M, d)")
        P = self._frozen()
        Et = nc.parameter(E[None]) if need_grad else nc.Tensor(E[None])
        v = self._evaluator(P, self._pool(Et, np.ones((1, E.shape[0]), dtype=bool)))
        scale = self.v_max - self.v_min if self.v_max > self.v_min else 1.0
        value = float(self.denormalise(v.data)[0])
        if not need_grad:
            return value, None
        nc.sum_(v).backward()
        return value, Et.grad[0] * scale

    def decoder_start(self, E, k: int = 1):
        """Initial decoder state for ``k`` parallel beams over one embedding."""
        E = np.asarray(E.E if isinstance(E, EmbeddingMatrix) else E, dtype=np.float64)
        with nc.no_grad():
            h, c = self._decoder_start(self._frozen(), k)
        return h.data, c.data

    def decoder_step(self, E, prev_codes, state):
        """One decoder step for ``k`` beams sharing embedding ``E``.

        Returns (log-probabilities (k, |C|), new state, attention weights (k, M)).
        """
        E = np.asarray(E.E if isinstance(E, EmbeddingMatrix) else E, dtype=np.float64)
        prev = np.atleast_1d(np.asarray(prev_codes, dtype=np.int64))
        k = prev.shape[0]
        h, c = state
        with nc.no_grad():
            Ek = nc.Tensor(np.broadcast_to(E, (k,) + E.shape))
            lg, h2, c2, attn = self._decoder_step(
                self._frozen(), Ek, np.zeros((k, E.shape[0])), prev, nc.Tensor(h), nc.Tensor(c)
            )
        z = lg.data
        zmax = z.max(axis=1, keepdims=True)
        logp = z - zmax - np.log(np.exp(z - zmax).sum(axis=1, keepdims=True))
        return logp, (h2.data, c2.data), attn.data

    def sequence_log_prob(self, E, program: Sequence[str]) -> float:
        """log P(program[1:] | E) by chaining decoder steps from <SOS>."""
        codes = self.vocab.encode(program)
        state = self.decoder_start(E)
        total = 0.0
        for prev, nxt in zip(codes[:-1], codes[1:]):
            logp, state, _ = self.decoder_step(E, [prev], state)
            total += float(logp[0, nxt])
        return total

    # -- persistence ------------------------------------------------------------

    def save(self, path, extra: dict | None = None) -> None:
        meta = {
            "vocab": self.vocab.to_dict(),
            "train_config": asdict(self.config),
            "v_min": self.v_min,
            "v_max": self.v_max,
            "max_len": self.max_len,
        }
        if extra:
            meta.update(extra)
        nc.save_checkpoint(path, self.params, meta)

    @classmethod
    def load(cls, path) -> "SeqModel":
        params, meta = nc.load_checkpoint(path)
        try:
            vocab = Vocabulary.from_dict(meta["vocab"])
            cfg = TrainConfig(**meta["train_config"])
        except (KeyError, TypeError) as e:
            raise InputError(f"checkpoint {path} is missing metadata: {e}") from None
        return cls(vocab, params, cfg, meta["v_min"], meta["v_max"], meta["max_len"])


def load_meta(path) -> dict:
    return {k: v for k, v in json.loads(Path(path).read_text()).items() if k != "params"}
