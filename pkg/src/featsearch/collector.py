"""Reinforcement-learning collector of (program, score) training records.

Three cascading value-network agents pick a head column, an operation and
(for binary operations) a tail column. The new column is appended to the
working feature matrix and the reward is the change in downstream score.
After every accepted step the cumulative program, expressed over the
original feature ids, is logged together with its score.
"""
from __future__ import annotations

import logging
from dataclasses import dataclass, field
from typing import Callable

import numpy as np

from . import expr, opset
from . import neurocore as nc
from .data import Dataset, describe
from .downstream import EvalConfig, train_eval
from .records import TransformationRecord

log = logging.getLogger(__name__)

N_OPS = len(opset.OP_NAMES)
STATE_DIM = 49


@dataclass
class CollectorConfig:
    epochs: int = 512
    steps: int = 6
    mode: str = "rl"  # "rl" or "random"
    gamma: float = 0.95
    eps_start: float = 1.0
    eps_end: float = 0.1
    hidden: int = 100
    batch_size: int = 32
    buffer_size: int = 5000
    lr: float = 1e-3
    clip_norm: float | None = 5.0  # global gradient-norm clip for the Q-networks
    sync_every: int = 20
    updates_per_step: int = 1  # gradient steps per agent per environment step
    penalty: float = -0.05
    seed: int = 0

    def epsilon(self, epoch: int) -> float:
        if self.mode == "random":
            return 1.0
        half = max(self.epochs / 2, 1)
        return max(self.eps_end, self.eps_start - (self.eps_start - self.eps_end) * epoch / half)


def prep(v) -> np.ndarray:
    """Squash raw statistics into a range an MLP can digest."""
    v = np.nan_to_num(np.asarray(v, dtype=np.float64), nan=0.0,
                      posinf=np.finfo(np.float64).max, neginf=-np.finfo(np.float64).max)
    return np.sign(v) * np.log1p(np.abs(v))


def one_hot(i: int, n: int) -> np.ndarray:
    out = np.zeros(n)
    out[i] = 1.0
    return out


# ---------------------------------------------------------------------------
# value networks


class QNetwork:
    """Two hidden ReLU layers; a policy copy plus a lagged target copy."""

    def __init__(self, n_in: int, n_out: int, hidden: int, rng, lr: float = 1e-3,
                 clip_norm: float | None = None):
        self.layers = [
            nc.Dense.init(rng, n_in, hidden),
            nc.Dense.init(rng, hidden, hidden),
            nc.Dense.init(rng, hidden, n_out),
        ]
        # zero output layer: a slot's value stays exactly 0 until its action is
        # trained, so never-tried actions cannot win the max in a Bellman target
        last = self.layers[-1]
        last.W.data = np.zeros_like(last.W.data)
        last.b.data = np.zeros_like(last.b.data)
        self.params = {}
        for i, layer in enumerate(self.layers):
            self.params[f"l{i}.W"] = layer.W
            self.params[f"l{i}.b"] = layer.b
        self.target = {k: p.data.copy() for k, p in self.params.items()}
        self.adam = nc.AdamState(lr=lr, clip_norm=clip_norm)

    def forward(self, X, params=None):
        P = self.params if params is None else {k: nc.Tensor(v) for k, v in params.items()}
        z = nc.as_tensor(X)
        for i in range(3):
            z = nc.add(nc.matmul(z, P[f"l{i}.W"]), P[f"l{i}.b"])
            if i < 2:
                z = nc.relu(z)
        return z

    def q(self, X) -> np.ndarray:
        with nc.no_grad():
            return self.forward(np.atleast_2d(X)).data

    def q_target(self, X) -> np.ndarray:
        return self.forward(np.atleast_2d(X), self.target).data

    def sync(self):
        self.target = {k: p.data.copy() for k, p in self.params.items()}


@dataclass
class Transition:
    inputs: np.ndarray  # state row (1, n_in)
    action: int
    reward: float
    next_inputs: np.ndarray | None  # next state row; None = terminal
    next_valid: int = 0  # number of actions available in the next state


class Agent:
    """A Q-network plus its replay buffer.

    Feature agents output one value per column slot; only the first
    ``n_valid`` slots (the columns that exist right now) are ever read, so the
    action count grows as features are generated within an episode.
    """

    def __init__(self, name, n_in, n_out, cfg: CollectorConfig, rng):
        self.name = name
        self.net = QNetwork(n_in, n_out, cfg.hidden, rng, cfg.lr, cfg.clip_norm)
        self.buffer: list[Transition] = []
        self.capacity = cfg.buffer_size
        self.updates = 0

    def values(self, inputs: np.ndarray) -> np.ndarray:
        return self.net.q(inputs)[0]

    def remember(self, t: Transition):
        self.buffer.append(t)
        if len(self.buffer) > self.capacity:
            self.buffer.pop(0)


def train_step(agent: Agent, batch: list[Transition], gamma: float, sync_every: int = 20) -> float:
    """One gradient step on the Bellman mean squared error; returns the loss."""
    X = np.vstack([t.inputs for t in batch])
    actions = np.array([t.action for t in batch])
    rewards = np.array([t.reward for t in batch])
    target = rewards.copy()
    live = [i for i, t in enumerate(batch) if t.next_inputs is not None and gamma != 0.0]
    if live:
        q_next = agent.net.q_target(np.vstack([batch[i].next_inputs for i in live]))
        n_valid = np.array([batch[i].next_valid for i in live])
        valid = np.arange(q_next.shape[1])[None, :] < n_valid[:, None]
        target[live] += gamma * np.where(valid, q_next, -np.inf).max(axis=1)
    nc.zero_grads(agent.net.params)
    q = agent.net.forward(X)
    pred = nc.getitem(q, (np.arange(len(batch)), actions))
    loss = nc.mse(pred, target)
    loss.backward()
    nc.adam_step(agent.net.adam, agent.net.params)
    agent.updates += 1
    if agent.updates % sync_every == 0:
        agent.net.sync()
    return float(loss.data)


# ---------------------------------------------------------------------------
# environment


@dataclass
class Episode:
    """Working feature space: columns, their trees over original ids, and state reps."""

    X: np.ndarray
    trees: list
    reps: list  # prep(describe(column)) per column
    generated: list = field(default_factory=list)  # trees of accepted new columns
    score: float = 0.0

    @classmethod
    def start(cls, X: np.ndarray, score: float, base_reps: list) -> "Episode":
        trees = [expr.leaf(j) for j in range(X.shape[1])]
        return cls(X, trees, list(base_reps), [], score)


@dataclass
class Actions:
    head: int
    op: str
    tail: int | None
    inputs: dict  # agent name -> (state row, chosen action or None, actions available)


def select_actions(agents: dict, ep: Episode, eps: float, rng) -> Actions:
    """Cascade head -> operation -> tail with epsilon-greedy picks.

    ``agents`` maps "head"/"op"/"tail" to objects with ``values(state_row)``;
    feature agents' values are read for the existing columns only. With
    ``eps == 1`` the networks are never consulted.
    """
    s_x = prep(describe(ep.X))
    n_cols = ep.X.shape[1]

    head_in = s_x[None, :]
    if rng.random() < eps:
        h = int(rng.integers(n_cols))
    else:
        h = int(np.argmax(agents["head"].values(head_in)[:n_cols]))

    s_op = np.concatenate([s_x, ep.reps[h]])
    op_in = s_op[None, :]
    if rng.random() < eps:
        o = int(rng.integers(N_OPS))
    else:
        o = int(np.argmax(agents["op"].values(op_in)))
    op = opset.OP_NAMES[o]

    tail_in = np.concatenate([s_op, one_hot(o, N_OPS)])[None, :]
    t = None
    if opset.arity(op) == 2:
        if rng.random() < eps:
            t = int(rng.integers(n_cols))
        else:
            t = int(np.argmax(agents["tail"].values(tail_in)[:n_cols]))
    return Actions(h, op, t, {
        "head": (head_in, h, n_cols), "op": (op_in, o, N_OPS), "tail": (tail_in, t, n_cols),
    })


def step(ep: Episode, actions: Actions, y, task: str, eval_cfg: EvalConfig, penalty: float = -0.05):
    """Apply one composition. Returns (reward, new tree or None if discarded)."""
    a = ep.X[:, actions.head]
    if actions.tail is None:
        col = opset.apply_unary(actions.op, a)
        tree = expr.node(actions.op, ep.trees[actions.head])
    else:
        col = opset.apply_binary(actions.op, a, ep.X[:, actions.tail])
        tree = expr.node(actions.op, ep.trees[actions.head], ep.trees[actions.tail])
    if not np.isfinite(col).all() or np.all(col == col[0]):
        return penalty, None
    X_next = np.column_stack([ep.X, col])
    new_score = train_eval(X_next, y, task, eval_cfg).value
    reward = new_score - ep.score
    ep.X = X_next
    ep.trees.append(tree)
    ep.reps.append(prep(describe(col)))
    ep.generated.append(tree)
    ep.score = new_score
    return reward, tree


# ---------------------------------------------------------------------------
# main loop


def make_agents(cfg: CollectorConfig, n_features: int, rng) -> dict:
    """Feature agents get one output slot per column an episode can reach."""
    n_slots = n_features + cfg.steps
    return {
        "head": Agent("head", STATE_DIM, n_slots, cfg, rng),
        "op": Agent("op", 2 * STATE_DIM, N_OPS, cfg, rng),
        "tail": Agent("tail", 2 * STATE_DIM + N_OPS, n_slots, cfg, rng),
    }


def collect(
    d: Dataset,
    cfg: CollectorConfig | None = None,
    eval_cfg: EvalConfig | None = None,
    on_record: Callable[[TransformationRecord], None] | None = None,
) -> list[TransformationRecord]:
    """Run ``cfg.epochs`` episodes of ``cfg.steps`` steps and return every record."""
    cfg = cfg or CollectorConfig()
    eval_cfg = eval_cfg or EvalConfig()
    if cfg.epochs < 1:
        raise ValueError("epochs must be >= 1")
    if cfg.mode not in ("rl", "random"):
        raise ValueError(f"unknown collector mode {cfg.mode!r}")
    rng = np.random.default_rng(cfg.seed)
    agents = make_agents(cfg, d.n_features, np.random.default_rng([cfg.seed, 1]))
    learn = cfg.mode == "rl"
    base_score = train_eval(d.X, d.y, d.task, eval_cfg).value
    base_reps = [prep(describe(d.X[:, j])) for j in range(d.n_features)]
    records: list[TransformationRecord] = []

    for epoch in range(cfg.epochs):
        eps = cfg.epsilon(epoch)
        ep = Episode.start(d.X, base_score, base_reps)
        pending: list[tuple[str, np.ndarray, int, float]] = []
        for _ in range(cfg.steps):
            acts = select_actions(agents, ep, eps, rng)
            if learn:
                for name, row, act, r in pending:
                    nxt, _, n_valid = acts.inputs[name]
                    agents[name].remember(Transition(row, act, r, nxt, n_valid))
            reward, tree = step(ep, acts, d.y, d.task, eval_cfg, cfg.penalty)
            pending = [(name, row, idx, reward)
                       for name, (row, idx, _) in acts.inputs.items() if idx is not None]
            if tree is not None:
                rec = TransformationRecord(
                    expr.infix_to_postfix(ep.generated), ep.score, "rl" if learn else "random"
                )
                records.append(rec)
                if on_record:
                    on_record(rec)
            if learn:
                for agent in agents.values():
                    for _ in range(cfg.updates_per_step if len(agent.buffer) >= cfg.batch_size else 0):
                        pick = rng.choice(len(agent.buffer), cfg.batch_size, replace=False)
                        train_step(agent, [agent.buffer[i] for i in pick], cfg.gamma, cfg.sync_every)
        if learn:
            for name, row, act, r in pending:
                agents[name].remember(Transition(row, act, r, None))
        if (epoch + 1) % max(1, cfg.epochs // 10) == 0:
            best = max((r.score for r in records), default=float("nan"))
            log.info("episode %d/%d  eps=%.2f  records=%d  best=%.4f",
                     epoch + 1, cfg.epochs, eps, len(records), best)
    return records
