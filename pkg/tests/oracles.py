"""Independent reference implementations used only by the tests.

None of these import the package code they check. Trees here are nested
tuples: ("f3",) for a leaf, (op, child) or (op, left, right) otherwise.
"""
from __future__ import annotations

import itertools
import math

import numpy as np

UNARY = ("sqrt", "square", "cos", "sin", "tan", "exp", "cube", "log",
         "reciprocal", "quantile", "minmax", "sigmoid")
BINARY = ("plus", "subtract", "multiply", "divide")
EPS = 1e-10
FMAX = np.finfo(np.float64).max


# ---------------------------------------------------------------------------
# random trees


def random_tree(rng, n_features, depth):
    if depth <= 1 or rng.random() < 0.3:
        return (f"f{rng.integers(n_features)}",)
    if rng.random() < 0.5:
        return (UNARY[rng.integers(len(UNARY))], random_tree(rng, n_features, depth - 1))
    return (BINARY[rng.integers(len(BINARY))],
            random_tree(rng, n_features, depth - 1), random_tree(rng, n_features, depth - 1))


def tree_depth(t):
    return 1 + max((tree_depth(c) for c in t[1:]), default=0)


# ---------------------------------------------------------------------------
# infix text and the two-stack conversion


def infix_tokens(t):
    """Fully parenthesised infix token list: unary as ``op ( x )``."""
    if len(t) == 1:
        return [t[0]]
    if len(t) == 2:
        return [t[0], "("] + infix_tokens(t[1]) + [")"]
    return ["("] + infix_tokens(t[1]) + [t[0]] + infix_tokens(t[2]) + [")"]


def shunting_yard(tokens):
    """Operator-stack conversion of infix tokens to postfix.

    Binary operators are left associative with equal precedence; unary
    operators behave like function calls and are emitted when their closing
    parenthesis is reached.
    """
    out, ops = [], []
    for tok in tokens:
        if tok.startswith("f") and tok[1:].isdigit():
            out.append(tok)
        elif tok in UNARY:
            ops.append(tok)
        elif tok == "(":
            ops.append(tok)
        elif tok == ")":
            while ops[-1] != "(":
                out.append(ops.pop())
            ops.pop()
            if ops and ops[-1] in UNARY:
                out.append(ops.pop())
        elif tok in BINARY:
            while ops and ops[-1] in BINARY:
                out.append(ops.pop())
            ops.append(tok)
        else:
            raise ValueError(tok)
    while ops:
        out.append(ops.pop())
    return out


def program_postfix(trees):
    body = []
    for i, t in enumerate(trees):
        if i:
            body.append("<SEP>")
        body.extend(shunting_yard(infix_tokens(t)))
    return ["<SOS>"] + body + ["<EOS>"]


# ---------------------------------------------------------------------------
# recursive evaluation


def _avg_ranks(x):
    order = np.argsort(x, kind="mergesort")
    ranks = np.empty(len(x))
    xs = x[order]
    i = 0
    while i < len(x):
        j = i
        while j + 1 < len(x) and xs[j + 1] == xs[i]:
            j += 1
        ranks[order[i:j + 1]] = (i + j) / 2.0 + 1.0
        i = j + 1
    return ranks


def _clean(x):
    x = np.where(np.isnan(x), 0.0, x)
    return np.clip(x, -FMAX, FMAX)


def op_guarded(op, *cols):
    with np.errstate(all="ignore"):
        if op == "sqrt":
            r = np.sqrt(np.abs(cols[0]))
        elif op == "square":
            r = cols[0] ** 2
        elif op == "cos":
            r = np.cos(cols[0])
        elif op == "sin":
            r = np.sin(cols[0])
        elif op == "tan":
            r = np.tan(cols[0])
        elif op == "exp":
            r = np.exp(cols[0])
        elif op == "cube":
            r = cols[0] * cols[0] * cols[0]
        elif op == "log":
            r = np.log(np.abs(cols[0]) + EPS)
        elif op == "reciprocal":
            x = cols[0]
            r = 1.0 / (x + np.where(x < 0, -EPS, EPS))
        elif op == "quantile":
            x = cols[0]
            if np.all(x == x[0]):
                r = np.full(len(x), 0.5)
            else:
                r = (_avg_ranks(x) - 1.0) / (len(x) - 1)
        elif op == "minmax":
            x = cols[0]
            lo, hi = x.min(), x.max()
            if hi == lo:
                r = np.zeros(len(x))
            else:
                r = (x - lo) / (hi - lo)
                if not np.isfinite(r).all():
                    r = (x / 2 - lo / 2) / (hi / 2 - lo / 2)
        elif op == "sigmoid":
            x = cols[0]
            r = np.where(x >= 0, 1.0 / (1.0 + np.exp(-np.abs(x))),
                         np.exp(-np.abs(x)) / (1.0 + np.exp(-np.abs(x))))
        elif op == "plus":
            r = cols[0] + cols[1]
        elif op == "subtract":
            r = cols[0] - cols[1]
        elif op == "multiply":
            r = cols[0] * cols[1]
        elif op == "divide":
            b = cols[1]
            r = cols[0] / np.where(b == 0, EPS, b)
        else:
            raise ValueError(op)
    return _clean(r)


def eval_tree(t, X):
    if len(t) == 1:
        return X[:, int(t[0][1:])]
    return op_guarded(t[0], *(eval_tree(c, X) for c in t[1:]))


# ---------------------------------------------------------------------------
# grammar


def brute_force_grammar(tokens, arity):
    """(framed, [per-segment ok]) by literal stack simulation."""
    framed = (len(tokens) >= 2 and tokens[0] == "<SOS>" and tokens[-1] == "<EOS>"
              and tokens.count("<SOS>") == 1 and tokens.count("<EOS>") == 1)
    body = list(tokens)
    if body and body[0] == "<SOS>":
        body = body[1:]
    if body and body[-1] == "<EOS>":
        body = body[:-1]
    segs, cur = [], []
    for tok in body:
        if tok == "<SEP>":
            segs.append(cur)
            cur = []
        else:
            cur.append(tok)
    segs.append(cur)
    oks = []
    for seg in segs:
        stack = []
        ok = True
        for tok in seg:
            if tok in arity:
                try:
                    args = [stack.pop() for _ in range(arity[tok])]
                except IndexError:
                    ok = False
                    break
                stack.append(("node", tok, args))
            elif tok.startswith("f"):
                stack.append(tok)
            else:
                ok = False
                break
        oks.append(ok and len(stack) == 1)
    return framed, oks


def all_sequences(alphabet, max_len):
    for n in range(max_len + 1):
        yield from itertools.product(alphabet, repeat=n)


# ---------------------------------------------------------------------------
# descriptive statistics


def linear_quantile(values, p):
    s = sorted(values)
    h = (len(s) - 1) * p
    lo = math.floor(h)
    hi = min(lo + 1, len(s) - 1)
    return s[lo] + (h - lo) * (s[hi] - s[lo])


def seven_stats(values):
    n = len(values)
    mean = sum(values) / n
    std = math.sqrt(sum((v - mean) ** 2 for v in values) / (n - 1)) if n > 1 else 0.0
    return [float(n), std, min(values), max(values),
            linear_quantile(values, 0.25), linear_quantile(values, 0.5), linear_quantile(values, 0.75)]


def describe_oracle(X):
    X = np.asarray(X, dtype=float)
    per_col = [seven_stats(list(X[:, j])) for j in range(X.shape[1])]  # p x 7
    rows = [[col[s] for col in per_col] for s in range(7)]  # 7 rows of length p
    out = []
    for row in rows:
        out.extend(seven_stats(row))
    return np.array(out)


# ---------------------------------------------------------------------------
# decoding


def enumerate_best(step_logp, sos, eos, vocab_size, max_len):
    """Highest-probability finished sequence by exhaustive enumeration.

    ``step_logp(prefix) -> logp vector``; sequences start with ``sos`` and
    are at most ``max_len`` codes long including both ends.
    """
    best, best_lp = None, -math.inf
    frontier = [([sos], 0.0)]
    while frontier:
        nxt = []
        for seq, lp in frontier:
            if len(seq) >= max_len:
                continue
            logp = step_logp(seq)
            for c in range(vocab_size):
                s2, lp2 = seq + [c], lp + float(logp[c])
                if c == eos:
                    if lp2 > best_lp:
                        best, best_lp = s2, lp2
                else:
                    nxt.append((s2, lp2))
        frontier = nxt
    return best, best_lp
