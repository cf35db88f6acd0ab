"""Transformation programs: token alphabet, postfix grammar, stack evaluation.

A program is a tuple of string tokens, e.g.
``("<SOS>", "f0", "f1", "plus", "<SEP>", "f3", "log", "<EOS>")``.
Features are written ``f<index>`` (0-based) and operations by their
canonical lowercase name. Each ``<SEP>``-delimited segment is one postfix
expression that generates one new column.
"""
from __future__ import annotations

import re
from dataclasses import dataclass, field
from typing import Iterable, Sequence

import numpy as np

from . import opset
from .errors import InputError

SOS = "<SOS>"
EOS = "<EOS>"
SEP = "<SEP>"
SPECIAL = (SOS, EOS, SEP)

_FEATURE_RE = re.compile(r"f(0|[1-9][0-9]*)")


def feature(i: int) -> str:
    return f"f{i}"


def feature_index(token: str) -> int | None:
    """Feature id of ``token`` or None when it is not a feature token."""
    m = _FEATURE_RE.fullmatch(token)
    return int(m.group(1)) if m else None


def is_op(token: str) -> bool:
    return token in opset.OP_INDEX


# ---------------------------------------------------------------------------
# infix trees


@dataclass(frozen=True)
class Node:
    """One composition tree; leaves are feature tokens, inner nodes operations."""

    label: str
    children: tuple["Node", ...] = ()

    def __post_init__(self):
        if is_op(self.label):
            if len(self.children) != opset.arity(self.label):
                raise InputError(
                    f"{self.label} takes {opset.arity(self.label)} operand(s), "
                    f"got {len(self.children)}"
                )
        elif feature_index(self.label) is None or self.children:
            raise InputError(f"bad tree node {self.label!r}")

    def postorder(self) -> list[str]:
        out: list[str] = []
        stack: list[tuple[Node, bool]] = [(self, False)]
        while stack:
            node, expanded = stack.pop()
            if expanded or not node.children:
                out.append(node.label)
                continue
            stack.append((node, True))
            for child in reversed(node.children):
                stack.append((child, False))
        return out

    def depth(self) -> int:
        return 1 + max((c.depth() for c in self.children), default=0)

    def infix(self) -> str:
        if not self.children:
            return self.label
        if len(self.children) == 1:
            return f"{self.label}({self.children[0].infix()})"
        a, b = self.children
        return f"({a.infix()} {self.label} {b.infix()})"


def leaf(i: int) -> Node:
    return Node(feature(i))


def node(op: str, *children: Node) -> Node:
    return Node(op, tuple(children))


def infix_to_postfix(program: Sequence[Node]) -> tuple[str, ...]:
    """Convert an ordered list of composition trees into a postfix program."""
    tokens = [SOS]
    for i, tree in enumerate(program):
        if i:
            tokens.append(SEP)
        tokens.extend(tree.postorder())
    tokens.append(EOS)
    return tuple(tokens)


def postfix_to_trees(segment: Sequence[str]) -> Node:
    """Rebuild the tree of one grammatical segment."""
    stack: list[Node] = []
    for tok in segment:
        if is_op(tok):
            k = opset.arity(tok)
            if len(stack) < k:
                raise InputError(f"stack underflow at {tok!r}")
            args = stack[len(stack) - k:]
            del stack[len(stack) - k:]
            stack.append(Node(tok, tuple(args)))
        else:
            stack.append(Node(tok))
    if len(stack) != 1:
        raise InputError("segment does not reduce to a single expression")
    return stack[0]


# ---------------------------------------------------------------------------
# grammar


def split_segments(program: Sequence[str]) -> list[list[str]]:
    """Split the body of a program on ``<SEP>``.

    A leading ``<SOS>`` and trailing ``<EOS>`` are stripped when present, so
    this also accepts raw decoder output.
    """
    body = list(program)
    if body and body[0] == SOS:
        body = body[1:]
    if body and body[-1] == EOS:
        body = body[:-1]
    segments: list[list[str]] = [[]]
    for tok in body:
        if tok == SEP:
            segments.append([])
        else:
            segments[-1].append(tok)
    return segments


def join_segments(segments: Iterable[Sequence[str]]) -> tuple[str, ...]:
    tokens = [SOS]
    for i, seg in enumerate(segments):
        if i:
            tokens.append(SEP)
        tokens.extend(seg)
    tokens.append(EOS)
    return tuple(tokens)


def segment_ok(segment: Sequence[str]) -> bool:
    """True iff the segment is one well-formed postfix expression."""
    depth = 0
    for tok in segment:
        if is_op(tok):
            k = opset.arity(tok)
            if depth < k:
                return False
            depth -= k - 1
        elif feature_index(tok) is not None:
            depth += 1
        else:
            return False
    return depth == 1


@dataclass
class ValidityReport:
    grammar_ok: list[bool]
    finite_ok: list[bool | None]
    framed: bool = True  # exactly one <SOS> first and one <EOS> last

    @property
    def total_segment_count(self) -> int:
        return len(self.grammar_ok)

    @property
    def valid_mask(self) -> list[bool]:
        return [g and f is not False for g, f in zip(self.grammar_ok, self.finite_ok)]

    @property
    def valid_segment_count(self) -> int:
        return sum(self.valid_mask)

    @property
    def sequence_valid(self) -> bool:
        return self.framed and self.total_segment_count > 0 and all(self.valid_mask)

    def to_dict(self) -> dict:
        return {
            "grammar_ok": list(self.grammar_ok),
            "finite_ok": list(self.finite_ok),
            "framed": self.framed,
            "valid_segments": self.valid_segment_count,
            "total_segments": self.total_segment_count,
        }


def _framed(program: Sequence[str]) -> bool:
    return (
        len(program) >= 2
        and program[0] == SOS
        and program[-1] == EOS
        and program.count(SOS) == 1
        and program.count(EOS) == 1
    )


def validate(program: Sequence[str]) -> ValidityReport:
    """Classify every segment of an arbitrary token list. Never raises."""
    program = list(program)
    segments = split_segments(program)
    return ValidityReport(
        grammar_ok=[segment_ok(s) for s in segments],
        finite_ok=[None] * len(segments),
        framed=_framed(program),
    )


# ---------------------------------------------------------------------------
# evaluation


def _eval_segment(segment, X, mode):
    stack: list[np.ndarray] = []
    finite = True
    for tok in segment:
        if is_op(tok):
            op = opset.get(tok)
            if op.arity == 1:
                out = opset.apply_unary(tok, stack.pop(), mode)
            else:
                b = stack.pop()
                a = stack.pop()
                out = opset.apply_binary(tok, a, b, mode)
            finite = finite and bool(np.isfinite(out).all())
            stack.append(out)
        else:
            stack.append(X[:, feature_index(tok)])
    return stack[0], finite


def evaluate(program: Sequence[str], X, mode: str = opset.GUARDED):
    """Run each segment through the stack machine.

    Returns ``(columns, report)`` where ``columns`` has one column per segment
    that is both grammatical and finite (every intermediate value finite).
    Invalid segments are dropped, never fatal.
    """
    X = np.asarray(X, dtype=np.float64)
    if X.ndim != 2:
        raise InputError("feature matrix must be 2-D")
    for tok in program:
        j = feature_index(tok)
        if j is not None and j >= X.shape[1]:
            raise InputError(f"feature {tok} out of range for {X.shape[1]} columns")
    report = validate(program)
    cols = []
    for i, seg in enumerate(split_segments(program)):
        if not report.grammar_ok[i]:
            continue
        col, finite = _eval_segment(seg, X, mode)
        report.finite_ok[i] = finite
        if finite:
            cols.append(col)
    out = np.column_stack(cols) if cols else np.empty((X.shape[0], 0))
    return out, report


# ---------------------------------------------------------------------------
# augmentation


def augment(program: Sequence[str], k: int, rng: np.random.Generator) -> list[tuple[str, ...]]:
    """``k`` programs whose segments are uniformly random permutations of ``program``'s."""
    if k < 0:
        raise InputError("k must be non-negative")
    segments = split_segments(program)
    out = []
    for _ in range(k):
        order = rng.permutation(len(segments))
        out.append(join_segments(segments[j] for j in order))
    return out


# ---------------------------------------------------------------------------
# text form and vocabulary


def to_text(program: Sequence[str]) -> str:
    return " ".join(program)


def from_text(text: str) -> tuple[str, ...]:
    tokens = tuple(text.split())
    for tok in tokens:
        if tok not in SPECIAL and not is_op(tok) and feature_index(tok) is None:
            raise InputError(f"unknown token {tok!r}")
    return tokens


@dataclass(frozen=True)
class Vocabulary:
    """Token codes: 0..2 specials, then features, then operations."""

    n_features: int
    ops: tuple[str, ...] = opset.OP_NAMES
    tokens: tuple[str, ...] = field(init=False, repr=False)

    def __post_init__(self):
        toks = SPECIAL + tuple(feature(i) for i in range(self.n_features)) + tuple(self.ops)
        object.__setattr__(self, "tokens", toks)
        object.__setattr__(self, "_index", {t: i for i, t in enumerate(toks)})

    def __len__(self) -> int:
        return len(self.tokens)

    @property
    def sos(self) -> int:
        return 0

    @property
    def eos(self) -> int:
        return 1

    @property
    def sep(self) -> int:
        return 2

    def encode(self, program: Sequence[str]) -> list[int]:
        try:
            return [self._index[t] for t in program]
        except KeyError as e:
            raise InputError(f"token {e.args[0]!r} not in vocabulary") from None

    def decode(self, codes: Iterable[int]) -> tuple[str, ...]:
        out = []
        for c in codes:
            c = int(c)
            if not 0 <= c < len(self.tokens):
                raise InputError(f"code {c} not in vocabulary of size {len(self)}")
            out.append(self.tokens[c])
        return tuple(out)

    def to_dict(self) -> dict:
        return {"n_features": self.n_features, "tokens": list(self.tokens)}

    @classmethod
    def from_dict(cls, d: dict) -> "Vocabulary":
        vocab = cls(int(d["n_features"]))
        if list(vocab.tokens) != list(d["tokens"]):
            raise InputError("vocabulary token list does not match the operation set")
        return vocab


def encode_tokens(program: Sequence[str], vocab: Vocabulary) -> list[int]:
    return vocab.encode(program)


def decode_tokens(codes: Iterable[int], vocab: Vocabulary) -> tuple[str, ...]:
    return vocab.decode(codes)
