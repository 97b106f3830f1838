"""STL specifications: parsing and quantitative robustness on sampled traces.

Grammar::

    formula   := disj
    disj      := conj ("||" conj)*
    conj      := term ("&&" term)*
    term      := "!" term | ("G" | "F") window? "(" formula ")"
               | predicate | "(" formula ")"
    window    := "[" number "," number "]"
    predicate := ident cmp number
    cmp       := "<=" | ">=" | "<" | ">"
"""

from __future__ import annotations

import math
import re
from dataclasses import dataclass
from typing import Mapping, Sequence, Union

import numpy as np


class StlSyntaxError(ValueError):
    """Raised for malformed specification text; ``offset`` is a byte index."""

    def __init__(self, message: str, offset: int):
        super().__init__(f"{message} at offset {offset}")
        self.offset = offset


class StlEvaluationError(ValueError):
    pass


# ---------------------------------------------------------------------------
# Signals


@dataclass(frozen=True)
class SignalTrace:
    dt: float
    channels: Mapping[str, np.ndarray]

    def __post_init__(self):
        if not self.dt > 0:
            raise ValueError(f"dt must be positive, got {self.dt}")
        if not self.channels:
            raise ValueError("trace needs at least one channel")
        arrays = {}
        for name, values in self.channels.items():
            if not name:
                raise ValueError("channel names must be non-empty")
            arr = np.asarray(values, dtype=np.float64)
            if arr.ndim != 1:
                raise ValueError(f"channel {name!r} must be one-dimensional")
            arrays[name] = arr
        lengths = {len(a) for a in arrays.values()}
        if len(lengths) != 1:
            raise ValueError(f"channels have unequal lengths {sorted(lengths)}")
        if lengths.pop() < 1:
            raise ValueError("channels must hold at least one sample")
        object.__setattr__(self, "channels", arrays)

    def __len__(self) -> int:
        return len(next(iter(self.channels.values())))


# ---------------------------------------------------------------------------
# AST

COMPARATORS = ("<=", ">=", "<", ">")


@dataclass(frozen=True)
class Interval:
    lo: float
    hi: float

    def __post_init__(self):
        if not (0 <= self.lo <= self.hi) or not math.isfinite(self.hi):
            raise ValueError(f"invalid window [{self.lo}, {self.hi}]")


@dataclass(frozen=True)
class Predicate:
    channel: str
    comparator: str
    threshold: float

    def __post_init__(self):
        if self.comparator not in COMPARATORS:
            raise ValueError(f"unknown comparator {self.comparator!r}")


@dataclass(frozen=True)
class Not:
    child: "Formula"


@dataclass(frozen=True)
class And:
    left: "Formula"
    right: "Formula"


@dataclass(frozen=True)
class Or:
    left: "Formula"
    right: "Formula"


@dataclass(frozen=True)
class Globally:
    interval: Interval | None  # None spans the rest of the trace
    child: "Formula"


@dataclass(frozen=True)
class Eventually:
    interval: Interval | None
    child: "Formula"


Formula = Union[Predicate, Not, And, Or, Globally, Eventually]


def channels_of(formula: Formula) -> set[str]:
    if isinstance(formula, Predicate):
        return {formula.channel}
    if isinstance(formula, (And, Or)):
        return channels_of(formula.left) | channels_of(formula.right)
    return channels_of(formula.child)


def to_text(formula: Formula) -> str:
    """Render a formula back into parseable text (fully parenthesised)."""
    if isinstance(formula, Predicate):
        return f"{formula.channel} {formula.comparator} {formula.threshold!r}"
    if isinstance(formula, Not):
        return f"!({to_text(formula.child)})"
    if isinstance(formula, And):
        return f"({to_text(formula.left)}) && ({to_text(formula.right)})"
    if isinstance(formula, Or):
        return f"({to_text(formula.left)}) || ({to_text(formula.right)})"
    op = "G" if isinstance(formula, Globally) else "F"
    window = ""
    if formula.interval is not None:
        window = f"[{formula.interval.lo!r},{formula.interval.hi!r}]"
    return f"{op}{window}({to_text(formula.child)})"


# ---------------------------------------------------------------------------
# Parser

_TOKEN_RE = re.compile(
    r"""
    (?P<ws>\s+)
  | (?P<number>[+-]?(?:\d+\.?\d*|\.\d+)(?:[eE][+-]?\d+)?)
  | (?P<ident>[A-Za-z_][A-Za-z_0-9]*)
  | (?P<op>&&|\|\||<=|>=|==|!=|=<|=>|[<>!()\[\],=])
    """,
    re.VERBOSE,
)


@dataclass(frozen=True)
class _Token:
    kind: str
    text: str
    offset: int


def _tokenize(text: str) -> list[_Token]:
    tokens = []
    raw = text.encode("utf-8")
    pos = 0
    while pos < len(text):
        m = _TOKEN_RE.match(text, pos)
        if m is None:
            offset = len(text[:pos].encode("utf-8"))
            raise StlSyntaxError(f"unexpected character {text[pos]!r}", offset)
        if m.lastgroup != "ws":
            offset = len(text[:pos].encode("utf-8"))
            tokens.append(_Token(m.lastgroup, m.group(), offset))
        pos = m.end()
    tokens.append(_Token("eof", "", len(raw)))
    return tokens


class _Parser:
    def __init__(self, text: str):
        self.tokens = _tokenize(text)
        self.i = 0

    def peek(self, ahead: int = 0) -> _Token:
        return self.tokens[min(self.i + ahead, len(self.tokens) - 1)]

    def advance(self) -> _Token:
        tok = self.tokens[self.i]
        self.i += 1
        return tok

    def expect(self, text: str) -> _Token:
        tok = self.peek()
        if tok.text != text or tok.kind == "eof":
            found = tok.text or "end of input"
            raise StlSyntaxError(f"expected {text!r}, found {found!r}", tok.offset)
        return self.advance()

    def parse(self) -> Formula:
        formula = self.disjunction()
        tok = self.peek()
        if tok.kind != "eof":
            raise StlSyntaxError(
                f"expected '&&', '||' or end of input, found {tok.text!r}", tok.offset
            )
        return formula

    def disjunction(self) -> Formula:
        node = self.conjunction()
        while self.peek().text == "||":
            self.advance()
            node = Or(node, self.conjunction())
        return node

    def conjunction(self) -> Formula:
        node = self.term()
        while self.peek().text == "&&":
            self.advance()
            node = And(node, self.term())
        return node

    def term(self) -> Formula:
        tok = self.peek()
        if tok.text == "!":
            self.advance()
            return Not(self.term())
        if tok.text == "(":
            self.advance()
            node = self.disjunction()
            self.expect(")")
            return node
        if tok.kind == "ident":
            nxt = self.peek(1).text
            if tok.text in ("G", "F") and nxt in ("(", "["):
                return self.temporal()
            return self.predicate()
        found = tok.text or "end of input"
        raise StlSyntaxError(
            f"expected '!', '(', 'G', 'F' or a predicate, found {found!r}", tok.offset
        )

    def temporal(self) -> Formula:
        op = self.advance()
        interval = None
        if self.peek().text == "[":
            open_tok = self.advance()
            lo = self.number()
            self.expect(",")
            hi = self.number()
            self.expect("]")
            if lo < 0 or hi < 0:
                raise StlSyntaxError(f"negative window bound in [{lo}, {hi}]", open_tok.offset)
            if lo > hi:
                raise StlSyntaxError(
                    f"window lower bound {lo} exceeds upper bound {hi}", open_tok.offset
                )
            interval = Interval(lo, hi)
        self.expect("(")
        child = self.disjunction()
        self.expect(")")
        return Globally(interval, child) if op.text == "G" else Eventually(interval, child)

    def predicate(self) -> Predicate:
        name = self.advance()
        cmp_tok = self.peek()
        if cmp_tok.kind != "op" or cmp_tok.text not in COMPARATORS:
            if cmp_tok.kind == "op" and cmp_tok.text in ("==", "!=", "=", "=<", "=>"):
                raise StlSyntaxError(f"unknown comparator {cmp_tok.text!r}", cmp_tok.offset)
            found = cmp_tok.text or "end of input"
            raise StlSyntaxError(
                f"expected comparator after {name.text!r}, found {found!r}", cmp_tok.offset
            )
        self.advance()
        return Predicate(name.text, cmp_tok.text, self.number())

    def number(self) -> float:
        tok = self.peek()
        if tok.kind != "number":
            found = tok.text or "end of input"
            raise StlSyntaxError(f"expected number, found {found!r}", tok.offset)
        self.advance()
        return float(tok.text)


def parse_stl(text: str) -> Formula:
    if not text or not text.strip():
        raise StlSyntaxError("empty specification", 0)
    return _Parser(text).parse()


# ---------------------------------------------------------------------------
# Robustness
#
# Each node is evaluated as a whole signal over all sample indices. NaN marks
# samples whose temporal window fell entirely past the end of the trace; it
# propagates through min/max so that only a result at time 0 depending on such
# a sample is reported as an error.


def _window_indices(interval: Interval | None, dt: float) -> tuple[int, int | None]:
    if interval is None:
        return 0, None
    return int(round(interval.lo / dt)), int(round(interval.hi / dt))


def _temporal(values: np.ndarray, lo: int, hi: int | None, reducer) -> np.ndarray:
    n = len(values)
    out = np.full(n, np.nan)
    if hi is None and lo == 0:
        # suffix fold, from the end backwards
        out[:] = reducer.accumulate(values[::-1])[::-1]
        return out
    for t in range(n):
        start = t + lo
        if start > n - 1:
            break
        stop = n if hi is None else min(t + hi, n - 1) + 1
        out[t] = reducer.reduce(values[start:stop])
    return out


def _signal(trace: SignalTrace, formula: Formula) -> np.ndarray:
    if isinstance(formula, Predicate):
        try:
            x = trace.channels[formula.channel]
        except KeyError:
            raise StlEvaluationError(f"unknown channel {formula.channel!r}") from None
        if formula.comparator in ("<=", "<"):
            return formula.threshold - x
        return x - formula.threshold
    if isinstance(formula, Not):
        return -_signal(trace, formula.child)
    if isinstance(formula, And):
        return np.minimum(_signal(trace, formula.left), _signal(trace, formula.right))
    if isinstance(formula, Or):
        return np.maximum(_signal(trace, formula.left), _signal(trace, formula.right))
    child = _signal(trace, formula.child)
    lo, hi = _window_indices(formula.interval, trace.dt)
    reducer = np.minimum if isinstance(formula, Globally) else np.maximum
    return _temporal(child, lo, hi, reducer)


def robustness(trace: SignalTrace, formula: Formula) -> float:
    """Quantitative robustness of ``trace`` against ``formula`` at time 0."""
    missing = channels_of(formula) - set(trace.channels)
    if missing:
        raise StlEvaluationError(f"unknown channel(s) {sorted(missing)}")
    value = float(_signal(trace, formula)[0])
    if math.isnan(value):
        raise StlEvaluationError(
            "a temporal window is empty after clamping to the trace length"
        )
    return value


def robustness_signal(trace: SignalTrace, formula: Formula) -> np.ndarray:
    """Robustness at every sample index; NaN where a window is empty."""
    return _signal(trace, formula)


def satisfied(score: float) -> bool:
    return score >= 0


def trace_from_lists(dt: float, **channels: Sequence[float]) -> SignalTrace:
    return SignalTrace(dt, {k: np.asarray(v, dtype=float) for k, v in channels.items()})
