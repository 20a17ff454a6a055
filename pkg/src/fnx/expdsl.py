"""Scalar-field expressions for exponents, smoothness and boundary functions.

Grammar::

    expr   := term (("+"|"-") term)*
    term   := factor (("*"|"/") factor)*
    factor := base ("^" factor)?
    base   := number | "x"digit+ | const | func "(" expr ("," expr)? ")"
            | "(" expr ")" | "-" base
    const  := "e" | "pi" | "inf"
    func   := exp | log | sin | cos | abs | sqrt | min2 | max2

Note that unary minus binds tighter than ``^``, so ``-x1^2`` is ``(-x1)^2``.
"""
from __future__ import annotations

import math
import re
from dataclasses import dataclass, field
from typing import Sequence

import numpy as np

__all__ = [
    "ParseError",
    "FieldEvaluationError",
    "ScalarField",
    "RegularityReport",
    "parse_scalar_field",
    "field_range",
    "estimate_log_holder",
    "reciprocal",
    "lattice",
    "INFINITE_THRESHOLD",
]

#: sampled exponent values above this are treated as ``p = inf``
INFINITE_THRESHOLD = 1e12


class ParseError(ValueError):
    """Raised for malformed expressions; carries the character offset."""

    def __init__(self, message: str, position: int, source: str = ""):
        self.position = position
        self.source = source
        super().__init__(f"{message} at position {position}")


class FieldEvaluationError(ArithmeticError):
    pass


# -- AST ---------------------------------------------------------------------

_UNARY = {
    "exp": np.exp,
    "log": np.log,
    "sin": np.sin,
    "cos": np.cos,
    "abs": np.abs,
    "sqrt": np.sqrt,
}
_BINARY = {"min2": np.minimum, "max2": np.maximum}
_CONSTS = {"e": math.e, "pi": math.pi, "inf": math.inf}


@dataclass(frozen=True)
class Num:
    value: float

    def eval(self, xs):
        return self.value

    def show(self) -> str:
        if math.isinf(self.value):
            return "inf"
        return repr(self.value)

    def variables(self):
        return set()


@dataclass(frozen=True)
class Var:
    index: int

    def eval(self, xs):
        return xs[self.index - 1]

    def show(self) -> str:
        return f"x{self.index}"

    def variables(self):
        return {self.index}


@dataclass(frozen=True)
class Neg:
    arg: object

    def eval(self, xs):
        return -self.arg.eval(xs)

    def show(self) -> str:
        return f"(-{self.arg.show()})"

    def variables(self):
        return self.arg.variables()


@dataclass(frozen=True)
class BinOp:
    op: str
    left: object
    right: object

    def eval(self, xs):
        a = self.left.eval(xs)
        b = self.right.eval(xs)
        if self.op == "+":
            return a + b
        if self.op == "-":
            return a - b
        if self.op == "*":
            return a * b
        if self.op == "/":
            return np.true_divide(a, b)
        return np.power(a, b)

    def show(self) -> str:
        return f"({self.left.show()} {self.op} {self.right.show()})"

    def variables(self):
        return self.left.variables() | self.right.variables()


@dataclass(frozen=True)
class Call:
    name: str
    args: tuple

    def eval(self, xs):
        vals = [a.eval(xs) for a in self.args]
        if self.name in _UNARY:
            return _UNARY[self.name](vals[0])
        return _BINARY[self.name](vals[0], vals[1])

    def show(self) -> str:
        return f"{self.name}({', '.join(a.show() for a in self.args)})"

    def variables(self):
        out = set()
        for a in self.args:
            out |= a.variables()
        return out


# -- parser --------------------------------------------------------------------

_TOKEN = re.compile(
    r"\s*(?:(?P<num>(?:\d+\.?\d*|\.\d+)(?:[eE][+-]?\d+)?)"
    r"|(?P<name>[A-Za-z_][A-Za-z_0-9]*)"
    r"|(?P<op>[-+*/^(),]))"
)


def _tokenize(src: str):
    pos = 0
    tokens = []
    while pos < len(src):
        if src[pos:].strip() == "":
            break
        m = _TOKEN.match(src, pos)
        if m is None or m.end() == pos:
            start = pos + len(src[pos:]) - len(src[pos:].lstrip())
            raise ParseError(f"unexpected character {src[start]!r}", start, src)
        kind = m.lastgroup
        start = m.start(kind)
        tokens.append((kind, m.group(kind), start))
        pos = m.end()
    tokens.append(("end", "", len(src)))
    return tokens


class _Parser:
    def __init__(self, src: str, dim: int):
        self.src = src
        self.dim = dim
        self.tokens = _tokenize(src)
        self.i = 0

    def peek(self):
        return self.tokens[self.i]

    def take(self):
        tok = self.tokens[self.i]
        self.i += 1
        return tok

    def expect(self, value: str):
        kind, text, pos = self.take()
        if text != value or kind not in ("op",):
            shown = text or "end of input"
            raise ParseError(f"expected {value!r}, found {shown!r}", pos, self.src)

    def parse(self):
        node = self.expr()
        kind, text, pos = self.peek()
        if kind != "end":
            raise ParseError(f"unexpected token {text!r}", pos, self.src)
        return node

    def expr(self):
        node = self.term()
        while self.peek()[1] in ("+", "-") and self.peek()[0] == "op":
            op = self.take()[1]
            node = BinOp(op, node, self.term())
        return node

    def term(self):
        node = self.factor()
        while self.peek()[1] in ("*", "/") and self.peek()[0] == "op":
            op = self.take()[1]
            node = BinOp(op, node, self.factor())
        return node

    def factor(self):
        base = self.base()
        if self.peek()[1] == "^" and self.peek()[0] == "op":
            self.take()
            return BinOp("^", base, self.factor())
        return base

    def base(self):
        kind, text, pos = self.take()
        if kind == "num":
            return Num(float(text))
        if kind == "op" and text == "-":
            return Neg(self.base())
        if kind == "op" and text == "(":
            node = self.expr()
            self.expect(")")
            return node
        if kind == "name":
            if re.fullmatch(r"x\d+", text):
                index = int(text[1:])
                if index < 1 or index > self.dim:
                    raise ParseError(
                        f"variable {text} exceeds dimension {self.dim}", pos, self.src
                    )
                return Var(index)
            if text in _CONSTS:
                return Num(_CONSTS[text])
            if text in _UNARY or text in _BINARY:
                self.expect("(")
                args = [self.expr()]
                if text in _BINARY:
                    self.expect(",")
                    args.append(self.expr())
                self.expect(")")
                return Call(text, tuple(args))
            raise ParseError(f"unknown identifier {text!r}", pos, self.src)
        shown = text or "end of input"
        raise ParseError(f"unexpected token {shown!r}", pos, self.src)


# -- fields --------------------------------------------------------------------


@dataclass(frozen=True)
class ScalarField:
    """An immutable parsed expression in the variables ``x1 .. x{dim}``."""

    source: str
    dim: int
    ast: object = field(repr=False, compare=False)
    cached_range: tuple[float, float] | None = field(default=None, compare=False)

    def __call__(self, *coords):
        """Evaluate at coordinate arrays ``x1, ..., x{dim}`` (broadcastable)."""
        if len(coords) == 1 and self.dim > 1:
            pts = np.asarray(coords[0], dtype=float)
            coords = tuple(pts[..., k] for k in range(self.dim))
        if len(coords) != self.dim:
            raise ValueError(f"field of dim {self.dim} got {len(coords)} coordinates")
        xs = [np.asarray(c, dtype=float) for c in coords]
        shape = np.broadcast_shapes(*(x.shape for x in xs)) if xs else ()
        try:
            with np.errstate(divide="raise", invalid="raise", over="raise"):
                out = self.ast.eval(xs)
        except FloatingPointError as exc:
            raise FieldEvaluationError(f"evaluating {self.source!r}: {exc}") from None
        out = np.broadcast_to(np.asarray(out, dtype=float), shape)
        if np.isnan(out).any():
            raise FieldEvaluationError(f"evaluating {self.source!r}: NaN result")
        return out.copy() if out.ndim else float(out)

    @property
    def is_constant(self) -> bool:
        return not self.ast.variables()

    def to_source(self) -> str:
        return self.ast.show()

    def with_range(self, lo: float, hi: float) -> "ScalarField":
        return ScalarField(self.source, self.dim, self.ast, (float(lo), float(hi)))


def parse_scalar_field(src: str, dim: int) -> ScalarField:
    if dim < 1:
        raise ValueError("dim must be >= 1")
    ast = _Parser(src, dim).parse()
    return ScalarField(src, dim, ast)


def reciprocal(f: ScalarField) -> ScalarField:
    """``1/f``, the field whose regularity the exponent classes actually require."""
    return ScalarField(f"1/({f.source})", f.dim, BinOp("/", Num(1.0), f.ast))


def lattice(box: Sequence[tuple[float, float]], samples: int) -> list[np.ndarray]:
    """Uniform lattice including the box endpoints, one meshgrid array per axis.

    ``samples -> 2*samples - 1`` refines the lattice while keeping every old node.
    """
    axes = [np.linspace(lo, hi, samples) for lo, hi in box]
    return np.meshgrid(*axes, indexing="ij")


def field_range(f: ScalarField, box, samples: int) -> tuple[float, float]:
    if samples < 2:
        raise ValueError("samples must be >= 2")
    box = _check_box(box, f.dim)
    vals = f(*lattice(box, samples))
    vals = np.asarray(vals, dtype=float)
    return float(vals.min()), float(vals.max())


@dataclass(frozen=True)
class RegularityReport:
    inf: float
    sup: float
    clog_local: float
    g_infinity: float
    clog_global: float
    samples: int

    @property
    def clog(self) -> float:
        """Single constant valid for both the local and the decay condition."""
        return max(self.clog_local, self.clog_global)


def estimate_log_holder(
    f: ScalarField,
    box,
    samples: int,
    g_infinity: float | None = None,
    chunk: int = 2048,
) -> RegularityReport:
    """Sampled log-Hölder constants of ``f`` over ``box``.

    The local constant is the maximum of ``|f(x)-f(y)| log(e + 1/|x-y|)`` over
    all lattice pairs; on nested lattices it can only grow.
    """
    if samples < 2:
        raise ValueError("samples must be >= 2")
    box = _check_box(box, f.dim)
    grids = lattice(box, samples)
    vals = np.asarray(f(*grids), dtype=float).ravel()
    pts = np.stack([g.ravel() for g in grids], axis=-1)
    finite = np.isfinite(vals)
    if not finite.all():
        raise FieldEvaluationError("log-Hölder estimate needs a finite field; use reciprocal()")

    clog_local = 0.0
    for start in range(0, len(vals), chunk):
        sl = slice(start, start + chunk)
        d = np.sqrt(((pts[sl, None, :] - pts[None, :, :]) ** 2).sum(-1))
        diff = np.abs(vals[sl, None] - vals[None, :])
        with np.errstate(divide="ignore"):
            w = np.log(np.e + 1.0 / d)
        w[d == 0] = 0.0
        clog_local = max(clog_local, float((diff * w).max()))

    if g_infinity is None:
        shell = np.zeros(grids[0].shape, dtype=bool)
        for axis in range(f.dim):
            idx = [slice(None)] * f.dim
            idx[axis] = 0
            shell[tuple(idx)] = True
            idx[axis] = -1
            shell[tuple(idx)] = True
        g_infinity = float(vals[shell.ravel()].mean())
    radius = np.sqrt((pts**2).sum(-1))
    clog_global = float((np.abs(vals - g_infinity) * np.log(np.e + radius)).max())
    return RegularityReport(
        inf=float(vals.min()),
        sup=float(vals.max()),
        clog_local=clog_local,
        g_infinity=float(g_infinity),
        clog_global=clog_global,
        samples=samples,
    )


def _check_box(box, dim):
    box = [(float(lo), float(hi)) for lo, hi in box]
    if len(box) != dim:
        raise ValueError(f"box has {len(box)} axes, field has dim {dim}")
    for lo, hi in box:
        if not hi > lo:
            raise ValueError("box bounds must satisfy lo < hi")
    return box
