"""Scalar expressions in the coupling ``g`` and matrix-valued functions built
from them.

Grammar (whitespace insignificant)::

    expr   := term (('+'|'-') term)*
    term   := factor (('*'|'/') factor)*
    factor := ('-')? power
    power  := atom ('^' integer)?
    atom   := number | 'g' | 'sqrt' '(' expr ')' | '(' expr ')'

Expressions are compiled to a small postfix program that the kernels in
:mod:`ctxvalues._kernels` evaluate over whole grids of ``g`` at once. Taylor
coefficients at ``g = 0`` come from truncated power-series arithmetic on the
tree; a least-squares fit on a geometric grid is available as an independent
route and is the only route for opaque callables.
"""

from __future__ import annotations

import math
import re
from dataclasses import dataclass
from typing import Callable, List, Optional, Sequence, Tuple, Union

import numpy as np

from . import _kernels
from ._pykernels import (
    ERR_DIV,
    ERR_SQRT,
    OP_ADD,
    OP_CONST,
    OP_DIV,
    OP_MUL,
    OP_NEG,
    OP_POW,
    OP_SQRT,
    OP_SUB,
    OP_VAR,
)

MAX_TAYLOR_ORDER = 6
DEFAULT_G0 = 1e-2


class GExprError(ValueError):
    pass


class GExprSyntaxError(GExprError):
    def __init__(self, message: str, offset: int, source: str = ""):
        self.offset = offset
        self.source = source
        super().__init__(f"{message} at offset {offset}")


class UnknownIdentifierError(GExprSyntaxError):
    pass


class NonIntegerExponentError(GExprSyntaxError):
    pass


class GExprDomainError(GExprError):
    """Raised for a negative sqrt argument or a vanishing divisor."""

    def __init__(self, subexpr: str, g: float, value: float, kind: str):
        self.subexpr = subexpr
        self.g = g
        self.value = value
        self.kind = kind
        if kind == "sqrt":
            msg = f"negative argument {value!r} to {subexpr} at g={g!r}"
        else:
            msg = f"division by vanishing subexpression in {subexpr} at g={g!r}"
        super().__init__(msg)


class TaylorError(GExprError):
    """Non-analytic entry or insufficient expansion order."""


# --------------------------------------------------------------------------
# AST

@dataclass(frozen=True)
class Num:
    value: float


@dataclass(frozen=True)
class Var:
    pass


@dataclass(frozen=True)
class Neg:
    operand: "Node"


@dataclass(frozen=True)
class BinOp:
    op: str
    left: "Node"
    right: "Node"


@dataclass(frozen=True)
class Pow:
    base: "Node"
    exponent: int


@dataclass(frozen=True)
class Sqrt:
    arg: "Node"


Node = Union[Num, Var, Neg, BinOp, Pow, Sqrt]


# --------------------------------------------------------------------------
# lexer / parser

_TOKEN = re.compile(
    r"\s*(?:(?P<num>(?:\d+\.?\d*|\.\d+)(?:[eE][+-]?\d+)?)|(?P<ident>[A-Za-z_]\w*)|(?P<op>[-+*/^()]))"
)


@dataclass
class _Tok:
    kind: str  # num, ident, op, eof
    text: str
    offset: int


def _tokenize(src: str) -> List[_Tok]:
    toks = []
    pos = 0
    n = len(src)
    while pos < n:
        if src[pos:].strip() == "":
            break
        m = _TOKEN.match(src, pos)
        if m is None:
            start = pos + (len(src[pos:]) - len(src[pos:].lstrip()))
            raise GExprSyntaxError(f"unexpected character {src[start]!r}", start, src)
        kind = m.lastgroup
        toks.append(_Tok(kind, m.group(kind), m.start(kind)))
        pos = m.end()
    toks.append(_Tok("eof", "", n))
    return toks


class _Parser:
    def __init__(self, src: str):
        self.src = src
        self.toks = _tokenize(src)
        self.i = 0

    @property
    def tok(self) -> _Tok:
        return self.toks[self.i]

    def error(self, msg: str) -> GExprSyntaxError:
        t = self.tok
        what = "end of input" if t.kind == "eof" else repr(t.text)
        return GExprSyntaxError(f"{msg}, found {what}", t.offset, self.src)

    def accept(self, text: str) -> bool:
        if self.tok.kind == "op" and self.tok.text == text:
            self.i += 1
            return True
        return False

    def expect(self, text: str) -> None:
        if not self.accept(text):
            raise self.error(f"expected {text!r}")

    def parse(self) -> Node:
        node = self.expr()
        if self.tok.kind != "eof":
            raise self.error("unexpected token")
        return node

    def expr(self) -> Node:
        node = self.term()
        while self.tok.kind == "op" and self.tok.text in "+-":
            op = self.tok.text
            self.i += 1
            node = BinOp(op, node, self.term())
        return node

    def term(self) -> Node:
        node = self.factor()
        while self.tok.kind == "op" and self.tok.text in "*/":
            op = self.tok.text
            self.i += 1
            node = BinOp(op, node, self.factor())
        return node

    def factor(self) -> Node:
        if self.accept("-"):
            return Neg(self.power())
        return self.power()

    def power(self) -> Node:
        base = self.atom()
        if self.accept("^"):
            t = self.tok
            if t.kind != "num":
                raise self.error("expected integer exponent")
            if not t.text.isdigit():
                raise NonIntegerExponentError(f"non-integer exponent {t.text!r}", t.offset, self.src)
            self.i += 1
            return Pow(base, int(t.text))
        return base

    def atom(self) -> Node:
        t = self.tok
        if t.kind == "num":
            self.i += 1
            return Num(float(t.text))
        if t.kind == "ident":
            if t.text == "g":
                self.i += 1
                return Var()
            if t.text == "sqrt":
                self.i += 1
                self.expect("(")
                arg = self.expr()
                self.expect(")")
                return Sqrt(arg)
            raise UnknownIdentifierError(f"unknown identifier {t.text!r}", t.offset, self.src)
        if self.accept("("):
            node = self.expr()
            self.expect(")")
            return node
        raise self.error("expected number, 'g', 'sqrt' or '('")


# --------------------------------------------------------------------------
# printer

_SUM, _PROD, _FACTOR, _POWER, _ATOM = 1, 2, 3, 4, 5


def _level(node: Node) -> int:
    if isinstance(node, BinOp):
        return _SUM if node.op in "+-" else _PROD
    if isinstance(node, Neg):
        return _FACTOR
    if isinstance(node, Pow):
        return _POWER
    return _ATOM


def _wrap(node: Node, need: int) -> str:
    s = to_source(node)
    return f"({s})" if _level(node) < need else s


def to_source(node: Node) -> str:
    """Render a node so that parsing the text gives back the same tree."""
    if isinstance(node, Num):
        return repr(float(node.value))
    if isinstance(node, Var):
        return "g"
    if isinstance(node, Neg):
        return "-" + _wrap(node.operand, _POWER)
    if isinstance(node, Pow):
        return f"{_wrap(node.base, _ATOM)}^{node.exponent}"
    if isinstance(node, Sqrt):
        return f"sqrt({to_source(node.arg)})"
    if node.op in "+-":
        return f"{_wrap(node.left, _SUM)} {node.op} {_wrap(node.right, _PROD)}"
    return f"{_wrap(node.left, _PROD)}{node.op}{_wrap(node.right, _FACTOR)}"


# --------------------------------------------------------------------------
# compilation and power series

_BINOPS = {"+": OP_ADD, "-": OP_SUB, "*": OP_MUL, "/": OP_DIV}


def _compile(node: Node, ops: list, args: list, owners: list) -> None:
    if isinstance(node, Num):
        ops.append(OP_CONST)
        args.append(node.value)
    elif isinstance(node, Var):
        ops.append(OP_VAR)
        args.append(0.0)
    elif isinstance(node, Neg):
        _compile(node.operand, ops, args, owners)
        ops.append(OP_NEG)
        args.append(0.0)
    elif isinstance(node, Pow):
        _compile(node.base, ops, args, owners)
        ops.append(OP_POW)
        args.append(float(node.exponent))
    elif isinstance(node, Sqrt):
        _compile(node.arg, ops, args, owners)
        ops.append(OP_SQRT)
        args.append(0.0)
    else:
        _compile(node.left, ops, args, owners)
        _compile(node.right, ops, args, owners)
        ops.append(_BINOPS[node.op])
        args.append(0.0)
    owners.append(node)


def _series_mul(a: np.ndarray, b: np.ndarray) -> np.ndarray:
    return np.convolve(a, b)[: len(a)]


def _series_div(a: np.ndarray, b: np.ndarray) -> np.ndarray:
    q = np.zeros_like(a)
    for k in range(len(a)):
        q[k] = (a[k] - np.dot(b[1 : k + 1], q[k - 1 :: -1][:k])) / b[0]
    return q


def _series_sqrt(c: np.ndarray, node: Node) -> np.ndarray:
    scale = float(np.max(np.abs(c)))
    if c[0] < 0:
        raise GExprDomainError(to_source(node), 0.0, float(c[0]), "sqrt")
    if c[0] <= 1e-15 * scale:
        if scale == 0.0:
            return np.zeros_like(c)
        raise TaylorError(f"{to_source(node)} is not analytic at g=0 (radicand vanishes)")
    s = np.zeros_like(c)
    s[0] = math.sqrt(c[0])
    for k in range(1, len(c)):
        s[k] = (c[k] - np.dot(s[1:k], s[k - 1 : 0 : -1])) / (2.0 * s[0])
    return s


def _series(node: Node, order: int) -> np.ndarray:
    n = order + 1
    if isinstance(node, Num):
        out = np.zeros(n)
        out[0] = node.value
        return out
    if isinstance(node, Var):
        out = np.zeros(n)
        if n > 1:
            out[1] = 1.0
        return out
    if isinstance(node, Neg):
        return -_series(node.operand, order)
    if isinstance(node, Pow):
        base = _series(node.base, order)
        result = np.zeros(n)
        result[0] = 1.0
        e = node.exponent
        while e:
            if e & 1:
                result = _series_mul(result, base)
            base = _series_mul(base, base)
            e >>= 1
        return result
    if isinstance(node, Sqrt):
        return _series_sqrt(_series(node.arg, order), node)
    a = _series(node.left, order)
    b = _series(node.right, order)
    if node.op == "+":
        return a + b
    if node.op == "-":
        return a - b
    if node.op == "*":
        return _series_mul(a, b)
    if b[0] == 0.0:
        raise TaylorError(f"{to_source(node)} has a pole at g=0")
    return _series_div(a, b)


def _is_polynomial(node: Node) -> bool:
    if isinstance(node, (Num, Var)):
        return True
    if isinstance(node, Neg):
        return _is_polynomial(node.operand)
    if isinstance(node, Pow):
        return _is_polynomial(node.base)
    if isinstance(node, Sqrt):
        return False
    if node.op == "/":
        return _is_polynomial(node.left) and not _depends_on_g(node.right)
    return _is_polynomial(node.left) and _is_polynomial(node.right)


def _depends_on_g(node: Node) -> bool:
    if isinstance(node, Var):
        return True
    if isinstance(node, Num):
        return False
    if isinstance(node, (Neg, Pow, Sqrt)):
        child = {Neg: "operand", Pow: "base", Sqrt: "arg"}[type(node)]
        return _depends_on_g(getattr(node, child))
    return _depends_on_g(node.left) or _depends_on_g(node.right)


# --------------------------------------------------------------------------
# public expression type

class GExpr:
    """A parsed scalar expression in ``g``. Immutable; compare by tree."""

    __slots__ = ("node", "_program")

    def __init__(self, node: Node):
        self.node = node
        ops: list = []
        args: list = []
        owners: list = []
        _compile(node, ops, args, owners)
        self._program = (np.array(ops, dtype=np.int64), np.array(args, dtype=np.float64), tuple(owners))

    def __eq__(self, other) -> bool:
        return isinstance(other, GExpr) and self.node == other.node

    def __hash__(self) -> int:
        return hash(self.node)

    def __str__(self) -> str:
        return to_source(self.node)

    def __repr__(self) -> str:
        return f"GExpr({to_source(self.node)!r})"

    @property
    def depends_on_g(self) -> bool:
        return _depends_on_g(self.node)

    @property
    def is_polynomial(self) -> bool:
        return _is_polynomial(self.node)

    def evaluate_many(self, gs) -> np.ndarray:
        gs = np.atleast_1d(np.asarray(gs, dtype=np.float64))
        ops, args, owners = self._program
        values, err, instr, idx = _kernels.rpn_eval(ops, args, gs)
        if err:
            g = float(gs[idx])
            owner = owners[instr]
            if err == ERR_SQRT:
                radicand = GExpr(owner.arg).evaluate_many([g])[0]
                raise GExprDomainError(to_source(owner), g, float(radicand), "sqrt")
            raise GExprDomainError(to_source(owner), g, 0.0, "div")
        return values

    def __call__(self, g: float) -> float:
        return float(self.evaluate_many([g])[0])

    def series(self, order: int) -> np.ndarray:
        """Taylor coefficients ``c_0 .. c_order`` at ``g = 0``."""
        return _series(self.node, order)


def parse(src: str) -> GExpr:
    if not src or not src.strip():
        raise GExprSyntaxError("empty expression", 0, src)
    return GExpr(_Parser(src).parse())


def evaluate(e: Union[GExpr, str], g: float) -> float:
    if isinstance(e, str):
        e = parse(e)
    return e(g)


# --------------------------------------------------------------------------
# matrix-valued functions of g

Entry = Union[GExpr, complex, float, int]


def _entry_values(entry: Entry, gs: np.ndarray) -> np.ndarray:
    if isinstance(entry, GExpr):
        return entry.evaluate_many(gs)
    return np.full(len(gs), complex(entry))


class GMatrixFn:
    """Square matrix whose entries are expressions in ``g`` or constants.

    ``validity`` is the closed interval of ``g`` on which every entry is
    evaluable; ``None`` asks for it to be probed on ``[0, 1]``.
    """

    def __init__(self, entries: Sequence[Sequence[Entry]], validity: Optional[Tuple[float, float]] = None):
        rows = [tuple(r) for r in entries]
        d = len(rows)
        if d == 0 or any(len(r) != d for r in rows):
            raise ValueError("entries must form a nonempty square grid")
        self.entries: Tuple[Tuple[Entry, ...], ...] = tuple(rows)
        self.dim = d
        self.validity = tuple(validity) if validity is not None else probe_validity(self)

    @classmethod
    def from_strings(cls, rows: Sequence[Sequence[str]], validity=None) -> "GMatrixFn":
        return cls([[parse(s) for s in r] for r in rows], validity)

    @classmethod
    def constant(cls, matrix, validity=(0.0, 1.0)) -> "GMatrixFn":
        m = np.asarray(matrix, dtype=complex)
        return cls([[complex(x) for x in row] for row in m], validity)

    def evaluate_many(self, gs) -> np.ndarray:
        gs = np.atleast_1d(np.asarray(gs, dtype=np.float64))
        out = np.empty((len(gs), self.dim, self.dim), dtype=complex)
        for i, row in enumerate(self.entries):
            for j, entry in enumerate(row):
                out[:, i, j] = _entry_values(entry, gs)
        return out

    def __call__(self, g: float) -> np.ndarray:
        return self.evaluate_many([g])[0]

    @property
    def is_polynomial(self) -> bool:
        return all(not isinstance(e, GExpr) or e.is_polynomial for row in self.entries for e in row)

    def non_polynomial_entries(self) -> List[Tuple[int, int]]:
        return [
            (i, j)
            for i, row in enumerate(self.entries)
            for j, e in enumerate(row)
            if isinstance(e, GExpr) and not e.is_polynomial
        ]

    def series(self, order: int) -> List[np.ndarray]:
        coeffs = np.zeros((order + 1, self.dim, self.dim), dtype=complex)
        for i, row in enumerate(self.entries):
            for j, e in enumerate(row):
                if isinstance(e, GExpr):
                    coeffs[:, i, j] = e.series(order)
                else:
                    coeffs[0, i, j] = complex(e)
        return list(coeffs)

    def source_rows(self) -> List[List[str]]:
        return [[str(e) if isinstance(e, GExpr) else repr(e) for e in row] for row in self.entries]


class CallableMatrixFn:
    """Wrap an arbitrary ``g -> matrix`` callable; Taylor data only by fitting."""

    def __init__(self, func: Callable[[float], np.ndarray], dim: int, validity: Tuple[float, float] = (0.0, 1.0)):
        self.func = func
        self.dim = dim
        self.validity = tuple(validity)

    def __call__(self, g: float) -> np.ndarray:
        return np.asarray(self.func(g), dtype=complex)

    def evaluate_many(self, gs) -> np.ndarray:
        return np.array([self(float(g)) for g in np.atleast_1d(gs)])

    is_polynomial = False

    def non_polynomial_entries(self):
        return [(i, j) for i in range(self.dim) for j in range(self.dim)]


def probe_validity(f: GMatrixFn, upper: float = 1.0, points: int = 257) -> Tuple[float, float]:
    """Largest ``[0, gmax]`` (on a uniform probe grid) where ``f`` evaluates."""
    gs = np.linspace(0.0, upper, points)
    last = len(gs) - 1
    for row in f.entries:
        for e in row:
            if not isinstance(e, GExpr):
                continue
            ops, args, _ = e._program
            _, err, _, idx = _kernels.rpn_eval(ops, args, gs[: last + 1])
            if err:
                last = idx - 1
    if last < 1:
        raise GExprError("matrix function is not evaluable on any interval [0, g]")
    return (0.0, float(gs[last]))


# --------------------------------------------------------------------------
# Taylor coefficients

def _fit_coeffs(f, order: int, g0: float) -> List[np.ndarray]:
    K = max(2 * order, 2) + 2
    gs = g0 / 2.0 ** np.arange(K + 1)
    vals = f.evaluate_many(gs).reshape(len(gs), -1)
    t = gs / g0
    vander = np.vander(t, order + 1, increasing=True)
    sol, *_ = np.linalg.lstsq(vander, vals, rcond=None)
    scale = g0 ** np.arange(order + 1)
    sol = sol / scale[:, None]
    return [c.reshape(f.dim, f.dim) for c in sol]


def _remainder_ok(f, coeffs: List[np.ndarray], g0: float) -> Tuple[bool, float]:
    order = len(coeffs) - 1
    h = np.array([0.37 * g0, 0.11 * g0])
    vals = f.evaluate_many(h)
    res = []
    for k, g in enumerate(h):
        approx = sum(c * g**m for m, c in enumerate(coeffs))
        res.append(float(np.linalg.norm(vals[k] - approx)))
    floor = 1e-11 * (1.0 + float(np.linalg.norm(coeffs[0])))
    if res[0] <= floor:
        return True, res[0]
    expected = (h[0] / h[1]) ** (order + 1)
    ok = res[1] > 0 and res[0] / res[1] >= 0.25 * expected
    return ok, res[0]


def taylor_coeffs(f, order: int, g0: float = DEFAULT_G0, method: str = "auto") -> List[np.ndarray]:
    """Coefficient matrices ``C_0 .. C_order`` of ``f(g)`` about ``g = 0``.

    ``method`` is ``"series"`` (exact power-series propagation through the
    expression tree), ``"fit"`` (least-squares polynomial fit on the geometric
    grid ``g0, g0/2, ..., g0/2^K`` with ``K >= 2*order``) or ``"auto"``
    (series when every entry is an expression or constant). Either way the
    truncation is checked at two held-out points; a remainder that does not
    shrink like ``g^(order+1)`` raises :class:`TaylorError`.
    """
    if not 0 <= order <= MAX_TAYLOR_ORDER:
        raise ValueError(f"order must be in [0, {MAX_TAYLOR_ORDER}]")
    if method == "auto":
        method = "series" if isinstance(f, GMatrixFn) else "fit"
    if method == "series":
        if not isinstance(f, GMatrixFn):
            raise TypeError("series expansion needs a GMatrixFn")
        coeffs = f.series(order)
    elif method == "fit":
        coeffs = _fit_coeffs(f, order, g0)
    else:
        raise ValueError(f"unknown method {method!r}")
    ok, res = _remainder_ok(f, coeffs, g0)
    if not ok:
        raise TaylorError(
            f"non-analytic or insufficient order: held-out remainder {res:.3e} "
            f"does not decay like g^{order + 1}"
        )
    return coeffs


def product_series(a: List[np.ndarray], b: List[np.ndarray]) -> List[np.ndarray]:
    """Truncated Cauchy product of two matrix power series."""
    n = min(len(a), len(b))
    return [sum(a[i] @ b[k - i] for i in range(k + 1)) for k in range(n)]
