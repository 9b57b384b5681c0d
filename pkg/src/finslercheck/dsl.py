"""Expression language for Finsler Lagrangians L(x, y).

Grammar (EBNF, whitespace-insensitive)::

    expr     = term { ("+" | "-") term } ;
    term     = unary { ("*" | "/") unary } ;
    unary    = ("-" | "+") unary | power ;
    power    = atom [ "^" exponent ] ;
    exponent = [ "-" ] number | "(" [ "-" ] number ")" ;
    atom     = number | variable | "sqrt" "(" expr ")" | "(" expr ")" ;
    variable = ("x" | "y") digit { digit } ;          (* 1-based index <= n *)
    number   = digit { digit } [ "." { digit } ] [ ("e" | "E") [ "+" | "-" ] digit { digit } ]
             | "." digit { digit } [ exponent part as above ] ;

``^`` binds tighter than unary minus, so ``-y1^2`` is ``-(y1^2)``.

Evaluation is generic: the same AST runs on floats and on
:class:`~finslercheck.jets.Jet` values.
"""

from __future__ import annotations

import math
import re
from dataclasses import dataclass
from typing import Sequence, Union

import numpy as np

from .jets import Jet, JetContext, NumericDegeneracy


class ParseError(ValueError):
    def __init__(self, message: str, offset: int):
        super().__init__(f"{message} (at offset {offset})")
        self.offset = offset


# ---------------------------------------------------------------------------
# AST
# ---------------------------------------------------------------------------


@dataclass(frozen=True)
class Num:
    value: float


@dataclass(frozen=True)
class Var:
    kind: str  # "x" or "y"
    index: int  # 1-based


@dataclass(frozen=True)
class Neg:
    arg: "Expression"


@dataclass(frozen=True)
class BinOp:
    op: str
    left: "Expression"
    right: "Expression"


@dataclass(frozen=True)
class Pow:
    base: "Expression"
    exponent: float


@dataclass(frozen=True)
class Sqrt:
    arg: "Expression"


Expression = Union[Num, Var, Neg, BinOp, Pow, Sqrt]


# ---------------------------------------------------------------------------
# tokenizer / parser
# ---------------------------------------------------------------------------

_TOKEN = re.compile(
    r"\s*(?:"
    r"(?P<num>(?:\d+\.?\d*|\.\d+)(?:[eE][+-]?\d+)?)"
    r"|(?P<name>[A-Za-z_][A-Za-z_0-9]*)"
    r"|(?P<op>[-+*/^()])"
    r")"
)


def _tokenize(text: str):
    pos = 0
    tokens = []
    while pos < len(text):
        if text[pos:].strip() == "":
            break
        m = _TOKEN.match(text, pos)
        if m is None or m.end() == pos:
            raise ParseError(f"unexpected character {text[pos:].lstrip()[:1]!r}",
                             len(text) - len(text[pos:].lstrip()))
        kind = m.lastgroup
        start = m.start(kind)
        tokens.append((kind, m.group(kind), start))
        pos = m.end()
    tokens.append(("end", "", len(text)))
    return tokens


class _Parser:
    def __init__(self, text: str, n: int):
        self.text = text
        self.n = n
        self.tokens = _tokenize(text)
        self.i = 0

    def peek(self):
        return self.tokens[self.i]

    def take(self):
        tok = self.tokens[self.i]
        self.i += 1
        return tok

    def expect(self, value):
        tok = self.take()
        if tok[1] != value:
            what = "end of input" if tok[0] == "end" else repr(tok[1])
            raise ParseError(f"expected {value!r}, found {what}", tok[2])
        return tok

    def parse(self) -> Expression:
        node = self.expr()
        tok = self.peek()
        if tok[0] != "end":
            raise ParseError(f"unexpected token {tok[1]!r}", tok[2])
        return node

    def expr(self):
        node = self.term()
        while self.peek()[1] in ("+", "-") and self.peek()[0] == "op":
            op = self.take()[1]
            node = BinOp(op, node, self.term())
        return node

    def term(self):
        node = self.unary()
        while self.peek()[1] in ("*", "/") and self.peek()[0] == "op":
            op = self.take()[1]
            node = BinOp(op, node, self.unary())
        return node

    def unary(self):
        if self.peek() == ("op", "-", self.peek()[2]):
            self.take()
            return Neg(self.unary())
        if self.peek()[0] == "op" and self.peek()[1] == "+":
            self.take()
            return self.unary()
        return self.power()

    def power(self):
        base = self.atom()
        if self.peek()[0] == "op" and self.peek()[1] == "^":
            self.take()
            return Pow(base, self.exponent())
        return base

    def exponent(self):
        paren = False
        if self.peek()[1] == "(":
            self.take()
            paren = True
        sign = 1.0
        if self.peek()[1] == "-":
            self.take()
            sign = -1.0
        tok = self.take()
        if tok[0] != "num":
            raise ParseError("exponent must be a numeric literal", tok[2])
        if paren:
            self.expect(")")
        return _literal(tok[1], sign)

    def atom(self):
        kind, val, off = self.take()
        if kind == "num":
            return Num(float(val))
        if kind == "name":
            if val == "sqrt":
                self.expect("(")
                node = self.expr()
                self.expect(")")
                return Sqrt(node)
            m = re.fullmatch(r"([xy])(\d+)", val)
            if m is None:
                raise ParseError(f"unknown identifier {val!r}", off)
            idx = int(m.group(2))
            if not 1 <= idx <= self.n:
                raise ParseError(f"variable index out of range: {val} (n={self.n})", off)
            return Var(m.group(1), idx)
        if val == "(":
            node = self.expr()
            self.expect(")")
            return node
        what = "end of input" if kind == "end" else repr(val)
        raise ParseError(f"unexpected {what}", off)


def _literal(text: str, sign: float):
    v = sign * float(text)
    return int(v) if re.fullmatch(r"\d+", text) else v


def parse(text: str, n: int) -> Expression:
    """Parse an expression in the variables x1..xn, y1..yn."""
    if not text or not text.strip():
        raise ParseError("empty expression", 0)
    if n < 1:
        raise ValueError("dimension must be positive")
    return _Parser(text, n).parse()


def to_text(node: Expression) -> str:
    """Pretty-print so that ``parse(to_text(e), n) == e``."""
    if isinstance(node, Num):
        return repr(float(node.value)) if node.value >= 0 else f"({float(node.value)!r})"
    if isinstance(node, Var):
        return f"{node.kind}{node.index}"
    if isinstance(node, Neg):
        return f"(-{to_text(node.arg)})"
    if isinstance(node, BinOp):
        return f"({to_text(node.left)} {node.op} {to_text(node.right)})"
    if isinstance(node, Pow):
        e = node.exponent
        etext = str(e) if isinstance(e, int) and e >= 0 else f"({e!r})"
        if isinstance(e, int) and e < 0:
            etext = f"({e})"
        base = to_text(node.base)
        if isinstance(node.base, Pow):  # the grammar has no chained powers
            base = f"({base})"
        return f"{base}^{etext}"
    if isinstance(node, Sqrt):
        return f"sqrt({to_text(node.arg)})"
    raise TypeError(f"not an expression node: {node!r}")


def max_index(node: Expression) -> int:
    if isinstance(node, Var):
        return node.index
    if isinstance(node, (Neg, Sqrt)):
        return max_index(node.arg)
    if isinstance(node, Pow):
        return max_index(node.base)
    if isinstance(node, BinOp):
        return max(max_index(node.left), max_index(node.right))
    return 0


# ---------------------------------------------------------------------------
# evaluation
# ---------------------------------------------------------------------------


def _sqrt(v):
    if isinstance(v, Jet):
        return v.sqrt()
    if v <= 0:
        raise NumericDegeneracy("sqrt of a non-positive value")
    return math.sqrt(v)


def _pow(v, p):
    if isinstance(v, Jet):
        return v ** p
    if isinstance(p, int):
        if p < 0 and v == 0:
            raise NumericDegeneracy("division by zero")
        return v ** p
    if v <= 0:
        raise NumericDegeneracy(f"real power {p} of a non-positive value")
    return v ** p


def _div(a, b):
    if not isinstance(b, Jet) and b == 0:
        raise NumericDegeneracy("division by zero")
    return a / b


def evaluate(expr: Expression, assignment: Sequence):
    """Evaluate with ``assignment = (x1..xn, y1..yn)`` of floats or jets."""
    n2 = len(assignment)
    if n2 % 2:
        raise ValueError("assignment must have length 2n")
    n = n2 // 2
    if max_index(expr) > n:
        raise ValueError("expression refers to a variable beyond the assignment")

    def ev(node):
        if isinstance(node, Num):
            return node.value
        if isinstance(node, Var):
            return assignment[node.index - 1 + (n if node.kind == "y" else 0)]
        if isinstance(node, Neg):
            return -ev(node.arg)
        if isinstance(node, BinOp):
            a, b = ev(node.left), ev(node.right)
            if node.op == "+":
                return a + b
            if node.op == "-":
                return a - b
            if node.op == "*":
                return a * b
            return _div(a, b)
        if isinstance(node, Pow):
            return _pow(ev(node.base), node.exponent)
        if isinstance(node, Sqrt):
            return _sqrt(ev(node.arg))
        raise TypeError(f"not an expression node: {node!r}")

    return ev(expr)


# ---------------------------------------------------------------------------
# Lagrangians
# ---------------------------------------------------------------------------


@dataclass(frozen=True)
class LagrangianSpec:
    """A Finsler Lagrangian on an n-dimensional chart, with an optional guard.

    Sample points where ``guard <= 0`` are outside the domain.
    """

    n: int
    expr: Expression
    guard: Expression | None = None
    label: str = ""

    @classmethod
    def from_text(cls, text: str, n: int, guard: str | None = None, label: str = ""):
        return cls(n, parse(text, n), parse(guard, n) if guard else None, label or text)

    @property
    def text(self) -> str:
        return to_text(self.expr)

    def value(self, x, y) -> float:
        return float(evaluate(self.expr, [*x, *y]))

    def guard_ok(self, x, y) -> bool:
        if self.guard is None:
            return True
        try:
            return float(evaluate(self.guard, [*x, *y])) > 0
        except (NumericDegeneracy, ZeroDivisionError, OverflowError):
            return False

    def jet(self, ctx: JetContext) -> Jet:
        if ctx.nvars != 2 * self.n:
            raise ValueError(f"context has {ctx.nvars} variables, expected {2 * self.n}")
        return evaluate(self.expr, ctx.seeds())


def _fmt(v) -> str:
    if isinstance(v, str):
        return f"({v})"
    return repr(float(v))


def euclidean(n: int) -> LagrangianSpec:
    text = "0.5*(" + " + ".join(f"y{i}^2" for i in range(1, n + 1)) + ")"
    return LagrangianSpec.from_text(text, n, label=f"euclidean(n={n})")


def riemannian(a: Sequence[Sequence]) -> LagrangianSpec:
    """L = 1/2 a_ij(x) y^i y^j with entries numbers or expression strings in x."""
    n = len(a)
    if any(len(row) != n for row in a):
        raise ValueError("riemannian metric must be square")
    for i in range(n):
        for j in range(i + 1, n):
            ai, aj = a[i][j], a[j][i]
            same = (parse(ai, n) == parse(aj, n)) if isinstance(ai, str) and isinstance(aj, str) \
                else (not isinstance(ai, str) and not isinstance(aj, str) and float(ai) == float(aj))
            if not same:
                raise ValueError(f"riemannian metric not symmetric at ({i + 1},{j + 1})")
    terms = [f"{_fmt(a[i][j])}*y{i + 1}*y{j + 1}" for i in range(n) for j in range(n)
             if isinstance(a[i][j], str) or float(a[i][j]) != 0.0]
    text = "0.5*(" + " + ".join(terms) + ")"
    for row in a:
        for v in row:
            if isinstance(v, str) and re.search(r"y\d", v):
                raise ValueError("riemannian entries may depend on x only")
    return LagrangianSpec.from_text(text, n, label="riemannian")


def randers(a: Sequence[Sequence[float]], b: Sequence) -> LagrangianSpec:
    """L = 1/2 (sqrt(a(y,y)) + b(x)·y)^2, a constant SPD, |b|_a < 1.

    ``b`` entries may be numbers or expression strings in x; in the latter
    case the norm bound becomes the guard ``1 - b^T a^{-1} b > 0``.
    """
    a = np.asarray(a, dtype=float)
    n = a.shape[0]
    if a.shape != (n, n) or not np.allclose(a, a.T):
        raise ValueError("randers requires a symmetric matrix a")
    if np.any(np.linalg.eigvalsh(a) <= 0):
        raise ValueError("randers requires a positive definite a")
    if len(b) != n:
        raise ValueError("randers covector has wrong length")
    ainv = np.linalg.inv(a)
    quad = " + ".join(f"{float(a[i, j])!r}*y{i + 1}*y{j + 1}" for i in range(n) for j in range(n) if a[i, j] != 0)
    lin = " + ".join(f"{_fmt(b[i])}*y{i + 1}" for i in range(n))
    text = f"0.5*(sqrt({quad}) + {lin})^2"
    guard = None
    if all(not isinstance(v, str) for v in b):
        bv = np.asarray(b, dtype=float)
        if bv @ ainv @ bv >= 1.0:
            raise ValueError("randers requires |b|_a < 1")
    else:
        norm = " + ".join(f"{float(ainv[i, j])!r}*{_fmt(b[i])}*{_fmt(b[j])}"
                          for i in range(n) for j in range(n) if ainv[i, j] != 0)
        guard = f"1 - ({norm})"
    spec = LagrangianSpec.from_text(text, n, guard=guard, label="randers")
    return spec


def randers_beta(n: int, beta: float, varying: bool = False) -> LagrangianSpec:
    """Randers metric over the Euclidean norm with drift of size ``beta``.

    ``varying=False`` uses the constant covector b = (beta, 0, ...), a
    Minkowski (x-independent) space.  ``varying=True`` uses an x-dependent,
    non-closed b of norm < beta on the box [-1, 1]^n; that space is not of
    Berwald (hence not Landsberg) type.
    """
    if not 0 <= beta < 1:
        raise ValueError("beta must lie in [0, 1)")
    eye = np.eye(n)
    if not varying:
        return _relabel(randers(eye, [beta] + [0.0] * (n - 1)), f"randers(beta={beta})")
    b = [f"{beta!r}*(0.6 + 0.3*x2)", f"{beta!r}*(-0.3*x1)"]
    if n >= 3:
        b[1] = f"{beta!r}*(-0.3*x1 + 0.2*x3)"
        b.append(f"{beta!r}*(0.2*x1*x2)")
    b += ["0"] * (n - len(b))
    return _relabel(randers(eye, b), f"randers_varying(beta={beta})")


def quartic_minkowski(coefficients: Sequence[float], cross: float = 0.0) -> LagrangianSpec:
    """L = 1/2 sqrt(sum_i c_i (y^i)^4 + cross * sum_{i<j} (y^i)^2 (y^j)^2)."""
    n = len(coefficients)
    if any(c <= 0 for c in coefficients) or cross < 0:
        raise ValueError("quartic coefficients must be positive")
    parts = [f"{float(c)!r}*y{i + 1}^4" for i, c in enumerate(coefficients)]
    if cross:
        parts += [f"{float(cross)!r}*y{i + 1}^2*y{j + 1}^2" for i in range(n) for j in range(i + 1, n)]
    return LagrangianSpec.from_text("0.5*sqrt(" + " + ".join(parts) + ")", n, label="quartic_minkowski")


def _relabel(spec: LagrangianSpec, label: str) -> LagrangianSpec:
    return LagrangianSpec(spec.n, spec.expr, spec.guard, label)


BUILTINS = {
    "euclidean": euclidean,
    "riemannian": riemannian,
    "randers": randers,
    "randers_beta": randers_beta,
    "quartic_minkowski": quartic_minkowski,
}


# ---------------------------------------------------------------------------
# homogeneity
# ---------------------------------------------------------------------------


def _vertical_hessian(spec: LagrangianSpec, x, y) -> np.ndarray:
    ctx = JetContext([*x, *y], order=2)
    L = spec.jet(ctx)
    n = spec.n
    H = np.empty((n, n))
    for a in range(n):
        for b in range(n):
            alpha = [0] * (2 * n)
            alpha[n + a] += 1
            alpha[n + b] += 1
            H[a, b] = L.derivative(alpha)
    return H


def check_homogeneity(spec: LagrangianSpec, x, y, scales=(0.5, 2.0, 7.0),
                      metric: bool = False) -> dict:
    """Residuals of L(x, s y) = s^2 L(x, y) (and g(x, s y) = g(x, y) if asked)."""
    x = np.asarray(x, dtype=float)
    y = np.asarray(y, dtype=float)
    if any(s <= 0 for s in scales):
        raise ValueError("scales must be positive")
    base = spec.value(x, y)
    res = 0.0
    for s in scales:
        target = s * s * base
        res = max(res, abs(spec.value(x, s * y) - target) / (1 + abs(target)))
    out = {"lagrangian": res}
    if metric:
        g0 = _vertical_hessian(spec, x, y)
        gres = 0.0
        for s in scales:
            g1 = _vertical_hessian(spec, x, s * y)
            gres = max(gres, float(np.max(np.abs(g1 - g0))) / (1 + float(np.max(np.abs(g0)))))
        out["metric"] = gres
    out["max"] = max(out.values())
    return out
