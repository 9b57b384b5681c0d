"""Truncated multivariate Taylor arithmetic ("jets").

A :class:`Jet` stores the Taylor coefficients of a (possibly tensor-valued)
function of ``nvars`` variables around a base point, truncated at total
degree ``order``.  Coefficients are kept densely, indexed by the graded rank
of the multi-index (see :func:`rank`), with the jet axis *first*::

    jet.c.shape == (n_monomials(nvars, order), *jet.shape)

so that tensor manipulations act on the trailing axes.  Because the ordering
is graded, truncating to a lower order is a prefix slice.

Coefficients are Taylor coefficients, i.e. ``derivative / alpha!``.
"""

from __future__ import annotations

import itertools
import math
from functools import lru_cache
from typing import Iterable, Sequence

import numpy as np
from scipy import sparse

DEFAULT_ORDER = 5

#: Value parts with absolute value below this are treated as zero by
#: division, sqrt and real powers.
DEGENERACY_EPS = 1e-14


class NumericDegeneracy(ArithmeticError):
    """Division by (near) zero, or a root/power of a non-positive value."""


class InsufficientOrder(ValueError):
    """A derivative was requested beyond the truncation order of a jet."""


# ---------------------------------------------------------------------------
# multi-index bookkeeping
# ---------------------------------------------------------------------------


def n_monomials(nvars: int, order: int) -> int:
    """Number of monomials of total degree <= order in nvars variables."""
    if order < 0:
        return 0
    return math.comb(nvars + order, order)


def _n_degree(nvars: int, degree: int) -> int:
    # monomials of exact degree
    if nvars == 0:
        return 1 if degree == 0 else 0
    return math.comb(degree + nvars - 1, nvars - 1)


def _exact_degree(nvars: int, degree: int) -> Iterable[tuple[int, ...]]:
    # descending lexicographic order
    if nvars == 1:
        yield (degree,)
        return
    for first in range(degree, -1, -1):
        for rest in _exact_degree(nvars - 1, degree - first):
            yield (first,) + rest


@lru_cache(maxsize=None)
def monomials(nvars: int, order: int) -> np.ndarray:
    """All multi-indices with total degree <= order, in rank order.

    Shape ``(n_monomials(nvars, order), nvars)``.
    """
    rows = [m for d in range(order + 1) for m in _exact_degree(nvars, d)]
    return np.array(rows, dtype=np.int64).reshape(len(rows), nvars)


def rank(alpha: Sequence[int]) -> int:
    """Position of the multi-index ``alpha`` in the dense coefficient vector.

    Multi-indices are ordered first by total degree, then in descending
    lexicographic order within a degree block.  Closed form::

        rank(alpha) = C(v + d - 1, v)                 # all lower degrees
                      + sum_i sum_{t > alpha_i} #{degree (d_i - t) in v-i-1 vars}

    where ``v = len(alpha)``, ``d = |alpha|`` and ``d_i`` is the degree left
    after fixing the first ``i`` exponents.
    """
    alpha = [int(a) for a in alpha]
    if any(a < 0 for a in alpha):
        raise ValueError(f"negative exponent in multi-index {alpha}")
    v = len(alpha)
    d = sum(alpha)
    r = n_monomials(v, d - 1)
    left = d
    for i, a in enumerate(alpha[:-1]):
        rest = v - i - 1
        for t in range(a + 1, left + 1):
            r += _n_degree(rest, left - t)
        left -= a
    return r


@lru_cache(maxsize=None)
def _rank_table(nvars: int, order: int) -> dict[tuple[int, ...], int]:
    return {tuple(m): i for i, m in enumerate(monomials(nvars, order).tolist())}


@lru_cache(maxsize=None)
def _mul_table(nvars: int, order: int):
    """Index pairs (i, j) with deg_i + deg_j <= order and the 0/1 scatter matrix."""
    mons = monomials(nvars, order)
    table = _rank_table(nvars, order)
    degs = mons.sum(axis=1)
    I, J, R = [], [], []
    for i, mi in enumerate(mons):
        budget = order - degs[i]
        hi = n_monomials(nvars, budget)
        for j in range(hi):
            I.append(i)
            J.append(j)
            R.append(table[tuple(mi + mons[j])])
    I = np.array(I, dtype=np.int64)
    J = np.array(J, dtype=np.int64)
    R = np.array(R, dtype=np.int64)
    scatter = sparse.csr_matrix(
        (np.ones(len(R)), (R, np.arange(len(R)))), shape=(len(mons), len(R))
    )
    return I, J, scatter


@lru_cache(maxsize=None)
def _deriv_table(nvars: int, order: int, var: int):
    """Source indices and factors for d/dz_var of an order-``order`` jet."""
    table = _rank_table(nvars, order)
    lower = monomials(nvars, order - 1)
    src = np.empty(len(lower), dtype=np.int64)
    fac = np.empty(len(lower))
    for r, m in enumerate(lower):
        up = m.copy()
        up[var] += 1
        src[r] = table[tuple(up)]
        fac[r] = up[var]
    return src, fac


# ---------------------------------------------------------------------------
# jets
# ---------------------------------------------------------------------------


class JetContext:
    """Ambient data shared by jets: number of variables, order and base point.

    For Finsler computations the variables are ``(x^1..x^n, y^1..y^n)`` and
    the y-part of the base point must not vanish.
    """

    def __init__(self, base_point: Sequence[float], order: int = DEFAULT_ORDER,
                 require_slit: bool = True):
        base = np.asarray(base_point, dtype=float)
        if base.ndim != 1 or base.size == 0:
            raise ValueError("base point must be a non-empty vector")
        if order < 0:
            raise ValueError("order must be non-negative")
        if require_slit:
            if base.size % 2:
                raise ValueError("base point must have even length 2n")
            if not np.any(base[base.size // 2:]):
                raise ValueError("y-part of the base point vanishes (not a point of TM\\0)")
        self.base_point = base
        self.nvars = base.size
        self.order = int(order)

    @property
    def dim(self) -> int:
        return self.nvars

    def seed(self, i: int) -> "Jet":
        return seed_variable(self, i)

    def seeds(self) -> list["Jet"]:
        return [seed_variable(self, i) for i in range(self.nvars)]

    def constant(self, value) -> "Jet":
        value = np.asarray(value, dtype=float)
        c = np.zeros((n_monomials(self.nvars, self.order),) + value.shape)
        c[0] = value
        return Jet(self, self.order, c)

    def __repr__(self):
        return f"JetContext(nvars={self.nvars}, order={self.order}, base={self.base_point.tolist()})"


def seed_variable(ctx: JetContext, i: int) -> "Jet":
    """Jet of the i-th coordinate function at the base point."""
    if not 0 <= i < ctx.nvars:
        raise IndexError(f"variable index {i} out of range [0, {ctx.nvars})")
    c = np.zeros(n_monomials(ctx.nvars, ctx.order))
    c[0] = ctx.base_point[i]
    if ctx.order >= 1:
        c[1 + i] = 1.0
    return Jet(ctx, ctx.order, c)


class Jet:
    """Truncated Taylor expansion of a tensor-valued function.

    Arithmetic between jets of different orders truncates to the smaller
    order.  Plain numbers and numpy arrays act as constants.
    """

    __slots__ = ("ctx", "order", "c")
    __array_priority__ = 1000

    def __init__(self, ctx: JetContext, order: int, c: np.ndarray):
        self.ctx = ctx
        self.order = order
        self.c = c

    # -- basic views -------------------------------------------------------

    @property
    def nvars(self) -> int:
        return self.ctx.nvars

    @property
    def shape(self) -> tuple[int, ...]:
        return self.c.shape[1:]

    @property
    def ndim(self) -> int:
        return self.c.ndim - 1

    @property
    def value(self):
        v = self.c[0]
        return float(v) if v.ndim == 0 else v.copy()

    def truncate(self, order: int) -> "Jet":
        if order > self.order:
            raise InsufficientOrder(f"cannot raise jet order {self.order} to {order}")
        return Jet(self.ctx, order, self.c[: n_monomials(self.nvars, order)])

    def _wrap(self, c: np.ndarray, order: int | None = None) -> "Jet":
        return Jet(self.ctx, self.order if order is None else order, c)

    def linear(self, fn) -> "Jet":
        """Apply a linear map acting on the tensor axes (jet axis kept first)."""
        return self._wrap(fn(self.c))

    def __getitem__(self, idx) -> "Jet":
        if not isinstance(idx, tuple):
            idx = (idx,)
        return self._wrap(self.c[(slice(None),) + idx])

    def transpose(self, *axes) -> "Jet":
        if len(axes) == 1 and isinstance(axes[0], (tuple, list)):
            axes = tuple(axes[0])
        if not axes:
            axes = tuple(reversed(range(self.ndim)))
        return self._wrap(self.c.transpose((0,) + tuple(a + 1 for a in axes)))

    @property
    def T(self) -> "Jet":
        return self.transpose()

    def reshape(self, *shape) -> "Jet":
        if len(shape) == 1 and isinstance(shape[0], (tuple, list)):
            shape = tuple(shape[0])
        return self._wrap(self.c.reshape((self.c.shape[0],) + tuple(shape)))

    def sum(self, axis=None) -> "Jet":
        if axis is None:
            axis = tuple(range(self.ndim))
        if isinstance(axis, int):
            axis = (axis,)
        return self._wrap(self.c.sum(axis=tuple(a % self.ndim + 1 for a in axis)))

    def __repr__(self):
        return f"Jet(order={self.order}, shape={self.shape}, value={self.value!r})"

    # -- derivatives -------------------------------------------------------

    def coefficient(self, alpha: Sequence[int]):
        if len(alpha) != self.nvars:
            raise ValueError(f"multi-index length {len(alpha)} != {self.nvars}")
        if sum(alpha) > self.order:
            raise InsufficientOrder(f"multi-index order {sum(alpha)} exceeds jet order {self.order}")
        return self.c[rank(alpha)]

    def derivative(self, alpha: Sequence[int]):
        """Partial derivative d^|alpha| / dz^alpha at the base point."""
        fact = math.prod(math.factorial(int(a)) for a in alpha)
        out = self.coefficient(alpha) * fact
        return float(out) if np.ndim(out) == 0 else out

    def partial(self, var: int) -> "Jet":
        """Jet of the partial derivative along variable ``var`` (order drops by one)."""
        if self.order < 1:
            raise InsufficientOrder("cannot differentiate an order-0 jet")
        src, fac = _deriv_table(self.nvars, self.order, var)
        c = self.c[src] * fac.reshape((-1,) + (1,) * self.ndim)
        return self._wrap(c, self.order - 1)

    def gradient(self, variables: Iterable[int] | None = None) -> "Jet":
        """Stack of partials with the derivative index appended as the last axis."""
        if variables is None:
            variables = range(self.nvars)
        parts = [self.partial(v).c for v in variables]
        return self._wrap(np.stack(parts, axis=-1), self.order - 1)

    # -- arithmetic --------------------------------------------------------

    def _coerce(self, other):
        if isinstance(other, Jet):
            if other.ctx is not self.ctx:
                raise ValueError("jets belong to different contexts")
            k = min(self.order, other.order)
            m = n_monomials(self.nvars, k)
            return self.c[:m], other.c[:m], k
        return None

    def __add__(self, other):
        co = self._coerce(other)
        if co is None:
            other = np.asarray(other, dtype=float)
            shape = np.broadcast_shapes(self.shape, other.shape)
            c = np.broadcast_to(self.c, (self.c.shape[0],) + shape).copy()
            c[0] += other
            return self._wrap(c)
        a, b, k = co
        a, b = _align(a, b)
        return self._wrap(a + b, k)

    __radd__ = __add__

    def __neg__(self):
        return self._wrap(-self.c)

    def __sub__(self, other):
        return self + (-other)

    def __rsub__(self, other):
        return (-self) + other

    def __mul__(self, other):
        co = self._coerce(other)
        if co is None:
            other = np.asarray(other, dtype=float)
            return self._wrap(_lift(self.c, other.ndim) * other)
        a, b, k = co
        return self._wrap(_product(self.nvars, k, a, b), k)

    __rmul__ = __mul__

    def __truediv__(self, other):
        if isinstance(other, Jet):
            return self * other.reciprocal()
        other = np.asarray(other, dtype=float)
        if np.any(np.abs(other) < DEGENERACY_EPS):
            raise NumericDegeneracy("division by zero")
        return self._wrap(_lift(self.c, other.ndim) / other)

    def __rtruediv__(self, other):
        return self.reciprocal() * other

    def __pow__(self, p):
        if isinstance(p, Jet):
            raise TypeError("only literal (constant) exponents are supported")
        if float(p).is_integer():
            return self.powi(int(p))
        return self.powf(float(p))

    def powi(self, p: int) -> "Jet":
        if p < 0:
            return self.reciprocal().powi(-p)
        result = None
        base = self
        while p:
            if p & 1:
                result = base if result is None else result * base
            p >>= 1
            if p:
                base = base * base
        if result is None:
            return self._wrap(np.zeros_like(self.c)) + 1.0
        return result

    def _compose(self, derivs) -> "Jet":
        """f(self) from f^(m)(value) / m!, m = 0..order (Horner in the nilpotent part)."""
        h = self._wrap(self.c.copy())
        h.c[0] = 0.0
        out = self._wrap(np.zeros_like(self.c))
        out.c[0] = derivs[self.order]
        for m in range(self.order - 1, -1, -1):
            out = out * h
            out.c[0] = out.c[0] + derivs[m]
        return out

    def _taylor_power(self, p: float):
        v = self.c[0]
        coef = [np.ones_like(v)]
        for m in range(1, self.order + 1):
            coef.append(coef[-1] * (p - m + 1) / m)
        return [coef[m] * v ** (p - m) for m in range(self.order + 1)]

    def reciprocal(self) -> "Jet":
        v = self.c[0]
        if np.any(np.abs(v) < DEGENERACY_EPS):
            raise NumericDegeneracy("division by a jet with zero value part")
        return self._compose([(-1.0) ** m / v ** (m + 1) for m in range(self.order + 1)])

    def powf(self, p: float) -> "Jet":
        v = self.c[0]
        if np.any(v < DEGENERACY_EPS):
            raise NumericDegeneracy(f"real power {p} of a non-positive value")
        return self._compose(self._taylor_power(p))

    def sqrt(self) -> "Jet":
        v = self.c[0]
        if np.any(v < DEGENERACY_EPS):
            raise NumericDegeneracy("sqrt of a non-positive value")
        return self._compose(self._taylor_power(0.5))


def _lift(c: np.ndarray, rank: int) -> np.ndarray:
    """Insert unit tensor axes after the jet axis so ``c`` has ``rank`` tensor axes."""
    extra = rank - (c.ndim - 1)
    if extra <= 0:
        return c
    return c.reshape(c.shape[:1] + (1,) * extra + c.shape[1:])


def _align(a: np.ndarray, b: np.ndarray):
    """Broadcast tensor axes numpy-style while keeping the jet axis first."""
    r = max(a.ndim, b.ndim) - 1
    return _lift(a, r), _lift(b, r)


def _product(nvars: int, order: int, a: np.ndarray, b: np.ndarray) -> np.ndarray:
    I, J, S = _mul_table(nvars, order)
    a, b = _align(a, b)
    terms = a[I] * b[J]
    flat = terms.reshape(len(I), -1)
    out = np.asarray(S @ flat)
    return out.reshape((S.shape[0],) + terms.shape[1:])


# ---------------------------------------------------------------------------
# tensor helpers
# ---------------------------------------------------------------------------


def stack(items: Sequence, axis: int = 0) -> Jet:
    """Stack jets (or constants) along a new tensor axis."""
    jets = [it for it in items if isinstance(it, Jet)]
    if not jets:
        raise ValueError("stack needs at least one jet")
    ctx = jets[0].ctx
    k = min(j.order for j in jets)
    m = n_monomials(ctx.nvars, k)
    parts = []
    for it in items:
        if isinstance(it, Jet):
            parts.append(it.c[:m])
        else:
            arr = np.zeros((m,) + np.shape(it))
            arr[0] = it
            parts.append(arr)
    if axis < 0:
        axis += parts[0].ndim
    else:
        axis += 1
    return Jet(ctx, k, np.stack(parts, axis=axis))


def concatenate(items: Sequence[Jet], axis: int = -1) -> Jet:
    """Join jets along an existing tensor axis."""
    ctx = items[0].ctx
    k = min(j.order for j in items)
    m = n_monomials(ctx.nvars, k)
    parts = [j.c[:m] for j in items]
    if axis >= 0:
        axis += 1
    return Jet(ctx, k, np.concatenate(parts, axis=axis))


def einsum(subscripts: str, *operands):
    """``numpy.einsum`` over jets and constant arrays.

    Jet operands are multiplied as truncated series; the result is a jet if
    any operand is.  Operands are folded left to right.
    """
    inputs, output = subscripts.replace(" ", "").split("->")
    subs = inputs.split(",")
    if len(subs) != len(operands):
        raise ValueError("subscripts do not match operand count")
    if not any(isinstance(op, Jet) for op in operands):
        return np.einsum(subscripts, *operands)
    cur_sub, cur = subs[0], operands[0]
    for i in range(1, len(operands)):
        later = "".join(subs[i + 1:]) + output
        nxt_sub, nxt = subs[i], operands[i]
        keep = "".join(ch for ch in dict.fromkeys(cur_sub + nxt_sub) if ch in later)
        cur = _einsum2(cur_sub, cur, nxt_sub, nxt, keep)
        cur_sub = keep
    if cur_sub != output:
        cur = _einsum1(cur_sub, cur, output)
    return cur


def _einsum1(sub, a, out):
    if isinstance(a, Jet):
        return a._wrap(np.einsum(f"Z{sub}->Z{out}", a.c))
    return np.einsum(f"{sub}->{out}", a)


def _einsum2(sa, a, sb, b, out):
    ja, jb = isinstance(a, Jet), isinstance(b, Jet)
    if ja and jb:
        if a.ctx is not b.ctx:
            raise ValueError("jets belong to different contexts")
        k = min(a.order, b.order)
        I, J, S = _mul_table(a.nvars, k)
        terms = _batched_contract("Z" + sa, a.c[I], "Z" + sb, b.c[J], "Z" + out)
        flat = terms.reshape(len(I), -1)
        res = np.asarray(S @ flat).reshape((S.shape[0],) + terms.shape[1:])
        return Jet(a.ctx, k, res)
    if ja:
        return a._wrap(np.einsum(f"Z{sa},{sb}->Z{out}", a.c, b))
    if jb:
        return b._wrap(np.einsum(f"{sa},Z{sb}->Z{out}", a, b.c))
    return np.einsum(f"{sa},{sb}->{out}", a, b)


def _batched_contract(sa, a, sb, b, out):
    """Two-operand einsum as one batched matmul (no repeated index within an operand)."""
    if len(set(sa)) != len(sa) or len(set(sb)) != len(sb):
        return np.einsum(f"{sa},{sb}->{out}", a, b)
    a = _sum_unused(sa, a, sb + out)
    sa = "".join(ch for ch in sa if ch in sb + out)
    b = _sum_unused(sb, b, sa + out)
    sb = "".join(ch for ch in sb if ch in sa + out)
    batch = [ch for ch in sa if ch in sb and ch in out]
    contr = [ch for ch in sa if ch in sb and ch not in out]
    fa = [ch for ch in sa if ch not in sb]
    fb = [ch for ch in sb if ch not in sa]
    size = {**dict(zip(sa, a.shape)), **dict(zip(sb, b.shape))}

    def prod(chs):
        return int(np.prod([size[ch] for ch in chs], dtype=np.int64))

    am = np.transpose(a, [sa.index(ch) for ch in batch + fa + contr])
    am = am.reshape(prod(batch), prod(fa), prod(contr))
    bm = np.transpose(b, [sb.index(ch) for ch in batch + contr + fb])
    bm = bm.reshape(prod(batch), prod(contr), prod(fb))
    res = np.matmul(am, bm).reshape([size[ch] for ch in batch + fa + fb])
    return np.transpose(res, [(batch + fa + fb).index(ch) for ch in out])


def _sum_unused(sub, x, keep):
    axes = tuple(i for i, ch in enumerate(sub) if ch not in keep)
    return x.sum(axis=axes) if axes else x


def matmul(a, b):
    """Product of two matrices (jets or arrays)."""
    return einsum("ij,jk->ik", a, b)


def inv(a: Jet, cond_limit: float = 1e12) -> Jet:
    """Inverse of a jet-valued square matrix.

    Writes ``a = a0 + h`` with ``h`` free of constant terms and solves
    ``a X = I`` one total degree at a time:
    ``X_d = -a0^{-1} [h X]_d``, where only degrees below ``d`` of ``X``
    contribute to the right-hand side.
    """
    a0 = a.c[0]
    if a0.ndim != 2 or a0.shape[0] != a0.shape[1]:
        raise ValueError("inv expects a single square matrix")
    if not np.all(np.isfinite(a0)) or np.linalg.cond(a0) > cond_limit:
        raise NumericDegeneracy("singular matrix")
    a0inv = np.linalg.inv(a0)
    out = np.zeros_like(a.c)
    out[0] = a0inv
    for d, (I, J, R, S) in enumerate(_degree_blocks(a.nvars, a.order)):
        if d == 0:
            continue
        terms = np.matmul(a.c[I], out[J])
        block = np.asarray(S @ terms.reshape(len(I), -1)).reshape((S.shape[0],) + a0.shape)
        out[R] = -np.einsum("ij,Zjk->Zik", a0inv, block)
    return Jet(a.ctx, a.order, out)


@lru_cache(maxsize=None)
def _degree_blocks(nvars: int, order: int):
    """Per result degree d: pairs (i, j) with deg_i >= 1, deg_i + deg_j = d.

    Returns ``(I, J, R, S)`` per degree where ``R`` lists the result
    monomials of degree d and ``S`` scatters pair products onto them.
    """
    mons = monomials(nvars, order)
    table = _rank_table(nvars, order)
    degs = mons.sum(axis=1)
    out = []
    for d in range(order + 1):
        R = np.flatnonzero(degs == d)
        local = {int(r): k for k, r in enumerate(R)}
        I, J, T = [], [], []
        for i in np.flatnonzero((degs >= 1) & (degs <= d)):
            for j in np.flatnonzero(degs == d - degs[i]):
                I.append(i)
                J.append(j)
                T.append(local[table[tuple(mons[i] + mons[j])]])
        S = sparse.csr_matrix((np.ones(len(T)), (T, np.arange(len(T)))), shape=(len(R), len(T)))
        out.append((np.array(I, dtype=np.int64), np.array(J, dtype=np.int64), R, S))
    return out


def symmetrize(t, axes: Sequence[int]):
    """Average over all permutations of the given tensor axes."""
    axes = list(axes)
    perms = list(itertools.permutations(axes))
    nd = t.ndim

    def one(p):
        order = list(range(nd))
        for src, dst in zip(axes, p):
            order[src] = dst
        return t.transpose(order)

    out = one(perms[0])
    for p in perms[1:]:
        out = out + one(p)
    return out * (1.0 / len(perms))


def values(x):
    """Value part of a jet, or the argument itself for plain numbers/arrays."""
    return x.value if isinstance(x, Jet) else x
