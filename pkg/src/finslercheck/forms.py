"""Exterior calculus on the slit tangent bundle.

A :class:`Form` is a (possibly tensor-valued) k-form on E written in the
coordinate cobasis ``dz = (dx^1..dx^n, dy^1..dy^n)``.  Components are stored
as a dense antisymmetric array over the trailing ``degree`` axes, with the
convention

    phi = 1/k! phi_{i1..ik} dz^i1 ^ ... ^ dz^ik,

so ``(dz^1 ^ dz^2)(e_1, e_2) = 1``.  Leading axes carry tensor indices.
Components may be plain arrays (values at a point) or jets (fields), in
which case :func:`d` is available.
"""

from __future__ import annotations

import itertools
import math
import string
from dataclasses import dataclass

import numpy as np

from . import jets
from .jets import Jet

_FORM_LETTERS = string.ascii_uppercase
_TENSOR_LETTERS = "abcdefghijklmnopqrstuvwxy"


def _perm_sign(perm) -> int:
    perm = list(perm)
    sign = 1
    for i in range(len(perm)):
        while perm[i] != i:
            j = perm[i]
            perm[i], perm[j] = perm[j], perm[i]
            sign = -sign
    return sign


def _alt_array(arr: np.ndarray, naxes: int) -> np.ndarray:
    """Antisymmetrize over the trailing ``naxes`` axes (with the 1/m! weight)."""
    if naxes <= 1:
        return arr
    lead = arr.ndim - naxes
    out = np.zeros_like(arr)
    for perm in itertools.permutations(range(naxes)):
        order = list(range(lead)) + [lead + p for p in perm]
        out += _perm_sign(perm) * arr.transpose(order)
    return out / math.factorial(naxes)


def _map(coeffs, fn):
    if isinstance(coeffs, Jet):
        return coeffs.linear(fn)
    return fn(np.asarray(coeffs))


@dataclass(frozen=True)
class Form:
    coeffs: object  # Jet or ndarray, shape tensor_shape + (2n,) * degree
    degree: int

    @property
    def shape(self) -> tuple[int, ...]:
        return tuple(self.coeffs.shape)

    @property
    def tensor_rank(self) -> int:
        return len(self.shape) - self.degree

    @property
    def tensor_shape(self) -> tuple[int, ...]:
        return self.shape[: self.tensor_rank]

    @property
    def dim(self) -> int:
        if self.degree == 0:
            raise ValueError("0-forms do not record the ambient dimension")
        return self.shape[-1]

    @property
    def value(self) -> np.ndarray:
        return np.asarray(jets.values(self.coeffs), dtype=float)

    @property
    def is_field(self) -> bool:
        return isinstance(self.coeffs, Jet)

    def at_point(self) -> "Form":
        return Form(self.value, self.degree)

    def __add__(self, other: "Form") -> "Form":
        _same_degree(self, other)
        return Form(self.coeffs + other.coeffs, self.degree)

    def __sub__(self, other: "Form") -> "Form":
        _same_degree(self, other)
        return Form(self.coeffs - other.coeffs, self.degree)

    def __neg__(self) -> "Form":
        return Form(-self.coeffs, self.degree)

    def __mul__(self, scalar) -> "Form":
        if isinstance(scalar, (Form,)):
            raise TypeError("use wedge() to multiply forms")
        return Form(self.coeffs * scalar, self.degree)

    __rmul__ = __mul__

    def __getitem__(self, idx) -> "Form":
        if not isinstance(idx, tuple):
            idx = (idx,)
        if len(idx) > self.tensor_rank:
            raise IndexError("indexing into form axes is not allowed; use components()")
        return Form(self.coeffs[idx], self.degree)

    def components(self) -> dict:
        """Values keyed by (tensor index..., increasing form-index tuple)."""
        val = self.value
        out = {}
        tshape = self.tensor_shape
        n2 = val.shape[-1] if self.degree else 0
        for t in itertools.product(*(range(s) for s in tshape)):
            for combo in itertools.combinations(range(n2), self.degree):
                v = float(val[t + combo])
                if v != 0.0:
                    out[t + (combo,)] = v
        return out

    def max_abs(self) -> float:
        v = self.value
        return float(np.max(np.abs(v))) if v.size else 0.0

    def evaluate(self, *vectors) -> np.ndarray:
        """phi(X1, ..., Xk) with tensor axes kept."""
        if len(vectors) != self.degree:
            raise ValueError(f"need {self.degree} vectors")
        v = self.value
        for X in vectors:
            v = np.tensordot(v, np.asarray(X, dtype=float), axes=([self.tensor_rank], [0]))
        return v

    def interior(self, X) -> "Form":
        """Interior product i_X phi (contracts the first form slot)."""
        if self.degree == 0:
            raise ValueError("interior product of a 0-form")
        X = np.asarray(X, dtype=float)
        k = self.degree
        return Form(_map(self.coeffs, lambda c: np.tensordot(c, X, axes=([c.ndim - k], [0]))),
                    k - 1)


def _same_degree(a: Form, b: Form):
    if a.degree != b.degree:
        raise ValueError(f"degree mismatch: {a.degree} vs {b.degree}")


# ---------------------------------------------------------------------------
# constructors
# ---------------------------------------------------------------------------


def zero_form(value) -> Form:
    """A function (0-form); tensor-valued if ``value`` has axes."""
    return Form(value, 0)


def coordinate_cobasis(n: int, ctx=None) -> tuple[Form, Form]:
    """The TM-valued 1-forms ``dx`` and ``dy`` (i.e. ``e_a dx^a`` and ``e_a dy^a``)."""
    dx = np.zeros((n, 2 * n))
    dy = np.zeros((n, 2 * n))
    dx[:, :n] = np.eye(n)
    dy[:, n:] = np.eye(n)
    if ctx is not None:
        return Form(ctx.constant(dx), 1), Form(ctx.constant(dy), 1)
    return Form(dx, 1), Form(dy, 1)


def basis_1form(i: int, n2: int) -> Form:
    c = np.zeros(n2)
    c[i] = 1.0
    return Form(c, 1)


# ---------------------------------------------------------------------------
# algebra
# ---------------------------------------------------------------------------


def _split_subscripts(subscripts: str | None, ra: int, rb: int):
    if subscripts is None:
        sa = _TENSOR_LETTERS[:ra]
        sb = _TENSOR_LETTERS[ra:ra + rb]
        return sa, sb, sa + sb
    ins, out = subscripts.replace(" ", "").split("->")
    sa, sb = ins.split(",")
    if len(sa) != ra or len(sb) != rb:
        raise ValueError(f"subscripts {subscripts!r} do not match tensor ranks ({ra}, {rb})")
    return sa, sb, out


def wedge(a: Form, b: Form, subscripts: str | None = None) -> Form:
    """(a ^ b) with an einsum-style contraction of the tensor indices.

    ``subscripts`` only mentions tensor axes, e.g. ``"ab,b->a"`` for
    ``omega^a_b ^ phi^b``.  Without subscripts the tensor product is taken.
    """
    k, l = a.degree, b.degree
    sa, sb, out = _split_subscripts(subscripts, a.tensor_rank, b.tensor_rank)
    fa = _FORM_LETTERS[:k]
    fb = _FORM_LETTERS[k:k + l]
    if k + l and a.degree and b.degree and a.dim != b.dim:
        raise ValueError("forms live on different spaces")
    if k + l > _n2(a, b):
        shape = _out_shape(a, b, sa, sb, out) + (_n2(a, b),) * (k + l)
        return Form(np.zeros(shape), k + l)
    prod = jets.einsum(f"{sa}{fa},{sb}{fb}->{out}{fa}{fb}", a.coeffs, b.coeffs)
    if k and l:
        factor = math.comb(k + l, k)
        prod = _map(prod, lambda c: factor * _alt_array(c, k + l))
    return Form(prod, k + l)


def _n2(a: Form, b: Form) -> int:
    if a.degree:
        return a.dim
    if b.degree:
        return b.dim
    return 10 ** 9


def _out_shape(a, b, sa, sb, out):
    sizes = dict(zip(sa, a.tensor_shape))
    sizes.update(zip(sb, b.tensor_shape))
    return tuple(sizes[ch] for ch in out)


def tensor_op(subscripts: str, form: Form, *tensors) -> Form:
    """Contract tensor axes of a form with jets/arrays (no wedge), e.g. g . omega."""
    ins, out = subscripts.replace(" ", "").split("->")
    parts = ins.split(",")
    fl = _FORM_LETTERS[: form.degree]
    parts[0] += fl
    coeffs = jets.einsum(",".join(parts) + "->" + out + fl, form.coeffs, *tensors)
    return Form(coeffs, form.degree)


contract = tensor_op


def d(form: Form) -> Form:
    """Exterior derivative, from jet first derivatives of the components."""
    if not isinstance(form.coeffs, Jet):
        raise TypeError("exterior derivative needs a form field (jet components)")
    grad = form.coeffs.gradient()
    k = form.degree
    if k + 1 > grad.shape[-1]:
        return Form(np.zeros(form.tensor_shape + (grad.shape[-1],) * (k + 1)), k + 1)

    def move(c):
        c = np.moveaxis(c, -1, c.ndim - 1 - k)
        return (k + 1) * _alt_array(c, k + 1)

    return Form(grad.linear(move), k + 1)


# ---------------------------------------------------------------------------
# adapted cobases
# ---------------------------------------------------------------------------


class CobasisMap:
    """Change of cobasis ``theta = M dz`` from {dx, dy} to an adapted cobasis.

    ``tilde(N)``: theta = (omega, omega~) with omega~^a = dy^a + N^a_b dx^b.
    ``bar(N, Q)``: theta = (omega, omega-bar), omega-bar = Q^{-1} omega~.
    """

    def __init__(self, matrix: np.ndarray):
        matrix = np.asarray(matrix, dtype=float)
        s = np.linalg.svd(matrix, compute_uv=False)
        if s[-1] <= 1e-12 * s[0]:
            raise np.linalg.LinAlgError("cobasis map is not invertible")
        self.matrix = matrix
        self.inverse = np.linalg.inv(matrix)

    @classmethod
    def tilde(cls, N) -> "CobasisMap":
        N = np.asarray(N, dtype=float)
        n = N.shape[0]
        M = np.eye(2 * n)
        M[n:, :n] = N
        return cls(M)

    @classmethod
    def bar(cls, N, Q) -> "CobasisMap":
        N = np.asarray(N, dtype=float)
        Qi = np.linalg.inv(np.asarray(Q, dtype=float))
        n = N.shape[0]
        M = np.eye(2 * n)
        M[n:, :n] = Qi @ N
        M[n:, n:] = Qi
        return cls(M)

    def to_adapted(self, form: Form) -> np.ndarray:
        """Components over the adapted cobasis (same antisymmetric layout)."""
        return self._apply(form.value, form.degree, self.inverse)

    def from_adapted(self, comps: np.ndarray, degree: int) -> Form:
        return Form(self._apply(np.asarray(comps, dtype=float), degree, self.matrix), degree)

    @staticmethod
    def _apply(v: np.ndarray, degree: int, mat: np.ndarray) -> np.ndarray:
        # phi_i = phi'_j M_ji  =>  phi' = phi M^{-1} on every form axis
        lead = v.ndim - degree
        for ax in range(lead, v.ndim):
            v = np.moveaxis(np.tensordot(v, mat, axes=([ax], [0])), -1, ax)
        return v
