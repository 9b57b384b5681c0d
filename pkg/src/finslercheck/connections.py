"""Finsler connections and the objects built from their connection forms.

A connection is given by coefficient fields ``H^a_bc`` and ``V^a_bc`` so that

    omega^a_b = H^a_bc dx^c + V^a_bc theta^c,

where ``theta`` is ``omega-bar = Dy`` (``basis_tag="bar"``), ``omega-tilde =
dy + N dx`` with ``N^a_c = H^a_bc y^b`` (``"tilde"``), or plain ``dy``
(``"coordinate"``).  Every connection is reduced to the coordinate split
``omega^a_b = A^a_bc dx^c + B^a_bc dy^c`` before anything else is computed, so
forms, D, torsions and curvatures only ever see coordinate components.

Coefficient fields are callables ``PointGeometry -> Jet`` (or constant array).
They must be hashable because per-point results are cached on the geometry.
"""

from __future__ import annotations

from dataclasses import dataclass
from functools import cached_property
from typing import Callable, Sequence

import numpy as np

from . import dsl, jets
from .core import PIPELINE_ORDER, PointGeometry, _point, geometry
from .forms import Form, coordinate_cobasis, d, tensor_op, wedge
from .jets import Jet, NumericDegeneracy, einsum

KINDS = ("chern", "berwald", "cartan", "hashiguchi")
BASIS_TAGS = ("bar", "tilde", "coordinate")
REGULARITY_TOL = 1e-8
STRONG_REGULARITY_TOL = 1e-10

Field = Callable[[PointGeometry], object]


class InadmissibleSymmetry(ValueError):
    """A proposed symmetry shift violates its algebraic constraints."""

    def __init__(self, message: str, violation: float):
        super().__init__(f"{message} (max violation {violation:.3e})")
        self.violation = violation


# ---------------------------------------------------------------------------
# coefficient fields
# ---------------------------------------------------------------------------


def _as_jet(geom: PointGeometry, value) -> Jet:
    if isinstance(value, Jet):
        return value
    return geom.ctx.constant(np.asarray(value, dtype=float))


def _zero3(geom: PointGeometry):
    return np.zeros((geom.n,) * 3)


def _gamma(geom: PointGeometry):
    return geom.Gamma


def _berwald(geom: PointGeometry):
    return geom.berwald


def _cartan(geom: PointGeometry):
    return geom.C_up


@dataclass(frozen=True)
class ExpressionField:
    """A tensor field whose entries are DSL expressions in x and y."""

    n: int
    shape: tuple
    exprs: tuple  # flat, row-major

    @classmethod
    def from_table(cls, table, n: int) -> "ExpressionField":
        arr = np.asarray(table, dtype=object)
        flat = tuple(dsl.parse(str(e), n) if not isinstance(e, (int, float)) else dsl.Num(float(e))
                     for e in arr.ravel())
        return cls(n, arr.shape, flat)

    def __call__(self, geom: PointGeometry):
        vals = [dsl.evaluate(e, geom.z) for e in self.exprs]
        vals = [_as_jet(geom, v) for v in vals]
        return jets.stack(vals).reshape(*self.shape)


@dataclass(frozen=True)
class SumField:
    """Pointwise sum of coefficient fields."""

    parts: tuple

    def __call__(self, geom: PointGeometry):
        total = _as_jet(geom, self.parts[0](geom))
        for f in self.parts[1:]:
            total = total + _as_jet(geom, f(geom))
        return total


@dataclass(frozen=True)
class RaisedField:
    """``g^{ad} F_dbc`` for a field given with all indices down."""

    lowered: Callable

    def __call__(self, geom: PointGeometry):
        return einsum("ad,dbc->abc", geom.ginv, _as_jet(geom, self.lowered(geom)))


@dataclass(frozen=True)
class _CanonicalPart:
    base: "FinslerConnection"
    part: str

    def __call__(self, geom: PointGeometry):
        return self.base.at(geom).canonical_coefficients[self.part]


@dataclass(frozen=True)
class _CoordinatePart:
    base: "FinslerConnection"
    part: str

    def __call__(self, geom: PointGeometry):
        return getattr(self.base.at(geom), self.part)


# ---------------------------------------------------------------------------
# connection objects
# ---------------------------------------------------------------------------


@dataclass(frozen=True)
class FinslerConnection:
    H: Field
    V: Field
    basis_tag: str = "bar"
    name: str = "custom"

    def __post_init__(self):
        if self.basis_tag not in BASIS_TAGS:
            raise ValueError(f"basis_tag must be one of {BASIS_TAGS}, got {self.basis_tag!r}")

    def at(self, geom: PointGeometry) -> "ConnectionGeometry":
        return geom.cached(("connection", self), lambda: ConnectionGeometry(self, geom))

    def evaluate(self, spec, p, order: int = PIPELINE_ORDER) -> "ConnectionGeometry":
        return self.at(geometry(spec, _bp(p), order))


def _bp(p):
    return _point(p)


def catalogue(kind: str) -> FinslerConnection:
    """One of the notable connections of the Lagrangian."""
    table = {
        "chern": (_gamma, _zero3),
        "berwald": (_berwald, _zero3),
        "cartan": (_gamma, _cartan),
        "hashiguchi": (_berwald, _cartan),
    }
    if kind not in table:
        raise ValueError(f"unknown connection kind {kind!r}; expected one of {KINDS}")
    H, V = table[kind]
    return FinslerConnection(H, V, "bar", kind)


def custom(H_table, V_table, n: int, basis_tag: str = "bar", name: str = "custom") -> FinslerConnection:
    """Connection from n x n x n tables of DSL expressions (or numbers)."""
    H = ExpressionField.from_table(H_table, n)
    V = ExpressionField.from_table(V_table, n)
    for f in (H, V):
        if f.shape != (n, n, n):
            raise ValueError(f"coefficient table must have shape {(n, n, n)}, got {f.shape}")
    return FinslerConnection(H, V, basis_tag, name)


def _alt2(t: Form) -> Form:
    """Antisymmetric part over two tensor axes."""
    return (t - Form(t.coeffs.transpose(*_swap01(t)), t.degree)) * 0.5


def _swap01(t: Form):
    axes = list(range(t.tensor_rank + t.degree))
    axes[0], axes[1] = 1, 0
    return axes


class ConnectionGeometry:
    """Everything derived from one connection at one base point."""

    def __init__(self, conn: FinslerConnection, geom: PointGeometry):
        self.conn = conn
        self.geom = geom
        self.n = geom.n
        self.dx, self.dy = coordinate_cobasis(self.n, geom.ctx)

    # -- coefficients ------------------------------------------------------

    @cached_property
    def _coordinate_split(self):
        geom, y = self.geom, self.geom.y
        H = _as_jet(geom, self.conn.H(geom))
        V = _as_jet(geom, self.conn.V(geom))
        tag = self.conn.basis_tag
        if tag == "coordinate":
            return H, V
        N = einsum("abc,b->ac", H, y)
        if tag == "tilde":
            return H + einsum("abd,dc->abc", V, N), V
        eye = np.eye(self.n)
        Q = (einsum("acb,c->ab", V, y) * -1.0) + eye
        Qinv = jets.inv(Q)
        B = einsum("abd,dc->abc", V, Qinv)
        return H + einsum("abd,dc->abc", B, N), B

    @property
    def A(self) -> Jet:
        return self._coordinate_split[0]

    @property
    def B(self) -> Jet:
        return self._coordinate_split[1]

    @cached_property
    def Ay(self) -> Jet:
        return einsum("abc,b->ac", self.A, self.geom.y)

    @cached_property
    def P(self) -> Jet:
        """dy-coefficients of omega-bar: P^a_c = delta^a_c + B^a_bc y^b."""
        return einsum("abc,b->ac", self.B, self.geom.y) + np.eye(self.n)

    @cached_property
    def Q(self) -> Jet:
        """Change of basis omega-tilde = Q omega-bar."""
        return jets.inv(self.P)

    @cached_property
    def N(self) -> Jet:
        """Coefficients of the induced non-linear connection."""
        return jets.matmul(self.Q, self.Ay)

    @cached_property
    def H(self) -> Jet:
        return self.A - einsum("abd,dc->abc", self.B, self.N)

    @cached_property
    def V(self) -> Jet:
        """V against omega-bar."""
        return einsum("abd,dc->abc", self.B, self.Q)

    @property
    def V_tilde(self) -> Jet:
        return self.B

    # -- basic forms -------------------------------------------------------

    @cached_property
    def omega(self) -> Form:
        """Connection 1-forms omega^a_b over {dx, dy}."""
        return Form(jets.concatenate([self.A, self.B], axis=-1), 1)

    @cached_property
    def omega_bar(self) -> Form:
        """omega-bar^a = Dy^a = dy^a + omega^a_b y^b."""
        return Form(jets.concatenate([self.Ay, self.P], axis=-1), 1)

    @cached_property
    def omega_tilde(self) -> Form:
        eye = self.geom.ctx.constant(np.eye(self.n))
        return Form(jets.concatenate([self.N, eye], axis=-1), 1)

    def D(self, form: Form, signature: str) -> Form:
        """Covariant exterior differential; ``signature`` marks each tensor axis 'u' or 'l'."""
        if len(signature) != form.tensor_rank:
            raise ValueError(f"signature {signature!r} does not match tensor rank {form.tensor_rank}")
        out = d(form)
        letters = "abcdefgh"[: form.tensor_rank]
        for i, kind in enumerate(signature):
            if kind == "u":
                sub = letters[:i] + "z" + letters[i + 1:]
                out = out + wedge(self.omega, form, f"{letters[i]}z,{sub}->{letters}")
            elif kind == "l":
                sub = letters[:i] + "z" + letters[i + 1:]
                out = out - wedge(self.omega, form, f"z{letters[i]},{sub}->{letters}")
            else:
                raise ValueError(f"bad index kind {kind!r}")
        return out

    # -- regularity --------------------------------------------------------

    def cobasis_matrix(self) -> np.ndarray:
        n = self.n
        M = np.zeros((2 * n, 2 * n))
        M[:n, :n] = np.eye(n)
        M[n:, :] = self.omega_bar.value
        return M

    def regularity_ratio(self) -> float:
        s = np.linalg.svd(self.cobasis_matrix(), compute_uv=False)
        return float(s[-1] / s[0])

    def is_regular(self, tol: float = REGULARITY_TOL) -> bool:
        try:
            return self.regularity_ratio() > tol
        except (NumericDegeneracy, np.linalg.LinAlgError):
            return False

    def strong_regularity(self) -> dict:
        """Residuals of the equivalent forms of strong regularity."""
        y = self.geom.y.value
        V = self.V.value
        Vt = self.V_tilde.value
        return {
            "V_y": float(np.max(np.abs(np.einsum("abc,b->ac", V, y)))),
            "V_tilde_y": float(np.max(np.abs(np.einsum("abc,b->ac", Vt, y)))),
            "Q_minus_identity": float(np.max(np.abs(self.Q.value - np.eye(self.n)))),
            "bar_minus_tilde": float(np.max(np.abs(self.omega_bar.value - self.omega_tilde.value))),
        }

    def is_strongly_regular(self, tol: float = STRONG_REGULARITY_TOL) -> bool:
        return self.strong_regularity()["V_y"] < tol

    # -- torsion and curvature --------------------------------------------

    @cached_property
    def Dy(self) -> Form:
        return self.D(Form(self.geom.y, 0), "u")

    @cached_property
    def T(self) -> Form:
        """Horizontal torsion T^a = D omega^a = omega^a_b ^ dx^b."""
        return self.D(self.dx, "u")

    @cached_property
    def T_bar(self) -> Form:
        """Vertical torsion D omega-bar."""
        return self.D(self.omega_bar, "u")

    @cached_property
    def R(self) -> Form:
        return d(self.omega) + wedge(self.omega, self.omega, "ac,cb->ab")

    @cached_property
    def R_low(self) -> Form:
        """R_ab = g_ac R^c_b."""
        return tensor_op("cb,ac->ab", self.R, self.geom.g)

    def bianchi_residuals(self) -> dict:
        first = self.D(self.T, "u") - wedge(self.R, self.dx, "ab,b->a")
        vertical = self.D(self.T_bar, "u") - wedge(self.R, self.omega_bar, "ab,b->a")
        second = self.D(self.R, "ul")
        return {"DT": first.max_abs(), "DT_bar": vertical.max_abs(), "DR": second.max_abs()}

    # -- metric differential ----------------------------------------------

    @cached_property
    def Dg(self) -> Form:
        return self.D(Form(self.geom.g_raw, 0), "ll")

    @cached_property
    def Lambda(self) -> Jet:
        n = self.n
        c = self.Dg.coeffs
        Ag, Bg = c[..., :n], c[..., n:]
        return (Ag - einsum("abd,dc->abc", Bg, self.N)) * -0.5

    @cached_property
    def Pi(self) -> Jet:
        n = self.n
        Bg = self.Dg.coeffs[..., n:]
        return einsum("abd,dc->abc", Bg, self.Q) * -0.5

    @cached_property
    def K(self) -> Form:
        """K^a_b = 1/2 g^{ar} Dg_rb, the shift to the canonical metric connection."""
        return tensor_op("rb,ar->ab", self.Dg, self.geom.ginv) * 0.5

    @cached_property
    def canonical_coefficients(self) -> dict:
        n = self.n
        k = self.K.coeffs
        return {"A": self.A + k[..., :n], "B": self.B + k[..., n:]}

    # -- canonical objects -------------------------------------------------

    @cached_property
    def Psi(self) -> Form:
        return self.T + wedge(self.K, self.dx, "ab,b->a")

    @cached_property
    def Ky(self) -> Form:
        return tensor_op("ab,b->a", self.K, self.geom.y)

    @cached_property
    def Psi_bar_first(self) -> Form:
        """The first two terms of the canonical vertical torsion."""
        return self.T_bar + wedge(self.K, self.omega_bar, "ab,b->a")

    @cached_property
    def Psi_bar(self) -> Form:
        return self.Psi_bar_first + self.D(self.Ky, "u") + wedge(self.K, self.Ky, "ab,b->a")

    @cached_property
    def R_tilde(self) -> Form:
        """Canonical curvature with both indices down."""
        return _alt2(self.R_low) - wedge(self.Dg, self.K, "ac,cb->ab") * 0.5

    # -- symplectic-type forms --------------------------------------------

    @cached_property
    def g_omega(self) -> Form:
        return tensor_op("b,ab->a", self.dx, self.geom.g_raw)

    @cached_property
    def g_omega_bar(self) -> Form:
        return tensor_op("b,ab->a", self.omega_bar, self.geom.g_raw)

    @cached_property
    def Omega(self) -> Form:
        """Omega = omega-bar^a ^ g_ab omega^b."""
        return wedge(self.omega_bar, self.g_omega, "a,a->")

    def omega_identity_residual(self) -> float:
        """d Omega - [Psi-bar ^ (g.omega) - Psi ^ (g.omega-bar)], first two Psi-bar terms."""
        rhs = wedge(self.Psi_bar_first, self.g_omega, "a,a->") - wedge(self.Psi, self.g_omega_bar, "a,a->")
        return (d(self.Omega) - rhs).max_abs()


# ---------------------------------------------------------------------------
# module-level operations
# ---------------------------------------------------------------------------


def _cg(conn: FinslerConnection, spec, p, order: int = PIPELINE_ORDER) -> ConnectionGeometry:
    return conn.evaluate(spec, p, order)


def connection_form(conn, spec, p, order: int = PIPELINE_ORDER) -> Form:
    return _cg(conn, spec, p, order).omega


def covariant_exterior_differential(conn, form: Form, signature: str, spec, p,
                                    order: int = PIPELINE_ORDER) -> Form:
    """D of a form field whose jets live on the geometry of (spec, p, order)."""
    return _cg(conn, spec, p, order).D(form, signature)


def dy_form(conn, spec, p, order: int = PIPELINE_ORDER) -> Form:
    return _cg(conn, spec, p, order).omega_bar


def q_matrix(conn, spec, p, order: int = PIPELINE_ORDER) -> np.ndarray:
    return _cg(conn, spec, p, order).Q.value


def is_regular(conn, spec, p, tol: float = REGULARITY_TOL, order: int = PIPELINE_ORDER) -> bool:
    try:
        return _cg(conn, spec, p, order).is_regular(tol)
    except NumericDegeneracy:
        return False


def is_strongly_regular(conn, spec, p, tol: float = STRONG_REGULARITY_TOL,
                        order: int = PIPELINE_ORDER) -> bool:
    return _cg(conn, spec, p, order).is_strongly_regular(tol)


def metric_differential(conn, spec, p, order: int = PIPELINE_ORDER):
    """(Dg, Lambda, Pi) with Dg_ab = -2 Lambda_abc omega^c - 2 Pi_abc omega-bar^c."""
    cg = _cg(conn, spec, p, order)
    return cg.Dg, cg.Lambda.value, cg.Pi.value


def torsions(conn, spec, p, order: int = PIPELINE_ORDER):
    cg = _cg(conn, spec, p, order)
    return cg.T, cg.T_bar


def curvature(conn, spec, p, order: int = PIPELINE_ORDER) -> Form:
    return _cg(conn, spec, p, order).R


def bianchi_residuals(conn, spec, p, order: int = PIPELINE_ORDER) -> dict:
    return _cg(conn, spec, p, order).bianchi_residuals()


def canonical_metric_connection(conn: FinslerConnection) -> FinslerConnection:
    """omega + 1/2 g^{-1} Dg, as a connection in the coordinate split."""
    return FinslerConnection(_CanonicalPart(conn, "A"), _CanonicalPart(conn, "B"),
                             "coordinate", f"canonical({conn.name})")


def canonical_torsions(conn, spec, p, order: int = PIPELINE_ORDER):
    cg = _cg(conn, spec, p, order)
    return cg.Psi, cg.Psi_bar


def canonical_curvature(conn, spec, p, order: int = PIPELINE_ORDER) -> Form:
    return _cg(conn, spec, p, order).R_tilde


def omega_2form(conn, spec, p, order: int = PIPELINE_ORDER, tol: float = REGULARITY_TOL):
    """(Omega, its 2n x 2n matrix, non-degeneracy verdict)."""
    cg = _cg(conn, spec, p, order)
    M = cg.Omega.value
    s = np.linalg.svd(M, compute_uv=False)
    return cg.Omega, M, bool(s[-1] > tol * s[0])


def hilbert_form(spec, p, order: int = PIPELINE_ORDER) -> Form:
    """y^a g_ab dx^b."""
    geom = geometry(spec, _bp(p), order)
    dx, _ = coordinate_cobasis(geom.n, geom.ctx)
    return tensor_op("b,a,ab->", dx, geom.y, geom.g)


def homogeneity_residual(conn, spec, p, scales: Sequence[float] = (0.5, 2.0, 3.0),
                         order: int = PIPELINE_ORDER) -> float:
    """Max deviation of H (degree 0) and V (degree -1) under y -> s y."""
    bp = _bp(p)
    base = _cg(conn, spec, bp, order)
    H0, V0 = base.H.value, base.V.value
    worst = 0.0
    for s in scales:
        q = (bp.x, tuple(s * v for v in bp.y))
        cg = _cg(conn, spec, q, order)
        scale = 1.0 + float(np.max(np.abs(H0))) + float(np.max(np.abs(V0)))
        worst = max(worst,
                    float(np.max(np.abs(cg.H.value - H0))) / scale,
                    float(np.max(np.abs(s * cg.V.value - V0))) / scale)
    return worst


# ---------------------------------------------------------------------------
# symmetries
# ---------------------------------------------------------------------------


@dataclass(frozen=True)
class SymmetryW:
    """W^a_b = W^a_bc omega^c; ``field`` returns W^a_bc (first index up)."""

    field: Field


def w_violations(W: SymmetryW, geom: PointGeometry) -> dict:
    w = _as_jet(geom, W.field(geom)).value
    low = np.einsum("ad,dbc->abc", geom.g.value, w)
    y = geom.y.value
    return {
        "symmetry": float(np.max(np.abs(low - low.transpose(1, 0, 2)))),
        "y_annihilation": float(np.max(np.abs(np.einsum("abc,b->ac", low, y)))),
    }


def validate_w(W: SymmetryW, spec, points, tol: float = 1e-10, order: int = PIPELINE_ORDER,
               amplified: bool = False) -> dict:
    """Worst violations of the W constraints; ``amplified`` drops W_ab y^b = 0."""
    worst = {"symmetry": 0.0, "y_annihilation": 0.0}
    for p in points:
        v = w_violations(W, geometry(spec, _bp(p), order))
        for k in worst:
            worst[k] = max(worst[k], v[k])
    checked = ["symmetry"] if amplified else list(worst)
    return {"ok": max(worst[k] for k in checked) < tol, "max_violation": worst}


def apply_symmetry(conn: FinslerConnection, W: SymmetryW, spec=None, points=(),
                   tol: float = 1e-10, order: int = PIPELINE_ORDER,
                   amplified: bool = False) -> FinslerConnection:
    """omega'^a_b = omega^a_b + W^a_bc omega^c (validated at ``points`` if given).

    An ordinary W has W_ab y^b = 0, so omega-bar is unchanged and the shift
    can be added to H in the connection's own basis.  An amplified W only
    needs W_ab symmetric; then omega-bar moves, and the shift is applied to
    the coordinate coefficients (A' = A + W, B' = B).
    """
    if points:
        rep = validate_w(W, spec, points, tol, order, amplified)
        if not rep["ok"]:
            raise InadmissibleSymmetry("W is not an admissible symmetry", max(rep["max_violation"].values()))
    if amplified:
        return FinslerConnection(SumField((_CoordinatePart(conn, "A"), W.field)),
                                 _CoordinatePart(conn, "B"), "coordinate", f"{conn.name}+W_amplified")
    return FinslerConnection(SumField((conn.H, W.field)), conn.V, conn.basis_tag,
                             f"{conn.name}+W")


def _small_violation(t: np.ndarray, y: np.ndarray) -> float:
    perms = [(0, 2, 1), (1, 0, 2), (1, 2, 0), (2, 0, 1), (2, 1, 0)]
    sym = max(float(np.max(np.abs(t - t.transpose(pp)))) for pp in perms)
    return max(sym, float(np.max(np.abs(np.einsum("abc,a->bc", t, y)))))


def apply_small_symmetry(conn: FinslerConnection, A_low: Field, B_low: Field, spec=None,
                         points=(), tol: float = 1e-10,
                         order: int = PIPELINE_ORDER) -> FinslerConnection:
    """omega' = omega + A^a_bc omega^c + B^a_bc omega-bar^c with totally symmetric,
    y-annihilated A_abc and B_abc (given with all indices down)."""
    if conn.basis_tag != "bar":
        raise ValueError("the small equivalence is defined for connections in the bar basis")
    worst = 0.0
    for p in points:
        geom = geometry(spec, _bp(p), order)
        y = geom.y.value
        for f in (A_low, B_low):
            worst = max(worst, _small_violation(_as_jet(geom, f(geom)).value, y))
    if worst >= tol:
        raise InadmissibleSymmetry("shift is not totally symmetric and y-annihilated", worst)
    return FinslerConnection(SumField((conn.H, RaisedField(A_low))),
                             SumField((conn.V, RaisedField(B_low))), "bar", f"{conn.name}+AB")
