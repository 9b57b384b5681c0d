"""Verification suites: axiom systems and identities evaluated on sample points.

Each suite returns an :class:`AxiomReport` holding, for every condition, the
largest scale-normalized residual over the samples.  A residual is the raw
max-norm divided by ``1 + max-norm of the tensors it is built from``, so one
tolerance works across Lagrangians of different size.
"""

from __future__ import annotations

from dataclasses import dataclass, field
from typing import Callable, Iterable, Sequence

import numpy as np
from scipy.linalg import null_space

from . import jets
from .connections import (
    ConnectionGeometry,
    FinslerConnection,
    REGULARITY_TOL,
    apply_small_symmetry,
    apply_symmetry,
    catalogue,
    SymmetryW,
    _as_jet,
)
from .core import PIPELINE_ORDER, BasePoint, PointGeometry, geometry, is_degenerate
from .dsl import LagrangianSpec
from .forms import Form, d, tensor_op, wedge
from .jets import Jet, NumericDegeneracy, einsum

DEFAULT_TOL = 1e-6
COEFFICIENT_TOL = 1e-7
Y_SHELL = (0.5, 2.0)
X_BOX = (-1.0, 1.0)


# ---------------------------------------------------------------------------
# sampling
# ---------------------------------------------------------------------------


@dataclass
class SampleSet:
    points: list
    attempted: int
    rejected: int
    seed: int
    policy: dict = field(default_factory=dict)

    @property
    def rejection_rate(self) -> float:
        return self.rejected / self.attempted if self.attempted else 0.0

    def __len__(self):
        return len(self.points)

    def __iter__(self):
        return iter(self.points)


def _box(x_box, n):
    arr = np.asarray(x_box, dtype=float)
    if arr.shape == (2,):
        return np.tile(arr, (n, 1))
    if arr.shape != (n, 2):
        raise ValueError(f"x_box must be (lo, hi) or n pairs, got shape {arr.shape}")
    return arr


def point_ok(spec: LagrangianSpec, p: BasePoint, tol_deg: float = 1e-10) -> bool:
    """Guard satisfied, Lagrangian evaluable and metric non-degenerate."""
    try:
        if not spec.guard_ok(p.x, p.y):
            return False
        g = PointGeometry(spec, p, order=2, tol_deg=tol_deg).g_raw.value
    except (NumericDegeneracy, ZeroDivisionError, ValueError, OverflowError):
        return False
    return bool(np.all(np.isfinite(g))) and not is_degenerate(g, tol_deg)


def sample_points(spec: LagrangianSpec, count: int, seed: int = 0, x_box=X_BOX,
                  y_shell=Y_SHELL, max_attempts: int | None = None) -> SampleSet:
    """Seeded points: x uniform in a box, y a random direction with |y| uniform in the shell."""
    if count < 1:
        raise ValueError("need at least one sample")
    n = spec.n
    box = _box(x_box, n)
    rng = np.random.default_rng(seed)
    max_attempts = max_attempts or 4 * count + 16
    points, attempted = [], 0
    while len(points) < count and attempted < max_attempts:
        attempted += 1
        x = rng.uniform(box[:, 0], box[:, 1])
        u = rng.standard_normal(n)
        u /= np.linalg.norm(u)
        y = u * rng.uniform(*y_shell)
        p = BasePoint(tuple(float(v) for v in x), tuple(float(v) for v in y))
        if point_ok(spec, p):
            points.append(p)
    policy = {"x_box": box.tolist(), "y_shell": list(map(float, y_shell))}
    return SampleSet(points, attempted, attempted - len(points), seed, policy)


# ---------------------------------------------------------------------------
# reports
# ---------------------------------------------------------------------------


@dataclass
class Condition:
    name: str
    tol: float
    residual: float = 0.0
    worst_point: BasePoint | None = None
    role: str = "axiom"  # axiom | consequence | identity | consistency

    @property
    def passed(self) -> bool:
        return self.residual < self.tol

    def update(self, value: float, p: BasePoint):
        value = float(value)
        if not np.isfinite(value):
            value = float("inf")
        if self.worst_point is None or value > self.residual:
            self.residual = value
            self.worst_point = p

    def to_dict(self) -> dict:
        wp = self.worst_point
        return {
            "residual": _finite(self.residual),
            "tol": self.tol,
            "passed": self.passed,
            "role": self.role,
            "worst_point": None if wp is None else {"x": list(wp.x), "y": list(wp.y)},
        }


def _finite(v: float):
    return v if np.isfinite(v) else None


@dataclass
class AxiomReport:
    suite: str
    connection: str
    tol: float
    conditions: dict = field(default_factory=dict)
    samples: int = 0
    skipped: int = 0
    notes: list = field(default_factory=list)
    extra: dict = field(default_factory=dict)

    @property
    def passed(self) -> bool:
        return all(c.passed for c in self.conditions.values())

    def failing(self, factor: float = 1.0) -> list[str]:
        return [k for k, c in self.conditions.items() if c.residual >= factor * c.tol]

    def __getitem__(self, name) -> Condition:
        return self.conditions[name]

    def add(self, name: str, value: float, p: BasePoint, tol: float | None = None, role: str = "axiom"):
        if name not in self.conditions:
            self.conditions[name] = Condition(name, self.tol if tol is None else tol, role=role)
        self.conditions[name].update(value, p)

    def to_dict(self) -> dict:
        return {
            "suite": self.suite,
            "connection": self.connection,
            "tol": self.tol,
            "passed": self.passed,
            "samples": self.samples,
            "skipped": self.skipped,
            "conditions": {k: c.to_dict() for k, c in self.conditions.items()},
            "notes": list(self.notes),
            "extra": self.extra,
        }


def _mx(x) -> float:
    if isinstance(x, Form):
        return x.max_abs()
    v = np.asarray(jets.values(x), dtype=float)
    return float(np.max(np.abs(v))) if v.size else 0.0


def rel(residual, *constituents) -> float:
    """Scale-normalized residual."""
    scale = max((_mx(c) for c in constituents), default=0.0)
    return _mx(residual) / (1.0 + scale)


def _run(suite: str, conn_name: str, samples, tol: float, order: int, spec: LagrangianSpec,
         per_point: Callable[[PointGeometry, AxiomReport, BasePoint], None]) -> AxiomReport:
    report = AxiomReport(suite, conn_name, tol)
    for p in samples:
        try:
            geom = geometry(spec, p, order)
            per_point(geom, report, p)
            report.samples += 1
        except (NumericDegeneracy, np.linalg.LinAlgError) as exc:
            report.skipped += 1
            if len(report.notes) < 5:
                report.notes.append(f"skipped {p.x}/{p.y}: {exc}")
    if report.skipped:
        report.notes.append(f"{report.skipped} degenerate sample(s) skipped")
    return report


# ---------------------------------------------------------------------------
# shared building blocks
# ---------------------------------------------------------------------------


def _regularity(cg: ConnectionGeometry) -> float:
    """Condition number of the cobasis {omega, omega-bar}; regular iff < 1/REGULARITY_TOL."""
    try:
        ratio = cg.regularity_ratio()
    except (NumericDegeneracy, np.linalg.LinAlgError):
        return float("inf")
    return 1.0 / ratio if ratio > 0 else float("inf")


_REG_TOL = 1.0 / REGULARITY_TOL


def _dot(form: Form, sub: str, *tensors) -> Form:
    return tensor_op(sub, form, *tensors)


def _ydg(cg: ConnectionGeometry) -> Form:
    """y^a Dg_ab."""
    return _dot(cg.Dg, "ab,a->b", cg.geom.y)


def _D2g(cg: ConnectionGeometry) -> Form:
    return cg.geom.cached(("D2g", cg.conn), lambda: cg.D(cg.Dg, "ll"))


def _gT(cg: ConnectionGeometry, form: Form) -> Form:
    """g_ab form^b."""
    return _dot(form, "b,ab->a", cg.geom.g)


def _ygT(cg: ConnectionGeometry, form: Form) -> Form:
    """y^a g_ab form^b."""
    return _dot(form, "b,a,ab->", cg.geom.y, cg.geom.g)


def _contract_dot(a: Form, b: Form) -> Form:
    """a ._wedge b = a^a ^ b_a (or a_a ^ b^a)."""
    return wedge(a, b, "a,a->")


def coefficient_distance(cg: ConnectionGeometry, target: ConnectionGeometry) -> float:
    dA = _mx(cg.A - target.A)
    dB = _mx(cg.B - target.B)
    return max(dA, dB) / (1.0 + max(_mx(target.A), _mx(target.B)))


def _lower_tensor_sym_first_two(t: np.ndarray) -> float:
    return float(np.max(np.abs(t - t.transpose(1, 0, 2)))) if t.size else 0.0


def _total_asym(t: np.ndarray) -> float:
    perms = [(0, 2, 1), (1, 0, 2), (1, 2, 0), (2, 0, 1), (2, 1, 0)]
    return max(float(np.max(np.abs(t - t.transpose(pp)))) for pp in perms)


# ---------------------------------------------------------------------------
# suites
# ---------------------------------------------------------------------------


def check_class_axioms(conn: FinslerConnection, spec: LagrangianSpec, samples, tol: float = DEFAULT_TOL,
              order: int = PIPELINE_ORDER) -> AxiomReport:
    """Conditions (alpha)-(epsilon) and the structure they force."""

    def at(geom, rep, p):
        cg = conn.at(geom)
        g, y = geom.g, geom.y
        rep.add("alpha_regularity", _regularity(cg), p, tol=_REG_TOL)
        gw, gwb = cg.g_omega, cg.g_omega_bar
        rep.add("beta_Psi_wedge_g_omega", rel(_contract_dot(cg.Psi, gw), cg.Psi, gw), p)
        rep.add("gamma_Psi_g_y", rel(_dot(cg.Psi, "a,ab,b->", g, y), cg.Psi, g), p)
        rep.add("delta_Psi_wedge_g_omega_bar", rel(_contract_dot(cg.Psi, gwb), cg.Psi, gwb), p)
        rep.add("epsilon_y_Dg", rel(_ydg(cg), cg.Dg), p)
        # consequences
        Lam = einsum("ad,dbc->abc", g, cg.H - geom.Gamma).value
        scale = 1.0 + _mx(g) * (_mx(cg.H) + _mx(geom.Gamma))
        rep.add("Lambda_symmetric_first_two", _lower_tensor_sym_first_two(Lam) / scale, p,
                role="consequence")
        rep.add("Lambda_y_annihilated", float(np.max(np.abs(np.einsum("abc,a->bc", Lam, y.value)))) / scale,
                p, role="consequence")
        rep.add("strong_regularity", rel(einsum("abc,b->ac", cg.V, y), cg.V), p, role="consequence")
        rep.add("induced_N_is_barthel", rel(cg.N - geom.N_barthel, geom.N_barthel), p,
                tol=COEFFICIENT_TOL, role="consequence")
        Vl = einsum("ad,dbc->abc", g, cg.V).value
        vs = 1.0 + _mx(Vl)
        rep.add("V_symmetric_first_two", _lower_tensor_sym_first_two(Vl) / vs, p, role="consequence")
        rep.add("V_y_annihilated", float(np.max(np.abs(np.einsum("abc,a->bc", Vl, y.value)))) / vs, p,
                role="consequence")

    return _run("class_axioms", conn.name, samples, tol, order, spec, at)


def check_chern(conn: FinslerConnection, spec: LagrangianSpec, samples, tol: float = DEFAULT_TOL,
                order: int = PIPELINE_ORDER) -> AxiomReport:
    """Conditions characterizing the Chern connection, with the (delta)/(delta') link."""
    chern = catalogue("chern")

    def at(geom, rep, p):
        cg = conn.at(geom)
        y = geom.y
        rep.add("alpha_regularity", _regularity(cg), p, tol=_REG_TOL)
        rep.add("beta_T", rel(cg.T, cg.A), p)
        ydg = _ydg(cg)
        rep.add("gamma_y_Dg", rel(ydg, cg.Dg), p)
        dg_wb = wedge(cg.Dg, cg.omega_bar, "ab,b->a")
        rep.add("delta_Dg_wedge_Dy", rel(dg_wb, cg.Dg, cg.omega_bar), p)
        D2g = _D2g(cg)
        yd2g = _dot(D2g, "ab,a->b", y)
        rep.add("delta_prime_y_D2g", rel(yd2g, D2g), p)
        # D(y.Dg) = omega-bar^a ^ Dg_ab + y^a D^2 g_ab holds for every connection
        lhs = cg.D(ydg, "l")
        rhs = wedge(cg.omega_bar, cg.Dg, "a,ab->b") + yd2g
        rep.add("identity_D_of_y_Dg", rel(lhs - rhs, cg.Dg, D2g, cg.omega_bar), p, role="identity")
        dist = coefficient_distance(cg, chern.at(geom))
        rep.extra["distance_to_chern"] = max(rep.extra.get("distance_to_chern", 0.0), dist)

    rep = _run("chern", conn.name, samples, tol, order, spec, at)
    _iff_consistency(rep, ["alpha_regularity", "beta_T", "gamma_y_Dg", "delta_Dg_wedge_Dy"],
                     rep.extra.get("distance_to_chern", 0.0))
    _delta_equivalence(rep)
    return rep


def _iff_consistency(rep: AxiomReport, names: Sequence[str], distance: float):
    """Record whether 'all conditions pass' agrees with 'coefficients equal the target'."""
    axioms_hold = all(rep.conditions[k].passed for k in names if k in rep.conditions)
    is_target = distance < COEFFICIENT_TOL
    rep.extra["axioms_hold"] = axioms_hold
    rep.extra["is_target"] = is_target
    ok = axioms_hold == is_target
    rep.conditions["iff_consistency"] = Condition("iff_consistency", 0.5, 0.0 if ok else 1.0,
                                                  None, "consistency")
    if not ok:
        rep.notes.append("axioms and coefficient comparison disagree")


def _delta_equivalence(rep: AxiomReport):
    """With (gamma) holding, (delta) and (delta') must agree."""
    if not rep.conditions["gamma_y_Dg"].passed:
        rep.extra["delta_equivalence"] = "not applicable: gamma fails"
        return
    a = rep.conditions["delta_Dg_wedge_Dy"].passed
    b = rep.conditions["delta_prime_y_D2g"].passed
    rep.extra["delta_equivalence"] = "agree" if a == b else "disagree"
    if a != b:
        rep.notes.append("delta and delta' disagree although gamma holds")


def check_abate(conn: FinslerConnection, spec: LagrangianSpec, samples, tol: float = DEFAULT_TOL,
                order: int = PIPELINE_ORDER) -> AxiomReport:
    """Dg(X) = 0 for every X with D_X y = 0."""

    def at(geom, rep, p):
        cg = conn.at(geom)
        K = null_space(cg.omega_bar.value)
        dg = cg.Dg.value
        rep.add("Dg_on_kernel_of_Dy", float(np.max(np.abs(dg @ K))) / (1.0 + _mx(dg)) if K.size else 0.0, p)

    return _run("abate", conn.name, samples, tol, order, spec, at)


def check_cartan(conn: FinslerConnection, spec: LagrangianSpec, samples, tol: float = DEFAULT_TOL,
                 order: int = PIPELINE_ORDER) -> AxiomReport:
    """Conditions characterizing the Cartan connection (both options of alpha)."""
    cartan = catalogue("cartan")

    def at(geom, rep, p):
        cg = conn.at(geom)
        g = geom.g
        reg = _regularity(cg)
        ygT = _ygT(cg, cg.T)
        opt1 = max(0.0 if reg < _REG_TOL else float("inf"), rel(ygT, cg.T, g))
        opt2 = max(0.0 if reg < _REG_TOL else float("inf"), rel(einsum("abc,b->ac", cg.V, geom.y), cg.V))
        rep.add("alpha_regular_and_ygT", opt1, p, role="consequence")
        rep.add("alpha_strong_regularity", opt2, p, role="consequence")
        rep.add("alpha", min(opt1, opt2), p)
        rep.add("beta_T_wedge_g_omega", rel(_contract_dot(cg.T, cg.g_omega), cg.T, g), p)
        rep.add("gamma_T_wedge_g_Dy", rel(_contract_dot(cg.T, cg.g_omega_bar), cg.T, cg.g_omega_bar), p)
        rep.add("delta_Dg", rel(cg.Dg, g), p)
        yR = _dot(cg.R, "bc,a,ab->c", geom.y, g)  # y^a g_ab R^b_c
        yRw = wedge(yR, cg.dx, "c,c->")
        rep.add("gamma_prime_y_g_R_wedge_omega", rel(yRw, cg.R, g), p, role="consequence")
        # d(y.g.T) = T ._wedge (g.omega-bar) + y.g.R ._wedge omega + y^a Dg_ab ^ T^b (any connection)
        lhs = d(ygT)
        rhs = (_contract_dot(cg.T, cg.g_omega_bar) + yRw
               + wedge(_ydg(cg), cg.T, "b,b->"))
        rep.add("identity_d_of_ygT", rel(lhs - rhs, cg.T, cg.R, cg.Dg), p, role="identity")
        dist = coefficient_distance(cg, cartan.at(geom))
        rep.extra["distance_to_cartan"] = max(rep.extra.get("distance_to_cartan", 0.0), dist)

    rep = _run("cartan", conn.name, samples, tol, order, spec, at)
    _iff_consistency(rep, ["alpha", "beta_T_wedge_g_omega", "gamma_T_wedge_g_Dy", "delta_Dg"],
                     rep.extra.get("distance_to_cartan", 0.0))
    first_option = rep.conditions["alpha_regular_and_ygT"].passed
    if first_option:
        a = rep.conditions["gamma_T_wedge_g_Dy"].passed
        b = rep.conditions["gamma_prime_y_g_R_wedge_omega"].passed
        rep.extra["gamma_replacement"] = "agree" if a == b else "disagree"
    else:
        rep.extra["gamma_replacement"] = "not applicable: first alpha option fails"
    return rep


@dataclass(frozen=True)
class _ConnectionFromN:
    N_field: Callable

    def __call__(self, geom):
        N = _as_jet(geom, self.N_field(geom))
        return N.gradient(range(geom.n, 2 * geom.n)).transpose(0, 2, 1)  # [a, b, c] = d_b N^a_c


def _barthel(geom: PointGeometry):
    return geom.N_barthel


def _zero3(geom: PointGeometry):
    return np.zeros((geom.n,) * 3)


def connection_from_N(N_field: Callable | None = None) -> FinslerConnection:
    """The strongly regular connection with H^a_bc = dN^a_c/dy^b and V = 0."""
    N_field = N_field or _barthel
    return FinslerConnection(_ConnectionFromN(N_field), _zero3, "bar", "nabla_N")


def check_compatibility(spec: LagrangianSpec, samples, N_field: Callable | None = None,
                        tol: float = DEFAULT_TOL, order: int = PIPELINE_ORDER) -> AxiomReport:
    """Compatibility of (g, N): torsionless N and the structure of nabla^N g."""
    is_barthel = N_field is None
    conn = connection_from_N(N_field)

    def at(geom, rep, p):
        cg = conn.at(geom)
        y = geom.y.value
        H = cg.H
        rep.add("tau", rel(H - H.transpose(0, 2, 1), H), p)
        X = (cg.Lambda * -2.0).value
        Y = (cg.Pi * -2.0).value
        sx, sy = 1.0 + _mx(X), 1.0 + _mx(Y)
        rep.add("X_totally_symmetric", _total_asym(X) / sx, p)
        rep.add("Y_totally_symmetric", _total_asym(Y) / sy, p)
        rep.add("X_y_annihilated", float(np.max(np.abs(np.einsum("abc,a->bc", X, y)))) / sx, p)
        rep.add("Y_y_annihilated", float(np.max(np.abs(np.einsum("abc,a->bc", Y, y)))) / sy, p)
        if is_barthel:
            L, C = geom.landsberg.value, geom.C.value
            rep.add("X_equals_minus_2L", float(np.max(np.abs(X + 2 * L))) / sx, p,
                    tol=COEFFICIENT_TOL, role="consequence")
            rep.add("Y_equals_2C", float(np.max(np.abs(Y - 2 * C))) / sy, p,
                    tol=COEFFICIENT_TOL, role="consequence")

    return _run("compatibility", "barthel" if is_barthel else "custom_N", samples, tol, order, spec, at)


def _R_lower(geom: PointGeometry) -> Jet:
    """R_abc = g_ad R^d_bc of the non-linear curvature."""
    return geom.cached("R_nl_low", lambda: einsum("ad,dbc->abc", geom.g, geom.R_nl))


def check_identities(conn: FinslerConnection, spec: LagrangianSpec, samples, tol: float = DEFAULT_TOL,
                     order: int = PIPELINE_ORDER) -> AxiomReport:
    """Identities satisfied by the class selected by (alpha)-(epsilon)."""

    def at(geom, rep, p):
        cg = conn.at(geom)
        g, y = geom.g, geom.y
        dx, wb = cg.dx, cg.omega_bar
        Rl = _R_lower(geom)
        C, L = geom.C, geom.landsberg
        gPsi = _gT(cg, cg.Psi)
        c_wedge = _dot(wedge(wb, dx, "c,b->cb"), "cb,abc->a", C)
        rep.add("g_Psi_is_C_wedge", rel(gPsi - c_wedge, gPsi, C), p)
        gPsib = _gT(cg, cg.Psi_bar)
        hh = _dot(wedge(dx, dx, "b,c->bc"), "bc,abc->a", Rl) * 0.5
        hv = _dot(wedge(dx, wb, "b,c->bc"), "bc,abc->a", L)
        rep.add("g_Psi_bar_is_R_minus_L", rel(gPsib - (hh - hv), gPsib, Rl, L), p)
        rep.add("Psi_bar_wedge_g_omega", rel(_contract_dot(cg.Psi_bar, cg.g_omega), cg.Psi_bar, g), p)
        tri = _dot(wedge(wedge(wb, dx, "a,b->ab"), dx, "ab,c->abc"), "abc,abc->", Rl) * 0.5
        pb_wb = _contract_dot(cg.Psi_bar, cg.g_omega_bar)
        rep.add("Psi_bar_wedge_g_omega_bar_is_R", rel(pb_wb - tri, pb_wb, Rl), p)
        rep.add("T_bar_wedge_g_omega_bar_is_R", rel(_contract_dot(cg.T_bar, cg.g_omega_bar) - tri, pb_wb, Rl), p)
        rep.add("y_g_T", rel(_ygT(cg, cg.T), cg.T, g), p)
        rep.add("y_g_Psi_bar", rel(_ygT(cg, cg.Psi_bar), cg.Psi_bar, g), p)
        rep.add("y_g_T_bar", rel(_ygT(cg, cg.T_bar), cg.T_bar, g), p)
        D2g = _D2g(cg)
        yD2g = _dot(D2g, "ab,a->b", y)
        rep.add("y_D2g_wedge_omega_bar", rel(wedge(yD2g, wb, "b,b->"), D2g), p)
        DTb = cg.D(cg.T_bar, "u")
        rep.add("y_g_DT_bar_is_R", rel(_ygT(cg, DTb) + tri, DTb, Rl), p)
        c1 = wedge(wedge(wb, cg.Dg, "a,ab->b"), dx, "b,b->")
        c2 = _contract_dot(cg.T_bar, cg.g_omega) * 2.0
        c3 = wedge(yD2g, dx, "b,b->") * -1.0
        c4 = _ygT(cg, cg.D(cg.T, "u")) * 2.0
        chain = max(rel(c1 - c2, c1, c2), rel(c1 - c3, c1, c3), rel(c1 - c4, c1, c4))
        rep.add("chained_Dg_T_bar_D2g_DT", chain, p)
        Rv = Rl.value
        cyc = Rv + Rv.transpose(1, 2, 0) + Rv.transpose(2, 0, 1)
        rs = 1.0 + _mx(Rv)
        rep.add("R_cyclic", float(np.max(np.abs(cyc))) / rs, p, tol=COEFFICIENT_TOL)
        rep.add("R_y_annihilated", float(np.max(np.abs(np.einsum("abc,a->bc", Rv, y.value)))) / rs, p,
                tol=COEFFICIENT_TOL)

    return _run("identities", conn.name, samples, tol, order, spec, at)


def check_symplectic(conn: FinslerConnection, spec: LagrangianSpec, samples,
                         tol: float = DEFAULT_TOL, order: int = PIPELINE_ORDER,
                         closed_tol: float = COEFFICIENT_TOL) -> AxiomReport:
    """Non-degeneracy of Omega versus regularity, and closedness / exactness of Omega."""

    def at(geom, rep, p):
        cg = conn.at(geom)
        v = omega_nondegeneracy(cg)
        rep.add("nondegeneracy_matches_regularity", 0.0 if v["consistent"] else 1.0, p, tol=0.5,
                role="consistency")
        Om = cg.Omega
        dOm = d(Om)
        rep.add("d_Omega", rel(dOm, Om), p, tol=closed_tol)
        dx = cg.dx
        theta = tensor_op("b,a,ab->", dx, geom.y, geom.g)
        rep.add("Omega_minus_d_hilbert", rel(Om - d(theta), Om), p, tol=closed_tol)
        rep.add("identity_d_Omega", rel(cg.omega_identity_residual(), Om, cg.Psi, cg.Psi_bar_first), p,
                role="identity")

    return _run("symplectic", conn.name, samples, tol, order, spec, at)


def omega_nondegeneracy(cg: ConnectionGeometry, tol: float = REGULARITY_TOL) -> dict:
    """Compare the rank verdict for Omega with 'regular and g non-degenerate'."""
    M = cg.Omega.value
    s = np.linalg.svd(M, compute_uv=False)
    omega_ok = bool(s[-1] > tol * s[0]) if s[0] > 0 else False
    regular = cg.is_regular(tol)
    g_ok = not is_degenerate(cg.geom.g_raw.value)
    return {"omega_nondegenerate": omega_ok, "regular": regular, "metric_nondegenerate": g_ok,
            "consistent": omega_ok == (regular and g_ok), "omega_sigma_ratio": float(s[-1] / s[0]) if s[0] else 0.0}


# ---------------------------------------------------------------------------
# uniqueness probes
# ---------------------------------------------------------------------------


def _projector(geom: PointGeometry) -> Jet:
    """P_a^d = delta_a^d - y_a y^d / (2 L): kills y in the lower slot."""
    y = geom.y
    ylow = einsum("ab,b->a", geom.g, y)
    return einsum("a,d->ad", ylow, y) * (-0.5) / geom.L + np.eye(geom.n)


@dataclass(frozen=True)
class ProjectedW:
    """W_abc = P_a^d P_b^e S_dec with S symmetric in (d, e); returned raised."""

    S: tuple

    def lowered(self, geom):
        S = np.asarray(self.S)
        Pm = _projector(geom)
        return einsum("ad,be,dec->abc", Pm, Pm, S)

    def __call__(self, geom):
        return einsum("ra,abc->rbc", geom.ginv, self.lowered(geom))


@dataclass(frozen=True)
class ProjectedSymmetric:
    """A_abc = P_a^d P_b^e P_c^f S_def with S totally symmetric (all indices down)."""

    S: tuple

    def __call__(self, geom):
        Pm = _projector(geom)
        return einsum("ad,be,cf,def->abc", Pm, Pm, Pm, np.asarray(self.S))


def random_w(rng: np.random.Generator, n: int, scale: float = 1.0) -> SymmetryW:
    S = rng.uniform(-scale, scale, (n, n, n))
    S = 0.5 * (S + S.transpose(1, 0, 2))
    return SymmetryW(ProjectedW(_nested(S)))


def random_totally_symmetric(rng: np.random.Generator, n: int, scale: float = 1.0) -> ProjectedSymmetric:
    S = rng.uniform(-scale, scale, (n, n, n))
    S = sum(S.transpose(pp) for pp in [(0, 1, 2), (0, 2, 1), (1, 0, 2), (1, 2, 0), (2, 0, 1), (2, 1, 0)]) / 6
    return ProjectedSymmetric(_nested(S))


def _nested(a: np.ndarray):
    if a.ndim == 1:
        return tuple(float(v) for v in a)
    return tuple(_nested(s) for s in a)


@dataclass(frozen=True)
class _ZeroLower:
    def __call__(self, geom):
        return np.zeros((geom.n,) * 3)


def uniqueness_probe(kind: str, spec: LagrangianSpec, samples, trials: int = 20, seed: int = 0,
                     tol: float = DEFAULT_TOL, order: int = PIPELINE_ORDER, max_points: int = 5,
                     noise_floor: float = 1e-6, factor: float = 10.0) -> dict:
    """Perturb the Chern (or Cartan) connection within the admissible family and count detections."""
    if kind not in ("chern", "cartan"):
        raise ValueError("uniqueness probes exist for 'chern' and 'cartan'")
    points = list(samples)[:max_points]
    rng = np.random.default_rng(seed)
    base = catalogue(kind)
    check = check_chern if kind == "chern" else check_cartan
    axioms = (["alpha_regularity", "beta_T", "gamma_y_Dg", "delta_Dg_wedge_Dy"] if kind == "chern"
              else ["alpha", "beta_T_wedge_g_omega", "gamma_T_wedge_g_Dy", "delta_Dg"])
    n = spec.n
    sanity = check(base, spec, points, tol, order)
    sanity_fail = [k for k in axioms if not sanity.conditions[k].passed]
    detected, redraws = 0, 0
    distribution: dict[str, int] = {}
    shifts: list[str] = []
    for t in range(trials):
        while True:
            if kind == "chern":
                W = random_w(rng, n)
                conn = apply_symmetry(base, W, spec, points)
                shift = "H"
                size = max(_mx(W.field(geometry(spec, q, order))) for q in points)
            else:
                S = random_totally_symmetric(rng, n)
                if t % 2 == 0:
                    conn = apply_small_symmetry(base, S, _ZeroLower(), spec, points)
                    shift = "H"
                else:
                    conn = apply_small_symmetry(base, _ZeroLower(), S, spec, points)
                    shift = "V"
                size = max(_mx(S(geometry(spec, q, order))) for q in points)
            if size > noise_floor:
                break
            redraws += 1
        rep = check(conn, spec, points, tol, order)
        failing = [k for k in axioms if rep.conditions[k].residual >= factor * rep.conditions[k].tol]
        shifts.append(shift)
        if failing:
            detected += 1
        for k in failing:
            distribution[k] = distribution.get(k, 0) + 1
    return {
        "kind": kind,
        "trials": trials,
        "detected": detected,
        "redraws": redraws,
        "failing_conditions": dict(sorted(distribution.items())),
        "shifts": shifts,
        "zero_perturbation_failures": sanity_fail,
        "points": len(points),
        "passed": detected == trials and not sanity_fail,
    }


# ---------------------------------------------------------------------------
# characterization matrix
# ---------------------------------------------------------------------------

CONNECTION_SUITES = {
    "class_axioms": check_class_axioms,
    "chern": check_chern,
    "abate": check_abate,
    "cartan": check_cartan,
    "identities": check_identities,
    "symplectic": check_symplectic,
}
SPEC_SUITES = ("compatibility", "uniqueness_chern", "uniqueness_cartan")
SUITE_IDS = tuple(CONNECTION_SUITES) + SPEC_SUITES

# which suites each notable connection passes when C and L do not vanish
EXPECTED_PATTERN = {
    "chern": {"class_axioms": True, "chern": True, "abate": True, "cartan": False, "identities": True, "symplectic": True},
    "berwald": {"class_axioms": True, "chern": False, "abate": False, "cartan": False, "identities": True,
                "symplectic": True},
    "cartan": {"class_axioms": True, "chern": False, "abate": True, "cartan": True, "identities": True, "symplectic": True},
    "hashiguchi": {"class_axioms": True, "chern": False, "abate": False, "cartan": False, "identities": True,
                   "symplectic": True},
}


def characterization_matrix(spec: LagrangianSpec, samples, kinds: Iterable[str] = ("chern", "berwald", "cartan", "hashiguchi"),
                            suites: Iterable[str] = tuple(CONNECTION_SUITES), tol: float = DEFAULT_TOL,
                            order: int = PIPELINE_ORDER) -> dict:
    """reports[kind][suite] for the notable connections."""
    out = {}
    for k in kinds:
        conn = catalogue(k)
        out[k] = {s: CONNECTION_SUITES[s](conn, spec, samples, tol, order) for s in suites}
    return out


def canonical_agreement(spec: LagrangianSpec, samples, kinds: Iterable[str] = ("chern", "berwald", "cartan", "hashiguchi"),
                        order: int = PIPELINE_ORDER) -> dict:
    """Distance of each canonical metric connection from the Cartan connection."""
    from .connections import canonical_metric_connection

    cartan = catalogue("cartan")
    out = {}
    for k in kinds:
        can = canonical_metric_connection(catalogue(k))
        worst = 0.0
        for p in samples:
            geom = geometry(spec, p, order)
            worst = max(worst, coefficient_distance(can.at(geom), cartan.at(geom)))
        out[k] = worst
    return out
