"""Point-wise Finsler objects computed from a Lagrangian.

Everything is computed once per base point as a jet: the Lagrangian is
expanded to order K in all 2n variables and each derived field (metric,
spray, non-linear connection, Christoffel symbols, ...) is obtained by jet
arithmetic and jet differentiation.  Each derivative costs one order, so
e.g. ``N`` carries order K-3 and the Landsberg tensor order K-5.

Index conventions: ``g[a, b]``, ``C[a, b, c]``, ``N[a, c] = N^a_c``,
``Gamma[a, b, c] = Gamma^a_bc``, ``berwald[a, b, c] = G^a_bc``,
``R_nl[a, b, c] = R^a_bc``.
"""

from __future__ import annotations

import itertools
from dataclasses import dataclass
from functools import cached_property, lru_cache
from typing import Callable

import numpy as np

from . import jets
from .dsl import LagrangianSpec
from .jets import Jet, JetContext, NumericDegeneracy, einsum

#: default jet order for geometric pipelines
PIPELINE_ORDER = 6
DEGENERACY_TOL = 1e-10


class DegenerateMetric(NumericDegeneracy):
    pass


@dataclass(frozen=True)
class BasePoint:
    x: tuple
    y: tuple

    def __post_init__(self):
        object.__setattr__(self, "x", tuple(float(v) for v in self.x))
        object.__setattr__(self, "y", tuple(float(v) for v in self.y))
        if len(self.x) != len(self.y):
            raise ValueError("x and y must have the same length")
        if not any(self.y):
            raise ValueError("y must be nonzero on the slit tangent bundle")

    @property
    def n(self) -> int:
        return len(self.x)

    def as_array(self) -> np.ndarray:
        return np.array(self.x + self.y)


@dataclass
class MetricTensor:
    g: np.ndarray
    signature: tuple[int, int]
    det: float


@dataclass
class Tensor3:
    data: np.ndarray
    symmetry: str = "none"  # none / last-two / first-two / total
    asymmetry: float = 0.0


@dataclass
class SprayData:
    G: np.ndarray
    N: np.ndarray


def _point(p) -> BasePoint:
    if isinstance(p, BasePoint):
        return p
    x, y = p
    return BasePoint(tuple(x), tuple(y))


def is_degenerate(g: np.ndarray, tol: float = DEGENERACY_TOL) -> bool:
    scale = float(np.max(np.sum(np.abs(g), axis=1)))
    if scale == 0 or not np.all(np.isfinite(g)):
        return True
    smin = float(np.linalg.svd(g, compute_uv=False)[-1])
    return smin < tol * scale


def _sym_residual(arr: np.ndarray, axes) -> float:
    worst = 0.0
    for perm in itertools.permutations(axes):
        order = list(range(arr.ndim))
        for src, dst in zip(axes, perm):
            order[src] = dst
        worst = max(worst, float(np.max(np.abs(arr - arr.transpose(order)))) if arr.size else 0.0)
    return worst


class PointGeometry:
    """Jets of all first-layer Finsler objects at one base point.

    ``N_field`` optionally replaces the Barthel non-linear connection used by
    the horizontal derivatives (a callable ``geom -> Jet[n, n]``).
    """

    def __init__(self, spec: LagrangianSpec, p, order: int = PIPELINE_ORDER,
                 tol_deg: float = DEGENERACY_TOL):
        p = _point(p)
        if p.n != spec.n:
            raise ValueError(f"point has dimension {p.n}, Lagrangian has {spec.n}")
        self.spec = spec
        self.p = p
        self.n = spec.n
        self.order = order
        self.tol_deg = tol_deg
        self.ctx = JetContext(p.as_array(), order=order)
        self._cache: dict = {}

    # -- raw expansions ----------------------------------------------------

    @cached_property
    def z(self) -> list[Jet]:
        return self.ctx.seeds()

    @cached_property
    def y(self) -> Jet:
        """The Liouville field y^a as a jet."""
        return jets.stack(self.z[self.n:])

    @cached_property
    def L(self) -> Jet:
        return self.spec.jet(self.ctx)

    @cached_property
    def dL(self) -> Jet:
        return self.L.gradient()

    @cached_property
    def g_raw(self) -> Jet:
        n = self.n
        h = self.dL[n:].gradient(range(n, 2 * n))
        return jets.symmetrize(h, (0, 1))

    @cached_property
    def metric_asymmetry(self) -> float:
        n = self.n
        h = self.dL[n:].gradient(range(n, 2 * n)).value
        return float(np.max(np.abs(h - h.T)))

    @cached_property
    def g(self) -> Jet:
        g0 = self.g_raw.value
        if is_degenerate(g0, self.tol_deg):
            raise DegenerateMetric(f"degenerate metric at {self.p}")
        return self.g_raw

    @cached_property
    def ginv(self) -> Jet:
        return jets.inv(self.g)

    @cached_property
    def C(self) -> Jet:
        n = self.n
        c = self.g.gradient(range(n, 2 * n)) * 0.5
        return jets.symmetrize(c, (0, 1, 2))

    @cached_property
    def C_up(self) -> Jet:
        return einsum("ad,dbc->abc", self.ginv, self.C)

    # -- spray and non-linear connection -----------------------------------

    @cached_property
    def G(self) -> Jet:
        n = self.n
        Lx = self.dL[:n]
        Lxy = self.dL[n:].gradient(range(n))  # [d, c] = d^2 L / dy^d dx^c
        rhs = einsum("dc,c->d", Lxy, self.y) - Lx
        return einsum("ad,d->a", self.ginv, rhs) * 0.5

    @cached_property
    def N_barthel(self) -> Jet:
        return self.G.gradient(range(self.n, 2 * self.n))

    @property
    def N(self) -> Jet:
        return self.N_barthel

    def delta(self, f: Jet, N: Jet | None = None) -> Jet:
        """Horizontal derivatives delta_b f = d_x^b f - N^c_b d_y^c f (b appended last)."""
        n = self.n
        N = self.N if N is None else N
        grad = f.gradient()
        dx = grad[(Ellipsis, slice(0, n))]
        dy = grad[(Ellipsis, slice(n, 2 * n))]
        k = f.ndim
        letters = "pqrstuvw"[:k]
        return dx - einsum(f"{letters}c,cb->{letters}b", dy, N)

    @cached_property
    def berwald(self) -> Jet:
        n = self.n
        gb = self.N_barthel.gradient(range(n, 2 * n)).transpose(0, 2, 1)  # [a, b, c] = d_b N^a_c
        return jets.symmetrize(gb, (1, 2))

    @cached_property
    def berwald3(self) -> Jet:
        n = self.n
        return self.berwald.gradient(range(n, 2 * n))

    @cached_property
    def delta_g(self) -> Jet:
        return self.delta(self.g)  # [n, c, b] = delta_b g_nc

    @cached_property
    def Gamma(self) -> Jet:
        dg = self.delta_g
        # Gamma_nbc = 1/2 (delta_b g_nc + delta_c g_nb - delta_n g_bc)
        low = (dg.transpose(0, 2, 1) + dg - dg.transpose(2, 0, 1)) * 0.5
        # low[n, b, c] from dg[n, c, b] -> dg.transpose(0,2,1)[n,b,c]=dg[n,c,b]=delta_b g_nc
        gam = einsum("an,nbc->abc", self.ginv, low)
        return jets.symmetrize(gam, (1, 2))

    @cached_property
    def gamma_formal(self) -> Jet:
        n = self.n
        dg = self.g.gradient(range(n))  # [n, c, b] = d_x^b g_nc
        low = (dg.transpose(0, 2, 1) + dg - dg.transpose(2, 0, 1)) * 0.5
        gam = einsum("an,nbc->abc", self.ginv, low)
        return jets.symmetrize(gam, (1, 2))

    @cached_property
    def landsberg(self) -> Jet:
        yl = einsum("r,rd->d", self.y, self.g)
        L = einsum("d,dabc->abc", yl, self.berwald3) * -0.5
        return jets.symmetrize(L, (0, 1, 2))

    @cached_property
    def landsberg_up(self) -> Jet:
        return einsum("ad,dbc->abc", self.ginv, self.landsberg)

    @cached_property
    def R_nl(self) -> Jet:
        dN = self.delta(self.N)  # [a, c, b] = delta_b N^a_c
        return dN.transpose(0, 2, 1) - dN

    def nonlinear_torsion(self, N: Jet | None = None) -> Jet:
        n = self.n
        N = self.N if N is None else N
        Nb = N.gradient(range(n, 2 * n)).transpose(0, 2, 1)  # [a, b, c] = d_b N^a_c
        return Nb.transpose(0, 2, 1) - Nb

    def cached(self, key, build):
        if key not in self._cache:
            self._cache[key] = build()
        return self._cache[key]


def geometry(spec: LagrangianSpec, p, order: int = PIPELINE_ORDER) -> PointGeometry:
    """Shared (cached) geometry for a Lagrangian at a base point."""
    return _cached_geometry(spec, _point(p), int(order))


@lru_cache(maxsize=128)
def _cached_geometry(spec: LagrangianSpec, p: BasePoint, order: int) -> PointGeometry:
    return PointGeometry(spec, p, order)


def _geom(spec, p, order=None) -> PointGeometry:
    return geometry(spec, _point(p), order or PIPELINE_ORDER)


# ---------------------------------------------------------------------------
# operations
# ---------------------------------------------------------------------------


def metric(spec: LagrangianSpec, p, order: int | None = None) -> MetricTensor:
    geom = _geom(spec, p, order)
    g = geom.g.value
    eig = np.linalg.eigvalsh(g)
    return MetricTensor(g, (int(np.sum(eig > 0)), int(np.sum(eig < 0))), float(np.linalg.det(g)))


def inverse_metric(g, tol: float = DEGENERACY_TOL) -> np.ndarray:
    g = np.asarray(g.g if isinstance(g, MetricTensor) else g, dtype=float)
    if is_degenerate(g, tol):
        raise DegenerateMetric("cannot invert a degenerate metric")
    return np.linalg.inv(g)


def cartan_torsion(spec, p, order=None) -> Tensor3:
    geom = _geom(spec, p, order)
    n = geom.n
    raw = geom.g_raw.gradient(range(n, 2 * n)).value * 0.5
    return Tensor3(geom.C.value, "total", _sym_residual(raw, (0, 1, 2)))


def spray(spec, p, order=None) -> SprayData:
    geom = _geom(spec, p, order)
    return SprayData(geom.G.value, geom.N.value)


def nonlinear_torsion(spec, p, N_field: Callable[[PointGeometry], Jet] | None = None,
                      order=None) -> Tensor3:
    """tau^a_bc = N^a_cb - N^a_bc with N^a_bc = dN^a_c/dy^b."""
    geom = _geom(spec, p, order)
    N = None if N_field is None else N_field(geom)
    return Tensor3(geom.nonlinear_torsion(N).value, "none")


def delta_derivative(fn, spec, p, b: int, order=None) -> float:
    """delta f / delta x^b for a scalar field ``fn(geom) -> Jet`` (Barthel N)."""
    geom = _geom(spec, p, order)
    f = fn(geom) if callable(fn) else fn
    if not isinstance(f, Jet):
        return 0.0
    return float(geom.delta(f).value[..., b])


def formal_christoffel(spec, p, order=None) -> Tensor3:
    geom = _geom(spec, p, order)
    return Tensor3(geom.gamma_formal.value, "last-two")


def horizontal_christoffel(spec, p, order=None) -> Tensor3:
    geom = _geom(spec, p, order)
    return Tensor3(geom.Gamma.value, "last-two")


def berwald_coefficients(spec, p, order=None) -> tuple[Tensor3, np.ndarray]:
    geom = _geom(spec, p, order)
    n = geom.n
    raw = geom.N.gradient(range(n, 2 * n)).value
    return (Tensor3(geom.berwald.value, "last-two", _sym_residual(raw, (1, 2))),
            geom.berwald3.value)


def landsberg(spec, p, order=None) -> Tensor3:
    geom = _geom(spec, p, order)
    yl = geom.y.value @ geom.g.value
    raw = -0.5 * np.einsum("d,dabc->abc", yl, geom.berwald3.value)
    return Tensor3(geom.landsberg.value, "total", _sym_residual(raw, (0, 1, 2)))


def nonlinear_curvature(spec, p, order=None) -> Tensor3:
    geom = _geom(spec, p, order)
    return Tensor3(geom.R_nl.value, "last-two-antisymmetric")


def landsberg_identity_residual(spec, p, order=None) -> float:
    """max |G^a_bc - Gamma^a_bc - L^a_bc|."""
    geom = _geom(spec, p, order)
    diff = geom.berwald.value - geom.Gamma.value - geom.landsberg_up.value
    return float(np.max(np.abs(diff)))


def euler_residuals(spec, p, order=None) -> dict[str, float]:
    """Homogeneity (Euler) relations at one point."""
    geom = _geom(spec, p, order)
    n = geom.n
    y = geom.y.value
    L = geom.L.value
    Ly = geom.dL.value[n:]
    C = geom.C.value
    N = geom.N.value
    G = geom.G.value

    def rel(a, scale):
        return float(np.max(np.abs(a))) / (1 + scale)

    return {
        "y.dL/dy = 2L": rel(y @ Ly - 2 * L, abs(L)),
        "C.y = 0": rel(C @ y, float(np.max(np.abs(C)))),
        "L.y = 0": rel(geom.landsberg.value @ y, float(np.max(np.abs(geom.landsberg.value)))),
        "N.y = 2G": rel(N @ y - 2 * G, float(np.max(np.abs(N)))),
        "G^a_bc y^c = N^a_b": rel(geom.berwald.value @ y - N, float(np.max(np.abs(N)))),
    }
