import numpy as np
import pytest
from hypothesis import given, settings, strategies as st

from finslercheck import dsl, forms, jets
from finslercheck.connections import catalogue, hilbert_form
from finslercheck.core import BasePoint, geometry
from finslercheck.forms import CobasisMap, Form, basis_1form, coordinate_cobasis, d, tensor_op, wedge
from finslercheck.jets import JetContext

import oracles


def e(i, n2=4):
    return basis_1form(i, n2)


# -- algebra ------------------------------------------------------------------------


def test_wedge_of_a_form_with_itself_vanishes():
    assert wedge(e(0), e(0)).max_abs() == 0.0


def test_wedge_anticommutes_on_one_forms():
    a = wedge(e(0), e(2))
    b = wedge(e(2), e(0))
    assert np.array_equal(a.value, -b.value)
    assert a.components() == {((0, 2),): 1.0}
    assert a.evaluate(np.eye(4)[0], np.eye(4)[2]) == pytest.approx(1.0)


def test_wedge_hand_expansion():
    # (dx1 + dy2) ^ dx2 = dx1^dx2 - dx2^dy2
    w = wedge(e(0) + e(3), e(1))
    assert w.components() == {((0, 1),): 1.0, ((1, 3),): -1.0}


@settings(max_examples=40, deadline=None)
@given(st.integers(0, 2**32 - 1))
def test_wedge_graded_commutativity_and_associativity(seed):
    rng = np.random.default_rng(seed)
    n2 = 5

    def rand_form(k):
        c = rng.standard_normal((n2,) * k)
        return Form(forms._alt_array(c, k), k) if k else Form(np.asarray(rng.standard_normal()), 0)

    a, b, c = rand_form(1), rand_form(2), rand_form(1)
    ab, ba = wedge(a, b), wedge(b, a)
    assert np.allclose(ab.value, (-1) ** (1 * 2) * ba.value)
    assert np.allclose(wedge(wedge(a, b), c).value, wedge(a, wedge(b, c)).value)
    assert np.allclose(wedge(a, c).value, -wedge(c, a).value)


def test_wedge_contracts_tensor_indices():
    dx, dy = coordinate_cobasis(2)
    M = np.array([[1.0, 2.0], [3.0, 4.0]])
    omega = tensor_op("b,ab->a", dx, M)  # omega^a = M^a_b dx^b
    w = wedge(omega, dy, "a,a->")
    # sum_a (M^a_b dx^b) ^ dy^a
    want = sum(M[a, b] * wedge(e(b), e(2 + a)).value for a in range(2) for b in range(2))
    assert np.allclose(w.value, want)


def test_interior_product():
    w = wedge(e(0), e(2))
    assert np.allclose(w.interior(np.eye(4)[0]).value, e(2).value)
    assert np.allclose(w.interior(np.eye(4)[2]).value, -e(0).value)


def test_degree_too_high_is_zero():
    w = wedge(wedge(e(0, 2), e(1, 2)), e(0, 2))
    assert w.degree == 3 and w.max_abs() == 0.0


# -- exterior derivative --------------------------------------------------------------------


def _field(text, ctx, n=2):
    return dsl.evaluate(dsl.parse(text, n), ctx.seeds())


def test_d_of_constant_coefficients_vanishes():
    ctx = JetContext([0.1, 0.2, 1.0, 0.3], order=2)
    dx, _ = coordinate_cobasis(2, ctx)
    assert d(dx).max_abs() == 0.0


def test_d_of_y1_dx1():
    ctx = JetContext([0.1, 0.2, 1.0, 0.3], order=2)
    y1 = ctx.seed(2)
    phi = Form(jets.stack([y1, 0.0, 0.0, 0.0]), 1)
    assert np.allclose(d(phi).value, wedge(e(2), e(0)).value)


@settings(max_examples=25, deadline=None)
@given(st.integers(0, 2**32 - 1))
def test_d_squared_vanishes(seed):
    rng = np.random.default_rng(seed)
    ctx = JetContext(list(rng.uniform(-1, 1, 2)) + [1.0, 0.5], order=3)
    comps = [_field(oracles.random_smooth_expression(rng, 2, depth=2), ctx) for _ in range(4)]
    comps = [c if isinstance(c, jets.Jet) else ctx.constant(c) for c in comps]
    phi = Form(jets.stack(comps), 1)
    assert d(d(phi)).max_abs() < 1e-10
    f = Form(comps[0], 0)
    assert d(d(f)).max_abs() < 1e-10


def test_leibniz_rule():
    ctx = JetContext([0.3, -0.1, 0.8, 0.4], order=3)
    f = _field("x1*y2 + y1^2", ctx)
    a = Form(jets.stack([_field("x2", ctx), _field("y1*x1", ctx), 0.0, _field("y2^2", ctx)]), 1)
    b = Form(jets.stack([0.0, _field("x1^2", ctx), _field("y2", ctx), 1.0]), 1)
    lhs = d(wedge(a, b))
    rhs = wedge(d(a), b) - wedge(a, d(b))
    assert np.allclose(lhs.value, rhs.value)
    lhs0 = d(wedge(Form(f, 0), a))
    rhs0 = wedge(d(Form(f, 0)), a) + wedge(Form(f, 0), d(a))
    assert np.allclose(lhs0.value, rhs0.value)


def test_d_matches_finite_differences():
    # omega~^a = dy^a + N^a_b dx^b with Barthel N: compare d(omega~) with an FD curl of N
    spec = dsl.randers_beta(2, 0.3, varying=True)
    p = BasePoint((0.2, -0.1), (0.9, 0.4))
    geom = geometry(spec, p)
    dx, dy = coordinate_cobasis(2, geom.ctx)
    wt = dy + tensor_op("b,ab->a", dx, geom.N)
    dwt = d(wt).value
    z0 = np.array(p.x + p.y)

    def N_at(z, a, b):
        return geometry(spec, BasePoint(tuple(z[:2]), tuple(z[2:])), order=3).N.value[a, b]

    for a in range(2):
        for i in range(4):
            for b in range(2):
                # component [i, b] of d(N^a_j dx^j) is d_i N^a_b - d_b N^a_i (second term only for i < n)
                if i == b:
                    continue
                fd = oracles.fd_derivative(lambda z: N_at(z, a, b), z0, [int(k == i) for k in range(4)])
                other = oracles.fd_derivative(lambda z: N_at(z, a, i), z0,
                                              [int(k == b) for k in range(4)]) if i < 2 else 0.0
                assert dwt[a, i, b] == pytest.approx(fd - other, abs=1e-6)


# -- g-contractions --------------------------------------------------------------------------


def test_hilbert_form_on_euclidean():
    theta = hilbert_form(dsl.euclidean(2), BasePoint((0.0, 0.0), (3.0, 4.0)))
    assert np.allclose(theta.value, [3.0, 4.0, 0.0, 0.0])


def test_g_omega_bar_contracted_with_y_is_dL():
    spec = dsl.randers_beta(2, 0.3, varying=True)
    geom = geometry(spec, BasePoint((0.2, 0.5), (-0.6, 0.8)))
    cg = catalogue("cartan").at(geom)
    ygwb = tensor_op("b,a,ab->", cg.omega_bar, geom.y, geom.g)
    # on vertical vectors y.g.omega-bar = y.g.dy = dL; horizontally both vanish for Barthel N
    dL = geom.dL.value
    adapted = CobasisMap.tilde(geom.N.value).to_adapted(Form(dL, 1))
    assert np.allclose(ygwb.value[2:], dL[2:], atol=1e-9)
    assert np.allclose(adapted[:2], 0.0, atol=1e-9)
    assert np.allclose(ygwb.value, dL, atol=1e-9)


def test_g_omega_with_identity_metric_is_unchanged():
    dx, _ = coordinate_cobasis(3)
    assert np.array_equal(tensor_op("b,ab->a", dx, np.eye(3)).value, dx.value)


# -- cobasis maps ---------------------------------------------------------------------------


def test_cobasis_map_identity_for_zero_n():
    cm = CobasisMap.tilde(np.zeros((2, 2)))
    w = wedge(e(0), e(3))
    assert np.allclose(cm.to_adapted(w), w.value)


def test_dy_in_tilde_cobasis():
    N = np.array([[0.3, -0.2], [1.1, 0.5]])
    cm = CobasisMap.tilde(N)
    comps = cm.to_adapted(e(2))  # dy^1 = omega~^1 - N^1_b omega^b
    assert np.allclose(comps, [-0.3, 0.2, 1.0, 0.0])
    back = cm.from_adapted(comps, 1)
    assert np.allclose(back.value, e(2).value)


def test_bar_equals_tilde_when_q_is_identity():
    N = np.array([[0.3, -0.2], [1.1, 0.5]])
    w = wedge(e(1), e(2))
    assert np.allclose(CobasisMap.bar(N, np.eye(2)).to_adapted(w), CobasisMap.tilde(N).to_adapted(w))


def test_two_form_round_trip_through_bar_cobasis():
    rng = np.random.default_rng(5)
    N = rng.standard_normal((2, 2))
    Q = np.eye(2) + 0.3 * rng.standard_normal((2, 2))
    cm = CobasisMap.bar(N, Q)
    w = wedge(Form(rng.standard_normal(4), 1), Form(rng.standard_normal(4), 1))
    assert np.allclose(cm.from_adapted(cm.to_adapted(w), 2).value, w.value)
