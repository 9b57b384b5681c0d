import math

import numpy as np
import pytest
from hypothesis import given, settings, strategies as st

from finslercheck import dsl
from finslercheck.dsl import BinOp, Neg, Num, ParseError, Pow, Sqrt, Var
from finslercheck.jets import JetContext, NumericDegeneracy


def ev(text, x, y, n=2):
    return dsl.evaluate(dsl.parse(text, n), [*x, *y])


# -- parsing ----------------------------------------------------------------------


@pytest.mark.parametrize("text,want", [
    ("1 + 2 * 3", 7.0),
    ("(1 + 2) * 3", 9.0),
    ("2 ^ 3 ^ 1", None),  # exponent must be a literal, so this is rejected below
    ("-2^2", -4.0),
    ("(-2)^2", 4.0),
    ("8 / 4 / 2", 1.0),
    ("1 - 2 - 3", -4.0),
    ("2*-3", -6.0),
    ("4^-0.5", 0.5),
    ("4^(-1)", 0.25),
    ("1.5e1 + .5", 15.5),
    ("sqrt(9) + +1", 4.0),
])
def test_precedence_and_associativity(text, want):
    if want is None:
        with pytest.raises(ParseError):
            dsl.parse(text, 1)
        return
    assert ev(text, [0, 0], [1, 0]) == pytest.approx(want)


def test_variables_are_one_based_x_then_y():
    assert ev("x1 + 10*x2 + 100*y1 + 1000*y2", [1, 2], [3, 4]) == pytest.approx(4321)


@pytest.mark.parametrize("text,offset", [
    ("y1 +", 4),
    ("y1 + * 2", 5),
    ("(y1", 3),
    ("y3", 0),
    ("z1", 0),
    ("y1 $ 2", 3),
    ("sqrt y1", 5),
    ("y1^y2", 3),
    ("y1 y2", 3),
])
def test_parse_errors_report_offset(text, offset):
    with pytest.raises(ParseError) as err:
        dsl.parse(text, 2)
    assert err.value.offset == offset


def test_empty_expression():
    with pytest.raises(ParseError):
        dsl.parse("  ", 2)


def _ast(depth):
    leaves = st.one_of(
        st.floats(0, 100, allow_nan=False, allow_infinity=False).map(Num),
        st.builds(Var, st.sampled_from("xy"), st.integers(1, 3)),
    )
    if depth == 0:
        return leaves
    sub = _ast(depth - 1)
    return st.one_of(
        leaves,
        st.builds(Neg, sub),
        st.builds(BinOp, st.sampled_from("+-*/"), sub, sub),
        st.builds(Pow, sub, st.one_of(st.integers(-3, 4), st.sampled_from([0.5, -1.5, 2.25]))),
        st.builds(Sqrt, sub),
    )


@settings(max_examples=200, deadline=None)
@given(_ast(3))
def test_print_parse_round_trip(node):
    assert dsl.parse(dsl.to_text(node), 3) == node


# -- evaluation -------------------------------------------------------------------


def test_float_and_jet_evaluation_agree():
    text = "sqrt(y1^2 + 2*y2^2) / (1 + x1^2) + y1*y2^-1"
    x, y = [0.3, -0.2], [1.1, 0.7]
    ctx = JetContext([*x, *y], order=2)
    jet = dsl.evaluate(dsl.parse(text, 2), ctx.seeds())
    assert jet.value == pytest.approx(ev(text, x, y))


@pytest.mark.parametrize("text", ["1/(y1 - y1)", "sqrt(-y1^2)", "(y1 - 1)^-1", "(x1 - 1)^0.5"])
def test_domain_errors_raise_numeric_degeneracy(text):
    with pytest.raises(NumericDegeneracy):
        ev(text, [1.0, 0.0], [1.0, 0.0])


def test_assignment_length_checked():
    with pytest.raises(ValueError):
        dsl.evaluate(dsl.parse("y2", 2), [0.0, 1.0])


# -- builtins -----------------------------------------------------------------------


def test_euclidean_value():
    spec = dsl.euclidean(3)
    assert spec.value([0, 0, 0], [1, 2, 2]) == pytest.approx(4.5)


def test_riemannian_validation():
    with pytest.raises(ValueError):
        dsl.riemannian([[1, 0.1], [0.2, 1]])
    with pytest.raises(ValueError):
        dsl.riemannian([[1, 0], [0, "y1^2"]])
    spec = dsl.riemannian([[1, 0], [0, "x1^2 + 1"]])
    assert spec.value([2, 0], [1, 1]) == pytest.approx(0.5 * (1 + 5))


def test_randers_closed_form():
    spec = dsl.randers([[2, 0], [0, 1]], [0.3, -0.1])
    y = np.array([0.4, 1.3])
    F = math.sqrt(2 * y[0] ** 2 + y[1] ** 2) + 0.3 * y[0] - 0.1 * y[1]
    assert spec.value([0, 0], y) == pytest.approx(0.5 * F * F)


def test_randers_rejects_large_drift():
    with pytest.raises(ValueError):
        dsl.randers(np.eye(2), [0.8, 0.8])
    with pytest.raises(ValueError):
        dsl.randers_beta(2, 1.0)


def test_varying_randers_guard():
    spec = dsl.randers_beta(3, 0.6, varying=True)
    assert spec.guard is not None
    assert spec.guard_ok([0.5, -0.5, 0.2], [1, 0, 0])


@pytest.mark.parametrize("spec", [
    dsl.euclidean(2),
    dsl.randers_beta(2, 0.3, varying=True),
    dsl.randers_beta(3, 0.6),
    dsl.quartic_minkowski([1.0, 2.0], cross=0.5),
])
def test_builtins_are_two_homogeneous(spec):
    rng = np.random.default_rng(0)
    x = rng.uniform(-1, 1, spec.n)
    y = rng.uniform(0.3, 1.0, spec.n)
    res = dsl.check_homogeneity(spec, x, y, metric=True)
    assert res["max"] < 1e-12


def test_homogeneity_detects_violation():
    spec = dsl.LagrangianSpec.from_text("y1^2 + y2^3", 2)
    assert dsl.check_homogeneity(spec, [0, 0], [1.0, 1.0])["lagrangian"] > 0.1
