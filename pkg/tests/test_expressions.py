import math

import pytest
from hypothesis import given, settings, strategies as st

from phespace.errors import ParseError, SingularPoint
from phespace.expressions import parse_expression
from phespace.jets import jet_variable


def test_simple_power():
    h = parse_expression("w^2")
    assert h(w=3.0) == 9.0


def test_parameter_binding():
    f = parse_expression("(3/(2*chi0))*ln(w)")
    g = f.bind(chi0=1.5)
    assert g(w=math.e) == pytest.approx(1.0)


def test_parse_error_position():
    with pytest.raises(ParseError) as err:
        parse_expression("ln(")
    assert err.value.position == 3


def test_trailing_junk():
    with pytest.raises(ParseError):
        parse_expression("1 + 2 )")


def test_bad_character():
    with pytest.raises(ParseError):
        parse_expression("1 + $")


def test_precedence_and_unary_minus():
    f = parse_expression("-w^2 + 2*w - 1/2")
    assert f(w=3.0) == pytest.approx(-9 + 6 - 0.5)
    g = parse_expression("2^-2")
    assert g() == pytest.approx(0.25)
    h = parse_expression("2^3^2")  # right-associative
    assert h() == pytest.approx(512.0)


def test_unbound_symbol():
    f = parse_expression("a*w")
    with pytest.raises(KeyError):
        f(w=1.0)


def test_division_by_zero():
    f = parse_expression("1/w")
    with pytest.raises(SingularPoint):
        f(w=0.0)


def test_jet_evaluation_matches_float():
    f = parse_expression("exp(q/4)*sqrt(x) - y^3/x + 1.5")
    pt = (0.7, 0.0, 1.8, -0.4)
    jets = {n: jet_variable(pt, a, order=3) for a, n in zip(range(4), "qpxy")}
    jf = f(**jets)
    assert jf.value == pytest.approx(f(q=0.7, p=0.0, x=1.8, y=-0.4), abs=1e-14)
    # first derivative in x: d/dx [exp(q/4) sqrt(x)] + y^3/x^2
    expected = math.exp(0.7 / 4) * 0.5 / math.sqrt(1.8) + (-0.4) ** 3 / 1.8**2
    assert jf.partial((0, 0, 1, 0)) == pytest.approx(expected, abs=1e-12)


def test_scientific_notation():
    f = parse_expression("1.5e2 + 2E-1")
    assert f() == pytest.approx(150.2)


@given(
    a=st.floats(min_value=-5, max_value=5, allow_nan=False),
    b=st.floats(min_value=0.1, max_value=5, allow_nan=False),
)
@settings(max_examples=50, deadline=None)
def test_random_affine_roundtrip(a, b):
    f = parse_expression("a*w + ln(b) - w/b")
    assert f(a=a, b=b, w=2.0) == pytest.approx(a * 2.0 + math.log(b) - 2.0 / b, rel=1e-12)
