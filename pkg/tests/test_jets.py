import math

import numpy as np
import pytest
from hypothesis import given, settings, strategies as st

from phespace.errors import SingularPoint
from phespace.jets import (
    Jet,
    compose_series,
    fd_oracle,
    jet_variable,
    jexp,
    jln,
    jpow,
    jsqrt,
    space,
)

PT = (1.0, 2.0, 3.0, 4.0)


def test_variable_jet_identity():
    x = jet_variable(PT, 2, order=2)
    assert x.value == 3.0
    assert x.partial((0, 0, 1, 0)) == 1.0
    assert x.partial((0, 0, 2, 0)) == 0.0
    assert x.partial((1, 0, 1, 0)) == 0.0


def test_cube_second_derivative():
    x = jet_variable(PT, 2, order=2)
    c = x * x * x
    # Taylor coefficient of x^2 term is 9, derivative value is 6*x = 18
    assert c.coeffs[c.space.index[(0, 0, 2, 0)]] == pytest.approx(9.0)
    assert c.partial((0, 0, 2, 0)) == pytest.approx(18.0)


def test_product_rule_mixed_coefficient():
    x = jet_variable(PT, 2, order=2)
    y = jet_variable(PT, 3, order=2)
    assert (x * y).partial((0, 0, 1, 1)) == pytest.approx(1.0)


def test_reciprocal_geometric_series():
    u = jet_variable((2.0,), 0, order=3)
    r = 1.0 / u
    expected = [0.5, -0.25, 0.125, -0.0625]
    np.testing.assert_allclose(r.coeffs, expected, rtol=1e-15)


def test_sqrt_first_order():
    w = jet_variable((4.0,), 0, order=1)
    s = jsqrt(w)
    assert s.value == pytest.approx(2.0)
    assert s.partial((1,)) == pytest.approx(0.25)


def test_exp_ln_round_trip():
    x = jet_variable((1.7,), 0, order=4)
    back = jexp(jln(x))
    np.testing.assert_allclose(back.coeffs, x.coeffs, atol=1e-14)


def test_integer_powers_match_repeated_multiplication():
    x = jet_variable(PT, 2, order=4)
    np.testing.assert_allclose((x**4).coeffs, (x * x * x * x).coeffs, rtol=1e-14)
    np.testing.assert_allclose((x**-2).coeffs, (1.0 / (x * x)).coeffs, rtol=1e-13)


def test_fractional_power_matches_exp_ln():
    x = jet_variable((1.3,), 0, order=5)
    direct = jpow(x, 1.5)
    via_log = jexp(jln(x) * 1.5)
    np.testing.assert_allclose(direct.coeffs, via_log.coeffs, rtol=1e-12, atol=1e-14)


def test_polynomial_coefficients_exact():
    # degree <= order polynomials are represented exactly
    q, p, x, y = (jet_variable(PT, a, order=5) for a in range(4))
    f = 2.0 * q * q * y - p * x * x + 0.5 * y**3 - 7.0
    assert f.partial((2, 0, 0, 1)) == pytest.approx(4.0, abs=1e-14)
    assert f.partial((0, 1, 2, 0)) == pytest.approx(-2.0, abs=1e-14)
    assert f.partial((0, 0, 0, 3)) == pytest.approx(3.0, abs=1e-14)
    assert f.partial((0, 0, 0, 0)) == pytest.approx(
        2 * 1 * 4 - 2 * 9 + 0.5 * 64 - 7, abs=1e-12
    )


def test_division_singular_tolerance():
    x = jet_variable(PT, 2, order=2)
    tiny = x * 0.0 + 1e-14
    with pytest.raises(SingularPoint):
        x / tiny


def test_ln_sqrt_domain_errors():
    bad = jet_variable((-1.0,), 0, order=2)
    with pytest.raises(SingularPoint):
        jln(bad)
    with pytest.raises(SingularPoint):
        jsqrt(bad)
    with pytest.raises(SingularPoint):
        jpow(bad, 0.5)


def test_non_finite_coefficients_rejected():
    sp = space(1, 2)
    with pytest.raises(SingularPoint):
        Jet(sp, np.array([1.0, np.nan, 0.0]))


def test_base_point_mismatch_rejected():
    a = jet_variable((1.0, 2.0, 3.0, 4.0), 0, order=2)
    b = jet_variable((1.0, 2.0, 3.0, 5.0), 0, order=2)
    with pytest.raises(ValueError):
        a + b


def test_diff_and_antideriv_round_trip():
    x = jet_variable(PT, 2, order=4)
    y = jet_variable(PT, 3, order=4)
    f = x * x * y + y * y
    g = f.diff(2)
    assert g.order == 3
    assert g.value == pytest.approx(2 * 3.0 * 4.0)
    # antiderivative along x of f.diff(x) recovers every coefficient with
    # x-degree >= 1 (the x-independent part is lost by construction)
    h = g.antideriv(2)
    ft = f.truncate(3)
    for e in h.space.exps:
        if e[2] >= 1:
            assert h.coeffs[h.space.index[e]] == pytest.approx(
                ft.coeffs[ft.space.index[e]], abs=1e-13
            )
        else:
            assert h.coeffs[h.space.index[e]] == 0.0


def test_truncate_is_prefix():
    x = jet_variable(PT, 2, order=5)
    f = (x * x + 1.0) * x
    t = f.truncate(2)
    assert t.order == 2
    for e in t.space.exps:
        assert t.coeffs[t.space.index[e]] == pytest.approx(f.coeffs[f.space.index[e]])


def test_embed_into_larger_space():
    mjet = jet_variable((1.5, 0.7), 0, order=3) * jet_variable((1.5, 0.7), 1, order=3)
    full = mjet.embed((0, 3), 4, point=(1.5, 9.0, 9.0, 0.7))
    assert full.value == pytest.approx(1.5 * 0.7)
    assert full.partial((1, 0, 0, 1)) == pytest.approx(1.0)
    assert full.partial((0, 1, 0, 0)) == 0.0


def test_compose_series_matches_function():
    # sin(x^2) via series composition; outer coefficients centered at x^2 = 0.16
    x = jet_variable((0.4,), 0, order=5)
    inner = x * x
    v = inner.value
    derivs = [math.sin(v), math.cos(v), -math.sin(v), -math.cos(v), math.sin(v), math.cos(v)]
    coeffs = [d / math.factorial(k) for k, d in enumerate(derivs)]
    s = compose_series(coeffs, inner)
    assert s.value == pytest.approx(math.sin(0.16), abs=1e-14)
    assert s.partial((1,)) == pytest.approx(2 * 0.4 * math.cos(0.16), abs=1e-13)
    assert s.partial((2,)) == pytest.approx(
        2 * math.cos(0.16) - 4 * 0.16 * math.sin(0.16), abs=1e-12
    )


coeff_strategy = st.floats(min_value=-3.0, max_value=3.0, allow_nan=False)


@st.composite
def random_jets(draw, nvars=3, order=4):
    sp = space(nvars, order)
    coeffs = draw(
        st.lists(coeff_strategy, min_size=sp.size, max_size=sp.size).map(np.array)
    )
    return Jet(sp, coeffs, point=tuple([1.0] * nvars))


@given(random_jets(), random_jets())
@settings(max_examples=60, deadline=None)
def test_leibniz_identity(a, b):
    # d(ab) = da * b + a * db, exact at the coefficient level
    for axis in range(a.nvars):
        lhs = (a * b).diff(axis)
        rhs = a.diff(axis) * b.truncate(a.order - 1) + a.truncate(a.order - 1) * b.diff(axis)
        np.testing.assert_allclose(lhs.coeffs, rhs.coeffs, rtol=1e-10, atol=1e-10)


@given(random_jets())
@settings(max_examples=40, deadline=None)
def test_mul_div_round_trip(a):
    b = a + 10.0  # keep divisor away from zero
    np.testing.assert_allclose(((a * b) / b).coeffs, a.coeffs, rtol=1e-9, atol=1e-9)


@given(random_jets(nvars=2, order=5))
@settings(max_examples=40, deadline=None)
def test_arithmetic_closure_orders(a):
    b = a * a - 3.0
    assert b.order == a.order
    assert jexp(a * 0.1).order == a.order


# -- finite-difference oracle ------------------------------------------------


def test_oracle_second_derivative_of_cube():
    f = lambda pt: pt[0] ** 3
    val = fd_oracle(f, np.array([2.0]), (2,))
    assert val == pytest.approx(12.0, abs=1e-6)


def test_oracle_mixed_derivative_quadratic_cubic():
    # W = b0 * y^2 * x with b0 = 1.25: d2 W / dy dx = 2 b0 y
    b0 = 1.25
    f = lambda pt: b0 * pt[3] ** 2 * pt[2]
    pt = np.array([0.3, -0.2, 1.4, 0.8])
    val = fd_oracle(f, pt, (0, 0, 1, 1))
    assert val == pytest.approx(2 * b0 * 0.8, abs=1e-6)


@pytest.mark.parametrize("seed", [0, 1])
def test_oracle_sweep_against_jets(seed):
    # jets vs oracle for an awkward composite field, all multi-indices <= 4
    rng = np.random.default_rng(seed)

    def field(pt):
        q, p, x, y = pt
        return x**-2 * (q * y - p * x) + math.exp(0.3 * q) * math.sqrt(x) + y**3 / x

    sp4 = space(4, 4)
    for _ in range(25):
        pt = np.array([rng.uniform(-1, 1), rng.uniform(-1, 1), rng.uniform(0.5, 2.0), rng.uniform(-1, 1)])
        q, p, x, y = (jet_variable(pt, a, order=4) for a in range(4))
        jf = x**-2 * (q * y - p * x) + jexp(0.3 * q) * jsqrt(x) + y**3 / x
        for alpha in sp4.exps:
            if sum(alpha) == 0 or sum(alpha) > 4:
                continue
            jv = jf.partial(alpha)
            ov = fd_oracle(field, pt, alpha)
            assert abs(jv - ov) / (1.0 + abs(jv)) < 1e-5, (alpha, pt, jv, ov)
