"""Catalogue of key functions and their models on the real neutral slice.

Every explicit solution family carries: a potential (where the family lives
in hyperheavenly coordinates (q, p, x, y)), a metric builder, the three
metric functions, the chart transport for y-derivatives, its symmetry
generators with the algebra certificate, and the residual of the reduced
field equation it solves.  Two families trade y for a new coordinate w and
are handled through :mod:`phespace.charts`.

Coordinates are always ordered (q, p, x, v) with v = y or w; sampling is
restricted to x > 0 (and w > 0, t > 0 where applicable) so that roots and
logarithms stay single-valued.
"""

from __future__ import annotations

import math
from dataclasses import dataclass
from fractions import Fraction

import numpy as np
from scipy.integrate import solve_ivp
from scipy.optimize import brentq

from .charts import Chart, ChartedScalar, Q_AXIS, V_AXIS, X_AXIS
from .errors import BadGauge, BadParams, NotTwistFree, SingularPoint, UnsupportedFamily
from .expressions import Expression, parse_expression
from .jets import DEFAULT_ORDER, Jet, compose_series, jet_variable, jexp, jln
from .reduced import (
    SeparableAbelScaling,
    _ser_div,
    _ser_dq,
    _ser_mul,
    abel_flow_residual,
    hh_residual,
    liouville_residual,
    picard_abel,
    qjet_to_model,
)

__all__ = [
    "Params",
    "KeyFunction",
    "VectorField",
    "AlgebraCertificate",
    "GaugeData",
    "catalogue",
    "abc_from_W",
    "gauge_transform",
    "gauge_constraint_residual",
    "FAMILIES",
]

_LINE_ORDER = 7      # q-Taylor depth carried by the line integrations
_MQ_TOL = 1e-10


@dataclass(frozen=True)
class Params:
    """Constants of the catalogue; only the ones a family reads matter."""

    mu0: float = 1.0
    Lambda: float = 0.0
    d0: float = 0.0
    e0: float = 0.0
    b0: float = 0.0
    a0: float = 0.0
    b0_abel: float = 0.0
    chi0: float = 1.0
    m0: float = 0.0
    F0: float = 0.0

    def __post_init__(self):
        if self.mu0 == 0.0:
            raise BadParams("mu0 = 0 is excluded (stronger degeneration is contradictory)")


def _as_callable(fn):
    if fn is None:
        return None
    if isinstance(fn, str):
        return parse_expression(fn)
    return fn


def _wrap1(fn, varname):
    """Normalize an expression/callable of one variable to positional calls."""
    fn = _as_callable(fn)
    if fn is None:
        return None
    if isinstance(fn, Expression) or hasattr(fn, "symbols"):
        return lambda v: fn(**{varname: v})
    return fn


class VectorField:
    """Vector field with components as callables of the coordinate jets."""

    def __init__(self, comps):
        self.comps = list(comps)

    def component_jets(self, point, order):
        coords = [jet_variable(point, a, order) for a in range(4)]
        out = []
        for comp in self.comps:
            val = comp(*coords) if callable(comp) else comp
            if not isinstance(val, Jet):
                val = Jet.constant(float(val), coords[0].space, coords[0].point)
            out.append(val)
        return out

    def values(self, point):
        return np.array([j.value for j in self.component_jets(point, 1)])


@dataclass
class AlgebraCertificate:
    """Basis change taking the raw generators onto a printed commutation table."""

    label: str
    gen_labels: list
    basis_change: np.ndarray            # new_i = sum_j T[i, j] K_j
    target: dict                        # (i, j), i < j -> {k: Fraction}


# ---------------------------------------------------------------------------
# shared builders
# ---------------------------------------------------------------------------


def _check_x(point):
    x = float(point[2])
    if abs(x) <= 1e-10:
        raise SingularPoint("metric prefactor singular at x ~ 0")
    return x


def _abq_from_w_jet(w, mu0, lam, point, order):
    x = jet_variable(point, X_AXIS, order=order, nvars=4)
    wyy = w.diff(V_AXIS).diff(V_AXIS).truncate(order)
    wxy = w.diff(X_AXIS).diff(V_AXIS).truncate(order)
    wxx = w.diff(X_AXIS).diff(X_AXIS).truncate(order)
    wx = w.diff(X_AXIS).truncate(order)
    wy = w.diff(V_AXIS).truncate(order)
    a = -x * wyy + mu0 * x**3 + lam / 6.0
    q = x * wxy - wy
    b = -x * wxx + 2.0 * wx
    return a, q, b


def _metric_from_abq(a, q, b, point, order):
    x = jet_variable(point, X_AXIS, order=order, nvars=4)
    pref = x**-2
    zero = Jet.constant(0.0, pref.space, pref.point)
    g = [[zero for _ in range(4)] for _ in range(4)]
    g[0][3] = g[3][0] = pref
    g[1][2] = g[2][1] = -pref
    g[1][1] = 2.0 * pref * a
    g[0][1] = g[1][0] = -2.0 * pref * q
    g[0][0] = 2.0 * pref * b
    return g


def _point_tuple(point):
    return tuple(float(v) for v in point)


# ---------------------------------------------------------------------------
# base class
# ---------------------------------------------------------------------------


class KeyFunction:
    """One family member: potential, parameters, metric and symmetry data."""

    family = "abstract"
    coords = ("q", "p", "x", "y")
    expected_optical_pattern = None

    def __init__(self, params: Params):
        self.params = params

    # potential ------------------------------------------------------------

    def w_call(self, q, x, y):
        raise UnsupportedFamily(f"{self.family} has no potential in these coordinates")

    def w_jet(self, point, order=DEFAULT_ORDER):
        _check_x(point)
        pt = _point_tuple(point)
        q = jet_variable(pt, Q_AXIS, order=order, nvars=4)
        x = jet_variable(pt, X_AXIS, order=order, nvars=4)
        y = jet_variable(pt, V_AXIS, order=order, nvars=4)
        val = self.w_call(q, x, y)
        if not isinstance(val, Jet):
            val = Jet.constant(float(val), q.space, q.point)
        return val

    # metric ---------------------------------------------------------------

    def abq_jets(self, point, order=2):
        _check_x(point)
        w = self.w_jet(point, order + 2)
        return _abq_from_w_jet(w, self.params.mu0, self.params.Lambda, _point_tuple(point), order)

    def metric_jets(self, point, order=2):
        a, q, b = self.abq_jets(point, order)
        return _metric_from_abq(a, q, b, _point_tuple(point), order)

    # twist-free data --------------------------------------------------------

    def chart(self, point, order=DEFAULT_ORDER):
        return Chart()

    def twistfree_fields(self, point, order=DEFAULT_ORDER):
        """(A, C) of the linear-in-x potential, as charted scalars."""
        w = self.w_jet(point, order + 1)
        wxx = w.diff(X_AXIS).diff(X_AXIS)
        if abs(wxx.value) > 1e-8 * (1.0 + abs(w.value)):
            raise NotTwistFree("potential is not linear in x")
        a = w.diff(X_AXIS).truncate(order)
        x = jet_variable(_point_tuple(point), X_AXIS, order=order, nvars=4)
        c = w.truncate(order) - x * a
        chart = self.chart(point, order)
        return ChartedScalar(a, chart), ChartedScalar(c, chart)

    # congruence data --------------------------------------------------------

    def z_jet(self, point, order=DEFAULT_ORDER):
        q = jet_variable(_point_tuple(point), Q_AXIS, order=order, nvars=4)
        return Jet.constant(0.0, q.space, q.point)

    def asd_double_a(self, point):
        """Coefficient a in the second degenerate dotted direction [1, -2a/mu0];
        None when the family is not type-D on the dotted side."""
        return None

    # field equation ---------------------------------------------------------

    def field_equation_residual(self, point):
        return abs(hh_residual(self, point))

    # symmetry ----------------------------------------------------------------

    def killing_generators(self):
        """List of (label, VectorField, chi0); chi0 = 0 marks a Killing vector."""
        return [("K1", VectorField([0.0, 1.0, 0.0, 0.0]), 0.0)]

    def algebra_certificate(self):
        return None

    # sampling ----------------------------------------------------------------

    def singular_values(self, point):
        """Values whose vanishing marks a singular locus near the point."""
        return {"x": float(point[2])}

    def oracle_fields(self):
        """name -> (float callable on a 4-point, jet builder (point, order))."""
        return {
            "W": (
                lambda pt: self.w_jet(pt, 0).value,
                lambda pt, order: self.w_jet(pt, order),
            )
        }


# ---------------------------------------------------------------------------
# type-D families in hyperheavenly coordinates
# ---------------------------------------------------------------------------


class TypeDCubic(KeyFunction):
    """A = y^3 + d0 y + e0; the doubly degenerate class with all four
    intersection congruences expanding and nontwisting."""

    family = "typeD_cubic"
    expected_optical_pattern = "[+-,+-,+-,+-]"

    def w_call(self, q, x, y):
        mu0 = self.params.mu0
        d0 = self.params.d0
        e0 = self.params.e0
        a = y**3 + d0 * y + e0
        c = -(3.0 * y**4 + 6.0 * d0 * y**2 + 12.0 * e0 * y - d0**2) / (3.0 * mu0)
        return a * x + c

    def asd_double_a(self, point):
        return 1.0

    def killing_generators(self):
        gens = [
            ("K1", VectorField([0.0, 1.0, 0.0, 0.0]), 0.0),
            ("K2", VectorField([1.0, 0.0, 0.0, 0.0]), 0.0),
        ]
        p = self.params
        if p.d0 == 0.0 and p.e0 == 0.0 and p.Lambda == 0.0:
            chi0 = p.chi0
            k3 = VectorField(
                [
                    lambda q, pp, x, y: (4.0 / 3.0) * chi0 * q,
                    lambda q, pp, x, y: (4.0 / 3.0) * chi0 * pp,
                    lambda q, pp, x, y: -(2.0 / 3.0) * chi0 * x,
                    lambda q, pp, x, y: -(2.0 / 3.0) * chi0 * y,
                ]
            )
            gens.append(("K3", k3, chi0))
        return gens

    def algebra_certificate(self):
        p = self.params
        if p.d0 == 0.0 and p.e0 == 0.0 and p.Lambda == 0.0:
            t = np.diag([1.0, 1.0, 3.0 / (4.0 * p.chi0)])
            target = {
                (0, 1): {},
                (0, 2): {0: Fraction(1)},
                (1, 2): {1: Fraction(1)},
            }
            return AlgebraCertificate("A_{3,3}", ["K1", "K2", "K3"], t, target)
        return AlgebraCertificate("2A_1", ["K1", "K2"], np.eye(2), {(0, 1): {}})


class TypeDQuadratic(KeyFunction):
    """A = b0 y^2, C = 0; carries a null Killing direction along y."""

    family = "typeD_quadratic"
    expected_optical_pattern = "[+-,--,--,+-]"

    def w_call(self, q, x, y):
        return self.params.b0 * y**2 * x

    def asd_double_a(self, point):
        return 0.0

    def killing_generators(self):
        b0 = self.params.b0
        p = self.params
        gens = [
            ("K1", VectorField([0.0, 1.0, 0.0, 0.0]), 0.0),
            ("K2", VectorField([1.0, 0.0, 0.0, 0.0]), 0.0),
            ("K3", VectorField([lambda q, pp, x, y: q, 0.0, 0.0, lambda q, pp, x, y: -y]), 0.0),
        ]
        if b0 != 0.0:
            k4 = VectorField(
                [
                    lambda q, pp, x, y: 2.0 * b0 * q * q,
                    0.0,
                    0.0,
                    lambda q, pp, x, y: 1.0 - 4.0 * b0 * q * y,
                ]
            )
            gens.append(("K4", k4, 0.0))
        else:
            gens.append(("K4", VectorField([0.0, 0.0, 0.0, 1.0]), 0.0))
            if p.Lambda == 0.0:
                chi0 = p.chi0
                k5 = VectorField(
                    [
                        0.0,
                        lambda q, pp, x, y: (4.0 / 3.0) * chi0 * pp,
                        lambda q, pp, x, y: -(2.0 / 3.0) * chi0 * x,
                        lambda q, pp, x, y: (2.0 / 3.0) * chi0 * y,
                    ]
                )
                gens.append(("K5", k5, chi0))
        return gens

    def algebra_certificate(self):
        p = self.params
        if p.b0 != 0.0:
            t = np.diag([1.0, 1.0 / (4.0 * p.b0), 1.0, -2.0])
            target = {
                (0, 1): {}, (0, 2): {}, (0, 3): {},
                (1, 2): {1: Fraction(1)},
                (1, 3): {2: Fraction(-2)},
                (2, 3): {3: Fraction(1)},
            }
            return AlgebraCertificate("A_{3,8}+A_1", ["K1", "K2", "K3", "K4"], t, target)
        if p.Lambda != 0.0:
            t = np.zeros((4, 4))
            t[0, 0] = 1.0   # e0 = K1
            t[1, 1] = 1.0   # e1 = K2
            t[2, 3] = 1.0   # e2 = K4
            t[3, 2] = 1.0   # e3 = K3
            target = {
                (0, 1): {}, (0, 2): {}, (0, 3): {},
                (1, 2): {},
                (1, 3): {1: Fraction(1)},
                (2, 3): {2: Fraction(-1)},
            }
            return AlgebraCertificate("A_{3,4}+A_1", ["K1", "K2", "K3", "K4"], t, target)
        t = np.zeros((5, 5))
        t[0, 1] = 1.0   # e1 = K2
        t[1, 0] = 1.0   # e2 = K1
        t[2, 3] = 1.0   # e3 = K4
        t[3, 2] = 1.0   # e4 = K3
        t[4, 4] = 3.0 / (4.0 * p.chi0)
        target = {(i, j): {} for i in range(5) for j in range(i + 1, 5)}
        target[(0, 3)] = {0: Fraction(1)}
        target[(1, 4)] = {1: Fraction(1)}
        target[(2, 3)] = {2: Fraction(-1)}
        target[(2, 4)] = {2: Fraction(1, 2)}
        return AlgebraCertificate("A_{5,33}(1/2,-1)", ["K1", "K2", "K3", "K4", "K5"], t, target)


class TypeDGeneral(KeyFunction):
    """Type-D potential with q-dependent coefficient functions a, b, d, e.

    The provider returns univariate q-Taylor coefficients of the four
    functions at a requested q; expression-backed and ODE-backed providers
    both fit.  Whether the coefficients satisfy their constraint system is
    the caller's business (the residual checker lives in `reduced`).
    """

    family = "typeD_general"

    def __init__(self, params, provider):
        super().__init__(params)
        self.provider = provider

    @staticmethod
    def expression_provider(funcs):
        fns = {k: _wrap1(funcs[k], "q") for k in ("a", "b", "d", "e")}

        def provider(q_value, order):
            jq = jet_variable((float(q_value),), 0, order=order)
            out = {}
            for name, fn in fns.items():
                val = fn(jq)
                if not isinstance(val, Jet):
                    val = Jet.constant(float(val), jq.space, jq.point)
                out[name] = val.coeffs.copy()
            return out

        return provider

    @staticmethod
    def ode_provider(solution, funcs):
        """Provider backed by the integrated coefficient system: a and e come
        from expressions, d is algebraic, b from the integration."""
        a_fn = _wrap1(funcs["a"], "q")
        e_fn = _wrap1(funcs["e"], "q")
        kconst = solution.k0

        def provider(q_value, order):
            jq = jet_variable((float(q_value),), 0, order=order + 1)
            a_c = np.asarray(a_fn(jq).coeffs[: order + 1]) if isinstance(a_fn(jq), Jet) else None
            a_j = a_fn(jq)
            e_j = e_fn(jq)
            a_c = a_j.coeffs[: order + 1].copy()
            e_c = e_j.coeffs[: order + 1].copy()
            aq = _ser_dq(a_c)
            eq = _ser_dq(e_c)
            b_val, bq_val = solution.eval(q_value)
            b = np.zeros(order + 1)
            b[0] = b_val
            if order >= 1:
                b[1] = bq_val
            for k in range(max(0, order - 1)):
                num = 2.0 * _ser_mul(b, b, order) + 3.0 * aq
                num[0] -= kconst
                d_ser = _ser_div(num, 6.0 * a_c, order)
                rhs = (
                    12.0 * _ser_mul(e_c, aq, order)
                    + 6.0 * _ser_mul(a_c, eq, order)
                    - 2.0 * _ser_mul(d_ser, _ser_dq(b), order)
                )
                b[k + 2] = rhs[k] / ((k + 1) * (k + 2))
            num = 2.0 * _ser_mul(b, b, order) + 3.0 * aq
            num[0] -= kconst
            d_ser = _ser_div(num, 6.0 * a_c, order)
            return {"a": a_c, "b": b, "d": d_ser, "e": e_c}

        return provider

    def coeff_jets(self, q_value, order):
        raw = self.provider(float(q_value), order)
        jq = jet_variable((float(q_value),), 0, order=order)
        return {
            k: Jet(jq.space, np.asarray(v[: order + 1], dtype=float), jq.point)
            for k, v in raw.items()
        }

    def w_call(self, q, x, y):
        mu0 = self.params.mu0
        if isinstance(q, Jet):
            raw = self.provider(q.value, q.order + 1)
            get = lambda name: compose_series(raw[name][: q.order + 1], q)
            getq = lambda name: compose_series(_ser_dq(raw[name])[: q.order + 1], q)
        else:
            raw = self.provider(float(q), 1)
            get = lambda name: float(raw[name][0])
            getq = lambda name: float(_ser_dq(raw[name])[0])
        a, b, d, e = get("a"), get("b"), get("d"), get("e")
        aq, bq, dq = getq("a"), getq("b"), getq("d")
        big_a = a * y**3 + b * y**2 + d * y + e
        threemu_c = (
            -3.0 * a * a * y**4
            - 4.0 * a * b * y**3
            + (3.0 * aq - 6.0 * a * d) * y**2
            + (2.0 * bq - 12.0 * a * e) * y
            - 4.0 * b * e
            + d * d
            + dq
        )
        return big_a * x + threemu_c / (3.0 * mu0)

    def asd_double_a(self, point):
        return float(self.provider(float(point[0]), 0)["a"][0])


# ---------------------------------------------------------------------------
# the w-flow family (coordinates q, p, x, w)
# ---------------------------------------------------------------------------


class TypeIIAbel(KeyFunction):
    """Metric driven by a solution M(q, w) of the cubic w-flow equation.

    Modes:
      "ode"         -- integrate the flow from an initial q-slice at w0
      "closed_form" -- the b = 0 closed form through H(w), Q(q), realized
                       by the same flow integration for chart consistency
      "scaling"     -- the self-similar branch through the separable
                       scaling equation (proper homothety, Lambda = 0)
    """

    family = "typeII_abel"
    coords = ("q", "p", "x", "w")
    expected_optical_pattern = "[+-,+-]"

    def __init__(self, params, mode, funcs):
        super().__init__(params)
        self.mode = mode
        self._cache = {}
        self.w0 = float(funcs.get("w0", 1.0))
        mu0 = params.mu0
        if mode == "ode":
            self.a_fn = _wrap1(funcs["a"], "w")
            self.b_fn = _wrap1(funcs["b"], "w")
            self.m_init = _wrap1(funcs["m_init"], "q")
        elif mode == "closed_form":
            self._h_fn = _wrap1(funcs["H"], "w")
            self._q_fn = _wrap1(funcs["Q"], "q")

            def a_fn(w):
                if isinstance(w, Jet):
                    axis = V_AXIS if w.nvars == 4 else 0
                    h = self._h_fn(w.extend(w.order + 2))
                    hw = h.diff(axis)
                    hww = hw.diff(axis)
                    return (18.0 * mu0 * hww / hw.truncate(hww.order)).truncate(w.order)
                j = jet_variable((float(w),), 0, order=2)
                h = self._h_fn(j)
                return 18.0 * mu0 * h.partial((2,)) / h.partial((1,))

            self.a_fn = a_fn
            self.b_fn = lambda w: (
                Jet.constant(0.0, w.space, w.point) if isinstance(w, Jet) else 0.0
            )
            self.m_init = lambda q: self.closed_form_m(q, self.w0)
        elif mode == "scaling":
            if params.Lambda != 0.0:
                raise BadParams("proper homothety requires Lambda = 0")
            self.scaling = SeparableAbelScaling(
                params.a0, params.b0_abel, mu0=mu0, u_range=funcs.get("u_range", (1.0, 2.0))
            )
            a0, b0 = params.a0, params.b0_abel
            self.a_fn = lambda w: a0 / w
            self.b_fn = lambda w: (
                b0 * w**-1.5 if isinstance(w, Jet) else b0 * float(w) ** -1.5
            )
            self.m_init = None
        else:
            raise BadParams(f"unknown mode {mode!r} for {self.family}")

    # -- mode-specific scalar fields ---------------------------------------

    def closed_form_m(self, q, w):
        """The b = 0 closed form sqrt(18 mu0 H_w / (H + Q)); closed_form mode."""
        mu0 = self.params.mu0
        qq = self._q_fn(q)
        if isinstance(w, Jet):
            axis = V_AXIS if w.nvars == 4 else 0
            h = self._h_fn(w.extend(w.order + 1))
            hw = h.diff(axis)
            num = 18.0 * mu0 * hw
            den = h.truncate(hw.order) + (qq.truncate(hw.order) if isinstance(qq, Jet) else qq)
            return (num / den) ** 0.5
        jw = jet_variable((float(w),), 0, order=1)
        h = self._h_fn(jw)
        if isinstance(qq, Jet):
            num = 18.0 * mu0 * h.partial((1,))
            den = h.value + qq
            return (num / den) ** 0.5
        val = 18.0 * mu0 * h.partial((1,)) / (h.value + qq)
        if val <= 0:
            raise SingularPoint("closed form needs 18 mu0 H_w / (H + Q) > 0")
        return math.sqrt(val)

    def scaling_m_qjet(self, q_value, w, order):
        """q-Taylor coefficients of the self-similar M at (q_value, w)."""
        p = self.params
        jq = jet_variable((float(q_value),), 0, order=order)
        t = jexp(-(4.0 / 3.0) * p.chi0 * jq) * float(w)
        s = self.scaling.s_jet(t)
        m = jexp(-(2.0 / 3.0) * p.chi0 * jq) * t**-0.5 * s
        return m.coeffs.copy()

    def m_value(self, q_value, w_value):
        """Scalar M by direct integration; serves the derivative oracle."""
        if self.mode == "scaling":
            p = self.params
            t = math.exp(-(4.0 / 3.0) * p.chi0 * q_value) * w_value
            s = self.scaling.s_of_t(t)
            return math.exp(-(2.0 / 3.0) * p.chi0 * q_value) * t**-0.5 * s
        m0 = self._slice_value(q_value)
        if abs(w_value - self.w0) < 1e-14:
            return m0
        mu0 = self.params.mu0

        def rhs(w, y):
            return [(-(y[0] ** 3) + self._a_val(w) * y[0] + self._b_val(w)) / (36.0 * mu0)]

        sol = solve_ivp(rhs, (self.w0, w_value), [m0], method="DOP853", rtol=1e-12, atol=1e-13)
        if not sol.success:
            raise SingularPoint("flow integration failed")
        return float(sol.y[0, -1])

    def _a_val(self, w):
        v = self.a_fn(float(w))
        return v.value if isinstance(v, Jet) else float(v)

    def _b_val(self, w):
        v = self.b_fn(float(w))
        return v.value if isinstance(v, Jet) else float(v)

    def _a_jet(self, w_jet):
        v = self.a_fn(w_jet)
        return v if isinstance(v, Jet) else Jet.constant(float(v), w_jet.space, w_jet.point)

    def _b_jet(self, w_jet):
        v = self.b_fn(w_jet)
        return v if isinstance(v, Jet) else Jet.constant(float(v), w_jet.space, w_jet.point)

    def _slice_value(self, q_value):
        v = self.m_init(float(q_value))
        return v.value if isinstance(v, Jet) else float(v)

    def _slice_qjet(self, q_value, order):
        jq = jet_variable((float(q_value),), 0, order=order)
        v = self.m_init(jq)
        if not isinstance(v, Jet):
            v = Jet.constant(float(v), jq.space, jq.point)
        return v.coeffs.copy()

    # -- line integration ----------------------------------------------------

    def _line(self, q_value, w_value):
        """q-Taylor lines of (M, Y, C-increment) at (q_value, w_value)."""
        key = (round(q_value, 14), round(w_value, 14))
        if key in self._cache:
            return self._cache[key]
        order = _LINE_ORDER
        n = order + 1
        mu0 = self.params.mu0
        if self.mode == "scaling":
            m_line_fn = lambda w: self.scaling_m_qjet(q_value, w, order)
            m0 = m_line_fn(self.w0)
        else:
            m_line_fn = None
            m0 = self._slice_qjet(q_value, order)
        if abs(m0[1]) < _MQ_TOL:
            raise BadParams("initial slice has M_q ~ 0; the construction degenerates")

        def rhs(w, state):
            if m_line_fn is None:
                m = state[:n]
                dm = (
                    -_ser_mul(_ser_mul(m, m, order), m, order) + self._a_val(w) * m
                ) / (36.0 * mu0)
                dm[0] += self._b_val(w) / (36.0 * mu0)
            else:
                m = m_line_fn(w)
                dm = np.zeros(n)
            yw = _ser_dq(m) / (6.0 * mu0)
            dc = _ser_mul(yw, yw, order)
            return np.concatenate([dm, yw, dc])

        state0 = np.concatenate([m0, np.zeros(n), np.zeros(n)])
        if abs(w_value - self.w0) < 1e-14:
            state = state0
        else:
            sol = solve_ivp(
                rhs, (self.w0, w_value), state0, method="DOP853", rtol=1e-12, atol=1e-14
            )
            if not sol.success:
                raise SingularPoint(f"flow integration failed: {sol.message}")
            state = sol.y[:, -1]
        m_line = m_line_fn(w_value) if m_line_fn is not None else state[:n]
        data = (m_line, state[n : 2 * n], state[2 * n :])
        self._cache[key] = data
        return data

    def _anchor_cjet(self, q_value, order):
        """q-line of C at the reference slice, fixed by the first reduced
        equation there (A vanishes on the slice by the chart anchoring)."""
        mu0 = self.params.mu0
        if self.mode == "scaling":
            m = self.scaling_m_qjet(q_value, self.w0, order + 3)
        else:
            m = self._slice_qjet(q_value, order + 3)
        mq = _ser_dq(m)
        mqq = _ser_dq(mq)
        a_y = _ser_div(-mqq, 2.0 * mq, order + 1)
        a_yq = _ser_dq(a_y)
        val = _ser_mul(a_y, a_y, order) + a_yq[: order + 1]
        return val / (3.0 * mu0)

    # -- jets -----------------------------------------------------------------

    def m_jet(self, point, order=DEFAULT_ORDER):
        if order + 1 > _LINE_ORDER + 1:
            raise ValueError(f"jet order {order} exceeds the carried line depth")
        q_value, w_value = float(point[0]), float(point[3])
        m_line, _, _ = self._line(q_value, w_value)
        if abs(m_line[1]) < _MQ_TOL:
            raise SingularPoint("M_q ~ 0 at the sample point")
        return picard_abel(
            m_line[: order + 1], self._a_jet, self._b_jet, self.params.mu0,
            _point_tuple(point), order,
        )

    def chart_jets(self, point, order=DEFAULT_ORDER):
        """(M, Y, C) as jets in (q, p, x, w); Y one order above the others."""
        q_value, w_value = float(point[0]), float(point[3])
        m_line, y_line, c_line = self._line(q_value, w_value)
        pt = _point_tuple(point)
        mu0 = self.params.mu0
        m = picard_abel(m_line[: order + 2], self._a_jet, self._b_jet, mu0, pt, order + 1)
        y_w = m.diff(Q_AXIS) / (6.0 * mu0)
        y = qjet_to_model(y_line[: order + 2], pt, order + 1) + y_w.extend(order + 1).antideriv(V_AXIS)
        c_anchor = self._anchor_cjet(q_value, order + 1)
        c_q = c_anchor[: order + 2] + c_line[: order + 2]
        c = qjet_to_model(c_q, pt, order + 1) + (y_w * y_w).extend(order + 1).antideriv(V_AXIS)
        return m.truncate(order), y, c.truncate(order)

    def chart(self, point, order=DEFAULT_ORDER):
        m, y, _ = self.chart_jets(point, order + 1)
        mu0 = self.params.mu0
        y_w = m.diff(Q_AXIS) / (6.0 * mu0)
        a_field = -0.5 * y.diff(Q_AXIS)
        return Chart(y_w=y_w.truncate(order), a_field=a_field.truncate(order))

    def twistfree_fields(self, point, order=DEFAULT_ORDER):
        m, y, c = self.chart_jets(point, order + 1)
        mu0 = self.params.mu0
        y_w = m.diff(Q_AXIS) / (6.0 * mu0)
        a_field = -0.5 * y.diff(Q_AXIS)
        chart = Chart(y_w=y_w.truncate(order), a_field=a_field.truncate(order))
        return (
            ChartedScalar(a_field.truncate(order), chart),
            ChartedScalar(c.truncate(order), chart),
        )

    def abq_jets(self, point, order=2):
        _check_x(point)
        mu0, lam = self.params.mu0, self.params.Lambda
        m = self.m_jet(point, order + 2)
        pt = _point_tuple(point)
        x = jet_variable(pt, X_AXIS, order=order, nvars=4)
        m_q = m.diff(Q_AXIS)
        m_qw = m_q.diff(V_AXIS)
        if abs(m_q.value) < _MQ_TOL:
            raise SingularPoint("M_q ~ 0 at the sample point")
        ratio = (m_qw / m_q.truncate(order)).truncate(order)
        a = mu0 * x**3 + lam / 6.0 - 0.5 * m.truncate(order) * x**2 - ratio * x
        q = -m_q.truncate(order) / (6.0 * mu0)
        b = Jet.constant(0.0, a.space, a.point)
        return a, q, b

    def metric_jets(self, point, order=2):
        a, qj, _ = self.abq_jets(point, order)
        pt = _point_tuple(point)
        x = jet_variable(pt, X_AXIS, order=order, nvars=4)
        pref = x**-2
        zero = Jet.constant(0.0, pref.space, pref.point)
        g = [[zero for _ in range(4)] for _ in range(4)]
        g[1][2] = g[2][1] = -pref
        g[0][3] = g[3][0] = -pref * qj      # x^-2 M_q / (6 mu0)
        g[0][1] = g[1][0] = -2.0 * pref * qj
        g[1][1] = 2.0 * pref * a
        return g

    def field_equation_residual(self, point):
        m = self.m_jet(point, 3)
        return abs(abel_flow_residual(m, self._a_jet, self._b_jet, self.params.mu0))

    def killing_generators(self):
        gens = [("K1", VectorField([0.0, 1.0, 0.0, 0.0]), 0.0)]
        if self.mode == "scaling":
            chi0 = self.params.chi0
            k2 = VectorField(
                [
                    1.0,
                    lambda q, pp, x, w: (4.0 / 3.0) * chi0 * pp,
                    lambda q, pp, x, w: -(2.0 / 3.0) * chi0 * x,
                    lambda q, pp, x, w: (4.0 / 3.0) * chi0 * w,
                ]
            )
            gens.append(("K2", k2, chi0))
        return gens

    def algebra_certificate(self):
        if self.mode != "scaling":
            return None
        t = np.diag([1.0, 3.0 / (4.0 * self.params.chi0)])
        return AlgebraCertificate("A_{2,1}", ["K1", "K2"], t, {(0, 1): {0: Fraction(1)}})

    def type_ii_condition_values(self, point):
        """The two non-degeneracy combinations; both ~ 0 would mean type D."""
        m = self.m_jet(point, 2)
        pt = _point_tuple(point)
        w = jet_variable(pt, V_AXIS, order=2, nvars=4)
        a_j = self._a_jet(w)
        b_j = self._b_jet(w)
        mv = m.value
        aw = a_j.partial((0, 0, 0, 1))
        aww = a_j.partial((0, 0, 0, 2))
        bw = b_j.partial((0, 0, 0, 1))
        c1 = aw * mv + bw
        c2 = 36.0 * self.params.mu0 * aww - a_j.value * aw - 3.0 * aw * mv**2 - 6.0 * bw * mv
        return c1, c2

    def singular_values(self, point):
        out = {"x": float(point[2]), "w": float(point[3])}
        try:
            m_line, _, _ = self._line(float(point[0]), float(point[3]))
            out["M_q"] = float(m_line[1])
        except (SingularPoint, BadParams):
            out["M_q"] = 0.0
        return out

    def oracle_fields(self):
        def m_scalar(pt):
            return self.m_value(float(pt[0]), float(pt[3]))

        return {"M": (m_scalar, lambda pt, order: self.m_jet(pt, order))}


# ---------------------------------------------------------------------------
# the Liouville family (coordinates q, p, x, w)
# ---------------------------------------------------------------------------


class TypeIILiouville(KeyFunction):
    """Metric driven by one free function F(w) through the Liouville
    reduction; the third intersection congruence is nonexpanding."""

    family = "typeII_liouville"
    coords = ("q", "p", "x", "w")
    expected_optical_pattern = "[+-,--]"

    def __init__(self, params, funcs, homothetic=False):
        super().__init__(params)
        self.homothetic = homothetic
        if homothetic:
            if params.Lambda != 0.0:
                raise BadParams("proper homothety requires Lambda = 0")
            chi0 = params.chi0
            self._f_fn = lambda w: (3.0 / (2.0 * chi0)) * (
                jln(w) if isinstance(w, Jet) else math.log(w)
            )
        else:
            self._f_fn = _wrap1(funcs["F"], "w")
        self.w0 = float(funcs.get("w0", 1.0))
        self._cache = {}
        probe = self._f_jet(jet_variable((self.w0,), 0, order=1))
        if abs(probe.partial((1,))) < 1e-12:
            raise BadParams("F_w = 0 violates the existence condition")

    def _f_jet(self, w_jet):
        val = self._f_fn(w_jet)
        if not isinstance(val, Jet):
            val = Jet.constant(float(val), w_jet.space, w_jet.point)
        return val

    def y_w_jet(self, point, order=DEFAULT_ORDER):
        pt = _point_tuple(point)
        q = jet_variable(pt, Q_AXIS, order=order + 2, nvars=4)
        w = jet_variable(pt, V_AXIS, order=order + 2, nvars=4)
        f = self._f_jet(w)
        f_w = f.diff(V_AXIS)
        denom = (w * (q + f) ** 2).truncate(f_w.order)
        return (-f_w / denom).truncate(order)

    def _a_line(self, q_value, w_value):
        """q-Taylor line of A = -Y_q/2 at (q_value, w_value)."""
        key = (round(q_value, 14), round(w_value, 14))
        if key in self._cache:
            return self._cache[key]
        order = _LINE_ORDER
        n = order + 1

        def rhs(w, state):
            jq = jet_variable((q_value,), 0, order=order + 1)
            f = self._f_jet(jet_variable((float(w),), 0, order=1))
            y_w = -f.partial((1,)) / (float(w) * (jq + f.value) ** 2)
            a_w = -0.5 * _ser_dq(y_w.coeffs)
            return a_w[:n]

        if abs(w_value - self.w0) < 1e-14:
            line = np.zeros(n)
        else:
            sol = solve_ivp(
                rhs, (self.w0, w_value), np.zeros(n), method="DOP853", rtol=1e-12, atol=1e-14
            )
            if not sol.success:
                raise SingularPoint(f"chart integration failed: {sol.message}")
            line = sol.y[:, -1]
        self._cache[key] = line
        return line

    def a_field_jet(self, point, order=DEFAULT_ORDER):
        pt = _point_tuple(point)
        line = self._a_line(float(point[0]), float(point[3]))
        y_w = self.y_w_jet(point, order + 1)
        a_w = (-0.5 * y_w.diff(Q_AXIS)).extend(order)
        return qjet_to_model(line[: order + 1], pt, order) + a_w.antideriv(V_AXIS)

    def chart(self, point, order=DEFAULT_ORDER):
        return Chart(y_w=self.y_w_jet(point, order), a_field=self.a_field_jet(point, order))

    def twistfree_fields(self, point, order=DEFAULT_ORDER):
        chart = self.chart(point, order)
        a = self.a_field_jet(point, order)
        c = Jet.constant(0.0, a.space, a.point)
        return ChartedScalar(a, chart), ChartedScalar(c, chart)

    def abq_jets(self, point, order=2):
        _check_x(point)
        pt = _point_tuple(point)
        mu0, lam = self.params.mu0, self.params.Lambda
        x = jet_variable(pt, X_AXIS, order=order, nvars=4)
        w = jet_variable(pt, V_AXIS, order=order, nvars=4)
        a = mu0 * x**3 + lam / 6.0 - w * x**2
        zero = Jet.constant(0.0, a.space, a.point)
        return a, zero, zero

    def metric_jets(self, point, order=2):
        a, _, _ = self.abq_jets(point, order)
        pt = _point_tuple(point)
        x = jet_variable(pt, X_AXIS, order=order, nvars=4)
        pref = x**-2
        zero = Jet.constant(0.0, pref.space, pref.point)
        y_w = self.y_w_jet(point, order)
        g = [[zero for _ in range(4)] for _ in range(4)]
        g[1][2] = g[2][1] = -pref
        g[1][1] = 2.0 * pref * a
        g[0][3] = g[3][0] = pref * y_w
        return g

    def field_equation_residual(self, point):
        return abs(liouville_residual(self.y_w_jet(point, 3)))

    def killing_generators(self):
        gens = [("K1", VectorField([0.0, 1.0, 0.0, 0.0]), 0.0)]
        if self.homothetic:
            chi0 = self.params.chi0
            k2 = VectorField(
                [
                    1.0,
                    lambda q, pp, x, w: (4.0 / 3.0) * chi0 * pp,
                    lambda q, pp, x, w: -(2.0 / 3.0) * chi0 * x,
                    lambda q, pp, x, w: -(2.0 / 3.0) * chi0 * w,
                ]
            )
            gens.append(("K2", k2, chi0))
        return gens

    def algebra_certificate(self):
        if not self.homothetic:
            return None
        t = np.diag([1.0, 3.0 / (4.0 * self.params.chi0)])
        return AlgebraCertificate("A_{2,1}", ["K1", "K2"], t, {(0, 1): {0: Fraction(1)}})

    def singular_values(self, point):
        w = float(point[3])
        q = float(point[0])
        jw = jet_variable((w,), 0, order=1)
        f = self._f_jet(jw)
        return {
            "x": float(point[2]),
            "w": w,
            "q+F": q + f.value,
            "F_w": f.partial((1,)),
        }

    def oracle_fields(self):
        def f_scalar(pt):
            return self._f_jet(jet_variable((float(pt[3]),), 0, order=0)).value

        def f_builder(pt, order):
            w = jet_variable(_point_tuple(pt), V_AXIS, order=order, nvars=4)
            return self._f_jet(w)

        return {
            "F": (f_scalar, f_builder),
            "Y_w": (lambda pt: self.y_w_jet(pt, 0).value, lambda pt, order: self.y_w_jet(pt, order)),
        }


# ---------------------------------------------------------------------------
# synthetic families for controls and gauge tests
# ---------------------------------------------------------------------------


class CustomTwistfree(KeyFunction):
    """Potential A(q, y) x + C(q, y) from user expressions; no claims made."""

    family = "custom_twistfree"

    def __init__(self, params, funcs):
        super().__init__(params)
        self.a_fn = _as_callable(funcs["A"])
        self.c_fn = _as_callable(funcs["C"])

    def w_call(self, q, x, y):
        return self.a_fn(q=q, y=y) * x + self.c_fn(q=q, y=y)


class CustomW(KeyFunction):
    """Arbitrary potential W(q, x, y) from an expression; synthetic controls.

    An optional expression z(q, x, y) attaches a candidate dotted-congruence
    direction for the null-string checkers.
    """

    family = "custom_w"

    def __init__(self, params, funcs):
        super().__init__(params)
        self.fn = _as_callable(funcs["W"])
        self.z_fn = _as_callable(funcs.get("z"))

    def w_call(self, q, x, y):
        return self.fn(q=q, x=x, y=y)

    def z_jet(self, point, order=DEFAULT_ORDER):
        if self.z_fn is None:
            return super().z_jet(point, order)
        pt = _point_tuple(point)
        env = {
            "q": jet_variable(pt, 0, order=order, nvars=4),
            "x": jet_variable(pt, 2, order=order, nvars=4),
            "y": jet_variable(pt, 3, order=order, nvars=4),
        }
        val = self.z_fn(**{k: env[k] for k in self.z_fn.symbols})
        if not isinstance(val, Jet):
            val = Jet.constant(float(val), env["q"].space, env["q"].point)
        return val


# ---------------------------------------------------------------------------
# catalogue entry point
# ---------------------------------------------------------------------------


FAMILIES = (
    "typeD_cubic",
    "typeD_quadratic",
    "typeD_general",
    "typeII_abel",
    "typeII_liouville",
    "custom_twistfree",
    "custom_w",
)


def catalogue(family, params=None, funcs=None, **kwargs):
    """Construct a catalogue member from its tag, parameters and functions."""
    if isinstance(params, dict):
        params = Params(**params)
    params = params or Params()
    funcs = dict(funcs or {})
    if family == "typeD_cubic":
        return TypeDCubic(params)
    if family == "typeD_quadratic":
        return TypeDQuadratic(params)
    if family == "typeD_general":
        provider = kwargs.get("provider")
        if provider is None:
            provider = TypeDGeneral.expression_provider(funcs)
        return TypeDGeneral(params, provider)
    if family == "typeII_abel":
        mode = kwargs.get("mode") or funcs.pop("mode", "ode")
        return TypeIIAbel(params, mode, funcs)
    if family == "typeII_liouville":
        homothetic = kwargs.get("homothetic", funcs.pop("homothetic", False))
        return TypeIILiouville(params, funcs, homothetic=homothetic)
    if family == "custom_twistfree":
        return CustomTwistfree(params, funcs)
    if family == "custom_w":
        return CustomW(params, funcs)
    raise BadParams(f"unknown family {family!r}")


def abc_from_W(kf, point, order=2):
    """The three metric functions as jets with derivatives to the given order."""
    return kf.abq_jets(point, order)


# ---------------------------------------------------------------------------
# gauge freedom
# ---------------------------------------------------------------------------


@dataclass
class GaugeData:
    """Coordinate gauge of the hyperheavenly form.

    qprime, h, sigma, L, M are scalar functions of q (expressions or
    callables on jets); f = d(qprime)/dq must not vanish on the domain.
    """

    qprime: object
    h: object = None
    sigma: object = None
    L: object = None
    M: object = None

    def __post_init__(self):
        zero = lambda q: q * 0.0
        self.qprime = _wrap1(self.qprime, "q")
        self.h = _wrap1(self.h, "q") or zero
        self.sigma = _wrap1(self.sigma, "q") or zero
        self.L = _wrap1(self.L, "q") or zero
        self.M = _wrap1(self.M, "q") or zero


def _scalar_jet(fn, q_jet, nderiv=0):
    """fn(q) composed onto a q jet, optionally differentiated first."""
    probe = jet_variable((q_jet.value,), 0, order=q_jet.order + nderiv)
    val = fn(probe)
    if not isinstance(val, Jet):
        val = Jet.constant(float(val), probe.space, probe.point)
    coeffs = val.coeffs.copy()
    for _ in range(nderiv):
        coeffs = _ser_dq(coeffs)
    return compose_series(coeffs[: q_jet.order + 1], q_jet)


def gauge_constraint_residual(gauge: GaugeData, params: Params, q_value):
    """Residual of the compatibility condition tying M, f and L together."""
    jq = jet_variable((float(q_value),), 0, order=2)
    f = _scalar_jet(gauge.qprime, jq, nderiv=1)
    if abs(f.value) <= 1e-12:
        raise BadGauge("f = dq'/dq vanishes")
    if f.value < 0:
        raise BadGauge("orientation-reversing q-maps are not supported")
    inv_sqrt = f**-0.5
    term = math.sqrt(f.value) * inv_sqrt.partial((2,))
    m_val = _scalar_jet(gauge.M, jq.truncate(0)).value
    l_val = _scalar_jet(gauge.L, jq.truncate(0)).value
    return 3.0 * params.mu0 * m_val - term + (params.Lambda / 3.0) * l_val


def _reverse_series(forward_coeffs, order):
    """Taylor coefficients of the inverse map, as a jet in the primed variable.

    ``forward_coeffs`` expands q'(q) around q0; the result is the jet of
    q - q0 as a function of q' at q'(q0), built by Newton iteration.
    """
    f1 = forward_coeffs[1]
    if abs(f1) <= 1e-12:
        raise BadGauge("gauge map is not invertible (f = 0)")
    base_pt = (float(forward_coeffs[0]),)
    qp = jet_variable(base_pt, 0, order=order)
    target = qp - forward_coeffs[0]
    psi = target / f1
    centered = np.array(forward_coeffs[: order + 1], dtype=float)
    centered[0] = 0.0
    deriv = _ser_dq(centered)
    # Newton iteration; psi.value stays exactly 0, so the centered series
    # coefficients remain valid composition data throughout.
    for _ in range(max(3, int(math.ceil(math.log2(order + 1))) + 1)):
        phi = compose_series(centered, psi)
        dphi = compose_series(deriv[: order + 1], psi)
        psi = psi - (phi - target) / dphi
    return psi


class GaugedKeyFunction(KeyFunction):
    """Potential pushed through a coordinate gauge; lives in primed coordinates."""

    family = "gauged"

    def __init__(self, base: KeyFunction, gauge: GaugeData, q_bracket=(-3.0, 3.0)):
        super().__init__(base.params)
        self.base = base
        self.gauge = gauge
        self.q_bracket = q_bracket

    def map_point(self, point):
        """Image of an unprimed point under the gauge coordinate change."""
        q, p, x, y = (float(v) for v in point)
        jq = jet_variable((q,), 0, order=1)
        qp = _scalar_jet(self.gauge.qprime, jq)
        f = qp.partial((1,))
        h = _scalar_jet(self.gauge.h, jq)
        hq = h.partial((1,))
        sigma = _scalar_jet(self.gauge.sigma, jq.truncate(0)).value
        return np.array([qp.value, p + h.value, x, (y + hq * x) / f + sigma])

    def _unprimed_q_jet(self, qp_jet):
        def forward(qv):
            return _scalar_jet(self.gauge.qprime, jet_variable((qv,), 0, order=0)).value

        lo, hi = self.q_bracket
        flo, fhi = forward(lo) - qp_jet.value, forward(hi) - qp_jet.value
        grow = 0
        while flo * fhi > 0 and grow < 40:
            span = hi - lo
            lo, hi = lo - 0.5 * span, hi + 0.5 * span
            flo, fhi = forward(lo) - qp_jet.value, forward(hi) - qp_jet.value
            grow += 1
        if flo * fhi > 0:
            raise BadGauge("could not bracket the inverse coordinate")
        q0 = brentq(lambda s: forward(s) - qp_jet.value, lo, hi, xtol=1e-14)
        fwd = _scalar_jet(
            lambda j: self.gauge.qprime(j), jet_variable((q0,), 0, order=qp_jet.order + 1)
        )
        psi = _reverse_series(fwd.coeffs, qp_jet.order)
        coeffs = psi.coeffs.copy()
        coeffs[0] += q0
        return compose_series(coeffs, qp_jet)

    def w_call(self, qp, xp, yp):
        if not isinstance(qp, Jet):
            raise UnsupportedFamily("gauged potential needs jet arguments")
        mu0, lam = self.params.mu0, self.params.Lambda
        q = self._unprimed_q_jet(qp)
        f = _scalar_jet(self.gauge.qprime, q, nderiv=1)
        f_q = _scalar_jet(self.gauge.qprime, q, nderiv=2)
        h_q = _scalar_jet(self.gauge.h, q, nderiv=1)
        h_qq = _scalar_jet(self.gauge.h, q, nderiv=2)
        sigma = _scalar_jet(self.gauge.sigma, q)
        sigma_q = _scalar_jet(self.gauge.sigma, q, nderiv=1)
        l_j = _scalar_jet(self.gauge.L, q)
        m_j = _scalar_jet(self.gauge.M, q)
        y = f * (yp - sigma) - h_q * xp
        x = xp
        w_orig = self.base.w_call(q, x, y)
        d_hq_over_f = (h_qq * f - h_q * f_q) / (f * f)
        terms = (
            0.5 * mu0 * h_q * (x**3 * y + 0.5 * h_q * x**4)
            - (l_j / 3.0) * x**3
            + (f_q / (2.0 * f)) * x * y
            - 0.5 * f * d_hq_over_f * x**2
            - (lam / 6.0) * h_q * y
            - (0.5 * f * sigma_q + (lam / 12.0) * h_q**2) * x
            - m_j
        )
        return (w_orig + terms) / (f * f)


def gauge_transform(kf: KeyFunction, gauge: GaugeData, tol=1e-8, q_samples=None):
    """Validated gauge push-forward of a hyperheavenly-coordinate potential."""
    if kf.coords[3] != "y":
        raise UnsupportedFamily("gauge transform needs hyperheavenly coordinates")
    samples = q_samples if q_samples is not None else np.linspace(-1.0, 1.0, 7)
    worst = max(abs(gauge_constraint_residual(gauge, kf.params, qv)) for qv in samples)
    if worst > tol:
        raise BadGauge(f"constraint residual {worst:.3e} exceeds {tol:.1e}")
    return GaugedKeyFunction(kf, gauge)
