"""Residual checkers and integrators for the reduced field equations.

Everything the vacuum condition collapses to, family by family, lives here:
the full potential equation, its twist-free pair, the two Abel equations
(the w-flow and its scaling-invariant t-form), the Liouville reduction, and
the coefficient-function system of the type-D branch.  Integrators carry
truncated q-Taylor coefficients as their state so that mixed derivatives of
the solution, which the metric needs, come out of the same flow instead of
a second numerical pass.
"""

from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np
from scipy.integrate import quad, solve_ivp
from scipy.optimize import brentq

from .charts import ChartedScalar
from .errors import (
    DomainExit,
    PoleInRange,
    SingularityReached,
    SingularPoint,
)
from .jets import Jet, compose_series, jet_variable, space

__all__ = [
    "hh_residual",
    "twistfree_pair_residual",
    "OdeProblem",
    "OdeSolution",
    "integrate_ode",
    "separable_abel_solution",
    "SeparableAbelScaling",
    "type_d_constants_residual",
    "abel_flow_residual",
    "abel_chart_residuals",
    "liouville_residual",
    "qjet_to_model",
    "picard_abel",
]

_STATE_CAP = 1e6  # Abel flow trust region; beyond this the pole is close

_RTOL = 1e-12
_ATOL = 1e-13


# ---------------------------------------------------------------------------
# residuals
# ---------------------------------------------------------------------------


def hh_residual(kf, point):
    """Left-hand side of the expanding potential equation at one point.

    Vanishes iff the potential generates a vacuum metric.  Requires a family
    that exposes the potential in hyperheavenly coordinates.
    """
    w = kf.w_jet(point, order=2)
    mu0 = kf.params.mu0
    lam = kf.params.Lambda
    x = float(point[2])
    if abs(x) <= 1e-12:
        raise SingularPoint("potential equation evaluated at x ~ 0")
    wv = w.value
    wx = w.partial((0, 0, 1, 0))
    wy = w.partial((0, 0, 0, 1))
    wxx = w.partial((0, 0, 2, 0))
    wyy = w.partial((0, 0, 0, 2))
    wxy = w.partial((0, 0, 1, 1))
    wqy = w.partial((1, 0, 0, 1))
    return (
        wxx * wyy
        - wxy**2
        + (2.0 / x) * (wy * wxy - wx * wyy)
        + (1.0 / x) * wqy
        - mu0 * (x * x * wxx - 3.0 * x * wx + 3.0 * wv)
        - lam / (6.0 * x) * wxx
    )


def twistfree_pair_residual(a_field: ChartedScalar, c_field: ChartedScalar, mu0):
    """Residuals of the two equations the potential equation reduces to when
    the potential is linear in x.  Both vanish iff the metric is vacuum."""
    a_y = a_field.dy()
    a_yy = a_y.dy()
    a_yq = a_y.dq()
    c_y = c_field.dy()
    c_yy = c_y.dy()
    c_yq = c_y.dq()
    r1 = (
        a_y.value**2
        - 2.0 * a_field.value * a_yy.value
        + a_yq.value
        - 3.0 * mu0 * c_field.value
    )
    r2 = c_yq.value - 2.0 * a_field.value * c_yy.value + 2.0 * a_y.value * c_y.value
    return r1, r2


def abel_flow_residual(m_jet, a_fn, b_fn, mu0, w_axis=3):
    """Residual of the w-flow cubic equation evaluated on a solution jet."""
    k = m_jet.order - 1
    m = m_jet.truncate(k)
    m_w = m_jet.diff(w_axis)
    w_jet = jet_variable(m_jet.point, w_axis, order=k, nvars=m_jet.nvars)
    a_j = a_fn(w=w_jet)
    b_j = b_fn(w=w_jet)
    res = 36.0 * mu0 * m_w - (-(m * m * m) + a_j * m + b_j)
    return float(res.value)


def abel_chart_residuals(m_jet, mu0, y_jet=None, q_axis=0, w_axis=3):
    """Consistency of the coordinate-trade construction.

    Returns (r_grad, r_second): r_grad checks that the reconstructed inverse
    coordinate has the gradient the construction prescribes (zero when y_jet
    was built by integrating it; a real check when the integration supplied
    it independently); r_second is the second-order compatibility condition
    whose double q-integral is the w-flow cubic equation.
    """
    m_q = m_jet.diff(q_axis)
    y_w = m_q / (6.0 * mu0)
    y_qw = y_w.diff(q_axis)
    ratio = y_qw / y_w.truncate(y_qw.order)
    d_w = ratio.diff(w_axis)
    r_second = float(
        (m_jet.truncate(d_w.order) * y_w.truncate(d_w.order) + d_w).value
    )
    r_grad = 0.0
    if y_jet is not None:
        k = min(y_jet.order - 1, y_w.order)
        r_grad = float((y_jet.diff(w_axis).truncate(k) * (6.0 * mu0) - m_q.truncate(k)).value)
    return r_grad, r_second


def liouville_residual(g_jet, q_axis=0, w_axis=3):
    """Residual of the Liouville reduction evaluated on a jet of Y_w."""
    g_q = g_jet.diff(q_axis)
    ratio = g_q / g_jet.truncate(g_q.order)
    d_w = ratio.diff(w_axis)
    w_jet = jet_variable(g_jet.point, w_axis, order=d_w.order, nvars=g_jet.nvars)
    res = 2.0 * w_jet * g_jet.truncate(d_w.order) + d_w
    return float(res.value)


def type_d_constants_residual(coeff_jets, mu0=1.0):
    """Residuals of the two constraints on the type-D coefficient functions.

    ``coeff_jets`` maps names a, b, d, e to univariate q-jets of order >= 2.
    """
    a = coeff_jets["a"]
    b = coeff_jets["b"]
    d = coeff_jets["d"]
    e = coeff_jets["e"]

    def v(j, n):
        return j.partial((n,))

    r1 = 4.0 * v(b, 0) * v(b, 1) + 3.0 * v(a, 2) - 6.0 * (v(a, 1) * v(d, 0) + v(a, 0) * v(d, 1))
    r2 = (
        v(b, 2)
        - 12.0 * v(e, 0) * v(a, 1)
        - 6.0 * v(a, 0) * v(e, 1)
        + 2.0 * v(d, 0) * v(b, 1)
    )
    return r1, r2


# ---------------------------------------------------------------------------
# jet plumbing shared with the family catalogue
# ---------------------------------------------------------------------------


def qjet_to_model(coeffs, point, order, q_axis=0, nvars=4):
    """Lift univariate q-Taylor coefficients into the model jet space."""
    sp = space(nvars, order)
    c = np.zeros(sp.size)
    for k in range(min(len(coeffs), order + 1)):
        exp = [0] * nvars
        exp[q_axis] = k
        c[sp.index[tuple(exp)]] = coeffs[k]
    return Jet(sp, c, point)


def picard_abel(m_qcoeffs, a_fn, b_fn, mu0, point, order, q_axis=0, w_axis=3):
    """Complete a q-Taylor slice of M into the full (q, w) jet.

    The w-degrees are generated by contraction on the w-flow equation; the
    result is the exact truncated Taylor expansion of the local solution
    through the given slice.
    """
    w_jet = jet_variable(point, w_axis, order=order, nvars=4)
    a_j = a_fn(w=w_jet)
    b_j = b_fn(w=w_jet)
    base = qjet_to_model(m_qcoeffs, point, order, q_axis=q_axis)
    m = base
    for _ in range(order):
        rhs = (-(m * m * m) + a_j * m + b_j) / (36.0 * mu0)
        m = base + rhs.antideriv(w_axis)
    return m


# ---------------------------------------------------------------------------
# univariate series helpers (raw coefficient arrays)
# ---------------------------------------------------------------------------


def _ser_mul(a, b, order):
    return np.convolve(a, b)[: order + 1]


def _ser_div(a, b, order):
    if abs(b[0]) <= 1e-300:
        raise SingularPoint("series division by zero constant term")
    out = np.zeros(order + 1)
    for k in range(order + 1):
        acc = a[k] if k < len(a) else 0.0
        for j in range(k):
            acc -= out[j] * (b[k - j] if k - j < len(b) else 0.0)
        out[k] = acc / b[0]
    return out


def _ser_dq(a):
    return np.array([(k + 1) * a[k + 1] for k in range(len(a) - 1)] + [0.0])


# ---------------------------------------------------------------------------
# integrators
# ---------------------------------------------------------------------------


@dataclass
class OdeProblem:
    """One reduced equation with its data.

    kind: "abel_w" (cubic flow in w), "abel_t" (scaling form in t),
    "liouville" (q-jet carrying form of the reduction), or
    "type_d_constants" (coefficient-function system in q).
    """

    kind: str
    mu0: float = 1.0
    coeffs: dict = field(default_factory=dict)
    initial: dict = field(default_factory=dict)
    domain: tuple = (0.5, 2.0)


class OdeSolution:
    """Dense-output solution with domain and trust-region guards."""

    def __init__(self, problem, scipy_sol, start, end, terminated_at=None):
        self.problem = problem
        self._sol = scipy_sol
        self._lo, self._hi = min(start, end), max(start, end)
        self.terminated_at = terminated_at

    def eval(self, x):
        x = float(x)
        if x < self._lo - 1e-12 or x > self._hi + 1e-12:
            raise DomainExit(f"{x} outside integrated range [{self._lo}, {self._hi}]")
        if self.terminated_at is not None:
            raise SingularityReached(
                f"flow left trust region at {self.terminated_at}; no dense output"
            )
        return self._sol.sol(x)

    def __call__(self, x):
        return self.eval(x)


def _run_ivp(rhs, span, y0, problem, events=None):
    sol = solve_ivp(
        rhs,
        span,
        np.atleast_1d(np.asarray(y0, dtype=float)),
        method="DOP853",
        rtol=_RTOL,
        atol=_ATOL,
        dense_output=True,
        events=events,
    )
    terminated = None
    if sol.status == 1 and events is not None:
        terminated = float(sol.t_events[0][0])
    elif not sol.success:
        raise SingularityReached(f"integration failed: {sol.message}")
    return OdeSolution(problem, sol, span[0], sol.t[-1], terminated_at=terminated)


def _cap_event(_x, y):
    return _STATE_CAP - float(np.max(np.abs(y)))


_cap_event.terminal = True


def integrate_ode(problem: OdeProblem):
    """Adaptive high-order integration with dense output for each kind."""
    kind = problem.kind
    mu0 = problem.mu0
    lo, hi = problem.domain

    if kind == "abel_w":
        a_fn = problem.coeffs["a"]
        b_fn = problem.coeffs["b"]
        m0 = problem.initial["M0"]
        w0 = problem.initial.get("w0", lo)

        def rhs(w, y):
            m = y[0]
            return [(-(m**3) + a_fn(w=w) * m + b_fn(w=w)) / (36.0 * mu0)]

        return _run_ivp(rhs, (w0, hi if hi != w0 else lo), [m0], problem, events=[_cap_event])

    if kind == "abel_t":
        a0 = problem.coeffs["a0"]
        b0 = problem.coeffs["b0"]
        s0 = problem.initial["S0"]
        t0 = problem.initial.get("t0", lo)
        if min(abs(lo), abs(hi)) <= 1e-12 or lo * hi < 0:
            raise DomainExit("scaling form is singular at t = 0")

        def rhs(t, y):
            s = y[0]
            return [(-(s**3) + (a0 + 18.0 * mu0) * s + b0) / (36.0 * mu0 * t)]

        return _run_ivp(rhs, (t0, hi if hi != t0 else lo), [s0], problem, events=[_cap_event])

    if kind == "liouville":
        order = int(problem.coeffs.get("order", 5))
        gw0 = problem.coeffs["gw0"]  # scalar w -> d/dw of the base q-coefficient
        g0 = np.asarray(problem.initial["G0"], dtype=float)  # q-jet of Y_w at w0
        w0 = problem.initial.get("w0", lo)
        if len(g0) != order + 1:
            raise ValueError("initial q-jet length must be order + 1")

        def rhs(w, c):
            dg = _ser_dq(c)
            r = _ser_div(dg, c, order)
            gsq = _ser_mul(c, c, order)
            gw = np.zeros(order + 1)
            gw[0] = gw0(w)
            for k in range(order):
                conv = sum(r[j] * gw[k - j] for j in range(k + 1))
                gw[k + 1] = (-2.0 * w * gsq[k] + conv) / (k + 1)
            return gw

        return _run_ivp(rhs, (w0, hi if hi != w0 else lo), g0, problem, events=[_cap_event])

    if kind == "type_d_constants":
        a_fn = problem.coeffs["a"]
        e_fn = problem.coeffs["e"]
        q0 = problem.initial.get("q0", lo)
        b0 = problem.initial["b0"]
        bq0 = problem.initial.get("bq0", 0.0)
        d0 = problem.initial["d0"]

        def ajet(q, order=2):
            return a_fn(q=jet_variable((q,), 0, order=order))

        def ejet(q, order=1):
            return e_fn(q=jet_variable((q,), 0, order=order))

        a_at0 = ajet(q0)
        if abs(a_at0.value) <= 1e-12:
            raise SingularPoint("coefficient a vanishes; the system degenerates")
        k0 = 2.0 * b0**2 + 3.0 * a_at0.partial((1,)) - 6.0 * a_at0.value * d0

        def rhs(q, y):
            b, bq = y
            aj = ajet(q)
            ej = ejet(q)
            av, aq = aj.value, aj.partial((1,))
            if abs(av) <= 1e-12:
                raise SingularPoint("coefficient a crossed zero during integration")
            d = (2.0 * b**2 + 3.0 * aq - k0) / (6.0 * av)
            bqq = 12.0 * ej.value * aq + 6.0 * av * ej.partial((1,)) - 2.0 * d * bq
            return [bq, bqq]

        sol = _run_ivp(rhs, (q0, hi if hi != q0 else lo), [b0, bq0], problem, events=[_cap_event])
        sol.k0 = k0
        return sol

    raise ValueError(f"unknown problem kind {kind!r}")


# ---------------------------------------------------------------------------
# separable scaling solution
# ---------------------------------------------------------------------------


class SeparableAbelScaling:
    """Quadrature solution of the scaling form of the cubic flow.

    With f(u) = -u^3 + (18 mu0 + a0) u + b0 and T(u) = exp(18 mu0 int du/f),
    setting t(u) = T(u)^2 inverts to the solution S(t) = u of the scaling
    equation.  The map is monotone as long as f keeps one sign on u_range.
    """

    def __init__(self, a0, b0, mu0=1.0, u_range=(1.0, 2.0)):
        self.a0 = float(a0)
        self.b0 = float(b0)
        self.mu0 = float(mu0)
        self.u_lo, self.u_hi = float(u_range[0]), float(u_range[1])
        if not self.u_lo < self.u_hi:
            raise ValueError("u_range must be increasing")
        roots = np.roots([-1.0, 0.0, 18.0 * self.mu0 + self.a0, self.b0])
        for r in roots:
            if abs(r.imag) < 1e-9 and self.u_lo - 1e-12 <= r.real <= self.u_hi + 1e-12:
                raise PoleInRange(f"cubic has a root at u = {r.real}")
        self._u_ref = 0.5 * (self.u_lo + self.u_hi)

    def f(self, u):
        return -(u**3) + (18.0 * self.mu0 + self.a0) * u + self.b0

    def _log_T(self, u):
        val, err = quad(
            lambda s: 1.0 / self.f(s), self._u_ref, u, epsabs=1e-13, epsrel=1e-12, limit=200
        )
        return 18.0 * self.mu0 * val

    def T_of_u(self, u):
        self._check_u(u)
        import math

        return math.exp(self._log_T(u))

    def t_of_u(self, u):
        self._check_u(u)
        import math

        return math.exp(2.0 * self._log_T(u))

    def _check_u(self, u):
        if not (self.u_lo - 1e-12 <= u <= self.u_hi + 1e-12):
            raise DomainExit(f"u = {u} outside [{self.u_lo}, {self.u_hi}]")

    @property
    def t_range(self):
        a, b = self.t_of_u(self.u_lo), self.t_of_u(self.u_hi)
        return (min(a, b), max(a, b))

    def s_of_t(self, t):
        import math

        lo, hi = self.t_range
        if not (lo * (1 - 1e-12) <= t <= hi * (1 + 1e-12)):
            raise DomainExit(f"t = {t} outside the image [{lo}, {hi}] of u_range")
        target = 0.5 * math.log(t)
        return brentq(
            lambda u: self._log_T(u) - target, self.u_lo, self.u_hi, xtol=1e-14, rtol=1e-15
        )

    def s_series(self, t_star, order):
        """Univariate Taylor coefficients of S around t_star."""
        u_star = self.s_of_t(t_star)
        t1 = jet_variable((t_star,), 0, order=order)
        s = Jet.constant(u_star, t1.space, t1.point)
        base = s
        for _ in range(order):
            rhs = (-(s * s * s) + (18.0 * self.mu0 + self.a0) * s + self.b0) / (
                36.0 * self.mu0 * t1
            )
            s = base + rhs.antideriv(0)
        return s.coeffs

    def s_jet(self, t_jet):
        """S evaluated on a jet of t."""
        coeffs = self.s_series(t_jet.value, t_jet.order)
        return compose_series(coeffs, t_jet)


def separable_abel_solution(a0, b0, u_range, mu0=1.0):
    return SeparableAbelScaling(a0, b0, mu0=mu0, u_range=u_range)
