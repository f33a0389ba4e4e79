"""Derivative transport between potential variables and model coordinates.

The twist-free potential lives on (q, y).  Two catalogue branches trade y
for a new coordinate w = w(q, y) with inverse y = Y(q, w); their metrics are
written in (q, p, x, w).  Checks stated in terms of y-derivatives still
apply there through the chain rule:

    d/dy          =  (1/Y_w) d/dw
    d/dq at fixed y = d/dq at fixed w + Omega_q d/dw,   Omega_q = -Y_q / Y_w

with Y_q = -2A.  A trivial chart (model coordinates already (q, p, x, y))
makes both operators plain partials, so callers never branch.
"""

from __future__ import annotations

from .jets import Jet

Q_AXIS, P_AXIS, X_AXIS, V_AXIS = 0, 1, 2, 3  # V is y or w depending on family

__all__ = ["Chart", "ChartedScalar", "Q_AXIS", "P_AXIS", "X_AXIS", "V_AXIS"]


class Chart:
    """Chain-rule operators for one family at one point."""

    def __init__(self, y_w=None, a_field=None):
        # y_w: jet of Y_w(q, w); a_field: jet of A(q, y(q, w)); both None for
        # families whose fourth coordinate is y itself.
        if (y_w is None) != (a_field is None):
            raise ValueError("transformed charts need both Y_w and A")
        self.y_w = y_w
        self.a_field = a_field

    @property
    def trivial(self):
        return self.y_w is None

    def dy(self, f: Jet) -> Jet:
        d = f.diff(V_AXIS)
        if self.y_w is None:
            return d
        return d / self.y_w.truncate(d.order)

    def dq(self, f: Jet) -> Jet:
        """q-derivative at fixed y."""
        d = f.diff(Q_AXIS)
        if self.y_w is None:
            return d
        k = d.order
        omega_q = 2.0 * self.a_field.truncate(k) / self.y_w.truncate(k)
        return d + omega_q * f.diff(V_AXIS)


class ChartedScalar:
    """A scalar of (q, y) carried as a jet in model coordinates plus its chart."""

    __slots__ = ("jet", "chart")

    def __init__(self, jet, chart):
        self.jet = jet
        self.chart = chart

    @property
    def value(self):
        return self.jet.value

    @property
    def order(self):
        return self.jet.order

    def dy(self):
        return ChartedScalar(self.chart.dy(self.jet), self.chart)

    def dq(self):
        return ChartedScalar(self.chart.dq(self.jet), self.chart)

    def dy_n(self, n):
        out = self
        for _ in range(n):
            out = out.dy()
        return out
