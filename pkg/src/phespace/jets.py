"""Forward-mode derivative engine: truncated multivariate Taylor jets.

A :class:`Jet` stores the Taylor coefficients (derivative over factorial) of
a scalar function at a base point, complete for every multi-index of total
degree <= order.  Arithmetic (``+ - * / **``) and the analytic heads
:func:`jexp`, :func:`jln`, :func:`jsqrt` act on jets and return jets of the
same order with coefficients exact to truncation; nothing downstream ever
differentiates numerically.  The independent cross-check is
:func:`fd_oracle`, a central finite-difference estimator with one Richardson
extrapolation level.

Storage is dense over a graded-lexicographic multi-index list.  At the
default order 5 in 4 variables that is 126 coefficients; sparsity
bookkeeping would cost more than it saves at this size.  Truncation to a
lower order is a prefix slice because the index list is graded.

All operations are pure; jets are safe to evaluate concurrently.
"""

from __future__ import annotations

import math
from functools import lru_cache
from itertools import product as _iterproduct

import numpy as np

from .errors import SingularPoint

__all__ = [
    "DEFAULT_ORDER",
    "Jet",
    "JetSpace",
    "space",
    "jet_variable",
    "jexp",
    "jln",
    "jsqrt",
    "jpow",
    "compose_series",
    "fd_oracle",
]

DEFAULT_ORDER = 5

# Division rejected when |denominator| <= DIV_TOL * (1 + |numerator|); keeps
# sampling clean around the x = 0 prefactor and other quotient loci.
DIV_TOL = 1e-12

_EPS = float(np.finfo(float).eps)


def _exponents(nvars, order):
    out = []

    def rec(prefix, remaining, slots):
        if slots == 1:
            out.append(tuple(prefix) + (remaining,))
            return
        for k in range(remaining + 1):
            rec(prefix + [k], remaining - k, slots - 1)

    for deg in range(order + 1):
        rec([], deg, nvars)
    return out


class JetSpace:
    """Cached index tables for jets with a fixed variable count and order."""

    def __init__(self, nvars, order):
        if nvars < 1 or order < 0:
            raise ValueError("need nvars >= 1 and order >= 0")
        self.nvars = nvars
        self.order = order
        self.exps = _exponents(nvars, order)
        self.size = len(self.exps)
        self.index = {e: i for i, e in enumerate(self.exps)}
        self.degree = np.array([sum(e) for e in self.exps], dtype=np.int64)
        ii, jj, kk = [], [], []
        for i, ei in enumerate(self.exps):
            di = sum(ei)
            for j, ej in enumerate(self.exps):
                if di + sum(ej) <= order:
                    ii.append(i)
                    jj.append(j)
                    kk.append(self.index[tuple(a + b for a, b in zip(ei, ej))])
        self._mul = (np.array(ii), np.array(jj), np.array(kk))

    @lru_cache(maxsize=None)
    def diff_map(self, axis):
        """Index/factor arrays mapping coefficients onto the order-1 space."""
        tgt = space(self.nvars, self.order - 1)
        src, fac = [], []
        for beta in tgt.exps:
            shifted = list(beta)
            shifted[axis] += 1
            src.append(self.index[tuple(shifted)])
            fac.append(beta[axis] + 1.0)
        return np.array(src), np.array(fac)

    @lru_cache(maxsize=None)
    def anti_map(self, axis):
        """Index/factor arrays for the truncation-preserving antiderivative."""
        dst, src, fac = [], [], []
        for i, beta in enumerate(self.exps):
            if beta[axis] >= 1:
                lowered = list(beta)
                lowered[axis] -= 1
                dst.append(i)
                src.append(self.index[tuple(lowered)])
                fac.append(1.0 / beta[axis])
        return np.array(dst), np.array(src), np.array(fac)

    def count_through(self, order):
        return int(np.searchsorted(self.degree, order + 1))

    def __hash__(self):
        return hash((self.nvars, self.order))

    def __eq__(self, other):
        return self is other


@lru_cache(maxsize=None)
def space(nvars, order):
    return JetSpace(nvars, order)


@lru_cache(maxsize=None)
def _embed_map(src_key, tgt_key, axis_map):
    src = space(*src_key)
    tgt = space(*tgt_key)
    idx = []
    for e in src.exps:
        target_exp = [0] * tgt.nvars
        for a, k in enumerate(e):
            target_exp[axis_map[a]] = k
        idx.append(tgt.index[tuple(target_exp)])
    return np.array(idx)


def _as_point(point):
    if point is None:
        return None
    return tuple(float(v) for v in point)


class Jet:
    """Truncated Taylor expansion of a scalar field at a base point."""

    __slots__ = ("space", "coeffs", "point")

    def __init__(self, space_, coeffs, point=None):
        coeffs = np.asarray(coeffs, dtype=float)
        if coeffs.shape != (space_.size,):
            raise ValueError(f"expected {space_.size} coefficients, got {coeffs.shape}")
        if not np.all(np.isfinite(coeffs)):
            raise SingularPoint("non-finite jet coefficients")
        self.space = space_
        self.coeffs = coeffs
        self.point = _as_point(point)

    # -- constructors ------------------------------------------------------

    @staticmethod
    def constant(value, space_, point=None):
        c = np.zeros(space_.size)
        c[0] = float(value)
        return Jet(space_, c, point)

    def constant_like(self, value):
        return Jet.constant(value, self.space, self.point)

    # -- basic queries -----------------------------------------------------

    @property
    def value(self):
        return float(self.coeffs[0])

    @property
    def order(self):
        return self.space.order

    @property
    def nvars(self):
        return self.space.nvars

    def partial(self, alpha):
        """Value of the partial derivative for the given multi-index."""
        alpha = tuple(int(a) for a in alpha)
        if sum(alpha) > self.order:
            raise ValueError("derivative order exceeds jet order")
        fact = 1.0
        for a in alpha:
            fact *= math.factorial(a)
        return float(self.coeffs[self.space.index[alpha]]) * fact

    def gradient(self):
        n = self.nvars
        out = np.empty(n)
        for a in range(n):
            e = tuple(1 if i == a else 0 for i in range(n))
            out[a] = self.coeffs[self.space.index[e]]
        return out

    def hessian(self):
        n = self.nvars
        out = np.empty((n, n))
        for a in range(n):
            for b in range(a, n):
                e = [0] * n
                e[a] += 1
                e[b] += 1
                c = self.coeffs[self.space.index[tuple(e)]]
                val = 2.0 * c if a == b else c
                out[a, b] = out[b, a] = val
        return out

    # -- structural ops ----------------------------------------------------

    def diff(self, axis):
        src, fac = self.space.diff_map(axis)
        return Jet(space(self.nvars, self.order - 1), self.coeffs[src] * fac, self.point)

    def antideriv(self, axis):
        """Antiderivative along one axis, truncated back to the same order.

        Top-degree source terms are dropped; used as the contraction step of
        Picard iteration, which converges to the exact truncated solution.
        """
        dst, src, fac = self.space.anti_map(axis)
        out = np.zeros(self.space.size)
        out[dst] = self.coeffs[src] * fac
        return Jet(self.space, out, self.point)

    def truncate(self, order):
        if order > self.order:
            raise ValueError("cannot truncate upward")
        if order == self.order:
            return self
        n = self.space.count_through(order)
        return Jet(space(self.nvars, order), self.coeffs[:n], self.point)

    def extend(self, order):
        if order < self.order:
            return self.truncate(order)
        tgt = space(self.nvars, order)
        c = np.zeros(tgt.size)
        c[: self.space.size] = self.coeffs
        return Jet(tgt, c, self.point)

    def embed(self, axis_map, nvars, point=None):
        """Re-express this jet in a larger variable set; axis_map[i] is the
        target axis of source axis i."""
        tgt = space(nvars, self.order)
        idx = _embed_map((self.nvars, self.order), (nvars, self.order), tuple(axis_map))
        c = np.zeros(tgt.size)
        c[idx] = self.coeffs
        return Jet(tgt, c, _as_point(point))

    # -- arithmetic --------------------------------------------------------

    def _merge(self, other):
        if isinstance(other, Jet):
            if other.space is not self.space:
                raise ValueError("jet order/variable mismatch")
            if self.point is not None and other.point is not None and self.point != other.point:
                raise ValueError("jets anchored at different base points")
            return other, self.point if self.point is not None else other.point
        return self.constant_like(other), self.point

    def __add__(self, other):
        o, pt = self._merge(other)
        return Jet(self.space, self.coeffs + o.coeffs, pt)

    __radd__ = __add__

    def __neg__(self):
        return Jet(self.space, -self.coeffs, self.point)

    def __sub__(self, other):
        o, pt = self._merge(other)
        return Jet(self.space, self.coeffs - o.coeffs, pt)

    def __rsub__(self, other):
        o, pt = self._merge(other)
        return Jet(self.space, o.coeffs - self.coeffs, pt)

    def __mul__(self, other):
        if not isinstance(other, Jet):
            return Jet(self.space, self.coeffs * float(other), self.point)
        o, pt = self._merge(other)
        ii, jj, kk = self.space._mul
        c = np.bincount(kk, weights=self.coeffs[ii] * o.coeffs[jj], minlength=self.space.size)
        return Jet(self.space, c, pt)

    __rmul__ = __mul__

    def __truediv__(self, other):
        if not isinstance(other, Jet):
            d = float(other)
            if d == 0.0:
                raise SingularPoint("division by zero scalar")
            return Jet(self.space, self.coeffs / d, self.point)
        o, _ = self._merge(other)
        if abs(o.value) <= DIV_TOL * (1.0 + abs(self.value)):
            raise SingularPoint(f"divisor value {o.value!r} below singular tolerance")
        return self * _reciprocal(o)

    def __rtruediv__(self, other):
        num = self.constant_like(float(other))
        return num / self

    def __pow__(self, p):
        return jpow(self, p)

    def __repr__(self):
        return f"Jet(order={self.order}, nvars={self.nvars}, value={self.value!r})"


def jet_variable(point, axis, order=DEFAULT_ORDER, nvars=None):
    """Coordinate function of one axis as a jet at the given point."""
    point = tuple(float(v) for v in point)
    if nvars is None:
        nvars = len(point)
    if order < 0:
        raise ValueError("order must be >= 0")
    sp_ = space(nvars, order)
    c = np.zeros(sp_.size)
    c[0] = point[axis]
    if order >= 1:
        e = tuple(1 if i == axis else 0 for i in range(nvars))
        c[sp_.index[e]] = 1.0
    return Jet(sp_, c, point)


def compose_series(coeffs, inner):
    """Evaluate an outer univariate Taylor series on a jet.

    ``coeffs[k]`` is the k-th Taylor coefficient of the outer function around
    ``inner.value``; evaluation is Horner on the nilpotent part of ``inner``.
    """
    du = inner - inner.value
    result = inner.constant_like(float(coeffs[-1]))
    for c in coeffs[-2::-1]:
        result = result * du + float(c)
    return result


def _reciprocal(u):
    v = u.value
    if abs(v) <= DIV_TOL:
        raise SingularPoint("reciprocal of near-zero jet")
    coeffs = [(-1.0) ** k / v ** (k + 1) for k in range(u.order + 1)]
    return compose_series(coeffs, u)


def jexp(u):
    ev = math.exp(u.value)
    coeffs = [ev / math.factorial(k) for k in range(u.order + 1)]
    return compose_series(coeffs, u)


def jln(u):
    v = u.value
    if v <= 0.0:
        raise SingularPoint(f"log of non-positive value {v!r}")
    coeffs = [math.log(v)]
    for k in range(1, u.order + 1):
        coeffs.append((-1.0) ** (k + 1) / (k * v**k))
    return compose_series(coeffs, u)


def jsqrt(u):
    if u.value <= 0.0:
        raise SingularPoint(f"sqrt of non-positive value {u.value!r}")
    return jpow(u, 0.5)


def jpow(u, p):
    """u**p for real p; integer p works for any base sign."""
    if not isinstance(u, Jet):
        raise TypeError("jpow expects a Jet base")
    if isinstance(p, Jet):
        raise TypeError("jet exponents are not supported")
    pf = float(p)
    if pf == round(pf):
        n = int(round(pf))
        if n == 0:
            return u.constant_like(1.0)
        base = u if n > 0 else 1.0 / u
        n = abs(n)
        result = None
        while n:
            if n & 1:
                result = base if result is None else result * base
            base = base * base
            n >>= 1
        return result
    v = u.value
    if v <= 0.0:
        raise SingularPoint(f"fractional power of non-positive value {v!r}")
    # coeffs[k] = C(p, k) * v**(p - k)
    coeffs = []
    binom = 1.0
    for k in range(u.order + 1):
        if k > 0:
            binom *= (pf - (k - 1)) / k
        coeffs.append(binom * v ** (pf - k))
    return compose_series(coeffs, u)


# ---------------------------------------------------------------------------
# Finite-difference oracle
# ---------------------------------------------------------------------------

# Step prefactors per total derivative order, balancing the post-Richardson
# O(h^4) truncation term against roundoff amplification ~ eps / h^k.  The
# first-order value is the classical eps**(1/3); higher orders need larger
# steps or roundoff dominates.
_FD_STEP = {1: _EPS ** (1.0 / 3.0), 2: 2e-3, 3: 3e-3, 4: 5e-3}


def _fd_estimate(f, point, multi_index, hs):
    axes = [a for a, k in enumerate(multi_index) if k > 0]
    per_axis = []
    for a in axes:
        k = multi_index[a]
        offsets = [(k - 2 * j) * hs[a] for j in range(k + 1)]
        weights = [(-1.0) ** j * math.comb(k, j) for j in range(k + 1)]
        per_axis.append((a, offsets, weights))
    total = 0.0
    for combo in _iterproduct(*[range(len(p[1])) for p in per_axis]):
        pt = np.array(point, dtype=float)
        w = 1.0
        for (a, offsets, weights), ci in zip(per_axis, combo):
            pt[a] += offsets[ci]
            w *= weights[ci]
        total += w * f(pt)
    denom = 1.0
    for a in axes:
        denom *= (2.0 * hs[a]) ** multi_index[a]
    return total / denom


def fd_oracle(f, point, multi_index, step=None):
    """Central finite-difference derivative with one Richardson level.

    ``f`` maps a coordinate array to a float; ``multi_index`` has total
    degree <= 4.  Independent of the jet engine by construction.
    """
    point = np.asarray(point, dtype=float)
    multi_index = tuple(int(a) for a in multi_index)
    total = sum(multi_index)
    if total == 0:
        return float(f(point))
    if total > 4:
        raise ValueError("oracle supports total degree <= 4")
    base = _FD_STEP[total] if step is None else float(step)
    hs = base * np.maximum(1.0, np.abs(point))
    d1 = _fd_estimate(f, point, multi_index, hs)
    d2 = _fd_estimate(f, point, multi_index, hs * 0.5)
    return (4.0 * d2 - d1) / 3.0
