"""Caratheodory right-hand sides f(x, y) on a finite space.

A :class:`Nonlinearity` evaluates ``f(nodes, y)`` with numpy broadcasting
between the node indices and the values. Besides values it carries what the
solvers need: a derivative in y (for Newton steps) and a bound on the
decreasing slope ``sup max(-df/dy, 0)`` over a value interval (the shift of
the monotone iteration).
"""
from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np

from .errors import ValidationError

_INV_GOLDEN = (np.sqrt(5.0) - 1.0) / 2.0


class Nonlinearity:
    def __init__(
        self,
        func,
        derivative=None,
        neg_slope=None,
        name="f",
        nonincreasing=False,
        abs_monotone=False,
        bound=None,
        params=None,
    ):
        self.func = func
        self._derivative = derivative
        self._neg_slope = neg_slope
        self.name = name
        self.nonincreasing = nonincreasing
        self.abs_monotone = abs_monotone
        self.bound = bound
        self.params = params or {}

    def __repr__(self):
        return f"Nonlinearity({self.name})"

    def __call__(self, y, nodes=None):
        y = np.asarray(y, dtype=float)
        if nodes is None:
            nodes = np.arange(y.shape[0]) if y.ndim else 0
        return np.asarray(self.func(np.asarray(nodes), y), dtype=float) * np.ones_like(y)

    def derivative(self, y, nodes=None):
        y = np.asarray(y, dtype=float)
        if nodes is None:
            nodes = np.arange(y.shape[0]) if y.ndim else 0
        if self._derivative is not None:
            return np.asarray(self._derivative(np.asarray(nodes), y), dtype=float) * np.ones_like(y)
        eps = 1e-6 * np.maximum(1.0, np.abs(y))
        return (self(y + eps, nodes) - self(y - eps, nodes)) / (2 * eps)

    def neg_slope(self, lo, hi, nodes=None):
        """Per node, an upper bound of max(-df/dy, 0) over y in [lo, hi]."""
        lo = np.atleast_1d(np.asarray(lo, dtype=float))
        hi = np.atleast_1d(np.asarray(hi, dtype=float))
        lo, hi = np.broadcast_arrays(lo, hi)
        if nodes is None:
            nodes = np.arange(len(lo))
        if self._neg_slope is not None:
            return np.maximum(np.asarray(self._neg_slope(np.asarray(nodes), lo, hi), dtype=float), 0.0)
        return _sampled_neg_slope(self, lo, hi, nodes)


def _sampled_neg_slope(f, lo, hi, nodes, samples=513, safety=1.1):
    t = np.linspace(0.0, 1.0, samples)
    y = lo[:, None] + (hi - lo)[:, None] * t[None, :]
    vals = f.func(np.asarray(nodes)[:, None], y) * np.ones_like(y)
    dy = np.diff(y, axis=1)
    with np.errstate(invalid="ignore", divide="ignore"):
        slopes = np.where(dy > 0, np.diff(vals, axis=1) / np.where(dy > 0, dy, 1.0), 0.0)
    # derivative at the sample points catches curvature between samples
    deriv = f.derivative(y.ravel(), np.repeat(np.asarray(nodes), samples)).reshape(y.shape)
    est = np.maximum((-slopes).max(axis=1, initial=0.0), (-deriv).max(axis=1, initial=0.0))
    return safety * np.maximum(est, 0.0)


def _coef(c, nodes):
    c = np.asarray(c, dtype=float)
    return c if c.ndim == 0 else c[nodes]


# -- families -------------------------------------------------------------


def power(p, c=1.0):
    """f(x, y) = -c(x) |y|^(p-1) y."""
    if p < 1:
        raise ValidationError("power family needs p >= 1")
    c_arr = np.asarray(c, dtype=float)
    if np.any(c_arr < 0):
        raise ValidationError("power coefficient c(x) must be nonnegative")

    def func(nodes, y):
        return -_coef(c_arr, nodes) * np.abs(y) ** (p - 1) * y

    def deriv(nodes, y):
        return -_coef(c_arr, nodes) * p * np.abs(y) ** (p - 1)

    def neg_slope(nodes, lo, hi):
        top = np.maximum(np.abs(lo), np.abs(hi))
        return _coef(c_arr, nodes) * p * top ** (p - 1)

    return Nonlinearity(func, deriv, neg_slope, name=f"power(p={p})", nonincreasing=True,
                        abs_monotone=True, params={"family": "power", "p": p, "c": c})


def exponential():
    """f(x, y) = -sign(y) (exp|y| - 1)."""

    def func(nodes, y):
        return -np.sign(y) * np.expm1(np.abs(y))

    def deriv(nodes, y):
        return -np.exp(np.abs(y))

    def neg_slope(nodes, lo, hi):
        return np.exp(np.maximum(np.abs(lo), np.abs(hi)))

    return Nonlinearity(func, deriv, neg_slope, name="exp", nonincreasing=True,
                        abs_monotone=True, params={"family": "exp"})


_SHAPES = {
    "tanh": (np.tanh, lambda y: 1.0 / np.cosh(y) ** 2),
    "atan": (lambda y: 2 / np.pi * np.arctan(y), lambda y: 2 / np.pi / (1 + y**2)),
}


def bounded(g=1.0, shape="tanh"):
    """f(x, y) = -g(x) s(y) with s odd, increasing and |s| <= 1; so |f| <= g."""
    if shape not in _SHAPES:
        raise ValidationError(f"unknown bounded shape {shape!r}")
    s, ds = _SHAPES[shape]
    g_arr = np.asarray(g, dtype=float)
    if np.any(g_arr < 0):
        raise ValidationError("bound g(x) must be nonnegative")

    def func(nodes, y):
        return -_coef(g_arr, nodes) * s(y)

    def deriv(nodes, y):
        return -_coef(g_arr, nodes) * ds(y)

    def neg_slope(nodes, lo, hi):
        # ds peaks at 0 and decays in |y|
        closest = np.where((lo <= 0) & (hi >= 0), 0.0, np.minimum(np.abs(lo), np.abs(hi)))
        return _coef(g_arr, nodes) * ds(closest)

    return Nonlinearity(func, deriv, neg_slope, name=f"bounded({shape})", nonincreasing=True,
                        abs_monotone=True, bound=g_arr, params={"family": "bounded", "shape": shape, "g": g})


def tabulated(tables, groups=None):
    """Piecewise linear f from (y, f) tables; ``groups[i]`` picks node i's table.

    Outside a table's y-range the end values are held constant.
    """
    tabs = []
    for ys, fs in tables:
        ys, fs = np.asarray(ys, dtype=float), np.asarray(fs, dtype=float)
        if ys.ndim != 1 or ys.shape != fs.shape or len(ys) < 2 or np.any(np.diff(ys) <= 0):
            raise ValidationError("table needs increasing y values and matching f values")
        tabs.append((ys, fs))

    def group_of(nodes):
        nodes = np.asarray(nodes)
        if groups is None:
            return np.zeros_like(nodes)
        return np.asarray(groups)[nodes]

    def func(nodes, y):
        nodes, y = np.broadcast_arrays(np.asarray(nodes), np.asarray(y, dtype=float))
        out = np.empty(y.shape)
        grp = group_of(nodes)
        for k, (ys, fs) in enumerate(tabs):
            sel = grp == k
            out[sel] = np.interp(y[sel], ys, fs)
        return out

    def deriv(nodes, y):
        nodes, y = np.broadcast_arrays(np.asarray(nodes), np.asarray(y, dtype=float))
        out = np.zeros(y.shape)
        grp = group_of(nodes)
        for k, (ys, fs) in enumerate(tabs):
            sel = grp == k
            seg = np.clip(np.searchsorted(ys, y[sel], side="right") - 1, 0, len(ys) - 2)
            slope = np.diff(fs) / np.diff(ys)
            inside = (y[sel] >= ys[0]) & (y[sel] <= ys[-1])
            out[sel] = np.where(inside, slope[seg], 0.0)
        return out

    def neg_slope(nodes, lo, hi):
        grp = group_of(nodes)
        out = np.zeros(len(lo))
        for i in range(len(lo)):
            ys, fs = tabs[grp[i]]
            slope = np.diff(fs) / np.diff(ys)
            hit = (ys[1:] > lo[i]) & (ys[:-1] < hi[i])
            out[i] = max(0.0, float((-slope[hit]).max(initial=0.0)))
        return out

    nonincreasing = all(np.all(np.diff(fs) <= 0) for _, fs in tabs)
    return Nonlinearity(func, deriv, neg_slope, name="tabulated", nonincreasing=nonincreasing,
                        params={"family": "tabulated"})


def from_callable(fn, derivative=None, neg_slope=None, name="callable", nonincreasing=False,
                  abs_monotone=False, node_dependent=False):
    """Wrap ``fn(y)`` (or ``fn(nodes, y)`` when node_dependent)."""
    func = fn if node_dependent else (lambda nodes, y: fn(y))
    deriv = derivative
    if derivative is not None and not node_dependent:
        deriv = lambda nodes, y: derivative(y)
    return Nonlinearity(func, deriv, neg_slope, name=name, nonincreasing=nonincreasing,
                        abs_monotone=abs_monotone, params={"family": "callable"})


_EXPR_NAMESPACE = {
    "abs": np.abs, "exp": np.exp, "expm1": np.expm1, "tanh": np.tanh, "sign": np.sign,
    "sqrt": np.sqrt, "log1p": np.log1p, "arctan": np.arctan, "sin": np.sin, "cos": np.cos,
    "pi": np.pi, "e": np.e,
}


def expression(expr, nonincreasing=False):
    """f given as a numpy expression in y, e.g. ``-y**3 - y/(1+y**2)``."""
    code = compile(expr, "<nonlinearity>", "eval")

    def fn(y):
        return eval(code, {"__builtins__": {}}, dict(_EXPR_NAMESPACE, y=y))

    nl = from_callable(fn, name=f"expr({expr})", nonincreasing=nonincreasing)
    nl.params = {"family": "expression", "expr": expr}
    return nl


# -- transformations ------------------------------------------------------


def truncate_below(f, n, phi):
    """f v (-n phi): clamps f from below at -n phi(x)."""
    if n < 0:
        raise ValidationError("truncation level must be nonnegative")
    phi = np.asarray(phi, dtype=float)
    if np.any(phi <= 0):
        raise ValidationError("truncation weight phi must be strictly positive")

    def func(nodes, y):
        return np.maximum(f.func(nodes, y), -n * _coef(phi, nodes))

    def deriv(nodes, y):
        clamped = f.func(nodes, y) <= -n * _coef(phi, nodes)
        return np.where(clamped, 0.0, f.derivative(y, nodes))

    neg_slope = f.neg_slope
    if f.nonincreasing:
        # f_n is flat beyond the crossing y_c(x) where f = -n phi
        def neg_slope(nodes, lo, hi):
            level = -n * _coef(phi, nodes) * np.ones(len(lo))
            cross = _crossing(f, nodes, level, hi)
            top = np.minimum(hi, cross)
            out = f.neg_slope(np.minimum(lo, top), top, nodes)
            return np.where(lo < top, out, 0.0)

    return Nonlinearity(func, deriv, neg_slope, name=f"{f.name} v -{n}phi",
                        nonincreasing=f.nonincreasing, abs_monotone=f.abs_monotone,
                        bound=None, params={"base": f.params, "truncate_below": n})


def _crossing(f, nodes, level, hi, iters=200):
    """For nonincreasing f: per node, the largest y <= hi with f(y) >= level."""
    hi = np.asarray(hi, dtype=float)
    fhi = f.func(nodes, hi) * np.ones_like(hi)
    done = fhi >= level
    a = np.minimum(hi, 0.0)
    # f(a) >= f(0) = 0 >= level for a <= 0, so [a, hi] brackets the crossing
    b = hi.copy()
    for _ in range(iters):
        mid = 0.5 * (a + b)
        up = f.func(nodes, mid) * np.ones_like(mid) >= level
        a = np.where(up, mid, a)
        b = np.where(up, b, mid)
        if np.all(b - a <= 1e-13 * np.maximum(1.0, np.abs(b))):
            break
    return np.where(done, hi, b)


def truncate_above(f, n, phi):
    """f ^ (n phi): clamps f from above at n phi(x)."""
    if n < 0:
        raise ValidationError("truncation level must be nonnegative")
    phi = np.asarray(phi, dtype=float)
    if np.any(phi <= 0):
        raise ValidationError("truncation weight phi must be strictly positive")

    def func(nodes, y):
        return np.minimum(f.func(nodes, y), n * _coef(phi, nodes))

    def deriv(nodes, y):
        clamped = f.func(nodes, y) >= n * _coef(phi, nodes)
        return np.where(clamped, 0.0, f.derivative(y, nodes))

    return Nonlinearity(func, deriv, f.neg_slope, name=f"{f.name} ^ {n}phi",
                        nonincreasing=f.nonincreasing, abs_monotone=f.abs_monotone,
                        params={"base": f.params, "truncate_above": n})


def reflect(f):
    """f~(x, y) = -f(x, -y)."""
    if getattr(f, "_reflected_from", None) is not None:
        return f._reflected_from

    def func(nodes, y):
        return -f.func(nodes, -np.asarray(y))

    def deriv(nodes, y):
        return f.derivative(-np.asarray(y), nodes)

    def neg_slope(nodes, lo, hi):
        return f.neg_slope(-hi, -lo, nodes)

    g = Nonlinearity(func, deriv, neg_slope, name=f"reflect({f.name})", nonincreasing=f.nonincreasing,
                     abs_monotone=f.abs_monotone, bound=f.bound, params={"reflect": f.params})
    g._reflected_from = f
    return g


def scale(f, c):
    """c f for a constant c > 0."""
    if c <= 0:
        raise ValidationError("scale factor must be positive")

    def func(nodes, y):
        return c * f.func(nodes, y)

    def deriv(nodes, y):
        return c * f.derivative(y, nodes)

    def neg_slope(nodes, lo, hi):
        return c * f.neg_slope(lo, hi, nodes)

    bound = None if f.bound is None else c * f.bound
    return Nonlinearity(func, deriv, neg_slope, name=f"{c:g}*{f.name}", nonincreasing=f.nonincreasing,
                        abs_monotone=f.abs_monotone, bound=bound, params={"scale": c, "base": f.params})


def clamp_argument(f, lower, upper):
    """f^(x, y) = f(x, (y ^ upper(x)) v lower(x))."""
    lower = np.asarray(lower, dtype=float)
    upper = np.asarray(upper, dtype=float)

    def clip(nodes, y):
        return np.clip(y, _coef(lower, nodes), _coef(upper, nodes))

    def func(nodes, y):
        return f.func(nodes, clip(nodes, y))

    def deriv(nodes, y):
        y = np.asarray(y, dtype=float)
        inside = (y >= _coef(lower, nodes)) & (y <= _coef(upper, nodes))
        return np.where(inside, f.derivative(clip(nodes, y), nodes), 0.0)

    def neg_slope(nodes, lo, hi):
        return f.neg_slope(clip(nodes, lo), clip(nodes, hi), nodes)

    return Nonlinearity(func, deriv, neg_slope, name=f"clamp({f.name})", nonincreasing=f.nonincreasing,
                        params={"clamp": f.params})


# -- envelopes and condition checks ---------------------------------------


def envelope(f, lower, upper, nodes=None):
    """g_i = sup over y in [lower_i, upper_i] of |f(x_i, y)|."""
    lower = np.atleast_1d(np.asarray(lower, dtype=float))
    upper = np.atleast_1d(np.asarray(upper, dtype=float))
    lower, upper = np.broadcast_arrays(lower, upper)
    if np.any(lower > upper):
        raise ValidationError("bracket violation: lower > upper")
    nodes = np.arange(len(lower)) if nodes is None else np.asarray(nodes)
    if f.abs_monotone:
        return np.maximum(np.abs(f(lower, nodes)), np.abs(f(upper, nodes)))
    samples = 257
    t = np.linspace(0.0, 1.0, samples)
    y = lower[:, None] + (upper - lower)[:, None] * t[None, :]
    vals = np.abs(f.func(nodes[:, None], y) * np.ones_like(y))
    k = vals.argmax(axis=1)
    rows = np.arange(len(lower))
    best = vals[rows, k]
    a = y[rows, np.maximum(k - 1, 0)]
    b = y[rows, np.minimum(k + 1, samples - 1)]
    for _ in range(60):
        c = b - _INV_GOLDEN * (b - a)
        d = a + _INV_GOLDEN * (b - a)
        fc, fd = np.abs(f(c, nodes)), np.abs(f(d, nodes))
        best = np.maximum(best, np.maximum(fc, fd))
        left = fc > fd
        b = np.where(left, d, b)
        a = np.where(left, a, c)
    return best


def _scan_order(M, levels=12):
    """Sample values ordered outward from |y| = 1: 1, -1, 2, -2, 1/2, -1/2, ..."""
    out = [0.0]
    scales = [1.0]
    for k in range(1, levels):
        scales += [2.0**k, 2.0**-k]
    for s in scales:
        if s <= M:
            out += [s, -s]
    out += list(np.linspace(-M, M, 201))
    return np.array(out)


@dataclass
class ConditionReport:
    car_ok: bool
    sig_ok: bool
    M_ok: bool
    qM_ok: bool = True
    int_ok: object = None
    M_norm: float = np.nan
    int_norm: float = np.nan
    witnesses: dict = field(default_factory=dict)
    notes: list = field(default_factory=list)


def validate(f, space, rho=None, M=2.0, bracket=None):
    """Check Car), Sig), M) and, for a supplied bracket, Int) on samples.

    qM) holds trivially on a finite space. Int) quantifies over all brackets;
    only the supplied one is checked, and the report says so.
    """
    n = space.n
    rho = np.ones(n) if rho is None else np.asarray(rho, dtype=float)
    ys = _scan_order(M)
    nodes = np.arange(n)
    Y = np.broadcast_to(ys[None, :], (n, len(ys)))
    N = np.broadcast_to(nodes[:, None], Y.shape)
    F = f.func(N, Y) * np.ones(Y.shape)
    witnesses = {}

    prod = F * Y
    sig_ok = bool(np.all(prod <= 0))
    if not sig_ok:
        i, k = np.argwhere(prod > 0)[0]
        witnesses["sig"] = {"node": int(i), "y": float(Y[i, k]), "f": float(F[i, k])}

    car_ok = bool(np.all(np.isfinite(F)))
    if not car_ok:
        i, k = np.argwhere(~np.isfinite(F))[0]
        witnesses["car"] = {"node": int(i), "y": float(Y[i, k])}
    else:
        jumps = []
        for eps in (1e-6, 1e-9):
            jumps.append(np.abs(f.func(N, Y + eps) * np.ones(Y.shape) - F))
        scale = 1.0 + np.abs(F)
        stuck = (jumps[1] > 1e-6 * scale) & (jumps[1] > 0.5 * jumps[0])
        if np.any(stuck):
            car_ok = False
            i, k = np.argwhere(stuck)[0]
            witnesses["car"] = {"node": int(i), "y1": float(Y[i, k]), "y2": float(Y[i, k] + 1e-9)}

    g = envelope(f, -M * np.ones(n), M * np.ones(n))
    M_norm = float(np.sum(rho * space.m * g))
    M_ok = bool(np.isfinite(M_norm))
    if not M_ok:
        witnesses["M"] = {"node": int(np.argmax(~np.isfinite(g))), "M": M}

    report = ConditionReport(car_ok, sig_ok, M_ok, True, None, M_norm, np.nan, witnesses,
                             ["qM holds on finite spaces: every function of finitely many nodes is integrable"])
    if bracket is not None:
        lo, hi = bracket
        gi = envelope(f, lo, hi)
        report.int_norm = float(np.sum(rho * space.m * gi))
        report.int_ok = bool(np.isfinite(report.int_norm))
        report.notes.append("Int checked only for the supplied bracket")
    return report
