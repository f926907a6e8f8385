"""Jump kernels a(x,y) / (|x-y|^d phi(|x-y|)) and the structural checks on phi.

A kernel profile knows three radial quantities of its scale function:

    inv_phi(r)   1 / phi(r)
    tail(s)      int_s^inf dr / (r phi(r))       (exterior killing per direction)
    inner(s)     int_0^s r / phi(r) dr           (second moment of the singular cell)

Power mixtures 1/phi(r) = sum_k w_k r^(-2 alpha_k) have all three in closed
form; an arbitrary increasing phi falls back on adaptive quadrature.
"""
from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np
from scipy import integrate

from .errors import ValidationError

_GL_NODES, _GL_WEIGHTS = np.polynomial.legendre.leggauss(64)


class PowerMixture:
    """Scale function with 1/phi(r) = sum_k w_k r^(-2 alpha_k).

    A single term (alpha, 1) is the fractional Laplacian scale phi(r) = r^(2 alpha);
    several terms give the mixed stable operators.
    """

    def __init__(self, terms):
        terms = [(float(a), float(w)) for a, w in terms]
        if not terms:
            raise ValidationError("power mixture needs at least one (alpha, weight) term")
        for a, w in terms:
            if not 0.0 < a < 1.0:
                raise ValidationError(f"stability index alpha={a} outside (0, 1)")
            if w <= 0.0:
                raise ValidationError(f"mixing weight {w} must be positive")
        self.terms = terms

    def __repr__(self):
        return f"PowerMixture({self.terms})"

    def inv_phi(self, r):
        r = np.asarray(r, dtype=float)
        return sum(w * r ** (-2 * a) for a, w in self.terms)

    def phi(self, r):
        return 1.0 / self.inv_phi(r)

    def tail(self, s):
        s = np.asarray(s, dtype=float)
        return sum(w * s ** (-2 * a) / (2 * a) for a, w in self.terms)

    def inner(self, s):
        s = np.asarray(s, dtype=float)
        return sum(w * s ** (2 - 2 * a) / (2 - 2 * a) for a, w in self.terms)


class ScaleFunction:
    """Arbitrary strictly increasing phi with phi(0) = 0, integrated numerically."""

    def __init__(self, phi):
        self._phi = phi

    def phi(self, r):
        return np.asarray(self._phi(np.asarray(r, dtype=float)), dtype=float)

    def inv_phi(self, r):
        return 1.0 / self.phi(r)

    def tail(self, s):
        def one(x):
            val, _ = integrate.quad(lambda r: 1.0 / (r * float(self._phi(r))), x, np.inf, limit=200)
            return val

        return np.vectorize(one, otypes=[float])(np.asarray(s, dtype=float))

    def inner(self, s):
        def one(x):
            val, _ = integrate.quad(lambda r: r / float(self._phi(r)), 0.0, x, limit=200)
            return val

        return np.vectorize(one, otypes=[float])(np.asarray(s, dtype=float))


def profile_for(kind, alpha=None, mixing=None, phi=None):
    if kind == "fractional":
        if alpha is None:
            raise ValidationError("fractional operator needs alpha")
        return PowerMixture([(alpha, 1.0)])
    if kind == "mixed_stable":
        if not mixing:
            raise ValidationError("mixed_stable operator needs a mixing measure")
        return PowerMixture(mixing)
    if kind == "nonlocal":
        if phi is None:
            if alpha is None:
                raise ValidationError("nonlocal operator needs phi or alpha")
            return PowerMixture([(alpha, 1.0)])
        if isinstance(phi, (PowerMixture, ScaleFunction)):
            return phi
        return ScaleFunction(phi)
    raise ValidationError(f"no jump kernel for operator kind {kind!r}")


def sphere_integral(points, lo, hi, g):
    """Integrate g(s(theta)) over unit directions theta, for each point.

    s(theta) is the distance from the point to the boundary of the box
    [lo, hi] along theta. In 1D the "sphere" is the two directions +-1.
    For d = 2 the circle is split at the four corner directions so that the
    exit side is fixed on each arc and the integrand is smooth.
    """
    points = np.atleast_2d(np.asarray(points, dtype=float))
    lo = np.asarray(lo, dtype=float)
    hi = np.asarray(hi, dtype=float)
    d = points.shape[1]
    if d == 1:
        x = points[:, 0]
        return g(x - lo[0]) + g(hi[0] - x)
    if d != 2:
        raise ValidationError("sphere integrals implemented for d = 1, 2")
    x, y = points[:, 0], points[:, 1]
    right, left = hi[0] - x, x - lo[0]
    top, bottom = hi[1] - y, y - lo[1]
    if min(right.min(), left.min(), top.min(), bottom.min()) <= 0:
        raise ValidationError("point on or outside the box boundary")
    t1 = np.arctan2(top, right)
    t2 = np.pi - np.arctan2(top, left)
    t3 = np.pi + np.arctan2(bottom, left)
    t4 = 2 * np.pi - np.arctan2(bottom, right)
    arcs = [
        (t4 - 2 * np.pi, t1, right, 0.0),
        (t1, t2, top, 0.5 * np.pi),
        (t2, t3, left, np.pi),
        (t3, t4, bottom, 1.5 * np.pi),
    ]
    total = np.zeros(len(points))
    for a, b, dist, normal in arcs:
        half = 0.5 * (b - a)
        theta = 0.5 * (a + b)[:, None] + half[:, None] * _GL_NODES[None, :]
        s = dist[:, None] / np.cos(theta - normal)
        total += half * (g(s) @ _GL_WEIGHTS)
    return total


@dataclass
class KernelReport:
    A_ok: bool
    B_ok: bool
    C_ok: bool
    monotone: bool
    c1: float = np.nan
    c2: float = np.nan
    c3: float = np.nan
    c4: float = np.nan
    c5: float = np.nan
    delta1: float = np.nan
    delta2: float = np.nan
    witness: dict = field(default_factory=dict)

    @property
    def ok(self):
        return self.A_ok and self.B_ok and self.C_ok


def _small_scale_integral(phi, r, shells=60):
    """int_0^r s/phi(s) ds by dyadic shells plus a geometric tail.

    Returns inf when the shell contributions stop decaying, i.e. when
    s/phi(s) behaves like s^p with p <= -1 near zero.
    """
    k = np.arange(shells)
    lo = r * 2.0 ** (-k - 1)
    hi = r * 2.0 ** (-k)
    half = 0.5 * (hi - lo)
    s = 0.5 * (hi + lo)[:, None] + half[:, None] * _GL_NODES[None, :]
    vals = s / phi(s)
    contrib = half * (vals @ _GL_WEIGHTS)
    q = contrib[-1] / contrib[-2]
    if not np.isfinite(q) or q >= 1.0 - 1e-9:
        return np.inf
    return contrib.sum() + contrib[-1] * q / (1.0 - q)


def check_kernel_conditions(phi, r_grid, a_samples=None):
    """Numerically check the growth conditions on a kernel scale function.

    ``phi`` is a vectorized callable (or a profile with a ``phi`` method),
    ``r_grid`` a positive increasing sample of radii, ``a_samples`` optional
    values of the coefficient a(x, y). Failures are reported, never raised.
    """
    if hasattr(phi, "phi"):
        phi = phi.phi
    r = np.asarray(r_grid, dtype=float)
    if r.ndim != 1 or len(r) < 2 or np.any(r <= 0) or np.any(np.diff(r) <= 0):
        raise ValidationError("r_grid must be positive and strictly increasing")
    witness = {}
    pr = np.asarray(phi(r), dtype=float)

    if a_samples is None:
        c1 = c2 = 1.0
    else:
        a = np.asarray(a_samples, dtype=float)
        c1, c2 = float(a.min()), float(a.max())
    A_ok = bool(c1 > 0 and np.isfinite(c2))
    if not A_ok:
        witness["A"] = {"c1": c1, "c2": c2}

    monotone = bool(np.all(pr > 0) and np.all(np.diff(pr) > 0))
    if not monotone:
        bad = int(np.argmax(np.diff(pr) <= 0)) if np.any(np.diff(pr) <= 0) else 0
        witness["monotone"] = {"r": float(r[bad]), "R": float(r[bad + 1])}

    integrals = np.array([_small_scale_integral(phi, ri) for ri in r])
    if np.all(np.isfinite(integrals)) and np.all(pr > 0):
        c3 = float(np.max(integrals * pr / r**2))
        B_ok = True
    else:
        c3 = np.inf
        B_ok = False
        witness["B"] = {"r": float(r[int(np.argmax(~np.isfinite(integrals)))]), "integral": "diverges"}

    if monotone:
        slopes = np.diff(np.log(pr)) / np.diff(np.log(r))
        d1, d2 = float(slopes.min()), float(slopes.max())
        ratio = pr[None, :] / pr[:, None]
        scale = r[None, :] / r[:, None]
        upper = np.triu(np.ones((len(r), len(r)), dtype=bool))
        c4 = float(np.min((ratio / scale**d1)[upper]))
        c5 = float(np.max((ratio / scale**d2)[upper]))
        C_ok = bool(d1 > 0 and c4 > 0 and np.isfinite(c5))
        if not C_ok:
            witness["C"] = {"delta1": d1}
    else:
        d1 = d2 = c4 = c5 = np.nan
        C_ok = False
    return KernelReport(A_ok, B_ok, C_ok, monotone, c1, c2, c3, c4, c5, d1, d2, witness)
