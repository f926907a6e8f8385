"""Semilinear solves -Au = f(., u) + mu and the sub/supersolution machinery.

Discretely the equation reads B u = m * f(u) + mu (node masses). The
residual measure of a candidate u is

    nu = mu + m * f(u) - B u,

so nu >= 0 marks a subsolution, nu <= 0 a supersolution and nu = 0 a
solution.
"""
from __future__ import annotations

import weakref
from dataclasses import dataclass, field

import numpy as np
from scipy import linalg

from .errors import FormError, InvariantViolation, SolverError, ValidationError
from .measures import DiscreteMeasure
from .nonlinearity import clamp_argument, envelope

TOL = 1e-10
MAX_ITER = 100_000
CERT_TOL = 1e-10

_FACTORS = weakref.WeakKeyDictionary()


def _factor(form, shift=None):
    """Cholesky factor of B (cached per form) or of B + diag(shift)."""
    if shift is None:
        c = _FACTORS.get(form)
        if c is None:
            try:
                c = linalg.cho_factor(form.B)
            except linalg.LinAlgError:
                raise FormError("form not transient") from None
            _FACTORS[form] = c
        return c
    return linalg.cho_factor(form.B + np.diag(shift))


def potential(form, masses):
    """R applied to node masses: solves B u = masses."""
    return linalg.cho_solve(_factor(form), np.asarray(masses, dtype=float))


def masses_of(mu, n):
    if isinstance(mu, DiscreteMeasure):
        if mu.n != n:
            raise ValidationError("measure and form live on different spaces")
        return mu.total
    arr = np.asarray(mu, dtype=float)
    if arr.shape != (n,):
        raise ValidationError("measure and form live on different spaces")
    return arr


@dataclass
class SolveReport:
    u: np.ndarray
    iterations: int
    final_residual: float
    apriori_ok: bool
    method: str
    f_of_u: np.ndarray = None
    Rmu: np.ndarray = None
    residual: np.ndarray = None
    history: list = field(default_factory=list)

    def to_csv(self, path):
        with open(path, "w") as fh:
            fh.write("# schema: node,u,f_of_u,Rmu,residual\n")
            fh.write(f"# method={self.method} iterations={self.iterations} "
                     f"final_residual={self.final_residual:.6e} apriori_ok={self.apriori_ok}\n")
            fh.write("node,u,f_of_u,Rmu,residual\n")
            for i in range(len(self.u)):
                fh.write(f"{i},{self.u[i]:.17g},{self.f_of_u[i]:.17g},{self.Rmu[i]:.17g},{self.residual[i]:.17g}\n")


@dataclass
class ResidualDecomposition:
    nu: DiscreteMeasure
    classification: str
    tol: float = CERT_TOL

    @property
    def is_sub(self):
        return self.classification in ("subsolution", "solution")

    @property
    def is_super(self):
        return self.classification in ("supersolution", "solution")


def residual_masses(form, f, u, mu):
    n = form.n
    return masses_of(mu, n) + form.m * f(u) - form.B @ u


def residual_measure(form, f, u, mu, tol=CERT_TOL):
    """Residual nu = mu + f(u) - (-A)u and its sign classification."""
    u = np.asarray(u, dtype=float)
    fu = f(u)
    if not np.all(np.isfinite(fu)):
        raise ValidationError("f(., u) is not finite")
    nu = residual_masses(form, f, u, mu)
    lo, hi = nu.min(initial=0.0), nu.max(initial=0.0)
    if lo >= -tol and hi <= tol:
        cls = "solution"
    elif lo >= -tol:
        cls = "subsolution"
    elif hi <= tol:
        cls = "supersolution"
    else:
        cls = "neither"
    return ResidualDecomposition(DiscreteMeasure(form.space, nu), cls, tol)


def apriori_check(form, f, u, mu, rho=None, tol=1e-8):
    """|u| + R|f(u)| <= R|mu| and ||f(u)||_{L1(rho m)} <= ||mu||_rho."""
    mass = masses_of(mu, form.n)
    rho = np.ones(form.n) if rho is None else rho
    fu = np.abs(f(u)) * form.m
    lhs = np.abs(u) + potential(form, fu)
    rhs = potential(form, np.abs(mass))
    pointwise = bool(np.all(lhs <= rhs + tol))
    integral = bool(rho @ fu <= rho @ np.abs(mass) + tol)
    return pointwise and integral


def _finish(form, f, mu, u, iterations, method, history=()):
    mass = masses_of(mu, form.n)
    fu = f(u)
    res = potential(form, residual_masses(form, f, u, mu))
    return SolveReport(
        u=u, iterations=iterations, final_residual=float(np.abs(res).max(initial=0.0)),
        apriori_ok=apriori_check(form, f, u, mass), method=method, f_of_u=fu,
        Rmu=potential(form, mass), residual=res, history=list(history),
    )


def solve_fixed_point(form, f, mu, theta=0.5, tol=TOL, max_iter=MAX_ITER):
    """Damped Picard iteration u <- (1-theta) u + theta (R f(u) + R mu) from u0 = R mu.

    f is evaluated with its argument clamped to the a-priori box |y| <= R|mu|,
    which contains every solution; on that box f is bounded by its envelope g
    and each Picard image obeys |Phi(u)| <= R g + R|mu|.
    """
    if not 0 < theta <= 1:
        raise ValidationError("damping must lie in (0, 1]")
    mass = masses_of(mu, form.n)
    m = form.m
    box = potential(form, np.abs(mass))
    fb = clamp_argument(f, -box, box)
    bound = potential(form, m * envelope(f, -box, box)) + box
    Rmu = potential(form, mass)
    u = Rmu.copy()
    best, best_res = u, np.inf
    history = []
    for it in range(1, int(max_iter) + 1):
        image = potential(form, m * fb(u)) + Rmu
        if np.any(np.abs(image) > bound * (1 + 1e-12) + 1e-12):
            raise InvariantViolation("Picard image left the Schauder ball")
        res = float(np.abs(image - u).max(initial=0.0))
        history.append(res)
        if res < best_res:
            best, best_res = u, res
        if res <= tol:
            break
        u = (1 - theta) * u + theta * image
        if not np.all(np.isfinite(u)):
            raise SolverError("Picard iteration diverged", best, best_res, it)
    else:
        raise SolverError("Picard iteration cap exceeded", best, best_res, int(max_iter))
    report = _finish(form, f, mass, u, it, "picard", history)
    return report


def _certify(form, f, mu, u, want):
    rd = residual_measure(form, f, u, mu)
    ok = rd.is_sub if want == "sub" else rd.is_super
    return ok, rd


def solve_between(form, f, mu, lower, upper, tol=TOL, max_iter=MAX_ITER, start="upper",
                  certify=True, newton=True):
    """Maximal (start="upper") or minimal (start="lower") solution in [lower, upper].

    Monotone iteration with a nodewise shift lam_i bounding the decreasing
    slope of the clamped nonlinearity:

        (B + diag(lam m)) u_{k+1} = m (f^(u_k) + lam u_k) + mu

    For nonincreasing f a Newton candidate is tried first and accepted only
    when it stays in [lower, u_k] and is itself a supersolution (subsolution
    when started from below), which keeps the sequence monotone.
    """
    n = form.n
    mass = masses_of(mu, n)
    lower = np.array(lower, dtype=float) * np.ones(n)
    upper = np.array(upper, dtype=float) * np.ones(n)
    if np.any(lower > upper):
        raise ValidationError("bracket violation: lower > upper somewhere")
    if certify:
        ok, rd = _certify(form, f, mass, lower, "sub")
        if not ok:
            raise ValidationError(f"lower bound is not a subsolution (min nu = {rd.nu.total.min():.3e})")
        ok, rd = _certify(form, f, mass, upper, "super")
        if not ok:
            raise ValidationError(f"upper bound is not a supersolution (max nu = {rd.nu.total.max():.3e})")
    method = "monotone_from_above" if start == "upper" else "monotone_from_below"
    sign = -1.0 if start == "upper" else 1.0
    u = (upper if start == "upper" else lower).copy()
    res = np.abs(potential(form, residual_masses(form, f, u, mass))).max(initial=0.0)
    if res <= tol or np.array_equal(lower, upper):
        return _finish(form, f, mass, u, 1, method)

    fh = clamp_argument(f, lower, upper)
    lam = fh.neg_slope(lower, upper)
    if not np.all(np.isfinite(lam)):
        raise ValidationError("one-sided Lipschitz bound unavailable on the bracket")
    m, B = form.m, form.B
    shifted = _factor(form, lam * m)
    use_newton = newton and f.nonincreasing
    scale = max(1.0, float(np.abs(upper).max()), float(np.abs(lower).max()))
    slack = 1e-9 * scale
    history = []
    for it in range(1, int(max_iter) + 1):
        step = None
        if use_newton:
            step = _newton_candidate(form, fh, mass, u, lower, upper, sign)
        if step is None:
            step = linalg.cho_solve(shifted, m * (fh(u) + lam * u) + mass)
        change = sign * (step - u)
        if change.min(initial=0.0) < -slack:
            raise InvariantViolation(f"monotone iteration not monotone (step {it}, {change.min():.3e})")
        u_next = np.clip(step, lower, upper)
        delta = float(np.abs(u_next - u).max(initial=0.0))
        u = u_next
        history.append(delta)
        res = float(np.abs(potential(form, residual_masses(form, fh, u, mass))).max(initial=0.0))
        if res <= tol:
            break
        if delta == 0.0:
            # stagnated at rounding level; accept if the residual is at that level too
            if res <= 1e-12 * scale:
                break
            raise SolverError("monotone iteration stagnated", u, res, it)
        if not np.all(np.isfinite(u)):
            raise SolverError("monotone iteration produced non-finite values", u, res, it)
    else:
        raise SolverError("monotone iteration cap exceeded", u, res, int(max_iter))
    return _finish(form, f, mass, u, it, method, history)


def _newton_candidate(form, fh, mass, u, lower, upper, sign):
    """Safeguarded Newton step, or None when no damped step certifies."""
    m, B = form.m, form.B
    F = B @ u - m * fh(u) - mass
    J = B - np.diag(m * fh.derivative(u))
    try:
        step = -linalg.solve(J, F, assume_a="sym")
    except (linalg.LinAlgError, ValueError):
        return None
    want = "super" if sign < 0 else "sub"
    for t in (1.0, 0.5, 0.25, 0.125):
        cand = u + t * step
        cand = np.minimum(np.maximum(cand, lower), u) if sign < 0 else np.maximum(np.minimum(cand, upper), u)
        nu = residual_masses(form, fh, cand, mass)
        tol = 1e-12 * max(1.0, float(np.abs(mass).max(initial=0.0)), float(np.abs(B @ cand).max(initial=0.0)))
        ok = nu.max(initial=0.0) <= tol if want == "super" else nu.min(initial=0.0) >= -tol
        if ok:
            return cand
    return None


def minimal_between(form, f, mu, lower, upper, **kw):
    return solve_between(form, f, mu, lower, upper, start="lower", **kw)


def natural_bracket(form, mu):
    """(-R mu^-, R mu^+): a sub/supersolution pair for every f with the sign condition."""
    mass = masses_of(mu, form.n)
    return -potential(form, np.maximum(-mass, 0.0)), potential(form, np.maximum(mass, 0.0))


def solve(form, f, mu, tol=TOL, **kw):
    """Maximal solution inside the natural bracket."""
    lo, hi = natural_bracket(form, mu)
    return solve_between(form, f, mu, lo, hi, tol=tol, **kw)


def max_of_subsolutions(form, f, mu, u, w):
    """u v w for certified subsolutions u, w; the result is re-certified."""
    for name, v in (("u", u), ("w", w)):
        ok, _ = _certify(form, f, mu, np.asarray(v, dtype=float), "sub")
        if not ok:
            raise ValidationError(f"{name} is not a certified subsolution")
    out = np.maximum(u, w)
    rd = residual_measure(form, f, out, mu)
    if not rd.is_sub:
        raise InvariantViolation("maximum of subsolutions failed certification")
    return out, rd


def existence_from_sub_super(form, f, mu, sub, sup, phi=None, tol=TOL):
    """Solution from an unordered subsolution / supersolution pair.

    With mu^* the reduced measure (largest good measure below mu) and mu_*
    the smallest good measure above mu, the solution u^* for mu^* is a
    subsolution and the maximal solution w for mu_* a supersolution; they
    are ordered, and the maximal solution between them solves the equation.
    """
    from .reduction import reduce, reduce_min

    mass = masses_of(mu, form.n)
    sub = np.asarray(sub, dtype=float) * np.ones(form.n)
    sup = np.asarray(sup, dtype=float) * np.ones(form.n)
    if not _certify(form, f, mass, sub, "sub")[0]:
        raise ValidationError("given subsolution failed certification")
    if not _certify(form, f, mass, sup, "super")[0]:
        raise ValidationError("given supersolution failed certification")
    mu_meas = mu if isinstance(mu, DiscreteMeasure) else DiscreteMeasure(form.space, mass)
    top = reduce(form, f, mu_meas, phi)
    bottom = reduce_min(form, f, mu_meas, phi)
    mu_low = bottom.mu_star.total
    lo, hi = natural_bracket(form, mu_low)
    w = solve_between(form, f, mu_low, lo, hi, tol=tol).u
    u_star = top.u_star
    if np.any(u_star > w + 1e-9):
        raise SolverError("reduced solutions are not ordered", u_star)
    lower = np.minimum(u_star, w)
    rep = solve_between(form, f, mass, lower, w, tol=tol, certify=False)
    return rep


def certify_maximal(form, f, mu, u, upper, lower=None, known=(), eps=(1e-3, 1e-1), tol=1e-8):
    """Operational maximality: perturbed supersolution starts reach u, and
    every known solution in the bracket lies below u."""
    mass = masses_of(mu, form.n)
    u = np.asarray(u, dtype=float)
    lower = natural_bracket(form, mass)[0] if lower is None else lower
    lower = np.minimum(lower, u)
    starts = 0
    for e in eps:
        start = np.asarray(upper, dtype=float) + e
        if not _certify(form, f, mass, start, "super")[0]:
            continue
        rep = solve_between(form, f, mass, lower, start, tol=min(tol, 1e-10) * 0.1)
        starts += 1
        if np.abs(rep.u - u).max() > tol:
            return False
    return all(np.all(np.asarray(v) <= u + tol) for v in known)
