"""Reduced measures: mu* via truncated nonlinearities, mu_* by reflection,
the projection onto good measures and the admissible approximation.

Level n solves -Au = (f v -n phi)(., u) + mu for its maximal solution u_n,
bracketed by the subsolution -R mu^- - n R phi and the supersolution R mu^+.
The u_n decrease to u*, and mu* = -Au* - f(., u*).
"""
from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np

from .errors import InvariantViolation, SolverError, ValidationError
from .measures import DiscreteMeasure
from .nonlinearity import reflect, scale, truncate_below
from .solver import (
    _certify,
    masses_of,
    max_of_subsolutions,
    natural_bracket,
    potential,
    solve,
    solve_between,
)

DEFAULT_SCHEDULE = tuple(2.0**k for k in range(15))
STOP_TOL = 1e-9


@dataclass
class ReductionReport:
    schedule: list
    per_level: list
    u_star: np.ndarray
    mu_star: DiscreteMeasure
    nu: DiscreteMeasure
    converged: bool
    defect: float = 0.0
    kind: str = "max"
    level_rows: list = field(default_factory=list)

    def to_csv(self, path):
        with open(path, "w") as fh:
            fh.write("# schema: n,sup_change,l1rho_f,atom_mass_estimate\n")
            fh.write(f"# kind={self.kind} converged={self.converged} defect={self.defect:.6e}\n")
            fh.write("n,sup_change,l1rho_f,atom_mass_estimate\n")
            for n, change, l1, atom in self.level_rows:
                fh.write(f"{n:.17g},{change:.17g},{l1:.17g},{atom:.17g}\n")


def _as_measure(form, mu):
    if isinstance(mu, DiscreteMeasure):
        if mu.n != form.n:
            raise ValidationError("measure and form live on different spaces")
        return mu
    return DiscreteMeasure(form.space, masses_of(mu, form.n))


def _check_schedule(schedule):
    s = [float(n) for n in schedule]
    if not s or any(n < 0 for n in s) or any(b <= a for a, b in zip(s, s[1:])):
        raise ValidationError("schedule must be nonempty, nonnegative and increasing")
    return s


def extract_mu_star(form, f, mu, u):
    """mu* from u*: diffuse part forced to mu_d, concentrated part read off on
    supp mu_c, everything else reported as a defect in rho-norm (rho = 1)."""
    total = form.B @ u - form.m * f(u)
    mu_d, mu_c = mu.split_dc()
    raw_c = total - mu_d.diffuse
    on_c = mu_c.concentrated != 0
    conc = np.where(on_c, raw_c, 0.0)
    defect = float(np.abs(np.where(on_c, 0.0, raw_c)).sum())
    # 0 <= nu <= mu_c^+ holds exactly; residual rounding is clipped and reported
    c_neg = np.maximum(-mu.concentrated, 0.0)
    nu_raw = conc + c_neg
    nu_c = np.clip(nu_raw, 0.0, np.maximum(mu.concentrated, 0.0))
    slack = float(np.abs(nu_c - nu_raw).max(initial=0.0))
    if slack > 1e-8 * max(1.0, float(np.abs(mu.total).max(initial=0.0))):
        raise InvariantViolation(f"reduced measure leaves [-mu_c^-, mu_c^+] by {slack:.3e}")
    defect += float(np.abs(nu_c - nu_raw).sum())
    conc = nu_c - c_neg
    star = DiscreteMeasure(form.space, mu_d.diffuse, conc)
    nu = DiscreteMeasure(form.space, None, nu_c)
    return star, nu, defect


def reduce(form, f, mu, phi=None, schedule=DEFAULT_SCHEDULE, tol=STOP_TOL, stop=True, solve_tol=None):
    """Reduced measure mu* (largest good measure below mu)."""
    mu = _as_measure(form, mu)
    schedule = _check_schedule(schedule)
    phi = np.ones(form.n) if phi is None else np.asarray(phi, dtype=float) * np.ones(form.n)
    if np.any(phi <= 0):
        raise ValidationError("truncation weight phi must be strictly positive")
    mass = mu.total
    neg_part, upper = natural_bracket(form, mass)
    Rphi = potential(form, form.m * phi)
    solve_tol = min(1e-10, 0.1 * tol) if solve_tol is None else solve_tol
    prev = None
    per_level, rows = [], []
    converged = False
    for n in schedule:
        fn = truncate_below(f, n, phi)
        lower = neg_part - n * Rphi
        if not _certify(form, fn, mass, lower, "sub")[0]:
            raise InvariantViolation(f"level {n}: seed subsolution failed certification")
        if not _certify(form, fn, mass, upper, "super")[0]:
            raise InvariantViolation(f"level {n}: R mu+ failed supersolution certification")
        if _certify(form, fn, mass, neg_part, "sub")[0]:
            lower, _ = max_of_subsolutions(form, fn, mass, lower, neg_part)
        start = upper
        if prev is not None and np.all(prev >= lower) and _certify(form, fn, mass, prev, "super")[0]:
            start = prev
        rep = solve_between(form, fn, mass, lower, start, tol=solve_tol, certify=False)
        u = rep.u
        if prev is not None and np.any(u > prev + 1e-9 * max(1.0, np.abs(prev).max())):
            raise InvariantViolation(f"level {n}: u_n increased along the schedule")
        change = np.inf if prev is None else float(np.abs(u - prev).max())
        per_level.append((n, u, change))
        fu = fn(u)
        clamped = f(u) < -n * phi
        atom = max(0.0, float(np.maximum(mu.concentrated, 0).sum() - (form.m * n * phi)[clamped].sum()))
        rows.append((n, change if np.isfinite(change) else -1.0, float(np.sum(form.m * np.abs(fu))), atom))
        prev = u
        if stop and change <= tol:
            converged = True
            break
    if not converged:
        converged = bool(np.all(f(prev) >= -schedule[-1] * phi))
    star, nu, defect = extract_mu_star(form, f, mu, prev)
    return ReductionReport(schedule, per_level, prev, star, nu, converged, defect, "max", rows)


def reduce_min(form, f, mu, phi=None, schedule=DEFAULT_SCHEDULE, tol=STOP_TOL, **kw):
    """mu_* (smallest good measure above mu) as -(-mu)^{*, reflect(f)}."""
    mu = _as_measure(form, mu)
    rep = reduce(form, reflect(f), -mu, phi, schedule, tol, **kw)
    per_level = [(n, -u, c) for n, u, c in rep.per_level]
    return ReductionReport(rep.schedule, per_level, -rep.u_star, -rep.mu_star, -rep.nu,
                           rep.converged, rep.defect, "min", rep.level_rows)


def is_good(form, f, mu, tol=1e-9):
    """Constructive goodness check: a solution of -Av = f(v) + mu exists to tol."""
    try:
        rep = solve(form, f, _as_measure(form, mu), tol=tol)
    except SolverError:
        return False, None
    return rep.final_residual <= tol, rep


def project(form, f, mu, phi=None, schedule=DEFAULT_SCHEDULE, tol=STOP_TOL, certify=True):
    """Pi_f(mu) = (mu^+)* + (-mu^-)_*."""
    mu = _as_measure(form, mu)
    top = reduce(form, f, mu.pos, phi, schedule, tol).mu_star
    bottom = reduce_min(form, f, -mu.neg, phi, schedule, tol).mu_star
    out = top + bottom
    if certify:
        good, _ = is_good(form, f, out)
        if not good:
            raise SolverError("projection failed the goodness certificate")
    return out


@dataclass
class ApproxStep:
    n: float
    u: np.ndarray
    g: np.ndarray
    g_norm: float
    admissible_norm: float


def admissible_approx(form, f, mu, n_values=(1, 2, 5, 10, 20, 50, 100, 200, 500, 1000), rho=None, tol=1e-10):
    """Diagonal approximation: u_n solves -Au = f(u)/n + mu and g_n = f(u_n)/n.

    mu + g_n is admissible: R(mu + g_n) = u_n, so f(., R(mu + g_n)) is finite.
    This is one constructive choice of g_n among many.
    """
    mu = _as_measure(form, mu)
    rho = np.ones(form.n) if rho is None else np.asarray(rho, dtype=float)
    steps = []
    for n in n_values:
        if n <= 0:
            raise ValidationError("approximation indices must be positive")
        rep = solve(form, scale(f, 1.0 / n), mu, tol=tol)
        g = f(rep.u) / n
        v = potential(form, mu.total + form.m * g)
        fv = f(v)
        if not np.all(np.isfinite(fv)):
            raise InvariantViolation("mu + g_n is not admissible")
        steps.append(ApproxStep(float(n), rep.u, g, float(rho @ (form.m * np.abs(g))),
                                float(rho @ (form.m * np.abs(fv)))))
    return steps
