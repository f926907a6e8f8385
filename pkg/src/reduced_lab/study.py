"""Refinement studies: how much of a point mass survives reduction as h -> 0.

Retention at a level is the least-squares coefficient c in u* ~ c G + b,
G = R delta_{x0} the potential of a unit atom, fitted on the annulus
2h <= |x - x0| <= 8h and divided by the atom's mass. Near the atom u* is
that singularity plus a slowly varying background (absorbed by b), so c
measures the concentrated mass the nonlinearity did not absorb.
"""
from __future__ import annotations

import time
from dataclasses import dataclass, field

import numpy as np
from scipy import stats

from .dirichlet import assemble, build_space, weights
from .errors import ValidationError
from .measures import DiscreteMeasure, tv_norm
from .reduction import DEFAULT_SCHEDULE, reduce
from .solver import potential

DENSE_CAP = {1: 4096, 2: 64 * 64}
TREND_THRESHOLD = 0.8


@dataclass
class StudyLevel:
    h: float
    n: int
    retention: float
    l1_u: float
    runtime: float
    converged: bool
    mu_star: DiscreteMeasure = None


@dataclass
class StudyResult:
    levels: list
    verdict: str
    spearman: float
    notes: list = field(default_factory=list)

    def to_csv(self, path):
        # runtimes go to the log only, so the CSV is byte-reproducible
        with open(path, "w") as fh:
            fh.write("# schema: h,N,retention,l1_varrho_u,converged\n")
            fh.write(f"# verdict={self.verdict} spearman={self.spearman:.6f}\n")
            fh.write("h,N,retention,l1_varrho_u,converged\n")
            for lv in self.levels:
                fh.write(f"{lv.h:.17g},{lv.n},{lv.retention:.12f},{lv.l1_u:.12f},{int(lv.converged)}\n")

    @property
    def retention(self):
        return np.array([lv.retention for lv in self.levels])


def retention(space, form, u, node, mass):
    e = np.zeros(space.n)
    e[node] = 1.0
    G = potential(form, e)
    r = np.linalg.norm(space.positions - space.positions[node], axis=1)
    h = space.h
    ann = (r >= 2 * h * (1 - 1e-9)) & (r <= 8 * h * (1 + 1e-9))
    if not np.any(ann):
        raise ValidationError("retention annulus holds no nodes; refine the grid")
    X = np.column_stack([G[ann], np.ones(int(ann.sum()))])
    coef = np.linalg.lstsq(X, u[ann], rcond=None)[0]
    return float(coef[0] / mass)


def trend_verdict(hs, values):
    """reduced: retention falls with h (Spearman >= 0.8); retained: no such
    fall and retention stays >= 0.9; inconclusive otherwise."""
    rho = float(stats.spearmanr(hs, values)[0]) if np.ptp(values) > 0 else 0.0
    if rho >= TREND_THRESHOLD:
        return "reduced", rho
    if np.min(values) >= 0.9:
        return "retained", rho
    return "inconclusive", rho


def build_measure(space, site, atom_mass=1.0, density=None):
    dens = None
    if density is not None:
        dens = density(space.positions) if callable(density) else density
    atoms = []
    node = None
    if atom_mass:
        node = space.nearest_node(site)
        atoms.append((node, atom_mass, "concentrated"))
    return DiscreteMeasure.from_parts(space, dens, atoms), node


def refinement_study(spec, f, hs, d=1, extent=(-1.0, 1.0), site=(0.0,), atom_mass=1.0, density=None,
                     phi=None, schedule=DEFAULT_SCHEDULE, exterior="dirichlet", dense_cap=None, log=None):
    hs = [float(h) for h in hs]
    if len(hs) < 4:
        raise ValidationError("refinement study needs at least 4 levels")
    if any(b >= a for a, b in zip(hs, hs[1:])):
        raise ValidationError("refinement levels must be strictly refining")
    cap = (dense_cap or DENSE_CAP).get(d, DENSE_CAP[2]) if not isinstance(dense_cap, int) else dense_cap
    levels = []
    for h in hs:
        space = build_space(d, extent, h, exterior)
        if space.n > cap:
            raise ValidationError(f"dense size N={space.n} exceeds the cap {cap}; use a coarser ladder")
        t0 = time.perf_counter()
        form = assemble(space, spec)
        mu, node = build_measure(space, site, atom_mass, density)
        phi_h = None if phi is None else (phi(space.positions) if callable(phi) else phi)
        rep = reduce(form, f, mu, phi_h, schedule)
        if node is None:
            total = tv_norm(mu)
            ret = tv_norm(rep.mu_star) / total if total else 1.0
        else:
            ret = retention(space, form, rep.u_star, node, atom_mass)
        varrho = weights(form).varrho
        l1 = float(varrho @ (space.m * np.abs(rep.u_star)))
        dt = time.perf_counter() - t0
        levels.append(StudyLevel(h, space.n, ret, l1, dt, rep.converged, rep.mu_star))
        if log is not None:
            log(f"h={h:.6g} N={space.n} retention={ret:.6f} converged={rep.converged} runtime={dt:.3f}s")
    verdict, rho = trend_verdict(hs, [lv.retention for lv in levels])
    return StudyResult(levels, verdict, rho)


@dataclass
class EquivalenceReport:
    f_study: StudyResult
    g_study: StudyResult
    mu_gap: list
    retention_gap: list
    constants: tuple

    @property
    def max_retention_gap(self):
        return float(np.max(self.retention_gap))

    def to_csv(self, path):
        with open(path, "w") as fh:
            fh.write("# schema: h,retention_f,retention_g,retention_gap,mu_star_gap_rho\n")
            fh.write(f"# constants c1={self.constants[0]} c2={self.constants[1]} r={self.constants[2]}\n")
            fh.write("h,retention_f,retention_g,retention_gap,mu_star_gap_rho\n")
            for lf, lg, gap, mg in zip(self.f_study.levels, self.g_study.levels, self.retention_gap, self.mu_gap):
                fh.write(f"{lf.h:.17g},{lf.retention:.12f},{lg.retention:.12f},{gap:.12f},{mg:.12e}\n")


def check_equivalence(f, g, c1, c2, r, y_max=1e3, samples=400):
    """Spot-check c1 <= |g|/|f| <= c2 for |y| >= r; returns a witness or None."""
    ys = np.geomspace(r, max(y_max, 2 * r), samples)
    for y in np.concatenate([ys, -ys]):
        fy, gy = abs(float(f(np.array([y]))[0])), abs(float(g(np.array([y]))[0]))
        ratio = gy / fy if fy > 0 else np.inf
        if not c1 <= ratio <= c2:
            return {"y": float(y), "ratio": float(ratio), "c1": c1, "c2": c2}
    return None


def asymptotic_equivalence_study(f, g, spec, hs, c1, c2, r, **kw):
    witness = check_equivalence(f, g, c1, c2, r)
    if witness is not None:
        raise ValidationError(f"asymptotic equivalence spot-check failed: {witness}")
    sf = refinement_study(spec, f, hs, **kw)
    sg = refinement_study(spec, g, hs, **kw)
    mu_gap = [tv_norm(a.mu_star - b.mu_star) for a, b in zip(sf.levels, sg.levels)]
    ret_gap = [abs(a.retention - b.retention) for a, b in zip(sf.levels, sg.levels)]
    return EquivalenceReport(sf, sg, mu_gap, ret_gap, (c1, c2, r))
