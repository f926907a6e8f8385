"""Seeded random instances and the executable law suites.

On a fixed finite space every measure is good, so the reduction laws hold
at the discrete level; the suite still catches implementation errors since
both sides of each law are computed through the same truncated schedule.
"""
from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np

from .dirichlet import FormMatrix, StateSpace
from .measures import DiscreteMeasure, tv_norm
from .nonlinearity import exponential, power
from .reduction import is_good, project, reduce, reduce_min
from .solver import apriori_check, natural_bracket, potential, residual_measure, solve

LAW_TOL = 1e-8

LAWS = (
    "contraction", "diffuse_preservation", "meet", "join", "orthogonal_additivity",
    "restriction", "smooth_shift", "structure", "concentrated_commutation",
    "monotonicity", "positivity", "min_above", "sandwich", "positive_part_good",
    "projection_minimality",
)


def random_form(rng, n, density=0.4, m_range=(0.5, 2.0)):
    """Transient Markov form: random symmetric jumps plus strictly positive killing."""
    J = np.triu(rng.uniform(0.0, 1.0, (n, n)) * (rng.uniform(size=(n, n)) < density), 1)
    J = J + J.T
    kappa = rng.uniform(0.05, 1.0, n)
    B = np.diag(J.sum(axis=1) + kappa) - J
    m = rng.uniform(*m_range, n)
    space = StateSpace(np.arange(n, dtype=float), m)
    return FormMatrix(B, space, "random")


def random_measure(rng, space, scale=1.0, p_diffuse=0.6, p_atom=0.3, sign=None):
    n = space.n
    dens = rng.normal(0.0, scale, n) * (rng.uniform(size=n) < p_diffuse)
    conc = rng.normal(0.0, scale, n) * (rng.uniform(size=n) < p_atom)
    if sign == "pos":
        dens, conc = np.abs(dens), np.abs(conc)
    elif sign == "neg":
        dens, conc = -np.abs(dens), -np.abs(conc)
    return DiscreteMeasure(space, dens * space.m, conc)


def scaled_to(form, mu, box):
    """Rescale mu so that max R|mu| equals ``box``."""
    peak = float(potential(form, mu.abs.total).max())
    return mu if peak == 0 else mu * (box / peak)


@dataclass
class LawTally:
    checks: int = 0
    failures: int = 0
    worst: float = 0.0

    def record(self, discrepancy):
        self.checks += 1
        self.worst = max(self.worst, float(discrepancy))
        if discrepancy > LAW_TOL:
            self.failures += 1
            return False
        return True


@dataclass
class PropertySuiteReport:
    seed: int
    instances: int
    laws: dict
    census: dict
    failures: list = field(default_factory=list)

    @property
    def ok(self):
        return all(t.failures == 0 for t in self.laws.values())

    @property
    def worst(self):
        return max(t.worst for t in self.laws.values())

    def to_csv(self, path):
        with open(path, "w") as fh:
            fh.write("# schema: law,checks,failures,worst_discrepancy\n")
            fh.write(f"# seed={self.seed} instances={self.instances} "
                     + " ".join(f"{k}={v}" for k, v in sorted(self.census.items())) + "\n")
            fh.write("law,checks,failures,worst_discrepancy\n")
            for name in self.laws:
                t = self.laws[name]
                fh.write(f"{name},{t.checks},{t.failures},{t.worst:.6e}\n")


def _excess(a, b, rho=None):
    """|| (a - b)^+ ||_rho for measures: how far a <= b fails."""
    d = a - b
    return tv_norm(d.pos, rho)


def property_suite(seed=0, instances=200, f=None, max_n=32, projection_samples=50, box=1.5):
    """Evaluate every reduction law on seeded random instances."""
    f = power(3) if f is None else f
    rng = np.random.default_rng(seed)
    tallies = {name: LawTally() for name in LAWS}
    census = {"nodes_total": 0, "atoms_total": 0, "mixed_sign": 0}
    failures = []
    for k in range(instances):
        n = int(rng.integers(2, max_n + 1))
        form = random_form(rng, n)
        space = form.space
        mu = scaled_to(form, random_measure(rng, space), box)
        nu = scaled_to(form, random_measure(rng, space), box)
        census["nodes_total"] += n
        census["atoms_total"] += int(np.count_nonzero(mu.concentrated))
        census["mixed_sign"] += int(mu.total.min() < 0 < mu.total.max())

        def star(x):
            return reduce(form, f, x).mu_star

        def law(name, value):
            if not tallies[name].record(value):
                failures.append({"instance": k, "law": name, "discrepancy": float(value), "n": n,
                                 "B": form.B.tolist(), "m": space.m.tolist(),
                                 "mu": [mu.diffuse.tolist(), mu.concentrated.tolist()],
                                 "nu": [nu.diffuse.tolist(), nu.concentrated.tolist()], "f": f.name})

        rep = reduce(form, f, mu)
        ms = rep.mu_star
        law("contraction", tv_norm((ms.abs - mu.abs).pos))
        law("diffuse_preservation", tv_norm(ms.split_dc()[0] - mu.split_dc()[0]) + rep.defect)
        ns = star(nu)
        law("meet", tv_norm(star(mu.inf(nu)) - ms.inf(ns)))
        law("join", tv_norm(star(mu.sup(nu)) - ms.sup(ns)))

        # orthogonal pair: split the nodes in two halves
        perm = rng.permutation(n)
        A, Bset = perm[: n // 2], perm[n // 2:]
        mu_a, nu_b = mu.restrict(A), nu.restrict(Bset)
        sa, sb = star(mu_a), star(nu_b)
        law("orthogonal_additivity", tv_norm(star(mu_a + nu_b) - (sa + sb))
            + tv_norm(sa.restrict(Bset)) + tv_norm(sb.restrict(A)))
        law("restriction", tv_norm(star(mu.restrict(A)) - ms.restrict(A)))

        smooth = DiscreteMeasure(space, rng.normal(0.0, 0.2, n) * space.m)
        law("smooth_shift", tv_norm(star(mu + smooth) - (ms + smooth)))

        mu_d, mu_c = mu.split_dc()
        structure = mu_d - mu_c.neg + star(mu_c.pos)
        law("structure", tv_norm(ms - structure))
        law("concentrated_commutation", tv_norm(star(mu_c) - ms.split_dc()[1]))

        bump = DiscreteMeasure(space, np.abs(rng.normal(0.0, 0.1, n)) * space.m)
        law("monotonicity", _excess(ms, star(mu + bump)))
        law("positivity", tv_norm(star(mu.pos).neg))
        law("min_above", _excess(mu, reduce_min(form, f, mu).mu_star))

        lo_good, hi_good = _is_good(form, f, mu.inf(nu)), _is_good(form, f, mu.sup(nu))
        law("sandwich", 0.0 if (not (lo_good and hi_good) or _is_good(form, f, mu)) else 1.0)
        law("positive_part_good", 0.0 if _is_good(form, f, mu) == _is_good(form, f, mu.pos) else 1.0)

        if k < projection_samples:
            pi = project(form, f, mu)
            gap = (mu - pi).abs
            worst = 0.0
            for _ in range(projection_samples):
                other = scaled_to(form, random_measure(rng, space), box)
                worst = max(worst, tv_norm((gap - (mu - other).abs).pos))
            law("projection_minimality", worst)
    return PropertySuiteReport(seed, instances, tallies, census, failures)


def _is_good(form, f, mu):
    return is_good(form, f, mu)[0]


@dataclass
class SolverSuiteReport:
    seed: int
    rows: list
    barrier_checks: int
    barrier_worst: float

    @property
    def ok(self):
        return all(r["apriori_ok"] and r["residual"] <= 1e-10 for r in self.rows) and self.barrier_worst <= 1e-10

    def to_csv(self, path):
        with open(path, "w") as fh:
            fh.write("# schema: instance,family,n,residual,apriori_ok,barrier_excess\n")
            fh.write(f"# seed={self.seed} barrier_checks={self.barrier_checks} "
                     f"barrier_worst={self.barrier_worst:.6e}\n")
            fh.write("instance,family,n,residual,apriori_ok,barrier_excess\n")
            for r in self.rows:
                fh.write(f"{r['instance']},{r['family']},{r['n']},{r['residual']:.6e},"
                         f"{int(r['apriori_ok'])},{r['barrier']:.6e}\n")


def solver_suite(seed=0, instances=200, max_n=32, box=2.0):
    """A-priori bounds of solutions and the R mu^+ barrier for subsolutions."""
    rng = np.random.default_rng(seed)
    families = {"cubic": power(3), "exp": exponential()}
    rows = []
    barrier_checks, barrier_worst = 0, -np.inf
    for k in range(instances):
        name = "cubic" if k % 2 == 0 else "exp"
        f = families[name]
        n = int(rng.integers(1, max_n + 1))
        form = random_form(rng, n)
        mu = scaled_to(form, random_measure(rng, form.space), rng.uniform(0.1, box))
        rep = solve(form, f, mu)
        ok = apriori_check(form, f, rep.u, mu)
        lower, upper = natural_bracket(form, mu.total)
        # certified subsolutions: the bracket seed, the solution, their
        # maximum and random perturbations below the solution
        candidates = [lower, rep.u, np.maximum(lower, rep.u - 0.1)]
        for _ in range(5):
            candidates.append(rep.u - np.abs(rng.normal(0.0, 0.5, n)))
        excess = -np.inf
        for c in candidates:
            if residual_measure(form, f, c, mu).is_sub:
                barrier_checks += 1
                excess = max(excess, float((c - upper).max()))
        barrier_worst = max(barrier_worst, excess)
        rows.append({"instance": k, "family": name, "n": n, "residual": rep.final_residual,
                     "apriori_ok": ok, "barrier": excess})
    return SolverSuiteReport(seed, rows, barrier_checks, barrier_worst)
