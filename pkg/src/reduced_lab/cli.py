"""lab: configuration-driven runner for solves, reductions, capacities,
law suites and refinement studies.

Exit codes: 0 success, 2 validation error, 3 solver failure. When an output
path is given, a log is written next to it (<out>.log); failures end the log
with a JSON error block.
"""
from __future__ import annotations

import argparse
import json
import sys
import time

import numpy as np

from . import config as cfgmod
from .capacity import capacity
from .errors import FormError, InvariantViolation, SolverError, ValidationError
from .reduction import admissible_approx, project, reduce
from .solver import solve, solve_between
from .study import asymptotic_equivalence_study, refinement_study
from .suite import property_suite, solver_suite

SCHEMAS = """CSV schemas (each file repeats its schema in a '# schema:' header line):
  solve     node,u,f_of_u,Rmu,residual
  reduce    n,sup_change,l1rho_f,atom_mass_estimate
  project   node,density,atom_mass,tag
  capacity  node,equilibrium,active
  suite     law,checks,failures,worst_discrepancy
  solver    instance,family,n,residual,apriori_ok,barrier_excess
  study     h,N,retention,l1_varrho_u,converged
  equiv     h,retention_f,retention_g,retention_gap,mu_star_gap_rho
"""


class RunLog:
    def __init__(self, out=None):
        self.path = None if out is None else f"{out}.log"
        self.lines = []

    def __call__(self, msg):
        self.lines.append(msg)
        print(msg, file=sys.stderr)

    def error(self, exc, code):
        block = {"error": {"type": type(exc).__name__, "message": str(exc), "exit_code": code}}
        if isinstance(exc, SolverError):
            block["error"]["residual"] = None if exc.residual is None else float(exc.residual)
            block["error"]["iterations"] = exc.iterations
        self(json.dumps(block, indent=2, sort_keys=True))

    def flush(self):
        if self.path:
            with open(self.path, "w") as fh:
                fh.write("\n".join(self.lines) + "\n")


def _default_out(cfg, suffix):
    return cfg.get("out") or f"{cfg.task}{suffix}.csv"


def run_config(cfg, log, out=None):
    task = cfg.task
    out = out or _default_out(cfg, "")
    if task == "suite":
        return _suite(cfg.seed, int(cfg.get("instances", "200")), cfg.get("kind", "laws"), out, log)
    if task in ("study", "equiv_study"):
        return _study(cfg, log, out)
    form = cfg.build_form()
    if task == "capacity":
        U = [int(x) for x in cfgmod.parse_list(cfg.get("set"))]
        res = capacity(form, U, tol=cfg.tol)
        _capacity_csv(res, out)
        log(json.dumps({"capacity": res.value, "iterations": res.iterations, "residual": res.residual}))
        return 0
    f = cfg.build_nonlinearity()
    mu = cfg.build_measure(form.space)
    if task == "solve":
        if "sub" in cfg.options and "super" in cfg.options:
            rep = solve_between(form, f, mu, _vector(cfg.get("sub"), form.n), _vector(cfg.get("super"), form.n),
                                tol=cfg.tol)
        else:
            rep = solve(form, f, mu, tol=cfg.tol)
        rep.to_csv(out)
        log(f"solve: method={rep.method} iterations={rep.iterations} residual={rep.final_residual:.3e} "
            f"apriori_ok={rep.apriori_ok}")
        return 0
    if task == "reduce":
        rep = reduce(form, f, mu, cfg.phi(form.space), cfg.schedule)
        rep.to_csv(out)
        log(f"reduce: levels={len(rep.per_level)} converged={rep.converged} defect={rep.defect:.3e}")
        if cfg.get("approx"):
            for step in admissible_approx(form, f, mu):
                log(f"approx n={step.n:g} g_norm={step.g_norm:.6e} admissible_norm={step.admissible_norm:.6e}")
        return 0
    if task == "project":
        pi = project(form, f, mu, cfg.phi(form.space), cfg.schedule)
        pi.to_csv(out)
        log("project: certified good")
        return 0
    raise ValidationError(f"task {task!r} not runnable here")


def _vector(text, n):
    vals = cfgmod.parse_list(text)
    return np.full(n, vals[0]) if len(vals) == 1 else np.asarray(vals)


def _capacity_csv(res, out):
    active = set(int(i) for i in res.active_set)
    with open(out, "w") as fh:
        fh.write("# schema: node,equilibrium,active\n")
        fh.write(f"# capacity={res.value:.17g} iterations={res.iterations} residual={res.residual:.3e}\n")
        fh.write("node,equilibrium,active\n")
        for i, w in enumerate(res.equilibrium):
            fh.write(f"{i},{w:.17g},{int(i in active)}\n")


def _suite(seed, instances, kind, out, log):
    if kind == "solver":
        rep = solver_suite(seed=seed, instances=instances)
        rep.to_csv(out)
        log(f"solver suite: ok={rep.ok} barrier_checks={rep.barrier_checks}")
        return 0 if rep.ok else 3
    rep = property_suite(seed=seed, instances=instances)
    rep.to_csv(out)
    log(f"law suite: ok={rep.ok} worst={rep.worst:.3e}")
    for fail in rep.failures:
        log(json.dumps(fail))
    return 0 if rep.ok else 3


def _study(cfg, log, out):
    s = cfg.space
    kw = dict(
        d=int(s.get("d", "1")),
        extent=tuple(cfgmod.parse_list(s.get("extent", "-1,1"))),
        site=cfg.site(),
        atom_mass=cfgmod.parse_number(cfg.measure.get("atom_mass", "1")) if "atom_site" in cfg.measure else 0.0,
        density=cfgmod.parse_number(cfg.measure["density"]) if "density" in cfg.measure else None,
        exterior=s.get("exterior", "dirichlet").strip(),
        schedule=cfg.schedule,
        log=log,
    )
    f = cfg.build_nonlinearity()
    spec = cfg.operator_spec()
    if cfg.task == "study":
        res = refinement_study(spec, f, cfg.hs, **kw)
        res.to_csv(out)
        log(f"study: verdict={res.verdict} spearman={res.spearman:.4f}")
        return 0
    gsec = {k[2:]: v for k, v in cfg.options.items() if k.startswith("g_")}
    g = cfgmod.nonlinearity_from(gsec)
    rep = asymptotic_equivalence_study(f, g, spec, cfg.hs, cfgmod.parse_number(cfg.get("c1")),
                                       cfgmod.parse_number(cfg.get("c2")), cfgmod.parse_number(cfg.get("r")), **kw)
    rep.to_csv(out)
    log(f"equiv: max retention gap={rep.max_retention_gap:.4f}")
    return 0


def _cmd_run(args, log):
    # until the config names its output, failures are logged next to the config
    log.path = f"{args.out or args.config}.log"
    cfg = cfgmod.load_config(args.config)
    if args.cmd == "study" and cfg.task not in ("study",):
        raise ValidationError("lab study needs task = study")
    if args.cmd == "equiv" and cfg.task != "equiv_study":
        raise ValidationError("lab equiv needs task = equiv_study")
    out = args.out or _default_out(cfg, "")
    log.path = f"{out}.log"
    return run_config(cfg, log, out)


def _cmd_suite(args, log):
    return _suite(args.seed, args.instances, args.kind, args.out, log)


def _cmd_capacity(args, log):
    form = cfgmod.load_form(args.form)
    U = [int(x) for x in cfgmod.parse_list(args.set)]
    res = capacity(form, U, tol=args.tol)
    if args.out:
        _capacity_csv(res, args.out)
    log(json.dumps({"capacity": res.value, "equilibrium": res.equilibrium.tolist(),
                    "iterations": res.iterations, "residual": res.residual}))
    return 0


def _cmd_solve(args, log):
    form = cfgmod.load_form(args.form)
    f = cfgmod.parse_nl_spec(args.nonlinearity)
    mu = cfgmod.parse_measure_spec(form.space, args.measure)
    if (args.sub is None) != (args.super is None):
        raise ValidationError("--sub and --super go together")
    if args.sub is not None:
        rep = solve_between(form, f, mu, _vector(args.sub, form.n), _vector(args.super, form.n), tol=args.tol)
    else:
        rep = solve(form, f, mu, tol=args.tol)
    if args.out:
        rep.to_csv(args.out)
    log(f"solve: u={np.array2string(rep.u, precision=12)} residual={rep.final_residual:.3e} "
        f"apriori_ok={rep.apriori_ok}")
    return 0


def _cmd_reduce(args, log):
    form = cfgmod.load_form(args.form)
    f = cfgmod.parse_nl_spec(args.nl)
    mu = cfgmod.parse_measure_spec(form.space, args.measure)
    phi = None if args.phi is None else _vector(args.phi, form.n)
    rep = reduce(form, f, mu, phi, cfgmod.parse_schedule(args.schedule))
    if args.out:
        rep.to_csv(args.out)
    log(f"reduce: u*={np.array2string(rep.u_star, precision=12)} converged={rep.converged}")
    return 0


def build_parser():
    p = argparse.ArgumentParser(prog="lab", description=__doc__, epilog=SCHEMAS,
                                formatter_class=argparse.RawDescriptionHelpFormatter)
    sub = p.add_subparsers(dest="cmd", required=True)
    for name, helptext in (("run", "run the task named in a config"), ("study", "refinement study from a config"),
                           ("equiv", "asymptotic equivalence study from a config")):
        sp = sub.add_parser(name, help=helptext, epilog=SCHEMAS, formatter_class=argparse.RawDescriptionHelpFormatter)
        sp.add_argument("config")
        sp.add_argument("--out", help="output CSV (default: [task] out or <task>.csv)")
        sp.set_defaults(func=_cmd_run)
    sp = sub.add_parser("suite", help="seeded law suite", epilog=SCHEMAS,
                        formatter_class=argparse.RawDescriptionHelpFormatter)
    sp.add_argument("--seed", type=int, default=0)
    sp.add_argument("--instances", type=int, default=200)
    sp.add_argument("--kind", choices=("laws", "solver"), default="laws")
    sp.add_argument("--out", default="suite.csv")
    sp.set_defaults(func=_cmd_suite)
    sp = sub.add_parser("capacity", help="capacity of a node set")
    sp.add_argument("--form", required=True, help="triplet CSV of the form matrix")
    sp.add_argument("--set", required=True, help="comma-separated nodes")
    sp.add_argument("--tol", type=float, default=1e-10)
    sp.add_argument("--out")
    sp.set_defaults(func=_cmd_capacity)
    sp = sub.add_parser("solve", help="maximal solution of -Au = f(u) + mu")
    sp.add_argument("--form", required=True)
    sp.add_argument("--nonlinearity", required=True, help='e.g. "power:p=3", "exp", "expression:-y**3"')
    sp.add_argument("--measure", required=True, help='measure CSV or "density=0;atoms=0:3:concentrated"')
    sp.add_argument("--sub")
    sp.add_argument("--super")
    sp.add_argument("--tol", type=float, default=1e-10)
    sp.add_argument("--out")
    sp.set_defaults(func=_cmd_solve)
    sp = sub.add_parser("reduce", help="reduced measure along a truncation schedule")
    sp.add_argument("--form", required=True)
    sp.add_argument("--nl", required=True)
    sp.add_argument("--measure", required=True)
    sp.add_argument("--phi")
    sp.add_argument("--schedule", default="1:2:16384")
    sp.add_argument("--out")
    sp.set_defaults(func=_cmd_reduce)
    return p


def main(argv=None):
    parser = build_parser()
    args = parser.parse_args(argv)
    out = getattr(args, "out", None)
    log = RunLog(out)
    t0 = time.perf_counter()
    code = 0
    try:
        code = args.func(args, log)
    except (ValidationError, FormError) as exc:
        log.error(exc, 2)
        code = 2
    except (SolverError, InvariantViolation) as exc:
        log.error(exc, 3)
        code = 3
    log(f"elapsed={time.perf_counter() - t0:.3f}s exit={code}")
    log.flush()
    return code


if __name__ == "__main__":
    sys.exit(main())
