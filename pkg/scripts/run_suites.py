"""Seeded law suite and solver suite, written as CSV.

    python3 scripts/run_suites.py --seed 42 --instances 200 --out results/
"""
import argparse
import pathlib
import time

from reduced_lab.suite import property_suite, solver_suite


def main():
    p = argparse.ArgumentParser(description=__doc__.splitlines()[0])
    p.add_argument("--seed", type=int, default=42)
    p.add_argument("--instances", type=int, default=200)
    p.add_argument("--out", default="results")
    args = p.parse_args()
    out = pathlib.Path(args.out)
    out.mkdir(parents=True, exist_ok=True)

    t0 = time.perf_counter()
    laws = property_suite(seed=args.seed, instances=args.instances)
    laws.to_csv(out / f"laws_seed{args.seed}.csv")
    print(f"laws: ok={laws.ok} worst={laws.worst:.2e} ({time.perf_counter() - t0:.1f}s)")
    for fail in laws.failures[:5]:
        print("  failure:", fail["law"], fail["instance"], fail["discrepancy"])

    t0 = time.perf_counter()
    sol = solver_suite(seed=args.seed, instances=args.instances)
    sol.to_csv(out / f"solver_seed{args.seed}.csv")
    print(f"solver: ok={sol.ok} barrier_checks={sol.barrier_checks} ({time.perf_counter() - t0:.1f}s)")


if __name__ == "__main__":
    main()
