"""Atom retention along a refinement ladder: local versus fractional operators.

    python3 scripts/run_study.py --out results/
"""
import argparse
import pathlib

from reduced_lab.dirichlet import OperatorSpec
from reduced_lab.nonlinearity import power
from reduced_lab.study import refinement_study


def main():
    p = argparse.ArgumentParser(description=__doc__.splitlines()[0])
    p.add_argument("--out", default="results")
    p.add_argument("--levels", type=int, default=5, help="h = 1/16, 1/32, ...")
    p.add_argument("--alpha", type=float, default=0.4)
    p.add_argument("--p", type=float, default=7.0, help="exponent of the fractional run")
    args = p.parse_args()
    out = pathlib.Path(args.out)
    out.mkdir(parents=True, exist_ok=True)
    hs = [2.0 ** -(4 + k) for k in range(args.levels)]
    runs = {
        "local_cubic": (OperatorSpec("local"), power(3)),
        f"fractional_a{args.alpha:g}_p{args.p:g}": (OperatorSpec("fractional", alpha=args.alpha), power(args.p)),
    }
    for name, (spec, f) in runs.items():
        res = refinement_study(spec, f, hs, log=print)
        res.to_csv(out / f"study_{name}.csv")
        print(f"{name}: verdict={res.verdict} spearman={res.spearman:.3f}")


if __name__ == "__main__":
    main()
