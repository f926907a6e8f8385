"""Capacity of the grid node nearest a site, across refinements, for several operators."""
import argparse
import json
import pathlib

from reduced_lab.capacity import classify_atom, ladder
from reduced_lab.dirichlet import OperatorSpec


def main():
    p = argparse.ArgumentParser(description=__doc__)
    p.add_argument("--out", default="results")
    p.add_argument("--alphas", default="0.25,0.4,0.75")
    args = p.parse_args()
    out = pathlib.Path(args.out)
    out.mkdir(parents=True, exist_ok=True)
    spaces = ladder(1, (-1, 1), [2.0 ** -k for k in range(3, 8)])
    specs = {"local": OperatorSpec("local")}
    for a in args.alphas.split(","):
        specs[f"fractional_{a}"] = OperatorSpec("fractional", alpha=float(a))
    for name, spec in specs.items():
        rep = classify_atom(spaces, spec, (0.0,))
        rep.to_csv(out / f"polarity_{name}.csv")
        print(name, json.dumps(rep.summary()))


if __name__ == "__main__":
    main()
