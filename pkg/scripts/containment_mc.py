"""Containment frequency of full-minus-one subtrees against the composed bound.

Runs the all-or-nothing law (the thick case the bound is about) and, for
contrast, classical percolation where the thickness hypothesis fails.
"""
import argparse
import math

from fracperc.branching import containment_mc
from fracperc.percolation import ModelSpec, SeedSpec


def main():
    ap = argparse.ArgumentParser(description=__doc__.splitlines()[0])
    ap.add_argument("--N", type=int, default=2)
    ap.add_argument("--depth", type=int, default=6)
    ap.add_argument("--trials", type=int, default=10_000)
    ap.add_argument("--seed", type=int, default=0)
    args = ap.parse_args()
    d, M = 2, args.N ** 2
    cases = {
        "all-or-nothing": ModelSpec.all_or_nothing(args.N, 1 - M ** -6.0),
        "classical p=0.95": ModelSpec.classical(args.N, 0.95),
        "classical p=0.99": ModelSpec.classical(args.N, 0.99),
    }
    print(f"N={args.N}, d={d}, depth {args.depth}, {args.trials} trials")
    for name, spec in cases.items():
        rep = containment_mc(spec, args.depth, args.trials, SeedSpec(args.seed))
        flag = "thick" if not rep.thickness_warnings else "not thick"
        sigma = math.sqrt(rep.frequency * (1 - rep.frequency) / rep.trials)
        print(f"  {name:18s} freq {rep.frequency:.4f} +/- {sigma:.4f}  "
              f"p0 {rep.p0:.4f}  ({flag})")


if __name__ == "__main__":
    main()
