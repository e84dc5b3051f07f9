"""Scan alpha for the uniform measure on the (2,2) fat Cantor set and its snowflake image.

The identity scan uses the compressed diameter tree to depth 8; the snowflake
scan samples image diameters on an explicit depth-4 tree.  C* <= 1 crosses
over near log 15 / log 4 for the identity and near twice that for eps = 0.5.
"""
import argparse
import math

import numpy as np

from fracperc.cantor import FatCantorSpec, build_fat_cantor
from fracperc.frostman import DiameterTree, build_measure_fat, frostman_verify, image_diameters
from fracperc.qs import snowflake_map


def scan(dt, alphas):
    return [frostman_verify(build_measure_fat(dt, a), dt, a).C_star for a in alphas]


def main():
    ap = argparse.ArgumentParser(description=__doc__.splitlines()[0])
    ap.add_argument("--eps", type=float, default=0.5)
    args = ap.parse_args()
    spec = FatCantorSpec(2, 2)
    crit = math.log(15) / math.log(4)
    ident = DiameterTree.uniform(spec.scales, [15] * 8)
    alphas = np.round(np.arange(1.85, 2.06, 0.02), 2)
    print(f"identity, critical exponent {crit:.4f}")
    for a, c in zip(alphas, scan(ident, alphas)):
        print(f"  alpha {a:.2f}  C* {c:.4f}  {'pass' if c <= 1 else 'fail'}")
    snow = image_diameters(build_fat_cantor(spec, 4), snowflake_map(args.eps), 8)
    alphas = np.round(np.linspace(0.9, 1.1, 11) * crit / args.eps, 3)
    print(f"snowflake eps={args.eps}, critical exponent {crit / args.eps:.4f}")
    for a, c in zip(alphas, scan(snow, alphas)):
        print(f"  alpha {a:.3f}  C* {c:.4f}  {'pass' if c <= 1 else 'fail'}")


if __name__ == "__main__":
    main()
