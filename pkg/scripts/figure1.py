"""Render the three planar constructions side by side as separate PPM files.

    python scripts/figure1.py --out figures --pixels 729
"""
import argparse
from pathlib import Path

from fracperc.percolation import ModelSpec, SeedSpec, condition_nonextinct
from fracperc.render import render_image

MODELS = {
    # classical (3, 0.5)
    "classical": (ModelSpec.classical(3, 0.5), 5),
    # fat: p_n = 1 - 0.5 * 0.8^n, i.e. 0.5, 0.6, 0.68, ...
    "fat": (ModelSpec.fat(3, {"form": "one_minus_geometric", "c": 0.625, "a": 0.8}), 5),
    # dense: N_n = 3n
    "dense": (ModelSpec.dense([3, 6, 9], 0.5), 3),
}


def main():
    ap = argparse.ArgumentParser(description=__doc__.splitlines()[0])
    ap.add_argument("--out", default="figures")
    ap.add_argument("--pixels", type=int, default=729)
    ap.add_argument("--seed", type=int, default=1)
    args = ap.parse_args()
    out = Path(args.out)
    out.mkdir(parents=True, exist_ok=True)
    for name, (spec, depth) in MODELS.items():
        cond = condition_nonextinct(spec, depth, SeedSpec(args.seed))
        path = render_image(cond.tree, args.pixels, out / f"{name}.ppm")
        print(f"{name:9s} depth {depth}: {cond.tree.count(depth):6d} cubes, "
              f"{cond.retries} retries -> {path}")


if __name__ == "__main__":
    main()
