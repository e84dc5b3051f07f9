"""Command-line interface.

Exit codes: 0 when every selected check passed, 2 when a verification
failed, 1 on execution errors (including bad arguments).
"""
from __future__ import annotations

import argparse
import json
import sys
from pathlib import Path

import numpy as np

from . import branching, cantor, dimension, experiment, frostman, qs
from .grid import ParamSequence, SurvivalTree
from .percolation import ModelSpec, Realization, SeedSpec, condition_nonextinct, generate
from .render import render_image

OK, FAILED, ERROR = 0, 2, 1


class _Parser(argparse.ArgumentParser):
    def error(self, message):
        self.print_usage(sys.stderr)
        self.exit(ERROR, f"{self.prog}: error: {message}\n")


def _seq(text: str):
    """``3`` -> 3, ``0.5,0.6`` -> list, JSON objects pass through."""
    text = text.strip()
    if text.startswith(("{", "[")):
        return json.loads(text)
    parts = [json.loads(x) for x in text.split(",") if x.strip()]
    return parts[0] if len(parts) == 1 else parts


def _floats(text: str) -> tuple[float, ...]:
    return tuple(float(x) for x in text.split(","))


def _add_model(p: argparse.ArgumentParser, stochastic: bool = True) -> None:
    g = p.add_argument_group("model")
    g.add_argument("--config", help="JSON experiment config (model/depth/seed)")
    g.add_argument("--kind", choices=("classical", "fat", "dense", "all_or_nothing"))
    g.add_argument("--d", type=int, default=2)
    g.add_argument("--N", type=_seq, help="branching: 3, 3,6,9 or a JSON form table")
    g.add_argument("--p", type=_seq, help="probabilities: 0.5, 0.5,0.6 or a JSON form table")
    g.add_argument("--depth", type=int)
    if stochastic:
        g.add_argument("--seed", type=int)
        g.add_argument("--condition", action="store_true", help="condition on non-extinction")


def _model(args) -> tuple[ModelSpec, int, int]:
    if args.config:
        cfg = experiment.ExperimentConfig.from_json(args.config)
        depth = args.depth if args.depth is not None else cfg.depth
        seed = args.seed if getattr(args, "seed", None) is not None else cfg.seed
        return cfg.model, depth, seed
    missing = [f for f in ("kind", "N", "p", "depth", "seed") if getattr(args, f, 0) is None]
    if missing:
        raise SystemExit(_fail(f"missing required options: {', '.join('--' + m for m in missing)}"))
    spec = ModelSpec(args.kind, args.d, ParamSequence.from_config(args.N),
                     ParamSequence.from_config(args.p))
    return spec, args.depth, args.seed


def _fail(msg: str) -> int:
    print(f"error: {msg}", file=sys.stderr)
    return ERROR


def _tree(args) -> SurvivalTree:
    if getattr(args, "tree", None):
        return SurvivalTree.loads(Path(args.tree).read_text())
    if getattr(args, "fat_cantor", None):
        N, m = (int(x) for x in args.fat_cantor.split(","))
        if args.depth is None:
            raise SystemExit(_fail("--depth is required with --fat-cantor"))
        return cantor.build_fat_cantor(cantor.FatCantorSpec(N, m, args.d), args.depth)
    spec, depth, seed = _model(args)
    if getattr(args, "condition", False):
        return condition_nonextinct(spec, depth, SeedSpec(seed)).tree
    return generate(spec, depth, SeedSpec(seed))


def _add_tree_source(p: argparse.ArgumentParser) -> None:
    p.add_argument("--tree", help="serialized survival tree")
    p.add_argument("--fat-cantor", help="N,m of a fixed-rule fat Cantor set")
    _add_model(p)


def _write(text: str, path: str | None) -> None:
    if path:
        Path(path).write_text(text)
    else:
        sys.stdout.write(text)


def _map(text: str) -> qs.PointMap:
    name, _, arg = text.partition(":")
    if name == "identity":
        return qs.identity_map()
    if name == "snowflake":
        return qs.snowflake_map(float(arg))
    if name == "power":
        return qs.power_map(float(arg))
    raise ValueError(f"unknown map {text!r} (identity, snowflake:EPS, power:A)")


def _eta(text: str) -> qs.DistortionFunction:
    name, _, arg = text.partition(":")
    if name == "identity":
        return qs.DistortionFunction.power(1.0, 1.0)
    if name == "snowflake":
        return qs.DistortionFunction.snowflake(float(arg))
    if name == "power":
        beta, C = _floats(arg)
        return qs.DistortionFunction.power(beta, C)
    raise ValueError(f"unknown distortion {text!r} (identity, snowflake:EPS, power:BETA,C)")


# -- commands ---------------------------------------------------------------------

def cmd_generate(args) -> int:
    _write(_tree(args).dumps(), args.out)
    return OK


def cmd_render(args) -> int:
    tree = _tree(args)
    render_image(tree, args.pixels, args.out)
    print(f"wrote {args.out} ({args.pixels}x{args.pixels}, {tree.count(tree.depth)} cubes)")
    return OK


def cmd_bound(args) -> int:
    levels = list(_seq(args.levels)) if "," in args.levels else [int(args.levels)] * args.length
    rep = branching.compose_bound(levels, args.start)
    print(rep.summary())
    if args.csv:
        Path(args.csv).write_text(rep.to_csv())
    return OK if not rep.violations else FAILED


def cmd_subtree(args) -> int:
    tree = _tree(args)
    if args.requirement:
        req = list(_floats(args.requirement))
        req = [int(x) for x in req] if len(req) > 1 else [int(req[0])] * tree.depth
    else:
        req = [tree.scales.children_per_cube(k) - 1 for k in range(1, tree.depth + 1)]
    sub = branching.find_subtree(tree, req)
    print(f"subtree with requirements {req}: {'found' if sub is not None else 'none'}")
    if sub is not None and args.out:
        Path(args.out).write_text(sub.dumps())
    return OK if sub is not None else FAILED


def cmd_gaps(args) -> int:
    tree = _tree(args)
    delta = _floats(args.delta)
    delta = delta[0] if len(delta) == 1 else delta
    records = cantor.gap_report(tree, delta, args.from_level)
    bad = [g for g in records if float(g.gap) > g.allowance * (1 + 1e-12)]
    if args.csv:
        Path(args.csv).write_text(cantor.gaps_to_csv(records))
    print(f"{len(records)} cubes checked, {len(bad)} violate the gap allowance")
    return OK if not bad else FAILED


def cmd_extract_dense(args) -> int:
    spec, depth, seed = _model(args)
    if args.condition:
        real = condition_nonextinct(spec, depth, SeedSpec(seed), materialize=False).realization
    else:
        real = Realization(spec, SeedSpec(seed))
    res = cantor.extract_dense_subset(real, float(spec.p(1)), args.start_level, depth)
    if res is None:
        print("no dense subset found")
        return FAILED
    print(f"anchor {res.anchor}, family sizes {list(res.family_sizes)}, "
          f"achieved gaps {[round(x, 6) for x in res.achieved_delta]}, "
          f"allowances {[round(x, 6) for x in res.allowance_delta]}, "
          f"{len(res.violations)} violations, p0 >= {res.expected_p0:.6g}")
    if args.out:
        Path(args.out).write_text(res.tree.dumps())
    return OK if res.verified else FAILED


def cmd_qs_check(args) -> int:
    pmap = _map(args.map)
    if args.points:
        pts = qs.load_points_csv(args.points)
    else:
        pts = _tree(args).points()
    if args.sample and len(pts) > args.sample:
        rng = np.random.default_rng(args.sample_seed)
        pts = pts[np.sort(rng.choice(len(pts), args.sample, replace=False))]
    eta = _eta(args.eta) if args.eta else pmap.nominal_eta
    rep = qs.verify_qs(pmap.sample(pts), eta, args.max_triples, args.sample_seed)
    mode = "all" if rep.exhaustive else "sampled"
    print(f"{rep.checked} triples ({mode}), {len(rep.violations)} violations, "
          f"{rep.equalities} equalities, max ratio/bound {rep.max_excess:.6g}")
    for v in rep.violations[:args.show]:
        print(f"  x={pts[v.x].tolist()} y={pts[v.y].tolist()} z={pts[v.z].tolist()} "
              f"ratio={v.ratio:.6g} > eta={v.bound:.6g}")
    return OK if rep.passed else FAILED


def cmd_frostman(args) -> int:
    pmap = _map(args.map)
    if args.fat_cantor and pmap.is_identity and not args.explicit:
        N, m = (int(x) for x in args.fat_cantor.split(","))
        spec = cantor.FatCantorSpec(N, m, args.d)
        dt = frostman.DiameterTree.uniform(spec.scales, [spec.base ** args.d - 1] * args.depth)
    else:
        dt = frostman.image_diameters(_tree(args), pmap, args.samples, args.sample_seed)
    mu = frostman.build_measure_fat(dt, args.alpha)
    rep = frostman.frostman_verify(mu, dt, args.alpha, args.ceiling)
    sub = frostman.subadditivity_check(dt, args.alpha)
    print(f"alpha={args.alpha}: C*={rep.C_star:.6g} at level {rep.worst_node[0]} "
          f"({'pass' if rep.passed else 'fail'}); worst subadditivity ratio {sub.worst:.6g}")
    if rep.passed:
        print(frostman.dim_lower_bound(rep).statement)
    if args.csv:
        Path(args.csv).write_text(mu.to_csv(args.alpha))
    return OK if rep.passed else FAILED


def cmd_dim(args) -> int:
    series = dimension.box_count_series(_tree(args))
    est = dimension.estimate_dim(series, _floats(args.window) if args.window else None)
    if args.csv:
        Path(args.csv).write_text(series.to_csv())
    print(est.summary())
    return OK


def cmd_mc(args) -> int:
    if args.config:
        cfg = experiment.ExperimentConfig.from_json(args.config)
        overrides = {k: getattr(args, k) for k in ("depth", "seed", "trials") if getattr(args, k) is not None}
        if args.out:
            overrides["output_dir"] = args.out
        cfg = experiment.ExperimentConfig.from_dict({**cfg.to_dict(), **overrides})
    else:
        spec, depth, seed = _model(args)
        if args.trials is None:
            return _fail("--trials is required")
        cfg = experiment.ExperimentConfig(spec, depth, args.trials, seed,
                                          tuple(args.analyses.split(",")) if args.analyses else (),
                                          args.out, args.condition,
                                          fit_window=_floats(args.window) if args.window else None)
    record = experiment.run(cfg, args.workers)
    print(json.dumps(record["summary"], sort_keys=True))
    return OK if all(record["checks"].values()) else FAILED


def build_parser() -> argparse.ArgumentParser:
    parser = _Parser(prog="fracperc", description="Fractal percolation and fat/dense Cantor tools")
    sub = parser.add_subparsers(dest="command", required=True, parser_class=_Parser)

    p = sub.add_parser("generate", help="generate a realization and serialize it")
    _add_model(p)
    p.add_argument("--out")
    p.set_defaults(func=cmd_generate)

    p = sub.add_parser("render", help="render the deepest level as a binary PPM")
    _add_tree_source(p)
    p.add_argument("--pixels", type=int, default=512)
    p.add_argument("--out", required=True)
    p.set_defaults(func=cmd_render)

    p = sub.add_parser("bound", help="composition bound of the g-recursion")
    p.add_argument("--levels", required=True, help="N (with --length) or N_1,N_2,...")
    p.add_argument("--length", type=int, default=1)
    p.add_argument("--start", type=int, default=1)
    p.add_argument("--csv")
    p.set_defaults(func=cmd_bound)

    p = sub.add_parser("subtree", help="find a subtree with prescribed child counts")
    _add_tree_source(p)
    p.add_argument("--requirement", help="M or M_1,M_2,... (default N_k^d - 1)")
    p.add_argument("--out")
    p.set_defaults(func=cmd_subtree)

    p = sub.add_parser("gaps", help="vertical gaps against an allowance")
    _add_tree_source(p)
    p.add_argument("--delta", required=True, help="Delta or Delta_1,Delta_2,...")
    p.add_argument("--from-level", type=int, default=0)
    p.add_argument("--csv")
    p.set_defaults(func=cmd_gaps)

    p = sub.add_parser("extract-dense", help="extract a dense Cantor subset")
    _add_model(p)
    p.add_argument("--start-level", type=int, default=0)
    p.add_argument("--out")
    p.set_defaults(func=cmd_extract_dense)

    p = sub.add_parser("qs-check", help="three-point quasisymmetry check on samples")
    _add_tree_source(p)
    p.add_argument("--points", help="CSV point cloud (index, coordinates)")
    p.add_argument("--map", default="identity")
    p.add_argument("--eta", help="identity | snowflake:EPS | power:BETA,C (default: nominal)")
    p.add_argument("--sample", type=int, help="subsample this many points")
    p.add_argument("--sample-seed", type=int, default=0)
    p.add_argument("--max-triples", type=int, default=qs.MAX_TRIPLES)
    p.add_argument("--show", type=int, default=5)
    p.set_defaults(func=cmd_qs_check)

    p = sub.add_parser("frostman", help="cylinder measure and Frostman check")
    _add_tree_source(p)
    p.add_argument("--map", default="identity")
    p.add_argument("--alpha", type=float, required=True)
    p.add_argument("--ceiling", type=float, default=1.0)
    p.add_argument("--samples", type=int, default=8)
    p.add_argument("--sample-seed", type=int, default=0)
    p.add_argument("--explicit", action="store_true", help="do not compress congruent cubes")
    p.add_argument("--csv")
    p.set_defaults(func=cmd_frostman)

    p = sub.add_parser("dim", help="box-counting dimension")
    _add_tree_source(p)
    p.add_argument("--window", help="r_min,r_max of the fit window")
    p.add_argument("--csv")
    p.set_defaults(func=cmd_dim)

    p = sub.add_parser("mc", help="Monte Carlo experiment over many trials")
    _add_model(p)
    p.add_argument("--trials", type=int)
    p.add_argument("--workers", type=int, default=1)
    p.add_argument("--analyses", help=f"comma list from {','.join(experiment.ANALYSES)}")
    p.add_argument("--window", help="r_min,r_max of the dimension fit window")
    p.add_argument("--out")
    p.set_defaults(func=cmd_mc)
    return parser


def main(argv=None) -> int:
    try:
        args = build_parser().parse_args(argv)
    except SystemExit as exc:
        return int(exc.code) if isinstance(exc.code, int) else ERROR
    try:
        return args.func(args)
    except SystemExit as exc:
        return int(exc.code) if isinstance(exc.code, int) else ERROR
    except Exception as exc:  # noqa: BLE001 - reported with command context
        print(f"error in {args.command}: {type(exc).__name__}: {exc}", file=sys.stderr)
        return ERROR


if __name__ == "__main__":
    sys.exit(main())
