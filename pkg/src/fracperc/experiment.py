"""Experiment configs and the Monte Carlo harness.

Records are deterministic JSON: keys sorted, floats in shortest round-trip
form, trials sorted by index.  Wall-clock timings go to a separate
``timing.json`` so that records stay byte-identical across runs and worker
counts.
"""
from __future__ import annotations

import json
import math
import time
from concurrent.futures import ProcessPoolExecutor
from dataclasses import dataclass
from pathlib import Path

from .branching import compose_bound, subtree_exists, thickness_warnings
from .cantor import level_gap_runs
from .dimension import box_count_series, estimate_dim
from .errors import InsufficientData, NonExtinctionFailed
from .frostman import DiameterTree, build_measure_fat, frostman_verify, subadditivity_check
from .percolation import Z99, ModelSpec, Realization, SeedSpec, condition_nonextinct
from .render import render_image

ANALYSES = ("subtree", "gaps", "frostman", "dimension", "render")


@dataclass(frozen=True)
class ExperimentConfig:
    model: ModelSpec
    depth: int
    trials: int = 1
    seed: int = 0
    analyses: tuple[str, ...] = ()
    output_dir: str | None = None
    condition: bool = False
    max_retries: int = 1000
    alpha: float = 1.0
    fit_window: tuple[float, float] | None = None
    pixels: int = 512

    def __post_init__(self):
        if self.trials < 1:
            raise ValueError("trials must be >= 1")
        if self.depth < 0:
            raise ValueError("depth must be >= 0")
        unknown = set(self.analyses) - set(ANALYSES)
        if unknown:
            raise ValueError(f"unknown analyses {sorted(unknown)}; choose from {ANALYSES}")
        self.model.check_depth(self.depth)

    @classmethod
    def from_dict(cls, cfg: dict) -> "ExperimentConfig":
        cfg = dict(cfg)
        cfg["model"] = ModelSpec.from_config(cfg["model"])
        cfg["analyses"] = tuple(cfg.get("analyses", ()))
        if cfg.get("fit_window") is not None:
            cfg["fit_window"] = tuple(cfg["fit_window"])
        return cls(**cfg)

    @classmethod
    def from_json(cls, path) -> "ExperimentConfig":
        return cls.from_dict(json.loads(Path(path).read_text()))

    def to_dict(self) -> dict:
        return {"model": self.model.to_config(), "depth": self.depth, "trials": self.trials,
                "seed": self.seed, "analyses": list(self.analyses),
                "output_dir": self.output_dir, "condition": self.condition,
                "max_retries": self.max_retries, "alpha": self.alpha,
                "fit_window": list(self.fit_window) if self.fit_window else None,
                "pixels": self.pixels}


def trial_record(cfg: ExperimentConfig, index: int) -> dict:
    """All selected analyses for one trial (a pure function of config and index)."""
    seed = SeedSpec(cfg.seed).trial(index)
    rec: dict = {"trial": index}
    if cfg.condition:
        try:
            cond = condition_nonextinct(cfg.model, cfg.depth, seed, cfg.max_retries)
        except NonExtinctionFailed:
            rec["conditioned"] = False
            return rec
        tree, rec["retries"] = cond.tree, cond.retries
    else:
        tree = Realization(cfg.model, seed).tree(cfg.depth)
    rec["counts"] = tree.counts()
    rec["extinct"] = tree.extinct
    scales = cfg.model.scales
    if "subtree" in cfg.analyses:
        req = [scales.children_per_cube(k) - 1 for k in range(1, cfg.depth + 1)]
        rec["subtree"] = subtree_exists(tree, req)
    if "gaps" in cfg.analyses:
        rec["max_gap_cells"] = [int(level_gap_runs(tree, k).max()) if tree.count(k) else None
                                for k in range(cfg.depth)]
    if "dimension" in cfg.analyses:
        try:
            rec["slope"] = estimate_dim(box_count_series(tree), cfg.fit_window).slope
        except InsufficientData:
            rec["slope"] = None
    if "frostman" in cfg.analyses and not tree.extinct:
        dt = DiameterTree.identity(tree.restrict(_alive(tree)))
        rep = frostman_verify(build_measure_fat(dt, cfg.alpha), dt, cfg.alpha)
        rec["frostman_C"] = rep.C_star
        rec["subadditive"] = subadditivity_check(dt, cfg.alpha).passed
    if "render" in cfg.analyses and cfg.output_dir and index == 0:
        render_image(tree, cfg.pixels, Path(cfg.output_dir) / "trial0.ppm")
    return rec


def _alive(tree):
    # keep only cubes with a descendant at the deepest level
    keep = []
    for k in range(tree.depth + 1):
        lo, hi = tree.descendant_range(k, tree.depth)
        keep.append(hi > lo)
    return keep


def _summary(cfg: ExperimentConfig, trials: list[dict]) -> tuple[dict, dict]:
    summary, checks = {}, {}
    done = [t for t in trials if t.get("conditioned", True)]
    summary["completed"] = len(done)
    summary["extinct"] = sum(t["extinct"] for t in done)
    if "subtree" in cfg.analyses and done:
        freq = sum(t["subtree"] for t in done) / len(done)
        levels = [cfg.model.scales.children_per_cube(k) for k in range(1, cfg.depth + 1)]
        p0 = compose_bound(levels).p0 if levels else 1.0
        sigma = math.sqrt(freq * (1 - freq) / len(done))
        summary.update(subtree_frequency=freq, subtree_sigma=sigma, p0=p0,
                       thickness_warnings=list(thickness_warnings(cfg.model, cfg.depth)))
        if not summary["thickness_warnings"]:
            checks["containment"] = freq >= p0 - 3 * max(sigma, 1 / len(done))
    if "dimension" in cfg.analyses:
        slopes = [t["slope"] for t in done if t.get("slope") is not None]
        if slopes:
            summary["mean_slope"] = math.fsum(slopes) / len(slopes)
    if "frostman" in cfg.analyses:
        cs = [t["frostman_C"] for t in done if "frostman_C" in t]
        if cs:
            summary["frostman_C_max"] = max(cs)
            checks["frostman"] = max(cs) <= 1 + 1e-12
    summary["halfwidth99_unit"] = Z99
    return summary, checks


def run(cfg: ExperimentConfig, workers: int = 1) -> dict:
    """Run every trial and return the record; persisted when ``output_dir`` is set."""
    t0 = time.perf_counter()
    indices = range(cfg.trials)
    if workers > 1:
        with ProcessPoolExecutor(workers) as pool:
            trials = list(pool.map(trial_record, [cfg] * cfg.trials, indices,
                                   chunksize=max(1, cfg.trials // (4 * workers))))
    else:
        trials = [trial_record(cfg, i) for i in indices]
    trials.sort(key=lambda t: t["trial"])
    summary, checks = _summary(cfg, trials)
    # where the record is written is not an input, so it stays out of the echo
    echo = {k: v for k, v in cfg.to_dict().items() if k != "output_dir"}
    record = {"config": echo, "trials": trials, "summary": summary, "checks": checks}
    elapsed = time.perf_counter() - t0
    if cfg.output_dir:
        out = Path(cfg.output_dir)
        out.mkdir(parents=True, exist_ok=True)
        (out / "record.json").write_text(dumps_record(record))
        (out / "timing.json").write_text(json.dumps({"seconds": elapsed, "workers": workers}) + "\n")
    return record


def dumps_record(record: dict) -> str:
    return json.dumps(record, sort_keys=True, indent=1) + "\n"
