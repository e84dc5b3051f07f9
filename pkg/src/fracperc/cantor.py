"""Deterministic fat/dense Cantor constructions and their extraction from percolation.

Vertical gaps are measured along the last coordinate axis: inside a cube,
the children form ``N^(d-1)`` columns of ``N`` cells, and the longest
segment parallel to the last axis that avoids the closed union of retained
children is (longest run of removed cells in a column) x (child side).
"""
from __future__ import annotations

import math
from dataclasses import dataclass
from fractions import Fraction
from typing import Callable, Sequence

import numpy as np

from .branching import compose_bound, find_subtree
from .errors import DomainError, MissingLevel, PreconditionError
from .grid import (CubeAddress, ScaleSequence, SurvivalTree, coords_to_address,
                   expand_children, _digit_rank)
from .percolation import Realization, SeedSpec, cube_uniforms


@dataclass(frozen=True)
class FatCantorSpec:
    """(N, m)-fat Cantor set: each step splits a cube into N^(md) subcubes and drops one.

    ``rule`` is ``"fixed"`` (drop ``index``), ``"random"`` (seeded, uniform
    over the subcubes) or a callable mapping a parent address to the digit
    tuple to drop.
    """

    N: int
    m: int
    d: int = 2
    rule: str | Callable = "fixed"
    index: tuple | None = None
    seed: int = 0

    @property
    def base(self) -> int:
        return self.N ** self.m

    @property
    def scales(self) -> ScaleSequence:
        return ScaleSequence.constant(self.d, self.base)

    def count(self, n: int) -> int:
        return (self.base ** self.d - 1) ** n

    @property
    def similarity_dimension(self) -> float:
        return math.log(self.base ** self.d - 1) / math.log(self.base)


def build_fat_cantor(spec: FatCantorSpec, depth: int) -> SurvivalTree:
    if depth < 1:
        raise ValueError("depth must be >= 1")
    scales, B, d = spec.scales, spec.base, spec.d
    coords = [np.zeros((1, d), np.int64)]
    parents = [np.array([-1])]
    for k in range(1, depth + 1):
        child, parent = expand_children(coords[-1], B)
        rank = _digit_rank(child % B, B)
        if spec.rule == "fixed":
            idx = spec.index if spec.index is not None else (0,) * d
            drop = np.full(len(coords[-1]), _digit_rank(np.array([idx]), B)[0])
        elif spec.rule == "random":
            u = cube_uniforms(SeedSpec(spec.seed).key, k - 1, coords[-1], stream=2)
            drop = np.minimum((u * B ** d).astype(np.int64), B ** d - 1)
        elif callable(spec.rule):
            drop = np.array([_digit_rank(np.array([spec.rule(coords_to_address(k - 1, c, scales))]), B)[0]
                             for c in coords[-1]], np.int64)
        else:
            raise ValueError(f"unknown removal rule {spec.rule!r}")
        keep = rank != drop[parent]
        coords.append(child[keep])
        parents.append(parent[keep])
    return SurvivalTree(scales, depth, tuple(coords), tuple(parents))


# -- vertical gaps ---------------------------------------------------------------

def occupancy(child_digits: np.ndarray, parent: np.ndarray, n_parents: int, N: int) -> np.ndarray:
    """Boolean grid ``(n_parents, N^(d-1), N)``: retained children per column."""
    d = child_digits.shape[1]
    occ = np.zeros((n_parents, N ** d), bool)
    occ[parent, _digit_rank(child_digits, N)] = True
    return occ.reshape(n_parents, N ** (d - 1), N)


def longest_gap_run(occ: np.ndarray) -> np.ndarray:
    """Longest run of empty cells along the last axis, maximized over columns."""
    run = np.zeros(occ.shape[:-1], np.int64)
    best = np.zeros(occ.shape[:-1], np.int64)
    for j in range(occ.shape[-1]):
        run = np.where(occ[..., j], 0, run + 1)
        np.maximum(best, run, out=best)
    return best.max(axis=-1) if best.ndim > 1 else best


def level_gap_runs(tree: SurvivalTree, k: int) -> np.ndarray:
    """Longest vertical gap, in child cells, inside every level-k cube."""
    if k >= tree.depth:
        raise MissingLevel(f"level {k} has no child level in a depth-{tree.depth} tree")
    N = tree.scales.N(k + 1)
    occ = occupancy(tree.child_digits(k + 1), tree.parents[k + 1], tree.count(k), N)
    return longest_gap_run(occ)


def max_vertical_gap(tree: SurvivalTree, node: CubeAddress) -> Fraction:
    """Exact length of the longest vertical segment in ``node`` missing all retained children."""
    k = len(node)
    i = tree.index_of(node)
    if k >= tree.depth:
        raise MissingLevel(f"{node} is at the deepest level")
    return int(level_gap_runs(tree, k)[i]) * tree.side(k + 1)


def _delta(delta) -> Callable[[int], float]:
    if callable(delta):
        return delta
    if isinstance(delta, (int, float)):
        return lambda n: float(delta)
    vals = tuple(delta)
    return lambda n: float(vals[n - 1])


@dataclass(frozen=True)
class GapRecord:
    address: CubeAddress
    gap: Fraction
    allowance: float


def gap_report(tree: SurvivalTree, delta, from_level: int = 0) -> list[GapRecord]:
    """Gap and allowance ``Delta_{n+1} |Q|`` for every cube of level ``>= from_level``.

    ``|Q|`` is the Euclidean diameter ``side * sqrt(d)``.
    """
    D = _delta(delta)
    out = []
    for n in range(from_level, tree.depth):
        runs = level_gap_runs(tree, n)
        child_side = tree.side(n + 1)
        allow = D(n + 1) * float(tree.side(n)) * math.sqrt(tree.d)
        out += [GapRecord(tree.address(n, i), int(r) * child_side, allow) for i, r in enumerate(runs)]
    return out


def check_dense(tree: SurvivalTree, delta, from_level: int = 0) -> list[GapRecord]:
    """Cubes violating ``gap <= Delta_{n+1} |Q|``; empty iff dense from ``from_level``."""
    return [g for g in gap_report(tree, delta, from_level)
            if float(g.gap) > g.allowance * (1 + 1e-12)]


def gaps_to_csv(records: Sequence[GapRecord]) -> str:
    lines = ["address,gap,allowance"]
    for g in records:
        addr = "".join("(" + " ".join(map(str, t)) + ")" for t in g.address)
        lines.append(f"{addr},{float(g.gap)!r},{g.allowance!r}")
    return "\n".join(lines) + "\n"


# -- dense extraction ------------------------------------------------------------

def overline_log(p: float, x: float) -> float:
    """Logarithm of ``x`` in base ``1 / (1 - p)``."""
    if not 0 < p < 1:
        raise DomainError(f"p={p} must lie in (0, 1)")
    if x <= 0:
        raise DomainError("x must be positive")
    return math.log(x) / -math.log1p(-p)


def family_size(N: int, d: int, p: float) -> int:
    """Constant family size M used after trimming, clamped to ``[2, N^d]``."""
    raw = N ** (d - 1) * N / (6 * d * overline_log(p, N))
    return int(min(max(math.ceil(raw - 1e-12), 2), N ** d))


def level_columns(occ: np.ndarray, counts: np.ndarray, M: int) -> np.ndarray:
    """Per-column targets after greedily removing from the fullest column.

    Repeatedly deleting one cube from the column with the most cubes
    (lowest column index on ties) until ``M`` remain ends with every column
    capped at a level L, except that the first few columns at L (by index)
    drop to L-1.  That end state is computed directly.
    """
    c = occ.sum(axis=-1)  # (n, C)
    R = counts - M
    N = occ.shape[-1]
    L = np.arange(N + 1)
    excess = np.maximum(c[:, :, None] - L[None, None, :], 0).sum(axis=1)  # (n, N+1)
    Lstar = np.argmax(excess <= R[:, None], axis=1)
    left = R - excess[np.arange(len(R)), Lstar]
    target = np.minimum(c, Lstar[:, None])
    at_level = c >= Lstar[:, None]
    order = np.cumsum(at_level, axis=1)
    target = target - (at_level & (order <= left[:, None]))
    return target


def trim_families(occ: np.ndarray, M: int) -> np.ndarray:
    """Trim every family to exactly ``M`` cubes.

    Column counts follow :func:`level_columns`; within a column of ``c``
    cubes keeping ``t``, the cubes of rank ``floor((2i+1)c / 2t)``,
    ``i < t``, are kept (evenly spread through the column).
    """
    n, C, N = occ.shape
    counts = occ.sum(axis=(1, 2))
    target = level_columns(occ, counts, M)
    c = occ.sum(axis=-1)
    i = np.arange(N)[None, None, :]
    valid = i < target[..., None]
    ranks = ((2 * i + 1) * c[..., None]) // np.maximum(2 * target[..., None], 1)
    ranks = np.where(valid, ranks, N)
    keep_rank = np.zeros((n, C, N + 1), bool)
    np.put_along_axis(keep_rank, ranks, True, axis=2)
    cell_rank = np.where(occ, np.cumsum(occ, axis=-1) - 1, N)
    return occ & np.take_along_axis(keep_rank, cell_rank, axis=2)


@dataclass(frozen=True)
class DenseExtraction:
    """A dense Cantor subtree found below ``anchor`` (rescaled to the unit cube)."""

    tree: SurvivalTree
    anchor: CubeAddress
    start_level: int
    family_sizes: tuple[int, ...]
    achieved_delta: tuple[float, ...]
    allowance_delta: tuple[float, ...]
    violations: tuple[GapRecord, ...]
    expected_p0: float

    @property
    def verified(self) -> bool:
        return not self.violations


def _source_children(source, level, coords):
    if isinstance(source, Realization):
        return source.children(level, coords)
    index = source._index[level]
    idx = np.array([index[tuple(c)] for c in coords.tolist()], np.int64)
    lo, hi = source.children_range(level)
    lo, hi = lo[idx], hi[idx]
    sizes = hi - lo
    parent = np.repeat(np.arange(len(idx)), sizes)
    flat = np.concatenate([np.arange(a, b) for a, b in zip(lo, hi)]) if len(idx) else np.zeros(0, np.int64)
    return source.coords[level + 1][flat.astype(np.int64)], parent


def _find_anchor(source, start_level: int, depth: int) -> np.ndarray | None:
    if isinstance(source, SurvivalTree):
        if start_level == 0:
            return source.coords[0][0]
        lo, hi = source.descendant_range(start_level, depth)
        alive = np.flatnonzero(hi > lo)
        return source.coords[start_level][alive[0]] if len(alive) else None
    frontier = [(0, np.zeros(source.spec.d, np.int64))]
    while frontier:  # lexicographic depth-first search
        level, c = frontier.pop()
        if level == start_level:
            if source.survives(depth, level, c):
                return c
            continue
        kids, _ = source.children(level, c[None])
        frontier += [(level + 1, x) for x in kids[::-1]]
    return None


def extract_dense_subset(source, p: float, start_level: int = 0,
                         depth: int | None = None) -> DenseExtraction | None:
    """Find a dense Cantor subset below a level-``start_level`` cube.

    ``source`` is a :class:`SurvivalTree` or a lazy :class:`Realization`
    (then ``depth`` is required).  Steps, for each level below the anchor:

    1. retain a cube iff its children leave no vertical gap longer than
       ``6d ol(N)/N |Q|`` and there are at least M children (``ol`` is the
       logarithm in base ``1/(1-p)``);
    2. trim each retained family to exactly M cubes, still within
       ``13d ol(N)/N |Q|``;
    3. extract an ``(M_k - 1)``-subtree of the resulting tree;
    4. check its gaps against ``27d ol(N)/N |Q|``.

    Returns ``None`` if the anchor is discarded or no subtree exists.
    """
    if not 0 < p < 1:
        raise DomainError(f"p={p} must lie in (0, 1)")
    if isinstance(source, SurvivalTree):
        depth = source.depth
    elif depth is None:
        raise ValueError("depth is required for lazy realizations")
    scales, d = source.scales, source.scales.d
    K = depth - start_level
    if K < 1:
        raise PreconditionError("need at least one level below start_level")
    Ns = [scales.N(start_level + k) for k in range(1, K + 1)]
    M = [family_size(N, d, p) for N in Ns]
    if any(b < a for a, b in zip(M, M[1:])):
        raise PreconditionError(f"family sizes {M} are not non-decreasing; raise start_level")
    anchor = _find_anchor(source, start_level, depth)
    if anchor is None:
        return None

    ol = [overline_log(p, N) for N in Ns]
    root = np.asarray(anchor, np.int64).reshape(1, d)
    abs_coords = [root]
    coords = [np.zeros((1, d), np.int64)]
    parents = [np.array([-1])]
    # |Q| / N expressed in child cells
    diam_cells = math.sqrt(d)
    for k in range(1, K + 1):
        N = Ns[k - 1]
        nodes = abs_coords[-1]
        child, parent = _source_children(source, start_level + k - 1, nodes)
        occ = occupancy(child % N, parent, len(nodes), N)
        counts = occ.sum(axis=(1, 2))
        runs = longest_gap_run(occ)
        ok = (runs <= 6 * d * ol[k - 1] * diam_cells) & (counts >= M[k - 1])
        trimmed = np.zeros_like(occ)
        if ok.any():
            trimmed[ok] = trim_families(occ[ok], M[k - 1])
        ok &= longest_gap_run(trimmed) <= 13 * d * ol[k - 1] * diam_cells
        trimmed[~ok] = False
        flat = trimmed.reshape(len(nodes), -1)
        par, rank = np.nonzero(flat)
        digits = np.stack(np.unravel_index(rank, (N,) * d), axis=1).astype(np.int64)
        abs_coords.append(nodes[par] * N + digits)
        coords.append(coords[-1][par] * N + digits)
        parents.append(par.astype(np.int64))

    eprime = SurvivalTree(scales.shifted(start_level, K), K, tuple(coords), tuple(parents))
    sub = find_subtree(eprime, [m - 1 for m in M])
    if sub is None:
        return None
    allowance = tuple(27 * d * o / N for o, N in zip(ol, Ns))
    violations = tuple(check_dense(sub, allowance))
    achieved = []
    for n in range(K):
        runs = level_gap_runs(sub, n)
        achieved.append(float(runs.max()) / (Ns[n] * math.sqrt(d)) if len(runs) else 0.0)
    return DenseExtraction(sub, coords_to_address(start_level, anchor, scales), start_level,
                           tuple(M), tuple(achieved), allowance, violations, compose_bound(M).p0)
