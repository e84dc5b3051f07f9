"""Cylinder measures on images of Cantor-type sets and their Frostman checks.

A :class:`DiameterTree` attaches an image diameter ``|f(Q)|`` to every node
of a construction tree.  Nodes may carry a multiplicity, so that trees in
which all nodes of a level are congruent (the fixed-rule fat Cantor set under
the identity) are stored with one node class per level instead of
``15^8`` explicit cubes.  Masses and ratios are then per copy.

By default Frostman ratios are taken against diameters normalized by the
root diameter, i.e. ``mu(Q) / (|f(Q)| / |f(root)|)^alpha``.
"""
from __future__ import annotations

import math
from dataclasses import dataclass, field
from typing import Sequence

import numpy as np

from .errors import DegenerateMass, DomainError, PreconditionError
from .grid import ScaleSequence, SurvivalTree, _digit_rank, digit_offsets
from .qs import DistortionFunction, PointMap

REL_TOL = 1e-12


@dataclass(frozen=True, eq=False)
class DiameterTree:
    """Per-node image diameters over a construction tree.

    ``multiplicity[k][i]`` is the number of copies of node ``i`` inside each
    copy of its parent (1 everywhere for explicit trees).  ``flagged[k]``
    marks nodes whose diameter came from the parent fallback.
    """

    scales: ScaleSequence
    depth: int
    parents: tuple
    multiplicity: tuple
    diameters: tuple
    provenance: str
    tree: SurvivalTree | None = field(default=None, repr=False)
    flagged: tuple | None = field(default=None, repr=False)

    def __post_init__(self):
        if self.flagged is None:
            object.__setattr__(self, "flagged",
                               tuple(np.zeros(len(x), bool) for x in self.diameters))

    @classmethod
    def identity(cls, tree: SurvivalTree) -> "DiameterTree":
        """Cube diameters ``side * sqrt(d)`` of an explicit tree."""
        diams = tuple(np.full(tree.count(k), float(tree.side(k)) * math.sqrt(tree.d))
                      for k in range(tree.depth + 1))
        mult = tuple(np.ones(tree.count(k), np.int64) for k in range(tree.depth + 1))
        return cls(tree.scales, tree.depth, tree.parents, mult, diams, "identity", tree)

    @classmethod
    def uniform(cls, scales: ScaleSequence, children: Sequence[int]) -> "DiameterTree":
        """Compressed identity tree: ``children[k-1]`` congruent children per level-(k-1) cube."""
        depth = len(children)
        parents = (np.array([-1]),) + tuple(np.zeros(1, np.int64) for _ in range(depth))
        mult = (np.ones(1, np.int64),) + tuple(np.array([int(c)]) for c in children)
        diams = tuple(np.array([float(scales.side(k)) * math.sqrt(scales.d)])
                      for k in range(depth + 1))
        return cls(scales, depth, parents, mult, diams, "identity (compressed)")

    def count(self, k: int) -> int:
        return len(self.diameters[k])

    def copies(self, k: int) -> np.ndarray:
        """Total number of cubes represented by each level-k node."""
        out = np.ones(1, np.int64)
        for j in range(1, k + 1):
            out = out[self.parents[j]] * self.multiplicity[j]
        return out

    def with_diameters(self, diameters: Sequence[np.ndarray], provenance: str) -> "DiameterTree":
        return DiameterTree(self.scales, self.depth, self.parents, self.multiplicity,
                            tuple(np.asarray(x, float) for x in diameters), provenance, self.tree)

    def child_sums(self, k: int, alpha: float) -> np.ndarray:
        """``sum over children of |f(Q)|^alpha`` for every level-k node."""
        w = self.multiplicity[k + 1] * self.diameters[k + 1] ** alpha
        return np.bincount(self.parents[k + 1], weights=w, minlength=self.count(k))

    def internal(self, k: int) -> np.ndarray:
        return np.bincount(self.parents[k + 1], minlength=self.count(k)) > 0


def _need_explicit(dt: DiameterTree, what: str) -> SurvivalTree:
    if dt.tree is None:
        raise PreconditionError(f"{what} needs an explicit (uncompressed) tree")
    return dt.tree


def image_diameters(tree: SurvivalTree, pmap: PointMap, samples_per_cube: int = 8,
                    seed: int = 0) -> DiameterTree:
    """Sampled image diameters ``|f(Q n E)|`` using the deepest level as E.

    Each cube contributes the points of its leaf boxes nearest to its
    corners, plus ``samples_per_cube`` seeded uniform points in its leaves.
    The random draws of a cube are a prefix of those for any larger sample
    count, so diameters never decrease as ``samples_per_cube`` grows.  The
    identity map takes the cube diameter directly.  Cubes with no leaf or a
    zero sampled diameter are flagged and inherit the parent diameter scaled
    by the side ratio.
    """
    if samples_per_cube < 2:
        raise ValueError("samples_per_cube must be >= 2")
    if pmap.is_identity:
        return DiameterTree.identity(tree)
    if tree.extinct:
        raise PreconditionError("tree has no leaves at its deepest level")
    d, depth = tree.d, tree.depth
    leaf_lo = tree.coords[depth].astype(float) * float(tree.side(depth))
    leaf_side = float(tree.side(depth))
    corners = digit_offsets(2, d).astype(float)
    diams, flags = [], []
    for k in range(depth + 1):
        lo, hi = tree.descendant_range(k, depth)
        side = float(tree.side(k))
        out = np.zeros(tree.count(k))
        flag = np.zeros(tree.count(k), bool)
        for i in range(tree.count(k)):
            a, b = int(lo[i]), int(hi[i])
            if b > a:
                boxes = leaf_lo[a:b]
                target = (tree.coords[k][i] + corners) * side  # (2^d, d)
                near = np.clip(target[:, None, :], boxes[None], boxes[None] + leaf_side)
                j = np.argmin(((near - target[:, None, :]) ** 2).sum(-1), axis=1)
                pts = [near[np.arange(len(target)), j]]
                rng = np.random.default_rng([seed, k, *map(int, tree.coords[k][i])])
                u = rng.random((samples_per_cube, d + 1))
                pick = a + np.minimum((u[:, 0] * (b - a)).astype(np.int64), b - a - 1)
                pts.append(leaf_lo[pick] + u[:, 1:] * leaf_side)
                img = pmap(np.concatenate(pts))
                out[i] = float(pmap.image_metric(img, img).max())
            if out[i] <= 0:
                flag[i] = True
                if k == 0:
                    raise PreconditionError("root image diameter is zero")
                par = tree.parents[k][i]
                out[i] = diams[k - 1][par] * float(tree.side(k) / tree.side(k - 1))
        diams.append(out)
        flags.append(flag)
    mult = tuple(np.ones(tree.count(k), np.int64) for k in range(depth + 1))
    return DiameterTree(tree.scales, depth, tree.parents, mult, tuple(diams),
                        f"{pmap.name} sampled x{samples_per_cube}", tree, tuple(flags))


# -- fat scheme -----------------------------------------------------------------

@dataclass(frozen=True)
class SubadditivityReport:
    alpha: float
    ratios: tuple  # per level 0..depth-1, NaN at leaves
    worst: float
    worst_node: tuple[int, int] | None

    @property
    def passed(self) -> bool:
        return self.worst >= 1 - REL_TOL


def subadditivity_check(dt: DiameterTree, alpha: float) -> SubadditivityReport:
    """``sum_children |f(Q)|^alpha / |f(Q0)|^alpha`` for every internal node."""
    ratios, worst, where = [], math.inf, None
    for k in range(dt.depth):
        r = dt.child_sums(k, alpha) / dt.diameters[k] ** alpha
        r = np.where(dt.internal(k), r, np.nan)
        ratios.append(r)
        if np.any(~np.isnan(r)):
            i = int(np.nanargmin(r))
            if r[i] < worst:
                worst, where = float(r[i]), (k, i)
    return SubadditivityReport(alpha, tuple(ratios), worst, where)


@dataclass(frozen=True)
class ChainReport:
    constant: float
    level: np.ndarray
    node: np.ndarray
    column: np.ndarray
    lhs: np.ndarray
    rhs: np.ndarray

    @property
    def ok(self) -> np.ndarray:
        return self.lhs <= self.rhs * (1 + REL_TOL)

    @property
    def passed(self) -> bool:
        return bool(self.ok.all())

    @property
    def min_slack(self) -> float:
        return float(np.min(self.rhs / self.lhs)) if len(self.lhs) else math.inf


def chain_bound_check(dt: DiameterTree, eta: DistortionFunction) -> ChainReport:
    """``|f(Q0)| <= 16 eta(2) sum_{Q in column} |f(Q)|`` for every node and occupied column.

    Columns group children by their digits on the first ``d - 1`` axes.
    """
    tree = _need_explicit(dt, "chain_bound_check")
    c_eta = 16 * float(eta(2.0))
    rows = []
    for k in range(dt.depth):
        N = tree.scales.N(k + 1)
        digits = tree.child_digits(k + 1)[:, :-1]
        C = N ** (tree.d - 1)
        col = tree.parents[k + 1] * C + _digit_rank(digits, N)
        sums = np.bincount(col, weights=dt.diameters[k + 1], minlength=tree.count(k) * C)
        present = np.flatnonzero(np.bincount(col, minlength=tree.count(k) * C))
        node, column = present // C, present % C
        rows.append((np.full(len(present), k), node, column,
                     dt.diameters[k][node], c_eta * sums[present]))
    if not rows:
        return ChainReport(c_eta, *([np.zeros(0)] * 5))
    return ChainReport(c_eta, *(np.concatenate(x) for x in zip(*rows)))


@dataclass(frozen=True, eq=False)
class CylinderMeasure:
    """Mass per node copy; children masses sum to the parent mass."""

    dt: DiameterTree
    masses: tuple
    exponent: float
    schedule: tuple = ()

    def conservation_error(self) -> float:
        err = 0.0
        for k in range(self.dt.depth):
            inner = self.dt.internal(k)
            if not inner.any():
                continue
            s = np.bincount(self.dt.parents[k + 1],
                            weights=self.dt.multiplicity[k + 1] * self.masses[k + 1],
                            minlength=self.dt.count(k))
            m = self.masses[k]
            rel = np.abs(s[inner] - m[inner]) / np.maximum(m[inner], np.finfo(float).tiny)
            err = max(err, float(rel.max()))
        return err

    def level_totals(self) -> list[float]:
        return [float(math.fsum(self.dt.copies(k) * self.masses[k]))
                for k in range(self.dt.depth + 1)]

    def to_csv(self, alpha: float, normalize: bool = True) -> str:
        lines = ["address,mass,diameter,ratio"]
        scale = self.dt.diameters[0][0] if normalize else 1.0
        for k in range(self.dt.depth + 1):
            r = self.masses[k] / (self.dt.diameters[k] / scale) ** alpha
            for i in range(self.dt.count(k)):
                if self.dt.tree is not None:
                    addr = "".join("(" + " ".join(map(str, t)) + ")"
                                   for t in self.dt.tree.address(k, i))
                else:
                    addr = f"level{k}:class{i}"
                lines.append(f"{addr},{self.masses[k][i]!r},{self.dt.diameters[k][i]!r},{r[i]!r}")
        return "\n".join(lines) + "\n"


def _split(dt: DiameterTree, k: int, parent_mass: np.ndarray, exponent: float) -> np.ndarray:
    sums = dt.child_sums(k - 1, exponent)
    par = dt.parents[k]
    if np.any(sums[par] <= 0):
        bad = int(par[np.flatnonzero(sums[par] <= 0)[0]])
        raise DegenerateMass(f"level {k - 1} node {bad}: sibling sum of |f(Q)|^{exponent} is zero")
    return parent_mass[par] * dt.diameters[k] ** exponent / sums[par]


def build_measure_fat(dt: DiameterTree, alpha: float) -> CylinderMeasure:
    """Split mass among siblings proportionally to ``|f(Q)|^alpha``, root mass 1."""
    masses = [np.ones(1)]
    for k in range(1, dt.depth + 1):
        masses.append(_split(dt, k, masses[-1], alpha))
    return CylinderMeasure(dt, tuple(masses), alpha)


def telescoping_ratio(dt: DiameterTree, alpha: float) -> tuple:
    """``mu(Q) / |f(Q)|^alpha`` as the product over ancestors of
    ``|f(Q_{l-1})|^alpha / sum_children |f(Q)|^alpha`` (normalized diameters)."""
    d0 = dt.diameters[0][0]
    out = [np.ones(1)]
    for k in range(1, dt.depth + 1):
        prev = (dt.diameters[k - 1] / d0) ** alpha
        sums = dt.child_sums(k - 1, alpha) / d0 ** alpha
        with np.errstate(divide="ignore"):
            factor = prev / sums
        out.append(out[-1][dt.parents[k]] * factor[dt.parents[k]])
    return tuple(out)


@dataclass(frozen=True)
class FrostmanReport:
    alpha: float
    ceiling: float
    C_star: float
    worst_node: tuple[int, int]
    depth: int
    ratios: tuple = field(repr=False)

    @property
    def passed(self) -> bool:
        return self.C_star <= self.ceiling * (1 + REL_TOL)

    def level_max(self) -> list[float]:
        return [float(r.max()) if len(r) else 0.0 for r in self.ratios]


def frostman_verify(mu: CylinderMeasure, dt: DiameterTree, alpha: float,
                    ceiling: float = 1.0, normalize: bool = True) -> FrostmanReport:
    """``C* = max mu(f(Q)) / |f(Q)|^alpha`` over all nodes; pass iff ``C* <= ceiling``."""
    if mu.dt is not dt and mu.dt.parents is not dt.parents:
        raise PreconditionError("measure and diameter tree do not share a tree")
    scale = dt.diameters[0][0] if normalize else 1.0
    ratios = tuple(mu.masses[k] / (dt.diameters[k] / scale) ** alpha for k in range(dt.depth + 1))
    best, where = -math.inf, (0, 0)
    for k, r in enumerate(ratios):
        if len(r) and r.max() > best:
            best, where = float(r.max()), (k, int(r.argmax()))
    return FrostmanReport(alpha, ceiling, best, where, dt.depth, ratios)


@dataclass(frozen=True)
class DimensionCertificate:
    alpha: float
    C_star: float
    depth: int

    @property
    def statement(self) -> str:
        if self.alpha == 0:
            return "dimension >= 0 (vacuous)"
        return (f"mass distribution: mu(f(Q)) <= {self.C_star:.6g} |f(Q)|^{self.alpha:g} on all "
                f"cylinders to depth {self.depth}, so Hausdorff and box dimension >= {self.alpha:g} "
                f"for this finite-depth approximation")


def dim_lower_bound(report: FrostmanReport) -> DimensionCertificate:
    if not report.passed:
        raise PreconditionError(
            f"Frostman check failed (C*={report.C_star:.6g} > {report.ceiling:g}); no certificate")
    return DimensionCertificate(report.alpha, report.C_star, report.depth)


# -- dense scheme ---------------------------------------------------------------

@dataclass(frozen=True)
class DenseMeasureParams:
    alpha: float
    t: float
    beta: float
    gamma: float
    d: int = 2

    def __post_init__(self):
        if not 0 < self.alpha < self.t < self.d:
            raise DomainError(f"need 0 < alpha < t < d, got {self.alpha}, {self.t}, {self.d}")
        if not 0 < self.beta <= 1:
            raise DomainError("beta must lie in (0, 1]")
        lo = self.window[0]
        if not lo < self.gamma < 1:
            raise DomainError(f"gamma={self.gamma} outside its window ({lo:g}, 1)")

    @property
    def window(self) -> tuple[float, float]:
        return self.t / (self.t + (self.t - self.alpha) * self.beta ** 2), 1.0


@dataclass(frozen=True)
class Band:
    """Dyadic levels ``start < j <= split_to`` split one step at a time, then one
    jump from ``split_to`` straight to ``end``."""

    start: int
    end: int
    split_to: int
    boundary: bool  # start + gamma k is an integer (half-open endpoint excluded)

    @property
    def skipped(self) -> range:
        return range(self.split_to + 1, self.end)


def schedule(construction_levels: Sequence[int], gamma: float) -> tuple[Band, ...]:
    """Bands from cumulative dyadic levels ``0 = K_0 < K_1 < ...``."""
    out = []
    for a, b in zip(construction_levels, construction_levels[1:]):
        edge = a + gamma * (b - a)
        k0 = math.ceil(edge) - 1
        out.append(Band(a, b, max(k0, a), math.isclose(edge, round(edge), abs_tol=1e-12)))
    return tuple(out)


def dyadic_refinement(tree: SurvivalTree) -> tuple[SurvivalTree, tuple[int, ...]]:
    """Insert the dyadic levels between construction levels (all ``N_k`` powers of 2).

    A virtual dyadic cube is retained iff it contains a retained cube of the
    next construction level.  Returns the binary tree and the cumulative
    dyadic level of every construction level.
    """
    ks = []
    for k in range(1, tree.depth + 1):
        N = tree.scales.N(k)
        if N & (N - 1):
            raise PreconditionError(f"N_{k}={N} is not a power of 2")
        ks.append(N.bit_length() - 1)
    K = [0]
    for k in ks:
        K.append(K[-1] + k)
    levels = [tree.coords[0]]
    for n in range(tree.depth):
        nxt = tree.coords[n + 1]
        for j in range(1, ks[n]):
            levels.append(nxt >> (ks[n] - j))
        levels.append(nxt)
    binary = ScaleSequence.explicit(tree.d, [2] * K[-1]) if K[-1] else ScaleSequence.constant(tree.d, 2)
    return SurvivalTree.from_coords(binary, levels), tuple(K)


def build_measure_dense(dt: DiameterTree, params: DenseMeasureParams,
                        construction_levels: Sequence[int]) -> CylinderMeasure:
    """Two-regime mass distribution with exponent ``t`` on a dyadic refinement.

    Within each band levels up to ``split_to`` are split step by step; level
    ``end`` is split in one go from its ancestor at ``split_to``; skipped
    levels get the mass of their descendants at ``end``.
    """
    tree = _need_explicit(dt, "build_measure_dense")
    K = tuple(int(k) for k in construction_levels)
    if K[0] != 0 or K[-1] != dt.depth or any(b <= a for a, b in zip(K, K[1:])):
        raise PreconditionError("construction levels must run from 0 to the tree depth")
    bands = schedule(K, params.gamma)
    t = params.t
    masses: list = [None] * (dt.depth + 1)
    masses[0] = np.ones(1)
    for band in bands:
        for j in range(band.start + 1, band.split_to + 1):
            masses[j] = _split(dt, j, masses[j - 1], t)
        a, e = band.split_to, band.end
        if e == a + 1:
            masses[e] = _split(dt, e, masses[a], t)
            continue
        lo, hi = tree.descendant_range(a, e)
        anc = np.repeat(np.arange(tree.count(a)), hi - lo)
        w = dt.diameters[e] ** t
        sums = np.bincount(anc, weights=w, minlength=tree.count(a))
        if np.any(sums[anc] <= 0):
            raise DegenerateMass(f"zero |f(Q)|^t sum below a level-{a} cube")
        masses[e] = masses[a][anc] * w / sums[anc]
        for j in band.skipped:
            lo, hi = tree.descendant_range(j, e)
            csum = np.concatenate([[0.0], np.cumsum(masses[e])])
            masses[j] = csum[hi] - csum[lo]
    return CylinderMeasure(dt, tuple(masses), t, bands)


@dataclass(frozen=True)
class SkipFit:
    band: Band
    N: int
    K: float  # max |f(Q)| / |f(root)| * N^(gamma beta) over skipped levels


def skip_diameter_fit(dt: DiameterTree, bands: Sequence[Band],
                      params: DenseMeasureParams) -> list[SkipFit]:
    """Report-only fit of ``|f(Q)| <= K N^(-gamma beta)`` at skipped dyadic levels."""
    out = []
    root = dt.diameters[0][0]
    for band in bands:
        levels = list(band.skipped) + [band.end]
        N = 2 ** (band.end - band.start)
        worst = max(float(dt.diameters[j].max()) for j in levels if dt.count(j))
        out.append(SkipFit(band, N, worst / root * N ** (params.gamma * params.beta)))
    return out
