"""Random classical, fat and dense fractal percolation.

Randomness is counter based: the uniform variate deciding whether a cube is
retained is a hash of ``(trial key, level, integer corner coordinates)``.
There is no stream position, so

* a realization does not depend on generation order or worker count;
* children of any cube can be generated on demand (:class:`Realization`),
  which the dense extraction pipeline relies on;
* raising any retention probability can only add cubes (monotone coupling),
  because a cube is retained iff its variate is below the level probability.

Trial keys are derived as ``splitmix64(base_seed ^ splitmix64(trial))``.
Retry ``j`` of a rejection sampler uses ``seed.retry(j)``, derived the same
way from the trial key with a separate tag.
"""
from __future__ import annotations

from dataclasses import dataclass
from fractions import Fraction
from math import comb
from statistics import NormalDist

import numpy as np

from .errors import DomainError, NonExtinctionFailed
from .grid import ParamSequence, ScaleSequence, SurvivalTree, expand_children

MASK64 = (1 << 64) - 1
_GOLDEN = 0x9E3779B97F4A7C15
_RETRY_TAG = 0xD1B54A32D192ED03
Z99 = NormalDist().inv_cdf(0.995)

KINDS = ("classical", "fat", "dense", "all_or_nothing")


def splitmix64(x: int) -> int:
    x = (x + _GOLDEN) & MASK64
    x = ((x ^ (x >> 30)) * 0xBF58476D1CE4E5B9) & MASK64
    x = ((x ^ (x >> 27)) * 0x94D049BB133111EB) & MASK64
    return x ^ (x >> 31)


def _mix(h: np.ndarray) -> np.ndarray:
    with np.errstate(over="ignore"):
        h = h + np.uint64(_GOLDEN)
        h = (h ^ (h >> np.uint64(30))) * np.uint64(0xBF58476D1CE4E5B9)
        h = (h ^ (h >> np.uint64(27))) * np.uint64(0x94D049BB133111EB)
    return h ^ (h >> np.uint64(31))


def cube_uniforms(key: int, level: int, coords: np.ndarray, stream: int = 0) -> np.ndarray:
    """Uniform [0, 1) variate attached to each cube (rows of ``coords``)."""
    coords = np.asarray(coords, dtype=np.int64)
    head = splitmix64((key & MASK64) ^ splitmix64((level << 4) | stream))
    h = np.full(len(coords), head, dtype=np.uint64)
    for axis in range(coords.shape[1]):
        h = _mix(h ^ _mix(coords[:, axis].astype(np.uint64) + np.uint64(axis + 1)))
    return (h >> np.uint64(11)).astype(np.float64) * 2.0 ** -53


@dataclass(frozen=True)
class SeedSpec:
    base_seed: int

    @property
    def key(self) -> int:
        return self.base_seed & MASK64

    def trial(self, index: int) -> "SeedSpec":
        return SeedSpec(splitmix64(self.key ^ splitmix64(index)))

    def retry(self, attempt: int) -> "SeedSpec":
        if attempt == 0:
            return self
        return SeedSpec(splitmix64(self.key ^ splitmix64(_RETRY_TAG + attempt)))


@dataclass(frozen=True)
class ModelSpec:
    """Percolation parameters.

    ``N(k)`` subdivides level k-1 cubes and ``p(k)`` is the probability used
    for level-k cubes, both 1-indexed: level k uses the k-th configured term.

    ``all_or_nothing`` is a block law used for thickness experiments: each
    level-(k-1) cube keeps all of its children with probability ``p(k)`` and
    none otherwise.
    """

    kind: str
    d: int
    N: ParamSequence
    p: ParamSequence

    def __post_init__(self):
        if self.kind not in KINDS:
            raise ValueError(f"unknown model kind {self.kind!r}")
        if self.kind in ("classical", "fat", "all_or_nothing") and self.N.form != "constant":
            raise ValueError(f"{self.kind} percolation needs a constant N")
        if self.kind in ("classical", "dense") and self.p.form != "constant":
            raise ValueError(f"{self.kind} percolation needs a constant p")

    @classmethod
    def classical(cls, N: int, p: float, d: int = 2) -> "ModelSpec":
        return cls("classical", d, ParamSequence.constant(int(N)), ParamSequence.constant(p))

    @classmethod
    def fat(cls, N: int, p, d: int = 2) -> "ModelSpec":
        return cls("fat", d, ParamSequence.constant(int(N)), ParamSequence.from_config(p))

    @classmethod
    def dense(cls, N, p: float, d: int = 2) -> "ModelSpec":
        return cls("dense", d, ParamSequence.from_config(N), ParamSequence.constant(p))

    @classmethod
    def all_or_nothing(cls, N: int, q, d: int = 2) -> "ModelSpec":
        return cls("all_or_nothing", d, ParamSequence.constant(int(N)), ParamSequence.from_config(q))

    @property
    def scales(self) -> ScaleSequence:
        return ScaleSequence(self.d, self.N, dense=self.kind == "dense")

    def prob(self, k: int) -> float:
        val = float(self.p(k))
        if not 0.0 <= val <= 1.0:
            raise DomainError(f"p_{k}={val} outside [0, 1]")
        return val

    def check_depth(self, depth: int) -> None:
        """Evaluate every parameter used up to ``depth`` (raises InsufficientSequence)."""
        for k in range(1, depth + 1):
            self.scales.N(k)
            self.prob(k)

    def prob_all_retained(self, k: int) -> float:
        """Exact probability that a level-(k-1) cube keeps all its children."""
        if self.kind == "all_or_nothing":
            return self.prob(k)
        return self.prob(k) ** self.scales.children_per_cube(k)

    def child_count_pmf(self, k: int) -> np.ndarray:
        """Exact law of the number of retained children of a level-(k-1) cube."""
        M = self.scales.children_per_cube(k)
        p = self.prob(k)
        if self.kind == "all_or_nothing":
            pmf = np.zeros(M + 1)
            pmf[0], pmf[M] = 1 - p, p
            return pmf
        return np.array([comb(M, j) * p ** j * (1 - p) ** (M - j) for j in range(M + 1)])

    def to_config(self) -> dict:
        return {"kind": self.kind, "d": self.d, "N": self.N.to_config(), "p": self.p.to_config()}

    @classmethod
    def from_config(cls, cfg: dict) -> "ModelSpec":
        return cls(cfg["kind"], int(cfg.get("d", 2)), ParamSequence.from_config(cfg["N"]),
                   ParamSequence.from_config(cfg["p"]))


class Realization:
    """One realization of a model, with children generated on demand."""

    def __init__(self, spec: ModelSpec, seed: SeedSpec):
        self.spec = spec
        self.seed = seed
        self.scales = spec.scales

    def children(self, level: int, coords: np.ndarray) -> tuple[np.ndarray, np.ndarray]:
        """Retained children of the given level-``level`` cubes.

        Returns ``(child_coords, parent_index)`` in address order.
        """
        coords = np.asarray(coords, np.int64).reshape(-1, self.spec.d)
        k = level + 1
        child, parent = expand_children(coords, self.scales.N(k))
        p = self.spec.prob(k)
        if self.spec.kind == "all_or_nothing":
            keep = (cube_uniforms(self.seed.key, level, coords, stream=1) < p)[parent]
        else:
            keep = cube_uniforms(self.seed.key, k, child) < p
        return child[keep], parent[keep]

    def tree(self, depth: int) -> SurvivalTree:
        self.spec.check_depth(depth)
        coords = [np.zeros((1, self.spec.d), np.int64)]
        parents = [np.array([-1])]
        for level in range(depth):
            c, p = self.children(level, coords[-1])
            coords.append(c)
            parents.append(p)
        return SurvivalTree(self.scales, depth, tuple(coords), tuple(parents))

    def survives(self, depth: int, level: int = 0, coord=None) -> bool:
        """Whether the given cube (default: root) has a retained descendant at ``depth``."""
        if level >= depth:
            return True
        coord = np.zeros((1, self.spec.d), np.int64) if coord is None else np.asarray(coord).reshape(1, -1)
        kids, _ = self.children(level, coord)
        return any(self.survives(depth, level + 1, c) for c in kids)


def generate(spec: ModelSpec, depth: int, seed: SeedSpec) -> SurvivalTree:
    if depth < 0:
        raise ValueError("depth must be >= 0")
    return Realization(spec, seed).tree(depth)


@dataclass(frozen=True)
class Conditioned:
    """Result of rejection sampling on non-extinction."""

    realization: Realization
    tree: SurvivalTree | None
    attempts: int

    @property
    def retries(self) -> int:
        return self.attempts - 1


def condition_nonextinct(spec: ModelSpec, depth: int, seed: SeedSpec, max_retries: int = 1000,
                         materialize: bool = True) -> Conditioned:
    """Resample until the realization survives to ``depth``.

    With ``materialize=False`` the survival test is a lazy depth-first search
    and no tree is built, which keeps huge (dense) realizations affordable.
    """
    if max_retries < 1:
        raise ValueError("max_retries must be >= 1")
    spec.check_depth(depth)
    for attempt in range(max_retries):
        real = Realization(spec, seed.retry(attempt))
        if materialize:
            tree = real.tree(depth)
            if not tree.extinct:
                return Conditioned(real, tree, attempt + 1)
        elif real.survives(depth):
            return Conditioned(real, None, attempt + 1)
    raise NonExtinctionFailed(
        f"no surviving realization to depth {depth} in {max_retries} attempts")


@dataclass(frozen=True)
class OffspringStats:
    level: int
    trials: int
    count_freq: np.ndarray  # empirical law of the child count, index = count
    all_retained: float
    halfwidth99: float
    exact_all_retained: float

    def within(self, sigmas: float = 3.0) -> bool:
        sd = np.sqrt(self.exact_all_retained * (1 - self.exact_all_retained) / self.trials)
        return abs(self.all_retained - self.exact_all_retained) <= sigmas * sd + 1e-15


def offspring_stats(spec: ModelSpec, level: int, trials: int, seed: SeedSpec) -> OffspringStats:
    """Empirical child-count law of the origin cube at ``level`` over independent trials."""
    if trials < 1:
        raise ValueError("trials must be >= 1")
    M = spec.scales.children_per_cube(level + 1)
    origin = np.zeros((1, spec.d), np.int64)
    hist = np.zeros(M + 1, np.int64)
    for t in range(trials):
        kids, _ = Realization(spec, seed.trial(t)).children(level, origin)
        hist[len(kids)] += 1
    freq = hist[M] / trials
    return OffspringStats(level, trials, hist / trials, freq,
                          Z99 * np.sqrt(freq * (1 - freq) / trials),
                          spec.prob_all_retained(level + 1))


def volume_estimate(tree: SurvivalTree) -> Fraction:
    """Lebesgue volume of the retained cubes at the deepest level (exact)."""
    return Fraction(tree.count(tree.depth), tree.scales.cells(tree.depth) ** tree.d)
