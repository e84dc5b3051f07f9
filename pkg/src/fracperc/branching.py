"""Thick branching processes: subtree detection and the g-recursion bound.

For a node with ``N`` potential children, each marked independently with
probability at least ``1 - s``,

    g_N(s) = 1 - (1-s)^N - N s (1-s)^(N-1) + N^-5

bounds the probability of at most ``N - 2`` marked children in a
``(1 - N^-6)``-thick tree, and the probability ``q_n`` that no
``(N_k - 1)``-subtree of height ``n`` exists satisfies
``q_n <= g_1(g_2(...g_n(0)))``.
"""
from __future__ import annotations

import math
from dataclasses import dataclass, field
from fractions import Fraction
from itertools import product
from typing import Callable, Sequence

import numpy as np

from .errors import DomainError
from .grid import SurvivalTree
from .percolation import Z99, ModelSpec, Realization, SeedSpec

# dyadic precision of the certified (rounded-up) composition values
CERT_BITS = 256


def _g_numerator(N: int, m: int, e: int) -> int:
    # s = m / 2^e;  1 - (1-s)^N - N s (1-s)^(N-1) = A / 2^(eN)
    q = (1 << e) - m
    return (1 << (e * N)) - q ** N - N * m * q ** (N - 1)


def g_eval(N: int, s):
    """Evaluate g_N(s).

    Floats are evaluated exactly from their dyadic value and rounded once,
    so there is no cancellation for small ``s``; a :class:`Fraction`
    argument gives an exact :class:`Fraction`.
    """
    if N < 2:
        raise DomainError("N must be >= 2")
    if not 0 <= s <= 1:
        raise DomainError(f"s={s} outside [0, 1]")
    if isinstance(s, Fraction):
        q = 1 - s
        return 1 - q ** N - N * s * q ** (N - 1) + Fraction(1, N ** 5)
    m, den = float(s).as_integer_ratio()
    e = den.bit_length() - 1
    return _g_numerator(N, m, e) / (1 << (e * N)) + N ** -5.0


def g_binomial_tail(N: int, s: float) -> float:
    """Independent route: sum_{j<=N-2} C(N,j)(1-s)^j s^(N-j) + N^-5."""
    terms = [math.comb(N, j) * (1 - s) ** j * s ** (N - j) for j in range(N - 1)]
    return math.fsum(terms) + N ** -5.0


def _round_up(x: Fraction, bits: int = CERT_BITS) -> Fraction:
    scale = 1 << bits
    return Fraction(-((-x.numerator * scale) // x.denominator), scale)


@dataclass(frozen=True)
class BoundReport:
    """Composition values ``v_k = g_k(g_{k+1}(...g_n(0)))`` for ``k = start..n``.

    ``certified[i]`` is a rigorous upper bound for ``values[i]`` (exact
    rational arithmetic rounded upward; g is increasing).
    """

    levels: tuple[int, ...]
    start: int
    values: tuple[float, ...]
    certified: tuple[Fraction, ...] = field(repr=False)
    ceilings: tuple[Fraction, ...] = field(repr=False)
    violations: tuple[int, ...]

    @property
    def q(self) -> float:
        return self.values[0]

    @property
    def q_upper(self) -> Fraction:
        return self.certified[0]

    @property
    def p0(self) -> float:
        """Conservative lower bound ``1 - q`` on the containment probability."""
        return float(1 - self.q_upper)

    @property
    def below_one_eighth(self) -> bool:
        return self.q_upper <= Fraction(1, 8)

    def rows(self):
        for i, k in enumerate(range(self.start, self.start + len(self.values))):
            yield k, self.levels[k - 1], self.values[i], float(self.ceilings[i])

    def to_csv(self) -> str:
        lines = ["level,N_k,composition,ceiling"]
        lines += [f"{k},{N},{v!r},{c!r}" for k, N, v, c in self.rows()]
        return "\n".join(lines) + "\n"

    def summary(self) -> str:
        status = "ok" if not self.violations else f"violated at levels {list(self.violations)}"
        return (f"g-composition over {len(self.levels) - self.start + 1} levels: "
                f"q <= {self.q:.12g} (certified {float(self.q_upper):.12g}), "
                f"p0 >= {self.p0:.12g}; per-level 4N^-5 ceilings {status}")


def compose_bound(levels: Sequence[int], start: int = 1) -> BoundReport:
    """Nested composition ``g_start o ... o g_n (0)`` computed inside-out."""
    levels = tuple(int(x) for x in levels)
    if not levels or any(n < 2 for n in levels):
        raise DomainError("all branching counts must be >= 2")
    if not 1 <= start <= len(levels):
        raise DomainError("start must index into levels (1-based)")
    values, cert, ceilings = [], [], []
    v, c = 0.0, Fraction(0)
    for k in range(len(levels), start - 1, -1):
        N = levels[k - 1]
        v = g_eval(N, v)
        c = _round_up(g_eval(N, c))
        values.append(v)
        cert.append(c)
        ceilings.append(Fraction(4, N ** 5))
    values.reverse()
    cert.reverse()
    ceilings.reverse()
    bad = tuple(start + i for i, (x, ceil) in enumerate(zip(cert, ceilings)) if x > ceil)
    return BoundReport(levels, start, tuple(values), tuple(cert), tuple(ceilings), bad)


def taylor_bound_check(N: int, s_grid: Sequence[float]) -> np.ndarray:
    """Check ``g_N(s) <= N^-5 + 2 N^3 s^2`` exactly at each grid point of ``[0, 1/(2N))``."""
    out = np.empty(len(s_grid), bool)
    for i, s in enumerate(s_grid):
        if not 0 <= s < 0.5 / N:
            raise DomainError(f"grid point {s} outside [0, 1/(2N))")
        m, den = float(s).as_integer_ratio()
        e = den.bit_length() - 1
        # A / 2^(eN) <= 2 N^3 m^2 / 2^(2e), cleared of denominators
        out[i] = _g_numerator(N, m, e) << (2 * e) <= (2 * N ** 3 * m * m) << (e * N)
    return out


# -- subtrees ------------------------------------------------------------------

def _requirement(req) -> Callable[[int], int]:
    if callable(req):
        return req
    vals = tuple(int(x) for x in req)
    return lambda k: vals[k - 1]


def viable_masks(tree: SurvivalTree, req) -> list[np.ndarray]:
    """Bottom-up viability: horizon nodes are viable; a level-k node is viable
    iff it has at least ``M_{k+1}`` viable children."""
    M = _requirement(req)
    viable = [None] * (tree.depth + 1)
    viable[tree.depth] = np.ones(tree.count(tree.depth), bool)
    for k in range(tree.depth - 1, -1, -1):
        good = np.bincount(tree.parents[k + 1][viable[k + 1]], minlength=tree.count(k))
        viable[k] = good >= M(k + 1)
    return viable


def subtree_exists(tree: SurvivalTree, req) -> bool:
    return bool(viable_masks(tree, req)[0][0])


def find_subtree(tree: SurvivalTree, req) -> SurvivalTree | None:
    """Extract a subtree in which every level-k node has exactly ``M_{k+1}`` children.

    Children are taken lexicographically smallest first among the viable
    ones; ``None`` if the root is not viable.
    """
    M = _requirement(req)
    viable = viable_masks(tree, req)
    if not viable[0][0]:
        return None
    keep = [np.ones(1, bool)]
    for k in range(1, tree.depth + 1):
        cand = viable[k] & keep[k - 1][tree.parents[k]]
        idx = np.flatnonzero(cand)
        par = tree.parents[k][idx]
        first = np.searchsorted(par, par, "left")
        rank = np.arange(len(idx)) - first
        m = np.zeros(tree.count(k), bool)
        m[idx[rank < M(k)]] = True
        keep.append(m)
    return tree.restrict(keep)


def subtree_exists_bruteforce(tree: SurvivalTree, req) -> bool:
    """Oracle: search over explicit child-subset choices (small trees only)."""
    M = _requirement(req)
    starts, stops = zip(*[tree.children_range(k) for k in range(tree.depth)]) if tree.depth else ((), ())
    memo: dict = {}

    def ok(k: int, i: int) -> bool:
        if k == tree.depth:
            return True
        if (k, i) in memo:
            return memo[(k, i)]
        kids = range(int(starts[k][i]), int(stops[k][i]))
        need = M(k + 1)
        res = False
        for choice in product((False, True), repeat=len(kids)):
            if sum(choice) != need:
                continue
            if all(ok(k + 1, c) for c, on in zip(kids, choice) if on):
                res = True
                break
        memo[(k, i)] = res
        return res

    return ok(0, 0)


@dataclass(frozen=True)
class ContainmentReport:
    trials: int
    successes: int
    bound: BoundReport
    thickness_warnings: tuple[str, ...]

    @property
    def frequency(self) -> float:
        return self.successes / self.trials

    @property
    def sigma(self) -> float:
        f = self.frequency
        return math.sqrt(f * (1 - f) / self.trials)

    @property
    def halfwidth99(self) -> float:
        return Z99 * self.sigma

    @property
    def p0(self) -> float:
        return self.bound.p0


def thickness_warnings(spec: ModelSpec, depth: int) -> tuple[str, ...]:
    out = []
    for k in range(1, depth + 1):
        M = spec.scales.children_per_cube(k)
        need = 1.0 - float(M) ** -6
        have = spec.prob_all_retained(k)
        if have < need * (1 - 1e-15):
            out.append(f"level {k}: P(all {M} children retained)={have:.6g} < 1-M^-6={need:.6g}")
    return tuple(out)


def containment_mc(spec: ModelSpec, depth: int, trials: int, seed: SeedSpec,
                   trial_offset: int = 0) -> ContainmentReport:
    """Frequency of a ``(N_k^d - 1)``-subtree of height ``depth`` over trials."""
    req = [spec.scales.children_per_cube(k) - 1 for k in range(1, depth + 1)]
    hits = 0
    for t in range(trial_offset, trial_offset + trials):
        tree = Realization(spec, seed.trial(t)).tree(depth)
        hits += subtree_exists(tree, req)
    bound = compose_bound([spec.scales.children_per_cube(k) for k in range(1, depth + 1)])
    return ContainmentReport(trials, hits, bound, thickness_warnings(spec, depth))
