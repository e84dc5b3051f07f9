import math
from fractions import Fraction
from itertools import product

import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from fracperc.cantor import (FatCantorSpec, build_fat_cantor, check_dense, extract_dense_subset,
                             family_size, gap_report, gaps_to_csv, level_columns,
                             longest_gap_run, max_vertical_gap, overline_log,
                             trim_families)
from fracperc.errors import DomainError, MissingLevel
from fracperc.grid import ScaleSequence, SurvivalTree, digit_offsets
from fracperc.percolation import ModelSpec, Realization, SeedSpec


def one_level(N, d, keep):
    """Depth-1 tree on N^d children with the given child digit tuples retained."""
    s = ScaleSequence.constant(d, N)
    return SurvivalTree.from_addresses(s, [[()], [(tuple(t),) for t in keep]])


def brute_gap(N, d, keep):
    # oracle: rasterize on the child grid and scan every column point by point
    occupied = set(map(tuple, keep))
    best = 0
    for col in product(range(N), repeat=d - 1):
        run = 0
        for z in range(N):
            run = 0 if (*col, z) in occupied else run + 1
            best = max(best, run)
    return Fraction(best, N)


def test_fat_cantor_counts():
    assert build_fat_cantor(FatCantorSpec(2, 2), 1).count(1) == 15
    t = build_fat_cantor(FatCantorSpec(3, 1, d=1), 2)
    assert t.counts() == [1, 2, 4]
    t = build_fat_cantor(FatCantorSpec(2, 1, rule="random", seed=4), 3)
    assert all(np.all(t.child_counts(k) == 3) for k in range(3))
    drop_last = build_fat_cantor(FatCantorSpec(2, 1, rule=lambda addr: (1, 1)), 2)
    assert not np.any(np.all(drop_last.coords[2] % 2 == 1, axis=1))


def test_fat_cantor_similarity_dimension():
    assert FatCantorSpec(2, 2).similarity_dimension == pytest.approx(math.log(15) / math.log(4))


def test_gap_examples():
    N, d = 3, 2
    all_cells = [tuple(t) for t in digit_offsets(N, d)]
    no_middle = [t for t in all_cells if t != (1, 1)]
    assert max_vertical_gap(one_level(N, d, no_middle), ()) == Fraction(1, 3)
    assert max_vertical_gap(one_level(N, d, all_cells), ()) == 0
    no_column = [t for t in all_cells if t[0] != 1]
    assert max_vertical_gap(one_level(N, d, no_column), ()) == 1


def test_gap_on_deepest_level_raises():
    t = one_level(2, 2, [(0, 0)])
    with pytest.raises(MissingLevel):
        max_vertical_gap(t, ((0, 0),))


def test_gap_exhaustive_small():
    for d, N in ((1, 2), (1, 3), (2, 2), (2, 3)):
        cells = [tuple(t) for t in digit_offsets(N, d)]
        for mask in range(2 ** len(cells)):
            keep = [c for i, c in enumerate(cells) if mask >> i & 1]
            assert max_vertical_gap(one_level(N, d, keep), ()) == brute_gap(N, d, keep)


@settings(max_examples=300, deadline=None)
@given(st.integers(1, 3), st.integers(2, 6), st.integers(0, 2**32 - 1))
def test_gap_random_against_brute_force(d, N, seed):
    rng = np.random.default_rng(seed)
    cells = digit_offsets(N, d)
    keep = [tuple(c) for c in cells[rng.random(len(cells)) < rng.random()]]
    assert max_vertical_gap(one_level(N, d, keep), ()) == brute_gap(N, d, keep)


def test_fat_cantor_gaps_and_density():
    spec = FatCantorSpec(2, 2)
    t = build_fat_cantor(spec, 3)
    rep = gap_report(t, 1.0)
    # a single removed cell leaves a gap of exactly one child side
    assert all(g.gap == t.side(n + 1) for n in range(3) for g in rep if len(g.address) == n)
    # relative gap is N^-m of the side, i.e. N^-m / sqrt(d) of the diameter
    delta = 4.0 ** -1 / math.sqrt(2)
    assert check_dense(t, delta) == []
    assert len(check_dense(t, delta * 0.99)) == t.count(0) + t.count(1) + t.count(2)


def test_full_tree_is_dense_for_any_delta():
    t = SurvivalTree.full(ScaleSequence.explicit(2, [3, 4]), 2)
    assert check_dense(t, 1e-9) == []


def test_carved_column_reported_alone():
    s = ScaleSequence.constant(2, 4)
    full = SurvivalTree.full(s, 2)
    # remove the whole column x=1 inside child (2,3)
    target = full._index[1][(2, 3)]
    digits = full.child_digits(2)
    keep = [np.ones(1, bool), np.ones(16, bool),
            ~((full.parents[2] == target) & (digits[:, 0] == 1))]
    t = full.restrict(keep)
    bad = check_dense(t, 0.5)
    assert [g.address for g in bad] == [((2, 3),)]
    assert bad[0].gap == Fraction(1, 4)
    assert gaps_to_csv(bad).splitlines()[1].startswith("(2 3),0.25,")


def test_overline_log():
    assert overline_log(0.5, 8) == pytest.approx(3)
    assert overline_log(0.5, 1) == 0
    assert overline_log(0.9, 100) == pytest.approx(2)
    with pytest.raises(DomainError):
        overline_log(1.0, 2)


def greedy_columns(c, M):
    # oracle: delete one cube at a time from the fullest column (lowest index on ties)
    c = list(c)
    while sum(c) > M:
        j = max(range(len(c)), key=lambda i: (c[i], -i))
        c[j] -= 1
    return c


@settings(max_examples=200, deadline=None)
@given(st.integers(2, 8), st.integers(0, 2**32 - 1))
def test_level_columns_matches_greedy(N, seed):
    rng = np.random.default_rng(seed)
    occ = rng.random((1, N, N)) < rng.random()
    count = int(occ.sum())
    if count == 0:
        return
    M = int(rng.integers(1, count + 1))
    got = level_columns(occ, np.array([count]), M)[0]
    assert list(got) == greedy_columns(occ.sum(axis=-1)[0], M)
    trimmed = trim_families(occ, M)
    assert trimmed.sum() == M and not (trimmed & ~occ).any()


@settings(max_examples=100, deadline=None)
@given(st.integers(2, 10), st.integers(0, 2**32 - 1))
def test_trimming_keeps_subset_and_counts(N, seed):
    rng = np.random.default_rng(seed)
    occ = rng.random((3, N, N)) < 0.8
    M = int(max(1, occ.sum(axis=(1, 2)).min() // 2))
    if occ.sum(axis=(1, 2)).min() == 0:
        return
    trimmed = trim_families(occ, M)
    assert np.all(trimmed.sum(axis=(1, 2)) == M)
    assert not (trimmed & ~occ).any()
    # a column keeping t cubes has no empty run longer than N - t
    t = trimmed.sum(axis=-1)
    runs = np.stack([longest_gap_run(trimmed[:, c:c + 1]) for c in range(N)], axis=1)
    assert np.all(runs <= N - t)


def test_family_size():
    # N=8, d=2, p=0.5: 64 / (12 * 3) = 1.78 -> 2
    assert family_size(8, 2, 0.5) == 2
    assert family_size(64, 2, 0.5) == math.ceil(4096 / 72)


def test_extract_needs_p_in_open_interval():
    t = SurvivalTree.full(ScaleSequence.explicit(2, [4, 8]), 2)
    with pytest.raises(DomainError):
        extract_dense_subset(t, 1.0)


def test_extract_on_full_tree():
    t = SurvivalTree.full(ScaleSequence.explicit(2, [4, 8, 16], dense=True), 3)
    res = extract_dense_subset(t, 0.5)
    assert res is not None and res.verified
    for k, M in enumerate(res.family_sizes):
        assert np.all(res.tree.child_counts(k) == M - 1)
    # on a full tree trimming alone creates the gaps
    for n, got in enumerate(res.achieved_delta):
        N = t.scales.N(n + 1)
        assert got <= 13 * 2 * overline_log(0.5, N) / N + 1 / N


def test_extract_from_lazy_realization_matches_tree():
    spec = ModelSpec.dense([4, 8, 16], 0.5)
    real = Realization(spec, SeedSpec(5))
    lazy = extract_dense_subset(real, 0.5, 0, 3)
    eager = extract_dense_subset(real.tree(3), 0.5)
    assert (lazy is None) == (eager is None)
    if lazy is not None:
        assert lazy.tree.same_as(eager.tree)


def test_extract_below_start_level():
    t = SurvivalTree.full(ScaleSequence.explicit(2, [2, 4, 8]), 3)
    res = extract_dense_subset(t, 0.5, start_level=1)
    assert res.anchor == ((0, 0),) and res.tree.depth == 2
