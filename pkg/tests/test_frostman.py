import math

import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from fracperc.cantor import FatCantorSpec, build_fat_cantor
from fracperc.errors import DegenerateMass, DomainError, PreconditionError
from fracperc.frostman import (DenseMeasureParams, DiameterTree, build_measure_dense,
                               build_measure_fat, chain_bound_check, dim_lower_bound,
                               dyadic_refinement, frostman_verify, image_diameters, schedule,
                               skip_diameter_fit, subadditivity_check, telescoping_ratio)
from fracperc.grid import ScaleSequence, SurvivalTree
from fracperc.percolation import ModelSpec, SeedSpec, condition_nonextinct
from fracperc.qs import DistortionFunction, identity_map, snowflake_map

FAT = FatCantorSpec(2, 2)
CRIT = math.log(15) / math.log(4)


def fat_tree(depth):
    return build_fat_cantor(FAT, depth)


def toy_tree():
    # root with two children (0) and (1) in d = 1
    return SurvivalTree.full(ScaleSequence.constant(1, 2), 1)


def test_identity_diameters_full_tree():
    t = SurvivalTree.full(ScaleSequence.constant(2, 2), 1)
    dt = image_diameters(t, identity_map())
    assert np.allclose(dt.diameters[1], math.sqrt(2) / 2)


def test_snowflake_diameters():
    t = SurvivalTree.full(ScaleSequence.constant(2, 2), 1)
    dt = image_diameters(t, snowflake_map(0.5), samples_per_cube=4)
    assert np.allclose(dt.diameters[1], (math.sqrt(2) / 2) ** 0.5)
    assert np.isclose(dt.diameters[0][0], math.sqrt(2) ** 0.5)


def test_sampled_diameters_monotone_in_samples():
    t = fat_tree(2)
    prev = None
    for s in (2, 4, 16, 64):
        dt = image_diameters(t, snowflake_map(0.7), s, seed=3)
        if prev is not None:
            assert all(np.all(a >= b) for a, b in zip(dt.diameters, prev))
        prev = dt.diameters


def test_fallback_for_dead_branches():
    s = ScaleSequence.constant(1, 2)
    t = SurvivalTree.from_addresses(s, [[()], [((0,),), ((1,),)], [((0,), (1,))]])
    dt = image_diameters(t, snowflake_map(0.5), 4)
    assert dt.flagged[1].tolist() == [False, True]
    assert dt.diameters[1][1] == pytest.approx(dt.diameters[0][0] / 2)


def test_subadditivity_closed_form():
    dt = DiameterTree.identity(fat_tree(3))
    hi = subadditivity_check(dt, 1.9)
    assert hi.passed and hi.worst == pytest.approx(15 * 4 ** -1.9, rel=1e-12)
    assert 15 * 4 ** -1.9 == pytest.approx(1.077, abs=1e-3)
    lo = subadditivity_check(dt, 2.0)
    assert not lo.passed and lo.worst == pytest.approx(15 / 16, rel=1e-12)


def test_subadditivity_single_child():
    s = ScaleSequence.constant(1, 2)
    t = SurvivalTree.from_addresses(s, [[()], [((1,),)]])
    dt = DiameterTree.identity(t).with_diameters([np.ones(1), np.ones(1)], "toy")
    assert subadditivity_check(dt, 1.3).worst == 1.0


def test_chain_bound_identity_and_snowflake():
    t = fat_tree(3)
    assert chain_bound_check(DiameterTree.identity(t), DistortionFunction.power(1, 1)).passed
    dt = image_diameters(t, snowflake_map(0.5), 8)
    assert chain_bound_check(dt, DistortionFunction.snowflake(0.5)).passed


def test_chain_bound_adversarial():
    dt = DiameterTree.identity(fat_tree(2))
    shrunk = [dt.diameters[0]] + [d * 0.001 for d in dt.diameters[1:]]
    rep = chain_bound_check(dt.with_diameters(shrunk, "adversarial"), DistortionFunction.power(1, 1))
    assert not rep.passed


def test_chain_bound_needs_explicit_tree():
    with pytest.raises(PreconditionError):
        chain_bound_check(DiameterTree.uniform(FAT.scales, [15]), DistortionFunction.power(1, 1))


def test_uniform_measure_on_fat_cantor():
    dt = DiameterTree.identity(fat_tree(3))
    mu = build_measure_fat(dt, 1.9)
    for n in range(4):
        assert np.allclose(mu.masses[n], 15.0 ** -n, rtol=1e-12)
    assert mu.conservation_error() < 1e-12


def test_alpha_zero_splits_equally():
    dt = DiameterTree.identity(toy_tree()).with_diameters([np.ones(1), np.array([2.0, 1.0])], "toy")
    assert build_measure_fat(dt, 0).masses[1].tolist() == [0.5, 0.5]
    assert build_measure_fat(dt, 1).masses[1] == pytest.approx([2 / 3, 1 / 3])


def test_zero_sibling_sum():
    dt = DiameterTree.identity(toy_tree()).with_diameters([np.ones(1), np.zeros(2)], "toy")
    with pytest.raises(DegenerateMass):
        build_measure_fat(dt, 1.0)


def test_raw_and_normalized_ratios():
    dt = DiameterTree.identity(fat_tree(5))
    mu = build_measure_fat(dt, 1.9)
    raw = frostman_verify(mu, dt, 1.9, normalize=False)
    # level n: (1/15)^n / (sqrt(2) 4^-n)^1.9
    for n, got in enumerate(raw.level_max()):
        assert got == pytest.approx(15.0 ** -n / (math.sqrt(2) * 4.0 ** -n) ** 1.9, rel=1e-12)
    assert raw.level_max()[1] == pytest.approx(0.48, abs=0.005)
    assert raw.passed
    assert frostman_verify(mu, dt, 1.9).passed


def test_alpha_zero_certificate():
    dt = DiameterTree.identity(fat_tree(2))
    rep = frostman_verify(build_measure_fat(dt, 0), dt, 0)
    assert rep.passed and rep.C_star == 1
    assert "vacuous" in dim_lower_bound(rep).statement


def test_failing_measure_has_no_certificate():
    dt = DiameterTree.uniform(FAT.scales, [15] * 6)
    rep = frostman_verify(build_measure_fat(dt, 1.99), dt, 1.99)
    assert not rep.passed
    with pytest.raises(PreconditionError):
        dim_lower_bound(rep)


def test_certificate_on_fat_cantor():
    dt = DiameterTree.uniform(FAT.scales, [15] * 8)
    cert = dim_lower_bound(frostman_verify(build_measure_fat(dt, 1.9), dt, 1.9))
    assert cert.alpha == 1.9 and "1.9" in cert.statement


def test_compressed_matches_explicit():
    explicit = DiameterTree.identity(fat_tree(3))
    compressed = DiameterTree.uniform(FAT.scales, [15] * 3)
    for a in (1.5, 1.95, 2.0):
        r1 = frostman_verify(build_measure_fat(explicit, a), explicit, a)
        r2 = frostman_verify(build_measure_fat(compressed, a), compressed, a)
        assert r1.C_star == pytest.approx(r2.C_star, rel=1e-12)
        assert build_measure_fat(compressed, a).level_totals() == pytest.approx([1.0] * 4)


@settings(max_examples=25, deadline=None)
@given(st.floats(1.7, 2.0))
def test_threshold_bracketing(alpha):
    dt = DiameterTree.uniform(FAT.scales, [15] * 8)
    rep = frostman_verify(build_measure_fat(dt, alpha), dt, alpha)
    if alpha < CRIT - 0.02:
        assert rep.passed
    elif alpha > CRIT + 0.02:
        assert not rep.passed


@settings(max_examples=20, deadline=None)
@given(st.integers(0, 2**32 - 1), st.floats(0.5, 2.0))
def test_telescoping_identity_and_conservation(seed, alpha):
    spec = ModelSpec.classical(2, 0.7)
    tree = condition_nonextinct(spec, 4, SeedSpec(seed)).tree
    dt = image_diameters(tree, snowflake_map(0.6), 4, seed=seed % 1000)
    mu = build_measure_fat(dt, alpha)
    assert mu.conservation_error() < 1e-12
    tele = telescoping_ratio(dt, alpha)
    ratios = frostman_verify(mu, dt, alpha).ratios
    for a, b in zip(tele, ratios):
        internal_or_leaf = np.isfinite(a)
        assert np.allclose(a[internal_or_leaf], b[internal_or_leaf], rtol=1e-10)


def test_gamma_window():
    p = DenseMeasureParams(1.0, 1.5, 1.0, 0.8)
    assert p.window[0] == pytest.approx(0.75)
    with pytest.raises(DomainError, match="window"):
        DenseMeasureParams(1.0, 1.5, 1.0, 0.7)
    with pytest.raises(DomainError):
        DenseMeasureParams(1.6, 1.5, 1.0, 0.9)


def test_schedule_bands():
    bands = schedule([0, 2, 5, 9], 0.8)
    assert [(b.start, b.split_to, b.end) for b in bands] == [(0, 1, 2), (2, 4, 5), (5, 8, 9)]
    edge = schedule([0, 5], 0.8)[0]  # 0 + 0.8 * 5 = 4 exactly: half-open band stops at 3
    assert edge.boundary and edge.split_to == 3 and list(edge.skipped) == [4]


def dense_full_tree():
    return SurvivalTree.full(ScaleSequence.explicit(2, [4, 8], dense=True), 2)


def test_dyadic_refinement_of_full_tree():
    binary, K = dyadic_refinement(dense_full_tree())
    assert K == (0, 2, 5)
    assert binary.counts() == [4 ** k for k in range(6)]
    with pytest.raises(PreconditionError):
        dyadic_refinement(SurvivalTree.full(ScaleSequence.constant(2, 3), 1))


def test_dense_measure_on_full_dyadic_tree():
    binary, K = dyadic_refinement(dense_full_tree())
    dt = DiameterTree.identity(binary)
    params = DenseMeasureParams(1.0, 1.5, 1.0, 0.8)
    mu = build_measure_dense(dt, params, K)
    assert mu.level_totals() == pytest.approx([1.0] * 6, rel=1e-12)
    for k in range(6):
        assert np.allclose(mu.masses[k], 4.0 ** -k)
    assert mu.conservation_error() < 1e-12
    assert frostman_verify(mu, dt, params.alpha, ceiling=1e3).passed


def test_dense_gamma_near_one_matches_fat_scheme():
    spec = ModelSpec.dense([4, 8], 0.7)
    tree = condition_nonextinct(spec, 2, SeedSpec(2)).tree
    binary, K = dyadic_refinement(tree)
    dt = image_diameters(binary, snowflake_map(0.8), 4)
    params = DenseMeasureParams(0.5, 1.5, 1.0, 0.999)
    dense = build_measure_dense(dt, params, K)
    assert all(not list(b.skipped) for b in dense.schedule)
    fat = build_measure_fat(dt, params.t)
    for a, b in zip(dense.masses, fat.masses):
        assert np.allclose(a, b, rtol=1e-12)


def test_dense_measure_with_skips_conserves_mass():
    spec = ModelSpec.dense([32], 0.7)  # one band of length 5, so level 4 is skipped
    tree = condition_nonextinct(spec, 1, SeedSpec(4)).tree
    binary, K = dyadic_refinement(tree)
    dt = image_diameters(binary, snowflake_map(0.9), 4)
    params = DenseMeasureParams(1.0, 1.5, 1.0, 0.8)
    mu = build_measure_dense(dt, params, K)
    assert any(list(b.skipped) for b in mu.schedule)
    assert mu.conservation_error() < 1e-12
    fits = skip_diameter_fit(dt, mu.schedule, params)
    assert all(f.K > 0 for f in fits)
