import itertools

import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from fracperc.cantor import FatCantorSpec, build_fat_cantor
from fracperc.errors import DomainError, PreconditionError
from fracperc.qs import (DistortionFunction, SampledMap, affine_map, eta_eval, identity_map,
                         lemma_bounds_check, load_points_csv, power_map, power_map_constant,
                         save_points_csv, snowflake_map, verify_qs)

IDENT = DistortionFunction.power(1.0, 1.0)


def brute_violations(X, fX, eta):
    # oracle: explicit loop over ordered triples with scalar arithmetic
    out = []
    n = len(X)
    for x, y, z in itertools.product(range(n), repeat=3):
        if x == z:
            continue
        t = np.linalg.norm(X[x] - X[y]) / np.linalg.norm(X[x] - X[z])
        r = np.linalg.norm(fX[x] - fX[y]) / np.linalg.norm(fX[x] - fX[z])
        if r > float(eta(t)) * (1 + 1e-12):
            out.append((x, y, z))
    return out


def test_eta_examples():
    assert eta_eval(IDENT, 3) == 3
    assert eta_eval(DistortionFunction.power(0.5, 1.0), 4) == 16
    assert eta_eval(DistortionFunction.power(0.5, 1.0), 0.25) == 0.5  # t^beta branch below 1
    assert eta_eval(DistortionFunction.snowflake(0.5), 0.25) == 0.5
    with pytest.raises(DomainError):
        eta_eval(IDENT, -1)


def test_tabulated_extrapolation_flagged():
    eta = DistortionFunction.tabulated([0, 1, 2], [0, 2, 3])
    assert eta(1.5) == 2.5 and eta(4) == 5.0
    assert list(eta.extrapolates([1, 3])) == [False, True]
    with pytest.raises(DomainError):
        DistortionFunction.tabulated([0, 1, 1], [0, 1, 2])


@given(st.floats(0.05, 1), st.floats(0.1, 10), st.lists(st.floats(0, 100), min_size=2, max_size=20))
def test_power_distortion_is_increasing(beta, C, ts):
    eta = DistortionFunction.power(beta, C)
    ts = sorted(ts)
    vals = eta(np.array(ts))
    assert eta(0.0) == 0
    assert np.all(np.diff(vals) >= 0)


def test_identity_has_no_violations():
    pts = np.random.default_rng(0).random((15, 2))
    rep = verify_qs(identity_map().sample(pts), IDENT)
    assert rep.passed and rep.exhaustive and rep.checked == 15 * 15 * 14


def test_snowflake_equality_triple():
    pts = np.array([[0.0], [0.25], [1.0]])
    m = snowflake_map(0.5).sample(pts)
    rep = verify_qs(m, DistortionFunction.snowflake(0.5))
    assert rep.passed and rep.equalities >= 1
    # triple (0, 1, 0.25): image ratio 1 / 0.5 = 2 = eta(4)
    assert np.sqrt(1.0) / np.sqrt(0.25) == 2 == DistortionFunction.snowflake(0.5)(4.0)


def test_square_map_violation_reported():
    pts = np.array([[0.0], [0.5], [1.0]])
    rep = verify_qs(power_map(2).sample(pts), IDENT)
    found = {(pts[v.x, 0], pts[v.y, 0], pts[v.z, 0]) for v in rep.violations}
    assert (0.0, 1.0, 0.5) in found
    viol = next(v for v in rep.violations if (v.x, v.y, v.z) == (0, 2, 1))
    assert viol.ratio == 4 and viol.bound == 2
    assert sorted((v.x, v.y, v.z) for v in rep.violations) == \
        sorted(brute_violations(pts, pts ** 2, IDENT))


@settings(max_examples=30, deadline=None)
@given(st.integers(0, 2**32 - 1), st.floats(0.3, 3))
def test_vectorized_check_matches_loop(seed, a):
    rng = np.random.default_rng(seed)
    pts = rng.random((7, 1))
    eta = DistortionFunction.power(1.0, 1.5)
    rep = verify_qs(power_map(a).sample(pts), eta)
    assert sorted((v.x, v.y, v.z) for v in rep.violations) == \
        sorted(brute_violations(pts, pts ** a, eta))


@pytest.mark.parametrize("a", [0.3, 0.5, 0.8, 1.5, 2.0, 3.0])
def test_power_map_constant_by_grid_search(a):
    # oracle: exhaustive search on a fine grid including 0 and 1
    grid = np.linspace(0, 1, 41)[:, None]
    m = power_map(a)
    rep = verify_qs(m.sample(grid), m.nominal_eta, max_triples=10**6)
    assert rep.exhaustive and rep.passed
    assert power_map_constant(a) >= 2 ** (a - 1)


@settings(max_examples=20, deadline=None)
@given(st.integers(0, 2**32 - 1), st.floats(0.2, 1.0))
def test_builtins_pass_nominal_eta(seed, eps):
    pts = np.random.default_rng(seed).random((12, 2))
    for pmap in (identity_map(), snowflake_map(eps),
                 affine_map([[2.0, 0.5], [0.0, 1.0]], [1.0, -1.0])):
        assert verify_qs(pmap.sample(pts), pmap.nominal_eta).passed


@settings(max_examples=20, deadline=None)
@given(st.integers(0, 2**32 - 1), st.floats(0.01, 100), st.floats(0.01, 100))
def test_rescaling_invariance(seed, a, b):
    pts = np.random.default_rng(seed).random((8, 1))
    m = power_map(2).sample(pts)
    eta = DistortionFunction.power(0.5, 2.0)
    r1, r2 = verify_qs(m, eta), verify_qs(m.rescaled(a, b), eta)
    assert [(v.x, v.y, v.z) for v in r1.violations] == [(v.x, v.y, v.z) for v in r2.violations]


def test_sampling_above_cap():
    pts = np.random.default_rng(1).random((80, 2))
    rep = verify_qs(identity_map().sample(pts), IDENT, max_triples=5000, seed=3)
    assert not rep.exhaustive and rep.checked == 5000 and rep.passed


def test_sampled_map_metric_checks():
    pts = np.random.default_rng(0).random((6, 2))
    assert identity_map().sample(pts).check_metrics() == []
    dup = SampledMap(np.vstack([pts, pts[:1]]), np.vstack([pts, pts[:1]]))
    assert dup.check_metrics()


def test_lemma_identity_examples():
    pts = np.random.default_rng(2).random((30, 2))
    m = identity_map().sample(pts)
    A, B = np.arange(5), np.arange(20)
    rep = lemma_bounds_check(m, IDENT, A, B)
    r = rep.results["subset_diameter_ratio"]
    assert r.satisfied and r.lower <= r.value <= r.upper
    # touching sets: dist 0, bound 1 + eta(2), identity LHS <= 1
    touch = lemma_bounds_check(m, IDENT, np.arange(10), np.arange(9, 12),
                               which=["distance_to_larger_set"])
    res = touch.results["distance_to_larger_set"]
    assert res.upper == 3 and res.value == 0 and res.satisfied


def test_lemma_preconditions():
    pts = np.random.default_rng(2).random((10, 2))
    m = identity_map().sample(pts)
    with pytest.raises(PreconditionError, match="subset_diameter_ratio"):
        lemma_bounds_check(m, IDENT, [0, 1], [2, 3], which=["subset_diameter_ratio"])
    rep = lemma_bounds_check(m, IDENT, [0, 1], [2, 3])
    assert "subset_diameter_ratio" in rep.skipped


def test_lemmas_snowflake_on_fat_cantor():
    t = build_fat_cantor(FatCantorSpec(2, 2), 2)
    pts = t.points()
    m = snowflake_map(0.5).sample(pts)
    eta = DistortionFunction.snowflake(0.5)
    rng = np.random.default_rng(7)
    for i in range(1000):
        B = rng.choice(len(pts), int(rng.integers(2, 40)), replace=False)
        if i % 2:
            A = rng.choice(B, int(rng.integers(2, len(B) + 1)), replace=False)
        else:
            A = rng.choice(len(pts), int(rng.integers(2, 40)), replace=False)
        rep = lemma_bounds_check(m, eta, A, B)
        assert rep.passed
        res = rep.results.get("distance_to_larger_set")
        if res is not None:
            assert res.value <= res.chain <= res.upper * (1 + 1e-12)


def test_square_map_fails_a_lemma():
    pts = np.linspace(0, 1, 11)[:, None]
    m = power_map(2).sample(pts)
    rep = lemma_bounds_check(m, IDENT, [0, 1], np.arange(11), which=["subset_diameter_ratio"])
    assert not rep.passed  # |f(A)| / |f(B)| = 0.01 < 1 / (2 * 10)


def test_points_csv_round_trip(tmp_path):
    pts = np.random.default_rng(0).random((5, 3))
    path = tmp_path / "pts.csv"
    save_points_csv(path, pts)
    assert np.array_equal(load_points_csv(path), pts)
