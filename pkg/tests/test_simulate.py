import math

import numpy as np
import pytest
from hypothesis import given, settings, strategies as st
from scipy import stats

from randcover.dyadic import DyadicSet, rasterize_ball, rasterize_intervals, translate
from randcover.energy import DiscreteMeasure
from randcover.simulate import (DisplacementFamily, GeneratorEscapeError, GeneratorSchedule,
                                SamplingDistribution, box_dimension_estimate, default_blocks,
                                density_interaction_check, generator_rasters,
                                packing_saturation_check, sample_centers, stage_union,
                                trial_seed, truncated_limsup, verify_inverse_family)

UNIFORM1 = SamplingDistribution("uniform", 1)
TRANSLATION = DisplacementFamily()
NONLINEAR = DisplacementFamily("nonlinear", 0.02, 1)


# -- sampling -------------------------------------------------------------------

def test_seed_split_is_deterministic_and_distinct():
    assert trial_seed(7, 3) == trial_seed(7, 3)
    assert len({trial_seed(7, t) for t in range(100)}) == 100
    assert trial_seed(7, 0) != trial_seed(8, 0)


def test_same_seed_same_centers():
    a = sample_centers(SamplingDistribution("uniform", 2), 1000, 42)
    b = sample_centers(SamplingDistribution("uniform", 2), 1000, 42)
    np.testing.assert_array_equal(a, b)
    assert a.shape == (1000, 2) and np.all((a >= 0) & (a < 1))


def test_uniform_histogram_chi_square():
    x = sample_centers(UNIFORM1, 100_000, 2024)
    counts = np.bincount((x[:, 0] * 16).astype(int), minlength=16)
    assert stats.chisquare(counts).pvalue > 1e-3


def test_density_concentrated_on_one_cell():
    mu = DiscreteMeasure.uniform(DyadicSet.from_indices(2, 3, [[5, 2]]))
    x = sample_centers(SamplingDistribution("density", density=mu), 5000, 1)
    np.testing.assert_array_equal(np.floor(x * 8), np.tile([5, 2], (5000, 1)))


def test_density_sampling_follows_weights():
    S = DyadicSet(1, 2, [0, 3])
    mu = DiscreteMeasure(S, np.array([0.25, 0.75]))
    x = sample_centers(SamplingDistribution("density", density=mu), 40_000, 3)
    share = np.mean(x[:, 0] >= 0.75)
    assert share == pytest.approx(0.75, abs=0.01)


def test_sampling_errors():
    with pytest.raises(ValueError):
        sample_centers(UNIFORM1, 0, 1)
    with pytest.raises(ValueError):
        SamplingDistribution("gaussian")
    with pytest.raises(ValueError):
        SamplingDistribution("density")


# -- displacement families --------------------------------------------------------

def test_displacement_validation():
    with pytest.raises(ValueError):
        DisplacementFamily("nonlinear", 0.1, 1)     # 2 pi k eps > 1/2
    with pytest.raises(ValueError):
        DisplacementFamily("nonlinear", 0.01, 0)
    with pytest.raises(ValueError):
        DisplacementFamily("shear")
    assert NONLINEAR.C_u == pytest.approx((1 + 0.04 * math.pi) / (1 - 0.04 * math.pi))


@settings(max_examples=50, deadline=None)
@given(st.floats(0, 1), st.floats(-0.4, 0.4), st.floats(1e-3, 0.1))
def test_nonlinear_cube_distortion_and_diameter(x, y, w):
    for d in (1, 2):
        xv = np.full(d, x)
        lo, hi = NONLINEAR.box_image(xv, np.full(d, y), np.full(d, y + w))
        ratio = float(np.prod(hi - lo)) / w ** d
        C = NONLINEAR.C_u
        assert C ** -d <= ratio <= C ** d
        assert math.dist(lo, hi) <= C * math.sqrt(d) * w * (1 + 1e-12)


def test_nonlinear_with_zero_eps_equals_translation():
    x = sample_centers(UNIFORM1, 200, 5)
    sched = GeneratorSchedule("ball", 1, 0.5, 1.0, n_max=200)
    flat = DisplacementFamily("nonlinear", 0.0, 1)
    assert stage_union(x, sched, flat, (0, 200), 12) == stage_union(x, sched, TRANSLATION, (0, 200), 12)


# -- inverse family ---------------------------------------------------------------------

def test_inverse_translation_exact():
    rep = verify_inverse_family(TRANSLATION, 10_000, 0, d=2)
    assert rep.max_error <= 4 * np.finfo(float).eps
    assert rep.unconverged == 0


def test_inverse_nonlinear_recovery_and_derivative():
    rep = verify_inverse_family(NONLINEAR, 10_000, 1, d=2)
    assert rep.max_error < 1e-10
    assert rep.unconverged == 0
    assert rep.max_inverse_derivative <= NONLINEAR.C_u ** 2 + 1e-6


# -- stage unions ------------------------------------------------------------------------

@pytest.mark.parametrize("d,level", [(1, 10), (2, 7)])
def test_single_grid_aligned_generator_is_translated_raster(d, level):
    rng = np.random.default_rng(d)
    x = rng.integers(0, 1 << level, (1, d)) / (1 << level)
    sched = GeneratorSchedule("ball", d, 0.13, 1.0, n_max=1)
    ref = translate(rasterize_ball(np.zeros(d), 0.13, level, "outer"), x[0])
    assert stage_union(x, sched, TRANSLATION, (0, 1), level) == ref


def test_single_custom_generator_is_translated_raster():
    A = DyadicSet.from_indices(2, 5, [[0, 0], [1, 0], [1, 1], [30, 2]])
    sched = GeneratorSchedule("custom", 2, custom=lambda n: A, n_max=1)
    x = np.array([[0.25, 0.5]])
    assert stage_union(x, sched, TRANSLATION, (0, 1), 5) == translate(A, x[0])


def test_rectangle_generator_1d_matches_interval():
    sched = GeneratorSchedule("rectangle", 1, 0.25, 1.0, n_max=1)
    x = np.array([[0.5]])
    ref = rasterize_intervals(np.array([0.375]), np.array([0.625]), 8)
    assert stage_union(x, sched, TRANSLATION, (0, 1), 8) == ref


@pytest.mark.parametrize("disp", [TRANSLATION, NONLINEAR])
@pytest.mark.parametrize("d", [1, 2])
def test_stage_union_subadditive_and_monotone(disp, d):
    n = 60
    x = sample_centers(SamplingDistribution("uniform", d), n, 11)
    sched = GeneratorSchedule("ball", d, 0.2, 1.0, n_max=n)
    level = 10 if d == 1 else 7
    U = stage_union(x, sched, disp, (0, n), level)
    parts = sum(stage_union(x, sched, disp, (k - 1, k), level).measure() for k in range(1, n + 1))
    assert U.measure() <= parts + 1e-12
    assert stage_union(x, sched, disp, (10, 30), level) <= stage_union(x, sched, disp, (5, 40), level)


def test_nonlinear_outer_raster_contains_image_samples():
    x = sample_centers(SamplingDistribution("uniform", 2), 5, 9)
    sched = GeneratorSchedule("ball", 2, 0.3, 1.0, n_max=5)
    level = 7
    flat, owner = generator_rasters(x, sched, NONLINEAR, np.arange(1, 6), level)
    rng = np.random.default_rng(0)
    for k in range(1, 6):
        r = float(sched.radius(k))
        ang = rng.random(400) * 2 * math.pi
        rad = r * np.sqrt(rng.random(400))
        y = np.stack([rad * np.cos(ang), rad * np.sin(ang)], axis=1)
        z = NONLINEAR(x[k - 1][None, :], y)
        cells = np.floor(z * (1 << level)).astype(int)
        hit = cells[:, 0] * (1 << level) + cells[:, 1]
        assert np.isin(hit, flat[owner == k]).all()


def test_nonlinear_ball_escape():
    x = np.array([[0.3, 0.3]])
    sched = GeneratorSchedule("ball", 2, 0.6, 1.0, n_max=1)
    with pytest.raises(GeneratorEscapeError):
        stage_union(x, sched, NONLINEAR, (0, 1), 6)


def test_stage_union_block_range():
    x = sample_centers(UNIFORM1, 5, 0)
    with pytest.raises(ValueError):
        stage_union(x, GeneratorSchedule(n_max=5), TRANSLATION, (0, 6), 6)


# -- truncations and estimators ---------------------------------------------------------

def test_single_block_chain_is_stage_union():
    x = sample_centers(UNIFORM1, 50, 2)
    sched = GeneratorSchedule("ball", 1, 0.5, 1.0, n_max=50)
    ch = truncated_limsup(x, sched, TRANSLATION, [(0, 50)], [9])
    assert ch.sets[0] == stage_union(x, sched, TRANSLATION, (0, 50), 9)


def test_chain_is_nested_and_reports_empty():
    x = sample_centers(UNIFORM1, 4000, 3)
    sched = GeneratorSchedule("ball", 1, 1.0, 3.0, n_max=4000)
    blocks = [(0, 10), (10, 100), (100, 1000), (1000, 4000)]
    ch = truncated_limsup(x, sched, TRANSLATION, blocks, [6, 10, 14, 18])
    for a, b in zip(ch.sets, ch.sets[1:]):
        assert b <= a
    if ch.first_empty is not None:
        assert ch.sets[ch.first_empty].is_empty()
        assert all(not S.is_empty() for S in ch.sets[:ch.first_empty])


def test_chain_validation():
    x = sample_centers(UNIFORM1, 10, 0)
    sched = GeneratorSchedule(n_max=10)
    with pytest.raises(ValueError):
        truncated_limsup(x, sched, TRANSLATION, [(0, 5), (3, 10)], [4, 5])
    with pytest.raises(ValueError):
        truncated_limsup(x, sched, TRANSLATION, [(0, 5), (5, 10)], [6, 5])


def test_chain_survival_profile_alpha_2():
    sched = GeneratorSchedule("ball", 1, 1.0, 2.0, n_max=100_000)
    blocks, levels = default_blocks(sched, 4.0, 18)
    assert len(blocks) >= 4
    profile = []
    for t in range(20):
        x = sample_centers(UNIFORM1, blocks[3][1], trial_seed(20240601, t))
        ch = truncated_limsup(x, sched, TRANSLATION, blocks[:4], levels[:4])
        profile.append([S.measure() for S in ch.sets])
    assert np.all(np.median(profile, axis=0) > 0)


@pytest.mark.parametrize("d", [1, 2])
def test_full_torus_chain_has_slope_d(d):
    levels = [2, 4, 6]
    est = box_dimension_estimate([DyadicSet.full(d, l) for l in levels], levels)
    assert est.value == pytest.approx(d)
    assert est.r_squared == pytest.approx(1.0)


def test_single_cell_chain_has_slope_zero():
    levels = [3, 6, 9, 12]
    est = box_dimension_estimate([DyadicSet(1, l, [0]) for l in levels], levels)
    assert est.value == 0.0
    assert est.local_slopes == [0.0, 0.0, 0.0]


def test_estimator_needs_three_points():
    with pytest.raises(ValueError):
        box_dimension_estimate([DyadicSet.full(1, 2), DyadicSet.full(1, 4)], [2, 4])
    with pytest.raises(ValueError):
        box_dimension_estimate([DyadicSet.full(1, 2), DyadicSet.empty(1, 4),
                                DyadicSet.full(1, 6)], [2, 4, 6])


@settings(max_examples=50, deadline=None)
@given(st.sampled_from([1, 2]), st.lists(st.integers(0, 10 ** 6), min_size=3, max_size=5))
def test_estimate_lies_in_unit_range(d, seeds):
    levels = list(range(2, 2 + 2 * len(seeds), 2)) if d == 1 else list(range(1, 1 + len(seeds)))
    sets = []
    for sd, l in zip(seeds, levels):
        rng = np.random.default_rng(sd)
        flat = np.flatnonzero(rng.random(1 << (d * l)) < rng.uniform(0.01, 1))
        sets.append(DyadicSet(d, l, flat if flat.size else [0]))
    est = box_dimension_estimate(sets, levels)
    assert 0 <= est.value <= d
    assert 0 <= est.r_squared <= 1


def test_default_blocks_resolution_anchor():
    sched = GeneratorSchedule("ball", 1, 1.0, 2.0, n_max=100_000)
    blocks, levels = default_blocks(sched, 4.0, 18)
    assert blocks[0][0] == 0
    assert all(a[1] == b[0] for a, b in zip(blocks, blocks[1:]))
    assert levels == sorted(levels) and levels[-1] <= 18
    assert sched.diameter(blocks[-1][1]) >= 2.0 ** -18 > sched.diameter(blocks[-1][1] + 1)


# -- packing saturation -----------------------------------------------------------------

def full_torus_schedule(d):
    return GeneratorSchedule("custom", d, custom=lambda n: DyadicSet.full(d, 2), n_max=50)


@pytest.mark.parametrize("d", [1, 2])
def test_saturation_full_torus_generators(d):
    x = sample_centers(SamplingDistribution("uniform", d), 50, 0)
    F = DyadicSet(d, 6, np.arange(0, 1 << (6 * d), 3))
    rep = packing_saturation_check(x, full_torus_schedule(d), TRANSLATION, F, 4, 7)
    assert rep.ratio == 1.0 and rep.saturation_index == 7


def test_saturation_empty_tail():
    x = sample_centers(UNIFORM1, 50, 0)
    F = DyadicSet.full(1, 6)
    rep = packing_saturation_check(x, full_torus_schedule(1), TRANSLATION, F, 4, 60)
    assert rep.ratio == 0.0 and rep.saturation_index is None


def test_saturation_ratio_matches_direct_count():
    x = sample_centers(UNIFORM1, 300, 4)
    sched = GeneratorSchedule("ball", 1, 0.3, 1.0, n_max=300)
    F = DyadicSet(1, 10, np.arange(0, 1024, 7))
    rep = packing_saturation_check(x, sched, TRANSLATION, F, 6, 20)
    U = stage_union(x, sched, TRANSLATION, (19, 300), 10)
    hit = (F & U).parents(6)
    assert rep.ratio == pytest.approx(len(hit) / len(F.parents(6)))
    assert [c for c, r in rep.curve] == sorted(c for c, r in rep.curve)


def test_saturation_requires_positive_measure():
    x = sample_centers(UNIFORM1, 5, 0)
    with pytest.raises(ValueError):
        packing_saturation_check(x, GeneratorSchedule(n_max=5), TRANSLATION,
                                 DyadicSet.empty(1, 6), 4, 1)


# -- density interaction ----------------------------------------------------------------

@pytest.mark.parametrize("d", [1, 2])
def test_interaction_full_torus(d):
    E = DyadicSet.from_indices(d, 6, [[0] * d, [63] + [0] * (d - 1)])
    rep = density_interaction_check(DyadicSet.full(d, 6), NONLINEAR, E, 0.2, 0, samples=200)
    assert rep.fraction == 1.0 and rep.passes and not rep.vacuous


def test_interaction_null_set_is_vacuous():
    rep = density_interaction_check(DyadicSet.full(1, 6), NONLINEAR, DyadicSet.empty(1, 6), 0.2, 0)
    assert rep.vacuous and rep.samples == 0


def test_interaction_1d_matches_box_loop():
    # the vectorized one-dimensional path against the per-box overlap loop on a product copy
    rng = np.random.default_rng(6)
    F = DyadicSet(1, 8, np.flatnonzero(rng.random(256) < 0.7))
    E = DyadicSet(1, 8, [0, 1, 255])
    one = density_interaction_check(F, TRANSLATION, E, 0.2, 3, samples=300)
    F2 = DyadicSet(2, 8, np.ravel_multi_index((np.repeat(F.flat, 256),
                                                np.tile(np.arange(256), len(F))), (256, 256)))
    E2 = DyadicSet.from_indices(2, 8, [[0, 0], [1, 0], [255, 0]])
    two = density_interaction_check(F2, TRANSLATION, E2, 0.2, 3, samples=300)
    assert abs(one.fraction - two.fraction) <= 4 * max(one.stderr, two.stderr, 0.01)
