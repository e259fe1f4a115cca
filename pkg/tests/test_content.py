import math

import numpy as np
import pytest
from hypothesis import given, settings, strategies as st

from randcover.content import (AmbiguityError, GLowerConfig, G_lower, SeriesSchedule,
                               critical_exponent, critical_exponent_report,
                               hausdorff_content_upper, lem_leb_split, lem_leb_split_report,
                               near_energy, net_content, power_law_schedule, separation)
from randcover.dyadic import DyadicSet, example_two_cubes, rasterize_intervals
from randcover.energy import GaugeFunction, g_value, kernel_table, lookup, set_energy


def brute_net_content(F: DyadicSet, t: float) -> float:
    """Minimum cost over every collection of dyadic cubes that covers ``F``.

    Subsets of the cubes meeting ``F`` are enumerated with a doubling table of
    coverage bitmasks, so no tree recursion is shared with the library.
    """
    d, L = F.dim, F.level
    idx = F.indices()
    cubes = []
    for k in range(L + 1):
        anc = idx >> (L - k)
        for a in np.unique(anc, axis=0):
            bits = np.all(anc == a, axis=1)
            mask = int(sum(1 << i for i in np.flatnonzero(bits)))
            cubes.append((mask, (math.sqrt(d) * 2.0 ** -k) ** t))
    assert len(cubes) <= 20
    cov = np.zeros(1, dtype=np.int64)
    cost = np.zeros(1)
    for mask, c in cubes:
        cov = np.concatenate([cov, cov | mask])
        cost = np.concatenate([cost, cost + c])
    full = (1 << len(F)) - 1
    return float(cost[cov == full].min())


def brute_near_energy(F: DyadicSet, n: int, sep: int, h) -> float:
    """Pair sum of the kernel over cells whose level-``n`` cubes are closer than ``sep`` cubes."""
    G = F.refine(max(F.level, n))
    d, L = G.dim, G.level
    idx = G.indices()
    table = kernel_table(d, L, h)
    q = idx >> (L - n)
    nq = 1 << n
    dq = np.abs(q[:, None, :] - q[None, :, :]) % nq
    dq = np.minimum(dq, nq - dq)
    gap = np.sqrt(np.sum(np.maximum(dq - 1, 0) ** 2, axis=-1))
    offs = idx[None, :, :] - idx[:, None, :]
    vals = lookup(table, offs, G.side_count)
    return float(vals[gap < sep].sum())


@st.composite
def small_sets_1d(draw, level=4, max_cells=5):
    flat = draw(st.lists(st.integers(0, (1 << level) - 1), min_size=1, max_size=max_cells,
                         unique=True))
    return DyadicSet(1, level, flat)


# -- net content ---------------------------------------------------------------

@pytest.mark.parametrize("d,level", [(1, 3), (2, 2)])
def test_single_cell_content(d, level):
    F = DyadicSet(d, level, [0])
    for t in (0.3, 0.9):
        assert hausdorff_content_upper(F, t) == pytest.approx((math.sqrt(d) * 2.0 ** -level) ** t)


def test_full_torus_content():
    for level in (2, 4):
        assert hausdorff_content_upper(DyadicSet.full(1, level), 1.0) == pytest.approx(1.0)
    # d = 2, t = 2: every complete level costs d^(d/2) = 2
    assert hausdorff_content_upper(DyadicSet.full(2, 3), 2.0) == pytest.approx(2.0)


@settings(max_examples=60, deadline=None)
@given(small_sets_1d(level=4),
       st.floats(0.05, 1.0))
def test_net_content_matches_exhaustive_enumeration(F, t):
    assert hausdorff_content_upper(F, t) == pytest.approx(brute_net_content(F, t), rel=1e-12)


@pytest.mark.parametrize("level", [1, 2, 3])
def test_exhaustive_enumeration_small_levels(level):
    rng = np.random.default_rng(level)
    for _ in range(10):
        flat = np.flatnonzero(rng.random(1 << level) < 0.5)
        if flat.size == 0:
            continue
        F = DyadicSet(1, level, flat)
        for t in (0.2, 0.6, 1.0):
            assert hausdorff_content_upper(F, t) == pytest.approx(brute_net_content(F, t))


def test_cover_is_a_cover_and_prefers_coarse():
    F = DyadicSet(1, 3, [0, 1])
    nc = net_content(F, 1.0)
    # one level-2 cube and two level-3 cells cost the same; the coarse one wins
    assert nc.cubes() == 1 and len(nc.cover[2]) == 1
    union = DyadicSet.empty(1, 3)
    for c in nc.cover:
        union = union | c.refine(3)
    assert F <= union


def test_empty_content_is_zero():
    assert hausdorff_content_upper(DyadicSet.empty(2, 3), 1.0) == 0.0


@settings(max_examples=40, deadline=None)
@given(small_sets_1d(level=6, max_cells=20), small_sets_1d(level=6, max_cells=20),
       st.floats(0.1, 1.0))
def test_content_monotone_and_subadditive(A, B, t):
    a, b = hausdorff_content_upper(A, t), hausdorff_content_upper(B, t)
    u = hausdorff_content_upper(A | B, t)
    assert u <= a + b + 1e-12
    assert max(a, b) <= u + 1e-12
    assert hausdorff_content_upper(A & B, t) <= min(a, b) + 1e-12


# -- near energy and splitting ----------------------------------------------------------

@pytest.mark.parametrize("n", [2, 3, 5, 7])
def test_near_energy_matches_pair_sum(n):
    rng = np.random.default_rng(n)
    F = DyadicSet(1, 5, np.flatnonzero(rng.random(32) < 0.4))
    h = GaugeFunction.power(0.5, 1)
    assert near_energy(F, n, 2, h) == pytest.approx(brute_near_energy(F, n, 2, h), rel=1e-9)


def test_near_energy_matches_pair_sum_2d():
    rng = np.random.default_rng(3)
    F = DyadicSet(2, 3, np.flatnonzero(rng.random(64) < 0.5))
    h = GaugeFunction.power(1.0, 2)
    for n in (2, 4):
        assert near_energy(F, n, 1, h) == pytest.approx(brute_near_energy(F, n, 1, h), rel=1e-9)


@pytest.mark.parametrize("d,s", [(1, 0.5), (1, 0.9), (2, 1.0), (2, 1.7)])
def test_separation_is_minimal(d, s):
    l = separation(d, s)
    assert (1 + 2 * math.sqrt(d) / l) ** s < 1.5
    assert l == 1 or (1 + 2 * math.sqrt(d) / (l - 1)) ** s >= 1.5


def test_split_p_one_is_identity():
    F = rasterize_intervals(np.array([0.1]), np.array([0.4]), 8)
    assert lem_leb_split(F, 1.0, 0.5) == F


@pytest.mark.parametrize("seed", range(5))
def test_split_random_sets_measure_and_energy(seed):
    rng = np.random.default_rng(seed)
    F = DyadicSet(1, 10, np.flatnonzero(rng.random(1 << 10) < rng.uniform(0.2, 0.8)))
    p, s = 0.5, 0.5
    rep = lem_leb_split_report(F, p, s)
    F1 = rep.subset
    assert F1 <= F
    assert abs(F1.measure() - p * F.measure()) <= F1.cell_volume
    h = GaugeFunction.power(s, 1)
    assert set_energy(F1, h) <= 2 * p * p * set_energy(F, h) * 1.05
    assert rep.criterion_met


def test_split_single_cube_satisfies_near_criterion():
    F = DyadicSet(1, 6, np.arange(16, 32))
    p, s = 0.25, 0.5
    rep = lem_leb_split_report(F, p, s)
    h = GaugeFunction.power(s, 1)
    assert rep.criterion_met
    assert rep.near_energy < 0.5 * p * p * set_energy(F, h)
    # retained cells are spread over the level-n grid: one per level-n cube at most
    F1 = rep.subset
    cubes = F1.indices()[:, 0] >> (F1.level - rep.n)
    assert np.unique(cubes).size == len(F1) or len(F1) > (1 << rep.n)


def test_split_errors():
    F = DyadicSet(1, 4, [1, 2])
    with pytest.raises(ValueError):
        lem_leb_split(F, 0.0, 0.5)
    with pytest.raises(ValueError):
        lem_leb_split(DyadicSet.empty(1, 4), 0.5, 0.5)
    with pytest.raises(ValueError):
        lem_leb_split(F, 0.5, 1.0)


def test_split_reports_achieved_fraction():
    F = DyadicSet(1, 24, [5])     # no room below the level cap
    rep = lem_leb_split_report(F, 0.5, 0.5)
    assert rep.p_achieved in (0.0, 1.0)


# -- G lower bound -------------------------------------------------------------------

def test_G_lower_empty_is_zero():
    assert G_lower(DyadicSet.empty(1, 5), 0.5).value == 0.0


@settings(max_examples=25, deadline=None)
@given(st.sampled_from([1, 2]), st.data(), st.floats(0.2, 0.9))
def test_G_lower_between_g_and_content(d, data, frac):
    level = 6 if d == 1 else 4
    n = 1 << (level * d)
    flat = data.draw(st.lists(st.integers(0, n - 1), min_size=1, max_size=40, unique=True))
    F = DyadicSet(d, level, flat)
    t = frac * d
    h = GaugeFunction.power(t, d)
    res = G_lower(F, h, GLowerConfig(thin_ps=(0.5,), thin_top=1))
    assert res.witness <= F and res.witness.measure() > 0
    assert res.value >= g_value(F, h) * (1 - 1e-12)
    assert res.value <= hausdorff_content_upper(F, t) * d ** (t / 2) * (1 + 1e-9)
    assert res.value == pytest.approx(g_value(res.witness, h), rel=1e-9)


def test_G_lower_exceeds_g_on_two_cubes():
    # a solid small cube next to a dust of tiny pieces spread over a large cube
    A = example_two_cubes(0.0625, 0.5, 0.125, 3, 8)
    h = GaugeFunction.power(1.0, 2)
    res = G_lower(A, h, GLowerConfig(thin_ps=()))
    assert res.value > 1.4 * g_value(A, h)
    assert res.source.startswith("cube level")


# -- critical exponent -----------------------------------------------------------------

@pytest.mark.parametrize("alpha", [1.5, 2.0, 3.0])
def test_critical_exponent_power_law(alpha):
    assert critical_exponent(power_law_schedule(alpha)) == pytest.approx(1 / alpha, abs=0.02)


def test_critical_exponent_all_divergent():
    sched = SeriesSchedule(lambda n, t: np.ones_like(n), t_hi=1.0)
    assert critical_exponent(sched) == 1.0


def test_critical_exponent_all_convergent():
    sched = SeriesSchedule(lambda n, t: 2.0 ** -n, t_lo=0.0)
    assert critical_exponent(sched) == 0.0


def test_critical_exponent_ambiguity():
    def ev(n, t):
        return np.ones_like(n) if 0.3 < t < 0.6 else n ** -2.0
    with pytest.raises(AmbiguityError) as info:
        critical_exponent(SeriesSchedule(ev))
    assert len(info.value.table) >= 2


def test_critical_exponent_rejects_negative_terms():
    with pytest.raises(ValueError):
        critical_exponent(SeriesSchedule(lambda n, t: -np.ones_like(n)))


def test_report_table_rows():
    rep = critical_exponent_report(power_law_schedule(2.0, n_max=20_000))
    assert rep.convention == "bisection"
    for t, div, slope, thr in rep.table:
        assert div == (slope > thr)
