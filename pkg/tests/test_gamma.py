import math

import cvxpy as cp
import numpy as np
import pytest
from hypothesis import given, settings, strategies as st

from randcover.content import hausdorff_content_upper
from randcover.dyadic import DyadicSet, fat_cantor, geometric_gap_ratios
from randcover.energy import GaugeFunction, measure_energy
from randcover.gamma import (content_lower_from_gamma, dense_matrix, gamma, gamma_stability,
                             kernel_apply)


def qp_oracle(E: DyadicSet, s: float) -> float:
    """Minimum of ``w^T A w`` over the simplex, solved by a conic solver on the dense matrix."""
    A = dense_matrix(E, s)
    A = 0.5 * (A + A.T)
    # PSD factor for a DCP-compliant objective
    vals, vecs = np.linalg.eigh(A)
    R = vecs * np.sqrt(np.clip(vals, 0, None))
    w = cp.Variable(A.shape[0])
    prob = cp.Problem(cp.Minimize(cp.sum_squares(R.T @ w)), [w >= 0, cp.sum(w) == 1])
    prob.solve(solver=cp.CLARABEL)
    return float(prob.value)


def random_set(rng, d, level, frac=0.5):
    flat = np.flatnonzero(rng.random(1 << (d * level)) < frac)
    return DyadicSet(d, level, flat if flat.size else [0])


@pytest.mark.parametrize("level", [4, 6])
def test_full_torus_uniform_minimizer(level):
    E = DyadicSet.full(1, level)
    res = gamma(E, 0.5)
    assert res.converged
    assert res.value == pytest.approx(qp_oracle(E, 0.5), rel=max(1e-6, res.duality_gap / res.value))
    w = res.weights
    np.testing.assert_allclose(w, 1.0 / w.size, rtol=1e-3)


@pytest.mark.parametrize("seed", range(4))
def test_matches_dense_oracle(seed):
    rng = np.random.default_rng(seed)
    d = 1 + seed % 2
    E = random_set(rng, d, 6 if d == 1 else 4)
    s = 0.5 * d
    res = gamma(E, s)
    ref = qp_oracle(E, s)
    assert res.value >= ref * (1 - 1e-7)
    assert res.value - ref <= res.duality_gap + 1e-7 * ref


def test_kernel_apply_matches_dense():
    rng = np.random.default_rng(5)
    E = random_set(rng, 2, 4)
    v = rng.random(len(E))
    A = dense_matrix(E, 1.0) * E.cell_volume ** 2
    np.testing.assert_allclose(kernel_apply(E, v, GaugeFunction.power(1.0, 2)), A @ v, rtol=1e-10)


def test_empty_is_infinite():
    assert math.isinf(gamma(DyadicSet.empty(1, 5), 0.5).value)


def test_exponent_range():
    with pytest.raises(ValueError):
        gamma(DyadicSet.full(1, 4), 1.0)


def test_value_is_energy_of_minimizer():
    E = random_set(np.random.default_rng(1), 1, 7)
    res = gamma(E, 0.4)
    assert res.value == measure_energy(res.minimizer, GaugeFunction.power(0.4, 1))
    assert res.duality_gap >= 0
    assert res.weights.sum() == pytest.approx(1.0)
    assert np.all(res.weights >= 0)


@settings(max_examples=20, deadline=None)
@given(st.integers(0, 10_000), st.floats(0.2, 0.8))
def test_antitone_in_the_set(seed, s):
    rng = np.random.default_rng(seed)
    E = random_set(rng, 1, 7)
    F = DyadicSet(1, 7, E.flat[rng.random(len(E)) < 0.6]) if len(E) > 1 else E
    if F.is_empty():
        F = E
    rE, rF = gamma(E, s), gamma(F, s)
    assert 0 < rE.value < math.inf
    assert rE.value <= rF.value + rE.duality_gap + rF.duality_gap


def test_stability_identity_and_superset():
    rng = np.random.default_rng(2)
    E = random_set(rng, 1, 7)
    assert abs(gamma_stability(E, E, 0.5)) <= 1e-6 * gamma(E, 0.5).value
    bigger = E | DyadicSet(1, 7, rng.integers(0, 128, 10))
    slack = gamma(E, 0.5).duality_gap + gamma(bigger, 0.5).duality_gap
    assert gamma_stability(E, bigger, 0.5) <= slack


def test_stability_trend_when_restoring_cells():
    rng = np.random.default_rng(4)
    full = DyadicSet.full(1, 8)
    holes = rng.permutation(256)[:32]
    diffs = []
    for k in (32, 16, 8, 4, 0):
        E = full - DyadicSet(1, 8, holes[:k]) if k else full
        diffs.append(gamma_stability(full, E, 0.5))
    assert all(a >= b - 1e-6 for a, b in zip(diffs, diffs[1:]))
    assert diffs[-1] == pytest.approx(0, abs=1e-6)
    assert diffs[0] > 0


def test_content_lower_single_set():
    E = random_set(np.random.default_rng(8), 1, 6)
    out = content_lower_from_gamma([E], 0.5)
    assert out.value == pytest.approx(1 / gamma(E, 0.5).value)


def test_content_lower_fat_cantor_chain_bounded_away():
    ratios = geometric_gap_ratios(0.25, 5)
    chain = [fat_cantor(ratios[:k], 10) for k in range(1, 6)]
    out = content_lower_from_gamma(chain, 0.5)
    assert out.converged
    assert out.value > 0.3
    assert out.value <= hausdorff_content_upper(chain[-1], 0.5) * (1 + 1e-9)


def test_content_lower_shrinking_chain_goes_to_zero():
    chain = [DyadicSet(1, 10, np.arange(1 << (10 - k))) for k in range(0, 9, 2)]
    bounds = [content_lower_from_gamma(chain[: j + 1], 0.5).value for j in range(len(chain))]
    assert all(a >= b for a, b in zip(bounds, bounds[1:]))
    assert bounds[-1] < 0.2 * bounds[0]


def test_content_lower_rejects_bad_chains():
    with pytest.raises(ValueError):
        content_lower_from_gamma([], 0.5)
    A = DyadicSet(1, 4, [0, 1])
    with pytest.raises(ValueError):
        content_lower_from_gamma([A, DyadicSet(1, 4, [0, 5])], 0.5)


@pytest.mark.parametrize("seed", range(50))
def test_gamma_bound_below_content(seed):
    rng = np.random.default_rng(1000 + seed)
    d = 1 if seed < 35 else 2
    E = random_set(rng, d, 6 if d == 1 else 4, rng.uniform(0.1, 0.9))
    s = rng.uniform(0.2, 0.8) * d
    bound = 1 / gamma(E, s).value
    assert bound <= hausdorff_content_upper(E, s) * d ** (s / 2) * (1 + 1e-9)
