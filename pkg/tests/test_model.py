import math

import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from levyrank.model import (
    Constant,
    Exponential,
    JumpComponent,
    JumpMeasure,
    Mixture,
    ModelError,
    ModelSpec,
    Normal,
    OnRank,
    PointMass,
    Product,
    ScalarLaw,
    check_stability,
    jump_mean_vector,
    second_moment_check,
    stability_from_effective_drifts,
)


def test_point_mass_bottom_rank_mean():
    jumps = JumpMeasure(3, (JumpComponent(0.5, PointMass((1.0, 0.0, 0.0))),))
    np.testing.assert_array_equal(jump_mean_vector(jumps), [0.5, 0.0, 0.0])


def test_empty_measure():
    jumps = JumpMeasure.empty(4)
    assert jumps.total_rate == 0
    np.testing.assert_array_equal(jump_mean_vector(jumps), np.zeros(4))
    np.testing.assert_array_equal(second_moment_check(JumpMeasure.empty(2)), [0.0, 0.0])


def test_exponential_mean_and_second_moment_against_sampling():
    jumps = JumpMeasure.per_rank([(1.0, Exponential(1.0)), None])
    np.testing.assert_allclose(jump_mean_vector(jumps), [1.0, 0.0])
    np.testing.assert_allclose(second_moment_check(jumps), [2.0, 0.0])

    draws = jumps.sample(np.random.default_rng(1), 1_000_000)
    se = draws.std(axis=0, ddof=1) / 1000.0
    assert abs(draws[:, 0].mean() - 1.0) < 4 * se[0]
    sq = draws[:, 0] ** 2
    assert abs(sq.mean() - 2.0) < 4 * sq.std(ddof=1) / 1000.0
    assert np.all(draws[:, 1] == 0)


def test_point_mass_second_moment():
    jumps = JumpMeasure.per_rank([(0.5, Constant(1.0)), None])
    np.testing.assert_allclose(second_moment_check(jumps), [0.5, 0.0])


MEASURES = [
    JumpMeasure.per_rank([(0.5, Constant(1.0)), (0.5, Constant(1.0)), None]),
    JumpMeasure.per_rank([(1.0, Normal(0.3, 2.0)), None, (2.0, Exponential(3.0))]),
    JumpMeasure(3, (
        JumpComponent(0.7, Product((Exponential(2.0), Constant(-1.0), Normal(1.0, 0.5)))),
        JumpComponent(0.3, PointMass((2.0, 0.0, -2.0))),
    )),
    JumpMeasure.per_rank([
        (1.5, Mixture((0.25, 0.75), (Constant(4.0), Exponential(1.0)))), None, None,
    ]),
]


@pytest.mark.parametrize("jumps", MEASURES)
def test_sampled_means_match_closed_form(jumps):
    n = 200_000
    draws = jumps.sample(np.random.default_rng(7), n)
    mean = draws.mean(axis=0) * jumps.total_rate
    se = draws.std(axis=0, ddof=1) / math.sqrt(n) * jumps.total_rate
    f = jump_mean_vector(jumps)
    assert np.all(np.abs(mean - f) <= 4 * se + 1e-12)


def test_stability_single_bottom_drift():
    r = check_stability(ModelSpec.diagonal([3.0, 0.0, 0.0], [1, 1, 1]))
    np.testing.assert_allclose(r.centered_effective_drifts, [2.0, -1.0, -1.0])
    np.testing.assert_allclose(r.partial_sums, [2.0, 1.0])
    assert r.stable and r.margin == pytest.approx(1.0)


def test_stability_top_drift_unstable():
    r = check_stability(ModelSpec.diagonal([0.0, 0.0, 5.0], [1, 1, 1]))
    np.testing.assert_allclose(r.centered_effective_drifts, [-5 / 3, -5 / 3, 10 / 3])
    assert r.partial_sums[0] == pytest.approx(-5 / 3)
    assert not r.stable


def test_equal_drifts_sit_on_boundary():
    r = check_stability(ModelSpec.diagonal([2.0, 2.0, 2.0, 2.0], [1, 1, 1, 1]))
    np.testing.assert_array_equal(r.partial_sums, 0.0)
    assert r.margin == 0.0 and not r.stable


def test_stability_with_bottom_jumps():
    jumps = JumpMeasure.per_rank([(0.5, Constant(1.0)), None, None])
    r = check_stability(ModelSpec.diagonal([0, 0, 0], [1, 1, 1], jumps))
    np.testing.assert_allclose(r.effective_drifts, [0.5, 0, 0])
    np.testing.assert_allclose(r.centered_effective_drifts, [1 / 3, -1 / 6, -1 / 6])
    np.testing.assert_allclose(r.partial_sums, [1 / 3, 1 / 6])
    assert r.stable


drifts = st.lists(st.floats(-50, 50, allow_nan=False), min_size=2, max_size=8)


@settings(max_examples=200, deadline=None)
@given(drifts, st.floats(-100, 100, allow_nan=False))
def test_stability_invariant_under_common_shift(m, c):
    m = np.array(m)
    a = stability_from_effective_drifts(np.zeros_like(m), m)
    b = stability_from_effective_drifts(np.zeros_like(m), m + c)
    np.testing.assert_allclose(a.centered_effective_drifts, b.centered_effective_drifts, atol=1e-9)
    np.testing.assert_allclose(a.partial_sums, b.partial_sums, atol=1e-9)
    if abs(a.margin) > 1e-8:
        assert a.stable == b.stable


@settings(max_examples=200, deadline=None)
@given(drifts)
def test_brownian_verdict_matches_average_drift_criterion(g):
    g = np.array(g)
    n = g.size
    averages_ok = [g[:k].mean() - g.mean() for k in range(1, n)]
    if min(abs(v) for v in averages_ok) < 1e-8:
        return
    expected = all(v > 0 for v in averages_ok)
    assert check_stability(ModelSpec.diagonal(g, np.ones(n))).stable == expected


@settings(max_examples=100, deadline=None)
@given(drifts)
def test_centered_drifts_sum_to_zero(g):
    r = check_stability(ModelSpec.diagonal(g, np.ones(len(g))))
    assert abs(r.centered_effective_drifts.sum()) < 1e-9
    np.testing.assert_allclose(r.effective_drifts, r.jump_means + np.asarray(g))


class TestModelValidation:
    def test_needs_two_particles(self):
        with pytest.raises(ModelError):
            ModelSpec.diagonal([1.0], [1.0])

    def test_rejects_semidefinite(self):
        with pytest.raises(ModelError):
            ModelSpec(2, [0, 0], [[1.0, 1.0], [1.0, 1.0]], JumpMeasure.empty(2))

    def test_rejects_asymmetric(self):
        with pytest.raises(ModelError):
            ModelSpec(2, [0, 0], [[1.0, 0.2], [0.0, 1.0]], JumpMeasure.empty(2))

    def test_rejects_dimension_mismatch(self):
        with pytest.raises(ModelError):
            ModelSpec.diagonal([0, 0, 0], [1, 1, 1], JumpMeasure.empty(2))

    def test_accepts_correlated(self):
        spec = ModelSpec(2, [0, 0], [[1.0, 0.5], [0.5, 2.0]], JumpMeasure.empty(2))
        np.testing.assert_allclose(spec.factor @ spec.factor.T, spec.covariance)
        assert not spec.is_diagonal

    def test_rejects_infinite_second_moment(self):
        class Heavy(ScalarLaw):
            def mean(self):
                return 0.0

            def second_moment(self):
                return math.inf

        with pytest.raises(ModelError):
            JumpMeasure.per_rank([(1.0, Heavy()), None])

    def test_rejects_negative_rate(self):
        with pytest.raises(ModelError):
            JumpMeasure(2, (JumpComponent(-1.0, PointMass((1.0, 0.0))),))

    def test_rank_out_of_range(self):
        with pytest.raises(ModelError):
            OnRank(3, Constant(1.0), 3)

    def test_spec_is_immutable(self):
        spec = ModelSpec.diagonal([1, 0], [1, 1])
        with pytest.raises(ValueError):
            spec.drift[0] = 5.0
