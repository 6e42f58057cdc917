import numpy as np
import pytest

from levyrank.engine import (
    SimConfig,
    SimulationError,
    Trajectory,
    apply_jump,
    brownian_step,
    run_ensemble,
    simulate,
)
from levyrank.model import Constant, JumpMeasure, ModelSpec, Normal
from levyrank.ranking import center, rank_permutation
from levyrank.rng import RngStream, Substream


class TestBrownianStep:
    def test_drift_dominant_step_goes_to_bottom_particle(self):
        eps = 1e-8
        spec = ModelSpec.diagonal([1.0, 0.0], [eps**2, eps**2])
        x = brownian_step([0.0, 5.0], 0.1, spec, np.random.default_rng(0))
        np.testing.assert_allclose(x, [0.1, 5.0], atol=1e-6)

    def test_drift_follows_rank_not_name(self):
        eps = 1e-8
        spec = ModelSpec.diagonal([1.0, 0.0], [eps**2, eps**2])
        x = brownian_step([5.0, 0.0], 0.1, spec, np.random.default_rng(0))
        np.testing.assert_allclose(x, [5.0, 0.1], atol=1e-6)

    def test_deterministic_for_same_stream(self):
        spec = ModelSpec.diagonal([0.0, 0.0, 0.0], [1, 2, 3])
        stream = RngStream(42, 3)
        a = brownian_step([0.0, 1.0, 2.0], 0.01, spec, stream.generator(Substream.GAUSSIAN))
        b = brownian_step([0.0, 1.0, 2.0], 0.01, spec, stream.generator(Substream.GAUSSIAN))
        np.testing.assert_array_equal(a, b)

    def test_rejects_nonpositive_step(self):
        with pytest.raises(ValueError):
            brownian_step([0, 1], 0.0, ModelSpec.diagonal([0, 0], [1, 1]), np.random.default_rng())

    def test_increment_moments_per_rank(self):
        g = np.array([0.7, -0.2, 0.4])
        a = np.array([[1.0, 0.3, 0.0], [0.3, 2.0, -0.4], [0.0, -0.4, 0.5]])
        spec = ModelSpec(3, g, a, JumpMeasure.empty(3))
        x = np.array([2.0, -1.0, 0.5])
        fwd = rank_permutation(x).forward
        h, n = 0.01, 100_000
        rng = np.random.default_rng(3)
        inc = np.array([brownian_step(x, h, spec, rng) - x for _ in range(n)])[:, fwd]
        se = inc.std(axis=0, ddof=1) / np.sqrt(n)
        assert np.all(np.abs(inc.mean(axis=0) - g * h) < 4 * se)
        cov = np.cov(inc.T)
        # entrywise SE of a sample covariance: sqrt((A_ii A_jj + A_ij^2) h^2 / n)
        cov_se = np.sqrt((np.outer(np.diag(a), np.diag(a)) + a**2) * h**2 / n)
        assert np.all(np.abs(cov - a * h) < 4 * cov_se)


class TestApplyJump:
    def test_bottom_particle_receives_rank_one_displacement(self):
        np.testing.assert_array_equal(apply_jump([0.0, 1.0], [1.0, 0.0]), [1.0, 1.0])

    def test_zero_displacement(self):
        np.testing.assert_array_equal(apply_jump([3.0, -1.0, 2.0], [0, 0, 0]), [3.0, -1.0, 2.0])

    def test_rank_indexing(self):
        np.testing.assert_array_equal(apply_jump([3.0, 1.0, 2.0], [10.0, 0.0, 0.0]), [3.0, 11.0, 2.0])

    def test_post_ranking_agrees_when_order_kept(self):
        x, z = [0.0, 5.0, 2.0], [0.1, 0.2, 0.3]
        np.testing.assert_array_equal(apply_jump(x, z, "post"), apply_jump(x, z, "pre"))

    def test_post_ranking_without_fixed_point_falls_back(self):
        # neither assignment is consistent with the resulting order
        x, z = [0.0, 0.5], [1.0, -1.0]
        np.testing.assert_array_equal(apply_jump(x, z, "post"), apply_jump(x, z, "pre"))

    def test_post_ranking_result_is_self_consistent_when_found(self):
        rng = np.random.default_rng(9)
        for _ in range(200):
            x = rng.normal(size=4)
            z = rng.normal(scale=2.0, size=4)
            y = apply_jump(x, z, "post")
            inv = rank_permutation(y).inverse
            if not np.allclose(y, x + z[inv]):
                np.testing.assert_array_equal(y, apply_jump(x, z, "pre"))


def reference_brownian_path(spec, x0, cfg, replication=0):
    """Step-by-step path from the same Gaussian substream."""
    gen = RngStream(cfg.seed, replication).generator(Substream.GAUSSIAN)
    x = np.asarray(x0, dtype=float)
    out = [x]
    for n in range(cfg.n_steps):
        t_end = min((n + 1) * cfg.step, cfg.horizon)
        x = brownian_step(x, t_end - n * cfg.step, spec, gen)
        out.append(x)
    return np.array(out)


class TestSimulate:
    def test_no_jumps_equals_reference_path(self):
        spec = ModelSpec(3, [0.5, 0.0, -0.1], [[1, 0.2, 0], [0.2, 1, 0], [0, 0, 2]], JumpMeasure.empty(3))
        cfg = SimConfig(1.05, 0.01, seed=5)
        tr = simulate(spec, [0.0, 0.1, -0.2], cfg)
        assert tr.jump_times.size == 0 and not tr.is_jump.any()
        ref = reference_brownian_path(spec, [0.0, 0.1, -0.2], cfg)
        np.testing.assert_allclose(tr.states, ref, rtol=0, atol=1e-12)
        assert tr.times[-1] == 1.05 and tr.times[0] == 0.0

    def test_jump_count_is_poisson(self):
        spec = ModelSpec.diagonal([0, 0], [1, 1], JumpMeasure.per_rank([(1.0, Constant(1.0)), (1.0, Constant(0.0))]))
        cfg = SimConfig(50.0, 0.05, seed=8, replications=200, record_stride=1000)
        counts = np.array([tr.jump_times.size for tr in run_ensemble(spec, [0, 0], cfg)])
        # Poisson(100): SE of the mean over 200 runs is 10/sqrt(200)
        assert abs(counts.mean() - 100.0) < 4 * 10.0 / np.sqrt(200)

    def test_identical_inputs_identical_digest(self, jump3):
        cfg = SimConfig(5.0, 0.01, seed=123, replications=2)
        a = simulate(jump3, [0, 1, 2], cfg, 1)
        b = simulate(jump3, [0, 1, 2], cfg, 1)
        assert a.digest() == b.digest()
        assert simulate(jump3, [0, 1, 2], cfg, 0).digest() != a.digest()

    def test_jump_marks_consistent(self, jump3):
        cfg = SimConfig(20.0, 0.01, seed=4, record_stride=7)
        tr = simulate(jump3, [0, 0, 0], cfg)
        assert tr.jump_times.size > 0
        assert np.all(np.diff(tr.times) >= 0)
        post = tr.states[tr.is_jump]
        np.testing.assert_array_equal(tr.times[tr.is_jump], tr.jump_times)
        for (tau, pre, zeta), after in zip(tr.jump_marks, post):
            np.testing.assert_array_equal(after, apply_jump(pre, zeta))

    def test_piece_after_jump_is_continuous(self, jump2):
        # with no diffusion and no drift the path only moves at jump epochs
        spec = ModelSpec.diagonal([0, 0], [1e-20, 1e-20], jump2.jumps)
        tr = simulate(spec, [0.0, 3.0], SimConfig(40.0, 0.1, seed=2))
        marks = tr.jump_marks
        assert len(marks) > 5
        for (_, pre, zeta), (_, pre_next, _) in zip(marks, marks[1:]):
            np.testing.assert_allclose(pre_next, apply_jump(pre, zeta), atol=1e-6)

    def test_translation_equivariance(self, jump3):
        cfg = SimConfig(10.0, 0.01, seed=77)
        x0 = np.array([0.3, -1.0, 2.0])
        a = simulate(jump3, x0, cfg)
        b = simulate(jump3, x0 + 12.5, cfg)
        np.testing.assert_allclose(center(a.states), center(b.states), atol=1e-9)
        np.testing.assert_array_equal(a.jump_times, b.jump_times)

    def test_sum_of_particles_is_brownian(self):
        # the total moves by the sum of all rank increments: drift Σg, variance 1ᵀA1
        a = np.array([[1.0, 0.4], [0.4, 2.0]])
        spec = ModelSpec(2, [0.5, -1.5], a, JumpMeasure.empty(2))
        cfg = SimConfig(1.0, 0.05, seed=19, replications=2000, record_stride=100)
        s = np.array([tr.states[-1].sum() for tr in run_ensemble(spec, [0.0, 1.0], cfg)])
        n = s.size
        assert abs(s.mean() - (1.0 - 1.0)) < 4 * s.std(ddof=1) / np.sqrt(n)
        var_true = a.sum()
        assert abs(s.var(ddof=1) - var_true) < 4 * var_true * np.sqrt(2 / (n - 1))

    def test_exchangeable_start(self, symmetric3):
        cfg = SimConfig(2.0, 0.01, seed=31, replications=900, record_stride=1000)
        top = np.array([np.argmax(tr.states[-1]) for tr in run_ensemble(symmetric3, np.zeros(3), cfg)])
        frac = np.bincount(top, minlength=3) / top.size
        se = np.sqrt((1 / 3) * (2 / 3) / top.size)
        assert np.all(np.abs(frac - 1 / 3) < 4 * se)

    def test_non_finite_state_aborts(self):
        spec = ModelSpec.diagonal([1e308, 0.0], [1.0, 1.0])
        with pytest.raises(SimulationError) as info:
            simulate(spec, [0.0, 0.0], SimConfig(10.0, 1.0, seed=1))
        assert info.value.time is not None and info.value.state is not None

    def test_replication_out_of_range(self, atlas2):
        with pytest.raises(ValueError):
            simulate(atlas2, [0, 0], SimConfig(1.0, 0.1, replications=2), 2)

    def test_config_validation(self):
        with pytest.raises(ValueError):
            SimConfig(1.0, 2.0)
        with pytest.raises(ValueError):
            SimConfig(1.0, 0.1, jump_ranking="sideways")

    def test_post_ranking_mode_runs(self):
        spec = ModelSpec.diagonal([0, 0, 0], [1, 1, 1], JumpMeasure.per_rank([(2.0, Normal(0.0, 4.0)), None, None]))
        tr = simulate(spec, [0, 0, 0], SimConfig(5.0, 0.01, seed=1, jump_ranking="post"))
        for (tau, pre, zeta), after in zip(tr.jump_marks, tr.states[tr.is_jump]):
            np.testing.assert_array_equal(after, apply_jump(pre, zeta, "post"))


class TestEnsemble:
    def test_single_replication_matches_simulate(self, jump3):
        cfg = SimConfig(3.0, 0.01, seed=3)
        (only,) = run_ensemble(jump3, [0, 0, 0], cfg)
        assert only.digest() == simulate(jump3, [0, 0, 0], cfg, 0).digest()

    def test_order_and_threads_do_not_matter(self, jump3):
        cfg = SimConfig(3.0, 0.01, seed=3, replications=6)
        a = run_ensemble(jump3, [0, 0, 0], cfg, threads=1)
        b = run_ensemble(jump3, [0, 0, 0], cfg, threads=4, replications=reversed(range(6)))
        assert [t.digest() for t in a] == [t.digest() for t in b]
        merged_a = np.concatenate([t.states for t in a]).sum(axis=0)
        merged_b = np.concatenate([t.states for t in b]).sum(axis=0)
        np.testing.assert_array_equal(merged_a, merged_b)

    def test_ensemble_gap_matches_long_run_average(self, atlas2):
        ens = run_ensemble(atlas2, [0.0, 0.0], SimConfig(8.0, 0.005, seed=21, replications=400, record_stride=10_000))
        final = np.array([abs(t.states[-1, 1] - t.states[-1, 0]) for t in ens])
        long = simulate(atlas2, [0.0, 0.0], SimConfig(2000.0, 0.005, seed=22, record_stride=10))
        _, x = long.grid
        g = np.abs(x[:, 1] - x[:, 0])[x.shape[0] // 10:]
        batches = g[: g.size // 40 * 40].reshape(40, -1).mean(axis=1)
        se_long = batches.std(ddof=1) / np.sqrt(40)
        se_ens = final.std(ddof=1) / np.sqrt(final.size)
        assert abs(final.mean() - g.mean()) < 4 * np.hypot(se_long, se_ens)


def test_trajectory_grid_excludes_jump_rows(jump2):
    tr = simulate(jump2, [0, 0], SimConfig(10.0, 0.1, seed=6))
    t, x = tr.grid
    assert t.size == tr.times.size - tr.jump_times.size
    np.testing.assert_allclose(t, np.arange(101) * 0.1, atol=1e-12)
    assert isinstance(tr, Trajectory)
