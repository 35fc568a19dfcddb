import math

import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from banditlab.core import (BernoulliArm, BoundedDiscreteArm, GaussianArm,
                            GaussianKnownVarArm, HeavyTailArm, MomentSpec,
                            PoissonArm, RngStream, draw_reward, empirical_from_samples,
                            empirical_moment, family_membership, truncated_mean)
from banditlab.errors import DomainError, EmptySample


class TestEmpirical:
    def test_single_point(self):
        F = empirical_from_samples([1.0])
        assert F.n == 1 and F.mean == 1.0

    def test_two_points(self):
        F = empirical_from_samples([0.0, 1.0])
        assert F.n == 2 and F.mean == 0.5

    def test_constant_sample(self):
        F = empirical_from_samples([0.4, 0.4, 0.4])
        assert F.n == 3 and abs(F.mean - 0.4) < 1e-15

    def test_empty_rejected(self):
        with pytest.raises(EmptySample):
            empirical_from_samples([])

    def test_mean_cached_accurate(self):
        xs = np.linspace(-3, 7, 1001)
        F = empirical_from_samples(xs)
        assert abs(F.mean - xs.mean()) <= 1e-12 * max(1.0, abs(xs.mean()))

    def test_insertion_order_and_sorted_view(self):
        F = empirical_from_samples([3.0, 1.0, 2.0])
        assert list(F.observations) == [3.0, 1.0, 2.0]
        s1 = F.sorted_values()
        s2 = F.sorted_values()
        assert list(s1) == [1.0, 2.0, 3.0]
        assert s1 is s2  # idempotent cached view

    def test_aggregate_weights(self):
        F = empirical_from_samples([1.0, 0.0, 1.0, 1.0])
        support, w = F.aggregate()
        assert list(support) == [0.0, 1.0]
        assert np.allclose(w, [0.25, 0.75])


class TestMoments:
    def test_moment_of_dirac_is_zero(self):
        spec = MomentSpec.power(2.0, 1.0)
        assert empirical_moment(empirical_from_samples([0.0]), spec, 0.0) == 0.0

    def test_symmetric_pair(self):
        spec = MomentSpec.power(2.0, 1.0)
        F = empirical_from_samples([-0.5, 0.5])
        assert abs(empirical_moment(F, spec, 0.0) - 0.25) < 1e-15

    def test_hand_evaluation(self):
        spec = MomentSpec.power(2.0, 1.0)
        F = empirical_from_samples([1.0, 2.0, 3.0])
        assert abs(empirical_moment(F, spec, 2.0) - 2.0 / 3.0) < 1e-12

    @given(st.lists(st.floats(-50, 50), min_size=1, max_size=30),
           st.floats(-20, 20))
    @settings(max_examples=60, deadline=None)
    def test_translation_invariance(self, xs, c):
        spec = MomentSpec.power(2.0, 1.0)
        F = empirical_from_samples(xs)
        base = empirical_moment(F, spec, F.mean)
        shifted = F.shifted(c)
        moved = empirical_moment(shifted, spec, shifted.mean)
        assert abs(base - moved) < 1e-7 * max(1.0, abs(base))

    def test_membership_examples(self):
        spec = MomentSpec.power(2.0, 1.0, centered=True, mu_minus=-10.0)
        assert family_membership(empirical_from_samples([-0.5, 0.5]), spec)
        assert not family_membership(empirical_from_samples([-2.0, 2.0]), spec)
        unc = MomentSpec.power(2.0, 1.0, centered=False)
        assert family_membership(empirical_from_samples([0.9]), unc)

    def test_membership_monotone_in_B(self):
        gen = np.random.default_rng(0)
        for _ in range(50):
            F = empirical_from_samples(gen.normal(0, 1, int(gen.integers(1, 20))))
            B = float(gen.uniform(0.05, 3.0))
            small = MomentSpec.power(2.0, B, centered=True)
            big = MomentSpec.power(2.0, B * float(gen.uniform(1.0, 5.0)) + 1e-9,
                                   centered=True)
            if family_membership(F, small):
                assert family_membership(F, big)

    def test_membership_mean_floor(self):
        spec = MomentSpec.power(2.0, 10.0, centered=True, mu_minus=0.5)
        assert not family_membership(empirical_from_samples([0.0, 0.2]), spec)


class TestTruncatedMean:
    def test_outlier_zeroed(self):
        assert truncated_mean([1.0, 2.0, 100.0], 10.0) == 1.0

    def test_all_truncated(self):
        assert truncated_mean([1.0, 2.0, 3.0], 0.0) == 0.0

    def test_boundary_included(self):
        assert truncated_mean([-5.0, 5.0], 5.0) == 0.0

    def test_infinite_level_is_plain_mean(self):
        xs = [0.3, -1.8, 7.5, 2.2]
        assert truncated_mean(xs, math.inf) == np.mean(xs)


class TestMomentSpecValidation:
    def test_power_needs_p_above_one(self):
        with pytest.raises(DomainError):
            MomentSpec.power(1.0, 1.0)

    def test_h_zero_enforced(self):
        with pytest.raises(DomainError):
            MomentSpec(h=lambda x: np.asarray(x) ** 2 + 1.0,
                       h_prime=lambda x: 2.0 * np.asarray(x),
                       h_inv=lambda y: math.sqrt(max(y - 1.0, 0.0)),
                       B=1.0)

    def test_decreasing_h_rejected(self):
        with pytest.raises(DomainError):
            MomentSpec(h=lambda x: -np.asarray(x), h_prime=lambda x: -1.0,
                       h_inv=lambda y: -y, B=1.0)

    def test_sublinear_h_rejected(self):
        # h(x) = x is not superlinear for any positive margin
        with pytest.raises(DomainError):
            MomentSpec(h=lambda x: np.asarray(x, dtype=float),
                       h_prime=lambda x: np.ones_like(np.asarray(x, dtype=float)),
                       h_inv=lambda y: y, B=1.0, eta=0.5)

    def test_bad_inverse_rejected(self):
        with pytest.raises(DomainError):
            MomentSpec(h=lambda x: np.asarray(x) ** 2,
                       h_prime=lambda x: 2.0 * np.asarray(x),
                       h_inv=lambda y: y, B=1.0)

    def test_inverse_roundtrip_of_presets(self):
        for spec in (MomentSpec.power(1.5, 2.0), MomentSpec.subgauss(2.0)):
            for x in (0.01, 0.5, 3.0, 9.0):
                assert abs(spec.h_inv(float(spec.h(x))) - x) < 1e-9 * max(1.0, x)

    def test_subgauss_default_bound(self):
        spec = MomentSpec.subgauss(8.0)
        assert spec.B == 1.0 and abs(float(spec.h(0.0))) < 1e-15


class TestArms:
    def test_degenerate_bernoulli(self):
        gen = RngStream(1).generator()
        arm = BernoulliArm(1.0)
        assert all(draw_reward(arm, gen) == 1.0 for _ in range(100))

    def test_bernoulli_clt(self):
        gen = RngStream(2).generator()
        draws = draw_reward(BernoulliArm(0.5), gen, size=1_000_000)
        assert abs(draws.mean() - 0.5) < 5 * 0.5 / 1000.0

    def test_gaussian_variance_clt(self):
        gen = RngStream(3).generator()
        draws = draw_reward(GaussianArm(0.0, 1.0), gen, size=1_000_000)
        assert abs(draws.var() - 1.0) < 0.006

    def test_true_means(self):
        assert BernoulliArm(0.3).true_mean == 0.3
        assert GaussianKnownVarArm(1.5, 2.0).true_mean == 1.5
        assert PoissonArm(2.5).true_mean == 2.5
        arm = BoundedDiscreteArm((0.0, 0.5, 1.0), (0.2, 0.3, 0.5), 1.0)
        assert abs(arm.true_mean - 0.65) < 1e-12
        assert HeavyTailArm(0.7, 3.5).true_mean == 0.7

    def test_bounded_discrete_support_in_range(self):
        with pytest.raises(DomainError):
            BoundedDiscreteArm((0.0, 1.5), (0.5, 0.5), 1.0)

    def test_heavy_tail_mean_and_moment(self):
        arm = HeavyTailArm(1.0, 3.5, 1.0)
        gen = RngStream(4).generator()
        draws = draw_reward(arm, gen, size=400_000)
        se = draws.std() / math.sqrt(draws.size)
        assert abs(draws.mean() - 1.0) < 6 * se
        m = arm.centered_abs_moment(1.5)
        emp = float(np.mean(np.abs(draws - 1.0) ** 1.5))
        assert abs(m - emp) / m < 0.05

    def test_heavy_tail_needs_finite_mean(self):
        with pytest.raises(DomainError):
            HeavyTailArm(0.0, 0.9)


class TestRngStream:
    def test_reproducible_sequences(self):
        a = RngStream(99, replication=3, step=7, purpose="x").generator().random(64)
        b = RngStream(99, replication=3, step=7, purpose="x").generator().random(64)
        assert np.array_equal(a, b)

    def test_streams_decorrelated(self):
        root = RngStream(99)
        a = root.derive(replication=0, purpose="x").generator().random(64)
        b = root.derive(replication=1, purpose="x").generator().random(64)
        c = root.derive(replication=0, purpose="y").generator().random(64)
        assert not np.array_equal(a, b)
        assert not np.array_equal(a, c)

    def test_derivation_is_pure(self):
        root = RngStream(5)
        d1 = root.derive(replication=2, step=1, purpose="p")
        _ = d1.generator().random(8)
        d2 = root.derive(replication=2, step=1, purpose="p")
        assert d1 == d2
        assert np.array_equal(d1.generator().random(8), d2.generator().random(8))
