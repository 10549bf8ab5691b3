"""
Tests for element-wise RIS beamforming.
"""

import math

import numpy as np
import pytest

from src.beamforming.elementwise import (
    STAR_AMPLITUDE_STEPS,
    MultiUserLinks,
    effective_channels,
    elementwise_power,
    elementwise_sumrate,
    multiuser_links,
    weighted_sum_rate,
)
from src.channel.geometry import Vec3, build_planar_array
from src.channel.links import RisProfile
from src.exceptions import DimensionMismatchError, DomainError


def random_links(users: int, elements: int, seed: int, transmit_side=None) -> MultiUserLinks:
    rng = np.random.default_rng(seed)
    gains = rng.standard_normal((users, users, elements)) + 1j * rng.standard_normal((users, users, elements))
    side = np.zeros(users, dtype=bool) if transmit_side is None else np.asarray(transmit_side)
    return MultiUserLinks(gains=gains, transmit_side=side)


class TestElementwisePower:
    """Test the closed-form single-user solver."""

    def test_reaches_cophasing_optimum(self):
        """Test random starts converge to (Σ|g_m|)² with a nondecreasing trace."""
        rng = np.random.default_rng(7)
        g = rng.standard_normal(64) + 1j * rng.standard_normal(64)
        optimum = np.abs(g).sum() ** 2
        for _ in range(100):
            init = RisProfile.from_phases(rng.uniform(0, 2 * math.pi, 64))
            profile, trace = elementwise_power(g, tol=1e-15, init=init)
            achieved = abs(profile.coefficients() @ g) ** 2
            assert achieved == pytest.approx(optimum, rel=1e-9)
            assert np.all(np.diff(trace.objective_values) >= -1e-9 * optimum)

    def test_two_sweeps_come_close(self):
        """Test two sweeps from a random start land within 1e-3 of the optimum power."""
        rng = np.random.default_rng(7)
        g = rng.standard_normal(64) + 1j * rng.standard_normal(64)
        optimum = np.abs(g).sum() ** 2
        worst = 0.0
        for _ in range(100):
            init = RisProfile.from_phases(rng.uniform(0, 2 * math.pi, 64))
            profile, trace = elementwise_power(g, max_sweeps=2, tol=1e-15, init=init)
            assert trace.sweeps <= 2
            worst = max(worst, 1.0 - abs(profile.coefficients() @ g) ** 2 / optimum)
        assert worst <= 1e-3

    def test_cophasing_beats_random_profiles(self):
        """Test no random unit-modulus profile out of 1000 beats the co-phasing power."""
        rng = np.random.default_rng(21)
        g = rng.standard_normal(32) + 1j * rng.standard_normal(32)
        profile, _ = elementwise_power(g)
        best = abs(profile.coefficients() @ g) ** 2
        thetas = np.exp(1j * rng.uniform(0.0, 2.0 * math.pi, (1000, 32)))
        assert np.all(np.abs(thetas @ g) ** 2 <= best * (1.0 + 1e-12))
        assert best == pytest.approx(np.abs(g).sum() ** 2, rel=1e-9)

    def test_accepts_link_set(self, small_ris):
        """Test the solver reads the first pair of a link set."""
        from src.channel.geometry import single_antenna
        from src.channel.links import cascaded_links

        links = cascaded_links(single_antenna(Vec3(0, 0, 1)), small_ris, single_antenna(Vec3(0.1, 0, 0.5)), 0.01)
        profile, trace = elementwise_power(links)
        assert abs(profile.coefficients() @ links.pair()) == pytest.approx(np.abs(links.pair()).sum())
        assert trace.converged
        assert trace.evaluations == 16 * trace.sweeps

    def test_init_size_mismatch(self):
        """Test the initial profile must match the links."""
        with pytest.raises(DimensionMismatchError):
            elementwise_power(np.ones(4), init=RisProfile.identity(3))


class TestElementwiseSumrate:
    """Test the grid-search multi-user solver."""

    def test_single_user_close_to_optimum(self):
        """Test one user gets nearly the co-phased rate."""
        links = random_links(1, 64, seed=1)
        profile, _ = elementwise_sumrate(links, [1.0], noise=1.0, phase_grid=64)
        optimum = math.log2(1.0 + np.abs(links.gains[0, 0]).sum() ** 2)
        assert weighted_sum_rate(links, profile, [1.0], 1.0) >= 0.99 * optimum

    def test_trace_nondecreasing(self):
        """Test the objective never drops across updates."""
        _, trace = elementwise_sumrate(random_links(3, 32, seed=2), [1.0, 2.0, 0.5], noise=0.1, phase_grid=16)
        assert np.all(np.diff(trace.objective_values) >= 0.0)

    def test_evaluations_per_sweep(self):
        """Test each reflect-only sweep costs exactly N·Q·K user-rate terms."""
        _, trace = elementwise_sumrate(random_links(2, 64, seed=3), [1.0, 1.0], noise=1.0, phase_grid=16)
        assert trace.evaluations_per_sweep == [64 * 16 * 2] * trace.sweeps
        assert trace.evaluations == 64 * 16 * 2 * trace.sweeps

    def test_star_profile(self):
        """Test STAR search respects the energy split and costs N·(2Q + 17)·K per sweep."""
        links = random_links(2, 16, seed=4, transmit_side=[True, False])
        profile, trace = elementwise_sumrate(links, [1.0, 1.0], noise=1.0, phase_grid=8, star=True)
        assert np.all(profile.amp_t**2 + profile.amp_r**2 <= 1.0 + 1e-12)
        assert trace.evaluations_per_sweep[0] == 16 * (2 * 8 + STAR_AMPLITUDE_STEPS) * 2
        assert np.all(np.diff(trace.objective_values) >= 0.0)

    def test_star_single_transmit_user_takes_all_energy(self):
        """Test a lone user behind the surface ends with a_t = 1 and a_r = 0 everywhere."""
        links = random_links(1, 16, seed=8, transmit_side=[True])
        profile, _ = elementwise_sumrate(links, [1.0], noise=1.0, phase_grid=8, star=True)
        np.testing.assert_array_equal(profile.amp_t, np.ones(16))
        np.testing.assert_array_equal(profile.amp_r, np.zeros(16))

    @pytest.mark.parametrize("grid", [8, 16, 32])
    def test_single_user_grid_loss_bound(self, grid):
        """Test a single user loses at most 2(π/Q)² of the co-phased power on a Q-point grid."""
        links = random_links(1, 64, seed=12)
        profile, _ = elementwise_sumrate(links, [1.0], noise=1.0, phase_grid=grid, tol=1e-12)
        power = abs(effective_channels(links, profile)[0, 0]) ** 2
        optimum = np.abs(links.gains[0, 0]).sum() ** 2
        assert 1.0 - power / optimum <= 2.0 * (math.pi / grid) ** 2

    def test_reflect_solver_rejects_star_init(self):
        """Test a STAR profile cannot seed the reflect-only solver."""
        links = random_links(1, 4, seed=5)
        init = RisProfile.star(np.ones(4) * 0.5, np.ones(4) * 0.5, np.zeros(4), np.zeros(4))
        with pytest.raises(DomainError):
            elementwise_sumrate(links, [1.0], noise=1.0, init=init)

    @pytest.mark.parametrize(
        "weights,noise,grid",
        [([1.0, -1.0], 1.0, 16), ([1.0, 1.0], 0.0, 16), ([1.0, 1.0], 1.0, 2)],
    )
    def test_invalid_inputs(self, weights, noise, grid):
        """Test non-positive weights, zero noise and tiny phase grids are rejected."""
        with pytest.raises(DomainError):
            elementwise_sumrate(random_links(2, 4, seed=6), weights, noise=noise, phase_grid=grid)

    def test_weight_count_mismatch(self):
        """Test one weight per user is required."""
        with pytest.raises(DimensionMismatchError):
            weighted_sum_rate(random_links(2, 4, seed=6), RisProfile.identity(4), [1.0], 1.0)


class TestWeightedSumRate:
    """Test the sum-rate objective."""

    @pytest.mark.parametrize("shift", [0.3, math.pi, 5.0])
    def test_global_phase_invariance(self, shift):
        """Test rotating every coefficient by one phase leaves the weighted sum rate unchanged."""
        links = random_links(3, 16, seed=13)
        rng = np.random.default_rng(14)
        phases = rng.uniform(0.0, 2.0 * math.pi, 16)
        weights = [1.0, 0.5, 2.0]
        base = weighted_sum_rate(links, RisProfile.from_phases(phases), weights, 0.1)
        rotated = weighted_sum_rate(links, RisProfile.from_phases(phases + shift), weights, 0.1)
        assert rotated == pytest.approx(base, rel=1e-12)

    def test_global_phase_invariance_star(self):
        """Test the same for STAR profiles with both phases rotated."""
        links = random_links(2, 8, seed=15, transmit_side=[True, False])
        rng = np.random.default_rng(16)
        amp_t = rng.uniform(0.0, 0.7, 8)
        amp_r = np.sqrt(1.0 - amp_t**2)
        phase_t, phase_r = rng.uniform(0.0, 2.0 * math.pi, (2, 8))
        base = weighted_sum_rate(links, RisProfile.star(amp_t, amp_r, phase_t, phase_r), [1.0, 1.0], 0.1)
        rotated = weighted_sum_rate(
            links, RisProfile.star(amp_t, amp_r, phase_t + 1.1, phase_r + 1.1), [1.0, 1.0], 0.1
        )
        assert rotated == pytest.approx(base, rel=1e-12)


class TestMultiUserLinks:
    """Test link tensors built from geometry."""

    def test_shape_and_sides(self):
        """Test (K, K, M) gains and transmit-side flags from positions."""
        ris = build_planar_array(4, 4, 0.005)
        links = multiuser_links(
            ris,
            [Vec3(-0.5, 0.0, 1.0), Vec3(0.5, 0.0, 1.0)],
            [Vec3(0.1, 0.0, 0.3), Vec3(0.0, 0.1, -0.3)],
            0.01,
        )
        assert links.gains.shape == (2, 2, 16)
        assert links.transmit_side.tolist() == [False, True]

    def test_each_user_needs_a_transmitter(self):
        """Test transmitter and user counts must agree."""
        ris = build_planar_array(2, 2, 0.005)
        with pytest.raises(DimensionMismatchError):
            multiuser_links(ris, [Vec3(0, 0, 1.0)], [Vec3(0, 0, 0.5), Vec3(0.1, 0, 0.5)], 0.01)
