"""
Tests for the quasi-continuous metasurface model.
"""

import numpy as np
import pytest

from src.channel.geometry import Vec3, build_planar_array
from src.channel.metasurface import (
    CurrentDistribution,
    TxParams,
    build_operator,
    build_surface_grid,
    channel_gain,
    element_partition,
    optimal_patch_phases,
    patch_emulation,
    surface_grid_for_array,
)
from src.exceptions import DimensionMismatchError, DomainError, GeometryError

WAVELENGTH = 0.01
TX = TxParams(directivity=1.0, effective_area=1.0, distance=1.0)


class TestSurfaceGrid:
    """Test midpoint discretization."""

    def test_cell_areas_sum_to_aperture(self):
        """Test Σ dA equals the surface area."""
        grid = build_surface_grid(0.037, 0.021, WAVELENGTH)
        assert grid.cell_area * grid.sample_count == pytest.approx(0.037 * 0.021, rel=1e-9)

    def test_default_resolution(self):
        """Test cells are no larger than λ/8 by default."""
        grid = build_surface_grid(0.05, 0.05, WAVELENGTH)
        assert grid.grid_spacing <= WAVELENGTH / 8 + 1e-15
        assert grid.nx == 40

    def test_exact_multiple_does_not_gain_a_cell(self):
        """Test a side of exactly four wavelengths gets 32 cells."""
        grid = build_surface_grid(0.04, 0.04, WAVELENGTH)
        assert (grid.nx, grid.ny) == (32, 32)

    def test_too_coarse_rejected(self):
        """Test fewer than two samples per wavelength is rejected."""
        with pytest.raises(DomainError):
            build_surface_grid(0.05, 0.05, WAVELENGTH, samples_per_wavelength=1)

    def test_array_footprint_partition(self, small_ris):
        """Test each element owns an equal square block of cells."""
        grid = surface_grid_for_array(small_ris, WAVELENGTH)
        partition = element_partition(grid, small_ris)
        assert len(partition) == 16
        assert {len(cells) for cells in partition} == {16}
        assert np.sort(np.concatenate(partition)).tolist() == list(range(grid.sample_count))


class TestChannelGain:
    """Test the quadrature of the radiated field."""

    def test_zero_current(self):
        """Test a zero current radiates nothing."""
        grid = build_surface_grid(0.04, 0.04, WAVELENGTH)
        gain = channel_gain(grid, CurrentDistribution.zeros(grid.sample_count), TX, Vec3(0, 0, 0.2), WAVELENGTH)
        assert gain == 0.0

    def test_cophased_beats_uniform(self):
        """Test focusing on an off-axis receiver beats a uniform current."""
        grid = build_surface_grid(0.04, 0.04, WAVELENGTH)
        rx = Vec3(0.05, 0.0, 0.08)
        uniform = channel_gain(grid, CurrentDistribution.uniform(grid.sample_count), TX, rx, WAVELENGTH)
        focused = channel_gain(grid, CurrentDistribution.cophased(grid, rx, WAVELENGTH), TX, rx, WAVELENGTH)
        assert focused > uniform

    def test_quadrature_converges(self):
        """Test halving the cell size changes the gain by less than one percent."""
        rx = Vec3(0.0, 0.0, 0.2)
        gains = []
        for spw in (8, 16):
            grid = build_surface_grid(0.04, 0.04, WAVELENGTH, samples_per_wavelength=spw)
            current = CurrentDistribution.uniform(grid.sample_count)
            gains.append(channel_gain(grid, current, TX, rx, WAVELENGTH))
        assert abs(gains[1] - gains[0]) / gains[1] < 0.01

    def test_reactive_zone_rejected(self):
        """Test receivers closer than λ to the surface are rejected."""
        grid = build_surface_grid(0.04, 0.04, WAVELENGTH)
        with pytest.raises(DomainError):
            channel_gain(grid, CurrentDistribution.uniform(grid.sample_count), TX, Vec3(0, 0, 0.005), WAVELENGTH)

    def test_current_bound(self):
        """Test currents above unit amplitude are rejected."""
        with pytest.raises(DomainError):
            CurrentDistribution(np.array([1.5, 0.0]))

    def test_current_size_mismatch(self):
        """Test currents must match the grid."""
        grid = build_surface_grid(0.04, 0.04, WAVELENGTH)
        with pytest.raises(DimensionMismatchError):
            channel_gain(grid, CurrentDistribution.uniform(3), TX, Vec3(0, 0, 0.2), WAVELENGTH)


class TestPatchEmulation:
    """Test piecewise-constant currents against the free metasurface."""

    @pytest.mark.parametrize("rx", [Vec3(0.0, 0.0, 0.05), Vec3(0.03, -0.02, 0.04), Vec3(-0.1, 0.0, 0.3)])
    def test_metasurface_at_least_patch(self, rx):
        """Test the optimal free current never loses to the optimal per-element current."""
        ris = build_planar_array(4, 4, 0.005)
        grid = surface_grid_for_array(ris, WAVELENGTH)
        partition = element_partition(grid, ris)
        phases = optimal_patch_phases(grid, partition, rx, WAVELENGTH)
        patch = channel_gain(grid, patch_emulation(grid, partition, phases), TX, rx, WAVELENGTH)
        full = channel_gain(grid, CurrentDistribution.cophased(grid, rx, WAVELENGTH), TX, rx, WAVELENGTH)
        assert full >= patch * (1 - 1e-12)

    def test_overlapping_partition_rejected(self, small_ris):
        """Test cells assigned to two elements are rejected."""
        grid = surface_grid_for_array(small_ris, WAVELENGTH)
        partition = element_partition(grid, small_ris)
        partition[1] = np.concatenate([partition[1], partition[0][:1]])
        with pytest.raises(GeometryError):
            patch_emulation(grid, partition, np.zeros(16))

    def test_uncovered_partition_rejected(self, small_ris):
        """Test every cell must belong to an element."""
        grid = surface_grid_for_array(small_ris, WAVELENGTH)
        partition = element_partition(grid, small_ris)[:-1]
        with pytest.raises(GeometryError):
            patch_emulation(grid, partition, np.zeros(15))


class TestRadiationOperator:
    """Test operator assembly and spectrum."""

    @pytest.mark.parametrize("side", [0.03, 0.01])
    def test_singular_values_match_svd(self, side):
        """Test the Gram-matrix spectrum matches a dense SVD with more and fewer samples than receivers."""
        grid = build_surface_grid(side, side, WAVELENGTH, samples_per_wavelength=2)
        rx = build_planar_array(3, 3, 0.01, Vec3(0, 0, 0.1))
        operator = build_operator(grid, rx.element_positions, WAVELENGTH)
        expected = np.linalg.svd(operator.matrix, compute_uv=False)
        sigma = operator.singular_values()
        np.testing.assert_allclose(sigma[: expected.size], expected, rtol=1e-8, atol=1e-8 * expected[0])

    def test_apply_shape(self):
        """Test one field value per receiver sample."""
        grid = build_surface_grid(0.02, 0.02, WAVELENGTH)
        rx = [Vec3(0, 0, 0.1), Vec3(0.01, 0, 0.1)]
        field = build_operator(grid, rx, WAVELENGTH).apply(CurrentDistribution.uniform(grid.sample_count))
        assert field.shape == (2,)

    def test_no_receivers_rejected(self):
        """Test an operator needs at least one receiver."""
        grid = build_surface_grid(0.02, 0.02, WAVELENGTH)
        with pytest.raises(DomainError):
            build_operator(grid, [], WAVELENGTH)
