"""
Tests for received-power scaling with RIS size.
"""

import numpy as np
import pytest

from src.analysis.edof import regime_summary
from src.analysis.power_scaling import (
    RisKind,
    ScalingSetup,
    compare_patch_metasurface,
    fit_slope,
    points_to_frame,
    power_scaling_sweep,
    sample_near_field_points,
    sweep_slope,
)
from src.channel.geometry import FieldRegion, Vec3, build_planar_array, classify_region
from src.exceptions import DomainError

WAVELENGTH = 0.01
SPACING = 0.005


def setup_for(rx: Vec3, tx: Vec3 = Vec3(0.0, 0.0, 100.0)) -> ScalingSetup:
    return ScalingSetup(wavelength=WAVELENGTH, spacing=SPACING, tx=tx, rx=rx)


class TestPatchScaling:
    """Test the N² and N laws for co-phased patch arrays."""

    def test_far_field_slope_is_two(self):
        """Test P_r/P_t grows as N² when the array stays far from both ends."""
        points = power_scaling_sweep(setup_for(Vec3(1.0, 0.0, 10.0)), [2, 4, 8, 16], RisKind.PATCH)
        assert all(p.regime is FieldRegion.FAR_FIELD for p in points)
        assert 1.9 <= sweep_slope(points, top_decade=False) <= 2.1

    def test_near_field_slope_is_about_one(self):
        """Test P_r/P_t grows roughly linearly once the receiver is in the near field."""
        sizes = [10, 16, 22, 32, 45, 64, 80, 100]
        points = power_scaling_sweep(setup_for(Vec3(0.0, 0.0, 0.02)), sizes, RisKind.PATCH)
        assert points[-1].regime is FieldRegion.NEAR_FIELD
        assert 0.8 <= sweep_slope(points) <= 1.3

    def test_power_increases_with_size(self):
        """Test co-phased power never drops as elements are added symmetrically."""
        points = power_scaling_sweep(setup_for(Vec3(0.0, 0.0, 0.05)), [2, 4, 6, 8], RisKind.PATCH)
        values = [p.pr_over_pt for p in points]
        assert values == sorted(values)

    @pytest.mark.parametrize("sizes", [[], [4, 4], [8, 4], [0, 2]])
    def test_invalid_sizes(self, sizes):
        """Test empty, repeated, decreasing and zero sizes are rejected."""
        with pytest.raises(DomainError):
            power_scaling_sweep(setup_for(Vec3(0.0, 0.0, 1.0)), sizes, RisKind.PATCH)

    def test_frame_columns(self):
        """Test the sweep table layout."""
        points = power_scaling_sweep(setup_for(Vec3(0.0, 0.0, 1.0)), [1, 2], RisKind.PATCH)
        df = points_to_frame(points)
        assert list(df.columns) == ["size_metric", "pr_over_pt", "regime", "outside_validity"]
        assert df["size_metric"].tolist() == [1.0, 4.0]


class TestMetasurfaceScaling:
    """Test the metasurface sweep and its calibration against patches."""

    def test_one_element_area_matches_one_patch(self):
        """Test a surface of one element area reproduces one patch element's power."""
        setup = setup_for(Vec3(1.0, 0.0, 10.0), tx=Vec3(0.0, 0.0, 10.0))
        patch = power_scaling_sweep(setup, [1], RisKind.PATCH)[0]
        surface = power_scaling_sweep(setup, [SPACING**2], RisKind.METASURFACE)[0]
        assert surface.pr_over_pt == pytest.approx(patch.pr_over_pt, rel=0.01)

    def test_far_field_area_slope(self):
        """Test metasurface power grows as S² far from the surface."""
        areas = [1e-4, 4e-4, 9e-4, 1.6e-3]
        points = power_scaling_sweep(setup_for(Vec3(0.0, 0.0, 10.0)), areas, RisKind.METASURFACE)
        assert 1.9 <= sweep_slope(points, top_decade=False) <= 2.1


class TestFitSlope:
    """Test log-log slope fitting."""

    def test_exact_power_law(self):
        """Test an exact power law returns its exponent."""
        x = np.array([1.0, 10.0, 100.0, 1000.0])
        assert fit_slope(x, 3.0 * x**2) == pytest.approx(2.0)

    def test_top_decade_selection(self):
        """Test only the top decade is fitted."""
        x = np.array([1.0, 2.0, 200.0, 1000.0])
        y = np.array([1.0, 2.0, 200.0**2, 1000.0**2])
        assert fit_slope(x, y) == pytest.approx(2.0)
        assert fit_slope(x, y, top_decade=False) != pytest.approx(2.0)

    def test_non_positive_values_rejected(self):
        """Test logs of non-positive values are refused."""
        with pytest.raises(DomainError):
            fit_slope([1.0, 2.0], [0.0, 1.0])


class TestPatchVersusMetasurface:
    """Test feasible-set nesting over random near-field receivers."""

    def test_metasurface_never_loses(self):
        """Test every receiver gains at least as much from the free current."""
        ris = build_planar_array(8, 8, SPACING)
        receivers = sample_near_field_points(ris, WAVELENGTH, 20, seed=3)
        df = compare_patch_metasurface(ris, WAVELENGTH, receivers)
        assert len(df) == 20
        assert (df["metasurface_gain"] >= df["patch_gain"] * (1 - 1e-12)).all()

    def test_sampled_points_are_near_field(self):
        """Test sampled receivers fall in the near field and are reproducible."""
        ris = build_planar_array(8, 8, SPACING)
        first = sample_near_field_points(ris, WAVELENGTH, 10, seed=5)
        second = sample_near_field_points(ris, WAVELENGTH, 10, seed=5)
        assert first == second
        assert all(classify_region(ris, p, WAVELENGTH) is FieldRegion.NEAR_FIELD for p in first)

    def test_tiny_array_has_no_band(self):
        """Test arrays too small for a near-field band are rejected."""
        with pytest.raises(DomainError):
            sample_near_field_points(build_planar_array(2, 2, SPACING), WAVELENGTH, 5, seed=1)


class TestRegimeSummary:
    """Test the side-by-side near/far table."""

    def test_near_slope_below_far_slope(self):
        """Test the near placement scales more slowly and has richer rank."""
        placements = {
            "near": setup_for(Vec3(0.0, 0.0, 0.02)),
            "far": setup_for(Vec3(0.0, 0.0, 50.0)),
        }
        df = regime_summary(placements, [2, 4, 8, 16, 32]).set_index("placement")
        assert df.loc["near", "regime"] == "near_field"
        assert df.loc["far", "regime"] == "far_field"
        assert df.loc["near", "slope"] < df.loc["far", "slope"] - 0.3
        assert df.loc["near", "effective_rank"] > df.loc["far", "effective_rank"]
