"""
Shared fixtures for nfris tests.
"""

import pytest

from src.channel.geometry import Vec3, build_planar_array

WAVELENGTH = 0.01
HALF_WAVE = WAVELENGTH / 2.0


@pytest.fixture
def wavelength():
    """30 GHz carrier."""
    return WAVELENGTH


@pytest.fixture
def small_ris():
    """4x4 half-wavelength array in the xy-plane facing +z."""
    return build_planar_array(4, 4, HALF_WAVE)


@pytest.fixture
def ris_16():
    """16x16 half-wavelength array; aperture 15*sqrt(2)*lambda/2, Rayleigh distance 2.25 m."""
    return build_planar_array(16, 16, HALF_WAVE)


@pytest.fixture
def linear_ris_64():
    """64-element linear array along x."""
    return build_planar_array(1, 64, HALF_WAVE)


@pytest.fixture
def far_point():
    return Vec3(0.0, 0.0, 100.0)


@pytest.fixture(autouse=True)
def single_thread(monkeypatch):
    """Run parallel maps inline unless a test sets NFRIS_THREADS itself."""
    monkeypatch.delenv("NFRIS_THREADS", raising=False)
