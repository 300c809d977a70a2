"""Shared test fixtures for dchar-field."""

import math
from pathlib import Path

import numpy as np
import pytest

from dchar_field.services.calibration import CalibrationGrid, CalibrationReport, calibrate_bounds
from dchar_field.services.fourier import BoundConstants
from dchar_field.services.kernel import TestFunction
from dchar_field.services.noise import GridSpec
from dchar_field.services.spectral import SpectralMeasureSpec

FIXTURES = Path(__file__).parent / "fixtures"


@pytest.fixture(scope="session")
def fixtures_dir() -> Path:
    """Directory of the golden example outputs."""
    return FIXTURES


@pytest.fixture(scope="session")
def tiny_calibration_grid() -> CalibrationGrid:
    """A calibration grid small enough for the quick test loop."""
    return CalibrationGrid(
        taus=(0.5, 1.0, 2.0),
        x1s=(-1.0, 0.0, 1.0),
        radii=tuple(float(r) for r in np.geomspace(0.5, 200.0, 7)),
        angles=tuple(float(a) for a in np.linspace(0.0, 0.5 * math.pi, 4)),
    )


@pytest.fixture(scope="session")
def calibration(tiny_calibration_grid: CalibrationGrid) -> CalibrationReport:
    """Bound constants calibrated once per session on the tiny grid."""
    return calibrate_bounds(tiny_calibration_grid, tol=1e-8)


@pytest.fixture(scope="session")
def constants(calibration: CalibrationReport) -> BoundConstants:
    """The calibrated constants alone."""
    return calibration.constants


@pytest.fixture
def riesz_half() -> SpectralMeasureSpec:
    """Riesz measure with β = 1/2 (admissible)."""
    return SpectralMeasureSpec.riesz(0.5)


@pytest.fixture
def gaussian_unit() -> SpectralMeasureSpec:
    """Gaussian spectral density with ℓ = 1."""
    return SpectralMeasureSpec.gaussian(1.0)


@pytest.fixture
def small_grid() -> GridSpec:
    """Coarse noise grid: 10 steps of 0.1 on [−2.5, 2.5]² with 16 modes."""
    return GridSpec(dt=0.1, t_steps=10, x_extent=2.5, n_modes=16, seed=7, refinement=2)


@pytest.fixture
def centered_bump() -> TestFunction:
    """Plain bump centred on (0, 0, 0) with unit radii."""
    return TestFunction((0.0, 0.0, 0.0), (1.0, 1.0, 1.0))
