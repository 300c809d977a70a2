"""Tests for noise synthesis, the binary export and the covariance check."""

import math
from pathlib import Path

import numpy as np
import pytest

from dchar_field.services.kernel import TestFunction
from dchar_field.services.noise import (
    HEADER_DTYPE,
    GridSpec,
    NoiseGrid,
    covariance_mc_check,
    covariance_spectral_value,
    export_noise_grid,
    frequency_lattice,
    read_noise_grid,
    sample_noise,
    spectral_quadratic_form,
)
from dchar_field.services.spectral import SpectralMeasureSpec
from dchar_field.utils.errors import (
    GridTooCoarse,
    SupportOverflow,
    UnsupportedMeasure,
    ValidationError,
)


def test_grid_properties(small_grid: GridSpec) -> None:
    """Derived quantities of the coarse grid."""
    assert small_grid.horizon == pytest.approx(1.0)
    assert small_grid.n_cells == 32
    assert small_grid.cell_size == pytest.approx(5.0 / 32.0)
    assert small_grid.mode_spacing == pytest.approx(math.pi / 2.5)
    assert small_grid.cell_centers()[0] == pytest.approx(-2.5 + 5.0 / 64.0)
    np.testing.assert_allclose(small_grid.step_times(), 0.1 * np.arange(10))


@pytest.mark.parametrize(
    "kwargs",
    [
        {"dt": 0.0},
        {"t_steps": 0},
        {"x_extent": -1.0},
        {"n_modes": 15},
        {"seed": -1},
        {"refinement": 0},
    ],
)
def test_grid_validation(kwargs: dict[str, float]) -> None:
    """Every grid parameter is range-checked."""
    base = {"dt": 0.1, "t_steps": 10, "x_extent": 2.5, "n_modes": 16, "seed": 0}
    with pytest.raises(ValidationError):
        GridSpec(**{**base, **kwargs})  # type: ignore[arg-type]


def test_grid_from_settings_overrides() -> None:
    """Overrides replace settings values; None leaves them alone."""
    grid = GridSpec.from_settings(dt=0.1, t_steps=5, seed=None)
    assert grid.dt == 0.1
    assert grid.t_steps == 5
    assert grid.seed == 42
    assert grid.n_modes == 32


def test_lattice_total_weight(small_grid: GridSpec, gaussian_unit: SpectralMeasureSpec) -> None:
    """The lattice carries the whole Gaussian mass π."""
    lattice = frequency_lattice(small_grid, gaussian_unit)
    assert lattice.weights.shape == (16, 16)
    assert lattice.total_weight == pytest.approx(math.pi, rel=1e-3)
    assert np.all(lattice.weights >= 0.0)


def test_white_noise_cannot_be_synthesized(small_grid: GridSpec) -> None:
    """White noise has no field version on a grid."""
    with pytest.raises(UnsupportedMeasure):
        sample_noise(small_grid, SpectralMeasureSpec.white())


def test_sample_noise_shape_and_determinism(
    small_grid: GridSpec, riesz_half: SpectralMeasureSpec
) -> None:
    """Same key, same increments; a different realization differs."""
    first = sample_noise(small_grid, riesz_half, realization=3)
    again = sample_noise(small_grid, riesz_half, realization=3)
    other = sample_noise(small_grid, riesz_half, realization=4)
    assert first.increments.shape == (10, 32, 32)
    np.testing.assert_array_equal(first.increments, again.increments)
    assert not np.allclose(first.increments, other.increments)


def test_empirical_variance_matches_lattice(
    small_grid: GridSpec, gaussian_unit: SpectralMeasureSpec
) -> None:
    """Var W_k(c) = dt·Σ_j w_j at every cell."""
    lattice = frequency_lattice(small_grid, gaussian_unit)
    squares = [
        np.mean(sample_noise(small_grid, gaussian_unit, r).increments**2) for r in range(40)
    ]
    expected = small_grid.dt * lattice.total_weight
    assert float(np.mean(squares)) == pytest.approx(expected, rel=0.15)


def test_export_and_read_back(
    tmp_path: Path, small_grid: GridSpec, gaussian_unit: SpectralMeasureSpec
) -> None:
    """The file is the 72-byte header plus the float64 payload and reads back intact."""
    noise = sample_noise(small_grid, gaussian_unit, realization=2)
    path = export_noise_grid(tmp_path / "noise.bin", noise)
    assert HEADER_DTYPE.itemsize == 72
    assert path.stat().st_size == 72 + 8 * 10 * 32 * 32
    loaded = read_noise_grid(path, gaussian_unit)
    assert loaded.grid == small_grid
    assert loaded.realization == 2
    np.testing.assert_array_equal(loaded.increments, noise.increments)


def test_read_rejects_foreign_files(
    tmp_path: Path, small_grid: GridSpec, gaussian_unit: SpectralMeasureSpec
) -> None:
    """Bad magic and truncated payloads are refused."""
    path = export_noise_grid(tmp_path / "noise.bin", sample_noise(small_grid, gaussian_unit))
    raw = path.read_bytes()
    (tmp_path / "magic.bin").write_bytes(b"XXXX" + raw[4:])
    (tmp_path / "short.bin").write_bytes(raw[:-8])
    with pytest.raises(ValidationError):
        read_noise_grid(tmp_path / "magic.bin", gaussian_unit)
    with pytest.raises(ValidationError):
        read_noise_grid(tmp_path / "short.bin", gaussian_unit)


def test_noise_grid_shape_validation(
    small_grid: GridSpec, gaussian_unit: SpectralMeasureSpec
) -> None:
    """Increments must match the grid."""
    with pytest.raises(ValidationError):
        NoiseGrid(small_grid, gaussian_unit, np.zeros((10, 16, 16)))


def test_quadratic_form_of_single_cell(
    small_grid: GridSpec, gaussian_unit: SpectralMeasureSpec
) -> None:
    """A single-cell indicator has variance dt·Σ_j w_j."""
    g = np.zeros((10, 32, 32))
    g[0, 5, 17] = 1.0
    lattice = frequency_lattice(small_grid, gaussian_unit)
    value = spectral_quadratic_form(g, small_grid, gaussian_unit)
    assert value == pytest.approx(small_grid.dt * lattice.total_weight, rel=1e-12)


def test_covariance_check_rejects_unresolved_functions(
    small_grid: GridSpec, gaussian_unit: SpectralMeasureSpec
) -> None:
    """Supports must fit the box and span four steps and cells."""
    fine = TestFunction((0.5, 0.0, 0.0), (0.4, 0.8, 0.8))
    overflowing = TestFunction((0.9, 0.0, 0.0), (0.4, 0.8, 0.8))
    narrow = TestFunction((0.5, 0.0, 0.0), (0.2, 0.8, 0.8))
    with pytest.raises(SupportOverflow):
        covariance_mc_check(overflowing, fine, small_grid, gaussian_unit, n_samples=10)
    with pytest.raises(GridTooCoarse):
        covariance_mc_check(fine, narrow, small_grid, gaussian_unit, n_samples=10)


def test_time_disjoint_functions_are_uncorrelated(gaussian_unit: SpectralMeasureSpec) -> None:
    """White-in-time noise: disjoint time supports give zero covariance."""
    early = TestFunction((0.25, 0.0, 0.0), (0.2, 0.8, 0.8))
    late = TestFunction((0.75, 0.0, 0.0), (0.2, 0.8, 0.8))
    assert covariance_spectral_value(early, late, gaussian_unit) == 0.0


def test_covariance_is_symmetric(gaussian_unit: SpectralMeasureSpec) -> None:
    """E[F(φ)F(ψ)] = E[F(ψ)F(φ)]."""
    phi = TestFunction((0.5, 0.0, 0.0), (0.4, 0.8, 0.8))
    psi = TestFunction((0.55, 0.3, -0.2), (0.35, 0.7, 0.9), 1.5)
    forward = covariance_spectral_value(phi, psi, gaussian_unit, tol=1e-8)
    backward = covariance_spectral_value(psi, phi, gaussian_unit, tol=1e-8)
    assert forward == pytest.approx(backward, rel=1e-9)
    assert covariance_spectral_value(phi, phi, gaussian_unit, tol=1e-8) > 0.0


@pytest.mark.slow
def test_covariance_mc_check_accepts(
    small_grid: GridSpec, gaussian_unit: SpectralMeasureSpec
) -> None:
    """The empirical covariance matches the spectral value within its budget."""
    phi = TestFunction((0.5, 0.0, 0.0), (0.4, 0.8, 0.8))
    psi = TestFunction((0.5, 0.2, 0.0), (0.4, 0.8, 0.8))
    check = covariance_mc_check(phi, psi, small_grid, gaussian_unit, n_samples=400, tol=1e-6)
    assert check.n_samples == 400
    assert check.std_err > 0.0
    assert check.accepted
