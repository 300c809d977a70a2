"""Tests for the Fourier transform of the kernel and its decay bounds."""

import cmath
import math
from pathlib import Path

import numpy as np
import pytest

from dchar_field.services.calibration import decay_curve
from dchar_field.services.fourier import (
    BoundConstants,
    Frequency,
    LaplaceFrequency,
    bound_global,
    bound_xi1,
    bound_xi2,
    fit_decay_exponent,
    fourier_gamma,
    fourier_gamma_batch,
    fourier_gamma_direct,
    fourier_gamma_table,
    h_tilde,
    hat_gamma_dagger,
    laplace_chi_identity,
    load_bound_constants,
    save_bound_constants,
)
from dchar_field.utils.errors import DomainError, PreconditionFailed


@pytest.fixture
def sample_constants() -> BoundConstants:
    """Hand-picked constants for bound arithmetic."""
    return BoundConstants(c_beta=2.0, c4=1.0, k_lin=(0.5, 0.25), kappa_lin=(1.0, 0.5, 0.1))


def test_transform_at_zero_frequency_is_tau() -> None:
    """FΓ(τ, x, 0) = τ, the mass of the kernel."""
    for tau, x1 in [(0.3, 0.0), (1.0, -1.2), (2.0, 1.7)]:
        value = fourier_gamma(tau, x1, 0.4, Frequency(0.0, 0.0), tol=1e-10)
        assert value == pytest.approx(tau, abs=1e-9)


def test_transform_modulus_bounded_by_tau() -> None:
    """|FΓ| ≤ τ on a spread of frequencies."""
    rng = np.random.default_rng(11)
    for xi1, xi2 in rng.uniform(-40.0, 40.0, (25, 2)):
        value = fourier_gamma(1.3, -0.4, 0.0, Frequency(float(xi1), float(xi2)), tol=1e-9)
        assert abs(value) <= 1.3 + 1e-9


@pytest.mark.parametrize(
    ("tau", "x1", "xi"),
    [
        (1.0, 0.3, Frequency(3.0, -5.0)),
        (0.5, -1.0, Frequency(-7.5, 2.0)),
        (2.0, 0.0, Frequency(0.0, 12.0)),
    ],
)
def test_bessel_form_matches_direct_integral(tau: float, x1: float, xi: Frequency) -> None:
    """The Bessel representation agrees with the raw (λ, θ) double integral."""
    bessel = fourier_gamma(tau, x1, 0.2, xi, tol=1e-10)
    direct = fourier_gamma_direct(tau, x1, 0.2, xi, tol=1e-9)
    assert abs(bessel - direct) <= 1e-6


def test_table_and_batch_match_pointwise_transform() -> None:
    """Shared-rule tables reproduce FΓ once the phase e^{−i(x₁ξ₁ + x₂ξ₂)} is restored."""
    tau, x1, x2 = 0.8, 0.5, -0.3
    xi1 = np.array([-6.0, 0.0, 2.5])
    xi2 = np.array([0.0, 4.0, 9.0])
    table = fourier_gamma_table(tau, x1, xi1, xi2, tol=1e-10)
    batch = fourier_gamma_batch(tau, x1, xi1, xi2, tol=1e-10)
    assert table.shape == (3, 3)
    for i, k1 in enumerate(xi1):
        for j, k2 in enumerate(xi2):
            expected = fourier_gamma(tau, x1, x2, Frequency(float(k1), float(k2)), tol=1e-10)
            phase = cmath.exp(-1j * (x1 * k1 + x2 * k2))
            assert table[i, j] * phase == pytest.approx(expected, abs=1e-8)
        assert batch[i] * cmath.exp(-1j * (x1 * k1 + x2 * xi2[i])) == pytest.approx(
            fourier_gamma(tau, x1, x2, Frequency(float(k1), float(xi2[i])), tol=1e-10), abs=1e-8
        )


def test_modulus_independent_of_x2_and_even() -> None:
    """x₂ enters through a phase only; |FΓ| is even in ξ₁ and in ξ₂."""
    xi = Frequency(4.0, -6.0)
    base = abs(fourier_gamma(1.0, 0.2, 0.0, xi, tol=1e-10))
    assert abs(fourier_gamma(1.0, 0.2, 1.7, xi, tol=1e-10)) == pytest.approx(base, abs=1e-9)
    flipped = Frequency(-4.0, 6.0)
    assert abs(fourier_gamma(1.0, 0.2, 0.0, flipped, tol=1e-10)) == pytest.approx(base, abs=1e-9)
    mirrored = Frequency(4.0, 6.0)
    assert abs(fourier_gamma(1.0, 0.2, 0.0, mirrored, tol=1e-10)) == pytest.approx(base, abs=1e-9)


def test_h_tilde_endpoints_and_domain() -> None:
    """h̃ vanishes at λ ∈ {0, 1} and rejects λ outside [0, 1]."""
    assert h_tilde(1.0, 0.5, 0.0) == 0.0
    assert h_tilde(1.0, 0.5, 1.0) == 0.0
    assert h_tilde(1.0, 0.0, 0.5) > 0.0
    with pytest.raises(DomainError):
        h_tilde(1.0, 0.0, 1.5)
    with pytest.raises(DomainError):
        h_tilde(0.0, 0.0, 0.5)


def test_transform_rejects_non_positive_tau() -> None:
    """τ ≤ 0 is outside the domain of FΓ."""
    with pytest.raises(DomainError):
        fourier_gamma(0.0, 0.0, 0.0, Frequency(1.0, 1.0))
    with pytest.raises(DomainError):
        Frequency(math.inf, 0.0)


def test_bound_arithmetic(sample_constants: BoundConstants) -> None:
    """The three bounds evaluate their closed forms."""
    xi = Frequency(8.0, 4.0)
    assert bound_xi2(1.0, 0.0, xi, sample_constants) == pytest.approx(1.0)
    # K(1, −2) = 0.5 + 0.5 = 1
    assert bound_xi1(1.0, -2.0, xi, sample_constants) == pytest.approx((1.0 + 4.0) / 8.0)
    kappa = (1.0 + 0.5 * 2.0 + 0.1) ** 2
    expected = math.sqrt(kappa / (1.0 + math.hypot(8.0, 4.0) ** (2.0 / 3.0)))
    assert bound_global(1.0, 2.0, xi, sample_constants) == pytest.approx(expected)


def test_bounds_reject_their_singular_axes(sample_constants: BoundConstants) -> None:
    """ξ₂ = 0 and ξ₁ = 0 are outside the respective regime bounds."""
    with pytest.raises(DomainError):
        bound_xi2(1.0, 0.0, Frequency(3.0, 0.0), sample_constants)
    with pytest.raises(DomainError):
        bound_xi1(1.0, 0.0, Frequency(0.0, 3.0), sample_constants)
    with pytest.raises(DomainError):
        bound_global(-1.0, 0.0, Frequency(1.0, 1.0), sample_constants)


def test_bound_constants_validation() -> None:
    """Constants must be positive with a nonzero κ̃ envelope."""
    with pytest.raises(DomainError):
        BoundConstants(c_beta=0.0, c4=1.0, k_lin=(0.0, 0.0), kappa_lin=(1.0, 0.0, 0.0))
    with pytest.raises(DomainError):
        BoundConstants(c_beta=1.0, c4=1.0, k_lin=(0.0, 0.0), kappa_lin=(0.0, 0.0, 0.0))


def test_constants_roundtrip(tmp_path: Path, sample_constants: BoundConstants) -> None:
    """Saved constants load back unchanged."""
    path = save_bound_constants(tmp_path / "consts.toml", sample_constants)
    assert load_bound_constants(path) == sample_constants


def test_missing_constants_file(tmp_path: Path) -> None:
    """Loading before calibration is a precondition failure."""
    with pytest.raises(PreconditionFailed):
        load_bound_constants(tmp_path / "absent.toml")


def test_fit_decay_exponent_on_oscillating_power_law() -> None:
    """The local-maximum envelope of r^{−1/2}|cos r| has slope −1/2."""
    r = np.geomspace(1.0, 1e4, 40000)
    slope = fit_decay_exponent(r, r**-0.5 * np.abs(np.cos(r)))
    assert slope == pytest.approx(-0.5, abs=0.02)


def test_hat_gamma_dagger_causal_and_jump() -> None:
    """Γ̂† vanishes for x₁ > y₁ and takes the left limit −i/(2ξ₀) at x₁ = y₁."""
    xi0 = LaplaceFrequency(1.0, -0.5)
    assert hat_gamma_dagger(xi0, 0.7, 0.2, 3.0) == 0j
    assert hat_gamma_dagger(xi0, 0.2, 0.2, 3.0) == pytest.approx(-1j / (2.0 * xi0.value))
    with pytest.raises(DomainError):
        LaplaceFrequency(1.0, 0.0)


@pytest.mark.parametrize(
    ("xi0", "expected"),
    [
        (LaplaceFrequency(0.0, -1.0), 1.0),
        (LaplaceFrequency(1.0, -1.0), None),
        (LaplaceFrequency(0.0, -10.0), 10.0**-0.5),
    ],
)
def test_laplace_chi_identity(xi0: LaplaceFrequency, expected: float | None) -> None:
    """The half-line transform of (πt)^{−1/2} equals (iξ₀)^{−1/2}."""
    left, right = laplace_chi_identity(xi0, tol=1e-9)
    assert abs(left - right) <= 1e-8
    if expected is not None:
        assert left == pytest.approx(expected, abs=1e-8)


@pytest.mark.parametrize("xi0", [LaplaceFrequency(1.0, -0.5), LaplaceFrequency(-2.0, -1.0)])
def test_hat_gamma_dagger_solves_transport_ode(xi0: LaplaceFrequency) -> None:
    """∂x₁Γ̂† + (i/(2ξ₀))(x₁²ξ₂² − ξ₀²)Γ̂† = 0 on x₁ < y₁."""
    y1, xi2, h = 0.4, 3.0, 1e-5
    z0 = xi0.value
    for x1 in (-0.8, -0.2, 0.1):
        value = hat_gamma_dagger(xi0, x1, y1, xi2)
        slope = hat_gamma_dagger(xi0, x1 + h, y1, xi2) - hat_gamma_dagger(xi0, x1 - h, y1, xi2)
        residual = slope / (2.0 * h) + (1j / (2.0 * z0)) * (x1**2 * xi2**2 - z0**2) * value
        assert abs(residual) <= 1e-6 * abs(value)


def test_x2_shift_is_a_phase() -> None:
    """Moving x₂ by s multiplies the direct transform by e^{−isξ₂}."""
    xi = Frequency(2.0, -5.0)
    base = fourier_gamma_direct(0.7, 0.1, 0.0, xi, tol=1e-9)
    for shift in (0.4, -1.3):
        moved = fourier_gamma_direct(0.7, 0.1, shift, xi, tol=1e-9)
        assert moved == pytest.approx(cmath.exp(-1j * shift * xi.xi2) * base, abs=1e-8)


def test_transform_is_conjugate_symmetric() -> None:
    """Γ is real, so FΓ(−ξ) is the complex conjugate of FΓ(ξ)."""
    for xi1, xi2 in [(3.0, 4.0), (-6.0, 1.5), (0.0, -9.0)]:
        value = fourier_gamma(0.9, -0.3, 0.5, Frequency(xi1, xi2), tol=1e-10)
        mirrored = fourier_gamma(0.9, -0.3, 0.5, Frequency(-xi1, -xi2), tol=1e-10)
        assert mirrored == pytest.approx(value.conjugate(), abs=1e-9)


@pytest.mark.slow
def test_bessel_form_matches_direct_integral_on_grid() -> None:
    """Both representations agree on a 3×3×3 grid of (τ, ξ₁, ξ₂)."""
    for tau in (0.3, 1.0, 2.0):
        for xi1 in (-5.0, 0.0, 7.0):
            for xi2 in (-8.0, 1.0, 12.0):
                xi = Frequency(xi1, xi2)
                bessel = fourier_gamma(tau, 0.3, 0.2, xi, tol=1e-10)
                direct = fourier_gamma_direct(tau, 0.3, 0.2, xi, tol=1e-9)
                assert abs(bessel - direct) <= 1e-6


@pytest.mark.slow
def test_decay_slopes() -> None:
    """Fitted slopes sit below their bound exponents and near the stationary-phase rate −1."""
    radii = np.geomspace(10.0, 1e4, 200)
    axis = fit_decay_exponent(radii, decay_curve(1.0, 0.5, "xi2-axis", radii))
    matched = fit_decay_exponent(radii, decay_curve(1.0, 0.5, "matched", radii))
    assert axis <= -0.5 + 0.05
    assert matched <= -1.0 / 3.0 + 0.05
    assert -1.15 <= axis <= -0.85
    assert -1.15 <= matched <= -0.85
