"""Tests for spectral measures, admissibility integrals and the norm integral."""

import math
from collections.abc import Callable, Iterator

import numpy as np
import pytest
from scipy import integrate

from dchar_field.config import settings
from dchar_field.services.fourier import BoundConstants
from dchar_field.services.spectral import (
    IntegrationMethod,
    MeasureKind,
    SpectralMeasureSpec,
    dalang_integral,
    norm_integral,
    require_admissible,
    sc_integral,
    time_spectral_integral,
)
from dchar_field.utils.errors import (
    DomainError,
    PreconditionFailed,
    QuadratureNoConvergence,
    TabulationTooCoarse,
    UnsupportedMeasure,
    ValidationError,
)


def test_riesz_closed_forms(riesz_half: SpectralMeasureSpec) -> None:
    """β = 1/2: SC = 3π²/sin(3π/4), Dalang = π²/sin(π/4)."""
    sc = sc_integral(riesz_half)
    dalang = dalang_integral(riesz_half)
    assert sc.method is IntegrationMethod.CLOSED_FORM
    assert sc.value == pytest.approx(41.87342, abs=1e-5)
    assert dalang.value == pytest.approx(13.957806, abs=1e-6)
    assert sc.finite and dalang.finite


def test_riesz_above_threshold_diverges() -> None:
    """β ≥ 2/3 fails the admissibility integral while the wave integral converges."""
    mu = SpectralMeasureSpec.riesz(0.7)
    assert sc_integral(mu).divergent
    assert sc_integral(mu).value is None
    assert dalang_integral(mu).finite


def test_white_noise_diverges() -> None:
    """Lebesgue measure diverges for both integrals."""
    mu = SpectralMeasureSpec.white()
    assert sc_integral(mu).divergent
    assert dalang_integral(mu).divergent
    assert sc_integral(mu).as_dict()["verdict"] == "divergent"


def test_quadrature_matches_riesz_closed_form(riesz_half: SpectralMeasureSpec) -> None:
    """The annulus quadrature reproduces the closed forms."""
    sc = sc_integral(riesz_half, method="quadrature")
    dalang = dalang_integral(riesz_half, method="quadrature")
    assert sc.method is IntegrationMethod.QUADRATURE
    assert sc.value == pytest.approx(3.0 * math.pi**2 / math.sin(0.75 * math.pi), rel=1e-4)
    assert dalang.value == pytest.approx(math.pi**2 / math.sin(0.25 * math.pi), rel=1e-4)


def test_quadrature_detects_divergence() -> None:
    """Growing annulus masses are reported as divergent."""
    assert sc_integral(SpectralMeasureSpec.riesz(0.8), method="quadrature").divergent


def test_gaussian_integrals(gaussian_unit: SpectralMeasureSpec) -> None:
    """Gaussian: Dalang closed form agrees with quadrature; SC agrees with SciPy."""
    closed = dalang_integral(gaussian_unit)
    quad = dalang_integral(gaussian_unit, method="quadrature")
    assert closed.method is IntegrationMethod.CLOSED_FORM
    assert quad.value == pytest.approx(closed.value, rel=1e-5)

    reference, _ = integrate.quad(
        lambda r: 2.0 * math.pi * r * math.exp(-r * r) / (1.0 + r ** (2.0 / 3.0)), 0.0, np.inf
    )
    assert sc_integral(gaussian_unit).value == pytest.approx(reference, rel=1e-5)


def test_masses(gaussian_unit: SpectralMeasureSpec) -> None:
    """Disc and square masses of the Gaussian and white measures."""
    assert float(gaussian_unit.radial_mass(50.0)) == pytest.approx(math.pi)
    assert gaussian_unit.square_mass(50.0) == pytest.approx(math.pi)
    assert SpectralMeasureSpec.white().square_mass(2.0) == pytest.approx(4.0)
    riesz = SpectralMeasureSpec.riesz(1.0)
    assert float(riesz.radial_mass(2.0)) == pytest.approx(4.0 * math.pi)


def test_covariance_kernel(gaussian_unit: SpectralMeasureSpec) -> None:
    """Gaussian kernel is (π/ℓ²)e^{−|x|²/4ℓ²}; white noise has none."""
    assert float(gaussian_unit.covariance_kernel(0.0)) == pytest.approx(math.pi)
    assert float(gaussian_unit.covariance_kernel(2.0)) == pytest.approx(math.pi * math.exp(-1.0))
    with pytest.raises(UnsupportedMeasure):
        SpectralMeasureSpec.white().covariance_kernel(1.0)


def test_tabulated_density() -> None:
    """Linear interpolation inside, power-law tail beyond the last sample."""
    mu = SpectralMeasureSpec.tabulated([(0.0, 1.0), (1.0, 1.0), (2.0, 0.5), (4.0, 0.125)])
    assert mu.kind is MeasureKind.TABLE
    assert float(mu.density(0.5)) == pytest.approx(1.0)
    assert float(mu.density(3.0)) == pytest.approx(0.3125)
    # tail exponent log(0.25)/log(2) = −2
    assert float(mu.density(8.0)) == pytest.approx(0.125 / 4.0)
    assert sc_integral(mu).finite


def test_tabulation_errors() -> None:
    """Too few samples or an undetermined tail are rejected."""
    with pytest.raises(TabulationTooCoarse):
        SpectralMeasureSpec.tabulated([(1.0, 1.0)])
    with pytest.raises(TabulationTooCoarse):
        SpectralMeasureSpec.tabulated([(0.0, 1.0), (1.0, 0.0), (2.0, 1.0)])
    with pytest.raises(ValidationError):
        SpectralMeasureSpec.tabulated([(1.0, 1.0), (0.5, 1.0)])


def test_parameter_validation() -> None:
    """Riesz needs β ∈ (0, 2), Gaussian ℓ > 0."""
    with pytest.raises(ValidationError):
        SpectralMeasureSpec.riesz(2.0)
    with pytest.raises(ValidationError):
        SpectralMeasureSpec.gaussian(0.0)


def test_require_admissible() -> None:
    """Non-admissible measures are refused."""
    with pytest.raises(PreconditionFailed):
        require_admissible(SpectralMeasureSpec.riesz(0.7))
    assert require_admissible(SpectralMeasureSpec.riesz(0.3)).finite


def test_time_spectral_integral_of_constant(gaussian_unit: SpectralMeasureSpec) -> None:
    """A constant integrand gives T·μ(ℝ²) = T·π for the unit Gaussian."""

    def ones(tau: float, k1: np.ndarray, k2: np.ndarray) -> tuple[np.ndarray, float]:
        return np.ones((k1.size, k2.size)), 1.0

    result = time_spectral_integral(
        0.5, gaussian_unit, ones, lambda tau: (1.0, 1.0), 1e-8, "constant"
    )
    assert result.value == pytest.approx(0.5 * math.pi, rel=1e-6)


def test_norm_integral_edge_cases(gaussian_unit: SpectralMeasureSpec) -> None:
    """t = 0 gives 0; t < 0 is outside the domain; white noise is refused."""
    assert norm_integral(0.0, 0.0, 0.0, gaussian_unit).value == 0.0
    with pytest.raises(DomainError):
        norm_integral(-0.1, 0.0, 0.0, gaussian_unit)
    with pytest.raises(PreconditionFailed):
        norm_integral(0.5, 0.0, 0.0, SpectralMeasureSpec.white())


def test_norm_integral_small_time(gaussian_unit: SpectralMeasureSpec) -> None:
    """For small t, |FΓ| ≈ τ on the Gaussian's support, so the integral ≈ πt³/3."""
    t = 0.1
    result = norm_integral(t, 0.0, 0.0, gaussian_unit, tol=1e-7)
    assert result.value == pytest.approx(math.pi * t**3 / 3.0, rel=1e-2)
    assert result.value < math.pi * t**3 / 3.0


def test_norm_integral_x2_invariance_and_monotonicity(
    gaussian_unit: SpectralMeasureSpec,
) -> None:
    """The second moment ignores x₂ and grows with t."""
    a = norm_integral(0.3, 0.5, 0.0, gaussian_unit, tol=1e-6)
    b = norm_integral(0.3, 0.5, 1.3, gaussian_unit, tol=1e-6)
    c = norm_integral(0.6, 0.5, 0.0, gaussian_unit, tol=1e-6)
    assert a.value == b.value
    assert c.value > a.value > 0.0


def test_norm_integral_envelope_tail(
    gaussian_unit: SpectralMeasureSpec, constants: BoundConstants
) -> None:
    """Given bound constants, the rigorous tail bound is reported."""
    plain = norm_integral(0.3, 0.0, 0.0, gaussian_unit, tol=1e-6)
    bounded = norm_integral(0.3, 0.0, 0.0, gaussian_unit, tol=1e-6, constants=constants)
    assert plain.envelope_tail is None
    assert bounded.envelope_tail is not None
    assert bounded.envelope_tail >= 0.0
    assert bounded.value == plain.value


@pytest.fixture
def cutoff_cap() -> Iterator[Callable[[float], None]]:
    """Setter for the largest frequency cutoff, restored after the test."""
    previous = settings.spectral.cutoff_max
    yield lambda cap: settings.set("spectral.cutoff_max", cap)
    settings.set("spectral.cutoff_max", previous)


def test_norm_integral_raises_when_tail_exceeds_tolerance_at_cap(
    riesz_half: SpectralMeasureSpec, cutoff_cap: Callable[[float], None]
) -> None:
    """Reaching the cutoff cap with an unresolved tail is an error, not a silent stop."""
    cutoff_cap(8.0)
    with pytest.raises(QuadratureNoConvergence):
        norm_integral(1.0, 0.0, 0.0, riesz_half, tol=1e-6)


@pytest.mark.slow
def test_norm_integral_stable_under_larger_cap(
    riesz_half: SpectralMeasureSpec, cutoff_cap: Callable[[float], None]
) -> None:
    """Doubling the cutoff cap leaves a heavy-tailed norm integral within tolerance."""
    tol = 1e-2
    cutoff_cap(64.0)
    base = norm_integral(0.25, 0.0, 0.0, riesz_half, tol=tol)
    cutoff_cap(128.0)
    wider = norm_integral(0.25, 0.0, 0.0, riesz_half, tol=tol)
    assert base.error_estimate <= tol
    assert wider.value == pytest.approx(base.value, abs=tol)
