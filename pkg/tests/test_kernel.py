"""Tests for the closed-form kernel, its support and the weak-form oracle."""

import math

import numpy as np
import pytest

from dchar_field.services.commands import WEAK_SOURCES, weak_test_suite
from dchar_field.services.kernel import (
    GAMMA_CONSTANT,
    BumpProfile,
    KernelPoint,
    TestFunction,
    gamma_eval,
    gamma_values,
    in_support,
    kernel_mass,
    lop_apply,
    support_mask,
    weak_apply,
)
from dchar_field.utils.errors import DomainError, QuadratureNoConvergence


@pytest.mark.parametrize(
    ("point", "expected"),
    [
        (KernelPoint(1.0, 0.0, 1.0, 0.0), True),
        (KernelPoint(1.0, 0.0, 2.5, 0.0), False),
        (KernelPoint(-1.0, 0.0, 1.0, 0.0), False),
        (KernelPoint(1.0, 0.0, 1.0, 1.0), False),
        (KernelPoint(0.5, -1.0, 0.0, 0.0), False),
    ],
)
def test_in_support(point: KernelPoint, expected: bool) -> None:
    """Support membership on hand-evaluated points."""
    assert in_support(point) is expected


def test_gamma_eval_closed_form() -> None:
    """Γ(1, 0, 1, 0) = √3/(2π); outside and boundary points give 0."""
    assert gamma_eval(KernelPoint(1.0, 0.0, 1.0, 0.0)) == pytest.approx(0.2756644, abs=1e-7)
    assert gamma_eval(KernelPoint(1.0, 0.0, 1.0, 1.0)) == 0.0
    assert gamma_eval(KernelPoint(0.5, -1.0, 0.0, 0.0)) == 0.0
    # radicand (1)(2 − 1) − 3·0.25 = 0.25
    assert gamma_eval(KernelPoint(1.0, 0.0, 1.0, 0.5)) == pytest.approx(2.0 * GAMMA_CONSTANT)


def test_kernel_point_rejects_non_finite() -> None:
    """KernelPoint fields must be finite."""
    with pytest.raises(DomainError):
        KernelPoint(math.nan, 0.0, 1.0, 0.0)


def test_support_implies_source_window() -> None:
    """Every support point has t > 0 and x₁ < y₁ < x₁ + 2t."""
    rng = np.random.default_rng(3)
    t = rng.uniform(-1.0, 2.0, 20000)
    x1 = rng.uniform(-2.0, 2.0, 20000)
    y1 = rng.uniform(-3.0, 6.0, 20000)
    x2 = rng.uniform(-3.0, 3.0, 20000)
    mask = support_mask(t, x1, y1, x2)
    assert mask.any()
    assert np.all(t[mask] > 0.0)
    assert np.all(y1[mask] > x1[mask])
    assert np.all(y1[mask] < x1[mask] + 2.0 * t[mask])
    values = gamma_values(t, x1, y1, x2)
    assert np.all(values[~mask] == 0.0)
    assert np.all(np.isfinite(values))


def test_gamma_even_in_x2() -> None:
    """Γ is even in x₂."""
    grid = np.linspace(0.05, 1.95, 11)
    a = gamma_values(1.0, 0.0, grid, 0.1)
    b = gamma_values(1.0, 0.0, grid, -0.1)
    np.testing.assert_array_equal(a, b)


def test_kernel_mass_equals_elapsed_time() -> None:
    """∫∫Γ dy = τ (the ξ = 0 value of the transform)."""
    for tau, x1 in [(0.5, 0.0), (1.0, -1.0), (2.0, 1.5)]:
        assert kernel_mass(tau, x1, 0.3) == pytest.approx(tau, abs=1e-5)


def test_bump_derivatives_match_finite_differences() -> None:
    """Analytic ψ', ψ'' agree with central differences inside the support."""
    profile = BumpProfile((1.0, 0.4, -0.2))
    s = np.linspace(-0.8, 0.8, 17)
    h = 1e-5
    v, d1, d2 = profile.derivatives(s)
    vp, _, _ = profile.derivatives(s + h)
    vm, _, _ = profile.derivatives(s - h)
    np.testing.assert_allclose(d1, (vp - vm) / (2 * h), atol=1e-7)
    np.testing.assert_allclose(d2, (vp - 2 * v + vm) / h**2, atol=1e-4)


def test_test_function_vanishes_outside_box(centered_bump: TestFunction) -> None:
    """φ and Lφ are zero outside the support box."""
    assert float(centered_bump.value(1.2, 0.0, 0.0)) == 0.0
    assert lop_apply(centered_bump, (0.0, 1.0, 0.0)) == 0.0
    assert centered_bump.support_box() == ((-1.0, 1.0), (-1.0, 1.0), (-1.0, 1.0))


def test_with_value_at_normalizes(centered_bump: TestFunction) -> None:
    """Rescaling puts the requested value at the requested point."""
    phi = centered_bump.with_value_at((0.1, -0.2, 0.3), 2.5)
    assert float(phi.value(0.1, -0.2, 0.3)) == pytest.approx(2.5)
    with pytest.raises(DomainError):
        centered_bump.with_value_at((2.0, 0.0, 0.0))


def test_test_function_validation() -> None:
    """Radii must be positive."""
    with pytest.raises(DomainError):
        TestFunction((0.0, 0.0, 0.0), (1.0, 0.0, 1.0))


def test_weak_apply_recovers_point_value(centered_bump: TestFunction) -> None:
    """⟨Γ, Lφ⟩ = φ(0, y₁, 0) for a centred bump."""
    tol = 1e-3
    for y1 in (0.0, 0.5):
        expected = float(centered_bump.value(0.0, y1, 0.0))
        assert weak_apply(y1, centered_bump, tol=tol) == pytest.approx(expected, abs=5 * tol)


def test_weak_apply_zero_when_support_in_past() -> None:
    """A test function supported in t < 0 sees nothing."""
    phi = TestFunction((-2.0, 0.0, 0.0), (0.5, 0.5, 0.5))
    assert weak_apply(0.0, phi, tol=1e-4) == 0.0



def test_weak_apply_off_source_bump() -> None:
    """A bump whose support starts after t = 0 integrates to φ(0, y₁, 0) = 0."""
    phi = TestFunction((0.6, 0.0, 0.0), (0.4, 0.5, 0.5))
    assert float(phi.value(0.0, 0.5, 0.0)) == 0.0
    assert weak_apply(0.5, phi, tol=1e-3) == pytest.approx(0.0, abs=5e-3)


def test_weak_apply_respects_budget(centered_bump: TestFunction) -> None:
    """An explicit budget below one refinement round raises."""
    with pytest.raises(QuadratureNoConvergence):
        weak_apply(0.5, centered_bump, tol=1e-9, max_evals=1000)


def test_lop_matches_finite_differences() -> None:
    """Analytic Lφ agrees with centred differences of φ at interior points."""
    profiles = (BumpProfile((1.0, 0.3)), BumpProfile((1.0, -0.5, 0.2)), BumpProfile())
    phi = TestFunction((0.2, 0.3, -0.1), (0.8, 0.8, 0.8), 2.0, profiles)
    rng = np.random.default_rng(11)
    h = 1e-4

    def f(t: float, x1: float, x2: float) -> float:
        return float(phi.value(t, x1, x2))

    for s in rng.uniform(-0.5, 0.5, size=(10, 3)):
        t, x1, x2 = (c + 0.8 * si for c, si in zip(phi.center, s, strict=True))
        f0 = f(t, x1, x2)
        ftt = (f(t + h, x1, x2) - 2.0 * f0 + f(t - h, x1, x2)) / h**2
        f22 = (f(t, x1, x2 + h) - 2.0 * f0 + f(t, x1, x2 - h)) / h**2
        ft1 = (
            f(t + h, x1 + h, x2)
            - f(t + h, x1 - h, x2)
            - f(t - h, x1 + h, x2)
            + f(t - h, x1 - h, x2)
        ) / (4.0 * h**2)
        expected = ftt - 2.0 * ft1 - x1**2 * f22
        assert lop_apply(phi, (t, x1, x2)) == pytest.approx(expected, rel=1e-5, abs=1e-5)


def test_lop_at_bump_center() -> None:
    """At the centre only the second derivatives survive: Lφ = −2e⁻³(1 − c²)."""
    c = 0.5
    phi = TestFunction((0.0, c, 0.0), (1.0, 1.0, 1.0))
    assert lop_apply(phi, (0.0, c, 0.0)) == pytest.approx(-2.0 * math.exp(-3.0) * (1 - c * c))


def test_gamma_across_degenerate_axis() -> None:
    """Γ stays finite and non-negative when x₁ < 0 < y₁ straddle the degenerate axis."""
    rng = np.random.default_rng(5)
    n = 5000
    t = rng.uniform(0.1, 2.0, n)
    x1 = -rng.uniform(0.0, 1.5, n)
    y1 = rng.uniform(0.0, 1.5, n)
    x2 = rng.uniform(-1.0, 1.0, n)
    values = gamma_values(t, x1, y1, x2)
    mask = support_mask(t, x1, y1, x2)
    assert mask.sum() > 100
    assert np.all(np.isfinite(values))
    assert np.all(values >= 0.0)
    rad = (y1**3 - x1**3) * (2.0 * t + x1 - y1) - 3.0 * x2**2
    np.testing.assert_allclose(values[mask], GAMMA_CONSTANT / np.sqrt(rad[mask]), rtol=1e-12)

@pytest.mark.slow
def test_weak_suite_all_sources() -> None:
    """The full ten-function suite passes at every source coordinate."""
    tol = 1e-3
    for y1 in WEAK_SOURCES:
        suite = weak_test_suite(y1)
        assert len(suite) >= 10
        for phi in suite:
            expected = float(phi.value(0.0, y1, 0.0))
            assert weak_apply(y1, phi, tol=tol) == pytest.approx(expected, abs=5 * tol)
