"""Closed-form fundamental solution of L = ∂t² − 2∂t∂x₁ − x₁²∂x₂² and its weak-form oracle.

Γ(t, x₁, y₁, x₂) = √3/(2π) · [(y₁³ − x₁³)(2t + x₁ − y₁) − 3x₂²]^{−1/2} on the open set
where the bracket is positive (with t > 0, y₁ > x₁), and 0 elsewhere. It solves
LΓ = δ(t) δ(x₁ − y₁) δ(x₂) in the sense of distributions.
"""

from __future__ import annotations

import math
from dataclasses import dataclass, field

import numpy as np
from loguru import logger
from numpy.typing import ArrayLike, NDArray

from dchar_field.config import settings
from dchar_field.utils.errors import DomainError
from dchar_field.utils.quadrature import (
    adaptive_gauss_kronrod,
    gauss_legendre,
    mapped_rule,
    panel_rule,
    refine_axes_until_stable,
)

FloatArray = NDArray[np.float64]

GAMMA_CONSTANT = math.sqrt(3.0) / (2.0 * math.pi)

# below this value of 1 − s² the bump and its derivatives are numerically zero
_BUMP_EDGE = 2e-3

# t nodes per block in weak_apply; bounds the size of the (t, λ, θ) grid in memory
_T_BLOCK = 64


@dataclass(frozen=True)
class KernelPoint:
    """Evaluation point (t, x₁, y₁, x₂) of Γ; y₁ is the source coordinate."""

    t: float
    x1: float
    y1: float
    x2: float

    def __post_init__(self) -> None:
        if not all(math.isfinite(v) for v in (self.t, self.x1, self.y1, self.x2)):
            raise DomainError(f"KernelPoint fields must be finite, got {self}")


def support_radicand(t: ArrayLike, x1: ArrayLike, y1: ArrayLike, x2: ArrayLike) -> FloatArray:
    """(y₁³ − x₁³)(2t + x₁ − y₁) − 3x₂², vectorized."""
    t_a, x1_a, y1_a, x2_a = (np.asarray(v, dtype=float) for v in (t, x1, y1, x2))
    return (y1_a**3 - x1_a**3) * (2.0 * t_a + x1_a - y1_a) - 3.0 * x2_a**2


def support_half_width_sq(t: ArrayLike, x1: ArrayLike, y1: ArrayLike) -> FloatArray:
    """h = (2t + x₁ − y₁)(y₁³ − x₁³)/3, the squared half-width of the support in x₂."""
    t_a, x1_a, y1_a = (np.asarray(v, dtype=float) for v in (t, x1, y1))
    return (2.0 * t_a + x1_a - y1_a) * (y1_a**3 - x1_a**3) / 3.0


def support_mask(
    t: ArrayLike, x1: ArrayLike, y1: ArrayLike, x2: ArrayLike
) -> NDArray[np.bool_]:
    """Vectorized support predicate (open set, boundary excluded)."""
    t_a, x1_a, y1_a = (np.asarray(v, dtype=float) for v in (t, x1, y1))
    inside = (t_a > 0.0) & (y1_a > x1_a) & (support_radicand(t, x1, y1, x2) > 0.0)
    # a positive radicand with y₁ > x₁ already forces y₁ < x₁ + 2t; kept explicit
    return inside & (y1_a < x1_a + 2.0 * t_a)


def gamma_values(t: ArrayLike, x1: ArrayLike, y1: ArrayLike, x2: ArrayLike) -> FloatArray:
    """Vectorized Γ; zero outside the open support and on its boundary."""
    rad = support_radicand(t, x1, y1, x2)
    mask = support_mask(t, x1, y1, x2)
    out = np.zeros(np.broadcast(rad, mask).shape)
    out[mask] = GAMMA_CONSTANT / np.sqrt(np.broadcast_to(rad, out.shape)[mask])
    return out


def in_support(p: KernelPoint) -> bool:
    """True iff t > 0, y₁ > x₁ and (y₁³ − x₁³)(2t + x₁ − y₁) − 3x₂² > 0."""
    return bool(support_mask(p.t, p.x1, p.y1, p.x2))


def gamma_eval(p: KernelPoint) -> float:
    """Γ at a point; 0 outside the support and where the radicand vanishes."""
    return float(gamma_values(p.t, p.x1, p.y1, p.x2))


@dataclass(frozen=True)
class BumpProfile:
    """One-dimensional profile ψ(s) = P(s)·exp(−1/(1 − s²)) on |s| < 1, zero elsewhere.

    Attributes:
        coefficients: Polynomial coefficients of P in increasing degree.
    """

    coefficients: tuple[float, ...] = (1.0,)

    def derivatives(self, s: ArrayLike) -> tuple[FloatArray, FloatArray, FloatArray]:
        """Returns ψ, ψ', ψ'' at ``s`` (exact, no finite differences)."""
        s_a = np.asarray(s, dtype=float)
        u = 1.0 - s_a * s_a
        inside = u > _BUMP_EDGE
        uu = np.where(inside, u, 1.0)
        bump = np.where(inside, np.exp(-1.0 / uu), 0.0)
        g = -2.0 * s_a / uu**2
        dg = -2.0 / uu**2 - 8.0 * s_a * s_a / uu**3
        b0, b1, b2 = bump, bump * g, bump * (g * g + dg)
        poly = np.polynomial.Polynomial(self.coefficients)
        p0, p1, p2 = poly(s_a), poly.deriv(1)(s_a), poly.deriv(2)(s_a)
        return p0 * b0, p1 * b0 + p0 * b1, p2 * b0 + 2.0 * p1 * b1 + p0 * b2


@dataclass(frozen=True)
class TestFunction:
    """Product bump φ(t, x₁, x₂) = A·ψ_t(s_t)·ψ_1(s_1)·ψ_2(s_2), s = (coord − center)/radius.

    Attributes:
        center: (t, x₁, x₂) center of the support box.
        radius: Positive half-widths of the support box per axis.
        amplitude: Overall factor A.
        profiles: One profile per axis (t, x₁, x₂).
    """

    __test__ = False

    center: tuple[float, float, float]
    radius: tuple[float, float, float]
    amplitude: float = 1.0
    profiles: tuple[BumpProfile, BumpProfile, BumpProfile] = field(
        default=(BumpProfile(), BumpProfile(), BumpProfile())
    )

    def __post_init__(self) -> None:
        if len(self.center) != 3 or len(self.radius) != 3:
            raise DomainError("TestFunction needs three center and three radius entries")
        if not all(math.isfinite(c) for c in self.center):
            raise DomainError(f"TestFunction center must be finite, got {self.center}")
        if not all(r > 0.0 and math.isfinite(r) for r in self.radius):
            raise DomainError(f"TestFunction radii must be positive, got {self.radius}")

    def support_box(self) -> tuple[tuple[float, float], ...]:
        """Closed box (per axis lower/upper bound) outside which φ vanishes."""
        return tuple((c - r, c + r) for c, r in zip(self.center, self.radius, strict=True))

    def _axes(
        self, t: ArrayLike, x1: ArrayLike, x2: ArrayLike
    ) -> list[tuple[FloatArray, FloatArray, FloatArray]]:
        axes = []
        for coord, c, r, prof in zip(
            (t, x1, x2), self.center, self.radius, self.profiles, strict=True
        ):
            v, d1, d2 = prof.derivatives((np.asarray(coord, dtype=float) - c) / r)
            axes.append((v, d1 / r, d2 / (r * r)))
        return axes

    def value(self, t: ArrayLike, x1: ArrayLike, x2: ArrayLike) -> FloatArray:
        """φ at the given coordinates (broadcast)."""
        (pt, _, _), (p1, _, _), (p2, _, _) = self._axes(t, x1, x2)
        return self.amplitude * pt * p1 * p2

    def lop(self, t: ArrayLike, x1: ArrayLike, x2: ArrayLike) -> FloatArray:
        """Lφ = ∂t²φ − 2∂t∂x₁φ − x₁²∂x₂²φ from the analytic profile derivatives."""
        (pt, dt, ddt), (p1, d1, _), (p2, _, dd2) = self._axes(t, x1, x2)
        x1_a = np.asarray(x1, dtype=float)
        return self.amplitude * (
            ddt * p1 * p2 - 2.0 * dt * d1 * p2 - x1_a * x1_a * pt * p1 * dd2
        )

    def with_value_at(self, point: tuple[float, float, float], value: float = 1.0) -> TestFunction:
        """Rescales the amplitude so that φ(point) = value.

        Raises:
            DomainError: If ``point`` is outside the support.
        """
        unit = TestFunction(self.center, self.radius, 1.0, self.profiles)
        current = float(unit.value(*point))
        if current == 0.0:
            raise DomainError(f"cannot normalize at {point}: outside the support of φ")
        return TestFunction(self.center, self.radius, value / current, self.profiles)


def lop_apply(phi: TestFunction, q: tuple[float, float, float]) -> float:
    """Lφ at the spacetime point ``q`` = (t, x₁, x₂); zero outside supp φ."""
    return float(phi.lop(*q))


def weak_apply(
    y1: float,
    phi: TestFunction,
    tol: float | None = None,
    max_evals: int | None = None,
) -> float:
    """Quadrature of ⟨Γ, Lφ⟩ = ∫ Γ(t, x₁, y₁, x₂)·Lφ(t, x₁, x₂) dt dx₁ dx₂.

    L is formally self-adjoint (L* = L: the mixed term −2∂t∂x₁ and the x₂ term with
    coefficient x₁² both transpose to themselves), so ⟨Γ, Lφ⟩ = ⟨LΓ, φ⟩ = φ(0, y₁, 0).

    The integral runs in coordinates x₁ = y₁ − 2λt, x₂ = √h·sinθ in which
    Γ dx₁ dx₂ = (t/π) dλ dθ, leaving the bounded integrand
    (1/π)∫ t dt ∫₀¹ dλ ∫_{−π/2}^{π/2} dθ Lφ(t, y₁ − 2λt, √h sinθ).
    The λ and θ ranges are clipped to the support box of φ; tensor Gauss–Legendre
    panels are refined one axis at a time until no axis moves the result by more
    than ``tol``.

    Args:
        y1: Source coordinate.
        phi: Test function.
        tol: Absolute tolerance (defaults to ``settings.kernel.tol``).
        max_evals: Evaluation budget (defaults to ``settings.kernel.max_evals``).

    Returns:
        The quadrature value, which should equal φ(0, y₁, 0).

    Raises:
        QuadratureNoConvergence: If refinement exceeds the budget.
    """
    tol = float(tol if tol is not None else settings.kernel.tol)
    (t_lo, t_hi), (a1, b1), (a2, b2) = phi.support_box()
    t_lo = max(t_lo, 0.0)
    if t_hi <= t_lo:
        return 0.0
    order = int(settings.kernel.panel_order)

    def evaluate(res: tuple[int, ...]) -> tuple[float, int]:
        n_t, n_lam, n_th = res
        t_all, wt_all = panel_rule(np.linspace(t_lo, t_hi, n_t + 1), order)
        total = 0.0
        for start in range(0, t_all.size, _T_BLOCK):
            t = t_all[start : start + _T_BLOCK]
            wt = wt_all[start : start + _T_BLOCK]
            lam_lo = np.clip((y1 - b1) / (2.0 * t), 0.0, 1.0)
            lam_hi = np.clip((y1 - a1) / (2.0 * t), 0.0, 1.0)
            lam, wl = mapped_rule(lam_lo, lam_hi, n_lam, order)
            tt = t[:, None]
            x1 = y1 - 2.0 * lam * tt
            root = np.sqrt(np.clip(support_half_width_sq(tt, x1, y1), 0.0, None))
            safe = np.where(root > 0.0, root, 1.0)
            th_lo = np.where(root > 0.0, np.arcsin(np.clip(a2 / safe, -1.0, 1.0)), 0.0)
            th_hi = np.where(root > 0.0, np.arcsin(np.clip(b2 / safe, -1.0, 1.0)), 0.0)
            th, wth = mapped_rule(th_lo, th_hi, n_th, order)
            x2 = root[..., None] * np.sin(th)
            lphi = phi.lop(tt[..., None], x1[..., None], x2)
            weights = (wt * t)[:, None, None] * wl[..., None] * wth
            total += float(np.sum(weights * lphi))
        return total / math.pi, t_all.size * n_lam * n_th * order * order

    start_panels = int(settings.kernel.start_panels)
    value, err, evals = refine_axes_until_stable(
        evaluate,
        tol=tol,
        start=(start_panels,) * 3,
        max_evals=max_evals if max_evals is not None else int(settings.kernel.max_evals),
        label="weak_apply",
    )
    logger.debug(f"📊 weak_apply(y1={y1}) = {value:.8f} (±{err:.1e}, {evals} evals)")
    return float(value)


def kernel_mass(tau: float, x1: float, x2: float, tol: float | None = None) -> float:
    """∫∫ Γ(τ, x₁, y₁, x₂ − y₂) dy₁ dy₂ from the closed form; equals τ.

    The y₁ integral is adaptive over (x₁, x₁ + 2τ); the y₂ integral uses
    y₂ = x₂ + √h·sinθ, whose Jacobian √h·cosθ cancels the square-root blow-up.

    Args:
        tau: Elapsed time, positive.
        x1: First spatial coordinate.
        x2: Second spatial coordinate.
        tol: Absolute tolerance (defaults to ``settings.kernel.mass_tol``).

    Returns:
        The numerical mass.

    Raises:
        DomainError: If ``tau`` is not positive.
    """
    if tau <= 0.0:
        raise DomainError(f"tau must be positive, got {tau}")
    tol = float(tol if tol is not None else settings.kernel.mass_tol)
    nodes, weights = gauss_legendre(16)
    theta = 0.5 * math.pi * nodes
    w_theta = 0.5 * math.pi * weights

    def inner(y1: FloatArray) -> FloatArray:
        root = np.sqrt(np.clip(support_half_width_sq(tau, x1, y1), 0.0, None))[:, None]
        y2 = x2 + root * np.sin(theta)
        vals = gamma_values(tau, x1, y1[:, None], x2 - y2) * root * np.cos(theta)
        return vals @ w_theta

    result = adaptive_gauss_kronrod(inner, x1, x1 + 2.0 * tau, tol=tol, label="kernel_mass")
    return result.value.real
