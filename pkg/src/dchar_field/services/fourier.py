"""Spatial Fourier transform of the kernel, its decay bounds and Laplace-side checks.

With y₁ = x₁ + 2λτ and y₂ = x₂ + √h·sinθ the transform reduces to

    FΓ(τ, x₁, x₂, ξ) = τ·e^{−ix₂ξ₂ − ix₁ξ₁} ∫₀¹ e^{−2iλτξ₁} J₀(ξ₂ h̃(τ, x₁, λ)) dλ,

    h̃(τ, x₁, λ) = 2τ√(λ(1−λ))·√((4τ²λ² + 6τx₁λ + 3x₁²)/3).

The λ integrals below run in v with λ = sin²(πv/2): h̃ becomes τ·sin(πv)·√(·), whose
v-derivative stays bounded, so uniform panels resolve the oscillation at both ends.
"""

from __future__ import annotations

import math
import tomllib
from dataclasses import asdict, dataclass
from pathlib import Path
from typing import Any

import numpy as np
from dynaconf import loaders
from loguru import logger
from numpy.typing import ArrayLike, NDArray
from scipy.stats import linregress

from dchar_field.config import settings
from dchar_field.utils.bessel import bessel_j0
from dchar_field.utils.errors import DomainError, PreconditionFailed
from dchar_field.utils.quadrature import (
    adaptive_gauss_kronrod,
    mapped_rule,
    panel_rule,
    refine_until_stable,
)

FloatArray = NDArray[np.float64]
ComplexArray = NDArray[np.complex128]

_PROFILE_SAMPLES = 1025
# complex entries per chunk of the batched λ rule
_BATCH_CHUNK = 4_000_000


@dataclass(frozen=True)
class Frequency:
    """Spatial frequency ξ = (ξ₁, ξ₂)."""

    xi1: float
    xi2: float

    def __post_init__(self) -> None:
        if not (math.isfinite(self.xi1) and math.isfinite(self.xi2)):
            raise DomainError(f"frequency must be finite, got {self}")

    @property
    def norm(self) -> float:
        """Euclidean norm |ξ|."""
        return math.hypot(self.xi1, self.xi2)


@dataclass(frozen=True)
class LaplaceFrequency:
    """Complex Fourier–Laplace variable ξ₀ = re + i·im with im < 0."""

    re: float
    im: float

    def __post_init__(self) -> None:
        if not (math.isfinite(self.re) and math.isfinite(self.im)):
            raise DomainError(f"Laplace frequency must be finite, got {self}")
        if self.im >= 0.0:
            raise DomainError(f"Laplace frequency needs Im(ξ₀) < 0, got {self.im}")

    @property
    def value(self) -> complex:
        """ξ₀ as a Python complex."""
        return complex(self.re, self.im)


# --------------------------------------------------------------------------- h̃


def h_tilde_values(tau: float, x1: float, lam: ArrayLike) -> FloatArray:
    """Vectorized h̃(τ, x₁, λ) without argument checks."""
    lam_a = np.asarray(lam, dtype=float)
    quad = (4.0 * tau * tau * lam_a * lam_a + 6.0 * tau * x1 * lam_a + 3.0 * x1 * x1) / 3.0
    core = np.clip(lam_a * (1.0 - lam_a), 0.0, None)
    return 2.0 * tau * np.sqrt(core) * np.sqrt(np.clip(quad, 0.0, None))


def h_tilde(tau: float, x1: float, lam: float) -> float:
    """h̃(τ, x₁, λ); vanishes at λ ∈ {0, 1}.

    Raises:
        DomainError: If λ ∉ [0, 1] or τ ≤ 0.
    """
    if tau <= 0.0:
        raise DomainError(f"tau must be positive, got {tau}")
    if not 0.0 <= lam <= 1.0:
        raise DomainError(f"lambda must lie in [0, 1], got {lam}")
    return float(h_tilde_values(tau, x1, lam))


def _lambda_map(v: FloatArray) -> tuple[FloatArray, FloatArray]:
    """λ = sin²(πv/2) and dλ/dv."""
    return np.sin(0.5 * np.pi * v) ** 2, 0.5 * np.pi * np.sin(np.pi * v)


def h_tilde_variation(tau: float, x1: float) -> float:
    """Total variation of λ ↦ h̃(τ, x₁, λ) on [0, 1]."""
    v = np.linspace(0.0, 1.0, _PROFILE_SAMPLES)
    return float(np.sum(np.abs(np.diff(h_tilde_values(tau, x1, _lambda_map(v)[0])))))


def _phase_rate(tau: float, x1: float, xi1: float, xi2: float) -> float:
    """Bound on the phase speed (radians per unit v) of the λ integrand."""
    v = np.linspace(0.0, 1.0, _PROFILE_SAMPLES)
    ht = h_tilde_values(tau, x1, _lambda_map(v)[0])
    slope = float(np.max(np.abs(np.diff(ht)))) * (_PROFILE_SAMPLES - 1)
    return math.pi * tau * abs(xi1) + abs(xi2) * slope


def _panels_for(rate: float) -> int:
    return int(math.ceil(rate / float(settings.fourier.panel_phase))) + 1


# ------------------------------------------------------------------ transforms


def fourier_gamma(
    tau: float,
    x1: float,
    x2: float,
    xi: Frequency,
    tol: float | None = None,
    max_evals: int | None = None,
) -> complex:
    """FΓ(τ, x₁, x₂, ξ) through the Bessel-integral representation.

    Args:
        tau: Elapsed time τ > 0.
        x1: First spatial coordinate.
        x2: Second spatial coordinate.
        xi: Frequency.
        tol: Absolute tolerance (defaults to ``settings.fourier.tol``).
        max_evals: Evaluation budget.

    Returns:
        The complex transform; its modulus never exceeds τ.

    Raises:
        DomainError: If τ ≤ 0.
        QuadratureNoConvergence: If the adaptive rule runs out of budget.
    """
    if tau <= 0.0:
        raise DomainError(f"tau must be positive, got {tau}")
    tol = float(tol if tol is not None else settings.fourier.tol)

    def integrand(v: FloatArray) -> ComplexArray:
        lam, dlam = _lambda_map(v)
        j0 = bessel_j0(xi.xi2 * h_tilde_values(tau, x1, lam))
        return np.exp(-2j * tau * xi.xi1 * lam) * j0 * dlam

    result = adaptive_gauss_kronrod(
        integrand,
        0.0,
        1.0,
        tol=tol / tau,
        initial_panels=_panels_for(_phase_rate(tau, x1, xi.xi1, xi.xi2)),
        max_evals=max_evals,
        label="fourier_gamma",
    )
    value = tau * np.exp(-1j * (x2 * xi.xi2 + x1 * xi.xi1)) * result.value
    assert abs(value) <= tau * (1.0 + 1e-9) + tol, "|FΓ| exceeded τ"
    return complex(value)


def fourier_gamma_direct(
    tau: float,
    x1: float,
    x2: float,
    xi: Frequency,
    tol: float | None = None,
    max_evals: int | None = None,
) -> complex:
    """FΓ from the (λ, θ) double integral, without any Bessel function.

    FΓ = (τ/π)·e^{−ix₂ξ₂ − ix₁ξ₁} ∫₀¹ dλ e^{−2iλτξ₁} ∫_{−π/2}^{π/2} e^{−i h̃ sinθ ξ₂} dθ,
    by tensor Gauss–Legendre panels doubled until two passes agree. Used as an
    independent oracle for ``fourier_gamma``.

    Raises:
        DomainError: If τ ≤ 0.
        QuadratureNoConvergence: If refinement exceeds the budget.
    """
    if tau <= 0.0:
        raise DomainError(f"tau must be positive, got {tau}")
    tol = float(tol if tol is not None else settings.fourier.tol)
    order = int(settings.quadrature.gauss_order)
    ht_max = float(np.max(h_tilde_values(tau, x1, np.linspace(0.0, 1.0, _PROFILE_SAMPLES))))
    phase = 2.0 * tau * abs(xi.xi1) + 2.0 * abs(xi.xi2) * ht_max
    start = max(2, _panels_for(phase))

    def evaluate(panels: int) -> tuple[complex, int]:
        lam, wl = panel_rule(np.linspace(0.0, 1.0, panels + 1), order)
        th, wth = mapped_rule(-0.5 * math.pi, 0.5 * math.pi, panels, order)
        ht = h_tilde_values(tau, x1, lam)
        inner = np.exp(-1j * xi.xi2 * ht[:, None] * np.sin(th)[None, :]) @ wth
        outer = np.sum(wl * np.exp(-2j * tau * xi.xi1 * lam) * inner)
        return complex(outer), lam.size * th.size

    value, _, _ = refine_until_stable(
        evaluate,
        tol=tol * math.pi / tau,
        start=start,
        max_evals=max_evals,
        cost_growth=4.0,
        label="fourier_gamma_direct",
    )
    return complex(tau / math.pi * np.exp(-1j * (x2 * xi.xi2 + x1 * xi.xi1)) * value)


def fourier_gamma_table(
    tau: float,
    x1: float,
    xi1: ArrayLike,
    xi2: ArrayLike,
    tol: float | None = None,
    max_evals: int | None = None,
) -> ComplexArray:
    """Phase-stripped transform τ∫₀¹e^{−2iλτξ₁}J₀(ξ₂h̃)dλ on a tensor grid of frequencies.

    Multiply by e^{−ix₁ξ₁ − ix₂ξ₂} to obtain FΓ. All frequencies share one composite
    λ rule, so the table is a single matrix product; the rule is doubled until
    two passes agree.

    Args:
        tau: Elapsed time τ > 0.
        x1: First spatial coordinate.
        xi1: ξ₁ nodes, shape (n1,).
        xi2: ξ₂ nodes, shape (n2,).
        tol: Absolute tolerance (defaults to ``settings.fourier.tol``).
        max_evals: Budget counted in λ-node × frequency evaluations.

    Returns:
        Complex array of shape (n1, n2).
    """
    if tau <= 0.0:
        raise DomainError(f"tau must be positive, got {tau}")
    tol = float(tol if tol is not None else settings.fourier.tol)
    budget = max_evals if max_evals is not None else int(settings.fourier.table_max_evals)
    k1 = np.atleast_1d(np.asarray(xi1, dtype=float))
    k2 = np.atleast_1d(np.asarray(xi2, dtype=float))
    order = int(settings.quadrature.gauss_order)
    rate = _phase_rate(tau, x1, float(np.max(np.abs(k1))), float(np.max(np.abs(k2))))

    def evaluate(panels: int) -> tuple[ComplexArray, int]:
        v, w = panel_rule(np.linspace(0.0, 1.0, panels + 1), order)
        lam, dlam = _lambda_map(v)
        phases = np.exp(-2j * tau * np.outer(k1, lam)) * (w * dlam)[None, :]
        bessel = bessel_j0(np.outer(h_tilde_values(tau, x1, lam), k2))
        table = (phases.real @ bessel) + 1j * (phases.imag @ bessel)
        return tau * table, v.size * (k1.size + k2.size)

    table, _, _ = refine_until_stable(
        evaluate,
        tol=tol,
        start=max(1, _panels_for(rate) // 2),
        max_evals=budget,
        label="fourier_gamma_table",
    )
    return np.asarray(table, dtype=np.complex128)


def fourier_gamma_batch(
    tau: float,
    x1: float,
    xi1: ArrayLike,
    xi2: ArrayLike,
    tol: float | None = None,
    max_evals: int | None = None,
) -> ComplexArray:
    """Phase-stripped transform at paired frequencies (ξ₁[i], ξ₂[i]).

    Same shared-rule scheme as ``fourier_gamma_table``, but for a list of points
    rather than a tensor grid; the λ nodes are processed in chunks to bound memory.

    Returns:
        Complex array with the broadcast shape of ``xi1`` and ``xi2``.
    """
    if tau <= 0.0:
        raise DomainError(f"tau must be positive, got {tau}")
    tol = float(tol if tol is not None else settings.fourier.tol)
    budget = max_evals if max_evals is not None else int(settings.fourier.table_max_evals)
    k1, k2 = np.broadcast_arrays(np.asarray(xi1, dtype=float), np.asarray(xi2, dtype=float))
    shape = k1.shape
    k1, k2 = k1.ravel(), k2.ravel()
    if k1.size == 0:
        return np.zeros(shape, dtype=np.complex128)
    order = int(settings.quadrature.gauss_order)
    rate = _phase_rate(tau, x1, float(np.max(np.abs(k1))), float(np.max(np.abs(k2))))
    chunk = max(order, _BATCH_CHUNK // k1.size // order * order)

    def evaluate(panels: int) -> tuple[ComplexArray, int]:
        v, w = panel_rule(np.linspace(0.0, 1.0, panels + 1), order)
        lam, dlam = _lambda_map(v)
        ht = h_tilde_values(tau, x1, lam)
        weights = w * dlam
        total = np.zeros(k1.size, dtype=np.complex128)
        for start in range(0, v.size, chunk):
            sl = slice(start, start + chunk)
            phases = np.exp(-2j * tau * np.outer(k1, lam[sl]))
            bessel = bessel_j0(np.outer(k2, ht[sl]))
            total += (phases * bessel) @ weights[sl]
        return tau * total, v.size * k1.size

    values, _, _ = refine_until_stable(
        evaluate,
        tol=tol,
        start=max(1, _panels_for(rate) // 2),
        max_evals=budget,
        label="fourier_gamma_batch",
    )
    return np.asarray(values, dtype=np.complex128).reshape(shape)


# ---------------------------------------------------------------------- bounds


@dataclass(frozen=True)
class BoundConstants:
    """Calibrated constants of the three decay bounds.

    Attributes:
        c_beta: C in |FΓ| ≤ C/|ξ₂|^{1/2}.
        c4: C₄ in |FΓ| ≤ C₄/|ξ₁| + K(τ,x₁)|ξ₂|/|ξ₁|.
        k_lin: (a, b) with K(τ, x₁) = a·τ + b·|x₁|.
        kappa_lin: (a, b, c) with κ̃(τ, x₁) = (a·τ + b·|x₁| + c)².
        grid_hash: Digest of the calibration grid the constants were fitted on.
    """

    c_beta: float
    c4: float
    k_lin: tuple[float, float]
    kappa_lin: tuple[float, float, float]
    grid_hash: str = ""

    def __post_init__(self) -> None:
        if self.c_beta <= 0.0 or self.c4 <= 0.0:
            raise DomainError("bound constants c_beta and c4 must be positive")
        if min(self.k_lin) < 0.0 or min(self.kappa_lin) < 0.0 or sum(self.kappa_lin) <= 0.0:
            raise DomainError("affine envelope coefficients must be nonnegative, κ̃ nonzero")

    def k(self, tau: float, x1: float) -> float:
        """K(τ, x₁)."""
        return self.k_lin[0] * tau + self.k_lin[1] * abs(x1)

    def kappa_tilde(self, tau: float, x1: float) -> float:
        """κ̃(τ, x₁), the squared affine envelope."""
        a, b, c = self.kappa_lin
        return (a * tau + b * abs(x1) + c) ** 2


def save_bound_constants(path: Path, constants: BoundConstants) -> Path:
    """Writes the constants (and their grid hash) as a TOML file."""
    path.parent.mkdir(parents=True, exist_ok=True)
    data = asdict(constants)
    data["k_lin"] = list(constants.k_lin)
    data["kappa_lin"] = list(constants.kappa_lin)
    loaders.write(str(path), {"bound_constants": data})
    logger.success(f"✅ Bound constants saved to {path}")
    return path


def load_bound_constants(path: Path | None = None) -> BoundConstants:
    """Reads constants written by ``save_bound_constants``.

    Args:
        path: TOML file; defaults to ``settings.calibration.constants_file``.

    Raises:
        PreconditionFailed: If the file does not exist yet.
    """
    target = Path(path or settings.calibration.constants_file)
    if not target.exists():
        raise PreconditionFailed(
            f"no bound constants at {target}; run `dchar-field bounds --calibrate` first"
        )
    with target.open("rb") as fh:
        raw: dict[str, Any] = tomllib.load(fh)["bound_constants"]
    return BoundConstants(
        c_beta=float(raw["c_beta"]),
        c4=float(raw["c4"]),
        k_lin=(float(raw["k_lin"][0]), float(raw["k_lin"][1])),
        kappa_lin=(
            float(raw["kappa_lin"][0]),
            float(raw["kappa_lin"][1]),
            float(raw["kappa_lin"][2]),
        ),
        grid_hash=str(raw.get("grid_hash", "")),
    )


def bound_xi2(
    tau: float, x1: float, xi: Frequency, constants: BoundConstants | None = None
) -> float:
    """C/|ξ₂|^{1/2}.

    Raises:
        DomainError: If ξ₂ = 0 or τ ≤ 0.
    """
    if tau <= 0.0:
        raise DomainError(f"tau must be positive, got {tau}")
    if xi.xi2 == 0.0:
        raise DomainError("bound_xi2 is undefined on ξ₂ = 0")
    c = constants or load_bound_constants()
    return c.c_beta / math.sqrt(abs(xi.xi2))


def bound_xi1(
    tau: float, x1: float, xi: Frequency, constants: BoundConstants | None = None
) -> float:
    """C₄/|ξ₁| + K(τ, x₁)·|ξ₂|/|ξ₁|.

    Raises:
        DomainError: If ξ₁ = 0 or τ ≤ 0.
    """
    if tau <= 0.0:
        raise DomainError(f"tau must be positive, got {tau}")
    if xi.xi1 == 0.0:
        raise DomainError("bound_xi1 is undefined on ξ₁ = 0")
    c = constants or load_bound_constants()
    return (c.c4 + c.k(tau, x1) * abs(xi.xi2)) / abs(xi.xi1)


def bound_global(
    tau: float, x1: float, xi: Frequency, constants: BoundConstants | None = None
) -> float:
    """√κ̃(τ, x₁)/(1 + |ξ|^{2/3})^{1/2}, i.e. (1 + |ξ|^{2/3})|FΓ|² ≤ κ̃.

    Raises:
        DomainError: If τ ≤ 0.
    """
    if tau <= 0.0:
        raise DomainError(f"tau must be positive, got {tau}")
    c = constants or load_bound_constants()
    return math.sqrt(c.kappa_tilde(tau, x1) / (1.0 + xi.norm ** (2.0 / 3.0)))


def fit_decay_exponent(radii: ArrayLike, moduli: ArrayLike, windows: int = 8) -> float:
    """Log–log slope of the local-maximum envelope of an oscillating modulus.

    The sampled radius range is cut into ``windows`` log-spaced windows; the largest
    modulus in each window is kept and a straight line is fitted through them.
    """
    r = np.asarray(radii, dtype=float)
    m = np.asarray(moduli, dtype=float)
    edges = np.geomspace(r.min(), r.max() * (1.0 + 1e-12), windows + 1)
    xs, ys = [], []
    for lo, hi in zip(edges[:-1], edges[1:], strict=True):
        sel = (r >= lo) & (r < hi) & (m > 0.0)
        if np.any(sel):
            i = int(np.argmax(np.where(sel, m, -np.inf)))
            xs.append(math.log(r[i]))
            ys.append(math.log(m[i]))
    if len(xs) < 3:
        raise DomainError("not enough populated windows to fit a decay exponent")
    return float(linregress(xs, ys).slope)


# --------------------------------------------------------------- Laplace side


def hat_gamma_dagger(xi0: LaplaceFrequency, x1: float, y1: float, xi2: float) -> complex:
    """Fourier–Laplace transform of Γ in (t, x₂), as a function of x₁.

    Γ̂† = −(i/(2ξ₀))·exp(i(ξ₀/2)(x₁ − y₁) − i(ξ₂²/(6ξ₀))(x₁³ − y₁³))·H(y₁ − x₁), with
    H(0) = 1 so the value at x₁ = y₁ is the left limit −i/(2ξ₀).
    """
    if x1 > y1:
        return 0j
    z0 = xi0.value
    exponent = 1j * (z0 / 2.0) * (x1 - y1) - 1j * (xi2 * xi2 / (6.0 * z0)) * (x1**3 - y1**3)
    return complex(-(1j / (2.0 * z0)) * np.exp(exponent))


def laplace_chi_identity(
    xi0: LaplaceFrequency, tol: float | None = None
) -> tuple[complex, complex]:
    """Both sides of ∫₀^∞ e^{−iξ₀t}(πt)^{−1/2} dt = (iξ₀)^{−1/2}.

    With t = s² the left side is (2/√π)∫₀^∞ e^{−iξ₀s²} ds; it is truncated at S with
    |tail| ≤ e^{−cS²}/(2cS) < tol/10, c = −Im ξ₀.

    Returns:
        (quadrature value of the left side, principal branch of (iξ₀)^{−1/2}).
    """
    tol = float(tol if tol is not None else settings.fourier.tol)
    z0 = xi0.value
    c = -xi0.im
    s_max = 1.0
    while math.exp(-c * s_max * s_max) / (2.0 * c * s_max) >= tol / 10.0:
        s_max *= 1.5

    def integrand(s: FloatArray) -> ComplexArray:
        return np.exp(-1j * z0 * s * s)

    rate = abs(xi0.re) * s_max * s_max
    result = adaptive_gauss_kronrod(
        integrand,
        0.0,
        s_max,
        tol=tol * math.sqrt(math.pi) / 4.0,
        initial_panels=_panels_for(rate),
        label="laplace_chi_identity",
    )
    left = 2.0 / math.sqrt(math.pi) * result.value
    right = complex(np.power(1j * z0, -0.5))
    return complex(left), right
