"""Calibration of the decay-bound constants and the numerical sweeps that test them.

The constants of the three bounds are existence constants in the analysis; here
they are measured. |FΓ| is swept over a grid of (τ, x₁) nodes and polar frequency
samples, then:

* C (ξ₂ regime) is the largest |FΓ|·|ξ₂|^{1/2} seen, times the safety factor;
* C₄ = 1 exactly (integration by parts boundary terms, J₀(0) = 1) and
  K(τ, x₁) = (max|J₁|/2)·TV(h̃) is fitted with an affine model a·τ + b·|x₁|;
* κ̃ = (a·τ + b·|x₁| + c)² is fitted by linear programming to the largest
  (1 + |ξ|^{2/3})|FΓ|² seen at each node.

|FΓ| is even in ξ₁ and in ξ₂ separately, so only the first quadrant is swept.
"""

from __future__ import annotations

import hashlib
import json
import math
from dataclasses import asdict, dataclass
from pathlib import Path

import numpy as np
import pandas as pd
from loguru import logger
from numpy.typing import NDArray
from scipy.optimize import linprog
from tqdm import tqdm

from dchar_field.config import settings
from dchar_field.services.fourier import (
    BoundConstants,
    Frequency,
    bound_global,
    bound_xi1,
    bound_xi2,
    fourier_gamma,
    fourier_gamma_batch,
    h_tilde_variation,
    save_bound_constants,
)
from dchar_field.utils.bessel import J1_MAX
from dchar_field.utils.errors import ValidationError
from dchar_field.utils.metrics import monitor_step

FloatArray = NDArray[np.float64]


@dataclass(frozen=True)
class CalibrationGrid:
    """Nodes and frequency samples of the calibration sweep."""

    taus: tuple[float, ...]
    x1s: tuple[float, ...]
    radii: tuple[float, ...]
    angles: tuple[float, ...]

    def __post_init__(self) -> None:
        if not self.taus or min(self.taus) <= 0.0:
            raise ValidationError("calibration taus must be positive and non-empty")
        if not self.x1s or not self.radii or not self.angles:
            raise ValidationError("calibration grid axes must be non-empty")

    @classmethod
    def from_settings(cls) -> CalibrationGrid:
        """Builds the grid from ``settings.calibration``."""
        cfg = settings.calibration
        radii = np.geomspace(float(cfg.radius_min), float(cfg.radius_max), int(cfg.n_radii))
        angles = np.linspace(0.0, 0.5 * math.pi, int(cfg.n_angles))
        return cls(
            taus=tuple(float(t) for t in cfg.taus),
            x1s=tuple(float(x) for x in cfg.x1s),
            radii=tuple(float(r) for r in radii),
            angles=tuple(float(a) for a in angles),
        )

    def digest(self) -> str:
        """SHA-256 of the canonical JSON form of the grid."""
        payload = json.dumps(asdict(self), sort_keys=True).encode()
        return hashlib.sha256(payload).hexdigest()


@dataclass(frozen=True)
class CalibrationReport:
    """Fitted constants together with the per-node sweep maxima."""

    constants: BoundConstants
    nodes: pd.DataFrame


def _fit_affine_envelope(
    taus: FloatArray, x1s: FloatArray, targets: FloatArray, intercept: bool
) -> tuple[float, ...]:
    """Smallest-sum affine function a·τ + b·|x₁| (+ c) lying above ``targets`` at the nodes."""
    columns = [taus, np.abs(x1s)] + ([np.ones_like(taus)] if intercept else [])
    design = np.column_stack(columns)
    result = linprog(
        c=design.sum(axis=0),
        A_ub=-design,
        b_ub=-targets,
        bounds=[(0.0, None)] * design.shape[1],
        method="highs",
    )
    if not result.success:
        raise ValidationError(f"affine envelope fit failed: {result.message}")
    return tuple(float(v) for v in result.x)


@monitor_step
def calibrate_bounds(
    grid: CalibrationGrid | None = None,
    tol: float | None = None,
    safety: float | None = None,
) -> CalibrationReport:
    """Sweeps |FΓ| over the calibration grid and fits the bound constants.

    Args:
        grid: Calibration grid (defaults to ``CalibrationGrid.from_settings()``).
        tol: Transform tolerance (defaults to ``settings.fourier.tol``).
        safety: Multiplicative safety factor (defaults to ``settings.calibration.safety``).

    Returns:
        The constants and one row per (τ, x₁) node with the observed maxima.
    """
    grid = grid or CalibrationGrid.from_settings()
    safety = float(safety if safety is not None else settings.calibration.safety)
    angles = np.asarray(grid.angles)
    rows = []
    nodes = [(tau, x1) for tau in grid.taus for x1 in grid.x1s]
    logger.info(
        f"🚀 Calibrating bound constants on {len(nodes)} nodes x "
        f"{len(grid.radii) * len(angles)} frequencies"
    )
    for tau, x1 in tqdm(nodes, desc="Calibration nodes", leave=False):
        kappa_peak = tau * tau
        beta_peak = 0.0
        for r in grid.radii:
            xi1, xi2 = r * np.cos(angles), r * np.sin(angles)
            modulus = np.abs(fourier_gamma_batch(tau, x1, xi1, xi2, tol=tol))
            kappa_peak = max(kappa_peak, float(np.max((1.0 + r ** (2.0 / 3.0)) * modulus**2)))
            on = xi2 > 1e-12 * r
            if np.any(on):
                beta_peak = max(beta_peak, float(np.max(modulus[on] * np.sqrt(xi2[on]))))
        rows.append(
            {
                "tau": tau,
                "x1": x1,
                "kappa_peak": kappa_peak,
                "beta_peak": beta_peak,
                "k_target": 0.5 * J1_MAX * h_tilde_variation(tau, x1),
            }
        )
    frame = pd.DataFrame(rows)
    taus = frame["tau"].to_numpy()
    x1s = frame["x1"].to_numpy()
    kappa_fit = _fit_affine_envelope(taus, x1s, np.sqrt(frame["kappa_peak"].to_numpy()), True)
    k_fit = _fit_affine_envelope(taus, x1s, frame["k_target"].to_numpy(), False)
    constants = BoundConstants(
        c_beta=safety * float(frame["beta_peak"].max()),
        c4=1.0,
        k_lin=(safety * k_fit[0], safety * k_fit[1]),
        kappa_lin=(safety * kappa_fit[0], safety * kappa_fit[1], safety * kappa_fit[2]),
        grid_hash=grid.digest(),
    )
    logger.success(
        f"📊 C={constants.c_beta:.4f}, K=({constants.k_lin[0]:.4f}, {constants.k_lin[1]:.4f}), "
        f"κ̃ coefficients={tuple(round(v, 4) for v in constants.kappa_lin)}"
    )
    return CalibrationReport(constants=constants, nodes=frame)


def calibrate_and_save(path: Path | None = None, grid: CalibrationGrid | None = None) -> Path:
    """Runs ``calibrate_bounds`` and persists the constants."""
    report = calibrate_bounds(grid)
    return save_bound_constants(Path(path or settings.calibration.constants_file), report.constants)


def dominance_sweep(
    constants: BoundConstants,
    n_points: int = 200,
    seed: int = 0,
    radius_range: tuple[float, float] = (10.0, 1e3),
    tol: float | None = None,
) -> pd.DataFrame:
    """Checks the three bounds at random (τ, x₁, ξ) with τ ∈ (0, 2], |x₁| ≤ 2.

    Frequencies have log-uniform modulus in ``radius_range`` and uniform angle. The
    ξ₂ bound is checked where |ξ₂| ≥ |ξ₁|^{2/3}, the ξ₁ bound where |ξ₂| < |ξ₁|^{2/3}.

    Returns:
        One row per point with |FΓ|, the bounds and pass flags.
    """
    rng = np.random.default_rng(seed)
    taus = 2.0 * (1.0 - rng.random(n_points))
    x1s = rng.uniform(-2.0, 2.0, n_points)
    radii = np.exp(rng.uniform(*np.log(radius_range), n_points))
    angles = rng.uniform(0.0, 2.0 * math.pi, n_points)
    rows = []
    for tau, x1, r, phi in zip(taus, x1s, radii, angles, strict=True):
        xi = Frequency(float(r * math.cos(phi)), float(r * math.sin(phi)))
        modulus = abs(fourier_gamma(float(tau), float(x1), 0.0, xi, tol=tol))
        glob = bound_global(float(tau), float(x1), xi, constants)
        regime_xi2 = abs(xi.xi2) >= abs(xi.xi1) ** (2.0 / 3.0)
        regional = (
            bound_xi2(float(tau), float(x1), xi, constants)
            if regime_xi2
            else bound_xi1(float(tau), float(x1), xi, constants)
        )
        rows.append(
            {
                "tau": float(tau),
                "x1": float(x1),
                "xi1": xi.xi1,
                "xi2": xi.xi2,
                "modulus": modulus,
                "bound_global": glob,
                "regime": "xi2" if regime_xi2 else "xi1",
                "bound_regime": regional,
                "global_ok": modulus <= glob,
                "regime_ok": modulus <= regional,
            }
        )
    frame = pd.DataFrame(rows)
    logger.info(
        f"📊 Dominance sweep: global {int(frame['global_ok'].sum())}/{n_points}, "
        f"regime {int(frame['regime_ok'].sum())}/{n_points}"
    )
    return frame


def decay_curve(
    tau: float,
    x1: float,
    path: str,
    radii: FloatArray,
    tol: float | None = None,
) -> FloatArray:
    """|FΓ| along a frequency path parameterized by |ξ|.

    Args:
        tau: Elapsed time.
        x1: First spatial coordinate.
        path: ``"xi2-axis"`` (ξ = (0, r)) or ``"matched"`` (|ξ₂| = |ξ₁|^{2/3}, |ξ| = r).
        radii: Frequency moduli.
        tol: Transform tolerance.

    Returns:
        The moduli, aligned with ``radii``.
    """
    out = np.empty(len(radii))
    for i, r in enumerate(radii):
        if path == "xi2-axis":
            xi = Frequency(0.0, float(r))
        elif path == "matched":
            xi = Frequency(*_matched_point(float(r)))
        else:
            raise ValidationError(f"unknown decay path {path!r}")
        out[i] = abs(fourier_gamma(tau, x1, 0.0, xi, tol=tol))
    return out


def _matched_point(radius: float) -> tuple[float, float]:
    """(ξ₁, ξ₂) with ξ₂ = ξ₁^{2/3} and ξ₁² + ξ₂² = radius² (Newton in ξ₁)."""
    s = radius
    for _ in range(60):
        f = s * s + s ** (4.0 / 3.0) - radius * radius
        s -= f / (2.0 * s + (4.0 / 3.0) * s ** (1.0 / 3.0))
    return s, s ** (2.0 / 3.0)
