"""Discretized noise increments: white in time, coloured in space by spectral synthesis.

On step k the increment field is

    W_k(y) = Σ_j √(dt·w_j) [A_kj cos(ξ_j·y) + B_kj sin(ξ_j·y)],

with A, B independent standard normals and w_j the μ-mass of the lattice cell
around ξ_j, so that Cov[W_k(x), W_k(y)] = dt·Σ_j w_j cos(ξ_j·(x − y)) ≈ dt·f(x − y).
The normals of step k in realization r come from a Philox stream keyed by
(seed, r, k); results never depend on the order in which steps are drawn.

The spatial grid has n_cells = refinement·n_modes cells per axis on [−X, X];
cell centres are y_c = −X + (c + ½)·δ with δ = 2X/n_cells.
"""

from __future__ import annotations

import math
from dataclasses import dataclass
from functools import lru_cache
from pathlib import Path
from typing import Any

import numpy as np
import scipy.fft
from loguru import logger
from numpy.typing import NDArray

from dchar_field.config import settings
from dchar_field.services.kernel import BumpProfile, TestFunction
from dchar_field.services.spectral import MeasureKind, SpectralMesh, SpectralMeasureSpec
from dchar_field.utils.errors import (
    GridTooCoarse,
    SupportOverflow,
    UnsupportedMeasure,
    ValidationError,
)
from dchar_field.utils.quadrature import gauss_legendre, panel_rule

FloatArray = NDArray[np.float64]
ComplexArray = NDArray[np.complex128]
IntArray = NDArray[np.int64]

NOISE_MAGIC = b"DCHN"
NOISE_FORMAT_VERSION = 1
HEADER_DTYPE = np.dtype(
    [
        ("magic", "S4"),
        ("version", "<u4"),
        ("dt", "<f8"),
        ("t_steps", "<u8"),
        ("x_extent", "<f8"),
        ("n_modes", "<u8"),
        ("refinement", "<u8"),
        ("seed", "<u8"),
        ("realization", "<u8"),
        ("n_cells", "<u8"),
    ]
)

# cells (or steps) a test-function radius must span
_MIN_CELLS_PER_RADIUS = 4


@dataclass(frozen=True)
class GridSpec:
    """Space-time grid of the discretized noise.

    Attributes:
        dt: Time step.
        t_steps: Number of steps; the horizon is dt·t_steps.
        x_extent: Half-width X of the spatial domain [−X, X]².
        n_modes: Spectral modes per axis (even).
        seed: Master seed, an unsigned 64-bit integer.
        refinement: Spatial cells per mode and axis.
    """

    dt: float
    t_steps: int
    x_extent: float
    n_modes: int
    seed: int
    refinement: int = 2

    def __post_init__(self) -> None:
        if not (self.dt > 0.0 and math.isfinite(self.dt)):
            raise ValidationError(f"dt must be positive, got {self.dt}")
        if self.t_steps < 1:
            raise ValidationError(f"t_steps must be positive, got {self.t_steps}")
        if not (self.x_extent > 0.0 and math.isfinite(self.x_extent)):
            raise ValidationError(f"x_extent must be positive, got {self.x_extent}")
        if self.n_modes < 2 or self.n_modes % 2:
            raise ValidationError(f"n_modes must be a positive even integer, got {self.n_modes}")
        if not 0 <= self.seed < 2**64:
            raise ValidationError(f"seed must be an unsigned 64-bit integer, got {self.seed}")
        if self.refinement < 1:
            raise ValidationError(f"refinement must be positive, got {self.refinement}")

    @classmethod
    def from_settings(cls, **overrides: Any) -> GridSpec:
        """Grid from ``settings.noise`` with keyword overrides (None values ignored)."""
        cfg = settings.noise
        values: dict[str, Any] = {
            "dt": float(cfg.dt),
            "t_steps": int(cfg.t_steps),
            "x_extent": float(cfg.x_extent),
            "n_modes": int(cfg.n_modes),
            "seed": int(cfg.seed),
            "refinement": int(cfg.refinement),
        }
        values.update({k: v for k, v in overrides.items() if v is not None})
        return cls(**values)

    @property
    def horizon(self) -> float:
        """dt·t_steps."""
        return self.dt * self.t_steps

    @property
    def n_cells(self) -> int:
        """Spatial cells per axis."""
        return self.refinement * self.n_modes

    @property
    def cell_size(self) -> float:
        """Side δ of a spatial cell."""
        return 2.0 * self.x_extent / self.n_cells

    @property
    def mode_spacing(self) -> float:
        """Lattice spacing π/X of the frequencies."""
        return math.pi / self.x_extent

    def cell_edges(self) -> FloatArray:
        """Cell boundaries along one axis."""
        return np.linspace(-self.x_extent, self.x_extent, self.n_cells + 1)

    def cell_centers(self) -> FloatArray:
        """Cell centres along one axis."""
        edges = self.cell_edges()
        return 0.5 * (edges[1:] + edges[:-1])

    def step_times(self) -> FloatArray:
        """Left endpoints s_k = k·dt of the time steps."""
        return self.dt * np.arange(self.t_steps)

    def describe(self) -> dict[str, Any]:
        """JSON-ready description."""
        return {
            "dt": self.dt,
            "t_steps": self.t_steps,
            "x_extent": self.x_extent,
            "n_modes": self.n_modes,
            "seed": self.seed,
            "refinement": self.refinement,
        }


# ----------------------------------------------------------------- lattice


@dataclass(frozen=True, eq=False)
class FrequencyLattice:
    """Modes ξ_j = (π/X)·(m₁, m₂) with m in FFT order, and their μ-weights.

    Attributes:
        grid: Grid the lattice belongs to.
        indices: Integer mode numbers m per axis, shape (n_modes,).
        xi: Frequencies along one axis, shape (n_modes,).
        weights: μ-mass of each lattice cell, shape (n_modes, n_modes).
    """

    grid: GridSpec
    indices: IntArray
    xi: FloatArray
    weights: FloatArray

    @property
    def total_weight(self) -> float:
        """Σ_j w_j, so that Var[W_k(x)] = dt·total_weight."""
        return math.fsum(self.weights.ravel())

    def amplitudes(self) -> FloatArray:
        """√(dt·w_j)."""
        return np.sqrt(self.grid.dt * self.weights)

    def offsets(self) -> ComplexArray:
        """e^{iξ_m(−X + δ/2)}, the phase of mode m at the first cell centre."""
        return np.exp(1j * self.xi * (-self.grid.x_extent + 0.5 * self.grid.cell_size))


@lru_cache(maxsize=16)
def frequency_lattice(grid: GridSpec, mu: SpectralMeasureSpec) -> FrequencyLattice:
    """Builds the lattice, integrating the density over each cell.

    Each cell of side π/X is integrated with a tensor Gauss rule of
    ``settings.noise.cell_order`` nodes per axis; the cell at the origin, where
    Riesz densities are singular, gets its exact μ-mass.

    Raises:
        UnsupportedMeasure: For white noise.
    """
    if mu.kind is MeasureKind.WHITE:
        raise UnsupportedMeasure("white noise has no random-field version to synthesize")
    indices = np.rint(scipy.fft.fftfreq(grid.n_modes, d=1.0 / grid.n_modes)).astype(np.int64)
    spacing = grid.mode_spacing
    xi = spacing * indices.astype(float)
    order = int(settings.noise.cell_order)
    nodes, w = gauss_legendre(order)
    axis = xi[:, None] + 0.5 * spacing * nodes[None, :]
    axis_w = 0.5 * spacing * w
    radius = np.hypot(axis[:, :, None, None], axis[None, None, :, :])
    origin = (indices == 0)[:, None, None, None] & (indices == 0)[None, None, :, None]
    with np.errstate(divide="ignore", invalid="ignore"):
        dens = np.where(origin, 0.0, mu.density(np.where(origin, 1.0, radius)))
    weights = np.einsum("aibj,i,j->ab", dens, axis_w, axis_w)
    zero = int(np.flatnonzero(indices == 0)[0])
    weights[zero, zero] = mu.square_mass(spacing)
    logger.debug(f"🔍 lattice {grid.n_modes}² modes, total μ-weight {weights.sum():.6g}")
    return FrequencyLattice(grid, indices, xi, weights)


def mode_normals(
    seed: int, realization: int, step: int, n_modes: int
) -> tuple[FloatArray, FloatArray]:
    """Standard normals (A, B) of one step, each of shape (n_modes, n_modes)."""
    seq = np.random.SeedSequence(seed, spawn_key=(realization, step))
    rng = np.random.Generator(np.random.Philox(seq))
    draws = rng.standard_normal((2, n_modes, n_modes))
    return draws[0], draws[1]


def lattice_projection(fields: FloatArray, lattice: FrequencyLattice) -> ComplexArray:
    """P_j = Σ_c g(c)·e^{iξ_j·y_c} for each leading index of ``fields``.

    Args:
        fields: Cell coefficients, shape (..., n_cells, n_cells).
        lattice: Frequency lattice of the same grid.

    Returns:
        Complex array of shape (..., n_modes, n_modes).
    """
    n = lattice.grid.n_cells
    spectrum = scipy.fft.ifft2(fields, axes=(-2, -1), norm="forward")
    idx = np.mod(lattice.indices, n)
    picked = spectrum[..., idx[:, None], idx[None, :]]
    off = lattice.offsets()
    return picked * off[:, None] * off[None, :]


def spectral_quadratic_form(g: FloatArray, grid: GridSpec, mu: SpectralMeasureSpec) -> float:
    """Variance of Σ_k Σ_c g_k(c)·W_k(c) for deterministic coefficients g.

    Equals dt·Σ_k Σ_j w_j·|Σ_c g_k(c)·e^{iξ_j·y_c}|².

    Args:
        g: Coefficients of shape (t_steps, n_cells, n_cells).
        grid: Noise grid.
        mu: Spectral measure.
    """
    lattice = frequency_lattice(grid, mu)
    proj = lattice_projection(np.asarray(g, dtype=float), lattice)
    return float(grid.dt * np.sum(lattice.weights * np.abs(proj) ** 2))


# -------------------------------------------------------------- noise grid


@dataclass(frozen=True, eq=False)
class NoiseGrid:
    """One realization of the increments.

    Attributes:
        grid: Grid specification.
        measure: Spectral measure the increments were synthesized from.
        increments: W_k on the cell centres, shape (t_steps, n_cells, n_cells),
            axis 1 indexing y₁ and axis 2 indexing y₂.
        realization: Realization index used in the RNG key.
    """

    grid: GridSpec
    measure: SpectralMeasureSpec
    increments: FloatArray
    realization: int = 0

    def __post_init__(self) -> None:
        n = self.grid.n_cells
        if self.increments.shape != (self.grid.t_steps, n, n):
            raise ValidationError(
                f"increments must have shape {(self.grid.t_steps, n, n)}, "
                f"got {self.increments.shape}"
            )

    def scaled(self, factor: float) -> NoiseGrid:
        """Same realization with every increment multiplied by ``factor``."""
        return NoiseGrid(self.grid, self.measure, factor * self.increments, self.realization)


def sample_noise(grid: GridSpec, mu: SpectralMeasureSpec, realization: int = 0) -> NoiseGrid:
    """Synthesizes the increments of one realization on the cell centres.

    Raises:
        UnsupportedMeasure: For white noise.
    """
    lattice = frequency_lattice(grid, mu)
    n = grid.n_cells
    idx = np.mod(lattice.indices, n)
    off = lattice.offsets()
    coeff = lattice.amplitudes() * off[:, None] * off[None, :]
    spectrum = np.zeros((grid.t_steps, n, n), dtype=np.complex128)
    for step in range(grid.t_steps):
        a, b = mode_normals(grid.seed, realization, step, grid.n_modes)
        spectrum[step][np.ix_(idx, idx)] = coeff * (a - 1j * b)
    fields = scipy.fft.ifft2(spectrum, axes=(-2, -1), norm="forward").real
    return NoiseGrid(grid, mu, np.ascontiguousarray(fields), realization)


def export_noise_grid(path: Path, noise: NoiseGrid) -> Path:
    """Writes the little-endian header and the row-major float64 payload.

    The layout is documented in ``docs/noise_grid_format.md``.
    """
    path = Path(path)
    path.parent.mkdir(parents=True, exist_ok=True)
    g = noise.grid
    header = np.zeros(1, dtype=HEADER_DTYPE)
    header[0] = (
        NOISE_MAGIC,
        NOISE_FORMAT_VERSION,
        g.dt,
        g.t_steps,
        g.x_extent,
        g.n_modes,
        g.refinement,
        g.seed,
        noise.realization,
        g.n_cells,
    )
    with path.open("wb") as fh:
        fh.write(header.tobytes())
        fh.write(np.ascontiguousarray(noise.increments, dtype="<f8").tobytes(order="C"))
    logger.info(f"✅ Noise grid exported to {path} ({path.stat().st_size} bytes)")
    return path


def read_noise_grid(path: Path, mu: SpectralMeasureSpec) -> NoiseGrid:
    """Reads a file written by ``export_noise_grid``.

    The measure is not part of the file and must be supplied.

    Raises:
        ValidationError: On a bad magic number, version or payload size.
    """
    raw = Path(path).read_bytes()
    header = np.frombuffer(raw[: HEADER_DTYPE.itemsize], dtype=HEADER_DTYPE)[0]
    if bytes(header["magic"]) != NOISE_MAGIC or int(header["version"]) != NOISE_FORMAT_VERSION:
        raise ValidationError(f"{path} is not a version-{NOISE_FORMAT_VERSION} noise grid")
    grid = GridSpec(
        dt=float(header["dt"]),
        t_steps=int(header["t_steps"]),
        x_extent=float(header["x_extent"]),
        n_modes=int(header["n_modes"]),
        seed=int(header["seed"]),
        refinement=int(header["refinement"]),
    )
    n = int(header["n_cells"])
    payload = np.frombuffer(raw[HEADER_DTYPE.itemsize :], dtype="<f8")
    if payload.size != grid.t_steps * n * n:
        raise ValidationError(
            f"{path}: payload holds {payload.size} values, expected {grid.t_steps * n * n}"
        )
    increments = payload.reshape(grid.t_steps, n, n).astype(np.float64)
    return NoiseGrid(grid, mu, increments, int(header["realization"]))


# -------------------------------------------------------- covariance check


@dataclass(frozen=True)
class CovarianceCheck:
    """Monte Carlo estimate of E[F(φ)F(ψ)] against its spectral value.

    Attributes:
        mc_estimate: Sample mean of F(φ)F(ψ).
        spectral_value: ∫dt ∫ Fφ(t, ξ)·conj(Fψ(t, ξ)) dμ(ξ).
        std_err: Standard error of the sample mean.
        lattice_value: Exact expectation of the discretized estimator.
        n_samples: Number of realizations.
    """

    mc_estimate: float
    spectral_value: float
    std_err: float
    lattice_value: float
    n_samples: int

    @property
    def discretization_budget(self) -> float:
        """|lattice_value − spectral_value|: grid and truncation error."""
        return abs(self.lattice_value - self.spectral_value)

    @property
    def accepted(self) -> bool:
        """|mc − spectral| ≤ 3·std_err + discretization budget."""
        return abs(self.mc_estimate - self.spectral_value) <= (
            3.0 * self.std_err + self.discretization_budget
        )


def _check_resolved(phi: TestFunction, grid: GridSpec) -> None:
    (t_lo, t_hi), (a_lo, a_hi), (b_lo, b_hi) = phi.support_box()
    if t_lo < 0.0 or t_hi > grid.horizon:
        raise SupportOverflow(f"time support [{t_lo}, {t_hi}] leaves [0, {grid.horizon}]")
    for lo, hi in ((a_lo, a_hi), (b_lo, b_hi)):
        if lo < -grid.x_extent or hi > grid.x_extent:
            raise SupportOverflow(f"spatial support [{lo}, {hi}] leaves ±{grid.x_extent}")
    r_t, r_1, r_2 = phi.radius
    if r_t < _MIN_CELLS_PER_RADIUS * grid.dt:
        raise GridTooCoarse(f"time radius {r_t} spans fewer than 4 steps of {grid.dt}")
    if min(r_1, r_2) < _MIN_CELLS_PER_RADIUS * grid.cell_size:
        raise GridTooCoarse(
            f"spatial radii {(r_1, r_2)} span fewer than 4 cells of {grid.cell_size:.4g}"
        )


def _cell_averages(
    center: float, radius: float, profile: BumpProfile, edges: FloatArray
) -> FloatArray:
    """∫ over each interval of ψ((x − center)/radius) dx."""
    x, w = panel_rule(edges, 8)
    vals = profile.derivatives((x - center) / radius)[0] * w
    return vals.reshape(len(edges) - 1, 8).sum(axis=1)


def _axis_transform(
    center: float, radius: float, profile: BumpProfile, xi: FloatArray
) -> ComplexArray:
    """∫ ψ((x − center)/radius)·e^{−iξx} dx."""
    n = 96 + 2 * int(math.ceil(float(np.max(np.abs(xi))) * radius))
    s, w = gauss_legendre(n)
    psi = profile.derivatives(s)[0] * w
    return radius * np.exp(-1j * xi * center) * (np.exp(-1j * np.outer(xi * radius, s)) @ psi)


def _time_factors(phi: TestFunction, grid: GridSpec) -> FloatArray:
    """(1/dt)∫ over each step of the time profile, times the amplitude."""
    edges = grid.dt * np.arange(grid.t_steps + 1)
    averages = _cell_averages(phi.center[0], phi.radius[0], phi.profiles[0], edges)
    return phi.amplitude * averages / grid.dt


def _spatial_projection(phi: TestFunction, lattice: FrequencyLattice) -> ComplexArray:
    """Σ_c φ_space(c)·e^{iξ_j·y_c} with φ_space integrated over each cell."""
    edges = lattice.grid.cell_edges()
    off = lattice.offsets()
    n = lattice.grid.n_cells
    projections = []
    for axis in (1, 2):
        cells = _cell_averages(phi.center[axis], phi.radius[axis], phi.profiles[axis], edges)
        phases = np.exp(2j * np.pi * np.outer(lattice.indices, np.arange(n)) / n)
        projections.append(off * (phases @ cells))
    return np.outer(projections[0], projections[1])


def covariance_spectral_value(
    phi: TestFunction, psi: TestFunction, mu: SpectralMeasureSpec, tol: float | None = None
) -> float:
    """∫dt ∫ Fφ(t, ξ)·conj(Fψ(t, ξ)) dμ(ξ) for separable bumps."""
    tol = float(tol if tol is not None else settings.spectral.tol)
    t_lo = max(phi.support_box()[0][0], psi.support_box()[0][0])
    t_hi = min(phi.support_box()[0][1], psi.support_box()[0][1])
    if t_hi <= t_lo:
        return 0.0
    ts, wt = panel_rule(np.linspace(t_lo, t_hi, 9), 8)
    phi_t = phi.profiles[0].derivatives((ts - phi.center[0]) / phi.radius[0])[0]
    psi_t = psi.profiles[0].derivatives((ts - psi.center[0]) / psi.radius[0])[0]
    time_factor = float(np.sum(wt * phi_t * psi_t)) * phi.amplitude * psi.amplitude
    if time_factor == 0.0:
        return 0.0
    bandwidth = tuple(
        abs(phi.center[a] - psi.center[a]) + phi.radius[a] + psi.radius[a] for a in (1, 2)
    )
    cutoff = float(settings.spectral.cutoff_start)
    while True:
        mesh = SpectralMesh(mu, cutoff, (bandwidth[0], bandwidth[1]))
        factors = []
        origin = 1.0
        for axis, nodes in ((1, mesh.xi1), (2, mesh.xi2)):
            args_phi = (phi.center[axis], phi.radius[axis], phi.profiles[axis])
            args_psi = (psi.center[axis], psi.radius[axis], psi.profiles[axis])
            g = _axis_transform(*args_phi, nodes) * np.conj(_axis_transform(*args_psi, nodes))
            factors.append(g.real)
            g0 = _axis_transform(*args_phi, np.zeros(1)) * _axis_transform(*args_psi, np.zeros(1))
            origin *= float(g0.real[0])
        total = mesh.integrate(4.0 * np.outer(factors[0], factors[1]), origin)
        if total.tail_error < tol / 10.0 or cutoff >= float(settings.spectral.cutoff_max):
            break
        cutoff *= 2.0
    return time_factor * (total.inner + total.tail)


def covariance_mc_check(
    phi: TestFunction,
    psi: TestFunction,
    grid: GridSpec,
    mu: SpectralMeasureSpec,
    n_samples: int,
    tol: float | None = None,
) -> CovarianceCheck:
    """Compares the empirical E[F(φ)F(ψ)] with its spectral expression.

    F(φ) = Σ_k Σ_c φ̄_k(c)·W_k(c), with φ̄_k(c) the integral of φ over cell c and
    the time average over step k.

    Raises:
        SupportOverflow: If a support leaves the simulated space-time box.
        GridTooCoarse: If a radius spans fewer than 4 cells or time steps.
        UnsupportedMeasure: For white noise.
    """
    if n_samples < 2:
        raise ValidationError(f"n_samples must be at least 2, got {n_samples}")
    for f in (phi, psi):
        _check_resolved(f, grid)
    lattice = frequency_lattice(grid, mu)
    amp = lattice.amplitudes()
    tf_phi, tf_psi = _time_factors(phi, grid), _time_factors(psi, grid)
    sp_phi, sp_psi = _spatial_projection(phi, lattice), _spatial_projection(psi, lattice)
    cross = float(np.sum(lattice.weights * (sp_phi * np.conj(sp_psi)).real))
    lattice_value = grid.dt * float(np.dot(tf_phi, tf_psi)) * cross
    steps = np.flatnonzero((tf_phi != 0.0) | (tf_psi != 0.0))
    products = np.empty(n_samples)
    for r in range(n_samples):
        f_phi = f_psi = 0.0
        for k in steps:
            a, b = mode_normals(grid.seed, r, int(k), grid.n_modes)
            f_phi += tf_phi[k] * float(np.sum(amp * (a * sp_phi.real + b * sp_phi.imag)))
            f_psi += tf_psi[k] * float(np.sum(amp * (a * sp_psi.real + b * sp_psi.imag)))
        products[r] = f_phi * f_psi
    mean = math.fsum(products) / n_samples
    std_err = float(np.std(products, ddof=1)) / math.sqrt(n_samples)
    spectral_value = covariance_spectral_value(phi, psi, mu, tol)
    check = CovarianceCheck(mean, spectral_value, std_err, lattice_value, n_samples)
    if check.discretization_budget > 0.01 * abs(spectral_value) and spectral_value != 0.0:
        logger.warning(
            f"⚠️ Lattice value {lattice_value:.6g} deviates from the spectral value "
            f"{spectral_value:.6g} by more than 1%"
        )
    logger.info(
        f"📊 covariance check: mc={mean:.6g} ± {std_err:.2g}, spectral={spectral_value:.6g}, "
        f"lattice={lattice_value:.6g}"
    )
    return check
