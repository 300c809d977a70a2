"""Discrete stochastic convolution, its Monte Carlo ensembles and L² increments.

u(t, x₁, x₂) = Σ_k Σ_c m_k(c)·W_k(c), where s_k = k·dt < t are left endpoints and
m_k(c) = ∫_cell Γ(t − s_k, x₁, y₁, x₂ − y₂) dy is the exact kernel mass of cell c.
The y₂ integral of Γ over a cell is an arcsine difference, so the inverse
square-root blow-up on the support boundary never gets point-sampled.

Writing W_k through its modes turns the convolution into
u = Σ_k Σ_j √(dt·w_j)·(A_kj·Re P_kj + B_kj·Im P_kj) with P_kj the lattice
projection of m_k, which is what the ensemble code evaluates.
"""

from __future__ import annotations

import math
from collections.abc import Sequence
from concurrent.futures import ThreadPoolExecutor, as_completed
from dataclasses import dataclass
from enum import StrEnum

import numpy as np
import pandas as pd
from loguru import logger
from numpy.typing import NDArray
from tqdm import tqdm

from dchar_field.config import settings
from dchar_field.services.fourier import fourier_gamma_table
from dchar_field.services.kernel import support_half_width_sq
from dchar_field.services.noise import (
    FrequencyLattice,
    GridSpec,
    NoiseGrid,
    frequency_lattice,
    lattice_projection,
    mode_normals,
)
from dchar_field.services.spectral import (
    NormIntegral,
    SpectralMeasureSpec,
    norm_integral,
    require_admissible,
    support_extent,
    time_spectral_integral,
)
from dchar_field.utils.errors import DomainError, SupportOverflow, ValidationError
from dchar_field.utils.metrics import monitor_step
from dchar_field.utils.quadrature import gauss_legendre

FloatArray = NDArray[np.float64]
ComplexArray = NDArray[np.complex128]
Point = tuple[float, float, float]

# relative slack when matching query times to the step grid
_GRID_SLACK = 1e-9


class IncrementKind(StrEnum):
    """Direction of an L² increment."""

    TIME = "time"
    X1 = "x1"
    X2 = "x2"


# ------------------------------------------------------------ kernel masses


def kernel_cell_masses(tau: float, x1: float, x2: float, grid: GridSpec) -> FloatArray:
    """∫_cell Γ(τ, x₁, y₁, x₂ − y₂) dy for every cell of the grid.

    The y₂ integral is exact, (1/2π)[arcsin((b − x₂)/√h) − arcsin((a − x₂)/√h)]
    with clipping to [−1, 1]; the y₁ integral is Gauss–Legendre on each cell
    intersected with (x₁, x₁ + 2τ).

    Returns:
        Array of shape (n_cells, n_cells), axis 0 for y₁ and axis 1 for y₂.
    """
    if tau <= 0.0:
        raise DomainError(f"tau must be positive, got {tau}")
    edges = grid.cell_edges()
    lo = np.clip(edges[:-1], x1, x1 + 2.0 * tau)
    hi = np.clip(edges[1:], x1, x1 + 2.0 * tau)
    nodes, weights = gauss_legendre(int(settings.solver.y1_nodes))
    half = 0.5 * (hi - lo)
    y1 = (0.5 * (hi + lo))[:, None] + half[:, None] * nodes[None, :]
    w1 = half[:, None] * weights[None, :]
    root = np.sqrt(np.clip(support_half_width_sq(tau, x1, y1), 1e-300, None))
    with np.errstate(over="ignore"):
        ratio = (edges[None, None, :] - x2) / root[:, :, None]
    cumulative = np.arcsin(np.clip(ratio, -1.0, 1.0)) / (2.0 * math.pi)
    return np.einsum("iqc,iq->ic", np.diff(cumulative, axis=2), w1)


def _check_point(point: Point, grid: GridSpec) -> int:
    """Validates a query point and returns the number of steps before t."""
    t, x1, x2 = point
    if not all(math.isfinite(v) for v in point):
        raise DomainError(f"query point must be finite, got {point}")
    if t < 0.0 or t > grid.horizon * (1.0 + _GRID_SLACK):
        raise DomainError(f"query time {t} outside [0, {grid.horizon}]")
    steps = int(round(t / grid.dt))
    if abs(steps * grid.dt - t) > _GRID_SLACK * max(1.0, t):
        raise DomainError(f"query time {t} is not a multiple of dt={grid.dt}")
    if steps == 0:
        return 0
    y1 = np.linspace(x1, x1 + 2.0 * t, 257)
    half = math.sqrt(float(np.max(support_half_width_sq(t, x1, y1))))
    x = grid.x_extent
    if x1 < -x or x1 + 2.0 * t > x or x2 - half < -x or x2 + half > x:
        raise SupportOverflow(
            f"kernel support of {point} ([{x1}, {x1 + 2 * t}] x [{x2 - half:.4g}, "
            f"{x2 + half:.4g}]) leaves [-{x}, {x}]²"
        )
    return steps


def point_projections(point: Point, lattice: FrequencyLattice) -> ComplexArray:
    """Lattice projections P_kj of the kernel masses, shape (steps, n_modes, n_modes)."""
    grid = lattice.grid
    steps = _check_point(point, grid)
    t, x1, x2 = point
    if steps == 0:
        return np.zeros((0, grid.n_modes, grid.n_modes), dtype=np.complex128)
    masses = np.stack(
        [kernel_cell_masses(t - s, x1, x2, grid) for s in grid.step_times()[:steps]]
    )
    return lattice_projection(masses, lattice)


def convolve(noise: NoiseGrid, point: Point) -> float:
    """Applies the discrete convolution to one given noise realization."""
    steps = _check_point(point, noise.grid)
    t, x1, x2 = point
    total = 0.0
    for k, s in enumerate(noise.grid.step_times()[:steps]):
        masses = kernel_cell_masses(t - s, x1, x2, noise.grid)
        total += float(np.sum(masses * noise.increments[k]))
    return total


# ----------------------------------------------------------------- ensemble


@dataclass(frozen=True, eq=False)
class FieldEnsemble:
    """Monte Carlo realizations of u at a set of query points.

    Attributes:
        points: Query points (t, x₁, x₂).
        samples: Realizations, shape (n_samples, n_points).
        grid: Noise grid.
        measure: Spectral measure.
        lattice_variance: Exact variance of the discrete field at each point.
        realization_offset: Index of the first realization in the RNG key.
    """

    points: tuple[Point, ...]
    samples: FloatArray
    grid: GridSpec
    measure: SpectralMeasureSpec
    lattice_variance: FloatArray
    realization_offset: int = 0

    @property
    def n_samples(self) -> int:
        """Number of realizations."""
        return int(self.samples.shape[0])

    def mean(self) -> FloatArray:
        """Sample mean per point (compensated summation)."""
        return np.array([math.fsum(col) / self.n_samples for col in self.samples.T])

    def variance(self) -> FloatArray:
        """Unbiased sample variance per point (compensated summation)."""
        mean = self.mean()
        return np.array(
            [
                math.fsum((col - m) ** 2) / (self.n_samples - 1)
                for col, m in zip(self.samples.T, mean, strict=True)
            ]
        )

    def mean_std_err(self) -> FloatArray:
        """Standard error of the mean."""
        return np.sqrt(self.variance() / self.n_samples)

    def variance_std_err(self) -> FloatArray:
        """Standard error of the sample variance, √((m₄ − σ⁴(n−3)/(n−1))/n)."""
        n = self.n_samples
        mean, var = self.mean(), self.variance()
        m4 = np.array(
            [math.fsum((col - m) ** 4) / n for col, m in zip(self.samples.T, mean, strict=True)]
        )
        return np.sqrt(np.clip(m4 - var * var * (n - 3) / (n - 1), 0.0, None) / n)

    def to_frame(self) -> pd.DataFrame:
        """One row per (point, sample)."""
        n_points = len(self.points)
        pts = np.asarray(self.points, dtype=float)
        return pd.DataFrame(
            {
                "point": np.tile(np.arange(n_points), self.n_samples),
                "t": np.tile(pts[:, 0], self.n_samples),
                "x1": np.tile(pts[:, 1], self.n_samples),
                "x2": np.tile(pts[:, 2], self.n_samples),
                "sample": np.repeat(np.arange(self.n_samples) + self.realization_offset, n_points),
                "u": self.samples.ravel(),
            }
        )

    def summary(self) -> pd.DataFrame:
        """Per-point mean, variance, their standard errors and the lattice variance."""
        pts = np.asarray(self.points, dtype=float)
        return pd.DataFrame(
            {
                "point": np.arange(len(self.points)),
                "t": pts[:, 0],
                "x1": pts[:, 1],
                "x2": pts[:, 2],
                "n_samples": self.n_samples,
                "mean": self.mean(),
                "mean_std_err": self.mean_std_err(),
                "variance": self.variance(),
                "variance_std_err": self.variance_std_err(),
                "lattice_variance": self.lattice_variance,
            }
        )


def _realize_chunk(
    start: int,
    stop: int,
    coeff_re: list[FloatArray],
    coeff_im: list[FloatArray],
    grid: GridSpec,
    n_points: int,
) -> FloatArray:
    """u for realizations [start, stop); coeff_*[k] has shape (n_points, n_modes²)."""
    out = np.zeros((stop - start, n_points))
    for row, r in enumerate(range(start, stop)):
        for k, (a_k, b_k) in enumerate(zip(coeff_re, coeff_im, strict=True)):
            a, b = mode_normals(grid.seed, r, k, grid.n_modes)
            out[row] += a_k @ a.ravel() + b_k @ b.ravel()
    return out


@monitor_step
def solve_field(
    points: Sequence[Point],
    grid: GridSpec,
    mu: SpectralMeasureSpec,
    n_samples: int,
    threads: int | None = None,
    realization_offset: int = 0,
) -> FieldEnsemble:
    """Samples u at the query points, one independent noise realization per sample.

    Realization r draws its normals from the stream keyed by (seed, r, k), so the
    result is the same for any thread count.

    Args:
        points: Query points (t, x₁, x₂); t must be a multiple of dt within the horizon.
        grid: Noise grid.
        mu: Admissible spectral measure with a density.
        n_samples: Number of realizations (at least 2).
        threads: Worker threads (defaults to ``settings.solver.threads``).
        realization_offset: First realization index.

    Raises:
        PreconditionFailed: If μ fails the admissibility integral.
        SupportOverflow: If a kernel support leaves the spatial domain.
        DomainError: If a query time is off the step grid or beyond the horizon.
    """
    require_admissible(mu)
    if n_samples < 2:
        raise ValidationError(f"n_samples must be at least 2, got {n_samples}")
    pts = tuple((float(t), float(a), float(b)) for t, a, b in points)
    if not pts:
        raise ValidationError("solve_field needs at least one query point")
    lattice = frequency_lattice(grid, mu)
    amp = lattice.amplitudes()
    projections = [point_projections(p, lattice) for p in pts]
    n_steps = max(p.shape[0] for p in projections)
    coeff_re: list[FloatArray] = []
    coeff_im: list[FloatArray] = []
    for k in range(n_steps):
        rows = [
            p[k] if k < p.shape[0] else np.zeros((grid.n_modes, grid.n_modes), complex)
            for p in projections
        ]
        stacked = np.stack(rows) * amp[None, :, :]
        coeff_re.append(stacked.real.reshape(len(pts), -1).copy())
        coeff_im.append(stacked.imag.reshape(len(pts), -1).copy())
    lattice_variance = np.array(
        [grid.dt * float(np.sum(lattice.weights * np.abs(p) ** 2)) for p in projections]
    )

    threads = int(threads if threads is not None else settings.solver.threads)
    chunk = int(settings.solver.chunk_size)
    bounds = [
        (realization_offset + lo, realization_offset + min(lo + chunk, n_samples))
        for lo in range(0, n_samples, chunk)
    ]
    samples = np.zeros((n_samples, len(pts)))
    logger.info(
        f"🚀 Sampling {n_samples} realizations at {len(pts)} points "
        f"({n_steps} steps, {grid.n_modes}² modes, {threads} threads)"
    )
    with ThreadPoolExecutor(max_workers=max(threads, 1)) as pool:
        futures = {
            pool.submit(_realize_chunk, lo, hi, coeff_re, coeff_im, grid, len(pts)): lo
            for lo, hi in bounds
        }
        progress = tqdm(
            as_completed(futures), total=len(futures), desc="Realizations", leave=False
        )
        for fut in progress:
            lo = futures[fut] - realization_offset
            block = fut.result()
            samples[lo : lo + block.shape[0]] = block
    if not np.all(np.isfinite(samples)):
        raise ValidationError("non-finite realization produced")
    return FieldEnsemble(pts, samples, grid, mu, lattice_variance, realization_offset)


# ------------------------------------------------------------ L² increments


def shifted_point(kind: IncrementKind, base: Point, delta: float) -> Point:
    """The point the increment compares ``base`` with."""
    t, x1, x2 = base
    if kind is IncrementKind.TIME:
        return (t + delta, x1, x2)
    if kind is IncrementKind.X1:
        return (t, x1 + delta, x2)
    return (t, x1, x2 + delta)


def l2_increment(
    kind: IncrementKind,
    base: Point,
    mu: SpectralMeasureSpec,
    delta: float,
    tol: float | None = None,
) -> NormIntegral:
    """Spectral value of E|u(base) − u(shifted base)|².

    * time(h): ∫₀ᵗ∫|FΓ(τ+h) − FΓ(τ)|²dμ dτ + ∫₀ʰ∫|FΓ(τ)|²dμ dτ; the two stochastic
      integrals cover disjoint time intervals, so the terms add without cross term.
    * x1(δ): ∫₀ᵗ∫|FΓ(τ, x₁) − FΓ(τ, x₁+δ)|²dμ dτ with the x₁ phases kept.
    * x2(δ): ∫₀ᵗ∫|1 − e^{iδξ₂}|²·|FΓ(τ, x₁)|²dμ dτ.

    Args:
        kind: Increment direction.
        base: Base point (t, x₁, x₂), t ≥ 0.
        mu: Admissible spectral measure.
        delta: Increment h or δ, nonnegative; 0 gives exactly 0.
        tol: Absolute tolerance (defaults to ``settings.spectral.tol``).

    Raises:
        DomainError: On a negative increment or time.
        PreconditionFailed: If μ fails the admissibility integral.
        QuadratureNoConvergence: If the time refinement does not settle.
    """
    t, x1, x2 = base
    if delta < 0.0 or t < 0.0:
        raise DomainError(f"increment and time must be nonnegative, got {delta}, {t}")
    require_admissible(mu)
    if delta == 0.0:
        return NormIntegral(0.0, 0.0, 0.0, 0.0)
    tol = float(tol if tol is not None else settings.spectral.tol)

    if kind is IncrementKind.TIME:
        h = delta

        def time_values(tau: float, k1: FloatArray, k2: FloatArray) -> tuple[FloatArray, float]:
            diff = fourier_gamma_table(tau + h, x1, k1, k2) - fourier_gamma_table(tau, x1, k1, k2)
            return np.abs(diff) ** 2, h * h

        body = time_spectral_integral(
            t,
            mu,
            time_values,
            lambda tau: support_extent(tau + h, x1),
            tol / 2.0,
            "l2_increment[time]",
        )
        head = norm_integral(h, x1, x2, mu, tol=tol / 2.0)
        return NormIntegral(
            body.value + head.value,
            body.error_estimate + head.error_estimate,
            body.tail + head.tail,
            max(body.cutoff, head.cutoff),
        )

    if kind is IncrementKind.X1:
        z1 = x1 + delta

        def x1_values(tau: float, k1: FloatArray, k2: FloatArray) -> tuple[FloatArray, float]:
            shift = np.exp(-1j * delta * k1)[:, None]
            diff = fourier_gamma_table(tau, x1, k1, k2) - shift * fourier_gamma_table(
                tau, z1, k1, k2
            )
            return np.abs(diff) ** 2, 0.0

        def x1_band(tau: float) -> tuple[float, float]:
            (w1, w2), (_, v2) = support_extent(tau, x1), support_extent(tau, z1)
            return w1 + delta, max(w2, v2)

        return time_spectral_integral(t, mu, x1_values, x1_band, tol, "l2_increment[x1]")

    def x2_values(tau: float, k1: FloatArray, k2: FloatArray) -> tuple[FloatArray, float]:
        factor = 2.0 * (1.0 - np.cos(delta * k2))[None, :]
        return factor * np.abs(fourier_gamma_table(tau, x1, k1, k2)) ** 2, 0.0

    def x2_band(tau: float) -> tuple[float, float]:
        w1, w2 = support_extent(tau, x1)
        return w1, w2 + delta

    return time_spectral_integral(t, mu, x2_values, x2_band, tol, "l2_increment[x2]")


@dataclass(frozen=True)
class IncrementEstimate:
    """Monte Carlo estimate of E|Δu|².

    Attributes:
        mc_value: Sample mean of |Δu|².
        std_err: Its standard error.
        lattice_value: Exact E|Δu|² of the discrete field.
        common_random_numbers: Whether both fields shared the noise.
    """

    mc_value: float
    std_err: float
    lattice_value: float
    common_random_numbers: bool


def _mean_and_se(values: FloatArray) -> tuple[float, float]:
    n = values.size
    mean = math.fsum(values) / n
    var = math.fsum((values - mean) ** 2) / (n - 1)
    return mean, math.sqrt(var / n)


def mc_l2_increment(
    kind: IncrementKind,
    base: Point,
    grid: GridSpec,
    mu: SpectralMeasureSpec,
    delta: float,
    n_samples: int,
    common_random_numbers: bool = True,
    threads: int | None = None,
) -> IncrementEstimate:
    """Monte Carlo counterpart of ``l2_increment``.

    With common random numbers both fields come from the same realizations and
    the estimate is the mean of (u(base) − u(shifted))². Otherwise three
    independent ensembles estimate E u², E v² and E uv and the estimate is
    m_uu + m_vv − 2·m_uv.

    Raises:
        DomainError: On a negative increment.
    """
    if delta < 0.0:
        raise DomainError(f"increment must be nonnegative, got {delta}")
    if delta == 0.0:
        require_admissible(mu)
        return IncrementEstimate(0.0, 0.0, 0.0, common_random_numbers)
    other = shifted_point(kind, base, delta)
    lattice = frequency_lattice(grid, mu)
    p_base, p_other = point_projections(base, lattice), point_projections(other, lattice)
    n_steps = max(p_base.shape[0], p_other.shape[0])
    diff = np.zeros((n_steps, grid.n_modes, grid.n_modes), dtype=np.complex128)
    diff[: p_base.shape[0]] += p_base
    diff[: p_other.shape[0]] -= p_other
    lattice_value = grid.dt * float(np.sum(lattice.weights[None] * np.abs(diff) ** 2))

    if common_random_numbers:
        ens = solve_field([base, other], grid, mu, n_samples, threads)
        mean, se = _mean_and_se((ens.samples[:, 0] - ens.samples[:, 1]) ** 2)
        return IncrementEstimate(mean, se, lattice_value, True)

    first = solve_field([base], grid, mu, n_samples, threads, realization_offset=0)
    second = solve_field([other], grid, mu, n_samples, threads, realization_offset=n_samples)
    joint = solve_field(
        [base, other], grid, mu, n_samples, threads, realization_offset=2 * n_samples
    )
    m11, se11 = _mean_and_se(first.samples[:, 0] ** 2)
    m22, se22 = _mean_and_se(second.samples[:, 0] ** 2)
    m12, se12 = _mean_and_se(joint.samples[:, 0] * joint.samples[:, 1])
    return IncrementEstimate(
        m11 + m22 - 2.0 * m12,
        math.sqrt(se11**2 + se22**2 + 4.0 * se12**2),
        lattice_value,
        False,
    )
