"""Pandera schemas of the CSV files written by the command line."""

import pandera.pandas as pa
from pandera.typing import Series


class _RunColumns(pa.DataFrameModel):
    """Columns stamped on every output row."""

    config_hash: Series[str] = pa.Field(str_length=64, str_matches=r"^[0-9a-f]{64}$")
    version: Series[str]


class GammaGridSchema(_RunColumns):
    """Γ sampled on a (y₁, x₂) grid."""

    t: Series[float] = pa.Field(gt=0)
    x1: Series[float]
    y1: Series[float]
    x2: Series[float]
    gamma: Series[float] = pa.Field(ge=0)
    in_support: Series[bool]

    class Config:
        """Pandera configuration for the Γ grid."""

        coerce = True
        strict = True


class WeakCheckSchema(_RunColumns):
    """One row per (test function, y₁) of the weak fundamental-solution suite."""

    test_function: Series[int] = pa.Field(ge=0)
    y1: Series[float]
    weak_value: Series[float]
    expected: Series[float]
    abs_error: Series[float] = pa.Field(ge=0)
    passed: Series[bool]

    class Config:
        """Pandera configuration for the weak-form suite."""

        coerce = True
        strict = True


class FourierCheckSchema(_RunColumns):
    """Bessel representation against the direct double integral."""

    tau: Series[float] = pa.Field(gt=0)
    x1: Series[float]
    x2: Series[float]
    xi1: Series[float]
    xi2: Series[float]
    bessel_re: Series[float]
    bessel_im: Series[float]
    direct_re: Series[float]
    direct_im: Series[float]
    abs_diff: Series[float] = pa.Field(ge=0)
    passed: Series[bool]

    class Config:
        """Pandera configuration for the representation sweep."""

        coerce = True
        strict = True


class DecayCurveSchema(_RunColumns):
    """|FΓ| along a frequency path."""

    path: Series[str] = pa.Field(isin=["xi2-axis", "matched"])
    tau: Series[float] = pa.Field(gt=0)
    x1: Series[float]
    radius: Series[float] = pa.Field(gt=0)
    modulus: Series[float] = pa.Field(ge=0)

    class Config:
        """Pandera configuration for decay curves."""

        coerce = True
        strict = True


class DominanceSchema(_RunColumns):
    """Random-point check of the calibrated decay bounds."""

    tau: Series[float] = pa.Field(gt=0)
    x1: Series[float]
    xi1: Series[float]
    xi2: Series[float]
    modulus: Series[float] = pa.Field(ge=0)
    bound_global: Series[float] = pa.Field(gt=0)
    regime: Series[str] = pa.Field(isin=["xi1", "xi2"])
    bound_regime: Series[float] = pa.Field(gt=0)
    global_ok: Series[bool]
    regime_ok: Series[bool]

    class Config:
        """Pandera configuration for the dominance sweep."""

        coerce = True
        strict = True


class AdmissibilitySchema(_RunColumns):
    """Admissibility verdicts of a spectral measure."""

    integral: Series[str] = pa.Field(isin=["sc", "dalang"])
    verdict: Series[str] = pa.Field(isin=["finite", "divergent"])
    value: Series[float] = pa.Field(nullable=True, ge=0)
    method: Series[str] = pa.Field(isin=["closed-form", "quadrature"])
    error_estimate: Series[float] = pa.Field(ge=0)

    class Config:
        """Pandera configuration for admissibility verdicts."""

        coerce = True
        strict = True


class SimulationSummarySchema(_RunColumns):
    """Per-point statistics of a field ensemble."""

    point: Series[int] = pa.Field(ge=0)
    t: Series[float] = pa.Field(ge=0)
    x1: Series[float]
    x2: Series[float]
    n_samples: Series[int] = pa.Field(ge=2)
    mean: Series[float]
    mean_std_err: Series[float] = pa.Field(ge=0)
    variance: Series[float] = pa.Field(ge=0)
    variance_std_err: Series[float] = pa.Field(ge=0)
    lattice_variance: Series[float] = pa.Field(ge=0)
    norm_integral: Series[float] = pa.Field(ge=0)
    discretization_budget: Series[float] = pa.Field(ge=0)
    within_budget: Series[bool]

    class Config:
        """Pandera configuration for ensemble summaries."""

        coerce = True
        strict = True


class SimulationSampleSchema(_RunColumns):
    """One row per (point, realization)."""

    point: Series[int] = pa.Field(ge=0)
    t: Series[float] = pa.Field(ge=0)
    x1: Series[float]
    x2: Series[float]
    sample: Series[int] = pa.Field(ge=0)
    u: Series[float]

    class Config:
        """Pandera configuration for field samples."""

        coerce = True
        strict = True


class ContinuitySchema(_RunColumns):
    """L² increments along a halving sequence."""

    kind: Series[str] = pa.Field(isin=["time", "x1", "x2"])
    delta: Series[float] = pa.Field(ge=0)
    l2_value: Series[float] = pa.Field(ge=0)
    error_estimate: Series[float] = pa.Field(ge=0)
    mc_value: Series[float] = pa.Field(nullable=True)
    mc_std_err: Series[float] = pa.Field(nullable=True, ge=0)
    lattice_value: Series[float] = pa.Field(nullable=True, ge=0)
    bracketed: Series[bool] = pa.Field(nullable=True)

    class Config:
        """Pandera configuration for continuity tables."""

        coerce = True
        strict = True


class CovarianceCheckSchema(_RunColumns):
    """Monte Carlo against spectral covariance of two test functions."""

    pair: Series[str]
    mc_estimate: Series[float]
    spectral_value: Series[float]
    std_err: Series[float] = pa.Field(ge=0)
    lattice_value: Series[float]
    n_samples: Series[int] = pa.Field(ge=2)
    accepted: Series[bool]

    class Config:
        """Pandera configuration for covariance checks."""

        coerce = True
        strict = True


SCHEMA_MAP: dict[str, type[pa.DataFrameModel]] = {
    "gamma": GammaGridSchema,
    "weak_check": WeakCheckSchema,
    "fourier_check": FourierCheckSchema,
    "decay": DecayCurveSchema,
    "dominance": DominanceSchema,
    "admissibility": AdmissibilitySchema,
    "simulation_summary": SimulationSummarySchema,
    "simulation_samples": SimulationSampleSchema,
    "continuity": ContinuitySchema,
    "covariance_check": CovarianceCheckSchema,
}
