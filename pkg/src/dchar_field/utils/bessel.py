"""Bessel functions of the first kind, orders 0 and 1.

Three regimes, all vectorized:

* |z| <= series_cutoff: the power series.
* series_cutoff < |z| <= asymptotic_cutoff: the Hankel integral representation
  J_ν(z) = √(2/πz) Re[e^{iω} I_ν(z)], ω = z − νπ/2 − π/4, with
  I_ν(z) = Γ(ν+1/2)⁻¹ ∫₀^∞ e^{−u} u^{ν−1/2} (1 + iu/2z)^{ν−1/2} du
  evaluated by generalized Gauss–Laguerre quadrature. For ν = 0, Re I₀ = P₊ and
  Im I₀ = P₋.
* |z| > asymptotic_cutoff: the asymptotic expansion of the same P± pair.
"""

from functools import lru_cache
from typing import overload

import numpy as np
from numpy.typing import ArrayLike, NDArray
from scipy.special import gamma as gamma_fn
from scipy.special import roots_genlaguerre

from dchar_field.config import settings

FloatArray = NDArray[np.float64]

_SERIES_TERMS = 60

# max |J1| on the real line (attained near z = 1.8412)
J1_MAX = 0.5818652242815963


@lru_cache(maxsize=8)
def _laguerre_rule(order: int, n: int) -> tuple[FloatArray, FloatArray]:
    nodes, weights = roots_genlaguerre(n, order - 0.5)
    return nodes, weights / gamma_fn(order + 0.5)


@lru_cache(maxsize=8)
def _asymptotic_coefficients(order: int, terms: int) -> FloatArray:
    nu2 = 4.0 * order * order
    coeffs = np.empty(2 * terms + 1)
    coeffs[0] = 1.0
    for k in range(1, 2 * terms + 1):
        coeffs[k] = coeffs[k - 1] * (nu2 - (2 * k - 1) ** 2) / (k * 8.0)
    return coeffs


def _series(z: FloatArray, order: int) -> FloatArray:
    q = -0.25 * z * z
    term = np.ones_like(z) if order == 0 else 0.5 * z
    total = term.copy()
    for k in range(1, _SERIES_TERMS):
        term = term * q / (k * (k + order))
        total += term
    return total


def _p_pair_quadrature(z: FloatArray, order: int) -> tuple[FloatArray, FloatArray]:
    nodes, weights = _laguerre_rule(order, int(settings.bessel.laguerre_nodes))
    g = (1.0 + 1j * nodes[None, :] / (2.0 * z[:, None])) ** (order - 0.5)
    integral = g @ weights
    return integral.real, integral.imag


def _p_pair_asymptotic(z: FloatArray, order: int) -> tuple[FloatArray, FloatArray]:
    coeffs = _asymptotic_coefficients(order, int(settings.bessel.asymptotic_terms))
    inv = 1.0 / z
    inv2 = -inv * inv
    p = np.zeros_like(z)
    q = np.zeros_like(z)
    # Horner in −1/z², even coefficients for P and odd ones for Q
    for k in range(len(coeffs) // 2 - 1, -1, -1):
        p = p * inv2 + coeffs[2 * k]
        q = q * inv2 + coeffs[2 * k + 1]
    return p, q * inv


def _p_pair(z: FloatArray, order: int) -> tuple[FloatArray, FloatArray]:
    cutoff = float(settings.bessel.asymptotic_cutoff)
    p = np.empty_like(z)
    q = np.empty_like(z)
    near = z <= cutoff
    if np.any(near):
        p[near], q[near] = _p_pair_quadrature(z[near], order)
    if np.any(~near):
        p[~near], q[~near] = _p_pair_asymptotic(z[~near], order)
    return p, q


def _bessel(z: ArrayLike, order: int) -> FloatArray:
    x = np.asarray(z, dtype=float)
    a = np.abs(x).ravel()
    out = np.empty_like(a)
    small = a <= float(settings.bessel.series_cutoff)
    if np.any(small):
        out[small] = _series(a[small], order)
    if np.any(~small):
        big = a[~small]
        p, q = _p_pair(big, order)
        omega = big - order * 0.5 * np.pi - 0.25 * np.pi
        out[~small] = np.sqrt(2.0 / (np.pi * big)) * (np.cos(omega) * p - np.sin(omega) * q)
    out = out.reshape(x.shape)
    if order == 1:
        out = np.where(x < 0.0, -out, out)
    return out


@overload
def bessel_j0(z: float) -> float: ...
@overload
def bessel_j0(z: NDArray[np.float64]) -> FloatArray: ...
def bessel_j0(z: float | NDArray[np.float64]) -> float | FloatArray:
    """Bessel function J₀ (even in z).

    Args:
        z: Real argument, scalar or array.

    Returns:
        J₀(z) with the same shape as ``z``.
    """
    out = _bessel(z, 0)
    return float(out) if np.ndim(z) == 0 else out


@overload
def bessel_j1(z: float) -> float: ...
@overload
def bessel_j1(z: NDArray[np.float64]) -> FloatArray: ...
def bessel_j1(z: float | NDArray[np.float64]) -> float | FloatArray:
    """Bessel function J₁ (odd in z).

    Args:
        z: Real argument, scalar or array.

    Returns:
        J₁(z) with the same shape as ``z``.
    """
    out = _bessel(z, 1)
    return float(out) if np.ndim(z) == 0 else out


def hankel_p_pair(z: ArrayLike) -> tuple[FloatArray, FloatArray]:
    """The P₊, P₋ functions of J₀(z) = √(2/πz)[cos(z−π/4)P₊ − sin(z−π/4)P₋].

    Args:
        z: Positive arguments.

    Returns:
        Arrays (P₊, P₋); both are bounded by 1 in modulus.
    """
    x = np.atleast_1d(np.asarray(z, dtype=float))
    return _p_pair(x, 0)
