"""Quadrature rules shared by the kernel, transform and spectral modules.

Three building blocks:

* ``adaptive_gauss_kronrod``: vectorized G7/K15 panel bisection with an absolute
  error target and a hard evaluation budget.
* ``panel_rule``: composite Gauss–Legendre nodes and weights on given panel edges.
* ``refine_until_stable``: nested refinement that doubles a resolution parameter
  until two successive results agree.
"""

import math
from collections.abc import Callable
from dataclasses import dataclass
from functools import lru_cache
from typing import Any

import numpy as np
from loguru import logger
from numpy.typing import ArrayLike, NDArray

from dchar_field.config import settings
from dchar_field.utils.errors import QuadratureNoConvergence

FloatArray = NDArray[np.float64]

# Kronrod 15-point abscissae (positive half, descending) and weights
_XGK = np.array(
    [
        0.991455371120812639206854697526329,
        0.949107912342758524526189684047851,
        0.864864423359769072789712788640926,
        0.741531185599394439863864773280788,
        0.586087235467691130294144845693013,
        0.405845151377397166906606412076961,
        0.207784955007898467600689403773245,
        0.000000000000000000000000000000000,
    ]
)
_WGK = np.array(
    [
        0.022935322010529224963732008058970,
        0.063092092629978553290700663189204,
        0.104790010322250183839876322541518,
        0.140653259715525918745189590510238,
        0.169004726639267902826583426598550,
        0.190350578064785409913256402421014,
        0.204432940075298892414161999234649,
        0.209482141084727828012999174891714,
    ]
)
# Gauss 7-point weights, attached to the odd-indexed Kronrod abscissae
_WG = np.array(
    [
        0.129484966168869693270611432679082,
        0.279705391489276667901467771423780,
        0.381830050505118944950369775488975,
        0.417959183673469387755102040816327,
    ]
)


def _kronrod_tables() -> tuple[FloatArray, FloatArray, FloatArray]:
    nodes = np.concatenate([-_XGK[:7], [0.0], _XGK[:7][::-1]])
    kronrod = np.concatenate([_WGK[:7], [_WGK[7]], _WGK[:7][::-1]])
    gauss_half = np.zeros(7)
    gauss_half[1::2] = _WG[:3]
    gauss = np.concatenate([gauss_half, [_WG[3]], gauss_half[::-1]])
    return nodes, kronrod, gauss


GK_NODES, GK_KRONROD_WEIGHTS, GK_GAUSS_WEIGHTS = _kronrod_tables()


@dataclass(frozen=True)
class QuadResult:
    """Outcome of an adaptive integration.

    Attributes:
        value: Integral estimate (real or complex).
        error: Estimated absolute error.
        evals: Number of integrand evaluations spent.
    """

    value: complex
    error: float
    evals: int


def default_budget(max_evals: int | None) -> int:
    """Resolves an evaluation budget, falling back to ``settings.quadrature.max_evals``."""
    return int(max_evals if max_evals is not None else settings.quadrature.max_evals)


def adaptive_gauss_kronrod(
    f: Callable[[FloatArray], ArrayLike],
    a: float,
    b: float,
    *,
    tol: float,
    initial_panels: int = 1,
    max_evals: int | None = None,
    label: str = "integral",
) -> QuadResult:
    """Integrates a vectorized function on [a, b] with G7/K15 panel bisection.

    A panel is accepted once its |K15 − G7| estimate falls under its share of
    ``tol`` (proportional to its width); the others are halved.

    Args:
        f: Function evaluated on a 1-D array of abscissae, real or complex valued.
        a: Lower limit.
        b: Upper limit.
        tol: Absolute error target.
        initial_panels: Number of equal panels to start from.
        max_evals: Evaluation budget (defaults to the configured budget).
        label: Name used in log and error messages.

    Returns:
        The integral estimate with its error bound and evaluation count.

    Raises:
        QuadratureNoConvergence: If the budget is exhausted before all panels pass.
    """
    budget = default_budget(max_evals)
    if b == a:
        return QuadResult(0.0, 0.0, 0)
    length = b - a
    edges = np.linspace(a, b, max(int(initial_panels), 1) + 1)
    lo, hi = edges[:-1], edges[1:]
    total: complex = 0.0
    err_total = 0.0
    evals = 0
    while lo.size:
        half = 0.5 * (hi - lo)
        mid = 0.5 * (hi + lo)
        x = mid[:, None] + half[:, None] * GK_NODES[None, :]
        fx = np.asarray(f(x.ravel())).reshape(x.shape)
        evals += x.size
        kronrod = (fx @ GK_KRONROD_WEIGHTS) * half
        gauss = (fx @ GK_GAUSS_WEIGHTS) * half
        err = np.abs(kronrod - gauss)
        done = err <= tol * (hi - lo) / length
        total += complex(np.sum(kronrod[done]))
        err_total += float(np.sum(err[done]))
        if not np.all(done) and evals >= budget:
            raise QuadratureNoConvergence(
                f"{label}: {int(np.count_nonzero(~done))} panels above tolerance {tol:g} "
                f"after {evals} evaluations"
            )
        lo, mid, hi = lo[~done], mid[~done], hi[~done]
        lo, hi = np.concatenate([lo, mid]), np.concatenate([mid, hi])
    return QuadResult(total, err_total, evals)


@lru_cache(maxsize=64)
def gauss_legendre(order: int) -> tuple[FloatArray, FloatArray]:
    """Gauss–Legendre nodes and weights on [-1, 1] (cached)."""
    nodes, weights = np.polynomial.legendre.leggauss(order)
    return nodes, weights


def panel_rule(edges: ArrayLike, order: int) -> tuple[FloatArray, FloatArray]:
    """Composite Gauss–Legendre rule on consecutive panels.

    Args:
        edges: Increasing panel boundaries, shape (P + 1,).
        order: Nodes per panel.

    Returns:
        Flattened nodes and weights, shape (P * order,).
    """
    e = np.asarray(edges, dtype=float)
    nodes, weights = gauss_legendre(order)
    half = 0.5 * np.diff(e)
    mid = 0.5 * (e[1:] + e[:-1])
    x = mid[:, None] + half[:, None] * nodes[None, :]
    w = half[:, None] * weights[None, :]
    return x.ravel(), w.ravel()


def mapped_rule(
    lo: ArrayLike, hi: ArrayLike, panels: int, order: int
) -> tuple[FloatArray, FloatArray]:
    """Composite Gauss–Legendre rule on intervals [lo, hi] that vary per row.

    Args:
        lo: Lower limits, any shape S.
        hi: Upper limits, same shape. Rows with hi <= lo get zero weights.
        panels: Equal panels per interval.
        order: Nodes per panel.

    Returns:
        Nodes and weights of shape S + (panels * order,).
    """
    lo_a = np.asarray(lo, dtype=float)
    hi_a = np.asarray(hi, dtype=float)
    ref_x, ref_w = panel_rule(np.linspace(0.0, 1.0, panels + 1), order)
    span = np.clip(hi_a - lo_a, 0.0, None)
    x = lo_a[..., None] + span[..., None] * ref_x
    w = span[..., None] * ref_w
    return x, w


def refine_until_stable(
    evaluate: Callable[[int], tuple[Any, int]],
    *,
    tol: float,
    start: int,
    max_evals: int | None = None,
    cost_growth: float = 2.0,
    label: str = "integral",
) -> tuple[Any, float, int]:
    """Doubles a resolution parameter until two successive results agree within ``tol``.

    Args:
        evaluate: Maps a resolution ``n`` to ``(value, evaluations spent)``; the value
            may be a scalar or an array (compared element-wise).
        tol: Absolute agreement target.
        start: Initial resolution.
        max_evals: Cumulative evaluation budget.
        cost_growth: Cost ratio between successive resolutions; a refinement whose
            predicted cost would overrun the budget is not attempted.
        label: Name used in messages.

    Returns:
        ``(value, error_estimate, evaluations)`` from the finest resolution.

    Raises:
        QuadratureNoConvergence: If the budget runs out first.
    """
    budget = default_budget(max_evals)
    n = max(int(start), 1)
    previous, used = evaluate(n)
    spent = used
    diff = float("inf")
    while True:
        if spent + used * cost_growth > budget:
            raise QuadratureNoConvergence(
                f"{label}: refinement beyond resolution {n} would exceed the budget of "
                f"{budget} evaluations (last difference {diff:.3e}, target {tol:g})"
            )
        n *= 2
        current, used = evaluate(n)
        spent += used
        diff = float(np.max(np.abs(np.asarray(current) - np.asarray(previous))))
        if diff <= tol:
            return current, diff, spent
        logger.debug(f"🔍 {label}: resolution {n} differs by {diff:.3e}, refining")
        previous = current


def refine_axes_until_stable(
    evaluate: Callable[[tuple[int, ...]], tuple[float, int]],
    *,
    tol: float,
    start: tuple[int, ...],
    max_evals: int | None = None,
    label: str = "integral",
) -> tuple[float, float, int]:
    """Refines a tensor rule one axis at a time until no axis moves the result.

    Each round doubles every axis separately from the current resolution and
    measures the change. When the changes sum to at most ``tol`` the result is
    the base value plus all per-axis corrections. Otherwise every axis whose
    change exceeds ``tol / len(start)`` stays doubled for the next round. The cost
    of each evaluation is predicted from the product of the resolutions and
    checked against the remaining budget before it runs.

    Args:
        evaluate: Maps a resolution tuple to ``(value, evaluations spent)``.
        tol: Absolute target for the summed per-axis changes.
        start: Initial resolution per axis.
        max_evals: Cumulative evaluation budget.
        label: Name used in messages.

    Returns:
        ``(value, error_estimate, evaluations)``.

    Raises:
        QuadratureNoConvergence: If the next evaluation would overrun the budget.
    """
    budget = default_budget(max_evals)
    res = tuple(max(int(n), 1) for n in start)
    base, used = evaluate(res)
    spent = used
    unit_cost = used / math.prod(res)
    total = math.inf

    def affordable(candidate: tuple[int, ...]) -> None:
        if spent + unit_cost * math.prod(candidate) > budget:
            raise QuadratureNoConvergence(
                f"{label}: resolution {candidate} would exceed the budget of {budget} "
                f"evaluations (last change {total:.3e}, target {tol:g})"
            )

    while True:
        changes: list[tuple[float, float]] = []
        for axis in range(len(res)):
            trial = res[:axis] + (2 * res[axis],) + res[axis + 1 :]
            affordable(trial)
            value, used = evaluate(trial)
            spent += used
            changes.append((abs(value - base), value))
        total = math.fsum(c for c, _ in changes)
        if total <= tol:
            return base + math.fsum(v - base for _, v in changes), total, spent
        # total > tol guarantees at least one axis above the share
        grow = [a for a, (c, _) in enumerate(changes) if c > tol / len(res)]
        res = tuple(2 * n if a in grow else n for a, n in enumerate(res))
        logger.debug(f"🔍 {label}: change {total:.3e}, refining to {res}")
        if len(grow) == 1:
            base = changes[grow[0]][1]
        else:
            affordable(res)
            base, used = evaluate(res)
            spent += used
