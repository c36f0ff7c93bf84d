"""Link functions: monotone mean maps with derivative handles.

A link carries its value, first two derivatives, optional finite bounds,
and (when known) a closed-form signed antiderivative. Everything downstream
(tail extension, estimation, simulation) talks to links through this bundle;
no symbolic differentiation happens anywhere in the package.
"""

from __future__ import annotations

import itertools
import math
from dataclasses import dataclass
from typing import Callable, Optional

import numpy as np
from scipy.special import expit

from .errors import AssumptionViolationError, NumericalError

__all__ = [
    "LinkFunction",
    "AssumptionBounds",
    "LinkViolation",
    "ValidationReport",
    "make_scaled_sigmoid",
    "make_comp_exponential",
    "link_by_name",
    "LINK_NAMES",
    "antiderivative_m",
    "validate_link",
    "compute_assumption_bounds",
]

#: Absolute tolerance for the fallback quadrature used when a link has no
#: closed-form antiderivative.
QUAD_TOL = 1e-10
QUAD_MAX_DEPTH = 60


@dataclass(frozen=True)
class LinkFunction:
    """Monotone increasing, twice differentiable mean function.

    ``value``, ``deriv1`` and ``deriv2`` accept scalars or numpy arrays.
    ``sup_value`` / ``inf_value`` record finite asymptotes when the link is
    bounded above / below; ``None`` means unbounded on that side.
    ``antiderivative`` is the closed form of the signed integral of ``value``
    from 0, when one is known.
    """

    name: str
    value: Callable
    deriv1: Callable
    deriv2: Callable
    sup_value: Optional[float] = None
    inf_value: Optional[float] = None
    antiderivative: Optional[Callable] = None


def make_scaled_sigmoid() -> LinkFunction:
    """Half-height logistic: value(x) = 1 / (2 + 2 e^(-x)), range (0, 1/2)."""

    def value(x):
        return 0.5 * expit(np.asarray(x, dtype=float))

    def deriv1(x):
        s = expit(np.asarray(x, dtype=float))
        return 0.5 * s * (1.0 - s)

    def deriv2(x):
        s = expit(np.asarray(x, dtype=float))
        return 0.5 * s * (1.0 - s) * (1.0 - 2.0 * s)

    def antideriv(x):
        # integral of 0.5*sigmoid is 0.5*softplus; shifted so it is 0 at 0
        return 0.5 * (np.logaddexp(0.0, np.asarray(x, dtype=float)) - math.log(2.0))

    return LinkFunction(
        name="scaled_sigmoid",
        value=value,
        deriv1=deriv1,
        deriv2=deriv2,
        sup_value=0.5,
        inf_value=0.0,
        antiderivative=antideriv,
    )


def make_comp_exponential() -> LinkFunction:
    """Saturating exponential: value(x) = 1 - e^(-x), bounded above by 1."""

    def value(x):
        with np.errstate(over="ignore"):
            return -np.expm1(-np.asarray(x, dtype=float))

    def deriv1(x):
        with np.errstate(over="ignore"):
            return np.exp(-np.asarray(x, dtype=float))

    def deriv2(x):
        with np.errstate(over="ignore"):
            return -np.exp(-np.asarray(x, dtype=float))

    def antideriv(x):
        # x - 1 + e^(-x), written to stay accurate near 0
        x = np.asarray(x, dtype=float)
        with np.errstate(over="ignore"):
            return x + np.expm1(-x)

    return LinkFunction(
        name="comp_exponential",
        value=value,
        deriv1=deriv1,
        deriv2=deriv2,
        sup_value=1.0,
        inf_value=None,
        antiderivative=antideriv,
    )


_LINK_FACTORIES = {
    "scaled_sigmoid": make_scaled_sigmoid,
    "comp_exponential": make_comp_exponential,
}

LINK_NAMES = tuple(sorted(_LINK_FACTORIES))


def link_by_name(name: str) -> LinkFunction:
    """Resolve a built-in link by its config-file name."""
    try:
        return _LINK_FACTORIES[name]()
    except KeyError:
        raise KeyError(
            f"unknown link {name!r}; available links: {', '.join(LINK_NAMES)}"
        ) from None


# --------------------------------------------------------------------------
# signed antiderivative
# --------------------------------------------------------------------------


def _adaptive_simpson(fn, a: float, b: float, tol: float, max_depth: int) -> float:
    if a == b:
        return 0.0
    sign = 1.0
    if b < a:
        a, b, sign = b, a, -1.0
    fa = float(fn(a))
    fb = float(fn(b))
    m = 0.5 * (a + b)
    fm = float(fn(m))
    whole = (b - a) / 6.0 * (fa + 4.0 * fm + fb)
    return sign * _simpson_recurse(fn, a, fa, b, fb, m, fm, whole, tol, max_depth)


def _simpson_recurse(fn, a, fa, b, fb, m, fm, whole, tol, depth):
    lm = 0.5 * (a + m)
    rm = 0.5 * (m + b)
    flm = float(fn(lm))
    frm = float(fn(rm))
    left = (m - a) / 6.0 * (fa + 4.0 * flm + fm)
    right = (b - m) / 6.0 * (fm + 4.0 * frm + fb)
    delta = left + right - whole
    if abs(delta) <= 15.0 * tol:
        return left + right + delta / 15.0
    # fail explicitly once the depth budget is spent or the subinterval has
    # collapsed to adjacent floats and can no longer be split
    if depth <= 0 or not (a < lm < m < rm < b):
        raise NumericalError(
            f"adaptive Simpson quadrature on [{a:g}, {b:g}] did not reach "
            f"tolerance {tol:g} within the subdivision limits"
        )
    half = 0.5 * tol
    return _simpson_recurse(
        fn, a, fa, m, fm, lm, flm, left, half, depth - 1
    ) + _simpson_recurse(fn, m, fm, b, fb, rm, frm, right, half, depth - 1)


def antiderivative_m(f: LinkFunction, x, tol: float = QUAD_TOL):
    """Signed integral of the link from 0 to x (negative of the reverse
    integral when x < 0).

    Uses the link's closed form when present, adaptive Simpson quadrature to
    absolute tolerance ``tol`` otherwise. Accepts scalars or arrays.

    Raises:
        NumericalError: quadrature failed to converge within the depth cap.
    """
    if f.antiderivative is not None:
        return f.antiderivative(x)
    arr = np.asarray(x, dtype=float)
    if arr.ndim == 0:
        return _adaptive_simpson(f.value, 0.0, float(arr), tol, QUAD_MAX_DEPTH)
    flat = [
        _adaptive_simpson(f.value, 0.0, float(xi), tol, QUAD_MAX_DEPTH)
        for xi in arr.ravel()
    ]
    return np.asarray(flat).reshape(arr.shape)


# --------------------------------------------------------------------------
# validation
# --------------------------------------------------------------------------


@dataclass(frozen=True)
class LinkViolation:
    kind: str
    x: float
    detail: str


@dataclass(frozen=True)
class ValidationReport:
    """Finite-difference and monotonicity audit of a link on a grid."""

    link_name: str
    points_checked: int
    violations: tuple

    @property
    def ok(self) -> bool:
        return not self.violations


_FD_STEP = 1e-6


def validate_link(f: LinkFunction, grid, tol: float) -> ValidationReport:
    """Check a link's derivative handles against central finite differences.

    At every grid point, deriv1 must match the finite difference of value and
    deriv2 the finite difference of deriv1 within ``tol`` (relative, with an
    absolute floor of 1); value must be strictly increasing across the sorted
    grid and respect sup_value/inf_value. Violations are reported, never
    raised.
    """
    grid = np.sort(np.asarray(list(grid), dtype=float))
    if grid.size == 0:
        raise ValueError("validation grid must be non-empty")
    if tol <= 0:
        raise ValueError("tol must be positive")
    h = _FD_STEP
    violations = []
    for x in grid:
        fd1 = (float(f.value(x + h)) - float(f.value(x - h))) / (2.0 * h)
        d1 = float(f.deriv1(x))
        if abs(fd1 - d1) > tol * max(1.0, abs(d1)):
            violations.append(
                LinkViolation("deriv1", float(x), f"fd={fd1!r} analytic={d1!r}")
            )
        fd2 = (float(f.deriv1(x + h)) - float(f.deriv1(x - h))) / (2.0 * h)
        d2 = float(f.deriv2(x))
        if abs(fd2 - d2) > tol * max(1.0, abs(d2)):
            violations.append(
                LinkViolation("deriv2", float(x), f"fd={fd2!r} analytic={d2!r}")
            )
        v = float(f.value(x))
        if f.sup_value is not None and not v < f.sup_value:
            violations.append(
                LinkViolation("sup_bound", float(x), f"value={v!r} sup={f.sup_value!r}")
            )
        if f.inf_value is not None and not v > f.inf_value:
            violations.append(
                LinkViolation("inf_bound", float(x), f"value={v!r} inf={f.inf_value!r}")
            )
    vals = np.asarray(f.value(grid), dtype=float)
    for i in range(len(grid) - 1):
        if not vals[i + 1] > vals[i]:
            violations.append(
                LinkViolation(
                    "monotone",
                    float(grid[i]),
                    f"value({grid[i]!r})={vals[i]!r} >= value({grid[i + 1]!r})={vals[i + 1]!r}",
                )
            )
    return ValidationReport(f.name, len(grid), tuple(violations))


# --------------------------------------------------------------------------
# assumption bounds
# --------------------------------------------------------------------------


@dataclass(frozen=True)
class AssumptionBounds:
    """Derivative bounds over the inputs reachable during estimation.

    ``kappa`` is the grid-estimated minimum of deriv1 over x in the unit box
    and theta within Euclidean distance 1 of a reference parameter; ``l_mu``
    and ``m_mu`` cap deriv1 and \\|deriv2\\| over the same argument interval.
    All three are estimates from a finite grid, not exact extrema.
    """

    kappa: float
    l_mu: float
    m_mu: float
    arg_lo: float
    arg_hi: float


def _reachable_argument_interval(theta_star: np.ndarray) -> tuple[float, float]:
    # For fixed x the dot product over the unit theta-ball spans
    # x.theta* +/- ||x||; the box extremes of x.theta* + ||x|| (convex) and
    # x.theta* - ||x|| (concave) both sit at box vertices, so enumerating
    # vertices gives the exact interval for moderate dimension.
    d = theta_star.size
    if d <= 16:
        corners = np.array(list(itertools.product((0.0, 1.0), repeat=d)))
    else:
        rng = np.random.default_rng(0)
        corners = (rng.random((4096, d)) < 0.5).astype(float)
        corners = np.vstack([corners, np.zeros(d), np.ones(d)])
    dots = corners @ theta_star
    norms = np.linalg.norm(corners, axis=1)
    return float(np.min(dots - norms)), float(np.max(dots + norms))


def compute_assumption_bounds(
    f: LinkFunction,
    theta_star,
    grid_density: int = 64,
    extra_interval: Optional[tuple] = None,
) -> AssumptionBounds:
    """Estimate the derivative bounds a link must satisfy to be usable.

    ``extra_interval`` optionally widens the range over which ``l_mu`` and
    ``m_mu`` are taken (e.g. to cover tail-extension knots).

    Raises:
        AssumptionViolationError: the deriv1 minimum estimate is not
            strictly positive (the link saturates over the reachable range).
    """
    theta_star = np.atleast_1d(np.asarray(theta_star, dtype=float))
    if grid_density < 2:
        raise ValueError("grid_density must be at least 2")
    z_lo, z_hi = _reachable_argument_interval(theta_star)
    n = max(65, grid_density * theta_star.size + 1)
    z_grid = np.linspace(z_lo, z_hi, n)
    kappa = float(np.min(f.deriv1(z_grid)))
    if kappa <= 0.0:
        raise AssumptionViolationError(
            f"deriv1 minimum estimate {kappa!r} over [{z_lo:g}, {z_hi:g}] is not "
            "positive; the link is numerically flat on the reachable range"
        )
    span_lo, span_hi = z_lo, z_hi
    if extra_interval is not None:
        span_lo = min(span_lo, float(extra_interval[0]))
        span_hi = max(span_hi, float(extra_interval[1]))
    wide = np.linspace(span_lo, span_hi, max(n, 513))
    l_mu = float(np.max(f.deriv1(wide)))
    m_mu = float(np.max(np.abs(f.deriv2(wide))))
    m_mu = max(m_mu, np.finfo(float).tiny)  # keep the field strictly positive
    return AssumptionBounds(
        kappa=kappa, l_mu=l_mu, m_mu=m_mu, arg_lo=z_lo, arg_hi=z_hi
    )
