"""Tail extension that makes a bounded link diverge at both ends.

A bounded link flattens out, which can leave the pseudo log-likelihood
without a maximizer. The fix splices a logarithmic tail onto the link past
an upper knot x_star (and, mirrored, below a lower knot x_dstar) chosen
beyond the reachable input range. The extended function matches the original
value and first two derivatives at each knot, keeps climbing to +/- infinity,
and is the original link, bit for bit, on the whole core interval.

With a = deriv1 and b = deriv2 at the upper knot (b < 0), the upper tail is

    value(x)  = mu(x_star) - (a^2/b) * log1p((x - x_star) * (-b) / a)
    deriv1(x) = -a^2 / (b * (x - x_star - a/b))
    deriv2(x) =  a^2 / (b * (x - x_star - a/b)^2)

which is algebraically the splice mu(x_star) + (a^2/b) ln(-a/b)
- (a^2/b) ln(x - x_star - a/b) arranged around log1p for stability. The
lower tail is the mirror image with b > 0 and distance measured downward.
"""

from __future__ import annotations

import math
from dataclasses import dataclass
from functools import cached_property
from types import SimpleNamespace
from typing import Optional

import numpy as np

from .errors import ConstructionError
from .links import LinkFunction, antiderivative_m

__all__ = [
    "InputRangeBounds",
    "SearchParams",
    "TailKnots",
    "CorrectedLink",
    "find_upper_knot",
    "find_lower_knot",
    "build_corrected_link",
    "passthrough_link",
]


@dataclass(frozen=True)
class InputRangeBounds:
    """Caller-supplied bounds on the reachable linear predictor.

    ``upper_u`` must dominate the sum of positive parameter parts and
    ``lower_l`` must sit below minus the sum of negative parts, so the
    interval always contains 0.
    """

    upper_u: float
    lower_l: float
    dim_d: int

    def __post_init__(self):
        if not self.lower_l <= 0.0 <= self.upper_u:
            raise ValueError(
                f"bounds must satisfy lower_l <= 0 <= upper_u, got "
                f"[{self.lower_l!r}, {self.upper_u!r}]"
            )
        if self.dim_d < 1:
            raise ValueError(f"dim_d must be a positive integer, got {self.dim_d!r}")


@dataclass(frozen=True)
class SearchParams:
    """Knot-scan settings: step, scan span past the boundary, curvature
    margin, and the division guard on the curvature magnitude."""

    step: float = 0.5
    span: float = 1e4
    curv_eps: float = 1e-12
    degenerate_floor: float = 1e-300


@dataclass(frozen=True)
class TailKnots:
    """Splice points and the frozen derivative constants at each of them.

    A ``None`` knot means that side of the link already diverges and is left
    untouched.
    """

    x_star: Optional[float] = None
    a_plus: Optional[float] = None
    b_plus: Optional[float] = None
    x_dstar: Optional[float] = None
    a_minus: Optional[float] = None
    b_minus: Optional[float] = None


def find_upper_knot(
    f: LinkFunction, bounds: InputRangeBounds, search: SearchParams = SearchParams()
) -> Optional[float]:
    """First scanned x >= upper_u + dim_d with strictly negative curvature.

    Returns ``None`` when the link is unbounded above (no extension needed).

    Raises:
        ConstructionError: the link claims an upper bound but no qualifying
            knot appears within the scan span (a malformed link).
    """
    if f.sup_value is None:
        return None
    start = bounds.upper_u + bounds.dim_d
    steps = int(math.floor(search.span / search.step)) + 1
    for i in range(steps):
        x = start + i * search.step
        curv = float(f.deriv2(x))
        if curv < -search.curv_eps and abs(curv) >= search.degenerate_floor:
            return x
    raise ConstructionError(
        f"no point with negative curvature found in [{start:g}, "
        f"{start + search.span:g}] although {f.name!r} claims an upper bound"
    )


def find_lower_knot(
    f: LinkFunction, bounds: InputRangeBounds, search: SearchParams = SearchParams()
) -> Optional[float]:
    """Mirror image of find_upper_knot: first x <= lower_l - dim_d with
    strictly positive curvature; ``None`` when unbounded below."""
    if f.inf_value is None:
        return None
    start = bounds.lower_l - bounds.dim_d
    steps = int(math.floor(search.span / search.step)) + 1
    for i in range(steps):
        x = start - i * search.step
        curv = float(f.deriv2(x))
        if curv > search.curv_eps and abs(curv) >= search.degenerate_floor:
            return x
    raise ConstructionError(
        f"no point with positive curvature found in [{start - search.span:g}, "
        f"{start:g}] although {f.name!r} claims a lower bound"
    )


@dataclass(frozen=True)
class CorrectedLink:
    """A link with logarithmic tails spliced on beyond its knots.

    On the core interval (between the knots, which always covers
    [lower_l, upper_u]) every method delegates to the base link, so core
    values are identical to the original, not merely close. Instances are
    immutable and safe to share across threads.
    """

    base: LinkFunction
    knots: TailKnots
    bounds: InputRangeBounds

    @cached_property
    def _upper(self):
        k = self.knots
        if k.x_star is None:
            return None
        a, b = k.a_plus, k.b_plus
        return SimpleNamespace(
            x=k.x_star,
            coeff=-a * a / b,          # positive: b < 0
            offset=-a / b,             # positive distance to the log pole
            mu=float(self.base.value(k.x_star)),
            m=float(antiderivative_m(self.base, k.x_star)),
        )

    @cached_property
    def _lower(self):
        k = self.knots
        if k.x_dstar is None:
            return None
        a, b = k.a_minus, k.b_minus
        return SimpleNamespace(
            x=k.x_dstar,
            coeff=a * a / b,           # positive: b > 0
            offset=a / b,
            mu=float(self.base.value(k.x_dstar)),
            m=float(antiderivative_m(self.base, k.x_dstar)),
        )

    @property
    def diverges_above(self) -> bool:
        return self.knots.x_star is not None or self.base.sup_value is None

    @property
    def diverges_below(self) -> bool:
        return self.knots.x_dstar is not None or self.base.inf_value is None

    # ------------------------------------------------------------------
    # piecewise evaluation
    # ------------------------------------------------------------------

    def _split(self, arr):
        up = self._upper
        lo = self._lower
        mask_up = (arr > up.x) if up is not None else np.zeros(arr.shape, dtype=bool)
        mask_lo = (arr < lo.x) if lo is not None else np.zeros(arr.shape, dtype=bool)
        return ~(mask_up | mask_lo), mask_up, mask_lo

    def _piecewise(self, x, core_fn, upper_fn, lower_fn):
        arr = np.asarray(x, dtype=float)
        scalar = arr.ndim == 0
        arr = np.atleast_1d(arr)
        out = np.empty(arr.shape, dtype=float)
        core, up, lo = self._split(arr)
        if core.any():
            out[core] = core_fn(arr[core])
        if up.any():
            out[up] = upper_fn(arr[up], self._upper)
        if lo.any():
            out[lo] = lower_fn(arr[lo], self._lower)
        return out.item() if scalar else out

    def value(self, x):
        return self._piecewise(
            x,
            self.base.value,
            lambda t, u: u.mu + u.coeff * np.log1p((t - u.x) / u.offset),
            lambda t, l: l.mu - l.coeff * np.log1p((l.x - t) / l.offset),
        )

    def deriv1(self, x):
        return self._piecewise(
            x,
            self.base.deriv1,
            lambda t, u: u.coeff / ((t - u.x) + u.offset),
            lambda t, l: l.coeff / ((l.x - t) + l.offset),
        )

    def deriv2(self, x):
        return self._piecewise(
            x,
            self.base.deriv2,
            lambda t, u: -u.coeff / ((t - u.x) + u.offset) ** 2,
            lambda t, l: l.coeff / ((l.x - t) + l.offset) ** 2,
        )

    def antiderivative(self, x):
        """Signed integral of value from 0, stitched continuously at the
        knots (the tails integrate in closed form via u ln u - u)."""
        return self._piecewise(
            x,
            lambda t: np.asarray(antiderivative_m(self.base, t), dtype=float),
            self._antideriv_upper,
            self._antideriv_lower,
        )

    @staticmethod
    def _antideriv_upper(t, u):
        d = t - u.x
        big = d + u.offset
        return u.m + u.mu * d + u.coeff * (big * np.log1p(d / u.offset) - d)

    @staticmethod
    def _antideriv_lower(t, l):
        d = l.x - t
        big = d + l.offset
        return l.m - l.mu * d + l.coeff * (big * np.log1p(d / l.offset) - d)


def build_corrected_link(
    f: LinkFunction,
    bounds: InputRangeBounds,
    search: SearchParams = SearchParams(),
) -> CorrectedLink:
    """Assemble the tail-extended link for ``f`` over ``bounds``.

    Scans for the knots, freezes the derivative constants there (the tail
    formulas divide by them, so degenerate curvature points are skipped and
    re-scanned), and returns the piecewise link.
    """
    x_star = find_upper_knot(f, bounds, search)
    a_plus = b_plus = None
    while x_star is not None:
        a_plus = float(f.deriv1(x_star))
        b_plus = float(f.deriv2(x_star))
        if a_plus <= 0.0:
            raise ConstructionError(
                f"{f.name!r} has non-positive slope {a_plus!r} at the upper "
                f"knot {x_star!r}; it is not monotone increasing"
            )
        if abs(b_plus) >= search.degenerate_floor:
            break
        # curvature too small to divide by: resume the scan past this point
        shifted = InputRangeBounds(
            x_star + search.step - bounds.dim_d, bounds.lower_l, bounds.dim_d
        )
        x_star = find_upper_knot(f, shifted, search)

    x_dstar = find_lower_knot(f, bounds, search)
    a_minus = b_minus = None
    while x_dstar is not None:
        a_minus = float(f.deriv1(x_dstar))
        b_minus = float(f.deriv2(x_dstar))
        if a_minus <= 0.0:
            raise ConstructionError(
                f"{f.name!r} has non-positive slope {a_minus!r} at the lower "
                f"knot {x_dstar!r}; it is not monotone increasing"
            )
        if abs(b_minus) >= search.degenerate_floor:
            break
        shifted = InputRangeBounds(
            bounds.upper_u, x_dstar - search.step + bounds.dim_d, bounds.dim_d
        )
        x_dstar = find_lower_knot(f, shifted, search)

    knots = TailKnots(
        x_star=x_star,
        a_plus=a_plus,
        b_plus=b_plus,
        x_dstar=x_dstar,
        a_minus=a_minus,
        b_minus=b_minus,
    )
    return CorrectedLink(base=f, knots=knots, bounds=bounds)


def passthrough_link(
    f: LinkFunction, bounds: Optional[InputRangeBounds] = None
) -> CorrectedLink:
    """Wrap a link with no tail modification at all.

    Evaluates the base link everywhere; this is the uncorrected estimator's
    view of the world and exists so both estimators share one code path.
    """
    if bounds is None:
        bounds = InputRangeBounds(upper_u=0.0, lower_l=0.0, dim_d=1)
    return CorrectedLink(base=f, knots=TailKnots(), bounds=bounds)
