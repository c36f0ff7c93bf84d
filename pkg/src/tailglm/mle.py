"""Pseudo log-likelihood estimation for GLM-style mean models.

The objective is sum_i w_i * (y_i * x_i.theta - M(x_i.theta)) where M is the
signed antiderivative of the fitted link. With a link that diverges at both
ends the objective is concave with a finite maximizer; with a bounded link
it can increase forever along a ray, which is exactly the failure mode the
certifier detects and the maximizer reports as ``unbounded``.
"""

from __future__ import annotations

from collections import deque
from dataclasses import dataclass, field
from enum import Enum
from typing import Optional, Sequence

import numpy as np

from .errors import NotApplicableError, NumericalError, ValidationError
from .links import LinkFunction
from .tailfix import CorrectedLink

__all__ = [
    "Dataset",
    "MleOptions",
    "MleStatus",
    "MleResult",
    "UnboundednessCertificate",
    "objective",
    "gradient",
    "hessian",
    "maximize",
    "certify_unbounded",
    "default_certificate_directions",
]

_ARMIJO = 1e-4
_MAX_HALVINGS = 60
_MAX_RIDGE_STEPS = 60
_ASCENT_WINDOW = 10


@dataclass(frozen=True)
class Dataset:
    """Estimation sample: feature rows in the unit box, outcomes in [0, 1].

    Optional nonnegative row weights let callers collapse repeated rows into
    one weighted row; the objective is linear in y and additive over rows,
    so aggregation is exact. Arrays are frozen read-only after validation.
    """

    X: np.ndarray
    y: np.ndarray
    weights: Optional[np.ndarray] = None

    def __post_init__(self):
        X = np.atleast_2d(np.asarray(self.X, dtype=float))
        y = np.atleast_1d(np.asarray(self.y, dtype=float))
        problems = []
        if X.ndim != 2:
            problems.append(f"X must be a 2-d array, got shape {X.shape}")
        if y.ndim != 1 or y.shape[0] != X.shape[0]:
            problems.append(
                f"y must be 1-d with one entry per row of X, got {y.shape} vs {X.shape}"
            )
        if X.size and (np.min(X) < 0.0 or np.max(X) > 1.0):
            problems.append("every feature coordinate must lie in [0, 1]")
        if y.size and (np.min(y) < 0.0 or np.max(y) > 1.0):
            problems.append("every outcome must lie in [0, 1]")
        w = self.weights
        if w is not None:
            w = np.atleast_1d(np.asarray(w, dtype=float))
            if w.shape != (X.shape[0],):
                problems.append(
                    f"weights must have one entry per row, got {w.shape}"
                )
            elif w.size and np.min(w) < 0.0:
                problems.append("weights must be nonnegative")
        if problems:
            raise ValidationError(problems)
        for name, arr in (("X", X), ("y", y), ("weights", w)):
            if arr is not None:
                arr.setflags(write=False)
            object.__setattr__(self, name, arr)

    @classmethod
    def from_rows(cls, rows, dim_d: Optional[int] = None) -> "Dataset":
        """Build from an iterable of (x_vector, y) pairs."""
        rows = list(rows)
        if not rows:
            if dim_d is None:
                raise ValidationError(["empty dataset needs an explicit dim_d"])
            return cls(np.zeros((0, dim_d)), np.zeros(0))
        X = np.asarray([r[0] for r in rows], dtype=float)
        y = np.asarray([r[1] for r in rows], dtype=float)
        return cls(X, y)

    @property
    def t(self) -> int:
        return self.X.shape[0]

    @property
    def dim_d(self) -> int:
        return self.X.shape[1]

    def effective_weights(self) -> np.ndarray:
        if self.weights is not None:
            return self.weights
        return np.ones(self.t)


@dataclass(frozen=True)
class MleOptions:
    """Solver settings.

    ``divergence_norm_cap`` is the iterate norm past which a still-increasing
    objective is reported as unbounded; it must exceed the scale of any
    legitimate maximizer for the problem at hand.
    """

    grad_tol: float = 1e-8
    max_iter: int = 200
    ridge_floor: float = 1e-10
    divergence_norm_cap: float = 1e8

    def __post_init__(self):
        problems = []
        if not self.grad_tol > 0:
            problems.append(f"grad_tol must be positive, got {self.grad_tol!r}")
        if not self.max_iter >= 1:
            problems.append(f"max_iter must be >= 1, got {self.max_iter!r}")
        if self.ridge_floor < 0:
            problems.append(f"ridge_floor must be nonnegative, got {self.ridge_floor!r}")
        if not self.divergence_norm_cap > 0:
            problems.append(
                f"divergence_norm_cap must be positive, got {self.divergence_norm_cap!r}"
            )
        if problems:
            raise ValidationError(problems)


class MleStatus(str, Enum):
    CONVERGED = "converged"
    UNBOUNDED = "unbounded"
    MAX_ITERATIONS = "max_iterations"


@dataclass(frozen=True)
class UnboundednessCertificate:
    """Direction along which the objective increases forever.

    Every row satisfies x_i.direction >= 0, at least one strictly, and every
    strict row has y_i >= sup(link). The directional derivative at scale s
    then stays above ``margin`` = sum_i w_i (y_i - sup) x_i.direction for all
    finite s, so no maximizer exists. ``margin == 0`` marks the weak boundary
    case (outcomes exactly at the bound: the objective climbs to a finite
    supremum it never attains).
    """

    direction: np.ndarray
    margin: float

    def __post_init__(self):
        d = np.asarray(self.direction, dtype=float)
        d.setflags(write=False)
        object.__setattr__(self, "direction", d)

    @property
    def is_weak(self) -> bool:
        return self.margin == 0.0


@dataclass(frozen=True)
class MleResult:
    """Outcome of a maximization run.

    ``theta_hat`` is present exactly when status is converged.
    ``final_theta_norm`` and ``objective_ascended`` describe the last iterate
    even for non-converged runs (they are what the divergence report rests
    on: norm past the cap while the objective never decreased and ended above
    its start).
    """

    status: MleStatus
    theta_hat: Optional[np.ndarray]
    grad_norm: float
    iterations: int
    certificate: Optional[UnboundednessCertificate] = None
    final_theta_norm: float = 0.0
    objective_ascended: bool = False


# --------------------------------------------------------------------------
# objective and derivatives
# --------------------------------------------------------------------------


def objective(data: Dataset, c: CorrectedLink, theta) -> float:
    """sum_i w_i * (y_i * x_i.theta - M(x_i.theta))."""
    theta = np.asarray(theta, dtype=float)
    if data.t == 0:
        return 0.0
    z = data.X @ theta
    with np.errstate(over="ignore", invalid="ignore"):
        terms = data.y * z - np.asarray(c.antiderivative(z), dtype=float)
        return float(np.dot(data.effective_weights(), terms))


def gradient(data: Dataset, c: CorrectedLink, theta) -> np.ndarray:
    """sum_i w_i * (y_i - h(x_i.theta)) * x_i."""
    theta = np.asarray(theta, dtype=float)
    if data.t == 0:
        return np.zeros(data.dim_d)
    z = data.X @ theta
    with np.errstate(over="ignore", invalid="ignore"):
        resid = data.effective_weights() * (data.y - np.asarray(c.value(z)))
        return data.X.T @ resid


def hessian(data: Dataset, c: CorrectedLink, theta) -> np.ndarray:
    """-sum_i w_i * h'(x_i.theta) * x_i x_i^T (negative semidefinite)."""
    theta = np.asarray(theta, dtype=float)
    if data.t == 0:
        return np.zeros((data.dim_d, data.dim_d))
    z = data.X @ theta
    with np.errstate(over="ignore", invalid="ignore"):
        slopes = data.effective_weights() * np.asarray(c.deriv1(z))
        return -(data.X.T * slopes) @ data.X


# --------------------------------------------------------------------------
# unboundedness certificate
# --------------------------------------------------------------------------


def default_certificate_directions(d: int) -> list:
    """All-ones first (the joint direction both counterexamples use), then
    the coordinate directions."""
    dirs = [np.ones(d)]
    dirs.extend(np.eye(d)[j] for j in range(d))
    return dirs


def certify_unbounded(
    data: Dataset, f: LinkFunction, candidates: Optional[Sequence] = None
) -> Optional[UnboundednessCertificate]:
    """Search candidate rays for a proof that no maximizer exists.

    A direction qualifies when no row points against it, at least one row
    points strictly along it, and every strict row's outcome is at or above
    the link's upper bound. Returns the first qualifying candidate, or None.

    Raises:
        NotApplicableError: the link is unbounded above (this failure mode
            needs a finite supremum).
    """
    if f.sup_value is None:
        raise NotApplicableError(
            f"{f.name!r} is unbounded above; ray divergence of this kind "
            "requires a link with a finite supremum"
        )
    if candidates is None:
        candidates = default_certificate_directions(data.dim_d)
    w = data.effective_weights()
    live = w > 0.0
    X, y, w = data.X[live], data.y[live], w[live]
    for v in candidates:
        v = np.asarray(v, dtype=float)
        s = X @ v
        if s.size == 0 or np.any(s < 0.0) or not np.any(s > 0.0):
            continue
        strict = s > 0.0
        if np.all(y[strict] >= f.sup_value):
            margin = float(np.dot(w * (y - f.sup_value), s))
            return UnboundednessCertificate(direction=v.copy(), margin=margin)
    return None


# --------------------------------------------------------------------------
# maximization
# --------------------------------------------------------------------------


def _ascended(history) -> bool:
    vals = list(history)
    if len(vals) < 2:
        return False
    diffs = np.diff(vals)
    return bool(np.all(diffs >= 0.0) and vals[-1] > vals[0])


def _escalate_along_ray(data, c, cert, opts) -> MleResult:
    # The certificate proves the objective climbs along this ray from any
    # point, so walk the ray geometrically until the norm cap certifies the
    # divergence report. Gradient steps cannot do this on their own: on the
    # boundary case the gradient decays exponentially and a damped Newton
    # iteration would stall at a finite, meaningless point.
    v = cert.direction
    theta = v.copy()
    history = deque([objective(data, c, np.zeros(data.dim_d))], maxlen=_ASCENT_WINDOW)
    start = history[0]
    iterations = 0
    while np.linalg.norm(theta) <= opts.divergence_norm_cap:
        history.append(objective(data, c, theta))
        theta = theta * 4.0
        iterations += 1
        if iterations > 400:  # unreachable with any sane cap; divide-by-zero guard
            raise NumericalError("ray escalation failed to pass the norm cap")
    final = objective(data, c, theta)
    history.append(final)
    return MleResult(
        status=MleStatus.UNBOUNDED,
        theta_hat=None,
        grad_norm=float(np.linalg.norm(gradient(data, c, theta))),
        iterations=iterations,
        certificate=cert,
        final_theta_norm=float(np.linalg.norm(theta)),
        objective_ascended=bool(np.all(np.diff(list(history)) >= 0.0) and final > start),
    )


def _ridge_newton_step(H, g, opts):
    d = g.shape[0]
    eye = np.eye(d)
    ridge = max(opts.ridge_floor, np.finfo(float).tiny)
    for _ in range(_MAX_RIDGE_STEPS):
        try:
            step = np.linalg.solve(-H + ridge * eye, g)
        except np.linalg.LinAlgError:
            ridge *= 4.0
            continue
        if np.all(np.isfinite(step)) and float(g @ step) > 0.0:
            return step
        ridge *= 4.0
    raise NumericalError(
        "could not produce an ascent direction from the Hessian at any ridge level"
    )


def maximize(data: Dataset, c: CorrectedLink, opts: MleOptions = MleOptions()) -> MleResult:
    """Damped ridge-Newton ascent of the pseudo log-likelihood from theta = 0.

    Stops with ``converged`` when the gradient norm falls below
    ``opts.grad_tol`` (theta_hat then satisfies the score equation to that
    tolerance), or with ``unbounded`` when the iterate norm passes
    ``opts.divergence_norm_cap`` while the objective is still climbing.
    Coordinates whose feature column is identically zero never move from 0.

    When the fitted link cannot diverge above (a bounded base with no upper
    tail attached), a qualifying certificate ray is followed directly: in
    that regime the objective can flatten exponentially, and gradient-driven
    steps would otherwise stall below the gradient tolerance at a point that
    maximizes nothing.

    Returns ``max_iterations`` when neither condition triggers within
    ``opts.max_iter`` (including a dead line search).
    """
    theta = np.zeros(data.dim_d)
    if not c.diverges_above and data.t > 0 and c.base.sup_value is not None:
        cert = certify_unbounded(data, c.base)
        if cert is not None:
            return _escalate_along_ray(data, c, cert, opts)

    obj = objective(data, c, theta)
    start_obj = obj
    history = deque([obj], maxlen=_ASCENT_WINDOW)
    iterations = 0
    for iterations in range(1, opts.max_iter + 1):
        g = gradient(data, c, theta)
        gnorm = float(np.linalg.norm(g))
        norm = float(np.linalg.norm(theta))
        if gnorm <= opts.grad_tol:
            return MleResult(
                status=MleStatus.CONVERGED,
                theta_hat=theta,
                grad_norm=gnorm,
                iterations=iterations - 1,
                final_theta_norm=norm,
                objective_ascended=_ascended([start_obj, obj]) or obj == start_obj,
            )
        if norm > opts.divergence_norm_cap and _ascended(history):
            return MleResult(
                status=MleStatus.UNBOUNDED,
                theta_hat=None,
                grad_norm=gnorm,
                iterations=iterations - 1,
                final_theta_norm=norm,
                objective_ascended=True,
            )
        H = hessian(data, c, theta)
        step = _ridge_newton_step(H, g, opts)
        slope = float(g @ step)
        scale = 1.0
        accepted = False
        for _ in range(_MAX_HALVINGS + 1):
            cand = theta + scale * step
            cand_obj = objective(data, c, cand)
            if np.isfinite(cand_obj) and cand_obj >= obj + _ARMIJO * scale * slope:
                accepted = True
                break
            scale *= 0.5
        if not accepted:
            break  # no float-representable ascent left
        theta = cand
        obj = cand_obj
        history.append(obj)
    return MleResult(
        status=MleStatus.MAX_ITERATIONS,
        theta_hat=None,
        grad_norm=float(np.linalg.norm(gradient(data, c, theta))),
        iterations=iterations,
        final_theta_norm=float(np.linalg.norm(theta)),
        objective_ascended=_ascended([start_obj, obj]),
    )
