"""GLM-bandit simulation harness.

An environment draws rewards with mean link(arm . theta_star); the algorithm
spends tau rounds on uniformly random arms, then refits the parameter by
maximum pseudo log-likelihood on all history each round and picks the arm
with the highest optimistic score. Running the same environment once with
the tail-corrected link and once with the raw bounded link is the package's
side-by-side demonstration: the raw fit can have no maximizer on lucky
all-success histories, which shows up here as divergence incidents.

Refits aggregate the history per arm (exactly: the objective is linear in
the outcome and additive over rows), so a T-round run costs O(T * K) fits
on at most 2K weighted rows instead of O(T^2) raw rows.
"""

from __future__ import annotations

from dataclasses import dataclass, field
from typing import Optional, Sequence

import numpy as np

from .errors import EnvironmentInvariantError, ValidationError
from .links import LinkFunction
from .mle import Dataset, MleOptions, MleResult, MleStatus, maximize
from .tailfix import CorrectedLink, InputRangeBounds, build_corrected_link, passthrough_link

__all__ = [
    "BanditEnv",
    "UcbGlmConfig",
    "BanditTrace",
    "ComparisonReport",
    "ErrorCheckpoint",
    "sample_reward",
    "run_ucb_glm",
    "run_comparison",
    "estimation_error_curve",
]

REWARD_MODELS = ("bernoulli", "clipped_gaussian")
_V_RIDGE = 1e-6


@dataclass(frozen=True)
class BanditEnv:
    """Arm set, true parameter, link and reward law for one simulation.

    The bounds must cover the reachable inputs (sum of positive parts of
    theta_star below upper_u, mirrored below), so a link corrected over the
    same bounds reproduces the environment's conditional means exactly.
    """

    arms: np.ndarray
    theta_star: np.ndarray
    link: LinkFunction
    bounds: InputRangeBounds
    reward_model: str = "bernoulli"
    sigma: float = 0.1
    seed: int = 0

    def __post_init__(self):
        arms = np.atleast_2d(np.asarray(self.arms, dtype=float))
        theta = np.atleast_1d(np.asarray(self.theta_star, dtype=float))
        problems = []
        if arms.shape[1] != theta.shape[0]:
            problems.append(
                f"arms have dimension {arms.shape[1]} but theta_star has {theta.shape[0]}"
            )
        if arms.size and (np.min(arms) < 0.0 or np.max(arms) > 1.0):
            problems.append("arm coordinates must lie in [0, 1]")
        if self.reward_model not in REWARD_MODELS:
            problems.append(
                f"unknown reward model {self.reward_model!r}; choose from {REWARD_MODELS}"
            )
        if self.sigma < 0:
            problems.append(f"sigma must be nonnegative, got {self.sigma!r}")
        if problems:
            raise ValidationError(problems)
        pos = float(np.sum(np.maximum(theta, 0.0)))
        neg = -float(np.sum(np.maximum(-theta, 0.0)))
        if pos > self.bounds.upper_u or neg < self.bounds.lower_l:
            raise ValidationError(
                [
                    f"theta_star reaches inputs [{neg!r}, {pos!r}] outside the "
                    f"declared bounds [{self.bounds.lower_l!r}, {self.bounds.upper_u!r}]"
                ]
            )
        means = np.asarray(self.link.value(arms @ theta), dtype=float)
        bad = (means < 0.0) | (means > 1.0)
        if np.any(bad):
            raise EnvironmentInvariantError(
                f"arm means {means[bad]!r} fall outside [0, 1]; rewards cannot "
                "be drawn from them"
            )
        for name, arr in (("arms", arms), ("theta_star", theta)):
            arr.setflags(write=False)
            object.__setattr__(self, name, arr)

    @property
    def n_arms(self) -> int:
        return self.arms.shape[0]

    @property
    def dim_d(self) -> int:
        return self.arms.shape[1]

    @property
    def arm_means(self) -> np.ndarray:
        return np.asarray(self.link.value(self.arms @ self.theta_star), dtype=float)

    @property
    def optimal_arm(self) -> int:
        return int(np.argmax(self.arm_means))


@dataclass(frozen=True)
class UcbGlmConfig:
    """Algorithm settings: tau random warm-up rounds out of horizon_t total,
    optimism width alpha, and the algorithm-side RNG seed."""

    tau: int
    horizon_t: int
    alpha: float = 1.0
    seed: int = 0

    def __post_init__(self):
        problems = []
        if self.tau < 0:
            problems.append(f"tau must be nonnegative, got {self.tau!r}")
        if self.horizon_t < 1:
            problems.append(f"horizon_t must be positive, got {self.horizon_t!r}")
        if self.tau > self.horizon_t:
            problems.append(
                f"tau ({self.tau!r}) cannot exceed horizon_t ({self.horizon_t!r})"
            )
        if self.alpha < 0:
            problems.append(f"alpha must be nonnegative, got {self.alpha!r}")
        if problems:
            raise ValidationError(problems)


@dataclass(frozen=True)
class BanditTrace:
    """Per-round log of one simulation run."""

    label: str
    env_seed: int
    cfg_seed: int
    arms: np.ndarray          # chosen arm index per round
    rewards: np.ndarray
    regrets: np.ndarray       # instantaneous mean gaps, nonnegative
    est_errors: np.ndarray    # ||theta_hat - theta_star||, nan when no estimate
    statuses: tuple           # per-round fit status ("random" during warm-up)
    divergence_incidents: int

    @property
    def horizon(self) -> int:
        return self.arms.shape[0]

    @property
    def cumulative_regret(self) -> np.ndarray:
        return np.cumsum(self.regrets)


@dataclass(frozen=True)
class ComparisonReport:
    """The same seeded run fitted twice: with and without the tail fix."""

    corrected: BanditTrace
    uncorrected: BanditTrace


@dataclass(frozen=True)
class ErrorCheckpoint:
    t: int
    median_error: float  # nan when no seed produced an estimate at this t
    n_converged: int


def sample_reward(env: BanditEnv, arm_index: int, rng: np.random.Generator) -> float:
    """Draw one reward in [0, 1] for the given arm; deterministic in rng state.

    Raises:
        EnvironmentInvariantError: the arm's mean is outside [0, 1].
    """
    mean = float(env.link.value(float(env.arms[arm_index] @ env.theta_star)))
    if not 0.0 <= mean <= 1.0:
        raise EnvironmentInvariantError(
            f"arm {arm_index} has mean {mean!r} outside [0, 1]"
        )
    if env.reward_model == "bernoulli":
        return float(rng.random() < mean)
    return float(np.clip(mean + env.sigma * rng.standard_normal(), 0.0, 1.0))


def _history_dataset(env: BanditEnv, counts: np.ndarray, sums: np.ndarray) -> Dataset:
    """Collapse pull history into exact weighted rows (2 per arm at most)."""
    rows_x, rows_y, w = [], [], []
    for k in range(env.n_arms):
        n = counts[k]
        if n <= 0:
            continue
        if env.reward_model == "bernoulli":
            wins = sums[k]
            if wins > 0:
                rows_x.append(env.arms[k])
                rows_y.append(1.0)
                w.append(float(wins))
            if n - wins > 0:
                rows_x.append(env.arms[k])
                rows_y.append(0.0)
                w.append(float(n - wins))
        else:
            rows_x.append(env.arms[k])
            rows_y.append(float(sums[k] / n))
            w.append(float(n))
    if not rows_x:
        return Dataset(np.zeros((0, env.dim_d)), np.zeros(0))
    return Dataset(np.asarray(rows_x), np.asarray(rows_y), weights=np.asarray(w))


def _ucb_scores(env, theta, counts, alpha) -> np.ndarray:
    V = (env.arms.T * counts) @ env.arms + _V_RIDGE * np.eye(env.dim_d)
    widths = np.einsum("ij,ji->i", env.arms, np.linalg.solve(V, env.arms.T))
    return env.arms @ theta + alpha * np.sqrt(np.maximum(widths, 0.0))


def run_ucb_glm(
    env: BanditEnv,
    cfg: UcbGlmConfig,
    c: CorrectedLink,
    opts: MleOptions = MleOptions(),
    label: str = "corrected",
) -> BanditTrace:
    """One full bandit run fitted with the given (corrected or raw) link.

    Rounds below tau play uniformly at random. Every later round refits on
    the whole history; a non-converged fit never crashes the run: the round
    falls back to a random arm, and unbounded fits increment the divergence
    incident counter.
    """
    rng = np.random.default_rng([env.seed, cfg.seed])
    means = env.arm_means
    best = float(np.max(means))
    counts = np.zeros(env.n_arms, dtype=np.int64)
    sums = np.zeros(env.n_arms)
    arms_log = np.zeros(cfg.horizon_t, dtype=np.int64)
    rewards = np.zeros(cfg.horizon_t)
    regrets = np.zeros(cfg.horizon_t)
    errors = np.full(cfg.horizon_t, np.nan)
    statuses = []
    incidents = 0
    for t in range(cfg.horizon_t):
        if t < cfg.tau:
            arm = int(rng.integers(env.n_arms))
            statuses.append("random")
        else:
            fit = maximize(_history_dataset(env, counts, sums), c, opts)
            statuses.append(fit.status.value)
            if fit.status is MleStatus.CONVERGED:
                errors[t] = float(np.linalg.norm(fit.theta_hat - env.theta_star))
                arm = int(np.argmax(_ucb_scores(env, fit.theta_hat, counts, cfg.alpha)))
            else:
                if fit.status is MleStatus.UNBOUNDED:
                    incidents += 1
                arm = int(rng.integers(env.n_arms))
        y = sample_reward(env, arm, rng)
        counts[arm] += 1
        sums[arm] += y
        arms_log[t] = arm
        rewards[t] = y
        regrets[t] = best - means[arm]
    return BanditTrace(
        label=label,
        env_seed=env.seed,
        cfg_seed=cfg.seed,
        arms=arms_log,
        rewards=rewards,
        regrets=regrets,
        est_errors=errors,
        statuses=tuple(statuses),
        divergence_incidents=incidents,
    )


def run_comparison(
    env: BanditEnv,
    cfg: UcbGlmConfig,
    bounds: Optional[InputRangeBounds] = None,
    opts: MleOptions = MleOptions(),
) -> ComparisonReport:
    """Run the identical seed sequence twice: tail-corrected vs raw link."""
    if bounds is None:
        bounds = env.bounds
    corrected = build_corrected_link(env.link, bounds)
    uncorrected = passthrough_link(env.link, bounds)
    return ComparisonReport(
        corrected=run_ucb_glm(env, cfg, corrected, opts, label="corrected"),
        uncorrected=run_ucb_glm(env, cfg, uncorrected, opts, label="uncorrected"),
    )


def estimation_error_curve(
    env: BanditEnv,
    cfg: UcbGlmConfig,
    c: CorrectedLink,
    opts: MleOptions = MleOptions(),
    seeds: Sequence[int] = (0,),
    checkpoints: Optional[Sequence[int]] = None,
) -> list:
    """Median estimate error under pure random play at log-spaced sample sizes.

    Each seed replays ``max(checkpoints)`` random rounds on a private stream
    derived from (env.seed, cfg.seed, replicate); the fit at each checkpoint
    uses exactly the first t rounds. Checkpoints where a seed's fit did not
    converge contribute nothing for that seed; a checkpoint nobody converged
    at carries a nan median.
    """
    if not seeds:
        raise ValidationError(["estimation_error_curve needs at least one seed"])
    if checkpoints is None:
        top = cfg.horizon_t
        raw = np.geomspace(max(4, min(10, top)), top, num=8)
        checkpoints = sorted({int(round(v)) for v in raw})
    checkpoints = sorted(int(t) for t in checkpoints)
    horizon = max(checkpoints)
    per_checkpoint = {t: [] for t in checkpoints}
    for replicate in seeds:
        rng = np.random.default_rng([env.seed, cfg.seed, int(replicate)])
        counts = np.zeros(env.n_arms, dtype=np.int64)
        sums = np.zeros(env.n_arms)
        marks = set(checkpoints)
        for t in range(1, horizon + 1):
            arm = int(rng.integers(env.n_arms))
            y = sample_reward(env, arm, rng)
            counts[arm] += 1
            sums[arm] += y
            if t in marks:
                fit = maximize(_history_dataset(env, counts, sums), c, opts)
                if fit.status is MleStatus.CONVERGED:
                    per_checkpoint[t].append(
                        float(np.linalg.norm(fit.theta_hat - env.theta_star))
                    )
    curve = []
    for t in checkpoints:
        errs = per_checkpoint[t]
        curve.append(
            ErrorCheckpoint(
                t=t,
                median_error=float(np.median(errs)) if errs else float("nan"),
                n_converged=len(errs),
            )
        )
    return curve
