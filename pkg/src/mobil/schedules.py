"""Round weights w_n = n^p, polynomial-sum estimates, and step-size schedules.

The weighted online learners in this package all share the same machinery:
polynomial round weights, an end-of-run output index sampled proportionally
to those weights, a bias-corrected moving-average estimator of the gradient
prediction-error norm, and the cumulative regularizer-coefficient schedule

    S(n) = (1 + c * n^k) / eta_n,   k = p + 1/2 by default,

whose per-round increments supply the strong-convexity coefficients of the
proximal regularizers.
"""

from __future__ import annotations

import enum
import math
from dataclasses import dataclass

import numpy as np


class ConvexityMode(enum.Enum):
    """Curvature regime assumed of the model-learning losses.

    STRONGLY_CONVEX keeps exact follow-the-leader model updates; CONVEX
    switches the model learner to regularized, linearized updates whose
    regularizer grows polynomially (see algorithms.ModelLearner).
    """

    STRONGLY_CONVEX = "strongly_convex"
    CONVEX = "convex"


@dataclass(frozen=True)
class WeightSchedule:
    """Polynomial weights w(n) = n^p plus the regularizer growth exponent.

    ``growth_exponent`` overrides the default k = p + 1/2 used by
    ``regularizer_increment``; leave it None for the standard schedule.
    """

    p: float
    mode: ConvexityMode = ConvexityMode.STRONGLY_CONVEX
    growth_exponent: float | None = None

    def weight(self, n: int) -> float:
        return weight(n, self.p)

    def effective_growth(self) -> float:
        if self.growth_exponent is not None:
            return self.growth_exponent
        return self.p + 0.5


@dataclass(frozen=True)
class AdaptiveStepConfig:
    """Parameters of the adaptive step-size rule eta_n = eta * lambda_n."""

    eta: float
    c: float = 0.1
    beta: float = 0.999

    def __post_init__(self) -> None:
        if not self.eta > 0:
            raise ValueError(f"eta must be > 0, got {self.eta}")
        if self.c < 0:
            raise ValueError(f"c must be >= 0, got {self.c}")
        if not 0 <= self.beta < 1:
            raise ValueError(f"beta must lie in [0, 1), got {self.beta}")


@dataclass
class StepState:
    """Uncorrected moving average of observed error norms."""

    lambda_bar: float = 0.0
    count: int = 0


def weight(n: int, p: float) -> float:
    """w_n = n^p for n >= 1."""
    if n < 1:
        raise ValueError(f"round index must be >= 1, got {n}")
    return float(n) ** p


def weight_prefix_sum(N: int, p: float) -> float:
    """Direct summation of sum_{n=1}^{N} n^p."""
    if N < 1:
        raise ValueError(f"N must be >= 1, got {N}")
    return float(np.sum(np.arange(1, N + 1, dtype=float) ** p))


def poly_sum_bracket(N: int, p: float) -> tuple[float, float]:
    """Analytic lower/upper bounds for sum_{n=1}^{N} n^p.

    Regimes:
      p > 0:       [N^(p+1)/(p+1),            (N+1)^(p+1)/(p+1)]
      p = 0:       [N, N]
      -1 < p < 0:  [((N+1)^(p+1) - 1)/(p+1),  (N^(p+1) + p)/(p+1)]
      p = -1:      [ln(N+1),                  ln N + 1]

    Raises for p < -1 where no two-sided bracket is provided.
    """
    if N < 1:
        raise ValueError(f"N must be >= 1, got {N}")
    if p < -1:
        raise ValueError(f"bracket unsupported for p < -1, got p={p}")
    if p > 0:
        return N ** (p + 1) / (p + 1), (N + 1) ** (p + 1) / (p + 1)
    if p == 0:
        return float(N), float(N)
    if p == -1:
        return math.log(N + 1), math.log(N) + 1.0
    return ((N + 1) ** (p + 1) - 1.0) / (p + 1), (N ** (p + 1) + p) / (p + 1)


def sample_output_index(weights, rng: np.random.Generator) -> int:
    """Sample K in {1..N} with P(K = n) proportional to weights[n-1]."""
    w = np.asarray(weights, dtype=float)
    if w.size == 0:
        raise ValueError("weight list must be nonempty")
    if np.any(w <= 0):
        raise ValueError("all weights must be positive")
    probs = w / w.sum()
    return int(rng.choice(w.size, p=probs)) + 1


def adaptive_lambda(state: StepState, err_norm: float, beta: float) -> tuple[StepState, float]:
    """One step of the bias-corrected moving average of error norms.

    lambda_bar_n = beta * lambda_bar_{n-1} + (1 - beta) * err_norm,
    lambda_n     = lambda_bar_n / (1 - beta^n).
    """
    if err_norm < 0:
        raise ValueError(f"err_norm must be >= 0, got {err_norm}")
    count = state.count + 1
    lam_bar = beta * state.lambda_bar + (1.0 - beta) * err_norm
    correction = 1.0 - beta**count
    lam = lam_bar / correction if correction > 0 else err_norm
    return StepState(lambda_bar=lam_bar, count=count), lam


def cumulative_reg_target(n: int, schedule: WeightSchedule, step: AdaptiveStepConfig, eta_n: float) -> float:
    """S(n) = (1 + c * n^k) / eta_n with k the schedule's growth exponent."""
    if eta_n <= 0:
        raise ValueError(f"eta_n must be > 0, got {eta_n}")
    if n < 1:
        raise ValueError(f"round index must be >= 1, got {n}")
    k = schedule.effective_growth()
    return (1.0 + step.c * float(n) ** k) / eta_n


def regularizer_increment(
    n: int,
    schedule: WeightSchedule,
    step: AdaptiveStepConfig,
    eta_n: float,
    prev_cumulative: float = 0.0,
) -> tuple[float, float]:
    """Per-round regularizer coefficient w_n * alpha_n * mu_f.

    Returns ``(increment, new_cumulative)`` where the increment is
    clamp(S(n; eta_n) - prev_cumulative, >= 0).  The target uses only the
    current eta_n (no retroactive rescaling of past rounds), and negative
    differences are clamped because a negative coefficient would destroy
    the strong convexity of the accumulated objective.
    """
    target = cumulative_reg_target(n, schedule, step, eta_n)
    increment = max(target - prev_cumulative, 0.0)
    return increment, prev_cumulative + increment
