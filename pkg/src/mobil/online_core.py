"""Baseline online learners on quadratic losses, plus numerical lemma audits.

Quadratic losses f(x) = x'Hx/2 + b'x + c0 keep every argmin exact (a linear
solve, refined by projection when constrained), so regret values here are
computed rather than estimated.  The audits turn the follow-the-leader
regret identities and the optima-shift bound into executable checks.
"""

from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np

from .geometry import Box, FeasibleSet, Unconstrained


@dataclass(frozen=True)
class QuadraticLoss:
    """f(x) = x' H x / 2 + b' x + c0 with H symmetric PSD."""

    H: np.ndarray
    b: np.ndarray
    c0: float = 0.0

    def __post_init__(self):
        H = np.atleast_2d(np.asarray(self.H, dtype=float))
        b = np.atleast_1d(np.asarray(self.b, dtype=float))
        if H.shape[0] != H.shape[1] or H.shape[0] != b.size:
            raise ValueError(f"inconsistent shapes H{H.shape}, b{b.shape}")
        if not np.allclose(H, H.T, atol=1e-10):
            raise ValueError("H must be symmetric")
        object.__setattr__(self, "H", 0.5 * (H + H.T))
        object.__setattr__(self, "b", b)

    @staticmethod
    def centered(A: np.ndarray, z: np.ndarray, scale: float = 1.0) -> "QuadraticLoss":
        """scale/2 * (x - z)' A (x - z)."""
        A = np.atleast_2d(np.asarray(A, dtype=float)) * scale
        z = np.atleast_1d(np.asarray(z, dtype=float))
        return QuadraticLoss(H=A, b=-A @ z, c0=0.5 * float(z @ A @ z))

    @property
    def dim(self) -> int:
        return self.b.size

    def value(self, x: np.ndarray) -> float:
        x = np.atleast_1d(np.asarray(x, dtype=float))
        return 0.5 * float(x @ self.H @ x) + float(self.b @ x) + self.c0

    def grad(self, x: np.ndarray) -> np.ndarray:
        x = np.atleast_1d(np.asarray(x, dtype=float))
        return self.H @ x + self.b

    def __add__(self, other: "QuadraticLoss") -> "QuadraticLoss":
        return QuadraticLoss(self.H + other.H, self.b + other.b, self.c0 + other.c0)

    def scaled(self, w: float) -> "QuadraticLoss":
        return QuadraticLoss(w * self.H, w * self.b, w * self.c0)


def argmin_quadratic(H: np.ndarray, b: np.ndarray, feasible: FeasibleSet, tol: float = 1e-10) -> np.ndarray:
    """Exact-to-tolerance argmin of x'Hx/2 + b'x over the feasible set.

    Strategy: linear solve first; if the unconstrained minimizer is feasible
    it is the answer.  Otherwise boxes with diagonal H separate by
    coordinate, and the general constrained case falls back to accelerated
    projected gradient iterated to ``tol`` on the fixed-point residual.
    """
    H = np.atleast_2d(np.asarray(H, dtype=float))
    b = np.atleast_1d(np.asarray(b, dtype=float))
    eigs = np.linalg.eigvalsh(H)
    lam_min, lam_max = float(eigs[0]), float(eigs[-1])
    if lam_min < -1e-8 * max(1.0, lam_max):
        raise ValueError("curvature matrix must be PSD")

    if lam_min > 1e-12 * max(1.0, lam_max):
        x_u = np.linalg.solve(H, -b)
        if isinstance(feasible, Unconstrained) or feasible.contains(x_u, tol=1e-12):
            return feasible.project(x_u)
    elif isinstance(feasible, Unconstrained):
        raise ValueError("singular curvature over an unbounded set has no unique argmin")

    if lam_max <= 1e-14 * max(1.0, float(np.linalg.norm(b))):
        # Pure linear objective on a compact set: optimum at a support point.
        _, x = feasible.support(-b)
        return x

    if isinstance(feasible, Box) and np.allclose(H, np.diag(np.diag(H)), atol=1e-14):
        d = np.diag(H)
        x = np.where(d > 0, -b / np.where(d > 0, d, 1.0), np.where(b > 0, feasible.lower, feasible.upper))
        x = np.where((d <= 0) & (b == 0), 0.0, x)
        return feasible.project(x)

    # FISTA on the compact set; linear rate for PD H.
    step = 1.0 / max(lam_max, 1e-300)
    x = feasible.project(np.zeros_like(b))
    y = x.copy()
    t = 1.0
    for _ in range(100_000):
        x_new = feasible.project(y - step * (H @ y + b))
        t_new = 0.5 * (1.0 + np.sqrt(1.0 + 4.0 * t * t))
        y = x_new + ((t - 1.0) / t_new) * (x_new - x)
        moved = np.linalg.norm(x_new - x)
        x, t = x_new, t_new
        if moved <= tol * (1.0 + np.linalg.norm(x)):
            fixed_point_gap = np.linalg.norm(x - feasible.project(x - step * (H @ x + b)))
            if fixed_point_gap <= tol * (1.0 + np.linalg.norm(x)):
                return x
    raise RuntimeError("projected-gradient argmin failed to reach tolerance")


def ftl_update(weighted_losses, feasible: FeasibleSet, tol: float = 1e-10) -> np.ndarray:
    """argmin over the set of sum_m w_m f_m for quadratic f_m."""
    if not weighted_losses:
        raise ValueError("need at least one loss")
    H = sum(w * loss.H for w, loss in weighted_losses)
    b = sum(w * loss.b for w, loss in weighted_losses)
    return argmin_quadratic(H, b, feasible, tol=tol)


def ftrl_update(grad_sum: np.ndarray, regularizers, feasible: FeasibleSet) -> np.ndarray:
    """argmin over the set of <grad_sum, x> + sum_m (c_m/2) ||x - a_m||^2.

    The accumulated regularizer is an isotropic quadratic, so the projection
    of its unconstrained minimizer is the exact constrained argmin.
    """
    grad_sum = np.asarray(grad_sum, dtype=float)
    total = 0.0
    pull = np.zeros_like(grad_sum)
    for coef, anchor in regularizers:
        if coef < 0:
            raise ValueError("regularizer coefficients must be >= 0")
        total += coef
        pull += coef * np.asarray(anchor, dtype=float)
    if total <= 0:
        raise ValueError("total regularizer curvature must be > 0")
    return feasible.project((pull - grad_sum) / total)


def weighted_regret(plays, feasible: FeasibleSet) -> float:
    """regret^w = sum w_n f_n(x_n) - min_x sum w_n f_n(x), exact for quadratics.

    ``plays`` is a sequence of (w, QuadraticLoss, x_played).
    """
    if not plays:
        raise ValueError("need at least one recorded round")
    incurred = sum(w * loss.value(x) for w, loss, x in plays)
    best = ftl_update([(w, loss) for w, loss, _ in plays], feasible)
    best_val = sum(w * loss.value(best) for w, loss, _ in plays)
    return float(incurred - best_val)


def ftl_lemma_audit(weighted_losses, decisions, feasible: FeasibleSet) -> dict:
    """Evaluate both FTL regret lemmas on an aligned loss/decision sequence.

    Returns regret, the stabilization upper bound
    sum_n (l_{1:n}(x_n) - l_{1:n}(x_n*)), the residual of the exact identity
    regret = sum_n (l_{1:n}(x_n) - l_{1:n}(x_n*) - Delta_n), and the Delta_n
    values, where Delta_{n+1} = l_{1:n}(x_{n+1}) - l_{1:n}(x_n*) and
    Delta_1 = 0.
    """
    N = len(weighted_losses)
    if N != len(decisions):
        raise ValueError("losses and decisions must be aligned per round")
    scaled = [loss.scaled(w) for w, loss in weighted_losses]
    prefix = scaled[0]
    stars = []
    star_vals = []
    play_prefix_vals = []
    deltas = [0.0]
    for n in range(N):
        if n > 0:
            prefix = prefix + scaled[n]
        x_star = argmin_quadratic(prefix.H, prefix.b, feasible)
        stars.append(x_star)
        star_vals.append(prefix.value(x_star))
        play_prefix_vals.append(prefix.value(np.asarray(decisions[n], dtype=float)))
        if n + 1 < N:
            deltas.append(prefix.value(np.asarray(decisions[n + 1], dtype=float)) - star_vals[-1])

    incurred = sum(loss.value(np.asarray(x, dtype=float)) for loss, x in zip(scaled, decisions))
    regret = incurred - star_vals[-1]
    strong_bound = sum(p - s for p, s in zip(play_prefix_vals, star_vals))
    identity_rhs = strong_bound - sum(deltas)
    scale = max(1.0, abs(regret), abs(strong_bound))
    return {
        "regret": float(regret),
        "strong_bound": float(strong_bound),
        "stronger_residual": float(abs(regret - identity_rhs)) / scale,
        "delta_values": np.asarray(deltas),
    }


def optima_shift_audit(f: QuadraticLoss, g: QuadraticLoss, feasible: FeasibleSet) -> dict:
    """Distance between argmin f and argmin(f+g) vs the ||grad g||/mu bound."""
    total = f + g
    mu = float(np.linalg.eigvalsh(total.H)[0])
    if mu <= 0:
        raise ValueError("f + g must be strongly convex")
    x_f = argmin_quadratic(f.H, f.b, feasible)
    x_fg = argmin_quadratic(total.H, total.b, feasible)
    distance = float(np.linalg.norm(x_f - x_fg))
    bound = float(np.linalg.norm(g.grad(x_f))) / mu
    return {"distance": distance, "bound": bound}


@dataclass
class RegretLedger:
    """Per-round weighted records with exact best-in-hindsight bookkeeping."""

    feasible: FeasibleSet
    p: float = 0.0
    rounds: list = field(default_factory=list)
    _acc: QuadraticLoss | None = None
    _weighted_loss_sum: float = 0.0
    _weight_sum: float = 0.0

    def record(self, n: int, w: float, loss: QuadraticLoss, x_played: np.ndarray) -> dict:
        x_played = np.asarray(x_played, dtype=float)
        value = loss.value(x_played)
        grad_norm = float(np.linalg.norm(loss.grad(x_played)))
        scaled = loss.scaled(w)
        self._acc = scaled if self._acc is None else self._acc + scaled
        self._weighted_loss_sum += w * value
        self._weight_sum += w
        entry = {"n": n, "w": w, "loss": float(value), "grad_norm": grad_norm}
        self.rounds.append(entry)
        return entry

    def best_in_hindsight(self) -> float:
        if self._acc is None:
            raise ValueError("no rounds recorded")
        x = argmin_quadratic(self._acc.H, self._acc.b, self.feasible)
        return float(self._acc.value(x))

    def weighted_regret(self) -> float:
        return self._weighted_loss_sum - self.best_in_hindsight()

    def average_regret(self) -> float:
        """R(p) = regret^w / w_{1:N}."""
        return self.weighted_regret() / self._weight_sum

    def class_gap_estimate(self) -> float:
        """Realized-sequence lower bound on the policy-class gap.

        min_x sum theta_n f_n(x) with theta_n = w_n / w_{1:N}; the defining
        max over adversarial sequences is not computable, so this is
        reported as a lower bound only.
        """
        return self.best_in_hindsight() / self._weight_sum
