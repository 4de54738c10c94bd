"""Monotone variational inequalities and stochastic Mirror-Prox.

The solver follows the reversed-order two-step form

    x_hat_{n+1} = Prox_{x_hat_n}(gamma_n g_n),        g_n    ~ F(x_n)
    x_{n+1}     = Prox_{x_hat_{n+1}}(gamma_{n+1} ghat_{n+1}), ghat_{n+1} ~ F(x_hat_{n+1})

with output x_bar_N = sum_n gamma_n x_n / gamma_{1:N}.  Candidate accuracy is
the dual gap ERR(x) = max_y <F(y), x - y>, computed exactly by support-point
enumeration when the inner maximization is linear (skew-affine operators:
bilinear games) and otherwise reported as a sampled lower bound.  The
equivalence harness replays the same problem through the two-step proximal
learner to confirm the iterate identity on unconstrained problems.
"""

from __future__ import annotations

import math
from dataclasses import dataclass

import numpy as np

from .algorithms import ExactOperatorModel, ProxState, mobil_prox_round
from .geometry import (
    BregmanGenerator,
    FeasibleSet,
    ProductSet,
    Simplex,
    SquaredL2,
    Unconstrained,
)


@dataclass(frozen=True)
class AffineOperator:
    """F(x) = M x + b with M + M' PSD (monotone); verified on construction."""

    M: np.ndarray
    b: np.ndarray
    feasible: FeasibleSet

    def __post_init__(self):
        M = np.atleast_2d(np.asarray(self.M, dtype=float))
        b = np.atleast_1d(np.asarray(self.b, dtype=float))
        if M.shape[0] != M.shape[1] or M.shape[0] != b.size or b.size != self.feasible.dimension:
            raise ValueError("operator dimensions inconsistent with the feasible set")
        sym_eigs = np.linalg.eigvalsh(0.5 * (M + M.T))
        scale = max(1.0, float(np.abs(M).max()))
        if sym_eigs[0] < -1e-10 * scale:
            raise ValueError(f"operator is not monotone: lambda_min(sym) = {sym_eigs[0]:.3e}")
        object.__setattr__(self, "M", M)
        object.__setattr__(self, "b", b)

    def __call__(self, x: np.ndarray) -> np.ndarray:
        return self.M @ x + self.b

    @property
    def lipschitz(self) -> float:
        return float(np.linalg.norm(self.M, 2))

    @property
    def strong_monotonicity(self) -> float:
        return max(float(np.linalg.eigvalsh(0.5 * (self.M + self.M.T))[0]), 0.0)

    @property
    def is_skew(self) -> bool:
        return bool(np.allclose(self.M, -self.M.T, atol=1e-12))


def bilinear_game(payoff: np.ndarray) -> AffineOperator:
    """Zero-sum matrix game as a VI over the product of two simplices.

    Row player x minimizes x' A y, column player y maximizes it:
    F(x, y) = (A y, -A' x), a skew monotone operator.
    """
    A = np.atleast_2d(np.asarray(payoff, dtype=float))
    m, k = A.shape
    M = np.block([[np.zeros((m, m)), A], [-A.T, np.zeros((k, k))]])
    feas = ProductSet(dimension=m + k, parts=(Simplex(m), Simplex(k)))
    return AffineOperator(M=M, b=np.zeros(m + k), feasible=feas)


def rps_payoff() -> np.ndarray:
    """Rock-paper-scissors: uniform play is the unique equilibrium."""
    return np.array([[0.0, -1.0, 1.0], [1.0, 0.0, -1.0], [-1.0, 1.0, 0.0]])


def random_skew_game(rows: int, cols: int, rng: np.random.Generator, scale: float = 1.0) -> AffineOperator:
    return bilinear_game(scale * rng.uniform(-1.0, 1.0, size=(rows, cols)))


def monotonicity_report(op: AffineOperator, rng: np.random.Generator, n_pairs: int = 1000) -> dict:
    """Definitional taxonomy check on sampled feasible pairs plus spectra."""
    worst = math.inf
    for _ in range(n_pairs):
        x = op.feasible.sample(rng)
        y = op.feasible.sample(rng)
        worst = min(worst, float((op(x) - op(y)) @ (x - y)))
    mu = float(np.linalg.eigvalsh(0.5 * (op.M + op.M.T))[0])
    return {
        "sampled_min_pairing": worst,
        "monotone": mu >= -1e-10,
        "strongly_monotone_mu": max(mu, 0.0),
        "lipschitz": op.lipschitz,
    }


@dataclass(frozen=True)
class ErrGap:
    value: float
    exact: bool


def err_gap(op: AffineOperator, x: np.ndarray) -> ErrGap:
    """Dual accuracy gap ERR(x) = max_y <F(y), x - y>.

    Exact via support points when the inner problem is linear in y (skew
    operators); otherwise a 10^4-sample maximization labeled as a lower
    bound, never silently presented as the true gap.
    """
    x = np.asarray(x, dtype=float)
    if not op.feasible.contains(x, tol=1e-7):
        raise ValueError("ERR is defined for feasible candidates only")
    if op.is_skew:
        # <F(y), x - y> = <M'x - b, y> + <b, x> for skew M.
        val, _ = op.feasible.support(op.M.T @ x - op.b)
        return ErrGap(value=float(val + op.b @ x), exact=True)
    rng = np.random.default_rng(np.random.SeedSequence((0xE77, op.feasible.dimension)))
    best = 0.0  # y = x is always a candidate
    for _ in range(10_000):
        y = op.feasible.sample(rng)
        best = max(best, float(op(y) @ (x - y)))
    return ErrGap(value=best, exact=False)


# ---------------------------------------------------------------------------
# Mirror-Prox


@dataclass
class MirrorProxConfig:
    gammas: np.ndarray | float
    generator: BregmanGenerator
    feasible: FeasibleSet
    noise_sigma: float = 0.0

    def resolve_gammas(self, N: int) -> np.ndarray:
        g = np.asarray(self.gammas, dtype=float)
        if g.ndim == 0:
            g = np.full(N, float(g))
        if g.size < N:
            raise ValueError(f"need {N} step sizes, got {g.size}")
        if np.any(g[:N] <= 0):
            raise ValueError("step sizes must be positive")
        return g[:N]


@dataclass
class MirrorProxResult:
    x_bar: np.ndarray
    xs: np.ndarray
    x_hats: np.ndarray
    gammas: np.ndarray
    trace: list

    def running_err_exact(self) -> np.ndarray:
        return np.array([row["err_gap"] for row in self.trace])


def _prox_center(gen: BregmanGenerator, feasible: FeasibleSet) -> np.ndarray:
    if isinstance(feasible, Simplex):
        return feasible.center()
    if isinstance(feasible, ProductSet):
        return np.concatenate([_prox_center(gen, p) for p in feasible.parts])
    return feasible.project(np.zeros(feasible.dimension))


def _truncated_noise(rng: np.random.Generator, sigma: float, dim: int) -> np.ndarray:
    """Additive noise with E||e||^2 <= sigma^2 and ||e|| <= 3 sigma."""
    if sigma == 0.0:
        return np.zeros(dim)
    u = rng.standard_normal(dim) / math.sqrt(dim)
    norm = np.linalg.norm(u)
    if norm > 3.0:
        u *= 3.0 / norm
    return sigma * u


def mirror_prox_run(op: AffineOperator, config: MirrorProxConfig, N: int,
                    rng: np.random.Generator | None = None,
                    x0: np.ndarray | None = None, track_err: bool = True) -> MirrorProxResult:
    """Run N rounds and return the gamma-weighted average of the x iterates."""
    if N < 1:
        raise ValueError("N must be >= 1")
    gammas = config.resolve_gammas(N)
    gen, feas = config.generator, config.feasible
    if rng is None:
        rng = np.random.default_rng(0)
    track = track_err and not isinstance(feas, Unconstrained)
    x = _prox_center(gen, feas) if x0 is None else feas.project(np.asarray(x0, dtype=float))
    x_hat = x.copy()
    xs = [x.copy()]
    x_hats = [x_hat.copy()]
    trace = []
    weighted = gammas[0] * x
    gamma_sum = gammas[0]

    def log_round(n, g_err_sq, gap):
        row = {"n": n, "gamma_n": gammas[n - 1], "pred_err_sq": g_err_sq,
               "pi_gap": float(np.linalg.norm(xs[n - 1] - x_hats[n - 1])),
               "err_gap": gap}
        trace.append(row)

    gap0 = err_gap(op, weighted / gamma_sum).value if track else math.nan
    log_round(1, 0.0, gap0)

    for n in range(1, N):
        g_n = op(xs[n - 1]) + _truncated_noise(rng, config.noise_sigma, feas.dimension)
        x_hat = gen.prox(feas, x_hat, gammas[n - 1] * g_n)
        ghat = op(x_hat) + _truncated_noise(rng, config.noise_sigma, feas.dimension)
        x = gen.prox(feas, x_hat, gammas[n] * ghat)
        xs.append(x.copy())
        x_hats.append(x_hat.copy())
        weighted += gammas[n] * x
        gamma_sum += gammas[n]
        gap = err_gap(op, weighted / gamma_sum).value if track else math.nan
        log_round(n + 1, float(np.sum((g_n - ghat) ** 2)), gap)

    return MirrorProxResult(x_bar=weighted / gamma_sum, xs=np.stack(xs),
                            x_hats=np.stack(x_hats), gammas=gammas, trace=trace)


# ---------------------------------------------------------------------------
# Step rules and the bounds they certify


def deterministic_gamma(alpha: float, L: float) -> float:
    """gamma = alpha / (sqrt(2) L), the deterministic safe step."""
    return alpha / (math.sqrt(2.0) * L)


def deterministic_err_bound(alpha: float, L: float, omega_sq: float, N: int) -> float:
    """ERR(x_bar_N) <= sqrt(2) Omega^2 L / (alpha N)."""
    return math.sqrt(2.0) * omega_sq * L / (alpha * N)


def stochastic_gamma(alpha: float, L: float, omega_sq: float, sigma: float, N: int) -> float:
    return min(alpha / (math.sqrt(3.0) * L),
               alpha * math.sqrt(omega_sq) * math.sqrt(2.0 / (7.0 * N * sigma**2)))


def stochastic_err_bound(alpha: float, L: float, omega_sq: float, sigma: float, N: int) -> float:
    """max{ 7 Omega^2 L / (2 alpha N), Omega sqrt(14 sigma^2 / N) }."""
    return max(3.5 * omega_sq * L / (alpha * N),
               math.sqrt(omega_sq) * math.sqrt(14.0 * sigma**2 / N))


def weighted_gammas(p: float, N: int, alpha: float, L: float) -> np.ndarray:
    """gamma_n = (alpha / L) w_{1:n} / max_m w_m for w_n = n^p."""
    w = np.arange(1, N + 1, dtype=float) ** p
    return (alpha / L) * np.cumsum(w) / w.max()


def weighted_err_bound(p: float, N: int, alpha: float, L: float, omega_sq: float) -> float:
    """ERR(x_bar_N) <= (Omega^2 L / alpha) max_n w_n / w_{1:N}."""
    w = np.arange(1, N + 1, dtype=float) ** p
    return omega_sq * L / alpha * w.max() / w.sum()


# ---------------------------------------------------------------------------
# Equivalence with the two-step proximal learner


def equivalence_check(op: AffineOperator, gammas, N: int,
                      x0: np.ndarray | None = None) -> dict:
    """Replay mirror-prox and MoBIL-Prox side by side on an unconstrained problem.

    Uses w_n = gamma_n, the exact operator as the model, and a first-round
    regularizer with w_1 r_1 = B(.||x_1) (squared-L2 geometry), zero
    afterwards.  Returns the max deviation across both iterate sequences.
    """
    if not isinstance(op.feasible, Unconstrained):
        raise ValueError("iterate equivalence is established for unconstrained problems only")
    gen = SquaredL2()
    config = MirrorProxConfig(gammas=np.asarray(gammas, dtype=float), generator=gen,
                              feasible=op.feasible)
    mp = mirror_prox_run(op, config, N, x0=x0, track_err=False)

    gammas = config.resolve_gammas(N)
    x1 = mp.xs[0]
    model = ExactOperatorModel(op)
    state = ProxState.initial(x1)
    pis = [state.pi.copy()]
    pi_hats = [state.pi_hat.copy()]
    for n in range(1, N):
        # w_1 r_1 = B(.||x1) means the anchored coefficient is exactly 1.
        coef = 1.0 if n == 1 else 0.0
        state = mobil_prox_round(state, op(state.pi), gammas[n - 1], gammas[n],
                                 coef, model, op.feasible)
        pis.append(state.pi.copy())
        pi_hats.append(state.pi_hat.copy())

    dev_x = np.linalg.norm(mp.xs - np.stack(pis), axis=1)
    dev_hat = np.linalg.norm(mp.x_hats - np.stack(pi_hats), axis=1)
    return {
        "max_deviation": float(max(dev_x.max(), dev_hat.max())),
        "x_deviation": dev_x,
        "x_hat_deviation": dev_hat,
        "mirror_prox": mp,
        "prox_policies": np.stack(pis),
    }
