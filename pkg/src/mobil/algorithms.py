"""Model-based online imitation learners: MoBIL-VI, MoBIL-Prox, baselines.

Round n of the driver: run the current policy to obtain the per-round loss
estimate and its gradient g_n, update the predictive model (weight w_n / n),
then update the policy.  MoBIL-Prox takes two proximal steps,

    pi_hat_{n+1} = argmin_pi sum_m w_m (<g_m, pi> + r_m(pi)),
    pi_{n+1}     = argmin_pi w_{n+1} <ghat_{n+1}, pi>
                            + sum_m w_m (<g_m, pi> + r_m(pi)),

where ghat_{n+1} is the model's gradient prediction queried at pi_hat_{n+1}
and r_m is a quadratic anchored at pi_m whose coefficient comes from the
adaptive schedule.  MoBIL-VI instead solves the fixed-point problem mixing
the accumulated quadratic losses with the model's diagonal vector field.
All algorithm-level code works on flattened decision vectors.
"""

from __future__ import annotations

import math
from dataclasses import dataclass, replace

import numpy as np

from .config import ExperimentConfig, resolve_eta
from .geometry import FeasibleSet, box
from .linear_env import (
    Benchmark,
    LinearDynamics,
    LinearGaussianPolicy,
    RunningNormalizer,
    TransitionStats,
    UnstableClosedLoopError,
    build_benchmark,
    exact_J,
    il_loss_from_moment,
    rollout_batch,
    simulator_gradient,
    state_second_moment,
)
from .online_core import QuadraticLoss, RegretLedger, argmin_quadratic, ftrl_update
from .schedules import (
    AdaptiveStepConfig,
    ConvexityMode,
    StepState,
    WeightSchedule,
    adaptive_lambda,
    regularizer_increment,
    sample_output_index,
    weight,
)

_LAMBDA_FLOOR = 1e-12  # keeps eta_n > 0 when the error estimate collapses


# ---------------------------------------------------------------------------
# Predictive models (first-order oracles for the next round's gradient)


class PredictiveModel:
    """First-order oracle producing ghat estimates of the next gradient.

    ``predict`` consumes and returns flat vectors; matrix-shaped oracles
    reshape internally.  ``observe`` feeds round data with Algorithm-style
    weight w_n / n; ``transition_loss`` evaluates the model-learning
    per-round cost at the current model (0.0 for variants that carry no
    transition model).
    """

    variant = "abstract"

    def predict(self, v: np.ndarray) -> np.ndarray:
        raise NotImplementedError

    def observe(self, stats: TransitionStats, weight: float, n: int) -> None:
        pass

    def note_env_gradient(self, norm: float) -> None:
        """Hook for oracles that bound predictions by the observed gradient scale."""

    def transition_loss(self, stats: TransitionStats) -> float:
        return 0.0

    def dynamics_estimate(self) -> LinearDynamics | None:
        return None


class ZeroModel(PredictiveModel):
    """No model: ghat = 0, reducing MoBIL-Prox to the FTRL baseline."""

    variant = "none"

    def __init__(self, dim: int):
        self.dim = dim

    def predict(self, v):
        return np.zeros(self.dim)


class ExactSimulatorModel(PredictiveModel):
    """Simulator with the true dynamics; optional Monte-Carlo gradients."""

    variant = "exact"

    def __init__(self, bench: Benchmark, mode: str = "closed_form",
                 rng: np.random.Generator | None = None, n_rollouts: int = 256):
        self.bench = bench
        self.mode = mode
        self.rng = rng
        self.n_rollouts = n_rollouts
        self._true_M = np.hstack([bench.dyn.A, bench.dyn.B])

    def predict(self, v):
        K = v.reshape(self.bench.gain_shape)
        g = simulator_gradient(self.bench.dyn, K, self.bench.K_star, self.bench.Sigma_a,
                               mode=self.mode, rng=self.rng, n_rollouts=self.n_rollouts)
        return g.ravel()

    def transition_loss(self, stats):
        return stats.loss_and_grad(self._true_M)[0]

    def dynamics_estimate(self):
        return self.bench.dyn


@dataclass
class ModelLearnerState:
    """Sufficient statistics of the weighted transition least squares."""

    zz: np.ndarray
    sz: np.ndarray
    weight_sum: float = 0.0
    count: int = 0


def model_ftl_update(state: ModelLearnerState, stats: TransitionStats, weight: float) -> ModelLearnerState:
    """Fold one round of transition data (weight w_n / n) into the learner."""
    return ModelLearnerState(
        zz=state.zz + weight * stats.zz,
        sz=state.sz + weight * stats.sz,
        weight_sum=state.weight_sum + weight,
        count=state.count + 1,
    )


def solve_model(state: ModelLearnerState) -> np.ndarray:
    """Minimum-norm weighted least-squares solution M = [A_hat  B_hat]."""
    if state.weight_sum == 0.0:
        return np.zeros_like(state.sz)
    sol, *_ = np.linalg.lstsq(state.zz, state.sz.T, rcond=None)
    return sol.T


class ModelLearner:
    """Online transition-model learner.

    mode "ftl" solves the weighted least squares exactly each round (the
    strongly convex treatment).  mode "convex_ftrl" linearizes the
    per-round cost at the current iterate and plays FTRL with anchored
    quadratic regularizers whose cumulative coefficient grows like
    n^{(p-1)+1/2}, the growth matching merely-convex model losses.
    """

    def __init__(self, d_s: int, d_z: int, mode: str = "ftl", p: float = 2.0,
                 reg_c: float = 0.1, reg_eta: float = 1.0):
        self.mode = mode
        self.state = ModelLearnerState(zz=np.zeros((d_z, d_z)), sz=np.zeros((d_s, d_z)))
        self.M = np.zeros((d_s, d_z))
        # convex-FTRL bookkeeping
        self._growth = max(p - 1.0, 0.0) + 0.5
        self._reg_c = reg_c
        self._reg_eta = reg_eta
        self._lin = np.zeros((d_s, d_z))
        self._reg_sum = 0.0
        self._reg_pull = np.zeros((d_s, d_z))
        self._cum = 0.0

    def observe(self, stats: TransitionStats, weight: float, n: int) -> None:
        if self.mode == "ftl":
            self.state = model_ftl_update(self.state, stats, weight)
            self.M = solve_model(self.state)
            return
        _, grad = stats.loss_and_grad(self.M)
        self._lin += weight * grad
        target = (1.0 + self._reg_c * float(n) ** self._growth) / self._reg_eta
        coef = max(target - self._cum, 0.0)
        self._cum += coef
        self._reg_sum += coef
        self._reg_pull += coef * self.M
        self.M = (self._reg_pull - self._lin) / self._reg_sum


class LearnedSimulatorModel(PredictiveModel):
    """Simulator over an online-learned linear dynamics model.

    Predictions are norm-capped: the analysis assumes bounded gradient
    estimates, and a half-trained dynamics model queried at an aggressive
    gain can otherwise emit astronomically large vectors.
    """

    variant = "learned"

    def __init__(self, bench: Benchmark, learner: ModelLearner):
        self.bench = bench
        self.learner = learner
        self.unstable_predictions = 0

    def _split(self):
        d_s = self.bench.dyn.state_dim
        return self.learner.M[:, :d_s], self.learner.M[:, d_s:]

    def predict(self, v):
        K = v.reshape(self.bench.gain_shape)
        A_hat, B_hat = self._split()
        dyn_est = replace(self.bench.dyn, A=A_hat, B=B_hat)
        try:
            g = simulator_gradient(dyn_est, K, self.bench.K_star, self.bench.Sigma_a).ravel()
        except UnstableClosedLoopError:
            # Admit ignorance rather than propagate an unbounded prediction.
            self.unstable_predictions += 1
            return np.zeros(v.size)
        return g

    def observe(self, stats, weight, n):
        self.learner.observe(stats, weight, n)

    def transition_loss(self, stats):
        return stats.loss_and_grad(self.learner.M)[0]

    def dynamics_estimate(self):
        A_hat, B_hat = self._split()
        return replace(self.bench.dyn, A=A_hat, B=B_hat)


class LastCostModel(PredictiveModel):
    """Predict with the previous round's cost: ghat = grad f_tilde_n(query)."""

    variant = "last_cost"

    def __init__(self, bench: Benchmark):
        self.bench = bench
        self._moment: np.ndarray | None = None

    def set_moment(self, S: np.ndarray) -> None:
        self._moment = S

    def predict(self, v):
        if self._moment is None:
            return np.zeros(v.size)
        K = v.reshape(self.bench.gain_shape)
        _, g = il_loss_from_moment(self._moment, K, self.bench.K_star, self.bench.Sigma_a)
        return g.ravel()


class AdversarialModel(PredictiveModel):
    """Bounded random predictions, for robustness experiments."""

    variant = "adversarial"

    def __init__(self, dim: int, rng: np.random.Generator, radius: float = 1.0):
        self.dim = dim
        self.rng = rng
        self.radius = radius

    def predict(self, v):
        u = self.rng.standard_normal(self.dim)
        u /= max(np.linalg.norm(u), 1e-300)
        return self.radius * self.rng.uniform() ** (1.0 / self.dim) * u


class ExactOperatorModel(PredictiveModel):
    """Wrap an exact vector field; used by the mirror-prox equivalence harness."""

    variant = "operator"

    def __init__(self, operator):
        self.operator = operator

    def predict(self, v):
        return self.operator(v)


# ---------------------------------------------------------------------------
# MoBIL-Prox round


@dataclass
class ProxState:
    """Accumulated two-step proximal state; policies stay feasible."""

    pi: np.ndarray
    pi_hat: np.ndarray
    grad_sum: np.ndarray
    reg_coef_sum: float = 0.0
    reg_pull: np.ndarray | None = None
    ghat_next: np.ndarray | None = None
    n: int = 1

    @staticmethod
    def initial(pi0: np.ndarray) -> "ProxState":
        pi0 = np.asarray(pi0, dtype=float)
        return ProxState(pi=pi0.copy(), pi_hat=pi0.copy(), grad_sum=np.zeros_like(pi0),
                         reg_pull=np.zeros_like(pi0))


def mobil_prox_round(state: ProxState, g_n: np.ndarray, w_n: float, w_next: float,
                     reg_coef_n: float, model: PredictiveModel,
                     feasible: FeasibleSet) -> ProxState:
    """Advance MoBIL-Prox by one round.

    The round-n regularizer (coefficient ``reg_coef_n``, anchored at the
    current policy) must be fixed before calling.  Returns the state holding
    pi_{n+1}, pi_hat_{n+1}, and the cached prediction ghat_{n+1}.
    """
    if reg_coef_n < 0:
        raise ValueError("regularizer coefficient must be >= 0")
    grad_sum = state.grad_sum + w_n * np.asarray(g_n, dtype=float)
    coef_sum = state.reg_coef_sum + reg_coef_n
    pull = state.reg_pull + reg_coef_n * state.pi
    if coef_sum <= 0:
        raise ValueError("accumulated regularizer curvature must be > 0")
    pi_hat = feasible.project((pull - grad_sum) / coef_sum)
    ghat = np.asarray(model.predict(pi_hat), dtype=float)
    pi = feasible.project((pull - grad_sum - w_next * ghat) / coef_sum)
    return ProxState(pi=pi, pi_hat=pi_hat, grad_sum=grad_sum, reg_coef_sum=coef_sum,
                     reg_pull=pull, ghat_next=ghat, n=state.n + 1)


# ---------------------------------------------------------------------------
# MoBIL-VI round


def vi_gap(Phi_value: np.ndarray, x: np.ndarray, feasible: FeasibleSet) -> float:
    """min over the set of <Phi(x), x' - x>; >= -tol certifies the VI."""
    val, _ = feasible.support(-np.asarray(Phi_value, dtype=float))
    return float(-val - Phi_value @ x)


def mobil_vi_round(H_acc: np.ndarray, b_acc: np.ndarray, model: PredictiveModel,
                   w_next: float, feasible: FeasibleSet, start: np.ndarray,
                   damping: float = 0.5, tol: float = 1e-10,
                   max_iter: int = 200) -> tuple[np.ndarray, dict]:
    """Solve the round's VI by damped fixed-point iteration.

    Iterates pi <- (1 - damping) pi + damping * argmin over the set of the
    accumulated quadratic plus w_{n+1} <model(pi), .>, stopping when the
    undamped target moves less than ``tol`` relative to the iterate.
    """
    pi = np.asarray(start, dtype=float).copy()
    converged = False
    iterations = 0
    for iterations in range(1, max_iter + 1):
        ghat = np.asarray(model.predict(pi), dtype=float)
        target = argmin_quadratic(H_acc, b_acc + w_next * ghat, feasible)
        if np.linalg.norm(target - pi) <= tol * (1.0 + np.linalg.norm(target)):
            pi = target
            converged = True
            break
        pi = (1.0 - damping) * pi + damping * target
    Phi = H_acc @ pi + b_acc + w_next * np.asarray(model.predict(pi), dtype=float)
    info = {"converged": converged, "iterations": iterations,
            "vi_gap": vi_gap(Phi, pi, feasible)}
    return pi, info


# ---------------------------------------------------------------------------
# Driver


@dataclass
class RoundRecord:
    """Per-round trace entry; the first nine fields form the CSV schema."""

    n: int
    w: float
    loss: float
    grad_norm: float
    pred_err_sq: float
    model_loss: float
    pi_gap: float
    avg_weighted_regret: float
    J_estimate: float
    lambda_n: float = math.nan
    eta_n: float = math.nan
    reg_coef: float = 0.0
    sigma_g_sq: float = 0.0
    model_bias_sq: float = math.nan
    pi: np.ndarray | None = None
    pi_hat: np.ndarray | None = None
    g: np.ndarray | None = None
    ghat: np.ndarray | None = None

    CSV_FIELDS = ("n", "w_n", "loss", "grad_norm", "pred_err_sq", "model_loss",
                  "pi_gap", "avg_weighted_regret", "J_estimate")

    def csv_values(self):
        return (self.n, self.w, self.loss, self.grad_norm, self.pred_err_sq,
                self.model_loss, self.pi_gap, self.avg_weighted_regret, self.J_estimate)


@dataclass
class MobilRunResult:
    records: list
    output_policy: np.ndarray
    output_round: int
    benchmark: Benchmark
    feasible: FeasibleSet
    weights: np.ndarray
    reg_coefs: np.ndarray
    final_policy: np.ndarray
    _ledger: RegretLedger | None = None

    @property
    def policies(self):
        return [r.pi for r in self.records]

    def pathwise_regret(self) -> float:
        """Regret of the surrogate linear-plus-regularizer losses."""
        grad_sum = np.zeros_like(self.records[0].g)
        regs = []
        incurred = 0.0
        for rec in self.records:
            grad_sum += rec.w * rec.g
            regs.append((rec.reg_coef, rec.pi))
            incurred += rec.w * float(rec.g @ rec.pi)
        best = ftrl_update(grad_sum, regs, self.feasible)
        best_val = float(grad_sum @ best)
        for coef, anchor in regs:
            best_val += 0.5 * coef * float(np.sum((best - anchor) ** 2))
        return incurred - best_val

    def weighted_regret(self) -> float:
        return self._ledger.weighted_regret()

    def average_regret(self) -> float:
        return self._ledger.average_regret()


def make_model(cfg: ExperimentConfig, bench: Benchmark, dim: int,
               rng: np.random.Generator | None = None) -> PredictiveModel:
    if cfg.model_oracle == "none":
        return ZeroModel(dim)
    if cfg.model_oracle == "exact":
        mode = "monte_carlo" if cfg.model_mc_rollouts > 0 else "closed_form"
        return ExactSimulatorModel(bench, mode=mode, rng=rng, n_rollouts=max(cfg.model_mc_rollouts, 1))
    if cfg.model_oracle == "learned":
        d_s, d_a = bench.dyn.state_dim, bench.dyn.action_dim
        mode = "ftl" if cfg.convexity_mode == "strongly_convex" else "convex_ftrl"
        learner = ModelLearner(d_s=d_s, d_z=d_s + d_a, mode=mode, p=cfg.p)
        return LearnedSimulatorModel(bench, learner)
    if cfg.model_oracle == "last_cost":
        return LastCostModel(bench)
    raise ValueError(f"unknown model oracle {cfg.model_oracle!r}")


def run_mobil(cfg: ExperimentConfig, model: PredictiveModel | None = None) -> MobilRunResult:
    """Execute the weighted online IL loop and sample the output policy.

    Bit-reproducible for a fixed config: all randomness derives from
    SeedSequence((seed, n, j)) streams, so trace prefixes do not depend on N.
    """
    if cfg.algorithm not in ("mobil_prox", "mobil_vi", "ftrl_baseline"):
        raise ValueError(f"run_mobil cannot run algorithm {cfg.algorithm!r}")
    bench = build_benchmark(
        state_dim=cfg.env.state_dim, action_dim=cfg.env.action_dim, horizon=cfg.env.horizon,
        world_seed=cfg.env.world_seed, spectral_radius=cfg.env.spectral_radius,
        action_noise=cfg.env.action_noise, process_noise=cfg.env.process_noise,
        init_cov=cfg.env.init_cov, box_halfwidth=cfg.env.box_halfwidth,
        expert_gain_scale=cfg.env.expert_gain_scale, control_scale=cfg.env.control_scale,
        excitation_floor=cfg.env.excitation_floor,
    )
    shape = bench.gain_shape
    dim = shape[0] * shape[1]
    feasible = box(cfg.env.box_halfwidth, dim)
    v_star = bench.K_star.ravel()
    Sa_inv = np.linalg.inv(bench.Sigma_a)

    mc_rng = np.random.default_rng(np.random.SeedSequence((cfg.seed, 0, 1)))
    if model is None:
        model = make_model(cfg, bench, dim, rng=mc_rng)

    sched = WeightSchedule(p=cfg.p, mode=ConvexityMode(cfg.convexity_mode))
    step_cfg = AdaptiveStepConfig(eta=resolve_eta(cfg), c=cfg.step.c, beta=cfg.step.beta)
    normalizer = RunningNormalizer(enabled=cfg.env.normalizer)

    ledger = RegretLedger(feasible=feasible, p=cfg.p)
    state = ProxState.initial(np.zeros(dim))
    H_acc = np.zeros((dim, dim))
    b_acc = np.zeros(dim)
    step_state = StepState()
    cum_reg = 0.0
    records: list[RoundRecord] = []
    weights = np.array([weight(n, cfg.p) for n in range(1, cfg.N + 1)])

    for n in range(1, cfg.N + 1):
        w_n = weights[n - 1]
        v_n = state.pi
        K_n = v_n.reshape(shape)

        if cfg.noiseless:
            S_n = state_second_moment(bench.dyn, K_n, bench.Sigma_a)
            stats = TransitionStats.exact(bench.dyn, K_n, bench.Sigma_a)
            sigma_g_sq = 0.0
            J_n = il_loss_from_moment(S_n, K_n, bench.K_star, bench.Sigma_a)[0]
        else:
            batch = rollout_batch(bench.dyn, LinearGaussianPolicy(K=K_n, Sigma_a=bench.Sigma_a),
                                  (cfg.seed, n), cfg.batch_size, policy_tag=f"round{n}")
            normalizer.update(batch.states)
            states_c = normalizer.center(batch.states)
            S_n = states_c.T @ states_c / len(batch)
            stats = TransitionStats.from_batch(batch)
            sigma_g_sq = _gradient_variance(states_c, K_n, bench, cfg.batch_size, bench.dyn.horizon)
            try:
                J_n = exact_J(bench.dyn, K_n, bench.K_star, bench.Sigma_a)
            except UnstableClosedLoopError:
                J_n = math.inf
        bench.certify_excitation(S_n)

        loss_n, G_n = il_loss_from_moment(S_n, K_n, bench.K_star, bench.Sigma_a)
        g_n = G_n.ravel()
        model.note_env_gradient(float(np.linalg.norm(g_n)))

        ghat_n = state.ghat_next
        if cfg.algorithm == "mobil_vi":
            ghat_n = np.asarray(model.predict(v_n), dtype=float)
        if ghat_n is None:
            ghat_n = np.zeros(dim)
        err = g_n - ghat_n

        lam = eta_n = math.nan
        coef_n = 0.0
        if cfg.algorithm != "mobil_vi":
            step_state, lam = adaptive_lambda(step_state, float(np.linalg.norm(err)), step_cfg.beta)
            # eta_n normalizes by the error scale (optimal FTRL step is
            # inversely proportional to it), so the cumulative regularizer
            # target is proportional to lambda_n.  The increment clamp keeps
            # the accumulated curvature monotone when lambda_n shrinks.
            eta_n = step_cfg.eta / max(lam, _LAMBDA_FLOOR)
            coef_n, cum_reg = regularizer_increment(n, sched, step_cfg, eta_n, cum_reg)

        quad = QuadraticLoss.centered(np.kron(Sa_inv, S_n), v_star)
        ledger.record(n, w_n, quad, v_n)

        bias_sq = math.nan
        dyn_est = model.dynamics_estimate()
        if dyn_est is not None:
            try:
                g_true = simulator_gradient(bench.dyn, K_n, bench.K_star, bench.Sigma_a)
                g_model = simulator_gradient(dyn_est, K_n, bench.K_star, bench.Sigma_a)
                bias_sq = float(np.sum((g_true - g_model) ** 2))
            except UnstableClosedLoopError:
                bias_sq = math.inf

        records.append(RoundRecord(
            n=n, w=w_n, loss=loss_n, grad_norm=float(np.linalg.norm(g_n)),
            pred_err_sq=float(err @ err), model_loss=model.transition_loss(stats),
            pi_gap=float(np.linalg.norm(v_n - state.pi_hat)),
            avg_weighted_regret=ledger.average_regret(),
            J_estimate=J_n,
            lambda_n=lam, eta_n=eta_n, reg_coef=coef_n, sigma_g_sq=sigma_g_sq,
            model_bias_sq=bias_sq, pi=v_n.copy(), pi_hat=state.pi_hat.copy(),
            g=g_n.copy(), ghat=ghat_n.copy(),
        ))

        if cfg.algorithm == "mobil_vi":
            H_acc += w_n * quad.H
            b_acc += w_n * quad.b

        if isinstance(model, LastCostModel):
            model.set_moment(S_n)
        model.observe(stats, w_n / n, n)

        if n == cfg.N:
            break
        w_next = weights[n]
        if cfg.algorithm == "mobil_vi":
            pi_next, info = mobil_vi_round(H_acc, b_acc, model, w_next, feasible, start=v_n)
            if not info["converged"]:
                raise RuntimeError(f"VI fixed point did not converge at round {n}: {info}")
            state = ProxState(pi=pi_next, pi_hat=pi_next, grad_sum=state.grad_sum,
                              reg_coef_sum=0.0, reg_pull=state.reg_pull, ghat_next=None,
                              n=n + 1)
        elif cfg.algorithm == "ftrl_baseline":
            grad_sum = state.grad_sum + w_n * g_n
            coef_sum = state.reg_coef_sum + coef_n
            pull = state.reg_pull + coef_n * v_n
            pi_next = feasible.project((pull - grad_sum) / coef_sum)
            state = ProxState(pi=pi_next, pi_hat=pi_next, grad_sum=grad_sum,
                              reg_coef_sum=coef_sum, reg_pull=pull,
                              ghat_next=np.zeros(dim), n=n + 1)
        else:
            state = mobil_prox_round(state, g_n, w_n, w_next, coef_n, model, feasible)

    rng_out = np.random.default_rng(np.random.SeedSequence((cfg.seed, 0, 0)))
    k = sample_output_index(weights, rng_out)
    return MobilRunResult(
        records=records, output_policy=records[k - 1].pi.reshape(shape),
        output_round=k, benchmark=bench, feasible=feasible, weights=weights,
        reg_coefs=np.array([r.reg_coef for r in records]),
        final_policy=records[-1].pi.reshape(shape),
        _ledger=ledger,
    )


def _gradient_variance(states: np.ndarray, K: np.ndarray, bench: Benchmark,
                       n_rollouts: int, horizon: int) -> float:
    """Unbiased estimate of E||g_n - grad f_n(pi_n)||^2 from per-rollout gradients."""
    if n_rollouts < 2:
        return 0.0
    grads = []
    for j in range(n_rollouts):
        chunk = states[j * horizon:(j + 1) * horizon]
        S_j = chunk.T @ chunk / len(chunk)
        _, Gj = il_loss_from_moment(S_j, K, bench.K_star, bench.Sigma_a)
        grads.append(Gj.ravel())
    grads = np.stack(grads)
    centered = grads - grads.mean(axis=0)
    return float(np.sum(centered**2) / (n_rollouts - 1) / n_rollouts)
