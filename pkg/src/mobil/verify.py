"""Executable verification suites: lemma audits, brackets, and rate experiments.

Each criterion function returns a CheckResult so the CLI ``verify`` command,
the pytest acceptance module, and ad-hoc use all share one implementation.
Suites: ftl_lemmas, poly_sums, optima_shift, equivalence, gradient_checks,
rates_fast, rates_full.
"""

from __future__ import annotations

import math
from dataclasses import dataclass, replace

import numpy as np

from .algorithms import AdversarialModel, run_mobil
from .config import EnvParams, ExperimentConfig
from .experiment import fit_loglog
from .geometry import Box, SquaredL2, Unconstrained, box
from .linear_env import (
    LinearDynamics,
    LinearGaussianPolicy,
    il_loss_and_grad,
    model_transition_loss,
    rollout_batch,
)
from .online_core import QuadraticLoss, argmin_quadratic, ftl_lemma_audit, optima_shift_audit
from .schedules import poly_sum_bracket
from .vi_prox import (
    AffineOperator,
    MirrorProxConfig,
    bilinear_game,
    deterministic_gamma,
    deterministic_err_bound,
    equivalence_check,
    mirror_prox_run,
    rps_payoff,
)

RATE_CHECKPOINTS = (64, 128, 256, 512, 1024, 2048)


@dataclass(frozen=True)
class CheckResult:
    name: str
    passed: bool
    detail: str

    def line(self) -> str:
        return f"{'PASS' if self.passed else 'FAIL'}  {self.name}: {self.detail}"


@dataclass(frozen=True)
class SuiteReport:
    suite: str
    checks: tuple

    @property
    def passed(self) -> bool:
        return all(c.passed for c in self.checks)

    def to_text(self) -> str:
        lines = [c.line() for c in self.checks]
        status = "OK" if self.passed else "FAILED"
        lines.append(f"suite {self.suite}: {status} "
                     f"({sum(c.passed for c in self.checks)}/{len(self.checks)} checks)")
        return "\n".join(lines)

    def to_dict(self) -> dict:
        return {
            "suite": self.suite,
            "passed": self.passed,
            "checks": [{"name": c.name, "passed": c.passed, "detail": c.detail}
                       for c in self.checks],
        }


def _random_quadratic(rng, dim, mu=0.1):
    R = rng.standard_normal((dim, dim))
    H = R @ R.T + mu * np.eye(dim)
    z = rng.uniform(-1.0, 1.0, size=dim)
    return QuadraticLoss.centered(H, z)


# ---------------------------------------------------------------------------
# Criterion 3: stronger FTL identity and FTL stability signs


def criterion_stronger_ftl(n_instances: int = 100, seed: int = 0) -> CheckResult:
    rng = np.random.default_rng(seed)
    worst_resid = 0.0
    worst_delta = 0.0
    for _ in range(n_instances):
        dim = int(rng.integers(1, 4))
        rounds = int(rng.integers(4, 11))
        feasible = box(3.0, dim) if rng.uniform() < 0.5 else Unconstrained(dim)
        losses = [(float(rng.uniform(0.5, 2.0)), _random_quadratic(rng, dim)) for _ in range(rounds)]
        decisions = [rng.uniform(-2.0, 2.0, size=dim) for _ in range(rounds)]
        audit = ftl_lemma_audit(losses, decisions, feasible)
        worst_resid = max(worst_resid, audit["stronger_residual"])

        ftl_decisions = [np.zeros(dim)]
        prefix = losses[0][1].scaled(losses[0][0])
        for w, loss in losses[1:]:
            ftl_decisions.append(argmin_quadratic(prefix.H, prefix.b, feasible))
            prefix = prefix + loss.scaled(w)
        audit_ftl = ftl_lemma_audit(losses, ftl_decisions, feasible)
        worst_delta = min(worst_delta, float(np.min(audit_ftl["delta_values"])))
        worst_resid = max(worst_resid, audit_ftl["stronger_residual"])
    ok = worst_resid <= 1e-9 and worst_delta >= -1e-9
    return CheckResult(
        "stronger-ftl-identity",
        ok,
        f"max residual {worst_resid:.2e} (<=1e-9), min Delta {worst_delta:.2e} (>=-1e-9) "
        f"on {n_instances} instances",
    )


# ---------------------------------------------------------------------------
# Criterion 4: polynomial-sum brackets


def criterion_poly_brackets(N_max: int = 10_000,
                            exponents=(-1.0, -0.5, 0.0, 0.5, 1.0, 2.0)) -> CheckResult:
    violations = 0
    worst = ""
    for p in exponents:
        n = np.arange(1, N_max + 1, dtype=float)
        sums = np.cumsum(n**p)
        lo = np.empty(N_max)
        hi = np.empty(N_max)
        for i, N in enumerate(range(1, N_max + 1)):
            lo[i], hi[i] = poly_sum_bracket(N, p)
        bad = np.flatnonzero((sums < lo) | (sums > hi))
        if bad.size:
            violations += bad.size
            worst = f"first violation p={p}, N={bad[0] + 1}"
    ok = violations == 0
    detail = f"all {len(exponents)}x{N_max} grid points inside brackets" if ok else worst
    return CheckResult("poly-sum-brackets", ok, detail)


# ---------------------------------------------------------------------------
# Criterion 5: optima-shift bound


def criterion_optima_shift(n_instances: int = 100, seed: int = 1) -> CheckResult:
    rng = np.random.default_rng(seed)
    violations = 0
    worst_margin = math.inf
    for _ in range(n_instances):
        dim = int(rng.integers(1, 5))
        feasible = box(2.0, dim) if rng.uniform() < 0.5 else Unconstrained(dim)
        f = _random_quadratic(rng, dim)
        g = _random_quadratic(rng, dim)
        audit = optima_shift_audit(f, g, feasible)
        margin = audit["bound"] - audit["distance"]
        worst_margin = min(worst_margin, margin)
        if audit["distance"] > audit["bound"] + 1e-10:
            violations += 1
    ok = violations == 0
    return CheckResult("optima-shift-bound", ok,
                       f"{violations} violations on {n_instances} pairs "
                       f"(tightest margin {worst_margin:.3e})")


# ---------------------------------------------------------------------------
# Criterion 6: mirror-prox equivalence


def criterion_equivalence(n_instances: int = 10, rounds: int = 100, seed: int = 2,
                          tol: float = 1e-8) -> CheckResult:
    rng = np.random.default_rng(seed)
    worst = 0.0
    for i in range(n_instances):
        dim = int(rng.integers(2, 6))
        R = rng.standard_normal((dim, dim))
        M = R - R.T
        if i % 2 == 0:
            Q = rng.standard_normal((dim, dim))
            M = M + 0.2 * (Q @ Q.T) / dim
        op = AffineOperator(M=M, b=rng.standard_normal(dim) * 0.5,
                            feasible=Unconstrained(dim))
        base = 0.5 * deterministic_gamma(1.0, max(op.lipschitz, 1e-6))
        if i % 3 == 0:
            gammas = np.full(rounds, base)
        else:
            gammas = base / np.sqrt(np.arange(1, rounds + 1, dtype=float))
        out = equivalence_check(op, gammas, rounds, x0=rng.standard_normal(dim))
        worst = max(worst, out["max_deviation"])
    ok = worst <= tol
    return CheckResult("mirror-prox-equivalence", ok,
                       f"max iterate deviation {worst:.2e} (<= {tol:g}) "
                       f"over {n_instances} instances x {rounds} rounds")


# ---------------------------------------------------------------------------
# Criterion 7: deterministic mirror-prox bound


def criterion_mp_deterministic_bound(n_games: int = 10, N: int = 1000, seed: int = 3) -> CheckResult:
    rng = np.random.default_rng(seed)
    gen = SquaredL2()
    violations = 0
    tightest = math.inf
    for i in range(n_games):
        if i == 0:
            op = bilinear_game(rps_payoff())
        else:
            rows, cols = int(rng.integers(2, 5)), int(rng.integers(2, 5))
            op = bilinear_game(rng.uniform(-1.0, 1.0, size=(rows, cols)))
        omega_sq = gen.max_divergence(op.feasible)
        gamma = deterministic_gamma(1.0, op.lipschitz)
        x0 = None if i % 2 == 0 else op.feasible.sample(rng)
        result = mirror_prox_run(op, MirrorProxConfig(gammas=gamma, generator=gen,
                                                      feasible=op.feasible), N, x0=x0)
        errs = result.running_err_exact()
        bounds = np.array([deterministic_err_bound(1.0, op.lipschitz, omega_sq, n)
                           for n in range(1, N + 1)])
        slack = bounds * (1 + 1e-9) + 1e-12 - errs
        tightest = min(tightest, float(slack.min()))
        violations += int(np.sum(slack < 0))
    ok = violations == 0
    return CheckResult("mp-deterministic-bound", ok,
                       f"{violations} violations over {n_games} games x {N} rounds "
                       f"(tightest slack {tightest:.3e})")


# ---------------------------------------------------------------------------
# Criterion 9: gradient correctness


def _central_fd(fun, X: np.ndarray, h: float = 1e-6) -> np.ndarray:
    grad = np.zeros_like(X)
    it = np.nditer(X, flags=["multi_index"])
    for _ in it:
        idx = it.multi_index
        Xp, Xm = X.copy(), X.copy()
        Xp[idx] += h
        Xm[idx] -= h
        grad[idx] = (fun(Xp) - fun(Xm)) / (2 * h)
    return grad


def criterion_gradient_checks(n_instances: int = 50, seed: int = 4,
                              tol: float = 1e-5) -> CheckResult:
    rng = np.random.default_rng(seed)
    worst = 0.0
    for i in range(n_instances):
        d_s, d_a = int(rng.integers(1, 4)), int(rng.integers(1, 3))
        A = rng.standard_normal((d_s, d_s)) * 0.4
        B = rng.standard_normal((d_s, d_a)) * 0.5
        dyn = LinearDynamics(A=A, B=B, Sigma_w=0.05 * np.eye(d_s), mu0=rng.standard_normal(d_s),
                             Sigma0=np.eye(d_s), horizon=int(rng.integers(3, 8)))
        Sigma_a = float(rng.uniform(0.05, 0.5)) * np.eye(d_a)
        K = rng.uniform(-1, 1, size=(d_a, d_s))
        K_star = rng.uniform(-1, 1, size=(d_a, d_s))
        batch = rollout_batch(dyn, LinearGaussianPolicy(K=K, Sigma_a=Sigma_a), (seed, i), 2)

        _, g = il_loss_and_grad(batch, K, K_star, Sigma_a)
        fd = _central_fd(lambda X: il_loss_and_grad(batch, X, K_star, Sigma_a)[0], K)
        worst = max(worst, float(np.abs(g - fd).max() / (1.0 + np.abs(fd).max())))

        A_hat = rng.standard_normal((d_s, d_s)) * 0.5
        B_hat = rng.standard_normal((d_s, d_a)) * 0.5
        _, gA, gB = model_transition_loss(A_hat, B_hat, batch)
        fdA = _central_fd(lambda X: model_transition_loss(X, B_hat, batch)[0], A_hat)
        fdB = _central_fd(lambda X: model_transition_loss(A_hat, X, batch)[0], B_hat)
        worst = max(worst, float(np.abs(gA - fdA).max() / (1.0 + np.abs(fdA).max())))
        worst = max(worst, float(np.abs(gB - fdB).max() / (1.0 + np.abs(fdB).max())))
    ok = worst <= tol
    return CheckResult("gradient-checks", ok,
                       f"max relative error {worst:.2e} (<= {tol:g}) on {n_instances} instances each")


# ---------------------------------------------------------------------------
# Rate experiments (criteria 1, 2, 8, 10, 11)


def _cfg(algorithm: str, model_oracle: str, *, p: float = 2.0, N: int = 2048,
         seed: int = 0, noiseless: bool = True, batch_size: int = 4,
         convexity_mode: str = "strongly_convex") -> ExperimentConfig:
    return ExperimentConfig(algorithm=algorithm, model_oracle=model_oracle, p=p, N=N,
                            seed=seed, batch_size=batch_size, noiseless=noiseless,
                            convexity_mode=convexity_mode, env=EnvParams())


def _running_regret_slope(result, checkpoints=RATE_CHECKPOINTS):
    vals = {rec.n: rec.avg_weighted_regret for rec in result.records}
    ns = [n for n in checkpoints if n in vals]
    return fit_loglog(ns, [vals[n] for n in ns])


def criterion_rate_separation(N: int = 2048, seed: int = 0) -> CheckResult:
    prox = run_mobil(_cfg("mobil_prox", "exact", N=N, seed=seed))
    base = run_mobil(_cfg("ftrl_baseline", "none", N=N, seed=seed))
    s_prox = _running_regret_slope(prox).slope
    s_base = _running_regret_slope(base).slope
    ok = -2.4 <= s_prox <= -1.6 and -1.3 <= s_base <= -0.7
    return CheckResult("rate-separation", ok,
                       f"model slope {s_prox:.2f} (want [-2.4,-1.6]), "
                       f"no-model slope {s_base:.2f} (want [-1.3,-0.7])")


def criterion_noise_improvement(N: int = 1024, n_seeds: int = 20) -> CheckResult:
    wins = 0
    for seed in range(n_seeds):
        prox = run_mobil(_cfg("mobil_prox", "exact", N=N, seed=seed, noiseless=False))
        base = run_mobil(_cfg("ftrl_baseline", "none", N=N, seed=seed, noiseless=False))
        if prox.records[-1].avg_weighted_regret <= base.records[-1].avg_weighted_regret:
            wins += 1
    ok = wins >= math.ceil(0.8 * n_seeds)
    return CheckResult("noise-improvement", ok,
                       f"model final R(2) <= no-model in {wins}/{n_seeds} seeds (need >= {math.ceil(0.8 * n_seeds)})")


def criterion_robust_model(N: int = 4096, seed: int = 0, radius: float = 5.0,
                           threshold: float = 1e-2) -> CheckResult:
    cfg = _cfg("mobil_prox", "none", N=N, seed=seed)
    model = AdversarialModel(dim=cfg.env.state_dim * cfg.env.action_dim,
                             rng=np.random.default_rng(np.random.SeedSequence((seed, 0xBAD))),
                             radius=radius)
    result = run_mobil(cfg, model=model)
    j_final = result.records[-1].J_estimate
    ok = j_final <= threshold
    return CheckResult("imperfect-model-robustness", ok,
                       f"J gap {j_final:.2e} at N={N} with bounded-random model "
                       f"(radius {radius:g}, want <= {threshold:g})")


def criterion_zero_model_reduction(N: int = 64, seed: int = 5, tol: float = 1e-12) -> CheckResult:
    worst = 0.0
    for noiseless in (True, False):
        prox = run_mobil(_cfg("mobil_prox", "none", N=N, seed=seed, noiseless=noiseless,
                              batch_size=2))
        base = run_mobil(_cfg("ftrl_baseline", "none", N=N, seed=seed, noiseless=noiseless,
                              batch_size=2))
        dev = max(float(np.linalg.norm(a.pi - b.pi))
                  for a, b in zip(prox.records, base.records))
        worst = max(worst, dev)
    ok = worst <= tol
    return CheckResult("zero-model-reduction", ok,
                       f"max per-round iterate deviation {worst:.2e} (<= {tol:g})")


def criterion_convex_mode_ordering(N: int = 2048, seed: int = 0,
                                   separation: float = 0.2) -> CheckResult:
    sc = run_mobil(_cfg("mobil_prox", "learned", N=N, seed=seed,
                        convexity_mode="strongly_convex"))
    cv = run_mobil(_cfg("mobil_prox", "learned", N=N, seed=seed, convexity_mode="convex"))
    none = run_mobil(_cfg("ftrl_baseline", "none", N=N, seed=seed))
    s_sc = _running_regret_slope(sc).slope
    s_cv = _running_regret_slope(cv).slope
    s_none = _running_regret_slope(none).slope
    ok = s_sc + separation <= s_cv and s_cv + separation <= s_none
    return CheckResult("convex-mode-ordering", ok,
                       f"slopes: strong-h {s_sc:.2f} <= convex-h {s_cv:.2f} - {separation} "
                       f"<= no-model {s_none:.2f} - {2 * separation}")


# ---------------------------------------------------------------------------
# Suites


def _fast_rate_checks() -> list[CheckResult]:
    checks = [criterion_zero_model_reduction()]
    checks.append(criterion_mp_deterministic_bound(n_games=3, N=200))
    prox = run_mobil(_cfg("mobil_prox", "exact", N=256))
    base = run_mobil(_cfg("ftrl_baseline", "none", N=256))
    r_prox = prox.records[-1].avg_weighted_regret
    r_base = base.records[-1].avg_weighted_regret
    checks.append(CheckResult(
        "fast-rate-smoke", r_prox < r_base,
        f"N=256 noiseless final R(2): model {r_prox:.3e} < no-model {r_base:.3e}"))
    return checks


SUITES = {
    "ftl_lemmas": lambda: [criterion_stronger_ftl()],
    "poly_sums": lambda: [criterion_poly_brackets()],
    "optima_shift": lambda: [criterion_optima_shift()],
    "equivalence": lambda: [criterion_equivalence()],
    "gradient_checks": lambda: [criterion_gradient_checks()],
    "rates_fast": _fast_rate_checks,
    "rates_full": lambda: [
        criterion_rate_separation(),
        criterion_noise_improvement(),
        criterion_mp_deterministic_bound(),
        criterion_robust_model(),
        criterion_convex_mode_ordering(),
    ],
}


def run_suite(name: str) -> SuiteReport:
    if name not in SUITES:
        raise ValueError(f"unknown suite {name!r}; choose from {sorted(SUITES)}")
    return SuiteReport(suite=name, checks=tuple(SUITES[name]()))
