"""Experiment runner: CSV traces, metadata sidecars, rate fits, and sweeps.

One experiment writes ``<algorithm>-<confighash>.csv`` (one row per round,
fixed column order) plus ``<stem>.meta.json`` echoing the resolved config.
All randomness flows from the config seed, so identical configs produce
byte-identical trace files.
"""

from __future__ import annotations

import json
import math
import os
from concurrent.futures import ProcessPoolExecutor
from dataclasses import dataclass
from pathlib import Path

import numpy as np

from . import __version__
from .algorithms import run_mobil
from .config import (
    ConfigError,
    ExperimentConfig,
    config_hash,
    config_to_text,
    resolve_eta,
    set_key,
)
from .geometry import SquaredL2
from .vi_prox import (
    AffineOperator,
    MirrorProxConfig,
    bilinear_game,
    deterministic_gamma,
    mirror_prox_run,
    random_skew_game,
    rps_payoff,
    stochastic_gamma,
    weighted_gammas,
)

CSV_HEADER = "n,w_n,loss,grad_norm,pred_err_sq,model_loss,pi_gap,avg_weighted_regret,J_estimate"
CSV_HEADER_MP = CSV_HEADER + ",err_gap,gamma_n"

OUT_DIR_ENV = "MOBIL_BENCH_OUT"


def default_out_dir() -> Path:
    return Path(os.environ.get(OUT_DIR_ENV, "runs"))


def _fmt(x) -> str:
    if isinstance(x, (int, np.integer)):
        return str(int(x))
    return repr(float(x))


def build_vi_problem(cfg: ExperimentConfig) -> AffineOperator:
    vi = cfg.vi
    if vi.kind == "rps":
        return bilinear_game(rps_payoff())
    if vi.kind == "random_skew":
        rng = np.random.default_rng(np.random.SeedSequence((vi.problem_seed, 0x9A)))
        return random_skew_game(vi.rows, vi.cols, rng)
    if vi.kind == "affine":
        rng = np.random.default_rng(np.random.SeedSequence((vi.problem_seed, 0x9B)))
        d = vi.dimension
        R = rng.standard_normal((d, d))
        M = R - R.T + np.eye(d)  # strongly monotone
        from .geometry import L2Ball

        return AffineOperator(M=M, b=rng.standard_normal(d),
                              feasible=L2Ball(dimension=d, center=np.zeros(d), radius=5.0))
    raise ConfigError([f"vi.kind: unknown kind {vi.kind!r}"])


def _mirror_prox_rows(cfg: ExperimentConfig):
    op = build_vi_problem(cfg)
    gen = SquaredL2()
    omega_sq = gen.max_divergence(op.feasible)
    alpha = 1.0
    L = op.lipschitz
    if cfg.vi.step_rule == "deterministic":
        gammas = deterministic_gamma(alpha, L)
    elif cfg.vi.step_rule == "stochastic":
        if cfg.vi.noise_sigma <= 0:
            raise ConfigError(["vi.noise_sigma: stochastic step rule needs noise_sigma > 0"])
        gammas = stochastic_gamma(alpha, L, omega_sq, cfg.vi.noise_sigma, cfg.N)
    else:
        gammas = weighted_gammas(cfg.p, cfg.N, alpha, L)
    mp_cfg = MirrorProxConfig(gammas=gammas, generator=gen, feasible=op.feasible,
                              noise_sigma=cfg.vi.noise_sigma)
    rng = np.random.default_rng(np.random.SeedSequence((cfg.seed, 0x3F)))
    result = mirror_prox_run(op, mp_cfg, cfg.N, rng=rng)

    # Running exact weighted regret of the linear losses, for the shared column.
    lin_vec = np.zeros(op.feasible.dimension)
    lin_val = 0.0
    rows = []
    for i, row in enumerate(result.trace):
        x = result.xs[i]
        F_x = op(x)
        g = result.gammas[i]
        lin_vec += g * F_x
        lin_val += g * float(F_x @ x)
        support_val, _ = op.feasible.support(-lin_vec)
        avg_regret = (lin_val + support_val) / float(result.gammas[: i + 1].sum())
        rows.append((i + 1, g, float(F_x @ x), float(np.linalg.norm(F_x)),
                     row["pred_err_sq"], 0.0, row["pi_gap"], avg_regret, math.nan,
                     row["err_gap"], g))
    return rows


def _mobil_rows(cfg: ExperimentConfig):
    result = run_mobil(cfg)
    return [rec.csv_values() for rec in result.records]


def run_experiment(cfg: ExperimentConfig, out_dir: Path | str | None = None) -> Path:
    """Run one experiment; returns the trace CSV path (metadata sidecar beside it)."""
    out = Path(out_dir) if out_dir is not None else default_out_dir()
    out.mkdir(parents=True, exist_ok=True)
    stem = f"{cfg.algorithm}-{config_hash(cfg)}"
    csv_path = out / f"{stem}.csv"
    meta_path = out / f"{stem}.meta.json"
    tmp_csv = out / f"{stem}.csv.tmp"
    try:
        if cfg.algorithm == "mirror_prox":
            header, rows = CSV_HEADER_MP, _mirror_prox_rows(cfg)
        else:
            header, rows = CSV_HEADER, _mobil_rows(cfg)
        with open(tmp_csv, "w") as fh:
            fh.write(header + "\n")
            for row in rows:
                fh.write(",".join(_fmt(v) for v in row) + "\n")
        meta = {
            "version": __version__,
            "config": config_to_text(cfg).strip().splitlines(),
            "config_hash": config_hash(cfg),
            "resolved_eta": resolve_eta(cfg) if cfg.algorithm != "mirror_prox" else None,
            "rows": len(rows),
        }
        with open(meta_path, "w") as fh:
            json.dump(meta, fh, indent=1, sort_keys=True)
            fh.write("\n")
        os.replace(tmp_csv, csv_path)
    except BaseException:
        tmp_csv.unlink(missing_ok=True)
        meta_path.unlink(missing_ok=True)
        csv_path.unlink(missing_ok=True)
        raise
    return csv_path


def load_trace(csv_path: Path | str) -> dict[str, np.ndarray]:
    with open(csv_path) as fh:
        names = fh.readline().strip().split(",")
    data = np.genfromtxt(csv_path, delimiter=",", skip_header=1)
    data = np.atleast_2d(data)
    return {name: data[:, i] for i, name in enumerate(names)}


@dataclass(frozen=True)
class RateFit:
    slope: float
    intercept: float
    r_squared: float
    n_min: int
    n_max: int
    n_points: int


def fit_loglog(ns, values) -> RateFit:
    """Least squares on (log n, log value); values must be positive."""
    ns = np.asarray(ns, dtype=float)
    values = np.asarray(values, dtype=float)
    keep = np.isfinite(values) & (values > 0) & np.isfinite(ns) & (ns > 0)
    dropped = int(np.size(values) - keep.sum())
    if keep.sum() < 5:
        raise ValueError(f"need >= 5 usable points, got {int(keep.sum())} "
                         f"({dropped} non-positive/non-finite rejected)")
    x = np.log(ns[keep])
    y = np.log(values[keep])
    slope, intercept = np.polyfit(x, y, 1)
    resid = y - (slope * x + intercept)
    ss_tot = float(np.sum((y - y.mean()) ** 2))
    r2 = 1.0 - float(np.sum(resid**2)) / ss_tot if ss_tot > 0 else 1.0
    return RateFit(slope=float(slope), intercept=float(intercept), r_squared=r2,
                   n_min=int(ns[keep].min()), n_max=int(ns[keep].max()),
                   n_points=int(keep.sum()))


def fit_rate(csv_path: Path | str, column: str, n_min: int, n_max: int) -> RateFit:
    trace = load_trace(csv_path)
    if column not in trace:
        raise ValueError(f"column {column!r} not in trace (have {sorted(trace)})")
    n = trace["n"]
    mask = (n >= n_min) & (n <= n_max)
    return fit_loglog(n[mask], trace[column][mask])


def _run_for_sweep(args):
    cfg, out_dir = args
    return run_experiment(cfg, out_dir)


def sweep(template: ExperimentConfig, vary_key: str, values, out_dir: Path | str | None = None,
          workers: int | None = None) -> list[Path]:
    """Fan one config template across values of a single dotted key."""
    configs = [set_key(template, vary_key, str(v)) for v in values]
    out = Path(out_dir) if out_dir is not None else default_out_dir()
    if workers is not None and workers <= 1:
        return [run_experiment(c, out) for c in configs]
    max_workers = workers or min(len(configs), os.cpu_count() or 1)
    with ProcessPoolExecutor(max_workers=max_workers) as pool:
        return list(pool.map(_run_for_sweep, [(c, out) for c in configs]))


def write_svg(csv_path: Path | str, columns, svg_path: Path | str,
              log_x: bool = True, log_y: bool = True) -> Path:
    """Minimal standalone SVG line chart of trace columns against n."""
    trace = load_trace(csv_path)
    n = trace["n"]
    width, height, pad = 640, 420, 50
    palette = ("#1f77b4", "#d62728", "#2ca02c", "#9467bd", "#ff7f0e")

    def tx(v, lo, hi, a, b):
        if hi <= lo:
            return 0.5 * (a + b)
        return a + (v - lo) / (hi - lo) * (b - a)

    series = []
    for col in columns:
        vals = trace[col]
        keep = np.isfinite(vals) & ((vals > 0) | (not log_y)) & ((n > 0) | (not log_x))
        xs = np.log10(n[keep]) if log_x else n[keep]
        ys = np.log10(vals[keep]) if log_y else vals[keep]
        if xs.size:
            series.append((col, xs, ys))
    if not series:
        raise ValueError("no plottable data in the requested columns")
    all_x = np.concatenate([s[1] for s in series])
    all_y = np.concatenate([s[2] for s in series])
    parts = [f'<svg xmlns="http://www.w3.org/2000/svg" width="{width}" height="{height}">',
             f'<rect width="{width}" height="{height}" fill="white"/>']
    for i, (col, xs, ys) in enumerate(series):
        pts = " ".join(
            f"{tx(x, all_x.min(), all_x.max(), pad, width - pad):.2f},"
            f"{tx(y, all_y.min(), all_y.max(), height - pad, pad):.2f}"
            for x, y in zip(xs, ys)
        )
        color = palette[i % len(palette)]
        parts.append(f'<polyline fill="none" stroke="{color}" stroke-width="1.5" points="{pts}"/>')
        parts.append(f'<text x="{pad}" y="{20 + 16 * i}" fill="{color}" font-size="12">{col}</text>')
    parts.append("</svg>")
    svg_path = Path(svg_path)
    svg_path.write_text("\n".join(parts) + "\n")
    return svg_path
