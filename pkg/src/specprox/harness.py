"""Experiment harness: config files, repeated runs, CSV traces, rate estimation.

Configs are flat ``key = value`` text files (``#`` starts a comment) so a run
is fully described by one human-readable artifact.  Repetitions use seeds
``seed, seed+1, ...`` against a problem instance built once from the base
seed; traces merge in seed order, so a config plus a seed pins the output
bytes exactly.
"""

from __future__ import annotations

import io
import math
from dataclasses import dataclass, fields, replace
from typing import Optional

import numpy as np

from .errors import ConfigError, InvalidConfigError
from .optimizer import (
    Deterministic,
    PolarExpressMode,
    RunConfig,
    StochasticPolyak,
    StochasticStorm,
    Trace,
    run,
)
from .polar import load_schedule
from .problems import NoiseModel, make_logistic, make_matrix_quadratic, make_quadratic
from .prox import (
    ConstraintSpec,
    FrobeniusBall,
    HardThreshold,
    L2Ball,
    LinfBall,
    LinfSphere,
    RankLimit,
    SignSet,
    SpectralBall,
    SpectralSphere,
    Stiefel,
    Zero,
    feasible_start,
)
from .reference import Barrier, HyperKappa, ReferenceFn, Structure

CSV_COLUMNS = ("run_id", "k", "F", "gap_bregman", "step_norm", "gamma_k", "alpha_k")


# ---------------------------------------------------------------------------
# Experiment configuration
# ---------------------------------------------------------------------------


@dataclass(frozen=True)
class ExperimentConfig:
    problem: str = "quadratic"       # quadratic | logistic | matrix-quadratic
    n: int = 16
    m: int = 8                       # rows (matrix problems) / samples (logistic)
    cond: float = 10.0
    noise: str = "none"              # none | gaussian | student-t
    sigma: float = 1.0
    df: float = 1.8
    p_moment: float = 1.5
    mode: str = "polyak"             # deterministic | polyak | storm | polar
    K: int = 256
    gamma: float = 0.1               # deterministic stepsize
    gamma_bar: float = 1.0
    eps_hat: float = 0.0             # 0 -> (K+1)^(-1/4) in polar mode
    poly_schedule: str = ""          # schedule name/path for the polar surrogate
    reference: str = "barrier-aniso"
    epsilon: float = 1.0
    kappa: float = 4.0
    constraint: str = "zero"
    radius: float = 1.0
    sparsity: int = 1
    seed: int = 0
    repetitions: int = 1
    workers: int = 1                 # >1 fans repetitions out across processes
    out: str = "trace.csv"


_STRUCTURES = {
    "aniso": Structure.ANISO,
    "iso": Structure.ISO,
    "spectral-aniso": Structure.SPECTRAL_ANISO,
    "spectral-iso": Structure.SPECTRAL_ISO,
}

_CONSTRAINTS = ("zero", "sign-set", "l2-ball", "linf-ball", "linf-sphere",
                "hard-threshold", "stiefel", "frobenius-ball", "spectral-ball",
                "spectral-sphere", "rank-limit")


def parse_config(text: str) -> ExperimentConfig:
    """Parse a flat key = value config with per-line diagnostics."""
    spec_fields = {f.name: f.type for f in fields(ExperimentConfig)}
    defaults = ExperimentConfig()
    values = {}
    for lineno, raw in enumerate(text.splitlines(), start=1):
        line = raw.split("#", 1)[0].strip()
        if not line:
            continue
        if "=" not in line:
            raise ConfigError(f"line {lineno}: expected 'key = value', got {raw!r}")
        key, _, val = line.partition("=")
        key = key.strip().replace("-", "_")
        val = val.strip()
        if key not in spec_fields:
            raise ConfigError(f"line {lineno}: unknown key {key!r}")
        current = getattr(defaults, key)
        try:
            if isinstance(current, bool):
                values[key] = val.lower() in ("1", "true", "yes")
            elif isinstance(current, int):
                values[key] = int(val)
            elif isinstance(current, float):
                values[key] = float(val)
            else:
                values[key] = val
        except ValueError as exc:
            raise ConfigError(f"line {lineno}: field {key!r}: {exc}") from exc
    cfg = replace(defaults, **values)
    validate_config(cfg)
    return cfg


def serialize_config(cfg: ExperimentConfig) -> str:
    out = io.StringIO()
    for f in fields(ExperimentConfig):
        out.write(f"{f.name} = {_fmt_value(getattr(cfg, f.name))}\n")
    return out.getvalue()


def _fmt_value(v) -> str:
    if isinstance(v, float):
        return repr(v)
    return str(v)


def load_config(path: str) -> ExperimentConfig:
    try:
        with open(path, "r", encoding="utf-8") as fh:
            text = fh.read()
    except OSError as exc:
        raise ConfigError(f"cannot read config {path!r}: {exc}") from exc
    return parse_config(text)


def validate_config(cfg: ExperimentConfig) -> None:
    if cfg.problem not in ("quadratic", "logistic", "matrix-quadratic"):
        raise ConfigError(f"unknown problem {cfg.problem!r}")
    if cfg.noise not in ("none", "gaussian", "student-t"):
        raise ConfigError(f"unknown noise {cfg.noise!r}")
    if cfg.mode not in ("deterministic", "polyak", "storm", "polar"):
        raise ConfigError(f"unknown mode {cfg.mode!r}")
    if cfg.reference.count("-") < 1:
        raise ConfigError(f"reference must look like 'barrier-aniso', got {cfg.reference!r}")
    kind, _, structure = cfg.reference.partition("-")
    if kind not in ("barrier", "hyper"):
        raise ConfigError(f"unknown reference family {kind!r}")
    if structure not in _STRUCTURES:
        raise ConfigError(f"unknown reference structure {structure!r}")
    if cfg.constraint not in _CONSTRAINTS:
        raise ConfigError(f"unknown constraint {cfg.constraint!r}")
    if cfg.repetitions < 1:
        raise ConfigError("repetitions must be >= 1")
    if cfg.K < 0:
        raise ConfigError("K must be >= 0")


# ---------------------------------------------------------------------------
# Building the pieces from a config
# ---------------------------------------------------------------------------


def build_problem(cfg: ExperimentConfig):
    rng = np.random.default_rng(np.random.SeedSequence(entropy=cfg.seed, spawn_key=(999,)))
    if cfg.problem == "quadratic":
        return make_quadratic(cfg.n, cfg.cond, rng)
    if cfg.problem == "logistic":
        return make_logistic(cfg.m, cfg.n, rng)
    return make_matrix_quadratic(cfg.m, cfg.n, rng)


def build_reference(cfg: ExperimentConfig) -> ReferenceFn:
    kind, _, structure = cfg.reference.partition("-")
    scalar = Barrier(cfg.epsilon) if kind == "barrier" else HyperKappa(cfg.epsilon, cfg.kappa)
    return ReferenceFn.uniform(_STRUCTURES[structure], scalar)


def build_constraint(cfg: ExperimentConfig) -> ConstraintSpec:
    c = cfg.constraint
    if c == "zero":
        tag = Zero()
    elif c == "sign-set":
        tag = SignSet(cfg.radius)
    elif c == "l2-ball":
        tag = L2Ball(cfg.radius)
    elif c == "linf-ball":
        tag = LinfBall(cfg.radius)
    elif c == "linf-sphere":
        tag = LinfSphere(cfg.radius)
    elif c == "hard-threshold":
        tag = HardThreshold(cfg.sparsity)
    elif c == "stiefel":
        tag = Stiefel(cfg.radius)
    elif c == "frobenius-ball":
        tag = FrobeniusBall(cfg.radius)
    elif c == "spectral-ball":
        tag = SpectralBall(cfg.radius)
    elif c == "spectral-sphere":
        tag = SpectralSphere(cfg.radius)
    else:
        tag = RankLimit(cfg.sparsity)
    return ConstraintSpec(tag)


def build_mode(cfg: ExperimentConfig):
    if cfg.mode == "deterministic":
        return Deterministic(gamma=cfg.gamma, K=cfg.K)
    if cfg.mode == "polyak":
        return StochasticPolyak(K=cfg.K, gamma_bar=cfg.gamma_bar)
    if cfg.mode == "storm":
        return StochasticStorm(K=cfg.K, gamma_bar=cfg.gamma_bar)
    schedule = load_schedule(cfg.poly_schedule) if cfg.poly_schedule else None
    eps_hat = cfg.eps_hat if cfg.eps_hat > 0.0 else None
    return PolarExpressMode(K=cfg.K, eps_hat=eps_hat, gamma_bar=cfg.gamma_bar,
                            poly_schedule=schedule)


def build_noise(cfg: ExperimentConfig) -> NoiseModel:
    if cfg.noise == "none":
        return NoiseModel.none()
    if cfg.noise == "gaussian":
        return NoiseModel.gaussian(cfg.sigma)
    return NoiseModel.student_t(cfg.df, cfg.sigma, cfg.p_moment)


# ---------------------------------------------------------------------------
# Execution
# ---------------------------------------------------------------------------


@dataclass(frozen=True)
class RunSummary:
    run_id: int
    seed: int
    K: int
    time_avg_gap: float
    time_avg_grad_norm: float
    final_F: float


@dataclass(frozen=True)
class ExperimentResult:
    config: ExperimentConfig
    traces: list[Trace]
    summaries: list[RunSummary]

    @property
    def mean_time_avg_gap(self) -> float:
        return sum(s.time_avg_gap for s in self.summaries) / len(self.summaries)

    @property
    def mean_time_avg_grad_norm(self) -> float:
        return sum(s.time_avg_grad_norm for s in self.summaries) / len(self.summaries)


def _fmt17(v: float) -> str:
    return format(float(v), ".17g")


def _one_repetition(cfg: ExperimentConfig, rep: int) -> Trace:
    problem = build_problem(cfg)
    spec = build_constraint(cfg)
    run_cfg = RunConfig(ref=build_reference(cfg), spec=spec, mode=build_mode(cfg),
                        seed=cfg.seed + rep, x0=feasible_start(spec, problem.shapes))
    return run(run_cfg, problem, noise=build_noise(cfg))


def execute(cfg: ExperimentConfig) -> ExperimentResult:
    """Run all repetitions; results always merge in seed order.

    With ``workers > 1`` repetitions fan out across processes (each rebuilds
    the identical problem instance from the base seed), so the output is
    independent of completion order and of the worker count.
    """
    problem = build_problem(cfg)
    spec = build_constraint(cfg)
    spec.validate_for(problem.shapes)
    build_reference(cfg)
    build_noise(cfg)
    if cfg.workers > 1 and cfg.repetitions > 1:
        from concurrent.futures import ProcessPoolExecutor

        with ProcessPoolExecutor(max_workers=cfg.workers) as pool:
            futures = {pool.submit(_one_repetition, cfg, rep): rep
                       for rep in range(cfg.repetitions)}
            by_rep = {futures[f]: f.result() for f in futures}
        traces = [by_rep[rep] for rep in range(cfg.repetitions)]
    else:
        traces = [_one_repetition(cfg, rep) for rep in range(cfg.repetitions)]
    summaries = [
        RunSummary(
            run_id=rep,
            seed=cfg.seed + rep,
            K=cfg.K,
            time_avg_gap=trace.time_averaged_gap(),
            time_avg_grad_norm=trace.time_averaged_grad_norm(),
            final_F=problem.f(trace.final_x),
        )
        for rep, trace in enumerate(traces)
    ]
    return ExperimentResult(config=cfg, traces=traces, summaries=summaries)


def traces_to_csv(traces: list[Trace]) -> str:
    out = io.StringIO()
    out.write(",".join(CSV_COLUMNS) + "\n")
    for run_id, trace in enumerate(traces):
        for rec in trace.records:
            out.write(
                f"{run_id},{rec.k},{_fmt17(rec.F)},{_fmt17(rec.gap_bregman)},"
                f"{_fmt17(rec.step_norm)},{_fmt17(rec.gamma)},{_fmt17(rec.alpha)}\n"
            )
    return out.getvalue()


def summary_to_csv(result: ExperimentResult) -> str:
    out = io.StringIO()
    out.write("run_id,seed,K,time_avg_gap,time_avg_grad_norm,final_F\n")
    for s in result.summaries:
        out.write(
            f"{s.run_id},{s.seed},{s.K},{_fmt17(s.time_avg_gap)},"
            f"{_fmt17(s.time_avg_grad_norm)},{_fmt17(s.final_F)}\n"
        )
    out.write(
        f"mean,,{result.config.K},{_fmt17(result.mean_time_avg_gap)},"
        f"{_fmt17(result.mean_time_avg_grad_norm)},\n"
    )
    return out.getvalue()


def run_experiment(cfg: ExperimentConfig, quiet: bool = False) -> ExperimentResult:
    """Execute the config and write the trace CSV plus a summary CSV."""
    result = execute(cfg)
    with open(cfg.out, "w", encoding="utf-8", newline="\n") as fh:
        fh.write(traces_to_csv(result.traces))
    summary_path = cfg.out + ".summary.csv" if not cfg.out.endswith(".csv") \
        else cfg.out[:-4] + ".summary.csv"
    with open(summary_path, "w", encoding="utf-8", newline="\n") as fh:
        fh.write(summary_to_csv(result))
    if not quiet:
        print(f"wrote {cfg.out} ({sum(len(t) for t in result.traces)} rows, "
              f"{cfg.repetitions} runs); mean time-averaged gap "
              f"{result.mean_time_avg_gap:.6e}")
    return result


# ---------------------------------------------------------------------------
# Rate estimation
# ---------------------------------------------------------------------------


@dataclass(frozen=True)
class RateEstimate:
    """Log-log slope of the averaged stationarity measure against K+1."""

    slope: float
    intercept: float
    r_squared: float
    horizons: tuple[int, ...]
    means: tuple[float, ...]
    excluded: tuple[int, ...] = ()


def estimate_rate(results: dict[int, list[float]]) -> RateEstimate:
    """Least squares of log(mean value) on log(K+1) over >= 4 horizons.

    ``results`` maps each horizon K to the per-repetition time-averaged values
    (>= 10 repetitions each).  Horizons whose mean is not strictly positive are
    excluded with a warning flag; at least four must survive.
    """
    if len(results) < 4:
        raise InvalidConfigError("need at least 4 horizons")
    horizons = sorted(results)
    kept_h, kept_m, excluded = [], [], []
    for K in horizons:
        vals = results[K]
        if len(vals) < 10:
            raise InvalidConfigError(f"horizon {K}: need >= 10 repetitions, got {len(vals)}")
        m = float(np.mean(vals))
        if not (m > 0.0) or not math.isfinite(m):
            excluded.append(K)
            continue
        kept_h.append(K)
        kept_m.append(m)
    if len(kept_h) < 4:
        raise InvalidConfigError("fewer than 4 horizons with positive means")
    lx = np.log([K + 1.0 for K in kept_h])
    ly = np.log(kept_m)
    A = np.vstack([lx, np.ones_like(lx)]).T
    coef, *_ = np.linalg.lstsq(A, ly, rcond=None)
    slope, intercept = float(coef[0]), float(coef[1])
    pred = A @ coef
    ss_res = float(np.sum((ly - pred) ** 2))
    ss_tot = float(np.sum((ly - ly.mean()) ** 2))
    r2 = 1.0 if ss_tot == 0.0 else max(0.0, 1.0 - ss_res / ss_tot)
    return RateEstimate(
        slope=slope,
        intercept=intercept,
        r_squared=r2,
        horizons=tuple(kept_h),
        means=tuple(kept_m),
        excluded=tuple(excluded),
    )


def rate_sweep(cfg: ExperimentConfig, horizons, repetitions: Optional[int] = None,
               metric: str = "gap", quiet: bool = True) -> tuple[RateEstimate, dict[int, list[float]]]:
    """Run the config across horizons and fit the empirical rate.

    ``metric`` is ``gap`` (time-averaged dual Bregman gap) or ``grad-norm``
    (time-averaged true gradient norm, the natural measure for the normalized
    mode).
    """
    if metric not in ("gap", "grad-norm"):
        raise InvalidConfigError(f"unknown metric {metric!r}")
    reps = repetitions if repetitions is not None else cfg.repetitions
    per_horizon: dict[int, list[float]] = {}
    for K in horizons:
        sweep_cfg = replace(cfg, K=int(K), repetitions=reps)
        result = execute(sweep_cfg)
        if metric == "gap":
            vals = [s.time_avg_gap for s in result.summaries]
        else:
            vals = [s.time_avg_grad_norm for s in result.summaries]
        per_horizon[int(K)] = vals
        if not quiet:
            print(f"K={K}: mean {metric} = {float(np.mean(vals)):.6e}")
    return estimate_rate(per_horizon), per_horizon
