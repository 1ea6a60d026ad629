"""The main iteration: preconditioned forward step plus anisotropic backward step.

One step moves from x to

    y      = x - gamma * precondition(d)
    x_next = argmin_x g(x) + gamma*phi((x - y)/gamma)

with d a (possibly stochastic) direction.  ``run`` drives the loop in four
modes: deterministic full-gradient, Polyak momentum, recursive two-evaluation
momentum, and the normalized variant that divides the direction by its norm
before preconditioning.  Every run is replayable from its seed; stochastic
diagnostics (gap, gradient norm) are evaluated with the true gradient, which
is available for all synthetic problems and never enters the update itself.
"""

from __future__ import annotations

from dataclasses import dataclass, field
from typing import Optional

from .direction import initial_state, polyak_update, schedule, storm_update
from .errors import InvalidConfigError, NumericalError
from .prox import ConstraintSpec, Zero, feasibility_error, prox, recover_subgradient
from .problems import GradientOracle, NoiseModel
from .reference import ReferenceFn, precondition
from .stationarity import FEASIBILITY_TOL, gap_bregman, regularized_gap
from .tensor import ParamVec, norm2

STEP_BOUND_SLACK = 1e-12


# ---------------------------------------------------------------------------
# Run configuration
# ---------------------------------------------------------------------------


@dataclass(frozen=True)
class Deterministic:
    """Full-gradient mode with a constant stepsize."""

    gamma: float
    K: int


@dataclass(frozen=True)
class StochasticPolyak:
    """Polyak momentum with the horizon-tuned schedule."""

    K: int
    gamma_bar: float = 1.0


@dataclass(frozen=True)
class StochasticStorm:
    """Recursive momentum with per-iteration schedule."""

    K: int
    gamma_bar: float = 1.0


@dataclass(frozen=True)
class PolarExpressMode:
    """Normalized-direction mode; requires an unconstrained spec.

    ``eps_hat`` defaults to (K+1)^(-1/4).  ``poly_schedule`` swaps the exact
    preconditioner of the normalized direction for an odd-polynomial
    surrogate; surrogate runs are diagnostics only.
    """

    K: int
    eps_hat: Optional[float] = None
    gamma_bar: float = 1.0
    poly_schedule: Optional[object] = None


@dataclass(frozen=True)
class RunConfig:
    ref: ReferenceFn
    spec: ConstraintSpec
    mode: object
    seed: int
    x0: ParamVec


@dataclass(frozen=True)
class TraceRecord:
    """Per-iteration diagnostics.

    ``F`` and ``grad_norm`` are evaluated at the pre-step iterate x^k; the gap
    is the dual Bregman gap at the post-step iterate x^{k+1}, the quantity
    whose time average the stochastic analysis bounds.  ``dir_error`` is
    ||d^k - grad_f(x^k)||, a diagnostic that needs true-gradient access.
    """

    k: int
    F: float
    gap_bregman: float
    step_norm: float
    gamma: float
    alpha: float
    grad_norm: float
    dir_error: float
    sample_token: Optional[int]
    reg_gap: Optional[float] = None


@dataclass
class Trace:
    mode: str
    seed: int
    records: list[TraceRecord] = field(default_factory=list)
    oracle_calls: int = 0
    final_x: Optional[ParamVec] = None
    iterates: Optional[list[ParamVec]] = None

    def __len__(self) -> int:
        return len(self.records)

    def column(self, name: str) -> list:
        return [getattr(r, name) for r in self.records]

    def time_averaged_gap(self) -> float:
        return sum(r.gap_bregman for r in self.records) / len(self.records)

    def time_averaged_grad_norm(self) -> float:
        return sum(r.grad_norm for r in self.records) / len(self.records)


# ---------------------------------------------------------------------------
# Single steps
# ---------------------------------------------------------------------------


def step(x: ParamVec, d: ParamVec, gamma: float, ref: ReferenceFn,
         spec: ConstraintSpec) -> tuple[ParamVec, ParamVec, ParamVec]:
    """One forward-backward step; returns (x_next, y, recovered subgradient)."""
    if gamma <= 0.0:
        raise InvalidConfigError("gamma must be positive")
    y = x - gamma * precondition(ref, d)
    x_next = prox(spec, ref, y, gamma)
    subgrad = recover_subgradient(x_next, y, gamma, ref)
    _check_step_bound(x, x_next, gamma, ref)
    return x_next, y, subgrad


def polar_express_step(x: ParamVec, d: ParamVec, gamma: float, ref: ReferenceFn,
                       eps_hat: float, poly_schedule=None) -> ParamVec:
    """Normalized step x - gamma * precondition(d / (||d|| + eps_hat)).

    With a polynomial schedule the preconditioner of the normalized direction
    is replaced by the matrix polynomial surrogate (diagnostics only).
    """
    if eps_hat <= 0.0:
        raise InvalidConfigError("eps_hat must be positive")
    nd = norm2(d)
    if nd == 0.0:
        return x.copy()
    if poly_schedule is not None:
        from .polar import apply_poly_block

        moved = ParamVec(
            (apply_poly_block(poly_schedule, b, eps_hat) for b in d.blocks),
            validate=False, copy=False,
        )
        return x - gamma * moved
    d_eps = d * (1.0 / (nd + eps_hat))
    return x - gamma * precondition(ref, d_eps)


def _check_step_bound(x: ParamVec, x_next: ParamVec, gamma: float, ref: ReferenceFn) -> None:
    # ||x_next - x|| <= 2*gamma*D holds for every direction; a violation
    # indicates a broken backward step.
    bound = 2.0 * gamma * ref.domain_radius(x) + STEP_BOUND_SLACK
    moved = norm2(x_next - x)
    if moved > bound:
        raise NumericalError(
            f"step bound violated: moved {moved:.6e} > {bound:.6e} (gamma={gamma:.3e})"
        )


# ---------------------------------------------------------------------------
# Full runs
# ---------------------------------------------------------------------------


def _validated_x0(config: RunConfig) -> ParamVec:
    err = feasibility_error(config.spec, config.x0)
    if err > FEASIBILITY_TOL:
        raise InvalidConfigError(f"x0 violates the constraint set by {err:.3e}")
    return config.x0


def _check_feasible(spec: ConstraintSpec, x: ParamVec) -> None:
    err = feasibility_error(spec, x)
    if err > FEASIBILITY_TOL:
        raise NumericalError(f"iterate left the constraint set by {err:.3e}")


def run(config: RunConfig, problem, noise: Optional[NoiseModel] = None,
        record_reg_gap: bool = False, record_iterates: bool = False) -> Trace:
    """Execute K+1 steps of the configured mode and collect the trace.

    ``noise`` feeds the stochastic modes (ignored in deterministic mode);
    ``None`` means exact gradients.  With ``record_reg_gap`` the regularized
    gap is evaluated at every pre-step iterate (deterministic diagnostics).
    """
    mode = config.mode
    noise = noise if noise is not None else NoiseModel.none()
    x = _validated_x0(config)

    if isinstance(mode, Deterministic):
        return _run_deterministic(config, problem, x, record_reg_gap, record_iterates)
    if isinstance(mode, StochasticPolyak):
        return _run_polyak(config, problem, noise, x, record_iterates)
    if isinstance(mode, StochasticStorm):
        return _run_storm(config, problem, noise, x, record_iterates)
    if isinstance(mode, PolarExpressMode):
        return _run_polar(config, problem, noise, x, record_iterates)
    raise InvalidConfigError(f"unknown mode {mode!r}")


def _maybe_track(record_iterates: bool, xs: list, x: ParamVec) -> None:
    if record_iterates:
        xs.append(x)


def _run_deterministic(config: RunConfig, problem, x: ParamVec,
                       record_reg_gap: bool, record_iterates: bool) -> Trace:
    mode: Deterministic = config.mode
    if mode.K < 0:
        raise InvalidConfigError("K must be >= 0")
    trace = Trace(mode="deterministic", seed=config.seed)
    xs: list[ParamVec] = []
    _maybe_track(record_iterates, xs, x)
    for k in range(mode.K + 1):
        d = problem.grad_f(x)
        f_here = problem.f(x)
        reg = (
            regularized_gap(config.spec, config.ref, mode.gamma, x, d)
            if record_reg_gap else None
        )
        x_next, _, subgrad = step(x, d, mode.gamma, config.ref, config.spec)
        _check_feasible(config.spec, x_next)
        g_next = problem.grad_f(x_next)
        trace.records.append(TraceRecord(
            k=k,
            F=f_here,
            gap_bregman=gap_bregman(config.ref, g_next, subgrad),
            step_norm=norm2(x_next - x),
            gamma=mode.gamma,
            alpha=1.0,
            grad_norm=norm2(d),
            dir_error=0.0,
            sample_token=None,
            reg_gap=reg,
        ))
        x = x_next
        _maybe_track(record_iterates, xs, x)
    trace.final_x = x
    if record_iterates:
        trace.iterates = xs
    return trace


def _run_polyak(config: RunConfig, problem, noise: NoiseModel, x: ParamVec,
                record_iterates: bool) -> Trace:
    mode: StochasticPolyak = config.mode
    if mode.K < 0:
        raise InvalidConfigError("K must be >= 0")
    alpha, gamma = schedule("polyak43", mode.K, mode.gamma_bar)
    oracle = GradientOracle(problem, noise, config.seed)
    state = initial_state("polyak", oracle.sample(x, token=0))
    trace = Trace(mode="polyak", seed=config.seed)
    xs: list[ParamVec] = []
    _maybe_track(record_iterates, xs, x)
    for k in range(mode.K + 1):
        g_true = problem.grad_f(x)
        f_here = problem.f(x)
        x_next, _, subgrad = step(x, state.d, gamma, config.ref, config.spec)
        _check_feasible(config.spec, x_next)
        g_next = problem.grad_f(x_next)
        trace.records.append(TraceRecord(
            k=k,
            F=f_here,
            gap_bregman=gap_bregman(config.ref, g_next, subgrad),
            step_norm=norm2(x_next - x),
            gamma=gamma,
            alpha=alpha,
            grad_norm=norm2(g_true),
            dir_error=norm2(state.d - g_true),
            sample_token=k,
        ))
        x = x_next
        _maybe_track(record_iterates, xs, x)
        if k < mode.K:
            state = polyak_update(state, oracle.sample(x, token=k + 1), alpha)
    trace.final_x = x
    trace.oracle_calls = oracle.calls
    if record_iterates:
        trace.iterates = xs
    return trace


def _run_storm(config: RunConfig, problem, noise: NoiseModel, x: ParamVec,
               record_iterates: bool) -> Trace:
    mode: StochasticStorm = config.mode
    if mode.K < 0:
        raise InvalidConfigError("K must be >= 0")
    oracle = GradientOracle(problem, noise, config.seed)
    state = initial_state("storm", oracle.sample(x, token=0), x0=x)
    trace = Trace(mode="storm", seed=config.seed)
    xs: list[ParamVec] = []
    _maybe_track(record_iterates, xs, x)
    for k in range(mode.K + 1):
        alpha_k, gamma_k = schedule("storm45", k, mode.gamma_bar)
        g_true = problem.grad_f(x)
        f_here = problem.f(x)
        x_next, _, subgrad = step(x, state.d, gamma_k, config.ref, config.spec)
        _check_feasible(config.spec, x_next)
        g_next = problem.grad_f(x_next)
        trace.records.append(TraceRecord(
            k=k,
            F=f_here,
            gap_bregman=gap_bregman(config.ref, g_next, subgrad),
            step_norm=norm2(x_next - x),
            gamma=gamma_k,
            alpha=alpha_k,
            grad_norm=norm2(g_true),
            dir_error=norm2(state.d - g_true),
            sample_token=k,
        ))
        if k < mode.K:
            # One fresh sample, evaluated at both the new and the old iterate.
            alpha_next, _ = schedule("storm45", k + 1, mode.gamma_bar)
            g_new = oracle.sample(x_next, token=k + 1)
            g_old = oracle.sample(x, token=k + 1)
            state = storm_update(state, g_new, g_old, alpha_next, x=x_next)
        x = x_next
        _maybe_track(record_iterates, xs, x)
    trace.final_x = x
    trace.oracle_calls = oracle.calls
    if record_iterates:
        trace.iterates = xs
    return trace


def _run_polar(config: RunConfig, problem, noise: NoiseModel, x: ParamVec,
               record_iterates: bool) -> Trace:
    mode: PolarExpressMode = config.mode
    if mode.K < 0:
        raise InvalidConfigError("K must be >= 0")
    for tag in config.spec.tags:
        if not isinstance(tag, Zero):
            raise InvalidConfigError("normalized mode needs an unconstrained spec")
    eps_hat = mode.eps_hat if mode.eps_hat is not None else (mode.K + 1.0) ** -0.25
    alpha, gamma = schedule("polyak43", mode.K, mode.gamma_bar)
    oracle = GradientOracle(problem, noise, config.seed)
    state = initial_state("polyak", oracle.sample(x, token=0))
    trace = Trace(mode="polar-express", seed=config.seed)
    xs: list[ParamVec] = []
    _maybe_track(record_iterates, xs, x)
    zero_sub = 0.0 * x
    for k in range(mode.K + 1):
        g_true = problem.grad_f(x)
        f_here = problem.f(x)
        x_next = polar_express_step(x, state.d, gamma, config.ref, eps_hat,
                                    poly_schedule=mode.poly_schedule)
        if mode.poly_schedule is None:
            _check_step_bound(x, x_next, gamma, config.ref)
        g_next = problem.grad_f(x_next)
        trace.records.append(TraceRecord(
            k=k,
            F=f_here,
            gap_bregman=gap_bregman(config.ref, g_next, zero_sub),
            step_norm=norm2(x_next - x),
            gamma=gamma,
            alpha=alpha,
            grad_norm=norm2(g_true),
            dir_error=norm2(state.d - g_true),
            sample_token=k,
        ))
        x = x_next
        _maybe_track(record_iterates, xs, x)
        if k < mode.K:
            state = polyak_update(state, oracle.sample(x, token=k + 1), alpha)
    trace.final_x = x
    trace.oracle_calls = oracle.calls
    if record_iterates:
        trace.iterates = xs
    return trace
