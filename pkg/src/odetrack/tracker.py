"""Inversion-free predictor-corrector tracking of a time-varying local minimum.

Each outer iteration first relaxes the auxiliary variables ``u, v`` of the
lifted system toward ``(J J^T)^{-1} J grad f`` and ``(J J^T)^{-1} h'`` with
``x`` and ``t`` held fixed, then takes one RK4 step in ``x``. Under the
default ``"relaxed"`` outer scheme ``u, v`` are re-relaxed (warm-started) at
every RK4 stage point; under ``"frozen"`` they keep their pre-step values for
all four stages. Neither phase solves a linear system.
"""

from __future__ import annotations

from dataclasses import dataclass, field, replace
from typing import Optional

import numpy as np

from .dynamics import OdeField, kkt_residual
from .errors import (ConfigurationError, InitializationError, NoConvergenceError,
                     OdetrackError, RelaxationStallError)
from .integrate import rk4_step, split_at_discontinuities, step_count
from .linalg import gram_apply, matvec, op_counter
from .oracle import OracleOptions, static_local_solve
from .problem import TimeVaryingProblem

__all__ = ["TrackerConfig", "TrackerState", "TrajectoryRecord", "kkt_residual",
           "initialize", "inner_relax", "outer_step", "track"]


@dataclass(frozen=True)
class TrackerConfig:
    alpha: float = 0.05
    rho: float = 50.0
    outer_step: float = 1e-3
    inner_step: Optional[float] = None  # defaults to 0.5 / rho
    inner_threshold: float = 1e-8
    inner_max_iters: int = 200
    init_tol: float = 1e-10
    outer_scheme: str = "relaxed"  # or "frozen"

    def __post_init__(self):
        if self.inner_step is None:
            object.__setattr__(self, "inner_step", 0.5 / self.rho if self.rho > 0 else 0.0)
        for name in ("alpha", "rho", "outer_step", "inner_step", "inner_threshold", "init_tol"):
            if not getattr(self, name) > 0:
                raise ConfigurationError(f"{name} must be positive")
        if not self.inner_threshold < 1:
            raise ConfigurationError("inner_threshold must be below 1")
        if self.inner_max_iters < 1:
            raise ConfigurationError("inner_max_iters must be at least 1")
        if self.outer_scheme not in ("relaxed", "frozen"):
            raise ConfigurationError("outer_scheme must be 'relaxed' or 'frozen'")


@dataclass
class TrackerState:
    t: float
    x: np.ndarray
    u: np.ndarray
    v: np.ndarray


@dataclass
class TrajectoryRecord:
    t: float
    x: np.ndarray
    f: float
    constraint_residual: float
    kkt_residual: float
    inner_iterations: int
    fstar: Optional[float] = None
    gap: Optional[float] = None
    restart: bool = field(default=False, repr=False)


def _require_equality_only(problem):
    if problem.q:
        raise ConfigurationError("tracker needs an equality-only problem; apply slack_augment first")


def inner_residual(problem, state):
    """Relaxation residual and the scale it is compared against."""
    x, t = state.x, state.t
    J = problem.jac(x, t)
    Jg = matvec(J, problem.grad(x, t))
    r = max(np.max(np.abs(Jg - gram_apply(J, state.u))),
            np.max(np.abs(problem.dh_dt(x, t) - gram_apply(J, state.v))))
    return float(r), 1.0 + float(np.max(np.abs(Jg)))


def inner_relax(problem: TimeVaryingProblem, state: TrackerState, cfg: TrackerConfig):
    """Relax ``u, v`` at fixed ``(x, t)`` until the residual is below ``inner_threshold``.

    Runs RK4 on ``u' = J grad f - J J^T u``, ``v' = h' - J J^T v`` in the
    time ``s = rho t`` with step ``rho * inner_step``. Returns the new state
    and the number of RK4 steps taken.
    """
    _require_equality_only(problem)
    p = problem.p
    if p == 0:
        return state, 0
    x, t = state.x, state.t
    J = problem.jac(x, t)
    Jg = matvec(J, problem.grad(x, t))
    dh = problem.dh_dt(x, t)
    limit = cfg.inner_threshold * (1.0 + float(np.max(np.abs(Jg))))

    def residual(w):
        return np.concatenate([Jg - gram_apply(J, w[:p]), dh - gram_apply(J, w[p:])])

    relax = OdeField(2 * p, lambda w, s: residual(w), "inner")
    w = np.concatenate([state.u, state.v])
    h = cfg.rho * cfg.inner_step
    for it in range(cfg.inner_max_iters + 1):
        r = float(np.max(np.abs(residual(w))))
        if r <= limit:
            return TrackerState(t, x, w[:p].copy(), w[p:].copy()), it
        if it == cfg.inner_max_iters:
            break
        w = rk4_step(relax, w, 0.0, h)
    raise RelaxationStallError(
        f"u, v relaxation stalled at t={t}: residual {r:.3e} > {limit:.3e} after {cfg.inner_max_iters} steps")


def outer_step(problem: TimeVaryingProblem, state: TrackerState, cfg: TrackerConfig, h=None):
    """One RK4 step of ``x' = -(1/alpha) grad f + (1/alpha) J^T u - J^T v``.

    Returns the advanced state and the inner iterations spent at stage points
    (always 0 for the ``"frozen"`` scheme).
    """
    h = cfg.outer_step if h is None else h
    alpha = cfg.alpha
    current = [state]
    spent = [0]

    def rhs(x, t):
        g = problem.grad(x, t)
        if problem.p == 0:
            return -g / alpha
        if cfg.outer_scheme == "relaxed":
            s = current[0]
            relaxed, iters = inner_relax(problem, TrackerState(t, x, s.u, s.v), cfg)
            current[0] = relaxed
            spent[0] += iters
        u, v = current[0].u, current[0].v
        J = problem.jac(x, t)
        return (-g + matvec(J.T, u)) / alpha - matvec(J.T, v)

    x = rk4_step(OdeField(problem.n, rhs, "outer"), state.x, state.t, h)
    last = current[0]
    return TrackerState(state.t + h, x, last.u.copy(), last.v.copy()), spent[0]


def initialize(problem: TimeVaryingProblem, cfg: TrackerConfig, t0: float, x_guess):
    """Static local solve at ``t0`` from ``x_guess``, then relax ``u, v``."""
    _require_equality_only(problem)
    try:
        x = static_local_solve(problem, t0, x_guess, cfg.init_tol)
    except NoConvergenceError as err:
        raise InitializationError(f"initialization at t={t0} failed: {err}") from err
    p = problem.p
    state = TrackerState(t0, x, np.zeros(p), np.zeros(p))
    return inner_relax(problem, state, replace(cfg, inner_max_iters=max(cfg.inner_max_iters, 10_000)))


def _record(problem, state, iters, oracle, restart=False):
    # diagnostics use solves; keep them out of the loop's operation counts
    with op_counter.paused():
        x, t = state.x, state.t
        fx = problem.f(x, t)
        rec = TrajectoryRecord(
            t=t, x=x.copy(), f=fx,
            constraint_residual=float(np.max(np.abs(problem.h(x, t)), initial=0.0)),
            kkt_residual=kkt_residual(problem, x, t),
            inner_iterations=iters, restart=restart)
        if oracle is not None:
            rec.fstar = oracle.fstar(problem, t)
            rec.gap = fx - rec.fstar
    return rec


def track(problem: TimeVaryingProblem, cfg: TrackerConfig, t0: float, t1: float, x_guess,
          oracle: Optional[OracleOptions] = None, stats: Optional[dict] = None):
    """Run the tracking loop over ``[t0, t1]``, one record per outer step.

    The horizon is cut at the problem's discontinuity times; each later
    segment restarts from a static solve at its start and contributes one
    extra record flagged ``restart``. If ``stats`` is a dict it receives the
    operation counts of the inner/outer loop alone.
    """
    _require_equality_only(problem)
    if not t1 > t0:
        raise ConfigurationError(f"t1={t1} must exceed t0={t0}")
    records = []
    loop_ops = {"matvec": 0, "gram": 0, "solve": 0, "flops": 0}
    x = np.asarray(x_guess, dtype=float)
    for seg, (a, b) in enumerate(split_at_discontinuities(t0, t1, problem.discontinuity_times)):
        try:
            state, iters = initialize(problem, cfg, a, x)
        except OdetrackError as err:
            raise type(err)(f"segment {seg} [{a:g}, {b:g}]: {err}") from err
        if seg > 0:
            records.append(_record(problem, state, iters, oracle, restart=True))
        nsteps = step_count(a, b, cfg.outer_step)
        for k in range(nsteps):
            before = op_counter.snapshot()
            try:
                state, iters = inner_relax(problem, state, cfg)
                t_next = b if k == nsteps - 1 else a + (k + 1) * cfg.outer_step
                state, stage_iters = outer_step(problem, state, cfg, t_next - state.t)
                iters += stage_iters
            except OdetrackError as err:
                raise type(err)(f"segment {seg}, step {k} (t={state.t:g}): {err}") from err
            state.t = t_next
            for key, val in op_counter.since(before).items():
                loop_ops[key] += val
            records.append(_record(problem, state, iters, oracle))
        x = state.x
    if stats is not None:
        stats.update(loop_ops)
    return records
