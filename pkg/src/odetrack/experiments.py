"""Reproducible experiments behind the CLI modes and the acceptance suite."""

from __future__ import annotations

import logging
import math
import os
from concurrent.futures import ThreadPoolExecutor
from dataclasses import replace

import numpy as np

from .catalog import catalog_get
from .dynamics import OdeField, lifted_field, reference_field
from .errors import OdetrackError
from .integrate import StepperConfig, integrate_to, rk4_step, step_count
from .linalg import op_counter
from .oracle import OracleOptions, TauPartition, discrete_solution
from .problem import TimeVaryingProblem
from .tracker import TrackerConfig, initialize, track

log = logging.getLogger(__name__)

# |f''| below which the regularized Newton flow stops dividing by it
NEWTON_SINGULAR_TOL = 1e-8


class RegularizedNewton:
    """Scalar continuous Newton flow ``x' = -f'(x, t) / f''(x, t)`` with a singular-curvature fallback.

    Where ``|f''| < NEWTON_SINGULAR_TOL`` the velocity becomes the descent
    direction ``-sign(f')`` scaled by the last regular Newton speed; such
    evaluations are counted in ``events``.
    """

    def __init__(self, problem: TimeVaryingProblem, fd_step=1e-6):
        if problem.n != 1 or problem.p or problem.q:
            raise OdetrackError("regularized Newton flow is for unconstrained scalar problems")
        self.problem = problem
        self.fd_step = fd_step
        self.last_speed = 0.0
        self.events = 0

    def curvature(self, x, t):
        e = self.fd_step
        return (self.problem.grad(x + e, t)[0] - self.problem.grad(x - e, t)[0]) / (2 * e)

    def __call__(self, x, t):
        slope = self.problem.grad(x, t)[0]
        curv = self.curvature(x, t)
        if abs(curv) < NEWTON_SINGULAR_TOL:
            self.events += 1
            return np.array([-math.copysign(self.last_speed, slope) if slope else 0.0])
        step = -slope / curv
        self.last_speed = abs(step)
        return np.array([step])


def switch_flow_series(T=20.0, step=1e-3, x0=-4.0):
    """Gradient flow and continuous Newton flow on ``quartic_switch`` from the same start.

    Returns ``(t, x_gradflow, x_newton, regularized)`` arrays, including the
    initial point; ``regularized[k]`` counts fallback evaluations in step k.
    """
    problem = catalog_get("quartic_switch")
    grad_flow = reference_field(problem, 1.0)
    newton = RegularizedNewton(problem)
    newton_field = OdeField(1, newton, "regularized-newton")
    n = step_count(0.0, T, step)
    ts = np.empty(n + 1)
    xg = np.empty(n + 1)
    xn = np.empty(n + 1)
    flags = np.zeros(n + 1, dtype=int)
    ts[0], xg[0], xn[0] = 0.0, x0, x0
    yg, yn = np.array([x0]), np.array([x0])
    t = 0.0
    for k in range(n):
        t_next = T if k == n - 1 else (k + 1) * step
        h = t_next - t
        yg = rk4_step(grad_flow, yg, t, h)
        before = newton.events
        yn = rk4_step(newton_field, yn, t, h)
        t = t_next
        ts[k + 1], xg[k + 1], xn[k + 1] = t, yg[0], yn[0]
        flags[k + 1] = newton.events - before
    return ts, xg, xn, flags


def _run_reference(problem, cfg, x_init, t0, t1):
    times, xs, fs = [], [], []

    def observe(obs):
        times.append(obs.t)
        xs.append(obs.state.copy())
        with op_counter.paused():
            fs.append(problem.f(obs.state, obs.t))

    integrate_to(reference_field(problem, cfg.alpha), x_init, t0, t1, StepperConfig(cfg.outer_step), observe)
    return np.array(times), np.array(xs), np.array(fs)


def _run_lifted(problem, cfg, state, t0, t1, rho):
    n = problem.n
    times, xs, fs = [], [], []

    def observe(obs):
        times.append(obs.t)
        xs.append(obs.state[:n].copy())
        with op_counter.paused():
            fs.append(problem.f(obs.state[:n], obs.t))

    y0 = np.concatenate([state.x, state.u, state.v])
    integrate_to(lifted_field(problem, cfg.alpha, rho), y0, t0, t1, StepperConfig(cfg.outer_step), observe)
    return np.array(times), np.array(xs), np.array(fs)


def lifted_reference_gap(problem, cfg: TrackerConfig, t0, t1, x_guess, rho):
    """Sup over the run of ``|f(x_lifted) - f(x_reference)|``, both from the same relaxed start.

    The lifted trajectory integrates the full ``(x, u, v)`` system with RK4
    at ``cfg.outer_step``, so ``rho`` sets a genuine time-scale separation.
    """
    state, _ = initialize(problem, replace(cfg, rho=rho, inner_step=None), t0, x_guess)
    _, _, f_ref = _run_reference(problem, cfg, state.x, t0, t1)
    _, _, f_lift = _run_lifted(problem, cfg, state, t0, t1, rho)
    return float(np.max(np.abs(f_lift - f_ref)))


def discrete_vs_track_distance(problem, cfg: TrackerConfig, t0, t1, x_guess, delta, records=None):
    """Sup distance between momentum-penalized iterates and the tracked trajectory at shared times."""
    if records is None:
        records = track(problem, cfg, t0, t1, x_guess)
    partition = TauPartition.uniform(delta, t1 - t0)
    shifted = _time_shifted(problem, t0)
    xs = discrete_solution(shifted, cfg.alpha, partition, x_guess, tol=cfg.init_tol)
    rec_times = np.array([r.t for r in records])
    worst = 0.0
    for tau, xk in zip(partition.times[1:], xs[1:]):
        i = int(np.argmin(np.abs(rec_times - (t0 + tau))))
        if abs(rec_times[i] - (t0 + tau)) > 0.5 * cfg.outer_step:
            continue
        worst = max(worst, float(np.max(np.abs(records[i].x - xk))))
    return worst


def _time_shifted(problem, t0):
    if t0 == 0:
        return problem
    shift = lambda fn: (None if fn is None else (lambda x, t: fn(x, t + t0)))  # noqa: E731
    return replace(
        problem,
        objective=shift(problem.objective), gradient=shift(problem.gradient),
        equality=shift(problem.equality), equality_jacobian=shift(problem.equality_jacobian),
        equality_time_partial=shift(problem.equality_time_partial),
        discontinuity_times=tuple(s - t0 for s in problem.discontinuity_times),
        optimal_value=shift_value(problem.optimal_value, t0))


def shift_value(fn, t0):
    return None if fn is None else (lambda t: fn(t + t0))


def compare_methods(problem, cfg: TrackerConfig, t0, t1, x_guess, delta=0.01):
    """Reference ODE, co-advanced lifted ODE, tracker and discrete solutions side by side."""
    report = {"methods": {}, "gaps": {}}
    runs = {}
    try:
        op_counter.reset()
        state, _ = initialize(problem, cfg, t0, x_guess)
        report["init_op_counts"] = op_counter.snapshot()
    except OdetrackError as err:
        report["error"] = str(err)
        return report

    def attempt(name, fn):
        op_counter.reset()
        try:
            runs[name] = fn()
            report["methods"][name] = {"status": "ok", "op_counts": op_counter.snapshot()}
        except OdetrackError as err:
            report["methods"][name] = {"status": "error", "error": str(err), "op_counts": op_counter.snapshot()}

    attempt("reference", lambda: _run_reference(problem, cfg, state.x, t0, t1))
    attempt("lifted", lambda: _run_lifted(problem, cfg, state, t0, t1, cfg.rho))
    loop_stats = {}

    def run_track():
        recs = track(problem, cfg, t0, t1, x_guess, stats=loop_stats)
        return (np.array([r.t for r in recs]), np.array([r.x for r in recs]), np.array([r.f for r in recs]), recs)

    attempt("tracker", run_track)
    if "tracker" in runs:
        report["methods"]["tracker"]["loop_op_counts"] = loop_stats
    if "tracker" in runs:
        op_counter.reset()
        try:
            dist = discrete_vs_track_distance(problem, cfg, t0, t1, x_guess, delta, records=runs["tracker"][3])
            runs["discrete"] = True
            report["methods"]["discrete"] = {"status": "ok", "delta": delta, "op_counts": op_counter.snapshot()}
            report["gaps"]["discrete_vs_tracker_sup_x"] = dist
        except OdetrackError as err:
            report["methods"]["discrete"] = {"status": "error", "error": str(err)}
    for a, b in (("lifted", "reference"), ("tracker", "reference"), ("tracker", "lifted")):
        if a in runs and b in runs and len(runs[a][2]) == len(runs[b][2]):
            report["gaps"][f"{a}_vs_{b}_sup_f"] = float(np.max(np.abs(runs[a][2] - runs[b][2])))
            report["gaps"][f"{a}_vs_{b}_sup_x"] = float(np.max(np.abs(runs[a][1] - runs[b][1])))
    report["ok"] = any(m["status"] == "ok" for m in report["methods"].values())
    return report


def sup_gap_after(records, t_from):
    gaps = [r.gap for r in records if r.t >= t_from and r.gap is not None]
    return max(gaps) if gaps else float("nan")


def alpha_sweep(problem, alphas, nu, cfg: TrackerConfig, t0, t1, x_guess, oracle=None, threads=None):
    """One tracking run per ``alpha``; rows sorted by ``alpha`` descending.

    Each row is ``(alpha, sup_gap_after_nu, max_constraint_residual, error)``
    with NaNs and an error message for failed runs.
    """
    oracle = oracle or OracleOptions()
    if threads is None:
        threads = int(os.environ.get("ODETRACK_THREADS", "1") or 1)

    def run(alpha):
        try:
            recs = track(problem, replace(cfg, alpha=alpha), t0, t1, x_guess, oracle)
        except OdetrackError as err:
            return (alpha, float("nan"), float("nan"), str(err))
        return (alpha, sup_gap_after(recs, t0 + nu), max(r.constraint_residual for r in recs), "")

    ordered = sorted(alphas, reverse=True)
    if threads > 1:
        with op_counter.paused(), ThreadPoolExecutor(max_workers=threads) as pool:
            return list(pool.map(run, ordered))
    return [run(a) for a in ordered]


def synthetic_family(n: int, seed: int = 0) -> TimeVaryingProblem:
    """``1/2 |x - c(t)|^2`` on the affine set ``A x = b(t)``, ``A`` with ``n // 2`` orthonormal rows."""
    p = max(1, n // 2)
    rng = np.random.default_rng(seed + n)
    Q, _ = np.linalg.qr(rng.standard_normal((n, n)))
    A = Q[:p].copy()
    phase = np.arange(n, dtype=float)
    direction = A @ np.ones(n) / np.sqrt(n)

    def center(t):
        return np.cos(t + phase)

    return TimeVaryingProblem(
        n=n,
        objective=lambda x, t: 0.5 * float(np.sum((x - center(t)) ** 2)),
        gradient=lambda x, t: x - center(t),
        p=p,
        equality=lambda x, t: A @ x - 0.1 * np.sin(t) * direction,
        equality_jacobian=lambda x, t: A,
        equality_time_partial=lambda x, t: -0.1 * np.cos(t) * direction,
        name=f"synthetic_{n}",
    )


def per_step_costs(ns=(4, 8, 16, 32), steps=20, cfg: TrackerConfig | None = None):
    """Multiply-add counts per outer step, tracker loop vs reference ODE, for each ``n``."""
    cfg = cfg or TrackerConfig(alpha=0.5, rho=1.0, inner_step=0.5)
    t1 = steps * cfg.outer_step
    rows = []
    for n in ns:
        problem = synthetic_family(n)
        stats = {}
        track(problem, cfg, 0.0, t1, np.zeros(n), stats=stats)
        state, _ = initialize(problem, cfg, 0.0, np.zeros(n))
        op_counter.reset()
        integrate_to(reference_field(problem, cfg.alpha), state.x, 0.0, t1, StepperConfig(cfg.outer_step))
        ref = op_counter.snapshot()
        rows.append({"n": n, "lifted_flops": stats["flops"] / steps, "lifted_solves": stats["solve"],
                     "reference_flops": ref["flops"] / steps, "reference_solves": ref["solve"]})
    return rows


def loglog_slope(xs, ys):
    return float(np.polyfit(np.log(xs), np.log(ys), 1)[0])
