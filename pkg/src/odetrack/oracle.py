"""Ground truth for tracking runs.

Static local solves (frozen-time projected gradient flow followed by a
Newton polish on the KKT system), brute-force grid scans of small problems,
the benchmark value ``f*(t)``, and discrete momentum-penalized solutions on
a time partition.
"""

from __future__ import annotations

import logging
from dataclasses import dataclass, field
from typing import Optional

import numpy as np

from .dynamics import NewtonSystem, frozen_field, kkt_residual, newton_field
from .errors import (ConfigurationError, DivergenceError, NoConvergenceError, SingularityError,
                     UnsupportedDimensionError)
from .integrate import rk4_step
from .linalg import gram_matrix, matvec, solve_spd
from .problem import TimeVaryingProblem

log = logging.getLogger(__name__)

NEWTON_POLISH_STEPS = 20
DEDUP_RADIUS = 1e-4
HESSIAN_FD_STEP = 1e-6
# second-derivative magnitude below which a critical point counts as degenerate
CURVATURE_TOL = 1e-5
# KKT residual at which the flow first hands over to a Newton polish
NEWTON_SWITCH = 1e-3
# per-step local error allowed in the static flow, relative to 1 + |x|
FLOW_LOCAL_TOL = 1e-6


def _restore_feasibility(problem, x, t, tol, max_iter=50):
    """Minimum-norm Gauss-Newton steps on ``h(x, t) = 0``."""
    for _ in range(max_iter):
        hx = problem.h(x, t)
        if np.max(np.abs(hx), initial=0.0) <= tol:
            break
        J = problem.jac(x, t)
        x = x - matvec(J.T, solve_spd(gram_matrix(J), hx))
    return x


def _lagrangian_gradient(problem, x, lam, t):
    return problem.grad(x, t) + (problem.jac(x, t).T @ lam if problem.p else 0.0)


def kkt_newton_system(problem: TimeVaryingProblem, t: float) -> NewtonSystem:
    """``F(x, lam) = [grad f + J^T lam; h]`` with a finite-difference Hessian block."""
    n, p = problem.n, problem.p

    def residual(z):
        x, lam = z[:n], z[n:]
        return np.concatenate([_lagrangian_gradient(problem, x, lam, t), problem.h(x, t)])

    def jacobian(z):
        x, lam = z[:n], z[n:]
        H = np.empty((n, n))
        for i in range(n):
            e = np.zeros(n)
            e[i] = HESSIAN_FD_STEP * max(1.0, abs(x[i]))
            H[:, i] = (_lagrangian_gradient(problem, x + e, lam, t)
                       - _lagrangian_gradient(problem, x - e, lam, t)) / (2 * e[i])
        H = 0.5 * (H + H.T)
        J = problem.jac(x, t)
        return np.block([[H, J.T], [J, np.zeros((p, p))]])

    return NewtonSystem(n + p, residual, jacobian)


def _multiplier_estimate(problem, x, t):
    if problem.p == 0:
        return np.zeros(0)
    J = problem.jac(x, t)
    return -solve_spd(gram_matrix(J), matvec(J, problem.grad(x, t)))


def _newton_polish(problem, x, t, tol):
    system = kkt_newton_system(problem, t)
    direction = newton_field(system)
    z = np.concatenate([x, _multiplier_estimate(problem, x, t)])
    best, best_res = x, kkt_residual(problem, x, t)
    for _ in range(NEWTON_POLISH_STEPS):
        if best_res <= 0.01 * tol:
            break
        try:
            z = z + direction(z, t)
        except SingularityError:
            break
        res = kkt_residual(problem, z[:problem.n], t)
        if not res < best_res:
            break
        best, best_res = z[:problem.n].copy(), res
    return best, best_res


def _reduced_hessian_min_eig(problem, x, t):
    """Smallest eigenvalue of the Lagrangian Hessian restricted to ``ker J``."""
    n = problem.n
    lam = _multiplier_estimate(problem, x, t)
    K = kkt_newton_system(problem, t).jacobian(np.concatenate([x, lam]))
    H = K[:n, :n]
    if problem.p:
        # orthonormal basis of ker J from the full SVD
        _, s, vt = np.linalg.svd(problem.jac(x, t))
        Z = vt[problem.p:].T
        if Z.shape[1] == 0:
            return np.inf
        H = Z.T @ H @ Z
    return float(np.min(np.linalg.eigvalsh(H)))


def static_local_solve(problem: TimeVaryingProblem, t: float, x0, tol: float = 1e-10,
                       max_flow_steps: int = 20_000, initial_step: float = 0.01) -> np.ndarray:
    """Local minimizer of ``f(., t)`` on ``h(., t) = 0`` reached by flowing downhill from ``x0``.

    The frozen-time flow runs with step-doubling error control and rejects
    any step raising ``f``. Whenever the KKT residual has dropped a further factor of
    100 below ``NEWTON_SWITCH`` a Newton polish on the KKT system is tried;
    it is kept only if it meets ``tol`` without raising ``f`` and the reduced
    Hessian there is not clearly indefinite. Otherwise the flow resumes.
    """
    if not tol > 0:
        raise ConfigurationError("tol must be positive")
    if problem.q:
        raise ConfigurationError("static_local_solve needs an equality-only problem")
    x = np.array(x0, dtype=float).reshape(problem.n)
    if problem.p:
        x = _restore_feasibility(problem, x, t, 0.01 * tol)
    field = frozen_field(problem, t)
    h = initial_step
    fx = problem.f(x, t)
    res = kkt_residual(problem, x, t)
    next_try = NEWTON_SWITCH
    steps = 0
    while res > 10 * tol and steps < max_flow_steps:
        if res <= next_try:
            next_try = 0.01 * res
            z, zres = _newton_polish(problem, x, t, tol)
            if (zres <= tol and problem.f(z, t) <= fx + 1e-9 * (1 + abs(fx))
                    and _reduced_hessian_min_eig(problem, z, t) > -CURVATURE_TOL):
                return z
        steps += 1
        try:
            y = rk4_step(field, x, 0.0, h)
            # step doubling: a large discrepancy means the step left the flow's basin
            half = rk4_step(field, rk4_step(field, x, 0.0, h / 2), 0.0, h / 2)
            err = float(np.max(np.abs(y - half)))
            if problem.p:
                y = _restore_feasibility(problem, half, t, 0.01 * tol, max_iter=5)
            else:
                y = half
            fy = problem.f(y, t)
        except (ArithmeticError, SingularityError, DivergenceError):
            fy, err = np.inf, np.inf
        # a few ulps of slack so round-off near the minimum does not stall the flow
        if (not np.isfinite(fy) or err > FLOW_LOCAL_TOL * (1 + float(np.max(np.abs(x))))
                or fy > fx + 1e-13 * (1 + abs(fx))):
            h *= 0.5
            if h < 1e-14:
                break
            continue
        x, fx = y, fy
        res = kkt_residual(problem, x, t)
        h = min(2.0 * h, 1e6)
    x, res = _newton_polish(problem, x, t, tol)
    if res > tol:
        raise NoConvergenceError(
            f"static solve at t={t} stopped with KKT residual {res:.3e} > {tol:.1e}", residual=res)
    return x


@dataclass(frozen=True)
class TauPartition:
    """Increasing sampling times starting at 0."""

    times: tuple

    def __post_init__(self):
        times = tuple(float(s) for s in self.times)
        if len(times) < 2 or times[0] != 0.0:
            raise ConfigurationError("a partition needs at least two times starting at 0")
        if any(b <= a for a, b in zip(times, times[1:])):
            raise ConfigurationError("partition times must be strictly increasing")
        object.__setattr__(self, "times", times)

    @property
    def tightness(self):
        return max(b - a for a, b in zip(self.times, self.times[1:]))

    @classmethod
    def uniform(cls, delta, horizon):
        k = int(np.floor(horizon / delta + 1e-9))
        times = [i * delta for i in range(k + 1)]
        if horizon - times[-1] > 1e-9 * delta:
            times.append(horizon)
        return cls(tuple(times))


def penalized_problem(problem: TimeVaryingProblem, alpha, tau, gap, x_prev) -> TimeVaryingProblem:
    """``f(x, tau) + (alpha/2) |x - x_prev|^2 / gap`` with constraints frozen at ``tau``."""
    x_prev = np.asarray(x_prev, dtype=float)
    weight = alpha / gap

    def objective(x, t):
        d = np.asarray(x) - x_prev
        return problem.f(x, tau) + 0.5 * weight * float(d @ d)

    def gradient(x, t):
        return problem.grad(x, tau) + weight * (np.asarray(x) - x_prev)

    kwargs = {}
    if problem.p:
        kwargs = dict(p=problem.p,
                      equality=lambda x, t: problem.h(x, tau),
                      equality_jacobian=lambda x, t: problem.jac(x, tau),
                      equality_time_partial=lambda x, t: np.zeros(problem.p))
    return TimeVaryingProblem(n=problem.n, objective=objective, gradient=gradient, **kwargs)


def discrete_solution(problem: TimeVaryingProblem, alpha: float, partition: TauPartition,
                      x_guess, tol: float = 1e-10):
    """Momentum-penalized solutions ``x_0, x_1, ...`` at the partition times.

    ``x_0`` is a local solution at ``t = 0``; each later ``x_k`` is the local
    solution of the penalized program reached from ``x_{k-1}``.
    """
    times = partition.times
    try:
        xs = [static_local_solve(problem, times[0], x_guess, tol)]
    except NoConvergenceError as err:
        raise NoConvergenceError(f"k=0: {err}", residual=err.residual) from err
    for k in range(1, len(times)):
        sub = penalized_problem(problem, alpha, times[k], times[k] - times[k - 1], xs[-1])
        try:
            xs.append(static_local_solve(sub, times[k], xs[-1], tol))
        except NoConvergenceError as err:
            raise NoConvergenceError(f"k={k}: {err}", residual=err.residual) from err
    return xs


@dataclass
class CriticalPoint:
    x: np.ndarray
    f: float
    kind: str  # "min", "max", "saddle" or "degenerate"


@dataclass
class CriticalPointSet:
    t: float
    points: list = field(default_factory=list)

    def of_kind(self, kind):
        return [c for c in self.points if c.kind == kind]

    @property
    def minima(self):
        return self.of_kind("min")


def _classify(eigs):
    if np.all(eigs > CURVATURE_TOL):
        return "min"
    if np.all(eigs < -CURVATURE_TOL):
        return "max"
    if np.any(eigs > CURVATURE_TOL) and np.any(eigs < -CURVATURE_TOL):
        return "saddle"
    return "degenerate"


def _fd_jacobian(fun, x, step=HESSIAN_FD_STEP):
    x = np.asarray(x, dtype=float)
    cols = []
    for i in range(len(x)):
        e = np.zeros_like(x)
        e[i] = step
        cols.append((np.atleast_1d(fun(x + e)) - np.atleast_1d(fun(x - e))) / (2 * step))
    H = np.stack(cols, axis=1)
    return 0.5 * (H + H.T)


def _newton_on_gradient(grad, x, max_iter=100, tol=1e-9):
    for _ in range(max_iter):
        g = np.atleast_1d(grad(x))
        if np.max(np.abs(g)) <= tol:
            return x
        try:
            x = x - np.linalg.solve(_fd_jacobian(grad, x), g)
        except np.linalg.LinAlgError:
            return None
        if not np.all(np.isfinite(x)):
            return None
    return x if np.max(np.abs(np.atleast_1d(grad(x)))) <= tol else None


def _grid_extrema(values, periodic):
    """Indices of interior grid minima of ``values`` (1-D or 2-D array)."""
    found = []
    shape = values.shape
    offsets = [(-1,), (1,)] if values.ndim == 1 else [
        (i, j) for i in (-1, 0, 1) for j in (-1, 0, 1) if (i, j) != (0, 0)]
    for idx in np.ndindex(shape):
        neighbours = []
        interior = True
        for off in offsets:
            nb = tuple(a + b for a, b in zip(idx, off))
            if periodic:
                nb = tuple(c % s for c, s in zip(nb, shape))
            elif any(c < 0 or c >= s for c, s in zip(nb, shape)):
                interior = False
                break
            neighbours.append(values[nb])
        if interior and all(values[idx] <= v for v in neighbours) and any(values[idx] < v for v in neighbours):
            found.append(idx)
    return found


def _add_unique(points, cand, radius):
    for c in points:
        if np.max(np.abs(c.x - cand.x)) <= radius:
            return
    points.append(cand)


def grid_scan(problem: TimeVaryingProblem, t: float, box=None, resolution: int = 2001) -> CriticalPointSet:
    """Brute-force critical points of ``f(., t)`` on a grid.

    Unconstrained problems with ``n <= 2`` are scanned over ``box`` (one
    ``(lo, hi)`` pair per axis). Circle-type problems (``n == 2``, ``p == 1``)
    are scanned along the catalog-supplied chart.
    """
    if problem.q:
        raise UnsupportedDimensionError("grid_scan does not handle inequality constraints")
    if problem.p == 0:
        if problem.n > 2:
            raise UnsupportedDimensionError(f"grid_scan supports n <= 2, got n={problem.n}")
        if box is None or len(box) != problem.n:
            raise ConfigurationError("box needs one (lo, hi) pair per coordinate")
        return _scan_box(problem, t, box, resolution)
    if problem.n == 2 and problem.p == 1 and problem.chart is not None:
        return _scan_chart(problem, t, resolution)
    raise UnsupportedDimensionError(
        f"grid_scan supports unconstrained n <= 2 or charted circles (n={problem.n}, p={problem.p})")


def _scan_box(problem, t, box, resolution):
    axes = [np.linspace(lo, hi, resolution) for lo, hi in box]
    spacing = max((hi - lo) / (resolution - 1) for lo, hi in box)
    radius = max(DEDUP_RADIUS, spacing)
    mesh = np.meshgrid(*axes, indexing="ij")
    shape = mesh[0].shape
    fvals = np.empty(shape)
    gnorm = np.empty(shape)
    for idx in np.ndindex(shape):
        x = np.array([m[idx] for m in mesh])
        fvals[idx] = problem.f(x, t)
        gnorm[idx] = np.max(np.abs(problem.grad(x, t)))
    points = []
    for idx in _grid_extrema(fvals, periodic=False):
        x0 = np.array([m[idx] for m in mesh])
        try:
            x = static_local_solve(problem, t, x0, tol=1e-10)
        except NoConvergenceError as err:
            log.debug("grid minimum near %s not refined: %s", x0, err)
            continue
        _add_unique(points, CriticalPoint(x, problem.f(x, t), "min"), radius)
    grad = lambda x: problem.grad(x, t)  # noqa: E731
    for idx in _grid_extrema(gnorm, periodic=False):
        x = _newton_on_gradient(grad, np.array([m[idx] for m in mesh]))
        if x is None:
            continue
        kind = _classify(np.linalg.eigvalsh(_fd_jacobian(grad, x)))
        _add_unique(points, CriticalPoint(x, problem.f(x, t), kind), radius)
    points.sort(key=lambda c: c.f)
    return CriticalPointSet(t, points)


def _scan_chart(problem, t, resolution):
    lo, hi = problem.chart_range
    angles = np.linspace(lo, hi, resolution, endpoint=False)
    radius = max(DEDUP_RADIUS, (hi - lo) / resolution)
    reduced = lambda a: problem.f(problem.chart(a[0]), t)  # noqa: E731

    def dreduced(a, e=1e-6):
        return np.array([(reduced(a + e) - reduced(a - e)) / (2 * e)])

    fvals = np.array([reduced(np.array([a])) for a in angles])
    dvals = np.array([abs(dreduced(np.array([a]))[0]) for a in angles])
    points = []
    for (i,) in _grid_extrema(fvals, periodic=True):
        try:
            x = static_local_solve(problem, t, problem.chart(angles[i]), tol=1e-10)
        except NoConvergenceError as err:
            log.debug("chart minimum near angle %g not refined: %s", angles[i], err)
            continue
        _add_unique(points, CriticalPoint(x, problem.f(x, t), "min"), radius)
    for (i,) in _grid_extrema(dvals, periodic=True):
        a = _newton_on_gradient(lambda a: dreduced(a, 1e-5), np.array([angles[i]]), tol=1e-7)
        if a is None:
            continue
        x = problem.chart(a[0])
        curvature = _fd_jacobian(lambda b: dreduced(b, 1e-5), a, step=1e-4)
        kind = _classify(np.linalg.eigvalsh(curvature))
        _add_unique(points, CriticalPoint(x, problem.f(x, t), kind), radius)
    points.sort(key=lambda c: c.f)
    return CriticalPointSet(t, points)


def f_star(problem: TimeVaryingProblem, t: float, region=None, resolution: int = 2001) -> float:
    """Benchmark value: the catalog's closed form, or the best grid-scanned minimum in ``region``."""
    if region is None:
        if problem.optimal_value is None:
            raise ConfigurationError(f"problem {problem.name!r} has no closed-form f*; give a region")
        return float(problem.optimal_value(t))
    minima = grid_scan(problem, t, region, resolution).minima
    if not minima:
        raise NoConvergenceError(f"no local minimum found in {region} at t={t}")
    return min(c.f for c in minima)


@dataclass(frozen=True)
class OracleOptions:
    """Per-run request for ``f*`` benchmarks; ``region=None`` uses the closed form."""

    region: Optional[tuple] = None
    resolution: int = 401

    def fstar(self, problem, t):
        return f_star(problem, t, self.region, self.resolution)
