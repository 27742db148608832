"""Time-varying constrained problems, slack reformulation and derivative checks."""

from __future__ import annotations

from dataclasses import dataclass, field, replace
from typing import Callable, Optional, Sequence

import numpy as np

from .errors import ConfigurationError, DimensionError, EvaluationError, InfeasiblePointError

# slack_lift_point accepts g_j(x, t) up to this value
FEASIBILITY_TOL = 1e-9


def _empty_vector(x, t):
    return np.zeros(0)


@dataclass(frozen=True)
class TimeVaryingProblem:
    """``min f(x, t)  s.t.  h(x, t) = 0,  g(x, t) <= 0``.

    Evaluators take ``(x, t)`` with ``x`` a 1-D array of length ``n`` and must
    be pure. Equality evaluators may be omitted when ``p == 0``, inequality
    ones when ``q == 0``.

    ``chart`` (angle -> point) and ``optimal_value`` (t -> f*) are optional
    oracle hooks supplied by catalog entries.
    """

    n: int
    objective: Callable
    gradient: Callable
    p: int = 0
    equality: Optional[Callable] = None
    equality_jacobian: Optional[Callable] = None
    equality_time_partial: Optional[Callable] = None
    q: int = 0
    inequality: Optional[Callable] = None
    inequality_jacobian: Optional[Callable] = None
    inequality_time_partial: Optional[Callable] = None
    discontinuity_times: Sequence[float] = ()
    name: str = ""
    chart: Optional[Callable] = field(default=None, compare=False)
    chart_range: tuple = (0.0, 2.0 * np.pi)
    optimal_value: Optional[Callable] = field(default=None, compare=False)

    def __post_init__(self):
        if self.n < 1 or self.p < 0 or self.q < 0:
            raise ConfigurationError(f"bad dimensions n={self.n}, p={self.p}, q={self.q}")
        if self.p > 0 and None in (self.equality, self.equality_jacobian, self.equality_time_partial):
            raise ConfigurationError("p > 0 requires equality, equality_jacobian and equality_time_partial")
        times = tuple(float(s) for s in self.discontinuity_times)
        if any(b <= a for a, b in zip(times, times[1:])):
            raise ConfigurationError("discontinuity_times must be strictly increasing")
        object.__setattr__(self, "discontinuity_times", times)

    @property
    def has_inequalities(self):
        return self.q > 0 and None not in (
            self.inequality, self.inequality_jacobian, self.inequality_time_partial)

    # Shape-checked evaluation. Empty constraint blocks come back as size-0 arrays.

    def f(self, x, t):
        return float(self.objective(x, t))

    def grad(self, x, t):
        return _vector(self.gradient(x, t), self.n, "gradient")

    def h(self, x, t):
        if self.p == 0:
            return np.zeros(0)
        return _vector(self.equality(x, t), self.p, "equality")

    def jac(self, x, t):
        if self.p == 0:
            return np.zeros((0, self.n))
        return _matrix(self.equality_jacobian(x, t), self.p, self.n, "equality_jacobian")

    def dh_dt(self, x, t):
        if self.p == 0:
            return np.zeros(0)
        return _vector(self.equality_time_partial(x, t), self.p, "equality_time_partial")

    def g(self, x, t):
        if self.q == 0:
            return np.zeros(0)
        return _vector(self.inequality(x, t), self.q, "inequality")

    def jac_g(self, x, t):
        if self.q == 0:
            return np.zeros((0, self.n))
        return _matrix(self.inequality_jacobian(x, t), self.q, self.n, "inequality_jacobian")

    def dg_dt(self, x, t):
        if self.q == 0:
            return np.zeros(0)
        return _vector(self.inequality_time_partial(x, t), self.q, "inequality_time_partial")

    def with_discontinuities(self, times):
        return replace(self, discontinuity_times=tuple(times))


def _vector(value, size, what):
    v = np.atleast_1d(np.asarray(value, dtype=float))
    if v.shape != (size,):
        raise DimensionError(f"{what} returned shape {v.shape}, expected ({size},)")
    return v


def _matrix(value, rows, cols, what):
    M = np.asarray(value, dtype=float)
    if M.ndim != 2 and M.size == rows * cols:
        M = M.reshape(rows, cols)
    if M.shape != (rows, cols):
        raise DimensionError(f"{what} returned shape {M.shape}, expected ({rows}, {cols})")
    return M


def slack_augment(problem: TimeVaryingProblem) -> TimeVaryingProblem:
    """Equality-only problem over ``(x, z)`` with ``g_j(x, t) + z_j**2 = 0``."""
    if problem.q < 1:
        raise ConfigurationError("slack_augment needs at least one inequality constraint")
    if not problem.has_inequalities:
        raise ConfigurationError("inequality, inequality_jacobian and inequality_time_partial are all required")
    n, p, q = problem.n, problem.p, problem.q

    def split(xz):
        xz = np.asarray(xz, dtype=float)
        return xz[:n], xz[n:]

    def objective(xz, t):
        return problem.f(split(xz)[0], t)

    def gradient(xz, t):
        return np.concatenate([problem.grad(split(xz)[0], t), np.zeros(q)])

    def equality(xz, t):
        x, z = split(xz)
        return np.concatenate([problem.h(x, t), problem.g(x, t) + z * z])

    def equality_jacobian(xz, t):
        x, z = split(xz)
        J = np.zeros((p + q, n + q))
        J[:p, :n] = problem.jac(x, t)
        J[p:, :n] = problem.jac_g(x, t)
        J[p:, n:] = np.diag(2.0 * z)
        return J

    def equality_time_partial(xz, t):
        x, _ = split(xz)
        return np.concatenate([problem.dh_dt(x, t), problem.dg_dt(x, t)])

    return TimeVaryingProblem(
        n=n + q, objective=objective, gradient=gradient,
        p=p + q, equality=equality, equality_jacobian=equality_jacobian,
        equality_time_partial=equality_time_partial,
        discontinuity_times=problem.discontinuity_times,
        name=f"{problem.name}+slack" if problem.name else "",
        optimal_value=problem.optimal_value,
    )


def slack_lift_point(problem: TimeVaryingProblem, x, t) -> np.ndarray:
    """Append slacks ``z_j = sqrt(-g_j(x, t))`` to a feasible ``x``."""
    x = np.asarray(x, dtype=float)
    gx = problem.g(x, t)
    if np.any(gx > FEASIBILITY_TOL):
        raise InfeasiblePointError(f"g(x, t) = {gx} violates g <= 0 at t={t}")
    return np.concatenate([x, np.sqrt(np.maximum(-gx, 0.0))])


@dataclass
class DerivativeReport:
    """Maximum absolute deviation of each supplied derivative from central differences."""

    deviations: dict
    passed: bool
    tol: float
    probes: list

    def __str__(self):
        parts = ", ".join(f"{k}={v:.2e}" for k, v in self.deviations.items())
        return f"{'PASS' if self.passed else 'FAIL'} (tol={self.tol:g}): {parts}"


def _finite(value, what, x, t):
    arr = np.asarray(value, dtype=float)
    if not np.all(np.isfinite(arr)):
        raise EvaluationError(f"{what} is not finite at x={x}, t={t}", x=x, t=t)
    return arr


def check_derivatives(problem: TimeVaryingProblem, x, t, fd_step=1e-5, tol=1e-4) -> DerivativeReport:
    """Compare analytic derivatives with central finite differences at ``(x, t)``."""
    if not fd_step > 0:
        raise ConfigurationError("fd_step must be positive")
    x = np.asarray(x, dtype=float).reshape(problem.n)
    if not np.all(np.isfinite(x)):
        raise EvaluationError("probe point is not finite", x=x, t=t)
    eye = np.eye(problem.n)

    def dx(fun):
        cols = [(_finite(fun(x + fd_step * e, t), "evaluator", x, t)
                 - _finite(fun(x - fd_step * e, t), "evaluator", x, t)) / (2 * fd_step) for e in eye]
        return np.stack(cols, axis=-1)

    def dt(fun):
        return (_finite(fun(x, t + fd_step), "evaluator", x, t)
                - _finite(fun(x, t - fd_step), "evaluator", x, t)) / (2 * fd_step)

    deviations = {}
    grad = _finite(problem.grad(x, t), "gradient", x, t)
    deviations["gradient"] = float(np.max(np.abs(grad - dx(problem.f)), initial=0.0))
    if problem.p:
        J = _finite(problem.jac(x, t), "equality_jacobian", x, t)
        deviations["equality_jacobian"] = float(np.max(np.abs(J - dx(problem.h))))
        ht = _finite(problem.dh_dt(x, t), "equality_time_partial", x, t)
        deviations["equality_time_partial"] = float(np.max(np.abs(ht - dt(problem.h))))
    if problem.has_inequalities:
        G = _finite(problem.jac_g(x, t), "inequality_jacobian", x, t)
        deviations["inequality_jacobian"] = float(np.max(np.abs(G - dx(problem.g))))
        gt = _finite(problem.dg_dt(x, t), "inequality_time_partial", x, t)
        deviations["inequality_time_partial"] = float(np.max(np.abs(gt - dt(problem.g))))
    passed = all(d <= tol for d in deviations.values())
    return DerivativeReport(deviations, passed, tol, [(x.copy(), float(t))])
