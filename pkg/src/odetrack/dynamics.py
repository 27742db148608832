"""Right-hand sides of the tracking ODEs, as :class:`OdeField` objects.

All fields act on flat numpy state vectors and are pure. The lifted field
uses only :func:`~odetrack.linalg.matvec` and
:func:`~odetrack.linalg.gram_apply`; everything else may call
:func:`~odetrack.linalg.solve_spd`.
"""

from __future__ import annotations

from dataclasses import dataclass
from typing import Callable

import numpy as np

from .errors import ConfigurationError, DimensionError, SingularityError
from .linalg import gram_apply, gram_matrix, matvec, project_tangent, solve_spd
from .problem import TimeVaryingProblem

# time step of the central difference used for df/dt in lyapunov_rate
TIME_FD_STEP = 1e-6


@dataclass(frozen=True)
class OdeField:
    state_dim: int
    rhs: Callable  # (state, t) -> d state / dt
    label: str = ""

    def __call__(self, state, t):
        return self.rhs(state, t)


@dataclass(frozen=True)
class NewtonSystem:
    """Square system ``F(u) = 0`` with Jacobian ``F'(u)``."""

    dim: int
    residual: Callable
    jacobian: Callable


def _require_equality_only(problem):
    if problem.q:
        raise ConfigurationError(
            "problem has inequality constraints; apply slack_augment first")


def _located(err, x, t):
    return SingularityError(f"LICQ failure at x={np.asarray(x).tolist()}, t={t}: {err}", x=x, t=t)


def _normal_drift(J, dh):
    """``J^T (J J^T)^{-1} h'``."""
    return matvec(J.T, solve_spd(gram_matrix(J), dh))


def reference_field(problem: TimeVaryingProblem, alpha: float) -> OdeField:
    """``x' = -(1/alpha) P grad f - J^T (J J^T)^{-1} h'``, with explicit solves."""
    if not alpha > 0:
        raise ConfigurationError("alpha must be positive")
    _require_equality_only(problem)

    def rhs(x, t):
        g = problem.grad(x, t)
        if problem.p == 0:
            return -g / alpha
        J = problem.jac(x, t)
        try:
            return -project_tangent(J, g) / alpha - _normal_drift(J, problem.dh_dt(x, t))
        except SingularityError as err:
            raise _located(err, x, t) from err

    return OdeField(problem.n, rhs, f"reference(alpha={alpha:g})")


def theta_eta(problem: TimeVaryingProblem, x, t):
    """``theta = J^T (J J^T)^{-1}`` (n x p) and ``eta = (I - theta J) grad f``."""
    _require_equality_only(problem)
    x = np.asarray(x, dtype=float)
    g = problem.grad(x, t)
    J = problem.jac(x, t)
    if problem.p == 0:
        return np.zeros((problem.n, 0)), g
    try:
        G = gram_matrix(J)
        cols = [solve_spd(G, e) for e in np.eye(problem.p)]
        theta = np.stack([matvec(J.T, c) for c in cols], axis=1)
        eta = project_tangent(J, g)
    except SingularityError as err:
        raise _located(err, x, t) from err
    return theta, eta


def lifted_field(problem: TimeVaryingProblem, alpha: float, rho: float) -> OdeField:
    """Inversion-free system over the stacked state ``(x, u, v)``::

        x' = -(1/alpha) grad f + (1/alpha) J^T u - J^T v
        u' = rho (J grad f - J J^T u)
        v' = rho (h' - J J^T v)
    """
    if not (alpha > 0 and rho > 0):
        raise ConfigurationError("alpha and rho must be positive")
    _require_equality_only(problem)
    n, p = problem.n, problem.p

    def rhs(state, t):
        x, u, v = state[:n], state[n:n + p], state[n + p:]
        g = problem.grad(x, t)
        if p == 0:
            return -g / alpha
        J = problem.jac(x, t)
        dx = (-g + matvec(J.T, u)) / alpha - matvec(J.T, v)
        du = rho * (matvec(J, g) - gram_apply(J, u))
        dv = rho * (problem.dh_dt(x, t) - gram_apply(J, v))
        return np.concatenate([dx, du, dv])

    return OdeField(n + 2 * p, rhs, f"lifted(alpha={alpha:g}, rho={rho:g})")


def rescaled_field(problem: TimeVaryingProblem, alpha: float, t0: float) -> OdeField:
    """Reference ODE in the time ``s = (t - t0)/alpha``; ``alpha = 0`` freezes time at ``t0``."""
    if alpha < 0:
        raise ConfigurationError("alpha must be non-negative")
    _require_equality_only(problem)

    def rhs(x, s):
        t = alpha * s + t0
        g = problem.grad(x, t)
        if problem.p == 0:
            return -g
        J = problem.jac(x, t)
        try:
            out = -project_tangent(J, g)
            if alpha != 0:
                out = out - alpha * _normal_drift(J, problem.dh_dt(x, t))
        except SingularityError as err:
            raise _located(err, x, t) from err
        return out

    return OdeField(problem.n, rhs, f"rescaled(alpha={alpha:g}, t0={t0:g})")


def frozen_field(problem: TimeVaryingProblem, t0: float) -> OdeField:
    """Projected gradient flow ``x' = -P grad f(x, t0)``; autonomous."""
    field = rescaled_field(problem, 0.0, t0)
    return OdeField(field.state_dim, field.rhs, f"frozen(t0={t0:g})")


def newton_field(system: NewtonSystem) -> OdeField:
    """Continuous Newton method ``u' = -F'(u)^{-1} F(u)``."""

    def rhs(u, t):
        A = np.asarray(system.jacobian(u), dtype=float).reshape(system.dim, system.dim)
        F = np.asarray(system.residual(u), dtype=float).reshape(system.dim)
        try:
            w = np.linalg.solve(A, F)
        except np.linalg.LinAlgError as err:
            raise SingularityError(f"singular Jacobian at u={np.asarray(u).tolist()}", x=u, t=t) from err
        if not np.all(np.isfinite(w)):
            raise SingularityError(f"singular Jacobian at u={np.asarray(u).tolist()}", x=u, t=t)
        return -w

    return OdeField(system.dim, rhs, "newton")


def ramm_lift_field(system: NewtonSystem, rho: float) -> OdeField:
    """Lifted Newton flow over ``(u, v)``: ``u' = -v``, ``v' = rho (F(u) - F'(u) v)``."""
    if not rho > 0:
        raise ConfigurationError("rho must be positive")
    d = system.dim

    def rhs(state, t):
        u, v = state[:d], state[d:]
        A = np.asarray(system.jacobian(u), dtype=float).reshape(d, d)
        F = np.asarray(system.residual(u), dtype=float).reshape(d)
        return np.concatenate([-v, rho * (F - matvec(A, v))])

    return OdeField(2 * d, rhs, f"ramm_lift(rho={rho:g})")


def lyapunov_rate(problem: TimeVaryingProblem, x, t, alpha: float):
    """Split ``d/dt f(x(t), t)`` along the reference ODE into three terms.

    Returns ``(descent, drift, partial)``: ``-(1/alpha) g^T P g`` (never
    positive), ``-g^T J^T (J J^T)^{-1} h'``, and ``df/dt`` at fixed ``x`` by
    central difference.
    """
    _require_equality_only(problem)
    if not alpha > 0:
        raise ConfigurationError("alpha must be positive")
    x = np.asarray(x, dtype=float)
    g = problem.grad(x, t)
    if problem.p:
        J = problem.jac(x, t)
        try:
            Pg = project_tangent(J, g)
            drift = -float(g @ _normal_drift(J, problem.dh_dt(x, t)))
        except SingularityError as err:
            raise _located(err, x, t) from err
    else:
        Pg, drift = g, 0.0
    # g^T P g == |P g|^2 since P is an orthogonal projector; the latter is never negative
    descent = -float(Pg @ Pg) / alpha
    partial = (problem.f(x, t + TIME_FD_STEP) - problem.f(x, t - TIME_FD_STEP)) / (2 * TIME_FD_STEP)
    return descent, drift, partial


def check_state(field: OdeField, state):
    state = np.asarray(state, dtype=float)
    if state.shape != (field.state_dim,):
        raise DimensionError(f"{field.label}: state shape {state.shape}, expected ({field.state_dim},)")
    return state


def kkt_residual(problem: TimeVaryingProblem, x, t) -> float:
    """``max(|P grad f|_inf, |h|_inf)``; zero exactly at regular KKT points."""
    _require_equality_only(problem)
    x = np.asarray(x, dtype=float)
    g = problem.grad(x, t)
    if problem.p == 0:
        return float(np.max(np.abs(g)))
    try:
        Pg = project_tangent(problem.jac(x, t), g)
    except SingularityError as err:
        raise _located(err, x, t) from err
    return float(max(np.max(np.abs(Pg)), np.max(np.abs(problem.h(x, t)))))
