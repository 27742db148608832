"""Fixed-step fourth-order Runge-Kutta integration."""

from __future__ import annotations

import math
from dataclasses import dataclass

import numpy as np

from .errors import BudgetError, ConfigurationError, DivergenceError, OrderingError


@dataclass(frozen=True)
class StepperConfig:
    step: float
    max_steps: int = 10_000_000

    def __post_init__(self):
        if not self.step > 0:
            raise ConfigurationError("step must be positive")
        if self.max_steps < 1:
            raise ConfigurationError("max_steps must be at least 1")


@dataclass(frozen=True)
class Observation:
    t: float
    state: np.ndarray
    index: int


def rk4_step(field, state, t, h):
    """One classical RK4 step; exactly four evaluations of ``field``."""
    if not h > 0:
        raise ConfigurationError("step size must be positive")
    y = np.asarray(state, dtype=float)

    def stage(i, s, ys):
        k = h * np.asarray(field(ys, s), dtype=float)
        if not np.isfinite(k).all():
            raise DivergenceError(f"non-finite RK4 stage {i} at t={t}", t=t, stage=i)
        return k

    k1 = stage(1, t, y)
    k2 = stage(2, t + h / 2, y + k1 / 2)
    k3 = stage(3, t + h / 2, y + k2 / 2)
    k4 = stage(4, t + h, y + k3)
    return y + (k1 + 2 * k2 + 2 * k3 + k4) / 6


def step_count(t0, t1, step):
    if t1 == t0:
        return 0
    # slack guards against (t1 - t0)/step landing a rounding error above an integer
    return max(1, math.ceil((t1 - t0) / step - 1e-9))


def integrate_to(field, state, t0, t1, cfg: StepperConfig, observer=None):
    """Integrate from ``t0`` to ``t1``; the last step is shortened to land on ``t1``.

    ``observer`` (if given) is called with an :class:`Observation` after
    every step.
    """
    if t1 < t0:
        raise OrderingError(f"t1={t1} precedes t0={t0}")
    y = np.array(state, dtype=float)
    nsteps = step_count(t0, t1, cfg.step)
    if nsteps > cfg.max_steps:
        raise BudgetError(f"{nsteps} steps needed, budget is {cfg.max_steps}")
    t = t0
    for k in range(nsteps):
        t_next = t1 if k == nsteps - 1 else t0 + (k + 1) * cfg.step
        y = rk4_step(field, y, t, t_next - t)
        t = t_next
        if observer is not None:
            observer(Observation(t, y.copy(), k))
    return y


def split_at_discontinuities(t0, t1, times):
    """Partition ``[t0, t1]`` into segments whose interiors avoid ``times``."""
    if t1 < t0:
        raise OrderingError(f"t1={t1} precedes t0={t0}")
    times = list(times)
    if any(b <= a for a, b in zip(times, times[1:])):
        raise OrderingError("discontinuity times must be strictly increasing")
    cuts = [s for s in times if t0 < s < t1]
    edges = [t0, *cuts, t1]
    return list(zip(edges[:-1], edges[1:]))
