"""Named example problems with hand-coded derivatives."""

from __future__ import annotations

import numpy as np

from .errors import CatalogLookupError
from .problem import TimeVaryingProblem

SWITCH_TIME = 10.0


def _switch_weight(t):
    # weight of the -2x^2 term; reaches 0 at t = 10 and stays there
    return (SWITCH_TIME - t) / SWITCH_TIME if t <= SWITCH_TIME else 0.0


def quartic_switch():
    """``x^4 + 8x^3 + 18x^2 - 2x^2 (10 - t)/10`` for ``t <= 10``, without the last term after.

    At ``t = 0`` the minima are -4 and 0; the left one merges with the
    maximum into a degenerate critical point at -3 when ``t`` reaches 10.
    """

    def objective(x, t):
        x = x[0]
        return x ** 4 + 8 * x ** 3 + 18 * x ** 2 - 2 * x ** 2 * _switch_weight(t)

    def gradient(x, t):
        x = x[0]
        return np.array([4 * x ** 3 + 24 * x ** 2 + 36 * x - 4 * x * _switch_weight(t)])

    return TimeVaryingProblem(n=1, objective=objective, gradient=gradient, name="quartic_switch")


def quartic_switch_hessian(x, t):
    return 12 * x ** 2 + 48 * x + 36 - 4 * _switch_weight(t)


def pitchfork():
    """``x^4 - 2 t x^2``: minima at ``+-sqrt(t)`` for ``t >= 0``, at 0 before."""

    def objective(x, t):
        return x[0] ** 4 - 2 * t * x[0] ** 2

    def gradient(x, t):
        return np.array([4 * x[0] ** 3 - 4 * t * x[0]])

    return TimeVaryingProblem(n=1, objective=objective, gradient=gradient, name="pitchfork")


def circle_linear():
    """Linear objective ``x1 cos t + x2 sin t`` on the unit circle; ``f* = -1``."""

    def objective(x, t):
        return x[0] * np.cos(t) + x[1] * np.sin(t)

    def gradient(x, t):
        return np.array([np.cos(t), np.sin(t)])

    def equality(x, t):
        return np.array([x[0] ** 2 + x[1] ** 2 - 1.0])

    def equality_jacobian(x, t):
        return np.array([[2.0 * x[0], 2.0 * x[1]]])

    def equality_time_partial(x, t):
        return np.zeros(1)

    return TimeVaryingProblem(
        n=2, objective=objective, gradient=gradient,
        p=1, equality=equality, equality_jacobian=equality_jacobian,
        equality_time_partial=equality_time_partial,
        name="circle_linear",
        chart=lambda angle: np.array([np.cos(angle), np.sin(angle)]),
        optimal_value=lambda t: -1.0,
    )


def clamped_quadratic():
    """``(x - (t - 1))^2`` subject to ``x <= 0``; the bound activates at ``t = 1``."""

    def objective(x, t):
        return (x[0] - (t - 1.0)) ** 2

    def gradient(x, t):
        return np.array([2.0 * (x[0] - (t - 1.0))])

    return TimeVaryingProblem(
        n=1, objective=objective, gradient=gradient,
        q=1,
        inequality=lambda x, t: np.array([x[0]]),
        inequality_jacobian=lambda x, t: np.array([[1.0]]),
        inequality_time_partial=lambda x, t: np.zeros(1),
        name="clamped_quadratic",
        optimal_value=lambda t: max(t - 1.0, 0.0) ** 2,
    )


CATALOG = {
    "quartic_switch": quartic_switch,
    "pitchfork": pitchfork,
    "circle_linear": circle_linear,
    "clamped_quadratic": clamped_quadratic,
}


def catalog_get(name: str) -> TimeVaryingProblem:
    try:
        factory = CATALOG[name]
    except KeyError:
        raise CatalogLookupError(
            f"unknown problem {name!r}; valid names: {', '.join(sorted(CATALOG))}") from None
    return factory()
