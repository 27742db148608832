import math

import numpy as np
import pytest

from odetrack.catalog import CATALOG, catalog_get, quartic_switch_hessian
from odetrack.errors import CatalogLookupError, ConfigurationError, DimensionError, InfeasiblePointError
from odetrack.problem import TimeVaryingProblem, check_derivatives, slack_augment, slack_lift_point

rng = np.random.default_rng(20)


def bound_problem():
    """``x^2`` subject to ``x <= 0``."""
    return TimeVaryingProblem(
        n=1,
        objective=lambda x, t: float(x[0] ** 2),
        gradient=lambda x, t: 2 * x,
        q=1,
        inequality=lambda x, t: np.array([x[0]]),
        inequality_jacobian=lambda x, t: np.array([[1.0]]),
        inequality_time_partial=lambda x, t: np.zeros(1),
    )


class TestSlack:
    def test_needs_inequalities(self):
        with pytest.raises(ConfigurationError):
            slack_augment(catalog_get("pitchfork"))

    def test_augmented_value(self):
        aug = slack_augment(bound_problem())
        assert aug.n == 2 and aug.p == 1 and aug.q == 0
        np.testing.assert_allclose(aug.h(np.array([-1.0, 1.0]), 0.0), [0.0])

    def test_augmented_jacobian(self):
        aug = slack_augment(bound_problem())
        np.testing.assert_allclose(aug.jac(np.array([-1.0, 1.0]), 0.0), [[1.0, 2.0]])

    @pytest.mark.parametrize("x,z", [(-4.0, 2.0), (0.0, 0.0)])
    def test_lift(self, x, z):
        np.testing.assert_allclose(slack_lift_point(bound_problem(), [x], 0.0), [x, z])

    def test_lift_infeasible(self):
        with pytest.raises(InfeasiblePointError):
            slack_lift_point(bound_problem(), [0.5], 0.0)

    def test_lift_tolerance(self):
        assert slack_lift_point(bound_problem(), [5e-10], 0.0)[1] == 0.0

    def test_round_trip_on_feasible_probes(self):
        prob = catalog_get("clamped_quadratic")
        aug = slack_augment(prob)
        for _ in range(50):
            x, t = np.array([-abs(rng.normal(0, 3))]), rng.uniform(-2, 5)
            assert np.max(np.abs(aug.h(slack_lift_point(prob, x, t), t))) <= 1e-12

    def test_objective_ignores_slack(self):
        aug = slack_augment(catalog_get("clamped_quadratic"))
        assert aug.f(np.array([-1.0, 5.0]), 2.0) == 4.0
        np.testing.assert_array_equal(aug.grad(np.array([-1.0, 5.0]), 2.0), [-4.0, 0.0])


class TestCheckDerivatives:
    def test_quartic_probe(self):
        assert check_derivatives(catalog_get("quartic_switch"), [1.0], 3.0, 1e-5, 1e-4).passed

    def test_corrupted_gradient(self):
        base = catalog_get("pitchfork")
        bad = TimeVaryingProblem(n=1, objective=base.objective,
                                 gradient=lambda x, t: 2 * base.grad(x, t))
        x, t = np.array([1.5]), 1.0
        report = check_derivatives(bad, x, t)
        assert not report.passed
        assert report.deviations["gradient"] == pytest.approx(abs(base.grad(x, t)[0]), rel=1e-6)

    def test_constant(self):
        const = TimeVaryingProblem(n=2, objective=lambda x, t: 3.0, gradient=lambda x, t: np.zeros(2))
        report = check_derivatives(const, [0.3, -1.0], 0.5)
        assert report.passed and report.deviations["gradient"] == 0.0

    @pytest.mark.parametrize("name", sorted(CATALOG))
    def test_catalog_random_probes(self, name):
        prob = catalog_get(name)
        for _ in range(20):
            x, t = rng.uniform(-3, 3, prob.n), rng.uniform(0, 20)
            report = check_derivatives(prob, x, t, fd_step=1e-5, tol=1e-4)
            assert report.passed, f"{name} at x={x}, t={t}: {report}"


class TestCatalog:
    def test_unknown(self):
        with pytest.raises(CatalogLookupError) as info:
            catalog_get("nope")
        for name in CATALOG:
            assert name in str(info.value)

    def test_shapes(self):
        dims = {"quartic_switch": (1, 0, 0), "pitchfork": (1, 0, 0),
                "circle_linear": (2, 1, 0), "clamped_quadratic": (1, 0, 1)}
        for name, dim in dims.items():
            prob = catalog_get(name)
            assert (prob.n, prob.p, prob.q) == dim
            assert prob.discontinuity_times == ()

    def test_quartic_start(self):
        assert catalog_get("quartic_switch").f(np.array([-4.0]), 0.0) == 0.0

    def test_quartic_continuous_at_switch(self):
        prob = catalog_get("quartic_switch")
        x = np.array([-2.2])
        assert abs(prob.f(x, 10.0 - 1e-9) - prob.f(x, 10.0 + 1e-9)) < 1e-7

    def test_quartic_hessian(self):
        assert quartic_switch_hessian(-4.0, 20.0) == pytest.approx(36.0)

    def test_pitchfork_critical_points(self):
        prob = catalog_get("pitchfork")
        for x in (-2.0, 0.0, 2.0):
            assert prob.grad(np.array([x]), 4.0)[0] == 0.0

    def test_circle_values(self):
        prob = catalog_get("circle_linear")
        x = np.array([0.0, -1.0])
        assert prob.f(x, 0.0) == 0.0 and prob.h(x, 0.0)[0] == 0.0

    def test_circle_licq(self):
        prob = catalog_get("circle_linear")
        for a in rng.uniform(0, 2 * math.pi, 50):
            x = np.array([math.cos(a), math.sin(a)])
            J = prob.jac(x, 0.3)
            sigma = math.sqrt((J @ J.T)[0, 0])
            assert sigma >= 1.0
            assert sigma == pytest.approx(2.0)

    def test_evaluators_are_pure(self):
        for name in CATALOG:
            prob = catalog_get(name)
            x = rng.uniform(-1, 0, prob.n)
            assert prob.f(x, 1.7) == prob.f(x.copy(), 1.7)
            np.testing.assert_array_equal(prob.grad(x, 1.7), prob.grad(x, 1.7))


class TestProblemValidation:
    def test_missing_equality(self):
        with pytest.raises(ConfigurationError):
            TimeVaryingProblem(n=1, objective=lambda x, t: 0.0, gradient=lambda x, t: x, p=1)

    def test_discontinuities_sorted(self):
        with pytest.raises(ConfigurationError):
            TimeVaryingProblem(n=1, objective=lambda x, t: 0.0, gradient=lambda x, t: x,
                               discontinuity_times=(2.0, 1.0))

    def test_shape_checked(self):
        bad = TimeVaryingProblem(n=2, objective=lambda x, t: 0.0, gradient=lambda x, t: np.zeros(3))
        with pytest.raises(DimensionError):
            bad.grad(np.zeros(2), 0.0)

    def test_empty_constraints(self):
        prob = catalog_get("pitchfork")
        assert prob.h(np.zeros(1), 0.0).shape == (0,)
        assert prob.jac(np.zeros(1), 0.0).shape == (0, 1)
