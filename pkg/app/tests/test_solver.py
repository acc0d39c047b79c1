import numpy as np
import pytest

from app.errors import NumericalError
from app.fd.solver import lm_minimize
from app.models import FitOptions


def test_rosenbrock_converges_to_minimum():
    """Classic Rosenbrock start reaches (1, 1)"""
    def residual(x):
        return np.array([10.0 * (x[1] - x[0] ** 2), 1.0 - x[0]])

    def jacobian(x):
        return np.array([[-20.0 * x[0], 10.0], [-1.0, 0.0]])

    result = lm_minimize(residual, jacobian, [-1.2, 1.0])
    assert result.converged
    assert result.solution == pytest.approx((1.0, 1.0), abs=1e-8)
    assert result.cost < 1e-16


def test_linear_problem_matches_lstsq():
    """On a linear model the minimizer equals the least-squares solution"""
    rng = np.random.default_rng(3)
    A = rng.normal(size=(30, 3))
    b = rng.normal(size=30)

    result = lm_minimize(lambda x: A @ x - b, lambda x: A, np.zeros(3))
    expected, *_ = np.linalg.lstsq(A, b, rcond=None)
    assert result.converged
    assert np.allclose(result.solution, expected, atol=1e-9)


def test_start_at_least_squares_solution_stops_immediately():
    """Started at the optimum the solver converges within one iteration and stays put"""
    rng = np.random.default_rng(3)
    A = rng.normal(size=(30, 3))
    b = rng.normal(size=30)
    expected, *_ = np.linalg.lstsq(A, b, rcond=None)

    result = lm_minimize(lambda x: A @ x - b, lambda x: A, expected)
    assert result.converged
    assert result.iterations <= 1
    assert np.allclose(result.solution, expected, rtol=0, atol=1e-12)


def test_cost_history_never_increases():
    """Only steps that lower the objective are accepted"""
    def residual(x):
        return np.array([10.0 * (x[1] - x[0] ** 2), 1.0 - x[0]])

    def jacobian(x):
        return np.array([[-20.0 * x[0], 10.0], [-1.0, 0.0]])

    result = lm_minimize(residual, jacobian, [-1.2, 1.0])
    history = np.array(result.cost_history)
    assert len(history) >= 2
    assert np.all(np.diff(history) < 0)


def test_non_finite_trial_points_are_rejected():
    """Steps into the region where the residual is undefined are retried with more damping"""
    result = lm_minimize(lambda x: np.log(x), lambda x: np.array([[1.0 / x[0]]]), [10.0])
    assert result.converged
    assert result.solution[0] == pytest.approx(1.0, abs=1e-8)


def test_iteration_budget_is_respected():
    """Stops unconverged when max_iter runs out"""
    def residual(x):
        return np.array([10.0 * (x[1] - x[0] ** 2), 1.0 - x[0]])

    def jacobian(x):
        return np.array([[-20.0 * x[0], 10.0], [-1.0, 0.0]])

    result = lm_minimize(residual, jacobian, [-1.2, 1.0], FitOptions(max_iter=2))
    assert not result.converged
    assert result.iterations <= 2


def test_invalid_inputs_raise_numerical_error():
    """Non-finite start, non-finite residual or a mismatched jacobian raise NumericalError"""
    with pytest.raises(NumericalError):
        lm_minimize(lambda x: x, lambda x: np.eye(1), [float("nan")])
    with pytest.raises(NumericalError):
        lm_minimize(lambda x: np.log(x), lambda x: np.eye(1), [-1.0])
    with pytest.raises(NumericalError):
        lm_minimize(lambda x: x, lambda x: np.eye(2), [1.0])
