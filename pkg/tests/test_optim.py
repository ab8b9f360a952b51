"""Optimizer tests: estimators by exhaustion, schedules, blocking,
accounting and end-to-end convergence on the reference problem."""

import itertools

import numpy as np
import pytest

from qnspsa_lab.experiments import build_convergence_problem
from qnspsa_lab.observables import expectation_exact
from qnspsa_lab.optim import (
    CallableProblem,
    CircuitProblem,
    LearningRateSchedule,
    OptimizationError,
    OptimizerConfig,
    PerturbationSchedule,
    analytic_gradient,
    blocking_check,
    calibrate,
    gd_step,
    natural_step,
    optimize,
    spsa_gradient,
)
from qnspsa_lab.simcore import run


def reference_problem(theta0=(0.0, 2.0, 2.0), shots=0):
    circuit, obs = build_convergence_problem()
    return CircuitProblem(circuit, obs, np.array(theta0), shots=shots)


def test_spsa_gradient_exhaustive_linear():
    # on a linear loss every sign vector returns the exact gradient
    c = np.array([0.7, -1.3, 0.4, 2.2])
    loss = lambda t: float(c @ t)
    theta = np.zeros(4)
    grads = [
        spsa_gradient(loss, theta, 0.05, np.array(s))
        for s in itertools.product([-1.0, 1.0], repeat=4)
    ]
    np.testing.assert_allclose(np.mean(grads, axis=0), c, atol=1e-12)


def test_analytic_gradient_matches_fd():
    problem = reference_problem()
    theta = np.array([0.3, 1.1, -0.7])
    grad = analytic_gradient(problem.circuit, theta, problem.observable)
    h = 1e-6
    for i in range(3):
        e = np.zeros(3)
        e[i] = h
        fd = (
            expectation_exact(run(problem.circuit, theta + e), problem.observable)
            - expectation_exact(run(problem.circuit, theta - e), problem.observable)
        ) / (2 * h)
        assert abs(grad[i] - fd) < 1e-7


def test_steps():
    theta = np.array([1.0, 2.0])
    grad = np.array([0.5, -1.0])
    np.testing.assert_allclose(gd_step(theta, grad, 0.1), [0.95, 2.1])
    metric = np.diag([0.5, 2.0])
    np.testing.assert_allclose(
        natural_step(theta, grad, metric, 0.1), [0.9, 2.05]
    )
    with pytest.raises(OptimizationError):
        natural_step(theta, grad, np.zeros((2, 2)), 0.1)


def test_schedules():
    assert LearningRateSchedule(constant=0.2).value(17) == 0.2
    power = LearningRateSchedule(a=1.0, A=10.0, alpha=0.602)
    assert abs(power.value(0) - 1.0 / 11**0.602) < 1e-12
    assert abs(PerturbationSchedule(c=0.1).value(3) - 0.1 / 4**0.101) < 1e-12
    with pytest.raises(OptimizationError):
        LearningRateSchedule().value(0)


def test_blocking_check():
    assert blocking_check(1.0, 0.9, 0.0)
    assert not blocking_check(1.0, 1.0, 0.0)
    assert blocking_check(1.0, 1.05, 0.1)
    with pytest.raises(OptimizationError):
        blocking_check(1.0, 1.0, -0.1)


def test_calibrate_linear_loss():
    # |slope| = |c . delta| is constant for c = (s, 0, 0): slope = +-s
    loss = lambda t: 3.0 * t[0]
    a = calibrate(loss, np.zeros(3), target_step_magnitude=0.1, n_probes=10,
                  rng=np.random.default_rng(0))
    # first step magnitude a / (0 + 1)^alpha * |slope| = 0.1
    assert abs(a * 3.0 - 0.1) < 1e-12


def test_evaluation_accounting_per_iteration():
    problem = reference_problem()
    expected = {("SPSA", True): 3, ("QNSPSA", True): 7, ("2SPSA", False): 6}
    for (method, blocking), per_iter in expected.items():
        config = OptimizerConfig(
            method=method, eta=0.05, iterations=15, blocking=blocking,
            blocking_tolerance=0.0, seed=3,
        )
        records = optimize(config, problem)
        deltas = {
            records[k].circuit_evaluations - records[k - 1].circuit_evaluations
            for k in range(1, len(records))
            if records[k].accepted
        }
        assert deltas == {per_iter}, (method, deltas)


def test_gd_qng_accounting_formula():
    problem = reference_problem()
    d = 3
    for method, per_iter in [("GD", 2 * d), ("QNG", 2 * d + d * (d + 1) // 2)]:
        config = OptimizerConfig(method=method, eta=0.05, iterations=4, seed=0)
        records = optimize(config, problem)
        assert records[-1].circuit_evaluations == 4 * per_iter


def test_initial_loss_not_counted():
    problem = reference_problem()
    config = OptimizerConfig(method="SPSA", eta=0.05, iterations=0, seed=0)
    records = optimize(config, problem)
    assert len(records) == 1
    assert records[0].circuit_evaluations == 0
    assert abs(records[0].loss - expectation_exact(
        run(problem.circuit, problem.initial_point), problem.observable)) < 1e-12


def test_determinism_same_seed():
    problem = reference_problem(shots=1024)
    config = OptimizerConfig(
        method="QNSPSA", eta=0.05, iterations=10, blocking=True, seed=11, shots=1024
    )
    a = optimize(config, problem)
    b = optimize(config, problem)
    for ra, rb in zip(a, b):
        assert ra.loss == rb.loss
        np.testing.assert_array_equal(ra.theta, rb.theta)


def test_qng_reaches_ground_state():
    problem = reference_problem(theta0=(0.0, 2.0, 2.0))
    config = OptimizerConfig(method="QNG", eta=0.225, beta=0.0, iterations=100, seed=0)
    records = optimize(config, problem)
    assert records[-1].loss < 1e-6  # ground energy is 0


def test_qnspsa_reduces_loss():
    problem = reference_problem()
    config = OptimizerConfig(method="QNSPSA", eta=0.05, iterations=80, seed=5)
    records = optimize(config, problem)
    assert records[-1].loss < 0.01 * records[0].loss


def test_gd_qng_reject_shot_mode():
    problem = reference_problem(shots=100)
    config = OptimizerConfig(method="GD", eta=0.1, iterations=3, seed=0, shots=100)
    records = optimize(config, problem)
    assert records[-1].failure is not None


def test_callable_problem_with_2spsa():
    # quadratic bowl; 2SPSA should find the minimum at the origin
    loss = lambda t: float(t @ np.diag([1.0, 4.0]) @ t)
    problem = CallableProblem(loss_fn=loss, initial_point=np.array([1.0, -1.0]))
    config = OptimizerConfig(method="2SPSA", eta=0.1, eps=0.05, iterations=150, seed=2)
    records = optimize(config, problem)
    assert records[-1].loss < 1e-2


def test_config_validation():
    with pytest.raises(OptimizationError):
        OptimizerConfig(method="ADAM")
    with pytest.raises(OptimizationError):
        OptimizerConfig(method="SPSA", iterations=-1)
    with pytest.raises(OptimizationError):
        OptimizerConfig(method="QNSPSA", n_resamplings=0)
