"""Gradient-descent optimizers behind one iteration engine.

Five methods share the loop: vanilla gradient descent (GD), quantum
natural gradient (QNG), SPSA, second-order SPSA (2SPSA) and QN-SPSA
(QNSPSA).  The engine handles blocking, schedules, evaluation accounting
and per-iteration trace records.

Circuit-execution accounting, per accepted iteration:

* SPSA: 2 loss evaluations (+1 with blocking).
* 2SPSA: 2 + 4 Hessian samples (+1 with blocking).
* QNSPSA: 2 + 4 * n_resamplings fidelity evaluations (+1 with blocking).
* GD / QNG in exact mode: counted by formula (2d for a parameter-shift
  style gradient; QNG adds d(d+1)/2 metric evaluations), reported for
  cost comparisons rather than executed.

A loss evaluation counts as the number of distinct measurement circuits
it runs (1 in exact mode); a fidelity evaluation counts as 1 circuit.
The initial loss used to seed the trace and the blocking baseline is not
counted, matching the per-step totals quoted above.
"""

from __future__ import annotations

from dataclasses import dataclass, field, replace
from typing import Callable

import numpy as np

from . import metrics as met
from .metrics import MetricEstimate, PerturbationPair
from .observables import PauliSum, expectation_exact, expectation_sampled
from .simcore import Circuit, FidelityEvaluator, derivative_state, fidelity, run
from .observables import apply_pauli_sum

METHODS = ("GD", "QNG", "SPSA", "2SPSA", "QNSPSA")


class OptimizationError(RuntimeError):
    pass


@dataclass(frozen=True)
class LearningRateSchedule:
    """Constant by default; ``power`` gives a / (k + 1 + A)^alpha."""

    constant: float | None = None
    a: float | None = None
    A: float = 0.0
    alpha: float = 0.602

    def value(self, k: int) -> float:
        if self.constant is not None:
            return self.constant
        if self.a is None:
            raise OptimizationError("schedule has neither constant nor coefficient")
        return self.a / (k + 1 + self.A) ** self.alpha


@dataclass(frozen=True)
class PerturbationSchedule:
    """Constant by default; ``power`` gives c / (k + 1)^gamma."""

    constant: float | None = None
    c: float | None = None
    gamma: float = 0.101

    def value(self, k: int) -> float:
        if self.constant is not None:
            return self.constant
        if self.c is None:
            raise OptimizationError("schedule has neither constant nor coefficient")
        return self.c / (k + 1) ** self.gamma


@dataclass
class OptimizerConfig:
    method: str
    eta: float | LearningRateSchedule = 1e-2
    eps: float | PerturbationSchedule = 1e-2
    beta: float = 1e-3
    iterations: int = 100
    blocking: bool = False
    blocking_tolerance: float | str = "auto_2sigma"
    n_resamplings: int = 1
    seed: int = 0
    shots: int = 0
    normalized_regularization: bool = True
    max_rejections: int = 10

    def __post_init__(self):
        if self.method not in METHODS:
            raise OptimizationError(f"unknown method {self.method!r}")
        if self.iterations < 0:
            raise OptimizationError("iterations must be >= 0")
        if self.n_resamplings < 1:
            raise OptimizationError("n_resamplings must be >= 1")
        if isinstance(self.eta, (int, float)):
            self.eta = LearningRateSchedule(constant=float(self.eta))
        if isinstance(self.eps, (int, float)):
            self.eps = PerturbationSchedule(constant=float(self.eps))


@dataclass
class IterationRecord:
    k: int
    theta: np.ndarray
    loss: float
    circuit_evaluations: int
    accepted: bool
    failure: str | None = None


@dataclass
class CircuitProblem:
    """Expectation-value minimization over a parameterized circuit."""

    circuit: Circuit
    observable: PauliSum
    initial_point: np.ndarray
    shots: int = 0

    @property
    def dimension(self) -> int:
        return self.circuit.n_params

    def evaluate_loss(self, theta, rng) -> tuple[float, float, int]:
        if self.shots <= 0:
            value = expectation_exact(run(self.circuit, theta), self.observable)
            return value, 0.0, 1
        return expectation_sampled(self.circuit, theta, self.observable, self.shots, rng)

    def evaluate_fidelity(self, theta, theta_prime, rng) -> tuple[float, int]:
        value = fidelity(
            self.circuit, theta, theta_prime,
            shots=self.shots, rng=rng if self.shots > 0 else None,
        )
        return value, 1

    def supports_analytic(self) -> bool:
        return self.shots <= 0


@dataclass
class CallableProblem:
    """Plain scalar loss; supports GD (finite-diff-free methods only via
    SPSA variants) and 2SPSA."""

    loss_fn: Callable[[np.ndarray], float]
    initial_point: np.ndarray
    circuits_per_eval: int = 1
    std_error: float = 0.0

    @property
    def dimension(self) -> int:
        return len(self.initial_point)

    def evaluate_loss(self, theta, rng) -> tuple[float, float, int]:
        return float(self.loss_fn(np.asarray(theta, float))), self.std_error, self.circuits_per_eval

    def supports_analytic(self) -> bool:
        return False


def gd_step(theta: np.ndarray, gradient: np.ndarray, eta: float) -> np.ndarray:
    return np.asarray(theta, float) - eta * np.asarray(gradient, float)


def natural_step(
    theta: np.ndarray,
    gradient: np.ndarray,
    metric: np.ndarray,
    eta: float,
    least_squares: bool = False,
) -> np.ndarray:
    """theta - eta * metric^{-1} gradient via a linear solve."""
    gradient = np.asarray(gradient, float)
    if least_squares:
        direction = np.linalg.lstsq(metric, gradient, rcond=None)[0]
    else:
        try:
            direction = np.linalg.solve(metric, gradient)
        except np.linalg.LinAlgError as exc:
            raise OptimizationError(
                "singular preconditioner; check regularization settings"
            ) from exc
    return np.asarray(theta, float) - eta * direction


def spsa_gradient(
    loss: Callable[[np.ndarray], float],
    theta: np.ndarray,
    eps: float,
    delta: np.ndarray,
) -> np.ndarray:
    """((loss(theta + eps*delta) - loss(theta - eps*delta)) / 2eps) * delta."""
    if eps <= 0:
        raise OptimizationError("eps must be positive")
    theta = np.asarray(theta, float)
    slope = (loss(theta + eps * delta) - loss(theta - eps * delta)) / (2 * eps)
    return slope * delta


def analytic_gradient(circuit: Circuit, theta: np.ndarray, obs: PauliSum) -> np.ndarray:
    """d<psi|H|psi>/dtheta_i = 2 Re{<d_i psi|H|psi>} from exact derivative states."""
    theta = np.asarray(theta, float)
    psi = run(circuit, theta)
    h_psi = apply_pauli_sum(psi, obs)
    grad = np.empty(circuit.n_params)
    for i in range(circuit.n_params):
        d_i = derivative_state(circuit, theta, i).amplitudes
        grad[i] = 2.0 * np.vdot(d_i, h_psi).real
    return grad


def blocking_check(current_loss: float, candidate_loss: float, tolerance: float) -> bool:
    if tolerance < 0:
        raise OptimizationError("tolerance must be >= 0")
    return candidate_loss < current_loss + tolerance


def calibrate(
    loss: Callable[[np.ndarray], float],
    theta0: np.ndarray,
    target_step_magnitude: float,
    n_probes: int,
    eps: float = 1e-2,
    rng: np.random.Generator | None = None,
    A: float = 0.0,
    alpha: float = 0.602,
) -> float:
    """Power-series constant so the first update has per-component
    magnitude approximately ``target_step_magnitude``.

    Since SPSA perturbations have unit entries, every gradient component
    shares the magnitude of the central-difference slope; the constant is
    target * (A + 1)^alpha / mean |slope| over ``n_probes`` draws.
    """
    if n_probes < 1:
        raise OptimizationError("n_probes must be >= 1")
    if target_step_magnitude == 0:
        return 0.0
    if rng is None:
        rng = np.random.default_rng(0)
    theta0 = np.asarray(theta0, float)
    d = len(theta0)
    magnitudes = []
    for _ in range(n_probes):
        delta = rng.integers(0, 2, d) * 2.0 - 1.0
        slope = (loss(theta0 + eps * delta) - loss(theta0 - eps * delta)) / (2 * eps)
        magnitudes.append(abs(slope))
    mean_mag = float(np.mean(magnitudes))
    if mean_mag == 0:
        raise OptimizationError("zero gradient estimate; cannot calibrate")
    return target_step_magnitude * (A + 1) ** alpha / mean_mag


class _Run:
    """Single optimization run; owns RNG sub-streams and the counter."""

    def __init__(self, config: OptimizerConfig, problem):
        self.config = config
        self.problem = problem
        seq = np.random.SeedSequence(config.seed)
        grad_seed, metric_seed, loss_seed = seq.spawn(3)
        self.grad_rng = np.random.default_rng(grad_seed)
        self.metric_rng = np.random.default_rng(metric_seed)
        self.loss_rng = np.random.default_rng(loss_seed)
        self.evals = 0
        self.d = problem.dimension

    # -- counted evaluations ------------------------------------------------

    def loss(self, theta) -> tuple[float, float]:
        value, std, n_circ = self.problem.evaluate_loss(theta, self.loss_rng)
        self.evals += n_circ
        return value, std

    def loss_value(self, theta) -> float:
        return self.loss(theta)[0]

    def fidelity(self, theta, theta_prime) -> float:
        value, n_circ = self.problem.evaluate_fidelity(theta, theta_prime, self.metric_rng)
        self.evals += n_circ
        return value

    # -- per-method pieces --------------------------------------------------

    def gradient(self, theta, k: int) -> np.ndarray:
        config = self.config
        if config.method in ("GD", "QNG"):
            if not self.problem.supports_analytic():
                raise OptimizationError(f"{config.method} requires exact mode")
            grad = analytic_gradient(self.problem.circuit, theta, self.problem.observable)
            self.evals += 2 * self.d  # parameter-shift cost equivalent
            return grad
        eps = config.eps.value(k)
        delta = self.grad_rng.integers(0, 2, self.d) * 2.0 - 1.0
        return spsa_gradient(self.loss_value, theta, eps, delta)

    def curvature_sample(self, theta, k: int) -> np.ndarray:
        config = self.config
        eps = config.eps.value(k)
        if config.method == "2SPSA":
            samples = [
                met.hessian_point_sample(
                    self.loss_value, theta,
                    eps, PerturbationPair.draw(self.d, self.metric_rng),
                )
                for _ in range(config.n_resamplings)
            ]
            return np.mean(samples, axis=0)
        evaluator = FidelityEvaluator(
            self.problem.circuit, theta,
            shots=self.problem.shots,
            rng=self.metric_rng if self.problem.shots > 0 else None,
        )

        def counted_fidelity(_base, theta_prime):
            self.evals += 1
            return evaluator(theta_prime)

        samples = [
            met.metric_point_sample(
                self.problem.circuit, theta, eps,
                PerturbationPair.draw(self.d, self.metric_rng),
                fidelity_fn=counted_fidelity,
            )
            for _ in range(config.n_resamplings)
        ]
        return np.mean(samples, axis=0)

    def preconditioner(self, theta, estimate: MetricEstimate | None):
        """Returns (matrix, least_squares_flag) or (None, False) for GD/SPSA."""
        config = self.config
        if config.method in ("GD", "SPSA"):
            return None, False
        if config.method == "QNG":
            g = met.metric_analytic(self.problem.circuit, theta)
            self.evals += self.d * (self.d + 1) // 2  # metric evaluation cost
            if config.beta > 0:
                return met.regularize(g, config.beta, config.normalized_regularization), False
            return g, True
        assert estimate is not None
        return (
            met.regularize(estimate.matrix, config.beta, config.normalized_regularization),
            False,
        )


def optimize(config: OptimizerConfig, problem) -> list[IterationRecord]:
    """Run the configured method; deterministic under the config seed."""
    state = _Run(config, problem)
    theta = np.asarray(problem.initial_point, dtype=float).copy()

    # seed the trace and blocking baseline without touching the counter
    current_loss, current_std, _ = problem.evaluate_loss(theta, np.random.default_rng(config.seed))
    records = [IterationRecord(0, theta.copy(), current_loss, 0, True)]

    estimate = None
    if config.method in ("2SPSA", "QNSPSA"):
        estimate = MetricEstimate.identity(problem.dimension, config.n_resamplings)

    for k in range(1, config.iterations + 1):
        eta = config.eta.value(k - 1)
        try:
            accepted = True
            rejections = 0
            iteration_samples: list[np.ndarray] = []
            while True:
                gradient = state.gradient(theta, k - 1)
                candidate_estimate = estimate
                if estimate is not None:
                    iteration_samples.append(state.curvature_sample(theta, k - 1))
                    candidate_estimate = met.smooth(
                        estimate, np.mean(iteration_samples, axis=0)
                    )
                precond, least_squares = state.preconditioner(
                    theta, candidate_estimate
                )
                if precond is None:
                    candidate = gd_step(theta, gradient, eta)
                else:
                    candidate = natural_step(theta, gradient, precond, eta, least_squares)

                if not config.blocking:
                    theta = candidate
                    estimate = candidate_estimate
                    current_loss, current_std, _ = problem.evaluate_loss(
                        theta, np.random.default_rng((config.seed, k))
                    )
                    break

                candidate_loss, candidate_std = state.loss(candidate)
                if config.blocking_tolerance == "auto_2sigma":
                    tolerance = 2.0 * current_std
                elif isinstance(config.blocking_tolerance, (int, float)):
                    tolerance = float(config.blocking_tolerance)
                else:
                    raise OptimizationError(
                        f"bad blocking_tolerance {config.blocking_tolerance!r}"
                    )
                if blocking_check(current_loss, candidate_loss, tolerance):
                    theta = candidate
                    estimate = candidate_estimate
                    current_loss, current_std = candidate_loss, candidate_std
                    break
                rejections += 1
                if rejections >= config.max_rejections:
                    # bounded re-sampling: force the move, flag the record
                    theta = candidate
                    estimate = candidate_estimate
                    current_loss, current_std = candidate_loss, candidate_std
                    accepted = False
                    break
            if not np.all(np.isfinite(theta)):
                raise OptimizationError("non-finite parameters")
        except OptimizationError as exc:
            records.append(
                IterationRecord(k, theta.copy(), current_loss, state.evals, False, failure=str(exc))
            )
            return records
        records.append(
            IterationRecord(k, theta.copy(), current_loss, state.evals, accepted)
        )
    return records


def two_spsa_step(config: OptimizerConfig, problem) -> list[IterationRecord]:
    """Convenience wrapper: a 2-SPSA run with the given config."""
    return optimize(replace(config, method="2SPSA"), problem)


def qnspsa_step(config: OptimizerConfig, problem) -> list[IterationRecord]:
    """Convenience wrapper: a QN-SPSA run with the given config."""
    return optimize(replace(config, method="QNSPSA"), problem)
