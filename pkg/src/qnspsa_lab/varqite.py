"""Variational quantum imaginary time evolution and Gibbs state preparation.

The parameter flow solves g(theta) dtheta/dt = b(theta) from McLachlan's
variational principle and integrates it with explicit Euler.  Gibbs
states at temperature k_B*T are prepared by evolving half of a register
of Bell pairs for imaginary time (2 k_B T)^{-1}.
"""

from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np

from . import metrics as met
from .metrics import MetricEstimate, PerturbationPair
from .observables import PauliSum, apply_pauli_sum, dense_matrix
from .simcore import (
    Circuit,
    FidelityEvaluator,
    derivative_state,
    reduced_probabilities,
    run,
)

EXACT_GIBBS_QUBIT_LIMIT = 10


class EvolutionError(RuntimeError):
    pass


@dataclass
class QnspsaMetricSettings:
    n_resamplings: int = 10
    eps: float = 1e-2
    beta: float = 0.1
    seed: int = 0


@dataclass
class EvolutionConfig:
    total_time: float
    n_steps: int
    metric_mode: str = "analytic"  # or "qnspsa"
    qnspsa: QnspsaMetricSettings = field(default_factory=QnspsaMetricSettings)
    lse_regularization: float | None = None

    def __post_init__(self):
        if self.total_time <= 0 or self.n_steps < 1:
            raise EvolutionError("total_time must be > 0 and n_steps >= 1")
        if self.metric_mode not in ("analytic", "qnspsa"):
            raise EvolutionError(f"unknown metric mode {self.metric_mode!r}")
        if self.lse_regularization is None:
            # qnspsa metrics are already beta-regularized
            self.lse_regularization = 1e-4 if self.metric_mode == "analytic" else 0.0

    @property
    def step_size(self) -> float:
        return self.total_time / self.n_steps


@dataclass
class GibbsProblem:
    system_hamiltonian: PauliSum
    k_B_T: float
    ansatz: Circuit
    theta0: np.ndarray

    def __post_init__(self):
        if self.k_B_T <= 0:
            raise EvolutionError("k_B_T must be positive")
        if self.ansatz.n_qubits != 2 * self.system_hamiltonian.n_qubits:
            raise EvolutionError("ansatz must have twice the Hamiltonian qubit count")

    @property
    def system_qubits(self) -> list[int]:
        return list(range(self.system_hamiltonian.n_qubits))

    def check_initial_state(self, tolerance: float = 1e-6) -> None:
        """The reduced system state at theta0 must be maximally mixed."""
        probs = reduced_probabilities(run(self.ansatz, self.theta0), self.system_qubits)
        uniform = np.full_like(probs, 1.0 / len(probs))
        tv = 0.5 * np.abs(probs - uniform).sum()
        if tv > tolerance:
            raise EvolutionError(
                f"initial reduced state is not maximally mixed (TV={tv:.2e})"
            )


def mclachlan_rhs(circuit: Circuit, theta: np.ndarray, hamiltonian: PauliSum) -> np.ndarray:
    """b_i = -Re{<d_i psi|H|psi>} from exact derivative states."""
    theta = np.asarray(theta, float)
    psi = run(circuit, theta)
    h_psi = apply_pauli_sum(psi, hamiltonian)
    b = np.empty(circuit.n_params)
    for i in range(circuit.n_params):
        d_i = derivative_state(circuit, theta, i).amplitudes
        b[i] = -np.vdot(d_i, h_psi).real
    return b


def _metric(circuit, theta, config: EvolutionConfig, estimate, rng):
    if config.metric_mode == "analytic":
        return met.metric_analytic(circuit, theta), estimate
    settings = config.qnspsa
    evaluator = FidelityEvaluator(circuit, theta)
    # fold every point-sample into the smoothed estimator individually so
    # the identity prior decays with the total sample count, not the
    # (small) number of Euler steps
    for _ in range(settings.n_resamplings):
        sample = met.metric_point_sample(
            circuit, theta, settings.eps,
            PerturbationPair.draw(circuit.n_params, rng),
            fidelity_fn=lambda _base, tp: evaluator(tp),
        )
        estimate = met.smooth(estimate, sample)
    return met.regularize(estimate.matrix, settings.beta, normalized=True), estimate


def evolve(
    circuit: Circuit,
    theta0: np.ndarray,
    hamiltonian: PauliSum,
    config: EvolutionConfig,
) -> list[np.ndarray]:
    """Euler-integrate the McLachlan flow; returns all intermediate theta."""
    theta = np.asarray(theta0, dtype=float).copy()
    trajectory = [theta.copy()]
    estimate = MetricEstimate.identity(circuit.n_params, config.qnspsa.n_resamplings)
    rng = np.random.default_rng(config.qnspsa.seed)
    lam = config.lse_regularization
    for _ in range(config.n_steps):
        g, estimate = _metric(circuit, theta, config, estimate, rng)
        b = mclachlan_rhs(circuit, theta, hamiltonian)
        lhs = g + lam * np.eye(len(b)) if lam > 0 else g
        try:
            dtheta_dt = np.linalg.lstsq(lhs, b, rcond=None)[0]
        except np.linalg.LinAlgError as exc:
            raise EvolutionError("linear-system solve failed") from exc
        theta = theta + config.step_size * dtheta_dt
        if not np.all(np.isfinite(theta)):
            raise EvolutionError("non-finite parameters during evolution")
        trajectory.append(theta.copy())
    return trajectory


def prepare_gibbs(
    problem: GibbsProblem, config: EvolutionConfig
) -> tuple[np.ndarray, np.ndarray]:
    """Evolve the Bell-pair register and return (theta_final, probabilities
    over the system qubits)."""
    problem.check_initial_state()
    extended = problem.system_hamiltonian.extend_to(problem.ansatz.n_qubits)
    trajectory = evolve(problem.ansatz, problem.theta0, extended, config)
    theta_final = trajectory[-1]
    probs = reduced_probabilities(run(problem.ansatz, theta_final), problem.system_qubits)
    return theta_final, probs


def gibbs_evolution_time(k_B_T: float) -> float:
    return 1.0 / (2.0 * k_B_T)


def exact_gibbs(hamiltonian: PauliSum, k_B_T: float) -> tuple[np.ndarray, np.ndarray]:
    """Dense rho = exp(-H / k_B T) / Z and its diagonal probabilities."""
    if hamiltonian.n_qubits > EXACT_GIBBS_QUBIT_LIMIT:
        raise EvolutionError(
            f"exact_gibbs limited to {EXACT_GIBBS_QUBIT_LIMIT} qubits"
        )
    if k_B_T <= 0:
        raise EvolutionError("k_B_T must be positive")
    h = dense_matrix(hamiltonian)
    eigvals, eigvecs = np.linalg.eigh(h)
    weights = np.exp(-(eigvals - eigvals.min()) / k_B_T)
    rho = (eigvecs * weights) @ eigvecs.conj().T
    rho /= np.trace(rho).real
    return rho, np.real(np.diag(rho)).copy()
