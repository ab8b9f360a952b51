"""Variational quantum Boltzmann machine generative training.

An outer SPSA loop over Hamiltonian coefficients ``omega`` with an inner
Gibbs-state preparation (variational or exact), scored by cross-entropy
against a target distribution over computational basis states.
"""

from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np

from .observables import PauliSum
from .optim import CallableProblem, IterationRecord, OptimizerConfig, optimize
from .simcore import Circuit, Gate
from .varqite import EvolutionConfig, GibbsProblem, exact_gibbs

PROB_FLOOR = 1e-10


class QbmError(ValueError):
    pass


def two_qubit_hamiltonian(omega: np.ndarray) -> PauliSum:
    """omega_1 Z(x)Z + omega_2 Z_first + omega_3 Z_second on 2 qubits."""
    omega = np.asarray(omega, float)
    if len(omega) != 3:
        raise QbmError("expected 3 Hamiltonian coefficients")
    obs = PauliSum(2)
    obs.add_term(omega[0], {0: "Z", 1: "Z"})
    obs.add_term(omega[1], {0: "Z"})
    obs.add_term(omega[2], {1: "Z"})
    return obs


def gibbs_ansatz() -> Circuit:
    """Fixed 4-qubit, 3-parameter Gibbs ansatz.

    System qubits are 0 and 1, environment qubits 2 and 3, paired
    (0, 2) and (1, 3).  Parameter 0 rotates qubit 0; the X-conjugated
    controlled rotations give qubit 1 the angle theta_1 when qubit 0 is
    |0> and theta_2 when it is |1>.  The CX gates then copy the system
    basis onto the environment, so the circuit spans exactly the
    correlated-weight states sum_x a_x |x>|x> that imaginary-time
    evolution of a diagonal Hamiltonian moves through -- a full-rank
    chart of that three-dimensional family, with no flat metric
    directions for the stochastic metric estimate to inject noise into.
    """
    circuit = Circuit(4)
    circuit.add(Gate("RY", (0,), param=0))
    circuit.add(Gate("X", (0,)))
    circuit.add(Gate("CRY", (0, 1), param=1))
    circuit.add(Gate("X", (0,)))
    circuit.add(Gate("CRY", (0, 1), param=2))
    circuit.add(Gate("CX", (0, 2)))
    circuit.add(Gate("CX", (1, 3)))
    return circuit


def gibbs_initial_point() -> np.ndarray:
    """All angles pi/2: Bell pairs on (0,2) and (1,3), i.e. a maximally
    mixed system state purified by the environment."""
    return np.full(3, np.pi / 2)


@dataclass
class QbmConfig:
    target: np.ndarray
    eta: float = 0.1
    eps: float = 0.1
    iterations: int = 100
    n_state_averages: int = 10
    omega_range: tuple[float, float] = (-2.0, 2.0)
    seed: int = 0
    gibbs_backend: str = "varqite"  # or "exact"
    evolution: EvolutionConfig = field(
        default_factory=lambda: EvolutionConfig(
            total_time=0.5, n_steps=10, metric_mode="analytic"
        )
    )
    k_B_T: float = 1.0

    def __post_init__(self):
        self.target = np.asarray(self.target, float)
        if np.any(self.target < 0) or abs(self.target.sum() - 1.0) > 1e-9:
            raise QbmError("target must be a probability distribution")
        if self.gibbs_backend not in ("varqite", "exact"):
            raise QbmError(f"unknown Gibbs backend {self.gibbs_backend!r}")
        if self.n_state_averages < 1:
            raise QbmError("n_state_averages must be >= 1")


def cross_entropy(p_target: np.ndarray, p_model: np.ndarray) -> float:
    """-sum_x p_target(x) log p_model(x), with the model clipped at 1e-10."""
    p_target = np.asarray(p_target, float)
    p_model = np.asarray(p_model, float)
    if p_target.shape != p_model.shape:
        raise QbmError("distribution length mismatch")
    return float(-np.sum(p_target * np.log(np.clip(p_model, PROB_FLOOR, None))))


def gibbs_probabilities(omega: np.ndarray, config: QbmConfig, seed_offset: int = 0) -> np.ndarray:
    """Averaged sampling probabilities of the Gibbs state for ``omega``."""
    from dataclasses import replace
    from .varqite import prepare_gibbs

    hamiltonian = two_qubit_hamiltonian(omega)
    if config.gibbs_backend == "exact":
        _, probs = exact_gibbs(hamiltonian, config.k_B_T)
        return probs
    problem = GibbsProblem(
        system_hamiltonian=hamiltonian,
        k_B_T=config.k_B_T,
        ansatz=gibbs_ansatz(),
        theta0=gibbs_initial_point(),
    )
    runs = []
    for j in range(config.n_state_averages):
        evo = config.evolution
        if evo.metric_mode == "qnspsa":
            from .varqite import QnspsaMetricSettings
            settings = replace(evo.qnspsa, seed=evo.qnspsa.seed + seed_offset * config.n_state_averages + j)
            evo = replace(evo, qnspsa=settings)
        _, probs = prepare_gibbs(problem, evo)
        runs.append(probs)
    return np.mean(runs, axis=0)


def qbm_loss(omega: np.ndarray, config: QbmConfig, seed_offset: int = 0) -> float:
    return cross_entropy(config.target, gibbs_probabilities(omega, config, seed_offset))


@dataclass
class QbmResult:
    records: list[IterationRecord]
    omega_final: np.ndarray
    final_loss: float
    final_probabilities: np.ndarray


def train(config: QbmConfig) -> QbmResult:
    """SPSA over the Hamiltonian coefficients, starting from a uniform
    random omega in the configured range."""
    rng = np.random.default_rng(config.seed)
    lo, hi = config.omega_range
    omega0 = rng.uniform(lo, hi, 3)

    call_counter = [0]

    def loss(omega: np.ndarray) -> float:
        call_counter[0] += 1
        return qbm_loss(omega, config, seed_offset=call_counter[0])

    problem = CallableProblem(loss_fn=loss, initial_point=omega0)
    opt_config = OptimizerConfig(
        method="SPSA",
        eta=config.eta,
        eps=config.eps,
        iterations=config.iterations,
        seed=config.seed,
    )
    records = optimize(opt_config, problem)
    omega_final = records[-1].theta
    final_probs = gibbs_probabilities(omega_final, config)
    return QbmResult(
        records=records,
        omega_final=omega_final,
        final_loss=cross_entropy(config.target, final_probs),
        final_probabilities=final_probs,
    )
