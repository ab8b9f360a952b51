"""Statevector simulation and stochastic natural-gradient optimizers.

Core pieces: a dense parameterized-circuit simulator, Pauli-sum
observables, Fubini-Study metric estimators (analytic and SPSA-sampled),
a family of gradient-descent optimizers including QN-SPSA, variational
imaginary-time evolution with Gibbs-state preparation, and a quantum
Boltzmann machine trainer.  The ``qnspsa-lab`` CLI drives config-based
experiments on top of these.
"""

from .simcore import Circuit, Gate, StateVector
from .observables import PauliString, PauliSum
from .metrics import MetricEstimate, PerturbationPair
from .optim import CircuitProblem, CallableProblem, IterationRecord, OptimizerConfig, optimize
from .varqite import EvolutionConfig, GibbsProblem

__all__ = [
    "Circuit",
    "Gate",
    "StateVector",
    "PauliString",
    "PauliSum",
    "MetricEstimate",
    "PerturbationPair",
    "CircuitProblem",
    "CallableProblem",
    "IterationRecord",
    "OptimizerConfig",
    "optimize",
    "EvolutionConfig",
    "GibbsProblem",
]

__version__ = "0.1.0"
