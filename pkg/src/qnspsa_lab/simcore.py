"""Dense statevector simulation of parameterized quantum circuits.

Conventions used throughout the package:

* Qubit 0 is the least significant bit of the computational basis index.
* Rotation gates follow R_P(theta) = exp(-i * theta * P / 2) for
  P in {X, Y, Z, Z(x)Z}.  ``GlobalPhase(theta)`` multiplies the state by
  exp(i * theta).  ``CRY`` applies R_Y on the target conditioned on the
  control qubit being |1>.
"""

from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np

SINGLE_QUBIT_KINDS = {"RX", "RY", "RZ", "H", "X", "GlobalPhase"}
TWO_QUBIT_KINDS = {"RZZ", "CX", "CZ", "CRY"}
PARAMETERIZED_KINDS = {"RX", "RY", "RZ", "RZZ", "CRY", "GlobalPhase"}

_H = np.array([[1, 1], [1, -1]], dtype=complex) / np.sqrt(2)
_X = np.array([[0, 1], [1, 0]], dtype=complex)
_Y = np.array([[0, -1j], [1j, 0]], dtype=complex)
_Z = np.array([[1, 0], [0, -1]], dtype=complex)


class SimulationError(ValueError):
    """Raised on invalid circuit or state input."""


@dataclass(frozen=True)
class StateVector:
    """Dense complex amplitudes over ``n_qubits`` qubits.

    Derivative states are generally unnormalized and carry
    ``normalized=False``.
    """

    n_qubits: int
    amplitudes: np.ndarray
    normalized: bool = True

    def __post_init__(self):
        if self.n_qubits < 1:
            raise SimulationError("n_qubits must be >= 1")
        if len(self.amplitudes) != 2**self.n_qubits:
            raise SimulationError(
                f"expected {2**self.n_qubits} amplitudes, got {len(self.amplitudes)}"
            )

    @property
    def probabilities(self) -> np.ndarray:
        return np.abs(self.amplitudes) ** 2

    def inner(self, other: "StateVector") -> complex:
        """<self|other>."""
        if self.n_qubits != other.n_qubits:
            raise SimulationError("qubit-count mismatch")
        return complex(np.vdot(self.amplitudes, other.amplitudes))


@dataclass(frozen=True)
class Gate:
    """A fixed or parameterized gate.

    For parameterized gates, ``param`` is an index into the parameter
    vector and the effective angle is ``coeff * theta[param]``.  Fixed
    gates carry the angle directly in ``angle``.
    """

    kind: str
    qubits: tuple[int, ...]
    angle: float | None = None
    param: int | None = None
    coeff: float = 1.0

    def __post_init__(self):
        if self.kind not in SINGLE_QUBIT_KINDS | TWO_QUBIT_KINDS:
            raise SimulationError(f"unknown gate kind {self.kind!r}")
        n_expected = 0 if self.kind == "GlobalPhase" else (
            1 if self.kind in SINGLE_QUBIT_KINDS else 2
        )
        if len(self.qubits) != n_expected:
            raise SimulationError(
                f"{self.kind} expects {n_expected} qubit(s), got {len(self.qubits)}"
            )
        if len(set(self.qubits)) != len(self.qubits):
            raise SimulationError("gate qubits must be distinct")
        if self.kind in PARAMETERIZED_KINDS:
            if (self.angle is None) == (self.param is None):
                raise SimulationError(
                    f"{self.kind} needs exactly one of angle or param"
                )
        else:
            if self.angle is not None or self.param is not None:
                raise SimulationError(f"{self.kind} takes no angle")

    def resolve_angle(self, theta: np.ndarray) -> float:
        if self.param is not None:
            return self.coeff * float(theta[self.param])
        return float(self.angle) if self.angle is not None else 0.0


@dataclass
class Circuit:
    """Ordered gate list defining |psi(theta)> = U(theta)|0...0>."""

    n_qubits: int
    gates: list[Gate] = field(default_factory=list)

    def __post_init__(self):
        for gate in self.gates:
            for q in gate.qubits:
                if not 0 <= q < self.n_qubits:
                    raise SimulationError(
                        f"qubit index {q} out of range for {self.n_qubits} qubits"
                    )
        params = sorted({g.param for g in self.gates if g.param is not None})
        if params and params != list(range(len(params))):
            raise SimulationError(
                "parameter indices must cover [0, n_params) without gaps"
            )

    @property
    def n_params(self) -> int:
        params = {g.param for g in self.gates if g.param is not None}
        return len(params)

    def add(self, gate: Gate) -> "Circuit":
        for q in gate.qubits:
            if not 0 <= q < self.n_qubits:
                raise SimulationError(f"qubit index {q} out of range")
        self.gates.append(gate)
        return self

    def inverse_gates(self, theta: np.ndarray) -> list[tuple[Gate, float]]:
        """Reversed gate sequence with negated angles, fully bound."""
        out = []
        for gate in reversed(self.gates):
            angle = gate.resolve_angle(theta)
            if gate.kind in PARAMETERIZED_KINDS:
                out.append((gate, -angle))
            else:
                out.append((gate, 0.0))
        return out


def _apply_1q(amps: np.ndarray, mat: np.ndarray, q: int, n: int) -> np.ndarray:
    view = amps.reshape(2 ** (n - 1 - q), 2, 2**q)
    return np.einsum("ab,ibj->iaj", mat, view).reshape(-1)


_MASK_CACHE: dict[tuple[int, int], np.ndarray] = {}
_CX_CACHE: dict[tuple[int, int, int], np.ndarray] = {}


def _bit_mask(n: int, q: int) -> np.ndarray:
    key = (n, q)
    mask = _MASK_CACHE.get(key)
    if mask is None:
        mask = (np.arange(2**n) >> q) & 1
        mask.setflags(write=False)
        _MASK_CACHE[key] = mask
    return mask


def _cx_permutation(n: int, control: int, target: int) -> np.ndarray:
    key = (n, control, target)
    perm = _CX_CACHE.get(key)
    if perm is None:
        idx = np.arange(2**n)
        perm = np.where((idx >> control) & 1, idx ^ (1 << target), idx)
        perm.setflags(write=False)
        _CX_CACHE[key] = perm
    return perm


def _apply_gate(amps: np.ndarray, gate: Gate, angle: float, n: int) -> np.ndarray:
    kind = gate.kind
    if kind == "H":
        return _apply_1q(amps, _H, gate.qubits[0], n)
    if kind == "X":
        return _apply_1q(amps, _X, gate.qubits[0], n)
    if kind == "GlobalPhase":
        return amps * np.exp(1j * angle)
    if kind in ("RX", "RY", "RZ"):
        c, s = np.cos(angle / 2), np.sin(angle / 2)
        if kind == "RX":
            mat = np.array([[c, -1j * s], [-1j * s, c]])
        elif kind == "RY":
            mat = np.array([[c, -s], [s, c]], dtype=complex)
        else:
            mat = np.array([[np.exp(-1j * angle / 2), 0], [0, np.exp(1j * angle / 2)]])
        return _apply_1q(amps, mat, gate.qubits[0], n)
    if kind == "RZZ":
        b0 = _bit_mask(n, gate.qubits[0])
        b1 = _bit_mask(n, gate.qubits[1])
        sign = 1 - 2 * (b0 ^ b1)  # +1 on equal bits (ZZ eigenvalue)
        return amps * np.exp(-1j * angle / 2 * sign)
    if kind == "CZ":
        b0 = _bit_mask(n, gate.qubits[0])
        b1 = _bit_mask(n, gate.qubits[1])
        out = amps.copy()
        out[(b0 & b1).astype(bool)] *= -1
        return out
    if kind == "CX":
        control, target = gate.qubits
        return amps[_cx_permutation(n, control, target)]
    if kind == "CRY":
        control, target = gate.qubits
        c, s = np.cos(angle / 2), np.sin(angle / 2)
        ctrl = _bit_mask(n, control).astype(bool)
        tbit = _bit_mask(n, target).astype(bool)
        out = amps.copy()
        lo = ctrl & ~tbit
        hi = ctrl & tbit
        partner = np.arange(2**n) ^ (1 << target)
        out[lo] = c * amps[lo] - s * amps[partner[lo]]
        out[hi] = s * amps[partner[hi]] + c * amps[hi]
        return out
    raise SimulationError(f"unhandled gate kind {kind!r}")


def _generator_factor(amps: np.ndarray, gate: Gate, n: int) -> np.ndarray:
    """Apply d/d(angle) insertion operator for the gate's generator.

    For R_P this is -(i/2) P; for GlobalPhase it is +i; for CRY it is
    -(i/2) |1><1|_c (x) Y_t.  The ``coeff`` chain-rule factor is applied
    by the caller.
    """
    kind = gate.kind
    if kind == "GlobalPhase":
        return 1j * amps
    if kind == "RX":
        return -0.5j * _apply_1q(amps, _X, gate.qubits[0], n)
    if kind == "RY":
        return -0.5j * _apply_1q(amps, _Y, gate.qubits[0], n)
    if kind == "RZ":
        return -0.5j * _apply_1q(amps, _Z, gate.qubits[0], n)
    if kind == "RZZ":
        b0 = _bit_mask(n, gate.qubits[0])
        b1 = _bit_mask(n, gate.qubits[1])
        sign = 1 - 2 * (b0 ^ b1)
        return -0.5j * sign * amps
    if kind == "CRY":
        control, target = gate.qubits
        ctrl = _bit_mask(n, control).astype(bool)
        projected = amps.copy()
        projected[~ctrl] = 0.0
        return -0.5j * _apply_1q(projected, _Y, target, n)
    raise SimulationError(f"gate kind {kind!r} is not parameterized")


def run(circuit: Circuit, theta: np.ndarray | list[float]) -> StateVector:
    """Simulate U(theta)|0...0> and return the final state."""
    theta = np.asarray(theta, dtype=float)
    if len(theta) != circuit.n_params:
        raise SimulationError(
            f"expected {circuit.n_params} parameters, got {len(theta)}"
        )
    n = circuit.n_qubits
    amps = np.zeros(2**n, dtype=complex)
    amps[0] = 1.0
    for gate in circuit.gates:
        amps = _apply_gate(amps, gate, gate.resolve_angle(theta), n)
    return StateVector(n, amps)


def fidelity(
    circuit: Circuit,
    theta: np.ndarray | list[float],
    theta_prime: np.ndarray | list[float],
    shots: int = 0,
    rng: np.random.Generator | None = None,
) -> float:
    """F(theta, theta') = |<psi(theta)|psi(theta')>|^2.

    With ``shots > 0`` the compute-uncompute circuit
    U^dag(theta') U(theta)|0> is simulated and the all-zeros probability
    is estimated from sampled counts.
    """
    theta = np.asarray(theta, dtype=float)
    theta_prime = np.asarray(theta_prime, dtype=float)
    if len(theta) != circuit.n_params or len(theta_prime) != circuit.n_params:
        raise SimulationError("parameter-length mismatch")
    n = circuit.n_qubits
    if shots <= 0:
        a = run(circuit, theta)
        b = run(circuit, theta_prime)
        return float(abs(a.inner(b)) ** 2)
    if rng is None:
        raise SimulationError("shot-based fidelity requires an rng")
    amps = run(circuit, theta).amplitudes
    for gate, angle in circuit.inverse_gates(theta_prime):
        amps = _apply_gate(amps, gate, angle, n)
    p_zero = min(1.0, float(abs(amps[0]) ** 2))
    return rng.binomial(shots, p_zero) / shots


class FidelityEvaluator:
    """Repeated fidelity evaluations against one fixed base point.

    Caches |psi(theta)> so each call costs a single circuit simulation,
    matching the per-circuit evaluation accounting of compute-uncompute.
    """

    def __init__(
        self,
        circuit: Circuit,
        theta: np.ndarray,
        shots: int = 0,
        rng: np.random.Generator | None = None,
    ):
        self.circuit = circuit
        self.theta = np.asarray(theta, dtype=float)
        self.shots = shots
        self.rng = rng
        if shots > 0 and rng is None:
            raise SimulationError("shot-based fidelity requires an rng")
        self._base = run(circuit, self.theta)

    def __call__(self, theta_prime: np.ndarray) -> float:
        theta_prime = np.asarray(theta_prime, dtype=float)
        if self.shots <= 0:
            other = run(self.circuit, theta_prime)
            return float(abs(self._base.inner(other)) ** 2)
        amps = self._base.amplitudes
        n = self.circuit.n_qubits
        for gate, angle in self.circuit.inverse_gates(theta_prime):
            amps = _apply_gate(amps, gate, angle, n)
        p_zero = min(1.0, float(abs(amps[0]) ** 2))
        return self.rng.binomial(self.shots, p_zero) / self.shots


def derivative_state(
    circuit: Circuit, theta: np.ndarray | list[float], i: int
) -> StateVector:
    """Exact d|psi(theta)>/d(theta_i) by generator insertion.

    Product rule over every gate carrying parameter ``i``; the result is
    generally unnormalized.
    """
    theta = np.asarray(theta, dtype=float)
    if not 0 <= i < circuit.n_params:
        raise SimulationError(f"parameter index {i} out of range")
    n = circuit.n_qubits
    positions = [k for k, g in enumerate(circuit.gates) if g.param == i]
    total = np.zeros(2**n, dtype=complex)
    for pos in positions:
        amps = np.zeros(2**n, dtype=complex)
        amps[0] = 1.0
        for k, gate in enumerate(circuit.gates):
            amps = _apply_gate(amps, gate, gate.resolve_angle(theta), n)
            if k == pos:
                amps = gate.coeff * _generator_factor(amps, gate, n)
        total += amps
    return StateVector(n, total, normalized=False)


def sample_counts(
    state: StateVector, shots: int, rng: np.random.Generator
) -> dict[int, int]:
    """Multinomial draw from |amplitude|^2; deterministic given the rng."""
    if shots < 1:
        raise SimulationError("shots must be >= 1")
    probs = state.probabilities
    total = probs.sum()
    if abs(total - 1.0) > 1e-8:
        raise SimulationError("state is not normalized")
    draws = rng.multinomial(shots, probs / total)
    return {int(i): int(c) for i, c in enumerate(draws) if c > 0}


def reduced_probabilities(state: StateVector, keep: list[int]) -> np.ndarray:
    """Marginal basis probabilities over ``keep``.

    Output index bit j corresponds to qubit ``keep[j]`` (keep[0] is the
    least significant output bit).
    """
    n = state.n_qubits
    if not keep or len(set(keep)) != len(keep):
        raise SimulationError("keep must be nonempty and distinct")
    if any(not 0 <= q < n for q in keep):
        raise SimulationError("keep contains invalid qubit indices")
    probs = state.probabilities.reshape((2,) * n)  # axis a <-> qubit n-1-a
    drop_axes = tuple(n - 1 - q for q in range(n) if q not in keep)
    marginal = probs.sum(axis=drop_axes) if drop_axes else probs
    # remaining axes correspond to kept qubits in decreasing qubit order
    kept_sorted = sorted(keep, reverse=True)
    order = [kept_sorted.index(q) for q in reversed(keep)]
    return marginal.transpose(order).reshape(-1)
