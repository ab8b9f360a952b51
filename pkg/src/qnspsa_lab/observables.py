"""Hermitian observables as weighted Pauli sums.

Supports exact expectation values, shot-based estimation with
qubit-wise-commuting measurement grouping, and dense matrix realization
for small systems.  Bit order follows the package convention: qubit 0 is
the least significant bit, so dense matrices are assembled as
kron(op[n-1], ..., op[0]).
"""

from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np

from .simcore import (
    Circuit,
    Gate,
    SimulationError,
    StateVector,
    run,
    sample_counts,
)

_PAULI_MATS = {
    "I": np.eye(2, dtype=complex),
    "X": np.array([[0, 1], [1, 0]], dtype=complex),
    "Y": np.array([[0, -1j], [1j, 0]], dtype=complex),
    "Z": np.array([[1, 0], [0, -1]], dtype=complex),
}

DENSE_QUBIT_LIMIT = 12


class ObservableError(ValueError):
    pass


@dataclass(frozen=True)
class PauliString:
    """Pauli word as a map qubit-index -> {X, Y, Z}; identity elsewhere."""

    n_qubits: int
    paulis: tuple[tuple[int, str], ...] = ()

    @classmethod
    def from_dict(cls, n_qubits: int, paulis: dict[int, str]) -> "PauliString":
        for q, p in paulis.items():
            if not 0 <= q < n_qubits:
                raise ObservableError(f"qubit index {q} out of range")
            if p not in ("X", "Y", "Z"):
                raise ObservableError(f"invalid Pauli {p!r}")
        return cls(n_qubits, tuple(sorted(paulis.items())))

    @classmethod
    def from_label(cls, label: str) -> "PauliString":
        """Parse a label over {I,X,Y,Z}; leftmost char = highest qubit."""
        n = len(label)
        paulis = {}
        for pos, ch in enumerate(label):
            if ch not in "IXYZ":
                raise ObservableError(f"invalid character {ch!r} in label")
            if ch != "I":
                paulis[n - 1 - pos] = ch
        return cls.from_dict(n, paulis)

    def as_dict(self) -> dict[int, str]:
        return dict(self.paulis)

    def label(self) -> str:
        d = self.as_dict()
        return "".join(d.get(q, "I") for q in range(self.n_qubits - 1, -1, -1))

    @property
    def is_identity(self) -> bool:
        return not self.paulis


@dataclass
class PauliSum:
    """Weighted sum of Pauli strings with real coefficients."""

    n_qubits: int
    terms: list[tuple[float, PauliString]] = field(default_factory=list)

    def __post_init__(self):
        for coeff, ps in self.terms:
            if not np.isfinite(coeff):
                raise ObservableError("coefficients must be finite")
            if ps.n_qubits != self.n_qubits:
                raise ObservableError("term qubit count mismatch")

    def add_term(self, coeff: float, paulis: dict[int, str]) -> "PauliSum":
        self.terms.append((float(coeff), PauliString.from_dict(self.n_qubits, paulis)))
        return self

    def extend_to(self, n_qubits: int) -> "PauliSum":
        """Same terms on a wider register (identity on the new qubits)."""
        if n_qubits < self.n_qubits:
            raise ObservableError("cannot shrink the register")
        return PauliSum(
            n_qubits,
            [(c, PauliString(n_qubits, ps.paulis)) for c, ps in self.terms],
        )


def apply_pauli_string(amps: np.ndarray, ps: PauliString, n: int) -> np.ndarray:
    out = amps
    idx = np.arange(len(amps))
    for q, p in ps.paulis:
        bit = (idx >> q) & 1
        if p == "Z":
            out = out * (1 - 2 * bit)
        elif p == "X":
            out = out[idx ^ (1 << q)]
        else:  # Y = i X Z up to order: Y|0> = i|1>, Y|1> = -i|0>
            flipped = out[idx ^ (1 << q)]
            out = flipped * np.where(bit == 1, 1j, -1j)
    return out


def apply_pauli_sum(state: StateVector, obs: PauliSum) -> np.ndarray:
    """H|psi> as a raw amplitude vector."""
    if state.n_qubits != obs.n_qubits:
        raise ObservableError("qubit-count mismatch")
    total = np.zeros_like(state.amplitudes)
    for coeff, ps in obs.terms:
        total += coeff * apply_pauli_string(state.amplitudes, ps, obs.n_qubits)
    return total


def expectation_exact(state: StateVector, obs: PauliSum) -> float:
    """<psi|H|psi>, asserting the imaginary residue is negligible."""
    value = np.vdot(state.amplitudes, apply_pauli_sum(state, obs))
    if abs(value.imag) > 1e-10:
        raise ObservableError(f"non-real expectation value: {value}")
    return float(value.real)


def group_qubitwise_commuting(obs: PauliSum) -> list[list[tuple[float, PauliString]]]:
    """Greedy first-fit grouping into qubit-wise commuting sets.

    Identity terms are excluded (they contribute a constant and need no
    measurement basis).
    """
    groups: list[tuple[dict[int, str], list[tuple[float, PauliString]]]] = []
    for coeff, ps in obs.terms:
        if ps.is_identity:
            continue
        placed = False
        for basis, members in groups:
            if all(basis.get(q, p) == p for q, p in ps.paulis):
                basis.update(ps.paulis)
                members.append((coeff, ps))
                placed = True
                break
        if not placed:
            groups.append((dict(ps.paulis), [(coeff, ps)]))
    return [members for _, members in groups]


def measurement_basis_count(obs: PauliSum) -> int:
    return len(group_qubitwise_commuting(obs))


def _basis_rotation_gates(group: list[tuple[float, PauliString]]) -> list[Gate]:
    """Gates mapping the group's measurement basis to the Z basis."""
    basis: dict[int, str] = {}
    for _, ps in group:
        basis.update(ps.paulis)
    gates = []
    for q, p in sorted(basis.items()):
        if p == "X":
            gates.append(Gate("H", (q,)))
        elif p == "Y":
            # S^dag then H: RZ(-pi/2) equals S^dag up to global phase
            gates.append(Gate("RZ", (q,), angle=-np.pi / 2))
            gates.append(Gate("H", (q,)))
    return gates


def expectation_sampled(
    circuit: Circuit,
    theta: np.ndarray | list[float],
    obs: PauliSum,
    shots: int,
    rng: np.random.Generator,
) -> tuple[float, float, int]:
    """Shot-based expectation value.

    Returns ``(value, std_error, n_bases)`` where ``n_bases`` is the
    number of distinct measurement circuits executed.  The standard
    error is the per-group sample standard deviation of the single-shot
    estimator divided by sqrt(shots), combined in quadrature.
    """
    if shots < 1:
        raise ObservableError("shots must be >= 1")
    constant = sum(c for c, ps in obs.terms if ps.is_identity)
    groups = group_qubitwise_commuting(obs)
    value = float(constant)
    variance = 0.0
    for group in groups:
        meas = Circuit(circuit.n_qubits, list(circuit.gates) + _basis_rotation_gates(group))
        counts = sample_counts(run(meas, theta), shots, rng)
        # composite single-shot estimator: sum_t c_t * (+-1 eigenvalue)
        group_mean = 0.0
        group_sq = 0.0
        for index, count in counts.items():
            outcome = 0.0
            for coeff, ps in group:
                parity = 0
                for q, _ in ps.paulis:
                    parity ^= (index >> q) & 1
                outcome += coeff * (1 - 2 * parity)
            w = count / shots
            group_mean += w * outcome
            group_sq += w * outcome**2
        value += group_mean
        sample_var = max(0.0, group_sq - group_mean**2)
        variance += sample_var / shots
    return value, float(np.sqrt(variance)), len(groups)


def dense_matrix(obs: PauliSum) -> np.ndarray:
    """Dense Hermitian matrix; guarded to small qubit counts."""
    n = obs.n_qubits
    if n > DENSE_QUBIT_LIMIT:
        raise ObservableError(
            f"dense_matrix limited to {DENSE_QUBIT_LIMIT} qubits, got {n}"
        )
    dim = 2**n
    total = np.zeros((dim, dim), dtype=complex)
    for coeff, ps in obs.terms:
        d = ps.as_dict()
        mat = np.eye(1, dtype=complex)
        for q in range(n - 1, -1, -1):
            mat = np.kron(mat, _PAULI_MATS[d.get(q, "I")])
        total += coeff * mat
    return total


def parse_hamiltonian_file(text: str) -> PauliSum:
    """Parse the text Hamiltonian format: ``<coefficient> <label>`` per line.

    Labels are strings over {I,X,Y,Z}; leftmost character is the highest
    qubit index.  ``#`` starts a comment.
    """
    terms: list[tuple[float, str]] = []
    for lineno, raw in enumerate(text.splitlines(), start=1):
        line = raw.split("#", 1)[0].strip()
        if not line:
            continue
        parts = line.split()
        if len(parts) != 2:
            raise ObservableError(f"line {lineno}: expected '<coefficient> <label>'")
        try:
            coeff = float(parts[0])
        except ValueError as exc:
            raise ObservableError(f"line {lineno}: bad coefficient {parts[0]!r}") from exc
        terms.append((coeff, parts[1]))
    if not terms:
        raise ObservableError("empty Hamiltonian file")
    n = len(terms[0][1])
    if any(len(label) != n for _, label in terms):
        raise ObservableError("inconsistent label lengths")
    obs = PauliSum(n)
    for coeff, label in terms:
        obs.terms.append((coeff, PauliString.from_label(label)))
    return obs
