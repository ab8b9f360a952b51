"""Experiment-layer tests: builders, config resolution and runners."""

import json

import numpy as np
import pytest

from qnspsa_lab.experiments import (
    ConfigError,
    EXPERIMENT_NAMES,
    build_convergence_problem,
    build_maxcut,
    build_two_design,
    exhaustive_minimum,
    random_parameterized_circuit,
    resolve_config,
    run_experiment,
)
from qnspsa_lab.observables import dense_matrix, expectation_exact
from qnspsa_lab.simcore import run


def test_two_design_structure():
    circuit, obs = build_two_design(n_qubits=11, reps=3, seed=42)
    assert circuit.n_qubits == 11
    assert circuit.n_params == 44  # (reps + 1) * n_qubits
    # same seed, same axes; different seed, different circuit
    again, _ = build_two_design(11, 3, 42)
    assert [g.kind for g in circuit.gates] == [g.kind for g in again.gates]
    other, _ = build_two_design(11, 3, 43)
    assert [g.kind for g in circuit.gates] != [g.kind for g in other.gates]
    # observable Z_5 Z_6 in 1-indexed counting = qubits 4 and 5
    assert obs.terms[0][1].as_dict() == {4: "Z", 5: "Z"}


def test_convergence_problem_spectrum():
    circuit, obs = build_convergence_problem()
    np.testing.assert_allclose(np.diag(dense_matrix(obs)).real, [1, 2, 3, 0])
    assert circuit.n_params == 3
    # theta = (0, pi, pi) reaches the ground state |11>
    energy = expectation_exact(run(circuit, np.array([0.0, np.pi, np.pi])), obs)
    assert abs(energy) < 1e-12


def test_maxcut_instance():
    circuit, obs = build_maxcut(layers=2)
    assert circuit.n_qubits == 5
    assert circuit.n_params == 4  # (gamma, beta) per layer
    assert len(obs.terms) == 7
    h = dense_matrix(obs)
    np.testing.assert_allclose(h, np.diag(np.diag(h)))  # diagonal cost
    optimum = exhaustive_minimum(obs)
    assert optimum == np.min(np.diag(h).real)
    # equal superposition has zero energy; the optimum is below it
    assert optimum < 0


def test_random_parameterized_circuit_reproducible():
    c1, t1 = random_parameterized_circuit(5)
    c2, t2 = random_parameterized_circuit(5)
    assert [g.kind for g in c1.gates] == [g.kind for g in c2.gates]
    np.testing.assert_array_equal(t1, t2)
    assert c1.n_qubits <= 4 and c1.n_params <= 8


def test_resolve_config():
    config = resolve_config({"experiment": "two_design"})
    assert config["n_qubits"] == 11 and config["iterations"] == 300
    override = resolve_config({"experiment": "two_design", "seed": 7})
    assert override["seed"] == 7
    with pytest.raises(ConfigError):
        resolve_config({})
    with pytest.raises(ConfigError):
        resolve_config({"experiment": "warp_drive"})
    with pytest.raises(ConfigError):
        resolve_config({"experiment": "maxcut", "warp": 9})


def test_unknown_experiment_message_lists_valid_names():
    with pytest.raises(ConfigError) as excinfo:
        resolve_config({"experiment": "nope"})
    for name in EXPERIMENT_NAMES:
        assert name in str(excinfo.value)


def test_qfim_check_runner(tmp_path):
    summary = run_experiment({"experiment": "qfim_check"}, tmp_path)
    assert summary["results"]["passed"]
    assert summary["results"]["max_deviation"] <= 1e-5
    assert (tmp_path / "trace.csv").is_file()
    assert (tmp_path / "summary.json").is_file()
    assert (tmp_path / "timings.csv").is_file()


def test_trace_is_byte_identical_across_reruns(tmp_path):
    config = {
        "experiment": "two_design",
        "n_qubits": 4,
        "reps": 1,
        "iterations": 10,
        "n_runs": 2,
        "shots": 256,
        "methods": ["SPSA", "QNSPSA"],
    }
    run_experiment(config, tmp_path / "a")
    run_experiment(config, tmp_path / "b")
    assert (tmp_path / "a/trace.csv").read_bytes() == (tmp_path / "b/trace.csv").read_bytes()
    assert (tmp_path / "a/summary.json").read_bytes() == (tmp_path / "b/summary.json").read_bytes()


def test_summary_records_resolved_config(tmp_path):
    run_experiment({"experiment": "qfim_check", "n_circuits": 3}, tmp_path)
    summary = json.loads((tmp_path / "summary.json").read_text())
    assert summary["config"]["n_circuits"] == 3
    assert summary["config"]["tolerance"] == 1e-5  # default made explicit


def test_vqe_file_runner(tmp_path):
    ham = tmp_path / "h.txt"
    ham.write_text("1.0 ZZ\n0.5 XI\n-0.5 IZ\n")
    config = {
        "experiment": "vqe_file",
        "hamiltonian_file": str(ham),
        "reps": 1,
        "iterations": 20,
        "n_runs": 1,
        "methods": ["GD", "SPSA"],
    }
    summary = run_experiment(config, tmp_path / "out")
    assert summary["results"]["n_qubits"] == 2
    assert "GD" in summary["results"]["methods"]


def test_vqe_file_missing_file(tmp_path):
    with pytest.raises(ConfigError):
        run_experiment(
            {"experiment": "vqe_file", "hamiltonian_file": str(tmp_path / "no.txt")},
            tmp_path / "out",
        )
