"""Experiment builders and config-driven runners behind the CLI.

Each experiment resolves its configuration (recording every default),
runs seeded optimizations, and persists a ``trace.csv`` plus a
``summary.json``.  Trace files are byte-identical across re-runs with
the same config and seed; wall-clock timings go to a separate
``timings.csv`` that is excluded from that guarantee.
"""

from __future__ import annotations

import json
import time
from pathlib import Path

import numpy as np

from .metrics import metric_analytic, metric_fd_hessian
from .observables import PauliSum, dense_matrix, parse_hamiltonian_file
from .optim import (
    CircuitProblem,
    LearningRateSchedule,
    OptimizerConfig,
    PerturbationSchedule,
    calibrate,
    optimize,
)
from .qbm import QbmConfig, train
from .simcore import Circuit, Gate
from .varqite import EvolutionConfig, QnspsaMetricSettings


class ConfigError(ValueError):
    pass


EXPERIMENT_NAMES = (
    "two_design",
    "convergence_region",
    "maxcut",
    "qbm_bell",
    "regularization_sweep",
    "qfim_check",
    "vqe_file",
)

_COMMON_DEFAULTS = {
    "methods": ["GD", "QNG", "SPSA", "QNSPSA"],
    "eta": 1e-2,
    "epsilon": 1e-2,
    "beta": 1e-3,
    "shots": 0,
    "iterations": 100,
    "n_runs": 10,
    "n_resamplings": 1,
    "seed": 42,
    "blocking": True,
}

_EXPERIMENT_DEFAULTS = {
    "two_design": {"n_qubits": 11, "reps": 3, "iterations": 300},
    "convergence_region": {
        "grid_size": 15,
        "iterations": 200,
        "n_runs": 10,
        "eta_gd": 0.886,
        "eta_qng": 0.225,
        "error_threshold": 1e-4,
    },
    "maxcut": {
        "layers": 2,
        "n_runs": 25,
        "blocking": False,
        "methods": ["QNSPSA", "SPSA", "SPSA_CAL_AUTO", "SPSA_CAL_MANUAL"],
        "calibration_target_auto": 2 * np.pi / 10,
        "calibration_target_manual": 0.1,
        "calibration_probes": 25,
    },
    "qbm_bell": {
        "n_runs": 5,
        "iterations": 100,
        "eta": 0.1,
        "epsilon": 0.1,
        "metric_resamplings": 10,
        "metric_epsilon": 1e-2,
        "metric_beta": 0.1,
        "n_state_averages": 10,
        "time_steps": 10,
        "k_B_T": 1.0,
        "target": [0.5, 0.0, 0.0, 0.5],
        "gibbs_backend": "varqite",
    },
    "regularization_sweep": {
        "n_qubits": 9,
        "reps": 3,
        "iterations": 300,
        "betas": [1e-3, 1e-2, 1e-1, 1.0],
        "n_runs": 1,
    },
    "qfim_check": {"n_circuits": 20, "fd_step": 1e-3, "tolerance": 1e-5},
    "vqe_file": {"hamiltonian_file": "", "ansatz": "two_design", "reps": 2},
}


def resolve_config(raw: dict) -> dict:
    if "experiment" not in raw:
        raise ConfigError("config must name an 'experiment'")
    name = raw["experiment"]
    if name not in EXPERIMENT_NAMES:
        raise ConfigError(
            f"unknown experiment {name!r}; valid: {', '.join(EXPERIMENT_NAMES)}"
        )
    config = dict(_COMMON_DEFAULTS)
    config.update(_EXPERIMENT_DEFAULTS.get(name, {}))
    unknown = set(raw) - set(config) - {"experiment", "output_dir"}
    if unknown:
        raise ConfigError(f"unknown config keys: {sorted(unknown)}")
    config.update(raw)
    config["experiment"] = name
    return config


# ---------------------------------------------------------------------------
# instance builders


def build_two_design(n_qubits: int, reps: int, seed: int) -> tuple[Circuit, PauliSum]:
    """Pauli two-design benchmark: RY(pi/4) initial layer, ``reps``
    random-axis rotation + nearest-neighbor CZ layers, and a final
    rotation layer; local ZZ observable in the middle of the register."""
    if n_qubits < 2 or reps < 1:
        raise ConfigError("two_design needs n_qubits >= 2 and reps >= 1")
    rng = np.random.default_rng(seed)
    circuit = Circuit(n_qubits)
    for q in range(n_qubits):
        circuit.add(Gate("RY", (q,), angle=np.pi / 4))
    param = 0
    for layer in range(reps + 1):
        for q in range(n_qubits):
            axis = rng.choice(["RX", "RY", "RZ"])
            circuit.add(Gate(str(axis), (q,), param=param))
            param += 1
        if layer < reps:
            for q in range(n_qubits - 1):
                circuit.add(Gate("CZ", (q, q + 1)))
    mid = n_qubits // 2
    obs = PauliSum(n_qubits).add_term(1.0, {mid - 1: "Z", mid: "Z"})
    return circuit, obs


def build_convergence_problem() -> tuple[Circuit, PauliSum]:
    """Two-qubit ansatz with a variational global phase, and the diagonal
    Hamiltonian diag(1, 2, 3, 0).

    Parameter 0 is the global phase, 1 the RX angle on the control
    qubit, 2 the controlled-RY angle.  The Pauli decomposition
    1.5 I + 0.5 Z_0 - Z_0 Z_1 reproduces the diagonal exactly under the
    package bit order (qubit 1 is the control and the most significant
    bit).
    """
    circuit = Circuit(2)
    circuit.add(Gate("RX", (1,), param=1))
    circuit.add(Gate("CRY", (1, 0), param=2))
    circuit.add(Gate("GlobalPhase", (), param=0))
    obs = PauliSum(2)
    obs.add_term(1.5, {})
    obs.add_term(0.5, {0: "Z"})
    obs.add_term(-1.0, {0: "Z", 1: "Z"})
    return circuit, obs


MAXCUT_TERMS = [
    (1.0, 3, 4),
    (2.5, 2, 4),
    (2.5, 2, 3),
    (-0.5, 1, 4),
    (-0.5, 1, 2),
    (-4.5, 0, 4),
    (3.5, 0, 2),
]

MIXER_SCALE = 1.0 / 20.0


def build_maxcut(layers: int = 2) -> tuple[Circuit, PauliSum]:
    """Weighted 5-node MAXCUT QAOA ansatz and its 7-term cost
    Hamiltonian.  Starts from |+>^5, then alternates cost layers
    RZZ(2 * gamma_l * w_ij) with mixer layers RX(2 * beta_l / 20)."""
    if layers < 1:
        raise ConfigError("layers must be >= 1")
    n = 5
    circuit = Circuit(n)
    for q in range(n):
        circuit.add(Gate("H", (q,)))
    for layer in range(layers):
        gamma, beta = 2 * layer, 2 * layer + 1
        for weight, i, j in MAXCUT_TERMS:
            circuit.add(Gate("RZZ", (i, j), param=gamma, coeff=2.0 * weight))
        for q in range(n):
            circuit.add(Gate("RX", (q,), param=beta, coeff=2.0 * MIXER_SCALE))
    obs = PauliSum(n)
    for weight, i, j in MAXCUT_TERMS:
        obs.add_term(weight, {i: "Z", j: "Z"})
    return circuit, obs


def exhaustive_minimum(obs: PauliSum) -> float:
    """Reference optimum of a diagonal observable by enumerating all
    basis states."""
    diag = np.real(np.diag(dense_matrix(obs)))
    return float(diag.min())


def random_parameterized_circuit(
    seed: int, max_qubits: int = 4, max_params: int = 8
) -> tuple[Circuit, np.ndarray]:
    """Seeded random circuit for metric cross-checks; returns the circuit
    and a random parameter point."""
    rng = np.random.default_rng(seed)
    n = int(rng.integers(2, max_qubits + 1))
    n_params = int(rng.integers(2, max_params + 1))
    circuit = Circuit(n)
    rotations = ["RX", "RY", "RZ"]
    # every parameter appears at least once; some twice (shared parameters)
    uses = list(range(n_params)) + [
        int(rng.integers(0, n_params)) for _ in range(n_params // 2)
    ]
    rng.shuffle(uses)
    for param in uses:
        roll = rng.random()
        if roll < 0.65 or n < 2:
            kind = rotations[rng.integers(0, 3)]
            circuit.add(Gate(kind, (int(rng.integers(0, n)),), param=param))
        elif roll < 0.85:
            q = sorted(rng.choice(n, 2, replace=False).tolist())
            circuit.add(Gate("RZZ", (int(q[0]), int(q[1])), param=param))
        else:
            q = rng.choice(n, 2, replace=False).tolist()
            circuit.add(Gate("CRY", (int(q[0]), int(q[1])), param=param))
        if rng.random() < 0.5:
            q = rng.choice(n, 2, replace=False).tolist()
            circuit.add(Gate("CX" if rng.random() < 0.5 else "CZ", (int(q[0]), int(q[1]))))
        if rng.random() < 0.3:
            circuit.add(Gate("H", (int(rng.integers(0, n)),)))
    theta = rng.uniform(-np.pi, np.pi, n_params)
    return circuit, theta


# ---------------------------------------------------------------------------
# runners


def _trace_rows(experiment, method, run_id, records):
    return [
        (experiment, method, run_id, r.k, r.loss, r.circuit_evaluations, int(r.accepted))
        for r in records
    ]


def _final_losses(results):
    return [records[-1].loss for records in results]


def _optimizer_config(method, config, seed, **overrides):
    kwargs = dict(
        method=method,
        eta=config["eta"],
        eps=config["epsilon"],
        beta=config["beta"],
        iterations=config["iterations"],
        blocking=config["blocking"] and method in ("SPSA", "2SPSA", "QNSPSA"),
        blocking_tolerance="auto_2sigma" if config["shots"] > 0 else 0.0,
        n_resamplings=config["n_resamplings"],
        seed=seed,
        shots=config["shots"],
    )
    kwargs.update(overrides)
    return OptimizerConfig(**kwargs)


def _run_two_design(config, trace, timings):
    circuit, obs = build_two_design(config["n_qubits"], config["reps"], config["seed"])
    init_rng = np.random.default_rng(np.random.SeedSequence((config["seed"], 1)))
    theta0 = init_rng.uniform(-np.pi, np.pi, circuit.n_params)
    summary = {"n_parameters": circuit.n_params, "methods": {}}
    for method in config["methods"]:
        analytic = method in ("GD", "QNG")
        n_runs = 1 if analytic else config["n_runs"]
        shots = 0 if analytic else config["shots"]
        problem = CircuitProblem(circuit, obs, theta0, shots=shots)
        finals, totals = [], []
        for r in range(n_runs):
            opt = _optimizer_config(method, config, config["seed"] + r)
            if analytic:
                opt.blocking = False
            t0 = time.perf_counter()
            records = optimize(opt, problem)
            timings.append((config["experiment"], method, r, (time.perf_counter() - t0) * 1e3))
            trace.extend(_trace_rows(config["experiment"], method, r, records))
            finals.append(records[-1].loss)
            totals.append(records[-1].circuit_evaluations)
        summary["methods"][method] = {
            "final_loss_mean": float(np.mean(finals)),
            "final_loss_std": float(np.std(finals)),
            "total_evaluations": int(np.sum(totals)),
            "n_runs": n_runs,
        }
    return summary


def _run_convergence_region(config, trace, timings):
    circuit, obs = build_convergence_problem()
    grid_size = config["grid_size"]
    axis = np.linspace(-np.pi, np.pi, grid_size)
    ground = exhaustive_minimum(obs)
    threshold = config["error_threshold"]
    etas = {
        "GD": config["eta_gd"],
        "SPSA": config["eta_gd"],
        "QNG": config["eta_qng"],
        "QNSPSA": config["eta_qng"],
    }
    summary = {"grid": [float(v) for v in axis], "ground_energy": ground, "methods": {}}
    for method in config["methods"]:
        stochastic = method in ("SPSA", "2SPSA", "QNSPSA")
        n_runs = config["n_runs"] if stochastic else 1
        converged = np.zeros((grid_size, grid_size), dtype=bool)
        t0 = time.perf_counter()
        for i, t1 in enumerate(axis):
            for j, t2 in enumerate(axis):
                theta0 = np.array([0.0, t1, t2])
                problem = CircuitProblem(circuit, obs, theta0, shots=config["shots"])
                best = np.inf
                for r in range(n_runs):
                    opt = _optimizer_config(
                        method, config,
                        seed=config["seed"] + 1000 * (i * grid_size + j) + r,
                        eta=etas.get(method, config["eta"]),
                        beta=config["beta"] if method != "QNG" else 0.0,
                    )
                    records = optimize(opt, problem)
                    best = min(best, records[-1].loss)
                    if best - ground < threshold:
                        break
                converged[i, j] = best - ground < threshold
                trace.append(
                    (config["experiment"], method, i * grid_size + j,
                     config["iterations"], best, 0, int(converged[i, j]))
                )
        timings.append((config["experiment"], method, 0, (time.perf_counter() - t0) * 1e3))
        summary["methods"][method] = {
            "converged_points": int(converged.sum()),
            "total_points": grid_size**2,
            "grid_converged": converged.astype(int).tolist(),
        }
    return summary


def _run_maxcut(config, trace, timings):
    circuit, obs = build_maxcut(config["layers"])
    optimum = exhaustive_minimum(obs)
    init_rng = np.random.default_rng(np.random.SeedSequence((config["seed"], 1)))
    theta0 = init_rng.uniform(-np.pi, np.pi, circuit.n_params)
    problem = CircuitProblem(circuit, obs, theta0, shots=config["shots"])
    summary = {"reference_optimum": optimum, "n_parameters": circuit.n_params, "methods": {}}
    for method in config["methods"]:
        base_method = "SPSA" if method.startswith("SPSA") else method
        finals = []
        for r in range(config["n_runs"]):
            seed = config["seed"] + r
            overrides = {}
            if method in ("SPSA_CAL_AUTO", "SPSA_CAL_MANUAL"):
                target = (
                    config["calibration_target_auto"]
                    if method == "SPSA_CAL_AUTO"
                    else config["calibration_target_manual"]
                )
                A = 0.1 * config["iterations"]
                loss_fn = lambda th: problem.evaluate_loss(
                    th, np.random.default_rng((seed, 99))
                )[0]
                a = calibrate(
                    loss_fn, theta0, target,
                    n_probes=config["calibration_probes"],
                    eps=config["epsilon"],
                    rng=np.random.default_rng((seed, 98)),
                    A=A,
                )
                overrides["eta"] = LearningRateSchedule(a=a, A=A)
                overrides["eps"] = PerturbationSchedule(c=config["epsilon"])
            opt = _optimizer_config(base_method, config, seed, **overrides)
            t0 = time.perf_counter()
            records = optimize(opt, problem)
            timings.append((config["experiment"], method, r, (time.perf_counter() - t0) * 1e3))
            trace.extend(_trace_rows(config["experiment"], method, r, records))
            finals.append(records[-1].loss)
        summary["methods"][method] = {
            "final_loss_mean": float(np.mean(finals)),
            "final_loss_std": float(np.std(finals)),
            "mean_gap_to_optimum": float(np.mean(finals) - optimum),
        }
    return summary


def _run_qbm_bell(config, trace, timings):
    summary = {"runs": []}
    for r in range(config["n_runs"]):
        qbm_config = QbmConfig(
            target=np.asarray(config["target"], float),
            eta=config["eta"],
            eps=config["epsilon"],
            iterations=config["iterations"],
            n_state_averages=config["n_state_averages"],
            seed=config["seed"] + r,
            gibbs_backend=config["gibbs_backend"],
            k_B_T=config["k_B_T"],
            evolution=EvolutionConfig(
                total_time=1.0 / (2.0 * config["k_B_T"]),
                n_steps=config["time_steps"],
                metric_mode="qnspsa" if config["gibbs_backend"] == "varqite" else "analytic",
                qnspsa=QnspsaMetricSettings(
                    n_resamplings=config["metric_resamplings"],
                    eps=config["metric_epsilon"],
                    beta=config["metric_beta"],
                    seed=config["seed"] + r,
                ),
            ),
        )
        t0 = time.perf_counter()
        result = train(qbm_config)
        timings.append((config["experiment"], "QBM", r, (time.perf_counter() - t0) * 1e3))
        trace.extend(_trace_rows(config["experiment"], "QBM", r, result.records))
        summary["runs"].append(
            {
                "seed": config["seed"] + r,
                "final_loss": result.final_loss,
                "final_probabilities": [float(p) for p in result.final_probabilities],
                "omega_final": [float(w) for w in result.omega_final],
            }
        )
    finals = [run["final_loss"] for run in summary["runs"]]
    summary["final_loss_mean"] = float(np.mean(finals))
    summary["target_entropy"] = float(
        -np.sum([p * np.log(p) for p in config["target"] if p > 0])
    )
    return summary


def _run_regularization_sweep(config, trace, timings):
    circuit, obs = build_two_design(config["n_qubits"], config["reps"], config["seed"])
    init_rng = np.random.default_rng(np.random.SeedSequence((config["seed"], 1)))
    theta0 = init_rng.uniform(-np.pi, np.pi, circuit.n_params)
    problem = CircuitProblem(circuit, obs, theta0, shots=config["shots"])
    summary = {"betas": [float(b) for b in config["betas"]], "methods": {}}
    for beta in config["betas"]:
        method = f"QNSPSA_beta_{beta:g}"
        finals = []
        for r in range(config["n_runs"]):
            opt = _optimizer_config("QNSPSA", config, config["seed"] + r, beta=float(beta))
            t0 = time.perf_counter()
            records = optimize(opt, problem)
            timings.append((config["experiment"], method, r, (time.perf_counter() - t0) * 1e3))
            trace.extend(_trace_rows(config["experiment"], method, r, records))
            finals.append(records[-1].loss)
        summary["methods"][method] = {
            "beta": float(beta),
            "final_loss_mean": float(np.mean(finals)),
        }
    return summary


def _run_qfim_check(config, trace, timings):
    worst = 0.0
    t0 = time.perf_counter()
    for k in range(config["n_circuits"]):
        circuit, theta = random_parameterized_circuit(config["seed"] + k)
        deviation = float(
            np.max(
                np.abs(
                    metric_analytic(circuit, theta)
                    - metric_fd_hessian(circuit, theta, config["fd_step"])
                )
            )
        )
        worst = max(worst, deviation)
        trace.append((config["experiment"], "qfim_check", k, 0, deviation, 0, 1))
    timings.append((config["experiment"], "qfim_check", 0, (time.perf_counter() - t0) * 1e3))
    passed = worst <= config["tolerance"]
    return {
        "max_deviation": worst,
        "tolerance": config["tolerance"],
        "passed": bool(passed),
    }


def _run_vqe_file(config, trace, timings):
    path = Path(config["hamiltonian_file"])
    if not path.is_file():
        raise ConfigError(f"Hamiltonian file not found: {path}")
    obs = parse_hamiltonian_file(path.read_text())
    if config["ansatz"] != "two_design":
        raise ConfigError(f"unknown ansatz family {config['ansatz']!r}")
    circuit, _ = build_two_design(obs.n_qubits, config["reps"], config["seed"])
    if circuit.n_qubits != obs.n_qubits:
        raise ConfigError("ansatz and Hamiltonian qubit counts differ")
    init_rng = np.random.default_rng(np.random.SeedSequence((config["seed"], 1)))
    theta0 = init_rng.uniform(-np.pi, np.pi, circuit.n_params)
    summary = {"n_qubits": obs.n_qubits, "n_parameters": circuit.n_params, "methods": {}}
    for method in config["methods"]:
        analytic = method in ("GD", "QNG")
        n_runs = 1 if analytic else config["n_runs"]
        problem = CircuitProblem(
            circuit, obs, theta0, shots=0 if analytic else config["shots"]
        )
        finals = []
        for r in range(n_runs):
            opt = _optimizer_config(method, config, config["seed"] + r)
            if analytic:
                opt.blocking = False
            t0 = time.perf_counter()
            records = optimize(opt, problem)
            timings.append((config["experiment"], method, r, (time.perf_counter() - t0) * 1e3))
            trace.extend(_trace_rows(config["experiment"], method, r, records))
            finals.append(records[-1].loss)
        summary["methods"][method] = {
            "final_loss_mean": float(np.mean(finals)),
            "final_loss_std": float(np.std(finals)),
        }
    return summary


_RUNNERS = {
    "two_design": _run_two_design,
    "convergence_region": _run_convergence_region,
    "maxcut": _run_maxcut,
    "qbm_bell": _run_qbm_bell,
    "regularization_sweep": _run_regularization_sweep,
    "qfim_check": _run_qfim_check,
    "vqe_file": _run_vqe_file,
}


def write_trace(path: Path, rows) -> None:
    lines = ["experiment,method,run,k,loss,evals,accepted"]
    for experiment, method, run_id, k, loss, evals, accepted in rows:
        lines.append(f"{experiment},{method},{run_id},{k},{loss!r},{evals},{accepted}")
    path.write_text("\n".join(lines) + "\n")


def write_timings(path: Path, rows) -> None:
    lines = ["experiment,method,run,wall_ms"]
    for experiment, method, run_id, wall_ms in rows:
        lines.append(f"{experiment},{method},{run_id},{wall_ms:.3f}")
    path.write_text("\n".join(lines) + "\n")


def run_experiment(raw_config: dict, output_dir: Path) -> dict:
    """Run one experiment; writes trace.csv, timings.csv and summary.json
    into ``output_dir`` and returns the summary."""
    config = resolve_config(raw_config)
    output_dir = Path(output_dir)
    output_dir.mkdir(parents=True, exist_ok=True)
    trace: list = []
    timings: list = []
    results = _RUNNERS[config["experiment"]](config, trace, timings)
    summary = {
        "experiment": config["experiment"],
        "config": {
            k: (v if not isinstance(v, np.ndarray) else v.tolist())
            for k, v in sorted(config.items())
        },
        "results": results,
    }
    write_trace(output_dir / "trace.csv", trace)
    write_timings(output_dir / "timings.csv", timings)
    (output_dir / "summary.json").write_text(
        json.dumps(summary, indent=2, sort_keys=True) + "\n"
    )
    return summary
