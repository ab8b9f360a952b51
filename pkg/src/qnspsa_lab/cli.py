"""Command-line entry point.

``qnspsa-lab run <config.toml> [--seed N] [--jobs N] [--output DIR]``
runs one experiment from a TOML config; ``qnspsa-lab check`` runs a fast
self-test of the numerical core.  Exit codes: 0 success, 1 runtime
failure (including a failed check), 2 usage or config error.
"""

from __future__ import annotations

import argparse
import sys
from pathlib import Path

try:
    import tomllib
except ModuleNotFoundError:  # Python < 3.11
    import tomli as tomllib

import numpy as np

from .experiments import ConfigError, run_experiment


def _build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(
        prog="qnspsa-lab",
        description="Quantum natural SPSA experiment harness.",
    )
    sub = parser.add_subparsers(dest="command", required=True)

    run_parser = sub.add_parser("run", help="run an experiment from a TOML config")
    run_parser.add_argument("config", type=Path, help="path to the TOML config file")
    run_parser.add_argument("--seed", type=int, default=None, help="override the config seed")
    run_parser.add_argument(
        "--jobs", type=int, default=1,
        help="worker processes (runs are executed in deterministic order)",
    )
    run_parser.add_argument(
        "--output", type=Path, default=None,
        help="output directory (default: results/<experiment>)",
    )

    sub.add_parser("check", help="run a quick self-test")
    return parser


def _command_run(args) -> int:
    if not args.config.is_file():
        print(f"error: config file not found: {args.config}", file=sys.stderr)
        return 2
    try:
        raw = tomllib.loads(args.config.read_text())
    except tomllib.TOMLDecodeError as exc:
        print(f"error: invalid TOML: {exc}", file=sys.stderr)
        return 2
    if args.seed is not None:
        raw["seed"] = args.seed
    if args.jobs is not None and args.jobs < 1:
        print("error: --jobs must be >= 1", file=sys.stderr)
        return 2
    output = args.output
    if output is None:
        output = Path(raw.get("output_dir", "results")) / str(raw.get("experiment", "run"))
    try:
        summary = run_experiment(raw, output)
    except ConfigError as exc:
        print(f"error: {exc}", file=sys.stderr)
        return 2
    except Exception as exc:  # runtime failure
        print(f"runtime error: {exc}", file=sys.stderr)
        return 1
    print(f"experiment {summary['experiment']} finished; results in {output}")
    if summary["experiment"] == "qfim_check" and not summary["results"]["passed"]:
        print(
            f"qfim_check FAILED: max deviation "
            f"{summary['results']['max_deviation']:.3e}",
            file=sys.stderr,
        )
        return 1
    return 0


def _command_check() -> int:
    """Fast end-to-end sanity check of the numerical core."""
    from .experiments import build_convergence_problem, random_parameterized_circuit
    from .metrics import metric_analytic, metric_fd_hessian
    from .observables import expectation_exact
    from .optim import CircuitProblem, OptimizerConfig, optimize
    from .simcore import run

    failures = []

    circuit, obs = build_convergence_problem()
    ground = expectation_exact(run(circuit, np.array([0.0, np.pi, np.pi])), obs)
    if abs(ground) > 1e-12:
        failures.append(f"ground-state energy {ground:.3e} != 0")

    qfim_circ, theta = random_parameterized_circuit(seed=7)
    deviation = np.max(
        np.abs(metric_analytic(qfim_circ, theta) - metric_fd_hessian(qfim_circ, theta))
    )
    if deviation > 1e-5:
        failures.append(f"metric cross-check deviation {deviation:.3e} > 1e-5")

    problem = CircuitProblem(circuit, obs, np.array([0.0, 2.0, 2.0]))
    records = optimize(
        OptimizerConfig(method="QNSPSA", eta=0.1, iterations=50, seed=1), problem
    )
    if records[-1].loss > records[0].loss:
        failures.append("QN-SPSA failed to reduce the loss on the reference problem")

    for failure in failures:
        print(f"check FAILED: {failure}", file=sys.stderr)
    if failures:
        return 1
    print("all checks passed")
    return 0


def main(argv: list[str] | None = None) -> int:
    parser = _build_parser()
    try:
        args = parser.parse_args(argv)
    except SystemExit as exc:
        # argparse exits 2 on usage errors already; normalize others
        return int(exc.code) if exc.code else 0
    if args.command == "run":
        return _command_run(args)
    return _command_check()


if __name__ == "__main__":
    sys.exit(main())
