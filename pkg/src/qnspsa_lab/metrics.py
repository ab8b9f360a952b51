"""Curvature estimators: Fubini-Study metric, SPSA point-samples,
exponential smoothing and positive-definite regularization.

All functions work with the metric tensor g itself; the quantum Fisher
information is 4g and is never formed here.
"""

from __future__ import annotations

from dataclasses import dataclass
from typing import Callable

import numpy as np

from .simcore import Circuit, derivative_state, fidelity, run


@dataclass(frozen=True)
class PerturbationPair:
    """Two Rademacher direction vectors with entries exactly +-1."""

    delta1: np.ndarray
    delta2: np.ndarray

    def __post_init__(self):
        for d in (self.delta1, self.delta2):
            if not np.all(np.abs(d) == 1):
                raise ValueError("perturbation entries must be +-1")
        if len(self.delta1) != len(self.delta2):
            raise ValueError("direction length mismatch")

    @classmethod
    def draw(cls, d: int, rng: np.random.Generator) -> "PerturbationPair":
        return cls(
            rng.integers(0, 2, d) * 2.0 - 1.0,
            rng.integers(0, 2, d) * 2.0 - 1.0,
        )


@dataclass
class MetricEstimate:
    """Exponentially smoothed curvature estimate with bookkeeping."""

    matrix: np.ndarray
    iteration: int = 0
    resamplings_per_step: int = 1

    @classmethod
    def identity(cls, d: int, resamplings_per_step: int = 1) -> "MetricEstimate":
        return cls(np.eye(d), iteration=0, resamplings_per_step=resamplings_per_step)


def metric_analytic(circuit: Circuit, theta: np.ndarray) -> np.ndarray:
    """Fubini-Study metric from exact derivative states:

    g_ij = Re{<d_i psi|d_j psi> - <d_i psi|psi><psi|d_j psi>}.
    """
    theta = np.asarray(theta, dtype=float)
    d = circuit.n_params
    psi = run(circuit, theta).amplitudes
    derivs = [derivative_state(circuit, theta, i).amplitudes for i in range(d)]
    overlaps = np.array([np.vdot(dv, psi) for dv in derivs])
    g = np.empty((d, d))
    for i in range(d):
        for j in range(i, d):
            val = np.vdot(derivs[i], derivs[j]) - overlaps[i] * np.conj(overlaps[j])
            g[i, j] = g[j, i] = val.real
    return g


def metric_fd_hessian(
    circuit: Circuit, theta: np.ndarray, fd_step: float = 1e-3
) -> np.ndarray:
    """-(1/2) d^2 F(theta', theta)/dtheta_i dtheta_j at theta' = theta.

    Second-order central differences of the fidelity in its second
    argument; serves as the independent cross-check of metric_analytic.
    """
    if fd_step <= 0:
        raise ValueError("fd_step must be positive")
    theta = np.asarray(theta, dtype=float)
    d = circuit.n_params
    e = np.eye(d) * fd_step

    def F(shift: np.ndarray) -> float:
        return fidelity(circuit, theta, theta + shift)

    g = np.empty((d, d))
    for i in range(d):
        # diagonal: F(theta, theta) = 1 exactly
        g[i, i] = -0.5 * (F(e[i]) - 2.0 + F(-e[i])) / fd_step**2
        for j in range(i + 1, d):
            mixed = (
                F(e[i] + e[j]) - F(e[i] - e[j]) - F(-e[i] + e[j]) + F(-e[i] - e[j])
            ) / (4 * fd_step**2)
            g[i, j] = g[j, i] = -0.5 * mixed
    return g


def _rank_two_sample(delta_f: float, eps: float, pair: PerturbationPair) -> np.ndarray:
    outer = np.outer(pair.delta1, pair.delta2)
    return delta_f / (2 * eps**2) * (outer + outer.T) / 2


def metric_point_sample(
    circuit: Circuit,
    theta: np.ndarray,
    eps: float,
    pair: PerturbationPair,
    fidelity_fn: Callable[[np.ndarray, np.ndarray], float] | None = None,
) -> np.ndarray:
    """Stochastic rank-<=2 metric sample from 4 fidelity evaluations.

    ``fidelity_fn(theta, theta_prime)`` defaults to the exact simulator
    fidelity; callers doing shot-based or counted evaluation pass their
    own.
    """
    if eps <= 0:
        raise ValueError("eps must be positive")
    theta = np.asarray(theta, dtype=float)
    if fidelity_fn is None:
        fidelity_fn = lambda a, b: fidelity(circuit, a, b)
    d1, d2 = pair.delta1, pair.delta2
    delta_f = (
        fidelity_fn(theta, theta + eps * d1 + eps * d2)
        - fidelity_fn(theta, theta + eps * d1)
        - fidelity_fn(theta, theta - eps * d1 + eps * d2)
        + fidelity_fn(theta, theta - eps * d1)
    )
    return -0.5 * _rank_two_sample(delta_f, eps, pair)


def hessian_point_sample(
    loss: Callable[[np.ndarray], float],
    theta: np.ndarray,
    eps: float,
    pair: PerturbationPair,
) -> np.ndarray:
    """Symmetric Hessian sample from 4 loss evaluations."""
    if eps <= 0:
        raise ValueError("eps must be positive")
    theta = np.asarray(theta, dtype=float)
    d1, d2 = pair.delta1, pair.delta2
    delta_f = (
        loss(theta + eps * d1 + eps * d2)
        - loss(theta + eps * d1)
        - loss(theta - eps * d1 + eps * d2)
        + loss(theta - eps * d1)
    )
    return _rank_two_sample(delta_f, eps, pair)


def smooth(previous: MetricEstimate, sample: np.ndarray) -> MetricEstimate:
    """One exponential-smoothing fold: the estimate at step k is the
    running average of the identity prior and all samples seen so far.
    """
    if previous.matrix.shape != sample.shape:
        raise ValueError("dimension mismatch")
    k = previous.iteration + 1
    matrix = (k / (k + 1)) * previous.matrix + (1 / (k + 1)) * sample
    return MetricEstimate(matrix, iteration=k, resamplings_per_step=previous.resamplings_per_step)


def regularize(g_bar: np.ndarray, beta: float, normalized: bool = True) -> np.ndarray:
    """sqrt(g g) + beta*I via eigendecomposition, optionally divided by
    (1 + beta) so large beta recovers the vanilla-gradient step scale.
    """
    if beta <= 0:
        raise ValueError("beta must be positive")
    if not np.all(np.isfinite(g_bar)):
        raise ValueError("non-finite matrix")
    eigvals, eigvecs = np.linalg.eigh(g_bar)
    eigvals = np.abs(eigvals)
    eigvals[eigvals < 1e-12] = 0.0  # clamp roundoff negatives
    spd = (eigvecs * (eigvals + beta)) @ eigvecs.T
    if normalized:
        spd = spd / (1 + beta)
    return spd
