"""Controlled Ising chain: Hamiltonian MPOs, gate-target generator, horizon checks."""

from __future__ import annotations

import enum
import math
from dataclasses import dataclass
from typing import Callable

import numpy as np

from .mpo import DENSE_CAP, Mpo, mpo_to_dense

SIGMA_X = np.array([[0, 1], [1, 0]], dtype=complex)
SIGMA_Z = np.array([[1, 0], [0, -1]], dtype=complex)
IDENTITY = np.eye(2, dtype=complex)
ZERO = np.zeros((2, 2), dtype=complex)


@dataclass(frozen=True)
class IsingSpec:
    N: int
    J: float = 1.0

    def __post_init__(self):
        if self.N < 2:
            raise ValueError("the Ising chain needs N >= 2")
        if not math.isfinite(self.J):
            raise ValueError("J must be finite")


def _site(blocks: list[list[np.ndarray]]) -> np.ndarray:
    """Block matrix of 2x2 operators -> site array (s, s', l, r)."""
    rows, cols = len(blocks), len(blocks[0])
    out = np.zeros((2, 2, rows, cols), dtype=complex)
    for a in range(rows):
        for b in range(cols):
            out[:, :, a, b] = blocks[a][b]
    return out


def ising_free_mpo(spec: IsingSpec) -> Mpo:
    """``J sum_i Z_i Z_{i+1}`` with bond dimension 3 on every link."""
    J = spec.J
    first = _site([[ZERO, J * SIGMA_Z, IDENTITY]])
    middle = _site(
        [
            [IDENTITY, ZERO, ZERO],
            [SIGMA_Z, ZERO, ZERO],
            [ZERO, J * SIGMA_Z, IDENTITY],
        ]
    )
    last = _site([[IDENTITY], [SIGMA_Z], [ZERO]])
    return Mpo.from_arrays([first] + [middle] * (spec.N - 2) + [last])


def ising_control_mpo(N: int) -> Mpo:
    """``sum_i X_i`` with bond dimension 2 on every link."""
    if N < 2:
        raise ValueError("N must be at least 2")
    first = _site([[IDENTITY, SIGMA_X]])
    middle = _site([[IDENTITY, SIGMA_X], [ZERO, IDENTITY]])
    last = _site([[SIGMA_X], [IDENTITY]])
    return Mpo.from_arrays([first] + [middle] * (N - 2) + [last])


def target_generator_mpo(N: int, angle: float) -> Mpo:
    """Hermitian generator ``angle * sum_i Z_i Z_{i+1}``; ``angle=-pi/4`` gives the multi-qubit CZ."""
    return ising_free_mpo(IsingSpec(N, angle))


def max_horizon(spec: IsingSpec) -> float:
    """Heuristic longest evolution time, ``1/(2N)``.  Advisory only."""
    return 1.0 / (2 * spec.N)


def ising_norm_bounds(spec: IsingSpec) -> tuple[float, float]:
    """Triangle-inequality bounds on the spectral norms of the free and control parts."""
    return abs(spec.J) * (spec.N - 1), float(spec.N)


class Convergence(str, enum.Enum):
    OK = "ok"
    MARGINAL = "marginal"
    VIOLATED = "violated"


QUADRATURE_NODES = 16


def convergence_check(
    H0: Mpo,
    Hc: Mpo,
    u: Callable[[float], float],
    T: float,
    *,
    dense_cap: int = DENSE_CAP,
    norm_bounds: tuple[float, float] | None = None,
) -> Convergence:
    """Classify a horizon against the Magnus and Chebyshev convergence domains.

    ``ok`` requires ``int_0^T ||H(t)||_2 dt < pi`` and a first-order Magnus
    generator of norm at most 1; ``marginal`` only meets the first bound.
    Dense spectral norms are used up to ``dense_cap`` qubits, otherwise
    ``norm_bounds`` (``||H0||``, ``||Hc||`` upper bounds) must be supplied.
    """
    if T < 0:
        raise ValueError("T must be non-negative")
    if T == 0:
        return Convergence.OK
    nodes, weights = np.polynomial.legendre.leggauss(QUADRATURE_NODES)
    ts = 0.5 * T * (nodes + 1.0)
    ws = 0.5 * T * weights
    try:
        us = np.array([float(u(t)) for t in ts])
    except (TypeError, ValueError) as exc:
        raise ValueError("control is not numerically evaluable") from exc
    if not np.all(np.isfinite(us)):
        raise ValueError("control is not numerically evaluable")
    u_integral = float(ws @ us)

    if H0.N <= dense_cap:
        h0, hc = mpo_to_dense(H0, dense_cap), mpo_to_dense(Hc, dense_cap)
        norms = np.array([np.linalg.norm(h0 + x * hc, 2) for x in us])
        omega_norm = np.linalg.norm(T * h0 + u_integral * hc, 2)
    else:
        if norm_bounds is None:
            raise ValueError("norm_bounds are required above the dense cap")
        b0, bc = norm_bounds
        norms = b0 + np.abs(us) * bc
        omega_norm = T * b0 + abs(u_integral) * bc
    integral = float(ws @ norms)
    if integral >= math.pi:
        return Convergence.VIOLATED
    if omega_norm <= 1.0:
        return Convergence.OK
    return Convergence.MARGINAL


def _kron_chain(ops: list[np.ndarray]) -> np.ndarray:
    out = np.ones((1, 1), dtype=complex)
    for op in ops:
        out = np.kron(out, op)
    return out


def ising_free_dense(spec: IsingSpec) -> np.ndarray:
    """Dense ``J sum Z_i Z_{i+1}``, read off the computational-basis spins."""
    n = spec.N
    diag = np.zeros(2**n)
    bits = (np.arange(2**n)[:, None] >> np.arange(n - 1, -1, -1)) & 1
    spins = 1 - 2 * bits
    for i in range(n - 1):
        diag += spins[:, i] * spins[:, i + 1]
    return np.diag(spec.J * diag).astype(complex)


def ising_control_dense(N: int) -> np.ndarray:
    """Dense ``sum X_i``."""
    total = np.zeros((2**N, 2**N), dtype=complex)
    for i in range(N):
        ops = [IDENTITY] * N
        ops[i] = SIGMA_X
        total += _kron_chain(ops)
    return total
