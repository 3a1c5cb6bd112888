"""First-order Trotterized propagator of the controlled Ising chain as an MPO.

One step is ``U_j = exp(-i dt H_X(dt j)) exp(-i dt H_Z^odd) exp(-i dt H_Z^even)``;
each factor is an exact product of commuting local exponentials with a small
MPO.  Bonds are numbered 1-indexed: odd bonds are (1,2), (3,4), ...
"""

from __future__ import annotations

import warnings
from dataclasses import dataclass

import numpy as np

from .evolution import ControlFunction
from .models import IDENTITY, SIGMA_Z, IsingSpec
from .mpo import Mpo, mpo_mul

DEFAULT_BOND_BUDGET = 4**7


class BondBudgetError(RuntimeError):
    pass


def rotation_x(phi: float) -> np.ndarray:
    """``exp(-i phi X)``."""
    c, s = np.cos(phi), np.sin(phi)
    return np.array([[c, -1j * s], [-1j * s, c]], dtype=complex)


def x_layer_mpo(N: int, phi: float) -> Mpo:
    """``prod_i exp(-i phi X_i)``, bond dimension 1."""
    g = rotation_x(phi)[:, :, None, None]
    return Mpo.from_arrays([g] * N)


def _left_core() -> np.ndarray:
    core = np.zeros((2, 2, 1, 2), dtype=complex)
    core[:, :, 0, 0] = IDENTITY
    core[:, :, 0, 1] = SIGMA_Z
    return core


def _right_core(theta: float) -> np.ndarray:
    core = np.zeros((2, 2, 2, 1), dtype=complex)
    core[:, :, 0, 0] = np.cos(theta) * IDENTITY
    core[:, :, 1, 0] = -1j * np.sin(theta) * SIGMA_Z
    return core


def zz_layer_mpo(N: int, parity: str, theta: float) -> Mpo:
    """``prod_{i in parity} exp(-i theta Z_i Z_{i+1})``; links alternate between 2 and 1."""
    if N < 2:
        raise ValueError("N must be at least 2")
    if parity not in ("odd", "even"):
        raise ValueError("parity must be 'odd' or 'even'")
    ident = IDENTITY[:, :, None, None]
    cores: list[np.ndarray] = []
    i = 0 if parity == "odd" else 1
    if parity == "even":
        cores.append(ident)
    while i < N:
        if i + 1 < N:
            cores += [_left_core(), _right_core(theta)]
            i += 2
        else:
            cores.append(ident)
            i += 1
    return Mpo.from_arrays(cores)


@dataclass(frozen=True)
class TrotterConfig:
    spec: IsingSpec
    control: ControlFunction
    T: float
    K: int
    bond_budget: int = DEFAULT_BOND_BUDGET

    def __post_init__(self):
        if self.K < 1:
            raise ValueError("K must be at least 1")
        if self.T <= 0:
            raise ValueError("T must be positive")
        if self.control.is_symbolic:
            raise ValueError("Trotterization needs a numeric control")
        if self.nominal_bond > self.bond_budget:
            warnings.warn(
                f"nominal bond 4^{self.K} = {self.nominal_bond} exceeds the budget {self.bond_budget}",
                stacklevel=2,
            )

    @property
    def dt(self) -> float:
        return self.T / self.K

    @property
    def nominal_bond(self) -> int:
        """Product of the per-layer maximum bonds (1 * 2 * 2 per step)."""
        return 4**self.K


def trotter_step_mpo(cfg: TrotterConfig, j: int) -> Mpo:
    """Step ``j`` (1-based); the control is sampled at ``t = dt * j``."""
    if not 1 <= j <= cfg.K:
        raise IndexError(f"step {j} outside 1..{cfg.K}")
    N, dt = cfg.spec.N, cfg.dt
    phi = cfg.control(dt * j) * dt
    theta = dt * cfg.spec.J
    x = x_layer_mpo(N, phi)
    odd = zz_layer_mpo(N, "odd", theta)
    even = zz_layer_mpo(N, "even", theta)
    return mpo_mul(x, mpo_mul(odd, even))


def trotter_evolution(cfg: TrotterConfig, *, override_budget: bool = False) -> Mpo:
    """Ordered product ``U_K ... U_1``."""
    if cfg.nominal_bond > cfg.bond_budget and not override_budget:
        raise BondBudgetError(
            f"4^{cfg.K} = {cfg.nominal_bond} exceeds the bond budget {cfg.bond_budget}"
        )
    U = trotter_step_mpo(cfg, 1)
    for j in range(2, cfg.K + 1):
        U = mpo_mul(trotter_step_mpo(cfg, j), U)
    return U
