import math

import numpy as np
import pytest
from scipy.linalg import expm

from conftest import I2, SX, SZ, dense_h0, dense_hc
from mpoprop.evolution import ControlFunction
from mpoprop.models import (
    Convergence,
    IsingSpec,
    convergence_check,
    ising_control_dense,
    ising_control_mpo,
    ising_free_dense,
    ising_free_mpo,
    ising_norm_bounds,
    max_horizon,
    target_generator_mpo,
)
from mpoprop.mpo import mpo_to_dense, mpo_trace


def test_free_n2():
    np.testing.assert_array_equal(mpo_to_dense(ising_free_mpo(IsingSpec(2))), np.diag([1, -1, -1, 1]))


def test_free_n3_spectrum():
    evals = np.round(np.linalg.eigvalsh(mpo_to_dense(ising_free_mpo(IsingSpec(3)))), 12)
    values, counts = np.unique(evals, return_counts=True)
    assert values.tolist() == [-2, 0, 2]
    assert counts.tolist() == [2, 4, 2]


def test_profiles():
    assert ising_free_mpo(IsingSpec(5)).bond_profile.dims == (3, 3, 3, 3)
    assert ising_control_mpo(4).bond_profile.dims == (2, 2, 2)


@pytest.mark.parametrize("N", [2, 3, 5])
@pytest.mark.parametrize("J", [1.0, -0.7])
def test_against_kronecker(N, J):
    np.testing.assert_allclose(mpo_to_dense(ising_free_mpo(IsingSpec(N, J))), dense_h0(N, J), atol=1e-14)
    np.testing.assert_allclose(mpo_to_dense(ising_control_mpo(N)), dense_hc(N), atol=1e-14)
    np.testing.assert_allclose(ising_free_dense(IsingSpec(N, J)), dense_h0(N, J), atol=1e-14)
    np.testing.assert_allclose(ising_control_dense(N), dense_hc(N), atol=1e-14)


def test_control_n2_and_trace():
    np.testing.assert_allclose(mpo_to_dense(ising_control_mpo(2)), np.kron(SX, I2) + np.kron(I2, SX))
    for N in (2, 4, 6):
        assert abs(mpo_trace(ising_control_mpo(N))) == 0


def test_target_generator():
    theta = mpo_to_dense(target_generator_mpo(2, -math.pi / 4))
    np.testing.assert_allclose(theta, -math.pi / 4 * np.diag([1, -1, -1, 1]))
    theta3 = mpo_to_dense(target_generator_mpo(3, -math.pi / 4))
    assert np.array_equal(theta3, theta3.conj().T)
    U = expm(1j * theta3)
    assert np.max(np.abs(U @ U.conj().T - np.eye(8))) < 1e-12


@pytest.mark.parametrize("N, expected", [(4, 0.125), (10, 0.05), (2, 0.25)])
def test_max_horizon(N, expected):
    assert max_horizon(IsingSpec(N)) == expected


def test_rejects_short_chain():
    with pytest.raises(ValueError):
        IsingSpec(1)


def _hs(N, J=1.0):
    spec = IsingSpec(N, J)
    return ising_free_mpo(spec), ising_control_mpo(N)


def test_convergence_ok_at_horizon():
    H0, Hc = _hs(4)
    u = ControlFunction.numeric([1, -1, 1])
    assert convergence_check(H0, Hc, u, 0.125) is Convergence.OK


def test_convergence_zero_horizon():
    H0, Hc = _hs(4)
    assert convergence_check(H0, Hc, ControlFunction.numeric([1]), 0.0) is Convergence.OK


def test_convergence_violated():
    H0, Hc = _hs(2)
    assert convergence_check(H0, Hc, ControlFunction.numeric([0]), 4.0) is Convergence.VIOLATED


def test_convergence_marginal_band():
    # integral of ||H0|| = T < pi but ||T H0|| > 1
    H0, Hc = _hs(2)
    assert convergence_check(H0, Hc, ControlFunction.numeric([0]), 2.0) is Convergence.MARGINAL


def test_convergence_bounds_path_is_conservative():
    spec = IsingSpec(4)
    H0, Hc = _hs(4)
    u = ControlFunction.numeric([1, -1, 1])
    assert convergence_check(H0, Hc, u, 0.125, dense_cap=2, norm_bounds=ising_norm_bounds(spec)) is Convergence.OK
    with pytest.raises(ValueError):
        convergence_check(H0, Hc, u, 0.125, dense_cap=2)


def test_norm_bounds_dominate_dense_norms():
    for N in (2, 3, 5):
        b0, bc = ising_norm_bounds(IsingSpec(N))
        assert np.linalg.norm(dense_h0(N), 2) <= b0 + 1e-12
        assert np.linalg.norm(dense_hc(N), 2) <= bc + 1e-12
