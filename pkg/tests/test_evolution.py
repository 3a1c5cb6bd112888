import math
import time

import numpy as np
import pytest
from hypothesis import assume, given, settings
from hypothesis import strategies as st
from scipy.integrate import solve_ivp
from scipy.linalg import expm
from scipy.special import jv

from conftest import I2, SX, SZ, dense_h0, dense_hc, dense_magnus_terms
from mpoprop.evolution import (
    ControlFunction,
    EvolutionConfig,
    Letter,
    UnsupportedOrderError,
    _midpoint_propagator,
    assemble_magnus_mpo,
    chebyshev_exp,
    chebyshev_power_coefficients,
    dense_reference,
    infidelity,
    magnus_mpo,
    magnus_word_expansion,
    solve_tdse_dense,
    solve_tdse_mpo,
)
from mpoprop.models import IsingSpec, ising_control_mpo, ising_free_mpo
from mpoprop.mpo import BondProfile, Mpo, mpo_identity, mpo_scale, mpo_to_dense
from mpoprop.scalar_ring import Poly

H0L, HCL = Letter.FREE, Letter.CTRL
RAMP = (1.0, -1.0, 1.0)


def cfg(N=4, control=RAMP, T=0.125, n=1, p=3, J=1.0):
    return EvolutionConfig(IsingSpec(N, J), ControlFunction.numeric(control), T, n, p)


# -- quadrature oracles for the Magnus terms --------------------------------------------

@pytest.mark.parametrize("N", [2, 3, 4])
@pytest.mark.parametrize("control", [(0.0, 1.0), RAMP])
def test_magnus_against_quadrature(N, control):
    T = 0.2
    u = ControlFunction.numeric(control)
    o1, o2, o3 = dense_magnus_terms(N, u, T)
    H0, Hc = ising_free_mpo(IsingSpec(N)), ising_control_mpo(N)
    for n, expected in ((1, o1), (2, o1 + o2), (3, o1 + o2 + o3)):
        got = mpo_to_dense(assemble_magnus_mpo(H0, Hc, magnus_word_expansion(n, u, T)))
        assert np.max(np.abs(got - expected)) < 1e-6
    assert np.max(np.abs(o2)) > 1e-6  # the check is not vacuous


def test_first_order_constant_control():
    ws = magnus_word_expansion(1, ControlFunction.numeric([0.7]), 0.3)
    assert set(ws.words()) == {(H0L,), (HCL,)}
    assert ws[(H0L,)] == pytest.approx(-0.3j)
    assert ws[(HCL,)] == pytest.approx(-0.7 * 0.3j)


def test_second_order_constant_control_vanishes():
    ws = magnus_word_expansion(2, ControlFunction.numeric([0.7]), 0.3)
    assert abs(ws.get((H0L, HCL))) < 1e-15
    assert abs(ws.get((HCL, H0L))) < 1e-15


def test_second_order_linear_control_spot_value():
    T = 0.5
    ws = magnus_word_expansion(2, ControlFunction.numeric([0.0, 1.0]), T)
    c = T**3 / 12
    assert abs(c - 0.0104166666) < 1e-9
    assert ws[(H0L, HCL)] == pytest.approx(c, abs=1e-15)
    assert ws[(HCL, H0L)] == pytest.approx(-c, abs=1e-15)


def test_third_order_word_count():
    ws = magnus_word_expansion(3, ControlFunction.numeric(RAMP), 0.2)
    expected = {
        (H0L,), (HCL,), (H0L, HCL), (HCL, H0L),
        (H0L, H0L, HCL), (H0L, HCL, H0L), (HCL, H0L, H0L),
        (HCL, H0L, HCL), (H0L, HCL, HCL), (HCL, HCL, H0L),
    }  # fmt: skip
    assert set(ws.words()) == expected
    assert len(ws) == 10


def test_symbolic_time_horizon():
    vs = ("T",)
    ws = magnus_word_expansion(2, ControlFunction.numeric([0.0, 1.0]), Poly.variable("T", vs))
    assert ws[(H0L, HCL)] == Poly(vs, {(3,): 1 / 12})


def test_unsupported_order():
    with pytest.raises(UnsupportedOrderError):
        magnus_word_expansion(4, ControlFunction.numeric([1.0]), 0.1)
    with pytest.raises(UnsupportedOrderError):
        cfg(n=4)


@pytest.mark.parametrize("n, bond", [(1, 6), (2, 24), (3, 186)])
def test_assembled_bonds(n, bond):
    ws = magnus_word_expansion(n, ControlFunction.numeric(RAMP), 0.1)
    omega = assemble_magnus_mpo(BondProfile((3, 3, 3)), BondProfile((3, 3, 3)), ws)
    assert omega.bond_max == bond
    assert chebyshev_exp(omega, 1).bond_max == bond + 1


def test_chebyshev_bond_law():
    assert chebyshev_exp(BondProfile((6, 6, 6)), 3).bond_max == 1 + 6 + 36 + 216 == 259


# -- Chebyshev exponential ------------------------------------------------------------------


def _bessel_sum_dense(omega, p):
    prev, cur = np.eye(omega.shape[0], dtype=complex), omega
    acc = jv(0, 1) * prev + 2 * jv(1, 1) * cur
    for k in range(2, p + 1):
        prev, cur = cur, 2 * omega @ cur + prev
        acc = acc + 2 * jv(k, 1) * cur
    return acc


def test_scalar_phase():
    omega = mpo_scale(0.5j, mpo_identity(2))
    got = mpo_to_dense(chebyshev_exp(omega, 4))
    assert abs(got[0, 0] - np.exp(0.5j)) < 2e-4
    np.testing.assert_allclose(got, got[0, 0] * np.eye(4), atol=1e-15)


def test_scalar_phase_error_is_the_series_tail():
    # exact for any generator as p grows; the p=4 error is the tail sum_{k>4} 2 J_k(1) T_k(0.5i)
    lam = 0.5j
    t = [1.0, lam]
    for _ in range(2, 40):
        t.append(2 * lam * t[-1] + t[-2])
    tail = sum(2 * jv(k, 1) * t[k] for k in range(5, 40))
    got = mpo_to_dense(chebyshev_exp(mpo_scale(lam, mpo_identity(2)), 4))[0, 0]
    assert abs((np.exp(lam) - got) - tail) < 1e-14


def test_zero_generator():
    zero = mpo_scale(0.0, mpo_identity(3))
    assert np.max(np.abs(mpo_to_dense(chebyshev_exp(zero, 4)) - np.eye(8))) < 6e-4


@pytest.mark.parametrize("p", range(1, 7))
def test_power_basis_matches_recursion(p):
    rng = np.random.default_rng(p)
    arrays = [rng.normal(size=(2, 2, 1, 2)), rng.normal(size=(2, 2, 2, 2)), rng.normal(size=(2, 2, 2, 1))]
    omega = Mpo.from_arrays(arrays)
    dense = mpo_to_dense(omega)
    np.testing.assert_allclose(mpo_to_dense(chebyshev_exp(omega, p)), _bessel_sum_dense(dense, p), atol=1e-10)


def test_power_coefficients_first_orders():
    c = chebyshev_power_coefficients(2)
    np.testing.assert_allclose(c, [jv(0, 1) + 2 * jv(2, 1), 2 * jv(1, 1), 4 * jv(2, 1)], atol=1e-15)


def test_series_converges_to_exponential_for_antihermitian():
    rng = np.random.default_rng(3)
    a = rng.normal(size=(8, 8)) + 1j * rng.normal(size=(8, 8))
    omega = 0.25 * (a - a.conj().T) / np.linalg.norm(a - a.conj().T, 2)
    errs = [np.max(np.abs(_bessel_sum_dense(omega, p) - expm(omega))) for p in range(1, 7)]
    assert errs[-1] < 1e-5
    assert all(b <= a + 1e-15 for a, b in zip(errs[1:], errs[2:]))


# -- pipelines ----------------------------------------------------------------------------------


def test_horizon_infidelity():
    c = cfg(T=1 / 8)
    assert infidelity(dense_reference(c), solve_tdse_mpo(c)) < 1e-2


@pytest.mark.parametrize("p, bound", [(3, 6e-3), (4, 6e-4), (5, 6e-4)])
def test_zero_time(p, bound):
    U = mpo_to_dense(solve_tdse_mpo(cfg(N=3, T=0.0, p=p)))
    assert np.max(np.abs(U - np.eye(8))) <= bound


def test_free_evolution_closed_form():
    U = mpo_to_dense(solve_tdse_mpo(cfg(N=2, control=(0.0,), T=0.25, p=5)))
    expected = np.diag(np.exp(np.array([-0.25j, 0.25j, 0.25j, -0.25j])))
    assert np.max(np.abs(U - expected)) < 1e-4
    np.testing.assert_allclose(solve_tdse_dense(cfg(N=2, control=(0.0,), T=0.25, p=5)), U, atol=1e-12)


def test_dense_path_agrees_with_mpo():
    rng = np.random.default_rng(7)
    c = cfg(N=3, control=tuple(rng.uniform(-1, 1, 3)), T=0.1, p=2)
    assert np.max(np.abs(mpo_to_dense(solve_tdse_mpo(c)) - solve_tdse_dense(c))) < 1e-10


@settings(max_examples=15, deadline=None)
@given(
    st.integers(2, 4),
    st.integers(1, 2),
    st.integers(1, 3),
    st.lists(st.floats(-1, 1), min_size=1, max_size=3),
    st.floats(0.0, 0.2),
)
def test_paths_agree_property(N, n, p, control, T):
    c = cfg(N=N, control=tuple(control), T=T, n=n, p=p)
    ws = magnus_word_expansion(n, c.control, 0.1)
    profile = chebyshev_exp(assemble_magnus_mpo(BondProfile((3,) * (N - 1)), BondProfile((2,) * (N - 1)), ws), p)
    assume(profile.element_count <= 2 * 10**7)
    assert np.max(np.abs(mpo_to_dense(solve_tdse_mpo(c)) - solve_tdse_dense(c))) < 1e-10


def test_dense_runtime_grows_exponentially():
    ratios = []
    prev = None
    for N in range(8, 12):
        c = cfg(N=N, T=1 / (2 * N))
        best = math.inf
        for _ in range(2):
            start = time.perf_counter()
            solve_tdse_dense(c)
            best = min(best, time.perf_counter() - start)
        if prev is not None:
            ratios.append(best / prev)
        prev = best
    assert all(2 <= r <= 8 for r in ratios), ratios


def test_magnus_mpo_is_anti_hermitian():
    om = mpo_to_dense(magnus_mpo(cfg(N=3, n=3, T=0.1)))
    np.testing.assert_allclose(om, -om.conj().T, atol=1e-14)


# -- reference integrator -----------------------------------------------------------------


def test_reference_free_evolution_exact():
    c = cfg(N=3, control=(0.0,), T=0.4)
    np.testing.assert_allclose(dense_reference(c), expm(-0.4j * dense_h0(3)), atol=1e-13)


def test_reference_unitary():
    U = dense_reference(cfg())
    assert np.max(np.abs(U.conj().T @ U - np.eye(16))) < 1e-10


def _ivp_propagator(c):
    h0, hc = dense_h0(c.N), dense_hc(c.N)
    d = h0.shape[0]

    def rhs(t, y):
        return (-1j * (h0 + c.control(t) * hc) @ y.reshape(d, d)).ravel()

    sol = solve_ivp(rhs, (0, c.T), np.eye(d, dtype=complex).ravel(), method="DOP853", rtol=1e-13, atol=1e-14)
    return sol.y[:, -1].reshape(d, d)


def test_reference_matches_ode_solver():
    c = cfg(N=3, T=0.3)
    assert np.max(np.abs(dense_reference(c) - _ivp_propagator(c))) < 1e-9


def test_reference_step_halving_second_order():
    c = cfg(N=3, T=0.3)
    exact = _ivp_propagator(c)
    h0, hc = dense_h0(3), dense_hc(3)
    e1 = np.max(np.abs(_midpoint_propagator(h0, hc, c.control, c.T, 8) - exact))
    e2 = np.max(np.abs(_midpoint_propagator(h0, hc, c.control, c.T, 16) - exact))
    assert 3.0 <= e1 / e2 <= 5.0


def test_reference_at_zero_time():
    np.testing.assert_array_equal(dense_reference(cfg(T=0.0)), np.eye(16))


# -- infidelity ---------------------------------------------------------------------------------


def test_infidelity_basics():
    U = expm(-0.3j * dense_hc(2))
    assert abs(infidelity(U, U)) < 1e-15
    assert infidelity(np.eye(4), 1j * np.eye(4)) == 0.0
    assert infidelity(np.eye(4), np.kron(SX, I2)) == 1.0


def test_infidelity_shape_mismatch():
    with pytest.raises(ValueError):
        infidelity(np.eye(4), np.eye(8))
