"""Propagators for ``H(t) = H0 + u(t) Hc``: truncated Magnus expansion + Chebyshev exponential.

The Magnus terms are reduced to a collected sum of operator words in the two
letters ``H0``/``Hc`` whose coefficients are exact iterated integrals of the
control over the time simplex.  Assembling those words with MPO products and
sums gives the Magnus generator as an MPO; a Bessel-weighted Chebyshev series
(rewritten in powers of the generator) then gives the propagator.

Chebyshev recursion ``T_{k+1} = 2 W T_k + T_{k-1}`` (note the plus sign) with
``W = i A`` anti-Hermitian equals ``i^k T_k(A)``, so ``J_0(1) + 2 sum_k J_k(1) T_k``
is the Jacobi-Anger series of ``exp(i A)`` and needs no sign correction.
"""

from __future__ import annotations

import enum
import itertools
import math
import warnings
from dataclasses import dataclass, field
from typing import Mapping, Sequence, Union

import numpy as np

from .models import (
    IsingSpec,
    ising_control_dense,
    ising_control_mpo,
    ising_free_dense,
    ising_free_mpo,
)
from .mpo import DENSE_CAP, BondProfile, DenseCapError, Mpo, mpo_identity, mpo_to_dense
from .scalar_ring import Poly, Scalar, bessel_j

MAX_MAGNUS_ORDER = 3
MAX_CHEBYSHEV_ORDER = 6

Operator = Union[Mpo, BondProfile]


class UnsupportedOrderError(ValueError):
    pass


class Letter(str, enum.Enum):
    FREE = "H0"
    CTRL = "Hc"


Word = tuple[Letter, ...]


# -- controls -------------------------------------------------------------------


@dataclass(frozen=True)
class ControlFunction:
    """Polynomial control ``u(t) = sum_i coeffs[i] t**i``.

    Coefficients are complex numbers (numeric control) or polynomials over a
    shared variable tuple (symbolic control, e.g. ``x1 + x2 t + x3 t^2``).
    """

    coeffs: tuple[Scalar, ...]

    def __post_init__(self):
        if not self.coeffs:
            raise ValueError("a control needs at least one coefficient")
        varsets = {c.variables for c in self.coeffs if isinstance(c, Poly)}
        if len(varsets) > 1:
            raise ValueError("symbolic coefficients must share one variable tuple")

    @classmethod
    def numeric(cls, values: Sequence[float]) -> ControlFunction:
        return cls(tuple(complex(v) for v in values))

    @classmethod
    def symbolic(cls, m: int, prefix: str = "x") -> ControlFunction:
        """``u(t, x) = sum_{i=1}^m x_i t^{i-1}``."""
        if m < 1:
            raise ValueError("m must be at least 1")
        names = tuple(f"{prefix}{i}" for i in range(1, m + 1))
        return cls(tuple(Poly.variable(v, names) for v in names))

    @property
    def variables(self) -> tuple[str, ...]:
        for c in self.coeffs:
            if isinstance(c, Poly):
                return c.variables
        return ()

    @property
    def is_symbolic(self) -> bool:
        return bool(self.variables)

    @property
    def degree(self) -> int:
        return len(self.coeffs) - 1

    def __call__(self, t: float) -> float:
        """Numeric value at ``t`` (real part; numeric controls only)."""
        if self.is_symbolic:
            raise TypeError("symbolic control: substitute values first")
        return float(sum(complex(c) * t**i for i, c in enumerate(self.coeffs)).real)

    def substitute(self, assignment: Mapping[str, float]) -> ControlFunction:
        return ControlFunction(
            tuple(c.evaluate(assignment) if isinstance(c, Poly) else complex(c) for c in self.coeffs)
        )

    def as_poly(self, time_var: str, variables: tuple[str, ...]) -> Poly:
        t = Poly.variable(time_var, variables)
        out = Poly(variables)
        power = Poly.constant(1.0, variables)
        for c in self.coeffs:
            if isinstance(c, Poly):
                c = c.with_variables(variables)
            out = out + power * c
            power = power * t
        return out


# -- word sums ------------------------------------------------------------------


def word_label(word: Word) -> str:
    return "".join(letter.value for letter in word)


def _word_key(word: Word) -> tuple:
    return (len(word), [letter.value for letter in word])


@dataclass(frozen=True)
class WordSum:
    """Collected linear combination of operator words with ring coefficients."""

    terms: dict[Word, Scalar] = field(default_factory=dict)

    def words(self) -> list[Word]:
        return sorted(self.terms, key=_word_key)

    def __len__(self) -> int:
        return len(self.terms)

    def __getitem__(self, word: Word) -> Scalar:
        return self.terms[word]

    def get(self, word: Word, default: Scalar = 0j) -> Scalar:
        return self.terms.get(word, default)

    @property
    def variables(self) -> tuple[str, ...]:
        for c in self.terms.values():
            if isinstance(c, Poly):
                return c.variables
        return ()

    def substitute(self, assignment: Mapping[str, float]) -> WordSum:
        out = {}
        for w, c in self.terms.items():
            val = c.evaluate(assignment) if isinstance(c, Poly) else complex(c)
            if val != 0:
                out[w] = val
        return WordSum(out)

    def max_coefficient_degree(self) -> int:
        return max((c.degree() if isinstance(c, Poly) else 0 for c in self.terms.values()), default=-1)


# Each Magnus term: prefactor and the signed time-index orderings of its
# nested commutators (index 0 is the latest time t1).
_MAGNUS_TERMS: dict[int, tuple[complex, list[tuple[int, tuple[int, ...]]]]] = {
    1: (-1j, [(1, (0,))]),
    2: (-0.5, [(1, (0, 1)), (-1, (1, 0))]),
    3: (
        1j / 6,
        [
            # [H1, [H2, H3]]
            (1, (0, 1, 2)),
            (-1, (0, 2, 1)),
            (-1, (1, 2, 0)),
            (1, (2, 1, 0)),
            # [[H1, H2], H3]
            (1, (0, 1, 2)),
            (-1, (1, 0, 2)),
            (-1, (2, 0, 1)),
            (1, (2, 1, 0)),
        ],
    ),
}

_TIME_VARS = ("_t1", "_t2", "_t3")


def _simplex_integral(f: Poly, k: int, T: Poly) -> Poly:
    """``int_0^T dt1 int_0^t1 dt2 ... f`` over the first ``k`` time variables."""
    variables = f.variables
    for j in range(k - 1, 0, -1):
        f = f.integrate(_TIME_VARS[j], 0.0, Poly.variable(_TIME_VARS[j - 1], variables))
    return f.integrate(_TIME_VARS[0], 0.0, T)


def magnus_word_expansion(order: int, u: ControlFunction, T: float | Poly) -> WordSum:
    """Collected word expansion of the Magnus generator truncated at ``order``.

    Commutators are expanded into words and like words are merged by integer
    multiplicity *before* integration, so structurally cancelling words
    (e.g. ``H0 H0 H0``) never appear.
    """
    if order not in _MAGNUS_TERMS:
        raise UnsupportedOrderError(f"Magnus order must be in 1..{MAX_MAGNUS_ORDER}, got {order}")
    params = list(u.variables)
    if isinstance(T, Poly):
        params += [v for v in T.variables if v not in params]
    params = tuple(params)
    if set(params) & set(_TIME_VARS):
        raise ValueError("control variables clash with internal time variables")
    variables = _TIME_VARS + params
    T_poly = T.with_variables(variables) if isinstance(T, Poly) else Poly.constant(T, variables)
    one = Poly.constant(1.0, variables)
    u_at = [u.as_poly(tv, variables) for tv in _TIME_VARS]

    terms: dict[Word, Scalar] = {}
    for k in range(1, order + 1):
        prefactor, orderings = _MAGNUS_TERMS[k]
        multiplicity: dict[tuple[Word, Word], int] = {}
        for assign in itertools.product((Letter.FREE, Letter.CTRL), repeat=k):
            for sign, seq in orderings:
                word = tuple(assign[j] for j in seq)
                multiplicity[(word, assign)] = multiplicity.get((word, assign), 0) + sign
        integrands: dict[Word, Poly] = {}
        for (word, assign), mult in multiplicity.items():
            if mult == 0:
                continue
            weight = one
            for tau, letter in enumerate(assign):
                if letter is Letter.CTRL:
                    weight = weight * u_at[tau]
            integrands[word] = integrands.get(word, Poly(variables)) + weight.scale(mult)
        for word in sorted(integrands, key=_word_key):
            f = integrands[word]
            if f.is_zero():
                continue
            coef = _simplex_integral(f, k, T_poly).scale(prefactor).with_variables(params)
            if coef.is_zero():
                continue
            terms[word] = coef if params else coef.constant_term()
    return WordSum(terms)


# -- MPO assembly -------------------------------------------------------------------


def assemble_magnus_mpo(H0: Operator, Hc: Operator, ws: WordSum) -> Operator:
    """Sum of ``coeff * (product of letters)`` built from MPO scale/mul/add.

    Also accepts :class:`BondProfile` operands, in which case only bond
    dimensions are propagated.
    """
    if H0.N != Hc.N:
        raise ValueError("H0 and Hc have different lengths")
    variables = ws.variables
    if not len(ws):
        # e.g. T = 0: the generator vanishes
        zero = 0.0 * H0
        return zero.with_variables(variables) if variables and isinstance(zero, Mpo) else zero
    letters = {Letter.FREE: H0, Letter.CTRL: Hc}
    products: dict[Word, Operator] = {}

    def product(word: Word) -> Operator:
        if word not in products:
            op = letters[word[0]] if len(word) == 1 else product(word[:-1]) @ letters[word[-1]]
            products[word] = op
        return products[word]

    total = None
    for word in ws.words():
        coef = ws[word]
        if variables and not isinstance(coef, Poly):
            coef = Poly.constant(coef, variables)
        term = coef * product(word)
        total = term if total is None else total + term
    return total


def chebyshev_power_coefficients(p: int) -> np.ndarray:
    """Coefficients ``c_k`` with ``J_0(1) I + 2 sum_{k<=p} J_k(1) T_k = sum_k c_k W^k``."""
    if p < 1:
        raise ValueError("Chebyshev order must be at least 1")
    polys = [np.zeros(p + 1), np.zeros(p + 1)]
    polys[0][0] = 1.0
    polys[1][1] = 1.0
    for k in range(1, p):
        nxt = np.zeros(p + 1)
        nxt[1:] = 2.0 * polys[k][:-1]
        nxt += polys[k - 1]
        polys.append(nxt)
    coeffs = bessel_j(0) * polys[0]
    for k in range(1, p + 1):
        coeffs = coeffs + 2.0 * bessel_j(k) * polys[k]
    return coeffs


def _identity_like(op: Operator) -> Operator:
    if isinstance(op, BondProfile):
        return BondProfile.ones(len(op.dims))
    return mpo_identity(op.N, op.variables)


def chebyshev_exp(omega: Operator, p: int) -> Operator:
    """``J_0(1) I + 2 sum_{k=1}^p J_k(1) T_k(omega)`` as an explicit sum of powers of ``omega``.

    Bond dimension per link is ``sum_{k=0}^p r**k``.
    """
    coeffs = chebyshev_power_coefficients(p)
    power = _identity_like(omega)
    result = complex(coeffs[0]) * power
    for k in range(1, p + 1):
        power = omega @ power
        result = result + complex(coeffs[k]) * power
    return result


# -- configuration and pipelines ------------------------------------------------------


@dataclass(frozen=True)
class EvolutionConfig:
    spec: IsingSpec
    control: ControlFunction
    T: float
    magnus_order: int = 1
    chebyshev_order: int = 3

    def __post_init__(self):
        if self.T < 0 or not math.isfinite(self.T):
            raise ValueError("T must be finite and non-negative")
        if not 1 <= self.magnus_order <= MAX_MAGNUS_ORDER:
            raise UnsupportedOrderError(f"Magnus order must be in 1..{MAX_MAGNUS_ORDER}")
        if not 1 <= self.chebyshev_order <= MAX_CHEBYSHEV_ORDER:
            raise UnsupportedOrderError(f"Chebyshev order must be in 1..{MAX_CHEBYSHEV_ORDER}")
        if self.control.is_symbolic:
            raise ValueError("evolution configs take numeric controls")

    @property
    def N(self) -> int:
        return self.spec.N

    def hamiltonians(self) -> tuple[Mpo, Mpo]:
        return ising_free_mpo(self.spec), ising_control_mpo(self.spec.N)

    def to_dict(self) -> dict:
        return {
            "N": self.spec.N,
            "J": self.spec.J,
            "control": [c.real for c in self.control.coeffs],
            "T": self.T,
            "magnus_order": self.magnus_order,
            "chebyshev_order": self.chebyshev_order,
        }

    @classmethod
    def from_dict(cls, obj: Mapping) -> EvolutionConfig:
        return cls(
            spec=IsingSpec(int(obj["N"]), float(obj.get("J", 1.0))),
            control=ControlFunction.numeric([float(c) for c in obj["control"]]),
            T=float(obj["T"]),
            magnus_order=int(obj.get("magnus_order", 1)),
            chebyshev_order=int(obj.get("chebyshev_order", 3)),
        )


def magnus_mpo(cfg: EvolutionConfig) -> Mpo:
    H0, Hc = cfg.hamiltonians()
    ws = magnus_word_expansion(cfg.magnus_order, cfg.control, cfg.T)
    return assemble_magnus_mpo(H0, Hc, ws)


def solve_tdse_mpo(cfg: EvolutionConfig) -> Mpo:
    """Propagator ``U(T)`` as an exact (untruncated) MPO."""
    return chebyshev_exp(magnus_mpo(cfg), cfg.chebyshev_order)


def magnus_dense(cfg: EvolutionConfig, cap: int = DENSE_CAP) -> np.ndarray:
    if cfg.N > cap:
        raise DenseCapError(f"N={cfg.N} exceeds the dense cap {cap}")
    letters = {Letter.FREE: ising_free_dense(cfg.spec), Letter.CTRL: ising_control_dense(cfg.N)}
    ws = magnus_word_expansion(cfg.magnus_order, cfg.control, cfg.T)
    omega = np.zeros_like(letters[Letter.FREE])
    for word in ws.words():
        prod = letters[word[0]]
        for letter in word[1:]:
            prod = prod @ letters[letter]
        omega += complex(ws[word]) * prod
    return omega


def solve_tdse_dense(cfg: EvolutionConfig, cap: int = DENSE_CAP) -> np.ndarray:
    """Same Magnus + Chebyshev propagator on ``2^N x 2^N`` matrices, via the three-term recursion."""
    omega = magnus_dense(cfg, cap)
    prev = np.eye(omega.shape[0], dtype=complex)
    cur = omega
    result = bessel_j(0) * prev + 2.0 * bessel_j(1) * cur
    for k in range(2, cfg.chebyshev_order + 1):
        prev, cur = cur, 2.0 * omega @ cur + prev
        result = result + 2.0 * bessel_j(k) * cur
    return result


class ReferenceConvergenceError(RuntimeError):
    pass


def _midpoint_propagator(h0: np.ndarray, hc: np.ndarray, u: ControlFunction, T: float, steps: int) -> np.ndarray:
    h = T / steps
    mids = (np.arange(steps) + 0.5) * h
    us = np.array([u(t) for t in mids])
    hams = h0[None] + us[:, None, None] * hc[None]
    evals, evecs = np.linalg.eigh(hams)
    phases = np.exp(-1j * h * evals)
    factors = np.einsum("kij,kj,klj->kil", evecs, phases, evecs.conj())
    U = np.eye(h0.shape[0], dtype=complex)
    for f in factors:
        U = f @ U
    return U


def dense_reference(
    cfg: EvolutionConfig, tol: float = 1e-10, cap: int = DENSE_CAP, max_halvings: int = 20
) -> np.ndarray:
    """Near-exact ``U(T)`` by exponential-midpoint stepping with step halving.

    Each step is an exact unitary; the step count doubles until successive
    results differ by less than ``tol`` (max-abs).
    """
    if cfg.N > cap:
        raise DenseCapError(f"N={cfg.N} exceeds the dense cap {cap}")
    h0, hc = ising_free_dense(cfg.spec), ising_control_dense(cfg.N)
    if cfg.T == 0:
        return np.eye(h0.shape[0], dtype=complex)
    steps = 1
    U = _midpoint_propagator(h0, hc, cfg.control, cfg.T, steps)
    for _ in range(max_halvings):
        steps *= 2
        refined = _midpoint_propagator(h0, hc, cfg.control, cfg.T, steps)
        if np.max(np.abs(refined - U)) < tol:
            return refined
        U = refined
    raise ReferenceConvergenceError(f"no convergence to {tol} after {max_halvings} halvings")


def infidelity(U_ref: np.ndarray, U_approx: np.ndarray | Mpo, cap: int = DENSE_CAP) -> float:
    """``1 - |Tr(U_ref^dagger U_approx)|^2 / d^2``; invariant under global phase.

    Rounding-level negatives (above -1e-8) are clamped to 0.  A truncated
    propagator that is not unitary can overshoot and give a genuinely
    negative value; that is returned unclamped with a warning, and error
    comparisons should use its magnitude.
    """
    if isinstance(U_approx, Mpo):
        U_approx = mpo_to_dense(U_approx, cap)
    U_ref = np.asarray(U_ref)
    U_approx = np.asarray(U_approx)
    if U_ref.shape != U_approx.shape or U_ref.ndim != 2 or U_ref.shape[0] != U_ref.shape[1]:
        raise ValueError(f"dimension mismatch: {U_ref.shape} vs {U_approx.shape}")
    d = U_ref.shape[0]
    eps = 1.0 - abs(np.vdot(U_ref, U_approx)) ** 2 / d**2
    if -1e-8 < eps < 0:
        return 0.0
    if eps < 0:
        warnings.warn(f"infidelity {eps:.3e} < 0: approximate propagator is not unitary", stacklevel=2)
    return float(eps)
