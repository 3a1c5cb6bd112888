"""Gate synthesis with symbolic control coefficients.

The control ``u(t, x) = sum_i x_i t^(i-1)`` is carried symbolically through
the Magnus word expansion and MPO assembly, so ``||Omega(T, x) - i Theta||_F^2``
comes out as an explicit polynomial in ``x``.  It can be exported for an
external global solver or minimized locally here.
"""

from __future__ import annotations

import math
from dataclasses import dataclass, field
from functools import cached_property
from pathlib import Path
from typing import Sequence

import numpy as np

from .evolution import (
    ControlFunction,
    EvolutionConfig,
    UnsupportedOrderError,
    assemble_magnus_mpo,
    dense_reference,
    infidelity,
    magnus_word_expansion,
    MAX_MAGNUS_ORDER,
)
from .models import IsingSpec, ising_control_mpo, ising_free_mpo, target_generator_mpo
from .mpo import DENSE_CAP, Mpo, mpo_scale, mpo_to_dense, trace_adjoint_product
from .scalar_ring import Poly

HERMITICITY_CHECK_MAX_N = 8


@dataclass(frozen=True)
class QocProblem:
    """Reach ``U* = exp(i Theta)`` at time ``T`` with an ``m``-coefficient polynomial control."""

    spec: IsingSpec
    m: int
    T: float
    magnus_order: int
    target: Mpo

    def __post_init__(self):
        if self.m < 1:
            raise ValueError("m must be at least 1")
        if not 1 <= self.magnus_order <= MAX_MAGNUS_ORDER:
            raise UnsupportedOrderError(f"Magnus order must be in 1..{MAX_MAGNUS_ORDER}")
        if self.target.N != self.spec.N:
            raise ValueError("target and Hamiltonian act on different chain lengths")
        if self.target.is_symbolic:
            raise ValueError("the target generator must be numeric")
        if self.spec.N <= HERMITICITY_CHECK_MAX_N:
            theta = mpo_to_dense(self.target)
            if np.max(np.abs(theta - theta.conj().T)) > 1e-10 * max(1.0, np.max(np.abs(theta))):
                raise ValueError("target generator is not Hermitian")

    @classmethod
    def cz(cls, N: int, m: int = 3, magnus_order: int = 2, T: float = math.pi / 4, J: float = 1.0) -> QocProblem:
        """Multi-qubit CZ: ``Theta = -(pi/4) sum Z_i Z_{i+1}``."""
        return cls(IsingSpec(N, J), m, T, magnus_order, target_generator_mpo(N, -math.pi / 4))

    @classmethod
    def forward(
        cls,
        N: int,
        x_bar: Sequence[float],
        magnus_order: int = 2,
        T: float = math.pi / 4,
        J: float = 1.0,
    ) -> QocProblem:
        """Target generated by a known control: ``Theta = -i Omega(T, x_bar)``, so ``x_bar`` is a zero."""
        spec = IsingSpec(N, J)
        ws = magnus_word_expansion(magnus_order, ControlFunction.numeric(x_bar), T)
        omega = assemble_magnus_mpo(ising_free_mpo(spec), ising_control_mpo(N), ws)
        return cls(spec, len(x_bar), T, magnus_order, mpo_scale(-1j, omega))

    @property
    def variables(self) -> tuple[str, ...]:
        return ControlFunction.symbolic(self.m).variables


class ObjectivePolynomial:
    """Real polynomial objective in ``x1..xm`` with vectorized value, gradient and Hessian."""

    def __init__(self, poly: Poly):
        if any(c.imag != 0 for c in poly.terms.values()):
            raise ValueError("objective coefficients must be real")
        self.poly = poly

    @property
    def variables(self) -> tuple[str, ...]:
        return self.poly.variables

    @property
    def m(self) -> int:
        return len(self.variables)

    @property
    def degree(self) -> int:
        return self.poly.degree()

    @staticmethod
    def _compile(p: Poly) -> tuple[np.ndarray, np.ndarray]:
        terms = p.terms
        exps = np.array(list(terms), dtype=int).reshape(len(terms), len(p.variables))
        coefs = np.array([c.real for c in terms.values()])
        return exps, coefs

    @cached_property
    def _value_form(self):
        return self._compile(self.poly)

    @cached_property
    def _gradient_forms(self):
        return [self._compile(self.poly.derivative(v)) for v in self.variables]

    @cached_property
    def _hessian_forms(self):
        forms = {}
        for i, vi in enumerate(self.variables):
            di = self.poly.derivative(vi)
            for j in range(i, self.m):
                forms[(i, j)] = self._compile(di.derivative(self.variables[j]))
        return forms

    @staticmethod
    def _eval(form, X: np.ndarray) -> np.ndarray:
        exps, coefs = form
        if not len(coefs):
            return np.zeros(X.shape[0])
        return np.prod(X[:, None, :] ** exps[None, :, :], axis=2) @ coefs

    def values(self, X: np.ndarray) -> np.ndarray:
        """Values at each row of ``X`` (shape ``(n, m)``)."""
        return self._eval(self._value_form, np.atleast_2d(np.asarray(X, dtype=float)))

    def value(self, x: Sequence[float]) -> float:
        return float(self.values(np.asarray(x, dtype=float)[None])[0])

    def gradient(self, x: Sequence[float]) -> np.ndarray:
        X = np.asarray(x, dtype=float)[None]
        return np.array([self._eval(f, X)[0] for f in self._gradient_forms])

    def hessian(self, x: Sequence[float]) -> np.ndarray:
        X = np.asarray(x, dtype=float)[None]
        H = np.zeros((self.m, self.m))
        for (i, j), f in self._hessian_forms.items():
            H[i, j] = H[j, i] = self._eval(f, X)[0]
        return H

    def __eq__(self, other) -> bool:
        return isinstance(other, ObjectivePolynomial) and self.poly == other.poly

    def __repr__(self) -> str:
        return f"ObjectivePolynomial({self.poly.to_expression()})"


def symbolic_difference_mpo(problem: QocProblem) -> Mpo:
    """``D(x) = Omega(T, x) - i Theta`` with polynomial entries in ``x``."""
    control = ControlFunction.symbolic(problem.m)
    ws = magnus_word_expansion(problem.magnus_order, control, problem.T)
    omega = assemble_magnus_mpo(ising_free_mpo(problem.spec), ising_control_mpo(problem.spec.N), ws)
    target = problem.target.with_variables(omega.variables)
    return omega + mpo_scale(-1j, target)


def build_objective(problem: QocProblem, drop_tol: float = 1e-12) -> ObjectivePolynomial:
    """``Tr(D^dagger D)`` as a polynomial in the control coefficients.

    Coefficients below ``drop_tol`` times the largest one are dropped; the
    imaginary parts must be rounding residue (checked against 1e-10).
    """
    D = symbolic_difference_mpo(problem)
    raw = trace_adjoint_product(D, D)
    terms = raw.terms
    scale = max((abs(c) for c in terms.values()), default=0.0)
    worst_imag = max((abs(c.imag) for c in terms.values()), default=0.0)
    if worst_imag > 1e-10 * max(1.0, scale):
        raise ArithmeticError(f"objective has imaginary residue {worst_imag:.3e}")
    kept = {m: c.real for m, c in terms.items() if abs(c) >= drop_tol * scale}
    return ObjectivePolynomial(Poly(raw.variables, kept))


def expression_path(path: str | Path) -> Path:
    path = Path(path)
    return path.with_name(path.name + ".expr.txt")


def export_polynomial(obj: ObjectivePolynomial, path: str | Path) -> Path:
    """Write the machine-readable polynomial to ``path`` and a readable form beside it."""
    path = Path(path)
    path.write_text(obj.poly.to_text())
    expression_path(path).write_text(obj.poly.to_expression(precision=17) + "\n")
    return path


def load_polynomial(path: str | Path) -> ObjectivePolynomial:
    return ObjectivePolynomial(Poly.from_text(Path(path).read_text()))


# -- local minimization ---------------------------------------------------------


@dataclass
class MinimizeResult:
    x: np.ndarray
    value: float
    converged: bool
    iterations: int
    seeds: int
    history: list[float] = field(default_factory=list, repr=False)


GRID_BUDGET = 200_000


def _grid_seeds(obj: ObjectivePolynomial, lo: float, hi: float, n_seeds: int, points: int) -> np.ndarray:
    m = obj.m
    if points**m > GRID_BUDGET:
        points = max(3, int(GRID_BUDGET ** (1.0 / m)))
    axis = np.linspace(lo, hi, points)
    grid = np.stack(np.meshgrid(*([axis] * m), indexing="ij"), axis=-1).reshape(-1, m)
    vals = obj.values(grid)
    best = np.argsort(vals, kind="stable")[:n_seeds]
    return grid[best]


def _descend(obj: ObjectivePolynomial, x0: np.ndarray, lo: float, hi: float, max_iter: int, grad_tol: float):
    x = np.clip(np.asarray(x0, dtype=float), lo, hi)
    f = obj.value(x)
    for it in range(max_iter):
        g = obj.gradient(x)
        if np.linalg.norm(g) < grad_tol:
            return x, f, True, it
        H = obj.hessian(x)
        step = np.linalg.lstsq(H, -g, rcond=1e-12)[0]
        if not g @ step < 0:
            step = -g
        alpha = 1.0
        while alpha > 1e-14:
            xn = np.clip(x + alpha * step, lo, hi)
            fn = obj.value(xn)
            if fn <= f + 1e-4 * (g @ (xn - x)):
                break
            alpha *= 0.5
        else:
            return x, f, False, it
        if np.array_equal(xn, x):
            return x, f, False, it
        x, f = xn, fn
    return x, f, np.linalg.norm(obj.gradient(x)) < grad_tol, max_iter


def _min_norm_polish(obj: ObjectivePolynomial, x: np.ndarray, f: float) -> tuple[np.ndarray, float]:
    # flat directions of a degenerate minimum: move to the point nearest the origin
    H = obj.hessian(x)
    evals, evecs = np.linalg.eigh(H)
    scale = max(np.max(np.abs(evals)), 1e-300)
    null = evecs[:, np.abs(evals) <= 1e-9 * scale]
    if not null.size:
        return x, f
    xp = x - null @ (null.T @ x)
    fp = obj.value(xp)
    if fp <= f + 1e-12 * max(1.0, abs(f)):
        return xp, fp
    return x, f


def minimize_objective(
    obj: ObjectivePolynomial,
    strategy: str = "grid+descent",
    box: tuple[float, float] = (-1.0, 1.0),
    *,
    n_starts: int = 8,
    grid_points: int = 21,
    seed: int = 0,
    max_iter: int = 500,
    grad_tol: float = 1e-10,
) -> MinimizeResult:
    """Multistart damped Newton with backtracking inside ``box``.

    Seeds come from the best points of a regular grid (``grid+descent``) or
    uniform random draws plus the box centre (``multistart-descent``).  Among
    seeds reaching the best value (to 1e-12), the smallest-norm point wins,
    and flat Hessian directions are projected out toward the origin.
    """
    lo, hi = box
    if strategy == "grid+descent":
        if obj.m > 6:
            raise ValueError("grid seeding supports at most 6 unknowns")
        seeds = _grid_seeds(obj, lo, hi, n_starts, grid_points)
    elif strategy == "multistart-descent":
        rng = np.random.default_rng(seed)
        seeds = np.vstack([np.full(obj.m, 0.5 * (lo + hi)), rng.uniform(lo, hi, size=(n_starts - 1, obj.m))])
    else:
        raise ValueError(f"unknown strategy {strategy!r}")

    runs = [_descend(obj, s, lo, hi, max_iter, grad_tol) for s in seeds]
    best_val = min(r[1] for r in runs)
    tied = [r for r in runs if r[1] <= best_val + 1e-12 * max(1.0, abs(best_val))]
    x, f, converged, iters = min(tied, key=lambda r: float(np.linalg.norm(r[0])))
    x, f = _min_norm_polish(obj, x, f)
    return MinimizeResult(
        x=x,
        value=f,
        converged=converged,
        iterations=iters,
        seeds=len(seeds),
        history=[r[1] for r in runs],
    )


def target_unitary(problem: QocProblem, cap: int = DENSE_CAP) -> np.ndarray:
    """``U* = exp(i Theta)``; for the CZ generator this is ``exp(-i pi/4 sum Z Z)``."""
    theta = mpo_to_dense(problem.target, cap)
    theta = 0.5 * (theta + theta.conj().T)
    evals, evecs = np.linalg.eigh(theta)
    return (evecs * np.exp(1j * evals)) @ evecs.conj().T


def verify_solution(problem: QocProblem, x: Sequence[float], tol: float = 1e-10, cap: int = DENSE_CAP) -> float:
    """Infidelity between ``U*`` and the near-exact propagator driven by the numeric control ``x``."""
    cfg = EvolutionConfig(problem.spec, ControlFunction.numeric([float(v) for v in x]), problem.T)
    U = dense_reference(cfg, tol=tol, cap=cap)
    return infidelity(target_unitary(problem, cap), U, cap)


def numeric_objective(problem: QocProblem, x: Sequence[float]) -> float:
    """``||Omega(T, x) - i Theta||_F^2`` through the fully numeric pipeline."""
    ws = magnus_word_expansion(problem.magnus_order, ControlFunction.numeric(x), problem.T)
    omega = assemble_magnus_mpo(ising_free_mpo(problem.spec), ising_control_mpo(problem.spec.N), ws)
    D = omega + mpo_scale(-1j, problem.target)
    return float(trace_adjoint_product(D, D).real)
