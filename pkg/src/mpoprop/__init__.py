"""Matrix product operator propagators for controlled spin chains."""

from .evolution import (
    ControlFunction,
    EvolutionConfig,
    Letter,
    UnsupportedOrderError,
    WordSum,
    assemble_magnus_mpo,
    chebyshev_exp,
    dense_reference,
    infidelity,
    magnus_word_expansion,
    solve_tdse_dense,
    solve_tdse_mpo,
)
from .models import IsingSpec, convergence_check, ising_control_mpo, ising_free_mpo, target_generator_mpo
from .mpo import BondProfile, Mpo, mpo_add, mpo_dagger, mpo_mul, mpo_scale, mpo_to_dense, mpo_trace, trace_adjoint_product
from .qoc import ObjectivePolynomial, QocProblem, build_objective, minimize_objective, verify_solution
from .scalar_ring import Poly
from .trotter import TrotterConfig, trotter_evolution

__all__ = [
    "BondProfile",
    "ControlFunction",
    "EvolutionConfig",
    "IsingSpec",
    "Letter",
    "Mpo",
    "ObjectivePolynomial",
    "Poly",
    "QocProblem",
    "TrotterConfig",
    "UnsupportedOrderError",
    "WordSum",
    "assemble_magnus_mpo",
    "build_objective",
    "chebyshev_exp",
    "convergence_check",
    "dense_reference",
    "infidelity",
    "ising_control_mpo",
    "ising_free_mpo",
    "magnus_word_expansion",
    "minimize_objective",
    "mpo_add",
    "mpo_dagger",
    "mpo_mul",
    "mpo_scale",
    "mpo_to_dense",
    "mpo_trace",
    "solve_tdse_dense",
    "solve_tdse_mpo",
    "target_generator_mpo",
    "trace_adjoint_product",
    "trotter_evolution",
    "verify_solution",
]
