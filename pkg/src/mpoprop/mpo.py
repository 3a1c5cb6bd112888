"""Matrix product operators over the scalar ring.

Site tensors are stored as a stack of complex arrays, one per monomial:
``data[k, s, s', l, r]`` multiplies the monomial ``monomials[k]``.  A numeric
MPO is the special case of a single, empty monomial ``()``; a symbolic MPO
carries a variable tuple and its site stacks hold the polynomial
coefficients.  No operation ever truncates a bond.

Dense index convention: site 1 is the most significant bit.
"""

from __future__ import annotations

import json
import numbers
from dataclasses import dataclass
from pathlib import Path
from typing import Iterable, Mapping, Sequence

import numpy as np

from .scalar_ring import Monomial, Poly, Scalar, VariableMismatchError

DENSE_CAP = 12
JSON_VERSION = 1

_I2 = np.eye(2, dtype=complex)


class MpoShapeError(ValueError):
    """Inconsistent bond or physical dimensions."""


class DenseCapError(ValueError):
    """Dense conversion requested above the qubit cap."""


def _mono_add(a: Monomial, b: Monomial) -> Monomial:
    return tuple(x + y for x, y in zip(a, b))


@dataclass(frozen=True, eq=False)
class SiteTensor:
    """One order-4 site tensor, stacked over monomials: ``data.shape == (K, 2, 2, l, r)``."""

    data: np.ndarray
    monomials: tuple[Monomial, ...]

    @property
    def left_dim(self) -> int:
        return self.data.shape[3]

    @property
    def right_dim(self) -> int:
        return self.data.shape[4]

    @property
    def n_elements(self) -> int:
        return int(self.data.size)


class Mpo:
    """A chain of N >= 2 site tensors with size-1 outer bonds.

    ``variables`` is ``None`` for numeric (complex) entries, otherwise the
    ordered variable tuple shared by every polynomial entry.
    """

    __slots__ = ("sites", "variables")

    def __init__(self, sites: Sequence[SiteTensor], variables: Iterable[str] | None = None):
        self.sites = tuple(sites)
        self.variables = None if variables is None else tuple(variables)
        self._validate()

    @classmethod
    def from_arrays(cls, arrays: Sequence[np.ndarray]) -> Mpo:
        """Numeric MPO from per-site arrays of shape ``(2, 2, l, r)``."""
        sites = [SiteTensor(np.asarray(a, dtype=complex)[None].copy(), ((),)) for a in arrays]
        return cls(sites)

    def _validate(self) -> None:
        n = len(self.sites)
        if n < 2:
            raise MpoShapeError("an MPO needs at least 2 sites")
        nvar = 0 if self.variables is None else len(self.variables)
        for i, site in enumerate(self.sites):
            d = site.data
            if d.ndim != 5 or d.shape[1:3] != (2, 2):
                raise MpoShapeError(f"site {i}: expected (K, 2, 2, l, r), got {d.shape}")
            if d.shape[0] != len(site.monomials) or d.shape[0] == 0:
                raise MpoShapeError(f"site {i}: monomial stack does not match data")
            if any(len(m) != nvar for m in site.monomials):
                raise MpoShapeError(f"site {i}: monomial length differs from variable count")
            if not np.all(np.isfinite(d)):
                raise ValueError(f"site {i}: non-finite entries")
        if self.sites[0].left_dim != 1 or self.sites[-1].right_dim != 1:
            raise MpoShapeError("outer bonds must have dimension 1")
        for i in range(n - 1):
            if self.sites[i].right_dim != self.sites[i + 1].left_dim:
                raise MpoShapeError(f"bond mismatch between sites {i} and {i + 1}")

    # -- inspection ---------------------------------------------------------

    @property
    def N(self) -> int:
        return len(self.sites)

    @property
    def is_symbolic(self) -> bool:
        return self.variables is not None

    @property
    def bond_profile(self) -> BondProfile:
        return BondProfile(tuple(s.right_dim for s in self.sites[:-1]))

    @property
    def bond_max(self) -> int:
        return max(self.bond_profile.dims)

    @property
    def element_count(self) -> int:
        """Stored scalar entries, ``sum_i 4 r_{i-1} r_i`` (times the monomial stack)."""
        return sum(s.n_elements for s in self.sites)

    def entry(self, i: int, s: int, sp: int, l: int, r: int) -> Scalar:
        site = self.sites[i]
        vals = site.data[:, s, sp, l, r]
        if self.variables is None:
            return complex(vals[0])
        return Poly(self.variables, dict(zip(site.monomials, vals)))

    def with_variables(self, variables: Iterable[str]) -> Mpo:
        """Promote to (or re-embed into) a symbolic MPO over ``variables``."""
        variables = tuple(variables)
        if self.variables == variables:
            return self
        old = () if self.variables is None else self.variables
        pos = {v: k for k, v in enumerate(variables)}
        sites = []
        for site in self.sites:
            monos = []
            for m in site.monomials:
                new = [0] * len(variables)
                for v, e in zip(old, m):
                    if e:
                        if v not in pos:
                            raise VariableMismatchError(f"cannot drop occurring variable {v!r}")
                        new[pos[v]] = e
                monos.append(tuple(new))
            sites.append(SiteTensor(site.data, tuple(monos)))
        return Mpo(sites, variables)

    def __eq__(self, other) -> bool:
        """Structural equality: same variables, shapes, monomial stacks and entries."""
        if not isinstance(other, Mpo):
            return NotImplemented
        return (
            self.variables == other.variables
            and self.N == other.N
            and all(
                a.monomials == b.monomials and a.data.shape == b.data.shape and np.array_equal(a.data, b.data)
                for a, b in zip(self.sites, other.sites)
            )
        )

    __hash__ = None

    # -- operator sugar -----------------------------------------------------

    def __add__(self, other: Mpo) -> Mpo:
        return mpo_add(self, other)

    def __sub__(self, other: Mpo) -> Mpo:
        return mpo_add(self, mpo_scale(-1.0, other))

    def __neg__(self) -> Mpo:
        return mpo_scale(-1.0, self)

    def __matmul__(self, other: Mpo) -> Mpo:
        return mpo_mul(self, other)

    def __rmul__(self, a) -> Mpo:
        if isinstance(a, (numbers.Number, Poly)):
            return mpo_scale(a, self)
        return NotImplemented

    __mul__ = __rmul__

    def __repr__(self) -> str:
        kind = "numeric" if self.variables is None else f"symbolic{self.variables}"
        return f"Mpo(N={self.N}, bonds={list(self.bond_profile.dims)}, {kind})"


@dataclass(frozen=True)
class BondProfile:
    """Internal bond dimensions of an N-site MPO (N - 1 links).

    Supports the same ``+``, ``@`` and scalar ``*`` algebra as :class:`Mpo`,
    acting on dimensions only, so expansion code can be run structurally.
    """

    dims: tuple[int, ...]

    def __post_init__(self):
        if not self.dims or any(int(d) < 1 for d in self.dims):
            raise MpoShapeError(f"invalid bond profile {self.dims}")

    @classmethod
    def ones(cls, n_links: int) -> BondProfile:
        return cls((1,) * n_links)

    @property
    def N(self) -> int:
        return len(self.dims) + 1

    @property
    def bond_max(self) -> int:
        return max(self.dims)

    @property
    def element_count(self) -> int:
        full = (1,) + self.dims + (1,)
        return sum(4 * a * b for a, b in zip(full[:-1], full[1:]))

    def _check(self, other: BondProfile) -> None:
        if len(self.dims) != len(other.dims):
            raise MpoShapeError("profiles of different length")

    def __add__(self, other: BondProfile) -> BondProfile:
        self._check(other)
        return BondProfile(tuple(a + b for a, b in zip(self.dims, other.dims)))

    def __matmul__(self, other: BondProfile) -> BondProfile:
        self._check(other)
        return BondProfile(tuple(a * b for a, b in zip(self.dims, other.dims)))

    def __rmul__(self, a) -> BondProfile:
        return self

    __mul__ = __rmul__


# -- constructors ---------------------------------------------------------------


def mpo_identity(N: int, variables: Iterable[str] | None = None) -> Mpo:
    if N < 2:
        raise MpoShapeError("N must be at least 2")
    ident = Mpo.from_arrays([_I2[:, :, None, None]] * N)
    return ident if variables is None else ident.with_variables(variables)


def _align(A: Mpo, B: Mpo) -> None:
    if A.N != B.N:
        raise MpoShapeError(f"length mismatch: {A.N} vs {B.N}")
    if A.variables != B.variables:
        raise VariableMismatchError(f"scalar variants differ: {A.variables} vs {B.variables}")


def _collect(stack: dict[Monomial, np.ndarray], symbolic: bool) -> SiteTensor:
    monos = list(stack)
    if symbolic:
        kept = [m for m in monos if np.any(stack[m])]
        monos = kept or monos[:1]
    data = np.stack([stack[m] for m in monos])
    return SiteTensor(data, tuple(monos))


# -- algebra ------------------------------------------------------------------


def mpo_scale(a: Scalar | numbers.Number, M: Mpo) -> Mpo:
    """Multiply by a scalar; only the first site changes."""
    if isinstance(a, Poly) and not a.variables:
        a = a.constant_term()
    if not isinstance(a, Poly):
        first = SiteTensor(M.sites[0].data * complex(a), M.sites[0].monomials)
        return Mpo((first,) + M.sites[1:], M.variables)
    if M.variables is None:
        M = M.with_variables(a.variables)
    elif M.variables != a.variables:
        raise VariableMismatchError(f"scalar over {a.variables}, MPO over {M.variables}")
    site = M.sites[0]
    stack: dict[Monomial, np.ndarray] = {}
    for ma, ca in a.terms.items():
        for k, mk in enumerate(site.monomials):
            m = _mono_add(ma, mk)
            contrib = ca * site.data[k]
            stack[m] = stack[m] + contrib if m in stack else contrib
    if not stack:
        zero = np.zeros_like(site.data[0])
        stack[(0,) * len(a.variables)] = zero
    return Mpo((_collect(stack, True),) + M.sites[1:], M.variables)


def mpo_add(A: Mpo, B: Mpo) -> Mpo:
    """Direct sum of the bond spaces; ``dense(A + B) == dense(A) + dense(B)``."""
    _align(A, B)
    n = A.N
    sites = []
    for i, (sa, sb) in enumerate(zip(A.sites, B.sites)):
        la, ra, lb, rb = sa.left_dim, sa.right_dim, sb.left_dim, sb.right_dim
        l = 1 if i == 0 else la + lb
        r = 1 if i == n - 1 else ra + rb
        l0 = 0 if i == 0 else la
        r0 = 0 if i == n - 1 else ra
        monos = list(dict.fromkeys(sa.monomials + sb.monomials))
        index = {m: k for k, m in enumerate(monos)}
        data = np.zeros((len(monos), 2, 2, l, r), dtype=complex)
        for k, m in enumerate(sa.monomials):
            data[index[m], :, :, :la, :ra] += sa.data[k]
        for k, m in enumerate(sb.monomials):
            data[index[m], :, :, l0 : l0 + lb, r0 : r0 + rb] += sb.data[k]
        sites.append(SiteTensor(data, tuple(monos)))
    return Mpo(sites, A.variables)


def mpo_mul(A: Mpo, B: Mpo) -> Mpo:
    """Operator product A·B: contract the shared physical index, Kronecker the bonds."""
    _align(A, B)
    sites = []
    for sa, sb in zip(A.sites, B.sites):
        l, r = sa.left_dim * sb.left_dim, sa.right_dim * sb.right_dim
        stack: dict[Monomial, np.ndarray] = {}
        for ka, ma in enumerate(sa.monomials):
            for kb, mb in enumerate(sb.monomials):
                block = np.einsum("smab,mtcd->stacbd", sa.data[ka], sb.data[kb]).reshape(2, 2, l, r)
                m = _mono_add(ma, mb)
                stack[m] = stack[m] + block if m in stack else block
        sites.append(_collect(stack, A.variables is not None))
    return Mpo(sites, A.variables)


def mpo_dagger(M: Mpo) -> Mpo:
    """Conjugate transpose; polynomial variables are treated as real."""
    sites = [SiteTensor(s.data.transpose(0, 2, 1, 3, 4).conj(), s.monomials) for s in M.sites]
    return Mpo(sites, M.variables)


def mpo_to_dense(M: Mpo, cap: int = DENSE_CAP) -> np.ndarray:
    """Contract a numeric MPO to a ``2**N x 2**N`` matrix."""
    if M.N > cap:
        raise DenseCapError(f"N={M.N} exceeds the dense cap {cap}")
    if M.variables is not None:
        raise TypeError("symbolic MPO: substitute values before densifying")
    acc = M.sites[0].data[0][:, :, 0, :]  # (out, in, r)
    for site in M.sites[1:]:
        w = site.data[0]
        acc = np.einsum("abl,stlr->asbtr", acc, w)
        d = acc.shape[0] * 2
        acc = acc.reshape(d, d, w.shape[3])
    return acc[:, :, 0]


def _contract_chain(
    mats: list[tuple[tuple[Monomial, ...], np.ndarray]], variables: tuple[str, ...] | None
) -> Scalar:
    # mats[i] = (monomials, stack (K, l, r)); multiply left to right per monomial product
    nvar = 0 if variables is None else len(variables)
    state: dict[Monomial, np.ndarray] = {(0,) * nvar: np.ones((1, 1), dtype=complex)}
    for monos, stack in mats:
        new: dict[Monomial, np.ndarray] = {}
        for mv, v in state.items():
            for k, mk in enumerate(monos):
                m = _mono_add(mv, mk)
                contrib = v @ stack[k]
                new[m] = new[m] + contrib if m in new else contrib
        state = new
    return _finish(state, variables)


def _finish(state: dict[Monomial, np.ndarray], variables) -> Scalar:
    if variables is None:
        return complex(sum(v.item() for v in state.values()))
    return Poly(variables, {m: v.item() for m, v in state.items()})


def mpo_trace(M: Mpo) -> Scalar:
    """Trace, contracted site by site without densifying."""
    mats = [(s.monomials, s.data[:, 0, 0] + s.data[:, 1, 1]) for s in M.sites]
    return _contract_chain(mats, M.variables)


def trace_adjoint_product(A: Mpo, B: Mpo) -> Scalar:
    """``Tr(A^dagger B)`` by sweeping a ``l_A x l_B`` boundary matrix across the sites.

    The per-site transfer matrix is never formed; each step costs
    ``O(d^2 (l_A l_B)(r_A + r_B) max(r_A, l_B))`` per monomial pair, so keep one
    operand's bond small when the other is large.
    """
    if A.N != B.N:
        raise MpoShapeError(f"length mismatch: {A.N} vs {B.N}")
    if A.variables != B.variables:
        if A.variables is None:
            A = A.with_variables(B.variables)
        elif B.variables is None:
            B = B.with_variables(A.variables)
        else:
            raise VariableMismatchError("scalar variants differ")
    nvar = 0 if A.variables is None else len(A.variables)
    state: dict[Monomial, np.ndarray] = {(0,) * nvar: np.ones((1, 1), dtype=complex)}
    for sa, sb in zip(A.sites, B.sites):
        a_conj = sa.data.conj()
        new: dict[Monomial, np.ndarray] = {}
        for mv, v in state.items():
            for ka, ma in enumerate(sa.monomials):
                # (la, lb) x (s, s', la, ra) -> (lb, s, s', ra)
                tmp = np.tensordot(v, a_conj[ka], axes=([0], [2]))
                mva = _mono_add(mv, ma)
                for kb, mb in enumerate(sb.monomials):
                    # (lb, s, s', ra) x (s, s', lb, rb) -> (ra, rb)
                    contrib = np.tensordot(tmp, sb.data[kb], axes=([0, 1, 2], [2, 0, 1]))
                    m = _mono_add(mva, mb)
                    new[m] = new[m] + contrib if m in new else contrib
        state = new
    return _finish(state, A.variables)


def substitute_mpo(M: Mpo, assignment: Mapping[str, numbers.Number]) -> Mpo:
    """Evaluate every polynomial entry at ``assignment``; returns a numeric MPO."""
    if M.variables is None:
        return M
    missing = [v for v in M.variables if v not in assignment]
    if missing:
        raise KeyError(f"no value given for {missing}")
    vals = np.array([complex(assignment[v]) for v in M.variables])
    arrays = []
    for site in M.sites:
        weights = np.array([np.prod(vals ** np.array(m)) for m in site.monomials])
        arrays.append(np.tensordot(weights, site.data, axes=(0, 0)))
    return Mpo.from_arrays(arrays)


# -- serialization ------------------------------------------------------------


def mpo_to_json(M: Mpo) -> dict:
    sites = []
    for s in M.sites:
        flat = s.data.reshape(-1)
        sites.append(
            {
                "left": s.left_dim,
                "right": s.right_dim,
                "monomials": [list(m) for m in s.monomials],
                "re": flat.real.tolist(),
                "im": flat.imag.tolist(),
            }
        )
    return {
        "format": "mpo",
        "version": JSON_VERSION,
        "N": M.N,
        "variables": None if M.variables is None else list(M.variables),
        "sites": sites,
    }


def mpo_from_json(obj: Mapping) -> Mpo:
    if obj.get("format") != "mpo" or obj.get("version") != JSON_VERSION:
        raise ValueError("not a version-1 MPO document")
    sites = []
    for rec in obj["sites"]:
        monos = tuple(tuple(m) for m in rec["monomials"])
        shape = (len(monos), 2, 2, rec["left"], rec["right"])
        data = (np.array(rec["re"], dtype=float) + 1j * np.array(rec["im"], dtype=float)).reshape(shape)
        sites.append(SiteTensor(data, monos))
    if len(sites) != obj["N"]:
        raise MpoShapeError("site count does not match N")
    variables = obj.get("variables")
    return Mpo(sites, None if variables is None else tuple(variables))


def save_mpo(M: Mpo, path: str | Path) -> None:
    Path(path).write_text(json.dumps(mpo_to_json(M)))


def load_mpo(path: str | Path) -> Mpo:
    return mpo_from_json(json.loads(Path(path).read_text()))
