"""Scalar rings for tensor entries: complex doubles and multivariate polynomials.

A :class:`Poly` is a finite map from exponent vectors (over a declared, ordered
tuple of variable names) to complex coefficients.  Values are immutable; every
operation returns a new, normalized polynomial (exact zeros dropped, nothing
else pruned).
"""

from __future__ import annotations

import cmath
import math
import numbers
from typing import Iterable, Mapping, Union

Monomial = tuple[int, ...]
Number = Union[int, float, complex]
Scalar = Union[complex, "Poly"]


class VariableMismatchError(ValueError):
    """Raised when two polynomials over different variable tuples are combined."""


def grlex_key(mono: Monomial) -> tuple:
    """Sort key: total degree first, then lexicographic with the first variable leading."""
    return (sum(mono), tuple(-e for e in mono))


class Poly:
    """Multivariate polynomial with complex coefficients.

    Args:
        variables: ordered variable names; every monomial is an exponent
            vector of this length.
        terms: mapping monomial -> coefficient.  Zero coefficients are dropped.

    Example:
        >>> t = Poly.variable("t", ("t",))
        >>> (t * t).terms
        {(2,): (1+0j)}
    """

    __slots__ = ("variables", "_terms")

    def __init__(self, variables: Iterable[str], terms: Mapping[Monomial, Number] | None = None):
        self.variables = tuple(variables)
        if len(set(self.variables)) != len(self.variables):
            raise ValueError(f"duplicate variable names in {self.variables}")
        k = len(self.variables)
        clean: dict[Monomial, complex] = {}
        for mono, coef in (terms or {}).items():
            mono = tuple(int(e) for e in mono)
            if len(mono) != k:
                raise ValueError(f"monomial {mono} does not match {k} variables")
            if any(e < 0 for e in mono):
                raise ValueError(f"negative exponent in {mono}")
            coef = complex(coef)
            if not cmath.isfinite(coef):
                raise ValueError(f"non-finite coefficient {coef}")
            if coef != 0:
                clean[mono] = coef
        self._terms = clean

    # -- constructors -------------------------------------------------------

    @classmethod
    def constant(cls, value: Number, variables: Iterable[str] = ()) -> Poly:
        variables = tuple(variables)
        return cls(variables, {(0,) * len(variables): value})

    @classmethod
    def variable(cls, name: str, variables: Iterable[str]) -> Poly:
        variables = tuple(variables)
        mono = tuple(1 if v == name else 0 for v in variables)
        if sum(mono) != 1:
            raise VariableMismatchError(f"{name!r} is not one of {variables}")
        return cls(variables, {mono: 1.0})

    @classmethod
    def _raw(cls, variables: tuple[str, ...], terms: dict[Monomial, complex]) -> Poly:
        # trusted fast path: terms already validated and zero-free
        p = cls.__new__(cls)
        p.variables = variables
        p._terms = {m: c for m, c in terms.items() if c != 0}
        return p

    # -- inspection ---------------------------------------------------------

    @property
    def terms(self) -> dict[Monomial, complex]:
        """Copy of the term map in graded-lex order."""
        return {m: self._terms[m] for m in sorted(self._terms, key=grlex_key)}

    def __len__(self) -> int:
        return len(self._terms)

    def is_zero(self) -> bool:
        return not self._terms

    def is_constant(self) -> bool:
        return all(sum(m) == 0 for m in self._terms)

    def constant_term(self) -> complex:
        return self._terms.get((0,) * len(self.variables), 0j)

    def degree(self) -> int:
        """Total degree; -1 for the zero polynomial."""
        return max((sum(m) for m in self._terms), default=-1)

    def degree_in(self, var: str) -> int:
        i = self._index(var)
        return max((m[i] for m in self._terms), default=-1)

    def _index(self, var: str) -> int:
        try:
            return self.variables.index(var)
        except ValueError:
            raise VariableMismatchError(f"{var!r} is not one of {self.variables}") from None

    # -- ring operations ----------------------------------------------------

    def _coerce(self, other) -> Poly | None:
        if isinstance(other, Poly):
            if other.variables != self.variables:
                raise VariableMismatchError(
                    f"variable sets differ: {self.variables} vs {other.variables}"
                )
            return other
        if isinstance(other, numbers.Number):
            return Poly.constant(other, self.variables)
        return None

    def __add__(self, other):
        other = self._coerce(other)
        if other is None:
            return NotImplemented
        out = dict(self._terms)
        for m, c in other._terms.items():
            out[m] = out.get(m, 0j) + c
        return Poly._raw(self.variables, out)

    __radd__ = __add__

    def __neg__(self) -> Poly:
        return Poly._raw(self.variables, {m: -c for m, c in self._terms.items()})

    def __sub__(self, other):
        other = self._coerce(other)
        if other is None:
            return NotImplemented
        return self + (-other)

    def __rsub__(self, other):
        other = self._coerce(other)
        if other is None:
            return NotImplemented
        return other + (-self)

    def __mul__(self, other):
        if isinstance(other, numbers.Number):
            return self.scale(other)
        other = self._coerce(other)
        if other is None:
            return NotImplemented
        out: dict[Monomial, complex] = {}
        for ma, ca in self._terms.items():
            for mb, cb in other._terms.items():
                m = tuple(x + y for x, y in zip(ma, mb))
                out[m] = out.get(m, 0j) + ca * cb
        return Poly._raw(self.variables, out)

    __rmul__ = __mul__

    def scale(self, a: Number) -> Poly:
        a = complex(a)
        return Poly._raw(self.variables, {m: a * c for m, c in self._terms.items()})

    def __pow__(self, k: int) -> Poly:
        if not isinstance(k, int) or k < 0:
            raise ValueError("only non-negative integer powers are supported")
        result = Poly.constant(1.0, self.variables)
        base = self
        while k:
            if k & 1:
                result = result * base
            base = base * base
            k >>= 1
        return result

    def __eq__(self, other) -> bool:
        if isinstance(other, numbers.Number):
            other = Poly.constant(other, self.variables)
        if not isinstance(other, Poly):
            return NotImplemented
        return self.variables == other.variables and self._terms == other._terms

    __hash__ = None

    def conj(self) -> Poly:
        """Conjugate the coefficients; variables are treated as real."""
        return Poly._raw(self.variables, {m: c.conjugate() for m, c in self._terms.items()})

    # -- calculus and substitution -----------------------------------------

    def derivative(self, var: str) -> Poly:
        i = self._index(var)
        out: dict[Monomial, complex] = {}
        for m, c in self._terms.items():
            if m[i]:
                dm = m[:i] + (m[i] - 1,) + m[i + 1 :]
                out[dm] = out.get(dm, 0j) + c * m[i]
        return Poly._raw(self.variables, out)

    def antiderivative(self, var: str) -> Poly:
        i = self._index(var)
        out: dict[Monomial, complex] = {}
        for m, c in self._terms.items():
            am = m[:i] + (m[i] + 1,) + m[i + 1 :]
            out[am] = c / (m[i] + 1)
        return Poly._raw(self.variables, out)

    def substitute(self, var: str, value: Poly | Number) -> Poly:
        """Replace ``var`` by ``value`` (a number or a polynomial over the same variables)."""
        i = self._index(var)
        if not isinstance(value, Poly):
            value = Poly.constant(value, self.variables)
        elif value.variables != self.variables:
            raise VariableMismatchError("substituted value must share the variable tuple")
        powers: dict[int, Poly] = {0: Poly.constant(1.0, self.variables)}
        out = Poly(self.variables)
        # group by exponent of var so each power of value is built once
        groups: dict[int, dict[Monomial, complex]] = {}
        for m, c in self._terms.items():
            rest = m[:i] + (0,) + m[i + 1 :]
            groups.setdefault(m[i], {})[rest] = c
        for k in sorted(groups):
            for j in range(1, k + 1):
                if j not in powers:
                    powers[j] = powers[j - 1] * value
            out = out + Poly._raw(self.variables, groups[k]) * powers[k]
        return out

    def integrate(self, var: str, lower: Poly | Number, upper: Poly | Number) -> Poly:
        """Definite integral over ``var``; the bounds must not contain ``var``."""
        self._index(var)
        for bound in (lower, upper):
            if isinstance(bound, Poly) and bound.degree_in(var) > 0:
                raise ValueError(f"integration bound depends on {var!r}")
        anti = self.antiderivative(var)
        return anti.substitute(var, upper) - anti.substitute(var, lower)

    def evaluate(self, assignment: Mapping[str, Number]) -> complex:
        """Evaluate at a point; ``assignment`` must cover every variable."""
        missing = [v for v in self.variables if v not in assignment]
        if missing:
            raise KeyError(f"no value given for {missing}")
        vals = [complex(assignment[v]) for v in self.variables]
        total = 0j
        for m in sorted(self._terms, key=grlex_key):
            term = self._terms[m]
            for x, e in zip(vals, m):
                if e:
                    term *= x**e
            total += term
        return total

    def with_variables(self, variables: Iterable[str]) -> Poly:
        """Re-express over another variable tuple.

        Variables may be added or reordered; a variable can only be dropped
        when it does not occur in any term.
        """
        variables = tuple(variables)
        pos = {v: i for i, v in enumerate(variables)}
        out: dict[Monomial, complex] = {}
        for m, c in self._terms.items():
            new = [0] * len(variables)
            for v, e in zip(self.variables, m):
                if e:
                    if v not in pos:
                        raise VariableMismatchError(f"cannot drop {v!r}: it occurs in the polynomial")
                    new[pos[v]] = e
            out[tuple(new)] = c
        return Poly._raw(variables, out)

    # -- text -----------------------------------------------------------------

    def to_text(self) -> str:
        """Serialize: header of variable names, then ``re im e1 .. ek`` per monomial."""
        lines = [" ".join(self.variables)]
        for m, c in self.terms.items():
            fields = [repr(c.real), repr(c.imag)] + [str(e) for e in m]
            lines.append(" ".join(fields))
        return "\n".join(lines) + "\n"

    @classmethod
    def from_text(cls, text: str) -> Poly:
        lines = text.split("\n")
        variables = tuple(lines[0].split())
        terms: dict[Monomial, complex] = {}
        for line in lines[1:]:
            if not line.strip():
                continue
            fields = line.split()
            if len(fields) != 2 + len(variables):
                raise ValueError(f"malformed polynomial line: {line!r}")
            mono = tuple(int(e) for e in fields[2:])
            if mono in terms:
                raise ValueError(f"duplicate monomial {mono}")
            terms[mono] = complex(float(fields[0]), float(fields[1]))
        return cls(variables, terms)

    def to_expression(self, precision: int = 12) -> str:
        """Human-readable form, e.g. ``(2+0j)*x1^2 + (-1+0j)*x2``."""
        if not self._terms:
            return "0"
        parts = []
        for m, c in self.terms.items():
            if c.imag == 0:
                coef = f"{c.real:.{precision}g}"
            else:
                coef = f"({c.real:.{precision}g}{c.imag:+.{precision}g}j)"
            factors = [v if e == 1 else f"{v}^{e}" for v, e in zip(self.variables, m) if e]
            parts.append("*".join([coef] + factors))
        return " + ".join(parts)

    def __repr__(self) -> str:
        return f"Poly({self.variables}, {self.to_expression()})"


def poly_integrate(p: Poly, var: str, lower: Poly | Number, upper: Poly | Number) -> Poly:
    return p.integrate(var, lower, upper)


def poly_eval(p: Poly, assignment: Mapping[str, Number]) -> complex:
    return p.evaluate(assignment)


def scalar_eval(a: Scalar, assignment: Mapping[str, Number]) -> complex:
    """Evaluate a ring element; complex values pass through unchanged."""
    if isinstance(a, Poly):
        return a.evaluate(assignment)
    return complex(a)


def bessel_j(k: int) -> float:
    """Bessel function of the first kind at argument 1, ``J_k(1)``.

    Summed from the power series until a term is negligible relative to the sum.
    """
    if not isinstance(k, int) or k < 0:
        raise ValueError("order must be a non-negative integer")
    if k > 30:
        raise ValueError("orders above 30 are below double precision at x=1")
    term = 1.0 / (math.factorial(k) * 2.0**k)
    total = 0.0
    m = 0
    while True:
        total += term
        if abs(term) <= 1e-17 * abs(total):
            return total
        m += 1
        term = -term / (4.0 * m * (m + k))
