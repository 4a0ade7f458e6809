"""Sparse multivariate polynomial arithmetic over a global variable index space.

Variables are identified by nonnegative integers.  Monomial exponents are kept
sparse (only nonzero powers stored) and polynomials are maps from exponent to
coefficient.  Everything here is immutable and pure, so values can be shared
freely across threads.
"""

from __future__ import annotations

import math
from itertools import combinations_with_replacement
from typing import Dict, Iterable, List, Mapping, Sequence, Tuple, Union

import numpy as np

# Coefficients smaller than this (after cancellation) are dropped so that
# spurious monomials never reach the coefficient-matching rows of the SDP.
COEFF_DROP_TOL = 1e-14


class Exponent:
    """A monomial exponent: sparse map from variable index to positive power."""

    __slots__ = ("_pairs", "_hash")

    def __init__(self, pairs: Union[Mapping[int, int], Iterable[Tuple[int, int]]] = ()):
        if isinstance(pairs, Mapping):
            items = pairs.items()
        else:
            items = list(pairs)
        cleaned = []
        seen = set()
        for var, power in items:
            var = int(var)
            power = int(power)
            if power == 0:
                continue
            if power < 0:
                raise ValueError(f"negative power {power} for variable {var}")
            if var < 0:
                raise ValueError(f"negative variable index {var}")
            if var in seen:
                raise ValueError(f"duplicate variable {var} in exponent")
            seen.add(var)
            cleaned.append((var, power))
        cleaned.sort()
        self._pairs = tuple(cleaned)
        self._hash = hash(self._pairs)

    @property
    def pairs(self) -> Tuple[Tuple[int, int], ...]:
        return self._pairs

    def degree(self) -> int:
        return sum(p for _, p in self._pairs)

    def variables(self) -> Tuple[int, ...]:
        return tuple(v for v, _ in self._pairs)

    def power(self, var: int) -> int:
        for v, p in self._pairs:
            if v == var:
                return p
        return 0

    def is_constant(self) -> bool:
        return not self._pairs

    def __mul__(self, other: "Exponent") -> "Exponent":
        merged: Dict[int, int] = dict(self._pairs)
        for v, p in other._pairs:
            merged[v] = merged.get(v, 0) + p
        out = Exponent.__new__(Exponent)
        out._pairs = tuple(sorted(merged.items()))
        out._hash = hash(out._pairs)
        return out

    def sort_key(self) -> Tuple[int, Tuple[Tuple[int, int], ...]]:
        # Graded ordering: degree first, then by the variable-index sequence.
        return (self.degree(), self._pairs)

    def __eq__(self, other) -> bool:
        return isinstance(other, Exponent) and self._pairs == other._pairs

    def __hash__(self) -> int:
        return self._hash

    def __lt__(self, other: "Exponent") -> bool:
        return self.sort_key() < other.sort_key()

    def __repr__(self) -> str:
        return f"Exponent({list(self._pairs)!r})"

    def to_text(self) -> str:
        if not self._pairs:
            return "1"
        return " ".join(
            f"x{v}" if p == 1 else f"x{v}^{p}" for v, p in self._pairs
        )


ONE = Exponent()

# A monomial basis is an ordered, duplicate-free tuple of exponents.
ExponentSet = Tuple[Exponent, ...]


class Polynomial:
    """Sparse polynomial: map from :class:`Exponent` to a float coefficient."""

    __slots__ = ("_terms",)

    def __init__(self, terms: Union[Mapping[Exponent, float], Iterable[Tuple[Exponent, float]]] = ()):
        if isinstance(terms, Mapping):
            items = terms.items()
        else:
            items = terms
        acc: Dict[Exponent, float] = {}
        for exp, coeff in items:
            acc[exp] = acc.get(exp, 0.0) + float(coeff)
        self._terms = {e: c for e, c in acc.items() if abs(c) > COEFF_DROP_TOL}

    # -- constructors ------------------------------------------------------

    @staticmethod
    def zero() -> "Polynomial":
        return Polynomial()

    @staticmethod
    def constant(value: float) -> "Polynomial":
        return Polynomial({ONE: value})

    @staticmethod
    def variable(var: int) -> "Polynomial":
        return Polynomial({Exponent([(var, 1)]): 1.0})

    @staticmethod
    def monomial(exp: Exponent, coeff: float = 1.0) -> "Polynomial":
        return Polynomial({exp: coeff})

    @staticmethod
    def affine(coeffs: Mapping[int, float], const: float = 0.0) -> "Polynomial":
        terms = {Exponent([(v, 1)]): c for v, c in coeffs.items()}
        terms[ONE] = const
        return Polynomial(terms)

    # -- inspection --------------------------------------------------------

    def items(self) -> List[Tuple[Exponent, float]]:
        """Terms in canonical (graded) order."""
        return sorted(self._terms.items(), key=lambda t: t[0].sort_key())

    def coeff(self, exp: Exponent) -> float:
        return self._terms.get(exp, 0.0)

    def support(self) -> Tuple[Exponent, ...]:
        return tuple(e for e, _ in self.items())

    def is_zero(self) -> bool:
        return not self._terms

    def degree(self) -> int:
        if not self._terms:
            return 0
        return max(e.degree() for e in self._terms)

    def variables(self) -> Tuple[int, ...]:
        vs: set = set()
        for e in self._terms:
            vs.update(e.variables())
        return tuple(sorted(vs))

    def max_abs_coeff(self) -> float:
        if not self._terms:
            return 0.0
        return max(abs(c) for c in self._terms.values())

    def __len__(self) -> int:
        return len(self._terms)

    # -- arithmetic --------------------------------------------------------

    def __add__(self, other: Union["Polynomial", float, int]) -> "Polynomial":
        if isinstance(other, (int, float)):
            other = Polynomial.constant(other)
        acc = dict(self._terms)
        for e, c in other._terms.items():
            acc[e] = acc.get(e, 0.0) + c
        return Polynomial(acc)

    __radd__ = __add__

    def __neg__(self) -> "Polynomial":
        return Polynomial({e: -c for e, c in self._terms.items()})

    def __sub__(self, other: Union["Polynomial", float, int]) -> "Polynomial":
        if isinstance(other, (int, float)):
            other = Polynomial.constant(other)
        return self + (-other)

    def __rsub__(self, other: Union[float, int]) -> "Polynomial":
        return Polynomial.constant(other) - self

    def __mul__(self, other: Union["Polynomial", float, int]) -> "Polynomial":
        if isinstance(other, (int, float)):
            return Polynomial({e: c * other for e, c in self._terms.items()})
        acc: Dict[Exponent, float] = {}
        for e1, c1 in self._terms.items():
            for e2, c2 in other._terms.items():
                e = e1 * e2
                acc[e] = acc.get(e, 0.0) + c1 * c2
        return Polynomial(acc)

    __rmul__ = __mul__

    def __eq__(self, other) -> bool:
        return isinstance(other, Polynomial) and self._terms == other._terms

    def __hash__(self) -> int:
        return hash(tuple(self.items()))

    # -- evaluation --------------------------------------------------------

    def evaluate(self, point: Union[Mapping[int, float], Sequence[float], np.ndarray]) -> float:
        """Evaluate at a point given as an array indexed by variable or a map."""
        getter = point.__getitem__
        total = 0.0
        for e, c in self._terms.items():
            term = c
            for v, p in e.pairs:
                term *= getter(v) ** p
            total += term
        return total

    def evaluate_batch(self, points: np.ndarray) -> np.ndarray:
        """Evaluate at many points; ``points`` has shape (N, n_vars)."""
        out = np.zeros(points.shape[0])
        for e, c in self._terms.items():
            term = np.full(points.shape[0], c)
            for v, p in e.pairs:
                term = term * points[:, v] ** p
            out += term
        return out

    # -- rendering ---------------------------------------------------------

    def to_text(self) -> str:
        """Render as e.g. ``-1 + 2 x0 x1^2`` in canonical term order."""
        if not self._terms:
            return "0"
        parts = []
        for i, (e, c) in enumerate(self.items()):
            mono = e.to_text()
            mag = abs(c)
            if e.is_constant():
                body = f"{mag:.12g}"
            elif math.isclose(mag, 1.0, rel_tol=0, abs_tol=0):
                body = mono
            else:
                body = f"{mag:.12g} {mono}"
            if i == 0:
                parts.append(body if c >= 0 else f"-{body}")
            else:
                parts.append(f"+ {body}" if c >= 0 else f"- {body}")
        return " ".join(parts)

    def __repr__(self) -> str:
        return f"Polynomial({self.to_text()})"


def affine_substitute(poly: Polynomial, shift: np.ndarray, scale: np.ndarray) -> Polynomial:
    """Substitute ``x_v -> shift[v] + scale[v] * x_v`` for every variable.

    Used to rescale variables onto [-1, 1] from interval bounds before SDP
    assembly; the substitution preserves degree and variable locality.
    """
    acc: Dict[Exponent, float] = {}
    for e, c in poly._terms.items():
        # Expand the product of (shift + scale*x)^p factors term by term.
        partial: Dict[Exponent, float] = {ONE: c}
        for v, p in e.pairs:
            s, r = float(shift[v]), float(scale[v])
            nxt: Dict[Exponent, float] = {}
            for k in range(p + 1):
                w = math.comb(p, k) * (r ** k) * (s ** (p - k))
                if w == 0.0:
                    continue
                ek = Exponent([(v, k)]) if k else ONE
                for base, bc in partial.items():
                    key = base * ek
                    nxt[key] = nxt.get(key, 0.0) + bc * w
            partial = nxt
        for key, val in partial.items():
            acc[key] = acc.get(key, 0.0) + val
    return Polynomial(acc)


def basis_up_to_degree(variables: Iterable[int], degree: int) -> ExponentSet:
    """All monomials over ``variables`` of total degree <= ``degree``.

    Canonically ordered; the size is C(|vars| + degree, degree).
    """
    if degree < 0:
        raise ValueError("degree must be nonnegative")
    vars_sorted = sorted(set(int(v) for v in variables))
    out = [ONE]
    for d in range(1, degree + 1):
        for combo in combinations_with_replacement(vars_sorted, d):
            counts: Dict[int, int] = {}
            for v in combo:
                counts[v] = counts.get(v, 0) + 1
            out.append(Exponent(counts))
    out.sort(key=lambda e: e.sort_key())
    return tuple(out)


def index_products(basis: ExponentSet) -> Dict[Exponent, List[Tuple[int, int]]]:
    """For each product exponent ``a`` in B+B, the (row, col) pairs with
    ``basis[row] * basis[col] == a``.

    This is the sparse representation of every coefficient-matching matrix of
    the Gram form at once: the coefficient of ``x^a`` in ``m^T Q m`` is the sum
    of Q over the listed index pairs.
    """
    out: Dict[Exponent, List[Tuple[int, int]]] = {}
    for i, bi in enumerate(basis):
        for j, bj in enumerate(basis):
            a = bi * bj
            out.setdefault(a, []).append((i, j))
    return out
