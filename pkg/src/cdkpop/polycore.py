"""Multi-indices, sparse real polynomials, monomial bases and moment sequences.

Exponent tuples are plain ``tuple[int, ...]``.  Every ordered enumeration uses
graded lexicographic order: total degree first, then lexicographic with the
earlier variables dominating, so that the degree-one part of a basis reads
``1, x_1, ..., x_n`` and the degree-two part ``x_1^2, x_1 x_2, ..., x_n^2``.
"""

from __future__ import annotations

import sys
from functools import lru_cache
from types import MappingProxyType
from typing import Iterable, Mapping, Sequence

import numpy as np

PRUNE_EPS = 1e-14

MultiIndex = tuple


def grlex_key(alpha: Sequence[int]) -> tuple:
    """Sort key realising graded lexicographic order."""
    return (sum(alpha), tuple(-a for a in alpha))


def basis_size(n: int, d: int) -> int:
    """Number of monomials of degree at most ``d`` in ``n`` variables, C(n+d, d)."""
    if n < 0 or d < 0:
        raise ValueError("n and d must be nonnegative")
    result = 1
    for i in range(1, min(n, d) + 1):
        # exact at every step: result * (n + d - min + i) is divisible by i
        result = result * (max(n, d) + i) // i
        if result > sys.maxsize:
            raise OverflowError(f"basis_size({n}, {d}) exceeds {sys.maxsize}")
    return result


def _compositions(n: int, k: int):
    """Exponent tuples of length ``n`` with total degree ``k``, descending lex."""
    if n == 1:
        yield (k,)
        return
    for first in range(k, -1, -1):
        for rest in _compositions(n - 1, k - first):
            yield (first,) + rest


@lru_cache(maxsize=None)
def enumerate_basis(n: int, d: int) -> tuple:
    """Graded-lex list of all exponents of degree <= d; starts with the zero index."""
    if n == 0:
        return ((),)
    out = []
    for k in range(d + 1):
        out.extend(_compositions(n, k))
    return tuple(out)


@lru_cache(maxsize=None)
def basis_index(n: int, d: int) -> Mapping:
    """Position of each exponent inside ``enumerate_basis(n, d)``."""
    return MappingProxyType({a: i for i, a in enumerate(enumerate_basis(n, d))})


def add_exponents(a: Sequence[int], b: Sequence[int]) -> tuple:
    return tuple(x + y for x, y in zip(a, b))


def monomial_vector(x: Sequence[float], d: int) -> np.ndarray:
    """Evaluate the graded-lex basis of degree <= d at ``x``."""
    x = np.asarray(x, dtype=float)
    exps = np.array(enumerate_basis(len(x), d), dtype=int).reshape(-1, len(x))
    return np.prod(x[None, :] ** exps, axis=1)


class Polynomial:
    """Sparse real polynomial in ``n`` variables.

    Terms are kept in canonical form: coefficients with magnitude at or
    below ``PRUNE_EPS`` are dropped after every operation.  Instances are
    immutable.
    """

    __slots__ = ("n", "_terms", "_compiled")

    def __init__(self, n: int, terms: Mapping | None = None):
        self.n = int(n)
        clean = {}
        for alpha, c in (terms or {}).items():
            alpha = tuple(int(a) for a in alpha)
            if len(alpha) != self.n:
                raise ValueError(f"exponent {alpha} does not have length {self.n}")
            if any(a < 0 for a in alpha):
                raise ValueError(f"negative exponent in {alpha}")
            c = float(c)
            if abs(c) > PRUNE_EPS:
                clean[alpha] = c
        self._terms = clean
        self._compiled = None

    # construction helpers

    @classmethod
    def from_terms(cls, n: int, terms: Iterable) -> "Polynomial":
        acc: dict = {}
        for alpha, c in terms:
            alpha = tuple(alpha)
            acc[alpha] = acc.get(alpha, 0.0) + float(c)
        return cls(n, acc)

    @classmethod
    def constant(cls, n: int, c: float) -> "Polynomial":
        return cls(n, {(0,) * n: c})

    @classmethod
    def variable(cls, n: int, i: int) -> "Polynomial":
        alpha = [0] * n
        alpha[i] = 1
        return cls(n, {tuple(alpha): 1.0})

    @classmethod
    def from_coefficients(cls, n: int, d: int, coefs: Sequence[float]) -> "Polynomial":
        """Polynomial whose coefficients are listed in the graded-lex basis of degree d."""
        basis = enumerate_basis(n, d)
        if len(coefs) != len(basis):
            raise ValueError("coefficient vector does not match the basis size")
        return cls(n, dict(zip(basis, coefs)))

    @classmethod
    def from_gram(cls, n: int, d: int, G: np.ndarray) -> "Polynomial":
        """Expand v_d(x)^T G v_d(x) into monomial coefficients."""
        basis = enumerate_basis(n, d)
        G = np.asarray(G, dtype=float)
        acc: dict = {}
        for p, a in enumerate(basis):
            for q, b in enumerate(basis):
                g = G[p, q]
                if g != 0.0:
                    key = add_exponents(a, b)
                    acc[key] = acc.get(key, 0.0) + g
        return cls(n, acc)

    # accessors

    @property
    def terms(self) -> Mapping:
        return MappingProxyType(self._terms)

    def support(self) -> list:
        return sorted(self._terms, key=grlex_key)

    def degree(self) -> int:
        return max((sum(a) for a in self._terms), default=0)

    def coefficient(self, alpha: Sequence[int]) -> float:
        return self._terms.get(tuple(alpha), 0.0)

    def variables(self) -> set:
        """Indices of the variables that actually occur."""
        used = set()
        for alpha in self._terms:
            used.update(i for i, a in enumerate(alpha) if a)
        return used

    def is_zero(self) -> bool:
        return not self._terms

    # arithmetic

    def _check(self, other: "Polynomial"):
        if other.n != self.n:
            raise ValueError(f"dimension mismatch: {self.n} vs {other.n}")

    def _coerce(self, other) -> "Polynomial":
        if isinstance(other, Polynomial):
            self._check(other)
            return other
        if isinstance(other, (int, float, np.floating, np.integer)):
            return Polynomial.constant(self.n, float(other))
        return NotImplemented

    def __add__(self, other):
        other = self._coerce(other)
        if other is NotImplemented:
            return other
        acc = dict(self._terms)
        for a, c in other._terms.items():
            acc[a] = acc.get(a, 0.0) + c
        return Polynomial(self.n, acc)

    __radd__ = __add__

    def __neg__(self):
        return Polynomial(self.n, {a: -c for a, c in self._terms.items()})

    def __sub__(self, other):
        other = self._coerce(other)
        if other is NotImplemented:
            return other
        return self + (-other)

    def __rsub__(self, other):
        return (-self) + other

    def scale(self, c: float) -> "Polynomial":
        return Polynomial(self.n, {a: c * v for a, v in self._terms.items()})

    def __mul__(self, other):
        if isinstance(other, (int, float, np.floating, np.integer)):
            return self.scale(float(other))
        if not isinstance(other, Polynomial):
            return NotImplemented
        self._check(other)
        acc: dict = {}
        for a, c in self._terms.items():
            for b, e in other._terms.items():
                key = add_exponents(a, b)
                acc[key] = acc.get(key, 0.0) + c * e
        return Polynomial(self.n, acc)

    __rmul__ = __mul__

    def __pow__(self, k: int):
        if not isinstance(k, int) or k < 0:
            raise ValueError("only nonnegative integer powers are supported")
        out = Polynomial.constant(self.n, 1.0)
        for _ in range(k):
            out = out * self
        return out

    def __eq__(self, other):
        if not isinstance(other, Polynomial):
            return NotImplemented
        return self.n == other.n and self._terms == other._terms

    def __hash__(self):
        return hash((self.n, frozenset(self._terms.items())))

    def allclose(self, other: "Polynomial", atol: float = 1e-10) -> bool:
        self._check(other)
        keys = set(self._terms) | set(other._terms)
        return all(abs(self.coefficient(k) - other.coefficient(k)) <= atol for k in keys)

    def embed(self, n: int, positions: Sequence[int]) -> "Polynomial":
        """Rename local variable j to global variable ``positions[j]`` in R^n."""
        if len(positions) != self.n:
            raise ValueError("need one position per local variable")
        out = {}
        for alpha, c in self._terms.items():
            big = [0] * n
            for j, a in enumerate(alpha):
                big[positions[j]] += a
            out[tuple(big)] = c
        return Polynomial(n, out)

    def restrict(self, positions: Sequence[int]) -> "Polynomial":
        """Inverse of :meth:`embed`; every occurring variable must be listed."""
        positions = list(positions)
        if not self.variables() <= set(positions):
            raise ValueError("polynomial uses variables outside the given positions")
        return Polynomial(
            len(positions),
            {tuple(alpha[p] for p in positions): c for alpha, c in self._terms.items()},
        )

    # evaluation

    def _compile(self):
        if self._compiled is None:
            if self._terms:
                E = np.array(list(self._terms.keys()), dtype=int).reshape(-1, self.n)
                c = np.array(list(self._terms.values()), dtype=float)
            else:
                E = np.zeros((0, self.n), dtype=int)
                c = np.zeros(0)
            self._compiled = (E, c)
        return self._compiled

    def __call__(self, x) -> float:
        return poly_eval(self, x)

    def evaluate_many(self, X: np.ndarray) -> np.ndarray:
        """Evaluate at the rows of ``X`` (shape ``(m, n)``)."""
        E, c = self._compile()
        X = np.asarray(X, dtype=float).reshape(-1, self.n)
        if not len(c):
            return np.zeros(X.shape[0])
        return (np.prod(X[:, None, :] ** E[None, :, :], axis=2)) @ c

    def gradient(self, x) -> np.ndarray:
        E, c = self._compile()
        x = np.asarray(x, dtype=float)
        g = np.zeros(self.n)
        for i in range(self.n):
            mask = E[:, i] > 0
            if not mask.any():
                continue
            Ei = E[mask].copy()
            Ei[:, i] -= 1
            g[i] = np.sum(c[mask] * E[mask, i] * np.prod(x[None, :] ** Ei, axis=1))
        return g

    # serialization

    def to_json(self) -> dict:
        return {
            "n": self.n,
            "terms": [{"alpha": list(a), "coef": self._terms[a]} for a in self.support()],
        }

    @classmethod
    def from_json(cls, obj: Mapping) -> "Polynomial":
        n = int(obj["n"])
        return cls.from_terms(n, ((t["alpha"], t["coef"]) for t in obj["terms"]))

    def __repr__(self):
        if not self._terms:
            return f"Polynomial(n={self.n}, 0)"
        parts = []
        for alpha in self.support():
            mono = "*".join(
                f"x{i + 1}" if a == 1 else f"x{i + 1}^{a}" for i, a in enumerate(alpha) if a
            )
            parts.append(f"{self._terms[alpha]:+g}" + (f"*{mono}" if mono else ""))
        return f"Polynomial(n={self.n}, {' '.join(parts)})"


def poly_eval(f: Polynomial, x) -> float:
    x = np.asarray(x, dtype=float)
    if x.shape != (f.n,):
        raise ValueError(f"point has shape {x.shape}, expected ({f.n},)")
    E, c = f._compile()
    if not len(c):
        return 0.0
    return float(np.prod(x[None, :] ** E, axis=1) @ c)


class MomentSequence:
    """Truncated (pseudo-)moment vector indexed by all exponents of degree <= order."""

    __slots__ = ("n", "order", "values")

    def __init__(self, n: int, order: int, values):
        values = np.array(values, dtype=float)
        if values.shape != (basis_size(n, order),):
            raise ValueError(
                f"expected {basis_size(n, order)} moments for n={n}, order={order}, got {values.shape}"
            )
        values.setflags(write=False)
        self.n = n
        self.order = order
        self.values = values

    @classmethod
    def from_mapping(cls, n: int, order: int, mapping: Mapping) -> "MomentSequence":
        basis = enumerate_basis(n, order)
        missing = [a for a in basis if a not in mapping]
        if missing:
            raise ValueError(f"moment sequence is missing {missing[:3]}")
        return cls(n, order, [mapping[a] for a in basis])

    @classmethod
    def dirac(cls, x: Sequence[float], order: int) -> "MomentSequence":
        """Moments y_alpha = x^alpha of the point mass at ``x``."""
        return cls(len(x), order, monomial_vector(x, order))

    @property
    def index(self) -> Mapping:
        return basis_index(self.n, self.order)

    def __getitem__(self, alpha) -> float:
        return float(self.values[self.index[tuple(alpha)]])

    def as_dict(self) -> dict:
        return dict(zip(enumerate_basis(self.n, self.order), self.values.tolist()))

    def truncate(self, order: int) -> "MomentSequence":
        if order > self.order:
            raise ValueError("cannot truncate to a higher order")
        return MomentSequence(self.n, order, self.values[: basis_size(self.n, order)])

    def moment_matrix(self, d: int) -> np.ndarray:
        """M_d(y) with rows and columns in graded-lex order."""
        if 2 * d > self.order:
            raise ValueError(f"order-{d} moment matrix needs moments up to degree {2 * d}")
        return self.values[moment_index_array(self.n, d)]

    def first_moments(self) -> np.ndarray:
        """Degree-one pseudo-moments (L_y(x_1), ..., L_y(x_n))."""
        return np.array(self.values[1 : self.n + 1])

    def marginal(self, i: int) -> "MomentSequence":
        idx = self.index
        vals = []
        for k in range(self.order + 1):
            alpha = [0] * self.n
            alpha[i] = k
            vals.append(self.values[idx[tuple(alpha)]])
        return MomentSequence(1, self.order, vals)

    def restrict(self, positions: Sequence[int]) -> "MomentSequence":
        """Subsequence of moments supported on the given variables, re-indexed locally."""
        idx = self.index
        vals = []
        for beta in enumerate_basis(len(positions), self.order):
            alpha = [0] * self.n
            for j, p in enumerate(positions):
                alpha[p] = beta[j]
            vals.append(self.values[idx[tuple(alpha)]])
        return MomentSequence(len(positions), self.order, vals)

    def riesz(self, f: Polynomial) -> float:
        return riesz_apply(self, f)

    def to_json(self) -> dict:
        return {
            "n": self.n,
            "order": self.order,
            "moments": [
                {"alpha": list(a), "value": v}
                for a, v in zip(enumerate_basis(self.n, self.order), self.values.tolist())
            ],
        }

    @classmethod
    def from_json(cls, obj: Mapping) -> "MomentSequence":
        mapping = {tuple(m["alpha"]): m["value"] for m in obj["moments"]}
        return cls.from_mapping(int(obj["n"]), int(obj["order"]), mapping)

    def __repr__(self):
        return f"MomentSequence(n={self.n}, order={self.order}, y0={self.values[0]:g})"


@lru_cache(maxsize=None)
def moment_index_array(n: int, d: int) -> np.ndarray:
    """Integer matrix whose (p, q) entry is the position of basis_p + basis_q in N^n_{2d}."""
    basis = enumerate_basis(n, d)
    idx = basis_index(n, 2 * d)
    out = np.empty((len(basis), len(basis)), dtype=int)
    for p, a in enumerate(basis):
        for q in range(p, len(basis)):
            out[p, q] = out[q, p] = idx[add_exponents(a, basis[q])]
    out.setflags(write=False)
    return out


def riesz_apply(y: MomentSequence, f: Polynomial) -> float:
    """L_y(f) = sum over the support of f of f_alpha * y_alpha."""
    if f.n != y.n:
        raise ValueError(f"dimension mismatch: polynomial n={f.n}, moments n={y.n}")
    idx = y.index
    total = 0.0
    for alpha, c in f.terms.items():
        if sum(alpha) > y.order:
            raise ValueError(
                f"monomial {alpha} has degree {sum(alpha)} beyond moment order {y.order}"
            )
        total += c * y.values[idx[alpha]]
    return float(total)


def ceil_half(k: int) -> int:
    return (k + 1) // 2

