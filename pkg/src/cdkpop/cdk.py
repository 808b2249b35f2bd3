"""Regularized Christoffel polynomials built from pseudo-moment matrices.

For a moment matrix M_d(y) = sum_i e_i v_i v_i^T the regularized Christoffel
polynomial is

    L(x) = sum_i p_i(x)^2 / (e_i + beta),    p_i(x) = v_i^T v_d(x),

where v_d(x) is the graded-lex monomial vector.  Eigenvectors with e_i below
``kernel_tol`` form the (numerical) kernel.  The sublevel set used to tighten
relaxations is

    sum_{i not in kernel} p_i(x)^2 / (e_i + beta) <= gamma,   p_j(x)^2 <= beta  (j in kernel).
"""

from __future__ import annotations

import csv
from dataclasses import dataclass
from typing import Sequence

import numpy as np

from .polycore import MomentSequence, Polynomial, basis_size, monomial_vector, riesz_apply
from .sdp import spectral

DEFAULT_KERNEL_TOL = 1e-3


@dataclass(frozen=True)
class ChristoffelModel:
    n: int
    d: int
    beta: float
    eigenvalues: np.ndarray  # descending, clamped at zero
    vectors: np.ndarray  # columns are coefficient vectors in the graded-lex basis of degree <= d
    kernel_tol: float = DEFAULT_KERNEL_TOL

    @property
    def size(self) -> int:
        return self.eigenvalues.shape[0]

    @property
    def kernel_dim(self) -> int:
        return int(np.sum(self.eigenvalues < self.kernel_tol))

    @property
    def range_dim(self) -> int:
        return self.size - self.kernel_dim

    @property
    def weights(self) -> np.ndarray:
        return 1.0 / (self.eigenvalues + self.beta)

    def eigen_pairs(self) -> list:
        """[(p_i, e_i)] with p_i as polynomials, in descending eigenvalue order."""
        return [
            (Polynomial.from_coefficients(self.n, self.d, self.vectors[:, i]), float(self.eigenvalues[i]))
            for i in range(self.size)
        ]

    def _gram(self, which: slice) -> np.ndarray:
        V = self.vectors[:, which]
        return (V * self.weights[which]) @ V.T

    def polynomial(self) -> Polynomial:
        """L as an explicit polynomial of degree 2d."""
        return Polynomial.from_gram(self.n, self.d, self._gram(slice(None)))

    def range_polynomial(self) -> Polynomial:
        """The non-kernel part sum_{i not in kernel} p_i^2 / (e_i + beta)."""
        return Polynomial.from_gram(self.n, self.d, self._gram(slice(0, self.range_dim)))

    def __call__(self, x) -> float:
        return christoffel_eval(self, x)

    def evaluate_many(self, X: np.ndarray) -> np.ndarray:
        X = np.atleast_2d(np.asarray(X, dtype=float))
        V = np.stack([monomial_vector(x, self.d) for x in X])
        P = V @ self.vectors
        return (P * P) @ self.weights


def build_christoffel(
    y: MomentSequence,
    d: int,
    beta: float,
    kernel_tol: float = DEFAULT_KERNEL_TOL,
    matrix: np.ndarray | None = None,
) -> ChristoffelModel:
    """Christoffel model from M_d(y), the leading order-d block of the moment matrix.

    ``matrix`` may be given directly instead of being read from ``y``.
    ``beta = 0`` gives the unregularized polynomial (requires an invertible matrix).
    """
    if beta < 0:
        raise ValueError("beta must be nonnegative")
    if d < 0:
        raise ValueError("degree must be nonnegative")
    n = y.n
    M = y.moment_matrix(d) if matrix is None else np.asarray(matrix, dtype=float)
    s = basis_size(n, d)
    if M.shape != (s, s):
        raise ValueError(f"moment matrix has shape {M.shape}, expected ({s}, {s})")
    e, V = spectral(M)
    e = np.maximum(e, 0.0)
    if beta == 0 and e[-1] <= 0:
        raise ValueError("beta = 0 requires a positive definite moment matrix")
    e.setflags(write=False)
    V.setflags(write=False)
    return ChristoffelModel(n, d, float(beta), e, V, float(kernel_tol))


def christoffel_eval(model: ChristoffelModel, x) -> float:
    x = np.asarray(x, dtype=float).ravel()
    if x.shape != (model.n,):
        raise ValueError(f"point has {x.size} coordinates, model has n={model.n}")
    p = model.vectors.T @ monomial_vector(x, model.d)
    return float(np.sum(p * p * model.weights))


def christoffel_mass(model: ChristoffelModel, y: MomentSequence) -> float:
    """L_y applied to the non-kernel part of the Christoffel polynomial."""
    return riesz_apply(y, model.range_polynomial())


def spectral_mass(model: ChristoffelModel) -> float:
    """sum over non-kernel eigenpairs of e_i / (e_i + beta)."""
    r = model.range_dim
    e = model.eigenvalues[:r]
    return float(np.sum(e / (e + model.beta)))


@dataclass(frozen=True)
class SublevelConstraints:
    range_constraint: Polynomial
    kernel_constraints: tuple
    gamma: float

    @property
    def polynomials(self) -> list:
        return [self.range_constraint, *self.kernel_constraints]

    def contains(self, x, tol: float = 0.0) -> bool:
        return all(g(x) >= -tol for g in self.polynomials)

    def embed(self, n: int, positions: Sequence[int]) -> "SublevelConstraints":
        return SublevelConstraints(
            self.range_constraint.embed(n, positions),
            tuple(g.embed(n, positions) for g in self.kernel_constraints),
            self.gamma,
        )


def sublevel_constraints(model: ChristoffelModel, gamma: float) -> SublevelConstraints:
    """gamma - (range part) >= 0 and beta - p_j^2 >= 0 for each kernel eigenvector."""
    if gamma <= 0:
        raise ValueError("gamma must be positive")
    rng = Polynomial.constant(model.n, gamma) - model.range_polynomial()
    kernel = []
    for j in range(model.range_dim, model.size):
        G = -np.outer(model.vectors[:, j], model.vectors[:, j])
        G[0, 0] += model.beta
        kernel.append(Polynomial.from_gram(model.n, model.d, G))
    return SublevelConstraints(rng, tuple(kernel), float(gamma))


def marginal_sequence(y: MomentSequence, i: int) -> MomentSequence:
    """Univariate moments (y_0, y_{e_i}, y_{2e_i}, ...) of coordinate i (0-based)."""
    if not 0 <= i < y.n:
        raise IndexError(f"coordinate {i} out of range for n={y.n}")
    return y.marginal(i)


def marginal_christoffel(
    y: MomentSequence,
    i: int,
    beta: float = 1e-3,
    kernel_tol: float = DEFAULT_KERNEL_TOL,
    d: int = 1,
) -> ChristoffelModel:
    return build_christoffel(marginal_sequence(y, i), d, beta, kernel_tol)


def christoffel_grid(
    model: ChristoffelModel,
    x_range: tuple,
    y_range: tuple,
    num: int = 101,
    axes: tuple = (0, 1),
    anchor: Sequence[float] | None = None,
) -> np.ndarray:
    """Rows (u, v, value) over a rectangular grid in the two given coordinates.

    Other coordinates are held at ``anchor`` (zeros by default).
    """
    if model.n < 2 and axes != (0,):
        axes = (0,)
    base = np.zeros(model.n) if anchor is None else np.asarray(anchor, dtype=float).copy()
    us = np.linspace(*x_range, num)
    if len(axes) == 1:
        pts = np.repeat(base[None, :], num, axis=0)
        pts[:, axes[0]] = us
        vals = model.evaluate_many(pts)
        return np.column_stack([us, np.zeros(num), vals])
    vs = np.linspace(*y_range, num)
    U, W = np.meshgrid(us, vs, indexing="ij")
    pts = np.repeat(base[None, :], U.size, axis=0)
    pts[:, axes[0]] = U.ravel()
    pts[:, axes[1]] = W.ravel()
    return np.column_stack([U.ravel(), W.ravel(), model.evaluate_many(pts)])


def write_grid_csv(rows: np.ndarray, path) -> None:
    with open(path, "w", newline="") as fh:
        w = csv.writer(fh)
        w.writerow(["x", "y", "value"])
        for u, v, val in rows:
            w.writerow([f"{u:.10g}", f"{v:.10g}", f"{val:.12g}"])
