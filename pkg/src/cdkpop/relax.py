"""Moment relaxations of polynomial optimization problems.

The order-d relaxation of ``min f(x) s.t. g_j(x) >= 0`` is

    f_d = min L_y(f)  s.t.  y_0 = 1,  M_d(y) PSD,  M_{d-d_j}(g_j y) PSD,

with ``d_j = ceil(deg g_j / 2)``.  Pseudo-moments y_alpha (alpha != 0) are the
free variables of an LMI program; y_0 is substituted by 1, and each y_alpha is
a single variable shared by every block it appears in.
"""

from __future__ import annotations

import json
import time
from dataclasses import dataclass, field
from typing import Sequence

import numpy as np
import scipy.sparse as sp

from .polycore import (
    MomentSequence,
    Polynomial,
    basis_index,
    ceil_half,
    enumerate_basis,
    riesz_apply,
)
from .sdp import ConicProgram, ConicSolution, SolverSettings, Status, lmi_program, numerical_rank, solve


class OrderTooSmall(ValueError):
    pass


@dataclass
class POPInstance:
    """min f(x) subject to g_j(x) >= 0 (or = 0 where eq_mask is set)."""

    n: int
    objective: Polynomial
    constraints: list = field(default_factory=list)
    eq_mask: list = None
    name: str = ""
    # optional description of the feasible set used by the local solver, e.g.
    # {"kind": "box", "lower": [...], "upper": [...]} or
    # {"kind": "balls", "centers": [[...], ...], "radii": [...]}
    feasible_set: dict = None

    def __post_init__(self):
        self.constraints = list(self.constraints)
        if self.eq_mask is None:
            self.eq_mask = [False] * len(self.constraints)
        self.eq_mask = [bool(e) for e in self.eq_mask]
        if len(self.eq_mask) != len(self.constraints):
            raise ValueError("eq_mask must have one entry per constraint")
        for p in [self.objective, *self.constraints]:
            if p.n != self.n:
                raise ValueError(f"polynomial in {p.n} variables, problem has n={self.n}")

    @property
    def d_min(self) -> int:
        degs = [self.objective.degree()] + [g.degree() for g in self.constraints]
        return max(1, max(ceil_half(k) for k in degs))

    def constraint_orders(self) -> list:
        return [ceil_half(g.degree()) for g in self.constraints]

    def max_violation(self, x) -> float:
        x = np.asarray(x, dtype=float)
        worst = 0.0
        for g, eq in zip(self.constraints, self.eq_mask):
            v = g(x)
            worst = max(worst, abs(v) if eq else -v)
        return worst

    def is_feasible(self, x, tol: float = 1e-8) -> bool:
        return self.max_violation(x) <= tol

    def with_constraints(self, extra: Sequence[Polynomial]) -> "POPInstance":
        return POPInstance(
            self.n,
            self.objective,
            self.constraints + list(extra),
            self.eq_mask + [False] * len(extra),
            self.name,
            self.feasible_set,
        )

    def to_json(self) -> dict:
        out = {
            "n": self.n,
            "objective": self.objective.to_json(),
            "constraints": [g.to_json() for g in self.constraints],
        }
        if any(self.eq_mask):
            out["eq_mask"] = list(self.eq_mask)
        if self.name:
            out["name"] = self.name
        if self.feasible_set is not None:
            out["feasible_set"] = self.feasible_set
        return out

    @classmethod
    def from_json(cls, obj) -> "POPInstance":
        n = int(obj["n"])
        objective = Polynomial.from_json(obj["objective"])
        constraints = [Polynomial.from_json(g) for g in obj.get("constraints", [])]
        return cls(
            n,
            objective,
            constraints,
            obj.get("eq_mask"),
            obj.get("name", ""),
            obj.get("feasible_set"),
        )

    def save(self, path):
        with open(path, "w") as fh:
            json.dump(self.to_json(), fh, indent=1)

    @classmethod
    def load(cls, path) -> "POPInstance":
        with open(path) as fh:
            return cls.from_json(json.load(fh))


# indexing


class VariableIndex:
    """Maps exponent vectors to positions in a fixed list of moments (position 0 is y_0)."""

    def __init__(self, n: int, exponents: Sequence[tuple]):
        self.n = n
        self.exponents = list(exponents)
        if not self.exponents or any(self.exponents[0]):
            raise ValueError("the first exponent must be zero")
        self.array = np.array(self.exponents, dtype=np.int64).reshape(len(self.exponents), n)
        self.base = int(self.array.max(initial=0)) + 1
        self.weights = self.base ** np.arange(n, dtype=np.int64)
        keys = self.array @ self.weights
        self.order = np.argsort(keys, kind="stable")
        self.sorted_keys = keys[self.order]
        self.position = {a: i for i, a in enumerate(self.exponents)}

    def __len__(self):
        return len(self.exponents)

    def lookup(self, alphas: np.ndarray) -> np.ndarray:
        """Positions of an integer array of exponents (last axis n); raises if any is missing."""
        alphas = np.asarray(alphas, dtype=np.int64)
        shape = alphas.shape[:-1]
        flat = alphas.reshape(-1, self.n)
        keys = flat @ self.weights
        pos = np.searchsorted(self.sorted_keys, keys)
        pos = np.minimum(pos, len(self.sorted_keys) - 1)
        bad = (self.sorted_keys[pos] != keys) | (flat.max(axis=1, initial=0) >= self.base)
        if bad.any():
            raise KeyError(f"monomial {tuple(flat[np.argmax(bad)])} is not a relaxation variable")
        return self.order[pos].reshape(shape)


def moment_matrix_indexer(n: int, d: int) -> dict:
    """(alpha, beta) -> alpha + beta over the graded-lex basis of degree <= d."""
    basis = enumerate_basis(n, d)
    return {(a, b): tuple(x + y for x, y in zip(a, b)) for a in basis for b in basis}


def localizing_matrix_indexer(g: Polynomial, n: int, d: int) -> dict:
    """(alpha, beta) -> {gamma: coefficient} giving the entry sum_gamma g_gamma y_{alpha+beta+gamma}."""
    r = d - ceil_half(g.degree())
    if r < 0:
        raise OrderTooSmall(f"order {d} is below ceil(deg g / 2) = {ceil_half(g.degree())}")
    basis = enumerate_basis(n, r)
    out = {}
    for a in basis:
        for b in basis:
            entry = {}
            for gam, c in g.terms.items():
                key = tuple(x + y + z for x, y, z in zip(a, b, gam))
                entry[key] = entry.get(key, 0.0) + c
            out[(a, b)] = entry
    return out


def localizing_data(g: Polynomial, basis: np.ndarray, index: VariableIndex):
    """Affine data of y -> M(g y) over ``basis``: constant part F0 and sparse coefficients (m x k*k).

    Row i of the coefficient matrix belongs to variable position i + 1 of ``index``.
    """
    k = basis.shape[0]
    m = len(index) - 1
    F0 = np.zeros((k, k))
    rows, cols, vals = [], [], []
    pair = basis[:, None, :] + basis[None, :, :]
    flat_cols = np.arange(k * k)
    for gam, c in g.terms.items():
        pos = index.lookup(pair + np.asarray(gam, dtype=np.int64)).ravel()
        const = pos == 0
        if const.any():
            F0.ravel()[flat_cols[const]] += c
        rows.append(pos[~const] - 1)
        cols.append(flat_cols[~const])
        vals.append(np.full((~const).sum(), c))
    if rows:
        F = sp.csr_matrix(
            (np.concatenate(vals), (np.concatenate(rows), np.concatenate(cols))), shape=(m, k * k)
        )
    else:
        F = sp.csr_matrix((m, k * k))
    F.sum_duplicates()
    return F0, F


@dataclass
class BlockInfo:
    kind: str  # "moment" or "localizing"
    label: str
    polynomial: Polynomial
    basis: np.ndarray
    F0: np.ndarray
    F: sp.csr_matrix
    group: int = 0  # clique index for sparse relaxations

    @property
    def size(self) -> int:
        return self.basis.shape[0]

    def matrix(self, yvec: np.ndarray) -> np.ndarray:
        """Evaluate the block at the variable vector (moments without y_0)."""
        M = self.F0 + (self.F.T @ yvec).reshape(self.size, self.size)
        return (M + M.T) / 2


@dataclass
class Relaxation:
    objective: Polynomial
    index: VariableIndex
    blocks: list
    program: ConicProgram
    order: int
    pop: POPInstance = None

    def objective_vector(self) -> tuple:
        """(f_0, c) with L_y(f) = f_0 + c^T y."""
        c = np.zeros(len(self.index) - 1)
        f0 = 0.0
        for alpha, coef in self.objective.terms.items():
            p = self.index.position.get(alpha)
            if p is None:
                raise KeyError(f"objective monomial {alpha} is not a relaxation variable")
            if p == 0:
                f0 += coef
            else:
                c[p - 1] += coef
        return f0, c

    def full_vector(self, yvec: np.ndarray) -> np.ndarray:
        return np.concatenate([[1.0], yvec])

    def substitute(self, values: np.ndarray) -> dict:
        """Minimum eigenvalue of every block at a full moment vector (with y_0), keyed by label."""
        yvec = np.asarray(values, dtype=float)[1:]
        out = {}
        for b in self.blocks:
            M = b.matrix(yvec)
            out[b.label] = float(np.linalg.eigvalsh(M)[0])
        return out


def assemble(
    objective: Polynomial,
    index: VariableIndex,
    moment_bases: Sequence[np.ndarray],
    localizing: Sequence[tuple],
    order: int,
    pop: POPInstance | None = None,
) -> Relaxation:
    """Build the LMI program from moment blocks and (polynomial, basis, label, group) localizing blocks.

    Localizing blocks of size one become scalar (LP) constraints.
    """
    blocks = []
    for g, basis in enumerate(moment_bases):
        one = Polynomial.constant(index.n, 1.0)
        F0, F = localizing_data(one, basis, index)
        blocks.append(BlockInfo("moment", f"moment[{g}]" if len(moment_bases) > 1 else "moment", one, basis, F0, F, g))
    for poly, basis, label, group in localizing:
        F0, F = localizing_data(poly, basis, index)
        blocks.append(BlockInfo("localizing", label, poly, basis, F0, F, group))
    relax = Relaxation(objective, index, blocks, None, order, pop)
    f0, c = relax.objective_vector()
    psd = [(b.F0, b.F) for b in blocks if b.size > 1]
    scalars = [b for b in blocks if b.size == 1]
    lp = None
    if scalars:
        f0_lp = np.array([b.F0[0, 0] for b in scalars])
        F_lp = sp.vstack([b.F.T for b in scalars]).tocsr()
        lp = (f0_lp, F_lp)
    labels = {
        "psd": [b.label for b in blocks if b.size > 1],
        "lp": [b.label for b in scalars],
        "objective_constant": f0,
    }
    relax.program = lmi_program(c, psd, lp, labels)
    return relax


def _localizing_entries(pop: POPInstance, d: int, positions=None, n_local=None, group=0):
    """Localizing block specs for every constraint (equalities become two opposite inequalities)."""
    out = []
    for j, (g, eq) in enumerate(zip(pop.constraints, pop.eq_mask)):
        r = d - ceil_half(g.degree())
        if r < 0:
            raise OrderTooSmall(f"order {d} is below d_j = {ceil_half(g.degree())} of constraint {j}")
        basis = _basis_array(pop.n, r, positions)
        out.append((g, basis, f"g{j}", group))
        if eq:
            out.append((-g, basis, f"g{j}-", group))
    return out


def _basis_array(n: int, d: int, positions=None) -> np.ndarray:
    """Graded-lex basis of degree <= d, optionally on a subset of variables embedded into N^n."""
    if positions is None:
        return np.array(enumerate_basis(n, d), dtype=np.int64).reshape(-1, n)
    local = np.array(enumerate_basis(len(positions), d), dtype=np.int64).reshape(-1, len(positions))
    out = np.zeros((local.shape[0], n), dtype=np.int64)
    out[:, list(positions)] = local
    return out


def build_relaxation(pop: POPInstance, d: int) -> Relaxation:
    """Dense order-d moment relaxation; ``.program`` is the ConicProgram."""
    if d < pop.d_min:
        raise OrderTooSmall(f"relaxation order {d} is below d_min = {pop.d_min}")
    index = VariableIndex(pop.n, enumerate_basis(pop.n, 2 * d))
    return assemble(
        pop.objective,
        index,
        [_basis_array(pop.n, d)],
        _localizing_entries(pop, d),
        d,
        pop,
    )


@dataclass
class RelaxationResult:
    order: int
    bound: float
    y: MomentSequence
    moment_matrix: np.ndarray
    localizing_matrices: list
    status: Status
    solution: ConicSolution = None
    relaxation: Relaxation = None
    wall_time: float = 0.0

    @property
    def ok(self) -> bool:
        return self.status in (Status.OPTIMAL, Status.NEAR_OPTIMAL)


def bound_from_status(status: Status, value: float) -> float:
    """Relaxation value, with +inf for an infeasible moment side and -inf for an unbounded one."""
    if status == Status.INFEASIBLE:
        return float("inf")
    if status == Status.UNBOUNDED:
        return float("-inf")
    if status == Status.NUMERICAL_FAILURE:
        return float("nan")
    return value


def solve_relaxation(
    pop: POPInstance, d: int, settings: SolverSettings | None = None, relaxation: Relaxation | None = None
) -> RelaxationResult:
    t0 = time.perf_counter()
    relax = relaxation or build_relaxation(pop, d)
    sol = solve(relax.program, settings)
    values = relax.full_vector(sol.y)
    y = MomentSequence(pop.n, 2 * d, values)
    moment_block = relax.blocks[0]
    M = moment_block.matrix(sol.y)
    loc = [b.matrix(sol.y) for b in relax.blocks[1:]]
    bound = bound_from_status(sol.status, riesz_apply(y, pop.objective))
    return RelaxationResult(
        order=d,
        bound=bound,
        y=y,
        moment_matrix=M,
        localizing_matrices=loc,
        status=sol.status,
        solution=sol,
        relaxation=relax,
        wall_time=time.perf_counter() - t0,
    )


# flatness and extraction


@dataclass
class FlatnessReport:
    flat: bool
    ranks: dict
    flat_order: int = None
    rank: int = None


def flatness_check(
    result: RelaxationResult,
    d_min: int | None = None,
    rank_tol: float = 1e-3,
    relative: bool = False,
) -> FlatnessReport:
    """Compare numerical ranks of the nested moment matrices M_{d'} and M_{d'-d_min}.

    With ``relative=False`` eigenvalues below ``rank_tol`` count as zero;
    otherwise the threshold is ``rank_tol`` times the largest eigenvalue.
    """
    y = result.y
    d = result.order
    if d_min is None:
        d_min = result.relaxation.pop.d_min if result.relaxation and result.relaxation.pop else 1
    ranks = {k: numerical_rank(y.moment_matrix(k), rank_tol, relative) for k in range(d + 1)}
    for dp in range(d_min, d + 1):
        if ranks[dp] == ranks[dp - d_min]:
            return FlatnessReport(True, ranks, dp, ranks[dp])
    return FlatnessReport(False, ranks)


def extract_rank1_minimizer(
    result: RelaxationResult,
    pop: POPInstance | None = None,
    rank_tol: float = 1e-3,
    relative: bool = False,
):
    """Degree-one pseudo-moments when the relaxation is flat with rank one and they certify optimality."""
    pop = pop or result.relaxation.pop
    report = flatness_check(result, pop.d_min, rank_tol, relative)
    if not report.flat or report.rank != 1:
        return None
    x = result.y.first_moments()
    for g, eq in zip(pop.constraints, pop.eq_mask):
        v = g(x)
        if v < -1e-6 or (eq and abs(v) > 1e-6):
            return None
    if abs(pop.objective(x) - result.bound) > 1e-4 * (1 + abs(result.bound)):
        return None
    return x
