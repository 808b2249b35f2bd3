"""Correlative sparsity: clique decompositions and sparse moment relaxations.

The sparse order-d relaxation has one moment matrix per clique I_l (over the
variables of I_l only) and localizes each constraint inside the clique it is
assigned to.  A moment supported on an overlap of cliques is a single shared
variable, so overlapping pseudo-moments agree exactly.
"""

from __future__ import annotations

import json
import time
from dataclasses import dataclass, field
from typing import Sequence

import numpy as np

from .heur import H1Settings, H2Settings, Snapshot, run_h1, run_h2
from .polycore import MomentSequence, Polynomial, ceil_half, enumerate_basis, grlex_key
from .relax import POPInstance, OrderTooSmall, Relaxation, VariableIndex, _basis_array, assemble, bound_from_status
from .sdp import ConicSolution, SolverSettings, Status, solve


class DecompositionError(ValueError):
    pass


def _vars_of(p: Polynomial) -> set:
    return set(p.variables())


def split_objective(f: Polynomial, cliques: Sequence[Sequence[int]]) -> list:
    """Assign each monomial of f to the lowest-index clique containing its variables."""
    sets = [set(c) for c in cliques]
    parts = [dict() for _ in cliques]
    for alpha, c in f.terms.items():
        vs = {i for i, a in enumerate(alpha) if a}
        for l, s in enumerate(sets):
            if vs <= s:
                parts[l][alpha] = c
                break
        else:
            raise DecompositionError(f"objective monomial {alpha} is not covered by any clique")
    return [Polynomial(f.n, t) for t in parts]


@dataclass
class CliqueDecomposition:
    cliques: list
    assignment: list
    objective_split: list = field(default_factory=list)

    @classmethod
    def from_cliques(cls, pop: POPInstance, cliques: Sequence[Sequence[int]]) -> "CliqueDecomposition":
        cliques = [sorted(int(i) for i in c) for c in cliques]
        sets = [set(c) for c in cliques]
        assignment = []
        for j, g in enumerate(pop.constraints):
            vs = _vars_of(g)
            for l, s in enumerate(sets):
                if vs <= s:
                    assignment.append(l)
                    break
            else:
                raise DecompositionError(f"constraint {j} (variables {sorted(vs)}) lies in no clique")
        out = cls(cliques, assignment, split_objective(pop.objective, cliques))
        out.validate(pop)
        return out

    def validate(self, pop: POPInstance) -> None:
        covered = set().union(*map(set, self.cliques)) if self.cliques else set()
        if covered != set(range(pop.n)):
            missing = sorted(set(range(pop.n)) - covered)
            raise DecompositionError(f"variables {missing} are in no clique")
        if len(self.assignment) != len(pop.constraints):
            raise DecompositionError("assignment needs one clique per constraint")
        for j, (g, l) in enumerate(zip(pop.constraints, self.assignment)):
            if not 0 <= l < len(self.cliques):
                raise DecompositionError(f"constraint {j} assigned to nonexistent clique {l}")
            extra = _vars_of(g) - set(self.cliques[l])
            if extra:
                raise DecompositionError(f"constraint {j} uses variables {sorted(extra)} outside clique {l}")
        if not self.objective_split:
            self.objective_split = split_objective(pop.objective, self.cliques)
        total = Polynomial(pop.n)
        for l, fl in enumerate(self.objective_split):
            extra = _vars_of(fl) - set(self.cliques[l])
            if extra:
                raise DecompositionError(f"objective part {l} uses variables {sorted(extra)} outside its clique")
            total = total + fl
        if not total.allclose(pop.objective, atol=0.0):
            raise DecompositionError("objective parts do not sum to the objective")

    def to_json(self) -> dict:
        return {"cliques": [list(c) for c in self.cliques], "assignment": list(self.assignment)}

    @classmethod
    def from_json(cls, obj, pop: POPInstance) -> "CliqueDecomposition":
        cliques = [sorted(int(i) for i in c) for c in obj["cliques"]]
        assignment = obj.get("assignment")
        if assignment is None:
            return cls.from_cliques(pop, cliques)
        out = cls(cliques, [int(a) for a in assignment], split_objective(pop.objective, cliques))
        out.validate(pop)
        return out

    def save(self, path):
        with open(path, "w") as fh:
            json.dump(self.to_json(), fh)

    @classmethod
    def load(cls, path, pop: POPInstance) -> "CliqueDecomposition":
        with open(path) as fh:
            return cls.from_json(json.load(fh), pop)


def csp_graph(pop: POPInstance) -> list:
    """Adjacency sets: variables sharing a monomial of f, or appearing in the same constraint."""
    adj = [set() for _ in range(pop.n)]

    def link(vs):
        vs = sorted(vs)
        for a in vs:
            adj[a].update(v for v in vs if v != a)

    for alpha in pop.objective.terms:
        link(i for i, a in enumerate(alpha) if a)
    for g in pop.constraints:
        link(_vars_of(g))
    return adj


def chordal_cliques(adj: Sequence[set]) -> list:
    """Maximal cliques of the minimum-degree elimination chordal extension, sorted by smallest member."""
    n = len(adj)
    work = [set(a) for a in adj]
    alive = set(range(n))
    candidates = []
    while alive:
        v = min(alive, key=lambda u: (len(work[u]), u))
        nb = work[v]
        candidates.append(frozenset(nb | {v}))
        for a in nb:
            work[a] |= nb - {a}
            work[a].discard(v)
        alive.discard(v)
        work[v] = set()
    maximal = []
    for c in sorted(set(candidates), key=len, reverse=True):
        if not any(c <= m for m in maximal):
            maximal.append(c)
    return sorted((sorted(c) for c in maximal), key=lambda c: (c[0], len(c)))


def detect_cliques(pop: POPInstance, declared: CliqueDecomposition | None = None) -> CliqueDecomposition:
    if declared is not None:
        declared.validate(pop)
        return declared
    return CliqueDecomposition.from_cliques(pop, chordal_cliques(csp_graph(pop)))


# sparse relaxation


def _sparse_index(n: int, cliques: Sequence[Sequence[int]], degree: int) -> VariableIndex:
    seen = set()
    for c in cliques:
        for row in _basis_array(n, degree, c):
            seen.add(tuple(int(v) for v in row))
    return VariableIndex(n, sorted(seen, key=grlex_key))


def build_sparse_relaxation(
    pop: POPInstance,
    cliques: CliqueDecomposition,
    d: int,
    extra: Sequence[tuple] = (),
) -> Relaxation:
    """Sparse order-d relaxation; ``extra`` holds (polynomial, clique index) constraints to append."""
    if d < pop.d_min:
        raise OrderTooSmall(f"relaxation order {d} is below d_min = {pop.d_min}")
    n = pop.n
    index = _sparse_index(n, cliques.cliques, 2 * d)
    moment_bases = [_basis_array(n, d, c) for c in cliques.cliques]
    loc = []
    entries = [(g, l, f"g{j}") for j, (g, l) in enumerate(zip(pop.constraints, cliques.assignment))]
    entries += [(-g, l, f"g{j}-") for j, (g, l, eq) in
                enumerate(zip(pop.constraints, cliques.assignment, pop.eq_mask)) if eq]
    entries += [(g, l, f"c{j}") for j, (g, l) in enumerate(extra)]
    for g, l, label in entries:
        r = d - ceil_half(g.degree())
        if r < 0:
            raise OrderTooSmall(f"order {d} is below ceil(deg/2) of constraint {label}")
        extra_vars = _vars_of(g) - set(cliques.cliques[l])
        if extra_vars:
            raise DecompositionError(f"constraint {label} uses variables {sorted(extra_vars)} outside clique {l}")
        loc.append((g, _basis_array(n, r, cliques.cliques[l]), label, l))
    return assemble(pop.objective, index, moment_bases, loc, d, pop)


@dataclass
class SparseRelaxationResult:
    order: int
    bound: float
    y_parts: list  # per-clique MomentSequence over the clique's variables
    moment_matrices: list
    status: Status
    x_hat: np.ndarray
    values: np.ndarray = None  # full shared moment vector (y_0 first)
    solution: ConicSolution = None
    relaxation: Relaxation = None
    cliques: CliqueDecomposition = None
    wall_time: float = 0.0

    @property
    def ok(self) -> bool:
        return self.status in (Status.OPTIMAL, Status.NEAR_OPTIMAL)


def local_sequence(values: np.ndarray, index: VariableIndex, n: int, positions: Sequence[int], degree: int) -> MomentSequence:
    pos = index.lookup(_basis_array(n, degree, positions))
    return MomentSequence(len(positions), degree, values[pos])


def solve_sparse_relaxation(
    pop: POPInstance,
    cliques: CliqueDecomposition,
    d: int,
    settings: SolverSettings | None = None,
    extra: Sequence[tuple] = (),
) -> SparseRelaxationResult:
    t0 = time.perf_counter()
    relax = build_sparse_relaxation(pop, cliques, d, extra)
    sol = solve(relax.program, settings)
    values = relax.full_vector(sol.y)
    f0, c = relax.objective_vector()
    parts = [local_sequence(values, relax.index, pop.n, cl, 2 * d) for cl in cliques.cliques]
    mats = [b.matrix(sol.y) for b in relax.blocks if b.kind == "moment"]
    first = relax.index.lookup(np.eye(pop.n, dtype=np.int64))
    return SparseRelaxationResult(
        order=d,
        bound=bound_from_status(sol.status, float(f0 + c @ sol.y)),
        y_parts=parts,
        moment_matrices=mats,
        status=sol.status,
        x_hat=values[first],
        values=values,
        solution=sol,
        relaxation=relax,
        cliques=cliques,
        wall_time=time.perf_counter() - t0,
    )


class SparseEngine:
    """Heuristic engine over the sparse relaxation: one part per clique."""

    def __init__(self, pop: POPInstance, cliques: CliqueDecomposition, d: int, settings: SolverSettings | None = None):
        self.pop = pop
        self.cliques = cliques
        self.d = d
        self.settings = settings
        self.n_parts = len(cliques.cliques)

    def positions(self, part: int) -> list:
        return list(self.cliques.cliques[part])

    def solve(self, extra: Sequence[tuple]) -> Snapshot:
        res = solve_sparse_relaxation(self.pop, self.cliques, self.d, self.settings, extra)
        parts = [(y, self.positions(l)) for l, y in enumerate(res.y_parts)]
        return Snapshot(res.bound, res.status, parts, res.x_hat, res)


def run_h1cs(pop: POPInstance, cliques: CliqueDecomposition, s: H1Settings, local_solver=None,
             settings: SolverSettings | None = None, local_point=None):
    """Iterative tightening with one Christoffel sublevel set per clique per iteration."""
    engine = SparseEngine(pop, cliques, s.d, settings)
    trace = run_h1(pop, s, local_solver, settings, engine=engine, local_point=local_point)
    trace.method = "h1cs"
    return trace


def run_h2cs(pop: POPInstance, cliques: CliqueDecomposition, s: H2Settings, local_point=None,
             local_solver=None, settings: SolverSettings | None = None):
    """Marginal tightening per clique; a shared variable gets one constraint from each clique that passes."""
    engine = SparseEngine(pop, cliques, s.d, settings)
    trace = run_h2(pop, s, local_point, local_solver, settings, engine=engine)
    trace.method = "h2cs"
    return trace
