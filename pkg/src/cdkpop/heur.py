"""Bound-strengthening heuristics on moment relaxations.

H1 repeatedly solves the relaxation, builds the regularized Christoffel
polynomial of the optimal pseudo-moments, and adds its sublevel set at the
penalized threshold (1 - eps) * gamma_k, keeping every constraint added so far.

H2 solves once, evaluates the marginal Christoffel polynomial of each
coordinate at a local solution, and adds the univariate sublevel constraints
of the coordinates whose value passes the filter tau; then re-solves once.

Both loops run against an *engine* that solves the relaxation with a list of
extra constraints and exposes the pseudo-moments as (local sequence,
variable positions) parts: one part for dense relaxations, one per clique for
sparse ones.
"""

from __future__ import annotations

import csv
import enum
import json
import math
import time
from dataclasses import asdict, dataclass, field
from typing import Callable, Sequence

import numpy as np

from .cdk import (
    DEFAULT_KERNEL_TOL,
    build_christoffel,
    christoffel_mass,
    marginal_christoffel,
    sublevel_constraints,
)
from .polycore import MomentSequence, Polynomial, riesz_apply
from .relax import POPInstance, solve_relaxation
from .sdp import SolverSettings, Status


# bounds within solver accuracy of ub do not count as crossing it
CROSS_TOL = 1e-7


class Termination(str, enum.Enum):
    GAP_MET = "GapMet"
    UPPER_BOUND_CROSSED = "UpperBoundCrossed"
    MAX_ITERS = "MaxIters"
    SOLVER_FAILURE = "SolverFailure"
    SINGLE_PASS = "SinglePass"
    NO_CONSTRAINTS_ADDED = "NoConstraintsAdded"


def relative_gap(ub: float, lb: float) -> float:
    """Relative optimality gap in percent: |ub - lb| / |ub| * 100, or |ub - lb| * 100 when ub = 0."""
    diff = abs(ub - lb)
    if ub != 0:
        return diff / abs(ub) * 100.0
    return diff * 100.0


@dataclass
class H1Settings:
    d: int
    epsilon: float = 0.05
    delta: float = 0.005
    N: int = 15
    d_c: int | None = None
    beta: float = 1e-5
    kernel_tol: float = DEFAULT_KERNEL_TOL

    def __post_init__(self):
        if self.d_c is None:
            self.d_c = self.d
        if not 0 < self.epsilon < 1:
            raise ValueError("epsilon must lie in (0, 1)")
        if not 1 <= self.d_c <= self.d:
            raise ValueError("d_c must satisfy 1 <= d_c <= d")
        if self.beta <= 0:
            raise ValueError("beta must be positive")
        if self.N < 0 or self.delta < 0:
            raise ValueError("N and delta must be nonnegative")


@dataclass
class H2Settings:
    d: int
    tau: float = 1.5
    beta: float = 1e-3
    kernel_tol: float = DEFAULT_KERNEL_TOL
    local_point: Sequence[float] | None = None

    def __post_init__(self):
        if not self.tau > 1:
            raise ValueError("tau must be greater than 1")
        if self.beta <= 0:
            raise ValueError("beta must be positive")


@dataclass
class IterationRecord:
    k: int
    bound: float
    status: str
    ub: float
    gap: float
    gammas: list = field(default_factory=list)
    constraints_added: int = 0
    # L_{y_k} of each newly added range constraint; equals -eps * gamma_k by construction
    exclusion_values: list = field(default_factory=list)
    x_hat: list = field(default_factory=list)
    x_local: list = field(default_factory=list)
    wall_time_ms: float = 0.0


@dataclass
class HeuristicTrace:
    method: str
    iterations: list = field(default_factory=list)
    final_bound: float = math.nan
    initial_bound: float = math.nan
    # bound that exceeded ub and stopped the loop; final_bound is the last one before it
    crossed_bound: float = math.nan
    termination: Termination | None = None
    ub: float = math.nan
    gap_before: float = math.nan
    gap_after: float = math.nan
    no_constraints_added: bool = False
    degraded: bool = False
    added_coordinates: list = field(default_factory=list)
    thresholds: list = field(default_factory=list)
    settings: dict = field(default_factory=dict)
    wall_time_ms: float = 0.0

    @property
    def bounds(self) -> list:
        return [r.bound for r in self.iterations]

    @property
    def over_restricted(self) -> bool:
        """A restricted relaxation exceeded the upper bound (or final bound exceeds ub)."""
        if self.termination == Termination.UPPER_BOUND_CROSSED and not math.isnan(self.crossed_bound):
            return True
        return bool(self.final_bound > self.ub + CROSS_TOL * (1 + abs(self.ub)))

    @property
    def solver_failure(self) -> bool:
        return self.termination == Termination.SOLVER_FAILURE

    def to_json(self) -> dict:
        out = {
            "method": self.method,
            "final_bound": _num(self.final_bound),
            "initial_bound": _num(self.initial_bound),
            "crossed_bound": _num(self.crossed_bound),
            "termination": self.termination.value if self.termination else None,
            "ub": _num(self.ub),
            "gap_before": _num(self.gap_before),
            "gap_after": _num(self.gap_after),
            "gap_before_ub_denominator": _num(self.gap_before),
            "gap_before_lb_denominator": _num(_alt_gap(self.ub, self.initial_bound)),
            "over_restricted": self.over_restricted,
            "no_constraints_added": self.no_constraints_added,
            "degraded": self.degraded,
            "added_coordinates": list(self.added_coordinates),
            "thresholds": [_num(t) for t in self.thresholds],
            "settings": self.settings,
            "wall_time_ms": self.wall_time_ms,
            "iterations": [],
        }
        for r in self.iterations:
            rec = asdict(r)
            for key in ("bound", "ub", "gap"):
                rec[key] = _num(rec[key])
            rec["gammas"] = [_num(g) for g in rec["gammas"]]
            out["iterations"].append(rec)
        return out

    def save_json(self, path):
        with open(path, "w") as fh:
            json.dump(self.to_json(), fh, indent=1)


def _num(v):
    """JSON-safe float (inf/nan become strings)."""
    v = float(v)
    if math.isfinite(v):
        return v
    return "nan" if math.isnan(v) else ("inf" if v > 0 else "-inf")


def _alt_gap(ub: float, lb: float) -> float:
    """|ub - lb| / |lb| * 100: the convention with the relaxation bound in the denominator."""
    if lb == 0 or not math.isfinite(lb):
        return math.nan
    return abs(ub - lb) / abs(lb) * 100.0


CSV_COLUMNS = [
    "seed", "method", "f_d", "f_tilde_d", "ub", "gap_before", "gap_after",
    "iterations", "wall_time_ms", "status", "over_restricted",
]


def _fmt(v: float) -> str:
    # round-trip precision so gap columns recompute exactly from the bound columns
    return repr(float(v))


def csv_row(trace: HeuristicTrace, seed=None) -> dict:
    return {
        "seed": "" if seed is None else seed,
        "method": trace.method,
        "f_d": _fmt(trace.initial_bound),
        "f_tilde_d": _fmt(trace.final_bound),
        "ub": _fmt(trace.ub),
        "gap_before": _fmt(trace.gap_before),
        "gap_after": _fmt(trace.gap_after),
        "iterations": max(len(trace.iterations) - 1, 0),
        "wall_time_ms": f"{trace.wall_time_ms:.1f}",
        "status": trace.termination.value if trace.termination else "",
        "over_restricted": int(trace.over_restricted),
    }


def write_csv(rows: Sequence[dict], path, columns=CSV_COLUMNS):
    with open(path, "w", newline="") as fh:
        w = csv.DictWriter(fh, fieldnames=columns)
        w.writeheader()
        for r in rows:
            w.writerow(r)


# engines


@dataclass
class Snapshot:
    bound: float
    status: Status
    parts: list  # [(MomentSequence over the part's variables, positions)]
    x_hat: np.ndarray
    result: object = None


class DenseEngine:
    """Solves the dense order-d relaxation of ``pop`` with extra constraints appended."""

    def __init__(self, pop: POPInstance, d: int, settings: SolverSettings | None = None):
        self.pop = pop
        self.d = d
        self.settings = settings
        self.n_parts = 1

    def positions(self, part: int) -> list:
        return list(range(self.pop.n))

    def solve(self, extra: Sequence[tuple]) -> Snapshot:
        pop = self.pop.with_constraints([g for g, _ in extra])
        res = solve_relaxation(pop, self.d, self.settings)
        return Snapshot(res.bound, res.status, [(res.y, self.positions(0))], res.y.first_moments(), res)


LocalSolver = Callable[[POPInstance, np.ndarray], tuple]


def _default_local_solver(pop: POPInstance):
    from .instances import make_local_solver

    return make_local_solver()


def _ok(status: Status) -> bool:
    return status in (Status.OPTIMAL, Status.NEAR_OPTIMAL)


def _local_value(local_solver, pop, start):
    try:
        x, fx = local_solver(pop, start)
    except Exception:
        return None, math.inf
    return np.asarray(x, dtype=float), float(fx)


def run_h1(
    pop: POPInstance,
    s: H1Settings,
    local_solver: LocalSolver | None = None,
    settings: SolverSettings | None = None,
    engine=None,
    local_point: Sequence[float] | None = None,
) -> HeuristicTrace:
    """Iterative Christoffel-sublevel tightening.

    The upper bound is ub_{k+1} = min(f(xbar_0), f(xbar_{k+1})) where xbar_0
    comes from ``local_point`` (if given) or the local solver, and xbar_{k+1}
    from the local solver started at the current degree-one pseudo-moments.
    """
    t_start = time.perf_counter()
    engine = engine or DenseEngine(pop, s.d, settings)
    local_solver = local_solver or _default_local_solver(pop)
    trace = HeuristicTrace("h1cs" if engine.n_parts > 1 else "h1", settings=asdict(s))

    t0 = time.perf_counter()
    snap = engine.solve([])
    if not _ok(snap.status):
        trace.termination = Termination.SOLVER_FAILURE
        trace.iterations.append(IterationRecord(0, snap.bound, snap.status.value, math.nan, math.nan))
        trace.wall_time_ms = (time.perf_counter() - t_start) * 1e3
        return trace
    if local_point is not None:
        x0 = np.asarray(local_point, dtype=float)
        ub0 = float(pop.objective(x0))
    else:
        x0, ub0 = _local_value(local_solver, pop, snap.x_hat)
    ub = ub0
    bound = snap.bound
    gap = relative_gap(ub, bound)
    trace.initial_bound = bound
    trace.ub = ub
    trace.gap_before = gap
    trace.degraded |= snap.status == Status.NEAR_OPTIMAL
    trace.iterations.append(
        IterationRecord(
            0, bound, snap.status.value, ub, gap,
            x_hat=snap.x_hat.tolist(),
            x_local=[] if x0 is None else x0.tolist(),
            wall_time_ms=(time.perf_counter() - t0) * 1e3,
        )
    )
    extra = []
    k = 0
    termination = Termination.MAX_ITERS
    last_valid = bound
    previous = bound
    while k < s.N:
        if bound > ub + CROSS_TOL * (1.0 + abs(ub)):
            # the last restriction cut off the best known point: report the bound before it
            termination = Termination.UPPER_BOUND_CROSSED
            trace.crossed_bound = bound
            bound = previous
            break
        if gap <= 100.0 * s.delta:
            termination = Termination.GAP_MET
            break
        t0 = time.perf_counter()
        gammas, exclusion = [], []
        for part, (y_part, positions) in enumerate(snap.parts):
            model = build_christoffel(y_part, s.d_c, s.beta, s.kernel_tol)
            gamma = christoffel_mass(model, y_part)
            gammas.append(gamma)
            con = sublevel_constraints(model, (1.0 - s.epsilon) * gamma)
            exclusion.append(riesz_apply(y_part, con.range_constraint))
            if engine.n_parts > 1 or len(positions) != pop.n:
                con = con.embed(pop.n, positions)
            extra.extend((g, part) for g in con.polynomials)
        snap = engine.solve(extra)
        k += 1
        if snap.status == Status.NUMERICAL_FAILURE:
            trace.iterations.append(
                IterationRecord(k, snap.bound, snap.status.value, ub, math.nan, gammas, len(extra), exclusion,
                                wall_time_ms=(time.perf_counter() - t0) * 1e3)
            )
            termination = Termination.SOLVER_FAILURE
            bound = last_valid
            break
        trace.degraded |= snap.status == Status.NEAR_OPTIMAL
        previous = bound
        bound = snap.bound
        if _ok(snap.status):
            last_valid = bound
            xk, fk = _local_value(local_solver, pop, snap.x_hat)
            x_hat = snap.x_hat.tolist()
        else:
            # infeasible restricted relaxation: bound is +inf, no new local point
            xk, fk, x_hat = None, math.inf, []
        ub = min(ub0, fk)
        gap = relative_gap(ub, bound) if math.isfinite(bound) else math.inf
        trace.iterations.append(
            IterationRecord(
                k, bound, snap.status.value, ub, gap, gammas, len(extra), exclusion,
                x_hat=x_hat,
                x_local=[] if xk is None else xk.tolist(),
                wall_time_ms=(time.perf_counter() - t0) * 1e3,
            )
        )
        if not _ok(snap.status):
            termination = Termination.UPPER_BOUND_CROSSED
            trace.crossed_bound = bound
            bound = previous
            break
    trace.termination = termination
    trace.final_bound = bound
    trace.ub = ub
    trace.gap_after = relative_gap(ub, bound) if math.isfinite(bound) else math.inf
    trace.wall_time_ms = (time.perf_counter() - t_start) * 1e3
    return trace


def run_h2(
    pop: POPInstance,
    s: H2Settings,
    local_point: Sequence[float] | None = None,
    local_solver: LocalSolver | None = None,
    settings: SolverSettings | None = None,
    engine=None,
) -> HeuristicTrace:
    """Single-pass marginal-Christoffel tightening around a local solution."""
    t_start = time.perf_counter()
    engine = engine or DenseEngine(pop, s.d, settings)
    trace = HeuristicTrace("h2cs" if engine.n_parts > 1 else "h2", settings=_h2_dict(s))

    t0 = time.perf_counter()
    snap = engine.solve([])
    if not _ok(snap.status):
        trace.termination = Termination.SOLVER_FAILURE
        trace.iterations.append(IterationRecord(0, snap.bound, snap.status.value, math.nan, math.nan))
        return trace
    point = local_point if local_point is not None else s.local_point
    if point is None:
        local_solver = local_solver or _default_local_solver(pop)
        xbar, ub = _local_value(local_solver, pop, snap.x_hat)
        if xbar is None:
            raise RuntimeError("no local solution available for H2")
    else:
        xbar = np.asarray(point, dtype=float)
        ub = float(pop.objective(xbar))
    if xbar.shape != (pop.n,):
        raise ValueError(f"local point has {xbar.size} coordinates, problem has n={pop.n}")
    bound0 = snap.bound
    trace.initial_bound = bound0
    trace.ub = ub
    trace.gap_before = relative_gap(ub, bound0)
    trace.degraded |= snap.status == Status.NEAR_OPTIMAL
    trace.iterations.append(
        IterationRecord(0, bound0, snap.status.value, ub, trace.gap_before,
                        x_hat=snap.x_hat.tolist(), x_local=xbar.tolist(),
                        wall_time_ms=(time.perf_counter() - t0) * 1e3)
    )

    t0 = time.perf_counter()
    extra, gammas, added = [], [], []
    for part, (y_part, positions) in enumerate(snap.parts):
        for local_i, i in enumerate(positions):
            model = marginal_christoffel(y_part, local_i, s.beta, s.kernel_tol)
            gamma = model(np.array([xbar[i]]))
            gammas.append(gamma)
            if gamma <= s.tau:
                con = sublevel_constraints(model, gamma).embed(pop.n, [i])
                extra.extend((g, part) for g in con.polynomials)
                added.append(i)
    trace.thresholds = gammas
    trace.added_coordinates = added
    if not extra:
        trace.no_constraints_added = True
        trace.termination = Termination.NO_CONSTRAINTS_ADDED
        trace.final_bound = bound0
        trace.gap_after = trace.gap_before
        trace.wall_time_ms = (time.perf_counter() - t_start) * 1e3
        return trace
    snap = engine.solve(extra)
    bound = snap.bound
    trace.degraded |= snap.status == Status.NEAR_OPTIMAL
    trace.iterations.append(
        IterationRecord(1, bound, snap.status.value, ub, relative_gap(ub, bound), gammas, len(extra),
                        x_hat=snap.x_hat.tolist() if _ok(snap.status) else [],
                        wall_time_ms=(time.perf_counter() - t0) * 1e3)
    )
    if snap.status == Status.NUMERICAL_FAILURE:
        trace.termination = Termination.SOLVER_FAILURE
        trace.final_bound = bound0
    else:
        trace.termination = Termination.SINGLE_PASS
        trace.final_bound = bound
    trace.gap_after = relative_gap(ub, trace.final_bound) if math.isfinite(trace.final_bound) else math.inf
    trace.wall_time_ms = (time.perf_counter() - t_start) * 1e3
    return trace


def _h2_dict(s: H2Settings) -> dict:
    out = asdict(s)
    if out["local_point"] is not None:
        out["local_point"] = [float(v) for v in out["local_point"]]
    return out
