"""Problem generators, fixed fixtures, a projected-gradient local solver and analytic moments.

Randomness comes from numpy's Philox4x64 counter-based bit generator keyed by
the seed, so a (family, parameters, seed) triple fixes the instance on every
platform numpy supports.
"""

from __future__ import annotations

import math
from dataclasses import dataclass
from typing import Sequence

import numpy as np
from scipy.optimize import minimize

from .polycore import MomentSequence, Polynomial, enumerate_basis
from .relax import POPInstance


def make_rng(seed: int) -> np.random.Generator:
    return np.random.Generator(np.random.Philox(int(seed)))


def quadratic_polynomial(Q: np.ndarray, q: np.ndarray) -> Polynomial:
    """x^T Q x + q^T x for symmetric Q."""
    Q = np.asarray(Q, dtype=float)
    q = np.asarray(q, dtype=float)
    n = q.shape[0]
    terms = {}
    for i in range(n):
        e = [0] * n
        e[i] = 1
        terms[tuple(e)] = terms.get(tuple(e), 0.0) + q[i]
        for j in range(i, n):
            a = [0] * n
            a[i] += 1
            a[j] += 1
            c = Q[i, i] if i == j else Q[i, j] + Q[j, i]
            terms[tuple(a)] = terms.get(tuple(a), 0.0) + c
    return Polynomial(n, terms)


def box_constraints(n: int, products: bool = True) -> list:
    """x_i >= 0 and 1 - x_i >= 0 for every coordinate, plus the redundant x_i (1 - x_i) >= 0.

    The product form is what makes the order-1 relaxation bounded: linear
    constraints only localize first moments, leaving M_1 free to grow along
    negative-curvature directions of the objective.
    """
    out = []
    for i in range(n):
        xi = Polynomial.variable(n, i)
        out.append(xi)
        out.append(1 - xi)
        if products:
            out.append(xi * (1 - xi))
    return out


def _box_set(n: int) -> dict:
    return {"kind": "box", "lower": [0.0] * n, "upper": [1.0] * n}


@dataclass(frozen=True)
class GeneratorSpec:
    family: str  # "dense-box", "sparse-box", "block", "union-balls"
    n: int | None = None
    s: float = 0.0
    p: int | None = None
    n_l: tuple = ()
    overlaps: tuple = ()
    seed: int = 0


def gen_box_qcqp(n: int, s: float, seed: int) -> tuple:
    """min x^T Q x + q^T x over [0,1]^n; returns (POPInstance, Q, q).

    Q = (A + A^T)/2 with A standard normal, q standard normal; then exactly
    floor(s * count) of the count = n(n+1)/2 + n independent entries (upper
    triangle with diagonal of Q, and q) are zeroed, chosen by a seeded shuffle.
    """
    if not 0 <= s <= 1:
        raise ValueError("zero fraction s must lie in [0, 1]")
    rng = make_rng(seed)
    A = rng.standard_normal((n, n))
    Q = (A + A.T) / 2
    q = rng.standard_normal(n)
    iu = np.triu_indices(n)
    count = len(iu[0]) + n
    nz = math.floor(s * count)
    chosen = rng.permutation(count)[:nz]
    for c in chosen:
        if c < len(iu[0]):
            i, j = iu[0][c], iu[1][c]
            Q[i, j] = Q[j, i] = 0.0
        else:
            q[c - len(iu[0])] = 0.0
    pop = POPInstance(
        n,
        quadratic_polynomial(Q, q),
        box_constraints(n),
        name=f"box-qcqp-n{n}-s{s:g}-seed{seed}",
        feasible_set=_box_set(n),
    )
    return pop, Q, q


def block_index_sets(n_l: Sequence[int], overlaps: Sequence[int]) -> list:
    """Consecutive 0-based index sets where block l+1 starts overlaps[l] entries before block l ends."""
    n_l = list(n_l)
    overlaps = list(overlaps)
    if len(overlaps) != len(n_l) - 1:
        raise ValueError("need one overlap per consecutive pair of blocks")
    sets = []
    start = 0
    for l, size in enumerate(n_l):
        if size <= 0:
            raise ValueError("block sizes must be positive")
        sets.append(list(range(start, start + size)))
        if l < len(overlaps):
            ov = overlaps[l]
            if not 0 < ov < min(size, n_l[l + 1]):
                raise ValueError("each overlap must be positive and smaller than both adjacent blocks")
            start += size - ov
    return sets


def gen_block_qcqp(p: int, n_l, overlaps, seed: int) -> tuple:
    """min q^T x + sum_l x_{I_l}^T Q_l x_{I_l} over [0,1]^n with consecutive overlapping blocks.

    ``n_l`` and ``overlaps`` may be scalars (repeated) or per-block lists.
    Returns (POPInstance, CliqueDecomposition, Qs, q); q is dense.
    """
    from .sparsity import CliqueDecomposition

    if isinstance(n_l, int):
        n_l = [n_l] * p
    if isinstance(overlaps, int):
        overlaps = [overlaps] * (p - 1)
    if len(n_l) != p:
        raise ValueError(f"expected {p} block sizes, got {len(n_l)}")
    sets = block_index_sets(n_l, overlaps)
    n = sum(n_l) - sum(overlaps)
    rng = make_rng(seed)
    Qs = []
    Qfull = np.zeros((n, n))
    for I in sets:
        A = rng.standard_normal((len(I), len(I)))
        Ql = (A + A.T) / 2
        Qs.append(Ql)
        Qfull[np.ix_(I, I)] += Ql
    q = rng.standard_normal(n)
    pop = POPInstance(
        n,
        quadratic_polynomial(Qfull, q),
        box_constraints(n),
        name=f"block-qcqp-p{p}-seed{seed}",
        feasible_set=_box_set(n),
    )
    cliques = CliqueDecomposition.from_cliques(pop, sets)
    return pop, cliques, Qs, q


UNION_BALLS_Q = np.array(
    [
        [-1.4396, -0.2259, 0.0983, -0.0085, -2.3838],
        [-0.2259, 0.8043, 0.3730, 1.2719, 0.1370],
        [0.0983, 0.3730, -1.0236, 0.0597, 0.5024],
        [-0.0085, 1.2719, 0.0597, 0.9421, 1.2085],
        [-2.3838, 0.1370, 0.5024, 1.2085, 0.7885],
    ]
)
UNION_BALLS_q = np.array([-1.269, -2.988, 2.535, -0.4151, 0.1464])
UNION_BALLS_LOCAL_POINT = np.array([1.2602, 0.9712, 0.9292, 0.8395, 1.0262])
UNION_BALLS_MINIMIZER = np.array([0.6252, 0.4015, -0.5397, -0.1415, 0.3697])


def ball_polynomial(center: Sequence[float], radius_sq: float) -> Polynomial:
    """r^2 - ||x - c||^2."""
    n = len(center)
    out = Polynomial.constant(n, radius_sq)
    for i, c in enumerate(center):
        out = out - (Polynomial.variable(n, i) - c) ** 2
    return out


def union_balls_fixture() -> POPInstance:
    """Nonconvex quadratic over the union of the unit ball at 0 and the ball of radius sqrt(0.1) at (1,...,1)."""
    n = 5
    c1, c2 = np.zeros(n), np.ones(n)
    g1 = ball_polynomial(c1, 1.0)
    g2 = ball_polynomial(c2, 0.1)
    return POPInstance(
        n,
        quadratic_polynomial(UNION_BALLS_Q, UNION_BALLS_q),
        [-(g1 * g2)],
        name="union-balls",
        feasible_set={"kind": "balls", "centers": [c1.tolist(), c2.tolist()], "radii": [1.0, math.sqrt(0.1)]},
    )


def example_fixture() -> POPInstance:
    """Two-variable concave quadratic over four constraints; f_1 = -3, f_2 = f_min = -2 at (2, 2)."""
    x1, x2 = Polynomial.variable(2, 0), Polynomial.variable(2, 1)
    f = -((x1 - 1) ** 2) - (x1 - x2) ** 2 - (x2 - 3) ** 2
    g = [1 - (x1 - 1) ** 2, 1 - (x1 - x2) ** 2, 1 - (x2 - 3) ** 2, x1 - 0.3 * x2**2]
    return POPInstance(2, f, g, name="two-variable-example")


def uniform_box_moments(n: int, d: int) -> MomentSequence:
    """Moments of the uniform (Lebesgue) measure on [0,1]^n up to degree 2d."""
    vals = [float(np.prod([1.0 / (a + 1) for a in alpha])) for alpha in enumerate_basis(n, 2 * d)]
    return MomentSequence(n, 2 * d, vals)


# local solver


class NoFeasibleStart(RuntimeError):
    pass


def detect_box(pop: POPInstance):
    """Bounds (lower, upper) from univariate affine inequalities when every constraint is univariate, else None."""
    lower = np.full(pop.n, -np.inf)
    upper = np.full(pop.n, np.inf)
    for g, eq in zip(pop.constraints, pop.eq_mask):
        if eq or len(g.variables()) > 1:
            return None
        if g.degree() > 1:
            # univariate higher-degree constraints are checked on the final point
            continue
        lin = {a: c for a, c in g.terms.items() if sum(a) == 1}
        if len(lin) != 1:
            return None
        (alpha, a), = lin.items()
        i = alpha.index(1)
        b = g.coefficient((0,) * pop.n)
        if a > 0:
            lower[i] = max(lower[i], -b / a)
        else:
            upper[i] = min(upper[i], -b / a)
    if not (np.all(np.isfinite(lower)) and np.all(np.isfinite(upper))):
        return None
    return lower, upper


def _projector(pop: POPInstance):
    """(projection, sampler) for box or union-of-balls feasible sets, or None."""
    fs = pop.feasible_set
    if fs is None:
        box = detect_box(pop)
        if box is not None:
            fs = {"kind": "box", "lower": box[0].tolist(), "upper": box[1].tolist()}
    if fs is None:
        return None
    if fs["kind"] == "box":
        lo, hi = np.asarray(fs["lower"], float), np.asarray(fs["upper"], float)

        def project(x):
            return np.clip(x, lo, hi)

        def sample(rng):
            return lo + (hi - lo) * rng.random(len(lo))

        return project, sample
    if fs["kind"] == "balls":
        centers = [np.asarray(c, float) for c in fs["centers"]]
        radii = [float(r) for r in fs["radii"]]

        def project(x):
            best, best_d = None, np.inf
            for c, r in zip(centers, radii):
                v = x - c
                nv = np.linalg.norm(v)
                # stay strictly inside by a hair so the product constraint is not violated by rounding
                p = x if nv <= r else c + v * (r * (1 - 1e-12) / nv)
                dist = np.linalg.norm(p - x)
                if dist < best_d:
                    best, best_d = p, dist
            return best

        def sample(rng):
            j = rng.integers(len(centers))
            v = rng.standard_normal(len(centers[j]))
            v *= radii[j] * rng.random() ** (1 / len(v)) / np.linalg.norm(v)
            return centers[j] + v

        return project, sample
    raise ValueError(f"unknown feasible set kind {fs['kind']!r}")


def projected_gradient(f: Polynomial, x0, project, max_iters: int = 2000, tol: float = 1e-10):
    """Projected gradient descent with Armijo backtracking along the projection arc."""
    x = project(np.asarray(x0, dtype=float))
    fx = f(x)
    t = 1.0
    for _ in range(max_iters):
        g = f.gradient(x)
        t = min(t * 2.0, 1e3)
        while True:
            xn = project(x - t * g)
            fn = f(xn)
            if fn <= fx + 1e-4 * g @ (xn - x) or t < 1e-14:
                break
            t *= 0.5
        step = np.linalg.norm(xn - x)
        improved = fn < fx
        if improved:
            x, fx = xn, fn
        if step <= tol * (1 + np.linalg.norm(x)) or not improved:
            break
    return x, fx


def _slsqp(pop: POPInstance, x0):
    f = pop.objective
    cons = []
    for g, eq in zip(pop.constraints, pop.eq_mask):
        cons.append({"type": "eq" if eq else "ineq", "fun": g, "jac": g.gradient})
    res = minimize(f, x0, jac=f.gradient, constraints=cons, method="SLSQP", options={"maxiter": 500, "ftol": 1e-12})
    return np.asarray(res.x, dtype=float)


def local_solve(
    pop: POPInstance,
    starts: int = 50,
    seed: int = 0,
    start: Sequence[float] | None = None,
    feas_tol: float = 1e-8,
) -> tuple:
    """Best feasible local minimizer over multistarts; returns (x, f(x)).

    Box and union-of-balls sets use projected gradient with Armijo
    backtracking.  Other constraint sets fall back to SLSQP from the same
    starts.  ``start`` (if given) is used as the first starting point.
    """
    rng = make_rng(seed)
    proj = _projector(pop)
    pts = []
    if start is not None:
        pts.append(np.asarray(start, dtype=float))
    if proj is not None:
        project, sample = proj
        pts.extend(sample(rng) for _ in range(max(starts - len(pts), 0)))
    else:
        scale = 1.0 + (np.abs(pts[0]).max() if pts else 0.0)
        center = pts[0] if pts else np.zeros(pop.n)
        pts.extend(center + scale * rng.standard_normal(pop.n) for _ in range(max(starts - len(pts), 0)))
    best_x, best_f = None, np.inf
    for x0 in pts:
        if proj is not None:
            x, fx = projected_gradient(pop.objective, x0, proj[0])
        else:
            x = _slsqp(pop, x0)
            fx = pop.objective(x)
        if pop.max_violation(x) <= feas_tol and fx < best_f:
            best_x, best_f = x, fx
    if best_x is None:
        raise NoFeasibleStart("no feasible local solution found from any start")
    return best_x, float(best_f)


def make_local_solver(starts: int = 50, seed: int = 0):
    """Solver callable (pop, start) -> (x, f(x)): full multistart on the first call, single start afterwards."""
    calls = {"n": 0}

    def solver(pop, start):
        k = calls["n"]
        calls["n"] += 1
        return local_solve(pop, starts=starts if k == 0 else 1, seed=seed, start=start)

    return solver
