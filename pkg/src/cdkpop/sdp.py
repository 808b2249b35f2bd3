"""Standard-form semidefinite programs and an embedded primal-dual interior-point solver.

A :class:`ConicProgram` is the primal-dual pair::

    (P)  minimize   <C, X>        subject to  <A_i, X> = b_i,  X in K
    (D)  maximize   b^T y         subject to  C - sum_i y_i A_i = S,  S in K

where K is a product of PSD blocks and one nonnegative-orthant block.  Moment
relaxations are written on the (D) side: ``y`` are the pseudo-moments and the
slack blocks ``S`` are the moment and localizing matrices.

Constraint data for a PSD block of size k is stored as a sparse ``m x k*k``
matrix whose i-th row is ``vec(A_i)`` (row-major), so that ``A(X) = A_b @
vec(X)`` and ``A^*(y) = reshape(A_b^T y)``.
"""

from __future__ import annotations

import enum
import re
import logging
import os
from dataclasses import dataclass, field
from typing import Sequence

import numpy as np
import scipy.linalg as sla
import scipy.sparse as sp

log = logging.getLogger(__name__)

SYMMETRY_TOL = 1e-10


class Status(str, enum.Enum):
    OPTIMAL = "Optimal"
    NEAR_OPTIMAL = "NearOptimal"
    # the (D)/moment side is infeasible; certificate X >= 0, A(X) = 0, <C, X> < 0
    INFEASIBLE = "Infeasible"
    # the (D)/moment side is unbounded; certificate y with b^T y > 0, -A^*(y) in K
    UNBOUNDED = "Unbounded"
    NUMERICAL_FAILURE = "NumericalFailure"


@dataclass(frozen=True)
class SolverSettings:
    tol_gap: float = 1e-8
    tol_feas: float = 1e-8
    max_iters: int = 200
    step_fraction: float = 0.98

    def __post_init__(self):
        if self.tol_gap <= 0 or self.tol_feas <= 0:
            raise ValueError("tolerances must be positive")
        if not 0 < self.step_fraction < 1:
            raise ValueError("step_fraction must lie in (0, 1)")
        if self.max_iters < 1:
            raise ValueError("max_iters must be at least 1")

    @classmethod
    def from_env(cls, **overrides) -> "SolverSettings":
        """Defaults, with both tolerances replaced by $CDKPOP_SDP_TOL when set."""
        tol = os.environ.get("CDKPOP_SDP_TOL")
        kwargs = {}
        if tol:
            kwargs = {"tol_gap": float(tol), "tol_feas": float(tol)}
        kwargs.update(overrides)
        return cls(**kwargs)


@dataclass
class ConicProgram:
    psd_sizes: list
    C_psd: list
    A_psd: list
    b: np.ndarray
    lp_size: int = 0
    C_lp: np.ndarray = None
    A_lp: sp.csr_matrix = None
    labels: dict = field(default_factory=dict)

    def __post_init__(self):
        self.b = np.asarray(self.b, dtype=float)
        m = self.b.shape[0]
        self.C_psd = [np.asarray(C, dtype=float) for C in self.C_psd]
        self.A_psd = [sp.csr_matrix(A) for A in self.A_psd]
        if self.C_lp is None:
            self.C_lp = np.zeros(self.lp_size)
        self.C_lp = np.asarray(self.C_lp, dtype=float)
        if self.A_lp is None:
            self.A_lp = sp.csr_matrix((m, self.lp_size))
        self.A_lp = sp.csr_matrix(self.A_lp)

    @property
    def m(self) -> int:
        return self.b.shape[0]

    @property
    def barrier_degree(self) -> int:
        return sum(self.psd_sizes) + self.lp_size

    def validate(self):
        m = self.m
        if not (len(self.psd_sizes) == len(self.C_psd) == len(self.A_psd)):
            raise ValueError("block lists have inconsistent lengths")
        for j, (k, C, A) in enumerate(zip(self.psd_sizes, self.C_psd, self.A_psd)):
            if C.shape != (k, k):
                raise ValueError(f"block {j}: C has shape {C.shape}, expected ({k}, {k})")
            if A.shape != (m, k * k):
                raise ValueError(f"block {j}: A has shape {A.shape}, expected ({m}, {k * k})")
            if np.max(np.abs(C - C.T), initial=0.0) > SYMMETRY_TOL:
                raise ValueError(f"block {j}: C is not symmetric")
            perm = np.arange(k * k).reshape(k, k).T.ravel()
            if k and abs(A - A[:, perm]).max() > SYMMETRY_TOL:
                raise ValueError(f"block {j}: constraint matrices are not symmetric")
        if self.C_lp.shape != (self.lp_size,) or self.A_lp.shape != (m, self.lp_size):
            raise ValueError("linear block does not conform")

    # operators

    def apply_A(self, X: Sequence[np.ndarray], x_lp: np.ndarray) -> np.ndarray:
        out = self.A_lp @ x_lp
        for A, Xb in zip(self.A_psd, X):
            out = out + A @ Xb.ravel()
        return out

    def apply_At(self, y: np.ndarray):
        blocks = [(A.T @ y).reshape(k, k) for A, k in zip(self.A_psd, self.psd_sizes)]
        return blocks, self.A_lp.T @ y

    def primal_objective(self, X, x_lp) -> float:
        return float(sum(np.vdot(C, Xb) for C, Xb in zip(self.C_psd, X)) + self.C_lp @ x_lp)

    def slack(self, y):
        """S = C - A^*(y) for a given dual vector."""
        At, at = self.apply_At(y)
        return [C - M for C, M in zip(self.C_psd, At)], self.C_lp - at


@dataclass
class ConicSolution:
    status: Status
    X: list
    x_lp: np.ndarray
    y: np.ndarray
    S: list
    s_lp: np.ndarray
    primal_objective: float
    dual_objective: float
    gap: float
    primal_infeasibility: float
    dual_infeasibility: float
    iterations: int
    log: list = field(default_factory=list)

    @property
    def objective(self) -> float:
        return self.dual_objective

    @property
    def ok(self) -> bool:
        return self.status in (Status.OPTIMAL, Status.NEAR_OPTIMAL)


# spectral helpers


def _check_symmetric(M: np.ndarray, tol: float = SYMMETRY_TOL) -> np.ndarray:
    M = np.asarray(M, dtype=float)
    if M.ndim != 2 or M.shape[0] != M.shape[1]:
        raise ValueError(f"expected a square matrix, got shape {M.shape}")
    asym = np.max(np.abs(M - M.T), initial=0.0)
    if asym > tol * max(1.0, np.max(np.abs(M), initial=0.0)):
        raise ValueError(f"matrix is not symmetric (asymmetry {asym:.3e})")
    return (M + M.T) / 2


def spectral(M: np.ndarray):
    """Eigenvalues in descending order and the matching orthonormal eigenvectors (columns)."""
    M = _check_symmetric(M)
    w, V = np.linalg.eigh(M)
    return w[::-1].copy(), V[:, ::-1].copy()


def min_eigenvalue(M: np.ndarray) -> float:
    M = _check_symmetric(M)
    return float(np.linalg.eigvalsh(M)[0]) if M.size else 0.0


def numerical_rank(M: np.ndarray, tol: float = 1e-3, relative: bool = False) -> int:
    w = np.linalg.eigvalsh(_check_symmetric(M))
    if not w.size:
        return 0
    thresh = tol * max(w[-1], 0.0) if relative else tol
    return int(np.sum(w >= thresh))


# interior-point machinery


class _Block:
    """Per-PSD-block workspace for one solve."""

    def __init__(self, k: int, A: sp.csr_matrix):
        self.k = k
        self.A = A
        self.m = A.shape[0]
        # dense (m, k, k) copy of the constraint matrices restricted to the rows that touch the block
        rows = np.unique(A.nonzero()[0])
        self.rows = rows
        self.A_rows = A[rows]
        self.dense = self.A_rows.toarray().reshape(len(rows), k, k)

    def schur(self, W: np.ndarray) -> np.ndarray:
        """Contribution tr(A_i W A_j W) restricted to the touched rows."""
        r, k = len(self.rows), self.k
        if r == 0:
            return np.zeros((0, 0))
        AW = (self.dense.reshape(r * k, k) @ W).reshape(r, k, k)
        WAW = (np.ascontiguousarray(AW.transpose(0, 2, 1)).reshape(r * k, k) @ W).reshape(r, k * k)
        return np.asarray(self.A_rows @ WAW.T)


def _nt_scaling(X: np.ndarray, S: np.ndarray):
    """Nesterov-Todd scaling: returns G, G^{-1} and the scaled diagonal d with W = G G^T."""
    L = np.linalg.cholesky(X)
    R = np.linalg.cholesky(S)
    U, d, Vt = np.linalg.svd(R.T @ L)
    sq = np.sqrt(d)
    G = (L @ Vt.T) / sq[None, :]
    Ginv = (Vt * sq[:, None]) @ sla.solve_triangular(L, np.eye(len(d)), lower=True)
    return G, Ginv, d


def _max_step(X: np.ndarray, dX: np.ndarray) -> float:
    """Largest alpha with X + alpha dX PSD (X positive definite); inf if unbounded."""
    if X.size == 0:
        return np.inf
    L = np.linalg.cholesky(X)
    Li = sla.solve_triangular(L, np.eye(X.shape[0]), lower=True)
    T = Li @ dX @ Li.T
    lam = np.linalg.eigvalsh((T + T.T) / 2)[0]
    return np.inf if lam >= 0 else -1.0 / lam


def _max_step_lp(x: np.ndarray, dx: np.ndarray) -> float:
    neg = dx < 0
    if not neg.any():
        return np.inf
    return float(np.min(-x[neg] / dx[neg]))


def _safe_cholesky(X: np.ndarray) -> np.ndarray:
    X = (X + X.T) / 2
    try:
        np.linalg.cholesky(X)
        return X
    except np.linalg.LinAlgError:
        w, V = np.linalg.eigh(X)
        w = np.maximum(w, 1e-14 * max(1.0, w[-1]))
        return (V * w) @ V.T


class _SchurSolver:
    def __init__(self, M: np.ndarray):
        n = M.shape[0]
        self.fallback = None
        diag = np.abs(np.diag(M)) if n else np.zeros(0)
        scale = max(1.0, float(diag.max(initial=0.0)))
        for shift in (0.0, 1e-14, 1e-12, 1e-10):
            try:
                self.factor = sla.cho_factor(M + shift * scale * np.eye(n), lower=True, check_finite=False)
                return
            except (np.linalg.LinAlgError, ValueError):
                continue
        self.factor = None
        self.fallback = M

    def solve(self, h: np.ndarray) -> np.ndarray:
        if self.factor is not None:
            return sla.cho_solve(self.factor, h, check_finite=False)
        return np.linalg.lstsq(self.fallback, h, rcond=None)[0]


def _initial_point(prog: ConicProgram):
    b_norm = np.abs(prog.b)
    a_norms = np.zeros(prog.m)
    for A in prog.A_psd:
        a_norms += np.asarray(A.multiply(A).sum(axis=1)).ravel()
    a_norms += np.asarray(prog.A_lp.multiply(prog.A_lp).sum(axis=1)).ravel()
    a_norms = np.sqrt(a_norms)
    c_norm = max([np.linalg.norm(C) for C in prog.C_psd] + [np.linalg.norm(prog.C_lp), 0.0])
    X, S = [], []
    for k in prog.psd_sizes:
        xi = max(10.0, np.sqrt(k), k * float(np.max((1 + b_norm) / (1 + a_norms), initial=1.0)))
        eta = max(10.0, np.sqrt(k), c_norm, float(a_norms.max(initial=0.0)))
        X.append(xi * np.eye(k))
        S.append(eta * np.eye(k))
    kl = max(prog.lp_size, 1)
    xi = max(10.0, np.sqrt(kl), kl * float(np.max((1 + b_norm) / (1 + a_norms), initial=1.0)))
    eta = max(10.0, np.sqrt(kl), c_norm, float(a_norms.max(initial=0.0)))
    return X, xi * np.ones(prog.lp_size), np.zeros(prog.m), S, eta * np.ones(prog.lp_size)


def solve(prog: ConicProgram, settings: SolverSettings | None = None) -> ConicSolution:
    """Mehrotra predictor-corrector interior-point method with Nesterov-Todd scaling.

    Starts from scaled identity blocks (infeasible start).  Every iterate is
    recorded in ``solution.log`` with objectives, residuals and the per-block
    complementarity ``<X_b, S_b>``.
    """
    settings = settings or SolverSettings.from_env()
    prog.validate()
    m = prog.m
    nu = max(prog.barrier_degree, 1)
    blocks = [_Block(k, A) for k, A in zip(prog.psd_sizes, prog.A_psd)]
    X, x, y, S, s = _initial_point(prog)
    b_scale = 1.0 + np.linalg.norm(prog.b)
    c_scale = 1.0 + np.sqrt(sum(np.sum(C * C) for C in prog.C_psd) + np.sum(prog.C_lp**2))
    history = []
    status = Status.NUMERICAL_FAILURE
    best = None

    def snapshot():
        return ([Xb.copy() for Xb in X], x.copy(), y.copy(), [Sb.copy() for Sb in S], s.copy())

    it = 0
    for it in range(settings.max_iters + 1):
        rp = prog.b - prog.apply_A(X, x)
        At, at = prog.apply_At(y)
        Rd = [C - Sb - M for C, Sb, M in zip(prog.C_psd, S, At)]
        rd_lp = prog.C_lp - s - at
        pobj = prog.primal_objective(X, x)
        dobj = float(prog.b @ y)
        comp = [float(np.vdot(Xb, Sb)) for Xb, Sb in zip(X, S)]
        comp_lp = float(x @ s)
        total_comp = sum(comp) + comp_lp
        mu = total_comp / nu
        pinf = float(np.linalg.norm(rp) / b_scale)
        dinf = float(np.sqrt(sum(np.sum(R * R) for R in Rd) + np.sum(rd_lp**2)) / c_scale)
        denom = 1.0 + abs(pobj) + abs(dobj)
        gap = max(abs(pobj - dobj), total_comp) / denom
        # pobj - dobj = <X, S> - y^T rp + <Rd, X>; the residual-adjusted gap below equals <X, S> >= 0
        adjusted = pobj - dobj + float(y @ rp) - sum(float(np.vdot(R, Xb)) for R, Xb in zip(Rd, X)) - float(rd_lp @ x)
        history.append(
            {
                "iter": it,
                "adjusted_gap": adjusted,
                "primal_objective": pobj,
                "dual_objective": dobj,
                "gap": gap,
                "primal_infeasibility": pinf,
                "dual_infeasibility": dinf,
                "complementarity": comp + ([comp_lp] if prog.lp_size else []),
                "mu": mu,
            }
        )
        merit = max(gap / settings.tol_gap, pinf / settings.tol_feas, dinf / settings.tol_feas)
        if best is None or merit < best[0]:
            best = (merit, it, snapshot(), pobj, dobj, gap, pinf, dinf)
        if gap <= settings.tol_gap and pinf <= settings.tol_feas and dinf <= settings.tol_feas:
            status = Status.OPTIMAL
            break
        # infeasibility certificates
        x_norm = np.sqrt(sum(np.sum(Xb * Xb) for Xb in X) + np.sum(x * x))
        if pobj < 0 and x_norm > 1e8:
            ax = np.linalg.norm(prog.b - rp)
            if ax / -pobj < 1e-6:
                status = Status.INFEASIBLE
                break
        y_norm = np.linalg.norm(y)
        if dobj > 0 and y_norm > 1e8:
            resid = np.sqrt(sum(np.sum((M + Sb) ** 2) for M, Sb in zip(At, S)) + np.sum((at + s) ** 2))
            if resid / dobj < 1e-6:
                status = Status.UNBOUNDED
                break
        if it == settings.max_iters:
            break

        try:
            scal = [_nt_scaling(Xb, Sb) for Xb, Sb in zip(X, S)]
        except np.linalg.LinAlgError:
            log.debug("scaling failed at iteration %d", it)
            break
        Ws = [G @ G.T for G, _, _ in scal]
        w_lp = x / s if prog.lp_size else np.zeros(0)

        M = np.zeros((m, m))
        for blk, W in zip(blocks, Ws):
            if len(blk.rows):
                M[np.ix_(blk.rows, blk.rows)] += blk.schur(W)
        if prog.lp_size:
            Al = prog.A_lp
            M += np.asarray((Al.multiply(w_lp[None, :]) @ Al.T).todense())
        M = (M + M.T) / 2
        schur = _SchurSolver(M)

        def direction(Rc, rc_lp):
            # dX + W dS W = Rc,  A(dX) = rp,  A^*(dy) + dS = Rd
            tmp = [Rcb - W @ Rdb @ W for Rcb, W, Rdb in zip(Rc, Ws, Rd)]
            tmp_lp = rc_lp - w_lp * rd_lp
            h = rp - prog.apply_A(tmp, tmp_lp)
            dy = schur.solve(h)
            Aty, aty = prog.apply_At(dy)
            dS = [Rdb - Mb for Rdb, Mb in zip(Rd, Aty)]
            ds = rd_lp - aty
            dX = [Rcb - W @ dSb @ W for Rcb, W, dSb in zip(Rc, Ws, dS)]
            dX = [(D + D.T) / 2 for D in dX]
            dx = rc_lp - w_lp * ds
            return dX, dx, dy, dS, ds

        def steps(dX, dx, dS, ds, frac):
            ap = min([_max_step(Xb, D) for Xb, D in zip(X, dX)] + [_max_step_lp(x, dx)])
            ad = min([_max_step(Sb, D) for Sb, D in zip(S, dS)] + [_max_step_lp(s, ds)])
            return min(1.0, frac * ap), min(1.0, frac * ad)

        # predictor
        Rc = [-Xb for Xb in X]
        rc_lp = -x
        dXa, dxa, dya, dSa, dsa = direction(Rc, rc_lp)
        try:
            ap, ad = steps(dXa, dxa, dSa, dsa, 1.0)
        except np.linalg.LinAlgError:
            break
        mu_aff = (
            sum(float(np.vdot(Xb + ap * D, Sb + ad * E)) for Xb, D, Sb, E in zip(X, dXa, S, dSa))
            + float((x + ap * dxa) @ (s + ad * dsa))
        ) / nu
        sigma = min(1.0, max(0.0, (mu_aff / mu) ** 3)) if mu > 0 else 0.0

        # corrector in the scaled space: dX~ + dS~ = L_V^{-1}(sigma mu I - V^2 - sym(dX~a dS~a))
        Rc = []
        for (G, Ginv, d), dX_, dS_ in zip(scal, dXa, dSa):
            tX = Ginv @ dX_ @ Ginv.T
            tS = G.T @ dS_ @ G
            corr = (tX @ tS + tS @ tX) / 2
            rhs = sigma * mu * np.eye(len(d)) - np.diag(d * d) - corr
            Z = 2.0 * rhs / (d[:, None] + d[None, :])
            Rc.append(G @ Z @ G.T)
        rc_lp = (sigma * mu - x * s - dxa * dsa) / s if prog.lp_size else np.zeros(0)
        dX, dx, dy, dS, ds = direction(Rc, rc_lp)
        try:
            ap, ad = steps(dX, dx, dS, ds, settings.step_fraction)
        except np.linalg.LinAlgError:
            break

        X = [_safe_cholesky(Xb + ap * D) for Xb, D in zip(X, dX)]
        x = x + ap * dx
        y = y + ad * dy
        S = [_safe_cholesky(Sb + ad * D) for Sb, D in zip(S, dS)]
        s = s + ad * ds
        if (prog.lp_size and (np.any(x <= 0) or np.any(s <= 0))) or not np.all(np.isfinite(y)):
            break

    if status in (Status.OPTIMAL, Status.INFEASIBLE, Status.UNBOUNDED):
        final = (X, x, y, S, s)
        pobj, dobj = history[-1]["primal_objective"], history[-1]["dual_objective"]
        gap, pinf, dinf = history[-1]["gap"], history[-1]["primal_infeasibility"], history[-1]["dual_infeasibility"]
    else:
        merit, _, final, pobj, dobj, gap, pinf, dinf = best
        if merit <= 1e3:
            status = Status.NEAR_OPTIMAL
    Xf, xf, yf, Sf, sf = final
    return ConicSolution(
        status=status,
        X=Xf,
        x_lp=xf,
        y=yf,
        S=Sf,
        s_lp=sf,
        primal_objective=pobj,
        dual_objective=dobj,
        gap=gap,
        primal_infeasibility=pinf,
        dual_infeasibility=dinf,
        iterations=it,
        log=history,
    )


# construction helpers


def lmi_program(
    c: np.ndarray,
    psd_blocks: Sequence,
    lp_block=None,
    labels: dict | None = None,
) -> ConicProgram:
    """Program for ``min c^T y  s.t.  F_b(y) = F_b0 + sum_i y_i F_bi PSD,  f(y) = f0 + F y >= 0``.

    ``psd_blocks`` holds pairs ``(F0, Fcoef)`` with ``F0`` dense ``k x k`` and
    ``Fcoef`` sparse ``m x k*k``; ``lp_block`` is a pair ``(f0, F)`` with ``F``
    sparse ``r x m``.  The returned program has ``C = F0``, ``A_i = -F_i``,
    ``b = -c``, so its dual objective equals ``-c^T y``.
    """
    c = np.asarray(c, dtype=float)
    m = c.shape[0]
    sizes, Cs, As = [], [], []
    for F0, Fc in psd_blocks:
        F0 = np.asarray(F0, dtype=float)
        sizes.append(F0.shape[0])
        Cs.append(F0)
        As.append(-sp.csr_matrix(Fc, shape=(m, F0.size)))
    if lp_block is not None and len(lp_block[0]):
        f0, F = lp_block
        f0 = np.asarray(f0, dtype=float)
        lp_size = f0.shape[0]
        A_lp = -sp.csr_matrix(F, shape=(lp_size, m)).T
    else:
        lp_size, f0, A_lp = 0, None, None
    return ConicProgram(
        psd_sizes=sizes, C_psd=Cs, A_psd=As, b=-c, lp_size=lp_size, C_lp=f0, A_lp=A_lp,
        labels=dict(labels or {}),
    )


def write_sdpa(prog: ConicProgram, path) -> None:
    """Write the program in sparse SDPA format (.dat-s).

    SDPA's primal is ``min sum c_i x_i  s.t.  sum_i F_i x_i - F_0 PSD`` and its
    dual is ``max <F_0, Y>  s.t.  <F_i, Y> = c_i``.  Mapping our (D) onto SDPA's
    primal: ``x = y``, ``c_i = -b_i``, ``F_0 = -C``, ``F_i = -A_i``.
    """
    m = prog.m
    nblocks = len(prog.psd_sizes) + (1 if prog.lp_size else 0)
    struct = [str(k) for k in prog.psd_sizes] + ([str(-prog.lp_size)] if prog.lp_size else [])
    lines = [
        '"cdkpop export"',
        str(m),
        str(nblocks),
        " ".join(struct),
        " ".join(f"{-v:.17g}" for v in prog.b),
    ]
    entries = []
    for j, (k, C, A) in enumerate(zip(prog.psd_sizes, prog.C_psd, prog.A_psd), start=1):
        for p in range(k):
            for q in range(p, k):
                if C[p, q] != 0:
                    entries.append((0, j, p + 1, q + 1, -C[p, q]))
        coo = A.tocoo()
        for i, col, v in zip(coo.row, coo.col, coo.data):
            p, q = divmod(int(col), k)
            if p <= q and v != 0:
                entries.append((int(i) + 1, j, p + 1, q + 1, -v))
    if prog.lp_size:
        j = len(prog.psd_sizes) + 1
        for p in np.nonzero(prog.C_lp)[0]:
            entries.append((0, j, p + 1, p + 1, -prog.C_lp[p]))
        coo = prog.A_lp.tocoo()
        for i, col, v in zip(coo.row, coo.col, coo.data):
            if v != 0:
                entries.append((int(i) + 1, j, int(col) + 1, int(col) + 1, -v))
    entries.sort()
    lines.extend(f"{i} {j} {p} {q} {v:.17g}" for i, j, p, q, v in entries)
    with open(path, "w") as fh:
        fh.write("\n".join(lines) + "\n")


def read_sdpa(path) -> ConicProgram:
    """Inverse of :func:`write_sdpa` for sparse SDPA files with one optional LP block."""
    with open(path) as fh:
        raw = [ln.strip() for ln in fh if ln.strip() and ln.strip()[0] not in '"*']

    def tokens(line):
        return re.sub(r"[,{}()]", " ", line).split()

    m = int(tokens(raw[0])[0])
    nblocks = int(tokens(raw[1])[0])
    struct = [int(t) for t in tokens(raw[2])[:nblocks]]
    c = np.array([float(t) for t in tokens(raw[3])[:m]])
    psd = [k for k in struct if k > 0]
    lp_size = sum(-k for k in struct if k < 0)
    # map block number to psd ordinal
    ordinal, psd_ord = 0, {}
    for j, k in enumerate(struct, start=1):
        if k > 0:
            psd_ord[j] = ordinal
            ordinal += 1
    C = [np.zeros((k, k)) for k in psd]
    A = [dict(rows=[], cols=[], vals=[]) for _ in psd]
    C_lp = np.zeros(lp_size)
    lp_rows, lp_cols, lp_vals = [], [], []
    for ln in raw[4:]:
        t = tokens(ln)
        i, j, p, q, v = int(t[0]), int(t[1]), int(t[2]) - 1, int(t[3]) - 1, float(t[4])
        if struct[j - 1] > 0:
            b_ = psd_ord[j]
            k = psd[b_]
            if i == 0:
                C[b_][p, q] = C[b_][q, p] = -v
            else:
                for pp, qq in {(p, q), (q, p)}:
                    A[b_]["rows"].append(i - 1)
                    A[b_]["cols"].append(pp * k + qq)
                    A[b_]["vals"].append(-v)
        else:
            if i == 0:
                C_lp[p] = -v
            else:
                lp_rows.append(i - 1)
                lp_cols.append(p)
                lp_vals.append(-v)
    A_psd = [
        sp.csr_matrix((a["vals"], (a["rows"], a["cols"])), shape=(m, k * k)) for a, k in zip(A, psd)
    ]
    A_lp = sp.csr_matrix((lp_vals, (lp_rows, lp_cols)), shape=(m, lp_size))
    return ConicProgram(psd_sizes=psd, C_psd=C, A_psd=A_psd, b=-c, lp_size=lp_size, C_lp=C_lp, A_lp=A_lp)
