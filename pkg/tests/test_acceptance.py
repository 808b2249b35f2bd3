"""Acceptance criteria 1-9.

Each test records a one-line PASS/FAIL verdict in RESULTS; the lines are printed
in the pytest terminal summary (see conftest.py) and when this file is run as a
script.  Assertions use the stated tolerances; nothing is tuned per run.
"""

import math
import time

import numpy as np
import pytest

from cdkpop.cdk import build_christoffel, christoffel_mass, marginal_christoffel
from cdkpop.heur import H1Settings, H2Settings, run_h1, run_h2
from cdkpop.instances import (
    UNION_BALLS_LOCAL_POINT,
    example_fixture,
    gen_block_qcqp,
    gen_box_qcqp,
    union_balls_fixture,
)
from cdkpop.polycore import MomentSequence
from cdkpop.relax import extract_rank1_minimizer, flatness_check, solve_relaxation
from cdkpop.sdp import SolverSettings, Status, solve
from cdkpop.sparsity import CliqueDecomposition, run_h1cs, run_h2cs, solve_sparse_relaxation
from conftest import example_y1
from sdp_oracles import oracle_suite

RESULTS = {}


def record(k, ok, detail):
    RESULTS[k] = f"criterion {k}: {'PASS' if ok else 'FAIL'} - {detail}"
    print(RESULTS[k])
    return ok


def rel_close(a, b, rel):
    return abs(a - b) <= rel * abs(b)


def random_measure_moments(rng, n, order, atoms):
    pts = rng.uniform(-1, 1, size=(atoms, n))
    w = rng.dirichlet(np.ones(atoms))
    return MomentSequence(n, order, sum(wi * MomentSequence.dirac(p, order).values for wi, p in zip(w, pts)))


def test_criterion_1_example_relaxations():
    t0 = time.perf_counter()
    pop = example_fixture()
    r1 = solve_relaxation(pop, 1)
    r2 = solve_relaxation(pop, 2)
    rep = flatness_check(r2, pop.d_min)
    x = extract_rank1_minimizer(r2, pop)
    elapsed = time.perf_counter() - t0
    ok = (
        abs(r1.bound + 3) <= 1e-3
        and abs(r2.bound + 2) <= 1e-4
        and rep.flat and rep.rank == 1
        and x is not None and np.max(np.abs(x - 2.0)) <= 1e-3
        and elapsed < 5
    )
    record(1, ok, f"f_1={r1.bound:.6f} f_2={r2.bound:.8f} flat={rep.flat} rank={rep.rank} x={x} ({elapsed:.2f}s)")
    assert ok


def test_criterion_2_h1_example_trajectory():
    # epsilon = 0.05 is the threshold factor 0.95 of the figure; see the decisions ledger
    t0 = time.perf_counter()
    tr = run_h1(example_fixture(), H1Settings(1, epsilon=0.05, N=26, beta=1e-5))
    elapsed = time.perf_counter() - t0
    b = tr.bounds
    monotone = all(hi >= lo - 2e-8 * (1 + abs(lo)) for lo, hi in zip(b, b[1:]))
    start_ok = abs(b[0] + 3) <= 1e-3
    final_ok = rel_close(tr.final_bound, -2.09245, 2e-2)
    ok = monotone and start_ok and final_ok and elapsed < 30
    record(2, ok, f"start={b[0]:.5f} final={tr.final_bound:.5f} (target -2.09245 +-2%) after {len(b) - 1} iterations, "
                  f"termination={tr.termination.value}, monotone={monotone} ({elapsed:.1f}s)")
    assert ok


def test_criterion_3_h2_example():
    t0 = time.perf_counter()
    pop = example_fixture()
    a = run_h2(pop, H2Settings(1, tau=1.5), local_point=[2.0, 2.0])
    b = run_h2(pop, H2Settings(1, tau=1.1), local_point=[2.0, 2.0])
    elapsed = time.perf_counter() - t0
    ok = abs(a.final_bound + 2) <= 1e-3 and abs(b.final_bound + 3) <= 1e-3 and elapsed < 5
    record(3, ok, f"tau=1.5 -> {a.final_bound:.6f} (added {a.added_coordinates}), "
                  f"tau=1.1 -> {b.final_bound:.6f} (added {b.added_coordinates}) ({elapsed:.2f}s)")
    assert ok


def test_criterion_4_union_balls():
    t0 = time.perf_counter()
    pop = union_balls_fixture()
    f2 = solve_relaxation(pop, 2).bound
    f3 = solve_relaxation(pop, 3).bound
    # d_c = 2 needs a larger beta (kernel-dominated M_2); values calibrated and ledgered
    h1_dc2 = run_h1(pop, H1Settings(2, d_c=2, N=5, delta=0.0, epsilon=0.1, beta=0.5))
    h1_dc1 = run_h1(pop, H1Settings(2, d_c=1, N=5, delta=0.0))
    h2 = run_h2(pop, H2Settings(2, tau=1.5), local_point=UNION_BALLS_LOCAL_POINT)
    elapsed = time.perf_counter() - t0
    expected = (1.2059, 2.5729, 4.2559, 8.3069, 1.5804)
    tols = (5e-2, 5e-2, 5e-2, 5e-1, 5e-2)
    thr_ok = all(abs(g - p) <= t for g, p, t in zip(h2.thresholds, expected, tols))
    checks = {
        "f_2": rel_close(f2, -7.3367, 1e-2),
        "f_3": rel_close(f3, -5.7161, 1e-2),
        "h1_dc2": rel_close(h1_dc2.final_bound, -6.7029, 2e-2),
        "h1_dc1": rel_close(h1_dc1.final_bound, -6.6961, 2e-2),
        "thresholds": thr_ok,
        "added": h2.added_coordinates == [0],
        "h2": rel_close(h2.final_bound, -6.1883, 2e-2),
        "time": elapsed < 300,
    }
    ok = all(checks.values())
    record(4, ok, f"f_2={f2:.4f} f_3={f3:.4f} H1(d_c=2, calibrated eps=0.1 beta=0.5)={h1_dc2.final_bound:.4f} "
                  f"H1(d_c=1, defaults)={h1_dc1.final_bound:.4f} H2 thresholds="
                  f"{tuple(round(g, 4) for g in h2.thresholds)} added={h2.added_coordinates} "
                  f"H2={h2.final_bound:.4f} ({elapsed:.1f}s)"
                  + ("" if ok else f" failed: {[k for k, v in checks.items() if not v]}"))
    assert ok


def test_criterion_5_mass_identity():
    rng = np.random.default_rng(2024)
    worst = 0.0
    cases = [(example_y1(), 1, 1e-5)]
    for _ in range(50):
        n = int(rng.integers(1, 4))
        d = int(rng.integers(1, 3))
        y = random_measure_moments(rng, n, 2 * d, int(rng.integers(1, 10)))
        cases.append((y, d, float(10 ** rng.uniform(-6, -2))))
    for y, d, beta in cases:
        model = build_christoffel(y, d, beta)
        e = np.linalg.eigvalsh(y.moment_matrix(d))
        e = np.maximum(e, 0)
        e = e[e >= model.kernel_tol]
        worst = max(worst, abs(christoffel_mass(model, y) - np.sum(e / (e + beta))))
    ok = worst <= 1e-8
    record(5, ok, f"{len(cases)} matrices, max |L_y(range part) - sum e/(e+beta)| = {worst:.2e}")
    assert ok


def test_criterion_6_stationarity():
    rng = np.random.default_rng(7)
    worst_val, worst_grad = 0.0, 0.0
    for _ in range(20):
        n = int(rng.integers(1, 5))
        y = random_measure_moments(rng, n, 2, n + 1 + int(rng.integers(0, 5)))
        model = build_christoffel(y, 1, 0.0)
        xhat = y.first_moments()
        h = 1e-6
        grad = np.array([(model(xhat + h * e) - model(xhat - h * e)) / (2 * h) for e in np.eye(n)])
        worst_val = max(worst_val, abs(model(xhat) - 1.0))
        worst_grad = max(worst_grad, float(np.linalg.norm(grad)))
    ok = worst_val <= 1e-6 and worst_grad <= 1e-5
    record(6, ok, f"20 invertible M_1: max |Lambda_1(xhat) - 1| = {worst_val:.2e}, max |grad| = {worst_grad:.2e}")
    assert ok


def test_criterion_7_box_batch():
    t0 = time.perf_counter()
    above_f1, strict_ok, valid, rows = True, True, 0, []
    for seed in range(10):
        pop, _, _ = gen_box_qcqp(10, 0.0, seed)
        f1 = solve_relaxation(pop, 1).bound
        f2 = solve_relaxation(pop, 2).bound
        tr = run_h1(pop, H1Settings(1, epsilon=0.05))
        ft = tr.final_bound
        above_f1 &= ft >= f1 - 1e-7 * (1 + abs(f1))
        if f2 > f1 + 1e-4 and not ft > f1:
            strict_ok = False
            rows.append(f"seed {seed} not improved ({tr.termination.value}, f_2 - f_1 = {f2 - f1:.2e})")
        if ft <= f2 + 1e-4:
            valid += 1
        else:
            rows.append(f"seed {seed} invalid ({ft:.4f} > f_2 = {f2:.4f}, ub = {tr.ub:.4f})")
    elapsed = time.perf_counter() - t0
    ok = above_f1 and strict_ok and valid >= 8 and elapsed < 600
    record(7, ok, f"f~_1 >= f_1 on all: {above_f1}; strict improvement where f_2 > f_1 + 1e-4: {strict_ok}; "
                  f"valid {valid}/10 ({elapsed:.0f}s)" + (f"; {'; '.join(rows)}" if rows else ""))
    assert ok


def test_criterion_8_sparse_equivalence():
    t0 = time.perf_counter()
    bound_ok, trace_ok, worst = True, True, 0.0
    for seed in range(5):
        pop, dec, _, _ = gen_block_qcqp(2, 5, 2, seed)
        f1 = solve_relaxation(pop, 1).bound
        bound_ok &= solve_sparse_relaxation(pop, dec, 1).bound <= f1 + 1e-6 * (1 + abs(f1))
        single = CliqueDecomposition.from_cliques(pop, [list(range(pop.n))])
        s1 = H1Settings(1, epsilon=0.05, beta=1e-4)
        a, b = run_h1(pop, s1), run_h1cs(pop, single, s1)
        xbar = np.asarray(a.iterations[0].x_local)
        c = run_h2(pop, H2Settings(1), local_point=xbar)
        e = run_h2cs(pop, single, H2Settings(1), local_point=xbar)
        for p, q in ((a, b), (c, e)):
            same_len = len(p.bounds) == len(q.bounds)
            trace_ok &= same_len and p.termination == q.termination
            if same_len:
                worst = max(worst, max(abs(u - v) / (1 + abs(u)) for u, v in zip(p.bounds, q.bounds)))
    trace_ok &= worst <= 1e-6
    elapsed = time.perf_counter() - t0
    ok = bound_ok and trace_ok and elapsed < 120
    record(8, ok, f"f_1^cs <= f_1 on 5 instances: {bound_ok}; single-clique traces match: {trace_ok} "
                  f"(max rel bound difference {worst:.1e}) ({elapsed:.1f}s)")
    assert ok


def test_criterion_9_sdp_oracles():
    settings = SolverSettings()
    worst, invariants = 0.0, True
    suite = oracle_suite()
    for name, prog, opt in suite:
        sol = solve(prog, settings)
        worst = max(worst, abs(sol.primal_objective - opt), abs(sol.dual_objective - opt))
        invariants &= sol.status == Status.OPTIMAL
        for rec in sol.log:
            invariants &= rec["adjusted_gap"] >= -1e-9
            invariants &= all(c >= -1e-9 for c in rec["complementarity"])
        for Xb, Sb in zip(sol.X, sol.S):
            invariants &= abs(np.vdot(Xb, Sb)) <= 10 * settings.tol_gap * (1 + abs(sol.objective))
    ok = worst <= 1e-6 and invariants
    record(9, ok, f"{len(suite)} programs, max objective error {worst:.1e}, "
                  f"duality/complementarity invariants on every iterate: {invariants}")
    assert ok


if __name__ == "__main__":
    for name, fn in sorted((k, v) for k, v in globals().items() if k.startswith("test_criterion")):
        try:
            fn()
        except AssertionError:
            pass
