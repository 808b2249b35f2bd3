"""Command-line batch runner: generate instances, run relaxations and heuristics, export grids.

Subcommands
    generate          write a problem instance (and clique file for block instances) as JSON
    run               solve relaxations or run H1/H2/H1CS/H2CS over one problem or a seeded batch
    christoffel-grid  evaluate a Christoffel polynomial on a rectangular grid, CSV output
    export-sdpa       write the order-d relaxation of a problem in SDPA sparse format
"""

from __future__ import annotations

import argparse
import json
import math
import sys
import time
from concurrent.futures import ProcessPoolExecutor
from dataclasses import dataclass, field
from pathlib import Path

import numpy as np

from .cdk import DEFAULT_KERNEL_TOL, build_christoffel, christoffel_grid, write_grid_csv
from .heur import (
    CSV_COLUMNS,
    H1Settings,
    H2Settings,
    HeuristicTrace,
    Termination,
    csv_row,
    relative_gap,
    run_h1,
    run_h2,
    write_csv,
)
from .instances import (
    example_fixture,
    gen_block_qcqp,
    gen_box_qcqp,
    local_solve,
    make_local_solver,
    uniform_box_moments,
    union_balls_fixture,
)
from .polycore import MomentSequence
from .relax import POPInstance, build_relaxation, solve_relaxation
from .sdp import SolverSettings, Status, write_sdpa
from .sparsity import CliqueDecomposition, detect_cliques, run_h1cs, run_h2cs

FAMILIES = ("dense-box", "sparse-box", "block", "union-balls", "example")
MODES = ("relax", "h1", "h2", "h1cs", "h2cs", "christoffel-grid")


class CLIError(Exception):
    pass


def parse_seeds(text: str) -> list:
    """'3' -> [3]; '0-9' -> [0..9]; '1,4,7' -> [1, 4, 7] (ranges allowed inside lists)."""
    out = []
    for part in text.split(","):
        part = part.strip()
        if not part:
            continue
        if "-" in part:
            a, b = part.split("-", 1)
            out.extend(range(int(a), int(b) + 1))
        else:
            out.append(int(part))
    return out


def generate(family: str, seed: int = 0, n: int | None = None, s: float | None = None,
             p: int | None = None, nl=None, overlap=None) -> tuple:
    """(POPInstance, CliqueDecomposition or None) for a generator family."""
    if family in ("dense-box", "sparse-box"):
        if n is None:
            raise CLIError(f"{family} needs --n")
        if s is None:
            s = 0.0 if family == "dense-box" else 0.2
        if not 0 <= s <= 1:
            raise CLIError("--s must lie in [0, 1]")
        pop, _, _ = gen_box_qcqp(n, s, seed)
        return pop, None
    if family == "block":
        if p is None or nl is None or overlap is None:
            raise CLIError("block needs --p, --nl and --overlap")
        try:
            pop, cliques, _, _ = gen_block_qcqp(p, nl, overlap, seed)
        except ValueError as exc:
            raise CLIError(str(exc)) from exc
        return pop, cliques
    if family == "union-balls":
        return union_balls_fixture(), None
    if family == "example":
        return example_fixture(), None
    raise CLIError(f"unknown family {family!r}")


def _int_list(text):
    if text is None:
        return None
    vals = [int(v) for v in str(text).split(",") if v.strip()]
    return vals[0] if len(vals) == 1 else vals


def read_point(path) -> np.ndarray:
    """A point from a JSON list or a whitespace/comma separated text file."""
    raw = Path(path).read_text().strip()
    try:
        vals = json.loads(raw)
    except json.JSONDecodeError:
        vals = [float(v) for v in raw.replace(",", " ").split()]
    return np.asarray(vals, dtype=float).ravel()


# run


@dataclass
class RunConfig:
    mode: str
    order: int | None = None
    problem: str | None = None
    family: str | None = None
    gen_args: dict = field(default_factory=dict)
    cliques: str | None = None
    seeds: list = field(default_factory=lambda: [0])
    epsilon: float = 0.05
    tau: float = 1.5
    delta: float = 0.005
    max_iters: int = 15
    beta: float | None = None
    kernel_tol: float = DEFAULT_KERNEL_TOL
    dc: int | None = None
    local_point: str | None = None
    starts: int = 50
    out: str = "out"
    jobs: int = 1

    def validate(self):
        if self.mode not in MODES or self.mode == "christoffel-grid":
            raise CLIError(f"run supports modes {MODES[:-1]}; use the christoffel-grid subcommand for grids")
        if (self.problem is None) == (self.family is None):
            raise CLIError("give exactly one of --problem or --family")
        if self.family is not None and self.family not in FAMILIES:
            raise CLIError(f"unknown family {self.family!r}")


def _load_problem(cfg: RunConfig, seed: int) -> tuple:
    if cfg.problem is not None:
        pop = POPInstance.load(cfg.problem)
        cliques = CliqueDecomposition.load(cfg.cliques, pop) if cfg.cliques else None
        return pop, cliques
    pop, cliques = generate(cfg.family, seed=seed, **cfg.gen_args)
    if cfg.cliques:
        cliques = CliqueDecomposition.load(cfg.cliques, pop)
    return pop, cliques


def _relax_trace(pop: POPInstance, d: int, cfg: RunConfig, local_point) -> HeuristicTrace:
    t0 = time.perf_counter()
    res = solve_relaxation(pop, d, SolverSettings.from_env())
    trace = HeuristicTrace("relax")
    trace.initial_bound = trace.final_bound = res.bound
    if local_point is not None:
        ub = float(pop.objective(local_point))
    else:
        try:
            _, ub = local_solve(pop, starts=cfg.starts, seed=0, start=res.y.first_moments() if res.ok else None)
        except Exception:
            ub = math.nan
    trace.ub = ub
    trace.gap_before = trace.gap_after = relative_gap(ub, res.bound) if math.isfinite(res.bound) else math.inf
    trace.termination = Termination.SOLVER_FAILURE if res.status == Status.NUMERICAL_FAILURE else None
    trace.settings = {"d": d, "status": res.status.value}
    trace.wall_time_ms = (time.perf_counter() - t0) * 1e3
    return trace


def run_one(cfg: RunConfig, seed: int) -> tuple:
    """Run one seed; returns (csv row, trace json)."""
    pop, cliques = _load_problem(cfg, seed)
    d = cfg.order if cfg.order is not None else pop.d_min
    if d < pop.d_min:
        raise CLIError(f"--order {d} is below d_min = {pop.d_min}")
    point = read_point(cfg.local_point) if cfg.local_point else None
    if point is not None and point.shape != (pop.n,):
        raise CLIError(f"local point has {point.size} coordinates, problem has n={pop.n}")
    solver_settings = SolverSettings.from_env()
    local = make_local_solver(starts=cfg.starts)
    if cfg.mode == "relax":
        trace = _relax_trace(pop, d, cfg, point)
    elif cfg.mode in ("h1", "h1cs"):
        s = H1Settings(d, epsilon=cfg.epsilon, delta=cfg.delta, N=cfg.max_iters, d_c=cfg.dc,
                       beta=1e-5 if cfg.beta is None else cfg.beta, kernel_tol=cfg.kernel_tol)
        if cfg.mode == "h1":
            trace = run_h1(pop, s, local, solver_settings, local_point=point)
        else:
            trace = run_h1cs(pop, detect_cliques(pop, cliques), s, local, solver_settings, local_point=point)
    else:
        s = H2Settings(d, tau=cfg.tau, beta=1e-3 if cfg.beta is None else cfg.beta, kernel_tol=cfg.kernel_tol)
        if cfg.mode == "h2":
            trace = run_h2(pop, s, point, local, solver_settings)
        else:
            trace = run_h2cs(pop, detect_cliques(pop, cliques), s, point, local, solver_settings)
    row = csv_row(trace, seed)
    if cfg.mode == "relax":
        row["status"] = trace.settings["status"] if trace.termination is None else trace.termination.value
    data = trace.to_json()
    data["seed"] = seed
    data["problem"] = pop.name
    return row, data


def _run_seed(args):
    cfg, seed = args
    return run_one(cfg, seed)


def cmd_run(cfg: RunConfig) -> int:
    cfg.validate()
    out = Path(cfg.out)
    out.mkdir(parents=True, exist_ok=True)
    seeds = cfg.seeds if cfg.family is not None else cfg.seeds[:1]
    jobs = [(cfg, seed) for seed in seeds]
    if cfg.jobs > 1 and len(jobs) > 1:
        with ProcessPoolExecutor(max_workers=cfg.jobs) as pool:
            results = list(pool.map(_run_seed, jobs))
    else:
        results = [_run_seed(j) for j in jobs]
    rows = []
    failed = False
    for (row, data), seed in zip(results, seeds):
        rows.append(row)
        failed |= row["status"] == Termination.SOLVER_FAILURE.value
        with open(out / f"trace_{cfg.mode}_seed{seed}.json", "w") as fh:
            json.dump(data, fh, indent=1)
        print(f"seed {seed}: f_d={row['f_d']} f_tilde_d={row['f_tilde_d']} ub={row['ub']} "
              f"gap {row['gap_before']}% -> {row['gap_after']}% [{row['status']}]")
    write_csv(rows, out / f"summary_{cfg.mode}.csv", CSV_COLUMNS)
    return 1 if failed else 0


# christoffel grid


def grid_source(args) -> MomentSequence:
    if args.moments:
        with open(args.moments) as fh:
            return MomentSequence.from_json(json.load(fh))
    if args.source == "uniform-square":
        return uniform_box_moments(2, args.degree)
    if args.source == "dirac":
        x = [float(v) for v in args.point.split(",")] if args.point else [0.0, 0.0]
        return MomentSequence.dirac(x, 2 * args.degree)
    if args.problem:
        pop = POPInstance.load(args.problem)
        res = solve_relaxation(pop, args.order or pop.d_min)
        return res.y
    raise CLIError("give --moments FILE, --source {uniform-square,dirac} or --problem FILE")


def cmd_christoffel_grid(args) -> int:
    y = grid_source(args)
    if y.n != 2:
        raise CLIError(f"grids are supported for n = 2 only (source has n = {y.n})")
    model = build_christoffel(y, args.degree, args.beta, args.kernel_tol)
    rows = christoffel_grid(model, tuple(args.xlim), tuple(args.ylim), args.num)
    write_grid_csv(rows, args.out)
    i = int(np.argmin(rows[:, 2]))
    print(f"wrote {len(rows)} points to {args.out}; minimum {rows[i, 2]:.6g} at ({rows[i, 0]:.4g}, {rows[i, 1]:.4g})")
    return 0


def cmd_generate(args) -> int:
    pop, cliques = generate(args.family, seed=args.seed, n=args.n, s=args.s, p=args.p,
                            nl=_int_list(args.nl), overlap=_int_list(args.overlap))
    out = Path(args.out)
    out.mkdir(parents=True, exist_ok=True)
    stem = args.name or (args.family if args.family in ("union-balls", "example") else f"{args.family}_seed{args.seed}")
    path = out / f"{stem}.json"
    pop.save(path)
    msg = f"wrote {path}: n={pop.n}, {len(pop.constraints)} constraints, d_min={pop.d_min}"
    if cliques is not None:
        cpath = out / f"{stem}_cliques.json"
        cliques.save(cpath)
        msg += f"; {len(cliques.cliques)} cliques in {cpath}"
    print(msg)
    return 0


def cmd_export_sdpa(args) -> int:
    pop = POPInstance.load(args.problem)
    d = args.order or pop.d_min
    relax = build_relaxation(pop, d)
    write_sdpa(relax.program, args.out)
    prog = relax.program
    print(f"wrote {args.out}: {prog.b.size} variables, blocks {list(prog.psd_sizes)}, LP block {prog.lp_size}")
    return 0


def build_parser() -> argparse.ArgumentParser:
    ap = argparse.ArgumentParser(prog="cdkpop", description="Moment relaxations with Christoffel bound tightening")
    sub = ap.add_subparsers(dest="command", required=True)

    g = sub.add_parser("generate", help="write a problem instance as JSON")
    g.add_argument("family", choices=FAMILIES)
    g.add_argument("--n", type=int)
    g.add_argument("--s", type=float)
    g.add_argument("--p", type=int)
    g.add_argument("--nl", help="block size, or comma-separated sizes")
    g.add_argument("--overlap", help="overlap size, or comma-separated sizes")
    g.add_argument("--seed", type=int, default=0)
    g.add_argument("--name")
    g.add_argument("--out", default=".")

    r = sub.add_parser("run", help="relaxations and heuristics over a problem or a seeded batch")
    r.add_argument("--mode", choices=MODES[:-1], required=True)
    r.add_argument("--problem", help="POPInstance JSON")
    r.add_argument("--family", choices=FAMILIES, help="generate instances instead of loading one")
    r.add_argument("--n", type=int)
    r.add_argument("--s", type=float)
    r.add_argument("--p", type=int)
    r.add_argument("--nl")
    r.add_argument("--overlap")
    r.add_argument("--cliques", help="CliqueDecomposition JSON")
    r.add_argument("--order", type=int)
    r.add_argument("--dc", type=int)
    r.add_argument("--epsilon", type=float, default=0.05)
    r.add_argument("--tau", type=float, default=1.5)
    r.add_argument("--delta", type=float, default=0.005)
    r.add_argument("--max-iters", type=int, default=15)
    r.add_argument("--beta", type=float, help="default 1e-5 for h1/h1cs, 1e-3 for h2/h2cs")
    r.add_argument("--kernel-tol", type=float, default=DEFAULT_KERNEL_TOL)
    r.add_argument("--seed", type=int)
    r.add_argument("--seeds", help="e.g. 0-9 or 1,3,5")
    r.add_argument("--local-point", help="file with the local point xbar (JSON list or text)")
    r.add_argument("--starts", type=int, default=50, help="local solver multistarts")
    r.add_argument("--jobs", type=int, default=1)
    r.add_argument("--out", default="out")

    c = sub.add_parser("christoffel-grid", help="Christoffel polynomial on a grid (n = 2)")
    c.add_argument("--moments", help="MomentSequence JSON")
    c.add_argument("--source", choices=("uniform-square", "dirac"))
    c.add_argument("--point", help="Dirac location, e.g. 0,0")
    c.add_argument("--problem", help="use y* of the relaxation of this problem")
    c.add_argument("--order", type=int)
    c.add_argument("--degree", type=int, default=1)
    c.add_argument("--beta", type=float, default=0.0)
    c.add_argument("--kernel-tol", type=float, default=DEFAULT_KERNEL_TOL)
    c.add_argument("--xlim", type=float, nargs=2, default=(-0.5, 1.5))
    c.add_argument("--ylim", type=float, nargs=2, default=(-0.5, 1.5))
    c.add_argument("--num", type=int, default=101)
    c.add_argument("--out", default="grid.csv")

    e = sub.add_parser("export-sdpa", help="write the order-d relaxation in SDPA sparse format")
    e.add_argument("--problem", required=True)
    e.add_argument("--order", type=int)
    e.add_argument("--out", default="relaxation.dat-s")
    return ap


def config_from_args(args) -> RunConfig:
    if args.seeds:
        seeds = parse_seeds(args.seeds)
    elif args.seed is not None:
        seeds = [args.seed]
    else:
        seeds = [0]
    gen_args = {}
    if args.family:
        gen_args = {"n": args.n, "s": args.s, "p": args.p, "nl": _int_list(args.nl), "overlap": _int_list(args.overlap)}
    return RunConfig(
        mode=args.mode, order=args.order, problem=args.problem, family=args.family, gen_args=gen_args,
        cliques=args.cliques, seeds=seeds, epsilon=args.epsilon, tau=args.tau, delta=args.delta,
        max_iters=args.max_iters, beta=args.beta, kernel_tol=args.kernel_tol, dc=args.dc,
        local_point=args.local_point, starts=args.starts, out=args.out, jobs=args.jobs,
    )


def main(argv=None) -> int:
    args = build_parser().parse_args(argv)
    try:
        if args.command == "generate":
            return cmd_generate(args)
        if args.command == "run":
            return cmd_run(config_from_args(args))
        if args.command == "christoffel-grid":
            return cmd_christoffel_grid(args)
        return cmd_export_sdpa(args)
    except (CLIError, ValueError, FileNotFoundError) as exc:
        print(f"error: {exc}", file=sys.stderr)
        return 2


if __name__ == "__main__":
    sys.exit(main())
