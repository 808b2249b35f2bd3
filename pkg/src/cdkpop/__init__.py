"""Moment-SOS relaxations of polynomial problems with Christoffel-kernel bound tightening."""

from .cdk import (
    ChristoffelModel,
    SublevelConstraints,
    build_christoffel,
    christoffel_eval,
    christoffel_grid,
    christoffel_mass,
    marginal_christoffel,
    spectral_mass,
    sublevel_constraints,
)
from .heur import H1Settings, H2Settings, HeuristicTrace, Termination, relative_gap, run_h1, run_h2
from .instances import (
    example_fixture,
    gen_block_qcqp,
    gen_box_qcqp,
    local_solve,
    uniform_box_moments,
    union_balls_fixture,
)
from .polycore import MomentSequence, Polynomial, basis_size, enumerate_basis, riesz_apply
from .relax import (
    OrderTooSmall,
    POPInstance,
    build_relaxation,
    extract_rank1_minimizer,
    flatness_check,
    solve_relaxation,
)
from .sdp import ConicProgram, SolverSettings, Status, solve
from .sparsity import (
    CliqueDecomposition,
    build_sparse_relaxation,
    detect_cliques,
    run_h1cs,
    run_h2cs,
    solve_sparse_relaxation,
)

__version__ = "0.1.0"
