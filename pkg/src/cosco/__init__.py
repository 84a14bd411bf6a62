"""Primal-dual stochastic compositional optimization under expectation constraints."""

from .cc_scgd import build_H, composite_cons_grad_est, run_cc_scgd, sample_H_batch
from .core import (
    ProblemConstants,
    ProblemDims,
    RunRecord,
    SolverState,
    StepSchedule,
    default_schedule_cc,
    default_schedule_ec,
    update_average,
)
from .diagnostics import (
    MetricEstimate,
    dual_trace_stats,
    estimate_objective_mc,
    feasibility_residual,
    fit_loglog_slope,
)
from .ec_scgd import (
    composite_grad_est,
    dual_step,
    primal_step,
    run_ec_scgd,
    update_inner_tracker,
)
from .oracles import (
    CompositionalOracle,
    QueryCounter,
    ScenarioTable,
    SingleLevelOracle,
)
from .problems import (
    Problem,
    load_table,
    make_cvar_problem,
    make_kkt_problem_cc,
    make_kkt_problem_ec,
    make_mean_deviation_problem,
    make_moment_portfolio_problem,
)
from .projections import Ball, Box, NonnegBox, Product, Simplex, clip_nonneg, project

__version__ = "0.1.0"


def solve(problem, N, seed=None, x0=None, lambda0=None, schedule=None, **kwargs):
    """Run the solver matching ``problem.kind`` with its default schedule."""
    if problem.kind == "ec":
        schedule = schedule or default_schedule_ec(N)
        run = run_ec_scgd
    else:
        schedule = schedule or default_schedule_cc(N)
        run = run_cc_scgd
    return run(problem.oracle, problem.feasible_set, schedule, x0, lambda0, seed,
               f_star=problem.f_star, problem=problem.name, **kwargs)
