"""
Primal-dual stochastic compositional gradient descent for problems with
single-level expected-value constraints::

    min_{x in X}  f1(E[f2(x, xi2)])   s.t.  E[g(x, zeta)] <= 0

Each iteration tracks ``E[f2(x_t)]`` with a weighted running average
``y``, takes a projected stochastic gradient step on the Lagrangian in
``x`` and a projected stochastic ascent step in the multiplier ``lambda``.
The output is the average of the iterates ``x_1, ..., x_N``.
"""

import math
import time
from dataclasses import dataclass
from typing import Callable, Optional

import numpy as np

from .core import RunRecord, StepSchedule
from .diagnostics import feasibility_residual


def update_inner_tracker(y, sample, tau):
    """Weighted average ``(sample + tau * y) / (1 + tau)``."""
    if tau < 0:
        raise ValueError(f"tau must be nonnegative, got {tau}")
    if np.shape(y) != np.shape(sample):
        raise ValueError(f"shape mismatch: tracker {np.shape(y)}, sample {np.shape(sample)}")
    return (sample + tau * y) / (1.0 + tau)


def composite_grad_est(f2_subgrad, f1_grad):
    """Chain-rule estimate ``subgrad f2 @ grad f1`` of the objective subgradient."""
    f2_subgrad = np.asarray(f2_subgrad)
    if f2_subgrad.ndim != 2 or f2_subgrad.shape[1] != np.shape(f1_grad)[0]:
        raise ValueError(
            f"cannot chain {f2_subgrad.shape} subgradient with {np.shape(f1_grad)} gradient"
        )
    return f2_subgrad @ f1_grad


def primal_step(x, obj_grad_est, cons_subgrad_est, lam, eta, feasible_set):
    """Projected step ``Proj_X[x - (obj_grad + cons_subgrad @ lam) / eta]``."""
    if not eta > 0:
        raise ValueError(f"eta must be positive, got {eta}")
    cons_subgrad_est = np.asarray(cons_subgrad_est)
    if cons_subgrad_est.shape != (np.size(x), np.size(lam)):
        raise ValueError(
            f"constraint subgradient has shape {cons_subgrad_est.shape}, "
            f"expected {(np.size(x), np.size(lam))}"
        )
    if np.shape(obj_grad_est) != np.shape(x):
        raise ValueError("objective gradient and iterate differ in shape")
    return feasible_set.project(x - (obj_grad_est + cons_subgrad_est @ lam) / eta)


def dual_step(lam, g_sample, alpha):
    """Projected ascent ``[lam + g_sample / alpha]_+``."""
    if not alpha > 0:
        raise ValueError(f"alpha must be positive, got {alpha}")
    if np.shape(lam) != np.shape(g_sample):
        raise ValueError(f"shape mismatch: lambda {np.shape(lam)}, sample {np.shape(g_sample)}")
    return np.maximum(lam + g_sample / alpha, 0.0)


@dataclass
class IterationLog:
    """Per-iteration snapshot passed to an ``on_iteration`` callback.

    ``y_prev``/``y`` are the tracker before and after the update and
    ``f2_value`` the sample that entered it (likewise ``z_prev``, ``z`` and
    ``g2_value`` for the compositional solver). ``x`` and ``lam`` are the new
    iterates.
    """

    t: int
    tau: float
    y_prev: np.ndarray
    y: np.ndarray
    f2_value: np.ndarray
    x: np.ndarray
    lam: np.ndarray
    rho: Optional[float] = None
    z_prev: Optional[np.ndarray] = None
    z: Optional[np.ndarray] = None
    g2_value: Optional[np.ndarray] = None
    H: Optional[np.ndarray] = None


def check_start(feasible_set, x0, lambda0, dims):
    """Validate and normalize the starting primal/dual pair."""
    x0 = feasible_set.center() if x0 is None else np.array(x0, dtype=float).reshape(-1)
    if x0.shape != (dims.d_x,):
        raise ValueError(f"x0 has shape {x0.shape}, expected ({dims.d_x},)")
    if not feasible_set.contains(x0):
        raise ValueError(f"x0 = {x0} is not in the feasible set {feasible_set!r}")
    lam0 = np.zeros(dims.m) if lambda0 is None else np.array(lambda0, dtype=float).reshape(-1)
    if lam0.size == 1 and dims.m > 1:
        lam0 = np.full(dims.m, lam0[0])
    if lam0.shape != (dims.m,):
        raise ValueError(f"lambda0 has shape {lam0.shape}, expected ({dims.m},)")
    if np.any(lam0 < 0):
        raise ValueError("lambda0 must be componentwise nonnegative")
    return x0, lam0


def finish_record(algorithm, oracle, schedule, problem, seed, x_sum, lam,
                  dual_trace, checkpoints, f_star, started):
    """Assemble a :class:`RunRecord` from the final accumulators."""
    N = schedule.N
    x_bar = x_sum / N
    if isinstance(seed, np.random.SeedSequence):
        entropy = seed.entropy
        seed = tuple(entropy) if isinstance(entropy, (list, tuple)) else entropy
    obj_gap, feas, source = exact_metrics(oracle, x_bar, f_star)
    return RunRecord(
        algorithm=algorithm,
        problem=problem,
        N=N,
        seed=seed,
        x_bar=x_bar,
        obj_gap=obj_gap,
        feas_resid=feas,
        dual_norm_max=float(dual_trace.max()),
        dual_norm_final=float(dual_trace[-1]),
        wall_ms=1e3 * (time.perf_counter() - started),
        metric_trace=checkpoints,
        dual_trace=dual_trace,
        lam_final=lam.copy(),
        x_sum=x_sum.copy(),
        metric_source=source,
    )


def exact_metrics(oracle, x_bar, f_star):
    """Gap and residual at ``x_bar`` from exact evaluators, ``None`` if absent."""
    if not getattr(oracle, "has_exact", False):
        return None, None, "none"
    gap = None
    if f_star is not None:
        gap = float(oracle.exact_objective(x_bar) - f_star)
    feas = feasibility_residual(oracle.exact_constraint(x_bar))
    return gap, feas, "exact"


def run_ec_scgd(oracle, feasible_set, schedule: StepSchedule, x0=None, lambda0=None,
                seed=None, *, f_star=None, problem="", checkpoints=True,
                on_iteration: Optional[Callable[[IterationLog], None]] = None):
    """Run the single-level constrained solver for ``schedule.N`` iterations.

    Parameters
    ----------
    oracle : SingleLevelOracle
        Sampling oracle; reseeded with ``seed`` when one is given.
    feasible_set : FeasibleSet
        Simple set ``X`` with exact projection.
    schedule : StepSchedule
        ``tau``, ``eta`` and ``alpha`` sequences and the horizon ``N``.
    x0 : array_like, optional
        Starting point in ``X``; defaults to ``feasible_set.center()``.
    lambda0 : array_like, optional
        Nonnegative starting multiplier, zero by default.
    seed : int or SeedSequence, optional
    f_star : float, optional
        Optimal value, used to report the objective gap.
    checkpoints : bool
        Record ``(t, gap, resid)`` of the running average at powers of two.
    on_iteration : callable, optional
        Receives an :class:`IterationLog` after every iteration.

    Returns
    -------
    RunRecord

    Notes
    -----
    Per iteration the oracle is queried five times, each with a fresh draw:
    ``f2`` twice at ``x_t`` (the first subgradient and the second value are
    used), ``grad f1`` once at ``y_{t+1}``, ``g`` once for the subgradient and
    once, after the primal step, for the value driving the dual step.
    """
    dims = oracle.dims
    if dims.d_z:
        raise ValueError("oracle has compositional constraints; use run_cc_scgd")
    x, lam = check_start(feasible_set, x0, lambda0, dims)
    if seed is not None:
        oracle.reseed(seed)
    N = schedule.N
    tau_of, eta_of, alpha_of = schedule.tau, schedule.eta, schedule.alpha
    sample_f2, sample_f1, sample_g = oracle.sample_f2, oracle.sample_f1, oracle.sample_g
    project = feasible_set.project
    track = checkpoints and getattr(oracle, "has_exact", False)

    started = time.perf_counter()
    y = np.zeros(dims.d_y)
    x_sum = np.zeros(dims.d_x)
    dual_trace = np.empty(N + 1)
    dual_trace[0] = math.sqrt(lam @ lam)
    trace = []
    next_mark = 1
    for t in range(N):
        tau, eta, alpha = tau_of(t), eta_of(t), alpha_of(t)
        if not (eta > 0 and alpha > 0 and tau >= 0):
            raise ValueError(f"invalid step sizes at t={t}: tau={tau}, eta={eta}, alpha={alpha}")
        _, f2_subgrad = sample_f2(x)
        f2_value, _ = sample_f2(x)
        y_prev = y
        y = (f2_value + tau * y) / (1.0 + tau)
        _, f1_grad = sample_f1(y)
        _, g_subgrad = sample_g(x)
        x_new = project(x - (f2_subgrad @ f1_grad + g_subgrad @ lam) / eta)
        g_value, _ = sample_g(x)
        lam = np.maximum(lam + g_value / alpha, 0.0)
        x = x_new
        x_sum += x
        dual_trace[t + 1] = math.sqrt(lam @ lam)
        if on_iteration is not None:
            on_iteration(IterationLog(t=t, tau=tau, y_prev=y_prev, y=y,
                                      f2_value=f2_value, x=x, lam=lam))
        if track and t + 1 == next_mark:
            gap, feas, _ = exact_metrics(oracle, x_sum / (t + 1), f_star)
            trace.append((t + 1, gap, feas))
            next_mark *= 2

    return finish_record("ec", oracle, schedule, problem, seed, x_sum, lam,
                         dual_trace, trace, f_star, started)
