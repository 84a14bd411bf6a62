"""
Primal-dual stochastic compositional gradient descent for problems whose
constraints are themselves two-level compositions::

    min_{x in X}  f1(E[f2(x, xi2)])   s.t.  E[g1(E[g2(x, zeta2)], zeta1)] <= 0

Besides the objective tracker ``y``, a second running average ``z`` tracks
``E[g2(x_t)]``. The dual step uses the linearization

    H = g1(z, zeta1) + grad g1(z, zeta1)^T (g2(x, zeta2) - z)

with ``zeta1``, ``zeta2`` drawn independently, which is an unbiased
estimate of ``g1(z) + grad g1(z)^T (g2(x) - z)``.
"""

import math
import time
from typing import Callable, Optional

import numpy as np

from .core import StepSchedule
from .ec_scgd import IterationLog, check_start, exact_metrics, finish_record


def build_H(g1_value, g1_grad, z, g2_value):
    """Linearized constraint estimate ``g1_value + g1_grad^T (g2_value - z)``."""
    g1_grad = np.asarray(g1_grad)
    if g1_grad.shape != (np.size(z), np.size(g1_value)) or np.shape(z) != np.shape(g2_value):
        raise ValueError(
            f"inconsistent shapes: value {np.shape(g1_value)}, grad {g1_grad.shape}, "
            f"z {np.shape(z)}, g2 {np.shape(g2_value)}"
        )
    return g1_value + g1_grad.T @ (g2_value - z)


def sample_H_batch(oracle, x, z, size):
    """``size`` independent draws of the linearized constraint estimator.

    Each draw pairs a fresh ``(g1, grad g1)`` sample at ``z`` with an
    independent ``g2`` sample at ``x``. Returns an array of shape ``(size, m)``.
    """
    z = np.asarray(z, dtype=float)
    g1 = oracle.sample_g1_batch(z, size)
    g2 = oracle.sample_g2_batch(np.asarray(x, dtype=float), size)
    return g1.value + np.einsum("kzm,kz->km", g1.grad, g2.value - z)


def composite_cons_grad_est(g2_subgrad, g1_grad):
    """Chain-rule estimate ``subgrad g2 @ grad g1`` of the constraint subgradient."""
    g2_subgrad, g1_grad = np.asarray(g2_subgrad), np.asarray(g1_grad)
    if g2_subgrad.ndim != 2 or g1_grad.ndim != 2 or g2_subgrad.shape[1] != g1_grad.shape[0]:
        raise ValueError(f"cannot chain {g2_subgrad.shape} with {g1_grad.shape}")
    return g2_subgrad @ g1_grad


def run_cc_scgd(oracle, feasible_set, schedule: StepSchedule, x0=None, lambda0=None,
                seed=None, *, f_star=None, problem="", checkpoints=True,
                on_iteration: Optional[Callable[[IterationLog], None]] = None):
    """Run the compositional-constraint solver for ``schedule.N`` iterations.

    Arguments are as for :func:`cosco.ec_scgd.run_ec_scgd`; ``oracle`` is a
    :class:`~cosco.oracles.CompositionalOracle` and ``schedule.rho`` drives
    the ``z`` tracker.

    Notes
    -----
    Draws per iteration, each independent: ``f2`` twice at ``x_t``
    (subgradient from the first, value from the second), ``g2`` three times
    at ``x_t`` (subgradient, value for the tracker, value for ``H``),
    ``grad f1`` once at ``y_{t+1}`` and ``g1`` twice at ``z_{t+1}`` (the
    gradient for the primal step, then a fresh value/gradient pair for
    ``H``).
    """
    dims = oracle.dims
    if not dims.d_z:
        raise ValueError("oracle has single-level constraints; use run_ec_scgd")
    x, lam = check_start(feasible_set, x0, lambda0, dims)
    if seed is not None:
        oracle.reseed(seed)
    N = schedule.N
    tau_of, rho_of = schedule.tau, schedule.rho
    eta_of, alpha_of = schedule.eta, schedule.alpha
    sample_f2, sample_f1 = oracle.sample_f2, oracle.sample_f1
    sample_g2, sample_g1 = oracle.sample_g2, oracle.sample_g1
    project = feasible_set.project
    track = checkpoints and getattr(oracle, "has_exact", False)

    started = time.perf_counter()
    y = np.zeros(dims.d_y)
    z = np.zeros(dims.d_z)
    x_sum = np.zeros(dims.d_x)
    dual_trace = np.empty(N + 1)
    dual_trace[0] = math.sqrt(lam @ lam)
    trace = []
    next_mark = 1
    for t in range(N):
        tau, rho = tau_of(t), rho_of(t)
        eta, alpha = eta_of(t), alpha_of(t)
        if not (eta > 0 and alpha > 0 and tau >= 0 and rho >= 0):
            raise ValueError(f"invalid step sizes at t={t}")
        _, f2_subgrad = sample_f2(x)
        f2_value, _ = sample_f2(x)
        _, g2_subgrad = sample_g2(x)
        g2_track, _ = sample_g2(x)
        g2_fresh, _ = sample_g2(x)
        y_prev, z_prev = y, z
        y = (f2_value + tau * y) / (1.0 + tau)
        z = (g2_track + rho * z) / (1.0 + rho)
        _, f1_grad = sample_f1(y)
        _, g1_grad = sample_g1(z)
        cons_subgrad = g2_subgrad @ g1_grad
        x_new = project(x - (f2_subgrad @ f1_grad + cons_subgrad @ lam) / eta)
        g1_value, g1_grad_h = sample_g1(z)
        H = g1_value + g1_grad_h.T @ (g2_fresh - z)
        lam = np.maximum(lam + H / alpha, 0.0)
        x = x_new
        x_sum += x
        dual_trace[t + 1] = math.sqrt(lam @ lam)
        if on_iteration is not None:
            on_iteration(IterationLog(t=t, tau=tau, y_prev=y_prev, y=y, f2_value=f2_value,
                                      x=x, lam=lam, rho=rho, z_prev=z_prev, z=z,
                                      g2_value=g2_track, H=H))
        if track and t + 1 == next_mark:
            gap, feas, _ = exact_metrics(oracle, x_sum / (t + 1), f_star)
            trace.append((t + 1, gap, feas))
            next_mark *= 2

    return finish_record("cc", oracle, schedule, problem, seed, x_sum, lam,
                         dual_trace, trace, f_star, started)
