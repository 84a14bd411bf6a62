"""
Convergence diagnostics: feasibility residual, Monte Carlo estimation of
objective values, log-log rate fits and multiplier-trace statistics.
"""

import math
from dataclasses import dataclass

import numpy as np


@dataclass(frozen=True)
class MetricEstimate:
    """A metric value with its standard error.

    ``exact`` marks values from closed-form evaluators; those carry a zero
    standard error.
    """

    value: float
    std_error: float
    samples: int
    exact: bool = False

    def __post_init__(self):
        if self.samples < 1:
            raise ValueError("samples must be at least 1")
        if self.std_error < 0:
            raise ValueError("std_error must be nonnegative")
        if self.exact and self.std_error != 0:
            raise ValueError("exact estimates have zero standard error")


def feasibility_residual(cons_value):
    """Euclidean norm of the positive part of the constraint values."""
    v = np.maximum(np.asarray(cons_value, dtype=float).reshape(-1), 0.0)
    return float(math.sqrt(v @ v))


def estimate_objective_mc(oracle, x, M):
    """Plug-in Monte Carlo estimate of ``F(x) = f1(E[f2(x)])``.

    The inner expectation is replaced by the mean ``y_bar`` of ``M`` draws
    of ``f2(x)``, then ``f1(y_bar, xi)`` is averaged over ``M`` outer draws.

    The standard error combines the outer-draw variance with a first-order
    (delta-method) term for the noise in ``y_bar``,
    ``g^T Cov(f2) g / M`` where ``g`` is the mean sampled ``grad f1(y_bar)``.
    For nonlinear ``f1`` the estimate also carries an ``O(1/M)`` bias from
    the inner mean, which the standard error does not cover.
    """
    if int(M) != M or M < 2:
        raise ValueError(f"M must be an integer >= 2, got {M}")
    M = int(M)
    x = np.asarray(x, dtype=float)
    inner = np.asarray(_batch(oracle, "sample_f2", x, M).value, dtype=float).reshape(M, -1)
    y_bar = inner.mean(axis=0)
    outer = _batch(oracle, "sample_f1", y_bar, M)
    values = np.asarray(outer.value, dtype=float)
    g = np.asarray(outer.grad, dtype=float).reshape(M, -1).mean(axis=0)
    dev = inner - y_bar
    inner_var = float(np.sum((dev @ g) ** 2) / (M - 1))
    var = values.var(ddof=1) + inner_var
    return MetricEstimate(
        value=float(values.mean()),
        std_error=float(math.sqrt(var / M)),
        samples=M,
        exact=False,
    )


def _batch(oracle, method, point, size):
    return getattr(oracle, method + "_batch")(point, size)


def mc_mean(samples):
    """Componentwise sample mean and standard error over the leading axis."""
    samples = np.asarray(samples, dtype=float)
    M = samples.shape[0]
    return samples.mean(axis=0), samples.std(axis=0, ddof=1) / math.sqrt(M)


def within_standard_errors(samples, expected, k=4.0, floor=1e-12):
    """True when the sample mean lies within ``k`` standard errors of ``expected``.

    ``floor`` absorbs rounding when the samples are (nearly) constant.
    """
    mean, se = mc_mean(samples)
    return bool(np.all(np.abs(mean - expected) <= k * se + floor))


def fit_loglog_slope(points, min_N=0):
    """Least-squares slope of ``log(value)`` against ``log(N)``.

    Parameters
    ----------
    points : iterable of (N, value)
    min_N : int
        Points with ``N < min_N`` are dropped before fitting.
    """
    pts = [(float(n), float(v)) for n, v in points if n >= min_N]
    if len(pts) < 3:
        raise ValueError(f"need at least 3 points to fit a slope, got {len(pts)}")
    Ns, vals = np.array(pts).T
    if len(set(Ns)) != len(Ns):
        raise ValueError("N values must be distinct")
    if np.any(vals <= 0) or np.any(Ns <= 0):
        raise ValueError("N and values must be positive")
    lx, ly = np.log(Ns), np.log(vals)
    lx = lx - lx.mean()
    return float(lx @ (ly - ly.mean()) / (lx @ lx))


@dataclass(frozen=True)
class DualTraceStats:
    max: float
    final: float
    tail_growth_ratio: float


def dual_trace_stats(trace):
    """Summaries of a multiplier-norm trace.

    ``trace`` is a sequence of ``(t, norm)`` pairs or a plain array of norms
    indexed by ``t``. ``tail_growth_ratio`` divides the largest norm over the
    last quarter of ``t`` by the largest over the first quarter; it is 1 when
    both are 0 and ``inf`` when only the first is 0.
    """
    arr = np.asarray(trace, dtype=float)
    if arr.size == 0:
        raise ValueError("empty trace")
    if arr.ndim == 2:
        ts, norms = arr[:, 0], arr[:, 1]
    else:
        ts, norms = np.arange(arr.size, dtype=float), arr
    t0, t1 = ts.min(), ts.max()
    span = t1 - t0
    head = norms[ts <= t0 + span / 4]
    tail = norms[ts >= t1 - span / 4]
    h, tl = float(head.max()), float(tail.max())
    if h == 0:
        ratio = 1.0 if tl == 0 else math.inf
    else:
        ratio = tl / h
    return DualTraceStats(max=float(norms.max()), final=float(norms[-1]),
                          tail_growth_ratio=ratio)
