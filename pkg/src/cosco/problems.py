"""
Built-in finite-scenario problems.

Two synthetic instances have analytic KKT points and serve as ground truth
for rate checks:

* ``kkt-ec``: ``min (x - 1)^2  s.t.  x <= 0`` on ``[-10, 10]`` with
  Rademacher noise on every level; ``x* = 0``, ``F* = 1``, ``lambda* = 2``.
* ``kkt-cc``: ``min (x - 2)^2  s.t.  x^2 - 1 <= 0`` written with an affine
  noisy inner map ``g2(x, zeta) = x + zeta`` and ``g1(z) = z^2 - 1``;
  ``x* = 1``, ``F* = 1``, ``lambda* = 1``.

The three risk applications (CVaR, mean-deviation, higher moments) are
portfolio problems over a scenario table of asset returns.
"""

from dataclasses import dataclass
from functools import lru_cache
from importlib import resources
from typing import Optional

import numpy as np

from .core import ProblemConstants, ProblemDims
from .oracles import (
    ScenarioCompositionalOracle,
    ScenarioSingleLevelOracle,
    ScenarioTable,
)
from .projections import Box, FeasibleSet, Product, Simplex

RADEMACHER = ScenarioTable([-1.0, 1.0])
_POINT_MASS = ScenarioTable([0.0])


@dataclass
class Problem:
    """An oracle bundled with its feasible set and any known ground truth."""

    name: str
    kind: str
    oracle: object
    feasible_set: FeasibleSet
    x_star: Optional[np.ndarray] = None
    f_star: Optional[float] = None
    lambda_star: Optional[np.ndarray] = None
    constants: Optional[ProblemConstants] = None

    def __post_init__(self):
        if self.kind not in ("ec", "cc"):
            raise ValueError(f"kind must be 'ec' or 'cc', got {self.kind!r}")


def softplus(u, mu):
    """Smooth upper approximation ``mu * log(1 + exp(u / mu))`` of ``max(u, 0)``."""
    return mu * np.logaddexp(0.0, np.asarray(u, dtype=float) / mu)


def softplus_grad(u, mu):
    """Derivative of :func:`softplus`, the logistic function of ``u / mu``."""
    return 0.5 * (1.0 + np.tanh(np.asarray(u, dtype=float) / (2.0 * mu)))


def load_table(name):
    """Load a scenario table bundled with the package (``cosco/data``)."""
    ref = resources.files("cosco") / "data" / f"{name}.csv"
    with resources.as_file(ref) as path:
        return ScenarioTable.read_csv(path)


@lru_cache(maxsize=64)
def _ones(k, a, b):
    out = np.ones((k, a, b))
    out.setflags(write=False)
    return out


# -- analytic KKT instances ------------------------------------------------


class KKTProblemEC(ScenarioSingleLevelOracle):
    """``f2 = x + xi``, ``f1 = (y - 1)^2 + xi``, ``g = x + zeta``."""

    def __init__(self, noise=1.0, seed=None):
        self.noise = float(noise)
        self.tables = {"f2": RADEMACHER, "f1": RADEMACHER, "g": RADEMACHER}
        super().__init__(ProblemDims(d_x=1, d_y=1, m=1), seed)

    def _f2(self, x, rows):
        return x + self.noise * rows, _ones(len(rows), 1, 1)

    def _f1(self, y, rows):
        k = len(rows)
        value = (y[0] - 1.0) ** 2 + self.noise * rows[:, 0]
        return value, np.full((k, 1), 2.0 * (y[0] - 1.0))

    def _g(self, x, rows):
        return x + self.noise * rows, _ones(len(rows), 1, 1)


class KKTProblemCC(ScenarioCompositionalOracle):
    """``f2 = x + xi``, ``f1 = (y - 2)^2 + xi``, ``g2 = x + zeta``, ``g1 = z^2 - 1``.

    ``g1_noise`` adds Rademacher noise to the value of ``g1`` (the exact
    constraint is unchanged).
    """

    def __init__(self, noise=1.0, g1_noise=0.0, seed=None):
        self.noise = float(noise)
        self.g1_noise = float(g1_noise)
        self.tables = {"f2": RADEMACHER, "f1": RADEMACHER,
                       "g2": RADEMACHER, "g1": RADEMACHER}
        super().__init__(ProblemDims(d_x=1, d_y=1, m=1, d_z=1), seed)

    def _f2(self, x, rows):
        return x + self.noise * rows, _ones(len(rows), 1, 1)

    def _f1(self, y, rows):
        k = len(rows)
        value = (y[0] - 2.0) ** 2 + self.noise * rows[:, 0]
        return value, np.full((k, 1), 2.0 * (y[0] - 2.0))

    def _g2(self, x, rows):
        return x + self.noise * rows, _ones(len(rows), 1, 1)

    def _g1(self, z, rows):
        k = len(rows)
        value = z[0] * z[0] - 1.0 + self.g1_noise * rows
        return value, np.full((k, 1, 1), 2.0 * z[0])


def make_kkt_problem_ec(noise=1.0, seed=None):
    """Single-level verification instance with ``(x*, lambda*) = (0, 2)``."""
    oracle = KKTProblemEC(noise=noise, seed=seed)
    return Problem(
        name="kkt-ec",
        kind="ec",
        oracle=oracle,
        feasible_set=Box([-10.0], [10.0]),
        x_star=np.array([0.0]),
        f_star=1.0,
        lambda_star=np.array([2.0]),
        constants=ProblemConstants(
            C_f2=1.0, sigma_f2=abs(noise), sigma_f1=abs(noise), L_f1=2.0,
            C_g=1.0, sigma_g=abs(noise), D_X=20.0,
        ),
    )


def make_kkt_problem_cc(noise=1.0, g1_noise=0.0, seed=None):
    """Compositional verification instance with ``(x*, lambda*) = (1, 1)``."""
    oracle = KKTProblemCC(noise=noise, g1_noise=g1_noise, seed=seed)
    return Problem(
        name="kkt-cc",
        kind="cc",
        oracle=oracle,
        feasible_set=Box([-10.0], [10.0]),
        x_star=np.array([1.0]),
        f_star=1.0,
        lambda_star=np.array([1.0]),
        constants=ProblemConstants(
            C_f2=1.0, sigma_f2=abs(noise), sigma_f1=abs(noise), L_f1=2.0,
            C_g2=1.0, sigma_g2=abs(noise), sigma_g1=abs(g1_noise), L_g1=2.0,
            D_X=20.0,
        ),
    )


# -- risk applications -----------------------------------------------------


def _portfolio_objective(x, rows, d):
    """Negative return ``-w^T x`` (the objective maximizes expected return)."""
    k = len(rows)
    w = rows[:, :d]
    values = -(w @ x[:d])[:, None]
    grads = np.zeros((k, x.size, 1))
    grads[:, :d, 0] = -w
    return values, grads


def _linear_f1(y, rows):
    k = len(rows)
    return np.full(k, y[0]), np.ones((k, 1))


class CVaROracle(ScenarioSingleLevelOracle):
    """Portfolio over ``(x, u)`` with the lifted CVaR constraint.

    ``g((x, u), w) = u + (loss - u)_+ / (1 - alpha) - gamma`` with
    ``loss = -w^T x``. The subgradient of ``(.)_+`` at 0 is taken as 0.
    """

    def __init__(self, table, alpha, gamma, seed=None):
        self.table = table
        self.alpha = float(alpha)
        self.gamma = float(gamma)
        self.d = table.dim
        self.tables = {"f2": table, "f1": _POINT_MASS, "g": table}
        super().__init__(ProblemDims(d_x=self.d + 1, d_y=1, m=1), seed)

    def _f2(self, v, rows):
        return _portfolio_objective(v, rows, self.d)

    def _f1(self, y, rows):
        return _linear_f1(y, rows)

    def _g(self, v, rows):
        d = self.d
        u = v[d]
        excess = -(rows @ v[:d]) - u
        active = (excess > 0).astype(float)
        scale = 1.0 / (1.0 - self.alpha)
        values = (u + scale * np.maximum(excess, 0.0) - self.gamma)[:, None]
        grads = np.empty((len(rows), d + 1, 1))
        grads[:, :d, 0] = -(scale * active)[:, None] * rows
        grads[:, d, 0] = 1.0 - scale * active
        return values, grads


def make_cvar_problem(table, alpha, gamma, seed=None):
    """Maximize expected return subject to ``CVaR_alpha(-w^T x) <= gamma``.

    The auxiliary threshold ``u`` is appended to the decision vector and
    bounded by ``[min loss - 1, max loss + 1]`` over the simplex, which
    contains every minimizing ``u``.
    """
    if not isinstance(table, ScenarioTable):
        table = ScenarioTable(table)
    if not 0.0 < alpha < 1.0:
        raise ValueError(f"alpha must lie in (0, 1), got {alpha}")
    losses = -table.scenarios
    u_lo, u_hi = float(losses.min()) - 1.0, float(losses.max()) + 1.0
    oracle = CVaROracle(table, alpha, gamma, seed=seed)
    return Problem(
        name="cvar",
        kind="ec",
        oracle=oracle,
        feasible_set=Product(Simplex(table.dim), Box([u_lo], [u_hi])),
    )


class MeanDeviationOracle(ScenarioCompositionalOracle):
    """Mean-deviation constraints with softplus-smoothed outer level.

    Scenario rows hold ``K`` blocks of ``d`` coefficients; utility ``j`` is
    ``l_j(x, w) = w_j^T x``. The inner map is ``g2(x, w) = (-l_1, ..., -l_K, x)``
    and constraint ``j`` has outer level
    ``g1_j((z, x), w) = z_j + s_mu(l_j(x, w) + z_j) + gamma_j``.
    The objective maximizes the expected first utility.
    """

    def __init__(self, table, gammas, mu, seed=None):
        self.gammas = np.atleast_1d(np.asarray(gammas, dtype=float))
        self.K = self.gammas.size
        if table.dim % self.K:
            raise ValueError(
                f"table has {table.dim} columns, not a multiple of K={self.K}"
            )
        self.d = table.dim // self.K
        self.mu = float(mu)
        self.tables = {"f2": table, "f1": _POINT_MASS, "g2": table, "g1": table}
        super().__init__(
            ProblemDims(d_x=self.d, d_y=1, m=self.K, d_z=self.K + self.d), seed
        )

    def _blocks(self, rows):
        return rows.reshape(len(rows), self.K, self.d)

    def _f2(self, x, rows):
        return _portfolio_objective(x, rows, self.d)

    def _f1(self, y, rows):
        return _linear_f1(y, rows)

    def _g2(self, x, rows):
        k, K, d = len(rows), self.K, self.d
        W = self._blocks(rows)
        values = np.empty((k, K + d))
        values[:, :K] = -(W @ x)
        values[:, K:] = x
        grads = np.zeros((k, d, K + d))
        grads[:, :, :K] = -W.transpose(0, 2, 1)
        grads[:, :, K:] = np.eye(d)
        return values, grads

    def _g1(self, u, rows):
        k, K, d = len(rows), self.K, self.d
        z, xt = u[:K], u[K:]
        W = self._blocks(rows)
        a = W @ xt + z
        s = softplus_grad(a, self.mu)
        values = z + softplus(a, self.mu) + self.gammas
        grads = np.zeros((k, K + d, K))
        idx = np.arange(K)
        grads[:, idx, idx] = 1.0 + s
        grads[:, K:, :] = (s[:, :, None] * W).transpose(0, 2, 1)
        return values, grads

    def unsmoothed_constraint(self, x):
        """Constraint values with the exact ``(.)_+`` in place of softplus."""
        W = self._blocks(self.tables["g1"].scenarios)
        util = W @ np.asarray(x, dtype=float)
        mean = self.tables["g1"].expect(util)
        dev = self.tables["g1"].expect(np.maximum(util - mean, 0.0))
        return -mean + dev + self.gammas


def make_mean_deviation_problem(table, gammas, mu=1e-3, seed=None):
    """Portfolio with risk-averse mean-deviation constraints.

    Constraint ``j`` reads ``E[l_j] - E[(l_j - E l_j)_+] >= gamma_j`` and is
    stored as ``G_j(x) <= 0``.
    """
    if not isinstance(table, ScenarioTable):
        table = ScenarioTable(table)
    if not mu > 0:
        raise ValueError(f"smoothing parameter mu must be positive, got {mu}")
    oracle = MeanDeviationOracle(table, gammas, mu, seed=seed)
    return Problem(
        name="mean-dev",
        kind="cc",
        oracle=oracle,
        feasible_set=Simplex(oracle.d),
    )


class MomentOracle(ScenarioCompositionalOracle):
    """Central-moment constraints ``E|w^T x - E w^T x|^p <= c_p``.

    Inner map ``g2(x, w) = (w^T x, x)``, outer ``g1((z, x), w) = (w^T x - z)^p - c_p``
    for each requested even order ``p``.
    """

    def __init__(self, table, p, c_p, seed=None):
        self.p = np.atleast_1d(np.asarray(p, dtype=int))
        self.c_p = np.atleast_1d(np.asarray(c_p, dtype=float))
        self.d = table.dim
        self.tables = {"f2": table, "f1": _POINT_MASS, "g2": table, "g1": table}
        super().__init__(
            ProblemDims(d_x=self.d, d_y=1, m=self.p.size, d_z=1 + self.d), seed
        )

    def _f2(self, x, rows):
        return _portfolio_objective(x, rows, self.d)

    def _f1(self, y, rows):
        return _linear_f1(y, rows)

    def _g2(self, x, rows):
        k, d = len(rows), self.d
        values = np.empty((k, 1 + d))
        values[:, 0] = rows @ x
        values[:, 1:] = x
        grads = np.zeros((k, d, 1 + d))
        grads[:, :, 0] = rows
        grads[:, :, 1:] = np.eye(d)
        return values, grads

    def _g1(self, u, rows):
        r = rows @ u[1:] - u[0]
        p = self.p
        values = r[:, None] ** p - self.c_p
        dr = p * r[:, None] ** (p - 1)
        grads = np.empty((len(rows), 1 + self.d, p.size))
        grads[:, 0, :] = -dr
        grads[:, 1:, :] = rows[:, :, None] * dr[:, None, :]
        return values, grads

    def central_moment(self, x):
        """``M_p(x)`` for each order, by direct scenario sums."""
        t = self.tables["g2"]
        ret = t.scenarios @ np.asarray(x, dtype=float)
        dev = ret - t.expect(ret)
        return np.array([t.expect(dev ** int(q)) for q in self.p])


def make_moment_portfolio_problem(table, p, c_p, seed=None):
    """Maximize expected return subject to central-moment bounds on the simplex."""
    if not isinstance(table, ScenarioTable):
        table = ScenarioTable(table)
    orders = np.atleast_1d(np.asarray(p))
    bounds = np.atleast_1d(np.asarray(c_p, dtype=float))
    if orders.size != bounds.size:
        raise ValueError("p and c_p must have the same length")
    if np.any(orders != np.round(orders)) or np.any(orders < 2) or np.any(orders % 2):
        raise ValueError(f"moment orders must be even integers >= 2, got {p}")
    if np.any(bounds <= 0):
        raise ValueError("c_p must be positive")
    oracle = MomentOracle(table, orders.astype(int), bounds, seed=seed)
    return Problem(
        name="moment",
        kind="cc",
        oracle=oracle,
        feasible_set=Simplex(table.dim),
    )


# -- registry --------------------------------------------------------------

DEFAULT_TABLE = "portfolio_4x3"


def make_problem(tag, scenarios=None, alpha=0.9, gamma=0.0, gammas=(0.2,), mu=1e-3,
                 p=(4,), c_p=(0.5,), noise=1.0, seed=None):
    """Build a built-in problem by tag.

    ``scenarios`` is a CSV path for the portfolio problems; the bundled
    4-scenario, 3-asset table is used when omitted. Parameters irrelevant
    to ``tag`` are ignored.
    """
    if tag == "kkt-ec":
        return make_kkt_problem_ec(noise=noise, seed=seed)
    if tag == "kkt-cc":
        return make_kkt_problem_cc(noise=noise, seed=seed)
    table = ScenarioTable.read_csv(scenarios) if scenarios else load_table(DEFAULT_TABLE)
    if tag == "cvar":
        return make_cvar_problem(table, alpha, gamma, seed=seed)
    if tag == "mean-dev":
        return make_mean_deviation_problem(table, gammas, mu, seed=seed)
    if tag == "moment":
        return make_moment_portfolio_problem(table, p, c_p, seed=seed)
    raise ValueError(f"unknown problem tag {tag!r}")


PROBLEM_KINDS = {"kkt-ec": "ec", "kkt-cc": "cc", "cvar": "ec",
                 "mean-dev": "cc", "moment": "cc"}
