"""
Sampling-oracle contracts and finite-scenario machinery.

Two contracts are defined. :class:`SingleLevelOracle` answers queries for
``f2(x, xi)``, ``f1(y, xi)`` and a single-level constraint ``g(x, zeta)``.
:class:`CompositionalOracle` replaces ``g`` by an inner map ``g2(x, zeta)``
and an outer map ``g1(z, zeta)``. Every query returns a value together with
a (sub)gradient, drawn from the oracle's own random stream; successive
queries are independent.

Shapes follow the column convention: a subgradient of a map
``R^a -> R^b`` is an ``a x b`` matrix, so chain-rule products read
``inner_subgrad @ outer_grad``.

Built-in problems (see :mod:`cosco.problems`) are written against
:class:`ScenarioSingleLevelOracle` / :class:`ScenarioCompositionalOracle`,
whose randomness is a draw from a :class:`ScenarioTable`. Expectations are
then exact finite sums and batch draws are vectorized.
"""

import copy
import csv
from bisect import bisect_right
from collections import Counter, namedtuple

import numpy as np

from .core import ProblemDims

Sample = namedtuple("Sample", ["value", "grad"])

_BLOCK = 2048


class ScenarioTable:
    """Finite distribution over scenario vectors.

    Parameters
    ----------
    scenarios : array_like, shape (n, k)
        One scenario vector per row. A 1-D input is read as ``n`` scalar
        scenarios.
    probs : array_like, shape (n,), optional
        Scenario probabilities, uniform by default. Probabilities summing to
        1 within 1e-9 are renormalized; anything else is rejected.
    """

    def __init__(self, scenarios, probs=None):
        scenarios = np.asarray(scenarios, dtype=float)
        if scenarios.ndim == 1:
            scenarios = scenarios[:, None]
        if scenarios.ndim != 2 or scenarios.shape[0] == 0 or scenarios.shape[1] == 0:
            raise ValueError("scenario table must be a nonempty (n, k) array")
        n = scenarios.shape[0]
        if probs is None:
            probs = np.full(n, 1.0 / n)
        probs = np.asarray(probs, dtype=float)
        if probs.shape != (n,):
            raise ValueError(f"expected {n} probabilities, got shape {probs.shape}")
        if np.any(probs < 0) or not np.all(np.isfinite(probs)):
            raise ValueError("probabilities must be finite and nonnegative")
        total = probs.sum()
        if abs(total - 1.0) > 1e-9:
            raise ValueError(f"probabilities sum to {total!r}, not 1")
        if not np.all(np.isfinite(scenarios)):
            raise ValueError("scenario values must be finite")
        self.scenarios = scenarios
        self.scenarios.setflags(write=False)
        self.probs = probs / total
        cum = np.cumsum(self.probs)
        cum[-1] = 1.0
        self._cum = cum
        self._cum_list = cum.tolist()

    @property
    def n(self):
        return self.scenarios.shape[0]

    @property
    def dim(self):
        return self.scenarios.shape[1]

    def index(self, u):
        """Scenario index of a uniform number ``u`` in ``[0, 1)``."""
        i = bisect_right(self._cum_list, u)
        return i if i < self.n else self.n - 1

    def indices(self, u):
        return np.minimum(np.searchsorted(self._cum, u, side="right"), self.n - 1)

    def mean(self):
        return self.probs @ self.scenarios

    def expect(self, values):
        """Probability-weighted sum over the leading (scenario) axis."""
        return np.tensordot(self.probs, values, axes=(0, 0))

    @classmethod
    def read_csv(cls, path):
        """Read a table whose first column is the probability.

        A header row is required; the remaining columns are scenario
        components.
        """
        with open(path, newline="", encoding="utf-8") as fh:
            rows = [r for r in csv.reader(fh) if r and any(c.strip() for c in r)]
        if len(rows) < 2:
            raise ValueError(f"{path}: expected a header row and at least one scenario")
        header, body = rows[0], rows[1:]
        try:
            float(header[0])
        except ValueError:
            pass
        else:
            raise ValueError(f"{path}: missing header row")
        if len(header) < 2:
            raise ValueError(f"{path}: need a probability column and one component")
        data = []
        for lineno, row in enumerate(body, start=2):
            if len(row) != len(header):
                raise ValueError(f"{path}:{lineno}: expected {len(header)} fields")
            try:
                data.append([float(c) for c in row])
            except ValueError as exc:
                raise ValueError(f"{path}:{lineno}: {exc}") from None
        data = np.array(data)
        return cls(data[:, 1:], data[:, 0])

    def write_csv(self, path, names=None):
        names = names or [f"c{j}" for j in range(self.dim)]
        with open(path, "w", newline="", encoding="utf-8") as fh:
            w = csv.writer(fh)
            w.writerow(["prob", *names])
            for p, row in zip(self.probs, self.scenarios):
                w.writerow([repr(float(p)), *(repr(float(v)) for v in row)])

    def __repr__(self):
        return f"ScenarioTable(n={self.n}, dim={self.dim})"


class _Oracle:
    """Shared stream handling for both contracts."""

    dims: ProblemDims
    has_exact = False

    def __init__(self, dims, seed=None):
        self.dims = dims
        self.reseed(seed)

    def reseed(self, seed):
        """Restart the random stream from ``seed``.

        ``seed`` may be anything accepted by :func:`numpy.random.default_rng`,
        including a :class:`numpy.random.SeedSequence`.
        """
        self.rng = np.random.default_rng(seed)
        self._buf = []

    def clone(self, seed=None):
        """Independent copy with its own stream; nothing is shared."""
        other = copy.deepcopy(self)
        other.reseed(seed)
        return other

    def _uniform(self):
        buf = self._buf
        if not buf:
            buf.extend(self.rng.random(_BLOCK).tolist())
        return buf.pop()

    def _uniforms(self, size):
        return self.rng.random(size)

    def exact_objective(self, x):
        """``F(x) = f1(E[f2(x)])``, when computable in closed form."""
        raise NotImplementedError(f"{type(self).__name__} has no exact objective")

    def exact_constraint(self, x):
        raise NotImplementedError(f"{type(self).__name__} has no exact constraint")

    @staticmethod
    def _stack(draws):
        values, grads = zip(*draws)
        return Sample(np.array(values), np.array(grads))


class SingleLevelOracle(_Oracle):
    """Sampling oracle for ``min f1(E f2(x))  s.t.  E g(x, zeta) <= 0``.

    Subclasses implement :meth:`sample_f2`, :meth:`sample_f1` and
    :meth:`sample_g`; the ``*_batch`` variants default to repeated single
    draws.
    """

    def sample_f2(self, x):
        """Return ``(f2(x, xi), subgrad)`` with shapes ``(d_y,)``, ``(d_x, d_y)``."""
        raise NotImplementedError

    def sample_f1(self, y):
        """Return ``(f1(y, xi), grad)`` with shapes ``()``, ``(d_y,)``."""
        raise NotImplementedError

    def sample_g(self, x):
        """Return ``(g(x, zeta), subgrad)`` with shapes ``(m,)``, ``(d_x, m)``."""
        raise NotImplementedError

    def sample_f2_batch(self, x, size):
        return self._stack([self.sample_f2(x) for _ in range(size)])

    def sample_f1_batch(self, y, size):
        return self._stack([self.sample_f1(y) for _ in range(size)])

    def sample_g_batch(self, x, size):
        return self._stack([self.sample_g(x) for _ in range(size)])


class CompositionalOracle(_Oracle):
    """Sampling oracle for ``min f1(E f2(x))  s.t.  E g1(E g2(x, .), zeta) <= 0``."""

    def sample_f2(self, x):
        raise NotImplementedError

    def sample_f1(self, y):
        raise NotImplementedError

    def sample_g2(self, x):
        """Return ``(g2(x, zeta), subgrad)`` with shapes ``(d_z,)``, ``(d_x, d_z)``."""
        raise NotImplementedError

    def sample_g1(self, z):
        """Return ``(g1(z, zeta), grad)`` with shapes ``(m,)``, ``(d_z, m)``."""
        raise NotImplementedError

    def sample_f2_batch(self, x, size):
        return self._stack([self.sample_f2(x) for _ in range(size)])

    def sample_f1_batch(self, y, size):
        return self._stack([self.sample_f1(y) for _ in range(size)])

    def sample_g2_batch(self, x, size):
        return self._stack([self.sample_g2(x) for _ in range(size)])

    def sample_g1_batch(self, z, size):
        return self._stack([self.sample_g1(z) for _ in range(size)])


class _ScenarioLevels:
    """Sampling by scenario draws for oracles built from vectorized kernels.

    A kernel ``_<level>(point, rows)`` maps a point and a ``(k, dim)`` block
    of scenario rows to ``(values, grads)`` with a leading axis of length
    ``k``. ``self.tables[level]`` holds the table driving that level.
    """

    has_exact = True
    tables: dict

    def _draw(self, level, point):
        table = self.tables[level]
        i = table.index(self._uniform())
        v, g = getattr(self, "_" + level)(point, table.scenarios[i:i + 1])
        return Sample(v[0], g[0])

    def _draw_batch(self, level, point, size):
        table = self.tables[level]
        rows = table.scenarios[table.indices(self._uniforms(size))]
        return Sample(*getattr(self, "_" + level)(point, rows))

    def mean(self, level, point):
        """Exact expectation of the sampled value and (sub)gradient."""
        table = self.tables[level]
        v, g = getattr(self, "_" + level)(np.asarray(point, dtype=float), table.scenarios)
        return Sample(table.expect(v), table.expect(g))

    def second_moments(self, level, point):
        """Exact ``E||value - mean||^2`` and ``E||grad||_F^2``."""
        table = self.tables[level]
        v, g = getattr(self, "_" + level)(np.asarray(point, dtype=float), table.scenarios)
        v = v.reshape(len(v), -1)
        dev = v - table.expect(v)
        return (float(table.probs @ np.sum(dev ** 2, axis=1)),
                float(table.probs @ np.sum(g.reshape(len(g), -1) ** 2, axis=1)))

    def exact_objective(self, x):
        y = self.mean("f2", x).value
        return float(self.mean("f1", y).value)


class ScenarioSingleLevelOracle(_ScenarioLevels, SingleLevelOracle):
    """Single-level oracle driven by scenario tables for ``f2``, ``f1``, ``g``."""

    levels = ("f2", "f1", "g")

    def sample_f2(self, x):
        return self._draw("f2", x)

    def sample_f1(self, y):
        return self._draw("f1", y)

    def sample_g(self, x):
        return self._draw("g", x)

    def sample_f2_batch(self, x, size):
        return self._draw_batch("f2", x, size)

    def sample_f1_batch(self, y, size):
        return self._draw_batch("f1", y, size)

    def sample_g_batch(self, x, size):
        return self._draw_batch("g", x, size)

    def exact_constraint(self, x):
        return self.mean("g", x).value


class ScenarioCompositionalOracle(_ScenarioLevels, CompositionalOracle):
    """Compositional oracle driven by tables for ``f2``, ``f1``, ``g2``, ``g1``."""

    levels = ("f2", "f1", "g2", "g1")

    def sample_f2(self, x):
        return self._draw("f2", x)

    def sample_f1(self, y):
        return self._draw("f1", y)

    def sample_g2(self, x):
        return self._draw("g2", x)

    def sample_g1(self, z):
        return self._draw("g1", z)

    def sample_f2_batch(self, x, size):
        return self._draw_batch("f2", x, size)

    def sample_f1_batch(self, y, size):
        return self._draw_batch("f1", y, size)

    def sample_g2_batch(self, x, size):
        return self._draw_batch("g2", x, size)

    def sample_g1_batch(self, z, size):
        return self._draw_batch("g1", z, size)

    def exact_constraint(self, x):
        z = self.mean("g2", x).value
        return self.mean("g1", z).value

    def exact_H_mean(self, x, z):
        """Expectation of the linearized constraint estimator at ``(x, z)``.

        Equals ``g1(z) + grad g1(z)^T (g2(x) - z)``.
        """
        g1 = self.mean("g1", z)
        g2 = self.mean("g2", x).value
        return g1.value + g1.grad.T @ (g2 - np.asarray(z, dtype=float))


class QueryCounter:
    """Transparent oracle wrapper that counts ``sample_*`` calls.

    >>> counted = QueryCounter(oracle)          # doctest: +SKIP
    >>> counted.counts["sample_f2"]             # doctest: +SKIP
    """

    def __init__(self, oracle):
        self._oracle = oracle
        self.counts = Counter()

    def __getattr__(self, name):
        attr = getattr(self._oracle, name)
        if name.startswith("sample_") and callable(attr):
            def counted(*args, **kwargs):
                self.counts[name] += 1
                return attr(*args, **kwargs)
            return counted
        return attr

    @property
    def total(self):
        return sum(self.counts.values())
