"""
Euclidean projections onto simple convex compact sets.

All sets expose ``project``, ``contains`` and a ``diameter`` bound. The
module-level :func:`project` adds a dimension check.
"""

import math

import numpy as np


class FeasibleSet:
    """Base class for closed, convex, bounded sets with exact projection."""

    dim: int

    def project(self, v):
        raise NotImplementedError

    def contains(self, v, tol=1e-12):
        raise NotImplementedError

    @property
    def diameter(self):
        """Upper bound on the distance between any two members."""
        raise NotImplementedError

    def center(self):
        """A canonical interior (or relative-interior) point."""
        raise NotImplementedError

    def sample(self, rng, size=None):
        """Draw points of the set (not uniformly in general)."""
        raise NotImplementedError


class Box(FeasibleSet):
    """Axis-aligned box ``lower <= x <= upper``."""

    def __init__(self, lower, upper):
        self.lower = np.atleast_1d(np.asarray(lower, dtype=float)).copy()
        self.upper = np.atleast_1d(np.asarray(upper, dtype=float)).copy()
        if self.lower.shape != self.upper.shape or self.lower.ndim != 1:
            raise ValueError("lower and upper must be 1-D arrays of equal length")
        if not np.all(np.isfinite(self.lower)) or not np.all(np.isfinite(self.upper)):
            raise ValueError("box bounds must be finite")
        if np.any(self.lower > self.upper):
            raise ValueError("box requires lower <= upper componentwise")
        self.dim = self.lower.size

    def project(self, v):
        return np.minimum(np.maximum(v, self.lower), self.upper)

    def contains(self, v, tol=1e-12):
        v = np.asarray(v, dtype=float)
        return bool(np.all(v >= self.lower - tol) and np.all(v <= self.upper + tol))

    @property
    def diameter(self):
        return float(np.linalg.norm(self.upper - self.lower))

    def center(self):
        return 0.5 * (self.lower + self.upper)

    def sample(self, rng, size=None):
        shape = (self.dim,) if size is None else (size, self.dim)
        return rng.uniform(self.lower, self.upper, size=shape)

    def __repr__(self):
        return f"Box({self.lower.tolist()}, {self.upper.tolist()})"


class NonnegBox(Box):
    """Box ``0 <= x <= upper``."""

    def __init__(self, upper):
        upper = np.atleast_1d(np.asarray(upper, dtype=float))
        super().__init__(np.zeros_like(upper), upper)

    def __repr__(self):
        return f"NonnegBox({self.upper.tolist()})"


class Ball(FeasibleSet):
    """Closed Euclidean ball."""

    def __init__(self, center, radius):
        self._center = np.atleast_1d(np.asarray(center, dtype=float)).copy()
        if self._center.ndim != 1:
            raise ValueError("center must be a 1-D array")
        if not radius > 0 or not math.isfinite(radius):
            raise ValueError(f"radius must be positive and finite, got {radius}")
        self.radius = float(radius)
        self.dim = self._center.size

    def project(self, v):
        d = v - self._center
        r = math.sqrt(float(d @ d))
        if r <= self.radius:
            return np.array(v, dtype=float)
        return self._center + d * (self.radius / r)

    def contains(self, v, tol=1e-12):
        return bool(np.linalg.norm(np.asarray(v, dtype=float) - self._center)
                    <= self.radius + tol)

    @property
    def diameter(self):
        return 2.0 * self.radius

    def center(self):
        return self._center.copy()

    def sample(self, rng, size=None):
        n = 1 if size is None else size
        g = rng.standard_normal((n, self.dim))
        g /= np.linalg.norm(g, axis=1, keepdims=True)
        r = self.radius * rng.uniform(size=(n, 1)) ** (1.0 / self.dim)
        pts = self._center + r * g
        return pts[0] if size is None else pts

    def __repr__(self):
        return f"Ball({self._center.tolist()}, {self.radius})"


def project_simplex(v, scale=1.0):
    """Project ``v`` onto ``{x >= 0, sum(x) = scale}`` by sorting.

    The threshold uses the largest support size ``k`` with
    ``u_k > (sum_{i<=k} u_i - scale) / k`` where ``u`` is ``v`` sorted in
    decreasing order.
    """
    v = np.asarray(v, dtype=float)
    n = v.size
    if n <= _SMALL:
        return _project_simplex_small(v, scale)
    u = np.sort(v)[::-1]
    css = np.cumsum(u) - scale
    k = np.arange(1, n + 1)
    support = np.nonzero(u * k > css)[0][-1]
    theta = css[support] / (support + 1.0)
    return np.maximum(v - theta, 0.0)


_SMALL = 8


def _project_simplex_small(v, scale):
    # Same arithmetic as the vectorized path, in Python scalars.
    vals = v.tolist()
    css = 0.0
    theta = 0.0
    for k, uk in enumerate(sorted(vals, reverse=True), start=1):
        css += uk
        if uk * k > css - scale:
            theta = (css - scale) / k
    return np.array([a - theta if a > theta else 0.0 for a in vals])


class Simplex(FeasibleSet):
    """Scaled probability simplex ``{x >= 0, sum(x) = scale}``."""

    def __init__(self, dim, scale=1.0):
        if int(dim) != dim or dim < 1:
            raise ValueError(f"dim must be a positive integer, got {dim}")
        if not scale > 0 or not math.isfinite(scale):
            raise ValueError(f"scale must be positive and finite, got {scale}")
        self.dim = int(dim)
        self.scale = float(scale)

    def project(self, v):
        return project_simplex(v, self.scale)

    def contains(self, v, tol=1e-12):
        v = np.asarray(v, dtype=float)
        if v.shape != (self.dim,):
            return False
        return bool(np.all(v >= -tol)
                    and abs(v.sum() - self.scale) <= tol * max(1.0, self.scale))

    @property
    def diameter(self):
        return self.scale * math.sqrt(2.0)

    def center(self):
        return np.full(self.dim, self.scale / self.dim)

    def sample(self, rng, size=None):
        n = 1 if size is None else size
        pts = self.scale * rng.dirichlet(np.ones(self.dim), size=n)
        return pts[0] if size is None else pts

    def __repr__(self):
        return f"Simplex({self.dim}, {self.scale})"


class Product(FeasibleSet):
    """Cartesian product of sets acting on consecutive coordinate blocks."""

    def __init__(self, *parts):
        if not parts:
            raise ValueError("product of zero sets")
        self.parts = tuple(parts)
        self._bounds = np.cumsum([0] + [p.dim for p in parts])
        self.dim = int(self._bounds[-1])

    def _blocks(self, v):
        b = self._bounds
        return [v[b[i]:b[i + 1]] for i in range(len(self.parts))]

    def project(self, v):
        return np.concatenate(
            [p.project(blk) for p, blk in zip(self.parts, self._blocks(v))]
        )

    def contains(self, v, tol=1e-12):
        v = np.asarray(v, dtype=float)
        if v.shape != (self.dim,):
            return False
        return all(p.contains(blk, tol) for p, blk in zip(self.parts, self._blocks(v)))

    @property
    def diameter(self):
        return math.sqrt(sum(p.diameter ** 2 for p in self.parts))

    def center(self):
        return np.concatenate([p.center() for p in self.parts])

    def sample(self, rng, size=None):
        return np.concatenate([p.sample(rng, size) for p in self.parts], axis=-1)

    def __repr__(self):
        return "Product(" + ", ".join(map(repr, self.parts)) + ")"


def project(feasible_set, v):
    """Euclidean projection of ``v`` onto ``feasible_set``."""
    v = np.asarray(v, dtype=float)
    if v.shape != (feasible_set.dim,):
        raise ValueError(
            f"vector of shape {v.shape} does not match set dimension {feasible_set.dim}"
        )
    return feasible_set.project(v)


def clip_nonneg(v):
    """Componentwise ``max(v, 0)``."""
    return np.maximum(np.asarray(v, dtype=float), 0.0)
