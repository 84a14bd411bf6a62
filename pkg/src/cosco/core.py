"""
Shared data model: problem dimensions, step-size schedules, solver state
and run records.
"""

from __future__ import annotations

import dataclasses
import math
from dataclasses import dataclass, field
from typing import Callable, Optional

import numpy as np


@dataclass(frozen=True)
class ProblemDims:
    """Dimensions of a (compositional) constrained problem.

    ``d_z`` is the range dimension of the inner constraint map and is 0
    exactly when the constraints are single-level.
    """

    d_x: int
    d_y: int
    m: int
    d_z: int = 0

    def __post_init__(self):
        for name in ("d_x", "d_y", "m"):
            value = getattr(self, name)
            if int(value) != value or value < 1:
                raise ValueError(f"{name} must be a positive integer, got {value!r}")
        if int(self.d_z) != self.d_z or self.d_z < 0:
            raise ValueError(f"d_z must be a nonnegative integer, got {self.d_z!r}")

    @property
    def compositional(self) -> bool:
        return self.d_z > 0


def _half(t):
    return t / 2


class Constant:
    """Picklable constant step sequence."""

    def __init__(self, value: float):
        self.value = float(value)

    def __call__(self, t: int) -> float:
        return self.value

    def __repr__(self):
        return f"Constant({self.value!r})"


@dataclass(frozen=True)
class StepSchedule:
    """Step-size sequences for a fixed horizon ``N``.

    Each sequence is a callable of the iteration index ``t`` (``0 <= t < N``).
    ``rho`` is only read by the compositional-constraint solver.
    """

    N: int
    tau: Callable[[int], float]
    eta: Callable[[int], float]
    alpha: Callable[[int], float]
    rho: Callable[[int], float] = _half
    name: str = "custom"

    def __post_init__(self):
        if int(self.N) != self.N or self.N < 1:
            raise ValueError(f"horizon N must be a positive integer, got {self.N!r}")

    def validate(self) -> None:
        """Check positivity of ``eta``, ``alpha`` and nonnegativity of ``tau``, ``rho``."""
        for t in range(self.N):
            if not self.eta(t) > 0:
                raise ValueError(f"eta({t}) = {self.eta(t)} is not positive")
            if not self.alpha(t) > 0:
                raise ValueError(f"alpha({t}) = {self.alpha(t)} is not positive")
            if self.tau(t) < 0 or self.rho(t) < 0:
                raise ValueError(f"tau/rho must be nonnegative at t={t}")


def default_schedule_ec(N: int) -> StepSchedule:
    """Default schedule for the single-level constrained solver.

    ``tau_t = t/2``, ``alpha_t = 2 sqrt(N)``, ``eta_t = 15 sqrt(N) / 2``.
    """
    if int(N) != N or N < 1:
        raise ValueError(f"N must be a positive integer, got {N!r}")
    root = math.sqrt(N)
    alpha = 2.0 * root
    eta = 15.0 * root / 2.0
    return StepSchedule(
        N=int(N),
        tau=_half,
        rho=_half,
        eta=Constant(eta),
        alpha=Constant(alpha),
        name="ec-default",
    )


def default_schedule_cc(N: int) -> StepSchedule:
    """Default schedule for the compositional-constraint solver.

    ``tau_t = rho_t = t/2``, ``alpha_t = 2 sqrt(N)``, ``eta_t = 5 sqrt(N) / 2``.
    """
    if int(N) != N or N < 1:
        raise ValueError(f"N must be a positive integer, got {N!r}")
    root = math.sqrt(N)
    alpha = 2.0 * root
    eta = 5.0 * root / 2.0
    return StepSchedule(
        N=int(N),
        tau=_half,
        rho=_half,
        eta=Constant(eta),
        alpha=Constant(alpha),
        name="cc-default",
    )


@dataclass
class SolverState:
    """Iterate bundle of a primal-dual run.

    ``x_sum`` accumulates the emitted iterates ``x_1, ..., x_t`` so the
    averaged output is ``x_sum / t``.
    """

    t: int
    x: np.ndarray
    y: np.ndarray
    lam: np.ndarray
    x_sum: np.ndarray
    z: Optional[np.ndarray] = None

    @classmethod
    def initial(cls, x0, d_y, lambda0, d_z=0):
        x0 = np.array(x0, dtype=float)
        return cls(
            t=0,
            x=x0,
            y=np.zeros(d_y),
            lam=np.array(lambda0, dtype=float),
            x_sum=np.zeros_like(x0),
            z=np.zeros(d_z) if d_z else None,
        )

    @property
    def x_bar(self) -> np.ndarray:
        if self.t == 0:
            raise ValueError("no iterates emitted yet")
        return self.x_sum / self.t


def update_average(state: SolverState, x_new) -> SolverState:
    """Return a copy of ``state`` with ``x_new`` added to the running sum."""
    x_new = np.asarray(x_new, dtype=float)
    if x_new.shape != state.x_sum.shape:
        raise ValueError(
            f"iterate has shape {x_new.shape}, expected {state.x_sum.shape}"
        )
    return dataclasses.replace(
        state, t=state.t + 1, x=x_new, x_sum=state.x_sum + x_new
    )


@dataclass(frozen=True)
class ProblemConstants:
    """Optional documented bounds of a problem (informational only).

    ``C_*`` bound root second moments of (sub)gradients, ``sigma_*`` bound
    the standard deviation of sampled values, ``L_*`` are smoothness
    constants and ``D_X`` bounds the diameter of the feasible set.
    """

    C_f1: Optional[float] = None
    C_f2: Optional[float] = None
    sigma_f1: Optional[float] = None
    sigma_f2: Optional[float] = None
    L_f1: Optional[float] = None
    C_g: Optional[float] = None
    sigma_g: Optional[float] = None
    C_g1: Optional[float] = None
    C_g2: Optional[float] = None
    sigma_g1: Optional[float] = None
    sigma_g2: Optional[float] = None
    L_g1: Optional[float] = None
    sigma_H: Optional[float] = None
    D_X: Optional[float] = None

    def __post_init__(self):
        for f in dataclasses.fields(self):
            value = getattr(self, f.name)
            if value is not None and value < 0:
                raise ValueError(f"{f.name} must be nonnegative, got {value}")

    def declared(self) -> dict:
        return {
            f.name: getattr(self, f.name)
            for f in dataclasses.fields(self)
            if getattr(self, f.name) is not None
        }


@dataclass
class RunRecord:
    """Outcome of one solver run.

    ``obj_gap`` is the signed gap ``F(x_bar) - F*`` and is ``None`` when the
    oracle has no exact objective or the optimal value is unknown;
    ``feas_resid`` is ``None`` without an exact constraint evaluator.
    ``metric_trace`` holds ``(t, gap, resid)`` at powers of two.
    """

    algorithm: str
    problem: str
    N: int
    seed: Optional[int]
    x_bar: np.ndarray
    obj_gap: Optional[float]
    feas_resid: Optional[float]
    dual_norm_max: float
    dual_norm_final: float
    wall_ms: float
    metric_trace: list = field(default_factory=list)
    dual_trace: Optional[np.ndarray] = None
    lam_final: Optional[np.ndarray] = None
    x_sum: Optional[np.ndarray] = None
    metric_source: str = "exact"

    def __post_init__(self):
        if self.feas_resid is not None and self.feas_resid < 0:
            raise ValueError("feas_resid must be nonnegative")
        if not self.dual_norm_max >= self.dual_norm_final >= 0:
            raise ValueError("expected dual_norm_max >= dual_norm_final >= 0")

    def same_result(self, other: "RunRecord") -> bool:
        """Bitwise comparison of everything except wall-clock time."""
        if not isinstance(other, RunRecord):
            return NotImplemented
        scalars = ("algorithm", "problem", "N", "seed", "obj_gap", "feas_resid",
                   "dual_norm_max", "dual_norm_final", "metric_source")
        if any(getattr(self, k) != getattr(other, k) for k in scalars):
            return False
        if not np.array_equal(self.x_bar, other.x_bar):
            return False
        if self.metric_trace != other.metric_trace:
            return False
        for k in ("dual_trace", "lam_final"):
            a, b = getattr(self, k), getattr(other, k)
            if (a is None) != (b is None) or (a is not None and not np.array_equal(a, b)):
                return False
        return True
