"""Domain types for impulsive delay equations with a state-driven delay law.

The state x lives in R^n and evolves under

    x'(t)  = f(t, x(t), x(t - tau(t))),      t in [0, T], t != t_k
    tau'(t) = g(t, x(t), tau(t)),
    x(t_k) = x(t_k-) + I_k(x(t_k-)),         0 < t_1 < ... < t_K < T
    x(t)   = phi(t) for t <= 0,   tau(0) = lam > 0.

Everything in this module is immutable; solvers return new objects.
"""
from __future__ import annotations

import math
from dataclasses import dataclass, field
from typing import Callable, Optional, Sequence

import numpy as np

Array = np.ndarray

__all__ = [
    "SolverError",
    "StepSizeTooLarge",
    "NonFiniteRhs",
    "OutOfRange",
    "NotAMeshPoint",
    "MissingHints",
    "UnknownProblem",
    "ValidationError",
    "HistoryFunction",
    "ImpulseEvent",
    "LipschitzHints",
    "ProblemSpec",
    "MeshConfig",
    "SolveStatus",
    "COMPLETED",
    "END_OF_HORIZON",
    "TAU_NEGATIVE",
    "ImpulseRecord",
    "FinalPoint",
    "Trajectory",
    "GronwallParams",
    "ErrorRow",
    "OrderEstimate",
]


class SolverError(Exception):
    """Base class for all errors raised by this package."""


class StepSizeTooLarge(SolverError):
    """The mesh width violates its admissibility bound (h >= h0, or oracle h >= h0/4)."""


class NonFiniteRhs(SolverError):
    """A vector field, jump map, or history evaluation produced nan or inf."""


class OutOfRange(SolverError):
    """Evaluation was requested beyond the computed frontier of a trajectory."""


class NotAMeshPoint(SolverError):
    """A sample time for an error table does not sit on the trajectory mesh."""


class MissingHints(SolverError):
    """A diagnostic that requires declared constants was run without them."""


class UnknownProblem(SolverError):
    """Requested built-in problem name is not registered."""


class ValidationError(SolverError):
    """A problem definition violates a structural invariant."""


def _as_state(value, dim: int, what: str) -> Array:
    """Coerce a user callback result to a float vector of length ``dim``."""
    arr = np.asarray(value, dtype=float)
    if arr.shape == () and dim == 1:
        arr = arr.reshape(1)
    if arr.shape != (dim,):
        raise ValidationError(f"{what} returned shape {arr.shape}, expected ({dim},)")
    return arr


@dataclass(frozen=True)
class HistoryFunction:
    """Pre-zero state history phi, piecewise-defined and right-continuous.

    Parameters
    ----------
    dim : int
        State dimension n.
    breakpoints : tuple of float
        Strictly decreasing, all negative.  ``segments[k]`` applies on
        ``[breakpoints[k], breakpoints[k-1])`` and ``segments[0]`` on
        ``[breakpoints[0], 0]`` so that ``phi(0)`` comes from the first
        segment.  Right-continuity at each breakpoint holds by construction.
    segments : tuple of callables
        ``segments[k](t)`` returns the state on its interval.
    tail : callable
        Applies for ``t < breakpoints[-1]`` (for all ``t <= 0`` when there
        are no breakpoints).
    bound_hint : float, optional
        Declared sup-norm bound N_phi over the reachable past, used by the
        diagnostics instead of sampling when present.
    """

    dim: int
    breakpoints: tuple[float, ...]
    segments: tuple[Callable[[float], object], ...]
    tail: Callable[[float], object]
    bound_hint: Optional[float] = None

    def __post_init__(self) -> None:
        if self.dim < 1:
            raise ValidationError("history dim must be >= 1")
        if len(self.breakpoints) != len(self.segments):
            raise ValidationError("one segment per breakpoint required")
        for b in self.breakpoints:
            if not (b < 0.0) or not math.isfinite(b):
                raise ValidationError(f"history breakpoints must be finite and < 0, got {b}")
        for a, b in zip(self.breakpoints, self.breakpoints[1:]):
            if not (b < a):
                raise ValidationError("history breakpoints must be strictly decreasing")
        if self.bound_hint is not None and not (self.bound_hint >= 0.0):
            raise ValidationError("bound_hint must be >= 0")

    def __call__(self, t: float) -> Array:
        if t > 0.0:
            raise OutOfRange(f"history is defined for t <= 0, got t={t}")
        for b, seg in zip(self.breakpoints, self.segments):
            if t >= b:
                return _as_state(seg(t), self.dim, "history segment")
        return _as_state(self.tail(t), self.dim, "history tail")

    @staticmethod
    def constant(value, dim: Optional[int] = None, bound_hint: Optional[float] = None) -> "HistoryFunction":
        arr = np.asarray(value, dtype=float)
        if dim is None:
            dim = arr.shape[0] if arr.ndim >= 1 else 1
        vec = np.broadcast_to(arr, (dim,)).copy()
        hint = float(np.max(np.abs(vec))) if bound_hint is None else bound_hint
        return HistoryFunction(dim=dim, breakpoints=(), segments=(), tail=lambda t: vec, bound_hint=hint)


@dataclass(frozen=True)
class ImpulseEvent:
    """State reset x -> x + jump_map(x) at a fixed positive time."""

    time: float
    jump_map: Callable[[Array], object]

    def apply(self, x_left: Array, dim: int) -> Array:
        jump = _as_state(self.jump_map(x_left), dim, "impulse jump map")
        return x_left + jump


@dataclass(frozen=True)
class LipschitzHints:
    """Declared constants for the diagnostics (all optional).

    L1, L2 bound the sensitivity of f in its second and third arguments,
    L3 bounds every jump map, L4 bounds the history segments.  sup_f0 and
    sup_g0 bound |f(t,0,0)| and |g(t,0,0)| over the horizon.
    """

    L1: Optional[float] = None
    L2: Optional[float] = None
    L3: Optional[float] = None
    L4: Optional[float] = None
    sup_f0: Optional[float] = None
    sup_g0: Optional[float] = None

    def as_dict(self) -> dict[str, Optional[float]]:
        return {
            "L1": self.L1, "L2": self.L2, "L3": self.L3, "L4": self.L4,
            "sup_f0": self.sup_f0, "sup_g0": self.sup_g0,
        }


@dataclass(frozen=True)
class ProblemSpec:
    """Complete problem statement consumed by the solvers.

    ``f(t, x, x_delayed) -> R^n`` and ``g(t, x, tau) -> R`` must accept
    float time, length-n arrays, and (for g) float tau.  Impulse times must
    be strictly increasing inside (0, horizon).
    """

    dim: int
    f: Callable[[float, Array, Array], object]
    g: Callable[[float, Array, float], object]
    impulses: tuple[ImpulseEvent, ...]
    history: HistoryFunction
    lam: float
    horizon: float
    lipschitz_hints: Optional[LipschitzHints] = None
    # Parsed definition when this spec came from the text format; lets
    # serialization round-trip without trying to serialize closures.
    definition: Optional[object] = field(default=None, repr=False, compare=False)

    def __post_init__(self) -> None:
        if self.dim < 1:
            raise ValidationError("dim must be >= 1")
        if self.history.dim != self.dim:
            raise ValidationError("history dimension does not match problem dim")
        if not (self.lam > 0.0) or not math.isfinite(self.lam):
            raise ValidationError("lam (initial delay) must be finite and > 0")
        if not (self.horizon > 0.0) or not math.isfinite(self.horizon):
            raise ValidationError("horizon must be finite and > 0")
        times = [ev.time for ev in self.impulses]
        for t in times:
            if not (0.0 < t < self.horizon):
                raise ValidationError(f"impulse time {t} outside (0, horizon)")
        for a, b in zip(times, times[1:]):
            if not (a < b):
                raise ValidationError("impulse times must be strictly increasing")

    def impulse_times(self) -> tuple[float, ...]:
        return tuple(ev.time for ev in self.impulses)

    def eval_f(self, t: float, x: Array, xd: Array) -> Array:
        out = _as_state(self.f(t, x, xd), self.dim, "f")
        if not np.all(np.isfinite(out)):
            raise NonFiniteRhs(f"f produced a non-finite value at t={t}")
        return out

    def eval_g(self, t: float, x: Array, tau: float) -> float:
        out = float(self.g(t, x, tau))
        if not math.isfinite(out):
            raise NonFiniteRhs(f"g produced a non-finite value at t={t}")
        return out


def min_impulse_gap(problem: ProblemSpec) -> float:
    """Smallest gap h0 among consecutive elements of {0, t_1, ..., t_K, T}.

    Admissible mesh widths satisfy 0 < h < h0, which guarantees at most one
    impulse per mesh cell and no impulse in the first cell.
    """
    knots = [0.0, *problem.impulse_times(), problem.horizon]
    return min(b - a for a, b in zip(knots, knots[1:]))


@dataclass(frozen=True)
class MeshConfig:
    """A validated mesh width for a given problem."""

    h: float
    h0: float

    @staticmethod
    def for_problem(problem: ProblemSpec, h: float) -> "MeshConfig":
        h0 = min_impulse_gap(problem)
        if not (0.0 < h < h0):
            raise StepSizeTooLarge(f"mesh width h={h} must lie in (0, {h0})")
        return MeshConfig(h=float(h), h0=h0)

    @property
    def admissible(self) -> bool:
        return 0.0 < self.h < self.h0


COMPLETED = "completed"
END_OF_HORIZON = "end_of_horizon"
TAU_NEGATIVE = "tau_negative"


@dataclass(frozen=True)
class SolveStatus:
    """Terminal state of a run.

    ``kind`` is one of ``completed`` (reached a requested t_end before the
    horizon), ``end_of_horizon`` (reached the full horizon), or
    ``tau_negative`` (the delay law drove tau below zero; the offending
    node index/time is recorded and the partial trajectory is kept).
    """

    kind: str
    at_index: Optional[int] = None
    at_time: Optional[float] = None

    @property
    def ok(self) -> bool:
        return self.kind in (COMPLETED, END_OF_HORIZON)

    def as_dict(self) -> dict:
        out: dict = {"kind": self.kind}
        if self.at_index is not None:
            out["at_index"] = self.at_index
        if self.at_time is not None:
            out["at_time"] = self.at_time
        return out


@dataclass(frozen=True)
class ImpulseRecord:
    """One applied impulse: schedule position k (1-based), its time, and
    the states immediately before and after the jump.  ``node_index`` is
    the mesh node of the cell containing the impulse; ``at_node`` marks
    jumps whose time coincides with that node, in which case the stored
    node value is x_left and the right-continuous value x_right lives only
    here."""

    k: int
    time: float
    x_left: Array
    x_right: Array
    node_index: int
    at_node: bool


@dataclass(frozen=True)
class FinalPoint:
    """Value appended when the run was cut at a non-mesh time."""

    t: float
    x: Array
    tau: float


@dataclass(frozen=True)
class Trajectory:
    """Mesh output of the fixed-step solver.

    Node j sits at time exactly ``j * h`` (bitwise); ``xs[j]`` is the
    state consumed by the recursion there and ``taus[j]`` the delay.  When
    an impulse time coincides with a node, ``xs`` holds the pre-jump value
    (the jump belongs to the cell starting there) and the right-continuous
    value is the record's ``x_right``; the dense evaluators present the
    right-continuous view.  ``final`` is populated when the run ended
    strictly between mesh nodes.
    """

    h: float
    xs: Array            # shape (N+1, dim), xs[j] = x_h(j*h), right-continuous
    taus: Array          # shape (N+1,)
    impulses: tuple[ImpulseRecord, ...]
    status: SolveStatus
    t_end: float
    history: HistoryFunction
    lam: float
    final: Optional[FinalPoint] = None

    @property
    def dim(self) -> int:
        return self.xs.shape[1]

    @property
    def num_nodes(self) -> int:
        return self.xs.shape[0]

    @property
    def last_index(self) -> int:
        return self.xs.shape[0] - 1

    def node_time(self, j: int) -> float:
        return j * self.h

    @property
    def frontier(self) -> float:
        """Largest time at which the trajectory is defined."""
        if self.final is not None:
            return self.final.t
        return self.last_index * self.h


@dataclass(frozen=True)
class GronwallParams:
    """Inputs of the discrete-impulse growth bound.

    The bound is ``sum_{j=0}^{K} (1+c)^j * (a0+a1+a2) * exp(b*t)`` with all
    parameters nonnegative and K the impulse count.
    """

    a0: float
    a1: float
    a2: float
    b: float
    c: float
    K: int

    def __post_init__(self) -> None:
        for name in ("a0", "a1", "a2", "b", "c"):
            v = getattr(self, name)
            if not (v >= 0.0) or not math.isfinite(v):
                raise ValidationError(f"GronwallParams.{name} must be finite and >= 0")
        if self.K < 0:
            raise ValidationError("GronwallParams.K must be >= 0")


@dataclass(frozen=True)
class ErrorRow:
    """One sample of an error table at mesh time s = i*h."""

    s: float
    i: int
    x_h: Array
    tau_h: float
    e_x: float
    e_tau: float


@dataclass(frozen=True)
class OrderEstimate:
    """Result of a mesh-refinement study.

    ``pairs`` holds (h, error) for levels that ran; ``ratios`` the
    successive error quotients; ``fitted_order`` the log-log least-squares
    slope over levels whose error exceeds the 1e-12 floor.
    """

    pairs: tuple[tuple[float, float], ...]
    ratios: tuple[float, ...]
    fitted_order: float
    floor_limited: bool
    failures: tuple[tuple[float, str], ...] = ()

    @property
    def levels_succeeded(self) -> int:
        return len(self.pairs)
