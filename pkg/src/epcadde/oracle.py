"""High-accuracy reference integrator for cross-validating the fixed-mesh scheme.

Method of steps on the coupled (x, tau) system with a classical
fourth-order one-step method and cubic Hermite dense output.  The delayed
state is read from the integrator's own dense past (or from the history
function for nonpositive arguments), impulses are applied exactly at their
times, and steps are split exactly wherever the delayed argument crosses a
kink location of the past: time zero, a history breakpoint, an impulse
time, or a previously discovered crossing.  Crossing times are located by
bisection on the interpolated delayed argument.

The full dense past is kept because the delayed argument need not be
monotone: it can revisit earlier kinks.
"""
from __future__ import annotations

from bisect import bisect_right
from dataclasses import dataclass
from typing import Optional

import numpy as np

from .model import (
    Array,
    COMPLETED,
    END_OF_HORIZON,
    TAU_NEGATIVE,
    HistoryFunction,
    ImpulseRecord,
    OutOfRange,
    ProblemSpec,
    SolveStatus,
    StepSizeTooLarge,
    ValidationError,
    min_impulse_gap,
)

__all__ = ["DenseTrajectory", "integrate_reference"]

# Bisection width for event times (delayed-argument crossings, tau zeros).
_EVENT_TOL = 1e-12
# Sub-intervals per step scanned for delayed-argument crossings, so a
# local extremum poking across a kink value inside one step is not missed.
_SCAN_PARTS = 4


def _hermite(theta: float, width: float, y0, y1, m0, m1):
    """Cubic Hermite value at relative position theta of a width-h interval."""
    t2 = theta * theta
    t3 = t2 * theta
    return (
        (2.0 * t3 - 3.0 * t2 + 1.0) * y0
        + (t3 - 2.0 * t2 + theta) * width * m0
        + (-2.0 * t3 + 3.0 * t2) * y1
        + (t3 - t2) * width * m1
    )


@dataclass(frozen=True)
class DenseTrajectory:
    """Piecewise-cubic reference solution with exact impulse landings.

    Segment i covers [edges[i], edges[i+1]] with endpoint values
    ``x_lo[i]`` (right limit at the left edge, post-jump where the edge is
    an impulse time) and ``x_hi[i]`` (left limit at the right edge), plus
    endpoint derivatives for the Hermite interpolant.  tau is globally
    continuous; x is right-continuous at impulse times, whose left and
    right values are also kept in ``impulses``.
    """

    base_step: float
    edges: Array
    x_lo: Array
    x_hi: Array
    x_m0: Array
    x_m1: Array
    tau_lo: Array
    tau_hi: Array
    tau_m0: Array
    tau_m1: Array
    impulses: tuple[ImpulseRecord, ...]
    status: SolveStatus
    history: HistoryFunction
    lam: float

    @property
    def dim(self) -> int:
        return self.x_lo.shape[1]

    @property
    def frontier(self) -> float:
        """Last time the reference solution covers."""
        return float(self.edges[-1])

    @property
    def num_segments(self) -> int:
        return len(self.x_lo)

    def _segment_at(self, t: float) -> int:
        idx = int(np.searchsorted(self.edges, t, side="right")) - 1
        return min(idx, self.num_segments - 1)

    def _eval_segment_x(self, i: int, t: float) -> Array:
        a = float(self.edges[i])
        width = float(self.edges[i + 1]) - a
        theta = (t - a) / width
        return _hermite(theta, width, self.x_lo[i], self.x_hi[i], self.x_m0[i], self.x_m1[i])

    def _eval_segment_tau(self, i: int, t: float) -> float:
        a = float(self.edges[i])
        width = float(self.edges[i + 1]) - a
        theta = (t - a) / width
        return float(
            _hermite(theta, width, self.tau_lo[i], self.tau_hi[i], self.tau_m0[i], self.tau_m1[i])
        )

    def eval_x(self, t: float) -> Array:
        """Right-continuous dense state at time t (history for t <= 0)."""
        t = float(t)
        if t <= 0.0:
            return self.history(t)
        if t > self.frontier:
            raise OutOfRange(f"t={t} beyond the integrated range [0, {self.frontier}]")
        return np.array(self._eval_segment_x(self._segment_at(t), t), dtype=float)

    def eval_x_left(self, t: float) -> Array:
        """Left limit of the dense state at time t."""
        t = float(t)
        if t <= 0.0:
            return self.history(t)
        if t > self.frontier:
            raise OutOfRange(f"t={t} beyond the integrated range [0, {self.frontier}]")
        idx = int(np.searchsorted(self.edges, t, side="left")) - 1
        if idx >= 0 and t == float(self.edges[idx + 1]):
            return np.array(self.x_hi[idx], dtype=float)
        return np.array(self._eval_segment_x(self._segment_at(t), t), dtype=float)

    def eval_tau(self, t: float) -> float:
        """Dense delay value at time t (the start value lam for t <= 0)."""
        t = float(t)
        if t <= 0.0:
            return self.lam
        if t > self.frontier:
            raise OutOfRange(f"t={t} beyond the integrated range [0, {self.frontier}]")
        return self._eval_segment_tau(self._segment_at(t), t)


class _Past:
    """Growing dense past used for delayed-state reads during integration."""

    def __init__(self, problem: ProblemSpec, slack: float = 0.0):
        self.problem = problem
        self.slack = slack
        self.edges: list[float] = [0.0]
        self.x_lo: list[Array] = []
        self.x_hi: list[Array] = []
        self.x_m0: list[Array] = []
        self.x_m1: list[Array] = []
        self.tau_lo: list[float] = []
        self.tau_hi: list[float] = []
        self.tau_m0: list[float] = []
        self.tau_m1: list[float] = []

    @property
    def frontier(self) -> float:
        return self.edges[-1]

    def append(self, t1, x0, x1, mx0, mx1, tau0, tau1, mt0, mt1) -> None:
        self.edges.append(t1)
        self.x_lo.append(x0)
        self.x_hi.append(x1)
        self.x_m0.append(mx0)
        self.x_m1.append(mx1)
        self.tau_lo.append(tau0)
        self.tau_hi.append(tau1)
        self.tau_m0.append(mt0)
        self.tau_m1.append(mt1)

    def delayed_x(self, d: float) -> Array:
        """Right-continuous read of the past state at delayed time d.

        When the delay shrinks below the step size, trial stages ask for
        the state a hair past the frontier (at a tau = 0 crossing the
        delayed argument catches up with the current time).  Reads within
        ``slack`` of the frontier extend the last value linearly with its
        endpoint slope; anything farther out means the base step is too
        coarse for this delay.
        """
        if d <= 0.0:
            return self.problem.history(d)
        if d > self.frontier:
            if self.x_hi and d <= self.frontier + self.slack:
                return self.x_hi[-1] + (d - self.frontier) * self.x_m1[-1]
            raise StepSizeTooLarge(
                f"delayed argument {d} exceeds the integrated frontier "
                f"{self.frontier}; the delay dipped below the base step"
            )
        i = min(bisect_right(self.edges, d) - 1, len(self.x_lo) - 1)
        a = self.edges[i]
        width = self.edges[i + 1] - a
        return _hermite((d - a) / width, width, self.x_lo[i], self.x_hi[i], self.x_m0[i], self.x_m1[i])


def integrate_reference(problem: ProblemSpec, base_step: float) -> DenseTrajectory:
    """Integrate the coupled state/delay system to high accuracy.

    Requires ``base_step < h0/4`` where h0 is the smallest gap among time
    zero, the impulse times, and the horizon.  Integration stops early
    with a tau_negative status when the delay hits zero, mirroring the
    fixed-mesh solver's taxonomy; the dense output then covers [0, s0]
    with tau(s0) = 0 located by bisection.
    """
    h0 = min_impulse_gap(problem)
    if not 0.0 < base_step < h0 / 4.0:
        raise StepSizeTooLarge(
            f"base_step must lie in (0, {h0 / 4.0}) = (0, h0/4) for this problem, got {base_step}"
        )
    dim = problem.dim
    past = _Past(problem, slack=2.0 * base_step)

    def rhs(s: float, x: Array, tau: float) -> tuple[Array, float]:
        w = past.delayed_x(s - tau)
        return problem.eval_f(s, x, w), problem.eval_g(s, x, tau)

    def rk4(t: float, x: Array, tau: float, dt: float, k1=None):
        kx1, kt1 = k1 if k1 is not None else rhs(t, x, tau)
        kx2, kt2 = rhs(t + dt / 2.0, x + dt / 2.0 * kx1, tau + dt / 2.0 * kt1)
        kx3, kt3 = rhs(t + dt / 2.0, x + dt / 2.0 * kx2, tau + dt / 2.0 * kt2)
        kx4, kt4 = rhs(t + dt, x + dt * kx3, tau + dt * kt3)
        x_new = x + dt / 6.0 * (kx1 + 2.0 * kx2 + 2.0 * kx3 + kx4)
        tau_new = tau + dt / 6.0 * (kt1 + 2.0 * kt2 + 2.0 * kt3 + kt4)
        return x_new, tau_new, (kx1, kt1)

    # Kink locations of the past that the delayed argument must not cross
    # mid-step: time zero, history breakpoints, impulse times, and (added
    # as discovered) earlier crossing times.
    impulse_times = list(problem.impulse_times())
    knots = sorted({0.0, *problem.history.breakpoints, *impulse_times})

    def tau_hermite(a: float, width: float, tau0: float, tau1: float, mt0: float, mt1: float, s: float) -> float:
        return float(_hermite((s - a) / width, width, tau0, tau1, mt0, mt1))

    targets = sorted(impulse_times) + [problem.horizon]
    impulse_lookup = {ev.time: (k + 1, ev) for k, ev in enumerate(problem.impulses)}

    t = 0.0
    x = problem.history(0.0)
    tau = problem.lam
    records: list[ImpulseRecord] = []
    status: Optional[SolveStatus] = None
    k1_cache: Optional[tuple[Array, float]] = None

    def bisect_zero(fn, lo: float, hi: float) -> float:
        f_lo = fn(lo)
        while hi - lo > _EVENT_TOL:
            mid = (lo + hi) / 2.0
            if (f_lo > 0.0) == (fn(mid) > 0.0):
                lo = mid
                f_lo = fn(mid)
            else:
                hi = mid
        return (lo + hi) / 2.0

    for target in targets:
        while t < target and status is None:
            dt = min(base_step, target - t)
            t_next = target if dt == target - t else t + dt
            x_new, tau_new, (kx1, kt1) = rk4(t, x, tau, dt, k1_cache)
            mt1_trial = problem.eval_g(t_next, x_new, tau_new)

            def tau_trial(s: float, _t=t, _dt=dt, _t0=tau, _t1=tau_new, _m0=kt1, _m1=mt1_trial) -> float:
                return tau_hermite(_t, _dt, _t0, _t1, _m0, _m1, s)

            # Locate the earliest event inside the trial step: a zero of
            # tau, or a crossing of a past kink by the delayed argument.
            cut: Optional[float] = None
            tau_zero = False
            if tau_new < 0.0:
                cut = bisect_zero(tau_trial, t, t_next)
                tau_zero = True

            scan_hi = cut if cut is not None else t_next
            pts = np.linspace(t, scan_hi, _SCAN_PARTS + 1)
            vals = [s - tau_trial(float(s)) for s in pts]
            for a, b, da, db in zip(pts, pts[1:], vals, vals[1:]):
                lo_v, hi_v = (da, db) if da <= db else (db, da)
                crossed = [q for q in knots if lo_v < q < hi_v]
                if not crossed:
                    continue
                earliest = min(
                    bisect_zero(lambda s, _q=q: s - tau_trial(s) - _q, float(a), float(b))
                    for q in crossed
                )
                if earliest > t + _EVENT_TOL:
                    cut = earliest
                    tau_zero = False
                    break

            if cut is not None and cut < t_next:
                # Redo the step to land exactly on the event.
                dt = cut - t
                t_next = cut
                x_new, tau_new, _ = rk4(t, x, tau, dt, (kx1, kt1))
                if tau_zero:
                    tau_new = 0.0
            if tau_new < 0.0:
                # Safety net: a redone step may still dip just below zero.
                tau_zero = True
                tau_new = 0.0
            if cut is not None and not tau_zero and cut not in knots:
                # The solution has a kink here; later crossings of this
                # time by the delayed argument must split again.
                knots.append(cut)
                knots.sort()

            # Hermite endpoint slopes at the accepted landing point.  With
            # tau = 0 the delayed state equals the state itself.
            if tau_zero:
                mx1 = problem.eval_f(t_next, x_new, x_new)
                mt1 = problem.eval_g(t_next, x_new, tau_new)
            else:
                mx1, mt1 = rhs(t_next, x_new, tau_new)

            past.append(t_next, x, x_new, kx1, mx1, tau, tau_new, kt1, mt1)
            t = t_next
            x, tau = x_new, tau_new
            k1_cache = None if tau_zero else (mx1, mt1)

            if tau_zero:
                status = SolveStatus(TAU_NEGATIVE, at_index=len(past.x_lo), at_time=t)

        if status is not None:
            break
        if target in impulse_lookup:
            k, event = impulse_lookup[target]
            x_left = x.copy()
            x = event.apply(x_left, dim)
            records.append(
                ImpulseRecord(
                    k=k,
                    time=target,
                    x_left=x_left,
                    x_right=x.copy(),
                    node_index=len(past.x_lo),
                    at_node=True,
                )
            )
            k1_cache = None

    if status is None:
        status = SolveStatus(END_OF_HORIZON)

    return DenseTrajectory(
        base_step=base_step,
        edges=np.array(past.edges),
        x_lo=np.array(past.x_lo),
        x_hi=np.array(past.x_hi),
        x_m0=np.array(past.x_m0),
        x_m1=np.array(past.x_m1),
        tau_lo=np.array(past.tau_lo),
        tau_hi=np.array(past.tau_hi),
        tau_m0=np.array(past.tau_m0),
        tau_m1=np.array(past.tau_m1),
        impulses=tuple(records),
        status=status,
        history=problem.history,
        lam=problem.lam,
    )
