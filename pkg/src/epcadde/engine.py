"""Fixed-mesh solver with piecewise-constant arguments and impulse splitting.

On the mesh t_j = j*h the scheme advances by freezing time, state, and the
delayed state at the left node of every cell:

    x_{j+1} = x_j + h * f(jh, x_j, x_h(jh - [tau_j]_h)),
    tau_{j+1} = tau_j + h * g(jh, x_j, tau_j),

where [u]_h = floor(u/h)*h, so the delayed argument always lands on a mesh
node or in the history.  An impulse at t_k strictly inside a cell splits
that cell with the same frozen slope on both pieces; an impulse exactly on
a node folds the jump into the arrival node.  The recursion is explicit
while tau_j >= 0 and stops with a tau_negative status otherwise.
"""
from __future__ import annotations

import math
from bisect import bisect_left, bisect_right
from dataclasses import dataclass
from typing import Callable, Optional

import numpy as np

from .model import (
    Array,
    COMPLETED,
    END_OF_HORIZON,
    TAU_NEGATIVE,
    FinalPoint,
    HistoryFunction,
    ImpulseEvent,
    ImpulseRecord,
    MeshConfig,
    OutOfRange,
    ProblemSpec,
    SolveStatus,
    StepSizeTooLarge,
    Trajectory,
    ValidationError,
    min_impulse_gap,
)

__all__ = [
    "floor_to_mesh",
    "mesh_index_of",
    "delayed_index",
    "eval_mesh_state",
    "StepOutcome",
    "step_interior",
    "step_with_impulse",
    "solve",
    "eval_x",
    "eval_x_left",
    "eval_tau",
    "min_impulse_gap",
]

# Quotients within this many ulps of an integer count as exact mesh hits.
_SNAP_ULPS = 4.0


def floor_to_mesh(t: float, h: float) -> int:
    """Greatest-integer mesh index j with j*h <= t, robust to roundoff.

    Computes floor(t/h), except that quotients within 4 ulps of an integer
    snap to that integer, so times that are mesh points up to roundoff are
    treated as exact hits rather than falling into the cell below.
    """
    if not (h > 0.0):
        raise ValidationError(f"mesh width must be positive, got {h}")
    q = t / h
    nearest = round(q)
    if q == nearest or abs(q - nearest) <= _SNAP_ULPS * math.ulp(abs(q) if q != 0.0 else 1.0):
        return int(nearest)
    return int(math.floor(q))


def mesh_index_of(t: float, h: float) -> Optional[int]:
    """Index j when t == j*h up to the snap tolerance, else None."""
    j = floor_to_mesh(t, h)
    q = t / h
    if q == j or abs(q - j) <= _SNAP_ULPS * math.ulp(abs(q) if q != 0.0 else 1.0):
        return j
    return None


def delayed_index(j: int, tau_j: float, h: float) -> int:
    """Mesh index of the delayed argument jh - [tau_j]_h, as d = j - floor(tau_j/h)."""
    if tau_j < 0.0:
        raise ValidationError(f"delay must be nonnegative at a step, got {tau_j}")
    return j - floor_to_mesh(tau_j, h)


def eval_mesh_state(traj: Trajectory, history: HistoryFunction, d: int) -> Array:
    """State feeding the recursion for delayed mesh index d.

    Negative d reads the history at d*h (d = 0 is phi(0), which equals the
    stored first node).  Nonnegative d reads the stored node value, which
    at a node-coincident impulse is the pre-jump state: exactly the value
    the step recursion consumes, so recomputing any step from a finished
    trajectory is bitwise reproducible.  Indices past the computed
    frontier raise OutOfRange.
    """
    if d < 0:
        return history(d * traj.h)
    if d > traj.last_index:
        raise OutOfRange(f"mesh index {d} beyond computed frontier {traj.last_index}")
    return traj.xs[d]


@dataclass(frozen=True)
class StepOutcome:
    """Result of advancing one cell: arrival state, arrival delay, and the
    impulse record when the cell contained a jump."""

    x_next: Array
    tau_next: float
    record: Optional[ImpulseRecord] = None


def _advance(
    problem: ProblemSpec,
    h: float,
    j: int,
    x_j: Array,
    tau_j: float,
    x_delayed: Array,
    t_stop: float,
    impulse: Optional[tuple[int, ImpulseEvent, bool]],
) -> StepOutcome:
    """Advance from node j to time t_stop with the slope frozen at node j.

    ``impulse`` is (k, event, at_start): at_start means the jump time
    coincides with node j itself (zero-length left piece); otherwise its
    time lies strictly inside (j*h, t_stop).  Either way the slope and the
    delay increment are evaluated on the stored (pre-jump) node state, so
    a node-coincident jump behaves exactly like one placed infinitesimally
    inside the cell.  tau integrates over the full piece regardless.
    """
    t_j = j * h
    slope = problem.eval_f(t_j, x_j, x_delayed)
    gval = problem.eval_g(t_j, x_j, tau_j)
    tau_next = tau_j + (t_stop - t_j) * gval

    if impulse is None:
        return StepOutcome(x_j + (t_stop - t_j) * slope, tau_next)

    k, event, at_start = impulse
    if at_start:
        x_left = x_j
        x_right = event.apply(x_left, problem.dim)
        _check_finite(x_right, event.time)
        record = ImpulseRecord(k=k, time=t_j, x_left=x_left, x_right=x_right,
                               node_index=j, at_node=True)
        return StepOutcome(x_right + (t_stop - t_j) * slope, tau_next, record)

    x_left = x_j + (event.time - t_j) * slope
    x_right = event.apply(x_left, problem.dim)
    _check_finite(x_right, event.time)
    x_next = x_right + (t_stop - event.time) * slope
    record = ImpulseRecord(k=k, time=event.time, x_left=x_left, x_right=x_right,
                           node_index=j, at_node=False)
    return StepOutcome(x_next, tau_next, record)


def _check_finite(x: Array, t: float) -> None:
    from .model import NonFiniteRhs

    if not np.all(np.isfinite(x)):
        raise NonFiniteRhs(f"impulse jump produced a non-finite state at t={t}")


def _classify_impulses(problem: ProblemSpec, h: float) -> dict[int, tuple[int, ImpulseEvent, bool]]:
    """Map each cell index j to the (at most one) impulse acting in it.

    An impulse always belongs to cell floor(t_k/h) = [jh, (j+1)h).  When
    its time coincides with the node jh itself (up to snap) the jump sits
    at the start of the cell, after the node state has been consumed by
    the recursion; otherwise it splits the cell strictly inside.  h < h0
    guarantees at most one impulse per cell."""
    placed: dict[int, tuple[int, ImpulseEvent, bool]] = {}
    for pos, event in enumerate(problem.impulses):
        node = mesh_index_of(event.time, h)
        if node is not None:
            placed[node] = (pos + 1, event, True)
        else:
            placed[floor_to_mesh(event.time, h)] = (pos + 1, event, False)
    return placed


def _delayed_state(problem: ProblemSpec, h: float, j: int, tau_j: float, xs: Array) -> Array:
    d = delayed_index(j, tau_j, h)
    if d < 0:
        return problem.history(d * h)
    # d <= j always: tau_j >= 0 makes the frozen delayed argument look backward.
    return xs[d]


def solve(problem: ProblemSpec, h: float, t_end: Optional[float] = None) -> Trajectory:
    """Run the frozen-argument recursion on mesh width h up to t_end.

    Parameters
    ----------
    problem : ProblemSpec
    h : float
        Mesh width; must satisfy 0 < h < h0 where h0 is the smallest gap
        among {0, impulse times, horizon} (StepSizeTooLarge otherwise).
    t_end : float, optional
        Cut time in (0, horizon]; defaults to the horizon.  When t_end is
        not a mesh point the run finishes with one truncated cell under the
        same frozen-slope rule (impulse splitting included) and stores the
        cut state in ``Trajectory.final``.

    Returns
    -------
    Trajectory
        Node values on {0, h, 2h, ...}, impulse records, and a status of
        ``end_of_horizon``/``completed``; if the delay law drove tau below
        zero the status is ``tau_negative`` and the trajectory holds every
        node up to and including the offending one.
    """
    mesh = MeshConfig.for_problem(problem, h)
    h = mesh.h
    T = problem.horizon
    if t_end is None:
        t_end = T
    if not (0.0 < t_end <= T):
        raise ValidationError(f"t_end={t_end} must lie in (0, horizon={T}]")

    cut_node = mesh_index_of(t_end, h)
    # Number of whole cells; a trailing partial cell remains when cut_node is None.
    m = cut_node if cut_node is not None else floor_to_mesh(t_end, h)

    dim = problem.dim
    xs = np.empty((m + 1, dim), dtype=float)
    taus = np.empty(m + 1, dtype=float)
    xs[0] = problem.history(0.0)
    taus[0] = problem.lam
    impulse_in_cell = _classify_impulses(problem, h)
    records: list[ImpulseRecord] = []

    end_kind = END_OF_HORIZON if t_end == T else COMPLETED
    status = SolveStatus(kind=end_kind)
    stop_at: Optional[int] = None

    for j in range(m):
        x_j = xs[j]
        tau_j = taus[j]
        if tau_j < 0.0:
            stop_at = j
            break
        xd = _delayed_state(problem, h, j, tau_j, xs)
        out = _advance(problem, h, j, x_j, tau_j, xd, (j + 1) * h, impulse_in_cell.get(j))
        xs[j + 1] = out.x_next
        taus[j + 1] = out.tau_next
        if out.record is not None:
            records.append(out.record)

    final: Optional[FinalPoint] = None
    if stop_at is not None:
        xs = xs[: stop_at + 1]
        taus = taus[: stop_at + 1]
        records = [r for r in records if r.time <= stop_at * h]
        status = SolveStatus(kind=TAU_NEGATIVE, at_index=stop_at, at_time=stop_at * h)
    elif taus[m] < 0.0:
        # The run reached its last node, but the recursion is no longer
        # explicit there; keep the data and flag it.
        status = SolveStatus(kind=TAU_NEGATIVE, at_index=m, at_time=m * h)
    elif cut_node is None:
        # Trailing partial cell [m*h, t_end] with the slope frozen at node m.
        xd = _delayed_state(problem, h, m, taus[m], xs)
        imp = impulse_in_cell.get(m)
        if imp is not None and not (imp[1].time <= t_end):
            imp = None  # the impulse sits beyond the cut
        out = _advance(problem, h, m, xs[m], taus[m], xd, t_end, imp)
        if out.record is not None:
            records.append(out.record)
        final = FinalPoint(t=t_end, x=out.x_next, tau=out.tau_next)

    return Trajectory(
        h=h,
        xs=xs,
        taus=taus,
        impulses=tuple(records),
        status=status,
        t_end=t_end,
        history=problem.history,
        lam=problem.lam,
        final=final,
    )


def step_interior(j: int, traj: Trajectory, problem: ProblemSpec, h: float) -> StepOutcome:
    """Recompute the impulse-free step from node j of an existing trajectory.

    Exposed for verification: applying it to a solved trajectory must
    reproduce node j+1 bitwise.
    """
    tau_j = float(traj.taus[j])
    if tau_j < 0.0:
        raise ValidationError(f"tau < 0 at node {j}; the recursion is not defined there")
    d = delayed_index(j, tau_j, h)
    xd = eval_mesh_state(traj, problem.history, d)
    return _advance(problem, h, j, traj.xs[j], tau_j, xd, (j + 1) * h, None)


def step_with_impulse(
    j: int, traj: Trajectory, problem: ProblemSpec, h: float, event_index: int
) -> StepOutcome:
    """Recompute the step from node j whose cell carries impulse ``event_index`` (0-based)."""
    tau_j = float(traj.taus[j])
    if tau_j < 0.0:
        raise ValidationError(f"tau < 0 at node {j}; the recursion is not defined there")
    event = problem.impulses[event_index]
    node = mesh_index_of(event.time, h)
    if floor_to_mesh(event.time, h) != j:
        raise ValidationError(f"impulse {event_index} does not lie in cell {j}")
    placed = (event_index + 1, event, node is not None)
    d = delayed_index(j, tau_j, h)
    xd = eval_mesh_state(traj, problem.history, d)
    return _advance(problem, h, j, traj.xs[j], tau_j, xd, (j + 1) * h, placed)


# ---------------------------------------------------------------------------
# Dense evaluation of mesh output (piecewise linear, right-continuous).


def _knots(traj: Trajectory):
    """Knot times plus left/right values, impulses inserted, final appended."""
    n_nodes = traj.num_nodes
    times = [j * traj.h for j in range(n_nodes)]
    lefts = [traj.xs[j] for j in range(n_nodes)]
    rights = list(lefts)
    # At-node jumps first: they index the pristine node lists.
    for rec in traj.impulses:
        if rec.at_node:
            # Stored node value is the pre-jump state; the dense view is
            # right-continuous, so the right value comes from the record.
            rights[rec.node_index] = rec.x_right
    for rec in traj.impulses:
        if not rec.at_node:
            pos = bisect_right(times, rec.time)
            times.insert(pos, rec.time)
            lefts.insert(pos, rec.x_left)
            rights.insert(pos, rec.x_right)
    if traj.final is not None:
        times.append(traj.final.t)
        lefts.append(traj.final.x)
        rights.append(traj.final.x)
    return times, lefts, rights


def _eval_piecewise(times, lefts, rights, t: float, from_left: bool):
    if from_left:
        pos = bisect_left(times, t)
        if pos < len(times) and times[pos] == t:
            return lefts[pos]
    else:
        pos = bisect_right(times, t) - 1
        if times[pos] == t:
            return rights[pos]
        pos += 1
    t0, t1 = times[pos - 1], times[pos]
    w = (t - t0) / (t1 - t0)
    return rights[pos - 1] + w * (lefts[pos] - rights[pos - 1])


def eval_x(traj: Trajectory, t: float) -> Array:
    """Piecewise-linear state at time t, right-continuous at impulses.

    Node times return the stored node value exactly; t <= 0 delegates to
    the history; t beyond the frontier raises OutOfRange.
    """
    if t <= 0.0:
        return traj.history(t)
    if t > traj.frontier:
        raise OutOfRange(f"t={t} beyond computed frontier {traj.frontier}")
    times, lefts, rights = _knot_cache(traj)
    return _eval_piecewise(times, lefts, rights, t, from_left=False)


def eval_x_left(traj: Trajectory, t: float) -> Array:
    """Left limit of the state at t (differs from eval_x only at impulse times)."""
    if t <= 0.0:
        return traj.history(t)
    if t > traj.frontier:
        raise OutOfRange(f"t={t} beyond computed frontier {traj.frontier}")
    times, lefts, rights = _knot_cache(traj)
    return _eval_piecewise(times, lefts, rights, t, from_left=True)


def eval_tau(traj: Trajectory, t: float) -> float:
    """Piecewise-linear delay at time t; constant lam for t <= 0."""
    if t <= 0.0:
        return traj.lam
    if t > traj.frontier:
        raise OutOfRange(f"t={t} beyond computed frontier {traj.frontier}")
    n_nodes = traj.num_nodes
    last = traj.last_index
    j = floor_to_mesh(t, traj.h)
    if j >= last:
        if traj.final is not None and t > last * traj.h:
            t0 = last * traj.h
            w = (t - t0) / (traj.final.t - t0)
            return float(traj.taus[last] + w * (traj.final.tau - traj.taus[last]))
        return float(traj.taus[last])
    t0 = j * traj.h
    if t == t0:
        return float(traj.taus[j])
    w = (t - t0) / traj.h
    return float(traj.taus[j] + w * (traj.taus[j + 1] - traj.taus[j]))


_KNOT_ATTR = "_cached_knots"


def _knot_cache(traj: Trajectory):
    cache = traj.__dict__.get(_KNOT_ATTR)
    if cache is None:
        cache = _knots(traj)
        # Frozen dataclass: stash through __dict__ on purpose.
        traj.__dict__[_KNOT_ATTR] = cache
    return cache
