import math

import numpy as np
import pytest

from epcadde.engine import (
    delayed_index,
    eval_mesh_state,
    eval_tau,
    eval_x,
    eval_x_left,
    floor_to_mesh,
    mesh_index_of,
    solve,
    step_interior,
    step_with_impulse,
)
from epcadde.model import (
    COMPLETED,
    END_OF_HORIZON,
    TAU_NEGATIVE,
    HistoryFunction,
    ImpulseEvent,
    OutOfRange,
    ProblemSpec,
    StepSizeTooLarge,
    ValidationError,
)


class TestFloorToMesh:
    def test_frozen_examples(self):
        assert floor_to_mesh(0.35, 0.1) == 3
        assert floor_to_mesh(0.3, 0.1) == 3
        assert floor_to_mesh(-0.05, 0.1) == -1
        assert floor_to_mesh(0.0, 0.1) == 0
        assert floor_to_mesh(1.9999999999999998, 0.1) == 20

    def test_snaps_within_ulps(self):
        # 0.7 / 0.1 is 6.999999999999999 in floats; plain floor would give 6
        assert floor_to_mesh(0.7, 0.1) == 7

    def test_floor_contract_random(self, rng):
        for _ in range(100_000):
            h = float(rng.uniform(1e-4, 1.0))
            t = float(rng.uniform(-5.0, 5.0))
            j = floor_to_mesh(t, h)
            q = t / h
            # within snapping distance of an integer either answer is the
            # snapped one; otherwise it is the true floor
            if abs(q - round(q)) > 4.0 * np.spacing(max(abs(q), 1.0)):
                assert j == math.floor(q)
            else:
                assert j == round(q)

    def test_mesh_index_of(self):
        assert mesh_index_of(1.5, 0.1) == 15
        assert mesh_index_of(0.7, 0.1) == 7
        assert mesh_index_of(1.05, 0.1) is None
        assert mesh_index_of(0.0, 0.5) == 0


class TestDelayedIndex:
    def test_frozen_example(self):
        # floor(1.91672237 / 0.1) = 19, so node 10 reads node -9 (history)
        assert delayed_index(10, 1.91672237, 0.1) == -9

    def test_zero_delay_reads_own_node(self):
        assert delayed_index(5, 0.04, 0.1) == 5

    def test_negative_tau_rejected(self):
        with pytest.raises(ValidationError):
            delayed_index(3, -0.01, 0.1)


class TestHandSteps:
    """First steps of the impulsive linear problem at h=0.1, by hand.

    x0 = 1, tau0 = 2; the delayed read is history (= 1); f = -w/5 gives
    slope -0.2; g = 1 + x/4 - tau/2 gives 0.25.  The arithmetic order is
    x1 = x0 + h * slope and tau1 = tau0 + h * g, which the assertions pin
    bitwise.
    """

    def test_first_two_nodes_bitwise(self, solved):
        traj = solved[("example2", 0.1)]
        assert traj.xs[0][0] == 1.0
        assert traj.taus[0] == 2.0
        assert traj.xs[1][0] == 1.0 + 0.1 * (-0.2)
        assert traj.xs[1][0] == 0.98
        assert traj.taus[1] == 2.0 + 0.1 * 0.25
        assert traj.taus[1] == 2.025

    def test_impulse_split_step(self, solved):
        # cell [0.7, 0.8) contains the first impulse at 0.75: advance to the
        # impulse with the frozen slope, add the jump, then finish the cell
        traj = solved[("example2", 0.1)]
        rec = traj.impulses[0]
        assert rec.k == 1 and rec.time == 0.75 and not rec.at_node
        assert traj.xs[7][0] == 0.8599999999999999
        assert rec.x_left[0] == 0.8499999999999999
        assert rec.x_right[0] == 2.8499999999999996
        assert abs(traj.xs[8][0] - 2.84) <= 1e-12

    def test_node_coincident_impulse_pre_jump_storage(self, solved):
        # the second impulse time 1.5 is node 15 at h=0.1: the stored node
        # keeps the pre-jump value, the record carries both limits, and the
        # jump lands at the start of cell 15 before the slope is applied
        traj = solved[("example2", 0.1)]
        rec = traj.impulses[1]
        assert rec.k == 2 and rec.time == 1.5 and rec.at_node
        assert rec.node_index == 15
        assert traj.xs[15][0] == rec.x_left[0]
        assert rec.x_right[0] == rec.x_left[0] - 0.75
        out = step_with_impulse(15, traj, _spec_example2(), 0.1, 1)
        assert out.x_next[0] == traj.xs[16][0]
        assert out.tau_next == traj.taus[16]


def _spec_example2():
    from epcadde.problems import builtin

    return builtin("example2")[0]


class TestStepRecompute:
    def test_interior_steps_bitwise(self, solved, example2):
        spec, _, _ = example2
        traj = solved[("example2", 0.1)]
        impulse_cells = {15, 7}
        for j in range(0, 30):
            if j in impulse_cells:
                continue
            out = step_interior(j, traj, spec, 0.1)
            assert out.x_next[0] == traj.xs[j + 1][0]
            assert out.tau_next == traj.taus[j + 1]
            assert out.record is None

    def test_impulse_steps_bitwise(self, solved, example2):
        spec, _, _ = example2
        traj = solved[("example2", 0.1)]
        out7 = step_with_impulse(7, traj, spec, 0.1, 0)
        assert out7.x_next[0] == traj.xs[8][0]
        assert out7.record is not None and not out7.record.at_node
        out15 = step_with_impulse(15, traj, spec, 0.1, 1)
        assert out15.x_next[0] == traj.xs[16][0]
        assert out15.record is not None and out15.record.at_node

    def test_wrong_cell_rejected(self, solved, example2):
        spec, _, _ = example2
        traj = solved[("example2", 0.1)]
        with pytest.raises(ValidationError):
            step_with_impulse(6, traj, spec, 0.1, 0)


class TestSolveStatuses:
    def test_full_horizon_status(self, solved):
        assert solved[("example2", 0.1)].status.kind == END_OF_HORIZON
        assert solved[("example1", 0.01)].status.kind == END_OF_HORIZON

    def test_early_mesh_stop_completed(self, example2):
        spec, _, _ = example2
        traj = solve(spec, 0.1, t_end=2.0)
        assert traj.status.kind == COMPLETED
        assert traj.last_index == 20
        assert traj.final is None

    def test_partial_cell_final_point(self, example2):
        spec, _, _ = example2
        traj = solve(spec, 0.1, t_end=0.33)
        assert traj.status.kind == COMPLETED
        assert traj.last_index == 3
        assert traj.final is not None
        assert traj.final.t == 0.33
        full = solve(spec, 0.1)
        # the partial cell advances with the frozen slope of node 3
        slope = (full.xs[4][0] - full.xs[3][0]) / 0.1
        assert traj.final.x[0] == pytest.approx(full.xs[3][0] + 0.03 * slope, abs=1e-15)

    def test_t_end_validation(self, example2):
        spec, _, _ = example2
        with pytest.raises(ValidationError):
            solve(spec, 0.1, t_end=0.0)
        with pytest.raises(ValidationError):
            solve(spec, 0.1, t_end=5.5)

    def test_h_validation(self, example2):
        spec, _, _ = example2
        with pytest.raises(StepSizeTooLarge):
            solve(spec, 0.75)
        with pytest.raises(StepSizeTooLarge):
            solve(spec, -0.1)

    def test_tau_negative_taxonomy(self):
        spec = ProblemSpec(
            dim=1,
            f=lambda t, u, w: np.zeros(1),
            g=lambda t, u, w: -1.0,
            impulses=(),
            history=HistoryFunction.constant(np.array([1.0])),
            lam=0.45,
            horizon=4.0,
        )
        traj = solve(spec, 0.1)
        assert traj.status.kind == TAU_NEGATIVE
        # tau: 0.45, 0.35, ..., first negative value at node 5
        assert traj.status.at_index == 5
        assert traj.last_index == 5
        assert traj.taus[5] == pytest.approx(-0.05)
        assert not traj.status.ok

    def test_tau_negative_at_final_node(self):
        spec = ProblemSpec(
            dim=1,
            f=lambda t, u, w: np.zeros(1),
            g=lambda t, u, w: -1.0,
            impulses=(),
            history=HistoryFunction.constant(np.array([1.0])),
            lam=0.35,
            horizon=0.4,
        )
        traj = solve(spec, 0.1)
        assert traj.status.kind == TAU_NEGATIVE
        assert traj.status.at_index == 4


class TestDeterminism:
    def test_bitwise_repeatability(self, example2):
        spec, _, _ = example2
        a = solve(spec, 0.01)
        b = solve(spec, 0.01)
        assert np.array_equal(a.xs, b.xs)
        assert np.array_equal(a.taus, b.taus)


class TestDenseEval:
    def test_right_continuity_at_in_cell_impulse(self, solved):
        traj = solved[("example2", 0.1)]
        rec = traj.impulses[0]
        assert eval_x(traj, 0.75)[0] == rec.x_right[0]
        assert eval_x_left(traj, 0.75)[0] == rec.x_left[0]
        # mid-cell value after the impulse interpolates from x_right
        v = eval_x(traj, 0.8)[0]
        assert v == pytest.approx(2.84, abs=1e-12)

    def test_right_continuity_at_node_impulse(self, solved):
        traj = solved[("example2", 0.1)]
        rec = traj.impulses[1]
        assert eval_x(traj, 1.5)[0] == rec.x_right[0]
        assert eval_x_left(traj, 1.5)[0] == rec.x_left[0]
        assert traj.xs[15][0] == rec.x_left[0]

    def test_history_and_range(self, solved, example2):
        spec, _, _ = example2
        traj = solved[("example2", 0.1)]
        assert eval_x(traj, -0.5)[0] == spec.history(-0.5)[0]
        assert eval_x(traj, 0.0)[0] == traj.xs[0][0]
        with pytest.raises(OutOfRange):
            eval_x(traj, 5.0001)

    def test_nodes_interpolated_exactly(self, solved):
        traj = solved[("example2", 0.1)]
        for j in (0, 3, 9, 20, 50):
            t = traj.node_time(j)
            if j == 15:
                continue
            assert eval_x(traj, t)[0] == traj.xs[j][0]
            assert eval_tau(traj, t) == traj.taus[j]

    def test_tau_piecewise_linear_with_g_slopes(self, solved, example2):
        spec, _, _ = example2
        traj = solved[("example2", 0.1)]
        for j in (0, 7, 15, 33):
            g = spec.eval_g(j * 0.1, traj.xs[j], float(traj.taus[j]))
            mid = eval_tau(traj, j * 0.1 + 0.05)
            assert mid == pytest.approx(float(traj.taus[j]) + 0.05 * g, rel=1e-14)

    def test_tau_constant_before_zero(self, solved, example2):
        spec, _, _ = example2
        traj = solved[("example2", 0.1)]
        assert eval_tau(traj, -1.0) == spec.lam

    def test_delayed_reads_see_pre_jump_node(self, solved, example2):
        # nodes read through eval_mesh_state must match what the recursion
        # consumed: at the node-coincident impulse that is the pre-jump value
        spec, _, _ = example2
        traj = solved[("example2", 0.1)]
        v = eval_mesh_state(traj, spec.history, 15)
        assert v[0] == traj.xs[15][0]
        assert v[0] == traj.impulses[1].x_left[0]

    def test_eval_mesh_state_bounds(self, solved, example2):
        spec, _, _ = example2
        traj = solved[("example2", 0.1)]
        assert eval_mesh_state(traj, spec.history, -3)[0] == spec.history(-0.3)[0]
        with pytest.raises(OutOfRange):
            eval_mesh_state(traj, spec.history, 51)


class TestMultiDim:
    def test_two_dimensional_rotation(self):
        # x' = A x(t - tau) with constant tau keeps components coupled;
        # check the first Euler-like step by hand
        A = np.array([[0.0, -1.0], [1.0, 0.0]])
        spec = ProblemSpec(
            dim=2,
            f=lambda t, u, w: A @ w,
            g=lambda t, u, w: 0.0,
            impulses=(),
            history=HistoryFunction.constant(np.array([1.0, 0.0])),
            lam=1.0,
            horizon=2.0,
        )
        traj = solve(spec, 0.1)
        np.testing.assert_array_equal(traj.xs[1], [1.0, 0.1])
        assert traj.taus[-1] == 1.0
        assert traj.status.kind == END_OF_HORIZON
