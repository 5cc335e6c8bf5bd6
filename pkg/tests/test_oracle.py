import math

import numpy as np
import pytest

from epcadde.engine import solve
from epcadde.model import (
    END_OF_HORIZON,
    TAU_NEGATIVE,
    HistoryFunction,
    OutOfRange,
    ProblemSpec,
    StepSizeTooLarge,
)
from epcadde.oracle import integrate_reference


@pytest.fixture(scope="module")
def ref1(example1):
    spec, _, _ = example1
    return integrate_reference(spec, 1e-3)


@pytest.fixture(scope="module")
def ref2(example2):
    spec, _, _ = example2
    return integrate_reference(spec, 1e-3)


class TestAgainstClosedForms:
    def test_smooth_problem_grid(self, example1, ref1):
        _, exact_x, exact_tau = example1
        for t in np.linspace(0.0, 4.0, 81):
            t = float(t)
            assert abs(ref1.eval_x(t)[0] - exact_x(t)) <= 1e-7
            assert abs(ref1.eval_tau(t) - exact_tau(t)) <= 1e-7

    def test_impulsive_problem_early_value(self, ref2):
        # closed form gives exactly 2.8 at t = 1
        assert ref2.eval_x(1.0)[0] == pytest.approx(2.8, abs=1e-9)

    def test_impulsive_problem_delay_early(self, example2, ref2):
        _, _, exact_tau = example2
        for t in (0.5, 1.0, 2.0, 3.0):
            assert abs(ref2.eval_tau(t) - exact_tau(t)) <= 1e-7


class TestSelfConvergence:
    def test_fourth_order_in_base_step(self, example1):
        spec, exact_x, _ = example1
        errs = []
        for base in (8e-3, 4e-3, 2e-3):
            ref = integrate_reference(spec, base)
            errs.append(max(abs(ref.eval_x(float(t))[0] - exact_x(float(t)))
                            for t in np.linspace(0.5, 3.5, 7)))
        # a 4th-order scheme halves the step into a 16x error drop; demand
        # at least 2x so roundoff floors cannot flake the test
        assert errs[0] / errs[1] >= 2.0
        assert errs[1] / errs[2] >= 2.0


def _drift_free(jump=1.0):
    return ProblemSpec(
        dim=1,
        f=lambda t, u, w: np.zeros(1),
        g=lambda t, u, w: 1.0,
        impulses=(),
        history=HistoryFunction.constant(np.array([3.0])),
        lam=1.0,
        horizon=2.0,
    )


class TestEvents:
    def test_zero_rhs_with_jump(self):
        from epcadde.model import ImpulseEvent

        spec = ProblemSpec(
            dim=1,
            f=lambda t, u, w: np.zeros(1),
            g=lambda t, u, w: 1.0,
            impulses=(ImpulseEvent(time=0.75, jump_map=lambda u: np.ones(1)),),
            history=HistoryFunction.constant(np.array([3.0])),
            lam=1.0,
            horizon=2.0,
        )
        ref = integrate_reference(spec, 1e-2)
        assert ref.eval_x(0.5)[0] == pytest.approx(3.0, abs=1e-12)
        assert ref.eval_x_left(0.75)[0] == pytest.approx(3.0, abs=1e-12)
        assert ref.eval_x(0.75)[0] == pytest.approx(4.0, abs=1e-12)
        assert ref.eval_x(1.9)[0] == pytest.approx(4.0, abs=1e-12)
        (rec,) = ref.impulses
        assert rec.k == 1
        assert rec.time == 0.75
        assert rec.x_left[0] == pytest.approx(3.0, abs=1e-12)
        assert rec.x_right[0] == pytest.approx(4.0, abs=1e-12)

    def test_impulse_right_continuity(self, example2, ref2):
        _, exact_x, _ = example2
        for t_imp, jump in ((0.75, 2.0), (1.5, -0.75)):
            left = ref2.eval_x_left(t_imp)[0]
            right = ref2.eval_x(t_imp)[0]
            assert right - left == pytest.approx(jump, abs=1e-9)
            assert right == pytest.approx(exact_x(t_imp), abs=1e-7)

    def test_delay_continuous_across_segment_edges(self, ref2):
        for edge in ref2.edges[1:-1]:
            e = float(edge)
            below = ref2.eval_tau(e - 1e-10)
            above = ref2.eval_tau(e + 1e-10)
            assert abs(above - below) <= 1e-8

    def test_out_of_range(self, ref1):
        with pytest.raises(OutOfRange):
            ref1.eval_x(4.0 + 1e-9)

    def test_history_side(self, example1, ref1):
        _, exact_x, _ = example1
        assert ref1.eval_x(-0.5)[0] == exact_x(-0.5)
        assert ref1.eval_tau(-0.5) == 2.0


class TestTauNegativeStop:
    def test_stop_at_zero_crossing(self):
        spec = ProblemSpec(
            dim=1,
            f=lambda t, u, w: np.zeros(1),
            g=lambda t, u, w: -1.0,
            impulses=(),
            history=HistoryFunction.constant(np.array([1.0])),
            lam=0.5,
            horizon=2.0,
        )
        ref = integrate_reference(spec, 1e-2)
        assert ref.status.kind == TAU_NEGATIVE
        assert not ref.status.ok
        # tau(t) = 0.5 - t hits zero at exactly t = 0.5
        assert ref.frontier == pytest.approx(0.5, abs=1e-9)
        assert ref.eval_tau(ref.frontier) == 0.0
        assert ref.status.at_time is not None

    def test_healthy_run_reports_horizon(self, ref1):
        assert ref1.status.kind == END_OF_HORIZON
        assert ref1.status.ok


class TestPreconditions:
    def test_base_step_must_clear_impulse_gap(self, example2):
        spec, _, _ = example2
        with pytest.raises(StepSizeTooLarge):
            integrate_reference(spec, 0.2)  # h0 = 0.75, needs < 0.1875
        with pytest.raises(StepSizeTooLarge):
            integrate_reference(spec, 0.0)
        with pytest.raises(StepSizeTooLarge):
            integrate_reference(spec, -1e-3)


class TestDiscretizationGap:
    def test_coarse_solver_tracks_reference(self, example1, ref1):
        spec, _, _ = example1
        traj = solve(spec, 1e-3)
        dev = max(
            abs(float(traj.xs[j][0]) - ref1.eval_x(j * traj.h)[0])
            for j in range(0, traj.last_index + 1, 40)
        )
        assert dev <= 1e-3

    def test_gap_shrinks_linearly(self, example1, ref1):
        spec, _, _ = example1
        devs = []
        for h in (0.1, 0.01):
            traj = solve(spec, h)
            devs.append(max(
                abs(float(traj.xs[j][0]) - ref1.eval_x(j * traj.h)[0])
                for j in range(traj.last_index + 1)
            ))
        assert devs[1] <= devs[0] / 5.0
