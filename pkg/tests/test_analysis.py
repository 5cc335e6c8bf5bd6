import math

import numpy as np
import pytest

from epcadde.analysis import (
    ERROR_FLOOR,
    convergence_order,
    error_table,
    estimate_constants,
    gronwall_bound,
    monotonicity_certificate,
)
from epcadde.engine import solve
from epcadde.model import (
    GronwallParams,
    HistoryFunction,
    NotAMeshPoint,
    OutOfRange,
    ProblemSpec,
    ValidationError,
)
from epcadde.problems import builtin


class TestGronwallBound:
    def test_frozen_geometric_case(self):
        # b = 0 kills the exponential; sum_{j=0}^{2} 2^j * 1 = 7
        p = GronwallParams(a0=0.5, a1=0.25, a2=0.25, b=0.0, c=1.0, K=2)
        assert gronwall_bound(p, 3.0) == 7.0

    def test_frozen_exponential_case(self):
        p = GronwallParams(a0=1.0, a1=0.0, a2=0.0, b=1.0, c=0.5, K=1)
        assert gronwall_bound(p, 1.0) == 2.5 * math.e

    def test_negative_time_rejected(self):
        p = GronwallParams(a0=1.0, a1=0.0, a2=0.0, b=0.0, c=0.0, K=0)
        with pytest.raises(ValidationError):
            gronwall_bound(p, -0.1)

    def test_overflow_returns_inf(self):
        p = GronwallParams(a0=1.0, a1=0.0, a2=0.0, b=1e6, c=0.0, K=0)
        assert gronwall_bound(p, 10.0) == math.inf

    def test_monotone_in_every_parameter(self, rng):
        # the bound grows (weakly) in each of a0, a1, a2, b, c, K, t
        for _ in range(10_000):
            a0, a1, a2 = rng.uniform(0.0, 3.0, size=3)
            b = rng.uniform(0.0, 2.0)
            c = rng.uniform(0.0, 1.5)
            K = int(rng.integers(0, 6))
            t = rng.uniform(0.0, 4.0)
            base = gronwall_bound(GronwallParams(a0, a1, a2, b, c, K), t)
            bump = rng.uniform(0.01, 0.5)
            grown = [
                gronwall_bound(GronwallParams(a0 + bump, a1, a2, b, c, K), t),
                gronwall_bound(GronwallParams(a0, a1 + bump, a2, b, c, K), t),
                gronwall_bound(GronwallParams(a0, a1, a2 + bump, b, c, K), t),
                gronwall_bound(GronwallParams(a0, a1, a2, b + bump, c, K), t),
                gronwall_bound(GronwallParams(a0, a1, a2, b, c + bump, K), t),
                gronwall_bound(GronwallParams(a0, a1, a2, b, c, K + 1), t),
                gronwall_bound(GronwallParams(a0, a1, a2, b, c, K), t + bump),
            ]
            assert all(g >= base for g in grown)


def _trivial_problem():
    # f = 0, g = 1, one impulse of +0 at t = 0.5: every constant is exact
    return ProblemSpec(
        dim=1,
        f=lambda t, u, w: np.zeros(1),
        g=lambda t, u, w: 1.0,
        impulses=(),
        history=HistoryFunction.constant(np.ones(1), bound_hint=1.0),
        lam=1.0,
        horizon=1.0,
    )


class TestEstimateConstants:
    def test_trivial_problem_constants_exact(self):
        est = estimate_constants(_trivial_problem())
        # a0 = 1 + 1 (history bound + initial delay), a1 = T * sup|g(.,0,0)| = 1,
        # a2 = 0, b = c = 0, K = 0: bound is exactly 1.01 * 3
        assert est.M1 == 1.01 * 3.0
        assert est.M2 == 0.0
        assert est.M3 == 1.0
        assert est.a0_min == 1.0
        assert est.h_star == est.h0

    def test_example2_bound_matches_hand_computation(self, example2):
        spec, _, _ = example2
        est = estimate_constants(spec)
        # a0+a1+a2 = 3 + 5 + 2 = 10 with b = 1.4 and three cells (K = 2):
        # 1.01 * 30 * exp(7), frozen to the exact float the estimator yields
        assert est.M1 == 33227.98470038229
        assert est.M1 == pytest.approx(1.01 * 30.0 * math.exp(7.0), rel=1e-15)
        assert math.isfinite(est.M2)
        # g = 1 + x/4 - tau/2 dips negative somewhere in the M1 ball, so the
        # global minimum cannot certify positivity; a caveat must say so
        assert est.a0_min < 0.0
        assert any("path" in c for c in est.caveats)

    def test_example1_bound_overflows_to_inf(self, example1):
        spec, _, _ = example1
        est = estimate_constants(spec)
        assert est.M1 == math.inf
        assert any("float range" in c for c in est.caveats)
        assert math.isfinite(est.M2)

    def test_method_labels(self, example2):
        spec, _, _ = example2
        est = estimate_constants(spec)
        # example2 ships full hints, so every Lipschitz input is declared
        assert est.method_of("L1") == "declared"
        assert est.method_of("M2") == "sampled"
        with pytest.raises(KeyError):
            est.method_of("M1")  # derived, not estimated: no label


class TestMonotonicityCertificate:
    def test_example2_strictly_increasing(self, solved):
        traj = solved[("example2", 0.001)]
        spec, _, _ = builtin("example2")
        rep = monotonicity_certificate(traj, spec)
        assert rep.strictly_increasing
        assert rep.sign_change_times == ()
        assert rep.num_segments == 1
        assert rep.max_rate < 1.0
        assert rep.min_margin == pytest.approx(0.3596, abs=1e-3)

    def test_example1_changes_sign_once(self, solved):
        traj = solved[("example1", 0.001)]
        spec, _, _ = builtin("example1")
        rep = monotonicity_certificate(traj, spec)
        assert not rep.strictly_increasing
        assert len(rep.sign_change_times) == 1
        assert rep.sign_change_times[0] == pytest.approx(0.111, abs=1e-3)
        assert rep.max_rate == 1.5  # rate at t=0 with x=2, tau=2
        assert rep.num_segments == 2

    def test_as_dict_round_trips_fields(self, solved):
        spec, _, _ = builtin("example2")
        rep = monotonicity_certificate(solved[("example2", 0.1)], spec)
        d = rep.as_dict()
        assert d["strictly_increasing"] is True
        assert d["h"] == 0.1


class TestErrorTable:
    def test_frozen_example1_row(self, example1, solved):
        _, exact_x, exact_tau = example1
        traj = solved[("example1", 0.1)]
        rows = error_table(traj, exact_x, exact_tau, [1.0])
        (row,) = rows
        assert row.s == 1.0
        assert row.i == 10
        assert row.x_h[0] == pytest.approx(1.32583334, abs=5e-9)
        assert row.tau_h == pytest.approx(1.91672237, abs=5e-9)
        assert row.e_x == pytest.approx(4.205e-02, rel=1e-3)
        assert row.e_tau == pytest.approx(2.255e-02, rel=1e-3)

    def test_non_mesh_time_rejected(self, example1, solved):
        _, exact_x, exact_tau = example1
        with pytest.raises(NotAMeshPoint):
            error_table(solved[("example1", 0.1)], exact_x, exact_tau, [1.05])

    def test_time_past_trajectory_rejected(self, example1, solved):
        _, exact_x, exact_tau = example1
        with pytest.raises(OutOfRange):
            error_table(solved[("example1", 0.1)], exact_x, exact_tau, [4.1])


class TestConvergenceOrder:
    def test_requires_three_levels(self, example1):
        spec, exact_x, exact_tau = example1
        with pytest.raises(ValidationError):
            convergence_order(spec, exact_x, exact_tau, [0.1, 0.01], [2.0])

    def test_bad_component(self, example1):
        spec, exact_x, exact_tau = example1
        with pytest.raises(ValidationError):
            convergence_order(
                spec, exact_x, exact_tau, [0.1, 0.01, 0.001], [2.0], component="y"
            )

    def test_example1_first_order(self, example1):
        spec, exact_x, exact_tau = example1
        rep = convergence_order(spec, exact_x, exact_tau, [0.1, 0.01, 0.001], [2.0])
        assert [h for h, _ in rep.pairs] == [0.1, 0.01, 0.001]
        assert all(7.5 <= r <= 12.5 for r in rep.ratios)
        assert rep.fitted_order == pytest.approx(1.0, abs=0.15)
        assert not rep.floor_limited
        assert rep.levels_succeeded == 3

    def test_floor_limited_when_exact(self):
        # f = 0 with exact constant solution: errors sit on the floor
        spec = _trivial_problem()
        rep = convergence_order(
            spec,
            lambda t: np.ones(1),
            lambda t: 1.0 + t,
            [0.1, 0.05, 0.025],
            [0.5],
            component="x",
        )
        assert rep.floor_limited
        assert all(e < ERROR_FLOOR for _, e in rep.pairs)
        assert math.isnan(rep.fitted_order)

    def test_failed_levels_collected(self):
        # delay law dives below zero immediately: every level fails
        spec = ProblemSpec(
            dim=1,
            f=lambda t, u, w: np.zeros(1),
            g=lambda t, u, w: -1.0,
            impulses=(),
            history=HistoryFunction.constant(np.ones(1)),
            lam=0.05,
            horizon=1.0,
        )
        rep = convergence_order(
            spec, lambda t: np.ones(1), lambda t: 0.05 - t, [0.1, 0.05, 0.025], [0.5]
        )
        assert len(rep.failures) == 3
        assert rep.levels_succeeded == 0
        assert math.isnan(rep.fitted_order)
