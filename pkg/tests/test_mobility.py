import math
import warnings

import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st
from scipy import stats

from icmn import _backend
from icmn.errors import ApproximationWarning, LowSampleWarning, ParameterError
from icmn.meeting import MeetingSchedule
from icmn.mobility import (
    C1,
    Exponential,
    Fixed,
    SpeedModel,
    Trace,
    Uniform,
    beta_rd,
    beta_rwp,
    estimate_beta,
    expected_relative_speed,
    extract_meetings,
    generate_rd,
    generate_rwp,
    pair_contact_times,
    rd_path,
    rwp_path,
)

import oracles
from conftest import mobility_trace

V40 = SpeedModel.constant(40.0)


def two_node_trace(path_a, path_b, horizon, L=1000.0):
    (ta, xa, ya), (tb, xb, yb) = path_a, path_b
    return Trace(n=2, L=L, horizon=horizon, t=[ta, tb], x=[xa, xb], y=[ya, ya if yb is None else yb])


def grid_histogram(trace, bins=10, step=500.0):
    times = np.arange(step / 2, trace.horizon, step)
    pos = trace.positions_at(times).reshape(-1, 2)
    h, _, _ = np.histogram2d(pos[:, 0], pos[:, 1], bins=bins, range=[[0, trace.L], [0, trace.L]])
    return h


class TestDistributions:
    def test_speed_model(self):
        assert V40.is_constant
        assert not SpeedModel.uniform(10, 20).is_constant
        v = SpeedModel.uniform(10, 20).sample(np.random.default_rng(0), 1000)
        assert v.min() >= 10 and v.max() <= 20

    @pytest.mark.parametrize("lo, hi", [(0, 10), (-1, 5), (10, 5)])
    def test_speed_model_invalid(self, lo, hi):
        with pytest.raises(ParameterError):
            SpeedModel(lo, hi)

    @pytest.mark.parametrize("make", [lambda: Fixed(-1), lambda: Uniform(5, 1), lambda: Exponential(0)])
    def test_duration_invalid(self, make):
        with pytest.raises(ParameterError):
            make()


class TestRandomWaypoint:
    def test_reference_setting_segment_speeds(self):
        tr = mobility_trace("rwp", 1)
        assert tr.n == 20 and tr.horizon == 1e7
        for k in range(tr.n):
            # absolute time rounding near t = 1e7 is ~2e-9 s, visible on very short legs
            np.testing.assert_allclose(tr.segment_speeds(k), 40.0, rtol=1e-6)
            assert tr.t[k][0] == 0 and tr.t[k][-1] == 1e7

    def test_truncated_first_leg(self):
        tr = generate_rwp(5, 2000.0, V40, 0.5, seed=3)
        for k in range(5):
            assert len(tr.t[k]) == 2
            assert tr.t[k][-1] == 0.5
            assert math.hypot(tr.x[k][1] - tr.x[k][0], tr.y[k][1] - tr.y[k][0]) == pytest.approx(20.0)

    def test_center_denser_than_corner(self):
        h = grid_histogram(mobility_trace("rwp", 1))
        center = h[4:6, 4:6].mean()
        corner = np.mean([h[0, 0], h[0, -1], h[-1, 0], h[-1, -1]])
        assert center > 3 * corner

    def test_path_with_pauses(self):
        t, x, y = rwp_path((0.0, 0.0), [[30.0, 40.0], [30.0, 0.0]], [10.0, 20.0], [5.0, 0.0])
        np.testing.assert_allclose(t, [0, 5, 10, 12])
        np.testing.assert_allclose(x, [0, 30, 30, 30])
        np.testing.assert_allclose(y, [0, 40, 40, 0])

    def test_deterministic_and_seed_sensitive(self):
        a = generate_rwp(4, 500.0, V40, 1000.0, seed=1)
        b = generate_rwp(4, 500.0, V40, 1000.0, seed=1)
        c = generate_rwp(4, 500.0, V40, 1000.0, seed=2)
        assert all(np.array_equal(p, q) for p, q in zip(a.x, b.x))
        assert not np.array_equal(a.x[0], c.x[0])

    def test_pause_distribution_used(self):
        tr = generate_rwp(2, 500.0, V40, 5000.0, seed=1, pause=Fixed(30.0))
        still = np.diff(tr.t[0])[(np.diff(tr.x[0]) == 0) & (np.diff(tr.y[0]) == 0)]
        assert len(still) > 5
        assert np.all(still[:-1] == pytest.approx(30.0))

    def test_rejects_bad_speed(self):
        with pytest.raises(ParameterError):
            generate_rwp(3, 100.0, 40.0, 10.0, seed=0)


class TestRandomDirection:
    def test_straight_line_kinematics(self):
        L, v = 2000.0, 40.0
        t, x, y = rd_path((L / 2, L / 2), [0.0], [v], [L / (4 * v)], [0.0], L)
        assert (x[-1], y[-1]) == pytest.approx((3 * L / 4, L / 2))
        assert t[-1] == pytest.approx(L / (4 * v))
        # twice as long reaches the wall exactly
        t, x, y = rd_path((L / 2, L / 2), [0.0], [v], [L / (2 * v)], [0.0], L)
        assert (x[-1], y[-1]) == pytest.approx((L, L / 2))

    def test_reflection_mirrors_heading(self):
        t, x, y = rd_path((90.0, 50.0), [0.0], [1.0], [30.0], [0.0], 100.0)
        # hits the wall at t = 10, then travels back 20 m
        np.testing.assert_allclose(t, [0, 10, 30])
        np.testing.assert_allclose(x, [90, 100, 80])
        np.testing.assert_allclose(y, 50)

    def test_wrap_jumps(self):
        t, x, y = rd_path((90.0, 50.0), [0.0], [1.0], [30.0], [0.0], 100.0, boundary="wrap")
        np.testing.assert_allclose(t, [0, 10, 10, 30])
        np.testing.assert_allclose(x, [90, 100, 0, 20])

    @pytest.mark.parametrize("boundary", ["reflect", "wrap"])
    def test_constant_speed_preserved(self, boundary):
        tr = generate_rd(3, 500.0, V40, 20_000.0, seed=2, boundary=boundary)
        for k in range(3):
            np.testing.assert_allclose(tr.segment_speeds(k), 40.0, rtol=1e-7)

    @pytest.mark.parametrize("boundary", ["reflect", "wrap"])
    def test_stationary_distribution_uniform(self, boundary):
        tr = mobility_trace("rd", 1) if boundary == "reflect" else generate_rd(20, 2000.0, V40, 1e7, 1, boundary="wrap")
        h = grid_histogram(tr).ravel()
        assert stats.chisquare(h).pvalue > 0.001
        assert h.max() / h.mean() < 1.1

    def test_rejects_bad_boundary(self):
        with pytest.raises(ParameterError):
            generate_rd(3, 100.0, V40, 10.0, seed=0, boundary="torus")


class TestTrace:
    def test_positions_at(self):
        tr = two_node_trace(([0, 10], [0, 10], [0, 0]), ([0, 10], [5, 5], [5, 5]), 10.0, L=20.0)
        p = tr.positions_at([0.0, 5.0])
        np.testing.assert_allclose(p[0], [[0, 0], [5, 0]])
        np.testing.assert_allclose(p[1], [[5, 5], [5, 5]])
        assert tr.n_waypoints == 4

    @pytest.mark.parametrize(
        "t, x",
        [([0, 5], [0, 1]), ([1, 10], [0, 1]), ([0, 6, 5, 10], [0, 1, 1, 1]), ([0, 10], [0, 50])],
    )
    def test_validation(self, t, x):
        with pytest.raises(ParameterError):
            Trace(n=1, L=20.0, horizon=10.0, t=[t], x=[x], y=[np.zeros(len(t))])


class TestExtraction:
    def test_stationary_pair_in_range(self):
        tr = two_node_trace(([0, 100], [10, 10], [10, 10]), ([0, 100], [15, 15], [10, 10]), 100.0)
        s = extract_meetings(tr, d=10.0)
        assert len(s) == 1 and s.time[0] == 0.0

    def test_head_on(self):
        g, d, v = 100.0, 20.0, 5.0
        tr = two_node_trace(([0, 20], [0, 100], [50, 50]), ([0, 20], [g, g - 100], [50, 50]), 20.0, L=200.0)
        t = pair_contact_times(tr, 0, 1, d)
        np.testing.assert_allclose(t, [(g - d) / (2 * v)], rtol=1e-12)

    def test_contact_spanning_segments_counts_once(self):
        # node 0 parks next to node 1 through several waypoints
        a = ([0, 10, 20, 30, 40], [0, 50, 50, 52, 100], [0, 0, 0, 0, 0])
        b = ([0, 40], [50, 50], [5, 5])
        tr = two_node_trace(a, b, 40.0, L=200.0)
        t = pair_contact_times(tr, 0, 1, 10.0)
        assert len(t) == 1
        assert 8.0 < t[0] < 10.0

    def test_repeated_contacts(self):
        # back and forth past a parked node
        a = ([0, 10, 20, 30], [0, 100, 0, 100], [0, 0, 0, 0])
        b = ([0, 30], [50, 50], [0, 0])
        tr = two_node_trace(a, b, 30.0, L=200.0)
        np.testing.assert_allclose(pair_contact_times(tr, 0, 1, 10.0), [4.0, 14.0, 24.0])

    def test_wrap_jump_into_range(self):
        a = ([0, 10, 10, 20], [90, 100, 0, 10], [50, 50, 50, 50])
        b = ([0, 20], [5, 5], [50, 50])
        tr = two_node_trace(a, b, 20.0, L=100.0)
        np.testing.assert_allclose(pair_contact_times(tr, 0, 1, 8.0), [10.0])

    def test_schedule_structure(self):
        tr = generate_rwp(6, 300.0, V40, 2000.0, seed=4)
        s = extract_meetings(tr, 30.0, seed=2)
        assert s.n == 6 and s.horizon == 2000.0 and s.seed == 2
        for a in range(6):
            for b in range(a + 1, 6):
                np.testing.assert_array_equal(s.pair_times(a, b), pair_contact_times(tr, a, b, 30.0))
        again = extract_meetings(tr, 30.0, seed=2)
        assert s.same_events(again)

    def test_rejects_nonpositive_range(self):
        tr = generate_rwp(2, 100.0, V40, 10.0, seed=0)
        with pytest.raises(ParameterError):
            extract_meetings(tr, 0.0)

    @pytest.mark.skipif(len(_backend.BACKENDS) < 2, reason="compiled kernels not built")
    @given(seed=st.integers(0, 10_000), boundary=st.sampled_from(["reflect", "wrap"]), d=st.floats(5.0, 60.0))
    @settings(max_examples=40, deadline=None)
    def test_backends_agree(self, seed, boundary, d):
        tr = generate_rd(4, 200.0, SpeedModel(5.0, 15.0), 500.0, seed, boundary=boundary, travel_time=Exponential(20.0))
        a = extract_meetings(tr, d, backend="python")
        b = extract_meetings(tr, d, backend="cython")
        assert a.same_events(b)


class TestRelativeSpeed:
    @pytest.mark.parametrize("v", [40.0, 1.0, 7.5])
    def test_constant_speed_closed_form(self, v):
        assert expected_relative_speed(SpeedModel.constant(v)) == pytest.approx(4 * v / math.pi, rel=1e-9)

    def test_frozen(self):
        assert expected_relative_speed(V40) == pytest.approx(oracles.EV_40, rel=1e-12)
        assert 4 / math.pi == pytest.approx(1.2732, abs=5e-5)

    def test_degenerate_range_equals_constant(self):
        assert expected_relative_speed(SpeedModel.uniform(40.0, 40.0)) == expected_relative_speed(V40)

    @pytest.mark.parametrize("lo, hi", [(20.0, 60.0), (1.0, 2.0)])
    def test_uniform_speeds_against_elliptic_form(self, lo, hi):
        got = expected_relative_speed(SpeedModel.uniform(lo, hi))
        assert got == pytest.approx(oracles.relative_speed_uniform(lo, hi), rel=1e-6)


class TestMeetingRateFormulas:
    @pytest.mark.parametrize("d", [20, 50, 100])
    def test_frozen_values(self, d):
        ev = 4 * 40 / math.pi
        assert beta_rwp(2000.0, d, ev) == pytest.approx(oracles.BETA_RWP[d], rel=1e-12)
        assert beta_rd(2000.0, d, ev) == pytest.approx(oracles.BETA_RD[d], rel=1e-12)
        assert beta_rwp(2000.0, d, ev) / beta_rd(2000.0, d, ev) == pytest.approx(C1)

    def test_listed_values(self):
        ev = expected_relative_speed(V40)
        assert beta_rwp(2000.0, 20.0, ev) == pytest.approx(6.97e-4, abs=5e-7)
        assert beta_rd(2000.0, 50.0, ev) == pytest.approx(1.27e-3, abs=5e-6)

    def test_zero_range(self):
        assert beta_rwp(2000.0, 0.0, 50.0) == 0.0
        assert beta_rd(2000.0, 0.0, 50.0) == 0.0

    def test_linear_in_d_and_speed(self):
        assert beta_rd(2000.0, 40.0, 10.0) == pytest.approx(2 * beta_rd(2000.0, 20.0, 10.0))
        assert beta_rwp(2000.0, 20.0, 30.0) == pytest.approx(3 * beta_rwp(2000.0, 20.0, 10.0))

    def test_warns_outside_small_range_regime(self):
        with pytest.warns(ApproximationWarning):
            beta_rwp(100.0, 20.0, 1.0)
        with warnings.catch_warnings():
            warnings.simplefilter("error")
            beta_rd(2000.0, 100.0, 1.0)

    def test_invalid(self):
        with pytest.raises(ParameterError):
            beta_rd(0.0, 1.0, 1.0)
        with pytest.raises(ParameterError):
            beta_rwp(10.0, -1.0, 1.0)


class TestEstimateBeta:
    def test_empty(self):
        s = MeetingSchedule(n=4, horizon=10.0, time=[], i=[], j=[], tx=[])
        with pytest.warns(LowSampleWarning):
            assert estimate_beta(s) == 0.0

    def test_single_pair(self):
        t = np.linspace(0.5, 99.5, 100)
        s = MeetingSchedule(n=2, horizon=100.0, time=t, i=np.zeros(100), j=np.ones(100), tx=np.zeros(100))
        assert estimate_beta(s) == 1.0
