import collections
import csv
import io

import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st
from scipy import stats

from icmn import _backend
from icmn.errors import ConfigurationError, ParameterError
from icmn.meeting import MeetingEvent, NetworkParams, generate_schedule
from icmn.routing import (
    NodeState,
    Outcome,
    Packet,
    SimulationStats,
    TrafficParams,
    handle_meeting,
    measured_throughput,
    sample_derangement,
    simulate,
    write_delays_csv,
    write_report,
)

import oracles
from conftest import BASE, poisson_schedule

BACKENDS = sorted(_backend.BACKENDS)


def fresh_states(traffic):
    return [NodeState.empty(k, traffic) for k in range(traffic.n)]


def ev(t, tx, rx):
    return MeetingEvent(t, (min(tx, rx), max(tx, rx)), tx, 0)


# 0 -> 1 -> 2 -> 3 -> 0
RING = TrafficParams(lam=1.0, permutation=(1, 2, 3, 0))


class TestHandleMeeting:
    def test_direct_delivery(self):
        states = fresh_states(RING)
        p = Packet(id=0, flow=0, created_at=2.0)
        states[0].source_queue.append(p)
        outcome, moved = handle_meeting(ev(7.5, 0, 1), states, RING, heads=True)
        assert outcome is Outcome.SOURCE_TO_DESTINATION and moved is p
        assert p.hops == 1 and p.delay == 5.5 and p.left_source_at == 7.5
        assert not states[0].source_queue

    def test_heads_hands_to_relay(self):
        states = fresh_states(RING)
        p, q = Packet(0, 0, 1.0), Packet(1, 0, 2.0)
        states[0].source_queue.extend([p, q])
        outcome, moved = handle_meeting(ev(3.0, 0, 2), states, RING, heads=True)
        assert outcome is Outcome.SOURCE_TO_RELAY and moved is p
        assert list(states[2].relay_queues[0]) == [p]
        assert p.relay == 2 and p.delivered_at is None and p.hops is None
        assert list(states[0].source_queue) == [q]

    def test_tails_with_empty_relay_queue_is_idle(self):
        states = fresh_states(RING)
        states[0].source_queue.append(Packet(0, 0, 1.0))
        # node 0 relays for flow 2 (destination 3) only; its queue is empty
        assert handle_meeting(ev(3.0, 0, 3), states, RING, heads=False) == (Outcome.IDLE, None)
        assert len(states[0].source_queue) == 1

    def test_tails_delivers_relayed_packet(self):
        states = fresh_states(RING)
        p = Packet(0, 2, 1.0, left_source_at=2.0, relay=0)
        states[0].relay_queues[2].append(p)
        outcome, moved = handle_meeting(ev(4.0, 0, 3), states, RING, heads=False)
        assert outcome is Outcome.RELAY_TO_DESTINATION and moved is p
        assert p.hops == 2 and p.delay == 3.0

    def test_destination_meeting_with_empty_source_is_idle(self):
        states = fresh_states(RING)
        states[0].relay_queues[2].append(Packet(0, 2, 1.0, relay=0))
        assert handle_meeting(ev(4.0, 0, 1), states, RING, heads=False) == (Outcome.IDLE, None)

    def test_heads_with_empty_source_is_idle(self):
        states = fresh_states(RING)
        assert handle_meeting(ev(4.0, 1, 3), states, RING, heads=True) == (Outcome.IDLE, None)

    def test_relay_queue_layout(self):
        st_ = NodeState.empty(0, RING)
        # node 0 sources flow 0 and is destination of flow 3
        assert sorted(st_.relay_queues) == [1, 2]
        assert st_.backlog() == 0


class TestDerangement:
    def test_two_nodes(self):
        assert sample_derangement(2, 0) == (1, 0)

    def test_three_nodes_cycles_equally_likely(self):
        seen = collections.Counter(sample_derangement(3, s) for s in range(2000))
        assert set(seen) == {(1, 2, 0), (2, 0, 1)}
        assert seen[(1, 2, 0)] / 2000 == pytest.approx(0.5, abs=0.05)

    def test_uniform_over_derangements(self):
        seen = collections.Counter(sample_derangement(4, s) for s in range(9000))
        assert len(seen) == oracles.derangement_count(4) == 9
        assert stats.chisquare(list(seen.values())).pvalue > 0.001

    @given(n=st.integers(2, 60), seed=st.integers(0, 2**32 - 1))
    @settings(max_examples=200, deadline=None)
    def test_no_fixed_point(self, n, seed):
        p = sample_derangement(n, seed)
        assert sorted(p) == list(range(n))
        assert all(p[k] != k for k in range(n))

    def test_rejects_one_node(self):
        with pytest.raises(ParameterError):
            sample_derangement(1, 0)


class TestTrafficParams:
    def test_at_load(self):
        t = TrafficParams.at_load(BASE, 0.8, seed=5)
        assert t.lam == pytest.approx(2.784e-3)
        assert t.permutation == sample_derangement(20, 5)
        for k in range(20):
            assert t.source_of(t.destination(k)) == k

    @pytest.mark.parametrize(
        "lam, perm",
        [(0.0, (1, 0)), (-1.0, (1, 0)), (1.0, (0, 1)), (1.0, (1, 1)), (1.0, (1, 2))],
    )
    def test_invalid(self, lam, perm):
        with pytest.raises(ParameterError):
            TrafficParams(lam=lam, permutation=perm)

    def test_bad_load(self):
        with pytest.raises(ParameterError):
            TrafficParams.at_load(BASE, 0.0)


def small_run(seed, rho=0.7, horizon=2e5, n=6, beta=1e-3, backend=None):
    params = NetworkParams(n=n, beta=beta)
    sched = generate_schedule(params, horizon, seed)
    traffic = TrafficParams.at_load(params, rho, seed=seed)
    return simulate(params, traffic, sched, backend=backend)


def is_prefix(mask):
    """True when the set entries all come before the unset ones."""
    return bool(np.all(np.diff(mask.astype(np.int8)) <= 0))


def check_invariants(stats_, traffic_perm):
    d = stats_.delivered_mask
    # conservation at the horizon
    assert stats_.generated == stats_.delivered + stats_.backlog()
    # hop bound
    assert set(np.unique(stats_.hops[d])) <= {1, 2}
    assert np.all(stats_.hops[~d] == 0)
    # one-hop packets leave and arrive in the same meeting
    one = d & (stats_.relay < 0)
    np.testing.assert_array_equal(stats_.left_source_at[one], stats_.delivered_at[one])
    # relays are neither source nor destination of the packet
    two = d & (stats_.relay >= 0)
    dest = np.asarray(traffic_perm)[stats_.flow]
    assert np.all(stats_.relay[two] != stats_.flow[two])
    assert np.all(stats_.relay[two] != dest[two])
    # causality
    left = ~np.isnan(stats_.left_source_at)
    assert np.all(stats_.left_source_at[left] >= stats_.created_at[left])
    assert np.all(stats_.delivered_at[d] >= stats_.left_source_at[d])
    # FIFO source queues: departures in creation order
    for f in range(stats_.n):
        m = (stats_.flow == f) & left
        assert np.all(np.diff(stats_.left_source_at[m]) >= 0)
        assert is_prefix(left[stats_.flow == f])
    # FIFO relay queues: per (relay, flow), deliveries in enqueue order
    relayed = stats_.relay >= 0
    for r in range(stats_.n):
        for f in range(stats_.n):
            m = relayed & (stats_.relay == r) & (stats_.flow == f)
            if not m.any():
                continue
            order = np.argsort(stats_.left_source_at[m], kind="stable")
            out = stats_.delivered_at[m][order]
            done = ~np.isnan(out)
            assert is_prefix(done)
            assert np.all(np.diff(out[done]) >= 0)
    # counters agree with packet records
    assert stats_.source_to_destination == int(one.sum())
    assert stats_.relay_to_destination == int(two.sum())
    assert stats_.source_to_relay == int(relayed.sum())


class TestSimulateProperties:
    @given(seed=st.integers(0, 10_000), rho=st.sampled_from([0.05, 0.5, 0.9, 1.5]))
    @settings(max_examples=30, deadline=None)
    def test_invariants(self, seed, rho):
        s = small_run(seed, rho)
        check_invariants(s, s.permutation)
        assert s.total_meetings == len(generate_schedule(NetworkParams(6, 1e-3), 2e5, seed))

    def test_invariants_full_scale(self):
        sched = poisson_schedule(1)
        traffic = TrafficParams.at_load(BASE, 0.8, seed=1)
        s = simulate(BASE, traffic, sched)
        check_invariants(s, traffic.permutation)

    @pytest.mark.skipif(len(BACKENDS) < 2, reason="compiled kernels not built")
    @given(seed=st.integers(0, 10_000), rho=st.sampled_from([0.3, 1.2]))
    @settings(max_examples=15, deadline=None)
    def test_backends_identical(self, seed, rho):
        a = small_run(seed, rho, horizon=5e4, backend="python")
        b = small_run(seed, rho, horizon=5e4, backend="cython")
        for name in ("left_source_at", "delivered_at", "relay", "counters", "direct_opportunities",
                     "relay_opportunities", "relay_inputs", "source_backlog", "relay_backlog", "occupancy"):
            np.testing.assert_array_equal(getattr(a, name), getattr(b, name), err_msg=name)

    def test_deterministic_outputs(self):
        bufs = []
        for _ in range(2):
            s = small_run(3)
            b1, b2 = io.StringIO(), io.StringIO()
            write_delays_csv(s, b1)
            write_report(s, b2)
            bufs.append(b1.getvalue() + b2.getvalue())
        assert bufs[0] == bufs[1]

    def test_coin_seed_decouples_traffic(self):
        params = NetworkParams(n=6, beta=1e-3)
        sched = generate_schedule(params, 1e5, 1)
        a = simulate(params, TrafficParams.at_load(params, 0.5, seed=1), sched)
        b = simulate(params, TrafficParams.at_load(params, 0.5, seed=1), sched, coin_seed=99)
        assert a.coin_seed == 1 and b.coin_seed == 99
        assert not np.array_equal(a.counters, b.counters)

    @pytest.mark.parametrize("backend", BACKENDS)
    def test_arrival_before_meeting_on_tie(self, backend):
        k = _backend.get(backend)
        out = k.route(
            3,
            np.array([1, 2, 0], dtype=np.int32),
            np.array([5.0]),
            np.array([0], dtype=np.int32),
            np.array([5.0]),
            np.array([0], dtype=np.int32),
            np.array([1], dtype=np.int32),
            np.array([0], dtype=np.int8),
            0.0,
            10.0,
            1,
        )
        assert out["delivered_at"][0] == 5.0

    def test_mismatched_sizes(self):
        sched = generate_schedule(NetworkParams(n=5, beta=1e-3), 100.0, 0)
        with pytest.raises(ConfigurationError):
            simulate(BASE, TrafficParams.at_load(BASE, 0.5), sched)
        with pytest.raises(ConfigurationError):
            simulate(NetworkParams(n=5, beta=1e-3), TrafficParams.at_load(BASE, 0.5), sched)

    @pytest.mark.parametrize("warmup", [-1.0, 100.0, 200.0])
    def test_bad_warmup(self, warmup):
        p = NetworkParams(n=5, beta=1e-3)
        with pytest.raises(ParameterError):
            simulate(p, TrafficParams.at_load(p, 0.5), generate_schedule(p, 100.0, 0), warmup=warmup)


@pytest.fixture(scope="module")
def run08():
    traffic = TrafficParams.at_load(BASE, 0.8, seed=1)
    return simulate(BASE, traffic, poisson_schedule(1))


class TestRates:
    def test_relay_input_rate(self, run08):
        # each (relay, flow) cell is fed at lam / n
        lam = run08.lam
        cells = run08.relay_inputs[run08.relay_inputs > 0]
        assert len(cells) == 20 * 18
        rate = cells.mean() / run08.window
        assert rate == pytest.approx(lam / 20, rel=0.05)
        disp = ((cells - cells.mean()) ** 2).sum() / cells.mean()
        assert stats.chi2.sf(disp, len(cells) - 1) > 0.001

    def test_delay_at_rho_08(self, run08):
        assert run08.mean_delay() == pytest.approx(oracles.DELAY_RHO_08, rel=0.05)

    def test_stable_occupancy_settles(self, run08):
        occ = run08.mean_occupancy()
        assert len(occ) == 20
        assert occ[15:].mean() == pytest.approx(occ[10:15].mean(), rel=0.10)
        # Little's law: mean content ~ n * lam * E[D]
        assert occ[2:].mean() == pytest.approx(20 * run08.lam * oracles.DELAY_RHO_08, rel=0.1)

    def test_overload_backlog_grows_linearly(self):
        lam = 1.5 * oracles.CAPACITY
        backlog = []
        for horizon in (2.5e6, 5e6):
            traffic = TrafficParams.at_load(BASE, 1.5, seed=2)
            s = simulate(BASE, traffic, poisson_schedule(2, horizon))
            backlog.append(s.source_backlog.sum())
            assert s.source_backlog.sum() == pytest.approx(20 * (lam - oracles.CAPACITY) * horizon, rel=0.05)
        assert backlog[1] / backlog[0] == pytest.approx(2.0, rel=0.1)


def make_stats(delivered, window):
    n = len(delivered)
    created = np.zeros(n)
    return SimulationStats(
        n=2, lam=1.0, warmup=0.0, horizon=window, permutation=(1, 0), traffic_seed=0, coin_seed=0,
        backend="python", created_at=created, flow=np.zeros(n, dtype=np.int32),
        left_source_at=np.asarray(delivered), delivered_at=np.asarray(delivered),
        relay=np.full(n, -1, dtype=np.int32), counters=np.zeros(4, dtype=np.int64),
        direct_opportunities=np.zeros(2), relay_opportunities=np.zeros(2), relay_inputs=np.zeros((2, 2)),
        source_backlog=np.zeros(2, dtype=np.int64), relay_backlog=np.zeros((2, 2), dtype=np.int64),
        occupancy=np.zeros(1),
    )


class TestThroughputAndReports:
    def test_ratio(self):
        s = make_stats(np.linspace(1.0, 9e5, 1000), 1e6)
        assert measured_throughput(s, flow=0) == pytest.approx(1e-3)
        assert measured_throughput(s, flow=None) == pytest.approx(0.5e-3)

    def test_zero_window(self):
        s = make_stats([], 1.0)
        s.warmup = 1.0
        with pytest.raises(ParameterError):
            measured_throughput(s)

    def test_delays_csv(self):
        s = make_stats([2.0, float("nan")], 10.0)
        buf = io.StringIO()
        write_delays_csv(s, buf)
        rows = list(csv.reader(io.StringIO(buf.getvalue())))
        assert rows == [
            ["packet_id", "flow", "created_at", "delivered_at", "hops"],
            ["0", "0", "0.0", "2.0", "1"],
            ["1", "0", "0.0", "", ""],
        ]

    def test_report_keys(self, tmp_path):
        path = tmp_path / "r.txt"
        write_report(small_run(1), path)
        keys = [line.split(" = ")[0] for line in path.read_text().splitlines()]
        assert {"throughput_per_flow", "mean_delay", "traffic_seed", "coin_seed", "permutation"} <= set(keys)
