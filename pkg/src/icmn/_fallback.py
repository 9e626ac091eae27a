"""Pure-Python implementations of the compiled kernels.

Same signatures, same floating-point operation order, same outputs as
``_kernels.pyx``.  Used when the extension is not built or when
``ICMN_PURE_PYTHON=1`` is set.
"""

import numpy as np

from .meeting import MeetingEvent


def route(n, dest, a_time, a_node, m_time, m_tx, m_rx, m_heads, warmup, horizon, n_bins):
    from .routing import NodeState, Outcome, Packet, TrafficParams, handle_meeting

    traffic = TrafficParams(lam=1.0, permutation=tuple(int(x) for x in dest), seed=0)
    states = [NodeState.empty(k, traffic) for k in range(n)]
    dest = traffic.permutation
    a_time = a_time.tolist()
    a_node = a_node.tolist()
    m_time = m_time.tolist()
    m_tx = m_tx.tolist()
    m_rx = m_rx.tolist()
    m_heads = m_heads.tolist()
    n_pkt, n_meet = len(a_time), len(m_time)

    packets = []
    counters = [0, 0, 0, 0]
    slot = {
        Outcome.SOURCE_TO_DESTINATION: 0,
        Outcome.SOURCE_TO_RELAY: 1,
        Outcome.RELAY_TO_DESTINATION: 2,
        Outcome.IDLE: 3,
    }
    direct_opps = [0] * n
    relay_opps = [0] * n
    relay_in = np.zeros((n, n), dtype=np.int64)
    occ = [0.0] * n_bins
    width = horizon / n_bins
    b, edge, last = 0, width, 0.0
    in_system = 0
    ia = im = 0

    while ia < n_pkt or im < n_meet:
        arrival = ia < n_pkt and (im >= n_meet or a_time[ia] <= m_time[im])
        t = a_time[ia] if arrival else m_time[im]
        while b < n_bins - 1 and t > edge:
            occ[b] += in_system * (edge - last)
            last = edge
            b += 1
            edge = (b + 1) * width
        occ[b] += in_system * (t - last)
        last = t

        if arrival:
            node = a_node[ia]
            pkt = Packet(id=ia, flow=node, created_at=t)
            packets.append(pkt)
            states[node].source_queue.append(pkt)
            in_system += 1
            ia += 1
            continue

        tx, rx = m_tx[im], m_rx[im]
        heads = bool(m_heads[im])
        if rx == dest[tx]:
            direct_opps[tx] += 1
        elif heads:
            relay_opps[tx] += 1
        event = MeetingEvent(t, (min(tx, rx), max(tx, rx)), tx, im)
        outcome, pkt = handle_meeting(event, states, traffic, heads)
        counters[slot[outcome]] += 1
        if outcome is Outcome.SOURCE_TO_RELAY:
            if t >= warmup:
                relay_in[rx, tx] += 1
        elif outcome is not Outcome.IDLE:
            in_system -= 1
        im += 1

    while b < n_bins:
        occ[b] += in_system * (edge - last)
        last = edge
        b += 1
        edge = (b + 1) * width

    nan = float("nan")
    relay_backlog = np.zeros((n, n), dtype=np.int64)
    for st in states:
        for f, q in st.relay_queues.items():
            relay_backlog[st.node, f] = len(q)
    return {
        "left_source_at": np.array([nan if p.left_source_at is None else p.left_source_at for p in packets]),
        "delivered_at": np.array([nan if p.delivered_at is None else p.delivered_at for p in packets]),
        "relay": np.array([-1 if p.relay is None else p.relay for p in packets], dtype=np.int32),
        "counters": np.array(counters, dtype=np.int64),
        "direct_opportunities": np.array(direct_opps, dtype=np.int64),
        "relay_opportunities": np.array(relay_opps, dtype=np.int64),
        "relay_inputs": relay_in,
        "source_backlog": np.array([len(st.source_queue) for st in states], dtype=np.int64),
        "relay_backlog": relay_backlog,
        "occupancy": np.array(occ),
    }


def _lerp(t, t0, t1, p0, p1):
    with np.errstate(divide="ignore", invalid="ignore"):
        mid = p0 + (t - t0) / (t1 - t0) * (p1 - p0)
    return np.where(t >= t1, p1, np.where(t <= t0, p0, mid))


def pair_contacts(ta, xa, ya, tb, xb, yb, d, horizon):
    grid = np.union1d(ta, tb)
    grid = grid[grid <= horizon]
    cur, end = grid[:-1], grid[1:]
    sa = np.minimum(np.searchsorted(ta, cur, side="right") - 1, len(ta) - 2)
    sb = np.minimum(np.searchsorted(tb, cur, side="right") - 1, len(tb) - 2)

    def track(s, tt, xx, yy, when):
        return (
            _lerp(when, tt[s], tt[s + 1], xx[s], xx[s + 1]),
            _lerp(when, tt[s], tt[s + 1], yy[s], yy[s + 1]),
        )

    ax0, ay0 = track(sa, ta, xa, ya, cur)
    ax1, ay1 = track(sa, ta, xa, ya, end)
    bx0, by0 = track(sb, tb, xb, yb, cur)
    bx1, by1 = track(sb, tb, xb, yb, end)
    px0 = ax0 - bx0
    py0 = ay0 - by0
    px1 = ax1 - bx1
    py1 = ay1 - by1
    d2 = d * d
    start_in = px0 * px0 + py0 * py0 < d2
    end_in = px1 * px1 + py1 * py1 < d2
    prev_in = np.concatenate([[False], end_in[:-1]])

    dx = px1 - px0
    dy = py1 - py0
    qa = dx * dx + dy * dy
    qb = 2.0 * (px0 * dx + py0 * dy)
    qc = px0 * px0 + py0 * py0 - d2
    disc = qb * qb - 4.0 * qa * qc
    cand = ~start_in & (qa > 0.0) & (qb < 0.0) & (disc > 0.0)
    with np.errstate(divide="ignore", invalid="ignore"):
        s_root = (-qb - np.sqrt(np.where(cand, disc, 0.0))) / (2.0 * qa)
    crossing = cand & (s_root < 1.0)
    late = ~start_in & end_in & ~crossing

    s = np.where(crossing, s_root, np.where(late, 1.0, 0.0))
    hit = (start_in & ~prev_in) | crossing | late
    return (cur + s * (end - cur))[hit]
