# cython: language_level=3, boundscheck=False, wraparound=False, cdivision=True
"""Compiled inner loops.

Both functions mirror :mod:`icmn._fallback` operation for operation so the two
backends return bit-identical results for identical inputs.
"""

import numpy as np
cimport numpy as cnp
from libc.math cimport sqrt, NAN

cnp.import_array()

cdef enum:
    OUT_S2D = 0
    OUT_S2R = 1
    OUT_R2D = 2
    OUT_IDLE = 3


cdef inline void _push(long long pid, long long q, long long[:] head,
                       long long[:] tail, long long[:] nxt) noexcept nogil:
    nxt[pid] = -1
    if tail[q] < 0:
        head[q] = pid
    else:
        nxt[tail[q]] = pid
    tail[q] = pid


cdef inline long long _pop(long long q, long long[:] head, long long[:] tail,
                           long long[:] nxt) noexcept nogil:
    cdef long long pid = head[q]
    head[q] = nxt[pid]
    if head[q] < 0:
        tail[q] = -1
    return pid


def route(int n, const int[:] dest,
          const double[:] a_time, const int[:] a_node,
          const double[:] m_time, const int[:] m_tx, const int[:] m_rx,
          const signed char[:] m_heads,
          double warmup, double horizon, int n_bins):
    cdef Py_ssize_t n_pkt = a_time.shape[0]
    cdef Py_ssize_t n_meet = m_time.shape[0]
    cdef Py_ssize_t ia = 0, im = 0
    cdef long long pid, q
    cdef int tx, rx, f, node, b
    cdef double t, last = 0.0, edge, width
    cdef long long in_system = 0

    src = np.full(n_pkt, -1, dtype=np.int64)
    left = np.full(n_pkt, NAN)
    delivered = np.full(n_pkt, NAN)
    relay = np.full(n_pkt, -1, dtype=np.int32)
    counters = np.zeros(4, dtype=np.int64)
    direct_opps = np.zeros(n, dtype=np.int64)
    relay_opps = np.zeros(n, dtype=np.int64)
    relay_in = np.zeros(n * n, dtype=np.int64)
    occupancy = np.zeros(n_bins, dtype=np.float64)
    inv = np.empty(n, dtype=np.int32)

    cdef long long[:] nxt = src
    cdef double[:] left_v = left
    cdef double[:] deliv_v = delivered
    cdef int[:] relay_v = relay
    cdef long long[:] cnt = counters
    cdef long long[:] dopp = direct_opps
    cdef long long[:] ropp = relay_opps
    cdef long long[:] rin = relay_in
    cdef double[:] occ = occupancy
    cdef int[:] inv_v = inv

    # queue q < n is node q's source queue; q = n + r*n + f is relay r's queue for flow f
    qhead = np.full(n + n * n, -1, dtype=np.int64)
    qtail = np.full(n + n * n, -1, dtype=np.int64)
    qlen = np.zeros(n + n * n, dtype=np.int64)
    cdef long long[:] head = qhead
    cdef long long[:] tail = qtail
    cdef long long[:] ql = qlen

    for node in range(n):
        inv_v[dest[node]] = node
    width = horizon / n_bins
    b = 0
    edge = width

    with nogil:
        while ia < n_pkt or im < n_meet:
            if ia < n_pkt and (im >= n_meet or a_time[ia] <= m_time[im]):
                t = a_time[ia]
            else:
                t = m_time[im]
            while b < n_bins - 1 and t > edge:
                occ[b] += in_system * (edge - last)
                last = edge
                b += 1
                edge = (b + 1) * width
            occ[b] += in_system * (t - last)
            last = t

            if ia < n_pkt and (im >= n_meet or a_time[ia] <= m_time[im]):
                node = a_node[ia]
                _push(ia, node, head, tail, nxt)
                ql[node] += 1
                in_system += 1
                ia += 1
                continue

            tx = m_tx[im]
            rx = m_rx[im]
            if rx == dest[tx]:
                dopp[tx] += 1
                if ql[tx] > 0:
                    pid = _pop(tx, head, tail, nxt)
                    ql[tx] -= 1
                    left_v[pid] = t
                    deliv_v[pid] = t
                    in_system -= 1
                    cnt[OUT_S2D] += 1
                else:
                    cnt[OUT_IDLE] += 1
            elif m_heads[im]:
                ropp[tx] += 1
                if ql[tx] > 0:
                    pid = _pop(tx, head, tail, nxt)
                    ql[tx] -= 1
                    left_v[pid] = t
                    relay_v[pid] = rx
                    q = n + rx * n + tx
                    _push(pid, q, head, tail, nxt)
                    ql[q] += 1
                    if t >= warmup:
                        rin[rx * n + tx] += 1
                    cnt[OUT_S2R] += 1
                else:
                    cnt[OUT_IDLE] += 1
            else:
                f = inv_v[rx]
                q = n + tx * n + f
                if ql[q] > 0:
                    pid = _pop(q, head, tail, nxt)
                    ql[q] -= 1
                    deliv_v[pid] = t
                    in_system -= 1
                    cnt[OUT_R2D] += 1
                else:
                    cnt[OUT_IDLE] += 1
            im += 1

        while b < n_bins:
            occ[b] += in_system * (edge - last)
            last = edge
            b += 1
            edge = (b + 1) * width

    return {
        "left_source_at": left,
        "delivered_at": delivered,
        "relay": relay,
        "counters": counters,
        "direct_opportunities": direct_opps,
        "relay_opportunities": relay_opps,
        "relay_inputs": relay_in.reshape(n, n),
        "source_backlog": qlen[:n].copy(),
        "relay_backlog": qlen[n:].reshape(n, n).copy(),
        "occupancy": occupancy,
    }


cdef inline double _lerp(double t, double t0, double t1, double p0, double p1) noexcept nogil:
    if t >= t1:
        return p1
    if t <= t0:
        return p0
    return p0 + (t - t0) / (t1 - t0) * (p1 - p0)


def pair_contacts(const double[:] ta, const double[:] xa, const double[:] ya,
                  const double[:] tb, const double[:] xb, const double[:] yb,
                  double d, double horizon):
    """Times at which the distance between two piecewise-linear tracks drops below ``d``."""
    cdef Py_ssize_t la = ta.shape[0] - 2, lb = tb.shape[0] - 2
    cdef Py_ssize_t sa = 0, sb = 0, m = 0
    cdef double cur = 0.0, end, d2 = d * d
    cdef double ax0, ay0, ax1, ay1, bx0, by0, bx1, by1
    cdef double px0, py0, px1, py1, dx, dy, qa, qb, qc, disc, s
    cdef bint start_in, end_in, prev_in = False, hit
    cdef Py_ssize_t cap = 64
    out = np.empty(cap, dtype=np.float64)
    cdef double[:] ov = out

    while cur < horizon:
        while sa < la and ta[sa + 1] <= cur:
            sa += 1
        while sb < lb and tb[sb + 1] <= cur:
            sb += 1
        end = ta[sa + 1] if ta[sa + 1] < tb[sb + 1] else tb[sb + 1]
        if end > horizon:
            end = horizon
        if end <= cur:
            break

        ax0 = _lerp(cur, ta[sa], ta[sa + 1], xa[sa], xa[sa + 1])
        ay0 = _lerp(cur, ta[sa], ta[sa + 1], ya[sa], ya[sa + 1])
        ax1 = _lerp(end, ta[sa], ta[sa + 1], xa[sa], xa[sa + 1])
        ay1 = _lerp(end, ta[sa], ta[sa + 1], ya[sa], ya[sa + 1])
        bx0 = _lerp(cur, tb[sb], tb[sb + 1], xb[sb], xb[sb + 1])
        by0 = _lerp(cur, tb[sb], tb[sb + 1], yb[sb], yb[sb + 1])
        bx1 = _lerp(end, tb[sb], tb[sb + 1], xb[sb], xb[sb + 1])
        by1 = _lerp(end, tb[sb], tb[sb + 1], yb[sb], yb[sb + 1])

        px0 = ax0 - bx0
        py0 = ay0 - by0
        px1 = ax1 - bx1
        py1 = ay1 - by1
        start_in = px0 * px0 + py0 * py0 < d2
        end_in = px1 * px1 + py1 * py1 < d2

        hit = False
        s = 0.0
        if start_in:
            if not prev_in:
                hit = True
        else:
            dx = px1 - px0
            dy = py1 - py0
            qa = dx * dx + dy * dy
            qb = 2.0 * (px0 * dx + py0 * dy)
            qc = px0 * px0 + py0 * py0 - d2
            if qa > 0.0 and qb < 0.0:
                disc = qb * qb - 4.0 * qa * qc
                if disc > 0.0:
                    s = (-qb - sqrt(disc)) / (2.0 * qa)
                    if s < 1.0:
                        hit = True
            if end_in and not hit:
                hit = True
                s = 1.0

        if hit:
            if m == cap:
                cap *= 2
                out = np.resize(out, cap)
                ov = out
            ov[m] = cur + s * (end - cur)
            m += 1
        prev_in = end_in
        cur = end

    return out[:m].copy()
