"""Hot loops shared by the sampler: walk stepping, clock systems, FIFO replay.

Every function here is written in the numba-compatible subset of python and
decorated through :mod:`._jit`, so the exact same code runs compiled (default)
or interpreted (``GJNEXACT_NO_JIT=1``).  All randomness is consumed as raw
``Generator.random()`` uniforms with fixed per-step draw counts, which makes
the two backends consume identical streams and produce bit-identical output.

Distribution parameters arrive as packed rows (see distributions.pack_row):
``kind`` code, phase count, and two parameter vectors.
"""

from __future__ import annotations

import math

import numpy as np

from ._jit import njit

# kind codes, mirrored from distributions.py (kept literal for numba)
_EXP = 0
_ERLANG = 1
_HYPER = 2
_UNIFORM = 3
_TILTED_UNIFORM = 4


@njit(cache=True)
def draw_packed(kind, nph, p1, p2, rng):
    """One variate from a packed distribution row.

    Draw counts are fixed per kind (exp/uniform: 1, hyperexp: 2, erlang: k)
    so stream positions never depend on realized values.
    """
    if kind == _EXP:
        return -math.log1p(-rng.random()) / p1[0]
    if kind == _ERLANG:
        acc = 0.0
        for _ in range(nph):
            acc += -math.log1p(-rng.random())
        return acc / p1[0]
    if kind == _HYPER:
        u = rng.random()
        c = 0
        while c < nph - 1 and u > p2[c]:
            c += 1
        return -math.log1p(-rng.random()) / p1[c]
    if kind == _UNIFORM:
        return p1[0] + rng.random() * (p1[1] - p1[0])
    # tilted uniform: inverse CDF of density proportional to exp(s*x) on [lo, hi]
    s = p1[2]
    u = rng.random()
    return p1[0] + math.log1p(u * math.expm1(s * (p1[1] - p1[0]))) / s


@njit(cache=True)
def resolve_mark(u, cum_row, tgt_row, ntgt):
    """Routing mark from one uniform: target station index, or -1 for exit."""
    for t in range(ntgt):
        if u < cum_row[t]:
            return tgt_row[t]
    return np.int64(-1)


# walk_block modes
WALK_DESCENT = 0
WALK_CROSSING = 1

# tilt kinds
TILT_NONE = -1
TILT_ARRIVAL = 0
TILT_SERVICE = 1
TILT_ROUTED = 2


@njit(cache=True)
def walk_block(
    rng,
    narr,
    d,
    nrt,
    arr_kind,
    arr_nph,
    arr_p1,
    arr_p2,
    svc_kind,
    svc_nph,
    svc_p1,
    svc_p2,
    mark_cum,
    mark_tgt,
    mark_n,
    gamma_a,
    beta,
    phi_c,
    rt_src,
    rt_tgt,
    mode,
    tilt_kind,
    tilt_station,
    t_kind,
    t_nph,
    t_p1,
    t_p2,
    t_mark_cum,
    s_cur,
    thresh,
    cross_ref,
    m,
    cap,
    out_s,
    out_da,
    out_db,
    out_mark,
):
    """Advance the multidimensional walk until a stop condition or ``cap`` steps.

    Coordinates are laid out as [arrival coords | service coords | routed
    coords].  Each step draws, in fixed order, one interarrival gap per
    arrival stream, one activity gap per station, and one routing mark per
    station, then updates every coordinate's partial sum in ``s_cur`` (in
    place) and records the absolute sums and the raw variates.

    mode WALK_DESCENT: stop once s < thresh strictly in every coordinate.
    mode WALK_CROSSING: stop once s - cross_ref > m strictly in some
    coordinate; the (tilt_kind, tilt_station) variate is drawn from the
    replacement row (t_kind, t_nph, t_p1, t_p2 / t_mark_cum) instead of the
    nominal one.

    Returns (steps_taken, done) with done=1 when the stop condition fired.
    """
    l = narr + d + nrt
    done = 0
    n = 0
    while n < cap:
        # interarrival gaps
        for a in range(narr):
            if mode == WALK_CROSSING and tilt_kind == TILT_ARRIVAL and tilt_station == a:
                x = draw_packed(t_kind, t_nph, t_p1, t_p2, rng)
            else:
                x = draw_packed(arr_kind[a], arr_nph[a], arr_p1[a], arr_p2[a], rng)
            out_da[n, a] = x
            s_cur[a] += 1.0 - gamma_a[a] * x
        # activity gaps
        for j in range(d):
            if mode == WALK_CROSSING and tilt_kind != TILT_ARRIVAL and tilt_station == j:
                x = draw_packed(t_kind, t_nph, t_p1, t_p2, rng)
            else:
                x = draw_packed(svc_kind[j], svc_nph[j], svc_p1[j], svc_p2[j], rng)
            out_db[n, j] = x
            s_cur[narr + j] += beta[j] * x - 1.0
        # routing marks (one uniform per station, always)
        for j in range(d):
            u = rng.random()
            if mode == WALK_CROSSING and tilt_kind == TILT_ROUTED and tilt_station == j:
                mk = resolve_mark(u, t_mark_cum, mark_tgt[j], mark_n[j])
            else:
                mk = resolve_mark(u, mark_cum[j], mark_tgt[j], mark_n[j])
            out_mark[n, j] = mk
        # routed coordinates
        for c in range(nrt):
            j = rt_src[c]
            ind = 1.0 if out_mark[n, j] == rt_tgt[c] else 0.0
            s_cur[narr + d + c] += ind - phi_c[c] * out_db[n, j]
        for c in range(l):
            out_s[n, c] = s_cur[c]
        n += 1
        if mode == WALK_DESCENT:
            ok = True
            for c in range(l):
                if s_cur[c] >= thresh[c]:
                    ok = False
                    break
            if ok:
                done = 1
                break
        else:
            for c in range(l):
                if s_cur[c] - cross_ref[c] > m:
                    done = 1
                    break
            if done == 1:
                break
    return n, done


# clock_run modes
CLOCK_VACATION = 0
CLOCK_AUTONOMOUS = 1


@njit(cache=True)
def clock_run(
    mode,
    d,
    ev_time,
    ev_station,
    ev_is_arrival,
    ev_mark,
    y0,
    s0,
    out_y,
    out_sflag,
    out_svc,
):
    """Evolve a clock-driven queue system through a fixed event timeline.

    Events (sorted by time) are either external arrivals or activity
    completions; activity events carry a routing mark (-1 = exit).

    CLOCK_VACATION: state is (queue y, in-service flag s) per station.  At an
    activity completion the finished customer (if the server was busy) is
    routed by the mark, then the server takes the head of its own queue or
    goes on vacation.  out_svc[e] = 1 when the completed activity was a
    service.  Total occupancy is y + s.

    CLOCK_AUTONOMOUS: state is y only; every activity completion routes one
    (possibly virtual) customer by the mark and removes a real one only when
    y > 0.

    Fills out_y (occupancy after each event: y + s for vacation mode),
    out_sflag (server flags after each event), out_svc.  Returns the index of
    the earliest event after which all stations are empty (vacation mode:
    y = 0 and s = 0 everywhere), or -1 if that never happens.
    """
    n = ev_time.shape[0]
    y = y0.copy()
    s = s0.copy()
    tau_idx = np.int64(-1)
    for e in range(n):
        st = ev_station[e]
        if ev_is_arrival[e] == 1:
            y[st] += 1
        else:
            mk = ev_mark[e]
            if mode == CLOCK_VACATION:
                s_old = s[st]
                out_svc[e] = s_old
                if s_old == 1 and mk >= 0:
                    y[mk] += 1
                if y[st] > 0:
                    s[st] = 1
                    y[st] -= 1
                else:
                    s[st] = 0
            else:
                out_svc[e] = 0
                if mk >= 0:
                    y[mk] += 1
                if y[st] > 0:
                    y[st] -= 1
        empty = True
        for i in range(d):
            tot = y[i] + s[i]
            out_y[e, i] = tot
            out_sflag[e, i] = s[i]
            if tot > 0:
                empty = False
        if empty and tau_idx < 0:
            tau_idx = e
    return tau_idx


# fifo_run statuses
FIFO_DONE = 0
FIFO_EXHAUSTED = 1

# fifo_run modes
FIFO_TOKENS = 0
FIFO_FRESH = 1


@njit(cache=True)
def fifo_run(
    mode,
    d,
    rng,
    arr_time,
    arr_station,
    arr_ptr0,
    tok_dur,
    tok_mark,
    tok_off,
    tok_used0,
    svc_scale,
    svc_kind,
    svc_nph,
    svc_p1,
    svc_p2,
    mark_cum,
    mark_tgt,
    mark_n,
    t0,
    end_time,
    y0,
    busy0,
    comp0,
    cmark0,
    grid,
    grid_ptr0,
    out_grid,
):
    """Event-driven FIFO network run from time t0 to end_time.

    FIFO_TOKENS: the k-th service started at station i consumes the k-th
    pre-classified token (duration tok_dur scaled by svc_scale[i], mark
    tok_mark); runs out of tokens => stop with FIFO_EXHAUSTED so the caller
    can extend the token arrays and resume.

    FIFO_FRESH: service durations and marks are drawn on the fly from the
    packed rows (naive forward simulation); svc_scale still applies.

    External arrivals come from (arr_time, arr_station) starting at index
    arr_ptr0.  State vectors (y = total customers incl. in service, busy,
    completion time, current mark) are updated in place.  Occupancy snapshots
    are written to out_grid at the times in ``grid`` (increasing, within
    (t0, end_time]), starting at index grid_ptr0; a snapshot at time g
    reflects the state just after any event at g.

    Returns (status, arr_ptr, grid_ptr, now).
    """
    na = arr_time.shape[0]
    ng = grid.shape[0]
    y = y0
    busy = busy0
    comp = comp0
    cmark = cmark0
    used = tok_used0
    ap = arr_ptr0
    gp = grid_ptr0
    now = t0
    status = FIFO_DONE
    while True:
        # start services wherever possible (also handles resume after refill)
        for i in range(d):
            if busy[i] == 0 and y[i] > 0:
                if mode == FIFO_TOKENS:
                    k = used[i]
                    if k >= tok_off[i + 1] - tok_off[i]:
                        status = FIFO_EXHAUSTED
                        break
                    dur = tok_dur[tok_off[i] + k] * svc_scale[i]
                    mk = tok_mark[tok_off[i] + k]
                    used[i] = k + 1
                else:
                    dur = draw_packed(svc_kind[i], svc_nph[i], svc_p1[i], svc_p2[i], rng) * svc_scale[i]
                    mk = resolve_mark(rng.random(), mark_cum[i], mark_tgt[i], mark_n[i])
                busy[i] = 1
                comp[i] = now + dur
                cmark[i] = mk
        if status == FIFO_EXHAUSTED:
            break
        # next event
        t_next = end_time
        kind = 0  # 0 = reached end, 1 = arrival, 2 = completion
        which = -1
        if ap < na and arr_time[ap] < t_next:
            t_next = arr_time[ap]
            kind = 1
        for i in range(d):
            if busy[i] == 1 and comp[i] < t_next:
                t_next = comp[i]
                kind = 2
                which = i
        while gp < ng and grid[gp] < t_next:
            for i in range(d):
                out_grid[gp, i] = y[i]
            gp += 1
        now = t_next
        if kind == 0:
            while gp < ng and grid[gp] <= end_time:
                for i in range(d):
                    out_grid[gp, i] = y[i]
                gp += 1
            break
        if kind == 1:
            y[arr_station[ap]] += 1
            ap += 1
        else:
            i = which
            y[i] -= 1
            busy[i] = 0
            comp[i] = np.inf
            if cmark[i] >= 0:
                y[cmark[i]] += 1
            cmark[i] = -1
    return status, ap, gp, now
