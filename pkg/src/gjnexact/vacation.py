"""Vacation-dominated bounding system on the reconstructed backward window.

The autonomous bounding system looks, station by station, like a single-server
queue whose server takes a vacation (distributed like a service) whenever its
queue empties, and where every activity epoch routes a token -- real or
virtual -- downstream.  The honest vacation system differs in one gate only:
activity epochs route a customer onward only when the server was actually
serving (in-service flag 1), not when it was on vacation.

This module evolves those systems forward in real time over the window
[-T, 0] reconstructed by the backward timeline, classifies every activity gap
as a service token (with its routing mark) or a vacation, and provides the
pathwise dominance checks between the four coupled systems (true network,
slowed network, vacation system, autonomous system) that the sampler's
correctness rests on.  Dominance failures are bug detectors, not statistical
events: the checks hold almost surely on every path.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from . import _kernels
from .network import AuxiliaryParams, NetworkSpec
from .stationary_queue import MarkedEventTimeline, StationaryQueuePath

__all__ = [
    "SequenceExhausted",
    "DominanceViolation",
    "VacationState",
    "WindowEvents",
    "VacationTrajectory",
    "DrivingSequences",
    "build_window_events",
    "init_dominating",
    "evolve_vacation",
    "extract_sequences",
    "tokens_after",
    "assert_dominance",
]


class SequenceExhausted(RuntimeError):
    """A token-driven run consumed all extracted service tokens."""


class DominanceViolation(RuntimeError):
    """A proven pathwise ordering failed (implementation bug)."""


@dataclass(frozen=True)
class VacationState:
    """Queue state of the vacation system: waiting counts and server flags.

    ``residual[i]`` is the forward-real time from the state's time point to
    station i's next activity epoch (inf when it lies beyond the window).
    """

    y_wait: np.ndarray  # (d,) customers waiting (not in service)
    in_service: np.ndarray  # (d,) 0/1 server busy with a customer
    residual: np.ndarray  # (d,) informational

    @property
    def y_total(self) -> np.ndarray:
        return self.y_wait + self.in_service


@dataclass(frozen=True)
class WindowEvents:
    """Merged event list of the window, sorted by forward real time.

    Ties are broken deterministically by (time, station, activity-first).
    ``act_index[e]`` is the index of an activity event's epoch within its
    station's reversed timeline (-1 for arrivals), which is what links an
    event back to its gap and mark.
    """

    real_t: np.ndarray
    station: np.ndarray
    is_arrival: np.ndarray
    mark: np.ndarray
    act_index: np.ndarray
    t_start: float  # real window start (-T)

    @property
    def n(self) -> int:
        return self.real_t.shape[0]


def build_window_events(timeline: MarkedEventTimeline, T: float) -> WindowEvents:
    """Events of the real window (-T, 0] from the reversed timelines."""
    model = timeline.model
    times, stations, isarr, marks, aidx = [], [], [], [], []
    for a, st in enumerate(model.arr_stations):
        e = timeline.arr_epochs[a]
        sel = e < T
        k = int(sel.sum())
        times.append(-e[sel])
        stations.append(np.full(k, st, np.int64))
        isarr.append(np.ones(k, np.int64))
        marks.append(np.full(k, -1, np.int64))
        aidx.append(np.full(k, -1, np.int64))
    for j in range(model.d):
        e = timeline.act_epochs[j]
        sel = e < T
        k = int(sel.sum())
        times.append(-e[sel])
        stations.append(np.full(k, j, np.int64))
        isarr.append(np.zeros(k, np.int64))
        marks.append(timeline.act_marks[j][sel])
        aidx.append(np.flatnonzero(sel))
    t = np.concatenate(times)
    st = np.concatenate(stations)
    ia = np.concatenate(isarr)
    mk = np.concatenate(marks)
    ai = np.concatenate(aidx)
    order = np.lexsort((ia, st, t))
    return WindowEvents(t[order], st[order], ia[order], mk[order], ai[order], -float(T))


def init_dominating(
    yprime: StationaryQueuePath, timeline: MarkedEventTimeline, at: float
) -> VacationState:
    """Dominating initial condition at reversed time ``at`` (real -at).

    Every station holds its autonomous-queue count in the waiting room plus
    one customer freshly in service, so total occupancy is the autonomous
    count plus one; the in-service customer finishes exactly at the station's
    next activity epoch.
    """
    d = timeline.model.d
    y = yprime.y_prime_vector(at)
    res = np.empty(d)
    for i in range(d):
        e = timeline.act_epochs[i]
        c = int(np.searchsorted(e, at, side="left"))
        res[i] = at - e[c - 1] if c > 0 else np.inf
    return VacationState(y_wait=y.copy(), in_service=np.ones(d, np.int64), residual=res)


@dataclass(frozen=True)
class VacationTrajectory:
    """Event-indexed evolution of a clock-driven system over a window."""

    events: WindowEvents
    occupancy: np.ndarray  # (n, d) totals after each event
    server_flags: np.ndarray  # (n, d) in-service flags after each event
    svc_class: np.ndarray  # (n,) 1 when an activity event completed a service
    tau_index: int  # earliest event leaving the system empty, -1 if none
    init: VacationState

    @property
    def tau_time(self) -> float | None:
        return None if self.tau_index < 0 else float(self.events.real_t[self.tau_index])


def evolve_vacation(
    timeline: MarkedEventTimeline,
    init: VacationState,
    T: float,
    mode: int = _kernels.CLOCK_VACATION,
    events: WindowEvents | None = None,
) -> VacationTrajectory:
    """Run the vacation (or gateless autonomous) system over the window."""
    ev = build_window_events(timeline, T) if events is None else events
    n = ev.n
    d = timeline.model.d
    out_y = np.empty((n, d), np.int64)
    out_s = np.empty((n, d), np.int64)
    out_svc = np.zeros(n, np.int64)
    if mode == _kernels.CLOCK_AUTONOMOUS:
        y0 = init.y_total.astype(np.int64)
        s0 = np.zeros(d, np.int64)
    else:
        y0 = init.y_wait.astype(np.int64)
        s0 = init.in_service.astype(np.int64)
    tau = _kernels.clock_run(
        mode, d, ev.real_t, ev.station, ev.is_arrival, ev.mark, y0, s0, out_y, out_s, out_svc
    )
    return VacationTrajectory(ev, out_y, out_s, out_svc, int(tau), init)


@dataclass(frozen=True)
class DrivingSequences:
    """Per-station driving data extracted from a vacation trajectory.

    Service tokens appear in forward-time order; each carries the full
    activity gap that ended at its epoch (scaled later per consuming system)
    and its routing mark.  Vacation-classified gaps keep no marks.
    """

    arrivals: list  # per station: real arrival times (ascending)
    svc_dur: list  # per station: token durations
    svc_mark: list  # per station: token marks (-1 exit)
    svc_real: list  # per station: token completion real times
    vac_dur: list  # per station: vacation durations
    window: tuple  # (real start, real end)


def extract_sequences(
    timeline: MarkedEventTimeline, traj: VacationTrajectory
) -> DrivingSequences:
    """Classify every activity gap of the window as service or vacation."""
    model = timeline.model
    d = model.d
    ev = traj.events
    arrivals = [np.empty(0)] * d
    for a, st in enumerate(model.arr_stations):
        sel = (ev.station == st) & (ev.is_arrival == 1)
        arrivals[st] = ev.real_t[sel]
    svc_dur, svc_mark, svc_real, vac_dur = [], [], [], []
    for i in range(d):
        sel = (ev.station == i) & (ev.is_arrival == 0)
        idx = ev.act_index[sel]
        eps = timeline.act_epochs[i]
        if idx.size and idx.max() + 1 >= eps.size:
            raise SequenceExhausted(f"station {i}: gap beyond reconstructed timeline")
        gaps = eps[idx + 1] - eps[idx] if idx.size else np.empty(0)
        is_svc = traj.svc_class[sel] == 1
        svc_dur.append(gaps[is_svc])
        svc_mark.append(ev.mark[sel][is_svc])
        svc_real.append(ev.real_t[sel][is_svc])
        vac_dur.append(gaps[~is_svc])
    return DrivingSequences(
        arrivals, svc_dur, svc_mark, svc_real, vac_dur, (ev.t_start, 0.0)
    )


def tokens_after(seq: DrivingSequences, t: float):
    """CSR token arrays (durations, marks, offsets) for tokens strictly after t."""
    d = len(seq.svc_dur)
    durs, marks = [], []
    off = np.zeros(d + 1, np.int64)
    for i in range(d):
        sel = seq.svc_real[i] > t
        durs.append(seq.svc_dur[i][sel])
        marks.append(seq.svc_mark[i][sel])
        off[i + 1] = off[i] + durs[-1].size
    return (
        np.concatenate(durs) if d else np.empty(0),
        np.concatenate(marks).astype(np.int64) if d else np.empty(0, np.int64),
        off,
    )


def _arrival_events(seq: DrivingSequences, t: float):
    """Merged (time, station) external arrivals strictly after t, ascending."""
    times, stations = [], []
    for i, arr in enumerate(seq.arrivals):
        sel = arr > t
        times.append(arr[sel])
        stations.append(np.full(int(sel.sum()), i, np.int64))
    at = np.concatenate(times)
    ast = np.concatenate(stations)
    order = np.lexsort((ast, at))
    return at[order], ast[order]


def _fifo_occupancy_on_grid(
    d: int,
    seq: DrivingSequences,
    t0: float,
    end: float,
    grid: np.ndarray,
    svc_scale: np.ndarray,
):
    """Token-driven FIFO run from empty over [t0, end]; occupancy at grid times.

    Returns (grid occupancy, valid_count): grid entries at or past a token
    exhaustion are invalid (the run cannot continue without more window).
    """
    at, ast = _arrival_events(seq, t0)
    tok_dur, tok_mark, tok_off = tokens_after(seq, t0)
    rng = np.random.default_rng(0)  # token mode draws nothing
    dummy = np.zeros((d, 8))
    out = np.zeros((grid.size, d), np.int64)
    status, ap, gp, now = _kernels.fifo_run(
        _kernels.FIFO_TOKENS,
        d,
        rng,
        at,
        ast,
        0,
        tok_dur,
        tok_mark,
        tok_off,
        np.zeros(d, np.int64),
        svc_scale,
        np.zeros(d, np.int64),
        np.ones(d, np.int64),
        dummy,
        dummy,
        dummy,
        np.full((d, 1), -1, np.int64),
        np.zeros(d, np.int64),
        t0,
        end,
        np.zeros(d, np.int64),
        np.zeros(d, np.int64),
        np.full(d, np.inf),
        np.full(d, -1, np.int64),
        grid,
        0,
        out,
    )
    return out, int(gp if status == _kernels.FIFO_EXHAUSTED else grid.size)


def assert_dominance(
    spec: NetworkSpec,
    aux: AuxiliaryParams,
    timeline: MarkedEventTimeline,
    yprime: StationaryQueuePath,
    T: float,
) -> dict:
    """Pathwise dominance battery over the window [-T, 0].

    Checks, on the same driving randomness:

    1. total-occupancy ordering: true network <= slowed network <= vacation
       system, all started empty at -T and consuming the same tokens;
    2. the specially initialized vacation system never exceeds the autonomous
       trajectory plus one, per station, and its server flags are 0/1;
    3. monotonicity of the vacation evolution in its initial condition
       (dominating start >= any smaller start >= empty start).

    Raises DominanceViolation at the first failing event; returns a summary
    dict when every check passes.
    """
    d = spec.d
    ev = build_window_events(timeline, T)
    t0 = ev.t_start
    empty = VacationState(np.zeros(d, np.int64), np.zeros(d, np.int64), np.full(d, np.inf))

    # (1) empty-start coupled systems
    vac_empty = evolve_vacation(timeline, empty, T, events=ev)
    seq = extract_sequences(timeline, vac_empty)
    grid = ev.real_t[ev.real_t > t0]
    y_true, n1 = _fifo_occupancy_on_grid(d, seq, t0, 0.0, grid, 1.0 / aux.slowdown)
    y_slow, n2 = _fifo_occupancy_on_grid(d, seq, t0, 0.0, grid, np.ones(d))
    nck = min(n1, n2)
    tot_true = y_true[:nck].sum(axis=1)
    tot_slow = y_slow[:nck].sum(axis=1)
    tot_vac = vac_empty.occupancy[ev.real_t > t0][:nck].sum(axis=1)
    bad = np.flatnonzero((tot_true > tot_slow) | (tot_slow > tot_vac))
    if bad.size:
        b = int(bad[0])
        raise DominanceViolation(
            f"total-occupancy ordering failed at real t={grid[b]:.6g}: "
            f"{tot_true[b]} / {tot_slow[b]} / {tot_vac[b]}"
        )

    # (2) dominating vacation vs autonomous trajectory
    dom = init_dominating(yprime, timeline, T)
    vac_dom = evolve_vacation(timeline, dom, T, events=ev)
    auto_init = VacationState(dom.y_wait, np.zeros(d, np.int64), dom.residual)
    auto = evolve_vacation(
        timeline, auto_init, T, mode=_kernels.CLOCK_AUTONOMOUS, events=ev
    )
    if np.any((vac_dom.server_flags != 0) & (vac_dom.server_flags != 1)):
        raise DominanceViolation("server flag outside {0,1}")
    over = vac_dom.occupancy > auto.occupancy + 1
    if np.any(over):
        e = int(np.flatnonzero(over.any(axis=1))[0])
        raise DominanceViolation(
            f"vacation occupancy exceeded autonomous+1 at real t={ev.real_t[e]:.6g}"
        )

    # (3) monotonicity in the initial condition: the proven triple shares one
    # baseline count y, with the sampler's own start as the middle member
    top = VacationState(dom.y_wait + 1, np.ones(d, np.int64), dom.residual)
    vac_top = evolve_vacation(timeline, top, T, events=ev)
    vac_bot = evolve_vacation(timeline, empty, T, events=ev)
    if np.any(vac_top.occupancy < vac_dom.occupancy) or np.any(
        vac_dom.occupancy < vac_bot.occupancy
    ):
        raise DominanceViolation("vacation evolution not monotone in the initial condition")

    return {
        "events": int(ev.n),
        "grid_checked": int(nck),
        "coalesced": vac_dom.tau_index >= 0,
        "tokens": [int(x.size) for x in seq.svc_dur],
    }
