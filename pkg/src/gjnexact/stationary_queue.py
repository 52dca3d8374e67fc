"""Stationary backward trajectory of the autonomous bounding system.

Everything here lives on a reversed clock: reversed time t >= 0 corresponds to
real time -t, renewal timelines are laid out forward in reversed time with
stationary-excess first epochs anchored at real time 0, and growing the walk
extends the trajectory deeper into the past without touching what was already
generated.

For station i let X_i(t) = (external arrivals in [0,t]) + (routed arrivals
into i in [0,t]) - (activity epochs of i in [0,t]) on the reversed clock.  The
autonomous queue read at real time -t equals

    Y'_i(-t) = sup_{r >= t} X_i(r) - X_i(t),

which is computable once the future supremum is *settled*: each of the three
summands of X_i, compensated to zero total rate, is one coordinate of the
sampled walk, so its individual future supremum is an affine function of the
walk's exact future maxima M.  Their sum Z_i(t) dominates sup_{r>=t} X_i(r)
and drifts to -infinity; as soon as Z_i(u) falls below the realized maximum of
X_i over [T, u], every supremum with t <= T is attained inside [t, u] and the
trajectory on [0, T] is exact.
"""

from __future__ import annotations

import numpy as np

from .multiwalk import (
    COORD_EXTERNAL,
    COORD_ROUTED,
    COORD_SERVICE,
    IncrementModel,
    JointPath,
    TiltParameters,
    WalkSamplerState,
    sample_w0,
)

__all__ = [
    "Unsettled",
    "InconsistentIncrements",
    "MarkedEventTimeline",
    "StationaryQueuePath",
    "BackwardState",
    "timeline_from_walk",
    "eval_starred",
    "z_bound",
    "compute_y_prime",
    "extend_backward",
]


class Unsettled(RuntimeError):
    """A query needs walk indices beyond the sampled (or confirmed) range."""


class InconsistentIncrements(RuntimeError):
    """Shared-primitive coordinates of a walk snapshot disagree (bug guard)."""


class MarkedEventTimeline:
    """Per-primitive renewal epochs on the reversed clock, with routing marks.

    ``arr_epochs[a]`` are the epochs of arrival stream ``a`` (aligned with
    ``model.arr_stations``); ``act_epochs[j]`` the activity epochs of station
    j's clock and ``act_marks[j]`` their routing marks (-1 = leaves the
    network, -2 = unknown first mark).  Epoch index n of every primitive lines
    up with walk row n.
    """

    def __init__(self, model: IncrementModel, arr_epochs, act_epochs, act_marks):
        self.model = model
        self.arr_epochs = [np.asarray(x, dtype=float) for x in arr_epochs]
        self.act_epochs = [np.asarray(x, dtype=float) for x in act_epochs]
        self.act_marks = [np.asarray(x, dtype=np.int64) for x in act_marks]
        for eps in self.arr_epochs + self.act_epochs:
            if eps.size and (np.any(np.diff(eps) <= 0) or eps[0] < 0):
                raise InconsistentIncrements("epochs must be positive and strictly increasing")
        # routed-pair epoch subsets for fast D_{j,i} counting
        self.rt_epochs = {}
        for j, i in zip(model.rt_src, model.rt_tgt):
            sel = self.act_marks[j] == i
            self.rt_epochs[(int(j), int(i))] = self.act_epochs[j][sel]

    @property
    def n_epochs(self) -> int:
        return min(
            min((e.size for e in self.arr_epochs), default=np.inf),
            min((e.size for e in self.act_epochs), default=np.inf),
        )

    def count_arr(self, a: int, t: float) -> int:
        return int(np.searchsorted(self.arr_epochs[a], t, side="right"))

    def count_act(self, j: int, t: float) -> int:
        return int(np.searchsorted(self.act_epochs[j], t, side="right"))

    def count_routed(self, j: int, i: int, t: float) -> int:
        return int(np.searchsorted(self.rt_epochs[(j, i)], t, side="right"))


def timeline_from_walk(
    path: JointPath, model: IncrementModel, first_marks=None, tol: float = 1e-9
) -> MarkedEventTimeline:
    """Recover the marked renewal timelines from a walk snapshot.

    Gaps come from inverting the affine increment maps; marks from the routed
    coordinates' indicator values.  The first marks are not encoded in the
    walk (the initial increment carries no indicator term), so they are taken
    from ``first_marks`` when given, else recorded as unknown (-2).
    """
    S, W0 = path.S, path.W0
    W = np.diff(S, axis=0)
    nsteps = W.shape[0]
    c = 0
    arr_epochs = []
    for a, st in enumerate(model.arr_stations):
        g = model.gamma_a[a]
        first = -W0[c] / g
        gaps = (1.0 - W[:, c]) / g
        if first < 0 or np.any(gaps <= 0):
            raise InconsistentIncrements(f"arrival stream {a}: nonpositive recovered gaps")
        arr_epochs.append(first + np.concatenate(([0.0], np.cumsum(gaps))))
        c += 1
    act_epochs = []
    db = np.empty((nsteps, model.d))
    for j in range(model.d):
        b = model.beta[j]
        first = W0[c] / b
        gaps = (1.0 + W[:, c]) / b
        if first < 0 or np.any(gaps <= 0):
            raise InconsistentIncrements(f"activity clock {j}: nonpositive recovered gaps")
        db[:, j] = gaps
        act_epochs.append(first + np.concatenate(([0.0], np.cumsum(gaps))))
        c += 1
    ind = np.zeros((nsteps, model.d, model.d))
    for r in range(model.nrt):
        j, i = int(model.rt_src[r]), int(model.rt_tgt[r])
        vals = W[:, c] + model.phi_c[r] * db[:, j]
        if np.any(np.minimum(np.abs(vals), np.abs(vals - 1.0)) > tol):
            raise InconsistentIncrements(f"routed coordinate {j}->{i}: indicator not 0/1")
        ind[:, j, i] = np.rint(vals)
        c += 1
    act_marks = []
    for j in range(model.d):
        hits = ind[:, j, :]
        if np.any(hits.sum(axis=1) > 1.0):
            raise InconsistentIncrements(f"station {j}: multiple simultaneous routing marks")
        marks = np.where(hits.any(axis=1), np.argmax(hits, axis=1), -1).astype(np.int64)
        first = -2 if first_marks is None else int(first_marks[j])
        act_marks.append(np.concatenate(([first], marks)))
    return MarkedEventTimeline(model, arr_epochs, act_epochs, act_marks)


def _coord_slots(model: IncrementModel):
    """Column indices in the walk for (ext by arrival stream, svc, routed)."""
    ext = {}
    svc = {}
    rt = {}
    for c, desc in enumerate(model.coords):
        if desc.kind == COORD_EXTERNAL:
            ext[desc.station] = c
        elif desc.kind == COORD_SERVICE:
            svc[desc.station] = c
        else:
            rt[(desc.station, desc.target)] = c
    return ext, svc, rt


def eval_starred(path: JointPath, timeline: MarkedEventTimeline, t: float):
    """Future suprema of the three compensated summands of X at reversed time t.

    Returns (nstar, dstar, rtstar): for each station i,

      nstar[i]     = sup_{r>=t} (external count_i(r) - gamma_i r)
      dstar[i]     = sup_{r>=t} (beta_i r - activity count_i(r))
      rtstar[j,i]  = sup_{r>=t} (routed count_{j,i}(r) - phi_{j,i} r)

    evaluated exactly from counts at t plus the walk values/maxima at the
    corresponding count indices (with the +1 epoch corrections for the
    counting summands, and the first mark's indicator for routed pairs).
    """
    model = timeline.model
    d = model.d
    ext, svc, rt = _coord_slots(model)
    nmax = path.M.shape[0] - 1
    Ma = path.M + path.W0

    nstar = np.empty(d)
    for i in range(d):
        if i in ext:
            a = int(np.searchsorted(model.arr_stations, i))
            cnt = timeline.count_arr(a, t)
            if cnt > nmax:
                raise Unsettled(f"arrival count {cnt} at t={t} beyond walk range {nmax}")
            nstar[i] = max(cnt - model.aux.gamma[i] * t, 1.0 + Ma[cnt, ext[i]])
        else:
            nstar[i] = -model.aux.gamma[i] * t
    dstar = np.empty(d)
    act_cnt = np.empty(d, np.int64)
    for j in range(d):
        cnt = timeline.count_act(j, t)
        act_cnt[j] = cnt
        if cnt > nmax:
            raise Unsettled(f"activity count {cnt} at t={t} beyond walk range {nmax}")
        dstar[j] = Ma[cnt, svc[j]]
    rtstar = np.zeros((d, d))
    for r in range(model.nrt):
        j, i = int(model.rt_src[r]), int(model.rt_tgt[r])
        first_mark = int(timeline.act_marks[j][0])
        if first_mark == -2:
            raise Unsettled(f"first mark of station {j} unknown; routed supremum undefined")
        cnt = timeline.count_routed(j, i, t)
        corr = 1.0 if first_mark == i else 0.0
        rtstar[j, i] = max(cnt - model.phi_c[r] * t, corr + Ma[act_cnt[j], rt[(j, i)]])
    return nstar, dstar, rtstar


def z_bound(path: JointPath, timeline: MarkedEventTimeline, t: float) -> np.ndarray:
    """Per-station upper bound Z_i(t) >= sup_{r>=t} X_i(r); nonincreasing in t."""
    nstar, dstar, rtstar = eval_starred(path, timeline, t)
    return nstar + rtstar.sum(axis=0) + dstar


class _StationEvents:
    """Merged +-1 event scan of X_i on the reversed clock."""

    def __init__(self, model: IncrementModel, timeline: MarkedEventTimeline, i: int):
        times = []
        deltas = []
        kinds = []  # activity-driven events sort before external arrivals on ties
        if i in set(int(s) for s in model.arr_stations):
            a = int(np.searchsorted(model.arr_stations, i))
            e = timeline.arr_epochs[a]
            times.append(e)
            deltas.append(np.ones(e.size, np.int64))
            kinds.append(np.ones(e.size, np.int64))
        e = timeline.act_epochs[i]
        times.append(e)
        deltas.append(np.full(e.size, -1, np.int64))
        kinds.append(np.zeros(e.size, np.int64))
        for j in range(model.d):
            if j == i:
                continue
            if (j, i) in timeline.rt_epochs:
                e = timeline.rt_epochs[(j, i)]
                times.append(e)
                deltas.append(np.ones(e.size, np.int64))
                kinds.append(np.zeros(e.size, np.int64))
        t = np.concatenate(times)
        dl = np.concatenate(deltas)
        kd = np.concatenate(kinds)
        order = np.lexsort((dl, kd, t))
        self.times = t[order]
        self.deltas = dl[order]
        self.values = np.concatenate(([0], np.cumsum(self.deltas)))  # values[p] after p-th event

    def idx(self, t: float) -> int:
        return int(np.searchsorted(self.times, t, side="right"))

    def value_at(self, t: float) -> int:
        return int(self.values[self.idx(t)])

    def window_max(self, lo: float, hi: float) -> int:
        """max of X over reversed times in [lo, hi]."""
        p0, p1 = self.idx(lo), self.idx(hi)
        return int(self.values[p0 : p1 + 1].max())


class StationaryQueuePath:
    """Settled trajectory of Y' on reversed [0, T] (real [-T, 0]).

    Per station: event times, X values, suffix maxima valid for queries
    t <= T (settled at horizon u >= T).  Y'_i(t) = sufmax - value >= 0.
    """

    def __init__(self, T: float, stations):
        self.T = float(T)
        self._st = stations  # list of (events, u, sufmax array over value positions)

    def y_prime(self, i: int, t: float) -> int:
        if t > self.T:
            raise Unsettled(f"t={t} beyond settled horizon T={self.T}")
        ev, u, suf = self._st[i]
        p = ev.idx(t)
        return int(suf[p] - ev.values[p])

    def y_prime_vector(self, t: float) -> np.ndarray:
        return np.array([self.y_prime(i, t) for i in range(len(self._st))], np.int64)

    def x_bar(self, i: int, t: float) -> int:
        return self._st[i][0].value_at(t)

    def x_star(self, i: int, t: float) -> int:
        if t > self.T:
            raise Unsettled(f"t={t} beyond settled horizon T={self.T}")
        ev, u, suf = self._st[i]
        return int(suf[ev.idx(t)])

    def event_times(self, i: int) -> np.ndarray:
        ev = self._st[i][0]
        return ev.times[ev.times <= self.T]

    def dump_csv(self, fh, engine=None) -> None:
        """Debug dump: per station-event row (t, Y', X, Z?) on [0, T]."""
        d = len(self._st)
        fh.write("t,station,y_prime,x_bar,z\n")
        for i in range(d):
            for t in self.event_times(i):
                z = ""
                if engine is not None:
                    z = f"{engine.z_at(t)[i]:.17g}"
                fh.write(f"{t:.17g},{i},{self.y_prime(i, t)},{self.x_bar(i, t)},{z}\n")


class BackwardState:
    """Resumable backward simulation: walk + timelines + settlement.

    Owns the walk sampler and the initial equilibrium draws; recomputes the
    timeline lazily as the walk grows.  All randomness is reused on
    extension, so settled prefixes never change.
    """

    def __init__(
        self,
        model: IncrementModel,
        tilt: TiltParameters,
        walk_rng: np.random.Generator,
        init_rng: np.random.Generator,
        chunk: int = 4096,
    ):
        self.model = model
        self.tilt = tilt
        w0, a0, b0, mark0 = sample_w0(model, init_rng, with_primitives=True)
        self.first_arrival = a0
        self.first_activity = b0
        self.first_marks = mark0
        self.walk = WalkSamplerState(model, tilt, walk_rng, w0=w0, chunk=chunk)
        self._tl_rows = -1
        self._tl = None
        self._ev_rows = -1
        self._events: list[_StationEvents] | None = None

    # --- lazily rebuilt views -------------------------------------------------
    def timeline(self) -> MarkedEventTimeline:
        n = self.walk.conf_hi
        if n < 1:
            self.walk.ensure_confirmed(1)
            n = self.walk.conf_hi
        if n != self._tl_rows:
            m = self.model
            da = self.walk.da.view()
            db = self.walk.db.view()
            mk = self.walk.mk.view()
            arr_epochs = [
                self.first_arrival[a] + np.concatenate(([0.0], np.cumsum(da[1 : n + 1, a])))
                for a in range(m.narr)
            ]
            act_epochs = [
                self.first_activity[j] + np.concatenate(([0.0], np.cumsum(db[1 : n + 1, j])))
                for j in range(m.d)
            ]
            act_marks = [
                np.concatenate(([self.first_marks[j]], mk[1 : n + 1, j])) for j in range(m.d)
            ]
            self._tl = MarkedEventTimeline(m, arr_epochs, act_epochs, act_marks)
            self._tl_rows = n
            self._events = None
        return self._tl

    def snapshot(self) -> JointPath:
        n = self.walk.conf_hi
        return JointPath(
            S=self.walk.s_rows()[: n + 1],
            M=self.walk.confirmed_m()[: n + 1],
            W0=self.walk.w0,
        )

    def _station_events(self) -> list[_StationEvents]:
        tl = self.timeline()
        if self._events is None or self._ev_rows != self._tl_rows:
            self._events = [_StationEvents(self.model, tl, i) for i in range(self.model.d)]
            self._ev_rows = self._tl_rows
        return self._events

    def z_at(self, t: float) -> np.ndarray:
        return z_bound(self.snapshot(), self.timeline(), t)

    # --- settlement -----------------------------------------------------------
    def _settle_cap(self) -> float:
        """Largest reversed time with all counts within the confirmed range.

        Epoch index k-1 guarantees counts <= k = conf_hi even when the cap
        falls exactly on an epoch, keeping every M lookup in range.
        """
        tl = self.timeline()
        k = self.walk.conf_hi
        caps = [e[min(k - 1, e.size - 1)] for e in tl.arr_epochs + tl.act_epochs]
        return min(caps)

    def settle(self, T: float) -> StationaryQueuePath:
        """Grow the walk until every station's supremum is settled for t <= T."""
        self.walk.ensure_confirmed(max(self.walk.conf_hi, 8))
        d = self.model.d
        done = [None] * d
        while any(x is None for x in done):
            u = self._settle_cap()
            if u > T:
                path = self.snapshot()
                tl = self.timeline()
                evs = self._station_events()
                z = z_bound(path, tl, u)
                for i in range(d):
                    if done[i] is None and z[i] <= evs[i].window_max(T, u):
                        done[i] = u
            if any(x is None for x in done):
                self.walk._advance_segment()
        evs = self._station_events()
        stations = []
        for i in range(d):
            ev, u = evs[i], done[i]
            k_u = ev.idx(u)
            suf = np.maximum.accumulate(ev.values[k_u::-1])[::-1].copy()
            stations.append((ev, u, suf))
        return StationaryQueuePath(T, stations)


def compute_y_prime(pathstate, timeline=None, T: float | None = None) -> StationaryQueuePath:
    """Settled Y' trajectory on [0, T].

    With a live BackwardState this extends the walk transparently; with a
    frozen (JointPath, timeline) pair it raises Unsettled when the snapshot
    is too short.
    """
    if isinstance(pathstate, BackwardState):
        assert T is not None
        return pathstate.settle(T)
    path = pathstate
    assert timeline is not None and T is not None
    model = timeline.model
    d = model.d
    evs = [_StationEvents(model, timeline, i) for i in range(d)]
    cap = min(
        [e[-1] for e in timeline.arr_epochs + timeline.act_epochs]
    )
    stations = []
    for i in range(d):
        u, step = T, max(T, 1.0)
        while True:
            if u > cap:
                raise Unsettled(f"station {i}: supremum not settled within the snapshot")
            if z_bound(path, timeline, u)[i] <= evs[i].window_max(T, u):
                break
            u = min(u + step, cap) if u < cap else cap * 1.0000001
            step *= 2.0
        k_u = evs[i].idx(u)
        suf = np.empty(k_u + 1, np.int64)
        run = -(10**18)
        for p in range(k_u, -1, -1):
            run = max(run, evs[i].values[p])
            suf[p] = run
        stations.append((evs[i], u, suf))
    return StationaryQueuePath(T, stations)


def extend_backward(pathstate: BackwardState, T_old: float, C_T: float) -> StationaryQueuePath:
    """Settle the trajectory on [0, T_old + C_T], reusing all randomness."""
    return compute_y_prime(pathstate, T=T_old + C_T)
