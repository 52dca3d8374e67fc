"""Exact stationary sampling by dominated coupling from the past.

One sample = one run of the following loop.  Build the stationary backward
trajectory of the autonomous bounding system on a window [-T, 0]; start the
dominating vacation system at -T with every server freshly busy on top of the
autonomous counts; roll it forward through the window's shared activity
epochs.  If it empties at some event time tau, every coupled smaller system --
including the stationary network itself -- is empty there too, so replaying
the true network from an empty start at tau, consuming the service tokens the
vacation run classified, reproduces the stationary state at time 0 exactly.
If it never empties, the window is extended further into the past, reusing
every previously drawn variable (the coupling-from-the-past discipline), and
the roll-forward is repeated.

The emitted state carries queue lengths at time 0, the residual service of
each busy server, and the residual time to each stream's next external
arrival; the residuals make the output a full regeneration-ready snapshot of
the stationary law.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from . import _kernels
from .distributions import conditional_excess_sample, sample
from .multiwalk import build_increment_model, find_theta_star
from .network import NetworkSpec, build_auxiliary, check_stability, solve_flow
from .stationary_queue import BackwardState
from .vacation import (
    DrivingSequences,
    SequenceExhausted,
    VacationTrajectory,
    build_window_events,
    evolve_vacation,
    extract_sequences,
    init_dominating,
)

__all__ = [
    "ResourceBudgetExceeded",
    "SamplerOptions",
    "StationaryNetworkState",
    "CoalescenceRecord",
    "sample_stationary",
    "sample_batch",
    "detect_coalescence",
    "replay_gjn_forward",
    "naive_steady_state_sim",
]


class ResourceBudgetExceeded(RuntimeError):
    """A configured cap was hit; carries the resumable sampler state."""

    def __init__(self, msg, state=None):
        super().__init__(msg)
        self.state = state


@dataclass(frozen=True)
class SamplerOptions:
    """Tuning knobs; defaults reproduce the reference behaviour exactly."""

    c_t: float | None = None  # initial window block; default 2*max busy-cycle scale
    milestone_m: float | None = None  # override the walk milestone height
    max_rounds: int | None = None
    max_events: int | None = None
    chunk: int = 4096
    debug_dominance: bool = False  # per-sample pathwise ordering battery


@dataclass(frozen=True)
class StationaryNetworkState:
    """Stationary snapshot at time 0."""

    y: np.ndarray  # (d,) queue lengths including any customer in service
    residual_service: np.ndarray  # (d,) remaining service of the busy server, 0 if idle
    residual_arrival: np.ndarray  # (d,) time to next external arrival, NaN if no stream


@dataclass(frozen=True)
class CoalescenceRecord:
    """Per-sample accounting of the coupling run."""

    tau: float  # coalescence time in (-T, 0]
    rounds: int  # number of window blocks used
    horizon: float  # final T
    events: int  # window events at success
    walk_steps: int  # walk rows generated
    draws: int  # primitive uniform draws (walk kernel + continuation)


def default_block(spec: NetworkSpec) -> float:
    """Initial window length: twice the largest mean busy-cycle scale."""
    aux = build_auxiliary(spec)
    phi = solve_flow(spec)
    return float(2.0 * np.max(1.0 / (aux.mu0 - phi)))


def detect_coalescence(traj: VacationTrajectory) -> float | None:
    """Earliest event time at which the dominating system is empty, if any."""
    return traj.tau_time


class _Continuation:
    """Extension of the vacation run past real time 0 for token refills.

    The backward timelines stop at time 0 with known ages (the first reversed
    epochs).  Beyond 0 the renewal processes continue from those ages: the
    straddling gaps are drawn from the age-conditioned excess laws, later gaps
    are fresh, marks are fresh categorical draws.  The first post-0 arrival
    times double as the emitted residual-arrival output, so they are drawn
    once up front and shared.
    """

    def __init__(self, spec, aux, model, timeline, y_wait, in_service, rng):
        self.spec = spec
        self.aux = aux
        self.model = model
        self.rng = rng
        d = spec.d
        self.d = d
        # residual arrivals (shared with the output), drawn station-ascending
        self.arr_next = np.full(d, np.inf)
        self.residual_arrival = np.full(d, np.nan)
        for a, st in enumerate(model.arr_stations):
            age = timeline.arr_epochs[a][0]
            x = conditional_excess_sample(spec.arrival[st], age, rng)
            self.residual_arrival[st] = x
            self.arr_next[st] = x
        self.act_next = np.empty(d)
        self.act_prev = np.empty(d)
        self._act_drawn = False
        self._ages = np.array([timeline.act_epochs[j][0] for j in range(d)])
        self.y = y_wait.astype(np.int64).copy()
        self.s = in_service.astype(np.int64).copy()
        self.t_done = 0.0
        self.tok_dur = [[] for _ in range(d)]
        self.tok_mark = [[] for _ in range(d)]
        self.extra_draws = 0

    def _ensure_activity_clocks(self):
        if self._act_drawn:
            return
        for j in range(self.d):
            age = self._ages[j]
            x = conditional_excess_sample(self.aux.service0[j], age, self.rng)
            self.act_next[j] = x
            self.act_prev[j] = -age  # last activity epoch before 0
            self.extra_draws += 1
        self._act_drawn = True

    def _draw_mark(self, j: int) -> int:
        u = self.rng.random()
        self.extra_draws += 1
        m = self.model
        return int(_kernels.resolve_mark(u, m.mark_cum[j], m.mark_tgt[j], int(m.mark_n[j])))

    def extend(self, horizon: float) -> None:
        """Advance the classified-token stream to cover (t_done, horizon]."""
        if horizon <= self.t_done:
            return
        self._ensure_activity_clocks()
        events = []  # (t, station, kind 0=activity/1=arrival, mark)
        for st in sorted(int(s) for s in self.model.arr_stations):
            while self.arr_next[st] <= horizon:
                if self.arr_next[st] > self.t_done:
                    events.append((self.arr_next[st], st, 1, -1))
                gap = sample(self.spec.arrival[st], self.rng)
                self.extra_draws += 1
                self.arr_next[st] = self.arr_next[st] + gap
        for j in range(self.d):
            while self.act_next[j] <= horizon:
                t = self.act_next[j]
                mk = self._draw_mark(j)
                events.append((t, j, 0, mk))
                gap = sample(self.aux.service0[j], self.rng)
                self.extra_draws += 1
                self.act_next[j] = t + gap
        events.sort(key=lambda e: (e[0], e[1], e[2]))
        for t, st, kind, mk in events:
            if kind == 1:
                self.y[st] += 1
                continue
            dur = t - self.act_prev[st]
            self.act_prev[st] = t
            s_old = self.s[st]
            if s_old == 1:
                self.tok_dur[st].append(dur)
                self.tok_mark[st].append(mk)
                if mk >= 0:
                    self.y[mk] += 1
            if self.y[st] > 0:
                self.s[st] = 1
                self.y[st] -= 1
            else:
                self.s[st] = 0
        self.t_done = horizon

    def token_arrays(self):
        return (
            [np.asarray(x, dtype=float) for x in self.tok_dur],
            [np.asarray(x, dtype=np.int64) for x in self.tok_mark],
        )


def _merged_arrivals(seq: DrivingSequences, t: float):
    times, stations = [], []
    for i, arr in enumerate(seq.arrivals):
        sel = arr > t
        times.append(arr[sel])
        stations.append(np.full(int(sel.sum()), i, np.int64))
    at = np.concatenate(times) if times else np.empty(0)
    ast = np.concatenate(stations) if stations else np.empty(0, np.int64)
    order = np.lexsort((ast, at))
    return at[order], ast[order]


def replay_gjn_forward(
    seq: DrivingSequences,
    slowdown: np.ndarray,
    t_from: float,
    t_to: float = 0.0,
    continuation: _Continuation | None = None,
    grid: np.ndarray | None = None,
    ext_block: float = 1.0,
):
    """FIFO replay of the true network from an empty start at ``t_from``.

    The k-th service started at station i consumes the station's k-th
    classified token, scaled down by the slowdown factor, and routes by the
    token's mark.  When tokens run out before ``t_to`` the continuation (if
    given) classifies more by extending the vacation run past 0; otherwise
    SequenceExhausted is raised.

    Returns (y, busy, completion_times, grid_occupancy).
    """
    d = len(seq.svc_dur)
    at, ast = _merged_arrivals(seq, t_from)
    per_dur = []
    per_mark = []
    for i in range(d):
        sel = seq.svc_real[i] > t_from
        per_dur.append(seq.svc_dur[i][sel])
        per_mark.append(seq.svc_mark[i][sel].astype(np.int64))
    rng = np.random.default_rng(0)  # token mode draws nothing
    dummyf = np.zeros((d, 8))
    dummyi = np.full((d, 1), -1, np.int64)
    scale = 1.0 / np.asarray(slowdown, dtype=float)
    if grid is None:
        grid = np.empty(0)
    out_grid = np.zeros((grid.size, d), np.int64)
    y = np.zeros(d, np.int64)
    busy = np.zeros(d, np.int64)
    comp = np.full(d, np.inf)
    cmark = np.full(d, -1, np.int64)
    used = np.zeros(d, np.int64)
    ap = 0
    gp = 0
    now = t_from
    while True:
        durs = per_dur
        marks = per_mark
        if continuation is not None and continuation.t_done > 0.0:
            cd, cm = continuation.token_arrays()
            durs = [np.concatenate((per_dur[i], cd[i])) for i in range(d)]
            marks = [np.concatenate((per_mark[i], cm[i])) for i in range(d)]
        tok_off = np.zeros(d + 1, np.int64)
        for i in range(d):
            tok_off[i + 1] = tok_off[i] + durs[i].size
        tok_dur = np.concatenate(durs) if d else np.empty(0)
        tok_mark = np.concatenate(marks) if d else np.empty(0, np.int64)
        status, ap, gp, now = _kernels.fifo_run(
            _kernels.FIFO_TOKENS,
            d,
            rng,
            at,
            ast,
            ap,
            tok_dur,
            tok_mark,
            tok_off,
            used,
            scale,
            np.zeros(d, np.int64),
            np.ones(d, np.int64),
            dummyf,
            dummyf,
            dummyf,
            dummyi,
            np.zeros(d, np.int64),
            now,
            t_to,
            y,
            busy,
            comp,
            cmark,
            grid,
            gp,
            out_grid,
        )
        if status == _kernels.FIFO_DONE:
            break
        if continuation is None:
            raise SequenceExhausted("service tokens exhausted and no continuation available")
        continuation.extend(continuation.t_done + ext_block)
    return y, busy, comp, out_grid


def _rngs_for(seed) -> tuple:
    ss = seed if isinstance(seed, np.random.SeedSequence) else np.random.SeedSequence(seed)
    walk, init, out = ss.spawn(3)
    return (
        np.random.Generator(np.random.PCG64(walk)),
        np.random.Generator(np.random.PCG64(init)),
        np.random.Generator(np.random.PCG64(out)),
    )


def prepare(spec: NetworkSpec, options: SamplerOptions | None = None):
    """Precompute the seed-independent sampler inputs (auxiliary parameters,
    walk coordinate model, tilting parameters) for reuse across samples."""
    opt = options or SamplerOptions()
    check_stability(spec)
    aux = build_auxiliary(spec)
    model = build_increment_model(aux, spec)
    tilt = find_theta_star(model, m=opt.milestone_m)
    return aux, model, tilt


def sample_stationary(
    spec: NetworkSpec, seed, options: SamplerOptions | None = None, _prepared=None
) -> tuple[StationaryNetworkState, CoalescenceRecord]:
    """One exact draw from the stationary law of a stable network.

    Deterministic given ``seed`` (an integer or a SeedSequence); every retry
    round extends the same randomness further into the past.
    """
    opt = options or SamplerOptions()
    aux, model, tilt = _prepared if _prepared is not None else prepare(spec, opt)
    rng_walk, rng_init, rng_out = _rngs_for(seed)
    engine = BackwardState(model, tilt, rng_walk, rng_init, chunk=opt.chunk)

    block = opt.c_t if opt.c_t is not None else float(2.0 * np.max(1.0 / (aux.mu0 - solve_flow(spec))))
    T = 0.0
    rounds = 0
    traj = None
    timeline = None
    while True:
        T += block
        block *= 2.0
        rounds += 1
        path = engine.settle(T)
        timeline = engine.timeline()
        ev = build_window_events(timeline, T)
        if opt.max_events is not None and ev.n > opt.max_events:
            raise ResourceBudgetExceeded(
                f"window holds {ev.n} events (cap {opt.max_events})",
                state={"engine": engine, "T": T, "rounds": rounds},
            )
        dom = init_dominating(path, timeline, T)
        traj = evolve_vacation(timeline, dom, T, events=ev)
        if opt.debug_dominance:
            from .vacation import assert_dominance

            assert_dominance(spec, aux, timeline, path, T)
        if traj.tau_index >= 0:
            break
        if opt.max_rounds is not None and rounds >= opt.max_rounds:
            raise ResourceBudgetExceeded(
                f"no coalescence after {rounds} rounds (T={T:.3g})",
                state={"engine": engine, "T": T, "rounds": rounds},
            )

    tau = float(traj.events.real_t[traj.tau_index])
    seq = extract_sequences(timeline, traj)
    d = spec.d
    # vacation state at time 0 (end of the window) seeds the continuation
    if traj.events.n:
        s_end = traj.server_flags[-1]
        y_end = traj.occupancy[-1] - s_end
    else:
        s_end = dom.in_service
        y_end = dom.y_wait
    cont = _Continuation(spec, aux, model, timeline, y_end, s_end, rng_out)
    y, busy, comp, _ = replay_gjn_forward(
        seq, aux.slowdown, tau, 0.0, continuation=cont, ext_block=max(block / 8.0, 1.0)
    )
    residual_service = np.where(busy == 1, comp, 0.0)
    state = StationaryNetworkState(
        y=y.copy(),
        residual_service=residual_service,
        residual_arrival=cont.residual_arrival.copy(),
    )
    walk_steps = engine.walk.n_rows
    attempts = engine.walk.segments + engine.walk.rejected_segments
    draws = (
        walk_steps * (model.narr + 2 * d)  # kernel uniforms per row
        + 2 * attempts  # crossing index + acceptance draws
        + model.narr + 2 * d  # stationary initial condition
        + cont.extra_draws
    )
    record = CoalescenceRecord(
        tau=tau,
        rounds=rounds,
        horizon=T,
        events=int(traj.events.n),
        walk_steps=int(walk_steps),
        draws=int(draws),
    )
    return state, record


def _one_sample(args):
    spec, master, index, options, prepared = args
    ss = np.random.SeedSequence(master, spawn_key=(index,))
    return sample_stationary(spec, ss, options, _prepared=prepared)


def sample_batch(
    spec: NetworkSpec,
    n: int,
    master_seed: int,
    options: SamplerOptions | None = None,
    workers: int = 1,
):
    """n independent exact samples; sample i uses the spawn-key-(i,) stream.

    The result is a pure function of (spec, master_seed, n, options): worker
    count only changes scheduling, never the draws.
    """
    prepared = prepare(spec, options)
    if workers > 1:
        from concurrent.futures import ProcessPoolExecutor

        # model arrays pickle cheaply; each worker re-derives nothing
        tasks = [(spec, master_seed, i, options, prepared) for i in range(n)]
        with ProcessPoolExecutor(max_workers=workers) as ex:
            results = list(ex.map(_one_sample, tasks, chunksize=max(1, n // (4 * workers))))
    else:
        results = [
            _one_sample((spec, master_seed, i, options, prepared)) for i in range(n)
        ]
    states = [r[0] for r in results]
    records = [r[1] for r in results]
    ys = np.stack([s.y for s in states])
    return ys, states, records


def naive_steady_state_sim(
    spec: NetworkSpec,
    burn_in: float,
    horizon: float,
    seed,
    n_samples: int = 1000,
):
    """Biased forward-simulation baseline: occupancy snapshots after burn-in.

    Long-run FIFO simulation from empty with freshly drawn services; grid
    snapshots are approximately stationary for large burn-in, and documented
    as approximate -- this is a cross-check, not an exact sampler.
    """
    check_stability(spec)
    from .distributions import pack_row

    rng = np.random.Generator(np.random.PCG64(np.random.SeedSequence(seed)))
    d = spec.d
    arr_lists = []
    for st in range(d):
        a = spec.arrival[st]
        if a is None:
            arr_lists.append((np.empty(0), st))
            continue
        gaps = []
        t = 0.0
        while t <= horizon:
            g = sample(a, rng)
            t += g
            gaps.append(t)
        arr_lists.append((np.asarray(gaps), st))
    at = np.concatenate([x[0] for x in arr_lists])
    ast = np.concatenate([np.full(x[0].size, x[1], np.int64) for x in arr_lists])
    order = np.lexsort((ast, at))
    at, ast = at[order], ast[order]

    svc_kind = np.zeros(d, np.int64)
    svc_nph = np.zeros(d, np.int64)
    svc_p1 = np.zeros((d, 8))
    svc_p2 = np.zeros((d, 8))
    for j in range(d):
        k, nph, p1, p2 = pack_row(spec.service[j])
        svc_kind[j], svc_nph[j] = k, nph
        svc_p1[j], svc_p2[j] = p1, p2
    tmax = 1
    targets = [np.flatnonzero(spec.routing[j] > 0) for j in range(d)]
    tmax = max([1] + [t.size for t in targets])
    mark_cum = np.zeros((d, tmax))
    mark_tgt = np.full((d, tmax), -1, np.int64)
    mark_n = np.zeros(d, np.int64)
    for j in range(d):
        tj = targets[j]
        mark_n[j] = tj.size
        if tj.size:
            mark_cum[j, : tj.size] = np.cumsum(spec.routing[j, tj])
            mark_tgt[j, : tj.size] = tj
    if horizon <= burn_in or n_samples <= 0:
        return np.zeros((0, d), np.int64)
    grid = np.linspace(burn_in, horizon, n_samples)
    out = np.zeros((grid.size, d), np.int64)
    _kernels.fifo_run(
        _kernels.FIFO_FRESH,
        d,
        rng,
        at,
        ast,
        0,
        np.empty(0),
        np.empty(0, np.int64),
        np.zeros(d + 1, np.int64),
        np.zeros(d, np.int64),
        np.ones(d),
        svc_kind,
        svc_nph,
        svc_p1,
        svc_p2,
        mark_cum,
        mark_tgt,
        mark_n,
        0.0,
        horizon,
        np.zeros(d, np.int64),
        np.zeros(d, np.int64),
        np.full(d, np.inf),
        np.full(d, -1, np.int64),
        grid,
        0,
        out,
    )
    return out
