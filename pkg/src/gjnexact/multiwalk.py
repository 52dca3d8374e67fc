"""Exact joint sampling of a negative-drift walk and its running future maxima.

The backward representation of the dominating system reduces to one
multidimensional random walk: one coordinate per external arrival stream
(increment 1 - gamma_i * dA_i), one per station's activity clock (increment
beta_i * dB_i - 1), and one per positive routing entry (increment
1{mark_j = i} - phi_ji * dB_j).  Coordinates driven by the same station share
the primitive draws of each step.  All retained coordinates have strictly
negative mean, so S_c(n) -> -inf and the future maxima M_c(k) = sup_{n>=k}
S_c(n) are finite.

Sampling (S, M) jointly and exactly uses three ingredients:

* a positive root theta* of the per-coordinate cumulant psi_c (Lundberg root),
  giving tilted step laws under which a chosen coordinate drifts upward;
* crossing attempts: an acceptance/rejection step that turns one tilted
  excursion into an exact Bernoulli "does any coordinate ever rise more than
  m above here?", together with the conditioned path when the answer is yes;
* milestones: positions the path provably never climbs back to within m of,
  which make suffix maxima over the generated prefix exact.

Coordinates whose increments are almost surely nonpositive (possible for
bounded service laws) can never rise; they get proposal weight zero and their
future maxima are just their running values, which the same bookkeeping
covers.  The model keeps a per-coordinate drift-shift slot for completeness,
but for the supported distribution families a missing root always means
"cannot rise", so the shift stays zero.
"""

from __future__ import annotations

import math
from dataclasses import dataclass, field

import numpy as np
from scipy.optimize import brentq

from . import _kernels
from .distributions import (
    PACK_WIDTH,
    equilibrium_sample,
    ess_inf,
    ess_sup,
    log_mgf,
    mean,
    mgf_abscissa,
    pack_row,
    pack_tilted_row,
)
from .network import AuxiliaryParams, NetworkSpec

__all__ = [
    "NonNegativeDrift",
    "NoRoot",
    "CoordinateDescriptor",
    "IncrementModel",
    "TiltParameters",
    "WalkSamplerState",
    "JointPath",
    "build_increment_model",
    "psi",
    "coordinate_mean",
    "can_rise",
    "find_theta_star",
    "choose_m",
    "sample_w0",
    "sample_crossing_attempt",
    "sample_segment_to_delta",
    "extend_joint_path",
    "dump_walk_csv",
]


class NonNegativeDrift(RuntimeError):
    """A retained walk coordinate has nonnegative mean (upstream bug)."""


class NoRoot(RuntimeError):
    """No usable Lundberg root for a coordinate that can rise (unexpected)."""


COORD_EXTERNAL = "external"
COORD_SERVICE = "service"
COORD_ROUTED = "routed"

_DEFAULT_CHUNK = 4096


@dataclass(frozen=True)
class CoordinateDescriptor:
    kind: str
    station: int  # driving station (arrival stream or activity clock owner)
    target: int  # routed coordinates: destination station; else -1
    rate: float  # gamma_i / beta_i / phi_ji multiplying the primitive gap

    def label(self) -> str:
        if self.kind == COORD_ROUTED:
            return f"routed[{self.station}->{self.target}]"
        return f"{self.kind}[{self.station}]"


class IncrementModel:
    """Coordinate layout plus packed kernel parameters for one network."""

    def __init__(self, spec: NetworkSpec, aux: AuxiliaryParams):
        self.spec = spec
        self.aux = aux
        d = spec.d
        self.d = d
        self.arr_stations = spec.arrival_stations
        self.narr = len(self.arr_stations)

        coords = []
        for a, st in enumerate(self.arr_stations):
            coords.append(CoordinateDescriptor(COORD_EXTERNAL, int(st), -1, float(aux.gamma[st])))
        for j in range(d):
            coords.append(CoordinateDescriptor(COORD_SERVICE, j, -1, float(aux.beta[j])))
        rt_src, rt_tgt, phi_c = [], [], []
        for j in range(d):
            for i in range(d):
                if spec.routing[j, i] > 0.0:
                    coords.append(
                        CoordinateDescriptor(COORD_ROUTED, j, i, float(aux.phi_mat[j, i]))
                    )
                    rt_src.append(j)
                    rt_tgt.append(i)
                    phi_c.append(aux.phi_mat[j, i])
        self.coords = tuple(coords)
        self.l = len(coords)
        self.nrt = len(rt_src)
        self.a_shift = np.zeros(self.l)  # drift-shift slot; stays zero (see module docstring)

        means = np.array([coordinate_mean(self, c) for c in range(self.l)])
        if np.any(means >= 0):
            bad = int(np.argmax(means >= 0))
            raise NonNegativeDrift(
                f"coordinate {self.coords[bad].label()} has mean {means[bad]:.6g} >= 0"
            )
        self.drifts = means

        # --- packed kernel arguments ---
        self.arr_kind = np.zeros(self.narr, np.int64)
        self.arr_nph = np.zeros(self.narr, np.int64)
        self.arr_p1 = np.zeros((self.narr, PACK_WIDTH))
        self.arr_p2 = np.zeros((self.narr, PACK_WIDTH))
        for a, st in enumerate(self.arr_stations):
            k, nph, p1, p2 = pack_row(spec.arrival[st])
            self.arr_kind[a], self.arr_nph[a] = k, nph
            self.arr_p1[a], self.arr_p2[a] = p1, p2
        self.svc_kind = np.zeros(d, np.int64)
        self.svc_nph = np.zeros(d, np.int64)
        self.svc_p1 = np.zeros((d, PACK_WIDTH))
        self.svc_p2 = np.zeros((d, PACK_WIDTH))
        for j in range(d):
            k, nph, p1, p2 = pack_row(aux.service0[j])
            self.svc_kind[j], self.svc_nph[j] = k, nph
            self.svc_p1[j], self.svc_p2[j] = p1, p2
        tmax = 1
        targets = []
        for j in range(d):
            tj = [i for i in range(d) if spec.routing[j, i] > 0.0]
            targets.append(tj)
            tmax = max(tmax, len(tj))
        self.mark_tmax = tmax
        self.mark_cum = np.zeros((d, tmax))
        self.mark_tgt = np.full((d, tmax), -1, np.int64)
        self.mark_n = np.zeros(d, np.int64)
        for j in range(d):
            tj = targets[j]
            self.mark_n[j] = len(tj)
            if tj:
                self.mark_cum[j, : len(tj)] = np.cumsum(spec.routing[j, tj])
                self.mark_tgt[j, : len(tj)] = tj
        self.gamma_a = aux.gamma[self.arr_stations].astype(float)
        self.beta = aux.beta.astype(float)
        self.phi_c = np.asarray(phi_c, dtype=float)
        self.rt_src = np.asarray(rt_src, dtype=np.int64)
        self.rt_tgt = np.asarray(rt_tgt, dtype=np.int64)

    # primitive distribution behind a coordinate
    def _primitive(self, c: int):
        desc = self.coords[c]
        if desc.kind == COORD_EXTERNAL:
            return self.spec.arrival[desc.station]
        return self.aux.service0[desc.station]


def build_increment_model(aux: AuxiliaryParams, spec: NetworkSpec) -> IncrementModel:
    """Coordinate model for the backward walk; degenerate coordinates dropped."""
    return IncrementModel(spec, aux)


def coordinate_mean(model: IncrementModel, c: int) -> float:
    desc = model.coords[c]
    prim = model._primitive(c)
    if desc.kind == COORD_EXTERNAL:
        return 1.0 - desc.rate * mean(prim)
    if desc.kind == COORD_SERVICE:
        return desc.rate * mean(prim) - 1.0
    q = model.spec.routing[desc.station, desc.target]
    return q - desc.rate * mean(prim)


def psi(model: IncrementModel, c: int, theta: float) -> float:
    """Cumulant log E[exp(theta * W_c)] of one step of coordinate c."""
    desc = model.coords[c]
    prim = model._primitive(c)
    if desc.kind == COORD_EXTERNAL:
        return theta + log_mgf(prim, -theta * desc.rate)
    if desc.kind == COORD_SERVICE:
        return -theta + log_mgf(prim, theta * desc.rate)
    q = model.spec.routing[desc.station, desc.target]
    if theta < 30.0:
        jump = math.log1p(q * math.expm1(theta))
    else:
        jump = theta + math.log(q + (1.0 - q) * math.exp(-theta))
    return jump + log_mgf(prim, -theta * desc.rate)


def can_rise(model: IncrementModel, c: int) -> bool:
    """Whether P(W_c > 0) > 0, decided in closed form from the support."""
    desc = model.coords[c]
    prim = model._primitive(c)
    if desc.kind == COORD_EXTERNAL:
        return True  # interarrival laws have unbounded support and essinf 0
    if desc.kind == COORD_SERVICE:
        return desc.rate * ess_sup(prim) > 1.0
    return desc.rate * ess_inf(prim) < 1.0


@dataclass(frozen=True)
class TiltParameters:
    """Lundberg roots, milestone height and crossing-proposal weights."""

    theta: np.ndarray  # (l,) positive roots; NaN for cannot-rise coordinates
    m: float
    w: np.ndarray  # (l,) proposal weights, zero for cannot-rise coordinates
    has_root: np.ndarray  # (l,) bool
    # packed tilted replacement rows for the kernel, one per coordinate
    t_tiltkind: np.ndarray = field(repr=False, default=None)
    t_station: np.ndarray = field(repr=False, default=None)
    t_kind: np.ndarray = field(repr=False, default=None)
    t_nph: np.ndarray = field(repr=False, default=None)
    t_p1: np.ndarray = field(repr=False, default=None)
    t_p2: np.ndarray = field(repr=False, default=None)
    t_mark_cum: np.ndarray = field(repr=False, default=None)


def _theta_root(model: IncrementModel, c: int) -> float:
    """Unique positive root of psi_c, bracketed then solved by brentq."""
    desc = model.coords[c]
    prim = model._primitive(c)
    if desc.kind == COORD_SERVICE:
        upper = mgf_abscissa(prim) / desc.rate
    else:
        upper = math.inf

    lo = 1e-6
    while psi(model, c, lo) >= 0.0:
        lo *= 0.5
        if lo < 1e-300:
            raise NoRoot(f"{desc.label()}: psi not negative near 0 (drift {model.drifts[c]:.3g})")
    if math.isfinite(upper):
        hi = None
        for k in range(1, 200):
            cand = upper * (1.0 - 0.5**k)
            if cand > lo and psi(model, c, cand) > 0.0:
                hi = cand
                break
        if hi is None:
            raise NoRoot(f"{desc.label()}: no sign change below the mgf abscissa")
    else:
        hi = max(1.0, 2.0 * lo)
        for _ in range(400):
            if psi(model, c, hi) > 0.0:
                break
            hi *= 2.0
        else:
            raise NoRoot(f"{desc.label()}: psi stayed nonpositive up to theta={hi:.3g}")
    root = brentq(lambda t: psi(model, c, t), lo, hi, xtol=1e-14, rtol=8.9e-16, maxiter=200)
    if abs(psi(model, c, root)) > 1e-10:
        raise NoRoot(f"{desc.label()}: root residual {psi(model, c, root):.3g} too large")
    return float(root)


def choose_m(theta_star: np.ndarray) -> float:
    """Milestone height: solve sum_c exp(-theta_c * m) = 1/2 over root coordinates."""
    th = np.asarray(theta_star, dtype=float)
    th = th[np.isfinite(th)]
    if th.size == 0:
        raise ValueError("no coordinates with Lundberg roots")

    def f(mm):
        return np.exp(-th * mm).sum() - 0.5

    hi = 1.0
    while f(hi) > 0.0:
        hi *= 2.0
    lo = hi / 2.0 if hi > 1.0 else 1e-12
    while f(lo) < 0.0:
        lo *= 0.5
    return float(brentq(f, lo, hi, xtol=1e-13, maxiter=200))


def find_theta_star(model: IncrementModel, m: float | None = None) -> TiltParameters:
    """Roots, milestone height and proposal weights plus kernel tilt packs."""
    l = model.l
    theta = np.full(l, np.nan)
    has_root = np.zeros(l, dtype=bool)
    for c in range(l):
        if can_rise(model, c):
            theta[c] = _theta_root(model, c)
            has_root[c] = True
    if not has_root.any():
        raise NoRoot("no coordinate can rise; walk maxima would be trivial")
    if m is None:
        m = choose_m(theta)
    ex = np.where(has_root, np.exp(-np.where(has_root, theta, 1.0) * m), 0.0)
    total = ex.sum()
    if not total < 1.0:
        raise ValueError(f"milestone height m={m} violates sum exp(-theta*m) < 1")
    w = ex / total

    t_tiltkind = np.full(l, _kernels.TILT_NONE, np.int64)
    t_station = np.full(l, -1, np.int64)
    t_kind = np.zeros(l, np.int64)
    t_nph = np.ones(l, np.int64)
    t_p1 = np.zeros((l, PACK_WIDTH))
    t_p2 = np.zeros((l, PACK_WIDTH))
    t_mark_cum = np.zeros((l, model.mark_tmax))
    for c in range(l):
        if not has_root[c]:
            continue
        desc = model.coords[c]
        th = theta[c]
        if desc.kind == COORD_EXTERNAL:
            t_tiltkind[c] = _kernels.TILT_ARRIVAL
            t_station[c] = int(np.searchsorted(model.arr_stations, desc.station))
            k, nph, p1, p2 = pack_tilted_row(model.spec.arrival[desc.station], -th * desc.rate)
        elif desc.kind == COORD_SERVICE:
            t_tiltkind[c] = _kernels.TILT_SERVICE
            t_station[c] = desc.station
            k, nph, p1, p2 = pack_tilted_row(model.aux.service0[desc.station], th * desc.rate)
        else:
            t_tiltkind[c] = _kernels.TILT_ROUTED
            t_station[c] = desc.station
            k, nph, p1, p2 = pack_tilted_row(model.aux.service0[desc.station], -th * desc.rate)
            # reweight the routing row: the chosen target's probability gains e^theta
            j = desc.station
            ntj = int(model.mark_n[j])
            probs = np.diff(np.concatenate(([0.0], model.mark_cum[j, :ntj])))
            boosted = probs.copy()
            sel = np.flatnonzero(model.mark_tgt[j, :ntj] == desc.target)[0]
            boosted[sel] *= math.exp(th)
            norm = boosted.sum() + (1.0 - probs.sum())  # exit mass unweighted
            t_mark_cum[c, :ntj] = np.cumsum(boosted) / norm
        t_kind[c], t_nph[c] = k, nph
        t_p1[c], t_p2[c] = p1, p2

    return TiltParameters(
        theta=theta,
        m=float(m),
        w=w,
        has_root=has_root,
        t_tiltkind=t_tiltkind,
        t_station=t_station,
        t_kind=t_kind,
        t_nph=t_nph,
        t_p1=t_p1,
        t_p2=t_p2,
        t_mark_cum=t_mark_cum,
    )


def sample_w0(model: IncrementModel, rng: np.random.Generator, with_primitives: bool = False):
    """Initial walk increment from the stationary-excess laws of the primitives.

    One shared draw per primitive: the first reversed-order epoch of each
    arrival stream and activity clock.  Routing marks of epoch 0 do not enter
    the walk increments but belong to the timeline, so they are drawn here too.
    """
    a0 = np.array([equilibrium_sample(model.spec.arrival[st], rng) for st in model.arr_stations])
    b0 = np.array([equilibrium_sample(model.aux.service0[j], rng) for j in range(model.d)])
    mark0 = np.full(model.d, -1, np.int64)
    for j in range(model.d):
        u = rng.random()
        mark0[j] = _kernels.resolve_mark(u, model.mark_cum[j], model.mark_tgt[j], int(model.mark_n[j]))
    w0 = np.empty(model.l)
    for c, desc in enumerate(model.coords):
        if desc.kind == COORD_EXTERNAL:
            a = int(np.searchsorted(model.arr_stations, desc.station))
            w0[c] = -desc.rate * a0[a]
        elif desc.kind == COORD_SERVICE:
            w0[c] = desc.rate * b0[desc.station]
        else:
            w0[c] = -desc.rate * b0[desc.station]
    if with_primitives:
        return w0, a0, b0, mark0
    return w0


class _Grow:
    """Append-only 2-d array with doubling capacity."""

    def __init__(self, width: int, dtype=np.float64):
        self._data = np.zeros((256, max(width, 1)), dtype=dtype)
        self.n = 0
        self.width = width

    def append(self, rows: np.ndarray):
        k = rows.shape[0]
        while self.n + k > self._data.shape[0]:
            bigger = np.zeros((2 * self._data.shape[0], self._data.shape[1]), self._data.dtype)
            bigger[: self.n] = self._data[: self.n]
            self._data = bigger
        self._data[self.n : self.n + k] = rows
        self.n += k

    def view(self) -> np.ndarray:
        return self._data[: self.n]


def _kernel_walk(model, tilt, rng, mode, tilt_coord, s_cur, thresh, cross_ref, m, bufs, chunk):
    """Drive the walk kernel until its stop condition, appending rows to bufs."""
    out_s = np.empty((chunk, model.l))
    out_da = np.empty((chunk, max(model.narr, 1)))
    out_db = np.empty((chunk, model.d))
    out_mark = np.empty((chunk, model.d), np.int64)
    if tilt_coord >= 0:
        tk = int(tilt.t_tiltkind[tilt_coord])
        tst = int(tilt.t_station[tilt_coord])
        rk, rn = int(tilt.t_kind[tilt_coord]), int(tilt.t_nph[tilt_coord])
        rp1, rp2 = tilt.t_p1[tilt_coord], tilt.t_p2[tilt_coord]
        rmc = tilt.t_mark_cum[tilt_coord]
    else:
        tk, tst, rk, rn = _kernels.TILT_NONE, -1, 0, 1
        rp1 = np.zeros(PACK_WIDTH)
        rp2 = np.zeros(PACK_WIDTH)
        rmc = np.zeros(model.mark_tmax)
    steps = 0
    while True:
        n, done = _kernels.walk_block(
            rng,
            model.narr,
            model.d,
            model.nrt,
            model.arr_kind,
            model.arr_nph,
            model.arr_p1,
            model.arr_p2,
            model.svc_kind,
            model.svc_nph,
            model.svc_p1,
            model.svc_p2,
            model.mark_cum,
            model.mark_tgt,
            model.mark_n,
            model.gamma_a,
            model.beta,
            model.phi_c,
            model.rt_src,
            model.rt_tgt,
            mode,
            tk,
            tst,
            rk,
            rn,
            rp1,
            rp2,
            rmc,
            s_cur,
            thresh,
            cross_ref,
            m,
            chunk,
            out_s,
            out_da,
            out_db,
            out_mark,
        )
        if n:
            bufs[0].append(out_s[:n].copy())
            bufs[1].append(out_da[:n].copy())
            bufs[2].append(out_db[:n].copy())
            bufs[3].append(out_mark[:n].copy())
            steps += n
        if done:
            return steps


def _pick_index(tilt: TiltParameters, rng: np.random.Generator) -> int:
    u = rng.random()
    cw = np.cumsum(tilt.w)
    return int(min(np.searchsorted(cw, u, side="right"), len(cw) - 1))


def sample_crossing_attempt(
    model: IncrementModel,
    tilt: TiltParameters,
    rng: np.random.Generator,
    s_base: np.ndarray | None = None,
    chunk: int = _DEFAULT_CHUNK,
):
    """Exact Bernoulli of "any coordinate ever rises > m above s_base".

    Proposal: draw Index from the weights, run the walk with Index's primitive
    tilted until some coordinate exceeds s_base + m, and accept with
    probability 1 / sum_c w_c exp(theta_c (S_c(tau) - s_base_c)) over root
    coordinates.  Returns (J, rows) where rows is the (path, gaps, gaps,
    marks) tuple of the conditioned crossing prefix when J=1, else None.  The
    attempt leaves s_base untouched.
    """
    base = np.zeros(model.l) if s_base is None else np.asarray(s_base, dtype=float)
    idx = _pick_index(tilt, rng)
    s_try = base.copy()
    bufs = ([], [], [], [])
    _kernel_walk(
        model, tilt, rng, _kernels.WALK_CROSSING, idx, s_try, np.zeros(model.l), base, tilt.m, bufs, chunk
    )
    rel = s_try - base
    mask = tilt.has_root
    lr = (tilt.w[mask] * np.exp(tilt.theta[mask] * rel[mask])).sum()
    p = 1.0 / lr
    if not 0.0 < p <= 1.0:
        raise AssertionError(f"crossing acceptance probability {p} outside (0, 1]")
    j = 1 if rng.random() < p else 0
    if j:
        rows = tuple(np.concatenate(b, axis=0) for b in bufs)
        return 1, rows
    return 0, None


def sample_segment_to_delta(
    model: IncrementModel,
    tilt: TiltParameters,
    rng: np.random.Generator,
    chunk: int = _DEFAULT_CHUNK,
):
    """One walk segment from a relative origin down to its final milestone.

    Alternates unconditioned descents (2m below the current block start, every
    coordinate) with crossing attempts; a successful attempt appends its
    conditioned prefix and the loop continues, an unsuccessful one ends the
    segment at the current descent point, which the future path provably never
    approaches within m again.

    Returns (rows, m0): rows = (s, gaps_a, gaps_b, marks) arrays relative to
    the origin, m0 = componentwise max over the segment including the origin.
    """
    l = model.l
    s_cur = np.zeros(l)
    bufs = ([], [], [], [])
    while True:
        thresh = s_cur - 2.0 * tilt.m
        _kernel_walk(
            model,
            tilt,
            rng,
            _kernels.WALK_DESCENT,
            -1,
            s_cur,
            thresh,
            np.zeros(l),
            0.0,
            bufs,
            chunk,
        )
        j, rows = sample_crossing_attempt(model, tilt, rng, s_base=s_cur, chunk=chunk)
        if j:
            bufs[0].append(rows[0])
            bufs[1].append(rows[1])
            bufs[2].append(rows[2])
            bufs[3].append(rows[3])
            s_cur = rows[0][-1].copy()
        else:
            break
    out = tuple(np.concatenate(b, axis=0) for b in bufs)
    m0 = np.maximum(out[0].max(axis=0), 0.0)
    return out, m0


class WalkSamplerState:
    """Resumable walk path with confirmed milestones and future maxima.

    Row 0 is the origin (all zeros); the independently drawn initial increment
    w0 is carried separately and added by consumers.  Confirmed future maxima
    m_conf[k] = max over the infinite suffix from k are exact for
    k <= milestones[-2].
    """

    def __init__(
        self,
        model: IncrementModel,
        tilt: TiltParameters,
        rng: np.random.Generator,
        w0: np.ndarray | None = None,
        chunk: int = _DEFAULT_CHUNK,
    ):
        self.model = model
        self.tilt = tilt
        self.rng = rng
        self.w0 = np.zeros(model.l) if w0 is None else np.asarray(w0, dtype=float)
        self.chunk = chunk
        self.s = _Grow(model.l)
        self.da = _Grow(max(model.narr, 1))
        self.db = _Grow(model.d)
        self.mk = _Grow(model.d, np.int64)
        zero = np.zeros((1, model.l))
        self.s.append(zero)
        self.da.append(np.zeros((1, max(model.narr, 1))))
        self.db.append(np.zeros((1, model.d)))
        self.mk.append(np.zeros((1, model.d), np.int64))
        self.milestones: list[int] = []
        self.c_ub = np.full(model.l, np.inf)
        self.m_conf = _Grow(model.l)
        self.conf_hi = -1
        self.segments = 0
        self.rejected_segments = 0

    @property
    def n_rows(self) -> int:
        return self.s.n

    def s_rows(self) -> np.ndarray:
        return self.s.view()

    def confirmed_m(self) -> np.ndarray:
        return self.m_conf.view()[: self.conf_hi + 1]

    def _advance_segment(self):
        last = self.s.view()[-1]
        bound = self.c_ub - last
        while True:
            rows, m0 = sample_segment_to_delta(self.model, self.tilt, self.rng, self.chunk)
            self.segments += 1
            if np.all(m0 <= bound):
                break
            self.rejected_segments += 1
        self.s.append(rows[0] + last)
        self.da.append(rows[1])
        self.db.append(rows[2])
        self.mk.append(rows[3])
        end = self.s.n - 1
        self.milestones.append(end)
        self.c_ub = self.s.view()[end] + self.tilt.m
        self._extend_confirmed()

    def _extend_confirmed(self):
        if len(self.milestones) < 2:
            return
        target = self.milestones[-2]
        if target <= self.conf_hi:
            return
        s = self.s.view()
        endrow = self.milestones[-1]
        tail = s[target + 1 : endrow + 1].max(axis=0)
        seg = s[self.conf_hi + 1 : target + 1]
        acc = np.maximum.accumulate(seg[::-1], axis=0)
        block = np.maximum(acc, tail)[::-1].copy()
        self.m_conf.append(block)
        self.conf_hi = target

    def ensure_confirmed(self, n: int):
        """Grow the path until suffix maxima are exact for all k <= n."""
        while self.conf_hi < n:
            self._advance_segment()


@dataclass(frozen=True)
class JointPath:
    """Snapshot of the normalized walk: S(k), M(k) for k = 0..n, plus w0."""

    S: np.ndarray
    M: np.ndarray
    W0: np.ndarray


def dump_walk_csv(state: WalkSamplerState, fh) -> None:
    """Diagnostic dump: one row per path index with S, confirmed M, milestone flag."""
    labels = [d.label() for d in state.model.coords]
    fh.write(
        "index,milestone," + ",".join(f"S_{x}" for x in labels) + ","
        + ",".join(f"M_{x}" for x in labels) + "\n"
    )
    s = state.s_rows()
    mset = set(state.milestones)
    mm = state.confirmed_m()
    for k in range(state.n_rows):
        mvals = ["" for _ in labels] if k > state.conf_hi else [f"{v:.17g}" for v in mm[k]]
        fh.write(
            f"{k},{1 if k in mset else 0},"
            + ",".join(f"{v:.17g}" for v in s[k])
            + ","
            + ",".join(mvals)
            + "\n"
        )
    fh.write(f"# C_UB,{','.join(f'{v:.17g}' for v in state.c_ub)}\n")


def extend_joint_path(
    state: WalkSamplerState,
    model: IncrementModel,
    tilt: TiltParameters,
    n: int,
) -> JointPath:
    """Extend the state until M(k) is exact for k <= n and snapshot it."""
    assert model is state.model and tilt is state.tilt
    state.ensure_confirmed(n)
    return JointPath(
        S=state.s_rows()[: n + 1].copy(),
        M=state.confirmed_m()[: n + 1].copy(),
        W0=state.w0.copy(),
    )
