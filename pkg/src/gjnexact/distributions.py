"""Positive distribution families for interarrival and service times.

Four families are supported: exponential, Erlang, hyperexponential and shifted
uniform (service-only, since interarrival times must have unbounded support).
Everything downstream needs more than plain sampling: moment generating
functions for the exponential change of measure, closed-form exponentially
tilted samplers, stationary-excess (equilibrium) samplers for the first epoch
of a two-sided stationary renewal process, and conditional residual-life
samplers given an observed age.

All samplers transform ``Generator.random()`` uniforms only.  This keeps the
consumed random stream identical between the compiled and pure-python kernel
backends (numba reads the same PCG64 stream bit-for-bit).
"""

from __future__ import annotations

import ast
import math
from dataclasses import dataclass

import numpy as np

__all__ = [
    "Divergent",
    "DistributionSpec",
    "parse_distribution",
    "format_distribution",
    "mean",
    "mgf",
    "log_mgf",
    "mgf_abscissa",
    "ess_inf",
    "ess_sup",
    "scale",
    "sample",
    "tilted_sample",
    "equilibrium_sample",
    "conditional_excess_sample",
]

KINDS = ("exp", "erlang", "hyperexp", "uniform")

# numeric codes shared with the kernel packs
KIND_EXP = 0
KIND_ERLANG = 1
KIND_HYPER = 2
KIND_UNIFORM = 3
KIND_TILTED_UNIFORM = 4  # uniform under exponential tilt; kernel-internal


class Divergent(ValueError):
    """Moment generating function evaluated at or beyond its abscissa."""


@dataclass(frozen=True)
class DistributionSpec:
    """Immutable description of one positive distribution.

    kind='exp':       rate > 0
    kind='erlang':    shape k >= 1 (int), rate > 0
    kind='hyperexp':  weights (sum to 1, all > 0), rates (all > 0)
    kind='uniform':   0 <= lo < hi  (bounded support; service times only)
    """

    kind: str
    rate: float = 0.0
    shape: int = 0
    weights: tuple = ()
    rates: tuple = ()
    lo: float = 0.0
    hi: float = 0.0

    def __post_init__(self):
        if self.kind not in KINDS:
            raise ValueError(f"unknown distribution kind {self.kind!r}")
        if self.kind == "exp":
            if not self.rate > 0:
                raise ValueError("exp: rate must be positive")
        elif self.kind == "erlang":
            if not (isinstance(self.shape, (int, np.integer)) and self.shape >= 1):
                raise ValueError("erlang: shape k must be a positive integer")
            if not self.rate > 0:
                raise ValueError("erlang: rate must be positive")
        elif self.kind == "hyperexp":
            w = np.asarray(self.weights, dtype=float)
            r = np.asarray(self.rates, dtype=float)
            if w.ndim != 1 or w.size == 0 or w.size != r.size:
                raise ValueError("hyperexp: weights and rates must be equal-length vectors")
            if np.any(w <= 0) or np.any(r <= 0):
                raise ValueError("hyperexp: weights and rates must be positive")
            if abs(w.sum() - 1.0) > 1e-9:
                raise ValueError("hyperexp: weights must sum to 1")
        elif self.kind == "uniform":
            if not (0.0 <= self.lo < self.hi):
                raise ValueError("uniform: need 0 <= lo < hi")

    def __str__(self):
        return format_distribution(self)


# ---------------------------------------------------------------------------
# literals


def parse_distribution(text: str) -> DistributionSpec:
    """Parse a literal like ``exp(rate=1.0)`` or ``hyperexp(w=[0.5,0.5], rate=[1,4])``."""
    s = text.strip()
    open_paren = s.find("(")
    if open_paren < 0 or not s.endswith(")"):
        raise ValueError(f"bad distribution literal: {text!r}")
    name = s[:open_paren].strip().lower()
    body = s[open_paren + 1 : -1]
    kwargs = {}
    depth = 0
    item = ""
    parts = []
    for ch in body:
        if ch in "[(":
            depth += 1
        elif ch in "])":
            depth -= 1
        if ch == "," and depth == 0:
            parts.append(item)
            item = ""
        else:
            item += ch
    if item.strip():
        parts.append(item)
    for part in parts:
        if "=" not in part:
            raise ValueError(f"bad distribution argument {part!r} in {text!r}")
        key, val = part.split("=", 1)
        kwargs[key.strip()] = ast.literal_eval(val.strip())

    if name == "exp":
        return DistributionSpec("exp", rate=float(kwargs.pop("rate")))
    if name == "erlang":
        return DistributionSpec("erlang", shape=int(kwargs.pop("k")), rate=float(kwargs.pop("rate")))
    if name == "hyperexp":
        w = tuple(float(x) for x in kwargs.pop("w"))
        r = tuple(float(x) for x in kwargs.pop("rate"))
        return DistributionSpec("hyperexp", weights=w, rates=r)
    if name == "uniform":
        return DistributionSpec("uniform", lo=float(kwargs.pop("lo")), hi=float(kwargs.pop("hi")))
    raise ValueError(f"unknown distribution {name!r}")


def format_distribution(spec: DistributionSpec) -> str:
    if spec.kind == "exp":
        return f"exp(rate={spec.rate!r})"
    if spec.kind == "erlang":
        return f"erlang(k={spec.shape}, rate={spec.rate!r})"
    if spec.kind == "hyperexp":
        w = "[" + ", ".join(repr(x) for x in spec.weights) + "]"
        r = "[" + ", ".join(repr(x) for x in spec.rates) + "]"
        return f"hyperexp(w={w}, rate={r})"
    return f"uniform(lo={spec.lo!r}, hi={spec.hi!r})"


# ---------------------------------------------------------------------------
# moments and transforms


def mean(spec: DistributionSpec) -> float:
    if spec.kind == "exp":
        return 1.0 / spec.rate
    if spec.kind == "erlang":
        return spec.shape / spec.rate
    if spec.kind == "hyperexp":
        return float(sum(w / r for w, r in zip(spec.weights, spec.rates)))
    return 0.5 * (spec.lo + spec.hi)


def mgf_abscissa(spec: DistributionSpec) -> float:
    """Supremum of s with E[exp(sX)] finite (inf for bounded support)."""
    if spec.kind == "exp":
        return spec.rate
    if spec.kind == "erlang":
        return spec.rate
    if spec.kind == "hyperexp":
        return float(min(spec.rates))
    return math.inf


def mgf(spec: DistributionSpec, s: float) -> float:
    """E[exp(sX)]; raises Divergent at or beyond the abscissa."""
    if s >= mgf_abscissa(spec):
        raise Divergent(f"mgf of {spec} diverges at s={s}")
    if spec.kind == "exp":
        return spec.rate / (spec.rate - s)
    if spec.kind == "erlang":
        return (spec.rate / (spec.rate - s)) ** spec.shape
    if spec.kind == "hyperexp":
        return float(sum(w * r / (r - s) for w, r in zip(spec.weights, spec.rates)))
    if s == 0.0:
        return 1.0
    width = spec.hi - spec.lo
    # expm1 form avoids cancellation for small |s * width|
    return math.exp(s * spec.lo) * math.expm1(s * width) / (s * width)


def log_mgf(spec: DistributionSpec, s: float) -> float:
    """log E[exp(sX)], stable for large negative s; Divergent at/past the abscissa."""
    if s >= mgf_abscissa(spec):
        raise Divergent(f"mgf of {spec} diverges at s={s}")
    if s == 0.0:
        return 0.0
    if spec.kind == "exp":
        return math.log(spec.rate) - math.log(spec.rate - s)
    if spec.kind == "erlang":
        return spec.shape * (math.log(spec.rate) - math.log(spec.rate - s))
    if spec.kind == "hyperexp":
        logs = [
            math.log(w) + math.log(r) - math.log(r - s)
            for w, r in zip(spec.weights, spec.rates)
        ]
        top = max(logs)
        return top + math.log(sum(math.exp(x - top) for x in logs))
    width = spec.hi - spec.lo
    sw = s * width
    if sw <= 30.0:
        # expm1 keeps precision for small |sw|; no overflow below e^30
        return s * spec.lo + math.log(math.expm1(sw) / sw)
    return s * spec.hi + math.log1p(-math.exp(-sw)) - math.log(sw)


def ess_inf(spec: DistributionSpec) -> float:
    return spec.lo if spec.kind == "uniform" else 0.0


def ess_sup(spec: DistributionSpec) -> float:
    return spec.hi if spec.kind == "uniform" else math.inf


def scale(spec: DistributionSpec, c: float) -> DistributionSpec:
    """Distribution of c*X for c > 0."""
    if not c > 0:
        raise ValueError("scale factor must be positive")
    if spec.kind == "exp":
        return DistributionSpec("exp", rate=spec.rate / c)
    if spec.kind == "erlang":
        return DistributionSpec("erlang", shape=spec.shape, rate=spec.rate / c)
    if spec.kind == "hyperexp":
        return DistributionSpec(
            "hyperexp", weights=spec.weights, rates=tuple(r / c for r in spec.rates)
        )
    return DistributionSpec("uniform", lo=spec.lo * c, hi=spec.hi * c)


# ---------------------------------------------------------------------------
# sampling (uniform-transform based)


def _unwrap(x, scalar):
    return float(x[0]) if scalar else x


def sample(spec: DistributionSpec, rng: np.random.Generator, n: int | None = None):
    """n draws (or a scalar for n=None)."""
    scalar = n is None
    m = 1 if scalar else int(n)
    if spec.kind == "exp":
        out = -np.log1p(-rng.random(m)) / spec.rate
    elif spec.kind == "erlang":
        out = -np.log1p(-rng.random((m, spec.shape))).sum(axis=1) / spec.rate
    elif spec.kind == "hyperexp":
        cw = np.cumsum(spec.weights)
        comp = np.searchsorted(cw, rng.random(m), side="right").clip(0, len(spec.rates) - 1)
        rates = np.asarray(spec.rates)[comp]
        out = -np.log1p(-rng.random(m)) / rates
    else:
        out = spec.lo + rng.random(m) * (spec.hi - spec.lo)
    return _unwrap(out, scalar)


def tilted_sample(spec: DistributionSpec, s: float, rng: np.random.Generator, n: int | None = None):
    """Draws from the exponentially tilted law, density exp(s*x) f(x) / mgf(s).

    Closed form throughout: tilting shifts exponential and Erlang rates,
    reweights hyperexponential branches, and turns the shifted uniform into a
    truncated exponential with explicit inverse CDF.
    """
    if s >= mgf_abscissa(spec):
        raise Divergent(f"cannot tilt {spec} by s={s}")
    scalar = n is None
    m = 1 if scalar else int(n)
    if spec.kind == "exp":
        out = -np.log1p(-rng.random(m)) / (spec.rate - s)
    elif spec.kind == "erlang":
        out = -np.log1p(-rng.random((m, spec.shape))).sum(axis=1) / (spec.rate - s)
    elif spec.kind == "hyperexp":
        w = np.asarray(spec.weights)
        r = np.asarray(spec.rates)
        wt = w * r / (r - s)
        cw = np.cumsum(wt / wt.sum())
        comp = np.searchsorted(cw, rng.random(m), side="right").clip(0, len(spec.rates) - 1)
        out = -np.log1p(-rng.random(m)) / (r[comp] - s)
    else:
        if s == 0.0:
            out = spec.lo + rng.random(m) * (spec.hi - spec.lo)
        else:
            width = spec.hi - spec.lo
            u = rng.random(m)
            out = spec.lo + np.log1p(u * np.expm1(s * width)) / s
    return _unwrap(out, scalar)


def equilibrium_sample(spec: DistributionSpec, rng: np.random.Generator, n: int | None = None):
    """Draws from the stationary-excess law, density P(X > x) / E[X].

    This is the law of the first epoch of an equilibrium renewal process, used
    to start each two-sided stationary timeline.
    """
    scalar = n is None
    m = 1 if scalar else int(n)
    if spec.kind == "exp":
        out = -np.log1p(-rng.random(m)) / spec.rate
    elif spec.kind == "erlang":
        # uniform mixture over Erlang(1..k): draw the phase, then that many gaps
        k = spec.shape
        j = np.minimum((rng.random(m) * k).astype(np.int64) + 1, k)
        u = rng.random((m, k))
        gaps = -np.log1p(-u) / spec.rate
        idx = np.arange(k)[None, :] < j[:, None]
        out = (gaps * idx).sum(axis=1)
    elif spec.kind == "hyperexp":
        w = np.asarray(spec.weights)
        r = np.asarray(spec.rates)
        wt = w / r
        cw = np.cumsum(wt / wt.sum())
        comp = np.searchsorted(cw, rng.random(m), side="right").clip(0, len(spec.rates) - 1)
        out = -np.log1p(-rng.random(m)) / r[comp]
    else:
        lo, hi = spec.lo, spec.hi
        mu = 0.5 * (lo + hi)
        up = rng.random(m) * mu
        width = hi - lo
        out = np.where(
            up <= lo,
            up,
            hi - np.sqrt(np.maximum(width * width - 2.0 * width * (up - lo), 0.0)),
        )
    return _unwrap(out, scalar)


def conditional_excess_sample(
    spec: DistributionSpec, age: float, rng: np.random.Generator, n: int | None = None
):
    """Residual life given that the current interval already lasted ``age``.

    Density f(age + x) / P(X > age).  Used for the first epoch beyond the
    observation instant of a stationary timeline (residual arrival times in
    sampler output, and the activity clock when the dominating trajectory has
    to be continued past time zero).
    """
    if age < 0:
        raise ValueError("age must be nonnegative")
    scalar = n is None
    m = 1 if scalar else int(n)
    if spec.kind == "exp":
        out = -np.log1p(-rng.random(m)) / spec.rate
    elif spec.kind == "erlang":
        k, r = spec.shape, spec.rate
        if age == 0.0:
            j = np.ones(m, dtype=np.int64)
        else:
            # phase posterior: P(j) proportional to (r*age)^(j-1) / (j-1)!
            logw = np.array(
                [(jj - 1) * math.log(r * age) - math.lgamma(jj) for jj in range(1, k + 1)]
            )
            w = np.exp(logw - logw.max())
            cw = np.cumsum(w / w.sum())
            j = np.searchsorted(cw, rng.random(m), side="right").clip(0, k - 1) + 1
        rem = k - j + 1
        u = rng.random((m, k))
        gaps = -np.log1p(-u) / r
        idx = np.arange(k)[None, :] < rem[:, None]
        out = (gaps * idx).sum(axis=1)
    elif spec.kind == "hyperexp":
        w = np.asarray(spec.weights)
        r = np.asarray(spec.rates)
        logw = np.log(w) - r * age
        wt = np.exp(logw - logw.max())
        cw = np.cumsum(wt / wt.sum())
        comp = np.searchsorted(cw, rng.random(m), side="right").clip(0, len(spec.rates) - 1)
        out = -np.log1p(-rng.random(m)) / r[comp]
    else:
        lo, hi = spec.lo, spec.hi
        if age >= hi:
            raise ValueError(f"age {age} at or beyond the support of {spec}")
        a = max(lo - age, 0.0)
        b = hi - age
        out = a + rng.random(m) * (b - a)
    return _unwrap(out, scalar)


# ---------------------------------------------------------------------------
# kernel packing

#: width of the parameter rows in kernel packs (max hyperexp branches)
PACK_WIDTH = 8


def pack_row(spec: DistributionSpec | None):
    """Encode a distribution as (kind, nphase, par1[PACK_WIDTH], par2[PACK_WIDTH]).

    par1 holds rates (or lo/hi for uniform); par2 holds cumulative branch
    weights for hyperexponential.  ``None`` encodes an absent arrival stream.
    """
    par1 = np.zeros(PACK_WIDTH)
    par2 = np.zeros(PACK_WIDTH)
    if spec is None:
        return -1, 0, par1, par2
    if spec.kind == "exp":
        par1[0] = spec.rate
        return KIND_EXP, 1, par1, par2
    if spec.kind == "erlang":
        par1[0] = spec.rate
        return KIND_ERLANG, spec.shape, par1, par2
    if spec.kind == "hyperexp":
        nb = len(spec.rates)
        if nb > PACK_WIDTH:
            raise ValueError(f"hyperexp with more than {PACK_WIDTH} branches not supported")
        par1[:nb] = spec.rates
        par2[:nb] = np.cumsum(spec.weights)
        par2[nb - 1] = 1.0
        return KIND_HYPER, nb, par1, par2
    par1[0] = spec.lo
    par1[1] = spec.hi
    return KIND_UNIFORM, 1, par1, par2


def pack_tilted_row(spec: DistributionSpec, s: float):
    """Kernel encoding of the exponentially tilted law (see tilted_sample)."""
    if s >= mgf_abscissa(spec):
        raise Divergent(f"cannot tilt {spec} by s={s}")
    if spec.kind == "uniform":
        if s == 0.0:
            return pack_row(spec)
        par1 = np.zeros(PACK_WIDTH)
        par2 = np.zeros(PACK_WIDTH)
        par1[0] = spec.lo
        par1[1] = spec.hi
        par1[2] = s
        return KIND_TILTED_UNIFORM, 1, par1, par2
    if spec.kind == "exp":
        return pack_row(DistributionSpec("exp", rate=spec.rate - s))
    if spec.kind == "erlang":
        return pack_row(DistributionSpec("erlang", shape=spec.shape, rate=spec.rate - s))
    w = np.asarray(spec.weights)
    r = np.asarray(spec.rates)
    wt = w * r / (r - s)
    return pack_row(
        DistributionSpec(
            "hyperexp", weights=tuple(wt / wt.sum()), rates=tuple(r - s)
        )
    )
