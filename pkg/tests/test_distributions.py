"""Distribution families: parsing, moments, transforms, and sampling laws."""

import math

import numpy as np
import pytest
from scipy import stats as sps

from gjnexact.distributions import (
    DistributionSpec,
    Divergent,
    conditional_excess_sample,
    equilibrium_sample,
    ess_inf,
    ess_sup,
    format_distribution,
    log_mgf,
    mean,
    mgf,
    mgf_abscissa,
    parse_distribution,
    sample,
    scale,
    tilted_sample,
)

EXP = DistributionSpec("exp", rate=1.3)
ERL = DistributionSpec("erlang", shape=3, rate=2.0)
HYP = DistributionSpec("hyperexp", weights=(0.3, 0.7), rates=(1.0, 5.0))
UNI = DistributionSpec("uniform", lo=0.5, hi=2.0)
ALL = (EXP, ERL, HYP, UNI)

KS_ALPHA = 1e-3
N_KS = 4000


def _rng(seed):
    return np.random.Generator(np.random.PCG64(seed))


# ---------------------------------------------------------------------------
# literals


@pytest.mark.parametrize("spec", ALL)
def test_literal_round_trip(spec):
    assert parse_distribution(format_distribution(spec)) == spec


@pytest.mark.parametrize(
    "text",
    ["exp(rate=0)", "exp(rate=-1)", "erlang(k=0, rate=1)", "uniform(lo=2, hi=1)",
     "hyperexp(w=[0.5], rate=[1,2])", "gauss(rate=1)", "exp", "exp(1.0)"],
)
def test_bad_literals_rejected(text):
    with pytest.raises(ValueError):
        parse_distribution(text)


def test_parse_accepts_lists_and_spacing():
    spec = parse_distribution("  hyperexp( w=[0.3, 0.7], rate=[1.0, 5.0] ) ")
    assert spec == HYP


# ---------------------------------------------------------------------------
# moments and transforms


def test_means_closed_form():
    assert mean(EXP) == pytest.approx(1 / 1.3)
    assert mean(ERL) == pytest.approx(1.5)
    assert mean(HYP) == pytest.approx(0.3 / 1.0 + 0.7 / 5.0)
    assert mean(UNI) == pytest.approx(1.25)


# quadrature values from tests/oracles/mgf_values.py
MGF_ORACLE = [
    (EXP, 0.7, 2.16666666666667),
    (EXP, -2.0, 0.393939393939394),
    (ERL, 0.9, 6.0105184072126),
    (ERL, -1.1, 0.26853747776174),
    (HYP, 0.4, 1.26086956521741),
    (HYP, -0.8, 0.770114942528736),
    (UNI, 1.1, 4.41924877670711),
    (UNI, -1.1, 0.282513122435244),
    (UNI, 1e-9, 1.00000000125),
]


@pytest.mark.parametrize("spec,s,value", MGF_ORACLE)
def test_mgf_matches_quadrature_oracle(spec, s, value):
    assert mgf(spec, s) == pytest.approx(value, rel=1e-9)
    assert log_mgf(spec, s) == pytest.approx(math.log(value), abs=1e-9)


def test_mgf_at_zero_is_one():
    for spec in ALL:
        assert mgf(spec, 0.0) == pytest.approx(1.0)
        assert log_mgf(spec, 0.0) == pytest.approx(0.0, abs=1e-15)


def test_mgf_abscissa_and_divergence():
    assert mgf_abscissa(EXP) == pytest.approx(1.3)
    assert mgf_abscissa(ERL) == pytest.approx(2.0)
    assert mgf_abscissa(HYP) == pytest.approx(1.0)
    assert mgf_abscissa(UNI) == math.inf
    for spec in (EXP, ERL, HYP):
        with pytest.raises(Divergent):
            mgf(spec, mgf_abscissa(spec))
        with pytest.raises(Divergent):
            log_mgf(spec, mgf_abscissa(spec) + 0.5)
    # bounded support never diverges
    assert mgf(UNI, 200.0) > 0


def test_essential_bounds():
    assert (ess_inf(EXP), ess_sup(EXP)) == (0.0, math.inf)
    assert (ess_inf(ERL), ess_sup(ERL)) == (0.0, math.inf)
    assert (ess_inf(HYP), ess_sup(HYP)) == (0.0, math.inf)
    assert (ess_inf(UNI), ess_sup(UNI)) == (0.5, 2.0)


def test_scale_is_multiplication_of_the_variable():
    for spec in ALL:
        sc = scale(spec, 2.5)  # law of 2.5 * X
        assert sc.kind == spec.kind
        assert mean(sc) == pytest.approx(mean(spec) * 2.5)
        assert mgf(sc, 0.1) == pytest.approx(mgf(spec, 0.1 * 2.5), rel=1e-12)


# ---------------------------------------------------------------------------
# sampling laws (fixed seeds; KS at alpha = 1e-3)


def _cdf(spec):
    if spec.kind == "exp":
        return sps.expon(scale=1 / spec.rate).cdf
    if spec.kind == "erlang":
        return sps.gamma(a=spec.shape, scale=1 / spec.rate).cdf
    if spec.kind == "hyperexp":
        def cdf(x):
            x = np.asarray(x, dtype=float)
            out = np.zeros_like(x)
            for w, r in zip(spec.weights, spec.rates):
                out += w * (1.0 - np.exp(-r * np.maximum(x, 0.0)))
            return out
        return cdf
    return sps.uniform(loc=spec.lo, scale=spec.hi - spec.lo).cdf


@pytest.mark.parametrize("spec", ALL)
def test_sample_law(spec):
    x = sample(spec, _rng(101), N_KS)
    assert sps.kstest(x, _cdf(spec)).pvalue > KS_ALPHA


def test_sample_deterministic_given_seed():
    for spec in ALL:
        a = sample(spec, _rng(7), 5)
        b = sample(spec, _rng(7), 5)
        np.testing.assert_array_equal(a, b)
        assert isinstance(sample(spec, _rng(7)), float)
    # single-uniform families: vectorized and scalar paths share the transform
    for spec in (EXP, UNI):
        assert sample(spec, _rng(7), 5)[0] == sample(spec, _rng(7))


def test_exp_sample_is_inverse_cdf_of_uniform_stream():
    # the documented transform: -log1p(-u)/rate on successive uniforms
    u = _rng(33).random(64)
    x = sample(EXP, _rng(33), 64)
    np.testing.assert_array_equal(x, -np.log1p(-u) / EXP.rate)


@pytest.mark.parametrize(
    "spec,s",
    [(EXP, 0.6), (EXP, -1.0), (ERL, 1.1), (HYP, 0.5), (UNI, 1.3), (UNI, -2.0)],
)
def test_tilted_sample_law(spec, s):
    """Density proportional to exp(s*x) times the base density."""
    x = tilted_sample(spec, s, _rng(202), N_KS)

    if spec.kind == "exp":
        ref = sps.expon(scale=1 / (spec.rate - s)).cdf
    elif spec.kind == "erlang":
        ref = sps.gamma(a=spec.shape, scale=1 / (spec.rate - s)).cdf
    elif spec.kind == "hyperexp":
        w = np.array(spec.weights) * np.array(spec.rates) / (np.array(spec.rates) - s)
        w = w / w.sum()

        def ref(t):
            t = np.asarray(t, dtype=float)
            out = np.zeros_like(t)
            for wi, ri in zip(w, np.array(spec.rates) - s):
                out += wi * (1.0 - np.exp(-ri * np.maximum(t, 0.0)))
            return out
    else:

        def ref(t):
            t = np.clip(np.asarray(t, dtype=float), spec.lo, spec.hi)
            num = np.exp(s * t) - math.exp(s * spec.lo)
            den = math.exp(s * spec.hi) - math.exp(s * spec.lo)
            return num / den

    assert sps.kstest(x, ref).pvalue > KS_ALPHA


def test_tilted_exp_equals_rate_shifted_exp_in_law():
    x = tilted_sample(EXP, 0.55, _rng(5), N_KS)
    y = sample(DistributionSpec("exp", rate=1.3 - 0.55), _rng(6), N_KS)
    assert sps.ks_2samp(x, y).pvalue > KS_ALPHA


def _equilibrium_cdf(spec):
    """CDF of the stationary-excess law: integral of the survival over mean."""
    if spec.kind == "exp":
        return sps.expon(scale=1 / spec.rate).cdf
    if spec.kind == "erlang":
        k, r = spec.shape, spec.rate

        def cdf(x):
            x = np.asarray(x, dtype=float)
            return sum(sps.gamma(a=i + 1, scale=1 / r).cdf(x) for i in range(k)) / k

        return cdf
    if spec.kind == "hyperexp":
        mu = mean(spec)

        def cdf(x):
            x = np.asarray(x, dtype=float)
            out = np.zeros_like(x)
            for w, r in zip(spec.weights, spec.rates):
                out += (w / r) * (1.0 - np.exp(-r * np.maximum(x, 0.0)))
            return out / mu

        return cdf
    lo, hi, mu = spec.lo, spec.hi, mean(spec)

    def cdf(x):
        x = np.asarray(x, dtype=float)
        out = np.where(x < lo, x, lo + (x - lo) - (x - lo) ** 2 / (2 * (hi - lo)))
        out = np.where(x >= hi, mu, out)
        return np.clip(out, 0.0, mu) / mu

    return cdf


@pytest.mark.parametrize("spec", ALL)
def test_equilibrium_sample_law(spec):
    x = equilibrium_sample(spec, _rng(303), N_KS)
    assert sps.kstest(x, _equilibrium_cdf(spec)).pvalue > KS_ALPHA


@pytest.mark.parametrize(
    "spec,age",
    [(EXP, 0.9), (ERL, 0.4), (ERL, 2.8), (HYP, 1.7), (UNI, 0.0), (UNI, 1.2)],
)
def test_conditional_excess_law(spec, age):
    """Law of X - age given X > age."""
    x = conditional_excess_sample(spec, age, _rng(404), N_KS)
    base = _cdf(spec)
    tail = 1.0 - base(age)

    def ref(t):
        return (base(age + np.asarray(t, dtype=float)) - base(age)) / tail

    assert sps.kstest(x, ref).pvalue > KS_ALPHA
    assert np.all(x >= 0)
    if spec.kind == "uniform":
        assert np.all(x <= spec.hi - age + 1e-12)


def test_conditional_excess_of_exp_is_memoryless():
    x = conditional_excess_sample(EXP, 4.2, _rng(11), N_KS)
    y = sample(EXP, _rng(12), N_KS)
    assert sps.ks_2samp(x, y).pvalue > KS_ALPHA
