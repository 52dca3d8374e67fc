"""Statistical validation against closed-form steady states.

For networks whose interarrival and service laws are all exponential, the
stationary queue lengths are independent geometric variables with success
parameter 1 - rho_i, where rho_i is the solved throughput over the service
rate.  That closed form gives an exact oracle: marginal means, full pmfs, and
independence across stations, against which sampler output can be tested with
standard confidence intervals, chi-square goodness of fit, and correlation
tests.  A five-column two-station benchmark family with known means is built
in for end-to-end reproduction runs.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np
from scipy import stats as sps

from .network import NetworkSpec, check_stability, network_from_dict, solve_flow

__all__ = [
    "NotMarkovian",
    "TooFewSamples",
    "ProductFormOracle",
    "SampleSummary",
    "oracle_mean",
    "summarize",
    "chi_square_geometric",
    "BENCHMARK_COLUMNS",
    "benchmark_spec",
    "reproduce_benchmark",
    "histogram_csv",
]


class NotMarkovian(ValueError):
    """Raised when a closed-form oracle needs all-exponential primitives."""


class TooFewSamples(ValueError):
    """Raised when a summary statistic is requested from too little data."""


def _require_markovian(spec: NetworkSpec) -> None:
    for a in spec.arrival:
        if a is not None and a.kind != "exp":
            raise NotMarkovian(f"arrival law {a.kind!r} breaks the product form")
    for s in spec.service:
        if s.kind != "exp":
            raise NotMarkovian(f"service law {s.kind!r} breaks the product form")


@dataclass(frozen=True)
class ProductFormOracle:
    """Exact stationary law of an all-exponential network.

    Station i is geometric on {0, 1, ...} with P(Y_i = k) = (1-rho_i) rho_i^k
    and the stations are independent.
    """

    rho: np.ndarray

    @classmethod
    def from_spec(cls, spec: NetworkSpec) -> "ProductFormOracle":
        _require_markovian(spec)
        phi = check_stability(spec)
        return cls(rho=phi / spec.mu)

    @property
    def mean(self) -> np.ndarray:
        return self.rho / (1.0 - self.rho)

    @property
    def var(self) -> np.ndarray:
        return self.rho / (1.0 - self.rho) ** 2

    def pmf(self, i: int, k) -> np.ndarray:
        k = np.asarray(k)
        return (1.0 - self.rho[i]) * self.rho[i] ** k

    def cdf(self, i: int, k) -> np.ndarray:
        k = np.asarray(k)
        return 1.0 - self.rho[i] ** (k + 1.0)


def oracle_mean(spec: NetworkSpec) -> np.ndarray:
    """Closed-form stationary mean queue lengths (all-exponential networks)."""
    return ProductFormOracle.from_spec(spec).mean


def chi_square_geometric(counts: np.ndarray, rho: float) -> tuple[float, float, int]:
    """Goodness-of-fit of observed occupancy counts against Geometric(1-rho).

    ``counts[k]`` is the number of samples equal to k.  Cells are merged from
    the tail until every expected count is at least 5; one degree of freedom
    is lost per merge boundary as usual (no parameters are estimated).
    Returns (statistic, p_value, dof).
    """
    counts = np.asarray(counts, dtype=float)
    n = counts.sum()
    if n < 50:
        raise TooFewSamples(f"need >= 50 samples for the chi-square test, got {int(n)}")
    kmax = counts.size - 1
    probs = (1.0 - rho) * rho ** np.arange(kmax + 1)
    probs[-1] = rho**kmax  # last cell holds the whole tail >= kmax
    expected = n * probs
    # merge tail cells until every expected count is >= 5
    obs = list(counts)
    exp = list(expected)
    while len(exp) > 2 and exp[-1] < 5.0:
        exp[-2] += exp[-1]
        obs[-2] += obs[-1]
        exp.pop()
        obs.pop()
    obs_a = np.asarray(obs)
    exp_a = np.asarray(exp)
    stat = float(((obs_a - exp_a) ** 2 / exp_a).sum())
    dof = len(exp) - 1
    p = float(sps.chi2.sf(stat, dof))
    return stat, p, dof


def pearson_independence(x: np.ndarray, y: np.ndarray) -> tuple[float, float]:
    """Pearson correlation and its two-sided p-value via the t statistic."""
    n = x.size
    if n < 3:
        raise TooFewSamples("need >= 3 samples for a correlation test")
    xc = x - x.mean()
    yc = y - y.mean()
    denom = np.sqrt((xc**2).sum() * (yc**2).sum())
    if denom == 0.0:
        return 0.0, 1.0
    r = float((xc * yc).sum() / denom)
    r = max(-1.0, min(1.0, r))
    if abs(r) == 1.0:
        return r, 0.0
    t = r * np.sqrt((n - 2) / (1.0 - r * r))
    p = float(2.0 * sps.t.sf(abs(t), n - 2))
    return r, p


@dataclass(frozen=True)
class SampleSummary:
    """Per-station summary of an occupancy sample matrix."""

    n: int
    mean: np.ndarray
    ci_halfwidth: np.ndarray  # 1.96 * sd / sqrt(n)
    pearson_r: np.ndarray  # (d, d), unit diagonal
    pearson_p: np.ndarray  # (d, d), 1.0 on the diagonal
    gof_stat: np.ndarray | None = None  # vs a supplied oracle, per station
    gof_p: np.ndarray | None = None
    gof_dof: np.ndarray | None = None

    def ci_covers(self, truth: np.ndarray) -> np.ndarray:
        truth = np.asarray(truth, dtype=float)
        return np.abs(self.mean - truth) <= self.ci_halfwidth


def summarize(samples: np.ndarray, oracle: ProductFormOracle | None = None) -> SampleSummary:
    """Means with 95% confidence intervals, pairwise independence tests, and
    (when an oracle is given) a per-station chi-square goodness-of-fit."""
    samples = np.asarray(samples)
    if samples.ndim != 2:
        raise ValueError("samples must be (n, d)")
    n, d = samples.shape
    if n < 2:
        raise TooFewSamples(f"need >= 2 samples, got {n}")
    mean = samples.mean(axis=0)
    sd = samples.std(axis=0, ddof=1)
    half = 1.96 * sd / np.sqrt(n)
    r_mat = np.eye(d)
    p_mat = np.ones((d, d))
    for i in range(d):
        for j in range(i + 1, d):
            r, p = pearson_independence(samples[:, i].astype(float), samples[:, j].astype(float))
            r_mat[i, j] = r_mat[j, i] = r
            p_mat[i, j] = p_mat[j, i] = p
    gof_stat = gof_p = gof_dof = None
    if oracle is not None:
        gof_stat = np.empty(d)
        gof_p = np.empty(d)
        gof_dof = np.empty(d, np.int64)
        for i in range(d):
            counts = np.bincount(samples[:, i].astype(np.int64))
            s, p, k = chi_square_geometric(counts, float(oracle.rho[i]))
            gof_stat[i], gof_p[i], gof_dof[i] = s, p, k
    return SampleSummary(
        n=n,
        mean=mean,
        ci_halfwidth=half,
        pearson_r=r_mat,
        pearson_p=p_mat,
        gof_stat=gof_stat,
        gof_p=gof_p,
        gof_dof=gof_dof,
    )


# Five two-station all-exponential benchmark columns with known stationary
# means.  Station 1 keeps throughput 0.3 (mean 0.4286) in every column while
# station 2 is pushed closer to saturation, mean 3.0 up to about 6.14.
BENCHMARK_COLUMNS: tuple[dict, ...] = (
    {"lam": (0.225, 0.717), "mean": (0.4286, 3.0)},
    {"lam": (0.220, 0.767), "mean": (0.4286, 4.0)},
    {"lam": (0.218, 0.787), "mean": (0.4286, 4.5556)},
    {"lam": (0.216, 0.807), "mean": (0.4286, 5.25)},
    {"lam": (0.214, 0.827), "mean": (0.4286, 6.1429)},
)

_BENCHMARK_ROUTING = ((0.0, 0.11), (0.10, 0.0))


def benchmark_spec(column: int) -> NetworkSpec:
    """Benchmark column as a network spec (0-based column index)."""
    lam = BENCHMARK_COLUMNS[column]["lam"]
    return network_from_dict(
        {
            "arrival": [f"exp(rate={l})" for l in lam],
            "service": ["exp(rate=1.0)", "exp(rate=1.0)"],
            "routing": [list(r) for r in _BENCHMARK_ROUTING],
        }
    )


def reproduce_benchmark(
    n: int = 10_000,
    master_seed: int = 20_260_101,
    columns=None,
    options=None,
    workers: int = 1,
):
    """Sample every benchmark column and compare with the published means.

    Returns a list of per-column dicts: sampled means, 95% CIs, closed-form
    truth, and whether each CI covers the truth.
    """
    from .dcftp import sample_batch

    cols = range(len(BENCHMARK_COLUMNS)) if columns is None else columns
    out = []
    for c in cols:
        spec = benchmark_spec(c)
        ys, _, records = sample_batch(spec, n, master_seed + c, options=options, workers=workers)
        oracle = ProductFormOracle.from_spec(spec)
        summ = summarize(ys, oracle)
        truth = np.asarray(BENCHMARK_COLUMNS[c]["mean"])
        out.append(
            {
                "column": int(c),
                "lam": BENCHMARK_COLUMNS[c]["lam"],
                "n": n,
                "mean": summ.mean.tolist(),
                "ci_halfwidth": summ.ci_halfwidth.tolist(),
                "truth_rounded": truth.tolist(),
                "truth_exact": oracle.mean.tolist(),
                "ci_covers_truth": summ.ci_covers(oracle.mean).tolist(),
                "gof_p": summ.gof_p.tolist(),
                "pearson_p": float(summ.pearson_p[0, 1]),
                "mean_rounds": float(np.mean([r.rounds for r in records])),
                "max_rounds": int(max(r.rounds for r in records)),
            }
        )
    return out


def histogram_csv(samples: np.ndarray, fh, oracle: ProductFormOracle | None = None) -> None:
    """Write per-station occupancy histograms (and oracle pmfs) as CSV."""
    samples = np.asarray(samples, dtype=np.int64)
    n, d = samples.shape
    kmax = int(samples.max(initial=0))
    header = ["k"]
    for i in range(d):
        header.append(f"count_{i}")
        header.append(f"freq_{i}")
        if oracle is not None:
            header.append(f"pmf_{i}")
    fh.write(",".join(header) + "\n")
    counts = [np.bincount(samples[:, i], minlength=kmax + 1) for i in range(d)]
    for k in range(kmax + 1):
        row = [str(k)]
        for i in range(d):
            row.append(str(int(counts[i][k])))
            row.append(f"{counts[i][k] / n:.6g}")
            if oracle is not None:
                row.append(f"{float(oracle.pmf(i, k)):.6g}")
        fh.write(",".join(row) + "\n")
