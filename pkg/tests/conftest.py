"""Shared fixtures, spec builders, and the acceptance summary hook."""

from __future__ import annotations

import sys
from pathlib import Path

import numpy as np
import pytest

sys.path.insert(0, str(Path(__file__).parent))  # makes `oracles` importable

from gjnexact.distributions import DistributionSpec
from gjnexact.network import NetworkSpec, check_stability, network_from_dict


def mm1_spec(lam: float = 0.5, mu: float = 1.0) -> NetworkSpec:
    return network_from_dict(
        {
            "arrival": [f"exp(rate={lam})"],
            "service": [f"exp(rate={mu})"],
            "routing": [[0.0]],
        }
    )


def tandem_spec() -> NetworkSpec:
    """Two stations in series with feedback-free routing and one source."""
    return network_from_dict(
        {
            "arrival": ["exp(rate=0.4)", None],
            "service": ["erlang(k=2, rate=2.4)", "exp(rate=0.9)"],
            "routing": [[0.0, 1.0], [0.0, 0.0]],
        }
    )


def _dist_with_rate(kind: str, r: float) -> DistributionSpec:
    """A distribution of the given family with mean exactly 1/r."""
    if kind == "exp":
        return DistributionSpec("exp", rate=r)
    if kind == "erlang":
        return DistributionSpec("erlang", shape=3, rate=3.0 * r)
    if kind == "hyperexp":
        return DistributionSpec("hyperexp", weights=(0.3, 0.7), rates=(0.5 * r, 1.75 * r))
    if kind == "uniform":
        return DistributionSpec("uniform", lo=0.2 / r, hi=1.8 / r)
    raise ValueError(kind)


ARRIVAL_KINDS = ("exp", "erlang", "hyperexp")  # unbounded support required
SERVICE_KINDS = ("exp", "erlang", "hyperexp", "uniform")


def random_stable_spec(rng: np.random.Generator, d_max: int = 4) -> NetworkSpec:
    """Random stable network with mixed families, up to d_max stations."""
    d = int(rng.integers(1, d_max + 1))
    while True:
        routing = np.zeros((d, d))
        if d > 1:
            routing = rng.random((d, d)) * (rng.random((d, d)) < 0.6)
            np.fill_diagonal(routing, 0.0)
            rowsum = routing.sum(axis=1)
            scale = rng.uniform(0.3, 0.85, d) / np.maximum(rowsum, 1e-12)
            routing *= np.minimum(scale, 1.0)[:, None]
        mu = rng.uniform(0.8, 2.5, d)
        n_src = int(rng.integers(1, d + 1))
        src = rng.choice(d, size=n_src, replace=False)
        lam = np.zeros(d)
        lam[src] = rng.uniform(0.1, 0.9, n_src) * mu[src]
        # shrink the external input until utilization is comfortably below 1
        eye = np.eye(d)
        for _ in range(60):
            phi = np.linalg.solve(eye - routing.T, lam)
            if np.all(phi <= 0.8 * mu):
                break
            lam *= 0.7
        else:
            continue
        arrival = tuple(
            _dist_with_rate(str(rng.choice(ARRIVAL_KINDS)), lam[i]) if lam[i] > 0 else None
            for i in range(d)
        )
        service = tuple(_dist_with_rate(str(rng.choice(SERVICE_KINDS)), mu[i]) for i in range(d))
        spec = NetworkSpec(arrival=arrival, service=service, routing=routing)
        check_stability(spec)
        return spec


# ---------------------------------------------------------------------------
# acceptance reporting: one pass/fail line per criterion in the summary

_ACCEPTANCE_LINES: list[tuple[str, bool, str]] = []


def record_acceptance(name: str, passed: bool, detail: str) -> None:
    _ACCEPTANCE_LINES.append((name, passed, detail))


@pytest.fixture
def acceptance():
    return record_acceptance


def pytest_terminal_summary(terminalreporter, exitstatus, config):
    if not _ACCEPTANCE_LINES:
        return
    tr = terminalreporter
    tr.section("acceptance criteria")
    for name, passed, detail in _ACCEPTANCE_LINES:
        word = "PASS" if passed else "FAIL"
        tr.write_line(f"[{word}] {name}: {detail}")
