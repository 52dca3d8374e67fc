"""Network description, stability check, and auxiliary sampler parameters.

A network is a set of d FIFO single-server stations.  Station i may have an
external renewal arrival stream (rate lam[i] > 0) and has i.i.d. service times
(rate mu[i]).  After service at j, a job moves to station i with probability
routing[j, i] and leaves with the remaining probability.  The routing matrix
has zero diagonal and spectral radius < 1 (every job eventually leaves).

The exact sampler does not run the target network directly.  It builds an
auxiliary parameterization: a slightly slowed service law per station (slowdown
factor a[i] >= 1) chosen so that a strictly positive slack delta separates the
slowed service rates from the total input rates, plus per-coordinate rate
constants (gamma, beta, phi) used by the backward multidimensional random
walk.  All of that is computed here, once, in closed form.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from .distributions import DistributionSpec, mean, parse_distribution, scale

__all__ = [
    "NetworkSpec",
    "AuxiliaryParams",
    "NotOpen",
    "Unstable",
    "solve_flow",
    "check_stability",
    "build_auxiliary",
    "network_from_dict",
]


class NotOpen(ValueError):
    """Routing matrix keeps jobs circulating forever (spectral radius >= 1)."""


class Unstable(ValueError):
    """Total input rate at some station reaches its service rate."""


@dataclass(frozen=True)
class NetworkSpec:
    """Immutable network description.

    arrival: per-station interarrival distribution, or None for no external
             stream (at least one station must have one; interarrival laws
             must have unbounded support, so no uniform here).
    service: per-station service distribution.
    routing: (d, d) substochastic matrix, zero diagonal.
    """

    arrival: tuple
    service: tuple
    routing: np.ndarray

    def __post_init__(self):
        d = len(self.service)
        if d == 0:
            raise ValueError("need at least one station")
        if len(self.arrival) != d:
            raise ValueError("arrival and service lists must have equal length")
        q = np.asarray(self.routing, dtype=float)
        if q.shape != (d, d):
            raise ValueError(f"routing must be {d}x{d}")
        object.__setattr__(self, "routing", q)
        if np.any(q < 0):
            raise ValueError("routing probabilities must be nonnegative")
        if np.any(np.diag(q) != 0):
            raise ValueError("routing diagonal must be zero (no self loops)")
        rowsum = q.sum(axis=1)
        if np.any(rowsum > 1 + 1e-12):
            raise ValueError("routing row sums must not exceed 1")
        if d > 0 and np.max(np.abs(np.linalg.eigvals(q))) >= 1 - 1e-12:
            raise NotOpen("routing matrix spectral radius must be < 1")
        n_arr = 0
        for i, a in enumerate(self.arrival):
            if a is None:
                continue
            if not isinstance(a, DistributionSpec):
                raise ValueError(f"arrival[{i}] must be a DistributionSpec or None")
            if a.kind == "uniform":
                raise ValueError(
                    f"arrival[{i}]: interarrival laws need unbounded support; uniform not allowed"
                )
            n_arr += 1
        if n_arr == 0:
            raise NotOpen("at least one station needs an external arrival stream")
        for i, s in enumerate(self.service):
            if not isinstance(s, DistributionSpec):
                raise ValueError(f"service[{i}] must be a DistributionSpec")

    @property
    def d(self) -> int:
        return len(self.service)

    @property
    def lam(self) -> np.ndarray:
        """External arrival rates (0 where there is no stream)."""
        return np.array([0.0 if a is None else 1.0 / mean(a) for a in self.arrival])

    @property
    def mu(self) -> np.ndarray:
        """Service rates."""
        return np.array([1.0 / mean(s) for s in self.service])

    @property
    def arrival_stations(self) -> np.ndarray:
        return np.array([i for i, a in enumerate(self.arrival) if a is not None], dtype=np.int64)


def solve_flow(spec: NetworkSpec) -> np.ndarray:
    """Total throughput per station: phi = (I - Q^T)^{-1} lam."""
    d = spec.d
    q = spec.routing
    phi = np.linalg.solve(np.eye(d) - q.T, spec.lam)
    return phi


def check_stability(spec: NetworkSpec) -> np.ndarray:
    """Return the throughput vector; raise Unstable unless phi < mu everywhere."""
    phi = solve_flow(spec)
    mu = spec.mu
    bad = np.flatnonzero(phi >= mu - 1e-12)
    if bad.size:
        detail = ", ".join(f"station {i}: input {phi[i]:.6g} >= rate {mu[i]:.6g}" for i in bad)
        raise Unstable(detail)
    return phi


@dataclass(frozen=True)
class AuxiliaryParams:
    """Derived constants of the slowed auxiliary system.

    delta:     slack between slowed service rates and their total input.
    mu0:       slowed service rates, mu0 = (I - Q^T)^{-1} (lam + delta).
    slowdown:  a = mu / mu0 (componentwise, each > 1).
    service0:  slowed service laws (service time multiplied by a[i]).
    deltabar:  strictly positive drift margin for the backward walk.
    gamma:     arrival-side walk rates, lam + deltabar.
    phi_mat:   routed-side walk rates, phi_mat[j, i] = Q[j, i] * (mu0[j] + deltabar).
    beta:      service-side walk rates, gamma + column sums of phi_mat; beta < mu0.
    """

    delta: float
    mu0: np.ndarray
    slowdown: np.ndarray
    service0: tuple
    deltabar: float
    gamma: np.ndarray
    phi_mat: np.ndarray
    beta: np.ndarray


def build_auxiliary(spec: NetworkSpec) -> AuxiliaryParams:
    """Compute the slowed system and walk rate constants for a stable network."""
    phi = check_stability(spec)
    d = spec.d
    q = spec.routing
    lam = spec.lam
    mu = spec.mu

    inv = np.linalg.inv(np.eye(d) - q.T)
    ones_pot = inv @ np.ones(d)
    delta = 0.5 * np.min(mu - phi) / np.max(ones_pot)
    mu0 = inv @ (lam + delta)
    # sanity: each slowed rate exceeds its total input by exactly delta
    slack = mu0 - q.T @ mu0 - lam
    assert np.allclose(slack, delta, rtol=0, atol=1e-9 * max(1.0, delta))
    a = mu / mu0
    assert np.all(a > 1.0)
    service0 = tuple(scale(s, a[i]) for i, s in enumerate(spec.service))

    colsum = q.sum(axis=0)
    deltabar = 0.5 * delta / (1.0 + np.max(colsum))
    gamma = lam + deltabar
    phi_mat = q * (mu0 + deltabar)[:, None]
    beta = gamma + phi_mat.sum(axis=0)
    # strict headroom: beta stays below the slowed rates by at least delta/2
    assert np.all(beta < mu0 - 0.25 * delta)
    return AuxiliaryParams(
        delta=float(delta),
        mu0=mu0,
        slowdown=a,
        service0=service0,
        deltabar=float(deltabar),
        gamma=gamma,
        phi_mat=phi_mat,
        beta=beta,
    )


def network_from_dict(cfg: dict) -> NetworkSpec:
    """Build a NetworkSpec from a plain dict (parsed TOML/JSON config).

    Expected keys: 'arrival' (list of distribution literals or null/"none"),
    'service' (list of literals), 'routing' (list of rows).
    """
    arr = []
    for item in cfg["arrival"]:
        if item is None or (isinstance(item, str) and item.strip().lower() in ("none", "")):
            arr.append(None)
        else:
            arr.append(parse_distribution(item))
    svc = [parse_distribution(item) for item in cfg["service"]]
    routing = np.asarray(cfg["routing"], dtype=float)
    return NetworkSpec(arrival=tuple(arr), service=tuple(svc), routing=routing)
