"""Exact sampling of the stationary state of stable generalized Jackson networks.

The sampler couples the target FIFO network with a slower dominating system
whose stationary version can be constructed backwards in time from explicit
supremum formulas for negatively drifting random walks.  Once the dominating
system is observed empty at some past instant, replaying the true network
forward from that instant yields a draw from its exact steady state —
queue lengths together with residual service and residual interarrival times.
"""

from gjnexact.distributions import DistributionSpec, parse_distribution
from gjnexact.network import (
    NetworkSpec,
    build_auxiliary,
    check_stability,
    network_from_dict,
    solve_flow,
)
from gjnexact.dcftp import (
    SamplerOptions,
    StationaryNetworkState,
    sample_batch,
    sample_stationary,
)

__all__ = [
    "DistributionSpec",
    "parse_distribution",
    "NetworkSpec",
    "network_from_dict",
    "solve_flow",
    "check_stability",
    "build_auxiliary",
    "SamplerOptions",
    "StationaryNetworkState",
    "sample_stationary",
    "sample_batch",
]

__version__ = "0.1.0"
