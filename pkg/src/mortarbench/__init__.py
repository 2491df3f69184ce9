"""Distributed mortar contact-evaluation benchmark.

Simulates the parallel evaluation of mortar coupling matrices on
logical ranks: domain decomposition, master-side ghosting strategies,
dynamic load balancing, and a metered message router, with matrix
results that are bit-for-bit independent of the distribution.
"""

from .driver import RunConfig, RunResult, compare, run
from .errors import (AssemblyError, ConfigError, DegenerateGeometryError,
                     InfeasiblePartitionError, MeshError, MortarBenchError,
                     ProjectionError, RoutingError, StaleGridError)

__version__ = "0.1.0"

__all__ = [
    "RunConfig", "RunResult", "run", "compare",
    "MortarBenchError", "MeshError", "DegenerateGeometryError",
    "InfeasiblePartitionError", "RoutingError", "StaleGridError",
    "ProjectionError", "AssemblyError", "ConfigError",
    "__version__",
]
