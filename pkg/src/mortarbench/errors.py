"""Exception types shared across the package."""


class MortarBenchError(Exception):
    """Base class for all package errors."""


class MeshError(MortarBenchError):
    """Invalid surface mesh (bad connectivity, degenerate element, ...)."""


class DegenerateGeometryError(MeshError):
    """Geometric construction failed (zero-length normal, flat facet, ...)."""


class InfeasiblePartitionError(MortarBenchError):
    """Requested part count cannot be honored without empty parts."""


class RoutingError(MortarBenchError):
    """Message routed to an unknown rank or malformed payload."""


class StaleGridError(MortarBenchError):
    """Bin grid used after coordinates moved further than its safety margin."""


class ProjectionError(MortarBenchError):
    """Parameter-space inversion left the admissible element domain."""


class AssemblyError(MortarBenchError):
    """Triplet stream inconsistent with the declared row ownership."""


class ConfigError(MortarBenchError):
    """Invalid or inconsistent run configuration."""
