"""rigidhom: surface energies on piecewise rigid fields, at desk scale.

Discretizes anisotropic interface energies on pixel grids, solves the
minimal-interface cell problems that define the homogenised density of a
stationary random environment, and reproduces the constructive strip /
slicing bounds of the anisotropic gap experiment.
"""

__version__ = "0.1.0"

from .errors import (
    AmbiguousProjectionError,
    InternalInvariantError,
    InvalidArgumentError,
    OutOfRegimeError,
    UnsupportedDirectionError,
)

__all__ = [
    "AmbiguousProjectionError",
    "InternalInvariantError",
    "InvalidArgumentError",
    "OutOfRegimeError",
    "UnsupportedDirectionError",
    "__version__",
]
