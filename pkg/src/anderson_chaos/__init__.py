"""Chaos-expansion numerics for heat and wave Anderson models with colored noise.

Modules, bottom-up: ``kernels`` (Green functions and noise covariances), ``noise``
(grids and Gaussian cell masses), ``chaos`` (multiple integrals and Malliavin
operators), ``fields`` (truncated solutions and spatial averages), ``covariance``
(variances, decay fits, bounds), ``limits`` (distances and almost sure CLT tools)
and ``cli``.
"""
__version__ = "0.1.0"

from .errors import (  # noqa: E402
    AccuracyError,
    AndersonError,
    DomainError,
    NumericDegeneracyError,
    PreconditionError,
    ResolutionError,
    ResourceError,
    UnsupportedConfigurationError,
)

__all__ = [
    "__version__",
    "AndersonError",
    "AccuracyError",
    "DomainError",
    "NumericDegeneracyError",
    "PreconditionError",
    "ResolutionError",
    "ResourceError",
    "UnsupportedConfigurationError",
]
