"""The four reference configurations used by the experiments.

=====  ========  ===================  =================
case   equation  spatial covariance   variance exponent
=====  ========  ===================  =================
1      heat      exp(-|x|)            d/2
2      heat      |x|^-alpha           d - alpha/2
3      wave      exp(-|x|)            d/2
4      wave      |x|^-alpha           d - alpha/2
=====  ========  ===================  =================

All use gamma0(t) = exp(-|t|), d = 1, t0 = 1 and alpha = 1/2.
"""
from __future__ import annotations

import math
from dataclasses import dataclass

from .errors import DomainError
from .fields import ModelSpec, assemble, default_half_width
from .kernels import CorrelationKernel, SpatialKernel, TemporalKernel
from .noise import GridSpec

ALPHA = 0.5
CASES = {
    1: ("heat", "exponential"),
    2: ("heat", "riesz"),
    3: ("wave", "exponential"),
    4: ("wave", "riesz"),
}


@dataclass(frozen=True)
class CaseInfo:
    case: int
    equation: str
    spatial: str
    variance_exponent: float
    covariance_exponent: float
    a_exponent: float


def case_info(case: int, d: int = 1, alpha: float = ALPHA) -> CaseInfo:
    if case not in CASES:
        raise DomainError(f"unknown case {case}; choose one of {sorted(CASES)}")
    eq, sp = CASES[case]
    if sp == "riesz":
        return CaseInfo(case, eq, sp, d - alpha / 2, alpha / 2, alpha)
    return CaseInfo(case, eq, sp, d / 2, d / 2, float(d))


def case_kernel(case: int, d: int = 1, alpha: float = ALPHA) -> CorrelationKernel:
    _, sp = CASES[case]
    spatial = SpatialKernel("riesz", d, alpha=alpha) if sp == "riesz" else SpatialKernel("exponential", d)
    return CorrelationKernel(TemporalKernel("exponential", 1.0, 1.0), spatial)


def case_spec(case: int, r_max: float = 64.0, dx: float = 1.0, n_t: int = 5, t0: float = 1.0,
              truncation: int = 3, d: int = 1, alpha: float = ALPHA) -> ModelSpec:
    """``ModelSpec`` on a box padded for radii up to ``r_max`` with cell width ``dx``."""
    eq, _ = CASES[case]
    half = math.ceil(default_half_width(eq, r_max, t0) / dx) * dx
    grid = GridSpec(t0, n_t, half, int(round(2 * half / dx)), d)
    return ModelSpec(eq, case_kernel(case, d, alpha), grid, truncation)


def case_model(case: int, cache_dir=None, **kwargs):
    return assemble(case_spec(case, **kwargs), cache_dir=cache_dir)
