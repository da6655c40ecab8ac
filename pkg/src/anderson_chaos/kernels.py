"""Green functions, correlation kernels and their spectral data.

Conventions: the Fourier transform is ``g^(xi) = int exp(-i x.xi) g(x) dx`` and the
spatial covariance is ``gamma1 = F mu``, so a spectral density ``m`` satisfies
``gamma1(x) = int exp(-i x.xi) m(xi) dxi``.
"""
from __future__ import annotations

import math
from dataclasses import dataclass
from typing import NamedTuple

import numpy as np
from scipy import integrate, special

from .errors import DomainError, UnsupportedConfigurationError

HEAT = "heat"
WAVE = "wave"


def sphere_area(d: int) -> float:
    """Surface area of the unit sphere in R^d (2 for d=1)."""
    return 2.0 * math.pi ** (d / 2) / math.gamma(d / 2)


# ---------------------------------------------------------------------------
# Green functions
# ---------------------------------------------------------------------------


@dataclass(frozen=True)
class GreenKernel:
    equation: str
    dimension: int

    def __post_init__(self):
        if self.equation not in (HEAT, WAVE):
            raise UnsupportedConfigurationError(f"unknown equation {self.equation!r}")
        if self.dimension < 1:
            raise UnsupportedConfigurationError("dimension must be >= 1")
        if self.equation == WAVE and self.dimension > 2:
            raise UnsupportedConfigurationError(
                "wave kernels are functions only for d <= 2"
            )


def _radius(x, d):
    x = np.asarray(x, dtype=float)
    if d == 1:
        return np.abs(x)
    return np.sqrt(np.sum(x * x, axis=-1))


def green_eval(kernel: GreenKernel, t, x):
    """Evaluate G_t(x). ``x`` holds points; for d >= 2 its last axis has length d.

    Returns 0 wherever ``t <= 0``.
    """
    d = kernel.dimension
    r = _radius(x, d)
    t = np.asarray(t, dtype=float)
    t, r = np.broadcast_arrays(t, r)
    out = np.zeros(r.shape)
    pos = t > 0
    if kernel.equation == HEAT:
        tp = t[pos]
        out[pos] = (2 * np.pi * tp) ** (-d / 2) * np.exp(-r[pos] ** 2 / (2 * tp))
    else:
        inside = pos & (r < t)
        if d == 1:
            out[inside] = 0.5
        else:
            out[inside] = 1.0 / (2 * np.pi * np.sqrt(t[inside] ** 2 - r[inside] ** 2))
    return out if out.ndim else float(out)


def green_fourier(kernel: GreenKernel, t, xi):
    """Fourier transform of G_t at frequency norm ``|xi|`` (``xi`` may be an array)."""
    t = np.asarray(t, dtype=float)
    if np.any(t <= 0):
        raise DomainError("green_fourier requires t > 0")
    k = np.abs(np.asarray(xi, dtype=float))
    if kernel.equation == HEAT:
        out = np.exp(-t * k * k / 2)
    else:
        # sin(t k)/k = t sinc(t k / pi) handles k = 0 exactly
        out = t * np.sinc(t * k / np.pi)
    return out if np.ndim(out) else float(out)


def heat_interval_mass(tau, lo, hi):
    """Mass of the 1-d heat kernel G_tau on the interval [lo, hi]."""
    s = np.sqrt(2.0 * tau)
    return 0.5 * (special.erf(hi / s) - special.erf(lo / s))


def wave1_interval_mass(tau, lo, hi):
    """Mass of the 1-d wave kernel on [lo, hi]: half the overlap with (-tau, tau)."""
    return 0.5 * np.clip(np.minimum(hi, tau) - np.maximum(lo, -tau), 0.0, None)


def _circle_arc_in_rect(rho, lo, hi):
    """Angular measure of the circle of radius ``rho`` about 0 lying in a rectangle."""
    if rho <= 0:
        inside = lo[0] <= 0 <= hi[0] and lo[1] <= 0 <= hi[1]
        return 2 * np.pi if inside else 0.0
    cuts = [0.0, 2 * np.pi]
    for axis, bounds in ((0, (lo[0], hi[0])), (1, (lo[1], hi[1]))):
        for b in bounds:
            if abs(b) < rho:
                base = math.acos(b / rho) if axis == 0 else math.asin(b / rho)
                cand = (base, -base) if axis == 0 else (base, math.pi - base)
                cuts.extend(c % (2 * np.pi) for c in cand)
    cuts = np.sort(np.asarray(cuts))
    mids = 0.5 * (cuts[1:] + cuts[:-1])
    px, py = rho * np.cos(mids), rho * np.sin(mids)
    ok = (px >= lo[0]) & (px <= hi[0]) & (py >= lo[1]) & (py <= hi[1])
    return float(np.sum(np.diff(cuts)[ok]))


_GL64 = np.polynomial.legendre.leggauss(64)


def wave2_rect_mass(tau, lo, hi, nodes=_GL64):
    """Mass of the 2-d wave kernel G_tau on the rectangle [lo, hi].

    Uses u = sqrt(tau^2 - r^2), under which the mass becomes
    (1/2pi) int_0^tau Theta(sqrt(tau^2 - u^2)) du with Theta the arc measure.
    """
    if tau <= 0:
        return 0.0
    x, w = nodes
    u = 0.5 * tau * (x + 1)
    vals = [_circle_arc_in_rect(math.sqrt(max(tau * tau - ui * ui, 0.0)), lo, hi) for ui in u]
    return float(0.5 * tau * np.dot(w, vals) / (2 * np.pi))


# ---------------------------------------------------------------------------
# Correlation kernels
# ---------------------------------------------------------------------------

TEMPORAL_KINDS = ("constant", "exponential", "power")
SPATIAL_KINDS = ("exponential", "gaussian", "riesz")


def _second_antiderivative(kind, scale, rate, exponent, length):
    """Even function g2 with g2'' = gamma and g2(0) = 0 for 1-d kernels."""
    if kind == "constant":
        return lambda z: scale * 0.5 * np.asarray(z, float) ** 2
    if kind == "exponential":
        lam = rate

        def g2(z):
            a = np.abs(np.asarray(z, float))
            return scale * (a / lam - 1.0 / lam**2 + np.exp(-lam * a) / lam**2)

        return g2
    if kind in ("power", "riesz"):
        a = exponent

        def g2(z):
            return scale * np.abs(np.asarray(z, float)) ** (2 - a) / ((1 - a) * (2 - a))

        return g2
    if kind == "gaussian":
        ell = length

        def g2(z):
            z = np.asarray(z, float)
            return scale * (
                z * ell * math.sqrt(math.pi / 2) * special.erf(z / (ell * math.sqrt(2)))
                + ell**2 * np.exp(-(z**2) / (2 * ell**2))
                - ell**2
            )

        return g2
    raise UnsupportedConfigurationError(f"no closed form for kernel {kind!r}")


@dataclass(frozen=True)
class TemporalKernel:
    """gamma0: ``constant`` (scale), ``exponential`` (scale*exp(-rate|t|)) or
    ``power`` (scale*|t|^(2H0-2), H0 = ``hurst``)."""

    kind: str = "exponential"
    scale: float = 1.0
    rate: float = 1.0
    hurst: float = 0.75

    @property
    def exponent(self) -> float:
        return 2.0 - 2.0 * self.hurst

    def __call__(self, t):
        t = np.abs(np.asarray(t, dtype=float))
        if self.kind == "constant":
            return self.scale * np.ones_like(t)
        if self.kind == "exponential":
            return self.scale * np.exp(-self.rate * t)
        with np.errstate(divide="ignore"):
            return self.scale * t ** (-self.exponent)

    def violations(self) -> list[str]:
        out = []
        if self.kind not in TEMPORAL_KINDS:
            out.append(f"temporal kernel: unknown kind {self.kind!r}")
            return out
        if not self.scale > 0:
            out.append("temporal kernel: scale must be > 0 so that int_0^eps gamma0 > 0 for every eps (non-trivial noise)")
        if self.kind == "exponential" and not self.rate > 0:
            out.append("temporal kernel: exponential rate must be > 0")
        if self.kind == "power" and not 0.5 < self.hurst < 1:
            out.append("temporal kernel: power kernel needs H0 in (1/2, 1) to be locally integrable and nonnegative-definite")
        return out

    def g2(self):
        return _second_antiderivative(self.kind, self.scale, self.rate, self.exponent, 1.0)


@dataclass(frozen=True)
class SpatialKernel:
    """gamma1 on R^d: ``exponential`` (scale*exp(-|z|/length)), ``gaussian``
    (scale*exp(-|z|^2/(2 length^2))) or ``riesz`` (scale*|z|^-alpha)."""

    kind: str = "exponential"
    dim: int = 1
    scale: float = 1.0
    length: float = 1.0
    alpha: float = 0.5

    @property
    def integrable(self) -> bool:
        return self.kind != "riesz"

    def __call__(self, z):
        z = np.asarray(z, dtype=float)
        r = np.abs(z) if self.dim == 1 else np.sqrt(np.sum(z * z, axis=-1))
        if self.kind == "exponential":
            return self.scale * np.exp(-r / self.length)
        if self.kind == "gaussian":
            return self.scale * np.exp(-(r**2) / (2 * self.length**2))
        with np.errstate(divide="ignore"):
            return self.scale * r ** (-self.alpha)

    def violations(self) -> list[str]:
        out = []
        if self.kind not in SPATIAL_KINDS:
            return [f"spatial kernel: unknown kind {self.kind!r}"]
        if not self.scale > 0:
            out.append("spatial kernel: scale must be > 0 (positive L1 norm / non-trivial noise)")
        if self.kind == "riesz":
            hi = min(2.0, float(self.dim))
            if not 0 < self.alpha < hi:
                out.append(
                    f"spatial kernel: Riesz exponent alpha={self.alpha} not in (0, min(2, d))=(0, {hi:g}); "
                    "needed for Dalang's condition and local integrability"
                )
        elif not self.length > 0:
            out.append("spatial kernel: length must be > 0")
        return out

    def l1_norm(self) -> float:
        d = self.dim
        if self.kind == "exponential":
            return self.scale * sphere_area(d) * math.gamma(d) * self.length**d
        if self.kind == "gaussian":
            return self.scale * (2 * math.pi * self.length**2) ** (d / 2)
        return math.inf

    def spectral_density(self, k):
        """Density m(|xi|) of the spectral measure mu."""
        k = np.abs(np.asarray(k, dtype=float))
        d = self.dim
        if self.kind == "gaussian":
            ell = self.length
            return self.scale * (ell**2 / (2 * np.pi)) ** (d / 2) * np.exp(-(ell**2) * k**2 / 2)
        if self.kind == "exponential":
            ell = self.length
            cd = 2**d * np.pi ** ((d - 1) / 2) * math.gamma((d + 1) / 2)
            return self.scale * cd * ell**d / (2 * np.pi) ** d / (1 + (ell * k) ** 2) ** ((d + 1) / 2)
        with np.errstate(divide="ignore"):
            return self.scale * riesz_constant(self.alpha, d) * k ** (self.alpha - d)

    def g2(self):
        if self.dim != 1:
            raise UnsupportedConfigurationError("closed-form cell integrals exist only for d=1")
        return _second_antiderivative(self.kind, self.scale, 1.0 / self.length, self.alpha, self.length)


def riesz_constant(alpha: float, d: int) -> float:
    """c_alpha with ``|x|^-alpha = int exp(-i x.xi) c_alpha |xi|^(alpha-d) dxi``."""
    return math.gamma((d - alpha) / 2) / (math.pi ** (d / 2) * 2**alpha * math.gamma(alpha / 2))


@dataclass(frozen=True)
class CorrelationKernel:
    temporal: TemporalKernel
    spatial: SpatialKernel

    @property
    def dim(self) -> int:
        return self.spatial.dim

    def violations(self) -> list[str]:
        return self.temporal.violations() + self.spatial.violations()


# ---------------------------------------------------------------------------
# Cell-pair integrals
# ---------------------------------------------------------------------------


def _box(cell, d):
    b = np.asarray(cell, dtype=float).reshape(d, 2)
    if np.any(b[:, 1] < b[:, 0]):
        raise DomainError("cell bounds must satisfy lo <= hi")
    return b


def _interval_pair(g2, a, b, c, d):
    return g2(b - c) - g2(a - c) - g2(b - d) + g2(a - d)


def _interval_pair_direct(kern, a, b, c, d, n=16):
    x, w = np.polynomial.legendre.leggauss(n)
    u = 0.5 * (b - a) * (x + 1) + a
    v = 0.5 * (d - c) * (x + 1) + c
    vals = kern(u[:, None] - v[None, :])
    return 0.25 * (b - a) * (d - c) * float(w @ vals @ w)


def _interval_pair_kernel(kind, kern, g2, a, b, c, d, length):
    gap = max(c - b, a - d)
    if kind == "exponential" and gap >= 0:
        lam = 1.0 / length
        return (
            kern(0.0)
            * math.exp(-lam * gap)
            * (1 - math.exp(-lam * (b - a)))
            * (1 - math.exp(-lam * (d - c)))
            / lam**2
        )
    if kind == "gaussian" and gap > 2 * length:
        return _interval_pair_direct(kern, a, b, c, d)
    return float(_interval_pair(g2, a, b, c, d))


def correlation_cell_integral(kernel: CorrelationKernel, cell_a, cell_b, axis: str = "space") -> float:
    """int_{A x B} gamma(u - v) du dv for axis-aligned boxes A, B.

    Time cells and d=1 spatial cells use closed-form antiderivatives; d >= 2 uses
    quadrature of the kernel against the overlap weight of the two boxes.
    """
    if axis == "time":
        k = kernel.temporal
        (a, b), (c, d) = _box(cell_a, 1)[0], _box(cell_b, 1)[0]
        return _interval_pair_kernel(k.kind, k, k.g2(), a, b, c, d, 1.0 / k.rate)
    if axis != "space":
        raise DomainError("axis must be 'time' or 'space'")
    s = kernel.spatial
    dim = s.dim
    if s.kind == "riesz" and not s.alpha < dim:
        raise DomainError(f"|z|^-{s.alpha} is not locally integrable in d={dim}")
    A, B = _box(cell_a, dim), _box(cell_b, dim)
    if dim == 1:
        return _interval_pair_kernel(s.kind, s, s.g2(), A[0, 0], A[0, 1], B[0, 0], B[0, 1], s.length)
    if s.kind == "gaussian":
        one = SpatialKernel("gaussian", 1, 1.0, s.length)
        out = s.scale
        for k in range(dim):
            out *= _interval_pair_kernel("gaussian", one, one.g2(), A[k, 0], A[k, 1], B[k, 0], B[k, 1], s.length)
        return float(out)
    if dim != 2:
        raise UnsupportedConfigurationError("non-separable cell integrals implemented for d <= 2")
    return _overlap_quadrature_2d(s, A, B)


def _overlap_weight(z, a_lo, a_hi, b_lo, b_hi):
    return np.clip(np.minimum(a_hi, b_hi + z) - np.maximum(a_lo, b_lo + z), 0.0, None)


_GL20 = np.polynomial.legendre.leggauss(20)


def _rect_quad(f, lo, hi):
    x, w = _GL20
    u = 0.5 * (hi[0] - lo[0]) * (x + 1) + lo[0]
    v = 0.5 * (hi[1] - lo[1]) * (x + 1) + lo[1]
    U, V = np.meshgrid(u, v, indexing="ij")
    return 0.25 * (hi[0] - lo[0]) * (hi[1] - lo[1]) * float(w @ f(U, V) @ w)


def _corner_polar_quad(f, lo, hi):
    """Integral over a rectangle having the origin as one of its corners."""
    sx = 1.0 if hi[0] > 0 else -1.0
    sy = 1.0 if hi[1] > 0 else -1.0
    a = max(abs(lo[0]), abs(hi[0]))
    b = max(abs(lo[1]), abs(hi[1]))
    if a == 0 or b == 0:
        return 0.0
    phi_c = math.atan2(b, a)

    def inner(phi):
        rmax = a / math.cos(phi) if phi <= phi_c else b / math.sin(phi)
        return integrate.quad(
            lambda r: f(sx * r * math.cos(phi), sy * r * math.sin(phi)) * r, 0, rmax, limit=200
        )[0]

    p1 = integrate.quad(inner, 0, phi_c, limit=200)[0]
    p2 = integrate.quad(inner, phi_c, math.pi / 2, limit=200)[0]
    return p1 + p2


def _overlap_quadrature_2d(s: SpatialKernel, A, B):
    def f(z1, z2):
        z = np.stack(np.broadcast_arrays(np.asarray(z1, float), np.asarray(z2, float)), axis=-1)
        return (
            s(z)
            * _overlap_weight(z[..., 0], A[0, 0], A[0, 1], B[0, 0], B[0, 1])
            * _overlap_weight(z[..., 1], A[1, 0], A[1, 1], B[1, 0], B[1, 1])
        )

    cuts = []
    for k in range(2):
        pts = {A[k, 0] - B[k, 1], A[k, 0] - B[k, 0], A[k, 1] - B[k, 1], A[k, 1] - B[k, 0]}
        lo_k, hi_k = min(pts), max(pts)
        if lo_k < 0 < hi_k:
            pts.add(0.0)
        cuts.append(np.array(sorted(pts)))
    total = 0.0
    for i in range(len(cuts[0]) - 1):
        for j in range(len(cuts[1]) - 1):
            lo = (cuts[0][i], cuts[1][j])
            hi = (cuts[0][i + 1], cuts[1][j + 1])
            if lo[0] == hi[0] or lo[1] == hi[1]:
                continue
            corner = (lo[0] == 0 or hi[0] == 0) and (lo[1] == 0 or hi[1] == 0)
            if corner and s.kind == "riesz":
                total += _corner_polar_quad(lambda x, y: float(f(x, y)), lo, hi)
            else:
                total += _rect_quad(f, lo, hi)
    return float(total)


# ---------------------------------------------------------------------------
# Dalang's condition
# ---------------------------------------------------------------------------


class DalangResult(NamedTuple):
    satisfied: bool
    integral_estimate: float
    divergent: bool = False


def dalang_check(kernel) -> DalangResult:
    """Evaluate int mu(dxi) / (1 + |xi|^2) by radial quadrature.

    Accepts a :class:`CorrelationKernel` or a :class:`SpatialKernel`. For Riesz
    kernels finiteness is decided analytically (0 < alpha < 2), together with
    validity of the kernel itself (alpha < d).
    """
    s = kernel.spatial if isinstance(kernel, CorrelationKernel) else kernel
    d = s.dim
    area = sphere_area(d)
    if s.kind == "riesz":
        a = s.alpha
        if not (0 < a < 2) or not a < d:
            return DalangResult(False, math.inf, True)
        c = s.scale * riesz_constant(a, d) * area
        head = integrate.quad(lambda r: 1 / (1 + r * r), 0, 1, weight="alg", wvar=(a - 1, 0))[0]
        # tail: r^(a-3)/(1 + r^-2) expanded, closed after a finite cut
        cut = 1e3
        mid = integrate.quad(lambda r: r ** (a - 1) / (1 + r * r), 1, cut, limit=200)[0]
        tail = sum((-1) ** k * cut ** (a - 2 - 2 * k) / (2 + 2 * k - a) for k in range(4))
        return DalangResult(True, c * (head + mid + tail), False)
    val = integrate.quad(lambda r: s.spectral_density(r) * r ** (d - 1) / (1 + r * r), 0, np.inf, limit=200)[0]
    return DalangResult(bool(np.isfinite(val)), area * val, not np.isfinite(val))
