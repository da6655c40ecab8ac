"""Variances and covariances of spatial averages, decay fits and the bound pipeline.

The primary route for every second moment is the chain contraction in
:mod:`anderson_chaos.fields`.  A continuum Fourier quadrature of the first-chaos
covariance serves as an independent cross-check; the Malliavin majorant
functional and the Stein-type total-variation bound are assembled on the grid.
"""
from __future__ import annotations

import csv
import json
import math
import warnings
from dataclasses import asdict, dataclass
from pathlib import Path

import numpy as np
from scipy import integrate, optimize, special

from .chaos import chain_pairing_moment, derivative_norms
from .errors import (
    AccuracyError,
    DomainError,
    NumericDegeneracyError,
    PreconditionError,
    UnsupportedConfigurationError,
)
from .fields import AndersonModel, ModelSpec, solution_representation

BOOTSTRAP_RESAMPLES = 2000
BOOTSTRAP_SEED = 20240101


# ---------------------------------------------------------------------------
# sigma_R and the covariance function Phi
# ---------------------------------------------------------------------------


def sigma_R(model: AndersonModel, radius: float) -> float:
    """Standard deviation of F_R from the exact chain contraction."""
    var = model.average_covariance(radius, radius)
    if not var > 1e-24:
        raise NumericDegeneracyError(f"sigma_R vanishes at R={radius}; the noise is degenerate")
    return math.sqrt(var)


def cov_normalized(model: AndersonModel, theta: float, w: float) -> float:
    """Cov(F_theta / sigma_theta, F_w / sigma_w) for 1 < theta <= w."""
    if not 1 < theta <= w:
        raise PreconditionError(f"need 1 < theta <= w, got theta={theta}, w={w}")
    model.check_radius(w)
    if theta == w:
        return 1.0
    c = model.average_covariance(theta, w)
    return c / (sigma_R(model, theta) * sigma_R(model, w))


@dataclass
class CovarianceFunction:
    """Phi(lag) = Cov(u(t0, x), u(t0, x + lag)) on multiples of the cell width."""

    lags: np.ndarray
    values: np.ndarray
    per_order: np.ndarray
    integrable_noise: bool

    @property
    def variance(self) -> float:
        return float(self.values[np.argmin(np.abs(self.lags))])

    @property
    def integrability_class(self) -> str:
        return "L1" if self.integrable_noise else "non-L1"

    def is_nonnegative(self, atol: float = 1e-12) -> bool:
        return bool(np.all(self.values >= -atol * max(1.0, abs(self.variance))))

    def is_symmetric(self, rtol: float = 1e-9) -> bool:
        return bool(np.allclose(self.values, self.values[::-1], rtol=rtol, atol=1e-15))


def covariance_function(model: AndersonModel, max_lag: int | None = None) -> CovarianceFunction:
    """Tabulate Phi around the central cell (d = 1 lag axis)."""
    g = model.grid
    if g.d != 1:
        raise UnsupportedConfigurationError("Phi is tabulated along one axis; use d = 1")
    centre = g.n_x // 2
    per = model.prop.K0 @ model.point_response(centre).T  # (n_space, P)
    span = min(centre, g.n_x - 1 - centre) if max_lag is None else int(max_lag)
    if span > min(centre, g.n_x - 1 - centre):
        raise DomainError("max_lag exceeds the box")
    idx = np.arange(centre - span, centre + span + 1)
    return CovarianceFunction(
        lags=(idx - centre) * g.dx,
        values=per[idx].sum(axis=1),
        per_order=per[idx].T,
        integrable_noise=model.spec.kernel.spatial.integrable,
    )


# ---------------------------------------------------------------------------
# Continuum first-chaos covariance by Fourier quadrature
# ---------------------------------------------------------------------------


def _em1(c, t):
    """int_0^t exp(-c u) du, stable at c -> 0."""
    c = np.asarray(c, float)
    safe = np.where(np.abs(c * t) < 1e-8, 1.0, c)
    return np.where(np.abs(c * t) < 1e-8, t - c * t * t / 2, -np.expm1(-safe * t) / safe)


def _u_moment(c, t):
    """int_0^t u exp(-c u) du."""
    c = np.asarray(c, float)
    x = c * t
    small = np.abs(x) < 1e-3
    safe = np.where(small, 1.0, c)
    big = (1 - np.exp(-safe * t) * (1 + safe * t)) / safe**2
    series = t * t * (0.5 - x / 3 + x * x / 8)
    return np.where(small, series, big)


def _time_factor_numeric(equation, temporal, t, xi, n=24):
    """T(xi) by Gauss-Legendre on the triangle b < a, where gamma0(a - b) is smooth;
    used where the closed forms cancel."""
    x, wts = np.polynomial.legendre.leggauss(n)
    z, wz = 0.5 * (x + 1), 0.5 * wts
    a = t * z  # outer nodes; inner b = a z'
    b = a[:, None] * z[None, :]
    wab = (t * wz)[:, None] * (a[:, None] * wz[None, :])
    xi = np.atleast_1d(xi)[:, None, None]
    if equation == "heat":
        ga, gb = np.exp(-a[None, :, None] * xi**2 / 2), np.exp(-b[None] * xi**2 / 2)
    else:
        safe = np.where(xi == 0, 1.0, xi)
        ga = np.where(xi == 0, a[None, :, None], np.sin(a[None, :, None] * xi) / safe)
        gb = np.where(xi == 0, b[None], np.sin(b[None] * xi) / safe)
    gam = temporal(a[:, None] - b)
    return 2 * np.einsum("kab,ab->k", ga * gb * gam[None], wab)


def time_factor(equation: str, temporal, t: float, xi) -> np.ndarray:
    """T(xi) = int_0^t int_0^t gamma0(a - b) G^(a, xi) G^(b, xi) da db."""
    xi = np.abs(np.asarray(xi, float))
    s = temporal.scale
    if temporal.kind == "constant":
        if equation == "heat":
            return s * _em1(xi**2 / 2, t) ** 2
        safe = np.where(xi == 0, 1.0, xi)
        return s * np.where(xi == 0, t**4 / 4, ((1 - np.cos(safe * t)) / safe**2) ** 2)
    if temporal.kind != "exponential":
        raise UnsupportedConfigurationError("closed-form time factor needs a constant or exponential gamma0")
    lam = temporal.rate
    if equation == "heat":
        a = xi**2 / 2
        c1, c2 = a + lam, 2 * a
        gap = c2 - c1
        near = np.abs(gap) * t < 1e-3
        safe = np.where(near, 1.0, gap)
        direct = 2 * s * (_em1(c1, t) - _em1(c2, t)) / safe
        return np.where(near, 2 * s * _u_moment((c1 + c2) / 2, t), direct)
    out = np.empty_like(xi)
    small = xi * t < 0.5
    if np.any(small):
        out[small] = _time_factor_numeric("wave", temporal, t, xi[small])
    k = xi[~small]
    if k.size:
        q = lam**2 + k**2
        s2 = t / 2 - np.sin(2 * k * t) / (4 * k)
        sc = np.sin(k * t) ** 2 / (2 * k)
        se = (k - np.exp(-lam * t) * (lam * np.sin(k * t) + k * np.cos(k * t))) / q
        out[~small] = 2 * s / (k**2 * q) * (lam * s2 - k * sc + k * se)
    return out


def ball_transform(radius: float, k, d: int = 1) -> np.ndarray:
    """Fourier transform of the indicator of B_R at |xi| = k."""
    k = np.asarray(k, float)
    safe = np.where(k == 0, 1.0, k)
    if d == 1:
        return np.where(k == 0, 2 * radius, 2 * np.sin(radius * safe) / safe)
    if d == 2:
        return np.where(k == 0, math.pi * radius**2, 2 * math.pi * radius * special.j1(radius * safe) / safe)
    raise UnsupportedConfigurationError("ball transform implemented for d <= 2")


def _fourier_integral(spec: ModelSpec, theta, w, panel, k_max, nodes=16):
    sp, d = spec.kernel.spatial, spec.d
    eq = "heat" if spec.equation in ("heat", "pam") else "wave"
    area = 2.0 if d == 1 else 2 * math.pi

    def integrand(k):
        return (
            area * k ** (d - 1) * sp.spectral_density(k)
            * ball_transform(theta, k, d) * ball_transform(w, k, d)
            * time_factor(eq, spec.kernel.temporal, spec.t0, k)
        )

    x, wt = np.polynomial.legendre.leggauss(nodes)
    k1 = 1.0 / w
    # near the origin xi = k1 z^(1/a) removes the |xi|^(alpha - d) singularity
    a = sp.alpha if sp.kind == "riesz" else 1.0
    z = 0.5 * (x + 1)
    k = k1 * z ** (1 / a)
    head = 0.5 * np.sum(wt * integrand(k) * (k1 / a) * z ** (1 / a - 1))
    n_pan = int(math.ceil((k_max - k1) / panel))
    edges = np.linspace(k1, k_max, n_pan + 1)
    mid, half = (edges[1:] + edges[:-1]) / 2, (edges[1:] - edges[:-1]) / 2
    kk = (mid[:, None] + half[:, None] * x[None, :]).ravel()
    body = np.sum((integrand(kk).reshape(n_pan, nodes) * wt[None, :]) * half[:, None])
    return float(head + body)


def fourier_first_chaos_cov(spec: ModelSpec, theta: float, w: float, rtol: float = 1e-3, k_max: float = 80.0):
    """Continuum first-chaos Cov(F_theta, F_w) as a radial frequency integral.

    Panels of width <= 1/(2w) resolve the oscillation of the ball transforms;
    the panel width is halved and the cutoff doubled once, and a relative change
    above ``rtol`` raises :class:`AccuracyError` carrying the trace.
    """
    if spec.d not in (1, 2):
        raise UnsupportedConfigurationError("Fourier route implemented for d <= 2")
    panel = 1.0 / (2 * w)
    trace = []
    coarse = _fourier_integral(spec, theta, w, panel, k_max)
    trace.append({"panel": panel, "k_max": k_max, "value": coarse})
    fine = _fourier_integral(spec, theta, w, panel / 2, 2 * k_max)
    trace.append({"panel": panel / 2, "k_max": 2 * k_max, "value": fine})
    rel = abs(fine - coarse) / max(abs(fine), 1e-300)
    if rel > rtol:
        raise AccuracyError(f"Fourier quadrature not converged (relative change {rel:.2e})", trace)
    return fine, trace


@dataclass
class FourierCheck:
    theta: float
    w: float
    chaos_value: float
    fourier_value: float
    normalized_chaos: float
    normalized_fourier: float

    @property
    def relative_gap(self) -> float:
        return abs(self.fourier_value - self.chaos_value) / abs(self.fourier_value)


def fourier_cross_check(model: AndersonModel, theta: float, w: float) -> FourierCheck:
    """First-chaos covariance from the grid contraction against the Fourier route."""
    chaos1 = float(model.average_covariance(theta, w, orders=True)[0])
    four, _ = fourier_first_chaos_cov(model.spec, theta, w)
    norm = sigma_R(model, theta) * sigma_R(model, w)
    return FourierCheck(theta, w, chaos1, four, chaos1 / norm, four / norm)


# ---------------------------------------------------------------------------
# Wave smoothing bound
# ---------------------------------------------------------------------------


def _arc_in_ball(rho, dist, radius):
    """Angle of the circle |z - y| = rho (|y| = dist) lying inside B_radius."""
    rho = np.asarray(rho, float)
    if dist == 0:
        return np.where(rho < radius, 2 * math.pi, 0.0)
    inside = rho + dist <= radius
    outside = (rho >= radius + dist) | (dist >= radius + rho)
    with np.errstate(divide="ignore", invalid="ignore"):
        cosv = (rho**2 + dist**2 - radius**2) / (2 * rho * dist)
    part = 2 * np.arccos(np.clip(cosv, -1, 1))
    return np.where(inside, 2 * math.pi, np.where(outside, 0.0, part))


def wave_smoothing_bound(radius: float, r: float, y, d: int = 1, tol: float = 1e-9):
    """(1_R * G_r)(y) against r 1{|y| < R + r} for the wave kernel G_r.

    d = 1 is exact.  In d = 2, polar coordinates around y and u = sqrt(r^2 - rho^2)
    turn the integrable edge singularity of G_r into the bounded integrand
    Theta(sqrt(r^2 - u^2)) / (2 pi); the quadrature is split at the kinks of Theta.
    """
    if not r > 0 or not radius > 0:
        raise DomainError("need R > 0 and r > 0")
    y = np.atleast_1d(np.asarray(y, float))
    dist = float(np.sqrt(np.sum(y * y)))
    if d == 1:
        lo, hi = max(-radius, dist - r), min(radius, dist + r)
        lhs = 0.5 * max(hi - lo, 0.0)
    elif d == 2:
        kinks_rho = [abs(radius - dist), radius + dist]
        kinks = sorted({0.0, r} | {math.sqrt(r * r - q * q) for q in kinks_rho if q < r})
        lhs = 0.0
        x, wt = np.polynomial.legendre.leggauss(32)
        for a, b in zip(kinks[:-1], kinks[1:]):
            u = 0.5 * (b - a) * x + 0.5 * (a + b)
            rho = np.sqrt(np.maximum(r * r - u * u, 0.0))
            lhs += 0.5 * (b - a) * np.sum(wt * _arc_in_ball(rho, dist, radius))
        lhs /= 2 * math.pi
    else:
        raise UnsupportedConfigurationError("the wave kernel is a nonnegative function only for d <= 2")
    rhs = r if dist < radius + r else 0.0
    return float(lhs), float(rhs), bool(lhs <= rhs + tol * max(r, 1.0))


# ---------------------------------------------------------------------------
# Malliavin derivative majorants and the A-functional
# ---------------------------------------------------------------------------


@dataclass
class DUConstants:
    """Constants c1, c2 in |D u| <= c1 G and |D^2 u| <= c2 (G G + G G),
    calibrated in L^2 at the horizon ``t0``."""

    c1: float
    c2: float
    t0: float
    cells: tuple = ()

    def check_horizon(self, t: float) -> bool:
        """False (with a warning) when used beyond the calibrated horizon."""
        if t > self.t0 + 1e-12:
            warnings.warn(f"DU constants calibrated at t0={self.t0} are extrapolated to t={t}")
            return False
        return True


def fit_du_constants(model: AndersonModel, n_pins: int = 3, threshold: float = 1e-3) -> DUConstants:
    """Fit the derivative majorant constants on the grid at the central point."""
    g = model.grid
    j = g.n_space // 2 if g.d == 1 else int(np.ravel_multi_index((g.n_x // 2,) * g.d, (g.n_x,) * g.d))
    rep = solution_representation(model, g.space_centers()[j])
    k0 = model.prop.K0[j]
    d1 = derivative_norms(rep, model.noise, order=1)
    mask = k0 > threshold * k0.max()
    c1 = float(np.max(np.sqrt(np.maximum(d1[mask], 0)) / k0[mask]))

    K, cov = model.prop.K, model.cov
    pins = np.argsort(k0)[::-1][:n_pins]
    c2 = 0.0
    for c in pins:
        norm2 = np.zeros(len(k0))
        for kern in rep.kernels:
            if kern.order >= 2:
                norm2 += chain_pairing_moment(kern, kern, cov, frozen=2, first_cell=int(c))
        maj = k0[c] * K[c] + k0 * K[:, c]
        sel = maj > threshold * maj.max()
        if np.any(sel):
            c2 = max(c2, float(np.max(np.sqrt(np.maximum(norm2[sel], 0)) / maj[sel])))
    return DUConstants(c1, c2, model.spec.t0, tuple(int(c) for c in pins))


def _second_majorant(model: AndersonModel, head: np.ndarray) -> np.ndarray:
    hk = head[:, None] * model.prop.K
    return hk + hk.T


def a_functional(model: AndersonModel, r1: float, r2: float, constants: DUConstants | None = None,
                 normalized: bool = True, heads=None) -> float:
    """Majorant of the second-order Poincare functional A(F_r1, F_r2).

    The D^2 norms of F_r1 and the D norms of F_r2 are replaced by their Green
    function majorants, which turns the six-fold integral into q^T C q with
    q = H_r1 C h_r2.  ``heads`` overrides the two integrated propagators (used to
    enlarge the regions); ``normalized`` divides by sigma_r1^2 sigma_r2^2.
    """
    c = constants or DUConstants(1.0, 1.0, model.spec.t0)
    c.check_horizon(model.spec.t0)
    h1, h2 = heads if heads is not None else (model.average_head(r1), model.average_head(r2))
    cov = model.cov
    q = _second_majorant(model, h1) @ (cov @ h2)
    val = c.c1**2 * c.c2**2 * float(q @ cov @ q)
    if normalized:
        val /= sigma_R(model, r1) ** 2 * sigma_R(model, r2) ** 2
    return val


def a_functional_enlarged(model: AndersonModel, r1: float, r2: float, constants=None) -> tuple[float, float]:
    """(unnormalized value at (r1, r2), value with both regions enlarged to max(r1, r2))."""
    big = max(r1, r2)
    base = a_functional(model, r1, r2, constants, normalized=False)
    hb = model.average_head(big)
    return base, a_functional(model, big, big, constants, normalized=False, heads=(hb, hb))


def stein_tv_bound(model: AndersonModel, theta: float, w: float, constants=None) -> float:
    """Upper bound on d_TV((F^_theta - F^_w)/sqrt 2, N(0,1)), up to absolute constants."""
    if not 1 < theta < w:
        raise PreconditionError(f"need 1 < theta < w, got theta={theta}, w={w}")
    rho = cov_normalized(model, theta, w)
    pairs = [(theta, theta), (theta, w), (w, theta), (w, w)]
    var = sum(a_functional(model, a, b, constants) for a, b in pairs)
    return 2 * abs(rho) + math.sqrt(var)


def fit_two_term(theta, w, values):
    """Fit values ~ A theta^-b1 + B (theta/w)^b2; returns (A, b1, B, b2)."""
    theta, w, v = (np.asarray(a, float) for a in (theta, w, values))

    def resid(p):
        la, b1, lb, b2 = p
        return np.log(np.exp(la) * theta**-b1 + np.exp(lb) * (theta / w) ** b2) - np.log(v)

    sol = optimize.least_squares(resid, x0=[0.0, 0.5, 0.0, 0.5], bounds=([-20, 0, -20, 0], [20, 5, 20, 5]))
    la, b1, lb, b2 = sol.x
    return float(np.exp(la)), float(b1), float(np.exp(lb)), float(b2)


# ---------------------------------------------------------------------------
# Riesz potential of the unit ball
# ---------------------------------------------------------------------------


def riesz_ball_potential(z, beta: float) -> np.ndarray:
    """int_{|x|<1} |z - x|^-beta dx in d = 1 (closed form), beta in (0, 1)."""
    if not 0 < beta < 1:
        raise DomainError("beta must lie in (0, 1) for d = 1")
    z = np.abs(np.asarray(z, float))
    e = 1 - beta
    inside = ((1 + z) ** e + np.abs(1 - z) ** e) / e
    outside = ((z + 1) ** e - np.abs(z - 1) ** e) / e
    return np.where(z <= 1, inside, outside)


def riesz_potential_sup(beta: float, z_max: float = 3.0):
    """(sup value, argmax) of the ball potential by direct quadrature over z."""

    def pot(z):
        f = lambda x: abs(z - x) ** -beta  # noqa: E731
        pts = [z] if -1 < z < 1 else None
        return integrate.quad(f, -1, 1, points=pts, limit=200)[0]

    grid = np.linspace(-z_max, z_max, 121)
    vals = np.array([pot(z) for z in grid])
    k = int(np.argmax(vals))
    res = optimize.minimize_scalar(lambda z: -pot(z), bounds=(grid[max(k - 1, 0)], grid[min(k + 1, 120)]),
                                   method="bounded", options={"xatol": 1e-8})
    return float(-res.fun), float(res.x)


# ---------------------------------------------------------------------------
# Exponent fits
# ---------------------------------------------------------------------------


@dataclass
class DecayFit:
    """Log-log least-squares exponent with a residual-bootstrap confidence interval.

    ``exponent = sign * slope`` so that decays can be reported as positive numbers.
    ``mode='two-sided'`` passes when the whole CI lies in target +- tol;
    ``mode='lower'`` passes when the CI lower edge is >= target - tol.
    """

    abscissas: np.ndarray
    values: np.ndarray
    exponent: float
    ci: tuple
    target: float
    tol: float
    mode: str
    passed: bool
    intercept: float = 0.0
    warning: str = ""
    label: str = ""

    def to_dict(self) -> dict:
        out = asdict(self)
        out["abscissas"] = [float(a) for a in self.abscissas]
        out["values"] = [float(v) for v in self.values]
        out["ci"] = [float(c) for c in self.ci]
        return out

    def to_json(self, path) -> Path:
        path = Path(path)
        path.write_text(json.dumps(self.to_dict(), indent=2))
        return path

    def to_csv(self, path) -> Path:
        path = Path(path)
        with path.open("w", newline="") as fh:
            wr = csv.writer(fh)
            wr.writerow(["x", "value", "exponent", "ci_low", "ci_high", "target", "passed"])
            for x, v in zip(self.abscissas, self.values):
                wr.writerow([repr(float(x)), repr(float(v)), self.exponent, self.ci[0], self.ci[1],
                             self.target, int(self.passed)])
        return path


def fit_exponent(x, y, target: float = float("nan"), tol: float = 0.1, mode: str = "two-sided",
                 sign: float = 1.0, level: float = 0.95, resamples: int = BOOTSTRAP_RESAMPLES,
                 seed: int = BOOTSTRAP_SEED, label: str = "") -> DecayFit:
    x, y = np.asarray(x, float), np.asarray(y, float)
    if len(x) != len(y) or len(x) < 2:
        raise DomainError("need at least two (x, y) pairs")
    if np.any(x <= 0) or np.any(y <= 0):
        raise DomainError("log-log fit needs positive abscissas and values")
    if mode not in ("two-sided", "lower"):
        raise DomainError(f"unknown mode {mode!r}")
    lx, ly = np.log(x), np.log(y)
    slope, icpt = np.polyfit(lx, ly, 1)
    resid = ly - (slope * lx + icpt)
    rng = np.random.default_rng(seed)
    draws = rng.integers(0, len(x), size=(resamples, len(x)))
    boot_y = slope * lx + icpt + resid[draws]
    xc = lx - lx.mean()
    boot = (boot_y - boot_y.mean(axis=1, keepdims=True)) @ xc / (xc @ xc)
    lo, hi = np.quantile(sign * boot, [(1 - level) / 2, (1 + level) / 2])
    exponent = float(sign * slope)
    lo, hi = min(lo, exponent), max(hi, exponent)
    notes = []
    if len(x) < 4:
        notes.append("fewer than 4 points")
    if x.max() / x.min() < 10 - 1e-9:
        notes.append("abscissas span less than one decade")
    if mode == "two-sided":
        passed = bool(target - tol <= lo and hi <= target + tol)
    else:
        passed = bool(lo >= target - tol)
    return DecayFit(x, y, exponent, (float(lo), float(hi)), target, tol, mode, passed,
                    float(icpt), "; ".join(notes), label)


def variance_fit(model: AndersonModel, radii, target: float, tol: float = 0.1) -> DecayFit:
    """Slope of log sigma_R against log R."""
    sig = np.array([sigma_R(model, r) for r in radii])
    return fit_exponent(radii, sig, target, tol, mode="two-sided", label="sigma_R")


def covariance_decay_fit(model: AndersonModel, pairs, target: float, tol: float = 0.1) -> DecayFit:
    """Exponent beta in Cov(F^_theta, F^_w) ~ (theta/w)^beta on (theta, w) pairs."""
    ratio = np.array([t / w for t, w in pairs])
    vals = np.array([cov_normalized(model, t, w) for t, w in pairs])
    return fit_exponent(ratio, vals, target, tol, mode="lower", label="cov(theta,w)")


def a_functional_fit(model: AndersonModel, radii, target: float, tol: float, constants=None) -> DecayFit:
    """Decay exponent of A(F^_R, F^_R) in R."""
    vals = np.array([a_functional(model, r, r, constants) for r in radii])
    return fit_exponent(radii, vals, target, tol, mode="lower", sign=-1.0, label="A(R,R)")
