"""Distances to the standard normal, logarithmic averages and the bound checker.

Sample-based quantities (KS, Wasserstein-1, logarithmic empirical measures and
the Ibragimov-Lifshits statistic) live next to a deterministic evaluator of the
majorizing integrals that certify the almost sure CLT from exponent inputs.
"""
from __future__ import annotations

import math
from dataclasses import dataclass, field

import numpy as np
from scipy import integrate, stats

from .covariance import DecayFit, fit_exponent
from .errors import DomainError, PreconditionError, ResolutionError
from .fields import AverageSeries, sample_paths

KS_FLOOR_99 = 1.63  # 99% Kolmogorov quantile times sqrt(N)
MAX_LOG_RATIO = 1.2
S_GRID = np.round(np.arange(-3.0, 3.0 + 1e-9, 0.25), 10)
T_GRID = (4.0, 8.0, 16.0, 32.0, 64.0)


# ---------------------------------------------------------------------------
# Empirical measures and distances
# ---------------------------------------------------------------------------


@dataclass
class EmpiricalMeasure:
    """Finite measure sum_k weights[k] delta_{values[k]} with sorted values."""

    values: np.ndarray
    weights: np.ndarray

    def __post_init__(self):
        v = np.asarray(self.values, float).ravel()
        w = np.asarray(self.weights, float).ravel()
        if v.size == 0:
            raise DomainError("empty sample")
        if v.shape != w.shape:
            raise DomainError("values and weights differ in length")
        if not np.all(np.isfinite(v)):
            raise DomainError("non-finite sample values")
        if np.any(w < 0) or not abs(w.sum() - 1) < 1e-12:
            raise DomainError("weights must be nonnegative and sum to 1")
        order = np.argsort(v, kind="stable")
        self.values, self.weights = v[order], w[order]

    @classmethod
    def uniform(cls, values) -> "EmpiricalMeasure":
        v = np.asarray(values, float).ravel()
        if v.size == 0:
            raise DomainError("empty sample")
        return cls(v, np.full(v.size, 1.0 / v.size))

    def __len__(self):
        return len(self.values)

    def expect(self, fn) -> float:
        return float(np.sum(self.weights * fn(self.values)))

    def cdf_steps(self):
        """Distinct atoms and the CDF just after each of them."""
        atoms, inv = np.unique(self.values, return_inverse=True)
        mass = np.bincount(inv, weights=self.weights)
        return atoms, np.minimum(np.cumsum(mass), 1.0)


def _as_measure(sample) -> EmpiricalMeasure:
    return sample if isinstance(sample, EmpiricalMeasure) else EmpiricalMeasure.uniform(sample)


def ks_distance(sample, min_points: int = 30) -> float:
    """sup_x |F_emp(x) - Phi(x)|, checked on both sides of every atom."""
    m = _as_measure(sample)
    if len(m) < min_points:
        raise PreconditionError(f"KS distance needs at least {min_points} points, got {len(m)}")
    atoms, after = m.cdf_steps()
    before = np.concatenate([[0.0], after[:-1]])
    phi = stats.norm.cdf(atoms)
    return float(max(np.max(np.abs(after - phi)), np.max(np.abs(before - phi))))


def _phi_antiderivative(x):
    """x Phi(x) + phi(x), an antiderivative of Phi; vanishes at -inf."""
    return x * stats.norm.cdf(x) + stats.norm.pdf(x)


def wasserstein1(sample) -> float:
    """W1 to N(0,1) as int |F_emp - Phi| dx, integrated exactly piece by piece.

    Between consecutive atoms the empirical CDF is a constant c, and the
    integrand changes sign only at Phi^-1(c), so each piece has a closed form.
    """
    m = _as_measure(sample)
    atoms, levels = m.cdf_steps()
    prim = _phi_antiderivative
    total = prim(atoms[0]) + prim(-atoms[-1])  # the two tails
    if len(atoms) > 1:
        a, b, c = atoms[:-1], atoms[1:], levels[:-1]
        with np.errstate(divide="ignore"):
            x = np.clip(stats.norm.ppf(c), a, b)
        below = c * (x - a) - (prim(x) - prim(a))
        above = (prim(b) - prim(x)) - c * (b - x)
        total += float(np.sum(below + above))
    return float(total)


def cdf_gap_quadrature(sample, lo: float = -12.0, hi: float = 12.0, n: int = 400_001) -> float:
    """Reference value of int |F_emp - Phi| by brute-force trapezoid (testing aid)."""
    m = _as_measure(sample)
    x = np.linspace(min(lo, m.values[0] - 1), max(hi, m.values[-1] + 1), n)
    idx = np.searchsorted(m.values, x, side="right")
    cum = np.concatenate([[0.0], np.cumsum(m.weights)])
    return float(integrate.trapezoid(np.abs(cum[idx] - stats.norm.cdf(x)), x))


# ---------------------------------------------------------------------------
# CLT experiment
# ---------------------------------------------------------------------------


@dataclass
class CLTResult:
    radii: np.ndarray
    ks: np.ndarray
    w1: np.ndarray
    w1_se: np.ndarray
    replicas: int
    seed: int
    noise_floor: float
    fit: DecayFit | None
    target_exponent: float
    truncation: int
    values: np.ndarray = field(repr=False, default=None)

    @property
    def ks_strictly_decreasing(self) -> bool:
        return bool(np.all(np.diff(self.ks) < 0))

    def to_dict(self) -> dict:
        return {
            "radii": self.radii.tolist(), "ks": self.ks.tolist(), "w1": self.w1.tolist(),
            "w1_se": self.w1_se.tolist(), "replicas": self.replicas, "seed": self.seed,
            "noise_floor": self.noise_floor, "truncation": self.truncation,
            "target_exponent": self.target_exponent,
            "fit": None if self.fit is None else self.fit.to_dict(),
        }


def clt_distances(values: np.ndarray, seed: int = 0, n_boot: int = 200):
    """KS, W1 and a bootstrap standard error of W1 for one radius."""
    ks, w1 = ks_distance(values), wasserstein1(values)
    rng = np.random.default_rng(seed)
    boot = [wasserstein1(values[rng.integers(0, len(values), len(values))]) for _ in range(n_boot)]
    return ks, w1, float(np.std(boot, ddof=1))


def clt_experiment(model, radii, replicas: int, seed: int = 0, target_exponent: float = 0.5,
                   n_boot: int = 200) -> CLTResult:
    """Distances of F^_R to N(0,1) across radii; every radius shares the noise draws."""
    if replicas < 1000:
        raise PreconditionError("the CLT experiment needs at least 10^3 replicas")
    radii = np.asarray(radii, float)
    series = sample_paths(model, radii, seed, replicas)
    rows = [clt_distances(series.values[:, k], seed=seed + k, n_boot=n_boot) for k in range(len(radii))]
    ks, w1, se = (np.array(c) for c in zip(*rows))
    fit = None
    if len(radii) >= 2 and np.all(ks > 0):
        fit = fit_exponent(radii, ks, target_exponent, 0.1, mode="lower", sign=-1.0, label="KS(R)")
    return CLTResult(radii, ks, w1, se, replicas, seed, KS_FLOOR_99 / math.sqrt(replicas), fit,
                     target_exponent, model.spec.truncation, series.values)


# ---------------------------------------------------------------------------
# Logarithmic averages
# ---------------------------------------------------------------------------


def _bl_dictionary():
    fns, names, gauss = [], [], []
    x, w = np.polynomial.hermite_e.hermegauss(80)
    w = w / w.sum()
    for k in (1, 2):
        for a in (-1, 0, 1):
            f = (lambda k, a: lambda v: np.tanh(k * (v - a)))(k, a)
            fns.append(f)
            names.append(f"tanh({k}(x-{a}))")
    for fr in (1, 2):
        fns.append((lambda fr: lambda v: np.sin(fr * v))(fr))
        names.append(f"sin({fr}x)")
        fns.append((lambda fr: lambda v: np.cos(fr * v))(fr))
        names.append(f"cos({fr}x)")
    gauss = [float(np.sum(w * f(x))) for f in fns]
    return fns, names, np.array(gauss)


TEST_FUNCTIONS, TEST_FUNCTION_NAMES, TEST_FUNCTION_GAUSS = _bl_dictionary()


def log_weights(theta) -> np.ndarray:
    """Trapezoid weights for (1/log T) int_1^T . dtheta/theta on the grid ``theta``."""
    u = np.log(np.asarray(theta, float))
    du = np.diff(u)
    w = np.zeros(len(u))
    w[:-1] += du / 2
    w[1:] += du / 2
    return w / w.sum()


@dataclass
class LogAverage:
    T: float
    measure: EmpiricalMeasure
    gaps: np.ndarray
    sup_gap: float
    ks: float


def log_average_measure(series, T: float, path: int = 0, max_ratio: float = MAX_LOG_RATIO) -> LogAverage:
    """nu_T for one path: the logarithmic average of delta_{F^_theta} over [1, T]."""
    radii = np.asarray(series.radii, float)
    values = np.asarray(series.values if np.ndim(series.values) == 1 else series.values[path], float)
    sel = radii <= T * (1 + 1e-12)
    theta, vals = radii[sel], values[sel]
    if len(theta) < 2 or theta[0] > 1 + 1e-9 or abs(theta[-1] - T) > 1e-9 * T:
        raise ResolutionError(f"radius grid must cover [1, {T}] with both endpoints present")
    if np.max(theta[1:] / theta[:-1]) > max_ratio + 1e-12:
        raise ResolutionError(f"radius grid ratio exceeds {max_ratio}")
    m = EmpiricalMeasure(vals, log_weights(theta))
    gaps = np.array([abs(m.expect(f) - g) for f, g in zip(TEST_FUNCTIONS, TEST_FUNCTION_GAUSS)])
    return LogAverage(T, m, gaps, float(gaps.max()), ks_distance(m, min_points=2))


# ---------------------------------------------------------------------------
# Ibragimov-Lifshits statistic
# ---------------------------------------------------------------------------


@dataclass
class ILStatistic:
    """Ensemble statistics of K_t(s) on a report grid of t plus a dense grid
    (every path radius in [2, max t]) used for the criterion integral."""

    s_grid: np.ndarray
    t_grid: np.ndarray
    values: np.ndarray  # complex, (paths, t, s)
    mean_sq: np.ndarray  # (t, s)
    se_sq: np.ndarray  # (t, s)
    t_dense: np.ndarray
    sup_dense: np.ndarray

    @property
    def sup_mean(self) -> np.ndarray:
        return self.mean_sq.max(axis=1)

    @property
    def sup_se(self) -> np.ndarray:
        return self.se_sq[np.arange(len(self.t_grid)), self.mean_sq.argmax(axis=1)]

    def nonincreasing(self, n_se: float = 2.0) -> bool:
        m, se = self.sup_mean, self.sup_se
        return bool(np.all(m[1:] <= m[:-1] + n_se * np.sqrt(se[1:] ** 2 + se[:-1] ** 2)))

    def partial_integral(self, t_max: float) -> float:
        """int_2^t_max sup_s E|K_t(s)|^2 / (t log t) dt as a trapezoid in log t."""
        sel = self.t_dense <= t_max * (1 + 1e-12)
        t = self.t_dense[sel]
        if len(t) < 2 or abs(t[-1] - t_max) > 1e-9 * t_max:
            raise DomainError(f"t_max={t_max} is not covered by the dense grid")
        u = np.log(t)
        return float(integrate.trapezoid(self.sup_dense[sel] / u, u))

    def even_gap(self) -> np.ndarray:
        """|E|K(s)|^2 - E|K(-s)|^2| / combined SE, per (t, s)."""
        rev = self.mean_sq[:, ::-1]
        se = np.sqrt(self.se_sq**2 + self.se_sq[:, ::-1] ** 2)
        return np.abs(self.mean_sq - rev) / np.where(se > 0, se, np.inf)


def il_statistic(paths, t_grid=T_GRID, s_grid=S_GRID, min_paths: int = 50) -> ILStatistic:
    """K_t(s) = (1/log t) int_1^t (exp(i s F^_theta) - exp(-s^2/2)) dtheta/theta per path.

    The integral is a cumulative trapezoid in log theta, so K is available at every
    radius of the path grid at once.
    """
    if isinstance(paths, AverageSeries):
        radii, vals = np.asarray(paths.radii, float), np.asarray(paths.values, float)
    else:
        radii = np.asarray(paths[0].radii, float)
        vals = np.concatenate([np.atleast_2d(p.values) for p in paths])
    if len(vals) < min_paths:
        raise PreconditionError(f"need at least {min_paths} paths, got {len(vals)}")
    t_grid, s_grid = np.asarray(t_grid, float), np.asarray(s_grid, float)
    if abs(radii[0] - 1) > 1e-9 or t_grid.max() > radii[-1] * (1 + 1e-12) or t_grid.min() < 2:
        raise DomainError("paths must start at theta = 1 and t must lie in [2, max radius]")
    u = np.log(radii)
    phase = np.exp(1j * vals[:, :, None] * s_grid[None, None, :]) - np.exp(-(s_grid**2) / 2)
    seg = 0.5 * (phase[:, 1:] + phase[:, :-1]) * np.diff(u)[None, :, None]
    cum = np.concatenate([np.zeros_like(phase[:, :1]), np.cumsum(seg, axis=1)], axis=1)
    with np.errstate(invalid="ignore", divide="ignore"):
        K = cum / np.where(u > 0, u, np.nan)[None, :, None]
    pos = np.searchsorted(radii, t_grid * (1 - 1e-12))
    if np.any(pos >= len(radii)) or np.any(np.abs(radii[np.minimum(pos, len(radii) - 1)] - t_grid) > 1e-9 * t_grid):
        raise DomainError("every t must be a radius of the path grid")
    sq = np.abs(K) ** 2
    mean, se = sq.mean(axis=0), sq.std(axis=0, ddof=1) / math.sqrt(len(vals))
    dense = (radii >= 2 - 1e-12) & (radii <= t_grid.max() * (1 + 1e-12))
    return ILStatistic(s_grid, t_grid, K[:, pos], mean[pos], se[pos], radii[dense], mean[dense].max(axis=1))


# ---------------------------------------------------------------------------
# Bound checker for the almost sure CLT
# ---------------------------------------------------------------------------


@dataclass
class BoundCheck:
    A1: float
    A2: float
    tail_A1: float
    tail_A2: float
    finite: bool
    horizon_log: float
    inner_A2_limit: float


def _a2_integrand(u, b1):
    # (1/u^2) int_1^{e^u} theta^{-1-b1} dtheta, in u = log t
    return -np.expm1(-b1 * u) / (b1 * u * u)


def _g(b, u):
    # int_0^u int_0^v exp(-b a) da dv
    return u / b + np.expm1(-b * u) / b**2


def _a1_integrand(u, b2, b3):
    return (_g(b2, u) + _g(b3, u)) / u**3


def asclt_bound_check(beta1: float, beta2: float, beta3: float, C1: float = 1.0, C2: float = 1.0,
                      T_s: float | None = None, horizon_log: float = 1000.0, rtol: float = 1e-2) -> BoundCheck:
    """Majorizing integrals behind the ASCLT criterion from d_TV decay exponents.

    In u = log t the two integrals become

        A2 = 8 C1 int_{log 2}^inf (1 - e^{-b1 u}) / (b1 u^2) du
        A1 = c C2 int_{log 2}^inf (g(b2, u) + g(b3, u)) / u^3 du

    with g(b, u) = u/b - (1 - e^{-bu})/b^2.  Both are integrated up to the horizon
    u_h = ``horizon_log`` and closed by the analytic tail majorants 8 C1/(b1 u_h)
    and c C2 (1/b2 + 1/b3)/u_h.  The verdict ``finite`` is certified only when each
    tail is at most ``rtol`` of the computed head; slowly convergent integrals
    (exponents near 0) are therefore reported as divergent at desk precision.
    ``T_s`` switches the constants from the total-variation form (8 and 4) to the
    Wasserstein form (4 T_s and 2 sqrt 2 T_s).
    """
    for name, b in (("beta1", beta1), ("beta2", beta2), ("beta3", beta3)):
        if not b > 0:
            raise PreconditionError(f"{name} must be > 0, got {b}")
    k2, k1 = (8.0, 4.0) if T_s is None else (4.0 * T_s, 2 * math.sqrt(2) * T_s)
    lo, uh = math.log(2.0), float(horizon_log)
    brk = sorted({lo, uh} | {min(max(x, lo), uh) for x in (1 / beta1, 1 / beta2, 1 / beta3, 10.0, 100.0)})
    head2 = head1 = 0.0
    for a, b in zip(brk[:-1], brk[1:]):
        if b > a:
            head2 += integrate.quad(_a2_integrand, a, b, args=(beta1,), limit=200, epsabs=0, epsrel=1e-10)[0]
            head1 += integrate.quad(_a1_integrand, a, b, args=(beta2, beta3), limit=200, epsabs=0, epsrel=1e-10)[0]
    tail2 = 1.0 / (beta1 * uh)
    tail1 = (1 / beta2 + 1 / beta3) / uh
    finite = tail2 <= rtol * head2 and tail1 <= rtol * head1
    inner = integrate.quad(lambda th: th ** (-1 - beta1), 1, np.inf, epsabs=1e-13, epsrel=1e-12)[0]
    return BoundCheck(k1 * C2 * (head1 + tail1), k2 * C1 * (head2 + tail2), k1 * C2 * tail1, k2 * C1 * tail2,
                      bool(finite), uh, float(inner))
