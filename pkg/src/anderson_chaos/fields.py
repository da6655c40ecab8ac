"""Truncated chaos solutions of the heat/wave Anderson models and their spatial averages.

The mild equation u = 1 + int G u dW (Skorohod sense) is discretized on the cell
grid of a ``NoiseModel``.  The propagator K[c, c'] is the Green function averaged
over the source cell c' and evaluated at the left edge of the target time cell
(at the cell center in space); K0 does the same for targets at the final time t0.
The p-th chaos of u(t0, x_j) is then the chain K0[j, c_p] K[c_p, c_{p-1}] ...,
integrated against Wick products of the noise masses.
"""
from __future__ import annotations

import csv
import itertools
import math
from dataclasses import dataclass, field
from functools import cached_property
from pathlib import Path

import numpy as np

from .chaos import (
    ChainKernel,
    ChaosRepresentation,
    chain_cross_vector,
    chain_pairing_moment,
    multiple_integral_sample,
)
from .errors import (
    DomainError,
    NumericDegeneracyError,
    ResourceError,
    UnsupportedConfigurationError,
)
from .kernels import (
    HEAT,
    WAVE,
    CorrelationKernel,
    GreenKernel,
    dalang_check,
    heat_interval_mass,
    wave1_interval_mass,
    wave2_rect_mass,
)
from .noise import GridSpec, NoiseModel, build_noise_model, sample_realizations

EQUATION_ALIASES = {"heat": HEAT, "pam": HEAT, "wave": WAVE, "ham": WAVE}
MEMORY_BUDGET = 2.0e9  # bytes for dense N x N work arrays


@dataclass(frozen=True)
class ModelSpec:
    equation: str
    kernel: CorrelationKernel
    grid: GridSpec
    truncation: int = 3
    anchor_origin: bool = False
    time_nodes: int = 8

    def __post_init__(self):
        eq = EQUATION_ALIASES.get(str(self.equation).lower())
        if eq is None:
            raise UnsupportedConfigurationError(f"unknown equation {self.equation!r}")
        object.__setattr__(self, "equation", eq)
        if eq == WAVE and self.grid.d > 2:
            raise UnsupportedConfigurationError("the wave model is supported only for d = 1, 2")
        if self.kernel.dim != self.grid.d:
            raise DomainError(f"kernel dimension {self.kernel.dim} != grid dimension {self.grid.d}")
        if not 0 <= self.truncation <= 4:
            raise UnsupportedConfigurationError("truncation order must be in 0..4")
        problems = self.kernel.violations()
        if problems:
            raise DomainError("; ".join(problems))
        if not dalang_check(self.kernel).satisfied:
            raise DomainError("spatial spectral measure violates Dalang's condition")

    @property
    def d(self) -> int:
        return self.grid.d

    @property
    def t0(self) -> float:
        return self.grid.t0

    @property
    def green(self) -> GreenKernel:
        return GreenKernel(self.equation, self.d)


def default_half_width(equation: str, r_max: float, t0: float) -> float:
    """Box padding: the wave cone reaches exactly t0; heat adds a 3 sqrt(t0) tail."""
    eq = EQUATION_ALIASES[equation]
    return r_max + t0 + (3 * math.sqrt(t0) if eq == HEAT else 0.0)


# ---------------------------------------------------------------------------
# Propagator
# ---------------------------------------------------------------------------


def _gl(n, a, b):
    x, w = np.polynomial.legendre.leggauss(n)
    return 0.5 * (b - a) * (x + 1) + a, 0.5 * (b - a) * w


def _mass(equation, d, tau, lo, hi):
    """Mass of G_tau on the box [lo, hi] (per-axis bounds)."""
    if equation == HEAT:
        return float(np.prod([heat_interval_mass(tau, lo[k], hi[k]) for k in range(d)]))
    if d == 1:
        return float(wave1_interval_mass(tau, lo[0], hi[0]))
    return wave2_rect_mass(tau, lo, hi)


def _time_average(equation, d, a, b, lo, hi, nodes):
    """(1/(b-a)) int_a^b mass(tau) dtau, split where the wave front crosses a
    box edge or corner so every piece is smooth."""
    cuts = [a, b]
    if equation == WAVE:
        lo, hi = np.asarray(lo, float), np.asarray(hi, float)
        near = np.where((lo <= 0) & (hi >= 0), 0.0, np.minimum(np.abs(lo), np.abs(hi)))
        far = np.maximum(np.abs(lo), np.abs(hi))
        if d == 1:
            marks = [near[0], far[0]]
        else:
            marks = [np.hypot(*c) for c in itertools.product(*zip(near, far))]
            marks += list(near) + list(far)
        cuts += [m for m in marks if a < m < b]
    cuts = np.unique(cuts)
    total = 0.0
    for lo_t, hi_t in zip(cuts[:-1], cuts[1:]):
        ts, ws = _gl(nodes, lo_t, hi_t)
        total += sum(w * _mass(equation, d, t, lo, hi) for t, w in zip(ts, ws))
    return total / (b - a)


def lag_table(spec: ModelSpec) -> np.ndarray:
    """k[m-1, |D_1|, ..., |D_d|]: cell average of G over lags tau in ((m-1)dt, m dt]
    and over the source cell at integer offset D from the target center."""
    g = spec.grid
    h, dt, d = g.dx, g.dt, g.d
    table = np.zeros((g.n_t,) + (g.n_x,) * d)
    for off in itertools.product(range(g.n_x), repeat=d):
        if d == 2 and off[0] > off[1]:
            continue
        lo = np.array(off, float) * h - h / 2
        hi = lo + h
        dist = np.linalg.norm(np.maximum(lo, 0.0))
        for m in range(1, g.n_t + 1):
            if spec.equation == WAVE and dist >= m * dt:
                continue
            val = _time_average(spec.equation, d, (m - 1) * dt, m * dt, lo, hi, spec.time_nodes)
            table[(m - 1,) + off] = val / h**d
            if d == 2:
                table[(m - 1, off[1], off[0])] = table[(m - 1,) + off]
    return table


def origin_tail(spec: ModelSpec) -> np.ndarray:
    """Cell averages of G_s(z) over every cell, the extra factor of ``anchor_origin``."""
    g = spec.grid
    h, dt, d = g.dx, g.dt, g.d
    edges = -g.x_max + np.arange(g.n_x + 1) * h
    out = np.zeros((g.n_t, g.n_space))
    for i in range(g.n_t):
        for j, idx in enumerate(g.space_offsets()):
            lo, hi = edges[idx], edges[idx + 1]
            out[i, j] = _time_average(spec.equation, d, i * dt, (i + 1) * dt, lo, hi, spec.time_nodes) / h**d
    return out.ravel()


@dataclass
class Propagator:
    """K (N x N, intermediate targets) and K0 (n_space x N, final targets)."""

    table: np.ndarray
    K: np.ndarray
    K0: np.ndarray
    tail: np.ndarray | None = None


def build_propagator(spec: ModelSpec) -> Propagator:
    g = spec.grid
    nbytes = 8.0 * g.n_cells**2 * 6
    if nbytes > MEMORY_BUDGET:
        raise ResourceError(
            f"{g.n_cells} cells need ~{nbytes / 1e9:.1f} GB of propagator work arrays; "
            "reduce n_x or n_t"
        )
    table = lag_table(spec)
    idx = g.space_offsets()
    diff = np.abs(idx[:, None, :] - idx[None, :, :])
    blocks = [table[(m,) + tuple(diff[..., k] for k in range(g.d))] for m in range(g.n_t)]
    ns, nt = g.n_space, g.n_t
    K = np.zeros((g.n_cells, g.n_cells))
    for i in range(nt):
        for ip in range(i):
            K[i * ns:(i + 1) * ns, ip * ns:(ip + 1) * ns] = blocks[i - ip - 1]
    K0 = np.concatenate([blocks[nt - ip - 1] for ip in range(nt)], axis=1)
    tail = origin_tail(spec) if spec.anchor_origin else None
    return Propagator(table, K, K0, tail)


# ---------------------------------------------------------------------------
# Ball weights
# ---------------------------------------------------------------------------


def _disk_rect_area(radius, lo, hi, nodes=48):
    """Area of {|x| < radius} intersected with the rectangle [lo, hi]."""
    a, b = max(lo[0], -radius), min(hi[0], radius)
    if a >= b:
        return 0.0
    cuts = [a, b]
    for c in (lo[1], hi[1]):
        if abs(c) < radius:
            x = math.sqrt(radius * radius - c * c)
            cuts += [x, -x]
    cuts = np.unique([c for c in cuts if a <= c <= b])
    total = 0.0
    for u, v in zip(cuts[:-1], cuts[1:]):
        xs, ws = _gl(nodes, u, v)
        half = np.sqrt(np.maximum(radius * radius - xs * xs, 0.0))
        chord = np.clip(np.minimum(hi[1], half) - np.maximum(lo[1], -half), 0.0, None)
        total += float(ws @ chord)
    return total


def ball_weights(grid: GridSpec, radius: float) -> np.ndarray:
    """Exact volume of each spatial cell inside {|x| < radius}."""
    h = grid.dx
    edges = -grid.x_max + np.arange(grid.n_x + 1) * h
    if grid.d == 1:
        return np.clip(np.minimum(edges[1:], radius) - np.maximum(edges[:-1], -radius), 0.0, None)
    if grid.d != 2:
        raise UnsupportedConfigurationError("ball weights implemented for d <= 2")
    out = np.zeros(grid.n_space)
    for j, (a, b) in enumerate(grid.space_offsets()):
        lo = np.array([edges[a], edges[b]])
        hi = lo + h
        corner = np.max(np.abs(np.stack([lo, hi])), axis=0)
        if np.hypot(*corner) <= radius:
            out[j] = h * h
        else:
            out[j] = _disk_rect_area(radius, lo, hi)
    return out


# ---------------------------------------------------------------------------
# Assembled model
# ---------------------------------------------------------------------------


@dataclass
class AndersonModel:
    spec: ModelSpec
    noise: NoiseModel
    prop: Propagator
    cache: dict = field(default_factory=dict, repr=False)

    @property
    def grid(self) -> GridSpec:
        return self.spec.grid

    @cached_property
    def cov(self) -> np.ndarray:
        return self.noise.cov_full()

    def cell_of(self, x) -> int:
        g = self.grid
        x = np.atleast_1d(np.asarray(x, float))
        idx = np.floor((x + g.x_max) / g.dx).astype(int)
        if np.any(idx < 0) or np.any(idx >= g.n_x):
            raise DomainError(f"point {x} outside the box")
        return int(np.ravel_multi_index(tuple(idx), (g.n_x,) * g.d))

    def check_radius(self, radius: float) -> None:
        if not radius > 0:
            raise DomainError("radius must be > 0")
        if radius + self.spec.t0 > self.grid.x_max + 1e-12:
            raise DomainError(f"R + t0 = {radius + self.spec.t0} exceeds the box half-width {self.grid.x_max}")

    def response(self, radius: float) -> np.ndarray:
        """Per-order vectors v_p with E[I_p(f_R) I_p(chain(h))] = h . v_p for any head h.

        One contraction per order with the second head left open; it yields the
        variance of F_R and its covariance with every other average at once.
        """
        key = ("response", round(float(radius), 12), self.spec.truncation)
        if key not in self.cache:
            self.cache[key] = self._responses(self.average_head(radius))
        return self.cache[key]

    def point_response(self, j: int) -> np.ndarray:
        """Per-order response of u(t0, x_j); row j of Phi_p is K0 @ v_p."""
        key = ("point", int(j), self.spec.truncation)
        if key not in self.cache:
            self.cache[key] = self._responses(self.prop.K0[j])
        return self.cache[key]

    def _responses(self, head: np.ndarray) -> np.ndarray:
        K, tail, P = self.prop.K, self.prop.tail, self.spec.truncation
        out = [chain_cross_vector(ChainKernel(p, head, K, tail), p, K, self.cov, tail) for p in range(1, P + 1)]
        return np.array(out).reshape(P, len(head))

    def average_head(self, radius: float) -> np.ndarray:
        self.check_radius(radius)
        return self.prop.K0.T @ ball_weights(self.grid, radius)

    def average_covariance(self, r1: float, r2: float, orders: bool = False):
        """Cov(F_r1, F_r2), optionally split by chaos order."""
        per = self.response(r1) @ self.average_head(r2)
        return per if orders else float(per.sum())


def assemble(spec: ModelSpec, cache_dir=None) -> AndersonModel:
    noise = build_noise_model(spec.grid, spec.kernel, cache_dir=cache_dir)
    return AndersonModel(spec, noise, build_propagator(spec))


# ---------------------------------------------------------------------------
# Representations
# ---------------------------------------------------------------------------


def _captured_fraction(variances: np.ndarray):
    """Share of the variance in orders <= P, against a geometric tail extrapolation."""
    v = np.asarray(variances, float)
    total = float(v.sum())
    if len(v) < 2 or total <= 0 or v[-2] <= 0:
        return 1.0, 0.0
    rho = v[-1] / v[-2]
    tail = v[-1] * rho / (1 - rho) if rho < 1 else math.inf
    return (total / (total + tail) if math.isfinite(tail) else 0.0), tail


def _representation(model: AndersonModel, head: np.ndarray, mean: float, kind: str) -> ChaosRepresentation:
    P = model.spec.truncation
    budget = 8.0 * len(head) ** 2 * 4 * max(P, 1)
    if budget > MEMORY_BUDGET:
        raise ResourceError(f"P={P} on {len(head)} cells exceeds the memory budget; lower P or the grid size")
    kernels = tuple(ChainKernel(p, head, model.prop.K, model.prop.tail) for p in range(1, P + 1))
    rep = ChaosRepresentation(mean, kernels, {"kind": kind})
    variances = np.array([chain_pairing_moment(k, k, model.cov) for k in kernels])
    frac, tail = _captured_fraction(variances)
    rep.info.update(order_variances=variances, captured_fraction=frac, tail_estimate=tail)
    return rep


def solution_representation(model: AndersonModel, x) -> ChaosRepresentation:
    """Chaos expansion of u(t0, x): mean 1 plus chain kernels of orders 1..P."""
    j = model.cell_of(x)
    return _representation(model, model.prop.K0[j].copy(), 1.0, "solution")


def average_representation(model: AndersonModel, radius: float) -> ChaosRepresentation:
    """F_R = int_{|x| < R} (u(t0, x) - 1) dx as a centered chaos expansion."""
    model.check_radius(radius)
    w = ball_weights(model.grid, radius)
    return _representation(model, model.prop.K0.T @ w, 0.0, "average")


# ---------------------------------------------------------------------------
# Sampling
# ---------------------------------------------------------------------------


class PicardSampler:
    """Chaos components of u(t0, .) on noise realizations via the Wick-Picard
    recursion (orders <= 3, O(N^2) per realization):

        U1 = K W,  U2 = K (U1 W - v1),  U3 = K (U2 W - A W - B U1)

    with v1 = (K o C) 1, A = K o (K C)^T and B = K o C; the final step uses K0.
    """

    def __init__(self, model: AndersonModel):
        self.model = model
        P = model.spec.truncation
        if P > 3:
            raise UnsupportedConfigurationError("the recursion sampler covers P <= 3; use dense_average_samples")
        K, C = model.prop.K, model.cov
        t = model.prop.tail
        self.t = np.ones(len(K)) if t is None else t
        self.B = K * C
        self.v1 = self.B @ self.t
        self.A = K * (K @ (self.t[:, None] * C)).T if P >= 3 else None

    def orders(self, w: np.ndarray) -> np.ndarray:
        """Array (P, n_space, B) of chaos components for noise masses w (B, n_t, n_space)."""
        m = self.model
        P = m.spec.truncation
        K, K0 = m.prop.K, m.prop.K0
        W = w.reshape(len(w), -1).T
        out = np.zeros((P, K0.shape[0], W.shape[1]))
        if P == 0:
            return out
        Wt = self.t[:, None] * W
        out[0] = K0 @ Wt
        if P >= 2:
            U1 = K @ Wt
            Y2 = U1 * W - self.v1[:, None]
            out[1] = K0 @ Y2
        if P >= 3:
            U2 = K @ Y2
            Y3 = U2 * W - self.A @ W - self.B @ U1
            out[2] = K0 @ Y3
        return out

    def solution(self, w: np.ndarray) -> np.ndarray:
        """u(t0, x_j) per realization, shape (B, n_space)."""
        return 1.0 + self.orders(w).sum(axis=0).T


def solution_samples(model: AndersonModel, seed: int, count: int, start: int = 0, batch: int = 500):
    """Chaos components (P, n_space, count) of u(t0, .) for realizations start..start+count-1."""
    sampler = PicardSampler(model)
    parts = []
    for s in range(start, start + count, batch):
        k = min(batch, start + count - s)
        r = sample_realizations(model.noise, seed, k, start=s)
        parts.append(sampler.orders(r.w))
    return np.concatenate(parts, axis=-1)


def dense_average_samples(model: AndersonModel, radius: float, realizations) -> np.ndarray:
    """Samples of F_R from dense Wick polynomials; small grids, any P <= 4."""
    rep = average_representation(model, radius)
    out = 0.0
    for k in rep.kernels:
        out = out + multiple_integral_sample(k, realizations, model.noise)
    return out


# ---------------------------------------------------------------------------
# Average series
# ---------------------------------------------------------------------------


def geometric_grid(r_min: float, r_max: float, ratio: float, extra=()) -> np.ndarray:
    n = int(math.floor(math.log(r_max / r_min) / math.log(ratio) + 1e-9))
    pts = r_min * ratio ** np.arange(n + 1)
    pts = np.concatenate([pts, [r_max], np.asarray(extra, float)])
    pts = pts[(pts >= r_min - 1e-12) & (pts <= r_max + 1e-12)]
    return np.unique(np.round(pts, 12))


@dataclass
class AverageSeries:
    """F^_R = F_R / sigma_R on a grid of radii; row k is one noise realization."""

    radii: np.ndarray
    values: np.ndarray
    sigma: np.ndarray
    seed: int
    indices: np.ndarray
    metadata: dict = field(default_factory=dict)

    def __post_init__(self):
        if np.any(self.sigma <= 0):
            raise NumericDegeneracyError("sigma_R must be positive for every radius")

    def path(self, k: int) -> np.ndarray:
        return self.values[k]

    def to_csv(self, path) -> Path:
        path = Path(path)
        with path.open("w", newline="") as fh:
            wr = csv.writer(fh)
            wr.writerow(["R", "F_hat", "seed", "replica"])
            for k, idx in enumerate(self.indices):
                for r, v in zip(self.radii, self.values[k]):
                    wr.writerow([repr(float(r)), repr(float(v)), self.seed, int(idx)])
        return path

    def to_npz(self, path) -> Path:
        path = Path(path)
        np.savez_compressed(path, radii=self.radii, values=self.values, sigma=self.sigma,
                            seed=self.seed, indices=self.indices)
        return path

    @classmethod
    def from_npz(cls, path) -> "AverageSeries":
        z = np.load(path)
        return cls(z["radii"], z["values"], z["sigma"], int(z["seed"]), z["indices"])

    @classmethod
    def from_csv(cls, path, sigma=None) -> "AverageSeries":
        rows = list(csv.DictReader(Path(path).open()))
        radii = np.unique([float(r["R"]) for r in rows])
        reps = sorted({int(r["replica"]) for r in rows})
        vals = np.zeros((len(reps), len(radii)))
        pos = {k: i for i, k in enumerate(reps)}
        rpos = {v: i for i, v in enumerate(radii)}
        for r in rows:
            vals[pos[int(r["replica"])], rpos[float(r["R"])]] = float(r["F_hat"])
        sig = np.ones(len(radii)) if sigma is None else np.asarray(sigma)
        return cls(radii, vals, sig, int(rows[0]["seed"]), np.array(reps))


def sigma_table(model: AndersonModel, radii) -> tuple[np.ndarray, np.ndarray]:
    """(ball weight matrix, sigma_R) for a list of radii."""
    weights = np.array([ball_weights(model.grid, r) for r in radii])
    var = np.array([model.average_covariance(r, r) for r in radii])
    if np.any(var < 1e-24):
        raise NumericDegeneracyError("sigma_R vanishes; the noise is degenerate")
    return weights, np.sqrt(var)


def sample_paths(model: AndersonModel, radii, seed: int, count: int, start: int = 0) -> AverageSeries:
    """F^_R for every R on each realization; all radii share one noise sample."""
    radii = np.asarray(radii, float)
    weights, sigma = sigma_table(model, radii)
    comps = solution_samples(model, seed, count, start)
    field_ = comps.sum(axis=0)  # u - 1, shape (n_space, count)
    values = (weights @ field_).T / sigma
    return AverageSeries(radii, values, sigma, int(seed), np.arange(start, start + count))


def sample_path(model: AndersonModel, radii, realization) -> np.ndarray:
    """F^_R over the radius grid on a single realization."""
    radii = np.asarray(radii, float)
    weights, sigma = sigma_table(model, radii)
    u = PicardSampler(model).solution(realization.w[None])[0]
    return weights @ (u - 1.0) / sigma
