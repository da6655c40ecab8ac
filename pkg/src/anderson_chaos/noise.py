"""Space-time grids and Gaussian noise masses with separable covariance.

The noise is represented by its masses W(1_cell) on the cells of a uniform grid of
[0, t0] x [-X, X]^d.  Their covariance is C_time (x) C_space where each factor holds
cell-pair integrals of gamma0 / gamma1, and a realization is W = L_t Xi L_x^T with Xi
i.i.d. standard normal.
"""
from __future__ import annotations

import hashlib
import itertools
import json
import os
from dataclasses import asdict, dataclass, field
from pathlib import Path

import numpy as np

from .errors import DomainError, NumericDegeneracyError
from .kernels import CorrelationKernel, correlation_cell_integral

CACHE_ENV = "ANDERSON_CHAOS_CACHE"
JITTER_LADDER = (0.0, 1e-12, 1e-10, 1e-8, 1e-6)


@dataclass(frozen=True)
class GridSpec:
    t0: float
    n_t: int
    x_max: float
    n_x: int
    d: int = 1

    def __post_init__(self):
        if self.n_t < 2 or self.n_x < 2:
            raise DomainError("grid needs n_t >= 2 and n_x >= 2")
        if not (self.t0 > 0 and self.x_max > 0):
            raise DomainError("grid needs t0 > 0 and x_max > 0")

    @property
    def dt(self) -> float:
        return self.t0 / self.n_t

    @property
    def dx(self) -> float:
        return 2 * self.x_max / self.n_x

    @property
    def n_space(self) -> int:
        return self.n_x**self.d

    @property
    def n_cells(self) -> int:
        return self.n_t * self.n_space

    def time_edges(self):
        return np.linspace(0.0, self.t0, self.n_t + 1)

    def axis_centers(self):
        return -self.x_max + (np.arange(self.n_x) + 0.5) * self.dx

    def space_centers(self):
        """Cell centers, shape (n_space,) for d=1 and (n_space, d) otherwise."""
        c = self.axis_centers()
        if self.d == 1:
            return c
        mesh = np.meshgrid(*([c] * self.d), indexing="ij")
        return np.stack([m.ravel() for m in mesh], axis=-1)

    def space_offsets(self):
        """Integer multi-index of each spatial cell, shape (n_space, d)."""
        idx = np.indices((self.n_x,) * self.d).reshape(self.d, -1).T
        return idx

    def validate_padding(self, r_max: float) -> None:
        if self.x_max < r_max + self.t0:
            raise DomainError(
                f"box half-width {self.x_max} < R_max + t0 = {r_max + self.t0}"
            )


@dataclass(frozen=True)
class Realization:
    seed: int
    index: int
    xi: np.ndarray
    w: np.ndarray


@dataclass
class Realizations:
    """A batch of noise realizations; ``w[k]`` has shape (n_t, n_space)."""

    seed: int
    indices: np.ndarray
    xi: np.ndarray
    w: np.ndarray

    def __len__(self):
        return len(self.indices)

    def __getitem__(self, k) -> Realization:
        return Realization(self.seed, int(self.indices[k]), self.xi[k], self.w[k])


@dataclass
class NoiseModel:
    grid: GridSpec
    kernel: CorrelationKernel
    cov_time: np.ndarray
    cov_space: np.ndarray
    chol_time: np.ndarray
    chol_space: np.ndarray
    metadata: dict = field(default_factory=dict)

    def cov_full(self) -> np.ndarray:
        """Covariance of all cell masses, cells ordered time-major."""
        return np.kron(self.cov_time, self.cov_space)

    def chol_full(self) -> np.ndarray:
        return np.kron(self.chol_time, self.chol_space)

    def cell_variance(self, i: int, j: int) -> float:
        return float(self.cov_time[i, i] * self.cov_space[j, j])


def time_covariance(grid: GridSpec, kernel: CorrelationKernel) -> np.ndarray:
    h = grid.dt
    row = np.array(
        [correlation_cell_integral(kernel, [k * h, (k + 1) * h], [0.0, h], axis="time") for k in range(grid.n_t)]
    )
    lag = np.abs(np.subtract.outer(np.arange(grid.n_t), np.arange(grid.n_t)))
    return row[lag]


def space_covariance(grid: GridSpec, kernel: CorrelationKernel) -> np.ndarray:
    """Spatial cell-pair integrals; every supported kernel is reflection symmetric,
    so the table is indexed by the absolute multi-offset."""
    h, d = grid.dx, grid.d
    base = np.array([[0.0, h]] * d)
    table = np.empty((grid.n_x,) * d)
    for off in itertools.product(range(grid.n_x), repeat=d):
        cell = base + np.asarray(off, float)[:, None] * h
        table[off] = correlation_cell_integral(kernel, cell, base, axis="space")
    idx = grid.space_offsets()
    diff = np.abs(idx[:, None, :] - idx[None, :, :])
    return table[tuple(diff[..., k] for k in range(d))]


def _factor(cov: np.ndarray, axis: str):
    scale = float(np.max(np.abs(cov)))
    for eps in JITTER_LADDER:
        try:
            c = cov + eps * scale * np.eye(len(cov))
            return c, np.linalg.cholesky(c), eps * scale
        except np.linalg.LinAlgError:
            continue
    raise NumericDegeneracyError(
        f"{axis} covariance not factorizable with jitter up to {JITTER_LADDER[-1]:g}*||C||"
    )


def cache_key(grid: GridSpec, kernel: CorrelationKernel) -> str:
    payload = json.dumps(
        {"grid": asdict(grid), "temporal": asdict(kernel.temporal), "spatial": asdict(kernel.spatial)},
        sort_keys=True,
    )
    return hashlib.sha256(payload.encode()).hexdigest()[:20]


def build_noise_model(grid: GridSpec, kernel: CorrelationKernel, cache_dir=None) -> NoiseModel:
    """Assemble and factor the separable covariance of the cell masses.

    The smallest jitter on the ladder ``JITTER_LADDER * ||C||_max`` that admits a
    Cholesky factor is used; the jittered matrices are stored as the effective
    covariances, so every downstream contraction matches the sampler exactly.
    """
    cache_dir = cache_dir or os.environ.get(CACHE_ENV)
    key = cache_key(grid, kernel)
    if cache_dir:
        path = Path(cache_dir) / f"noise-{key}.npz"
        if path.exists():
            z = np.load(path)
            return NoiseModel(
                grid, kernel, z["cov_time"], z["cov_space"], z["chol_time"], z["chol_space"],
                {"jitter_time": float(z["jitter_time"]), "jitter_space": float(z["jitter_space"]),
                 "cache_key": key, "cached": True},
            )
    ct, lt, jt = _factor(time_covariance(grid, kernel), "time")
    cs, ls, js = _factor(space_covariance(grid, kernel), "space")
    model = NoiseModel(grid, kernel, ct, cs, lt, ls, {"jitter_time": jt, "jitter_space": js, "cache_key": key})
    if cache_dir:
        save_noise_model(model, cache_dir)
    return model


def save_noise_model(model: NoiseModel, directory) -> Path:
    directory = Path(directory)
    directory.mkdir(parents=True, exist_ok=True)
    path = directory / f"noise-{cache_key(model.grid, model.kernel)}.npz"
    np.savez_compressed(
        path,
        cov_time=model.cov_time,
        cov_space=model.cov_space,
        chol_time=model.chol_time,
        chol_space=model.chol_space,
        jitter_time=model.metadata.get("jitter_time", 0.0),
        jitter_space=model.metadata.get("jitter_space", 0.0),
    )
    return path


def stream(seed: int, index: int) -> np.random.Generator:
    """Counter-based stream for realization ``index``: Philox keyed by ``seed`` and
    jumped by ``index`` * 2^128 draws, so distinct indices never overlap."""
    return np.random.Generator(np.random.Philox(key=int(seed)).jumped(int(index)))


def sample_realizations(model: NoiseModel, seed: int, count: int, start: int = 0) -> Realizations:
    if count < 1:
        raise DomainError("count must be >= 1")
    g = model.grid
    idx = np.arange(start, start + count)
    xi = np.stack([stream(seed, k).standard_normal((g.n_t, g.n_space)) for k in idx])
    w = np.einsum("ab,kbc,dc->kad", model.chol_time, xi, model.chol_space, optimize=True)
    return Realizations(int(seed), idx, xi, w)


def noise_mass(realization, weights) -> np.ndarray:
    """W(h) for a step function h = sum weights[i, j] 1_cell(i, j)."""
    w = realization.w
    return np.tensordot(w, np.asarray(weights, float), axes=([-2, -1], [0, 1]))


@dataclass
class FidelityReport:
    """Entrywise z-scores of the empirical cell-mass covariance against its target."""

    max_abs_z: float
    violations: int
    entries: int
    count: int
    threshold: float

    @property
    def passed(self) -> bool:
        return self.violations == 0


def covariance_fidelity(model: NoiseModel, seed: int, count: int, n_se: float = 5.0,
                        batch: int = 2000) -> FidelityReport:
    """Compare (1/N) sum_k W_a W_b with C_ab for every pair of cells.

    The masses are centered, so the known-mean estimator is used; its standard
    error for Gaussian masses is sqrt((C_aa C_bb + C_ab^2) / N).
    """
    n = model.grid.n_cells
    acc = np.zeros((n, n))
    for start in range(0, count, batch):
        k = min(batch, count - start)
        w = sample_realizations(model, seed, k, start=start).w.reshape(k, n)
        acc += w.T @ w
    target = model.cov_full()
    diag = np.diag(target)
    se = np.sqrt((np.outer(diag, diag) + target**2) / count)
    z = np.abs(acc / count - target) / se
    iu = np.triu_indices(n)
    zu = z[iu]
    return FidelityReport(float(zu.max()), int(np.sum(zu > n_se)), len(zu), int(count), n_se)
