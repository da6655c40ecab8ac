"""Wiener chaos on a cell grid: kernels, multiple integrals and Malliavin operators.

Cells are flattened time-major, so a kernel of order p is a function of p cell
indices.  Two kernel representations are supported:

* ``ChaosKernelTensor``: a dense tensor of shape (N,)*p, fine for small grids;
* ``ChainKernel``: the Picard chain ``head[c_p] K[c_p, c_{p-1}] ... K[c_2, c_1]``
  (optionally times ``tail[c_1]``), which is how solution kernels arise and whose
  second moments reduce to contractions of N x N matrices.

Multiple integrals follow ``E[I_p(f) I_q(g)] = 1{p=q} p! <f~, g~>``; for an
unsymmetrized kernel this equals the sum over permutations pi of ``<f, g o pi>``.
"""
from __future__ import annotations

import itertools
import math
import string
from dataclasses import dataclass, field, replace

import numpy as np

from .errors import DomainError, PreconditionError, ResourceError, UnsupportedConfigurationError
from .kernels import GreenKernel, green_eval
from .noise import sample_realizations

MAX_ORDER = 4


def _cov_of(model):
    """Full cell covariance from a NoiseModel or an explicit matrix."""
    if hasattr(model, "cov_full"):
        return model.cov_full()
    return np.asarray(model, float)


def _chol_of(model):
    if hasattr(model, "chol_full"):
        return model.chol_full()
    return np.linalg.cholesky(np.asarray(model, float))


# ---------------------------------------------------------------------------
# Dense kernels
# ---------------------------------------------------------------------------


def symmetrize(data: np.ndarray) -> np.ndarray:
    """Average of a tensor over all permutations of its axes."""
    p = data.ndim
    if p <= 1:
        return np.array(data, float)
    out = np.zeros_like(data, dtype=float)
    for perm in itertools.permutations(range(p)):
        out += np.transpose(data, perm)
    return out / math.factorial(p)


@dataclass(frozen=True)
class ChaosKernelTensor:
    order: int
    data: np.ndarray
    symmetrized: bool = False

    def __post_init__(self):
        data = np.asarray(self.data, float)
        if data.ndim != self.order:
            raise DomainError(f"tensor of rank {data.ndim} given for order {self.order}")
        if not np.all(np.isfinite(data)):
            raise DomainError("kernel tensor has non-finite entries")
        object.__setattr__(self, "data", data)

    @property
    def size(self) -> int:
        return self.data.shape[0] if self.order else 1

    def symmetrize(self) -> "ChaosKernelTensor":
        if self.symmetrized:
            return self
        return ChaosKernelTensor(self.order, symmetrize(self.data), True)

    def scaled(self, c: float) -> "ChaosKernelTensor":
        return ChaosKernelTensor(self.order, c * self.data, self.symmetrized)


def h_inner(f, g, model, p: int | None = None) -> float:
    """<f, g> in H^{(x)p}: every slot is contracted against the cell covariance."""
    fa = f.data if isinstance(f, ChaosKernelTensor) else np.asarray(f, float)
    ga = g.data if isinstance(g, ChaosKernelTensor) else np.asarray(g, float)
    if fa.shape != ga.shape:
        raise DomainError(f"shape mismatch {fa.shape} vs {ga.shape}")
    if p is not None and fa.ndim != p:
        raise DomainError(f"tensors have order {fa.ndim}, expected {p}")
    if fa.ndim == 0:
        return float(fa * ga)
    c = _cov_of(model)
    out = ga
    for k in range(ga.ndim):
        out = np.moveaxis(np.tensordot(c, out, axes=([1], [k])), 0, k)
    return float(np.vdot(fa, out))


def whiten(f: ChaosKernelTensor, chol: np.ndarray) -> np.ndarray:
    """f^ = f x_k L on every slot, the kernel in the coordinates of W = L xi."""
    out = f.data
    for k in range(f.order):
        out = np.moveaxis(np.tensordot(chol, out, axes=([0], [k])), 0, k)
    return out


def _xi_of(realization, n: int) -> np.ndarray:
    xi = realization.xi if hasattr(realization, "xi") else np.asarray(realization, float)
    xi = np.asarray(xi, float)
    return xi.reshape(-1, n) if xi.size != n else xi.reshape(1, n)


def wick_polynomial(t: np.ndarray, xi: np.ndarray) -> np.ndarray:
    """sum_a t_a :xi_a1 ... xi_ap: for a symmetric tensor t and rows of xi."""
    p = t.ndim
    if p == 0:
        return np.full(len(xi), float(t))
    if p == 1:
        return xi @ t
    if p == 2:
        return np.einsum("bi,ij,bj->b", xi, t, xi) - np.trace(t)
    if p == 3:
        tr = np.einsum("iik->k", t)
        full = np.einsum("ijk,bk->bij", t, xi)
        return np.einsum("bij,bi,bj->b", full, xi, xi) - 3 * xi @ tr
    if p == 4:
        tr2 = np.einsum("iikl->kl", t)
        tr4 = np.einsum("iijj->", t)
        m = np.einsum("ijkl,bl->bijk", t, xi)
        m = np.einsum("bijk,bk->bij", m, xi)
        return np.einsum("bij,bi,bj->b", m, xi, xi) - 6 * np.einsum("bk,kl,bl->b", xi, tr2, xi) + 3 * tr4
    raise UnsupportedConfigurationError(f"multiple integrals implemented up to order {MAX_ORDER}")


def multiple_integral_sample(f, realization, model) -> np.ndarray:
    """Samples of I_p(f) on the given realization(s); one value per realization.

    The kernel is symmetrized, moved to the whitened coordinates xi of the
    factorization, and evaluated as a Wick (Hermite) polynomial, so that the
    isometry and orthogonality of multiple integrals hold exactly in law.
    """
    if isinstance(f, ChainKernel):
        f = f.to_tensor()
    if f.order > MAX_ORDER:
        raise UnsupportedConfigurationError(f"order {f.order} > supported maximum {MAX_ORDER}")
    n = f.size
    xi = _xi_of(realization, n)
    t = whiten(f.symmetrize(), _chol_of(model))
    return wick_polynomial(t, xi)


@dataclass
class IsometryReport:
    """Monte Carlo check of E[I_p I_q] = 1{p=q} p! <f~_p, g~_q>."""

    orders: tuple
    variance_ratio: np.ndarray
    correlation: np.ndarray
    count: int

    @property
    def max_cross_correlation(self) -> float:
        c = np.abs(self.correlation - np.diag(np.diag(self.correlation)))
        return float(c.max()) if len(c) > 1 else 0.0

    def passed(self, band=(0.9, 1.1), n_se: float = 5.0) -> bool:
        ok_var = bool(np.all((self.variance_ratio >= band[0]) & (self.variance_ratio <= band[1])))
        return ok_var and self.max_cross_correlation < n_se / math.sqrt(self.count)


def smooth_test_kernels(grid, orders=(1, 2, 3), groups: int = 4, width: float = 0.5) -> list:
    """Smooth kernels sum_k phi_{k,1} (x) ... (x) phi_{k,p} built from space-time bumps.

    Bump m is exp(-(x - x_m)^2 / (2 width^2)) (1 + t/t0) at the cell centers, with
    centers spread evenly across the box.  Order p >= 2 sums ``groups`` products
    whose slots take interleaved, hence well separated, bumps; such sums keep
    I_p close to Gaussian, which tightens Monte Carlo moment estimates.
    """
    counts = [1 if p == 1 else groups for p in orders]
    n_bumps = sum(p * m for p, m in zip(orders, counts))
    xs = grid.space_centers()
    if grid.d != 1:
        xs = xs[:, 0]
    tc = (np.arange(grid.n_t) + 0.5) * grid.dt
    centers = np.linspace(-grid.x_max, grid.x_max, n_bumps + 2)[1:-1]
    bumps = [np.outer(1 + tc / grid.t0, np.exp(-((xs - c) ** 2) / (2 * width**2))).ravel() for c in centers]
    out, base = [], 0
    for p, m in zip(orders, counts):
        total = 0.0
        for k in range(m):
            t = bumps[base + k]
            for j in range(1, p):
                t = np.multiply.outer(t, bumps[base + k + j * m])
            total = total + t
        out.append(ChaosKernelTensor(p, np.asarray(total)))
        base += p * m
    return out


def isometry_experiment(kernels, model, seed: int, count: int, batch: int = 1000) -> IsometryReport:
    """Sample I_p(f_p) for each kernel on shared noise draws."""
    samples = [[] for _ in kernels]
    for start in range(0, count, batch):
        r = sample_realizations(model, seed, min(batch, count - start), start=start)
        for k, f in enumerate(kernels):
            samples[k].append(multiple_integral_sample(f, r, model))
    x = np.array([np.concatenate(s) for s in samples])
    expected = np.array([order_second_moment(f, model) for f in kernels])
    ratio = np.mean(x * x, axis=1) / expected
    orders = tuple(int(f.order) for f in kernels)
    return IsometryReport(orders, ratio, np.corrcoef(x), int(count))


# ---------------------------------------------------------------------------
# Chain kernels and their contractions
# ---------------------------------------------------------------------------


@dataclass(frozen=True)
class ChainKernel:
    """T(c_p, ..., c_1) = head[c_p] K[c_p, c_{p-1}] ... K[c_2, c_1] tail[c_1]."""

    order: int
    head: np.ndarray
    K: np.ndarray
    tail: np.ndarray | None = None

    @property
    def size(self) -> int:
        return len(self.head)

    def to_tensor(self, max_entries: int = 50_000_000) -> ChaosKernelTensor:
        n, p = self.size, self.order
        if float(n) ** p > max_entries:
            raise ResourceError(f"dense order-{p} tensor on {n} cells exceeds {max_entries} entries")
        t = self.head.copy()
        for _ in range(p - 1):
            t = t[..., None] * self.K.reshape((1,) * (t.ndim - 1) + self.K.shape)
        if self.tail is not None:
            t = t * self.tail
        return ChaosKernelTensor(p, t)

    def scaled(self, c: float) -> "ChainKernel":
        return replace(self, head=c * self.head)


def contract_network(weights: dict, edges: list, open_nodes=()):
    """Sum over all node labels of prod(vertex weights) * prod(edge matrices).

    ``weights`` maps node -> vector, ``edges`` holds (u, v, M) meaning M[x_u, x_v].
    Nodes of degree <= 2 are eliminated first (series-parallel reduction: vector
    products and single matrix products); anything left is handed to einsum.
    Returns a scalar, or an array indexed by ``open_nodes`` in that order.
    """
    w = {k: np.asarray(v, float) for k, v in weights.items()}
    E: dict = {}

    def add(u, v, m):
        if u == v:
            w[u] = w[u] * np.diagonal(m)
            return
        key, m = ((u, v), m) if u < v else ((v, u), m.T)
        E[key] = E[key] * m if key in E else m

    for u, v, m in edges:
        add(u, v, np.asarray(m, float))
    opens = list(open_nodes)
    scalar = 1.0
    while True:
        cand = [x for x in w if x not in opens]
        if not cand:
            break
        inc = {x: [k for k in E if x in k] for x in cand}
        x = min(cand, key=lambda y: (len(inc[y]), y))
        keys = inc[x]
        if len(keys) > 2:
            break
        if not keys:
            scalar *= float(w[x].sum())
        elif len(keys) == 1:
            (u, v), m = keys[0], E.pop(keys[0])
            y, m = (v, m) if u == x else (u, m.T)
            w[y] = w[y] * (w[x] @ m)
        else:
            ms = []
            for key in keys:
                (u, v), m = key, E.pop(key)
                ms.append((v, m) if u == x else (u, m.T))
            (y, my), (z, mz) = ms
            add(y, z, my.T @ (w[x][:, None] * mz))
        del w[x]
    rest = [x for x in w if x not in opens]
    if rest:
        return scalar * _einsum_network(w, E, opens)
    if not opens:
        return scalar
    if len(opens) == 1:
        return scalar * w[opens[0]]
    return scalar * _einsum_network(w, E, opens)


def _einsum_network(w, E, opens):
    letters = {x: string.ascii_letters[i] for i, x in enumerate(sorted(w))}
    subs, ops = [], []
    for x, v in w.items():
        subs.append(letters[x])
        ops.append(v)
    for (u, v), m in E.items():
        subs.append(letters[u] + letters[v])
        ops.append(m)
    expr = ",".join(subs) + "->" + "".join(letters[o] for o in opens)
    return np.einsum(expr, *ops, optimize="greedy")


def _chain_nodes(kernel: ChainKernel, offset: int):
    """Nodes offset+1..offset+p for slots c_1..c_p with chain edges."""
    p = kernel.order
    n = kernel.size
    weights = {offset + k: np.ones(n) for k in range(1, p + 1)}
    weights[offset + p] = np.asarray(kernel.head, float).copy()
    if kernel.tail is not None:
        weights[offset + 1] = weights[offset + 1] * kernel.tail
    edges = [(offset + k + 1, offset + k, kernel.K) for k in range(1, p)]
    return weights, edges


def _merge(weights, edges, a, b):
    """Identify node b with node a."""
    weights[a] = weights[a] * weights.pop(b)
    return [(a if u == b else u, a if v == b else v, m) for u, v, m in edges]


def chain_pairing_moment(f: ChainKernel, g: ChainKernel, cov: np.ndarray, frozen: int = 0, first_cell=None):
    """E[D^k I_p(f) D^k I_p(g)] evaluated on the diagonal of the frozen slots.

    ``frozen=0`` gives the scalar E[I_p(f) I_p(g)]; ``frozen=1`` the vector over
    cells c of E[D_c I_p(f) D_c I_p(g)]; ``frozen=2`` the matrix over (c, c') of
    E[D_{c,c'} I_p(f) D_{c,c'} I_p(g)].  With ``first_cell`` set (frozen=2 only)
    the first frozen slot is pinned to that cell and a vector over c' is returned;
    this keeps every contraction a matrix product.
    """
    p = f.order
    shape = (f.size,) * (frozen - (first_cell is not None))
    if g.order != p or frozen > p:
        return 0.0 if not shape else np.zeros(shape)
    total = 0.0
    slots = range(1, p + 1)
    for fa in itertools.permutations(slots, frozen):
        for gb in itertools.permutations(slots, frozen):
            rest_a = [k for k in slots if k not in fa]
            rest_b = [k for k in slots if k not in gb]
            for perm in itertools.permutations(rest_b):
                wa, ea = _chain_nodes(f, 0)
                wb, eb = _chain_nodes(g, 100)
                weights = {**wa, **wb}
                edges = ea + eb + [(a, 100 + b, cov) for a, b in zip(rest_a, perm)]
                for a, b in zip(fa, gb):
                    edges = _merge(weights, edges, a, 100 + b)
                opens = list(fa)
                if first_cell is not None:
                    pin = np.zeros(f.size)
                    pin[first_cell] = 1.0
                    weights[opens[0]] = weights[opens[0]] * pin
                    opens = opens[1:]
                total = total + contract_network(weights, edges, open_nodes=opens)
    return total


def chain_cross_vector(f: ChainKernel, g_order: int, K: np.ndarray, cov: np.ndarray, tail=None):
    """Vector v with E[I_p(f) I_p(chain(head=h))] = h . v for every head h.

    The head slot of the second chain is left open, so covariances of many
    averages sharing one propagator cost a single contraction.
    """
    p = f.order
    if g_order != p:
        return np.zeros(f.size)
    g = ChainKernel(p, np.ones(f.size), K, tail)
    total = 0.0
    for perm in itertools.permutations(range(1, p + 1)):
        wa, ea = _chain_nodes(f, 0)
        wb, eb = _chain_nodes(g, 100)
        weights = {**wa, **wb}
        edges = ea + eb + [(a, 100 + b, cov) for a, b in zip(range(1, p + 1), perm)]
        total = total + contract_network(weights, edges, open_nodes=[100 + p])
    return total


# ---------------------------------------------------------------------------
# Representations and Malliavin operators
# ---------------------------------------------------------------------------


@dataclass(frozen=True)
class ChaosRepresentation:
    """F = mean + sum_p I_p(f_p); ``kernels[p-1]`` is f_p (None for an empty order)."""

    mean: float
    kernels: tuple = ()
    info: dict = field(default_factory=dict, compare=False)

    @property
    def truncation(self) -> int:
        return len(self.kernels)

    def kernel(self, p: int):
        return self.kernels[p - 1] if 1 <= p <= len(self.kernels) else None

    def map_orders(self, fn, mean=None) -> "ChaosRepresentation":
        ks = tuple(None if k is None else k.scaled(fn(p)) for p, k in enumerate(self.kernels, 1))
        return ChaosRepresentation(self.mean if mean is None else mean, ks, dict(self.info))


def order_second_moment(kernel, model) -> float:
    """p! ||f~_p||^2 = E[I_p(f_p)^2]."""
    if kernel is None:
        return 0.0
    if isinstance(kernel, ChainKernel):
        return float(chain_pairing_moment(kernel, kernel, _cov_of(model)))
    f = kernel.symmetrize()
    return math.factorial(f.order) * h_inner(f, f, model, f.order)


def order_variances(rep: ChaosRepresentation, model) -> np.ndarray:
    return np.array([order_second_moment(k, model) for k in rep.kernels])


def second_moment(rep: ChaosRepresentation, model) -> float:
    return rep.mean**2 + float(np.sum(order_variances(rep, model)))


def covariance(rep_a: ChaosRepresentation, rep_b: ChaosRepresentation, model) -> float:
    """Cov(F, G) = sum_p E[I_p(f_p) I_p(g_p)]."""
    c = _cov_of(model)
    out = 0.0
    for p in range(1, min(rep_a.truncation, rep_b.truncation) + 1):
        f, g = rep_a.kernel(p), rep_b.kernel(p)
        if f is None or g is None:
            continue
        if isinstance(f, ChainKernel) and isinstance(g, ChainKernel):
            out += float(chain_pairing_moment(f, g, c))
        else:
            f = f.to_tensor() if isinstance(f, ChainKernel) else f
            g = g.to_tensor() if isinstance(g, ChainKernel) else g
            out += math.factorial(p) * h_inner(f.symmetrize(), g.symmetrize(), model, p)
    return out


def apply_Linv(rep: ChaosRepresentation) -> ChaosRepresentation:
    if abs(rep.mean) > 1e-12:
        raise PreconditionError("L^{-1} is defined on centered variables; mean is %g" % rep.mean)
    return rep.map_orders(lambda p: -1.0 / p, mean=0.0)


def apply_L(rep: ChaosRepresentation) -> ChaosRepresentation:
    return rep.map_orders(lambda p: -float(p), mean=0.0)


def apply_Pt(rep: ChaosRepresentation, t: float) -> ChaosRepresentation:
    if t < 0:
        raise DomainError("semigroup time must be >= 0")
    return rep.map_orders(lambda p: math.exp(-t * p))


@dataclass(frozen=True)
class DerivativeRepresentation:
    """D^k F for a representation F, with k frozen slots.

    ``kernels[q]`` has order q in the free slots plus ``frozen`` trailing frozen
    axes; D^k F at frozen cells c is the chaos expansion with those axes fixed.
    """

    frozen: int
    kernels: tuple

    def at(self, *cells) -> ChaosRepresentation:
        if len(cells) != self.frozen:
            raise DomainError(f"expected {self.frozen} frozen cells")
        vals = []
        for k in self.kernels:
            vals.append(None if k is None else k[(Ellipsis,) + tuple(cells)])
        mean = float(vals[0]) if vals and vals[0] is not None else 0.0
        ks = tuple(None if v is None else ChaosKernelTensor(v.ndim, v) for v in vals[1:])
        return ChaosRepresentation(mean, ks)

    def norm2(self, model) -> np.ndarray:
        """E[(D^k F)^2] at every frozen cell tuple."""
        c = _cov_of(model)
        out = None
        for q, k in enumerate(self.kernels):
            if k is None:
                continue
            if q == 0:
                term = k**2
            else:
                term = np.zeros(k.shape[q:])
                # E[I_q(a)^2] = q! <a~, a~> per frozen cell
                for idx in np.ndindex(*k.shape[q:]):
                    a = symmetrize(k[(Ellipsis,) + idx])
                    term[idx] = math.factorial(q) * h_inner(a, a, c, q)
            out = term if out is None else out + term
        return out if out is not None else 0.0


def _dense(kernel):
    if kernel is None:
        return None
    if isinstance(kernel, ChainKernel):
        kernel = kernel.to_tensor()
    return kernel.symmetrize().data


def apply_D(rep: ChaosRepresentation) -> DerivativeRepresentation:
    """D_c F = sum_n n I_{n-1}(f_n(., c)); an empty object when F is constant."""
    ks = tuple(None if f is None else p * f for p, f in enumerate(map(_dense, rep.kernels), 1))
    return DerivativeRepresentation(1, ks)


def apply_D2(rep: ChaosRepresentation) -> DerivativeRepresentation:
    """D_{c,c'} F = sum_n n(n-1) I_{n-2}(f_n(., c, c'))."""
    dense = list(map(_dense, rep.kernels))[1:]
    ks = tuple(None if f is None else (p * (p - 1)) * f for p, f in enumerate(dense, 2))
    return DerivativeRepresentation(2, ks)


def derivative_norms(rep: ChaosRepresentation, model, order: int = 1) -> np.ndarray:
    """E[(D^k F)^2] for k = ``order`` at every frozen cell (tuple).

    Chain kernels are handled by contractions with the frozen slots left open,
    so this works on grids where dense tensors are out of reach.
    """
    if order not in (1, 2):
        raise DomainError("order must be 1 or 2")
    c = _cov_of(model)
    n = len(c)
    out = np.zeros((n,) * order)
    for k in rep.kernels:
        if k is None or k.order < order:
            continue
        if not isinstance(k, ChainKernel):
            d = (apply_D if order == 1 else apply_D2)(ChaosRepresentation(0.0, (None,) * (k.order - 1) + (k,)))
            out = out + d.norm2(c)
            continue
        out = out + chain_pairing_moment(k, k, c, frozen=order)
    return out


# ---------------------------------------------------------------------------
# Continuum kernel
# ---------------------------------------------------------------------------


def chaos_kernel_eval(green: GreenKernel, p: int, t: float, x, times, points, anchor_origin: bool = False) -> float:
    """Solution kernel f_{t,x,p} at (s_1, z_1), ..., (s_p, z_p).

    The points are sorted by time and the value is (1/p!) times the product of the
    p Green factors linking consecutive points up to the anchor (t, x).  With
    ``anchor_origin`` an extra factor G_{s_min}(z_min) ties the earliest point to
    the space-time origin.
    """
    if p < 1:
        raise DomainError("chaos kernels are defined for p >= 1; order 0 is the mean")
    s = np.asarray(times, float).reshape(p)
    d = green.dimension
    z = np.asarray(points, float).reshape(p, d) if d > 1 else np.asarray(points, float).reshape(p)
    if np.any(s >= t) or np.any(s <= 0):
        return 0.0
    order = np.argsort(s, kind="stable")
    s, z = s[order], z[order]
    ts = np.append(s, t)
    xs = np.concatenate([z, np.asarray(x, float).reshape((1,) + z.shape[1:])])
    val = np.prod(green_eval(green, np.diff(ts), np.diff(xs, axis=0)))
    if anchor_origin:
        val *= green_eval(green, s[0], z[0])
    return float(val) / math.factorial(p)
