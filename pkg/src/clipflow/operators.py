"""Kernels, growth functions and periodic convolution.

Kernel weights carry the quadrature factor ``dx**2`` so that a plain
discrete convolution approximates ``(K * f)(x) = int K(x - y) f(y) dy`` and
``l1_norm`` is directly comparable across resolutions.

Note on norms: for a general field only ``sup|K*f| <= ||K||_1 sup|f|``
holds; equality needs e.g. a constant field and a sign-definite kernel.
"""

from __future__ import annotations

import math
import os
from dataclasses import dataclass, field
from typing import Union

import numpy as np
import scipy.fft

from clipflow.clipcore import ClipBounds
from clipflow.errors import DegenerateKernelError, DimensionError, UnsupportedGrowthError
from clipflow.field import MultiField, ScalarField, unbounded

RING_TRUNCATION = 1e-12


# --------------------------------------------------------------------------- kernels


@dataclass(frozen=True)
class GoLKernel:
    """Moore neighbourhood with weight 1/2 on the centre cell; ignores dx."""

    normalize: bool = False


@dataclass(frozen=True)
class ExpBumpKernel:
    """``exp(4 - 1/(r(1-r)))`` on ``0 < r < 1`` with ``r = |x| / scale``."""

    scale: float = 1.0
    normalize: bool = False

    def __post_init__(self):
        if not self.scale > 0:
            raise ValueError("ExpBump scale must be positive")


@dataclass(frozen=True)
class RingSumKernel:
    """``sum_i b_i exp(-((r/c) - a_i)**2 / (2 w_i))``."""

    c: float
    a: tuple
    b: tuple
    w: tuple
    normalize: bool = False

    def __post_init__(self):
        a, b, w = (tuple(float(v) for v in vs) for vs in (self.a, self.b, self.w))
        if not a or not (len(a) == len(b) == len(w)):
            raise ValueError("RingSum needs k >= 1 equally long a, b, w lists")
        if any(wi <= 0 for wi in w) or not self.c > 0:
            raise ValueError("RingSum needs w_i > 0 and c > 0")
        object.__setattr__(self, "a", a)
        object.__setattr__(self, "b", b)
        object.__setattr__(self, "w", w)

    @property
    def k(self) -> int:
        return len(self.a)


@dataclass(frozen=True)
class TableKernel:
    """Explicit ``(2 radius + 1)**2`` row-major weight table, used as given."""

    radius: int
    weights: tuple
    normalize: bool = False

    def __post_init__(self):
        wts = tuple(float(v) for v in np.ravel(self.weights))
        if self.radius < 0 or len(wts) != (2 * self.radius + 1) ** 2:
            raise ValueError(f"Table kernel of radius {self.radius} needs {(2 * self.radius + 1) ** 2} weights")
        object.__setattr__(self, "weights", wts)


KernelSpec = Union[GoLKernel, ExpBumpKernel, RingSumKernel, TableKernel]


def kernel_profile(spec: KernelSpec, r):
    """Analytic radial kernel value at distance ``r`` (space units)."""
    r = np.asarray(r, dtype=np.float64)
    if isinstance(spec, ExpBumpKernel):
        q = r / spec.scale
        out = np.zeros_like(q)
        inside = (q > 0) & (q < 1)
        qi = q[inside]
        out[inside] = np.exp(4.0 - 1.0 / (qi * (1.0 - qi)))
        return out
    if isinstance(spec, RingSumKernel):
        q = r / spec.c
        return sum(bi * np.exp(-((q - ai) ** 2) / (2.0 * wi)) for ai, bi, wi in zip(spec.a, spec.b, spec.w))
    raise TypeError(f"{type(spec).__name__} has no radial profile")


def _ring_truncation_radius(spec: RingSumKernel) -> float:
    reach = max(ai + 12.0 * math.sqrt(wi) for ai, wi in zip(spec.a, spec.w))
    rs = np.linspace(0.0, spec.c * max(reach, 1e-9), 20001)
    peak = float(np.max(np.abs(kernel_profile(spec, rs))))
    if peak == 0.0:
        raise DegenerateKernelError("RingSum kernel is identically zero")
    # beyond this radius every term is below RING_TRUNCATION * peak / k
    rmax = 0.0
    for ai, bi, wi in zip(spec.a, spec.b, spec.w):
        if bi == 0:
            continue
        ratio = abs(bi) * spec.k / (RING_TRUNCATION * peak)
        if ratio > 1:
            rmax = max(rmax, spec.c * (ai + math.sqrt(2.0 * wi * math.log(ratio))))
        else:
            rmax = max(rmax, spec.c * max(ai, 0.0))
    return rmax


@dataclass(frozen=True, eq=False)
class DiscreteKernel:
    weights: np.ndarray
    dx: float
    l1_norm: float
    support_radius_space: float
    _fft_cache: dict = field(default_factory=dict, repr=False, compare=False)

    @property
    def radius_cells(self) -> int:
        return self.weights.shape[0] // 2

    @property
    def diameter(self) -> int:
        return self.weights.shape[0]

    @property
    def nonnegative(self) -> bool:
        return bool(np.all(self.weights >= 0))

    @property
    def center_weight(self) -> float:
        r = self.radius_cells
        return float(self.weights[r, r])


def _l1_fixed_order(weights: np.ndarray) -> float:
    total = 0.0
    for v in np.abs(weights).ravel().tolist():
        total += v
    return total


def from_weights(weights, dx: float = 1.0) -> DiscreteKernel:
    """Wrap a square, odd-sized weight table (centre at ``(r, r)``)."""
    w = np.array(weights, dtype=np.float64, copy=True)
    if w.ndim != 2 or w.shape[0] != w.shape[1] or w.shape[0] % 2 == 0:
        raise DimensionError(f"kernel table must be square with odd size, got {w.shape}")
    l1 = _l1_fixed_order(w)
    if not l1 > 0:
        raise DegenerateKernelError("kernel has zero L1 norm")
    r = w.shape[0] // 2
    nz = np.argwhere(w != 0) - r
    reach = float(np.sqrt((nz.astype(float) ** 2).sum(axis=1)).max())
    w.flags.writeable = False
    # every nonzero offset lies strictly inside the ball of this radius
    return DiscreteKernel(w, float(dx), l1, (reach + 0.5) * dx)


def discretize_kernel(spec: KernelSpec, dx: float = 1.0) -> DiscreteKernel:
    if not dx > 0:
        raise ValueError("dx must be positive")
    if isinstance(spec, GoLKernel):
        w = np.ones((3, 3))
        w[1, 1] = 0.5
    elif isinstance(spec, TableKernel):
        n = 2 * spec.radius + 1
        w = np.array(spec.weights).reshape(n, n)
    else:
        if isinstance(spec, ExpBumpKernel):
            # offsets at distance >= scale vanish, so (r+1) dx >= scale suffices
            r = max(int(math.ceil(spec.scale / dx)) - 1, 0)
            rtrunc = math.inf
        else:
            rtrunc = _ring_truncation_radius(spec)
            r = int(math.ceil(rtrunc / dx))
        off = np.arange(-r, r + 1) * dx
        dist = np.sqrt(off[:, None] ** 2 + off[None, :] ** 2)
        w = dx * dx * kernel_profile(spec, dist)
        if math.isfinite(rtrunc):
            w[dist > rtrunc] = 0.0
        if not np.any(w != 0):
            raise DegenerateKernelError(f"kernel support covers no grid cell at dx={dx}")
    if spec.normalize:
        w = w / _l1_fixed_order(w)
    return from_weights(w, dx)


# --------------------------------------------------------------------------- growth


@dataclass(frozen=True)
class GoLGrowth:
    """``2 * 1[2.5, 3.5](u) - 1``, endpoints inclusive.  Not Lipschitz."""

    lipschitz = False

    def __call__(self, u):
        u = np.asarray(u, dtype=np.float64)
        return np.where((u >= 2.5) & (u <= 3.5), 1.0, -1.0)

    @property
    def lipschitz_constant(self) -> float:
        return math.inf

    @property
    def max_abs(self) -> float:
        return 1.0

    @property
    def max_positive(self) -> float:
        return 1.0


@dataclass(frozen=True)
class GaussianBump:
    """``2 exp(-(u - mu)**2 / (2 sigma**2)) - 1``."""

    mu: float = 0.15
    sigma: float = 0.015
    lipschitz = True

    def __post_init__(self):
        if not self.sigma > 0:
            raise ValueError("GaussianBump sigma must be positive")

    def __call__(self, u):
        u = np.asarray(u, dtype=np.float64)
        return 2.0 * np.exp(-((u - self.mu) ** 2) / (2.0 * self.sigma**2)) - 1.0

    @property
    def lipschitz_constant(self) -> float:
        # max of |d/du| is attained at u = mu +- sigma
        return 2.0 / (self.sigma * math.sqrt(math.e))

    @property
    def max_abs(self) -> float:
        return 1.0

    @property
    def max_positive(self) -> float:
        return 1.0


@dataclass(frozen=True)
class ConstantGrowth:
    c: float = 0.0
    lipschitz = True

    def __call__(self, u):
        return np.full(np.shape(u), float(self.c))

    @property
    def lipschitz_constant(self) -> float:
        return 0.0

    @property
    def max_abs(self) -> float:
        return abs(self.c)

    @property
    def max_positive(self) -> float:
        return max(self.c, 0.0)


@dataclass(frozen=True)
class Rectifier:
    """``min([u]_0, cap)``.

    With ``cap = inf`` this is unbounded in general; on states in ``[0, 1]``
    convolved with a nonnegative kernel its input never exceeds ``||K||_1``,
    which :func:`effective_max_abs` takes into account.
    """

    cap: float = math.inf
    lipschitz = True

    def __call__(self, u):
        u = np.asarray(u, dtype=np.float64)
        return np.minimum(np.maximum(u, 0.0), self.cap)

    @property
    def lipschitz_constant(self) -> float:
        return 1.0

    @property
    def max_abs(self) -> float:
        return self.cap

    @property
    def max_positive(self) -> float:
        return self.cap


@dataclass(frozen=True)
class TableGrowth:
    """Piecewise-linear interpolation through ``(u, G(u))`` breakpoints, flat outside."""

    breakpoints: tuple
    lipschitz = True

    def __post_init__(self):
        pts = tuple((float(u), float(g)) for u, g in self.breakpoints)
        if len(pts) < 1 or any(pts[i + 1][0] <= pts[i][0] for i in range(len(pts) - 1)):
            raise ValueError("Table growth needs strictly increasing breakpoints")
        object.__setattr__(self, "breakpoints", pts)

    @property
    def _uv(self):
        u, g = zip(*self.breakpoints)
        return np.array(u), np.array(g)

    def __call__(self, u):
        us, gs = self._uv
        return np.interp(np.asarray(u, dtype=np.float64), us, gs)

    @property
    def lipschitz_constant(self) -> float:
        us, gs = self._uv
        if len(us) < 2:
            return 0.0
        return float(np.max(np.abs(np.diff(gs) / np.diff(us))))

    @property
    def max_abs(self) -> float:
        return float(np.max(np.abs(self._uv[1])))

    @property
    def max_positive(self) -> float:
        return max(float(np.max(self._uv[1])), 0.0)


GrowthSpec = Union[GoLGrowth, GaussianBump, ConstantGrowth, Rectifier, TableGrowth]


def growth_eval(G: GrowthSpec, u: ScalarField) -> ScalarField:
    return unbounded(G(u.values), u.dx)


def lipschitz_bound(G: GrowthSpec, K: DiscreteKernel) -> float:
    """``C_V = C_G * ||K||_1``, the global Lipschitz constant of ``f -> G(K*f)``."""
    if not G.lipschitz:
        raise UnsupportedGrowthError(f"{type(G).__name__} is not Lipschitz continuous")
    return G.lipschitz_constant * K.l1_norm


def effective_max_abs(G: GrowthSpec, K: DiscreteKernel, state_sup: float = 1.0) -> float:
    """Bound on ``sup|G(K*f)|`` over states with ``sup|f| <= state_sup``."""
    if isinstance(G, Rectifier):
        return min(G.cap, K.l1_norm * state_sup)
    return G.max_abs


def nonpositive_radius(G: GrowthSpec) -> float:
    """Largest ``a`` with ``G(u) <= 0`` for all ``|u| <= a`` (0 if none)."""
    if isinstance(G, GaussianBump):
        half = G.sigma * math.sqrt(2.0 * math.log(2.0))
        return max(G.mu - half, 0.0) if G.mu > 0 else max(-G.mu - half, 0.0)
    if isinstance(G, ConstantGrowth):
        return math.inf if G.c <= 0 else 0.0
    if isinstance(G, Rectifier):
        return 0.0
    if isinstance(G, GoLGrowth):
        return math.nextafter(2.5, 0.0)
    if isinstance(G, TableGrowth):
        return _table_nonpositive_radius(G)
    raise UnsupportedGrowthError(type(G).__name__)


def _table_nonpositive_radius(G: TableGrowth) -> float:
    us, gs = G._uv
    if G(0.0) > 0:
        return 0.0
    # G is linear between breakpoints, so the first positive excursion on either
    # side of 0 starts at a breakpoint or a root on a segment
    best = math.inf
    for sign in (1.0, -1.0):
        pts = sorted({0.0, *[float(u) for u in us if sign * u > 0]}, key=lambda v: sign * v)
        prev = pts[0]
        for cur in pts[1:]:
            g0, g1 = float(G(prev)), float(G(cur))
            if g1 > 0:
                root = prev + (cur - prev) * (0.0 - g0) / (g1 - g0) if g1 != g0 else prev
                best = min(best, abs(root))
                break
            prev = cur
        else:
            tail = gs[-1] if sign > 0 else gs[0]
            if tail > 0:
                best = min(best, abs(prev))
    return best


# --------------------------------------------------------------------------- convolution


def fft_workers() -> int:
    """Worker count for FFTs from ``CLIPFLOW_THREADS`` (0 or unset = all cores)."""
    raw = os.environ.get("CLIPFLOW_THREADS", "0").strip() or "0"
    n = int(raw)
    return n if n > 0 else (os.cpu_count() or 1)


def _check_fits(shape, K: DiscreteKernel):
    if K.diameter > shape[0] or K.diameter > shape[1]:
        raise DimensionError(f"kernel diameter {K.diameter} exceeds grid {shape[1]}x{shape[0]}")


def _is_pow2(n: int) -> bool:
    return n > 0 and n & (n - 1) == 0


def fft_eligible(shape, K: DiscreteKernel) -> bool:
    return _is_pow2(shape[0]) and _is_pow2(shape[1]) and K.diameter <= min(shape)


def convolve_direct_array(arr: np.ndarray, K: DiscreteKernel) -> np.ndarray:
    """``out(x) = sum_y K(y) arr(x - y)`` with wrap; offsets visited row-major."""
    _check_fits(arr.shape, K)
    r = K.radius_cells
    out = np.zeros_like(arr, dtype=np.float64)
    for j in range(-r, r + 1):
        for i in range(-r, r + 1):
            w = K.weights[j + r, i + r]
            if w != 0.0:
                out += w * np.roll(arr, (j, i), axis=(0, 1))
    return out


def _kernel_spectrum(K: DiscreteKernel, shape) -> np.ndarray:
    spec = K._fft_cache.get(shape)
    if spec is None:
        r = K.radius_cells
        emb = np.zeros(shape)
        js = np.arange(-r, r + 1) % shape[0]
        is_ = np.arange(-r, r + 1) % shape[1]
        emb[np.ix_(js, is_)] = K.weights
        spec = scipy.fft.rfft2(emb, workers=1)
        K._fft_cache[shape] = spec
    return spec


def convolve_fft_array(arr: np.ndarray, K: DiscreteKernel) -> np.ndarray:
    _check_fits(arr.shape, K)
    if not fft_eligible(arr.shape, K):
        return convolve_direct_array(arr, K)
    workers = fft_workers()
    spec = _kernel_spectrum(K, arr.shape)
    return scipy.fft.irfft2(scipy.fft.rfft2(arr, workers=workers) * spec, s=arr.shape, workers=workers)


def convolve_array(arr: np.ndarray, K: DiscreteKernel, method: str = "auto") -> np.ndarray:
    if method == "direct":
        return convolve_direct_array(arr, K)
    if method in ("fft", "auto"):
        return convolve_fft_array(arr, K)
    raise ValueError(f"unknown convolution method {method!r}")


def convolve_direct(f: ScalarField, K: DiscreteKernel) -> ScalarField:
    return unbounded(convolve_direct_array(f.values, K), f.dx)


def convolve_fft(f: ScalarField, K: DiscreteKernel) -> ScalarField:
    return unbounded(convolve_fft_array(f.values, K), f.dx)


def convolve(f: ScalarField, K: DiscreteKernel, method: str = "auto") -> ScalarField:
    return unbounded(convolve_array(f.values, K, method), f.dx)


def kernel_as_field(K: DiscreteKernel) -> MultiField:
    """One-channel MultiField holding the weight table, for dumping to a LENF file."""
    lo, hi = float(K.weights.min()), float(K.weights.max())
    return MultiField.of(ScalarField(K.weights, K.dx, ClipBounds(lo, hi if hi > lo else lo + 1.0)))

