"""Numerical checks of the arc-field regularity conditions and flow properties.

Bounds backed by an inequality chain (E1, speed, support growth) are checked
with an absolute slack of ``ABS_TOL`` to absorb rounding only.
"""

from __future__ import annotations

import csv
import io
import math
from dataclasses import dataclass, field, replace
from typing import Optional, Sequence

import numpy as np

from clipflow.clipcore import ABS_TOL, clip_between
from clipflow.dynamics import LeniaSystem, euler_flow, lenia_step
from clipflow.errors import HypothesisError, UnsupportedGrowthError
from clipflow.field import ScalarField, random_field, sup_distance, support_distance_map
from clipflow.operators import ConstantGrowth, Rectifier, nonpositive_radius


@dataclass
class ConditionReport:
    condition: str
    samples: int
    bound_constant: float
    max_violation: float
    speed_c1: float = 0.0
    speed_c2: float = 0.0
    details: dict = field(default_factory=dict)

    @property
    def passed(self) -> bool:
        return self.max_violation <= ABS_TOL

    def check_line(self, name: Optional[str] = None) -> str:
        return check_line(name or self.condition, self.passed, self.max_violation, self.bound_constant)


def check_line(name: str, passed: bool, max_violation: float, constant: float) -> str:
    return f"CHECK {name} {'pass' if passed else 'fail'} max_violation={max_violation:.6e} constant={constant:.6e}"


def reports_csv(reports: Sequence[ConditionReport]) -> str:
    buf = io.StringIO()
    w = csv.writer(buf, lineterminator="\n")
    w.writerow(["condition", "samples", "bound_constant", "max_violation", "c1", "c2", "pass"])
    for r in reports:
        w.writerow([r.condition, r.samples, repr(r.bound_constant), repr(r.max_violation), r.speed_c1, r.speed_c2,
                    int(r.passed)])
    return buf.getvalue()


def _random_state(rng: np.random.Generator, shape, dx: float, sys: LeniaSystem) -> ScalarField:
    """Random field with random amplitude so ``K*f`` sweeps the sensitive part of ``G``."""
    h, w = shape
    base = random_field(w, h, dx, sys.bounds, int(rng.integers(0, 2**63)))
    lo = sys.bounds.lower
    amp = rng.uniform(0.0, 1.0)
    return base.with_values(lo + amp * (base.values - lo))


def _require_lipschitz(sys: LeniaSystem) -> float:
    if not sys.growth.lipschitz:
        raise UnsupportedGrowthError(f"{type(sys.growth).__name__} growth is not Lipschitz; E1/E2 do not apply")
    return sys.lipschitz_constant


def verify_E1(
    sys: LeniaSystem,
    sample_count: int = 200,
    seed: int = 0,
    t_list: Sequence[float] = (1e-3, 1e-2, 1e-1),
    shape=(64, 64),
    dx: float | None = None,
    max_distance: float = 0.1,
) -> ConditionReport:
    """``d(X_t f, X_t g) <= (1 + t Lambda) d(f, g)`` with ``Lambda = C_G ||K||_1``."""
    lam = _require_lipschitz(sys)
    dx = sys.kernel.dx if dx is None else dx
    rng = np.random.default_rng(seed)
    worst = -math.inf
    worst_ratio = 0.0
    for _ in range(sample_count):
        f = _random_state(rng, shape, dx, sys)
        delta = rng.uniform(0.0, max_distance)
        noise = rng.uniform(-delta, delta, shape)
        g = f.with_values(clip_between(f.values + noise, sys.bounds.lower, sys.bounds.upper))
        d0 = sup_distance(f, g)
        for t in t_list:
            d1 = sup_distance(lenia_step(f, sys, t), lenia_step(g, sys, t))
            worst = max(worst, d1 - (1.0 + t * lam) * d0)
            if d0 > 0:
                worst_ratio = max(worst_ratio, d1 / d0)
    return ConditionReport(
        "E1", sample_count * len(t_list), lam, worst, 0.0, sys.max_growth,
        {"max_expansion_ratio": worst_ratio, "t_list": list(t_list)},
    )


@dataclass
class E2Report(ConditionReport):
    grid: list = field(default_factory=list)  # (s, t, r(s, t))

    def decade_maxima(self, exponents_per_decade: int = 2) -> list[float]:
        """Max of r(s, t) grouped by the finer of the two step exponents."""
        if not self.grid:
            return []
        exps = [max(-math.log2(s), -math.log2(t)) for s, t, _ in self.grid]
        first = min(exps)
        buckets: dict[int, float] = {}
        for e, (_, _, r) in zip(exps, self.grid):
            k = int((e - first) // exponents_per_decade)
            buckets[k] = max(buckets.get(k, 0.0), r)
        return [buckets[k] for k in sorted(buckets)]


def verify_E2(sys: LeniaSystem, f0: ScalarField, exponents: Sequence[int] = range(3, 11), slack: float = 4.0) -> E2Report:
    """Semigroup defect ``r(s, t) = d(X_{s+t} f, X_t X_s f) / (s t)`` on a dyadic grid.

    Passes when every defect is below ``slack * C_V * max|G| * s t`` (plus
    rounding slack).  The reported ``Omega`` estimate is ``max r``.
    """
    cv = _require_lipschitz(sys)
    rho = sys.max_growth
    bound = slack * cv * rho
    steps = [2.0**-e for e in exponents]
    cache = {}

    def X(s):
        if s not in cache:
            cache[s] = lenia_step(f0, sys, s)
        return cache[s]

    grid = []
    worst = -math.inf
    for s in steps:
        xs = X(s)
        for t in steps:
            if s + t > 1.0:
                continue
            d = sup_distance(X(s + t), lenia_step(xs, sys, t))
            grid.append((s, t, d / (s * t)))
            worst = max(worst, d - bound * s * t)
    omega = max(r for _, _, r in grid)
    rep = E2Report("E2", len(grid), bound, worst, 0.0, rho, {"omega_hat": omega, "C_V": cv}, grid)
    return rep


def verify_speed(sys: LeniaSystem, samples: int = 500, seed: int = 0, shape=(64, 64)) -> ConditionReport:
    """``d(X_s f, X_t f) <= |s - t| max|G|``; speed growth is linear with ``c1 = 0``."""
    rho = sys.max_growth
    rng = np.random.default_rng(seed)
    worst = -math.inf
    for _ in range(samples):
        f = _random_state(rng, shape, sys.kernel.dx, sys)
        s, t = rng.uniform(0.0, 1.0, 2)
        d = sup_distance(lenia_step(f, sys, s), lenia_step(f, sys, t))
        worst = max(worst, d - abs(s - t) * rho)
    return ConditionReport("speed", samples, rho, worst, 0.0, rho)


@dataclass
class ConvergenceReport:
    ns: list  # refinement levels n (powers of two)
    distances: list  # d_n = d(X^(n)_{t/n} f0, X^(2n)_{t/2n} f0)
    t: float
    reference: Optional[ScalarField] = None
    gradient_sup: float = 0.0
    tangency: list = field(default_factory=list)

    @property
    def orders(self) -> list[float]:
        out = []
        for a, b in zip(self.distances, self.distances[1:]):
            out.append(math.log2(a / b) if a > 0 and b > 0 else math.nan)
        return out

    def strictly_decreasing(self, from_n: int = 1) -> bool:
        ds = [d for n, d in zip(self.ns, self.distances) if n >= from_n]
        return all(b < a for a, b in zip(ds, ds[1:]))

    def monotone(self, from_n: int = 8) -> bool:
        ds = [d for n, d in zip(self.ns, self.distances) if n >= from_n]
        return all(b <= a for a, b in zip(ds, ds[1:]))

    def csv(self) -> str:
        buf = io.StringIO()
        w = csv.writer(buf, lineterminator="\n")
        w.writerow(["n", "d_n", "order"])
        orders = self.orders + [math.nan]
        for n, d, o in zip(self.ns, self.distances, orders):
            w.writerow([n, repr(d), "" if math.isnan(o) else repr(o)])
        return buf.getvalue()


def discrete_gradient_sup(f: ScalarField) -> float:
    """Largest forward-difference slope on the torus; a diagnostic only."""
    v = f.values
    gx = np.abs(np.roll(v, -1, axis=1) - v)
    gy = np.abs(np.roll(v, -1, axis=0) - v)
    return float(max(gx.max(), gy.max()) / f.dx)


def convergence_study(sys, f0, t: float = 1.0, n_max_log2: int = 9) -> ConvergenceReport:
    """Euler refinement: flows at ``n = 2, 4, ..., 2**n_max_log2`` and distances between neighbours."""
    if n_max_log2 < 2:
        raise ValueError("need at least 2 refinement levels (n_max_log2 >= 2)")
    ns = [2**k for k in range(1, n_max_log2 + 1)]
    if t / ns[0] > 1.0:
        raise ValueError(f"t = {t} too large for n = {ns[0]} (step must be <= 1)")
    flows = [euler_flow(f0, sys, t, n) for n in ns]
    dists = [sup_distance(a, b) for a, b in zip(flows, flows[1:])]
    ref = flows[-1]
    grad = discrete_gradient_sup(ref) if isinstance(ref, ScalarField) else 0.0
    return ConvergenceReport(ns[:-1], dists, t, ref, grad)


def tangency_residual(
    sys, f0, t: float = 1.0, h_list: Sequence[float] = tuple(2.0**-k for k in range(2, 9)), n_ref: int = 1024
) -> list[tuple[float, float]]:
    """``d(F_{t+h} f0, X_h(F_t f0)) / h`` with F the Euler flow of step ``t / n_ref``.

    ``F_{t+h}`` continues the same uniform-step Euler curve past ``t`` so both
    flow values come from one approximate semigroup.
    """
    if n_ref < 256:
        raise ValueError("n_ref must be >= 256")
    delta = t / n_ref
    ft = euler_flow(f0, sys, t, n_ref)
    out = []
    for h in h_list:
        m = max(1, int(round(h / delta)))
        fth = euler_flow(ft, sys, m * delta, m)
        out.append((h, sup_distance(fth, sys.step(ft, h)) / h))
    return out


def tangency_csv(rows) -> str:
    buf = io.StringIO()
    w = csv.writer(buf, lineterminator="\n")
    w.writerow(["h", "residual"])
    for h, r in rows:
        w.writerow([repr(h), repr(r)])
    return buf.getvalue()


@dataclass
class SupportReport:
    a: float
    g: float
    R: float
    l1: float
    checked: int
    violations: int
    tightest_margin: float
    wraps: bool
    times: list = field(default_factory=list)
    max_value: float = 0.0  # largest f value seen on a cell the bound says is still 0

    @property
    def passed(self) -> bool:
        return self.violations == 0


def support_bound_check(sys: LeniaSystem, f0: ScalarField, t_total: float, n: int) -> SupportReport:
    """Cells at distance ``d`` from ``supp f0`` stay exactly 0 up to ``a floor(d/R) / (g ||K||_1)``.

    ``a`` is the half-width of the interval around 0 where ``G <= 0`` and ``g``
    the largest positive value of ``G``.  The tightest margin is the smallest
    ``(first positive time) - (guaranteed-zero time)`` over cells that did
    become positive; it is never negative when the bound holds.
    """
    a = nonpositive_radius(sys.growth)
    if not a > 0:
        raise HypothesisError(f"{type(sys.growth).__name__}: no a > 0 with G(u) <= 0 for |u| <= a")
    g = sys.growth.max_positive
    R = sys.kernel.support_radius_space
    l1 = sys.kernel.l1_norm
    d = support_distance_map(f0)
    k = np.floor(d / R)
    if g <= 0 or math.isinf(a):
        guaranteed = np.where(k >= 1, math.inf, 0.0)
    else:
        guaranteed = a * k / (g * l1)
    dt = t_total / n
    state = f0
    violations = 0
    checked = 0
    max_value = 0.0
    first_pos = np.full(f0.shape, math.inf)
    times = []
    for step in range(1, n + 1):
        state = sys.step(state, dt)
        tau = step * dt
        covered = guaranteed >= tau
        checked += int(covered.sum())
        bad = covered & (state.values != 0.0)
        violations += int(bad.sum())
        if bad.any():
            max_value = max(max_value, float(state.values[bad].max()))
        newly = (state.values > 0) & np.isinf(first_pos)
        first_pos[newly] = tau
        times.append(tau)
    grew = np.isfinite(first_pos) & (k >= 1)
    margin = float(np.min(first_pos[grew] - guaranteed[grew])) if grew.any() else math.inf
    wraps = _neighbourhood_wraps(state, R) or _neighbourhood_wraps(f0, R)
    return SupportReport(a, g, R, l1, checked, violations, margin, wraps, times, max_value)


def _neighbourhood_wraps(f: ScalarField, R: float) -> bool:
    """True when the R-neighbourhood of ``supp f`` spans a full period on either axis."""
    pos = np.argwhere(f.values > 0)
    if len(pos) == 0:
        return False
    reach = 2.0 * R / f.dx
    return any(np.ptp(pos[:, ax]) + 1 + reach >= f.shape[ax] for ax in (0, 1))


@dataclass
class MonotoneReport:
    steps: int
    decreases: int
    support_shrinks: int
    support_sizes: list

    @property
    def support_growth(self) -> list[int]:
        return [b - a for a, b in zip(self.support_sizes, self.support_sizes[1:])]

    @property
    def passed(self) -> bool:
        return self.decreases == 0 and self.support_shrinks == 0


def monotone_growth_check(sys: LeniaSystem, f0: ScalarField, steps: int = 10, t: float = 0.1) -> MonotoneReport:
    """With ``K >= 0``, ``K(0) > 0`` and ``G(0) = 0 < G(u)`` for ``u > 0`` the flow never decreases.

    On a grid the support grows by at most the kernel radius per step rather
    than filling space instantly.  Runs on direct convolution: FFT round-off
    leaves ~1e-17 residue in cells that should be exactly 0, which the
    rectifier would turn into spurious support.
    """
    if not sys.kernel.nonnegative or not sys.kernel.center_weight > 0:
        raise HypothesisError("monotone growth needs a nonnegative kernel with positive centre weight")
    if not isinstance(sys.growth, Rectifier):
        raise HypothesisError("monotone growth needs Rectifier growth (G(0) = 0, G(u) > 0 for u > 0)")
    sys = replace(sys, method="direct")
    state = f0
    sizes = [int((f0.values > 0).sum())]
    decreases = shrinks = 0
    for _ in range(steps):
        nxt = sys.step(state, t)
        decreases += int((nxt.values < state.values).sum())
        shrinks += int(((state.values > 0) & ~(nxt.values > 0)).sum())
        sizes.append(int((nxt.values > 0).sum()))
        state = nxt
    return MonotoneReport(steps, decreases, shrinks, sizes)


def extinction_time(sys, f0, t_step: float, max_steps: int) -> Optional[int]:
    """First step index at which every creature value is exactly 0, or None."""
    state = f0
    for k in range(max_steps + 1):
        if _extinct(state):
            return k
        if k < max_steps:
            state = sys.step(state, t_step)
    return None


def _extinct(state) -> bool:
    chans = state.channels if hasattr(state, "channels") else (state,)
    return all(not np.any(ch.values != 0.0) for ch in chans)


def irreversibility_demo(width: int = 16, height: int = 16, barrier: str = "upper"):
    """Two distinct constant fields whose clipped steps coincide bit for bit.

    Returns ``(f, g, t, sys)``.  ``barrier="upper"`` uses growth +1 from 0.95
    and 0.9; ``"lower"`` uses growth -1 from 0.05 and 0.1.  Both with t = 0.1.
    """
    from clipflow.field import constant_field
    from clipflow.operators import GoLKernel, discretize_kernel

    kernel = discretize_kernel(GoLKernel(normalize=True))
    if barrier == "upper":
        growth, fv, gv = ConstantGrowth(1.0), 0.95, 0.9
    else:
        growth, fv, gv = ConstantGrowth(-1.0), 0.05, 0.1
    sys = LeniaSystem(kernel, growth)
    f = constant_field(fv, width, height)
    g = constant_field(gv, width, height)
    return f, g, 0.1, sys
