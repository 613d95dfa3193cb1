"""Scalar clip algebra.

The clip ``[x]_a^b = min(max(a, x), b)`` is the only non-linearity the arc
field adds on top of ``f + t V(f)``.  Everything here works elementwise on
Python scalars, ``fractions.Fraction`` and numpy arrays alike.
"""

from __future__ import annotations

import csv
import io
import math
from dataclasses import dataclass

import numpy as np

from clipflow.errors import ContractError

ABS_TOL = 1e-12


@dataclass(frozen=True)
class ClipBounds:
    lower: float = 0.0
    upper: float = 1.0

    def __post_init__(self):
        lo, hi = float(self.lower), float(self.upper)
        if math.isnan(lo) or math.isnan(hi):
            raise ContractError("clip bounds must not be NaN")
        if lo > hi:
            raise ContractError(f"invalid clip bounds: lower {lo} > upper {hi}")
        object.__setattr__(self, "lower", lo)
        object.__setattr__(self, "upper", hi)

    @property
    def width(self) -> float:
        return self.upper - self.lower

    @property
    def finite(self) -> bool:
        return math.isfinite(self.lower) and math.isfinite(self.upper)


UNIT = ClipBounds(0.0, 1.0)
UNBOUNDED = ClipBounds(-math.inf, math.inf)


def _is_array(*xs) -> bool:
    return any(isinstance(x, np.ndarray) for x in xs)


def clip_low(x, a):
    """``[x]_a = max(x, a)``."""
    if _is_array(x, a):
        return np.maximum(x, a)
    return max(x, a)


def clip_high(x, b):
    """``[x]^b = min(x, b)``."""
    if _is_array(x, b):
        return np.minimum(x, b)
    return min(x, b)


def clip_between(x, a, b):
    """Two-sided clip with raw bounds, no validation; bounds may be arrays."""
    return clip_high(clip_low(x, a), b)


def clip(x, bounds: ClipBounds):
    if bounds.lower > bounds.upper:  # only reachable if someone bypassed __post_init__
        raise ContractError(f"invalid clip bounds: {bounds}")
    return clip_between(x, bounds.lower, bounds.upper)


def toy_arcfield_step(x, t):
    """Arc field ``X_t(x) = [x - t]_0`` of the one-dimensional absorbing-barrier example.

    Works on exact types (``Fraction``), in which case the semigroup law
    ``X_t(X_s(x)) == X_{s+t}(x)`` holds with equality.
    """
    if t < 0:
        raise ContractError(f"toy arc field needs t >= 0, got {t}")
    return clip_low(x - t, 0 * t)


@dataclass
class IdentityResult:
    name: str
    samples: int
    max_violation: float
    exact: bool

    @property
    def tolerance(self) -> float:
        return 0.0 if self.exact else ABS_TOL

    @property
    def passed(self) -> bool:
        return self.max_violation <= self.tolerance


def _eq(lhs, rhs):
    return float(np.max(np.abs(lhs - rhs)))


def _le(lhs, rhs):
    # positive part of lhs - rhs; 0 when the inequality holds
    return float(max(0.0, np.max(lhs - rhs)))


def _sorted_pair(u, v):
    return np.minimum(u, v), np.maximum(u, v)


def verify_clip_identities(sample_count: int = 1_000_000, seed: int = 0) -> list[IdentityResult]:
    """Check the clip identities and inequalities on random tuples.

    Magnitudes are drawn log-uniformly in [1e-2, 3e2] so that the 1e-12
    absolute tolerance on rearranged identities measures logic errors rather
    than the ulp of large operands.  Scaling factors span |r| in [1e-6, 1e6].
    """
    if sample_count < 1:
        raise ContractError("sample_count must be >= 1")
    n = int(sample_count)
    rng = np.random.default_rng(seed)
    scale = 10.0 ** rng.uniform(-2.0, math.log10(300.0), n)

    def draw():
        return scale * rng.uniform(-1.0, 1.0, n)

    x, y = draw(), draw()
    a, b = _sorted_pair(draw(), draw())
    c, d = _sorted_pair(draw(), draw())
    r = 10.0 ** rng.uniform(-6.0, 6.0, n)
    # half the scaling samples land inside the band after multiplication
    inside = rng.random(n) < 0.5
    xr = np.where(inside, rng.uniform(a, b) / r, x)

    results = []

    def add(name, violation, exact):
        results.append(IdentityResult(name, n, violation, exact))

    cl = clip_between

    add(
        "band_pass",
        max(_eq(cl(x, a, b), clip_low(clip_high(x, b), a)), _eq(cl(x, a, b), clip_high(clip_low(x, a), b))),
        True,
    )
    add("scaling_positive", _eq(cl(r * xr, a, b), r * cl(xr, a / r, b / r)), False)
    add("scaling_negative", _eq(cl(-r * xr, a, b), -r * cl(xr, b / -r, a / -r)), False)
    add("shift", _eq(cl(x + y, a, b), cl(x, a - y, b - y) + y), False)
    add(
        "shift_one_sided",
        max(_eq(clip_high(x + y, b), clip_high(x, b - y) + y), _eq(clip_low(x + y, a), clip_low(x, a - y) + y)),
        False,
    )
    add("decomposition", _eq(cl(x, a, b), clip_high(x, b) - clip_high(x, a) + a), False)

    # difference formula needs a >= c and b >= d on top of a <= b, c <= d
    lo4 = np.sort(np.stack([draw(), draw(), draw(), draw()]), axis=0)
    perm = rng.random(n) < 0.5
    cc = lo4[0]
    aa = np.where(perm, lo4[1], lo4[2])
    dd = np.where(perm, lo4[2], lo4[1])
    bb = lo4[3]
    add(
        "difference",
        _eq(cl(x, aa, bb) - cl(x, cc, dd), cl(x, dd, bb) - cl(x, cc, aa) - (dd - aa)),
        False,
    )

    lo, hi = np.maximum(a, c), np.minimum(b, d)
    ok = lo <= hi
    add("nesting", _eq(cl(cl(x[ok], a[ok], b[ok]), c[ok], d[ok]), cl(x[ok], lo[ok], hi[ok])) if ok.any() else 0.0, True)

    add(
        "lipschitz",
        max(
            _le(np.abs(cl(x, a, b) - cl(y, a, b)), np.abs(x - y)),
            _le(np.abs(clip_high(x, b) - clip_high(y, b)), np.abs(x - y)),
            _le(np.abs(clip_low(x, a) - clip_low(y, a)), np.abs(x - y)),
        ),
        True,
    )
    add(
        "bound_perturbation",
        max(
            _le(np.abs(cl(x, a, b) - cl(x, c, d)), np.maximum(np.abs(a - c), np.abs(b - d))),
            _le(
                np.abs(cl(x, a, b) - cl(y, c, d)),
                np.maximum(np.abs(x - y), np.maximum(np.abs(a - c), np.abs(b - d))),
            ),
        ),
        True,
    )

    p, q, s = np.sort(np.stack([draw(), draw(), draw()]), axis=0)
    gap = cl(x, q, s) - cl(x, p, q)
    add("three_point", max(_le(-gap, 0.0), _le(gap, s - p)), True)

    neg, pos = -np.abs(draw()), np.abs(draw())
    add("shrink", _le(np.abs(cl(x, neg, pos)), np.abs(x)), True)
    return results


def identity_report_csv(results: list[IdentityResult]) -> str:
    buf = io.StringIO()
    w = csv.writer(buf, lineterminator="\n")
    w.writerow(["identity_name", "samples", "max_violation"])
    for res in results:
        w.writerow([res.name, res.samples, repr(res.max_violation)])
    return buf.getvalue()
