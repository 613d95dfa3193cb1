"""Steppers.

Every stepper is a pure function ``state, t -> new state`` that allocates its
output.  The clipped Lenia arc field is

    X_t(f) = [f + t G(K*f)]_lower^upper,    0 <= t <= 1,

and the Euler flow composes ``X_{t/n}`` n times.
"""

from __future__ import annotations

from dataclasses import dataclass, field
from typing import Callable, Iterator, Optional

import numpy as np

from clipflow.clipcore import UNIT, ClipBounds, clip_between
from clipflow.errors import DimensionError, DomainError, StepSizeError
from clipflow.field import MultiField, ScalarField, unbounded
from clipflow.operators import (
    DiscreteKernel,
    GoLGrowth,
    GoLKernel,
    GrowthSpec,
    convolve_array,
    discretize_kernel,
    effective_max_abs,
    lipschitz_bound,
)


@dataclass(frozen=True, eq=False)
class LeniaSystem:
    kernel: DiscreteKernel
    growth: GrowthSpec
    bounds: ClipBounds = UNIT
    method: str = "auto"

    def __post_init__(self):
        if not self.bounds.lower < self.bounds.upper:
            raise ValueError("LeniaSystem needs bounds.lower < bounds.upper")

    def field_velocity(self, values: np.ndarray) -> np.ndarray:
        """``G(K*f)`` on a raw array."""
        return self.growth(convolve_array(values, self.kernel, self.method))

    @property
    def max_growth(self) -> float:
        """``max|G|`` over the inputs reachable from states inside ``bounds``."""
        sup = max(abs(self.bounds.lower), abs(self.bounds.upper))
        return effective_max_abs(self.growth, self.kernel, sup)

    @property
    def lipschitz_constant(self) -> float:
        return lipschitz_bound(self.growth, self.kernel)

    def step(self, f: ScalarField, t: float) -> ScalarField:
        return lenia_step(f, self, t)


def _check_t(t: float, name: str = "t"):
    if not 0.0 <= t <= 1.0:
        raise StepSizeError(f"step size {name}={t} outside the arc-field time domain [0, 1]")


def lenia_step(f: ScalarField, sys: LeniaSystem, t: float) -> ScalarField:
    _check_t(t)
    v = sys.field_velocity(f.values)
    out = clip_between(f.values + t * v, sys.bounds.lower, sys.bounds.upper)
    return ScalarField(out, f.dx, sys.bounds)


def iterate(f0, stepper: Callable, dt: float, steps: int) -> Iterator:
    """Yield ``f0, X_dt(f0), X_dt(X_dt(f0)), ...`` (``steps + 1`` states)."""
    state = f0
    yield state
    for _ in range(steps):
        state = stepper(state, dt)
        yield state


def euler_flow(f0, sys, t: float, n: int):
    """``X_{t/n}`` composed ``n`` times; ``sys`` is anything with ``step(state, dt)``."""
    if n < 1:
        raise ValueError("euler_flow needs n >= 1")
    if t < 0:
        raise StepSizeError("euler_flow needs t >= 0")
    dt = t / n
    _check_t(dt, "t/n")
    state = f0
    for _ in range(n):
        state = sys.step(state, dt)
    return state


def forward_derivative_field(f: ScalarField, sys: LeniaSystem) -> ScalarField:
    """Right-hand side of the integro-differential equation.

    ``G(K*f)`` in the interior, its positive part where ``f`` sits on the lower
    bound and its negative part where ``f`` sits on the upper bound.
    """
    v = sys.field_velocity(f.values)
    out = np.where(f.values <= sys.bounds.lower, np.maximum(v, 0.0), v)
    out = np.where(f.values >= sys.bounds.upper, np.minimum(v, 0.0), out)
    return unbounded(out, f.dx)


# --------------------------------------------------------------------------- Game of Life

_GOL_KERNEL = discretize_kernel(GoLKernel())
_GOL_GROWTH = GoLGrowth()


def _check_board(board: ScalarField):
    v = board.values
    if not np.all((v == 0.0) | (v == 1.0)):
        raise DomainError("Game of Life boards must be binary")


def gol_step(board: ScalarField) -> ScalarField:
    """Birth on 3, survival on 3 or 4, counting the 3x3 block including the cell itself."""
    _check_board(board)
    b = board.values.astype(np.int64)
    count = sum(np.roll(b, (j, i), axis=(0, 1)) for j in (-1, 0, 1) for i in (-1, 0, 1))
    alive = b == 1
    nxt = np.where(alive, (count == 3) | (count == 4), count == 3)
    return ScalarField(nxt.astype(np.float64), board.dx, UNIT)


def gol_step_conv(board: ScalarField) -> ScalarField:
    """``[b + G(K*b)]_0^1`` with the half-centre kernel; exact in binary floating point."""
    _check_board(board)
    u = convolve_array(board.values, _GOL_KERNEL, "direct")
    return ScalarField(clip_between(board.values + _GOL_GROWTH(u), 0.0, 1.0), board.dx, UNIT)


# --------------------------------------------------------------------------- Asymptotic Lenia


@dataclass(frozen=True, eq=False)
class AsymptoticSystem:
    """Clip-free variant ``f' = T(K*f) - f`` with ``T = (G + 1) / 2``."""

    lenia: LeniaSystem

    def step(self, f: ScalarField, dt: float) -> ScalarField:
        return asymptotic_step(f, self.lenia, dt)


def asymptotic_step(f: ScalarField, sys: LeniaSystem, dt: float) -> ScalarField:
    _check_t(dt, "dt")
    target = 0.5 * (sys.field_velocity(f.values) + 1.0)
    out = (1.0 - dt) * f.values + dt * target
    return ScalarField(out, f.dx, f.bounds)


# --------------------------------------------------------------------------- extensions

VARIANT_CHANNELS = {
    "X1_food": 1,
    "X2_food_growth": 1,
    "X3_depleting": 2,
    "X4_predprey": 2,
    "X5_full": 3,
}


def _same_shape(*fields: ScalarField):
    first = fields[0]
    for other in fields[1:]:
        if other.shape != first.shape:
            raise DimensionError(f"shape mismatch: {first.shape} vs {other.shape}")


def food_step(f: ScalarField, phi: ScalarField, t: float) -> ScalarField:
    """``[f + t [phi]^f]_0^1``: feed up to current strength, starve without floor."""
    _check_t(t)
    _same_shape(f, phi)
    out = clip_between(f.values + t * np.minimum(phi.values, f.values), 0.0, 1.0)
    return ScalarField(out, f.dx, UNIT)


def combined_step(f: ScalarField, phi: ScalarField, sys: LeniaSystem, t: float) -> ScalarField:
    _check_t(t)
    _same_shape(f, phi)
    v = np.minimum(phi.values, f.values) + sys.field_velocity(f.values)
    return ScalarField(clip_between(f.values + t * v, sys.bounds.lower, sys.bounds.upper), f.dx, sys.bounds)


def _check_channels(state: MultiField, n: int):
    if len(state) != n:
        raise DimensionError(f"expected {n} channels, got {len(state)}")


def depleting_food_step(state: MultiField, sys: LeniaSystem, t: float) -> MultiField:
    _check_t(t)
    _check_channels(state, 2)
    f, phi = state
    eaten = np.minimum(phi.values, f.values)
    f_new = clip_between(f.values + t * (eaten + sys.field_velocity(f.values)), 0.0, 1.0)
    phi_new = clip_between(phi.values - t * eaten, phi.bounds.lower, phi.bounds.upper)
    return MultiField.of(ScalarField(f_new, f.dx, UNIT), ScalarField(phi_new, phi.dx, phi.bounds))


@dataclass(frozen=True, eq=False)
class EcosystemSystem:
    """Food / predator / prey extensions.

    ``predator`` drives the first creature channel (and the only one for
    X1-X3); ``prey`` is the second creature channel of X4/X5.  ``food`` is
    the static food field used by X1/X2.
    """

    variant: str
    predator: Optional[LeniaSystem] = None
    prey: Optional[LeniaSystem] = None
    food: Optional[ScalarField] = None
    food_bounds: ClipBounds = field(default_factory=lambda: ClipBounds(0.0, 1.0))

    def __post_init__(self):
        if self.variant not in VARIANT_CHANNELS:
            raise ValueError(f"unknown ecosystem variant {self.variant!r}")
        if not self.food_bounds.lower < self.food_bounds.upper:
            raise ValueError("food bounds need a < b")
        if self.variant in ("X2_food_growth", "X3_depleting", "X4_predprey", "X5_full") and self.predator is None:
            raise ValueError(f"{self.variant} needs a predator system")
        if self.variant in ("X4_predprey", "X5_full") and self.prey is None:
            raise ValueError(f"{self.variant} needs a prey system")
        if self.variant in ("X1_food", "X2_food_growth") and self.food is None:
            raise ValueError(f"{self.variant} needs a static food field")

    @property
    def channels(self) -> int:
        return VARIANT_CHANNELS[self.variant]

    @property
    def lipschitz_constant(self) -> float:
        """``C5 = 2 + max_ij C_Gi ||K_j||_1`` over the configured species."""
        species = [s for s in (self.predator, self.prey) if s is not None]
        if not species:
            return 2.0
        return 2.0 + max(s.growth.lipschitz_constant * o.kernel.l1_norm for s in species for o in species)

    def step(self, state, t: float):
        if self.variant == "X1_food":
            f = state[0] if isinstance(state, MultiField) else state
            out = food_step(f, self.food, t)
        elif self.variant == "X2_food_growth":
            f = state[0] if isinstance(state, MultiField) else state
            out = combined_step(f, self.food, self.predator, t)
        elif self.variant == "X3_depleting":
            return depleting_food_step(state, self.predator, t)
        elif self.variant == "X4_predprey":
            return predator_prey_step(state, self, t)
        else:
            return ecosystem_step(state, self, t)
        return MultiField.of(out) if isinstance(state, MultiField) else out


def predator_prey_step(state: MultiField, eco: EcosystemSystem, t: float) -> MultiField:
    _check_t(t)
    _check_channels(state, 2)
    f, g = state
    eaten = np.minimum(g.values, f.values)
    f_new = clip_between(f.values + t * (eaten + eco.predator.field_velocity(f.values)), 0.0, 1.0)
    g_new = clip_between(g.values + t * (-eaten + eco.prey.field_velocity(g.values)), 0.0, 1.0)
    return MultiField.of(ScalarField(f_new, f.dx, UNIT), ScalarField(g_new, g.dx, UNIT))


def ecosystem_field(state: MultiField, eco: EcosystemSystem) -> list[np.ndarray]:
    """The three-species velocity ``V5`` as raw arrays (no clipping)."""
    _check_channels(state, 3)
    f, g, phi = (ch.values for ch in state)
    prey_eaten = np.minimum(g, f)
    food_eaten = np.minimum(phi, g)
    return [
        prey_eaten + eco.predator.field_velocity(f),
        -prey_eaten + food_eaten + eco.prey.field_velocity(g),
        -food_eaten,
    ]


def ecosystem_step(state: MultiField, eco: EcosystemSystem, t: float) -> MultiField:
    _check_t(t)
    vf, vg, vphi = ecosystem_field(state, eco)
    f, g, phi = state
    lo, hi = phi.bounds.lower, phi.bounds.upper
    return MultiField.of(
        ScalarField(clip_between(f.values + t * vf, 0.0, 1.0), f.dx, UNIT),
        ScalarField(clip_between(g.values + t * vg, 0.0, 1.0), g.dx, UNIT),
        ScalarField(clip_between(phi.values + t * vphi, lo, hi), phi.dx, phi.bounds),
    )
