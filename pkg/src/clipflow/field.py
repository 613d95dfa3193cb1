"""Grid fields on a flat 2-D torus.

A ``ScalarField`` is a ``(height, width)`` float64 array sampled with cell
edge ``dx`` plus the clip bounds its values must respect.  A ``MultiField``
stacks channels that share the grid.  Fields are treated as immutable: the
value array is copied on construction and flagged read-only.

Random fields use SplitMix64.  Output ``i`` (0-based) of stream ``seed`` is::

    z  = seed + (i + 1) * 0x9E3779B97F4A7C15            (mod 2**64)
    z  = (z ^ (z >> 30)) * 0xBF58476D1CE4E5B9
    z  = (z ^ (z >> 27)) * 0x94D049BB133111EB
    z ^= z >> 31
    u  = (z >> 11) * 2**-53                              in [0, 1)

which is exactly the sequential SplitMix64 generator, evaluated in
counter mode so a whole grid is drawn in one vectorized pass.
"""

from __future__ import annotations

import math
import struct
from dataclasses import dataclass
from pathlib import Path
from typing import Sequence, Union

import numpy as np
from scipy import ndimage

from clipflow.clipcore import UNBOUNDED, UNIT, ClipBounds
from clipflow.errors import ContractError, DimensionError, FieldFormatError, RenderError

MAGIC = b"LENF"
VERSION = 1
_HEADER = struct.Struct("<4sHHIId")
_BOUNDS = struct.Struct("<dd")
_MAX_CELLS = 1 << 31


@dataclass(frozen=True, eq=False)
class ScalarField:
    values: np.ndarray
    dx: float = 1.0
    bounds: ClipBounds = UNIT

    def __post_init__(self):
        arr = np.array(self.values, dtype=np.float64, copy=True)
        if arr.ndim != 2 or arr.size == 0:
            raise DimensionError(f"field values must be a non-empty 2-D array, got shape {arr.shape}")
        if not self.dx > 0 or not math.isfinite(self.dx):
            raise ContractError(f"dx must be positive and finite, got {self.dx}")
        if not np.all(np.isfinite(arr)):
            raise ContractError("field values must be finite")
        lo, hi = self.bounds.lower, self.bounds.upper
        if arr.min() < lo or arr.max() > hi:
            raise ContractError(f"field values outside bounds [{lo}, {hi}]: range [{arr.min()}, {arr.max()}]")
        arr.flags.writeable = False
        object.__setattr__(self, "values", arr)
        object.__setattr__(self, "dx", float(self.dx))

    @property
    def height(self) -> int:
        return self.values.shape[0]

    @property
    def width(self) -> int:
        return self.values.shape[1]

    @property
    def shape(self) -> tuple[int, int]:
        return self.values.shape

    def with_values(self, values, bounds: ClipBounds | None = None) -> "ScalarField":
        return ScalarField(values, self.dx, self.bounds if bounds is None else bounds)

    def __repr__(self):
        return f"ScalarField({self.width}x{self.height}, dx={self.dx}, bounds=[{self.bounds.lower}, {self.bounds.upper}])"


@dataclass(frozen=True, eq=False)
class MultiField:
    channels: tuple

    def __post_init__(self):
        chans = tuple(self.channels)
        if not chans:
            raise DimensionError("a MultiField needs at least one channel")
        first = chans[0]
        for ch in chans[1:]:
            if ch.shape != first.shape or ch.dx != first.dx:
                raise DimensionError("all channels must share dimensions and dx")
        if min(ch.bounds.width for ch in chans) <= 0:
            raise ContractError("every channel needs upper > lower")
        object.__setattr__(self, "channels", chans)

    def __len__(self):
        return len(self.channels)

    def __getitem__(self, i) -> ScalarField:
        return self.channels[i]

    def __iter__(self):
        return iter(self.channels)

    @property
    def shape(self):
        return self.channels[0].shape

    @property
    def dx(self):
        return self.channels[0].dx

    @classmethod
    def of(cls, *channels: ScalarField) -> "MultiField":
        return cls(tuple(channels))


AnyField = Union[ScalarField, MultiField]


def _channels(f: AnyField) -> tuple:
    return f.channels if isinstance(f, MultiField) else (f,)


def sup_distance(f: AnyField, g: AnyField) -> float:
    """Sup metric ``max |f - g|`` over all cells and channels."""
    fc, gc = _channels(f), _channels(g)
    if len(fc) != len(gc):
        raise DimensionError(f"channel count mismatch: {len(fc)} vs {len(gc)}")
    dist = 0.0
    for a, b in zip(fc, gc):
        if a.shape != b.shape or a.dx != b.dx:
            raise DimensionError(f"shape mismatch: {a.shape}/dx={a.dx} vs {b.shape}/dx={b.dx}")
        dist = max(dist, float(np.max(np.abs(a.values - b.values))))
    return dist


def mass(f: ScalarField) -> float:
    """Quadrature mass ``dx**2 * sum(values)``."""
    return f.dx * f.dx * float(np.sum(f.values))


def support_distance_map(f: ScalarField) -> np.ndarray:
    """Wrapped Euclidean distance (space units) from each cell to ``{f > 0}``.

    Cells in the support get 0; an empty support gives +inf everywhere.
    The torus is unrolled into a 3x3 tiling so the nearest periodic image is
    always present for the exact Euclidean distance transform.
    """
    support = f.values > 0
    if not support.any():
        return np.full(f.shape, np.inf)
    h, w = f.shape
    tiled = np.tile(~support, (3, 3))
    dist = ndimage.distance_transform_edt(tiled)
    return dist[h : 2 * h, w : 2 * w] * f.dx


def write_field_file(f: AnyField, path) -> None:
    chans = _channels(f)
    h, w = chans[0].shape
    parts = [_HEADER.pack(MAGIC, VERSION, len(chans), w, h, chans[0].dx)]
    for ch in chans:
        parts.append(_BOUNDS.pack(ch.bounds.lower, ch.bounds.upper))
    for ch in chans:
        parts.append(np.ascontiguousarray(ch.values, dtype="<f8").tobytes())
    Path(path).write_bytes(b"".join(parts))


def decode_field_bytes(data: bytes) -> MultiField:
    if len(data) < _HEADER.size:
        raise FieldFormatError(f"truncated header: need {_HEADER.size} bytes, have {len(data)}", len(data))
    magic, version, nch, w, h, dx = _HEADER.unpack_from(data, 0)
    if magic != MAGIC:
        raise FieldFormatError(f"bad magic {magic!r}, expected {MAGIC!r}", 0)
    if version != VERSION:
        raise FieldFormatError(f"unsupported version {version}", 4)
    if nch == 0:
        raise FieldFormatError("channel count is zero", 6)
    if w == 0 or h == 0 or w * h * nch >= _MAX_CELLS:
        raise FieldFormatError(f"dimension overflow or empty grid: {nch}x{w}x{h}", 8)
    pos = _HEADER.size
    bounds = []
    for i in range(nch):
        if len(data) < pos + _BOUNDS.size:
            raise FieldFormatError(f"truncated bounds section (channel {i})", len(data))
        lo, hi = _BOUNDS.unpack_from(data, pos)
        try:
            bounds.append(ClipBounds(lo, hi))
        except ContractError as exc:
            raise FieldFormatError(f"invalid bounds for channel {i}: {exc}", pos) from None
        pos += _BOUNDS.size
    need = nch * w * h * 8
    if len(data) < pos + need:
        raise FieldFormatError(f"truncated values section: need {need} bytes, have {len(data) - pos}", len(data))
    if len(data) > pos + need:
        raise FieldFormatError("trailing bytes after values section", pos + need)
    vals = np.frombuffer(data, dtype="<f8", count=nch * w * h, offset=pos).reshape(nch, h, w)
    chans = []
    for i, b in enumerate(bounds):
        try:
            chans.append(ScalarField(vals[i], dx, b))
        except ContractError as exc:
            raise FieldFormatError(f"channel {i} violates its bounds: {exc}", pos + i * w * h * 8) from None
    return MultiField(tuple(chans))


def read_field_file(path) -> MultiField:
    return decode_field_bytes(Path(path).read_bytes())


def pgm_bytes(f: ScalarField) -> bytes:
    lo, hi = f.bounds.lower, f.bounds.upper
    if not (math.isfinite(lo) and math.isfinite(hi)) or hi <= lo:
        raise RenderError(f"cannot render field with bounds [{lo}, {hi}]")
    scaled = (f.values - lo) / (hi - lo) * 255.0
    # values are non-negative, so floor(x + 0.5) rounds half away from zero
    pix = np.clip(np.floor(scaled + 0.5), 0, 255).astype(np.uint8)
    header = f"P5\n{f.width} {f.height}\n255\n".encode("ascii")
    return header + pix.tobytes()


def render_pgm(f: ScalarField, path) -> None:
    Path(path).write_bytes(pgm_bytes(f))


_GAMMA = np.uint64(0x9E3779B97F4A7C15)
_MUL1 = np.uint64(0xBF58476D1CE4E5B9)
_MUL2 = np.uint64(0x94D049BB133111EB)


def splitmix64(seed: int, count: int) -> np.ndarray:
    """First ``count`` outputs of SplitMix64 seeded with ``seed`` (uint64 array)."""
    idx = np.arange(1, count + 1, dtype=np.uint64)
    z = np.uint64(seed % (1 << 64)) + idx * _GAMMA
    z = (z ^ (z >> np.uint64(30))) * _MUL1
    z = (z ^ (z >> np.uint64(27))) * _MUL2
    return z ^ (z >> np.uint64(31))


def splitmix_uniform(seed: int, count: int) -> np.ndarray:
    return (splitmix64(seed, count) >> np.uint64(11)).astype(np.float64) * 2.0**-53


def random_field(width: int, height: int, dx: float = 1.0, bounds: ClipBounds = UNIT, seed: int = 0) -> ScalarField:
    if width < 1 or height < 1:
        raise DimensionError(f"invalid grid {width}x{height}")
    if not bounds.finite:
        raise ContractError("random_field needs finite bounds")
    u = splitmix_uniform(seed, width * height).reshape(height, width)
    vals = np.minimum(bounds.lower + u * (bounds.upper - bounds.lower), bounds.upper)
    return ScalarField(vals, dx, bounds)


def constant_field(value: float, width: int, height: int, dx: float = 1.0, bounds: ClipBounds = UNIT) -> ScalarField:
    return ScalarField(np.full((height, width), float(value)), dx, bounds)


def blob_field(
    width: int,
    height: int,
    dx: float = 1.0,
    cx: float | None = None,
    cy: float | None = None,
    radius: float = 8.0,
    peak: float = 1.0,
    bounds: ClipBounds = UNIT,
) -> ScalarField:
    """Compactly supported smooth bump ``peak * exp(1 - 1/(1 - rho**2))`` for rho < 1.

    ``cx``, ``cy`` and ``radius`` are in cells; distances wrap on the torus.
    """
    cx = width / 2 if cx is None else cx
    cy = height / 2 if cy is None else cy
    xs = np.arange(width) - cx
    ys = np.arange(height) - cy
    xs = (xs + width / 2) % width - width / 2
    ys = (ys + height / 2) % height - height / 2
    rho2 = (ys[:, None] ** 2 + xs[None, :] ** 2) / float(radius) ** 2
    vals = np.zeros((height, width))
    inside = rho2 < 1.0
    vals[inside] = peak * np.exp(1.0 - 1.0 / (1.0 - rho2[inside]))
    return ScalarField(np.clip(vals, bounds.lower, bounds.upper), dx, bounds)


def single_cell_field(
    width: int, height: int, dx: float = 1.0, x: int | None = None, y: int | None = None, value: float = 1.0,
    bounds: ClipBounds = UNIT,
) -> ScalarField:
    vals = np.zeros((height, width))
    vals[height // 2 if y is None else y, width // 2 if x is None else x] = value
    return ScalarField(vals, dx, bounds)


def unbounded(values, dx: float) -> ScalarField:
    return ScalarField(values, dx, UNBOUNDED)


def stack(channels: Sequence[ScalarField]) -> MultiField:
    return MultiField(tuple(channels))
