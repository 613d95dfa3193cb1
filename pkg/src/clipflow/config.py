"""Flat ``key = value`` simulation configs.

Grammar, one entry per line::

    # comment (also after a value)
    model = lenia
    grid.width = 128
    kernel.a = 0.5, 0.25        # lists are comma separated

Keys are either bare or ``section.name`` (one dot).  Unknown keys, duplicate
keys, missing required keys and out-of-range values are all errors that name
the key and the line.
"""

from __future__ import annotations

import math
from dataclasses import dataclass, field
from pathlib import Path
from typing import Any

from clipflow.clipcore import ClipBounds
from clipflow.errors import ConfigError, ContractError

MODELS = ("lenia", "asymptotic", "gol", "food", "depleting_food", "predator_prey", "ecosystem")
KERNEL_TYPES = ("gol", "exp_bump", "ring_sum", "table")
GROWTH_TYPES = ("gol", "gaussian", "constant", "rectifier", "table")
INIT_TYPES = ("blob", "random", "single_cell", "constant", "file")

_REQUIRED = object()


def _bool(raw: str) -> bool:
    low = raw.lower()
    if low in ("1", "true", "yes", "on"):
        return True
    if low in ("0", "false", "no", "off"):
        return False
    raise ValueError(f"not a boolean: {raw!r}")


def _floats(raw: str) -> tuple:
    return tuple(float(v) for v in raw.split(",") if v.strip())


def _pairs(raw: str) -> tuple:
    out = []
    for item in raw.split(","):
        if item.strip():
            u, g = item.split(":")
            out.append((float(u), float(g)))
    return tuple(out)


def _choice(options):
    def parse(raw: str) -> str:
        if raw not in options:
            raise ValueError(f"expected one of {', '.join(options)}; got {raw!r}")
        return raw

    return parse


def _kernel_keys(prefix):
    return {
        f"{prefix}.type": (_choice(KERNEL_TYPES), None),
        f"{prefix}.scale": (float, 1.0),
        f"{prefix}.normalize": (_bool, False),
        f"{prefix}.c": (float, 1.0),
        f"{prefix}.a": (_floats, None),
        f"{prefix}.b": (_floats, None),
        f"{prefix}.w": (_floats, None),
        f"{prefix}.radius": (int, None),
        f"{prefix}.weights": (_floats, None),
    }


def _growth_keys(prefix):
    return {
        f"{prefix}.type": (_choice(GROWTH_TYPES), None),
        f"{prefix}.mu": (float, 0.15),
        f"{prefix}.sigma": (float, 0.015),
        f"{prefix}.c": (float, 0.0),
        f"{prefix}.cap": (float, math.inf),
        f"{prefix}.breakpoints": (_pairs, None),
    }


def _init_keys(prefix, default_type):
    return {
        f"{prefix}.type": (_choice(INIT_TYPES), default_type),
        f"{prefix}.cx": (float, None),
        f"{prefix}.cy": (float, None),
        f"{prefix}.radius": (float, 16.0),
        f"{prefix}.peak": (float, 1.0),
        f"{prefix}.value": (float, 0.5),
        f"{prefix}.path": (str, None),
        f"{prefix}.channel": (int, 0),
    }


SCHEMA: dict[str, tuple] = {
    "model": (_choice(MODELS), _REQUIRED),
    "t_step": (float, None),
    "steps": (int, _REQUIRED),
    "seed": (int, 0),
    "grid.width": (int, _REQUIRED),
    "grid.height": (int, _REQUIRED),
    "grid.dx": (float, 0.0625),
    "bounds.lower": (float, 0.0),
    "bounds.upper": (float, 1.0),
    "food.lower": (float, 0.0),
    "food.upper": (float, 1.0),
    **_kernel_keys("kernel"),
    **_kernel_keys("kernel2"),
    **_growth_keys("growth"),
    **_growth_keys("growth2"),
    **_init_keys("init", "blob"),
    **_init_keys("init2", "blob"),
    **_init_keys("food", "constant"),
    "output.frames_every": (int, 0),
    "output.frame_dir": (str, "frames"),
    "output.metrics_path": (str, "metrics.csv"),
    "output.figures": (_bool, True),
    "converge.time": (float, 1.0),
    "converge.tangency_time": (float, 0.5),
    "converge.n_ref": (int, 1024),
}

CHANNELS = {
    "lenia": ("f",),
    "asymptotic": ("f",),
    "gol": ("board",),
    "food": ("f",),
    "depleting_food": ("f", "phi"),
    "predator_prey": ("f", "g"),
    "ecosystem": ("f", "g", "phi"),
}
_NEEDS_KERNEL = ("lenia", "asymptotic", "depleting_food", "predator_prey", "ecosystem")
_NEEDS_KERNEL2 = ("predator_prey", "ecosystem")


@dataclass
class SimConfig:
    values: dict
    lines: dict = field(default_factory=dict)
    base_dir: Path = Path(".")

    def __getitem__(self, key: str) -> Any:
        return self.values[key]

    def get(self, key: str, default=None):
        v = self.values.get(key)
        return default if v is None else v

    def has(self, key: str) -> bool:
        return self.values.get(key) is not None

    @property
    def model(self) -> str:
        return self.values["model"]

    @property
    def channel_names(self) -> tuple:
        return CHANNELS[self.model]

    def section(self, prefix: str) -> dict:
        n = len(prefix) + 1
        return {k[n:]: v for k, v in self.values.items() if k.startswith(prefix + ".")}

    def resolve(self, path: str) -> Path:
        p = Path(path)
        return p if p.is_absolute() else self.base_dir / p

    def error(self, message: str, key: str) -> ConfigError:
        return ConfigError(message, key, self.lines.get(key))


def parse_config_text(text: str, base_dir: Path = Path(".")) -> SimConfig:
    raw: dict[str, tuple[str, int]] = {}
    for lineno, line in enumerate(text.splitlines(), start=1):
        body = line.split("#", 1)[0].strip()
        if not body:
            continue
        if "=" not in body:
            raise ConfigError(f"expected 'key = value', got {body!r}", line=lineno)
        key, value = (part.strip() for part in body.split("=", 1))
        if key.count(".") > 1 or not key:
            raise ConfigError("keys have at most one dot", key, lineno)
        if key not in SCHEMA:
            raise ConfigError("unknown key", key, lineno)
        if key in raw:
            raise ConfigError(f"duplicate key (first on line {raw[key][1]})", key, lineno)
        raw[key] = (value, lineno)

    values: dict[str, Any] = {}
    lines = {k: ln for k, (_, ln) in raw.items()}
    for key, (conv, default) in SCHEMA.items():
        if key in raw:
            text_value, lineno = raw[key]
            try:
                values[key] = conv(text_value)
            except ValueError as exc:
                raise ConfigError(f"bad value {text_value!r}: {exc}", key, lineno) from None
        elif default is _REQUIRED:
            raise ConfigError("missing required key", key)
        else:
            values[key] = default
    cfg = SimConfig(values, lines, base_dir)
    _validate(cfg)
    return cfg


def parse_config(path) -> SimConfig:
    path = Path(path)
    return parse_config_text(path.read_text(), path.parent)


def _validate(cfg: SimConfig) -> None:
    model = cfg.model
    if cfg["grid.width"] < 1 or cfg["grid.height"] < 1:
        raise cfg.error("grid dimensions must be positive", "grid.width")
    if not cfg["grid.dx"] > 0:
        raise cfg.error("grid.dx must be positive", "grid.dx")
    if cfg["steps"] < 1:
        raise cfg.error("steps must be >= 1", "steps")
    t = cfg.get("t_step")
    if t is None:
        if model != "gol":
            raise cfg.error("missing required key", "t_step")
        cfg.values["t_step"] = 1.0
    elif not 0.0 < t <= 1.0:
        raise cfg.error(f"t_step = {t} outside the arc-field time domain (0, 1]", "t_step")
    if model == "gol" and cfg["grid.dx"] != 1.0 and "grid.dx" in cfg.lines:
        raise cfg.error("Game of Life runs on dx = 1", "grid.dx")
    if model == "gol":
        cfg.values["grid.dx"] = 1.0
    for lo_key, hi_key in (("bounds.lower", "bounds.upper"), ("food.lower", "food.upper")):
        try:
            b = ClipBounds(cfg[lo_key], cfg[hi_key])
        except ContractError as exc:
            raise cfg.error(str(exc), lo_key) from None
        if not b.lower < b.upper:
            raise cfg.error("bounds need lower < upper", lo_key)
    if model in _NEEDS_KERNEL:
        for key in ("kernel.type", "growth.type"):
            if not cfg.has(key):
                raise cfg.error(f"model '{model}' needs this key", key)
    if model in _NEEDS_KERNEL2:
        for key in ("kernel2.type", "growth2.type"):
            if not cfg.has(key):
                raise cfg.error(f"model '{model}' needs a second species; missing key", key)
    if model == "food" and cfg.has("kernel.type") != cfg.has("growth.type"):
        raise cfg.error("food model takes both kernel.type and growth.type or neither", "growth.type")
    for prefix in ("kernel", "kernel2"):
        kind = cfg.get(f"{prefix}.type")
        if kind == "ring_sum":
            for part in ("a", "b", "w"):
                if not cfg.has(f"{prefix}.{part}"):
                    raise cfg.error("ring_sum kernels need a, b and w", f"{prefix}.{part}")
        if kind == "table":
            for part in ("radius", "weights"):
                if not cfg.has(f"{prefix}.{part}"):
                    raise cfg.error("table kernels need radius and weights", f"{prefix}.{part}")
    for prefix in ("growth", "growth2"):
        if cfg.get(f"{prefix}.type") == "table" and not cfg.has(f"{prefix}.breakpoints"):
            raise cfg.error("table growth needs breakpoints", f"{prefix}.breakpoints")
        if cfg.get(f"{prefix}.type") == "gaussian" and not cfg[f"{prefix}.sigma"] > 0:
            raise cfg.error("sigma must be positive", f"{prefix}.sigma")
    for prefix in ("init", "init2", "food"):
        if cfg[f"{prefix}.type"] == "file" and not cfg.has(f"{prefix}.path"):
            raise cfg.error("file initial conditions need a path", f"{prefix}.path")
    if cfg["output.frames_every"] < 0:
        raise cfg.error("frames_every must be >= 0", "output.frames_every")


STANDARD_CONFIG = """\
# Standard blob: normalized exp-bump kernel of radius 1, 16 cells per unit.
model = lenia
grid.width = 128
grid.height = 128
grid.dx = 0.0625
kernel.type = exp_bump
kernel.scale = 1.0
kernel.normalize = true
growth.type = gaussian
growth.mu = 0.15
growth.sigma = 0.015
t_step = 0.1
steps = 100
seed = 1
init.type = blob
init.radius = 20
init.peak = 1.0
"""


def standard_config() -> SimConfig:
    return parse_config_text(STANDARD_CONFIG)
