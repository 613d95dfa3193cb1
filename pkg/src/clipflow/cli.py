"""``clipflow`` command-line driver.

    clipflow simulate --config run.cfg [--out-dir DIR]
    clipflow verify <suite> [--config run.cfg] [--seed N]
    clipflow converge --config run.cfg --levels K [--out DIR]

Exit codes: 0 ok / all checks pass, 1 a check failed, 2 config or I/O
error, 3 extinction before the last step, 4 unsupported combination.
"""

from __future__ import annotations

import argparse
import csv
import io
import math
import sys
from dataclasses import dataclass
from pathlib import Path
from typing import Optional

import numpy as np

from clipflow.analysis import (
    check_line,
    convergence_study,
    monotone_growth_check,
    support_bound_check,
    tangency_csv,
    tangency_residual,
    verify_E1,
    verify_E2,
    verify_speed,
)
from clipflow.clipcore import ClipBounds, verify_clip_identities
from clipflow.config import SimConfig, parse_config, standard_config
from clipflow.dynamics import AsymptoticSystem, EcosystemSystem, LeniaSystem, gol_step, gol_step_conv
from clipflow.errors import (
    ClipflowError,
    ConfigError,
    ContractError,
    DegenerateKernelError,
    DimensionError,
    FieldFormatError,
    HypothesisError,
    RenderError,
    UnsupportedGrowthError,
)
from clipflow.field import (
    MultiField,
    ScalarField,
    blob_field,
    constant_field,
    mass,
    random_field,
    read_field_file,
    render_pgm,
    single_cell_field,
    sup_distance,
    write_field_file,
)
from clipflow.operators import (
    ConstantGrowth,
    ExpBumpKernel,
    GaussianBump,
    GoLGrowth,
    GoLKernel,
    Rectifier,
    RingSumKernel,
    TableGrowth,
    TableKernel,
    discretize_kernel,
)

EXIT_OK, EXIT_FAIL, EXIT_IO, EXIT_EXTINCT, EXIT_UNSUPPORTED = 0, 1, 2, 3, 4
SUITES = ("clip", "e1", "e2", "speed", "support", "monotone", "gol_equiv")


class Unsupported(Exception):
    pass


# --------------------------------------------------------------------------- building models


def build_kernel(cfg: SimConfig, prefix: str = "kernel"):
    k = cfg.section(prefix)
    kind = k["type"]
    if kind == "gol":
        spec = GoLKernel(k["normalize"])
    elif kind == "exp_bump":
        spec = ExpBumpKernel(k["scale"], k["normalize"])
    elif kind == "ring_sum":
        spec = RingSumKernel(k["c"], k["a"], k["b"], k["w"], k["normalize"])
    else:
        spec = TableKernel(k["radius"], k["weights"], k["normalize"])
    try:
        return discretize_kernel(spec, cfg["grid.dx"])
    except (ValueError, DegenerateKernelError) as exc:
        raise cfg.error(str(exc), f"{prefix}.type") from None


def build_growth(cfg: SimConfig, prefix: str = "growth"):
    g = cfg.section(prefix)
    kind = g["type"]
    try:
        if kind == "gol":
            return GoLGrowth()
        if kind == "gaussian":
            return GaussianBump(g["mu"], g["sigma"])
        if kind == "constant":
            return ConstantGrowth(g["c"])
        if kind == "rectifier":
            return Rectifier(g["cap"])
        return TableGrowth(g["breakpoints"])
    except ValueError as exc:
        raise cfg.error(str(exc), f"{prefix}.type") from None


def _lenia(cfg: SimConfig, which: str = "", bounds: Optional[ClipBounds] = None) -> LeniaSystem:
    if bounds is None:
        bounds = ClipBounds(cfg["bounds.lower"], cfg["bounds.upper"])
    kernel = build_kernel(cfg, f"kernel{which}")
    w, h = cfg["grid.width"], cfg["grid.height"]
    if kernel.diameter > min(w, h):
        raise cfg.error(f"kernel diameter {kernel.diameter} exceeds grid {w}x{h}", f"kernel{which}.type")
    return LeniaSystem(kernel, build_growth(cfg, f"growth{which}"), bounds)


def build_initial(cfg: SimConfig, prefix: str, bounds: ClipBounds, seed: int) -> ScalarField:
    p = cfg.section(prefix)
    w, h, dx = cfg["grid.width"], cfg["grid.height"], cfg["grid.dx"]
    kind = p["type"]
    if kind == "blob":
        return blob_field(w, h, dx, p["cx"], p["cy"], p["radius"], p["peak"], bounds)
    if kind == "random":
        base = random_field(w, h, dx, bounds, seed)
        vals = bounds.lower + p["peak"] * (base.values - bounds.lower)
        return ScalarField(np.clip(vals, bounds.lower, bounds.upper), dx, bounds)
    if kind == "single_cell":
        x = None if p["cx"] is None else int(p["cx"])
        y = None if p["cy"] is None else int(p["cy"])
        return single_cell_field(w, h, dx, x, y, p["peak"], bounds)
    if kind == "constant":
        return constant_field(p["value"], w, h, dx, bounds)
    path = cfg.resolve(p["path"])
    loaded = read_field_file(path)  # I/O and format errors are reported by the caller
    if not 0 <= p["channel"] < len(loaded):
        raise cfg.error(f"{path} has {len(loaded)} channel(s)", f"{prefix}.channel")
    ch = loaded[p["channel"]]
    if ch.shape != (h, w):
        raise cfg.error(f"{path} is {ch.width}x{ch.height}, grid is {w}x{h}", f"{prefix}.path")
    try:
        return ScalarField(ch.values, dx, bounds)
    except ContractError as exc:
        raise cfg.error(f"{path}: {exc}", f"{prefix}.path") from None


class _GoLSystem:
    def step(self, board: ScalarField, t: float) -> ScalarField:
        return gol_step(board)


@dataclass
class Model:
    """A configured system plus its channel layout; steps whole ``MultiField`` states."""

    name: str
    system: object
    channel_names: tuple
    creature: tuple
    initial: MultiField
    speed: Optional[float] = None  # max|G| for clipped Lenia, used to audit sup change

    def step(self, state: MultiField, t: float) -> MultiField:
        if len(state) == 1 and not isinstance(self.system, EcosystemSystem):
            return MultiField.of(self.system.step(state[0], t))
        return self.system.step(state, t)

    def extinct(self, state: MultiField) -> bool:
        return all(not np.any(state[i].values != 0.0) for i in self.creature)


def build_model(cfg: SimConfig) -> Model:
    model = cfg.model
    seed = cfg["seed"]
    bounds = ClipBounds(cfg["bounds.lower"], cfg["bounds.upper"])
    food_bounds = ClipBounds(cfg["food.lower"], cfg["food.upper"])
    names = cfg.channel_names
    unit = ClipBounds(0.0, 1.0)

    if model == "gol":
        board = build_initial(cfg, "init", unit, seed)
        if not np.all((board.values == 0.0) | (board.values == 1.0)):
            raise cfg.error("Game of Life needs a binary initial board", "init.type")
        return Model(model, _GoLSystem(), names, (0,), MultiField.of(board))
    if model in ("lenia", "asymptotic"):
        sys_ = _lenia(cfg, "", bounds)
        f0 = build_initial(cfg, "init", bounds, seed)
        if model == "lenia":
            return Model(model, sys_, names, (0,), MultiField.of(f0), sys_.max_growth)
        return Model(model, AsymptoticSystem(sys_), names, (0,), MultiField.of(f0))

    # extensions keep creature channels in [0, 1]
    if (bounds.lower, bounds.upper) != (0.0, 1.0):
        raise cfg.error("extension models use creature bounds [0, 1]", "bounds.lower")
    f0 = build_initial(cfg, "init", unit, seed)
    food = build_initial(cfg, "food", food_bounds, seed + 2)
    if model == "food":
        predator = _lenia(cfg) if cfg.has("kernel.type") else None
        variant = "X2_food_growth" if predator is not None else "X1_food"
        eco = EcosystemSystem(variant, predator=predator, food=food, food_bounds=food_bounds)
        return Model(model, eco, names, (0,), MultiField.of(f0))
    predator = _lenia(cfg)
    if model == "depleting_food":
        eco = EcosystemSystem("X3_depleting", predator=predator, food_bounds=food_bounds)
        return Model(model, eco, names, (0,), MultiField.of(f0, food))
    prey = _lenia(cfg, "2")
    g0 = build_initial(cfg, "init2", unit, seed + 1)
    if model == "predator_prey":
        eco = EcosystemSystem("X4_predprey", predator=predator, prey=prey, food_bounds=food_bounds)
        return Model(model, eco, names, (0, 1), MultiField.of(f0, g0))
    eco = EcosystemSystem("X5_full", predator=predator, prey=prey, food_bounds=food_bounds)
    return Model(model, eco, names, (0, 1), MultiField.of(f0, g0, food))


# --------------------------------------------------------------------------- simulate


def metrics_row(step: int, t_step: float, state: MultiField, prev: Optional[MultiField], names, extinct: bool) -> dict:
    row = {"step": step, "time": step * t_step}
    for name, ch in zip(names, state):
        row[f"mass_{name}"] = mass(ch)
        row[f"min_{name}"] = float(ch.values.min())
        row[f"max_{name}"] = float(ch.values.max())
    row["sup_change"] = 0.0 if prev is None else sup_distance(state, prev)
    row["extinct"] = int(extinct)
    return row


def metrics_csv(rows, names) -> str:
    cols = ["step", "time"]
    for name in names:
        cols += [f"mass_{name}", f"min_{name}", f"max_{name}"]
    cols += ["sup_change", "extinct"]
    buf = io.StringIO()
    w = csv.writer(buf, lineterminator="\n")
    w.writerow(cols)
    for r in rows:
        w.writerow([repr(r[c]) if isinstance(r[c], float) else r[c] for c in cols])
    return buf.getvalue()


def write_frame(state: MultiField, names, frame_dir: Path, step: int) -> None:
    stem = frame_dir / f"frame_{step:06d}"
    lenf = stem.with_suffix(".lenf")
    write_field_file(state, lenf)
    # re-read so every emitted frame is validated against its channel bounds
    read_field_file(lenf)
    for name, ch in zip(names, state):
        render_pgm(ch, frame_dir / f"frame_{step:06d}_{name}.pgm")


def run_simulation(cfg: SimConfig, out_dir: Optional[Path] = None, log=print) -> int:
    model = build_model(cfg)
    base = Path(out_dir) if out_dir is not None else Path(".")
    frame_dir = base / cfg["output.frame_dir"]
    metrics_path = base / cfg["output.metrics_path"]
    frame_dir.mkdir(parents=True, exist_ok=True)
    metrics_path.parent.mkdir(parents=True, exist_ok=True)

    t_step, steps, every = cfg["t_step"], cfg["steps"], cfg["output.frames_every"]
    names = model.channel_names
    state = model.initial
    extinct = model.extinct(state)
    first_extinct = 0 if extinct else None
    rows = [metrics_row(0, t_step, state, None, names, extinct)]
    write_frame(state, names, frame_dir, 0)
    for step in range(1, steps + 1):
        prev, state = state, model.step(state, t_step)
        extinct = model.extinct(state)
        if extinct and first_extinct is None:
            first_extinct = step
        rows.append(metrics_row(step, t_step, state, prev, names, extinct))
        if (every and step % every == 0) or step == steps:
            write_frame(state, names, frame_dir, step)
    metrics_path.write_text(metrics_csv(rows, names))
    if cfg["output.figures"]:
        from clipflow.plotting import plot_metrics, plot_state

        plot_metrics(rows, names, metrics_path.with_suffix(".png"))
        plot_state(state, names, frame_dir / "final.png", f"{model.name}, step {steps}")
    if first_extinct is not None and first_extinct < steps:
        log(f"extinct at step {first_extinct} (t = {first_extinct * t_step:g}) of {steps}")
        return EXIT_EXTINCT
    log(f"completed {steps} steps; metrics in {metrics_path}")
    return EXIT_OK


# --------------------------------------------------------------------------- verify


def _lenia_from(cfg: SimConfig, suite: str) -> tuple[LeniaSystem, ScalarField]:
    if cfg.model != "lenia":
        raise Unsupported(f"suite '{suite}' needs a clipped Lenia config, got model '{cfg.model}'")
    model = build_model(cfg)
    return model.system, model.initial[0]


def suite_clip(cfg, seed, out, samples=10**6):
    ok = True
    for r in verify_clip_identities(samples, seed):
        out(check_line(r.name, r.passed, r.max_violation, r.tolerance))
        ok &= r.passed
    return ok


def suite_e1(cfg, seed, out):
    sys_, _ = _lenia_from(cfg, "e1")
    try:
        rep = verify_E1(sys_, 200, seed, shape=(cfg["grid.height"], cfg["grid.width"]))
    except UnsupportedGrowthError as exc:
        raise Unsupported(str(exc)) from None
    out(rep.check_line("e1"))
    return rep.passed


def suite_e2(cfg, seed, out):
    sys_, f0 = _lenia_from(cfg, "e2")
    try:
        rep = verify_E2(sys_, f0)
    except UnsupportedGrowthError as exc:
        raise Unsupported(str(exc)) from None
    dec = rep.decade_maxima()
    trend_ok = dec[-1] <= 2.0 * dec[0] if dec and dec[0] > 0 else True
    ok = rep.passed and trend_ok
    out(check_line("e2", ok, rep.max_violation, rep.bound_constant))
    return ok


def suite_speed(cfg, seed, out):
    sys_, _ = _lenia_from(cfg, "speed")
    rep = verify_speed(sys_, 500, seed, shape=(cfg["grid.height"], cfg["grid.width"]))
    out(rep.check_line("speed"))
    return rep.passed


def suite_support(cfg, seed, out):
    sys_, f0 = _lenia_from(cfg, "support")
    try:
        rep = support_bound_check(sys_, f0, cfg["steps"] * cfg["t_step"], cfg["steps"])
    except HypothesisError as exc:
        raise Unsupported(str(exc)) from None
    out(check_line("support", rep.passed, rep.max_value, rep.a / (rep.g * rep.l1) if rep.g > 0 else math.inf))
    return rep.passed


def suite_monotone(cfg, seed, out):
    w, h, dx = cfg["grid.width"], cfg["grid.height"], cfg["grid.dx"]
    kernel = None
    if cfg.model == "lenia":
        k = build_kernel(cfg)
        if k.nonnegative and k.center_weight > 0:
            kernel = k
    if kernel is None:
        kernel = discretize_kernel(GoLKernel(normalize=True), dx)
    sys_ = LeniaSystem(kernel, Rectifier())
    f0 = single_cell_field(w, h, dx, value=0.5)
    rep = monotone_growth_check(sys_, f0, steps=10, t=0.1)
    out(check_line("monotone", rep.passed, float(rep.decreases + rep.support_shrinks), 0.0))
    return rep.passed


def suite_gol_equiv(cfg, seed, out, boards=500, steps=50, size=64):
    mismatches = 0
    for b in range(boards):
        u = random_field(size, size, seed=seed * 1000003 + b)
        board = ScalarField((u.values < 0.5).astype(np.float64))
        a = c = board
        for _ in range(steps):
            a, c = gol_step(a), gol_step_conv(c)
            mismatches += int(np.count_nonzero(a.values != c.values))
    out(check_line("gol_equiv", mismatches == 0, float(mismatches), float(boards * steps)))
    return mismatches == 0


_SUITE_FUNCS = {
    "clip": suite_clip,
    "e1": suite_e1,
    "e2": suite_e2,
    "speed": suite_speed,
    "support": suite_support,
    "monotone": suite_monotone,
    "gol_equiv": suite_gol_equiv,
}


def run_verify(suite: str, cfg: SimConfig, seed: int, out=print, err=None) -> int:
    err = err or (lambda msg: print(msg, file=sys.stderr))
    names = SUITES if suite == "all" else (suite,)
    failed = unsupported = False
    for name in names:
        try:
            ok = _SUITE_FUNCS[name](cfg, seed, out)
        except Unsupported as exc:
            err(f"unsupported: {exc}")
            out(f"SKIP {name} unsupported")
            unsupported = True
            continue
        failed |= not ok
    if failed:
        return EXIT_FAIL
    return EXIT_UNSUPPORTED if unsupported else EXIT_OK


# --------------------------------------------------------------------------- converge


def run_converge(cfg: SimConfig, levels: int, out_dir: Path, out=print) -> int:
    if cfg.model == "gol":
        raise Unsupported("the Game of Life is a discrete map; there is no Euler limit to study")
    model = build_model(cfg)
    out_dir.mkdir(parents=True, exist_ok=True)
    t = cfg["converge.time"]
    rep = convergence_study(model, model.initial, t, levels)
    (out_dir / "convergence.csv").write_text(rep.csv())
    tt = cfg["converge.tangency_time"]
    rows = tangency_residual(model, model.initial, tt, n_ref=cfg["converge.n_ref"])
    (out_dir / "tangency.csv").write_text(tangency_csv(rows))
    if cfg["output.figures"]:
        from clipflow.plotting import plot_convergence, plot_tangency

        plot_convergence(rep.ns, rep.distances, out_dir / "convergence.png", t)
        plot_tangency(rows, out_dir / "tangency.png", tt)
    tail = [d for n, d in zip(rep.ns, rep.distances) if n >= 8]
    rise = max([b - a for a, b in zip(tail, tail[1:])], default=0.0)
    orders = [o for o in rep.orders if not math.isnan(o)]
    ok = rep.monotone(8)
    out(check_line("converge", ok, max(rise, 0.0), orders[-1] if orders else 0.0))
    for n, d in zip(rep.ns, rep.distances):
        out(f"n={n} d_n={d:.6e}")
    return EXIT_OK if ok else EXIT_FAIL


# --------------------------------------------------------------------------- entry point


def make_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(prog="clipflow", description="Clipped Lenia simulator and verifier.")
    sub = parser.add_subparsers(dest="command", required=True)

    p = sub.add_parser("simulate", help="run a configured model, writing frames and metrics")
    p.add_argument("--config", required=True, type=Path)
    p.add_argument("--out-dir", type=Path, default=None, help="base directory for outputs (default: cwd)")

    p = sub.add_parser("verify", help="run a verification suite; one CHECK line per check")
    p.add_argument("suite", choices=SUITES + ("all",))
    p.add_argument("--config", type=Path, default=None, help="default: built-in standard blob config")
    p.add_argument("--seed", type=int, default=0)

    p = sub.add_parser("converge", help="Euler refinement and tangency study")
    p.add_argument("--config", required=True, type=Path)
    p.add_argument("--levels", required=True, type=int, help="flows up to n = 2**levels (>= 2)")
    p.add_argument("--out", type=Path, default=Path("."))
    return parser


def main(argv=None) -> int:
    parser = make_parser()
    args = parser.parse_args(argv)
    if args.command == "verify" and not 0 <= args.seed < 2**64:
        parser.error("--seed must be an unsigned 64-bit integer")
    if args.command == "converge" and args.levels < 2:
        parser.error("--levels must be >= 2 (need at least two refinement levels)")
    try:
        if args.command == "verify":
            cfg = parse_config(args.config) if args.config else standard_config()
            return run_verify(args.suite, cfg, args.seed)
        cfg = parse_config(args.config)
        if args.command == "simulate":
            return run_simulation(cfg, args.out_dir)
        return run_converge(cfg, args.levels, args.out)
    except Unsupported as exc:
        print(f"clipflow: unsupported: {exc}", file=sys.stderr)
        return EXIT_UNSUPPORTED
    except (ConfigError, FieldFormatError, RenderError, DimensionError, OSError) as exc:
        print(f"clipflow: {exc}", file=sys.stderr)
        return EXIT_IO
    except ClipflowError as exc:
        print(f"clipflow: {exc}", file=sys.stderr)
        return EXIT_IO


if __name__ == "__main__":
    sys.exit(main())
