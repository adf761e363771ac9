"""Experiment harness and command-line interface.

Experiments are driven by a JSON configuration with a fixed schema (unknown
keys are rejected: a silent typo in a parameter is the main reproducibility
hazard). Two presets reproduce the published desk-scale experiments; they
differ only in the magnitude of the first attenuation disk.

Subcommands: forward, reconstruct, geodesic, render, selftest. Every run
writes its resolved configuration next to its outputs, and identical
configurations produce byte-identical delimited outputs.
"""

from __future__ import annotations

import argparse
import csv
import dataclasses
import json
import sys
from dataclasses import dataclass
from pathlib import Path

import numpy as np

from . import raygeo
from .fields import Grid2D, ScalarField2D, make_grid, read_field, write_field, write_trace
from .media import AttenuationParams, Medium, build_phantom, make_medium
from .plotting import save_energy_curve, save_error_curve, save_field_panel
from .reconstruct import (SeriesDivergedError, Variant, reconstruct_source,
                          tat_pair, write_errors_csv)
from .wavesim import SolveConfig, SolverInstabilityError, forward_solve, time_step

FAILURE_MARKER = "FAILED"


@dataclass(frozen=True)
class ExperimentConfig:
    """Complete description of one experiment run."""

    grid_n: int = 201
    taper_width: float = 0.1
    blur_radius: float = 0.03
    attenuation: AttenuationParams = AttenuationParams()
    solve: SolveConfig = SolveConfig(T=3.0)
    variant: Variant = Variant.SIGN_FLIPPED
    n_terms: int = 100
    out_dir: str = "out"
    snapshot_every: int = 0
    seed: int = 0

    def __post_init__(self):
        if self.grid_n < 3:
            raise ValueError("grid_n must be at least 3")
        if self.n_terms < 1:
            raise ValueError("n_terms must be at least 1")
        if self.blur_radius < 0:
            raise ValueError("blur_radius must be nonnegative")
        if self.snapshot_every < 0:
            raise ValueError("snapshot_every must be nonnegative")

    def grid(self) -> Grid2D:
        return make_grid(self.grid_n, self.grid_n, (-1.0, 1.0, -1.0, 1.0))

    def medium(self) -> Medium:
        return make_medium(self.grid(), self.taper_width, self.attenuation)


PRESETS = {
    # first experiment: strong attenuation disk, d1 = 9
    "example1": ExperimentConfig(),
    # second experiment: same in every respect except d1 = 5
    "example2": ExperimentConfig(attenuation=AttenuationParams(d1=5.0)),
    # full-resolution variants of the above; expect runtimes of hours
    "example1-full": ExperimentConfig(grid_n=501),
    "example2-full": ExperimentConfig(grid_n=501, attenuation=AttenuationParams(d1=5.0)),
}


def config_to_dict(cfg: ExperimentConfig) -> dict:
    return {
        "grid_n": cfg.grid_n,
        "taper_width": cfg.taper_width,
        "blur_radius": cfg.blur_radius,
        "attenuation": {
            "d1": cfg.attenuation.d1,
            "d2": cfg.attenuation.d2,
            "d3": cfg.attenuation.d3,
            "disk1_center": list(cfg.attenuation.disk1_center),
            "disk1_rsq": cfg.attenuation.disk1_rsq,
            "disk2_center": list(cfg.attenuation.disk2_center),
            "disk2_rsq": cfg.attenuation.disk2_rsq,
            "taper_width": cfg.attenuation.taper_width,
        },
        "solve": {
            "T": cfg.solve.T,
            "cfl": cfg.solve.cfl,
            "pml_cells": cfg.solve.pml_cells,
            "pml_strength": cfg.solve.pml_strength,
            "box_margin": cfg.solve.box_margin,
        },
        "variant": cfg.variant.value,
        "n_terms": cfg.n_terms,
        "out_dir": cfg.out_dir,
        "snapshot_every": cfg.snapshot_every,
        "seed": cfg.seed,
    }


def _take(d: dict, context: str, required: dict, optional: dict | None = None) -> dict:
    """Pull typed values out of a config mapping, rejecting unknown keys."""
    optional = optional or {}
    unknown = set(d) - set(required) - set(optional)
    if unknown:
        raise ValueError(f"unknown {context} keys: {sorted(unknown)}")
    missing = set(required) - set(d)
    if missing:
        raise ValueError(f"missing {context} keys: {sorted(missing)}")
    out = {}
    for key, cast in required.items():
        out[key] = cast(d[key])
    for key, cast in optional.items():
        if key in d:
            out[key] = cast(d[key])
    return out


def _center(v) -> tuple[float, float]:
    x, y = v
    return (float(x), float(y))


def config_from_dict(d: dict) -> ExperimentConfig:
    top = _take(d, "config", {
        "grid_n": int, "taper_width": float, "blur_radius": float,
        "attenuation": dict, "solve": dict, "variant": str,
        "n_terms": int, "out_dir": str, "snapshot_every": int, "seed": int,
    })
    att = _take(top["attenuation"], "attenuation", {
        "d1": float, "d2": float, "d3": float,
        "disk1_center": _center, "disk1_rsq": float,
        "disk2_center": _center, "disk2_rsq": float,
        "taper_width": float,
    })
    sol = _take(top["solve"], "solve", {
        "T": float, "cfl": float, "pml_cells": int,
        "pml_strength": lambda v: None if v is None else float(v),
        "box_margin": float,
    })
    return ExperimentConfig(
        grid_n=top["grid_n"], taper_width=top["taper_width"], blur_radius=top["blur_radius"],
        attenuation=AttenuationParams(**att), solve=SolveConfig(**sol),
        variant=Variant.parse(top["variant"]), n_terms=top["n_terms"],
        out_dir=top["out_dir"], snapshot_every=top["snapshot_every"], seed=top["seed"],
    )


def save_config(cfg: ExperimentConfig, path) -> None:
    with open(path, "w") as fh:
        json.dump(config_to_dict(cfg), fh, indent=2)
        fh.write("\n")


def load_config(path) -> ExperimentConfig:
    with open(path) as fh:
        return config_from_dict(json.load(fh))


# ---------------------------------------------------------------------------
# PGM rendering
# ---------------------------------------------------------------------------

def render_pgm(field: ScalarField2D, path, vmin: float | None = None,
               vmax: float | None = None) -> None:
    """Write an 8-bit binary PGM (P5) image of the field.

    Values are mapped affinely from [vmin, vmax] (field extrema by default)
    to 0..255 and clipped; a degenerate range renders mid-gray. Row 0 of the
    image is the top, i.e. the y_max side of the grid.
    """
    v = field.values
    lo = float(v.min()) if vmin is None else float(vmin)
    hi = float(v.max()) if vmax is None else float(vmax)
    if hi > lo:
        img = np.clip(np.rint((v - lo) / (hi - lo) * 255.0), 0, 255).astype(np.uint8)
    else:
        img = np.full(v.shape, 128, dtype=np.uint8)
    img = np.flipud(img)
    header = f"P5\n{field.grid.nx} {field.grid.ny}\n255\n".encode("ascii")
    with open(path, "wb") as fh:
        fh.write(header)
        fh.write(img.tobytes())


# ---------------------------------------------------------------------------
# Experiment runs
# ---------------------------------------------------------------------------

def _write_medium_outputs(out: Path, medium: Medium, phantom: ScalarField2D) -> None:
    write_field(medium.c, out / "c.tatf")
    write_field(medium.a, out / "a.tatf")
    write_field(phantom, out / "phantom.tatf")
    render_pgm(medium.c, out / "c.pgm")
    render_pgm(medium.a, out / "a.pgm")
    render_pgm(phantom, out / "phantom.pgm")
    save_field_panel([(medium.c, "sound speed"), (medium.a, "attenuation")],
                     out / "medium.png", cmap="viridis")


def _geometry_summary(medium: Medium) -> dict:
    try:
        t0 = raygeo.estimate_T0(medium, n_boundary_samples=32, n_angle_samples=32, step=0.01)
        t0_note = ""
    except raygeo.TrappedRayError as e:
        t0, t0_note = float("nan"), f" (invalid: {e})"
    t1 = raygeo.estimate_T1(medium)
    return {"t0_estimate": t0, "t0_note": t0_note, "t1_estimate": t1}


def run_experiment(config: ExperimentConfig, verbose: bool = False) -> int:
    """Run one reconstruction experiment end to end.

    Validates everything and builds the media before touching the output
    directory; on solver failure mid-run, the partial outputs are kept and a
    failure marker file is written. Returns a process exit status.
    """
    grid = config.grid()
    medium = config.medium()
    phantom = build_phantom(grid, config.blur_radius)
    dt, nsteps = time_step(config.solve, medium)

    out = Path(config.out_dir)
    out.mkdir(parents=True, exist_ok=True)
    save_config(config, out / "config.json")
    _write_medium_outputs(out, medium, phantom)

    lo, hi = float(phantom.values.min()), float(phantom.values.max())

    def on_term(m, report):
        recon = report.iterates[-1].u
        render_pgm(recon, out / f"recon_term_{m + 1:03d}.pgm", vmin=lo, vmax=hi)
        if verbose:
            err = report.errors_percent[-1]
            print(f"term {m + 1:3d}: error {err:7.2f}%", flush=True)

    if verbose:
        print(f"{config.variant.value} reconstruction on {grid.nx}x{grid.ny}, "
              f"T={config.solve.T}, dt={dt:.5f} ({nsteps} steps), {config.n_terms} terms")

    status = 0
    failure = None
    try:
        report = reconstruct_source(phantom, medium, config.solve, config.variant,
                                    config.n_terms, progress=on_term)
    except (SeriesDivergedError, SolverInstabilityError) as e:
        failure = e
        report = e.report if isinstance(e, SeriesDivergedError) else None
        status = 1

    if report is not None and report.n_terms > 0:
        write_errors_csv(report, out / "errors.csv")
        write_field(report.final.u, out / "recon_final.tatf")
        if report.errors_percent:
            save_error_curve(report.errors_percent, out / "errors.png",
                             label=config.variant.value)
        save_field_panel([(phantom, "truth"),
                          (report.iterates[0].u, "1 term"),
                          (report.final.u, f"{report.n_terms} terms")],
                         out / "panels.png", share_range=True)

    geometry = _geometry_summary(medium)
    _write_summary(out / "summary.txt", config, dt, nsteps, geometry, report, failure)

    if failure is not None:
        (out / FAILURE_MARKER).write_text(f"{failure}\n")
        print(f"FAILED: {failure}", file=sys.stderr)
    elif verbose:
        print(f"final error {report.errors_percent[-1]:.2f}% "
              f"(outputs in {out})")
    return status


def _write_summary(path, config, dt, nsteps, geometry, report, failure) -> None:
    lines = [
        "reconstruction experiment summary",
        f"variant: {config.variant.value}",
        f"grid: {config.grid_n}x{config.grid_n} on [-1,1]^2",
        f"T: {config.solve.T!r}  dt: {dt!r}  steps: {nsteps}",
        f"attenuation: d1={config.attenuation.d1!r} d2={config.attenuation.d2!r} "
        f"d3={config.attenuation.d3!r}",
        f"t0_estimate: {geometry['t0_estimate']!r}{geometry['t0_note']}",
        f"t1_estimate: {geometry['t1_estimate']!r}",
    ]
    if report is not None and report.errors_percent:
        lines.append(f"terms_computed: {report.n_terms}")
        lines.append(f"error_after_1_term_percent: {report.errors_percent[0]!r}")
        lines.append(f"final_error_percent: {report.errors_percent[-1]!r}")
        if report.contraction_ratios:
            lines.append(f"last_contraction_ratio: {report.contraction_ratios[-1]!r}")
    if failure is not None:
        lines.append(f"failure: {failure}")
    Path(path).write_text("\n".join(lines) + "\n")


def run_forward(config: ExperimentConfig, verbose: bool = False) -> int:
    """Forward-simulate the phantom source and store the measured trace."""
    grid = config.grid()
    medium = config.medium()
    phantom = build_phantom(grid, config.blur_radius)
    out = Path(config.out_dir)
    out.mkdir(parents=True, exist_ok=True)
    save_config(config, out / "config.json")
    _write_medium_outputs(out, medium, phantom)

    snapshot_dir = None
    if config.snapshot_every > 0:
        snapshot_dir = out / "snapshots"
        snapshot_dir.mkdir(exist_ok=True)

    result = forward_solve(tat_pair(phantom, medium), medium, config.solve,
                           snapshot_every=config.snapshot_every, snapshot_dir=snapshot_dir)
    write_trace(result.trace, out / "trace.tatt")
    write_field(result.final.u, out / "final_u.tatf")
    write_field(result.final.ut, out / "final_ut.tatf")

    times = result.trace.times
    with open(out / "energy.csv", "w", newline="") as fh:
        writer = csv.writer(fh)
        writer.writerow(["t", "domain_energy"])
        for t, e in zip(times, result.energy_series):
            writer.writerow([repr(float(t)), repr(float(e))])
    save_energy_curve(times, result.energy_series, out / "energy.png")
    if verbose:
        print(f"trace: {result.trace.nt} samples x {result.trace.sensors.size} sensors, "
              f"dissipated {result.damping_integral:.4g} (outputs in {out})")
    return 0


def run_geodesic(config: ExperimentConfig, n_boundary: int, n_angle: int,
                 step: float, verbose: bool = False) -> int:
    """Estimate the geodesic diameter and depth of the medium."""
    medium = config.medium()
    out = Path(config.out_dir)
    out.mkdir(parents=True, exist_ok=True)

    starts, dirs, lengths, trapped = raygeo.ray_length_sweep(
        medium, n_boundary_samples=n_boundary, n_angle_samples=n_angle, step=step)
    t1 = raygeo.estimate_T1(medium)
    with open(out / "ray_lengths.csv", "w", newline="") as fh:
        writer = csv.writer(fh)
        writer.writerow(["x0", "y0", "dir_x", "dir_y", "length", "trapped"])
        for (x0, y0), (dx_, dy_), ln, tr in zip(starts, dirs, lengths, trapped):
            writer.writerow([repr(float(x0)), repr(float(y0)), repr(float(dx_)),
                             repr(float(dy_)), repr(float(ln)), int(tr)])
    t0 = float(lengths[~trapped].max()) if (~trapped).any() else float("nan")
    summary = {
        "t0_estimate": t0,
        "t1_estimate": t1,
        "trapped_rays": int(trapped.sum()),
        "rays": int(lengths.size),
    }
    with open(out / "geodesic.json", "w") as fh:
        json.dump(summary, fh, indent=2)
        fh.write("\n")
    print(f"t0_estimate: {t0!r}")
    print(f"t1_estimate: {t1!r}")
    if trapped.any():
        print(f"warning: {int(trapped.sum())} rays hit the length cap "
              "(trapping suspicion, estimate invalid)", file=sys.stderr)
        return 1
    return 0


# ---------------------------------------------------------------------------
# Self test
# ---------------------------------------------------------------------------

def run_selftest(seed: int = 0) -> int:
    """Fast end-to-end sanity checks; prints one line per check."""
    from .media import uniform_medium
    from .reconstruct import measure, time_reverse
    from .wavesim import harmonic_extension, local_energy
    from .fields import WavePair, boundary_sensors, field_from_function, read_field

    rng = np.random.default_rng(seed)
    failures = 0

    def check(name, ok):
        nonlocal failures
        print(f"{'PASS' if ok else 'FAIL'}  {name}")
        failures += 0 if ok else 1

    import tempfile
    grid = make_grid(41, 41, (-1, 1, -1, 1))
    field = ScalarField2D(grid, rng.standard_normal(grid.shape))
    with tempfile.TemporaryDirectory() as tmp:
        write_field(field, f"{tmp}/f.tatf")
        back = read_field(f"{tmp}/f.tatf")
        check("field file round-trip", back.equals(field))

    ext = harmonic_extension(np.ones(boundary_sensors(grid).size), grid)
    check("harmonic extension of constants", np.allclose(ext.values, 1.0, atol=1e-9))

    medium = uniform_medium(grid)
    cfg = SolveConfig(T=2.5, pml_cells=10, box_margin=0.2)
    bump = field_from_function(grid, lambda X, Y: np.exp(-((X**2 + Y**2) / 0.08)))
    pair = WavePair(bump, ScalarField2D(grid, np.zeros(grid.shape)))
    h = measure(pair, medium, cfg)
    check("trace starts at zero", float(np.abs(h.values[0]).max()) == 0.0)

    r1 = time_reverse(h, medium, cfg, Variant.SIGN_FLIPPED)
    r2 = time_reverse(h, medium, cfg, Variant.HOMAN)
    agree = float(np.abs(r1.u.values - r2.u.values).max())
    check("undamped variants agree", agree < 1e-12)

    err = np.sqrt(local_energy(WavePair(
        ScalarField2D(grid, r1.u.values - pair.u.values),
        ScalarField2D(grid, r1.ut.values - pair.ut.values)), medium.c)
        / local_energy(pair, medium.c))
    check("time reversal roughly recovers the source", err < 0.5)

    t0 = raygeo.estimate_T0(medium, n_boundary_samples=16, n_angle_samples=16, step=0.02)
    check("flat-metric diameter", abs(t0 - 2.0 * np.sqrt(2.0)) < 0.05)
    return 1 if failures else 0


# ---------------------------------------------------------------------------
# Argument parsing
# ---------------------------------------------------------------------------

def _add_config_args(p: argparse.ArgumentParser) -> None:
    p.add_argument("--config", metavar="PATH", help="JSON experiment configuration")
    p.add_argument("--preset", choices=sorted(PRESETS), help="named preset configuration")
    p.add_argument("--variant", choices=[v.value for v in Variant], help="back-projection variant")
    p.add_argument("--terms", type=int, metavar="N", help="number of series terms")
    p.add_argument("--grid", type=int, metavar="N", help="nodes per axis on the domain")
    p.add_argument("--out", metavar="DIR", help="output directory")
    p.add_argument("-q", "--quiet", action="store_true", help="suppress progress output")


def _resolve_config(args) -> ExperimentConfig:
    if args.config and args.preset:
        raise SystemExit("use either --config or --preset, not both")
    if args.config:
        cfg = load_config(args.config)
    else:
        cfg = PRESETS[args.preset or "example1"]
    updates = {}
    if args.variant:
        updates["variant"] = Variant.parse(args.variant)
    if args.terms is not None:
        updates["n_terms"] = args.terms
    if args.grid is not None:
        updates["grid_n"] = args.grid
    if args.out is not None:
        updates["out_dir"] = args.out
    return dataclasses.replace(cfg, **updates) if updates else cfg


def main(argv=None) -> int:
    parser = argparse.ArgumentParser(
        prog="tatrec",
        description="Damped-wave thermoacoustic simulation and Neumann-series reconstruction.")
    sub = parser.add_subparsers(dest="command", required=True)

    p_forward = sub.add_parser("forward", help="simulate the phantom and record its boundary trace")
    _add_config_args(p_forward)

    p_rec = sub.add_parser("reconstruct", help="run a full reconstruction experiment")
    _add_config_args(p_rec)

    p_geo = sub.add_parser("geodesic", help="estimate geodesic diameter and depth of the medium")
    _add_config_args(p_geo)
    p_geo.add_argument("--boundary-samples", type=int, default=64)
    p_geo.add_argument("--angle-samples", type=int, default=64)
    p_geo.add_argument("--step", type=float, default=0.005)

    p_render = sub.add_parser("render", help="render a field file to an 8-bit PGM image")
    p_render.add_argument("field", help="input .tatf file")
    p_render.add_argument("-o", "--output", help="output .pgm path (default: input with .pgm)")
    p_render.add_argument("--min", type=float, default=None, help="value mapped to black")
    p_render.add_argument("--max", type=float, default=None, help="value mapped to white")

    p_self = sub.add_parser("selftest", help="run quick built-in checks")
    p_self.add_argument("--seed", type=int, default=0)

    args = parser.parse_args(argv)

    if args.command == "render":
        out = args.output or str(Path(args.field).with_suffix(".pgm"))
        render_pgm(read_field(args.field), out, vmin=args.min, vmax=args.max)
        return 0
    if args.command == "selftest":
        return run_selftest(args.seed)

    config = _resolve_config(args)
    if args.command == "forward":
        return run_forward(config, verbose=not args.quiet)
    if args.command == "reconstruct":
        return run_experiment(config, verbose=not args.quiet)
    if args.command == "geodesic":
        return run_geodesic(config, args.boundary_samples, args.angle_samples,
                            args.step, verbose=not args.quiet)
    raise AssertionError(f"unhandled command {args.command}")


if __name__ == "__main__":
    sys.exit(main())
