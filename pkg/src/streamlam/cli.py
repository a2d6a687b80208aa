"""Command line interface.

Subcommands mirror the pipeline stages (``gen-field``, ``trace``,
``select``, ``splat``, ``hexmesh``) plus ``pipeline`` for a full run.
Exit codes: 0 success, 1 usage, 2 data error, 3 solver error.
"""

from __future__ import annotations

import argparse
import sys
from pathlib import Path

import numpy as np

from . import field as fld
from . import hexer, singularity, splatter, tracer
from .errors import DataError, InvalidParam, SolverError, StreamlamError
from .pipeline import (PipelineConfig, StageTimer, build_hex, build_solid, compute_mask, load_or_make_field,
                       make_field, run_pipeline, select_surfaces, supersample_all, trace_candidates, write_json)

EXIT_OK, EXIT_USAGE, EXIT_DATA, EXIT_SOLVER = 0, 1, 2, 3


class UsageError(Exception):
    pass


class _Parser(argparse.ArgumentParser):
    # argparse exits with status 2 on bad usage, which collides with data errors
    def error(self, message):
        raise UsageError(f"{self.prog}: error: {message}")


def _triple(text):
    try:
        vals = tuple(int(v) for v in text.replace("x", ",").split(","))
    except ValueError:
        raise argparse.ArgumentTypeError(f"expected three integers like 64,64,64, got {text!r}") from None
    if len(vals) == 1:
        vals = vals * 3
    if len(vals) != 3 or min(vals) < 1:
        raise argparse.ArgumentTypeError(f"expected three positive integers, got {text!r}")
    return vals


# flag -> PipelineConfig attribute; flags default to None so that only given ones override
_CONFIG_FLAGS = {
    "field": "field", "generator": "generator", "dims": "dims", "spacing": "spacing",
    "thickness": "thickness", "pitch": "pitch", "index": "index", "axis": "axis",
    "radius": "r", "radius_fine": "r_fine", "step": "step", "gamma": "gamma", "epsilon": "epsilon",
    "k_sigma": "k_sigma", "dilation": "dilation", "eps_void": "eps_void", "eps_solid": "eps_solid",
    "seed": "seed", "n_surfaces": "n_surfaces", "layer": "layer", "max_points": "max_points",
    "out_dims": "out_dims", "iso": "iso", "threads": "threads", "output": "output",
    "outputs": "outputs",
}


def _add_field_source(p):
    p.add_argument("--field", help="input .ffield file (overrides --generator)")
    p.add_argument("--generator", choices=sorted(fld.GENERATORS), help="built-in field generator")
    p.add_argument("--dims", type=_triple, help="generator grid size, e.g. 64,64,64")
    p.add_argument("--spacing", type=float)
    p.add_argument("--thickness", type=float, help="uniform layer thickness of generated fields")
    p.add_argument("--pitch", type=float, help="helicoid pitch")
    p.add_argument("--index", type=int, help="index of the embedded planar singularity (+1 or -1)")
    p.add_argument("--axis", choices=["x", "y", "z"])
    p.add_argument("--eps-void", type=float)
    p.add_argument("--eps-solid", type=float)


def _add_common(p, *, field=True, tracing=False, output=False):
    p.add_argument("--config", help="JSON file with PipelineConfig values; flags override it")
    p.add_argument("-o", "--output", help="output directory")
    p.add_argument("--seed", type=int, help="random seed")
    p.add_argument("--threads", type=int, help="worker processes for tracing")
    p.add_argument("--gamma", type=float, help="target surface spacing (world units)")
    p.add_argument("--epsilon", type=float, help="probe spacing as a fraction of gamma")
    p.add_argument("--radius", type=float, help="sampling radius r of traced surfaces")
    p.add_argument("--radius-fine", type=float, help="super-sampling radius")
    if field:
        _add_field_source(p)
    if tracing:
        p.add_argument("--k-sigma", type=float, help="singularity threshold in standard deviations")
        p.add_argument("--dilation", type=float, help="mask dilation radius (default 2r)")
        p.add_argument("--allow-traversal", action="store_true", default=None,
                       help="let a layer with a nearly constant normal cross the singularity mask")
        p.add_argument("--step", type=float, help="fixed RK4 step (default: annulus distance)")
        p.add_argument("--n-surfaces", type=int, help="number of candidate surfaces")
        p.add_argument("--layer", type=int, choices=[0, 1, 2], help="trace only this frame vector")
        p.add_argument("--max-points", type=int)
    if output:
        p.add_argument("--out-dims", type=_triple, help="resolution of the output voxel grid")
        p.add_argument("--iso", type=float, help="iso-value for surface extraction")
        p.add_argument("--outputs", nargs="+", choices=["solid", "hex"])
        p.add_argument("--fill-solid", action="store_true", default=None)
        p.add_argument("--strict-hex", action="store_true", default=None,
                       help="raise on crowded points, face conflicts and folds instead of leaving gaps")


def build_parser():
    parser = _Parser(prog="streamlam", description="Frame-field aligned laminar structures.")
    sub = parser.add_subparsers(dest="command", required=True, parser_class=_Parser)

    p = sub.add_parser("gen-field", help="write a built-in frame field")
    p.add_argument("name", help="generator name")
    p.add_argument("--dims", type=_triple, default=(64, 64, 64))
    p.add_argument("--spacing", type=float, default=1.0)
    p.add_argument("--thickness", type=float, default=0.5)
    p.add_argument("--pitch", type=float, default=0.05)
    p.add_argument("--index", type=int, default=1)
    p.add_argument("--axis", choices=["x", "y", "z"], default="z")
    p.add_argument("-o", "--output", required=True, help="output .ffield path")

    p = sub.add_parser("trace", help="trace a candidate set of stream surfaces")
    _add_common(p, tracing=True)

    p = sub.add_parser("select", help="select a well-spaced subset and super-sample it")
    _add_common(p, tracing=True)
    p.add_argument("--surfaces", required=True, help="directory written by 'trace'")

    p = sub.add_parser("splat", help="voxel solid and iso-surface from selected surfaces")
    _add_common(p, output=True)
    p.add_argument("--surfaces", required=True, help="directory of surfaces")

    p = sub.add_parser("hexmesh", help="hexahedral mesh dual to the surface arrangement")
    _add_common(p, field=False, output=True)
    p.add_argument("--surfaces", required=True, help="directory of surfaces")

    p = sub.add_parser("pipeline", help="run every stage")
    _add_common(p, tracing=True, output=True)
    return parser


def config_from_args(args):
    cfg = PipelineConfig.from_json(args.config) if getattr(args, "config", None) else PipelineConfig()
    data = cfg.to_dict()
    for flag, key in _CONFIG_FLAGS.items():
        val = getattr(args, flag, None)
        if val is not None:
            data[key] = val
    for flag in ("fill_solid", "strict_hex", "allow_traversal"):
        if getattr(args, flag, None):
            data[flag] = True
    return PipelineConfig.from_dict(data)


def _read_surfaces(directory):
    manifest, surfaces = tracer.read_surface_dir(directory)
    if not surfaces:
        raise InvalidParam(f"{directory} holds no surfaces")
    return manifest, surfaces


# commands -------------------------------------------------------------------------


def cmd_gen_field(args):
    timer = StageTimer(print)
    with timer("field"):
        g = make_field(args.name, args.dims, args.spacing, args.thickness, args.pitch, args.index, args.axis)
        fld.save_field(g, args.output)
    hist = np.bincount(g.classification.ravel(), minlength=3)
    print(f"dims {g.dims[0]}x{g.dims[1]}x{g.dims[2]}")
    for c in fld.VoxelClass:
        print(f"{c.name.lower():<13}{hist[int(c)]}")
    return EXIT_OK


def cmd_trace(args):
    cfg = config_from_args(args)
    cfg.validate()
    out = Path(cfg.output)
    timer = StageTimer(print)
    with timer("field"):
        g = load_or_make_field(cfg)
    with timer("mask"):
        mask = compute_mask(g, cfg.k_sigma, cfg.dilation_radius, cfg.allow_traversal)
    with timer("trace"):
        surfaces = trace_candidates(g, mask, cfg)
        out.mkdir(parents=True, exist_ok=True)
        singularity.save_mask(mask, out / "mask.fmask")
        tracer.write_surface_dir(surfaces, out, cfg.r, fhash=tracer.field_hash(g))
    print(f"traced {len(surfaces)} surfaces, {sum(len(s) for s in surfaces)} points")
    print(timer.report())
    return EXIT_OK


def _mask_for(directory, g, cfg):
    path = Path(directory) / "mask.fmask"
    if path.exists():
        return singularity.load_mask(path)
    return compute_mask(g, cfg.k_sigma, cfg.dilation_radius, cfg.allow_traversal)


def cmd_select(args):
    cfg = config_from_args(args)
    cfg.validate()
    out = Path(cfg.output)
    timer = StageTimer(print)
    with timer("field"):
        g = load_or_make_field(cfg)
        _, surfaces = _read_surfaces(args.surfaces)
        mask = _mask_for(args.surfaces, g, cfg)
    with timer("select"):
        subset, report = select_surfaces(surfaces, g, mask, cfg)
        out.mkdir(parents=True, exist_ok=True)
        write_json(report, out / "selection.json")
    with timer("supersample"):
        fine = supersample_all(g, mask, subset, cfg.r_fine, cfg.seed, cfg.max_points)
        tracer.write_surface_dir(fine, out, cfg.r, cfg.r_fine, tracer.field_hash(g))
    print(f"selected {len(subset)} of {len(surfaces)} surfaces "
          f"(relaxed {report['relaxed_objective']:.4g}, binary {report['binary_objective']:.4g})")
    print(timer.report())
    return EXIT_OK


def cmd_splat(args):
    cfg = config_from_args(args)
    out = Path(cfg.output)
    timer = StageTimer(print)
    with timer("field"):
        g = load_or_make_field(cfg)
        _, surfaces = _read_surfaces(args.surfaces)
    with timer("solid"):
        V, tri = build_solid(g, surfaces, cfg)
        out.mkdir(parents=True, exist_ok=True)
        splatter.save_volume(V, out / "solid.vvol")
        splatter.save_obj(tri, out / "solid.obj")
    print(f"solid volume {V.dims}, {len(tri.vertices)} vertices, {len(tri)} triangles")
    print(timer.report())
    return EXIT_OK


def cmd_hexmesh(args):
    cfg = config_from_args(args)
    out = Path(cfg.output)
    timer = StageTimer(print)
    with timer("hex"):
        manifest, surfaces = _read_surfaces(args.surfaces)
        r = args.radius_fine or manifest.get("r_fine") or surfaces[0].r
        mesh, quality = build_hex(surfaces, r, cfg.strict_hex)
        out.mkdir(parents=True, exist_ok=True)
        hexer.save_vtk(mesh, out / "hex.vtk")
        hexer.save_medit(mesh, out / "hex.mesh")
        hexer.save_quality(quality, out / "quality.json")
    _print_quality(quality)
    print(timer.report())
    return EXIT_OK


def _print_quality(q):
    print(f"{q['cells']} hexahedra, {q['vertices']} vertices, "
          f"scaled Jacobian min {q['min_scaled_jacobian']:.3f} mean {q['mean_scaled_jacobian']:.3f}, "
          f"{q['nonconforming_faces']} nonconforming faces")


def cmd_pipeline(args):
    cfg = config_from_args(args)
    res = run_pipeline(cfg)
    sel = res["selection"]
    print(f"selected {len(sel['selected_ids'])} of {sel['n_S']} surfaces")
    if "quality" in res:
        _print_quality(res["quality"])
    print(res["timer"].report())
    print(f"{'Wall clock':<32}{res['wall']:10.2f} s")
    return EXIT_OK


COMMANDS = {
    "gen-field": cmd_gen_field,
    "trace": cmd_trace,
    "select": cmd_select,
    "splat": cmd_splat,
    "hexmesh": cmd_hexmesh,
    "pipeline": cmd_pipeline,
}


def main(argv=None):
    parser = build_parser()
    try:
        args = parser.parse_args(argv)
    except UsageError as exc:
        print(parser.format_usage().rstrip(), file=sys.stderr)
        print(exc, file=sys.stderr)
        return EXIT_USAGE
    except SystemExit as exc:  # --help
        return int(exc.code or 0)
    try:
        return COMMANDS[args.command](args)
    except SolverError as exc:
        print(f"solver error: {exc}", file=sys.stderr)
        return EXIT_SOLVER
    except DataError as exc:
        print(f"data error: {exc}", file=sys.stderr)
        return EXIT_DATA
    except StreamlamError as exc:
        print(f"error: {exc}", file=sys.stderr)
        return EXIT_DATA
    except OSError as exc:
        print(f"data error: {exc}", file=sys.stderr)
        return EXIT_DATA


if __name__ == "__main__":
    sys.exit(main())
