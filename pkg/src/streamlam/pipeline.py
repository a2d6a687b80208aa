"""Configuration and stage functions shared by the command line and scripts.

A run goes field -> singularity mask -> traced candidate set -> selection ->
super-sampling of the selected surfaces -> voxel solid and/or hex mesh.
Each stage is timed; timings are kept apart from the output artifacts so
that those stay byte-identical across runs with the same configuration.
"""

from __future__ import annotations

import dataclasses
import json
import time
from contextlib import contextmanager
from dataclasses import dataclass
from pathlib import Path

import numpy as np

from . import field as fld
from . import hexer, selector, singularity, splatter, tracer
from .errors import InvalidParam, IoError, StreamlamError, UnknownGenerator

OUTPUT_KINDS = ("solid", "hex")

# rows of the timing report, in pipeline order
STAGE_LABELS = {
    "field": "Field (runtime)",
    "mask": "Singularity mask (runtime)",
    "trace": "Generating S (runtime)",
    "select": "Subselection (runtime)",
    "supersample": "Super-sampling (runtime)",
    "solid": "Solid generation (runtime)",
    "hex": "Hexahedralization (runtime)",
}


@dataclass
class PipelineConfig:
    """All knobs of a run.  ``field`` is a ``.ffield`` path; otherwise ``generator`` is used."""

    field: str | None = None
    generator: str = "cylinder"
    dims: tuple = (64, 64, 64)
    spacing: float = 1.0
    thickness: float = 0.5
    pitch: float = 0.05
    index: int = 1
    axis: str = "z"
    r: float = 2.0
    r_fine: float = 1.0
    step: float | None = None
    gamma: float = 8.0
    epsilon: float = 0.25
    k_sigma: float = 3.0
    dilation: float | None = None
    allow_traversal: bool = False
    eps_void: float = fld.EPS_VOID
    eps_solid: float = fld.EPS_SOLID
    seed: int = 0
    n_surfaces: int | None = None
    layer: int | None = None
    max_points: int = tracer.MAX_POINTS
    out_dims: tuple | None = None
    iso: float = 0.5
    fill_solid: bool = False
    strict_hex: bool = False
    outputs: tuple = OUTPUT_KINDS
    threads: int = 1
    output: str = "out"

    def __post_init__(self):
        self.dims = tuple(int(d) for d in self.dims)
        if self.out_dims is not None:
            self.out_dims = tuple(int(d) for d in self.out_dims)
        if isinstance(self.outputs, str):
            self.outputs = (self.outputs,)
        self.outputs = tuple(self.outputs)

    @property
    def dilation_radius(self):
        return 2.0 * self.r if self.dilation is None else float(self.dilation)

    def validate(self):
        if not self.gamma > 0:
            raise InvalidParam("gamma must be positive")
        if not 0 < self.epsilon < 1:
            raise InvalidParam("epsilon must lie in (0, 1)")
        if not 0 < self.r_fine < self.r:
            raise InvalidParam("need 0 < r_fine < r")
        if self.r > self.epsilon * self.gamma + 1e-9:
            raise InvalidParam(f"r = {self.r} exceeds epsilon * gamma = {self.epsilon * self.gamma}")
        if self.step is not None and not self.step > 0:
            raise InvalidParam("step must be positive")
        if self.n_surfaces is not None and self.n_surfaces < 1:
            raise InvalidParam("n_surfaces must be at least 1")
        if self.layer is not None and self.layer not in (0, 1, 2):
            raise InvalidParam("layer must be 0, 1 or 2")
        if not set(self.outputs) <= set(OUTPUT_KINDS):
            raise InvalidParam(f"outputs must be drawn from {OUTPUT_KINDS}")
        if self.threads < 1:
            raise InvalidParam("threads must be at least 1")
        return self

    def to_dict(self):
        out = dataclasses.asdict(self)
        for key in ("dims", "out_dims", "outputs"):
            if out[key] is not None:
                out[key] = list(out[key])
        return out

    @classmethod
    def from_dict(cls, data):
        names = {f.name for f in dataclasses.fields(cls)}
        unknown = set(data) - names
        if unknown:
            raise InvalidParam(f"unknown configuration keys: {sorted(unknown)}")
        return cls(**data)

    @classmethod
    def from_json(cls, path):
        try:
            data = json.loads(Path(path).read_text())
        except OSError as exc:
            raise IoError(f"cannot read config {path}: {exc}", "config") from None
        except json.JSONDecodeError as exc:
            raise InvalidParam(f"config {path} is not valid JSON: {exc}") from None
        if not isinstance(data, dict):
            raise InvalidParam("config must be a JSON object")
        return cls.from_dict(data)


class StageTimer:
    """Wall-clock time per stage; errors raised inside a stage are tagged with its name."""

    def __init__(self, echo=None):
        self.times = {}
        self.echo = echo

    @contextmanager
    def __call__(self, name):
        t0 = time.perf_counter()
        try:
            yield
        except StreamlamError as exc:
            if getattr(exc, "stage", None) is None:
                exc.stage = name
            raise
        except OSError as exc:
            raise IoError(str(exc), name) from exc
        finally:
            self.times[name] = self.times.get(name, 0.0) + time.perf_counter() - t0
        if self.echo:
            self.echo(f"{STAGE_LABELS.get(name, name)}: {self.times[name]:.2f} s")

    @property
    def total(self):
        return float(sum(self.times.values()))

    def report(self):
        lines = [f"{STAGE_LABELS.get(k, k):<32}{v:10.2f} s" for k, v in self.times.items()]
        lines.append(f"{'Summed runtime':<32}{self.total:10.2f} s")
        return "\n".join(lines)


# stages ---------------------------------------------------------------------------


def make_field(generator, dims, spacing=1.0, thickness=0.5, pitch=0.05, index=1, axis="z",
               eps_void=fld.EPS_VOID, eps_solid=fld.EPS_SOLID):
    """Run a named generator; the voxel classification uses the given thresholds."""
    if generator not in fld.GENERATORS:
        raise UnknownGenerator(f"unknown generator {generator!r}; choose from {sorted(fld.GENERATORS)}")
    try:
        if generator == "cylinder":
            g = fld.gen_cylinder_field(dims, axis=axis, spacing=spacing, thickness=thickness)
        elif generator == "helicoid":
            g = fld.gen_helicoid_field(dims, pitch, axis=axis, spacing=spacing, thickness=thickness)
        else:
            g = fld.gen_embedded_singularity_field(dims, index=index, spacing=spacing, thickness=thickness)
    except ValueError as exc:
        raise InvalidParam(str(exc)) from None
    if (eps_void, eps_solid) != (fld.EPS_VOID, fld.EPS_SOLID):
        g = fld.FrameGrid(g.frames, g.thickness, g.spacing, g.origin, degenerate=g.degenerate,
                          eps_void=eps_void, eps_solid=eps_solid)
    return g


def load_or_make_field(cfg):
    if cfg.field:
        return fld.load_field(cfg.field, cfg.eps_void, cfg.eps_solid)
    return make_field(cfg.generator, cfg.dims, cfg.spacing, cfg.thickness, cfg.pitch, cfg.index,
                      cfg.axis, cfg.eps_void, cfg.eps_solid)


def compute_mask(g, k_sigma, dilation_radius, allow_traversal=False):
    return singularity.detect_singular_voxels(singularity.rotation_energy(g), g, k_sigma, dilation_radius,
                                              allow_traversal=allow_traversal)


def default_n_surfaces(g, gamma, epsilon):
    extent = np.asarray(g.upper) - np.asarray(g.lower)
    return selector.cardinalities(np.maximum(extent, g.spacing), gamma, epsilon)[1]


def trace_candidates(g, mask, cfg):
    n = cfg.n_surfaces or default_n_surfaces(g, cfg.gamma, cfg.epsilon)
    return tracer.generate_surface_set(g, mask, n, cfg.seed, cfg.r, layer=cfg.layer,
                                       max_points=cfg.max_points, step=cfg.step, threads=cfg.threads)


def select_surfaces(surfaces, g, mask, cfg):
    """Returns ``(subset, report)`` where ``report`` is the JSON-ready selection summary."""
    probes = selector.build_probe_grid(g, cfg.gamma, cfg.epsilon, cfg.seed, mask)
    subset, res = selector.select(surfaces, g, cfg.gamma, cfg.epsilon, cfg.seed, mask, probes=probes)
    report = {
        "n_S": len(surfaces),
        "n_p": len(probes),
        "relaxed_objective": res.relaxed_objective,
        "binary_objective": res.objective,
        "fixed_fraction": res.fixed_fraction,
        "selected_ids": [int(surfaces[i].id) for i in res.selected_ids],
    }
    return subset, report


def supersample_all(g, mask, surfaces, r_fine, seed, max_points=tracer.MAX_POINTS):
    """Super-sample each surface with a generator keyed on ``(seed, surface id)``."""
    return [tracer.supersample_surface(g, s, r_fine, mask, np.random.default_rng([seed, int(s.id)]),
                                       max_points=max_points)
            for s in surfaces]


def build_solid(g, surfaces, cfg):
    """Returns ``(volume, mesh)``; splat radius is the surfaces' own sampling radius."""
    grid = splatter.output_grid(g, cfg.out_dims)
    V = splatter.splat_surfaces(surfaces, g, cfg.gamma, grid, fill_solid=cfg.fill_solid)
    return V, splatter.extract_isosurface(V, cfg.iso)


def build_hex(surfaces, r_fine, strict=False):
    mesh, stc = hexer.hexmesh(surfaces, r_fine, strict=strict)
    return mesh, hexer.mesh_quality_report(mesh)


def write_json(data, path):
    Path(path).write_text(json.dumps(data, indent=2, sort_keys=True) + "\n")


def run_pipeline(cfg, echo=print):
    """Run every stage and write the artifacts under ``cfg.output``.

    Returns a dict with the in-memory results and the stage timer.
    """
    cfg.validate()
    out = Path(cfg.output)
    timer = StageTimer(echo)
    t_wall = time.perf_counter()
    with timer("field"):
        out.mkdir(parents=True, exist_ok=True)
        g = load_or_make_field(cfg)
    with timer("mask"):
        mask = compute_mask(g, cfg.k_sigma, cfg.dilation_radius, cfg.allow_traversal)
        singularity.save_mask(mask, out / "mask.fmask")
    fhash = tracer.field_hash(g)
    with timer("trace"):
        candidates = trace_candidates(g, mask, cfg)
        tracer.write_surface_dir(candidates, out / "candidates", cfg.r, fhash=fhash)
    with timer("select"):
        subset, report = select_surfaces(candidates, g, mask, cfg)
        write_json(report, out / "selection.json")
    with timer("supersample"):
        fine = supersample_all(g, mask, subset, cfg.r_fine, cfg.seed, cfg.max_points)
        tracer.write_surface_dir(fine, out / "selected", cfg.r, cfg.r_fine, fhash)
    result = {"field": g, "mask": mask, "candidates": candidates, "selection": report,
              "selected": fine, "timer": timer}
    if "solid" in cfg.outputs:
        with timer("solid"):
            V, tri = build_solid(g, fine, cfg)
            splatter.save_volume(V, out / "solid.vvol")
            splatter.save_obj(tri, out / "solid.obj")
        result.update(volume=V, solid_mesh=tri)
    if "hex" in cfg.outputs:
        with timer("hex"):
            mesh, quality = build_hex(fine, cfg.r_fine, cfg.strict_hex)
            hexer.save_vtk(mesh, out / "hex.vtk")
            hexer.save_medit(mesh, out / "hex.mesh")
            hexer.save_quality(quality, out / "quality.json")
        result.update(hex_mesh=mesh, quality=quality)
    wall = time.perf_counter() - t_wall
    # timings vary run to run, so they live outside the deterministic artifacts
    write_json({"stages": timer.times, "summed": timer.total, "wall": wall}, out / "timings.json")
    result["wall"] = wall
    return result
