"""Splat point-sampled surfaces into a voxel occupancy grid and extract its boundary.

Every surface point carries a cylindrical primitive of radius ``r`` and
half-height ``tau``: a smoothstep profile across the surface,

    phi_i(x) = ss(-tau_i, 0, -|n_i . (x - p_i)|),

blended by a lateral smoothstep weight

    w_i(x) = ss(-r, 0, -|x - p_i - n_i (n_i . (x - p_i))|).

Per surface ``V_s = sum w phi / sum w``; surfaces combine by maximum.
"""

from __future__ import annotations

import json
from dataclasses import dataclass
from pathlib import Path

import numpy as np
from numba import njit
from skimage import measure

from .errors import (DimensionMismatch, EmptySurface, GridMismatch, InvalidParam, InvalidRange,
                     IoError, MalformedHeader)
from .field import VoxelClass, closest_frame_vectors

VVOL_VERSION = 1


def smoothstep(a, b, x):
    """Cubic Hermite step, 0 at ``x <= a`` and 1 at ``x >= b``."""
    if not a < b:
        raise InvalidRange(f"smoothstep needs a < b, got a={a}, b={b}")
    t = np.clip((np.asarray(x, dtype=float) - a) / (b - a), 0.0, 1.0)
    out = t * t * (3.0 - 2.0 * t)
    return float(out) if out.ndim == 0 else out


def _ss_neg(x, width):
    """``smoothstep(-width, 0, -x)`` for ``x >= 0`` and broadcast widths."""
    t = np.clip(1.0 - x / width, 0.0, 1.0)
    return t * t * (3.0 - 2.0 * t)


@dataclass(eq=False)
class VoxelVolume:
    values: np.ndarray
    spacing: float = 1.0
    origin: np.ndarray = None

    def __post_init__(self):
        self.values = np.asarray(self.values, dtype=float)
        self.origin = np.zeros(3) if self.origin is None else np.asarray(self.origin, dtype=float)
        self.spacing = float(self.spacing)

    @property
    def dims(self):
        return self.values.shape

    @classmethod
    def empty(cls, dims, spacing=1.0, origin=None):
        return cls(np.zeros(tuple(int(d) for d in dims)), spacing, origin)

    def same_grid(self, other, tol=1e-9):
        return (self.dims == other.dims and abs(self.spacing - other.spacing) <= tol
                and np.allclose(self.origin, other.origin, atol=tol))

    def positions(self):
        idx = np.indices(self.dims).reshape(3, -1).T
        return self.origin + self.spacing * idx


@dataclass(eq=False)
class TriMesh:
    vertices: np.ndarray
    triangles: np.ndarray

    def __len__(self):
        return len(self.triangles)


def splat_surface(s, tau, grid, r=None):
    """Occupancy volume of one surface on the grid of ``grid`` (a VoxelVolume used as a template).

    ``tau`` is a scalar or one value per point; ``r`` defaults to ``s.r``.
    """
    r = float(s.r if r is None else r)
    if r <= 0:
        raise InvalidParam("splat radius must be positive")
    tau = np.broadcast_to(np.asarray(tau, dtype=float), (len(s),))
    if np.any(tau < 0):
        raise InvalidParam("thickness must be non-negative")
    dims = tuple(int(d) for d in grid.dims)
    num = np.zeros(dims)
    den = np.zeros(dims)
    use = tau > 0
    _splat_kernel(np.ascontiguousarray(s.points[use]), np.ascontiguousarray(s.normals[use]),
                  np.ascontiguousarray(tau[use]), r, grid.origin, grid.spacing, num, den)
    vals = np.divide(num, den, out=np.zeros_like(num), where=den > 0)
    return VoxelVolume(np.clip(vals, 0.0, 1.0), grid.spacing, grid.origin)


@njit(cache=True)
def _splat_kernel(pts, nrm, tau, r, origin, h, num, den):
    """Accumulate ``w * phi`` and ``w`` point by point into ``num`` and ``den``."""
    nx, ny, nz = num.shape
    for i in range(pts.shape[0]):
        px, py, pz = pts[i, 0], pts[i, 1], pts[i, 2]
        ax, ay, az = nrm[i, 0], nrm[i, 1], nrm[i, 2]
        t = tau[i]
        reach = np.sqrt(r * r + t * t)
        lo0 = max(int(np.ceil((px - reach - origin[0]) / h)), 0)
        hi0 = min(int(np.floor((px + reach - origin[0]) / h)), nx - 1)
        lo1 = max(int(np.ceil((py - reach - origin[1]) / h)), 0)
        hi1 = min(int(np.floor((py + reach - origin[1]) / h)), ny - 1)
        lo2 = max(int(np.ceil((pz - reach - origin[2]) / h)), 0)
        hi2 = min(int(np.floor((pz + reach - origin[2]) / h)), nz - 1)
        for a in range(lo0, hi0 + 1):
            vx = origin[0] + h * a - px
            for b in range(lo1, hi1 + 1):
                vy = origin[1] + h * b - py
                for c in range(lo2, hi2 + 1):
                    vz = origin[2] + h * c - pz
                    axial = vx * ax + vy * ay + vz * az
                    lx, ly, lz = vx - axial * ax, vy - axial * ay, vz - axial * az
                    lateral = np.sqrt(lx * lx + ly * ly + lz * lz)
                    if lateral >= r:
                        continue
                    u = 1.0 - lateral / r
                    w = u * u * (3.0 - 2.0 * u)
                    u = 1.0 - abs(axial) / t
                    phi = u * u * (3.0 - 2.0 * u) if u > 0.0 else 0.0
                    num[a, b, c] += w * phi
                    den[a, b, c] += w


def union_volumes(volumes):
    """Voxelwise maximum of volumes sharing one grid."""
    volumes = list(volumes)
    if not volumes:
        raise InvalidParam("nothing to unite")
    first = volumes[0]
    out = first.values.copy()
    for v in volumes[1:]:
        if not first.same_grid(v):
            raise GridMismatch("volumes live on different grids")
        np.maximum(out, v.values, out=out)
    return VoxelVolume(out, first.spacing, first.origin)


def thickness_from_field(g, point, normal, gamma):
    """Wall thickness ``t_k * gamma`` for the layer whose frame vector best matches ``normal``.

    Accepts a single point or arrays of points and normals.
    """
    point = np.asarray(point, dtype=float)
    single = point.ndim == 1
    pts = np.atleast_2d(point)
    nrm = np.broadcast_to(np.asarray(normal, dtype=float), pts.shape)
    frames, thick = g.sample_frames(pts)
    k, _ = closest_frame_vectors(frames, nrm)
    tau = thick[np.arange(len(pts)), k] * gamma
    return float(tau[0]) if single else tau


def surface_thickness(g, s, gamma):
    """Per-point thickness for splatting, clamped to ``[one voxel, gamma]``."""
    tau = thickness_from_field(g, s.points, s.normals, gamma)
    return np.clip(tau, g.spacing, max(gamma, g.spacing))


def fill_solid_regions(V, g):
    """Set every voxel of a Solid field voxel to 1 (grids must coincide)."""
    if V.dims != g.dims or abs(V.spacing - g.spacing) > 1e-9 or not np.allclose(V.origin, g.origin):
        raise GridMismatch("volume and field grids are not aligned")
    out = V.values.copy()
    out[g.classification == VoxelClass.SOLID] = 1.0
    return VoxelVolume(out, V.spacing, V.origin)


def extract_isosurface(V, iso=0.5):
    """Closed triangle mesh of the ``iso`` level set.

    The volume is padded with one layer of zeros so that the surface closes
    at the domain boundary.  Zero-area triangles are dropped.
    """
    padded = np.pad(V.values, 1, constant_values=0.0)
    if not padded.min() < iso < padded.max():
        raise EmptySurface(f"volume never crosses iso-value {iso}")
    verts, faces, _, _ = measure.marching_cubes(padded, level=iso, allow_degenerate=False)
    verts = V.origin + V.spacing * (verts - 1.0)
    tri = verts[faces]
    area2 = np.linalg.norm(np.cross(tri[:, 1] - tri[:, 0], tri[:, 2] - tri[:, 0]), axis=1)
    faces = faces[area2 > 2e-12]
    if len(faces) == 0:
        raise EmptySurface(f"volume never crosses iso-value {iso}")
    return TriMesh(verts, faces.astype(np.int64))


def splat_surfaces(surfaces, g, gamma, grid, r=None, fill_solid=False):
    """Union of all surfaces splatted with field-derived thickness."""
    out = VoxelVolume.empty(grid.dims, grid.spacing, grid.origin)
    for s in surfaces:
        tau = surface_thickness(g, s, gamma)
        np.maximum(out.values, splat_surface(s, tau, grid, r).values, out=out.values)
    if fill_solid:
        out = fill_solid_regions(out, g)
    return out


def output_grid(g, dims=None):
    """Grid covering the field's box at ``dims`` resolution (the field grid by default)."""
    if dims is None:
        return VoxelVolume.empty(g.dims, g.spacing, g.origin)
    dims = tuple(int(d) for d in dims)
    extent = (np.asarray(g.dims) - 1) * g.spacing
    spacing = float(np.max(extent / np.maximum(np.asarray(dims) - 1, 1)))
    return VoxelVolume.empty(dims, spacing, g.origin)


# I/O --------------------------------------------------------------------------


def save_volume(V, path):
    header = {"version": VVOL_VERSION, "dims": list(V.dims), "spacing": V.spacing,
              "origin": V.origin.tolist(), "dtype": "float32", "order": "x-fastest"}
    payload = np.ascontiguousarray(np.transpose(V.values, (2, 1, 0)), dtype="<f4")
    with open(path, "wb") as fh:
        fh.write((json.dumps(header) + "\n").encode())
        fh.write(payload.tobytes())


def load_volume(path):
    path = Path(path)
    try:
        with open(path, "rb") as fh:
            line = fh.readline()
            raw = fh.read()
    except OSError as exc:
        raise IoError(f"cannot read {path}: {exc}") from None
    try:
        header = json.loads(line)
        dims = tuple(int(d) for d in header["dims"])
        spacing = float(header["spacing"])
        origin = np.asarray(header["origin"], dtype=float)
    except (ValueError, KeyError, TypeError) as exc:
        raise MalformedHeader(f"{path}: {exc}") from None
    if len(raw) != 4 * int(np.prod(dims)):
        raise DimensionMismatch(f"{path}: payload size does not match dims {dims}")
    vals = np.frombuffer(raw, dtype="<f4").reshape(dims[::-1]).transpose(2, 1, 0).astype(float)
    return VoxelVolume(vals, spacing, origin)


def save_obj(mesh, path):
    lines = [f"v {x:.9g} {y:.9g} {z:.9g}" for x, y, z in mesh.vertices]
    lines += [f"f {a + 1} {b + 1} {c + 1}" for a, b, c in mesh.triangles]
    Path(path).write_text("\n".join(lines) + "\n")


def load_obj(path):
    verts, faces = [], []
    for line in Path(path).read_text().splitlines():
        parts = line.split()
        if not parts:
            continue
        if parts[0] == "v":
            verts.append([float(v) for v in parts[1:4]])
        elif parts[0] == "f":
            faces.append([int(v.split("/")[0]) - 1 for v in parts[1:4]])
    return TriMesh(np.array(verts, dtype=float).reshape(-1, 3), np.array(faces, dtype=np.int64).reshape(-1, 3))
