"""Rotation-energy based detection of singular curves."""

from __future__ import annotations

import itertools
from dataclasses import dataclass
from pathlib import Path

import numpy as np
from scipy import ndimage

from .errors import DimensionMismatch
from .field import VoxelClass, _read_header, grid_header

# all 48 signed permutation matrices, with their determinants
_SIGNED_PERMS = np.array([
    np.diag(signs) @ np.eye(3)[list(p)]
    for p in itertools.permutations(range(3))
    for signs in itertools.product((1.0, -1.0), repeat=3)
])
_SIGNED_DETS = np.rint(np.linalg.det(_SIGNED_PERMS))


TRAVERSAL_ANGLE = np.deg2rad(5.0)


@dataclass(frozen=True, eq=False)
class SingularMask:
    """Voxels excluded from tracing.

    ``traversal`` optionally holds, per voxel, a unit normal whose layer may
    cross the excluded region (zero where no layer may); see
    :func:`steady_frame_vectors`.
    """

    excluded: np.ndarray
    dilation_radius: float = 0.0
    spacing: float = 1.0
    origin: np.ndarray | None = None
    traversal: np.ndarray | None = None

    @property
    def dims(self):
        return self.excluded.shape

    def contains(self, grid_or_index):
        return self.excluded[tuple(np.asarray(grid_or_index).T)]

    def at(self, g, x):
        """Whether the voxel nearest to each point in ``x`` is excluded."""
        v = g.nearest_voxel(x)
        return self.excluded[v[..., 0], v[..., 1], v[..., 2]]

    def blocks(self, g, x, normal, max_angle=TRAVERSAL_ANGLE):
        """Whether a surface point at ``x`` with ``normal`` is kept out by the mask."""
        v = g.nearest_voxel(x)
        i, j, k = int(v[0]), int(v[1]), int(v[2])
        if not self.excluded[i, j, k]:
            return False
        if self.traversal is None:
            return True
        t = self.traversal[i, j, k]
        return not abs(float(t @ normal)) >= np.cos(max_angle) * np.linalg.norm(normal)


def relative_rotation_angle(frames_a, frames_b):
    """Smallest rotation angle taking each frame in ``a`` onto its partner in ``b``.

    Minimises over the octahedral relabelings of ``b`` that keep the relative
    transform a proper rotation.  Inputs are (..., 3, 3) with frame vectors as
    rows; result in radians.
    """
    c = np.einsum("...id,...jd->...ij", frames_a, frames_b)
    det_ab = np.sign(np.linalg.det(frames_a) * np.linalg.det(frames_b))
    traces = np.einsum("pij,...ij->...p", _SIGNED_PERMS, c)
    allowed = _SIGNED_DETS[None, :] == det_ab.reshape(-1, 1)
    traces = np.where(allowed.reshape(traces.shape), traces, -np.inf)
    best = traces.max(axis=-1)
    return np.arccos(np.clip((best - 1.0) / 2.0, -1.0, 1.0))


def rotation_energy(g):
    """Average rotation angle between each voxel frame and its face neighbours."""
    if np.prod(g.dims) < 2:
        raise ValueError("rotation energy needs at least two voxels")
    total = np.zeros(g.dims)
    count = np.zeros(g.dims)
    frames = g.frames
    for axis in range(3):
        if g.dims[axis] < 2:
            continue
        lo = [slice(None)] * 3
        hi = [slice(None)] * 3
        lo[axis] = slice(0, -1)
        hi[axis] = slice(1, None)
        lo, hi = tuple(lo), tuple(hi)
        angle = relative_rotation_angle(frames[lo], frames[hi])
        total[lo] += angle
        total[hi] += angle
        count[lo] += 1
        count[hi] += 1
    return total / np.maximum(count, 1)


def steady_frame_vectors(g, max_angle=TRAVERSAL_ANGLE):
    """Frame vector that turns least towards the face neighbours of each voxel.

    Returns ``(vectors, deviation)``: ``vectors`` is (nx, ny, nz, 3) and zero
    where even the steadiest vector turns by ``max_angle`` or more, and
    ``deviation`` is that vector's largest angle (radians) to its best match
    in a neighbour.  Around a straight singular curve this is the vector
    along the curve, whose layer has a nearly constant normal.
    """
    frames = g.frames
    dev = np.zeros(g.dims + (3,))
    for axis in range(3):
        if g.dims[axis] < 2:
            continue
        lo = [slice(None)] * 3
        hi = [slice(None)] * 3
        lo[axis] = slice(0, -1)
        hi[axis] = slice(1, None)
        lo, hi = tuple(lo), tuple(hi)
        dots = np.abs(np.einsum("...id,...jd->...ij", frames[lo], frames[hi]))
        a = np.arccos(np.clip(dots.max(axis=-1), -1.0, 1.0))
        b = np.arccos(np.clip(dots.max(axis=-2), -1.0, 1.0))
        dev[lo] = np.maximum(dev[lo], a)
        dev[hi] = np.maximum(dev[hi], b)
    k = np.argmin(dev, axis=-1)
    best = np.take_along_axis(dev, k[..., None], axis=-1)[..., 0]
    vec = np.take_along_axis(frames, k[..., None, None], axis=-2)[..., 0, :]
    vec = np.where((best < max_angle)[..., None], vec, 0.0)
    return vec, best


def dilate(mask, radius, spacing=1.0):
    """Grow ``mask`` by all voxels within ``radius`` (world units) of a marked voxel."""
    mask = np.asarray(mask, dtype=bool)
    if radius <= 0 or not mask.any():
        return mask.copy()
    dist = ndimage.distance_transform_edt(~mask, sampling=spacing)
    return dist <= radius


def detect_singular_voxels(energy, g=None, k_sigma=3.0, dilation_radius=0.0, spacing=None,
                           allow_traversal=False):
    """Mark energy spikes above ``mean + k_sigma * std`` and dilate.

    Statistics are taken over Intermediate voxels of ``g`` when a grid is
    given (over all voxels otherwise).  Degenerate voxels of ``g`` are always
    marked.  With ``allow_traversal`` (needs ``g``) the layer whose normal
    stays nearly constant may still be traced through the mask.
    """
    energy = np.asarray(energy, dtype=float)
    if spacing is None:
        spacing = g.spacing if g is not None else 1.0
    if g is not None:
        if g.dims != energy.shape:
            raise DimensionMismatch("energy field does not match grid")
        population = energy[g.classification == VoxelClass.INTERMEDIATE]
    else:
        population = energy.ravel()

    if population.size == 0 or np.isinf(k_sigma):
        marked = np.zeros(energy.shape, dtype=bool)
    else:
        threshold = population.mean() + k_sigma * population.std()
        marked = energy > threshold
    if g is not None:
        marked = marked | g.degenerate
    excluded = dilate(marked, dilation_radius, spacing)
    origin = None if g is None else g.origin
    traversal = None
    if allow_traversal:
        if g is None:
            raise ValueError("traversal needs the frame grid")
        traversal = steady_frame_vectors(g)[0]
    return SingularMask(excluded, float(dilation_radius), float(spacing), origin, traversal)


def empty_mask(g):
    return SingularMask(np.zeros(g.dims, dtype=bool), 0.0, g.spacing, g.origin)


def save_mask(mask, path):
    """Raw uint8 grid behind a ``.ffield``-style header; traversal normals follow as float32."""
    origin = np.zeros(3) if mask.origin is None else mask.origin
    payload = np.ascontiguousarray(np.transpose(mask.excluded, (2, 1, 0)), dtype=np.uint8)
    extra = {"dilation_radius": mask.dilation_radius, "traversal": mask.traversal is not None}
    with open(path, "wb") as fh:
        fh.write(grid_header(mask.dims, mask.spacing, origin, **extra))
        fh.write(payload.tobytes())
        if mask.traversal is not None:
            fh.write(np.ascontiguousarray(np.transpose(mask.traversal, (2, 1, 0, 3)), dtype="<f4").tobytes())


def load_mask(path):
    path = Path(path)
    with open(path, "rb") as fh:
        header, dims, spacing, origin = _read_header(fh, path)
        raw = fh.read()
    n = int(np.prod(dims))
    has_traversal = bool(header.get("traversal", False))
    if len(raw) != n * (13 if has_traversal else 1):
        raise DimensionMismatch(f"{path}: mask payload size mismatch")
    excluded = np.frombuffer(raw[:n], dtype=np.uint8).reshape(dims[::-1]).transpose(2, 1, 0).astype(bool)
    traversal = None
    if has_traversal:
        vec = np.frombuffer(raw[n:], dtype="<f4").reshape(dims[::-1] + (3,))
        traversal = np.transpose(vec, (2, 1, 0, 3)).astype(float)
    return SingularMask(excluded, float(header.get("dilation_radius", 0.0)), spacing, origin, traversal)
