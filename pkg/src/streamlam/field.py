"""Volumetric frame fields with per-layer lamination thicknesses.

A frame is stored as a 3x3 array whose rows are the layer normals
``m1, m2, m3`` plus a length-3 thickness vector.  Frames carry octahedral
symmetry: any signed permutation of the rows (with the thicknesses permuted
alongside) describes the same laminate, and nothing in this module assumes a
combed labelling.
"""

from __future__ import annotations

import enum
import itertools
import json
from dataclasses import dataclass, field as dc_field
from pathlib import Path

import numpy as np
from numba import njit
from scipy import ndimage

from .errors import DimensionMismatch, MalformedHeader, NonOrthogonalFrame, OutOfBounds

EPS_VOID = 0.01
EPS_SOLID = 0.99

FFIELD_VERSION = 1
_ORTHO_TOL = 1e-4
# relative tolerance below which two frame vectors count as equally aligned
TIE_TOL = 1e-12

# the six permutations of three labels, used for frame matching
PERMUTATIONS = np.array(list(itertools.permutations(range(3))))


class VoxelClass(enum.IntEnum):
    VOID = 0
    SOLID = 1
    INTERMEDIATE = 2


@dataclass(frozen=True)
class Frame:
    vectors: np.ndarray
    thickness: np.ndarray = dc_field(default_factory=lambda: np.full(3, 0.5))

    def __post_init__(self):
        object.__setattr__(self, "vectors", np.asarray(self.vectors, dtype=float).reshape(3, 3))
        object.__setattr__(self, "thickness", np.asarray(self.thickness, dtype=float).reshape(3))

    @property
    def m1(self):
        return self.vectors[0]

    @property
    def m2(self):
        return self.vectors[1]

    @property
    def m3(self):
        return self.vectors[2]


def _as_vectors(f):
    return f.vectors if isinstance(f, Frame) else np.asarray(f, dtype=float)


def closest_frame_vector(f, d):
    """Return ``(k, v)`` with ``v = s * m_k`` the signed frame vector best aligned with ``d``.

    ``k`` is zero-based.  Ties (up to ``TIE_TOL`` relative) go to the lowest
    index; a zero dot product keeps the positive sign.
    """
    vecs = _as_vectors(f)
    d = np.asarray(d, dtype=float)
    dots = vecs @ d
    a = np.abs(dots)
    k = int(np.argmax(a >= a.max() * (1 - TIE_TOL)))
    s = -1.0 if dots[k] < 0 else 1.0
    return k, s * vecs[k]


def closest_frame_vectors(frames, d):
    """Vectorised :func:`closest_frame_vector` over ``frames`` (M,3,3) and ``d`` (M,3)."""
    dots = np.einsum("mkd,md->mk", frames, d)
    a = np.abs(dots)
    k = np.argmax(a >= a.max(axis=1, keepdims=True) * (1 - TIE_TOL), axis=1)
    rows = np.arange(len(frames))
    s = np.where(dots[rows, k] < 0, -1.0, 1.0)
    return k, frames[rows, k] * s[:, None]


def classify_voxel(t1, t2, t3, eps_void=EPS_VOID, eps_solid=EPS_SOLID):
    t = np.array([t1, t2, t3], dtype=float)
    if np.all(t <= eps_void):
        return VoxelClass.VOID
    if t.min() >= eps_solid:
        return VoxelClass.SOLID
    return VoxelClass.INTERMEDIATE


def classify_thickness(thickness, eps_void=EPS_VOID, eps_solid=EPS_SOLID):
    """Vectorised classification of a (..., 3) thickness array."""
    thickness = np.asarray(thickness)
    out = np.full(thickness.shape[:-1], VoxelClass.INTERMEDIATE, dtype=np.int8)
    out[thickness.min(axis=-1) >= eps_solid] = VoxelClass.SOLID
    out[np.all(thickness <= eps_void, axis=-1)] = VoxelClass.VOID
    return out


def layer_traceable(t_k, voxel_class, eps_void=EPS_VOID):
    """Layer ``k`` may be traced in a voxel iff it carries material and the voxel is not solid."""
    return (np.asarray(t_k) > eps_void) & (np.asarray(voxel_class) != VoxelClass.SOLID)


def gram_schmidt(m):
    """Orthonormalise the rows of (..., 3, 3) in the order m1, m2, m3."""
    a = m[..., 0, :]
    a = a / np.sqrt(np.sum(a * a, axis=-1, keepdims=True))
    b = m[..., 1, :] - np.sum(m[..., 1, :] * a, axis=-1, keepdims=True) * a
    b = b / np.sqrt(np.sum(b * b, axis=-1, keepdims=True))
    c = m[..., 2, :]
    c = c - np.sum(c * a, axis=-1, keepdims=True) * a - np.sum(c * b, axis=-1, keepdims=True) * b
    c = c / np.sqrt(np.sum(c * c, axis=-1, keepdims=True))
    return np.stack([a, b, c], axis=-2)


def match_frames(ref, other):
    """Signed-permute the rows of ``other`` to best agree with ``ref``.

    Both arrays are (..., 3, 3).  Returns the matched vectors and the row
    permutation (..., 3) so thicknesses can follow.  Each reference vector is
    paired with a distinct vector of ``other``, the pairing maximising the
    summed absolute alignment; signs are then flipped to make every paired
    dot product non-negative.
    """
    ref, other = np.broadcast_arrays(ref, other)
    shape = other.shape[:-2]
    ref = ref.reshape(-1, 3, 3)
    other = other.reshape(-1, 3, 3)
    dots = np.matmul(ref, other.transpose(0, 2, 1)).reshape(-1, 9)
    scores = np.abs(dots)[:, _PERM_FLAT].sum(axis=2)
    best = np.argmax(scores, axis=1)
    perm = PERMUTATIONS[best]
    rows = np.arange(len(other))[:, None]
    picked = dots[rows, _PERM_FLAT[best]]
    matched = other[rows, perm] * np.where(picked < 0, -1.0, 1.0)[..., None]
    return matched.reshape(shape + (3, 3)), perm.reshape(shape + (3,))


# flat (row, column) indices of each permutation inside a 3x3 dot matrix
_PERM_FLAT = np.arange(3)[None, :] * 3 + PERMUTATIONS


_CORNERS = np.array([[i, j, k] for k in (0, 1) for j in (0, 1) for i in (0, 1)])


_PERMS6 = np.array([[0, 1, 2], [0, 2, 1], [1, 0, 2], [1, 2, 0], [2, 0, 1], [2, 1, 0]])


@njit(cache=True)
def _interp_point(frames, thick, dims, origin, spacing, x, acc, acc_t):
    """Interpolated frame at one point, written into ``acc`` (3,3) and ``acc_t`` (3,)."""
    frac = np.empty(3)
    i0 = np.empty(3, np.int64)
    near = np.empty(3, np.int64)
    dots = np.empty((3, 3))
    on_node = True
    for a in range(3):
        v = (x[a] - origin[a]) / spacing
        v = min(max(v, 0.0), dims[a] - 1.0)
        i0[a] = min(int(np.floor(v)), max(dims[a] - 2, 0))
        frac[a] = v - i0[a]
        near[a] = int(np.rint(v))
        if v != near[a]:
            on_node = False
    nf = (near[0] * dims[1] + near[1]) * dims[2] + near[2]
    if on_node:
        acc[:, :] = frames[nf]
        acc_t[:] = thick[nf]
        return
    acc[:, :] = 0.0
    acc_t[:] = 0.0
    for c in range(8):
        ci = min(i0[0] + (c & 1), dims[0] - 1)
        cj = min(i0[1] + ((c >> 1) & 1), dims[1] - 1)
        ck = min(i0[2] + ((c >> 2) & 1), dims[2] - 1)
        w = ((frac[0] if c & 1 else 1.0 - frac[0])
             * (frac[1] if (c >> 1) & 1 else 1.0 - frac[1])
             * (frac[2] if (c >> 2) & 1 else 1.0 - frac[2]))
        cf = (ci * dims[1] + cj) * dims[2] + ck
        for k in range(3):
            for j in range(3):
                dots[k, j] = (frames[nf, k, 0] * frames[cf, j, 0] + frames[nf, k, 1] * frames[cf, j, 1]
                              + frames[nf, k, 2] * frames[cf, j, 2])
        best = 0
        best_score = -1.0
        for q in range(6):
            score = (abs(dots[0, _PERMS6[q, 0]]) + abs(dots[1, _PERMS6[q, 1]])
                     + abs(dots[2, _PERMS6[q, 2]]))
            if score > best_score:
                best_score = score
                best = q
        for k in range(3):
            j = _PERMS6[best, k]
            sgn = -1.0 if dots[k, j] < 0 else 1.0
            for d in range(3):
                acc[k, d] += w * sgn * frames[cf, j, d]
            acc_t[k] += w * thick[cf, j]
    # Gram-Schmidt in the order m1, m2, m3
    for k in range(3):
        for q in range(k):
            proj = acc[k, 0] * acc[q, 0] + acc[k, 1] * acc[q, 1] + acc[k, 2] * acc[q, 2]
            for d in range(3):
                acc[k, d] -= proj * acc[q, d]
        nrm = np.sqrt(acc[k, 0] ** 2 + acc[k, 1] ** 2 + acc[k, 2] ** 2)
        for d in range(3):
            acc[k, d] /= nrm


@njit(cache=True)
def _interp_kernel(frames, thick, dims, origin, spacing, x):
    m = x.shape[0]
    out = np.empty((m, 3, 3))
    out_t = np.empty((m, 3))
    for p in range(m):
        _interp_point(frames, thick, dims, origin, spacing, x[p], out[p], out_t[p])
    return out, out_t


@dataclass(frozen=True, eq=False)
class FrameGrid:
    """Regular grid of frames.

    ``frames`` has shape (nx, ny, nz, 3, 3) and ``thickness`` (nx, ny, nz, 3);
    voxel ``(i, j, k)`` sits at ``origin + spacing * (i, j, k)``.  The
    sampled domain is the box spanned by the voxel centres.
    """

    frames: np.ndarray
    thickness: np.ndarray
    spacing: float = 1.0
    origin: np.ndarray = dc_field(default_factory=lambda: np.zeros(3))
    degenerate: np.ndarray | None = None
    eps_void: float = EPS_VOID
    eps_solid: float = EPS_SOLID

    def __post_init__(self):
        frames = np.array(self.frames, dtype=float)
        thickness = np.array(self.thickness, dtype=float)
        if frames.ndim != 5 or frames.shape[3:] != (3, 3):
            raise DimensionMismatch(f"frames must be (nx,ny,nz,3,3), got {frames.shape}")
        if thickness.shape != frames.shape[:3] + (3,):
            raise DimensionMismatch("thickness shape does not match frames")
        degenerate = self.degenerate
        if degenerate is None:
            degenerate = np.zeros(frames.shape[:3], dtype=bool)
        degenerate = np.array(degenerate, dtype=bool)
        if degenerate.shape != frames.shape[:3]:
            raise DimensionMismatch("degenerate mask shape does not match frames")
        classes = classify_thickness(thickness, self.eps_void, self.eps_solid)
        for arr in (frames, thickness, degenerate, classes):
            arr.setflags(write=False)
        object.__setattr__(self, "frames", frames)
        object.__setattr__(self, "thickness", thickness)
        object.__setattr__(self, "degenerate", degenerate)
        object.__setattr__(self, "origin", np.asarray(self.origin, dtype=float).reshape(3))
        object.__setattr__(self, "spacing", float(self.spacing))
        object.__setattr__(self, "_classes", classes)
        dims = np.array(frames.shape[:3])
        object.__setattr__(self, "_dims_arr", dims)
        step = np.array([dims[1] * dims[2], dims[2], 1]) * (dims > 1)
        object.__setattr__(self, "_corner_offsets", _CORNERS @ step)
        object.__setattr__(self, "_flat_frames", np.ascontiguousarray(frames.reshape(-1, 3, 3)))
        object.__setattr__(self, "_flat_thick", np.ascontiguousarray(thickness.reshape(-1, 3)))

    @property
    def dims(self):
        return tuple(self.frames.shape[:3])

    @property
    def classification(self):
        return self._classes

    @property
    def lower(self):
        return self.origin.copy()

    @property
    def upper(self):
        return self.origin + self.spacing * (np.array(self.dims) - 1)

    def frame(self, i, j, k):
        return Frame(self.frames[i, j, k], self.thickness[i, j, k])

    def voxel_centers(self):
        idx = np.indices(self.dims).reshape(3, -1).T
        return self.origin + self.spacing * idx

    def contains(self, x, tol=1e-9):
        x = np.asarray(x, dtype=float)
        u = (x - self.origin) / self.spacing
        hi = np.array(self.dims) - 1
        return np.all((u >= -tol) & (u <= hi + tol), axis=-1)

    def nearest_voxel(self, x):
        """Integer voxel index (..., 3) nearest to ``x``, clipped into the grid."""
        u = (np.asarray(x, dtype=float) - self.origin) / self.spacing
        return np.clip(np.rint(u).astype(int), 0, np.array(self.dims) - 1)

    def sample_frames(self, x):
        """Interpolate frames at points ``x`` (M, 3).

        Returns ``(frames (M,3,3), thickness (M,3))``.  Each of the eight
        surrounding voxel frames is matched against the frame of the nearest
        voxel, blended trilinearly and re-orthonormalised.  Points exactly on
        a voxel centre return that voxel's stored frame.
        """
        x = np.atleast_2d(np.asarray(x, dtype=float))
        if not np.all(self.contains(x)):
            raise OutOfBounds("sample position outside the frame grid")
        return self._interpolate(x)

    def _interpolate(self, x):
        return _interp_kernel(self._flat_frames, self._flat_thick, self._dims_arr, self.origin,
                              self.spacing, np.ascontiguousarray(x, dtype=np.float64))

    def _interpolate_numpy(self, x):
        """Reference implementation of :meth:`_interpolate` (same arithmetic, vectorised)."""
        dims = self._dims_arr
        u = np.clip((x - self.origin) / self.spacing, 0, dims - 1)
        i0 = np.minimum(np.floor(u).astype(int), np.maximum(dims - 2, 0))
        frac = u - i0
        near = np.rint(u).astype(int)
        near_flat = (near[:, 0] * dims[1] + near[:, 1]) * dims[2] + near[:, 2]
        base = (i0[:, 0] * dims[1] + i0[:, 1]) * dims[2] + i0[:, 2]
        flat_idx = base[:, None] + self._corner_offsets[None, :]
        flat_frames = self.frames.reshape(-1, 3, 3)
        flat_thick = self.thickness.reshape(-1, 3)
        ref = flat_frames[near_flat]
        corner_frames = flat_frames[flat_idx]
        corner_thick = flat_thick[flat_idx]
        w = np.prod(np.where(_CORNERS[None, :, :] == 1, frac[:, None, :], 1.0 - frac[:, None, :]), axis=2)

        matched, perm = match_frames(ref[:, None], corner_frames)
        thick = np.take_along_axis(corner_thick, perm, axis=-1)
        frames = gram_schmidt(np.einsum("mc,mckd->mkd", w, matched))
        thickness = np.einsum("mc,mck->mk", w, thick)

        on_node = np.all(u == near, axis=1)
        if np.any(on_node):
            frames[on_node] = ref[on_node]
            thickness[on_node] = flat_thick[near_flat[on_node]]
        return frames, thickness

    def sample_frame(self, x):
        frames, thickness = self.sample_frames(np.asarray(x, dtype=float)[None])
        return Frame(frames[0], thickness[0])

    def classify_at(self, x):
        """Voxel class of the voxel nearest to each point."""
        v = self.nearest_voxel(x)
        return self._classes[v[..., 0], v[..., 1], v[..., 2]]


def sample_frame(g, x):
    return g.sample_frame(x)


# closed-form fields ------------------------------------------------------


def _axis_vector(axis):
    if isinstance(axis, str):
        return np.eye(3)["xyz".index(axis.lower())]
    a = np.asarray(axis, dtype=float)
    return a / np.linalg.norm(a)


class _AxialField:
    """Shared geometry for fields that rotate around a straight axis."""

    def __init__(self, axis="z", center=(0.0, 0.0, 0.0), thickness=0.5, lower=None, upper=None):
        self.axis = _axis_vector(axis)
        self.center = np.asarray(center, dtype=float)
        self.thickness = np.broadcast_to(np.asarray(thickness, dtype=float), (3,)).copy()
        self.lower = None if lower is None else np.asarray(lower, dtype=float)
        self.upper = None if upper is None else np.asarray(upper, dtype=float)
        # any unit vector orthogonal to the axis, used when the radius vanishes
        e = np.eye(3)[np.argmin(np.abs(self.axis))]
        self._fallback = np.cross(self.axis, e)
        self._fallback /= np.linalg.norm(self._fallback)

    def contains(self, x, tol=1e-9):
        x = np.asarray(x, dtype=float)
        if self.lower is None:
            return np.ones(x.shape[:-1], dtype=bool)
        return np.all((x >= self.lower - tol) & (x <= self.upper + tol), axis=-1)

    def radial(self, x):
        v = np.asarray(x, dtype=float) - self.center
        v = v - (v @ self.axis)[..., None] * self.axis
        rho = np.linalg.norm(v, axis=-1)
        safe = np.where(rho > 0, rho, 1.0)[..., None]
        er = np.where(rho[..., None] > 0, v / safe, self._fallback)
        return er, rho

    def frames_at(self, x):
        raise NotImplementedError

    def sample_frames(self, x):
        x = np.atleast_2d(np.asarray(x, dtype=float))
        if not np.all(self.contains(x)):
            raise OutOfBounds("sample position outside the field domain")
        frames = self.frames_at(x)
        return frames, np.broadcast_to(self.thickness, (len(x), 3)).copy()

    def sample_frame(self, x):
        frames, thickness = self.sample_frames(np.asarray(x, dtype=float)[None])
        return Frame(frames[0], thickness[0])

    def to_grid(self, dims, spacing=1.0, origin=None):
        """Rasterise onto a voxel grid.

        Voxels closer than one spacing to the axis have no well-defined frame;
        they copy the frame of the nearest valid voxel and are flagged as
        degenerate.
        """
        dims = tuple(int(d) for d in dims)
        if origin is None:
            origin = np.zeros(3)
        origin = np.asarray(origin, dtype=float)
        idx = np.indices(dims).reshape(3, -1).T
        x = origin + spacing * idx
        frames = self.frames_at(x).reshape(dims + (3, 3))
        _, rho = self.radial(x)
        degenerate = (rho < spacing).reshape(dims)
        if np.any(degenerate) and not np.all(degenerate):
            _, nearest = ndimage.distance_transform_edt(degenerate, return_indices=True)
            frames = frames[nearest[0], nearest[1], nearest[2]]
        thickness = np.broadcast_to(self.thickness, dims + (3,)).copy()
        return FrameGrid(frames, thickness, spacing, origin, degenerate=degenerate)


class CylinderField(_AxialField):
    """``m1`` along the axis, ``m2`` radial, ``m3 = m1 x m2`` circumferential."""

    def frames_at(self, x):
        er, _ = self.radial(x)
        m1 = np.broadcast_to(self.axis, er.shape)
        return np.stack([m1, er, np.cross(m1, er)], axis=-2)


class HelicoidField(_AxialField):
    """Helical frame field.

    ``m1`` follows a helix whose angle above the plane orthogonal to the
    axis is ``atan(pitch * rho)`` at distance ``rho`` from the axis, ``m2`` is
    radial and ``m3 = m1 x m2``.  The ``m1`` layers are helicoids, while the
    ``m3`` direction is not the normal of any surface family.
    """

    def __init__(self, pitch, **kwargs):
        if pitch == 0:
            raise ValueError("pitch must be non-zero")
        super().__init__(**kwargs)
        self.pitch = float(pitch)

    def helix_angle(self, rho):
        return np.arctan(self.pitch * np.asarray(rho))

    def frames_at(self, x):
        er, rho = self.radial(x)
        et = np.cross(self.axis, er)
        alpha = self.helix_angle(rho)[..., None]
        m1 = np.cos(alpha) * et + np.sin(alpha) * self.axis
        return np.stack([m1, er, np.cross(m1, er)], axis=-2)


class EmbeddedSingularityField(_AxialField):
    """Planar singularity of integer index embedded in a constant layer.

    In the plane orthogonal to the axis the first direction makes angle
    ``index * theta`` with the x-axis, where ``theta`` is the polar angle
    around the centre.  ``m3`` is the constant axis direction.
    """

    def __init__(self, index=1, **kwargs):
        kwargs.setdefault("axis", "z")
        super().__init__(**kwargs)
        if not np.allclose(self.axis, [0, 0, 1]):
            raise ValueError("embedded singularity fields are built around the z axis")
        self.index = int(index)

    def frames_at(self, x):
        v = np.asarray(x, dtype=float) - self.center
        phi = self.index * np.arctan2(v[..., 1], v[..., 0])
        c, s = np.cos(phi), np.sin(phi)
        zero = np.zeros_like(c)
        m1 = np.stack([c, s, zero], axis=-1)
        m2 = np.stack([-s, c, zero], axis=-1)
        m3 = np.broadcast_to(self.axis, m1.shape)
        return np.stack([m1, m2, m3], axis=-2)


def _grid_geometry(dims, spacing):
    dims = tuple(int(d) for d in dims)
    if len(dims) != 3 or min(dims) < 1:
        raise ValueError(f"dims must be three positive integers, got {dims}")
    origin = np.zeros(3)
    upper = origin + spacing * (np.array(dims) - 1)
    return dims, origin, upper, (origin + upper) / 2


def gen_constant_field(dims, spacing=1.0, thickness=0.5, rotation=None):
    """Uniform field with every voxel holding the same frame (identity by default)."""
    dims, origin, _, _ = _grid_geometry(dims, spacing)
    frame = np.eye(3) if rotation is None else np.asarray(rotation, dtype=float)
    t = np.broadcast_to(np.asarray(thickness, dtype=float), (3,))
    return FrameGrid(np.broadcast_to(frame, dims + (3, 3)), np.broadcast_to(t, dims + (3,)), spacing, origin)


def gen_cylinder_field(dims, axis="z", spacing=1.0, thickness=0.5):
    dims, origin, upper, center = _grid_geometry(dims, spacing)
    f = CylinderField(axis=axis, center=center, thickness=thickness, lower=origin, upper=upper)
    return f.to_grid(dims, spacing, origin)


def gen_helicoid_field(dims, pitch, axis="z", spacing=1.0, thickness=0.5):
    dims, origin, upper, center = _grid_geometry(dims, spacing)
    f = HelicoidField(pitch, axis=axis, center=center, thickness=thickness, lower=origin, upper=upper)
    return f.to_grid(dims, spacing, origin)


def gen_embedded_singularity_field(dims, index=1, spacing=1.0, thickness=0.5):
    if index not in (1, -1):
        raise ValueError("index must be +1 or -1")
    dims, origin, upper, center = _grid_geometry(dims, spacing)
    f = EmbeddedSingularityField(index=index, center=center, thickness=thickness, lower=origin, upper=upper)
    return f.to_grid(dims, spacing, origin)


GENERATORS = {
    "cylinder": gen_cylinder_field,
    "helicoid": gen_helicoid_field,
    "singularity2d": gen_embedded_singularity_field,
}


# .ffield I/O --------------------------------------------------------------


def _read_header(fh, path):
    line = fh.readline()
    if not line.endswith(b"\n"):
        raise MalformedHeader(f"{path}: missing header line")
    try:
        header = json.loads(line.decode("utf-8"))
    except (UnicodeDecodeError, json.JSONDecodeError) as exc:
        raise MalformedHeader(f"{path}: header is not JSON ({exc})") from None
    if not isinstance(header, dict):
        raise MalformedHeader(f"{path}: header must be a JSON object")
    try:
        dims = tuple(int(d) for d in header["dims"])
        spacing = float(header["spacing"])
        origin = np.array([float(o) for o in header["origin"]])
        version = int(header["version"])
    except (KeyError, TypeError, ValueError) as exc:
        raise MalformedHeader(f"{path}: bad header field ({exc})") from None
    if len(dims) != 3 or min(dims) <= 0 or origin.shape != (3,) or not spacing > 0:
        raise MalformedHeader(f"{path}: invalid dims/origin/spacing")
    if version != FFIELD_VERSION:
        raise MalformedHeader(f"{path}: unsupported version {version}")
    return header, dims, spacing, origin


def grid_header(dims, spacing, origin, **extra):
    header = {"dims": [int(d) for d in dims], "spacing": float(spacing),
              "origin": [float(o) for o in origin], "version": FFIELD_VERSION}
    header.update(extra)
    return (json.dumps(header, separators=(",", ":")) + "\n").encode("utf-8")


def save_field(g, path):
    """Write ``g`` as ``.ffield``: one JSON header line, then float32 LE records."""
    extra = {}
    if np.any(g.degenerate):
        extra["degenerate"] = np.flatnonzero(np.transpose(g.degenerate, (2, 1, 0))).tolist()
    records = np.concatenate([g.frames.reshape(g.dims + (9,)), g.thickness], axis=-1)
    payload = np.ascontiguousarray(np.transpose(records, (2, 1, 0, 3)), dtype="<f4")
    with open(path, "wb") as fh:
        fh.write(grid_header(g.dims, g.spacing, g.origin, **extra))
        fh.write(payload.tobytes())


def load_field(path, eps_void=EPS_VOID, eps_solid=EPS_SOLID):
    path = Path(path)
    with open(path, "rb") as fh:
        header, dims, spacing, origin = _read_header(fh, path)
        raw = fh.read()
    n = dims[0] * dims[1] * dims[2]
    if len(raw) != n * 12 * 4:
        raise DimensionMismatch(f"{path}: payload has {len(raw)} bytes, expected {n * 48}")
    records = np.frombuffer(raw, dtype="<f4").reshape(dims[2], dims[1], dims[0], 12)
    records = np.transpose(records, (2, 1, 0, 3)).astype(float)
    frames = records[..., :9].reshape(dims + (3, 3))
    thickness = records[..., 9:]

    norms = np.linalg.norm(frames, axis=-1)
    gram = np.einsum("...id,...jd->...ij", frames, frames)
    off = np.abs(gram[..., [0, 0, 1], [1, 2, 2]])
    if np.any(np.abs(norms - 1) > _ORTHO_TOL) or np.any(off > _ORTHO_TOL):
        raise NonOrthogonalFrame(f"{path}: frames violate orthonormality beyond {_ORTHO_TOL}")

    degenerate = np.zeros(n, dtype=bool)
    if "degenerate" in header:
        try:
            degenerate[np.asarray(header["degenerate"], dtype=int)] = True
        except (IndexError, ValueError, TypeError):
            raise MalformedHeader(f"{path}: bad degenerate index list") from None
    degenerate = np.transpose(degenerate.reshape(dims[::-1]), (2, 1, 0))
    return FrameGrid(frames, thickness, spacing, origin, degenerate=degenerate,
                     eps_void=eps_void, eps_solid=eps_solid)
