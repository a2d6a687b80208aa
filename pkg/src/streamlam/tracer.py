"""Point-sampled stream surfaces grown by Poisson-disk front propagation.

Candidates are drawn in an annulus ``[r, 2r]`` around a front point,
advanced with a fourth-order Runge-Kutta step whose direction is
transported onto the local tangent plane, refined by averaging re-estimates
from nearby surface points, then accepted or rejected.
"""

from __future__ import annotations

import hashlib
import json
import math
from collections import deque
from concurrent.futures import ProcessPoolExecutor
from dataclasses import dataclass
from pathlib import Path

import numpy as np
from numba import njit
from scipy.spatial import cKDTree

from .errors import (DegenerateProjection, InsufficientDomain, InvalidParam, IoError,
                     OutOfBounds, SeedRejected)
from .field import FrameGrid, VoxelClass, _interp_point, closest_frame_vector, closest_frame_vectors

N_CANDIDATES = 30
MAX_POINTS = 200_000
_TINY = 1e-12


@dataclass
class StreamSurface:
    id: int
    points: np.ndarray
    normals: np.ndarray
    r: float
    layer: int | None = None

    def __post_init__(self):
        self.points = np.asarray(self.points, dtype=float).reshape(-1, 3)
        self.normals = np.asarray(self.normals, dtype=float).reshape(-1, 3)

    def __len__(self):
        return len(self.points)


class PDSIndex:
    """Uniform hash grid with cell size ``r / sqrt(3)``.

    A cell's diagonal equals ``r``, so a Poisson-disk set holds at most one
    point per cell.  Cells live in lazily allocated 16^3 blocks; points that
    collide with an occupied cell go to a small overflow list.
    """

    BLOCK = 16

    def __init__(self, r, origin=(0.0, 0.0, 0.0)):
        if r <= 0:
            raise InvalidParam("PDS radius must be positive")
        self.r = float(r)
        self.cell = self.r / math.sqrt(3.0)
        self.origin = np.asarray(origin, dtype=float)
        self._blocks = {}
        self._points = np.empty((256, 3))
        self._n = 0
        self._overflow_cells = []
        self._overflow_ids = []

    def __len__(self):
        return self._n

    @property
    def points(self):
        return self._points[: self._n]

    def cell_of(self, p):
        return tuple(np.floor((np.asarray(p) - self.origin) / self.cell).astype(int).tolist())

    def insert(self, p):
        p = np.asarray(p, dtype=float)
        if self._n == len(self._points):
            self._points = np.concatenate([self._points, np.empty_like(self._points)])
        idx = self._n
        self._points[idx] = p
        self._n += 1
        c = self.cell_of(p)
        B = self.BLOCK
        key = (c[0] // B, c[1] // B, c[2] // B)
        block = self._blocks.get(key)
        if block is None:
            block = np.full((B, B, B), -1, dtype=np.int32)
            self._blocks[key] = block
        local = (c[0] % B, c[1] % B, c[2] % B)
        if block[local] < 0:
            block[local] = idx
        else:
            self._overflow_cells.append(c)
            self._overflow_ids.append(idx)
        return idx

    def candidates(self, p, radius):
        """Indices of points whose cells intersect the cube of half-width ``radius`` around ``p``."""
        inv = 1.0 / self.cell
        k = int(math.ceil(radius * inv))
        o = self.origin
        c0 = math.floor((p[0] - o[0]) * inv)
        c1 = math.floor((p[1] - o[1]) * inv)
        c2 = math.floor((p[2] - o[2]) * inv)
        lo = (c0 - k, c1 - k, c2 - k)
        hi = (c0 + k, c1 + k, c2 + k)
        B = self.BLOCK
        found = []
        for bi in range(lo[0] // B, hi[0] // B + 1):
            s0, e0 = max(lo[0] - bi * B, 0), min(hi[0] - bi * B, B - 1) + 1
            for bj in range(lo[1] // B, hi[1] // B + 1):
                s1, e1 = max(lo[1] - bj * B, 0), min(hi[1] - bj * B, B - 1) + 1
                for bk in range(lo[2] // B, hi[2] // B + 1):
                    block = self._blocks.get((bi, bj, bk))
                    if block is None:
                        continue
                    s2, e2 = max(lo[2] - bk * B, 0), min(hi[2] - bk * B, B - 1) + 1
                    vals = block[s0:e0, s1:e1, s2:e2].ravel()
                    vals = vals[vals >= 0]
                    if vals.size:
                        found.append(vals)
        if self._overflow_ids:
            oc = np.asarray(self._overflow_cells)
            hit = np.all((oc >= lo) & (oc <= hi), axis=1)
            if hit.any():
                found.append(np.asarray(self._overflow_ids)[hit])
        if not found:
            return np.empty(0, dtype=np.int64)
        return np.concatenate(found).astype(np.int64)

    def query(self, p, radius):
        """Return ``(ids, distances)`` of all stored points within ``radius`` of ``p``."""
        ids = self.candidates(p, radius)
        if ids.size == 0:
            return ids, np.empty(0)
        v = self._points[ids] - p
        d = np.sqrt(np.einsum("ij,ij->i", v, v))
        keep = d <= radius
        return ids[keep], d[keep]


# transport and integration ------------------------------------------------


def _transport(g, x, d, n_ref, valid):
    """Batched tangent-plane projection; returns directions and an updated validity mask."""
    out = np.zeros_like(x)
    ok = valid & g.contains(x)
    if np.any(ok):
        frames, _ = g.sample_frames(x[ok])
        _, n = closest_frame_vectors(frames, n_ref[ok])
        dd = d[ok]
        t = dd - np.sum(dd * n, axis=1, keepdims=True) * n
        norm = np.linalg.norm(t, axis=1)
        good = norm >= _TINY
        t[good] /= norm[good, None]
        out[ok] = t
        sub = ok.copy()
        sub[ok] = good
        ok = sub
    return out, ok


def rk4_batch(g, p0, n0, d0, delta):
    """Vectorised RK4 step.  Returns ``(p_n, valid)``; invalid rows left the domain
    or hit a degenerate projection at one of the four evaluation points."""
    p0, n0, d0, delta = _rk4_args(p0, n0, d0, delta)
    if not isinstance(g, FrameGrid):
        # analytic fields have no voxel arrays for the compiled kernel
        return _rk4_batch_numpy(g, p0, n0, d0, delta)
    return _rk4_kernel(g._flat_frames, g._flat_thick, g._dims_arr, g.origin, g.spacing,
                       p0, n0, d0, delta, _TINY)


def _rk4_args(p0, n0, d0, delta):
    p0 = np.ascontiguousarray(np.atleast_2d(np.asarray(p0, dtype=float)))
    m = len(p0)
    n0 = np.ascontiguousarray(np.broadcast_to(np.asarray(n0, dtype=float), (m, 3)))
    d0 = np.ascontiguousarray(np.broadcast_to(np.asarray(d0, dtype=float), (m, 3)))
    delta = np.ascontiguousarray(np.broadcast_to(np.asarray(delta, dtype=float), (m,)))
    return p0, n0, d0, delta


def _rk4_batch_numpy(g, p0, n0, d0, delta):
    """Reference implementation of :func:`rk4_batch` built from array operations."""
    p0, n0, d0, delta = _rk4_args(p0, n0, d0, delta)
    delta = delta[:, None]
    valid = np.ones(len(p0), dtype=bool)
    t1, valid = _transport(g, p0, d0, n0, valid)
    k1 = delta * t1
    t2, valid = _transport(g, p0 + k1 / 2, d0, n0, valid)
    k2 = delta * t2
    t3, valid = _transport(g, p0 + k2 / 2, d0, n0, valid)
    k3 = delta * t3
    t4, valid = _transport(g, p0 + k3, d0, n0, valid)
    k4 = delta * t4
    return p0 + (k1 + 2 * k2 + 2 * k3 + k4) / 6.0, valid


@njit(cache=True)
def _rk4_kernel(frames, thick, dims, origin, spacing, p0, n0, d0, delta, tiny):
    m = p0.shape[0]
    pn = p0.copy()
    valid = np.ones(m, dtype=np.bool_)
    acc = np.empty((3, 3))
    acc_t = np.empty(3)
    x = np.empty(3)
    k = np.zeros((4, 3))
    coef = (0.0, 0.5, 0.5, 1.0)
    for i in range(m):
        for stage in range(4):
            inside = True
            for a in range(3):
                x[a] = p0[i, a] + (coef[stage] * k[stage - 1, a] if stage > 0 else 0.0)
                u = (x[a] - origin[a]) / spacing
                if u < -1e-9 or u > dims[a] - 1 + 1e-9:
                    inside = False
            if not inside:
                valid[i] = False
                break
            _interp_point(frames, thick, dims, origin, spacing, x, acc, acc_t)
            best = 0
            best_dot = 0.0
            for j in range(3):
                dot = acc[j, 0] * n0[i, 0] + acc[j, 1] * n0[i, 1] + acc[j, 2] * n0[i, 2]
                if j == 0 or abs(dot) > abs(best_dot):
                    best = j
                    best_dot = dot
            sgn = -1.0 if best_dot < 0 else 1.0
            dn = 0.0
            for a in range(3):
                dn += d0[i, a] * sgn * acc[best, a]
            norm = 0.0
            for a in range(3):
                t = d0[i, a] - dn * sgn * acc[best, a]
                k[stage, a] = t
                norm += t * t
            norm = np.sqrt(norm)
            if norm < tiny:
                valid[i] = False
                break
            for a in range(3):
                k[stage, a] *= delta[i] / norm
        if valid[i]:
            for a in range(3):
                pn[i, a] = p0[i, a] + (k[0, a] + 2 * k[1, a] + 2 * k[2, a] + k[3, a]) / 6.0
    return pn, valid


def parallel_transport(g, x, d, n_ref):
    """Project ``d`` onto the tangent plane at ``x`` whose normal is the frame
    vector closest to ``n_ref``, and renormalise."""
    x = np.asarray(x, dtype=float)
    d = np.asarray(d, dtype=float)
    if np.linalg.norm(d) == 0:
        raise DegenerateProjection("zero direction")
    frame = g.sample_frame(x)
    _, n = closest_frame_vector(frame, n_ref)
    t = d - (d @ n) * n
    norm = np.linalg.norm(t)
    if norm < _TINY:
        raise DegenerateProjection("direction is parallel to the surface normal")
    return t / norm


def rk4_step(g, p0, n0, d0, delta):
    p0 = np.asarray(p0, dtype=float)
    n0 = np.asarray(n0, dtype=float)
    d0 = np.asarray(d0, dtype=float)

    def P(x):
        if not g.contains(x):
            raise OutOfBounds(f"RK4 evaluation point {x} outside the field")
        return parallel_transport(g, x, d0, n0)

    k1 = delta * P(p0)
    k2 = delta * P(p0 + k1 / 2)
    k3 = delta * P(p0 + k2 / 2)
    k4 = delta * P(p0 + k3)
    return p0 + (k1 + 2 * k2 + 2 * k3 + k4) / 6.0


def _reestimate(g, target, sources, n_ref):
    """Re-run an RK4 step from each source point toward ``target``.

    Returns the mean of ``target`` and all successful estimates.
    """
    v = target - sources
    dist = np.linalg.norm(v, axis=1)
    use = dist > _TINY
    if not np.any(use):
        return target.copy()
    est, ok = rk4_batch(g, sources[use], n_ref, v[use] / dist[use, None], dist[use])
    est = est[ok]
    return (target + est.sum(axis=0)) / (1 + len(est))


def refine_point(g, p_n, n_ref, surface, r):
    """Average ``p_n`` with re-estimates from every surface point within ``2r``."""
    p_n = np.asarray(p_n, dtype=float)
    pts = surface.points if hasattr(surface, "points") else np.asarray(surface)
    if len(pts) == 0:
        return p_n.copy()
    d = np.linalg.norm(pts - p_n, axis=1)
    near = pts[d <= 2 * r]
    if len(near) == 0:
        return p_n.copy()
    return _reestimate(g, p_n, near, np.asarray(n_ref, dtype=float))


# acceptance -----------------------------------------------------------------

REJECT_TOO_CLOSE = "too_close"
REJECT_SPIRAL = "spiral"
REJECT_SINGULAR = "singular"
REJECT_UNTRACEABLE = "untraceable"
REJECT_OUT_OF_BOUNDS = "out_of_bounds"


def layer_is_traceable(g, x, normal):
    """Whether the layer whose normal best matches ``normal`` may be traced at ``x``."""
    v = g.nearest_voxel(x)
    i, j, k = int(v[0]), int(v[1]), int(v[2])
    if g.classification[i, j, k] == VoxelClass.SOLID:
        return False
    layer, _ = closest_frame_vector(g.frames[i, j, k], normal)
    return bool(g.thickness[i, j, k, layer] > g.eps_void)


def _check(candidate, normal, neighbor_pts, mask, g, r):
    if not g.contains(candidate):
        return REJECT_OUT_OF_BOUNDS
    if len(neighbor_pts):
        v = neighbor_pts - candidate
        dist = np.linalg.norm(v, axis=1)
        if np.any(dist < r):
            return REJECT_TOO_CLOSE
        v = v[dist <= 3 * r]
        if len(v):
            inplane = v - np.outer(v @ normal, normal)
            if np.any(np.linalg.norm(inplane, axis=1) < r):
                return REJECT_SPIRAL
    if mask is not None and mask.blocks(g, candidate, normal):
        return REJECT_SINGULAR
    if not layer_is_traceable(g, candidate, normal):
        return REJECT_UNTRACEABLE
    return None


def accept_point(candidate, normal, surface, pds, mask, g, r):
    """Return ``(accepted, reason)``; ``reason`` is None when accepted.

    ``pds`` may be None, in which case the surface points are scanned directly.
    """
    candidate = np.asarray(candidate, dtype=float)
    normal = np.asarray(normal, dtype=float)
    if pds is not None:
        ids, _ = pds.query(candidate, 3 * r)
        neighbors = pds.points[ids]
    else:
        neighbors = surface.points if surface is not None else np.empty((0, 3))
    reason = _check(candidate, normal, neighbors, mask, g, r)
    return reason is None, reason


# front propagation ------------------------------------------------------------


def _tangent_basis(n):
    """Two unit vectors spanning the plane orthogonal to ``n``."""
    x, y, z = n
    ax, ay, az = abs(x), abs(y), abs(z)
    # cross with the coordinate axis least aligned with n
    if ax <= ay and ax <= az:
        a = np.array([0.0, z, -y])
    elif ay <= az:
        a = np.array([-z, 0.0, x])
    else:
        a = np.array([y, -x, 0.0])
    a /= math.sqrt(a @ a)
    b = np.array([y * a[2] - z * a[1], z * a[0] - x * a[2], x * a[1] - y * a[0]])
    return a, b


class _SurfaceBuilder:
    def __init__(self, g, mask, r, rng, step=None, n_candidates=N_CANDIDATES, max_points=MAX_POINTS):
        self.g = g
        self.mask = mask
        self.r = float(r)
        self.rng = rng
        self.step = step
        self.n_candidates = n_candidates
        self.max_points = max_points
        self.pds = PDSIndex(r, g.origin)
        self.normals = np.empty((256, 3))
        # optional (tree, radius): new points must stay this close to the tree's points
        self.support = None

    def __len__(self):
        return len(self.pds)

    @property
    def points(self):
        return self.pds.points

    def add(self, p, n):
        idx = self.pds.insert(p)
        if idx >= len(self.normals):
            self.normals = np.concatenate([self.normals, np.empty_like(self.normals)])
        self.normals[idx] = n
        return idx

    def expand(self, queue):
        g, r = self.g, self.r
        while queue and len(self) < self.max_points:
            i = queue.popleft()
            p0 = self.points[i].copy()
            n0 = self.normals[i].copy()
            a, b = _tangent_basis(n0)
            rho = self.rng.uniform(r, 2 * r, self.n_candidates)
            theta = self.rng.uniform(0.0, 2 * np.pi, self.n_candidates)
            dirs = np.cos(theta)[:, None] * a + np.sin(theta)[:, None] * b
            steps = rho if self.step is None else np.full(self.n_candidates, float(self.step))
            pn, valid = rk4_batch(g, np.tile(p0, (self.n_candidates, 1)), n0, dirs, steps)
            # cheap early exit on the unrefined positions against the points
            # that existed before this batch
            ids, _ = self.pds.query(p0, 2 * r + np.max(steps))
            if ids.size:
                diff = pn[:, None, :] - self.points[ids][None, :, :]
                close = np.einsum("cnd,cnd->cn", diff, diff).min(axis=1) < r * r
                valid &= ~close
            for c in np.flatnonzero(valid):
                q = pn[c]
                near = self.pds.candidates(q, 4 * r)
                pts = self.points[near]
                v = pts - q
                dist = np.sqrt(np.einsum("ij,ij->i", v, v))
                if np.any(dist < r):
                    continue
                inner = dist <= 2 * r
                p = _reestimate(g, q, pts[inner], n0) if inner.any() else q
                if not g.contains(p):
                    continue
                if self.support is not None and not np.isfinite(
                        self.support[0].query(p, distance_upper_bound=self.support[1])[0]):
                    continue
                frames, _ = g.sample_frames(p[None])
                _, n = closest_frame_vector(frames[0], n0)
                # refinement stays well inside the fetched 4r cube; query again otherwise
                if np.sum((p - q) ** 2) <= r * r:
                    v = pts - p
                    neighbors = pts[np.einsum("ij,ij->i", v, v) <= 9 * r * r]
                else:
                    neighbors = self.points[self.pds.query(p, 3 * r)[0]]
                if _check(p, n, neighbors, self.mask, g, r) is None:
                    queue.append(self.add(p, n))
                    if len(self) >= self.max_points:
                        break

    def surface(self, sid, layer=None):
        return StreamSurface(sid, self.points.copy(), self.normals[: len(self)].copy(), self.r, layer)


def _as_rng(rng):
    if isinstance(rng, np.random.Generator):
        return rng
    return np.random.default_rng(rng)


def trace_surface(g, mask, seed, r, step=None, max_points=MAX_POINTS, rng=None, layer=None,
                  normal=None, smooth=True, n_candidates=N_CANDIDATES, sid=0):
    """Grow one stream surface from ``seed``.

    The surface normal at the seed is the frame vector ``layer`` (zero-based)
    or the frame vector closest to ``normal``; if neither is given a
    traceable layer is drawn at random.  ``step=None`` uses each candidate's
    annulus distance as the RK4 step length.
    """
    rng = _as_rng(rng)
    seed = np.asarray(seed, dtype=float)
    if not g.contains(seed):
        raise SeedRejected(REJECT_OUT_OF_BOUNDS)
    frame = g.sample_frame(seed)
    if normal is not None:
        layer, _ = closest_frame_vector(frame, normal)
    if layer is None:
        options = [k for k in range(3) if layer_is_traceable(g, seed, frame.vectors[k])]
        if not options:
            raise SeedRejected(REJECT_UNTRACEABLE)
        layer = int(options[rng.integers(len(options))])
    n = frame.vectors[layer]
    reason = _check(seed, n, np.empty((0, 3)), mask, g, r)
    if reason is not None:
        raise SeedRejected(reason)

    builder = _SurfaceBuilder(g, mask, r, rng, step, n_candidates, max_points)
    queue = deque([builder.add(seed, n)])
    builder.expand(queue)
    s = builder.surface(sid, layer)
    return smooth_surface(g, s) if smooth else s


def smooth_surface(g, s):
    """One Jacobi pass re-estimating every point from its neighbours within ``2r``.

    Normals are re-matched to the field at the new positions.
    """
    pts = s.points
    if len(pts) < 2:
        return StreamSurface(s.id, pts.copy(), s.normals.copy(), s.r, s.layer)
    pairs = cKDTree(pts).query_pairs(2 * s.r, output_type="ndarray")
    if len(pairs) == 0:
        return StreamSurface(s.id, pts.copy(), s.normals.copy(), s.r, s.layer)
    tgt = np.concatenate([pairs[:, 0], pairs[:, 1]])
    src = np.concatenate([pairs[:, 1], pairs[:, 0]])
    v = pts[tgt] - pts[src]
    dist = np.linalg.norm(v, axis=1)
    est, ok = rk4_batch(g, pts[src], s.normals[tgt], v / dist[:, None], dist)
    sums = pts.copy()
    counts = np.ones(len(pts))
    np.add.at(sums, tgt[ok], est[ok])
    np.add.at(counts, tgt[ok], 1.0)
    new = sums / counts[:, None]
    # boundary points whose average drifts outside the grid keep their position
    out = ~g.contains(new)
    new[out] = pts[out]
    frames, _ = g.sample_frames(new)
    _, normals = closest_frame_vectors(frames, s.normals)
    return StreamSurface(s.id, new, normals, s.r, s.layer)


def supersample_surface(g, s, r_fine, mask=None, rng=None, n_candidates=N_CANDIDATES, max_points=MAX_POINTS):
    """Fill gaps of ``s`` at density ``r_fine``, keeping every original point.

    New points must lie within ``s.r`` of an original point, so the surface
    is densified but not extended.  Without this a surface of a
    non-integrable family keeps winding past itself at the finer spiral
    guard distance and fills the volume.  With ``r_fine >= s.r`` the
    originals already saturate the sampling and the surface is returned
    unchanged.
    """
    if r_fine >= s.r:
        return StreamSurface(s.id, s.points.copy(), s.normals.copy(), s.r, s.layer)
    rng = _as_rng(rng)
    builder = _SurfaceBuilder(g, mask, r_fine, rng, None, n_candidates, max_points)
    builder.support = (cKDTree(s.points), s.r)
    queue = deque()
    for p, n in zip(s.points, s.normals):
        queue.append(builder.add(p, n))
    builder.expand(queue)
    return builder.surface(s.id, s.layer)


# surface sets -------------------------------------------------------------------


def traceable_voxels(g, mask=None):
    """Boolean grid of voxels where at least one layer may be traced."""
    ok = (g.classification == VoxelClass.INTERMEDIATE) & np.any(g.thickness > g.eps_void, axis=-1)
    if mask is not None:
        ok &= ~mask.excluded
    return ok


def _trace_one(g, mask, candidates, r, rng, sid, layer, max_points, step, attempts=100):
    for _ in range(attempts):
        v = candidates[rng.integers(len(candidates))]
        jitter = rng.uniform(-0.5, 0.5, 3) * g.spacing
        seed = np.clip(g.origin + g.spacing * v + jitter, g.lower, g.upper)
        try:
            return trace_surface(g, mask, seed, r, step=step, max_points=max_points, rng=rng,
                                 layer=layer, sid=sid)
        except SeedRejected:
            continue
    raise InsufficientDomain(f"could not place a valid seed for surface {sid}")


_WORKER = {}


def _worker_init(g, mask, candidates, r, layer, max_points, step):
    _WORKER.update(g=g, mask=mask, candidates=candidates, r=r, layer=layer, max_points=max_points, step=step)


def _worker_task(args):
    sid, seq = args
    w = _WORKER
    return _trace_one(w["g"], w["mask"], w["candidates"], w["r"], np.random.default_rng(seq), sid,
                      w["layer"], w["max_points"], w["step"])


def generate_surface_set(g, mask, n_S, rng_seed, r, layer=None, max_points=MAX_POINTS, step=None, threads=1):
    """Trace ``n_S`` surfaces from random traceable seeds.

    Every surface draws from its own child generator of ``rng_seed``, so the
    result does not depend on ``threads``.
    """
    if n_S < 1:
        raise InvalidParam("n_S must be at least 1")
    candidates = np.argwhere(traceable_voxels(g, mask))
    if len(candidates) == 0:
        raise InsufficientDomain("no traceable voxel in the field")
    seqs = np.random.SeedSequence(rng_seed).spawn(n_S)
    if threads <= 1:
        return [_trace_one(g, mask, candidates, r, np.random.default_rng(seqs[i]), i, layer, max_points, step)
                for i in range(n_S)]
    with ProcessPoolExecutor(threads, initializer=_worker_init,
                             initargs=(g, mask, candidates, r, layer, max_points, step)) as pool:
        return list(pool.map(_worker_task, list(enumerate(seqs))))


# serialisation --------------------------------------------------------------------


def save_surface_ply(s, path):
    lines = [
        "ply",
        "format ascii 1.0",
        f"comment id {s.id}",
        f"comment r {s.r!r}",
        f"comment layer {-1 if s.layer is None else int(s.layer)}",
        f"element vertex {len(s)}",
        "property double x", "property double y", "property double z",
        "property double nx", "property double ny", "property double nz",
        "end_header",
    ]
    body = [" ".join(repr(float(v)) for v in row) for row in np.hstack([s.points, s.normals])]
    Path(path).write_text("\n".join(lines + body) + "\n")


def load_surface_ply(path):
    path = Path(path)
    try:
        text = path.read_text().splitlines()
    except OSError as exc:
        raise IoError(f"cannot read {path}: {exc}") from None
    if not text or text[0] != "ply":
        raise IoError(f"{path}: not a PLY file")
    sid, r, n, layer = 0, 0.0, None, None
    i = 1
    while i < len(text) and text[i] != "end_header":
        parts = text[i].split()
        if parts[:2] == ["comment", "id"]:
            sid = int(parts[2])
        elif parts[:2] == ["comment", "r"]:
            r = float(parts[2])
        elif parts[:2] == ["comment", "layer"]:
            layer = int(parts[2]) if int(parts[2]) >= 0 else None
        elif parts[:2] == ["element", "vertex"]:
            n = int(parts[2])
        i += 1
    if n is None or i == len(text):
        raise IoError(f"{path}: malformed PLY header")
    rows = text[i + 1: i + 1 + n]
    if len(rows) != n:
        raise IoError(f"{path}: expected {n} vertices, found {len(rows)}")
    data = np.array([[float(v) for v in row.split()] for row in rows]).reshape(-1, 6)
    return StreamSurface(sid, data[:, :3], data[:, 3:], r, layer)


def field_hash(g):
    h = hashlib.sha256()
    for arr in (np.asarray(g.dims), np.asarray([g.spacing]), g.origin, g.frames, g.thickness):
        h.update(np.ascontiguousarray(arr, dtype=float).tobytes())
    return h.hexdigest()


def write_surface_dir(surfaces, directory, r, r_fine=None, fhash=None, extra=None):
    """Write one PLY per surface plus ``manifest.json``; returns the manifest dict."""
    directory = Path(directory)
    directory.mkdir(parents=True, exist_ok=True)
    for s in surfaces:
        save_surface_ply(s, directory / f"surface_{s.id:05d}.ply")
    manifest = {"r": r, "r_fine": r_fine, "field_hash": fhash, "surface_ids": [int(s.id) for s in surfaces]}
    if extra:
        manifest.update(extra)
    (directory / "manifest.json").write_text(json.dumps(manifest, indent=2) + "\n")
    return manifest


def read_surface_dir(directory):
    directory = Path(directory)
    try:
        manifest = json.loads((directory / "manifest.json").read_text())
    except (OSError, json.JSONDecodeError) as exc:
        raise IoError(f"cannot read manifest in {directory}: {exc}") from None
    surfaces = [load_surface_ply(directory / f"surface_{sid:05d}.ply") for sid in manifest["surface_ids"]]
    return manifest, surfaces
