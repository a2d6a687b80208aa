"""Hexahedral meshing by dualising an arrangement of stream surfaces.

Points of all surfaces form a proximity graph (edges shorter than ``2r``).
Points near three surfaces are triple intersections; their clusters become
hexahedra, and the intersection curves joining two clusters become shared
quad faces.  This is the spatial twist continuum view of a hex mesh.

Hexahedra use the VTK corner ordering: in local axes ``(a0, a1, a2)`` the
corners are ``---, +--, ++-, -+-, --+, +-+, +++, -++``.
"""

from __future__ import annotations

import json
from dataclasses import dataclass, field
from pathlib import Path

import numpy as np
from scipy import sparse
from scipy.sparse import csgraph
from scipy.spatial import cKDTree

from .errors import (DegenerateCell, FacePairingConflict, InvalidParam, NoTripleIntersections,
                     SeparationViolation)

SURFACE, INTERSECTION, TRIPLE = 1, 2, 3
# |cos| above which two surface normals count as the same family (45 degrees)
PARALLEL_COS = np.sqrt(0.5)

# local corner signs (VTK order) and the three edge-adjacent corners of each
# corner, ordered so that an undistorted cell has positive determinant
HEX_SIGNS = np.array([[-1, -1, -1], [1, -1, -1], [1, 1, -1], [-1, 1, -1],
                      [-1, -1, 1], [1, -1, 1], [1, 1, 1], [-1, 1, 1]], dtype=float)
CORNER_NEIGHBORS = np.array([[1, 3, 4], [2, 0, 5], [3, 1, 6], [0, 2, 7],
                             [7, 5, 0], [4, 6, 1], [5, 7, 2], [6, 4, 3]])
# faces as corner cycles, listed by outward axis (-a0, +a0, -a1, +a1, -a2, +a2)
HEX_FACES = np.array([[0, 4, 7, 3], [1, 2, 6, 5], [0, 1, 5, 4],
                      [3, 7, 6, 2], [0, 3, 2, 1], [4, 5, 6, 7]])
FACE_NORMALS = np.array([[-1, 0, 0], [1, 0, 0], [0, -1, 0], [0, 1, 0], [0, 0, -1], [0, 0, 1]], dtype=float)


@dataclass(eq=False)
class ProximityGraph:
    points: np.ndarray
    normals: np.ndarray
    surface: np.ndarray
    edges: np.ndarray
    r: float
    n_surfaces_near: np.ndarray = None
    signature: sparse.csr_matrix = None

    @property
    def n(self):
        return len(self.points)

    def adjacency(self, keep=None):
        e = self.edges if keep is None else self.edges[keep]
        d = np.linalg.norm(self.points[e[:, 0]] - self.points[e[:, 1]], axis=1)
        # zero-length edges between coincident points must survive as entries
        d = np.maximum(d, 1e-12)
        return sparse.coo_matrix((d, (e[:, 0], e[:, 1])), shape=(self.n, self.n)).tocsr()


@dataclass(eq=False)
class STCGraph:
    positions: np.ndarray
    clusters: list
    edges: np.ndarray
    axes_hint: np.ndarray
    graph: ProximityGraph = None

    def __len__(self):
        return len(self.positions)


@dataclass(eq=False)
class HexMesh:
    vertices: np.ndarray
    cells: np.ndarray
    info: dict = field(default_factory=dict)

    def __len__(self):
        return len(self.cells)


def build_proximity_graph(surfaces, r, strict=True):
    """Proximity graph over all surface points with an edge for every pair closer than ``2r``.

    Each vertex records how many distinct surfaces appear in its closed
    neighbourhood.  With ``strict`` a count of four or more raises
    SeparationViolation.  Otherwise such vertices are dropped from the graph,
    together with vertices that see two surfaces with nearly parallel
    normals (two members of one family closer than ``4r``) and vertices whose
    neighbours on one surface spread more than ``r`` along its normal (two
    sheets of a surface that winds past itself).  This leaves a gap instead
    of a tangle near singular curves.
    """
    if r <= 0:
        raise InvalidParam("r must be positive")
    pts = [np.asarray(s.points, dtype=float).reshape(-1, 3) for s in surfaces]
    nrm = [np.asarray(s.normals, dtype=float).reshape(-1, 3) for s in surfaces]
    sid = np.concatenate([np.full(len(p), i) for i, p in enumerate(pts)]) if pts else np.empty(0, int)
    points = np.concatenate(pts) if pts else np.empty((0, 3))
    normals = np.concatenate(nrm) if nrm else np.empty((0, 3))
    if len(points) == 0:
        return ProximityGraph(points, normals, sid, np.empty((0, 2), int), float(r),
                              np.empty(0, int), sparse.csr_matrix((0, len(surfaces))))
    pairs = cKDTree(points).query_pairs(2 * r, output_type="ndarray")
    if len(pairs):
        d = np.linalg.norm(points[pairs[:, 0]] - points[pairs[:, 1]], axis=1)
        pairs = pairs[d < 2 * r]
    n, m = len(points), len(surfaces)
    sig = _signatures(n, m, sid, pairs)
    count = np.diff(sig.indptr)
    over = count >= 4
    if strict and np.any(over):
        raise SeparationViolation(
            f"{int(over.sum())} points see four or more surfaces within 2r; surfaces closer than 4r")
    if not strict:
        over |= _sees_parallel_pair(n, sid, normals, pairs)
        over |= _sees_two_sheets(points, normals, sid, pairs, r)
    if np.any(over):
        keep = ~over
        remap = np.cumsum(keep) - 1
        ok = keep[pairs[:, 0]] & keep[pairs[:, 1]]
        pairs = remap[pairs[ok]]
        points, normals, sid = points[keep], normals[keep], sid[keep]
        sig = _signatures(len(points), m, sid, pairs)
        count = np.diff(sig.indptr)
    return ProximityGraph(points, normals, sid, pairs.reshape(-1, 2), float(r), count, sig)


def _sees_parallel_pair(n, sid, normals, pairs):
    """Vertices whose closed neighbourhood holds two surfaces with nearly parallel normals.

    Such a vertex sits between two members of one family that are closer
    than ``4r``.
    """
    u = np.concatenate([np.arange(n), pairs[:, 0], pairs[:, 1]])
    v = np.concatenate([np.arange(n), pairs[:, 1], pairs[:, 0]])
    # one representative normal per (vertex, surface)
    _, first = np.unique(u * (sid.max() + 1) + sid[v], return_index=True)
    u, nv = u[first], normals[v[first]]
    order = np.argsort(u, kind="stable")
    u, nv = u[order], nv[order]
    bad = np.zeros(n, dtype=bool)
    start = np.searchsorted(u, np.arange(n))
    size = np.bincount(u, minlength=n)
    for a in range(1, size.max(initial=0)):
        for b in range(a):
            has = size > a
            i, j = start[has] + a, start[has] + b
            cos = np.abs(np.einsum("ij,ij->i", nv[i], nv[j]))
            bad[np.flatnonzero(has)[cos > PARALLEL_COS]] = True
    return bad


def _sees_two_sheets(points, normals, sid, pairs, r):
    """Vertices whose neighbourhood holds two sheets of one surface.

    A surface that winds around (as non-integrable families do) comes back
    past itself.  Neighbours on one sheet sit at nearly the same offset
    along the sheet normal; a spread above ``r`` means a second sheet.
    """
    n = len(points)
    u = np.concatenate([np.arange(n), pairs[:, 0], pairs[:, 1]])
    v = np.concatenate([np.arange(n), pairs[:, 1], pairs[:, 0]])
    key = u * (sid.max() + 1) + sid[v]
    order = np.argsort(key, kind="stable")
    u, v, key = u[order], v[order], key[order]
    start = np.flatnonzero(np.r_[True, key[1:] != key[:-1]])
    ref = normals[v[start]][np.repeat(np.arange(len(start)), np.diff(np.r_[start, len(key)]))]
    nv = normals[v] * np.sign(np.einsum("ij,ij->i", normals[v], ref))[:, None]
    h = np.einsum("ij,ij->i", points[v] - points[u], nv)
    spread = np.maximum.reduceat(h, start) - np.minimum.reduceat(h, start)
    bad = np.zeros(n, dtype=bool)
    bad[u[start[spread > r]]] = True
    return bad


def _signatures(n, m, sid, pairs):
    """Boolean point-by-surface matrix of surfaces present in each closed neighbourhood."""
    rows = np.concatenate([np.arange(n), pairs[:, 0], pairs[:, 1]])
    cols = np.concatenate([sid, sid[pairs[:, 1]], sid[pairs[:, 0]]])
    sig = sparse.csr_matrix((np.ones(len(rows), dtype=np.int8), (rows, cols)), shape=(n, m))
    sig.sum_duplicates()
    sig.data[:] = 1
    return sig


def classify_vertices(G):
    """Class per vertex: 1 surface, 2 intersection, 3 triple intersection."""
    return np.minimum(G.n_surfaces_near, TRIPLE)


def _fit_rotation(targets, sources):
    """Proper rotation R maximising ``sum targets_i . (R sources_i)``, i.e. a Procrustes fit."""
    M = targets.T @ sources
    U, _, Vt = np.linalg.svd(M)
    D = np.diag([1.0, 1.0, np.sign(np.linalg.det(U @ Vt)) or 1.0])
    return U @ D @ Vt


def build_stc(G):
    """Spatial twist continuum graph from a classified proximity graph.

    Triple vertices are clustered by connected components over edges whose
    endpoints see the same three surfaces.  A multi-source
    Dijkstra from all clusters floods the intersection vertices; graph edges
    whose ends were reached from different clusters become STC edges.  Only
    edges whose endpoints share at least two surfaces in their signatures
    are walked, so the flood follows intersection curves and never jumps
    between neighbouring curves.
    """
    cls = classify_vertices(G)
    triple = np.flatnonzero(cls == TRIPLE)
    if triple.size == 0:
        raise NoTripleIntersections("no point lies near three surfaces")
    e = G.edges
    shared = np.asarray(G.signature[e[:, 0]].multiply(G.signature[e[:, 1]]).sum(axis=1)).ravel() if len(e) \
        else np.empty(0)
    on_curve = (cls[e[:, 0]] >= INTERSECTION) & (cls[e[:, 1]] >= INTERSECTION) & (shared >= 2)

    # one cluster per triple of surfaces: neighbouring triple regions that
    # share only two surfaces stay apart
    tt = (cls[e[:, 0]] == TRIPLE) & (cls[e[:, 1]] == TRIPLE) & (shared == TRIPLE)
    adj_t = sparse.coo_matrix((np.ones(int(tt.sum())), (e[tt, 0], e[tt, 1])), shape=(G.n, G.n))
    sub = adj_t.tocsr()[triple][:, triple]
    n_clusters, label = csgraph.connected_components(sub, directed=False)
    cluster_of = np.full(G.n, -1)
    cluster_of[triple] = label
    clusters = [triple[label == c] for c in range(n_clusters)]
    positions = np.array([G.points[c].mean(axis=0) for c in clusters])

    adj = G.adjacency(on_curve)
    _, _, src = csgraph.dijkstra(adj, directed=False, indices=triple, min_only=True,
                                 return_predecessors=True)
    origin = np.where(src >= 0, cluster_of[np.maximum(src, 0)], -1)
    eu, ev = e[on_curve, 0], e[on_curve, 1]
    cu, cv = origin[eu], origin[ev]
    cross = (cu >= 0) & (cv >= 0) & (cu != cv)
    stc_edges = np.unique(np.sort(np.column_stack([cu[cross], cv[cross]]), axis=1), axis=0) \
        if np.any(cross) else np.empty((0, 2), dtype=int)

    hints = np.array([_normal_axes(G, c) for c in clusters])
    return STCGraph(positions, clusters, stc_edges.astype(np.int64), hints, G)


def _normal_axes(G, members):
    """Averaged surface normals of a cluster, one row per participating surface."""
    sids, inv = np.unique(G.surface[members], return_inverse=True)
    axes = []
    for j in range(len(sids)):
        n = G.normals[members[inv == j]]
        # normals of one surface may flip sign between points; align to the first
        n = n * np.sign(n @ n[0])[:, None]
        axes.append(n.mean(axis=0))
    axes = np.array(axes)
    return axes[:3] if len(axes) >= 3 else np.vstack([axes, np.zeros((3 - len(axes), 3))])


def _cube_axes(hint, dirs):
    """Rotation (rows = cube axes) fitted to surface normals and incident edge directions."""
    hint = np.array(hint, dtype=float)
    if np.linalg.det(hint) < 0:
        # normal signs carry no meaning; make the hint right-handed
        hint[2] *= -1
    R = _fit_rotation(np.eye(3), hint) if np.any(hint) else np.eye(3)
    if len(dirs) == 0:
        return R
    # each unit edge direction votes for the axis it is best aligned with
    dots = dirs @ R.T
    k = np.argmax(np.abs(dots), axis=1)
    s = np.sign(dots[np.arange(len(dirs)), k])
    targets = np.vstack([np.eye(3)[k] * s[:, None], np.eye(3)])
    sources = np.vstack([dirs, R])
    return _fit_rotation(targets, sources)


def dualize(stc, strict=True):
    """Hexahedral mesh with one cell per STC vertex, glued along STC edges.

    Every cell starts as a cube whose edge is the mean incident STC edge
    length, oriented by the local surface normals and edge directions.
    Corners glued across an STC edge are merged to their barycentre.

    Two STC edges that claim the same face raise FacePairingConflict, and a
    gluing that would merge two corners of one cell raises DegenerateCell.
    With ``strict=False`` edges are instead glued in order of decreasing
    alignment and an edge that hits either problem is left open, which
    leaves a gap.  A repair pass then releases, one per offending group, the
    worst-aligned glued edge next to an inverted cell or a nonconforming pair
    and glues again, until every cell has a positive scaled Jacobian and
    all shared faces conform.  The open edges are listed in
    ``mesh.info["dropped_edges"]``.
    """
    n = len(stc)
    pos = stc.positions
    edges = stc.edges
    vec = pos[edges[:, 1]] - pos[edges[:, 0]] if len(edges) else np.empty((0, 3))
    length = np.linalg.norm(vec, axis=1)
    if len(edges) and np.any(length <= 1e-12):
        raise DegenerateCell("two STC vertices coincide")
    fallback = float(np.median(length)) if len(edges) else 4.0 * (stc.graph.r if stc.graph else 1.0)

    incident = [[] for _ in range(n)]
    for e, (a, b) in enumerate(edges):
        incident[a].append((e, 1.0))
        incident[b].append((e, -1.0))

    axes = np.empty((n, 3, 3))
    size = np.full(n, fallback)
    for v in range(n):
        dirs = np.array([s * vec[e] / length[e] for e, s in incident[v]]).reshape(-1, 3)
        axes[v] = _cube_axes(stc.axes_hint[v], dirs)
        if incident[v]:
            size[v] = np.mean([length[e] for e, _ in incident[v]])

    # each STC edge claims the best-aligned face at both of its ends
    face_of = np.empty((len(edges), 2), dtype=int)
    align = np.empty(len(edges))
    for e, (a, b) in enumerate(edges):
        d = vec[e] / length[e]
        ca, cb = FACE_NORMALS @ (axes[a] @ d), FACE_NORMALS @ (axes[b] @ -d)
        face_of[e] = np.argmax(ca), np.argmax(cb)
        align[e] = min(ca.max(), cb.max())
    half = np.repeat(0.5 * size[:, None], 6, axis=1)
    # corner i lies at the faces selected by its sign pattern
    pick = np.where(HEX_SIGNS > 0, np.array([1, 3, 5]), np.array([0, 2, 4]))
    corners = pos[:, None, :] + np.einsum("ck,nck,nkd->ncd", HEX_SIGNS, half[:, pick], axes)

    order = np.arange(len(edges)) if strict else np.argsort(-align, kind="stable")
    skip = np.zeros(len(edges), dtype=bool)
    mesh, glued = _glue(corners, edges, face_of, order, strict, skip)
    if not strict:
        # a gap is better than a broken cell: release the worst-aligned glued
        # edge of every inverted or nonconforming cell group until none is
        # left; released edges keep their faces so no worse edge takes over
        for _ in range(len(edges)):
            bad = _invalid_groups(mesh)
            if not bad:
                break
            for group in bad:
                mine = _culprits(mesh, group, edges, face_of, glued & ~skip)
                if mine.size:
                    skip[mine[np.argmin(align[mine])]] = True
            mesh, glued = _glue(corners, edges, face_of, order, strict, skip)
    mesh.info["dropped_edges"] = np.flatnonzero(~glued).tolist()
    mesh.info["stc_edges"] = len(edges)
    return mesh


def _glue(corners, edges, face_of, order, strict, skip):
    """Merge corners across the STC edges in ``order``; returns ``(mesh, glued)``.

    Corners are merged by union-find.  A vertex may hold at most one corner
    per cell and at most eight corners, and each cell face is glued once.
    Edges flagged in ``skip`` claim their faces without merging.
    """
    n = len(corners)
    parent = np.arange(8 * n)
    members = {i: [i] for i in range(8 * n)}

    def find(i):
        while parent[i] != i:
            parent[i] = parent[parent[i]]
            i = parent[i]
        return i

    def plan_merges(pairs):
        """Root relabelling for gluing ``pairs``, or None if a vertex would be invalid."""
        local = {}

        def lf(x):
            while x in local:
                x = local[x]
            return x

        for u, v in pairs:
            x, y = lf(find(u)), lf(find(v))
            if x != y:
                local[max(x, y)] = min(x, y)
        groups = {}
        for root in set(local) | set(local.values()):
            groups.setdefault(lf(root), []).append(root)
        for roots in groups.values():
            cells = [c // 8 for root in roots for c in members[root]]
            if len(cells) > 8 or len(cells) != len(set(cells)):
                return None
        return {root: lf(root) for root in local}

    used = {}
    glued = np.zeros(len(edges), dtype=bool)
    for e in order:
        a, b = edges[e]
        claims = ((a, face_of[e, 0]), (b, face_of[e, 1]))
        taken = [c for c in claims if c in used]
        if taken:
            if strict:
                cell, f = taken[0]
                raise FacePairingConflict(f"face {f} of cell {cell} claimed by STC edges {used[taken[0]]} and {e}")
            continue
        ca, cb = HEX_FACES[face_of[e, 0]], HEX_FACES[face_of[e, 1]]
        pa, pb = corners[a, ca], corners[b, cb]
        # corner correspondence: the cyclic shift or reflection closest in space
        best, best_map = np.inf, None
        for shift in range(4):
            for flip in (1, -1):
                perm = (flip * np.arange(4) + shift) % 4
                cost = np.sum((pa - pb[perm]) ** 2)
                if cost < best:
                    best, best_map = cost, perm
        plan = plan_merges([(8 * a + ca[i], 8 * b + cb[best_map[i]]) for i in range(4)])
        if plan is None:
            if strict:
                raise DegenerateCell(f"gluing STC edge {e} folds a cell onto itself")
            continue
        for c in claims:
            used[c] = e
        if skip[e]:
            continue
        glued[e] = True
        for root, target in plan.items():
            parent[root] = target
            members[target] += members.pop(root)

    roots = np.array([find(i) for i in range(8 * n)])
    uniq, ids = np.unique(roots, return_inverse=True)
    verts = np.zeros((len(uniq), 3))
    np.add.at(verts, ids, corners.reshape(-1, 3))
    verts /= np.bincount(ids, minlength=len(uniq))[:, None]
    mesh = HexMesh(verts, ids.reshape(n, 8).astype(np.int64), {"cluster_sizes": np.bincount(ids).tolist()})
    return mesh, glued


def _culprits(mesh, group, edges, face_of, live):
    """Glued edges that may cause an offending cell group.

    For a single (inverted) cell these are all its glued edges; for a
    nonconforming group, the glued edges whose face on a member cell holds
    a vertex that members share.
    """
    group = list(group)
    if len(group) == 1:
        return np.flatnonzero(live & np.isin(edges, group).any(axis=1))
    counts = np.unique(mesh.cells[group].ravel(), return_counts=True)
    shared = counts[0][counts[1] > 1]
    out = []
    for e in np.flatnonzero(live & np.isin(edges, group).any(axis=1)):
        for side in (0, 1):
            c = edges[e, side]
            if c in group and np.isin(mesh.cells[c][HEX_FACES[face_of[e, side]]], shared).any():
                out.append(e)
                break
    out = np.array(out, dtype=int)
    return out if out.size else np.flatnonzero(live & np.isin(edges, group).any(axis=1))


def _invalid_groups(mesh):
    """Inverted cells (as singletons) and nonconforming cell groups."""
    if len(mesh) == 0:
        return []
    hexes = mesh.vertices[mesh.cells]
    e = hexes[:, CORNER_NEIGHBORS, :] - hexes[:, :, None, :]
    norm = np.linalg.norm(e, axis=3)
    # coincident corners count as inverted
    sj = np.where(norm.min(axis=(1, 2)) > 1e-12,
                  np.linalg.det(e / np.maximum(norm, 1e-12)[..., None]).min(axis=1), -1.0)
    return [(int(c),) for c in np.flatnonzero(sj <= 0)] + _nonconforming_groups(mesh)


def hexmesh(surfaces, r, strict=True):
    """Proximity graph, STC and dual mesh in one call; returns ``(mesh, stc)``."""
    G = build_proximity_graph(surfaces, r, strict=strict)
    stc = build_stc(G)
    return dualize(stc, strict=strict), stc


# quality ------------------------------------------------------------------------


def corner_jacobians(hexes):
    """Scaled Jacobian at each of the 8 corners of each cell, shape (n, 8)."""
    hexes = np.asarray(hexes, dtype=float).reshape(-1, 8, 3)
    e = hexes[:, CORNER_NEIGHBORS, :] - hexes[:, :, None, :]
    norm = np.linalg.norm(e, axis=3)
    if np.any(norm <= 1e-12):
        raise DegenerateCell("cell has coincident corners")
    return np.linalg.det(e / norm[..., None])


def scaled_jacobian(hexes):
    """Minimum corner scaled Jacobian of one cell (8,3) or of each cell (n,8,3)."""
    arr = np.asarray(hexes, dtype=float)
    out = corner_jacobians(arr).min(axis=1)
    return float(out[0]) if arr.ndim == 2 else out


def _nonconforming_groups(mesh):
    """Offending cell groups: pairs sharing three or more vertices but no whole face,
    and every set of more than two cells on one face."""
    faces = {}
    for c, cell in enumerate(mesh.cells):
        for f in HEX_FACES:
            faces.setdefault(frozenset(cell[f].tolist()), []).append(c)
    shared_face = {tuple(sorted(cs)) for cs in faces.values() if len(cs) == 2}
    # vertex -> cells incidence to count shared vertices per pair
    inc = sparse.csr_matrix((np.ones(mesh.cells.size), (np.repeat(np.arange(len(mesh)), 8), mesh.cells.ravel())),
                            shape=(len(mesh), len(mesh.vertices)))
    inc.data[:] = 1
    share = sparse.triu(inc @ inc.T, k=1).tocoo()
    groups = [(int(a), int(b)) for a, b, k in zip(share.row, share.col, share.data)
              if k >= 3 and (k != 4 or (a, b) not in shared_face)]
    # more than two cells on one face is also nonconforming
    groups += [tuple(cs) for cs in faces.values() if len(cs) > 2]
    return groups


def nonconforming_faces(mesh):
    """Number of cell pairs that share three or more vertices without sharing a whole face.

    Each face held by ``k > 2`` cells adds ``k - 2``.
    """
    if len(mesh) == 0:
        return 0
    return sum(1 if len(g) == 2 else len(g) - 2 for g in _nonconforming_groups(mesh))


def mesh_quality_report(mesh):
    """Scaled Jacobian summary, counts, and how many STC edges were left open."""
    gaps = {"stc_edges": int(mesh.info.get("stc_edges", 0)),
            "open_stc_edges": len(mesh.info.get("dropped_edges", ()))}
    if len(mesh) == 0:
        return {"min_scaled_jacobian": 0.0, "mean_scaled_jacobian": 0.0, "cells": 0,
                "vertices": int(len(mesh.vertices)), "nonconforming_faces": 0, **gaps}
    sj = scaled_jacobian(mesh.vertices[mesh.cells])
    return {"min_scaled_jacobian": float(sj.min()), "mean_scaled_jacobian": float(sj.mean()),
            "cells": int(len(mesh)), "vertices": int(len(mesh.vertices)),
            "nonconforming_faces": int(nonconforming_faces(mesh)), **gaps}


# I/O --------------------------------------------------------------------------------


def save_vtk(mesh, path, title="hexahedral mesh"):
    n = len(mesh)
    lines = ["# vtk DataFile Version 3.0", title, "ASCII", "DATASET UNSTRUCTURED_GRID",
             f"POINTS {len(mesh.vertices)} double"]
    lines += [f"{x:.17g} {y:.17g} {z:.17g}" for x, y, z in mesh.vertices]
    lines.append(f"CELLS {n} {9 * n}")
    lines += ["8 " + " ".join(str(int(i)) for i in c) for c in mesh.cells]
    lines.append(f"CELL_TYPES {n}")
    lines += ["12"] * n
    Path(path).write_text("\n".join(lines) + "\n")


def load_vtk(path):
    tokens = Path(path).read_text().split()
    i = tokens.index("POINTS")
    nv = int(tokens[i + 1])
    verts = np.array(tokens[i + 3: i + 3 + 3 * nv], dtype=float).reshape(-1, 3)
    j = tokens.index("CELLS")
    nc = int(tokens[j + 1])
    raw = np.array(tokens[j + 3: j + 3 + 9 * nc], dtype=np.int64).reshape(-1, 9)
    return HexMesh(verts, raw[:, 1:])


def save_medit(mesh, path):
    lines = ["MeshVersionFormatted 2", "Dimension 3", "Vertices", str(len(mesh.vertices))]
    lines += [f"{x:.17g} {y:.17g} {z:.17g} 0" for x, y, z in mesh.vertices]
    lines += ["Hexahedra", str(len(mesh))]
    lines += [" ".join(str(int(i) + 1) for i in c) + " 0" for c in mesh.cells]
    lines.append("End")
    Path(path).write_text("\n".join(lines) + "\n")


def save_quality(report, path):
    Path(path).write_text(json.dumps(report, indent=2) + "\n")
