"""Well-spaced subset selection by relaxed L1 binary programming.

Probe points on a lattice record which surface passes nearby along which
local frame channel.  A surface set covers the domain well when every
(probe, channel) row is hit exactly once, which gives the least absolute
deviations problem

    min_w  sum_rows | A[row] @ w - 1 |,   w in {0, 1}^n_S.

The binary constraint is relaxed to a linear program, weights the relaxation
already settles are fixed, and the remainder is solved exactly by
branch-and-bound.
"""

from __future__ import annotations

import math
from dataclasses import dataclass, field

import numpy as np
from scipy import sparse
from scipy.optimize import linprog
from scipy.spatial import cKDTree

from .errors import InvalidParam, SolverFailure, TooManyFreeVariables
from .field import VoxelClass, closest_frame_vectors

TOL_FIX = 1e-3
FREE_BUDGET = 40
_INT_TOL = 1e-6


def cardinalities(dims, gamma, epsilon):
    """Estimated ``(n_Sopt, n_S, n_p)`` for a domain of extent ``dims`` (world units).

    Surfaces are 2D objects, so the optimal count grows linearly with the
    extent while the probe count grows with the volume.  Works for 2D and 3D.
    """
    if gamma <= 0:
        raise InvalidParam("gamma must be positive")
    if not 0 < epsilon < 1:
        raise InvalidParam("epsilon must lie in (0, 1)")
    dims = np.asarray(dims, dtype=float)
    if dims.ndim != 1 or len(dims) not in (2, 3) or np.any(dims <= 0):
        raise InvalidParam("dims must be 2 or 3 positive extents")

    def up(x):
        # guard against 200.00000000000003 style rounding
        return int(math.ceil(round(x, 9)))

    n_sopt = float(np.sum(dims / gamma))
    n_s = n_sopt / epsilon
    n_p = float(np.prod(dims)) / (epsilon * gamma) ** len(dims)
    return up(n_sopt), up(n_s), up(n_p)


@dataclass(eq=False)
class ProbeGrid:
    """Probe lattice with a fixed random channel label for each frame vector.

    ``labels[p, k]`` is the channel of frame vector ``k`` at probe ``p``.
    """

    positions: np.ndarray
    frames: np.ndarray
    labels: np.ndarray
    spacing: float
    n_channels: int = 3

    def __len__(self):
        return len(self.positions)

    @property
    def n_rows(self):
        return len(self) * self.n_channels


def build_probe_grid(g, gamma, epsilon, rng_seed=0, mask=None):
    """Lattice of spacing ``epsilon * gamma`` restricted to Intermediate, unmasked voxels."""
    if gamma <= 0 or not 0 < epsilon < 1:
        raise InvalidParam("need gamma > 0 and 0 < epsilon < 1")
    h = epsilon * gamma
    axes = [g.lower[d] + h * np.arange(int(np.floor((g.upper[d] - g.lower[d]) / h + 1e-9)) + 1)
            for d in range(3)]
    pos = np.stack(np.meshgrid(*axes, indexing="ij"), axis=-1).reshape(-1, 3)
    vox = g.nearest_voxel(pos)
    keep = g.classification[vox[:, 0], vox[:, 1], vox[:, 2]] == VoxelClass.INTERMEDIATE
    if mask is not None:
        keep &= ~mask.excluded[vox[:, 0], vox[:, 1], vox[:, 2]]
    pos = pos[keep]
    frames, _ = g.sample_frames(pos) if len(pos) else (np.empty((0, 3, 3)), None)
    rng = np.random.default_rng(rng_seed)
    labels = rng.permuted(np.tile(np.arange(3), (len(pos), 1)), axis=1)
    return ProbeGrid(pos, frames, labels, h)


def nearest_points(points, probes, radius):
    """Index of the nearest point to each probe, or -1 beyond ``radius``."""
    if len(points) == 0:
        return np.full(len(probes), -1)
    d, idx = cKDTree(points).query(probes, distance_upper_bound=radius * (1 + 1e-12))
    idx = np.where(np.isfinite(d), idx, -1)
    return idx


def compute_activation(surfaces, probes, radius):
    """Sparse binary matrix with rows ``probe * K + channel`` and one column per surface.

    A surface activates the channel of the frame vector closest to the
    normal of its nearest point, for every probe within ``radius``.
    """
    K = probes.n_channels
    rows, cols = [], []
    for j, s in enumerate(surfaces):
        idx = nearest_points(s.points, probes.positions, radius)
        hit = np.flatnonzero(idx >= 0)
        if hit.size == 0:
            continue
        k, _ = closest_frame_vectors(probes.frames[hit], s.normals[idx[hit]])
        rows.append(hit * K + probes.labels[hit, k])
        cols.append(np.full(hit.size, j))
    rows = np.concatenate(rows) if rows else np.empty(0, dtype=int)
    cols = np.concatenate(cols) if cols else np.empty(0, dtype=int)
    data = np.ones(rows.size, dtype=np.int8)
    return sparse.csr_matrix((data, (rows, cols)), shape=(probes.n_rows, len(surfaces)))


@dataclass
class SelectionResult:
    weights: np.ndarray
    objective: float
    relaxed_objective: float
    n_fixed: int
    selected_ids: list = field(default_factory=list)

    @property
    def fixed_fraction(self):
        return self.n_fixed / max(len(self.weights), 1)


@dataclass(eq=False)
class _CompactLP:
    """Distinct nonzero rows of A with multiplicities and right-hand sides.

    ``offset`` holds the constant deviation of rows without any column,
    so ``objective`` equals the full L1 objective.
    """

    rows: sparse.csr_matrix
    mult: np.ndarray
    rhs: np.ndarray
    offset: float
    n_cols: int

    def objective(self, w):
        return float(self.mult @ np.abs(self.rows @ w - self.rhs)) + self.offset


def _merge_rows(A, rhs, mult):
    """Drop empty rows into a constant and merge rows with equal pattern and right-hand side."""
    seen = {}
    order, merged = [], []
    offset = 0.0
    for i in range(A.shape[0]):
        a, b = A.indptr[i], A.indptr[i + 1]
        if a == b:
            offset += mult[i] * abs(rhs[i])
            continue
        key = (A.indices[a:b].tobytes(), rhs[i])
        j = seen.get(key)
        if j is None:
            seen[key] = len(order)
            order.append(i)
            merged.append(mult[i])
        else:
            merged[j] += mult[i]
    rows = A[order] if order else sparse.csr_matrix((0, A.shape[1]))
    return _CompactLP(rows, np.asarray(merged, dtype=float), np.asarray(rhs, dtype=float)[order], offset,
                      A.shape[1])


def _compact(A):
    A = sparse.csr_matrix(A, dtype=float)
    A.sum_duplicates()
    A.sort_indices()
    if A.nnz and (A.data.min() < 0 or A.data.max() > 1):
        raise InvalidParam("activation matrix must be binary")
    m = A.shape[0]
    return _merge_rows(A, np.ones(m), np.ones(m))


def _restrict(lp, lower, upper):
    """Subproblem over the weights ``lower != upper``; the rest are folded into the right-hand side.

    Returns ``(sub_lp, free)`` with ``free`` the column indices kept.
    """
    fixed = lower == upper
    free = np.flatnonzero(~fixed)
    rhs = lp.rhs - lp.rows[:, fixed] @ lower[fixed]
    sub = lp.rows[:, free].tocsr()
    sub.sort_indices()
    out = _merge_rows(sub, rhs, lp.mult)
    out.offset += lp.offset
    return out, free


def _solve_lp(lp, lower, upper, method="highs-ipm"):
    """Relaxed L1 problem with per-weight bounds; returns ``(w, objective)``."""
    m, n = lp.rows.shape
    if m == 0:
        return np.clip(np.zeros(n), lower, upper), lp.offset
    eye = sparse.identity(m, format="csr")
    A_eq = sparse.hstack([lp.rows, -eye, eye], format="csr")
    c = np.concatenate([np.zeros(n), lp.mult, lp.mult])
    bounds = np.column_stack([np.concatenate([lower, np.zeros(2 * m)]),
                              np.concatenate([upper, np.full(2 * m, np.inf)])])
    res = linprog(c, A_eq=A_eq, b_eq=lp.rhs, bounds=bounds, method=method)
    if res.status != 0:
        raise SolverFailure(f"LP solver failed: {res.message}")
    w = np.clip(res.x[:n], lower, upper)
    return w, float(res.fun) + lp.offset


def solve_relaxed(A):
    """Minimise the L1 deviation over ``w in [0, 1]^n_S``; returns ``(w, objective)``."""
    A = sparse.csr_matrix(A)
    if A.shape[1] == 0:
        raise InvalidParam("activation matrix has no columns")
    lp = _compact(A)
    n = A.shape[1]
    return _solve_lp(lp, np.zeros(n), np.ones(n))


def l1_objective(A, w):
    """Exact objective ``sum |A w - 1|`` for a weight vector."""
    return float(np.abs(sparse.csr_matrix(A) @ np.asarray(w, dtype=float) - 1.0).sum())


def _branch_and_bound(lp, lower, upper, incumbent_w, incumbent):
    """Depth-first branch-and-bound with LP bounds; returns the best binary ``(w, obj)``."""
    best_w, best = incumbent_w.copy(), incumbent
    stack = [(lower.copy(), upper.copy())]
    while stack:
        lo, hi = stack.pop()
        # fixed weights only shift right-hand sides, so each node solves a smaller LP
        sub, free = _restrict(lp, lo, hi)
        w = lo.copy()
        w[free], bound = _solve_lp(sub, lo[free], hi[free])
        if bound >= best - 1e-9:
            continue
        frac = np.abs(w - np.round(w))
        j = int(np.argmax(frac))
        if frac[j] <= _INT_TOL:
            wb = np.round(w)
            obj = lp.objective(wb)
            if obj < best - 1e-9:
                best_w, best = wb, obj
            continue
        # explore the branch nearer to the relaxed value first
        lo0, hi0 = lo.copy(), hi.copy()
        hi0[j] = 0.0
        lo1, hi1 = lo.copy(), hi.copy()
        lo1[j] = 1.0
        if w[j] >= 0.5:
            stack += [(lo0, hi0), (lo1, hi1)]
        else:
            stack += [(lo1, hi1), (lo0, hi0)]
    return best_w, best


def finalize_binary(A, w_relaxed, tol_fix=TOL_FIX, budget=FREE_BUDGET, relaxed_objective=None):
    """Round the relaxed weights to an optimal binary completion.

    Weights within ``tol_fix`` of 0 or 1 are fixed; the free remainder is
    solved exactly.  When the result still sits above the relaxed bound and
    the whole problem fits the budget, the fixing is dropped and the full
    problem is solved, so small instances are always globally optimal.
    """
    A = sparse.csr_matrix(A)
    w_relaxed = np.asarray(w_relaxed, dtype=float)
    n = A.shape[1]
    lp = _compact(A)
    if relaxed_objective is None:
        relaxed_objective = _solve_lp(lp, np.zeros(n), np.ones(n))[1]
    lo = np.where(w_relaxed >= 1 - tol_fix, 1.0, 0.0)
    hi = np.where(w_relaxed <= tol_fix, 0.0, 1.0)
    free = lo != hi
    n_free = int(free.sum())
    if n_free > budget:
        raise TooManyFreeVariables(f"{n_free} free weights exceed the budget of {budget}")

    start = np.where(free, np.round(w_relaxed), lo)
    best_w, best = start, lp.objective(start)
    if n_free:
        best_w, best = _branch_and_bound(lp, lo, hi, best_w, best)
    if best > relaxed_objective + 1e-9 and n <= budget:
        best_w, best = _branch_and_bound(lp, np.zeros(n), np.ones(n), best_w, best)
    w = best_w.astype(np.int8)
    return SelectionResult(w, float(best), float(relaxed_objective), n - n_free,
                           [int(i) for i in np.flatnonzero(w)])


def select(surfaces, g, gamma, epsilon, rng_seed=0, mask=None, tol_fix=TOL_FIX, budget=FREE_BUDGET,
           probes=None):
    """Select a well-spaced subset of ``surfaces``.

    Probes are activated within ``gamma / 2`` of a surface, i.e. in a band of
    total width ``gamma``, so exactly covering surfaces end up ``gamma``
    apart.  Returns ``(subset, result)``; ``result.selected_ids`` index into
    ``surfaces``.
    """
    if len(surfaces) == 0:
        raise InvalidParam("no candidate surfaces")
    if probes is None:
        probes = build_probe_grid(g, gamma, epsilon, rng_seed, mask)
    A = compute_activation(surfaces, probes, gamma / 2)
    w, relaxed = solve_relaxed(A)
    result = finalize_binary(A, w, tol_fix, budget, relaxed_objective=relaxed)
    return [surfaces[i] for i in result.selected_ids], result
