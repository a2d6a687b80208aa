import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st
from scipy.spatial import cKDTree

from streamlam.errors import DegenerateProjection, InsufficientDomain, InvalidParam, OutOfBounds, SeedRejected
from streamlam.field import (CylinderField, FrameGrid, closest_frame_vectors, gen_constant_field,
                             gen_cylinder_field)
from streamlam.singularity import SingularMask, detect_singular_voxels, rotation_energy
from streamlam.tracer import (REJECT_SINGULAR, REJECT_SPIRAL, REJECT_TOO_CLOSE, PDSIndex, StreamSurface,
                              _rk4_batch_numpy, accept_point, field_hash, generate_surface_set,
                              load_surface_ply, parallel_transport, read_surface_dir, refine_point,
                              rk4_batch, rk4_step, save_surface_ply, smooth_surface, supersample_surface,
                              trace_surface, traceable_voxels, write_surface_dir)

Z = np.array([0.0, 0.0, 1.0])


def min_pair_distance(pts):
    d, _ = cKDTree(pts).query(pts, k=2)
    return d[:, 1].min()


def alignment_deg(g, s):
    frames, _ = g.sample_frames(s.points)
    _, v = closest_frame_vectors(frames, s.normals)
    c = np.clip(np.abs(np.sum(v * s.normals, axis=1)), 0, 1)
    return np.rad2deg(np.arccos(c)).max()


@pytest.fixture(scope="module")
def cyl32():
    return gen_cylinder_field((32, 32, 32))


# PDS index --------------------------------------------------------------------------


@settings(max_examples=25, deadline=None)
@given(st.integers(0, 10_000), st.floats(0.2, 3.0))
def test_pds_query_matches_brute_force(seed, radius):
    rng = np.random.default_rng(seed)
    pds = PDSIndex(0.7, origin=(-1, -1, -1))
    pts = rng.uniform(-5, 40, size=(300, 3))  # spans several blocks; dense, so cells overflow
    for p in pts:
        pds.insert(p)
    for q in rng.uniform(-6, 41, size=(10, 3)):
        ids, d = pds.query(q, radius)
        truth = np.flatnonzero(np.linalg.norm(pts - q, axis=1) <= radius)
        assert sorted(ids.tolist()) == truth.tolist()
        np.testing.assert_allclose(d, np.linalg.norm(pts[ids] - q, axis=1))


def test_pds_rejects_bad_radius():
    with pytest.raises(InvalidParam):
        PDSIndex(0.0)


# transport and RK4 ------------------------------------------------------------------------


def test_transport_keeps_tangent_direction():
    g = gen_constant_field((4, 4, 4))
    d = np.array([0.6, 0.8, 0.0])
    np.testing.assert_allclose(parallel_transport(g, [1, 1, 1], d, Z), d, atol=1e-15)


def test_transport_projects_onto_tangent_plane():
    g = gen_constant_field((4, 4, 4))
    d = np.array([0.0, np.sqrt(0.5), np.sqrt(0.5)])
    np.testing.assert_allclose(parallel_transport(g, [1, 1, 1], d, Z), [0, 1, 0], atol=1e-15)


def test_transport_parallel_direction_is_degenerate():
    g = gen_constant_field((4, 4, 4))
    with pytest.raises(DegenerateProjection):
        parallel_transport(g, [1, 1, 1], Z, Z)


def test_rk4_exact_in_constant_field():
    g = gen_constant_field((8, 8, 8))
    p0 = np.array([1.25, 4.5, 3.0])
    d0 = np.array([0.6, -0.8, 0.0])
    np.testing.assert_allclose(rk4_step(g, p0, Z, d0, 3.7), p0 + 3.7 * d0, rtol=0, atol=1e-14)


def test_rk4_out_of_bounds():
    g = gen_constant_field((4, 4, 4))
    with pytest.raises(OutOfBounds):
        rk4_step(g, [2.5, 1, 1], Z, [1, 0, 0], 1.0)


def test_rk4_batch_kernel_matches_numpy_reference(cyl32):
    rng = np.random.default_rng(0)
    n = 200
    p0 = rng.uniform(2, 29, size=(n, 3))
    frames, _ = cyl32.sample_frames(p0)
    n0 = frames[:, 1]
    d0 = frames[:, 2] + 0.3 * frames[:, 0]
    d0 /= np.linalg.norm(d0, axis=1)[:, None]
    delta = rng.uniform(0.5, 6, n)
    a, ok_a = rk4_batch(cyl32, p0, n0, d0, delta)
    b, ok_b = _rk4_batch_numpy(cyl32, p0, n0, d0, delta)
    np.testing.assert_array_equal(ok_a, ok_b)
    np.testing.assert_allclose(a[ok_a], b[ok_b], atol=1e-12)
    assert not ok_a.all()  # some steps leave the box


def test_rk4_circle_drift_is_fourth_order():
    f = CylinderField(center=(0, 0, 0))
    R = 20.0
    p0 = np.array([R, 0, 0])

    def drift(delta):
        p = rk4_step(f, p0, [1, 0, 0], [0, 1, 0], delta)
        return abs(np.hypot(p[0], p[1]) - R)

    assert drift(R / 100) <= 1e-6 * R
    # at R / 400 the drift is below float resolution, so the order is checked on larger steps
    assert drift(R / 8) / drift(R / 32) >= 100


# refinement and acceptance --------------------------------------------------------------


def test_refine_without_neighbours_is_identity():
    g = gen_constant_field((8, 8, 8))
    p = np.array([3.0, 3.0, 3.0])
    np.testing.assert_array_equal(refine_point(g, p, Z, np.empty((0, 3)), 1.0), p)
    far = np.array([[0.0, 0.0, 3.0]])
    np.testing.assert_array_equal(refine_point(g, p, Z, far, 1.0), p)


def test_refine_in_constant_field_is_identity():
    g = gen_constant_field((8, 8, 8))
    p = np.array([3.0, 3.0, 3.0])
    ring = p + np.array([[1.5, 0, 0], [0, 1.2, 0], [-0.9, -0.9, 0]])
    np.testing.assert_allclose(refine_point(g, p, Z, ring, 1.0), p, atol=1e-14)


def test_refine_pulls_towards_cylinder():
    f = CylinderField(center=(0, 0, 0))
    R = 10.0
    phi = np.deg2rad([-20, -10, -5, 5, 10, 20])
    ring = np.stack([R * np.cos(phi), R * np.sin(phi), np.zeros(6)], axis=1)
    p_n = np.array([R + 0.3, 0.0, 0.0])
    refined = refine_point(f, p_n, np.array([1.0, 0, 0]), ring, 2.0)
    assert abs(np.hypot(*refined[:2]) - R) < abs(np.hypot(*p_n[:2]) - R)


def test_accept_point_rules():
    g = gen_constant_field((10, 10, 10))
    r = 1.0
    c = np.array([5.0, 5.0, 5.0])
    empty = StreamSurface(0, np.empty((0, 3)), np.empty((0, 3)), r)
    assert accept_point(c, Z, empty, None, None, g, r) == (True, None)
    dup = StreamSurface(0, c[None], Z[None], r)
    assert accept_point(c, Z, dup, None, None, g, r) == (False, REJECT_TOO_CLOSE)
    # a point on another sheet 2r above: far in 3D, on top of us in the tangent plane
    sheet = StreamSurface(0, (c + 2 * r * Z)[None], Z[None], r)
    assert accept_point(c, Z, sheet, None, None, g, r) == (False, REJECT_SPIRAL)
    excluded = np.zeros(g.dims, dtype=bool)
    excluded[5, 5, 5] = True
    assert accept_point(c, Z, empty, None, SingularMask(excluded), g, r) == (False, REJECT_SINGULAR)
    assert accept_point(c + [10, 0, 0], Z, empty, None, None, g, r)[0] is False


def test_untraceable_layer_rejected():
    t = np.full((6, 6, 6, 3), 0.5)
    t[..., 2] = 0.0
    g = FrameGrid(np.broadcast_to(np.eye(3), (6, 6, 6, 3, 3)), t)
    with pytest.raises(SeedRejected):
        trace_surface(g, None, np.array([2.5, 2.5, 2.5]), 0.5, layer=2, rng=0)
    s = trace_surface(g, None, np.array([2.5, 2.5, 2.5]), 0.5, layer=0, rng=0)
    assert len(s) > 10


# whole surfaces ----------------------------------------------------------------------------


@pytest.fixture(scope="module")
def plane_surface():
    g = gen_constant_field((11, 11, 11))
    raw = trace_surface(g, None, np.array([5.0, 5.0, 5.0]), 0.5, layer=2, rng=1, smooth=False)
    return g, raw


def test_plane_in_constant_field(plane_surface):
    g, raw = plane_surface
    s = smooth_surface(g, raw)
    assert np.max(np.abs(s.points[:, 2] - 5.0)) < 1e-3
    assert 250 <= len(s) <= 400
    assert min_pair_distance(raw.points) >= 0.5
    assert min_pair_distance(s.points) >= 0.8 * 0.5
    assert alignment_deg(g, s) < 1e-6


def test_smoothing_fixed_point_in_constant_field(plane_surface):
    g, raw = plane_surface
    s = smooth_surface(g, raw)
    np.testing.assert_allclose(s.points, raw.points, atol=1e-12)


def test_smoothing_contracts_an_off_plane_point(plane_surface):
    g, raw = plane_surface
    pts = raw.points.copy()
    i = int(np.argmin(np.linalg.norm(pts - [5, 5, 5], axis=1)))
    pts[i, 2] += 0.05  # 0.1 r
    s = smooth_surface(g, StreamSurface(0, pts, raw.normals, raw.r))
    assert abs(s.points[i, 2] - 5.0) <= 0.5 * 0.05


def test_trace_is_deterministic(plane_surface):
    g, raw = plane_surface
    again = trace_surface(g, None, np.array([5.0, 5.0, 5.0]), 0.5, layer=2, rng=1, smooth=False)
    np.testing.assert_array_equal(again.points, raw.points)


def test_supersample_plane(plane_surface):
    g, raw = plane_surface
    same = supersample_surface(g, raw, raw.r)
    assert len(same) == len(raw)
    fine = supersample_surface(g, raw, raw.r / 3, rng=0)
    assert len(fine) >= 5 * len(raw)
    np.testing.assert_array_equal(fine.points[: len(raw)], raw.points)
    assert alignment_deg(g, fine) < 10.0


def test_supersample_fills_gaps_without_growing():
    g = gen_constant_field((21, 21, 21))
    u = np.arange(-3.0, 3.01, 1.0)
    a, b = np.meshgrid(u, u, indexing="ij")
    keep = a ** 2 + b ** 2 <= 9
    pts = np.stack([10 + a[keep], 10 + b[keep], np.full(keep.sum(), 10.0)], axis=1)
    raw = StreamSurface(0, pts, np.tile(Z, (len(pts), 1)), 1.0)
    fine = supersample_surface(g, raw, 0.4, rng=0)
    assert len(fine) >= 3 * len(raw)
    d, _ = cKDTree(raw.points).query(fine.points)
    assert d.max() <= raw.r
    assert np.hypot(fine.points[:, 0] - 10, fine.points[:, 1] - 10).max() <= 3 + raw.r


def test_cylinder_surface_stays_on_radius(cyl32):
    R = 10.0
    c = (np.array(cyl32.dims) - 1) / 2
    seed = c + [R, 0, 0]
    raw = trace_surface(cyl32, None, seed, 1.5, layer=1, rng=0, smooth=False)
    s = smooth_surface(cyl32, raw)
    rho_raw = np.hypot(*(raw.points[:, :2] - c[:2]).T)
    rho = np.hypot(*(s.points[:, :2] - c[:2]).T)
    assert np.max(np.abs(rho - R)) < 1e-2 * R
    # smoothing closes the seam where the front meets itself
    assert np.max(np.abs(rho - R)) <= np.max(np.abs(rho_raw - R))
    assert min_pair_distance(raw.points) >= 1.5
    assert alignment_deg(cyl32, s) < 10.0
    fine = supersample_surface(cyl32, s, 0.75, rng=0)
    assert alignment_deg(cyl32, fine) < 10.0


def test_seed_inside_mask_rejected(cyl32):
    mask = detect_singular_voxels(rotation_energy(cyl32), cyl32, 3.0, 4.0)
    c = (np.array(cyl32.dims) - 1) / 2
    with pytest.raises(SeedRejected):
        trace_surface(cyl32, mask, c + [0.5, 0, 0], 2.0, rng=0)


def test_surface_set_avoids_mask_and_is_deterministic(cyl32):
    mask = detect_singular_voxels(rotation_energy(cyl32), cyl32, 3.0, 4.0)
    a = generate_surface_set(cyl32, mask, 6, rng_seed=5, r=2.0)
    b = generate_surface_set(cyl32, mask, 6, rng_seed=5, r=2.0)
    assert [s.id for s in a] == list(range(6))
    for s, t in zip(a, b):
        np.testing.assert_array_equal(s.points, t.points)
        np.testing.assert_array_equal(s.normals, t.normals)
        assert not mask.at(cyl32, s.points).any()


def test_surface_set_count_on_small_cylinder():
    g = gen_cylinder_field((12, 12, 12))
    S = generate_surface_set(g, None, 400, rng_seed=0, r=2.0)
    assert len(S) == 400
    assert len({s.id for s in S}) == 400


def test_surface_set_threads_do_not_change_result():
    g = gen_cylinder_field((14, 14, 14))
    a = generate_surface_set(g, None, 4, rng_seed=2, r=2.0, threads=1)
    b = generate_surface_set(g, None, 4, rng_seed=2, r=2.0, threads=2)
    for s, t in zip(a, b):
        np.testing.assert_array_equal(s.points, t.points)


def test_all_void_field_has_no_domain():
    g = FrameGrid(np.broadcast_to(np.eye(3), (4, 4, 4, 3, 3)), np.zeros((4, 4, 4, 3)))
    assert not traceable_voxels(g).any()
    with pytest.raises(InsufficientDomain):
        generate_surface_set(g, None, 3, rng_seed=0, r=1.0)


def test_invalid_count():
    with pytest.raises(InvalidParam):
        generate_surface_set(gen_constant_field((4, 4, 4)), None, 0, rng_seed=0, r=1.0)


# serialisation ---------------------------------------------------------------------------


def test_ply_round_trip(tmp_path):
    rng = np.random.default_rng(0)
    s = StreamSurface(7, rng.normal(size=(20, 3)), rng.normal(size=(20, 3)), 0.25, layer=1)
    save_surface_ply(s, tmp_path / "s.ply")
    t = load_surface_ply(tmp_path / "s.ply")
    assert (t.id, t.r, t.layer) == (7, 0.25, 1)
    np.testing.assert_array_equal(t.points, s.points)
    np.testing.assert_array_equal(t.normals, s.normals)


def test_surface_dir_round_trip(tmp_path):
    g = gen_constant_field((3, 3, 3))
    S = [StreamSurface(i, np.full((2, 3), i), np.tile(Z, (2, 1)), 1.0) for i in (3, 5)]
    m = write_surface_dir(S, tmp_path / "d", 1.0, 0.5, field_hash(g))
    manifest, T = read_surface_dir(tmp_path / "d")
    assert manifest == m
    assert manifest["surface_ids"] == [3, 5]
    assert manifest["field_hash"] == field_hash(g)
    assert [t.id for t in T] == [3, 5]
