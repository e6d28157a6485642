import numpy as np
import pytest

from rooftag.errors import (
    BehindCamera,
    DegenerateConfiguration,
    NegativeDepth,
    NotARotation,
    RayParallelToPlane,
)
from rooftag.geometry import (
    CameraModel,
    RigidTransform,
    backproject_to_height,
    dlt_homography,
    project,
    project_points,
    rot_from_vec,
    vec_from_rot,
)

from conftest import make_camera


# ---------------------------------------------------------------- rotations


def test_rot_from_vec_quarter_turn_about_z():
    R = rot_from_vec([0.0, 0.0, np.pi / 2])
    expected = np.array([[0.0, -1.0, 0.0], [1.0, 0.0, 0.0], [0.0, 0.0, 1.0]])
    np.testing.assert_allclose(R, expected, atol=1e-15)


def test_rot_from_vec_identity():
    np.testing.assert_allclose(rot_from_vec([0, 0, 0]), np.eye(3), atol=0)


def test_rodrigues_round_trip_fixed_vector():
    w = np.array([0.3, -0.2, 0.9])
    np.testing.assert_allclose(vec_from_rot(rot_from_vec(w)), w, atol=1e-12)


def test_rodrigues_round_trip_sweep(rng):
    # angles spread over (0, pi - 1e-3]; includes tiny and near-pi cases
    for _ in range(1000):
        axis = rng.normal(size=3)
        axis /= np.linalg.norm(axis)
        angle = rng.uniform(1e-12, np.pi - 1e-3)
        w = axis * angle
        w_back = vec_from_rot(rot_from_vec(w))
        assert np.max(np.abs(w_back - w)) < 1e-9


def test_rodrigues_small_angle_series():
    w = np.array([1e-9, -2e-9, 1.5e-9])
    R = rot_from_vec(w)
    np.testing.assert_allclose(vec_from_rot(R), w, atol=1e-15)


def test_vec_from_rot_angle_range(rng):
    # the returned representative always has angle in [0, pi]
    for _ in range(200):
        w = rng.normal(size=3) * 4.0
        back = vec_from_rot(rot_from_vec(w))
        assert np.linalg.norm(back) <= np.pi + 1e-12


def test_vec_from_rot_near_pi():
    axis = np.array([1.0, 2.0, -0.5])
    axis /= np.linalg.norm(axis)
    w = axis * (np.pi - 1e-3)
    np.testing.assert_allclose(vec_from_rot(rot_from_vec(w)), w, atol=1e-9)


def _svd_polar(M):
    U, _, Vt = np.linalg.svd(M)
    return U @ Vt


def test_vec_from_rot_quasi_rotation_matches_polar_oracle(rng):
    # perturbed rotations project onto the nearest rotation before the log
    for _ in range(50):
        axis = rng.normal(size=3)
        axis /= np.linalg.norm(axis)
        R = rot_from_vec(axis * rng.uniform(0.0, 2.5))
        P = rng.normal(size=(3, 3))
        P *= 1e-4 / np.linalg.norm(P)
        w_clean = vec_from_rot(R)
        w_quasi = vec_from_rot(R + P)
        assert np.max(np.abs(w_quasi - w_clean)) < 2e-4
        # the implicit polar factor agrees with an SVD polar decomposition
        Q_oracle = _svd_polar(R + P)
        np.testing.assert_allclose(
            rot_from_vec(w_quasi), Q_oracle, atol=1e-10
        )


def test_vec_from_rot_rejects_reflection():
    with pytest.raises(NotARotation):
        vec_from_rot(np.diag([1.0, 1.0, -1.0]))


def test_vec_from_rot_rejects_singular():
    M = np.zeros((3, 3))
    M[0, 0] = 1.0
    with pytest.raises(NotARotation):
        vec_from_rot(M)


# ---------------------------------------------------------- rigid transforms


def test_rigid_transform_compose_inverse(rng):
    for _ in range(20):
        a = RigidTransform(rot_from_vec(rng.normal(size=3)), rng.normal(size=3))
        b = RigidTransform(rot_from_vec(rng.normal(size=3)), rng.normal(size=3))
        p = rng.normal(size=3)
        np.testing.assert_allclose(
            a.compose(b).apply(p), a.apply(b.apply(p)), atol=1e-12
        )
        round_trip = a.inverse().apply(a.apply(p))
        np.testing.assert_allclose(round_trip, p, atol=1e-12)


def test_rigid_transform_apply_batch(rng):
    tr = RigidTransform(rot_from_vec([0.1, 0.2, 0.3]), [1.0, -2.0, 0.5])
    pts = rng.normal(size=(7, 3))
    batch = tr.apply(pts)
    for i in range(7):
        np.testing.assert_allclose(batch[i], tr.apply(pts[i]), atol=1e-14)


def test_rigid_transform_rejects_non_orthonormal():
    M = np.eye(3)
    M[0, 1] = 1e-6
    with pytest.raises(ValueError):
        RigidTransform(M, np.zeros(3))


def test_rigid_transform_rejects_reflection():
    with pytest.raises(ValueError):
        RigidTransform(np.diag([1.0, 1.0, -1.0]), np.zeros(3))


# ----------------------------------------------------------------- cameras


def test_camera_model_requires_mutual_inverses():
    A = np.array([[800.0, 0, 480], [0, 800.0, 360], [0, 0, 1]])
    w2c = RigidTransform.identity()
    bad = RigidTransform(np.eye(3), [0.0, 0.0, 1.0])
    with pytest.raises(ValueError):
        CameraModel(A, w2c, bad)


def test_camera_model_requires_upper_triangular_a():
    A = np.array([[800.0, 0, 480], [5.0, 800.0, 360], [0, 0, 1]])
    with pytest.raises(ValueError):
        CameraModel.from_extrinsics(A, RigidTransform.identity(), (960, 720))


def _oracle_project(cam, p):
    """Independent projective chain: P = A [R|T], homogeneous divide."""
    P = cam.A @ np.hstack(
        (cam.world_to_cam.R, cam.world_to_cam.t.reshape(3, 1))
    )
    uvw = P @ np.array([p[0], p[1], p[2], 1.0])
    return uvw[:2] / uvw[2]


def test_project_matches_projective_chain_oracle(rsu_camera, rng):
    # bus-roof corner points scattered over the visible sector
    for _ in range(100):
        radius = rng.uniform(6.0, 17.0)
        az = np.arctan2(-7.4, -7.4) + rng.uniform(-0.7, 0.7)
        p = np.array(
            [
                7.4 + radius * np.cos(az),
                7.4 + radius * np.sin(az),
                rng.uniform(2.9, 3.1),
            ]
        )
        uv = project(rsu_camera, p)
        np.testing.assert_allclose(uv, _oracle_project(rsu_camera, p), atol=1e-9)


def test_project_points_matches_project(rsu_camera, rng):
    pts = np.column_stack(
        (
            7.4 + rng.uniform(-12, -4, 50),
            7.4 + rng.uniform(-12, -4, 50),
            rng.uniform(2.5, 3.5, 50),
        )
    )
    uv, depth = project_points(rsu_camera, pts)
    assert np.all(depth > 0)
    for i in range(50):
        np.testing.assert_allclose(uv[i], project(rsu_camera, pts[i]), atol=1e-12)


def test_project_behind_camera_raises(rsu_camera):
    # a point far above and behind the tilted camera
    with pytest.raises(BehindCamera):
        project(rsu_camera, [7.4 + 5.0, 7.4 + 5.0, 30.0])


# -------------------------------------------------------------------- DLT


def _unit_square():
    return np.array([[-1.0, -1.0], [-1.0, 1.0], [1.0, 1.0], [1.0, -1.0]])


def test_dlt_identity_map():
    pts = _unit_square()
    H = dlt_homography(pts, pts)
    expected = np.eye(3) / np.sqrt(3.0)
    np.testing.assert_allclose(H, expected, atol=1e-12)


def _apply_h(H, pts):
    q = np.column_stack((pts, np.ones(len(pts)))) @ H.T
    return q[:, :2] / q[:, 2:3]


def test_dlt_recovers_random_projective_maps(rng):
    for _ in range(25):
        while True:
            H_true = rng.normal(size=(3, 3))
            if abs(np.linalg.det(H_true)) > 1e-3:
                break
        pts = rng.uniform(-2, 2, size=(10, 2))
        img = _apply_h(H_true, pts)
        if np.max(np.abs(img)) > 1e3:  # avoid near-infinite mappings
            continue
        H = dlt_homography(pts, img)
        H_ref = H_true / np.linalg.norm(H_true)
        if H_ref[2, 2] < 0:
            H_ref = -H_ref
        assert np.max(np.abs(H - H_ref)) < 1e-8
        # residuals on exact correspondences are tiny
        np.testing.assert_allclose(_apply_h(H, pts), img, atol=1e-9)


def _oracle_dlt_dense(tag_pts, pix_pts):
    """Reference solve: same normalization, dense eigendecomposition."""

    def norm_t(p):
        c = p.mean(axis=0)
        rms = np.sqrt(np.mean(np.sum((p - c) ** 2, axis=1)))
        s = np.sqrt(2.0) / rms
        return np.array([[s, 0, -s * c[0]], [0, s, -s * c[1]], [0, 0, 1]])

    Tx, Tu = norm_t(tag_pts), norm_t(pix_pts)
    rows = []
    for (x, y), (u, v) in zip(
        tag_pts @ Tx[:2, :2].T + Tx[:2, 2], pix_pts @ Tu[:2, :2].T + Tu[:2, 2]
    ):
        rows.append([x, y, 1, 0, 0, 0, -u * x, -u * y, -u])
        rows.append([0, 0, 0, x, y, 1, -v * x, -v * y, -v])
    L = np.array(rows)
    vals, vecs = np.linalg.eigh(L.T @ L)
    H = np.linalg.inv(Tu) @ vecs[:, 0].reshape(3, 3) @ Tx
    if H[2, 2] < 0:
        H = -H
    return H / np.linalg.norm(H)


def test_dlt_double_tag_matches_dense_eigensolver(rsu_camera):
    # two coplanar tag squares, 8 correspondences, projected by the camera
    w = 0.8
    base = _unit_square() * w
    tag_pts = np.vstack((base + [1.8, 0.0], base + [-1.8, 0.0]))
    world = np.column_stack(
        (tag_pts + np.array([0.0, -8.0]), np.full(8, 3.0))
    )
    pix = np.array([project(rsu_camera, p) for p in world])
    H = dlt_homography(tag_pts, pix)
    H_ref = _oracle_dlt_dense(tag_pts, pix)
    assert np.max(np.abs(H - H_ref)) < 1e-9


def test_dlt_invariant_to_pixel_similarity(rng):
    H_true = np.array([[1.1, 0.2, 3.0], [-0.1, 0.9, -2.0], [1e-3, -2e-3, 1.0]])
    pts = rng.uniform(-1, 1, size=(8, 2))
    img = _apply_h(H_true, pts)
    H_a = dlt_homography(pts, img)
    # rotate, scale and shift the pixel inputs
    ang = 0.7
    S = 3.5 * np.array([[np.cos(ang), -np.sin(ang)], [np.sin(ang), np.cos(ang)]])
    img_b = img @ S.T + np.array([40.0, -7.0])
    H_b = dlt_homography(pts, img_b)
    Sim = np.eye(3)
    Sim[:2, :2] = S
    Sim[:2, 2] = [40.0, -7.0]
    H_b_mapped = np.linalg.inv(Sim) @ H_b
    H_b_mapped /= np.linalg.norm(H_b_mapped)
    if H_b_mapped[2, 2] < 0:
        H_b_mapped = -H_b_mapped
    assert np.max(np.abs(H_a - H_b_mapped)) < 1e-8


def test_dlt_rejects_too_few_points():
    pts = _unit_square()[:3]
    with pytest.raises(DegenerateConfiguration):
        dlt_homography(pts, pts)


def test_dlt_rejects_collinear_points():
    pts = np.array([[0.0, 0.0], [1.0, 0.0], [2.0, 0.0], [3.0, 0.0], [4.0, 0.0]])
    with pytest.raises(DegenerateConfiguration):
        dlt_homography(pts, pts)


def test_dlt_rejects_coincident_points():
    pts = np.zeros((4, 2))
    with pytest.raises(DegenerateConfiguration):
        dlt_homography(pts, _unit_square())


# ---------------------------------------------------------- back-projection


def test_backproject_round_trip(rsu_camera, rng):
    for _ in range(200):
        p = np.array(
            [
                7.4 + rng.uniform(-14, -3),
                7.4 + rng.uniform(-14, -3),
                rng.uniform(2.8, 3.2),
            ]
        )
        uv = project(rsu_camera, p)
        x, y = backproject_to_height(rsu_camera, uv, p[2])
        assert abs(x - p[0]) < 1e-9 and abs(y - p[1]) < 1e-9


def _oracle_backproject_bisect(cam, uv, height):
    """Ray-marching bisection along the pixel ray, no closed-form algebra."""
    origin = cam.cam_to_world.t
    d = cam.cam_to_world.R @ np.linalg.solve(cam.A, np.array([uv[0], uv[1], 1.0]))
    f = lambda t: origin[2] + t * d[2] - height
    t_lo, t_hi = 1e-9, 1e4
    assert f(t_lo) * f(t_hi) < 0
    for _ in range(200):
        t_mid = 0.5 * (t_lo + t_hi)
        if f(t_lo) * f(t_mid) <= 0:
            t_hi = t_mid
        else:
            t_lo = t_mid
    p = origin + 0.5 * (t_lo + t_hi) * d
    return p[0], p[1]


def test_backproject_matches_bisection_oracle(rsu_camera, rng):
    for _ in range(50):
        uv = (rng.uniform(100, 860), rng.uniform(100, 620))
        got = backproject_to_height(rsu_camera, uv, 3.0)
        want = _oracle_backproject_bisect(rsu_camera, uv, 3.0)
        np.testing.assert_allclose(got, want, atol=1e-8)


def test_backproject_nadir_symmetry():
    # camera pointing straight down: symmetric pixels land symmetrically
    cam = make_camera([0.0, 0.0, 10.0], yaw=0.0, pitch_down=np.pi / 2)
    cx, cy = (960 - 1) / 2.0, (720 - 1) / 2.0
    for du, dv in [(100.0, 0.0), (0.0, 80.0), (60.0, 60.0)]:
        xa, ya = backproject_to_height(cam, (cx + du, cy + dv), 3.0)
        xb, yb = backproject_to_height(cam, (cx - du, cy - dv), 3.0)
        np.testing.assert_allclose([xa, ya], [-xb, -yb], atol=1e-12)


def test_backproject_parallel_ray_raises():
    # level camera: the principal ray is horizontal, never meets z = 3
    cam = make_camera([0.0, 0.0, 8.0], yaw=0.0, pitch_down=0.0)
    cx, cy = (960 - 1) / 2.0, (720 - 1) / 2.0
    with pytest.raises(RayParallelToPlane):
        backproject_to_height(cam, (cx, cy), 3.0)


def test_backproject_negative_depth_raises(rsu_camera):
    # plane far above a downward-looking camera: intersection lies behind it
    cx, cy = (960 - 1) / 2.0, (720 - 1) / 2.0
    with pytest.raises(NegativeDepth):
        backproject_to_height(rsu_camera, (cx, cy), 30.0)
