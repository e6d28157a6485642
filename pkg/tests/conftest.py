import numpy as np
import pytest

from rooftag.geometry import CameraModel, RigidTransform


def make_camera(
    position,
    yaw,
    pitch_down,
    focal=800.0,
    resolution=(960, 720),
):
    """Build a camera by hand from position, yaw and downward pitch.

    Kept deliberately independent of rooftag.simulate so the tests
    cross-check the packaged camera construction. Camera x right,
    y down, z forward; yaw is the azimuth of the forward axis, pitch
    rotates it below the horizon.
    """
    cp, sp = np.cos(pitch_down), np.sin(pitch_down)
    cy, sy = np.cos(yaw), np.sin(yaw)
    forward = np.array([cy * cp, sy * cp, -sp])
    right = np.array([sy, -cy, 0.0])
    down = np.cross(forward, right)
    R_cw = np.column_stack((right, down, forward))
    world_to_cam = RigidTransform(R_cw.T, -R_cw.T @ np.asarray(position, float))
    w, h = resolution
    A = np.array(
        [
            [focal, 0.0, (w - 1) / 2.0],
            [0.0, focal, (h - 1) / 2.0],
            [0.0, 0.0, 1.0],
        ]
    )
    return CameraModel.from_extrinsics(A, world_to_cam, resolution)


@pytest.fixture
def rng():
    return np.random.default_rng(20250811)


@pytest.fixture
def rsu_camera():
    """Roadside camera at a corner 8 m up, pitched 40 deg toward the origin."""
    pos = np.array([7.4, 7.4, 8.0])
    yaw = np.arctan2(-pos[1], -pos[0])
    return make_camera(pos, yaw, np.deg2rad(40.0))
