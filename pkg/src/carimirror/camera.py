"""Pinhole camera model with unit-quaternion pose, plus quaternion helpers.

Conventions: camera frame has +z in front of the camera; a world point maps
to pixels via u = fx * X/Z + cx, v = fy * Y/Z + cy with X = R x + t.
Quaternions are (w, x, y, z), unit norm.
"""
from __future__ import annotations

import json
from dataclasses import dataclass
from pathlib import Path

import numpy as np

from .errors import MeshError


def quat_normalize(q):
    q = np.asarray(q, dtype=np.float64)
    n = np.linalg.norm(q)
    if n < 1e-12:
        raise MeshError("zero-norm quaternion")
    q = q / n
    return q if q[0] >= 0 else -q


def quat_to_matrix(q):
    w, x, y, z = q
    return np.array([
        [1 - 2 * (y * y + z * z), 2 * (x * y - w * z), 2 * (x * z + w * y)],
        [2 * (x * y + w * z), 1 - 2 * (x * x + z * z), 2 * (y * z - w * x)],
        [2 * (x * z - w * y), 2 * (y * z + w * x), 1 - 2 * (x * x + y * y)],
    ])


def quat_mul(a, b):
    aw, ax, ay, az = a
    bw, bx, by, bz = b
    return np.array([
        aw * bw - ax * bx - ay * by - az * bz,
        aw * bx + ax * bw + ay * bz - az * by,
        aw * by - ax * bz + ay * bw + az * bx,
        aw * bz + ax * by - ay * bx + az * bw,
    ])


def quat_from_rotvec(v):
    v = np.asarray(v, dtype=np.float64)
    theta = np.linalg.norm(v)
    if theta < 1e-12:
        return quat_normalize(np.array([1.0, v[0] / 2, v[1] / 2, v[2] / 2]))
    axis = v / theta
    return np.concatenate([[np.cos(theta / 2)], np.sin(theta / 2) * axis])


def rotvec_to_matrix(v):
    return quat_to_matrix(quat_from_rotvec(v))


def rotation_angle_deg(Ra, Rb):
    """Geodesic angle between two rotation matrices, in degrees."""
    c = (np.trace(Ra.T @ Rb) - 1.0) / 2.0
    return float(np.degrees(np.arccos(np.clip(c, -1.0, 1.0))))


def skew(v):
    return np.array([[0, -v[2], v[1]], [v[2], 0, -v[0]], [-v[1], v[0], 0]])


@dataclass
class CameraModel:
    fx: float
    fy: float
    cx: float
    cy: float
    q: np.ndarray          # unit quaternion, world -> camera rotation
    t: np.ndarray          # translation, camera frame

    def __post_init__(self):
        if self.fx <= 0 or self.fy <= 0:
            raise MeshError("focal lengths must be positive")
        self.q = quat_normalize(self.q)
        self.t = np.asarray(self.t, dtype=np.float64).reshape(3)

    @property
    def R(self) -> np.ndarray:
        return quat_to_matrix(self.q)

    @property
    def center(self) -> np.ndarray:
        """Camera center in world coordinates."""
        return -self.R.T @ self.t

    def optical_axis_world(self) -> np.ndarray:
        """Unit direction the camera looks along (camera +z), in world frame."""
        return self.R.T @ np.array([0.0, 0.0, 1.0])

    def to_camera(self, points) -> np.ndarray:
        return np.asarray(points) @ self.R.T + self.t

    def project(self, points, return_depth=False):
        pc = self.to_camera(np.atleast_2d(points))
        z = pc[:, 2]
        uv = np.empty((len(pc), 2))
        uv[:, 0] = self.fx * pc[:, 0] / z + self.cx
        uv[:, 1] = self.fy * pc[:, 1] / z + self.cy
        if return_depth:
            return uv, z
        return uv

    def with_pose(self, q, t) -> "CameraModel":
        return CameraModel(self.fx, self.fy, self.cx, self.cy, q, t)

    def to_dict(self) -> dict:
        return {"fx": self.fx, "fy": self.fy, "cx": self.cx, "cy": self.cy,
                "q": [float(x) for x in self.q], "t": [float(x) for x in self.t]}

    @staticmethod
    def from_dict(d) -> "CameraModel":
        return CameraModel(d["fx"], d["fy"], d["cx"], d["cy"], np.array(d["q"]), np.array(d["t"]))


def look_at(center, target, up, fx, fy, cx, cy) -> CameraModel:
    """Camera positioned at ``center`` looking at ``target``."""
    center = np.asarray(center, dtype=np.float64)
    fwd = np.asarray(target, dtype=np.float64) - center
    fwd /= np.linalg.norm(fwd)
    right = np.cross(fwd, np.asarray(up, dtype=np.float64))
    right /= np.linalg.norm(right)
    dn = np.cross(fwd, right)
    R = np.stack([right, dn, fwd])  # rows: camera axes in world frame
    # orthonormal by construction; convert to quaternion via robust branch
    q = _matrix_to_quat(R)
    t = -R @ center
    return CameraModel(fx, fy, cx, cy, q, t)


def _matrix_to_quat(R):
    tr = np.trace(R)
    if tr > 0:
        s = np.sqrt(tr + 1.0) * 2
        return quat_normalize([0.25 * s, (R[2, 1] - R[1, 2]) / s,
                               (R[0, 2] - R[2, 0]) / s, (R[1, 0] - R[0, 1]) / s])
    i = int(np.argmax(np.diag(R)))
    j, k = (i + 1) % 3, (i + 2) % 3
    s = np.sqrt(max(R[i, i] - R[j, j] - R[k, k] + 1.0, 1e-12)) * 2
    q = np.empty(4)
    q[0] = (R[k, j] - R[j, k]) / s
    q[1 + i] = 0.25 * s
    q[1 + j] = (R[j, i] + R[i, j]) / s
    q[1 + k] = (R[k, i] + R[i, k]) / s
    return quat_normalize(q)


def save_cameras_json(cameras, path):
    Path(path).write_text(json.dumps([c.to_dict() for c in cameras], indent=1, sort_keys=True))


def load_cameras_json(path):
    return [CameraModel.from_dict(d) for d in json.loads(Path(path).read_text())]
