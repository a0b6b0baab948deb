"""Pinhole cameras and rigid transforms between two views.

World frame: z up, ground plane at z = 0. Camera frame follows the
OpenCV convention (x right, y down, z forward) and ``X_cam = R X_world + t``.
"""
from dataclasses import dataclass

import numpy as np

from ..errors import NonRigidTransform

RIGID_TOL = 1e-9


def intrinsics(focal, width, height):
    return np.array([[focal, 0.0, width / 2.0], [0.0, focal, height / 2.0], [0.0, 0.0, 1.0]])


def look_rotation(yaw_deg, pitch_deg):
    """World-to-camera rotation for a camera with heading ``yaw`` (about +z,
    0 = looking along +x) tilted down by ``pitch`` degrees."""
    yaw, pitch = np.radians(yaw_deg), np.radians(pitch_deg)
    fwd = np.array([np.cos(pitch) * np.cos(yaw), np.cos(pitch) * np.sin(yaw), -np.sin(pitch)])
    right = np.array([np.sin(yaw), -np.cos(yaw), 0.0])
    down = np.cross(fwd, right)
    return np.vstack([right, down, fwd])


def _check_rotation(R, what):
    dev = np.max(np.abs(R @ R.T - np.eye(3)))
    det = np.linalg.det(R)
    if dev > RIGID_TOL or abs(det - 1.0) > RIGID_TOL:
        raise NonRigidTransform(f"{what}: |RR^T - I| = {dev:.2e}, det = {det:.12f}")


@dataclass(frozen=True, eq=False)
class CameraPose:
    K: np.ndarray
    R: np.ndarray
    t: np.ndarray

    def __post_init__(self):
        K = np.array(self.K, dtype=np.float64).reshape(3, 3)
        R = np.array(self.R, dtype=np.float64).reshape(3, 3)
        t = np.array(self.t, dtype=np.float64).reshape(3)
        _check_rotation(R, "camera rotation")
        if np.any(np.tril(K, -1) != 0) or np.any(np.diag(K) <= 0):
            raise ValueError("intrinsics must be upper-triangular with positive diagonal")
        for a in (K, R, t):
            a.flags.writeable = False
        object.__setattr__(self, "K", K)
        object.__setattr__(self, "R", R)
        object.__setattr__(self, "t", t)

    @classmethod
    def from_center(cls, K, center, yaw_deg, pitch_deg):
        R = look_rotation(yaw_deg, pitch_deg)
        return cls(K=K, R=R, t=-R @ np.asarray(center, dtype=np.float64))

    @property
    def center(self):
        return -self.R.T @ self.t

    def extrinsic4(self):
        E = np.eye(4)
        E[:3, :3] = self.R
        E[:3, 3] = self.t
        return E

    def to_dict(self):
        return {"K": self.K.tolist(), "R": self.R.tolist(), "t": self.t.tolist()}

    @classmethod
    def from_dict(cls, d):
        return cls(K=d["K"], R=d["R"], t=d["t"])


@dataclass(frozen=True, eq=False)
class ViewTransform:
    """Linear maps taking source camera parameters to target ones:
    ``K_t = T_K K_s`` and ``[R_t | t_t] = T_Rt [R_s | t_s]`` (homogeneous)."""

    T_K: np.ndarray
    T_Rt: np.ndarray

    def __post_init__(self):
        object.__setattr__(self, "T_K", np.array(self.T_K, dtype=np.float64).reshape(3, 3))
        object.__setattr__(self, "T_Rt", np.array(self.T_Rt, dtype=np.float64).reshape(4, 4))

    def inverse(self):
        return ViewTransform(np.linalg.inv(self.T_K), np.linalg.inv(self.T_Rt))

    def to_dict(self):
        return {"T_K": self.T_K.tolist(), "T_Rt": self.T_Rt.tolist()}

    @classmethod
    def from_dict(cls, d):
        return cls(d["T_K"], d["T_Rt"])


def identity_transform():
    return ViewTransform(np.eye(3), np.eye(4))


def transform_between(pose_s, pose_t):
    T_K = pose_t.K @ np.linalg.inv(pose_s.K)
    T_Rt = pose_t.extrinsic4() @ np.linalg.inv(pose_s.extrinsic4())
    return ViewTransform(T_K, T_Rt)


def apply_view_transform(pose_s, vt):
    K = vt.T_K @ pose_s.K
    E = vt.T_Rt @ pose_s.extrinsic4()
    if np.max(np.abs(E[3] - [0.0, 0.0, 0.0, 1.0])) > RIGID_TOL:
        raise NonRigidTransform("T_Rt does not preserve the homogeneous row")
    _check_rotation(E[:3, :3], "transformed rotation")
    # snap round-off in the structural zeros of K
    K = np.triu(K)
    K[2] = [0.0, 0.0, K[2, 2]]
    return CameraPose(K=K, R=E[:3, :3], t=E[:3, 3])


def elevation_transform(pose_s, rise, pitch_delta_deg):
    """Rigid transform lifting the camera centre by ``rise`` along world z and
    pitching it further down by ``pitch_delta_deg`` about its own right axis."""
    a = np.radians(pitch_delta_deg)
    # rotation about camera x (right); positive angle tilts forward axis downwards
    Rx = np.array([[1.0, 0.0, 0.0], [0.0, np.cos(a), -np.sin(a)], [0.0, np.sin(a), np.cos(a)]])
    R_t = Rx @ pose_s.R
    c_t = pose_s.center + np.array([0.0, 0.0, rise])
    target = CameraPose(K=pose_s.K, R=R_t, t=-R_t @ c_t)
    return transform_between(pose_s, target)
