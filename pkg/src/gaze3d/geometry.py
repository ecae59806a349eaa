"""3D vector, rotation and pinhole-camera primitives shared by all modules.

Conventions: x right, y down, z forward (optical axis) in every camera
frame, so positive depth means visible.  World quantities are in meters,
image quantities in pixels.  Angles are radians unless a function says
degrees.
"""

from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np


class GeometryError(ValueError):
    """Base class for geometric precondition violations."""


class NonPositiveDepth(GeometryError):
    """Point is behind (or in the plane of) the camera."""


class AngleOutOfRange(GeometryError):
    """Euler angle component outside [-pi, pi]."""


class ZeroVector(GeometryError):
    """Operation undefined for a zero-length vector."""


class ParallelToPlane(GeometryError):
    """Ray direction has no z component; never meets a depth plane."""


class BehindOrigin(GeometryError):
    """Depth-plane intersection lies at lambda <= 0."""


def _as_vec(x, n):
    v = np.asarray(x, dtype=float)
    if v.shape != (n,):
        raise ValueError(f"expected shape ({n},), got {v.shape}")
    return v


def normalize(v):
    """Return v / |v|, raising ZeroVector on degenerate input."""
    v = np.asarray(v, dtype=float)
    norm = np.linalg.norm(v)
    if norm < 1e-15:
        raise ZeroVector("cannot normalize zero-length vector")
    return v / norm


@dataclass(frozen=True)
class Ray:
    """Half-line origin + lambda * direction, lambda >= 0, unit direction."""

    origin: np.ndarray
    direction: np.ndarray

    def __post_init__(self):
        object.__setattr__(self, "origin", _as_vec(self.origin, 3))
        object.__setattr__(self, "direction", _as_vec(self.direction, 3))
        if abs(np.linalg.norm(self.direction) - 1.0) > 1e-9:
            raise ValueError("ray direction must be unit length")

    def at(self, lam):
        return self.origin + lam * self.direction


def rotation_from_angles(angles):
    """Rotation matrix for intrinsic X-then-Y-then-Z Euler angles.

    R = Rx(a) @ Ry(b) @ Rz(c).  With this convention (0, pi, 0) is a half
    turn about the vertical axis: it maps (0,0,1) to (0,0,-1), i.e. the
    scene-camera forward axis onto an opposing eye-camera forward axis.
    """
    a, b, c = _as_vec(angles, 3)
    if np.any(np.abs([a, b, c]) > np.pi + 1e-12):
        raise AngleOutOfRange(f"angles {angles} outside [-pi, pi]")
    sa, ca = np.sin(a), np.cos(a)
    sb, cb = np.sin(b), np.cos(b)
    sc, cc = np.sin(c), np.cos(c)
    rx = np.array([[1, 0, 0], [0, ca, -sa], [0, sa, ca]])
    ry = np.array([[cb, 0, sb], [0, 1, 0], [-sb, 0, cb]])
    rz = np.array([[cc, -sc, 0], [sc, cc, 0], [0, 0, 1]])
    return rx @ ry @ rz


def angles_from_rotation(rot):
    """Invert rotation_from_angles; angles returned in [-pi, pi].

    At the gimbal-locked pitch |b| = pi/2 the (a, c) split is not unique;
    c is set to 0 there.  The returned triple always reproduces the
    rotation action even when the individual angles differ from the ones
    that built it.
    """
    rot = np.asarray(rot, dtype=float)
    # R[0,2] = sin(b); R[1,2] = -sin(a)cos(b); R[0,1] = -cos(b)sin(c)
    b = np.arcsin(np.clip(rot[0, 2], -1.0, 1.0))
    if abs(rot[0, 2]) < 1.0 - 1e-12:
        a = np.arctan2(-rot[1, 2], rot[2, 2])
        c = np.arctan2(-rot[0, 1], rot[0, 0])
    else:
        a = np.arctan2(rot[2, 1], rot[1, 1])
        c = 0.0
    return np.array([a, b, c])


def wrap_angle(theta):
    """Wrap angle(s) into [-pi, pi)."""
    return np.mod(np.asarray(theta) + np.pi, 2.0 * np.pi) - np.pi


@dataclass(frozen=True)
class PinholeCamera:
    """Pinhole intrinsics plus an optional rigid pose in the scene frame.

    `rotation` holds the camera axes as columns (camera-to-world);
    `translation` is the camera origin in the scene frame.  The scene
    camera itself uses the identity pose.
    """

    focal: np.ndarray          # (fx, fy) pixels
    principal: np.ndarray      # (cx, cy) pixels
    resolution: np.ndarray     # (width, height) pixels
    rotation: np.ndarray = field(default_factory=lambda: np.eye(3))
    translation: np.ndarray = field(default_factory=lambda: np.zeros(3))

    def __post_init__(self):
        object.__setattr__(self, "focal", _as_vec(self.focal, 2))
        object.__setattr__(self, "principal", _as_vec(self.principal, 2))
        object.__setattr__(self, "resolution", _as_vec(self.resolution, 2))
        object.__setattr__(self, "rotation", np.asarray(self.rotation, dtype=float))
        object.__setattr__(self, "translation", _as_vec(self.translation, 3))
        if np.any(self.focal <= 0):
            raise ValueError("focal lengths must be positive")
        if np.any(self.principal < 0) or np.any(self.principal > self.resolution):
            raise ValueError("principal point must lie inside image bounds")

    def world_to_camera(self, point):
        return self.rotation.T @ (np.asarray(point, dtype=float) - self.translation)

    def camera_to_world_dir(self, direction):
        return self.rotation @ np.asarray(direction, dtype=float)


def project(cam: PinholeCamera, point) -> np.ndarray:
    """Project a scene-frame point to pixel coordinates.

    Raises NonPositiveDepth when the point is not strictly in front of
    the camera (z <= 1e-12 in the camera frame).
    """
    pc = cam.world_to_camera(_as_vec(point, 3))
    if pc[2] <= 1e-12:
        raise NonPositiveDepth(f"point has non-positive depth {pc[2]:.3g}")
    return cam.principal + cam.focal * pc[:2] / pc[2]


def back_project(cam: PinholeCamera, pixel) -> Ray:
    """Ray from the camera origin through a pixel, in the scene frame."""
    px = _as_vec(pixel, 2)
    d_cam = np.array([(px[0] - cam.principal[0]) / cam.focal[0],
                      (px[1] - cam.principal[1]) / cam.focal[1],
                      1.0])
    d = cam.camera_to_world_dir(d_cam)
    return Ray(cam.translation, d / np.linalg.norm(d))


def point_ray_distance(ray: Ray, point) -> float:
    """Distance from a point to the infinite line carrying the ray.

    Equals |direction x (point - origin)|; with unit direction no
    denominator is needed.
    """
    return float(np.linalg.norm(np.cross(ray.direction,
                                         _as_vec(point, 3) - ray.origin)))


def angle_between(v1, v2) -> float:
    """Angle between two nonzero vectors, degrees in [0, 180].

    Uses 2*atan2(|u1-u2|, |u1+u2|), which stays accurate where the
    arccos form loses digits (near 0 and 180 degrees); identical
    directions give exactly 0.
    """
    u1, u2 = normalize(v1), normalize(v2)
    return float(np.degrees(2.0 * np.arctan2(np.linalg.norm(u1 - u2),
                                             np.linalg.norm(u1 + u2))))


def intersect_ray_depth_plane(ray: Ray, depth: float) -> np.ndarray:
    """Point where the ray meets the fronto-parallel plane z = depth."""
    if abs(ray.direction[2]) < 1e-9:
        raise ParallelToPlane("ray direction has no z component")
    lam = (depth - ray.origin[2]) / ray.direction[2]
    if lam <= 0:
        raise BehindOrigin(f"plane z={depth} is behind the ray origin")
    return ray.at(lam)
