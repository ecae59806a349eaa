"""Two-sphere eye model and rig simulator for multi-depth gaze datasets.

The eye is two intersecting spheres (eyeball radius R, corneal radius r,
center separation d, millimeters); the pupil is the center of their
intersection circle.  A scene camera sits at the frame origin and an eye
camera watches the eye from a configurable pose.  Targets are grids of
points on fronto-parallel planes at several depths; for each target the
eye is rotated about its center so the optical axis passes through the
target, and the measurement channels (pupil pixel, pupil pose, target
position) are synthesized, optionally with seeded Gaussian noise.
"""

from __future__ import annotations

import math
from dataclasses import dataclass, field, replace

import numpy as np

from .geometry import (
    PinholeCamera,
    Ray,
    GeometryError,
    normalize,
    project,
    rotation_from_angles,
)


class NoIntersection(ValueError):
    """Eye spheres do not intersect; no pupil circle exists."""


class DegenerateTarget(ValueError):
    """Target coincides with the eyeball center."""


class TargetNotVisible(ValueError):
    """Target projects outside the scene image (or behind the camera)."""


class PupilNotVisible(ValueError):
    """Pupil center projects outside the eye image (or behind the camera)."""


@dataclass(frozen=True)
class TwoSphereEye:
    """Anatomical eye model; defaults are the human averages R=11.5,
    r=7.8, d=4.7 (mm)."""

    eyeball_radius_mm: float = 11.5
    corneal_radius_mm: float = 7.8
    center_separation_mm: float = 4.7

    def __post_init__(self):
        R, r, d = (self.eyeball_radius_mm, self.corneal_radius_mm,
                   self.center_separation_mm)
        if not (abs(R - r) < d < R + r):
            raise NoIntersection(
                f"spheres R={R}, r={r} at separation d={d} do not intersect")

    @property
    def pupil_offset_mm(self) -> float:
        return derive_pupil_geometry(self)[0]

    @property
    def pupil_circle_radius_mm(self) -> float:
        return derive_pupil_geometry(self)[1]


def derive_pupil_geometry(eye: TwoSphereEye):
    """(offset, radius) of the sphere-intersection circle, millimeters.

    offset = (d^2 + R^2 - r^2) / (2d) is the distance from the eyeball
    center to the circle center along the optical axis, radius the circle
    radius.  For the default constants radius = 5.77 mm, matching the
    anatomical pupil-circle value 5.8 mm.
    """
    R, r, d = (eye.eyeball_radius_mm, eye.corneal_radius_mm,
               eye.center_separation_mm)
    offset = (d * d + R * R - r * r) / (2.0 * d)
    radius_sq = R * R - offset * offset
    if radius_sq <= 0:
        raise NoIntersection("intersection circle is empty")
    return offset, math.sqrt(radius_sq)


def _default_scene_camera():
    return PinholeCamera(focal=(720.0, 720.0), principal=(640.0, 360.0),
                         resolution=(1280.0, 720.0))


def _default_eye_camera(e_gt, forward_m=0.035):
    # 35 mm in front of the eyeball center, facing opposite to the scene
    # camera (a half turn about the vertical axis).
    return PinholeCamera(focal=(620.0, 620.0), principal=(320.0, 180.0),
                         resolution=(640.0, 360.0),
                         rotation=rotation_from_angles((0.0, np.pi, 0.0)),
                         translation=np.asarray(e_gt) + (0.0, 0.0, forward_m))


@dataclass(frozen=True)
class SimRig:
    """Cameras, ground-truth eyeball center and noise levels.

    e_gt is the eyeball center in the scene frame (meters); this offset
    from the scene-camera origin is the source of parallax error.  Noise
    sigmas: pupil pixels (px), pupil-pose deflection (degrees), target
    position (mm); zero disables the channel.
    """

    scene_camera: PinholeCamera = field(default_factory=_default_scene_camera)
    eye_camera: PinholeCamera = None
    e_gt: np.ndarray = field(
        default_factory=lambda: np.array([0.015, 0.035, -0.025]))
    noise_pupil_px: float = 0.0
    noise_pose_deg: float = 0.0
    noise_target_mm: float = 0.0

    def __post_init__(self):
        object.__setattr__(self, "e_gt", np.asarray(self.e_gt, dtype=float))
        if self.eye_camera is None:
            object.__setattr__(self, "eye_camera", _default_eye_camera(self.e_gt))
        eye_depth = self.eye_camera.world_to_camera(self.e_gt)[2]
        if eye_depth <= 0:
            raise ValueError("eye camera must face the eye "
                             f"(eyeball depth {eye_depth:.3g} <= 0)")


@dataclass(frozen=True)
class TargetGrid:
    """Evenly spaced rows x cols grid on the plane z = depth, centered on
    the scene camera's principal axis."""

    depth: float
    rows: int = 5
    cols: int = 5
    width: float = 1.215
    height: float = 0.687
    role: str = "calibration"


def generate_target_grid(grid: TargetGrid) -> np.ndarray:
    """Grid points as an (rows*cols, 3) array, row-major, scene frame."""
    if grid.rows < 2 or grid.cols < 2:
        raise ValueError("grid needs at least 2 rows and 2 cols")
    if grid.depth <= 0:
        raise ValueError("grid depth must be positive")
    xs = np.linspace(-grid.width / 2.0, grid.width / 2.0, grid.cols)
    ys = np.linspace(-grid.height / 2.0, grid.height / 2.0, grid.rows)
    pts = [(x, y, grid.depth) for y in ys for x in xs]
    return np.array(pts)


@dataclass(frozen=True)
class GridSpec:
    """Grid protocol for a whole experiment.

    Calibration grids are rows x cols of size width x height (meters);
    test grids shrink both sides by test_scale so they lie strictly
    inside the calibration hull.  With scale_with_depth the physical size
    grows linearly with depth, i.e. every plane subtends the same visual
    angle (markers spanning a fixed field of view); otherwise the size is
    constant, like a fixed display moved in depth.
    """

    calib_rows: int = 5
    calib_cols: int = 5
    width: float = 0.40
    height: float = 0.2262
    test_rows: int = 4
    test_cols: int = 4
    test_scale: float = 0.75
    scale_with_depth: bool = False

    def _scale(self, depth):
        return depth if self.scale_with_depth else 1.0

    def calibration_grid(self, depth) -> TargetGrid:
        s = self._scale(depth)
        return TargetGrid(depth, self.calib_rows, self.calib_cols,
                          self.width * s, self.height * s, "calibration")

    def test_grid(self, depth) -> TargetGrid:
        s = self._scale(depth) * self.test_scale
        return TargetGrid(depth, self.test_rows, self.test_cols,
                          self.width * s, self.height * s, "test")


def fov_grid_spec() -> GridSpec:
    """Constant-visual-angle protocol used by the depth-count sweep."""
    return GridSpec(width=0.50, height=0.2827, scale_with_depth=True)


DEFAULT_DEPTHS = (1.0, 1.25, 1.5, 1.75, 2.0)


@dataclass(frozen=True)
class SimSample:
    """One observation: measured channels plus simulation ground truth.

    pupil_px and target_px are pixels; pupil_pose is the unit gaze
    direction in the eye-camera frame; target is meters in the scene
    frame.  gaze is the ground-truth ray from the eyeball center.
    """

    pupil_px: np.ndarray
    pupil_pose: np.ndarray
    target: np.ndarray
    target_px: np.ndarray
    depth_label: float
    role: str
    gaze: Ray


def gaze_toward(rig: SimRig, target) -> Ray:
    """Ground-truth gaze ray from the eyeball center through the target."""
    target = np.asarray(target, dtype=float)
    offset = target - rig.e_gt
    if np.linalg.norm(offset) < 1e-12:
        raise DegenerateTarget("target coincides with the eyeball center")
    return Ray(rig.e_gt.copy(), offset / np.linalg.norm(offset))


def _checked_project(cam, point, exc, what):
    try:
        px = project(cam, point)
    except GeometryError as err:
        raise exc(f"{what}: {err}") from err
    if np.any(px < 0) or np.any(px > cam.resolution):
        raise exc(f"{what} projects outside the image at {px}")
    return px


def _deflect(direction, sigma_rad, rng):
    """Rotate a unit vector by N(0, sigma) radians about a random
    perpendicular axis."""
    angle = rng.normal(0.0, sigma_rad)
    seed_axis = rng.normal(size=3)
    axis = np.cross(direction, seed_axis)
    while np.linalg.norm(axis) < 1e-12:   # seed happened to be parallel
        seed_axis = rng.normal(size=3)
        axis = np.cross(direction, seed_axis)
    axis = axis / np.linalg.norm(axis)
    # Rodrigues rotation about `axis`
    return (direction * np.cos(angle)
            + np.cross(axis, direction) * np.sin(angle)
            + axis * np.dot(axis, direction) * (1.0 - np.cos(angle)))


def synthesize_sample(rig: SimRig, eye: TwoSphereEye, target,
                      rng=None, depth_label=None, role="calibration") -> SimSample:
    """Simulate one fixation on `target`.

    Target noise (if any) perturbs the fixated 3D point itself, so the
    ground-truth ray still passes through the stored target; pupil-pixel
    and pose noise perturb only the measured channels.  `rng` may be a
    seed or a numpy Generator; determinism follows from it.
    """
    rng = np.random.default_rng(rng)
    target = np.asarray(target, dtype=float)
    if rig.noise_target_mm > 0:
        target = target + rng.normal(0.0, rig.noise_target_mm * 1e-3, 3)

    gaze = gaze_toward(rig, target)
    offset_m = derive_pupil_geometry(eye)[0] * 1e-3
    pupil_center = rig.e_gt + offset_m * gaze.direction

    target_px = _checked_project(rig.scene_camera, target,
                                 TargetNotVisible, "target")
    pupil_px = _checked_project(rig.eye_camera, pupil_center,
                                PupilNotVisible, "pupil center")
    if rig.noise_pupil_px > 0:
        pupil_px = pupil_px + rng.normal(0.0, rig.noise_pupil_px, 2)

    pose = rig.eye_camera.rotation.T @ gaze.direction
    if rig.noise_pose_deg > 0:
        pose = _deflect(pose, np.radians(rig.noise_pose_deg), rng)

    return SimSample(pupil_px=pupil_px, pupil_pose=pose, target=target,
                     target_px=target_px,
                     depth_label=float(depth_label if depth_label is not None
                                       else target[2]),
                     role=role, gaze=gaze)


@dataclass(frozen=True)
class DatasetBundle:
    """Calibration and test samples grouped by depth label, plus the rig
    and eye that produced them."""

    calibration: dict
    test: dict
    rig: SimRig
    eye: TwoSphereEye

    def depths(self):
        return tuple(sorted(self.calibration))


def synthesize_dataset(rig: SimRig, eye: TwoSphereEye,
                       depths=DEFAULT_DEPTHS, grids: GridSpec = None,
                       roles=("calibration", "test"), seed=0) -> DatasetBundle:
    """Per depth, one calibration grid set and one test grid set.

    Samples are seeded individually from `seed` via spawned
    SeedSequences, so datasets are reproducible and order-independent.
    """
    if not depths:
        raise ValueError("depths must be nonempty")
    grids = grids or GridSpec()
    depths = sorted(float(d) for d in depths)
    root = np.random.SeedSequence(seed)
    calibration, test = {}, {}
    for depth in depths:
        per_role = {"calibration": calibration, "test": test}
        for role in roles:
            grid = (grids.calibration_grid(depth) if role == "calibration"
                    else grids.test_grid(depth))
            points = generate_target_grid(grid)
            seeds = root.spawn(len(points))
            per_role[role][depth] = [
                synthesize_sample(rig, eye, pt, np.random.default_rng(s),
                                  depth_label=depth, role=role)
                for pt, s in zip(points, seeds)]
    return DatasetBundle(calibration=calibration, test=test, rig=rig, eye=eye)


def default_bundle(preset="display", depths=DEFAULT_DEPTHS, seed=0,
                   noise_pupil_px=0.0, noise_pose_deg=0.0,
                   noise_target_mm=0.0) -> DatasetBundle:
    """Noiseless-by-default dataset under one of the two grid presets.

    "display": fixed-size grids (a display moved in depth) — the default
    for parallax and offset analyses.  "fov": grids scaled with depth so
    every plane spans the same visual angle — used by the depth-count sweep,
    where fixed-size grids confound the depth-count effect with the
    shrinking per-plane pupil footprint.
    """
    if preset not in ("display", "fov"):
        raise ValueError(f"unknown preset {preset!r}")
    rig = SimRig(noise_pupil_px=noise_pupil_px, noise_pose_deg=noise_pose_deg,
                 noise_target_mm=noise_target_mm)
    grids = fov_grid_spec() if preset == "fov" else GridSpec()
    return synthesize_dataset(rig, TwoSphereEye(), depths, grids, seed=seed)
