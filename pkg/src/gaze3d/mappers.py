"""The three eye-to-scene mapping approaches.

2D-to-2D: polynomial regression from pupil pixels to scene pixels,
minimizing sum |s_i - q_i w|^2 in closed form.  Treats the eyeball
center as coincident with the scene-camera origin, hence parallax error
at depths away from the calibration depth.

3D-to-3D: rigid alignment of measured 3D pupil poses with target rays,
minimizing sum |R n_i x (t_i - e)|^2 over Euler angles and eyeball
center e, from the documented initialization e0 = 0, R0 = (0, pi, 0)
(the eye and scene cameras face opposite directions).

2D-to-3D: maps pupil pixels to gaze direction polar angles
alpha = (theta, phi) through the same 7-term polynomial, with
g = (sin theta, cos theta sin phi, cos theta cos phi), and jointly fits
the eyeball center by minimizing sum |g(q_i w) x (t_i - e)|^2.  The
weights are initialized by linear regression of q against the polar
angles of t_i - e0, e0 = 0.

Pupil pixels are mapped to [-1, 1]^2 using the eye-camera resolution
before featurization; this conditions the quartic u^2 v^2 term and is an
affine reparameterization of the same function class.  Both 3D fits
normalize t_i - e inside the cross product by default (pure
sine-of-angle residuals; raw offsets would overweight distant targets)
and box-bound e to |component| <= 0.05 m, a loose physical prior for a
head-mounted rig: with a single calibration depth the cost is nearly
flat along the depth axis of e, and the bound keeps that unobservable
direction from drifting to implausible solutions.  Both choices are
configurable.
"""

from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np

from . import _kernels
from .geometry import Ray, normalize, rotation_from_angles
from .optimizer import FitReport, LMSettings, ResidualProblem, solve_lm


class RankDeficient(ValueError):
    """Too few samples, or feature matrix not full rank."""


class DegenerateGeometry(ValueError):
    """Calibration geometry cannot constrain the fit (e.g. collinear
    targets)."""


DEFAULT_EYE_RESOLUTION = (640.0, 360.0)
DEFAULT_CENTER_BOUND_M = 0.05


def poly_features(p) -> np.ndarray:
    """Anisotropic polynomial feature q = (1, u, v, uv, u^2, v^2, u^2 v^2)."""
    u, v = np.asarray(p, dtype=float)
    return np.array([1.0, u, v, u * v, u * u, v * v, u * u * v * v])


def _feature_matrix(pupils_px, resolution):
    res = np.asarray(resolution, dtype=float)
    norm = (np.asarray(pupils_px, dtype=float) - res / 2.0) / (res / 2.0)
    u, v = norm[:, 0], norm[:, 1]
    return np.column_stack((np.ones_like(u), u, v, u * v, u * u, v * v,
                            u * u * v * v))


def polar_to_direction(alpha) -> np.ndarray:
    """g = (sin theta, cos theta sin phi, cos theta cos phi); unit norm."""
    theta, phi = np.asarray(alpha, dtype=float)
    ct = np.cos(theta)
    return np.array([np.sin(theta), ct * np.sin(phi), ct * np.cos(phi)])


def direction_to_polar(direction) -> np.ndarray:
    """Inverse of polar_to_direction for unit vectors."""
    d = normalize(direction)
    return np.array([np.arcsin(np.clip(d[0], -1.0, 1.0)),
                     np.arctan2(d[1], d[2])])


@dataclass(frozen=True)
class GazeEstimate:
    """Either a 2D scene-image point f or a 3D ray in the scene frame."""

    point: np.ndarray = None
    ray: Ray = None

    def __post_init__(self):
        if (self.point is None) == (self.ray is None):
            raise ValueError("estimate must hold exactly one of point/ray")
        if self.point is not None:
            object.__setattr__(self, "point", np.asarray(self.point, dtype=float))


@dataclass(frozen=True)
class Model2Dto2D:
    weights: np.ndarray                  # 7x2
    eye_resolution: np.ndarray

    mapper_id = "2d2d"


@dataclass(frozen=True)
class Model2Dto3D:
    weights: np.ndarray                  # 7x2, maps q -> (theta, phi)
    center: np.ndarray                   # eyeball center e, meters
    eye_resolution: np.ndarray
    report: FitReport = field(default=None, repr=False, compare=False)

    mapper_id = "2d3d"


@dataclass(frozen=True)
class Model3Dto3D:
    angles: np.ndarray                   # Euler angles of R, radians
    center: np.ndarray                   # eyeball center e, meters
    report: FitReport = field(default=None, repr=False, compare=False)

    mapper_id = "3d3d"

    @property
    def rotation(self):
        return rotation_from_angles(self.angles)


def _split_pairs(calib, n_left, n_right):
    left = np.asarray([np.asarray(a, dtype=float) for a, _ in calib])
    right = np.asarray([np.asarray(b, dtype=float) for _, b in calib])
    if left.ndim != 2 or left.shape[1] != n_left or right.shape[1] != n_right:
        raise ValueError("calibration pairs have wrong shapes")
    return left, right


def _check_not_collinear(targets, origin):
    dirs = targets - origin
    dirs = dirs / np.linalg.norm(dirs, axis=1, keepdims=True)
    if np.all(np.linalg.norm(np.cross(dirs, dirs[0]), axis=1) < 1e-9):
        raise DegenerateGeometry("all targets collinear with the initial "
                                 "eyeball center; rays cannot be constrained")


def _center_box(dim, center_bounds):
    if center_bounds is None:
        return None, None
    lower = np.full(dim, -np.inf)
    upper = np.full(dim, np.inf)
    lower[-3:] = -center_bounds
    upper[-3:] = center_bounds
    return lower, upper


def fit_2d_to_2d(calib, eye_resolution=DEFAULT_EYE_RESOLUTION) -> Model2Dto2D:
    """Least-squares fit of the 7x2 weight matrix from (p, s) pairs."""
    pupils, scene = _split_pairs(calib, 2, 2)
    if len(pupils) < 7:
        raise RankDeficient(f"need at least 7 samples, got {len(pupils)}")
    feats = _feature_matrix(pupils, eye_resolution)
    weights, _, rank, _ = np.linalg.lstsq(feats, scene, rcond=None)
    if rank < 7:
        raise RankDeficient(f"feature matrix rank {rank} < 7")
    return Model2Dto2D(weights=weights,
                       eye_resolution=np.asarray(eye_resolution, dtype=float))


def predict_2d_to_2d(model: Model2Dto2D, p) -> GazeEstimate:
    """Estimated 2D gaze position f = q w in scene pixels."""
    feats = _feature_matrix(np.asarray(p, dtype=float)[None, :],
                            model.eye_resolution)
    return GazeEstimate(point=(feats @ model.weights)[0])


def fit_2d_to_3d(calib, eye_resolution=DEFAULT_EYE_RESOLUTION,
                 normalize_residuals=True,
                 center_bounds=DEFAULT_CENTER_BOUND_M,
                 settings: LMSettings = LMSettings()) -> Model2Dto3D:
    """Joint LM fit of polynomial angle weights and eyeball center from
    (p, t) pairs."""
    pupils, targets = _split_pairs(calib, 2, 3)
    if len(pupils) < 9:
        raise RankDeficient(f"need at least 9 samples, got {len(pupils)}")
    _check_not_collinear(targets, np.zeros(3))
    feats = _feature_matrix(pupils, eye_resolution)

    # Initialization: e0 = 0 and w0 from the linear regression q -> polar
    # angles of t - e0.
    alpha = np.array([direction_to_polar(t) for t in targets])
    w0, _, rank, _ = np.linalg.lstsq(feats, alpha, rcond=None)
    if rank < 7:
        raise RankDeficient(f"feature matrix rank {rank} < 7")
    x0 = np.concatenate((w0.ravel(), np.zeros(3)))

    lower, upper = _center_box(17, center_bounds)
    problem = ResidualProblem(
        dim=17,
        residual=lambda x: _kernels.residuals_2d3d(x, feats, targets,
                                                   normalize_residuals),
        lower=lower, upper=upper)
    report = solve_lm(problem, x0, settings)
    return Model2Dto3D(weights=report.params[:14].reshape(7, 2),
                       center=report.params[14:17],
                       eye_resolution=np.asarray(eye_resolution, dtype=float),
                       report=report)


def predict_2d_to_3d(model: Model2Dto3D, p) -> GazeEstimate:
    """Gaze ray from the fitted eyeball center."""
    feats = _feature_matrix(np.asarray(p, dtype=float)[None, :],
                            model.eye_resolution)
    alpha = (feats @ model.weights)[0]
    return GazeEstimate(ray=Ray(model.center, polar_to_direction(alpha)))


def fit_3d_to_3d(calib, normalize_residuals=True,
                 center_bounds=DEFAULT_CENTER_BOUND_M,
                 settings: LMSettings = LMSettings()) -> Model3Dto3D:
    """LM fit of rotation angles and eyeball center from (n, t) pairs."""
    poses, targets = _split_pairs(calib, 3, 3)
    if len(poses) < 3:
        raise DegenerateGeometry(f"need at least 3 samples, got {len(poses)}")
    _check_not_collinear(targets, np.zeros(3))
    poses = poses / np.linalg.norm(poses, axis=1, keepdims=True)

    x0 = np.array([0.0, np.pi, 0.0, 0.0, 0.0, 0.0])
    lower, upper = _center_box(6, center_bounds)
    wrap = np.array([True, True, True, False, False, False])
    problem = ResidualProblem(
        dim=6,
        residual=lambda x: _kernels.residuals_3d3d(x, poses, targets,
                                                   normalize_residuals),
        lower=lower, upper=upper, wrap_mask=wrap)
    report = solve_lm(problem, x0, settings)
    return Model3Dto3D(angles=report.params[:3], center=report.params[3:6],
                       report=report)


def predict_3d_to_3d(model: Model3Dto3D, n) -> GazeEstimate:
    """Gaze ray e + lambda R n for a unit pupil pose n."""
    direction = model.rotation @ np.asarray(n, dtype=float)
    return GazeEstimate(ray=Ray(model.center, normalize(direction)))


@dataclass(frozen=True)
class MappingConfig:
    """Shared fit settings used by the evaluation harness and CLI."""

    eye_resolution: tuple = DEFAULT_EYE_RESOLUTION
    normalize_residuals: bool = True
    center_bounds_m: float = DEFAULT_CENTER_BOUND_M
    lm: LMSettings = field(default_factory=LMSettings)


MAPPER_IDS = ("2d2d", "2d3d", "3d3d")


def fit_mapper(mapper_id: str, samples, config: MappingConfig = MappingConfig()):
    """Fit one mapper from SimSample-like records."""
    if mapper_id == "2d2d":
        pairs = [(s.pupil_px, s.target_px) for s in samples]
        return fit_2d_to_2d(pairs, config.eye_resolution)
    if mapper_id == "2d3d":
        pairs = [(s.pupil_px, s.target) for s in samples]
        return fit_2d_to_3d(pairs, config.eye_resolution,
                            config.normalize_residuals,
                            config.center_bounds_m, config.lm)
    if mapper_id == "3d3d":
        pairs = [(s.pupil_pose, s.target) for s in samples]
        return fit_3d_to_3d(pairs, config.normalize_residuals,
                            config.center_bounds_m, config.lm)
    raise ValueError(f"unknown mapper {mapper_id!r}")


def predict_sample(model, sample) -> GazeEstimate:
    """Predict a gaze estimate for one record, dispatching on model type."""
    if isinstance(model, Model2Dto2D):
        return predict_2d_to_2d(model, sample.pupil_px)
    if isinstance(model, Model2Dto3D):
        return predict_2d_to_3d(model, sample.pupil_px)
    if isinstance(model, Model3Dto3D):
        return predict_3d_to_3d(model, sample.pupil_pose)
    raise TypeError(f"not a mapper model: {type(model).__name__}")
