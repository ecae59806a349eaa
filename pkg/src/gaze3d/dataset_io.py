"""File formats, experiment configuration, and results export.

Dataset grammar (line-delimited JSON, extension-agnostic, ``.jsonl`` by
convention): line 1 is a header object carrying the schema version,
units, frame conventions, camera intrinsics and provenance; every
further line is one record::

    {"pupil_px": [u, v], "pupil_pose": [x, y, z] | null,
     "target_scene_m": [x, y, z], "target_px": [u, v] | null,
     "depth_label": <meters>, "role": "calibration" | "test"}

Lengths are meters, image coordinates pixels, angles radians.  Floats
are serialized with shortest round-trip repr and keys are sorted, so a
given dataset has exactly one byte representation: identical seeds give
byte-identical files and a load/save cycle is lossless.

Results CSV: one header line, then one row per ErrorRecord with the
columns ``mapper,k,calib_subset,test_depth_m,n_targets,mean_error_deg,
std_error_deg,status`` (calib_subset semicolon-joined, std is the
population std), ordered by mapper, k, subset, test depth.  Failed fits
keep their row with empty error fields.
"""

from __future__ import annotations

import json
from dataclasses import dataclass, fields, replace

import numpy as np

from .eye_simulator import (
    DEFAULT_DEPTHS,
    DatasetBundle,
    GridSpec,
    SimRig,
    TwoSphereEye,
    fov_grid_spec,
    synthesize_dataset,
)
from .evaluation import SweepResult
from .geometry import PinholeCamera, rotation_from_angles
from .mappers import (
    MAPPER_IDS,
    MappingConfig,
    Model2Dto2D,
    Model2Dto3D,
    Model3Dto3D,
)
from .optimizer import LMSettings

SCHEMA_VERSION = "gaze3d/1"
MODEL_FORMAT = "gaze3d-model/1"

_UNITS = {"length": "m", "pixel": "px", "angle": "rad"}
_FRAMES = {
    "scene": "x right, y down, z forward; origin at the scene camera",
    "eye": "pupil_pose is a unit direction in the eye-camera frame",
}


class ParseError(ValueError):
    """Malformed dataset/model file; carries the offending line number."""

    def __init__(self, message, line=None):
        self.line = line
        super().__init__(f"line {line}: {message}" if line is not None
                         else message)


class SchemaVersionMismatch(ValueError):
    """Dataset declares a schema version this reader does not support."""


class UnitViolation(ValueError):
    """A record violates the declared units (non-unit pupil_pose)."""

    def __init__(self, message, record_index=None):
        self.record_index = record_index
        super().__init__(message)


class ConfigError(ValueError):
    """Invalid experiment configuration."""


def _floats(x):
    return [float(v) for v in np.asarray(x, dtype=float).ravel()]


def _json_line(obj) -> str:
    return json.dumps(obj, sort_keys=True, separators=(",", ":"))


# --------------------------------------------------------------------------
# datasets

def _camera_to_dict(cam: PinholeCamera) -> dict:
    return {"focal": _floats(cam.focal), "principal": _floats(cam.principal),
            "resolution": _floats(cam.resolution),
            "rotation": _floats(cam.rotation),
            "translation": _floats(cam.translation)}


def _camera_from_dict(d, what) -> PinholeCamera:
    try:
        rotation = np.asarray(d.get("rotation", np.eye(3).ravel()),
                              dtype=float).reshape(3, 3)
        return PinholeCamera(focal=d["focal"], principal=d["principal"],
                             resolution=d["resolution"], rotation=rotation,
                             translation=np.asarray(
                                 d.get("translation", (0.0, 0.0, 0.0)),
                                 dtype=float))
    except (KeyError, TypeError, ValueError) as err:
        raise ParseError(f"bad {what} in header: {err}", line=1) from err


def _vec(record, key, length, lineno, optional=False):
    value = record.get(key)
    if value is None:
        if optional:
            return None
        raise ParseError(f"missing field {key!r}", line=lineno)
    try:
        arr = np.asarray(value, dtype=float)
    except (TypeError, ValueError) as err:
        raise ParseError(f"field {key!r} is not numeric: {err}",
                         line=lineno) from err
    if arr.shape != (length,):
        raise ParseError(f"field {key!r} must have {length} entries",
                         line=lineno)
    if not np.all(np.isfinite(arr)):
        raise ParseError(f"field {key!r} contains non-finite values",
                         line=lineno)
    return arr


@dataclass(frozen=True)
class DataRecord:
    """One loaded observation (same measured channels as SimSample)."""

    pupil_px: np.ndarray
    pupil_pose: np.ndarray
    target: np.ndarray
    target_px: np.ndarray
    depth_label: float
    role: str


@dataclass(frozen=True)
class LoadedDataset:
    """A parsed dataset plus provenance and data-quality counters."""

    bundle: DatasetBundle
    source: str
    n_records: int
    missing_pose: int           # records unusable for 3D-to-3D fitting

    @property
    def calibration(self):
        return self.bundle.calibration

    @property
    def test(self):
        return self.bundle.test

    def depths(self):
        return self.bundle.depths()


def save_dataset(bundle: DatasetBundle, path, source="simulated") -> None:
    """Write a DatasetBundle in the line-delimited format above."""
    if source not in ("simulated", "recorded"):
        raise ValueError(f"unknown source {source!r}")
    rig, eye = bundle.rig, bundle.eye
    header = {
        "schema": SCHEMA_VERSION,
        "source": source,
        "units": _UNITS,
        "frames": _FRAMES,
        "scene_camera": _camera_to_dict(rig.scene_camera),
        "eye_camera": _camera_to_dict(rig.eye_camera),
        "e_gt": _floats(rig.e_gt),
        "eye_model_mm": {
            "eyeball_radius_mm": eye.eyeball_radius_mm,
            "corneal_radius_mm": eye.corneal_radius_mm,
            "center_separation_mm": eye.center_separation_mm,
        },
        "noise": {"pupil_px": rig.noise_pupil_px,
                  "pose_deg": rig.noise_pose_deg,
                  "target_mm": rig.noise_target_mm},
    }
    lines = [_json_line(header)]
    depths = sorted(set(bundle.calibration) | set(bundle.test))
    for depth in depths:
        for group in (bundle.calibration, bundle.test):
            for s in group.get(depth, []):
                pose = None if s.pupil_pose is None else _floats(s.pupil_pose)
                target_px = (None if s.target_px is None
                             else _floats(s.target_px))
                lines.append(_json_line({
                    "pupil_px": _floats(s.pupil_px),
                    "pupil_pose": pose,
                    "target_scene_m": _floats(s.target),
                    "target_px": target_px,
                    "depth_label": float(s.depth_label),
                    "role": s.role,
                }))
    with open(path, "w", encoding="utf-8", newline="\n") as fh:
        fh.write("\n".join(lines) + "\n")


def load_dataset(path, require_calibration=False) -> LoadedDataset:
    """Parse and validate a dataset file.

    Records without pupil_pose load fine but are counted in
    ``missing_pose`` (they cannot feed the 3D-to-3D mapper).  With
    ``require_calibration`` the file must contain calibration records —
    used by commands that fit, so the error surfaces before any fit.
    """
    with open(path, "r", encoding="utf-8") as fh:
        lines = fh.read().splitlines()
    if not lines:
        raise ParseError("empty file", line=1)

    try:
        header = json.loads(lines[0])
    except json.JSONDecodeError as err:
        raise ParseError(f"bad JSON: {err.msg}", line=1) from err
    if not isinstance(header, dict) or "schema" not in header:
        raise ParseError("first line must be a header object with a "
                         "'schema' field", line=1)
    if header["schema"] != SCHEMA_VERSION:
        raise SchemaVersionMismatch(
            f"unsupported schema {header['schema']!r} "
            f"(this reader supports {SCHEMA_VERSION!r})")
    if header.get("units", _UNITS) != _UNITS:
        raise ParseError(f"unsupported units {header.get('units')!r}", line=1)
    source = header.get("source", "recorded")

    scene_cam = (_camera_from_dict(header["scene_camera"], "scene_camera")
                 if "scene_camera" in header else None)
    eye_cam = (_camera_from_dict(header["eye_camera"], "eye_camera")
               if "eye_camera" in header else None)
    eye = TwoSphereEye(**header["eye_model_mm"]) if "eye_model_mm" in header \
        else TwoSphereEye()
    noise = header.get("noise", {})
    rig_kwargs = dict(eye_camera=eye_cam,
                      noise_pupil_px=noise.get("pupil_px", 0.0),
                      noise_pose_deg=noise.get("pose_deg", 0.0),
                      noise_target_mm=noise.get("target_mm", 0.0))
    if scene_cam is not None:
        rig_kwargs["scene_camera"] = scene_cam
    if header.get("e_gt") is not None:
        rig_kwargs["e_gt"] = np.asarray(header["e_gt"], dtype=float)
    try:
        rig = SimRig(**rig_kwargs)
    except (TypeError, ValueError) as err:
        raise ParseError(f"bad rig in header: {err}", line=1) from err

    calibration, test = {}, {}
    missing_pose = 0
    n_records = 0
    for idx, raw in enumerate(lines[1:]):
        lineno = idx + 2
        if not raw.strip():
            raise ParseError("blank line inside dataset", line=lineno)
        try:
            record = json.loads(raw)
        except json.JSONDecodeError as err:
            raise ParseError(f"bad JSON: {err.msg}", line=lineno) from err
        if not isinstance(record, dict):
            raise ParseError("record is not an object", line=lineno)

        pupil_px = _vec(record, "pupil_px", 2, lineno)
        pose = _vec(record, "pupil_pose", 3, lineno, optional=True)
        target = _vec(record, "target_scene_m", 3, lineno)
        target_px = _vec(record, "target_px", 2, lineno, optional=True)
        if pose is None:
            missing_pose += 1
        else:
            norm = float(np.linalg.norm(pose))
            if abs(norm - 1.0) > 1e-6:
                raise UnitViolation(
                    f"record {idx} (line {lineno}): pupil_pose norm "
                    f"{norm:.8g} is not unit", record_index=idx)
        role = record.get("role")
        if role not in ("calibration", "test"):
            raise ParseError(f"role must be 'calibration' or 'test', "
                             f"got {role!r}", line=lineno)
        try:
            depth = float(record["depth_label"])
        except (KeyError, TypeError, ValueError):
            raise ParseError("missing or non-numeric depth_label",
                             line=lineno) from None
        if depth <= 0:
            raise ParseError(f"depth_label must be positive, got {depth}",
                             line=lineno)

        group = calibration if role == "calibration" else test
        group.setdefault(depth, []).append(DataRecord(
            pupil_px=pupil_px, pupil_pose=pose, target=target,
            target_px=target_px, depth_label=depth, role=role))
        n_records += 1

    if require_calibration and not calibration:
        raise ParseError("dataset contains no calibration records")
    bundle = DatasetBundle(calibration=calibration, test=test,
                           rig=rig, eye=eye)
    return LoadedDataset(bundle=bundle, source=source, n_records=n_records,
                         missing_pose=missing_pose)


# --------------------------------------------------------------------------
# fitted models

def save_model(model, path) -> None:
    """Serialize a fitted mapper model as a small JSON document."""
    doc = {"format": MODEL_FORMAT, "mapper": model.mapper_id}
    if isinstance(model, Model2Dto2D):
        doc["weights"] = [_floats(row) for row in model.weights]
        doc["eye_resolution"] = _floats(model.eye_resolution)
    elif isinstance(model, Model2Dto3D):
        doc["weights"] = [_floats(row) for row in model.weights]
        doc["center_m"] = _floats(model.center)
        doc["eye_resolution"] = _floats(model.eye_resolution)
    elif isinstance(model, Model3Dto3D):
        doc["angles_rad"] = _floats(model.angles)
        doc["center_m"] = _floats(model.center)
    else:
        raise TypeError(f"not a mapper model: {type(model).__name__}")
    with open(path, "w", encoding="utf-8", newline="\n") as fh:
        fh.write(json.dumps(doc, sort_keys=True, indent=2) + "\n")


def load_model(path):
    """Inverse of save_model."""
    with open(path, "r", encoding="utf-8") as fh:
        try:
            doc = json.load(fh)
        except json.JSONDecodeError as err:
            raise ParseError(f"bad JSON: {err.msg}", line=err.lineno) from err
    if not isinstance(doc, dict) or doc.get("format") != MODEL_FORMAT:
        raise ParseError(f"not a {MODEL_FORMAT} file")
    mapper = doc.get("mapper")
    try:
        if mapper == "2d2d":
            return Model2Dto2D(
                weights=np.asarray(doc["weights"], dtype=float),
                eye_resolution=np.asarray(doc["eye_resolution"], dtype=float))
        if mapper == "2d3d":
            return Model2Dto3D(
                weights=np.asarray(doc["weights"], dtype=float),
                center=np.asarray(doc["center_m"], dtype=float),
                eye_resolution=np.asarray(doc["eye_resolution"], dtype=float))
        if mapper == "3d3d":
            return Model3Dto3D(
                angles=np.asarray(doc["angles_rad"], dtype=float),
                center=np.asarray(doc["center_m"], dtype=float))
    except KeyError as err:
        raise ParseError(f"model file missing field {err}") from err
    raise ParseError(f"unknown mapper {mapper!r}")


# --------------------------------------------------------------------------
# results export

CSV_COLUMNS = ("mapper", "k", "calib_subset", "test_depth_m", "n_targets",
               "mean_error_deg", "std_error_deg", "status")


def _fmt(x) -> str:
    return repr(float(x))


def export_results_csv(sweep: SweepResult, path) -> None:
    """Write a SweepResult as CSV (schema in the module docstring).

    Row order is (mapper, k, calibration subset, test depth), so
    identical sweeps export byte-identically.
    """
    if not sweep.records:
        raise ValueError("empty sweep")
    rows = sorted(sweep.records,
                  key=lambda r: (r.mapper, r.k, r.calib_subset, r.test_depth))
    lines = [",".join(CSV_COLUMNS)]
    for r in rows:
        ok = r.status == "ok"
        lines.append(",".join((
            r.mapper,
            str(r.k),
            ";".join(_fmt(d) for d in r.calib_subset),
            _fmt(r.test_depth),
            str(r.n_targets),
            _fmt(r.mean) if ok else "",
            _fmt(r.std) if ok else "",
            r.status,
        )))
    with open(path, "w", encoding="utf-8", newline="\n") as fh:
        fh.write("\n".join(lines) + "\n")


# --------------------------------------------------------------------------
# experiment configuration

_CAMERA_KEYS = {"focal", "principal", "resolution", "rotation_angles",
                "translation"}
_EYE_KEYS = {"eyeball_radius_mm", "corneal_radius_mm", "center_separation_mm"}
_GRID_KEYS = {f.name for f in fields(GridSpec)}
_LM_KEYS = {f.name for f in fields(LMSettings)}


def _check_keys(d, allowed, where):
    if not isinstance(d, dict):
        raise ConfigError(f"{where} must be an object")
    for key in d:
        if key not in allowed:
            raise ConfigError(f"unknown config key {where}.{key!r}")


@dataclass(frozen=True)
class ExperimentConfig:
    """Everything a run needs; unknown keys are rejected, not ignored.

    Optional dict fields override defaults field-by-field: ``grid`` takes
    GridSpec fields, ``lm`` takes LMSettings fields, ``eye_model_mm``
    takes TwoSphereEye fields, and the camera dicts take focal /
    principal / resolution plus optional rotation_angles (radians) and
    translation.
    """

    seed: int = 0
    depths: tuple = DEFAULT_DEPTHS
    mappers: tuple = MAPPER_IDS
    grid_preset: str = "display"
    grid: dict = None
    noise_pupil_px: float = 0.0
    noise_pose_deg: float = 0.0
    noise_target_mm: float = 0.0
    e_gt: tuple = (0.015, 0.035, -0.025)
    eye_model_mm: dict = None
    scene_camera: dict = None
    eye_camera: dict = None
    lm: dict = None
    normalize_residuals: bool = True
    center_bounds_m: float = 0.05
    out: str = None

    def __post_init__(self):
        object.__setattr__(self, "depths",
                           tuple(float(d) for d in self.depths))
        object.__setattr__(self, "mappers", tuple(self.mappers))
        if not self.depths or any(d <= 0 for d in self.depths):
            raise ConfigError("depths must be a nonempty list of positive "
                              "meters")
        if len(set(self.depths)) != len(self.depths):
            raise ConfigError("depths contains duplicates")
        if not self.mappers:
            raise ConfigError("mappers must be nonempty")
        for m in self.mappers:
            if m not in MAPPER_IDS:
                raise ConfigError(f"unknown mapper {m!r} "
                                  f"(choose from {', '.join(MAPPER_IDS)})")
        if self.grid_preset not in ("display", "fov"):
            raise ConfigError(f"unknown grid_preset {self.grid_preset!r}")
        for name in ("noise_pupil_px", "noise_pose_deg", "noise_target_mm"):
            if getattr(self, name) < 0:
                raise ConfigError(f"{name} must be >= 0")
        if len(tuple(self.e_gt)) != 3:
            raise ConfigError("e_gt must have 3 entries")
        if self.grid is not None:
            _check_keys(self.grid, _GRID_KEYS, "grid")
        if self.lm is not None:
            _check_keys(self.lm, _LM_KEYS, "lm")
        if self.eye_model_mm is not None:
            _check_keys(self.eye_model_mm, _EYE_KEYS, "eye_model_mm")
        for name in ("scene_camera", "eye_camera"):
            cam = getattr(self, name)
            if cam is not None:
                _check_keys(cam, _CAMERA_KEYS, name)
                for req in ("focal", "principal", "resolution"):
                    if req not in cam:
                        raise ConfigError(f"{name} needs {req!r}")

    @classmethod
    def from_dict(cls, d) -> "ExperimentConfig":
        if not isinstance(d, dict):
            raise ConfigError("config must be a JSON object")
        known = {f.name for f in fields(cls)}
        for key in d:
            if key not in known:
                raise ConfigError(f"unknown config key {key!r}")
        try:
            return cls(**d)
        except (TypeError, ValueError) as err:
            if isinstance(err, ConfigError):
                raise
            raise ConfigError(str(err)) from err

    def override(self, **kwargs) -> "ExperimentConfig":
        """Copy with non-None overrides applied (CLI flags beat file)."""
        updates = {k: v for k, v in kwargs.items() if v is not None}
        return replace(self, **updates)

    # -- builders ----------------------------------------------------------

    def to_eye(self) -> TwoSphereEye:
        return TwoSphereEye(**(self.eye_model_mm or {}))

    def to_grids(self) -> GridSpec:
        base = fov_grid_spec() if self.grid_preset == "fov" else GridSpec()
        return replace(base, **self.grid) if self.grid else base

    def _to_camera(self, d) -> PinholeCamera:
        kwargs = dict(focal=d["focal"], principal=d["principal"],
                      resolution=d["resolution"])
        if "rotation_angles" in d:
            kwargs["rotation"] = rotation_from_angles(d["rotation_angles"])
        if "translation" in d:
            kwargs["translation"] = np.asarray(d["translation"], dtype=float)
        return PinholeCamera(**kwargs)

    def to_rig(self) -> SimRig:
        kwargs = dict(e_gt=np.asarray(self.e_gt, dtype=float),
                      noise_pupil_px=self.noise_pupil_px,
                      noise_pose_deg=self.noise_pose_deg,
                      noise_target_mm=self.noise_target_mm)
        if self.scene_camera is not None:
            kwargs["scene_camera"] = self._to_camera(self.scene_camera)
        if self.eye_camera is not None:
            kwargs["eye_camera"] = self._to_camera(self.eye_camera)
        try:
            return SimRig(**kwargs)
        except ValueError as err:
            raise ConfigError(str(err)) from err

    def to_lm(self) -> LMSettings:
        return LMSettings(**(self.lm or {}))

    def to_mapping_config(self, eye_resolution=None) -> MappingConfig:
        if eye_resolution is None:
            eye_resolution = (tuple(self.eye_camera["resolution"])
                              if self.eye_camera else
                              tuple(SimRig().eye_camera.resolution))
        return MappingConfig(eye_resolution=tuple(eye_resolution),
                             normalize_residuals=self.normalize_residuals,
                             center_bounds_m=self.center_bounds_m,
                             lm=self.to_lm())

    def build_bundle(self) -> DatasetBundle:
        """Synthesize the dataset this configuration describes."""
        return synthesize_dataset(self.to_rig(), self.to_eye(), self.depths,
                                  self.to_grids(), seed=self.seed)


def load_config(path) -> ExperimentConfig:
    """Read an ExperimentConfig from a JSON file (strict keys)."""
    with open(path, "r", encoding="utf-8") as fh:
        try:
            doc = json.load(fh)
        except json.JSONDecodeError as err:
            raise ConfigError(f"config line {err.lineno}: {err.msg}") from err
    return ExperimentConfig.from_dict(doc)
