"""Pinhole camera/projector models, rigid transforms and ray geometry.

Conventions: model frames are x right, y down, z forward.  Pixel (u, v)
addresses pixel *centers* at integer coordinates, u rightward, v downward.
Depths and translations are in meters.
"""
from __future__ import annotations

import json
import math
from dataclasses import dataclass, field
from pathlib import Path

import numpy as np

from .errors import BehindModelError, FormatError, InvalidArgument

# Virtual camera optics (pinhole, physical units).
CAMERA_FOCAL_LENGTH_M = 0.5
CAMERA_APERTURE_H_M = 0.209995
CAMERA_APERTURE_V_M = 0.152908
CAMERA_RESOLUTION = (960, 960)

# Projector: rectangular emitter 0.5 m wide x 0.625 m tall, 912 x 1140 pattern.
PROJECTOR_WIDTH_M = 0.5
PROJECTOR_HEIGHT_M = 0.625
PROJECTOR_RESOLUTION = (912, 1140)
PROJECTOR_THROW_M = 1.8
# Projector offset from the camera center, expressed in the camera frame.
PROJECTOR_OFFSET_M = (-0.125, 0.1, 0.0)

_ORTHO_TOL = 1e-9


def _as_vec3(x, name="vector"):
    a = np.asarray(x, dtype=np.float64).reshape(-1)
    if a.shape != (3,):
        raise InvalidArgument(f"{name} must have 3 components, got shape {np.shape(x)}")
    if not np.all(np.isfinite(a)):
        raise InvalidArgument(f"{name} must be finite")
    return a


def _frozen(a):
    a = np.array(a, dtype=np.float64)
    a.setflags(write=False)
    return a


@dataclass(frozen=True)
class RigidTransform:
    """Rotation + translation mapping a local frame into its parent frame.

    ``apply(p) = rotation @ p + translation``.
    """

    rotation: np.ndarray = field(default_factory=lambda: np.eye(3))
    translation: np.ndarray = field(default_factory=lambda: np.zeros(3))

    def __post_init__(self):
        r = np.asarray(self.rotation, dtype=np.float64)
        if r.shape == (9,):
            r = r.reshape(3, 3)
        if r.shape != (3, 3) or not np.all(np.isfinite(r)):
            raise InvalidArgument("rotation must be a finite 3x3 matrix")
        if np.max(np.abs(r.T @ r - np.eye(3))) > _ORTHO_TOL:
            raise InvalidArgument("rotation is not orthonormal")
        if abs(np.linalg.det(r) - 1.0) > _ORTHO_TOL:
            raise InvalidArgument("rotation must have determinant +1")
        object.__setattr__(self, "rotation", _frozen(r))
        object.__setattr__(self, "translation", _frozen(_as_vec3(self.translation, "translation")))

    @classmethod
    def identity(cls):
        return cls()

    def inverse(self):
        rt = self.rotation.T
        return RigidTransform(rt, -rt @ self.translation)

    def compose(self, other):
        """Return ``self ∘ other`` (apply ``other`` first)."""
        return RigidTransform(self.rotation @ other.rotation,
                              self.rotation @ other.translation + self.translation)

    def __matmul__(self, other):
        return self.compose(other)

    def apply(self, points):
        p = np.asarray(points, dtype=np.float64)
        return p @ self.rotation.T + self.translation

    def apply_vector(self, vectors):
        return np.asarray(vectors, dtype=np.float64) @ self.rotation.T

    def to_dict(self):
        return {"rotation": self.rotation.reshape(-1).tolist(),
                "translation_m": self.translation.tolist()}


@dataclass(frozen=True)
class Ray:
    origin: np.ndarray
    direction: np.ndarray

    def __post_init__(self):
        d = _as_vec3(self.direction, "direction")
        n = np.linalg.norm(d)
        if n == 0.0:
            raise InvalidArgument("ray direction must be non-zero")
        object.__setattr__(self, "origin", _frozen(_as_vec3(self.origin, "origin")))
        object.__setattr__(self, "direction", _frozen(d / n))

    def at(self, t):
        return self.origin + t * self.direction


@dataclass(frozen=True)
class Plane:
    """Plane ``normal . x = offset`` with unit normal."""

    normal: np.ndarray
    offset: float

    def __post_init__(self):
        n = _as_vec3(self.normal, "normal")
        norm = np.linalg.norm(n)
        if norm == 0.0:
            raise InvalidArgument("plane normal must be non-zero")
        object.__setattr__(self, "normal", _frozen(n / norm))
        object.__setattr__(self, "offset", float(self.offset) / norm)

    def signed_distance(self, points):
        return np.asarray(points, dtype=np.float64) @ self.normal - self.offset


@dataclass(frozen=True)
class PinholeModel:
    """Ideal pinhole intrinsics plus a model->world pose.

    Used for both the camera and the projector (an inverse camera).
    """

    width_px: int
    height_px: int
    fx: float
    fy: float
    cx: float
    cy: float
    pose: RigidTransform = field(default_factory=RigidTransform)
    # (focal_length_m, aperture_h_m, aperture_v_m) when built from physical optics
    optics: tuple | None = field(default=None, compare=False)

    def __post_init__(self):
        if int(self.width_px) <= 0 or int(self.height_px) <= 0:
            raise InvalidArgument("image dimensions must be positive")
        object.__setattr__(self, "width_px", int(self.width_px))
        object.__setattr__(self, "height_px", int(self.height_px))
        for name in ("fx", "fy", "cx", "cy"):
            value = float(getattr(self, name))
            if not math.isfinite(value):
                raise InvalidArgument(f"{name} must be finite")
            object.__setattr__(self, name, value)
        if self.fx <= 0 or self.fy <= 0:
            raise InvalidArgument("focal lengths must be positive")
        if not (0 <= self.cx < self.width_px and 0 <= self.cy < self.height_px):
            raise InvalidArgument("principal point must lie inside the image")

    @classmethod
    def from_physical(cls, width_px, height_px, focal_length_m, aperture_h_m, aperture_v_m,
                      pose=None):
        """Build pixel intrinsics from physical optics: fx = f / aperture_h * W."""
        if min(focal_length_m, aperture_h_m, aperture_v_m) <= 0:
            raise InvalidArgument("focal length and apertures must be positive")
        return cls(width_px, height_px,
                   fx=focal_length_m / aperture_h_m * width_px,
                   fy=focal_length_m / aperture_v_m * height_px,
                   cx=width_px / 2.0, cy=height_px / 2.0,
                   pose=pose or RigidTransform(),
                   optics=(float(focal_length_m), float(aperture_h_m), float(aperture_v_m)))

    @property
    def K(self):
        return np.array([[self.fx, 0.0, self.cx], [0.0, self.fy, self.cy], [0.0, 0.0, 1.0]])

    @property
    def center(self):
        """Optical center in world coordinates."""
        return self.pose.translation

    @property
    def optical_axis(self):
        return self.pose.rotation[:, 2].copy()

    def with_pose(self, pose):
        return PinholeModel(self.width_px, self.height_px, self.fx, self.fy, self.cx, self.cy, pose,
                            self.optics)

    def with_resolution(self, width_px, height_px):
        """Rescale intrinsics to a new resolution, keeping the field of view."""
        sx = width_px / self.width_px
        sy = height_px / self.height_px
        return PinholeModel(width_px, height_px, self.fx * sx, self.fy * sy,
                            self.cx * sx, self.cy * sy, self.pose, self.optics)

    def in_bounds(self, u, v):
        u = np.asarray(u)
        v = np.asarray(v)
        return (u >= 0) & (u < self.width_px) & (v >= 0) & (v < self.height_px)


def rotation_z(theta_degrees):
    """Rotation about the z axis by ``theta_degrees`` (right-handed)."""
    theta = float(theta_degrees)
    if not math.isfinite(theta):
        raise InvalidArgument("rotation angle must be finite")
    c, s = math.cos(math.radians(theta)), math.sin(math.radians(theta))
    return np.array([[c, -s, 0.0], [s, c, 0.0], [0.0, 0.0, 1.0]])


def look_at(eye, target, up=(0.0, 0.0, 1.0)):
    """Pose of a model at ``eye`` whose optical axis points at ``target``.

    The model's -y axis is aligned as closely as possible with ``up``.
    """
    eye = _as_vec3(eye, "eye")
    z = _as_vec3(target, "target") - eye
    if np.linalg.norm(z) == 0:
        raise InvalidArgument("eye and target coincide")
    z /= np.linalg.norm(z)
    x = np.cross(z, _as_vec3(up, "up"))
    if np.linalg.norm(x) < 1e-12:
        raise InvalidArgument("up vector is parallel to the viewing direction")
    x /= np.linalg.norm(x)
    y = np.cross(z, x)
    return RigidTransform(np.column_stack([x, y, z]), eye)


def unproject(model, u, v):
    """World-frame unit ray directions for arrays of pixel coordinates (no bounds check)."""
    u = np.asarray(u, dtype=np.float64)
    v = np.asarray(v, dtype=np.float64)
    local = np.stack([(u - model.cx) / model.fx, (v - model.cy) / model.fy, np.ones_like(u)], axis=-1)
    local /= np.linalg.norm(local, axis=-1, keepdims=True)
    return model.pose.apply_vector(local)


def pixel_to_ray(model, u, v):
    if not (math.isfinite(u) and math.isfinite(v)) or not model.in_bounds(u, v):
        raise InvalidArgument(f"pixel ({u}, {v}) outside {model.width_px}x{model.height_px} image")
    return Ray(model.center, unproject(model, u, v))


def to_model_frame(model, points):
    """World points -> model-frame coordinates."""
    p = np.asarray(points, dtype=np.float64) - model.pose.translation
    return p @ model.pose.rotation


def project_points(model, points):
    """Vectorized forward projection.

    Returns ``(u, v, z)`` where ``z`` is the model-frame depth; entries with
    ``z <= 0`` are NaN in ``u`` and ``v``.
    """
    q = to_model_frame(model, points)
    z = q[..., 2]
    with np.errstate(divide="ignore", invalid="ignore"):
        u = np.where(z > 0, model.fx * q[..., 0] / z + model.cx, np.nan)
        v = np.where(z > 0, model.fy * q[..., 1] / z + model.cy, np.nan)
    return u, v, z


def project_point(model, p):
    q = to_model_frame(model, _as_vec3(p, "point"))
    if q[2] <= 0:
        raise BehindModelError(f"point has non-positive depth {q[2]:.6g} m in the model frame")
    return model.fx * q[0] / q[2] + model.cx, model.fy * q[1] / q[2] + model.cy


def column_planes(proj, x_p):
    """Normals and offsets of projector column planes for an array of pattern columns.

    In the projector frame every ray through column ``x_p`` has direction
    ``((x_p - cx)/fx, *, 1)``, so ``(1, 0, -(x_p - cx)/fx)`` is normal to all of them.
    """
    x_p = np.asarray(x_p, dtype=np.float64)
    a = (x_p - proj.cx) / proj.fx
    local = np.stack([np.ones_like(a), np.zeros_like(a), -a], axis=-1)
    local /= np.linalg.norm(local, axis=-1, keepdims=True)
    normals = proj.pose.apply_vector(local)
    offsets = normals @ proj.center
    return normals, offsets


def projector_column_plane(proj, x_p):
    if not (math.isfinite(x_p) and 0 <= x_p < proj.width_px):
        raise InvalidArgument(f"pattern column {x_p} outside [0, {proj.width_px})")
    n, d = column_planes(proj, x_p)
    return Plane(n, float(d))


def ray_plane_intersect(ray, plane):
    denom = float(plane.normal @ ray.direction)
    if abs(denom) < 1e-12:
        return None
    t = (plane.offset - float(plane.normal @ ray.origin)) / denom
    if t <= 0:
        return None
    return ray.origin + t * ray.direction


def reprojection_error(model, points, pixels):
    """RMS pixel distance between projected ``points`` and observed ``pixels``."""
    pts = np.asarray(points, dtype=np.float64).reshape(-1, 3)
    obs = np.asarray(pixels, dtype=np.float64).reshape(-1, 2)
    if len(pts) == 0 or len(pts) != len(obs):
        raise InvalidArgument("points and pixels must be non-empty and of equal length")
    u, v, z = project_points(model, pts)
    if np.any(z <= 0):
        raise BehindModelError("some points lie behind the model")
    sq = (u - obs[:, 0]) ** 2 + (v - obs[:, 1]) ** 2
    return float(np.sqrt(np.mean(sq)))


# --- standard rig -----------------------------------------------------------

def table1_camera(width_px=CAMERA_RESOLUTION[0], height_px=CAMERA_RESOLUTION[1], pose=None):
    """The virtual camera: f = 0.5 m, apertures 0.209995 x 0.152908 m."""
    return PinholeModel.from_physical(width_px, height_px, CAMERA_FOCAL_LENGTH_M,
                                      CAMERA_APERTURE_H_M, CAMERA_APERTURE_V_M, pose)


def table1_projector(pose=None, throw_m=PROJECTOR_THROW_M):
    """Projector as an inverse pinhole whose image is 0.5 x 0.625 m at ``throw_m``."""
    w, h = PROJECTOR_RESOLUTION
    return PinholeModel.from_physical(w, h, throw_m, PROJECTOR_WIDTH_M, PROJECTOR_HEIGHT_M, pose)


def standard_rig(width_px=CAMERA_RESOLUTION[0], height_px=CAMERA_RESOLUTION[1],
                 camera_pose=None, throw_m=PROJECTOR_THROW_M):
    """Camera plus projector mounted 0.1 m below and 0.125 m left of it.

    The projector is toed in so its optical axis crosses the camera axis at
    ``throw_m`` in front of the camera.
    """
    camera_pose = camera_pose or RigidTransform()
    camera = table1_camera(width_px, height_px, camera_pose)
    eye = camera_pose.apply(np.array(PROJECTOR_OFFSET_M))
    target = camera_pose.apply(np.array([0.0, 0.0, throw_m]))
    up = -camera_pose.rotation[:, 1]
    projector = table1_projector(look_at(eye, target, up), throw_m)
    return camera, projector


# --- JSON -------------------------------------------------------------------

_PINHOLE_KEYS = {"width_px", "height_px", "focal_length_m", "aperture_h_m", "aperture_v_m",
                 "rotation", "translation_m"}


def pinhole_from_dict(doc):
    missing = _PINHOLE_KEYS - set(doc)
    unknown = set(doc) - _PINHOLE_KEYS
    if missing:
        raise FormatError(f"pinhole description missing keys: {sorted(missing)}")
    if unknown:
        raise FormatError(f"pinhole description has unknown keys: {sorted(unknown)}")
    rot = doc["rotation"]
    if len(rot) != 9:
        raise FormatError("rotation must have 9 numbers (row-major)")
    try:
        pose = RigidTransform(np.array(rot, dtype=float).reshape(3, 3), doc["translation_m"])
        return PinholeModel.from_physical(int(doc["width_px"]), int(doc["height_px"]),
                                          float(doc["focal_length_m"]), float(doc["aperture_h_m"]),
                                          float(doc["aperture_v_m"]), pose)
    except InvalidArgument as exc:
        raise FormatError(f"invalid pinhole description: {exc}") from exc


def pinhole_to_dict(model):
    """Inverse of :func:`pinhole_from_dict`.

    Models not built from physical optics are expressed with a unit horizontal
    aperture, which reproduces fx/fy only to rounding.
    """
    if model.optics is not None:
        focal, ap_h, ap_v = model.optics
    else:
        focal, ap_h = model.fx / model.width_px, 1.0
        ap_v = focal * model.height_px / model.fy
    return {"width_px": model.width_px, "height_px": model.height_px,
            "focal_length_m": focal, "aperture_h_m": ap_h, "aperture_v_m": ap_v,
            "rotation": model.pose.rotation.reshape(-1).tolist(),
            "translation_m": model.pose.translation.tolist()}


def load_pinhole_json(path):
    try:
        doc = json.loads(Path(path).read_text())
    except json.JSONDecodeError as exc:
        raise FormatError(f"{path}: {exc}") from exc
    return pinhole_from_dict(doc)
