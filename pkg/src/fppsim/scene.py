"""Scene description (posed primitives + background plane) and ray intersection."""
from __future__ import annotations

import json
import math
from dataclasses import dataclass, field
from pathlib import Path

import numpy as np

from .bvh import MeshBVH, as_triangles
from .errors import ConfigurationError, FormatError, InvalidArgument
from .geometry import Plane, Ray, RigidTransform

T_MIN = 1e-9


@dataclass(frozen=True)
class Material:
    """Lambertian matte surface: diffuse albedo and ambient level."""

    albedo: float = 0.8
    ambient: float = 0.05

    def __post_init__(self):
        for name in ("albedo", "ambient"):
            value = float(getattr(self, name))
            if not 0.0 <= value <= 1.0:
                raise InvalidArgument(f"material {name} must lie in [0, 1], got {value}")
            object.__setattr__(self, name, value)


# --- shapes (canonical, in their local frame) -------------------------------

@dataclass(frozen=True)
class InfinitePlane:
    """The local z = 0 plane."""

    kind = "plane"

    def intersect_local(self, o, d):
        with np.errstate(divide="ignore", invalid="ignore"):
            t = -o[:, 2] / d[:, 2]
        t = np.where(np.isfinite(t) & (t > T_MIN), t, np.inf)
        n = np.zeros_like(o)
        n[:, 2] = 1.0
        return t, n, None

    def params(self):
        return {}


@dataclass(frozen=True)
class Sphere:
    radius: float
    kind = "sphere"

    def __post_init__(self):
        if not self.radius > 0:
            raise InvalidArgument("sphere radius must be positive")

    def intersect_local(self, o, d):
        b = np.einsum("ij,ij->i", o, d)
        c = np.einsum("ij,ij->i", o, o) - self.radius ** 2
        disc = b * b - c
        root = np.sqrt(np.maximum(disc, 0.0))
        t0 = -b - root
        t1 = -b + root
        t = np.where(t0 > T_MIN, t0, np.where(t1 > T_MIN, t1, np.inf))
        t = np.where(disc >= 0, t, np.inf)
        p = o + np.where(np.isfinite(t), t, 0.0)[:, None] * d
        return t, p / self.radius, None

    def params(self):
        return {"radius": self.radius}


@dataclass(frozen=True)
class Box:
    half_extents: tuple
    kind = "box"

    def __post_init__(self):
        h = tuple(float(x) for x in self.half_extents)
        if len(h) != 3 or min(h) <= 0:
            raise InvalidArgument("box half-extents must be three positive numbers")
        object.__setattr__(self, "half_extents", h)

    def intersect_local(self, o, d):
        h = np.array(self.half_extents)
        with np.errstate(divide="ignore", invalid="ignore"):
            inv = 1.0 / d
            t1 = (-h - o) * inv
            t2 = (h - o) * inv
        lo = np.fmin(t1, t2)
        hi = np.fmax(t1, t2)
        tn = np.fmax.reduce(lo, axis=1)
        tf = np.fmin.reduce(hi, axis=1)
        ax_n = np.argmax(np.nan_to_num(lo, nan=-np.inf), axis=1)
        ax_f = np.argmin(np.nan_to_num(hi, nan=np.inf), axis=1)
        valid = tf >= tn
        use_near = valid & (tn > T_MIN)
        use_far = valid & ~use_near & (tf > T_MIN)
        t = np.where(use_near, tn, np.where(use_far, tf, np.inf))
        axis = np.where(use_near, ax_n, ax_f)
        rows = np.arange(len(o))
        p = o + np.where(np.isfinite(t), t, 0.0)[:, None] * d
        n = np.zeros_like(o)
        n[rows, axis] = np.sign(p[rows, axis])
        n[rows, axis] = np.where(n[rows, axis] == 0, 1.0, n[rows, axis])
        return t, n, None

    def params(self):
        return {"half_extents": list(self.half_extents)}


@dataclass(frozen=True)
class Cylinder:
    """Capped cylinder along the local z axis."""

    radius: float
    half_height: float
    kind = "cylinder"

    def __post_init__(self):
        if not (self.radius > 0 and self.half_height > 0):
            raise InvalidArgument("cylinder radius and half-height must be positive")

    def intersect_local(self, o, d):
        r, hh = self.radius, self.half_height
        a = d[:, 0] ** 2 + d[:, 1] ** 2
        b = o[:, 0] * d[:, 0] + o[:, 1] * d[:, 1]
        c = o[:, 0] ** 2 + o[:, 1] ** 2 - r * r
        disc = b * b - a * c
        cand = []
        with np.errstate(divide="ignore", invalid="ignore"):
            root = np.sqrt(np.maximum(disc, 0.0))
            for sign in (-1.0, 1.0):
                ts = (-b + sign * root) / a
                z = o[:, 2] + ts * d[:, 2]
                ok = (disc >= 0) & (a > 1e-300) & (np.abs(z) <= hh) & (ts > T_MIN)
                cand.append(np.where(ok, ts, np.inf))
            for cap in (-hh, hh):
                tc = (cap - o[:, 2]) / d[:, 2]
                x = o[:, 0] + tc * d[:, 0]
                y = o[:, 1] + tc * d[:, 1]
                ok = np.isfinite(tc) & (tc > T_MIN) & (x * x + y * y <= r * r)
                cand.append(np.where(ok, tc, np.inf))
        cand = np.stack(cand, axis=1)
        which = np.argmin(cand, axis=1)
        t = cand[np.arange(len(o)), which]
        p = o + np.where(np.isfinite(t), t, 0.0)[:, None] * d
        n = np.zeros_like(o)
        side = which < 2
        n[side, 0] = p[side, 0] / r
        n[side, 1] = p[side, 1] / r
        n[which == 2, 2] = -1.0
        n[which == 3, 2] = 1.0
        return t, n, None

    def params(self):
        return {"radius": self.radius, "half_height": self.half_height}


class TriangleMesh:
    kind = "mesh"

    def __init__(self, triangles, path=None):
        self.accel = MeshBVH(triangles)
        self.path = None if path is None else str(path)

    @property
    def triangles(self):
        return self.accel.triangles

    def intersect_local(self, o, d):
        t, tri = self.accel.intersect(o, d, T_MIN)
        n = np.zeros_like(o)
        hit = tri >= 0
        if hit.any():
            n[hit] = self.accel.normals(tri[hit])
        return t, n, tri

    def params(self):
        if self.path is not None:
            return {"path": self.path}
        return {"triangles": self.triangles.reshape(-1, 9).tolist()}


@dataclass(frozen=True)
class Primitive:
    shape: object
    pose: RigidTransform = field(default_factory=RigidTransform)
    material: Material = field(default_factory=Material)
    is_background: bool = False


@dataclass
class HitBuffer:
    """Vectorized intersection results (one entry per ray)."""

    t: np.ndarray
    points: np.ndarray
    normals: np.ndarray
    primitive: np.ndarray
    triangle: np.ndarray

    @property
    def hit(self):
        return self.primitive >= 0


@dataclass(frozen=True)
class Hit:
    t: float
    point: np.ndarray
    normal: np.ndarray
    is_background: bool
    primitive: int
    triangle: int = -1


class Scene:
    """Immutable list of posed primitives with exactly one background primitive."""

    def __init__(self, primitives):
        self.primitives = tuple(primitives)
        n_bg = sum(p.is_background for p in self.primitives)
        if n_bg != 1:
            raise ConfigurationError(f"scene needs exactly one background primitive, found {n_bg}")
        self.background_flags = np.array([p.is_background for p in self.primitives])
        self.albedo = np.array([p.material.albedo for p in self.primitives])
        self.ambient = np.array([p.material.ambient for p in self.primitives])

    @property
    def background(self):
        return next(p for p in self.primitives if p.is_background)

    def background_plane(self):
        """World plane of the background primitive, or ``None`` if it is not a plane."""
        bg = self.background
        if not isinstance(bg.shape, InfinitePlane):
            return None
        normal = bg.pose.rotation[:, 2]
        return Plane(normal, float(normal @ bg.pose.translation))

    def intersect_rays(self, origins, dirs):
        origins = np.asarray(origins, dtype=np.float64).reshape(-1, 3)
        dirs = np.asarray(dirs, dtype=np.float64).reshape(-1, 3)
        n = len(origins)
        best_t = np.full(n, np.inf)
        best_n = np.zeros((n, 3))
        best_p = np.full(n, -1, dtype=np.int64)
        best_tri = np.full(n, -1, dtype=np.int64)
        for k, prim in enumerate(self.primitives):
            rot, trans = prim.pose.rotation, prim.pose.translation
            o_l = (origins - trans) @ rot
            d_l = dirs @ rot
            t, n_l, tri = prim.shape.intersect_local(o_l, d_l)
            closer = t < best_t
            if not closer.any():
                continue
            best_t[closer] = t[closer]
            best_n[closer] = n_l[closer] @ rot.T
            best_p[closer] = k
            best_tri[closer] = tri[closer] if tri is not None else -1
        hit = best_p >= 0
        points = np.where(hit[:, None], origins + np.where(hit, best_t, 0.0)[:, None] * dirs, np.nan)
        norm = np.linalg.norm(best_n, axis=1, keepdims=True)
        best_n = np.divide(best_n, norm, out=np.zeros_like(best_n), where=norm > 0)
        facing = np.einsum("ij,ij->i", best_n, dirs) > 0
        best_n[facing] *= -1.0
        return HitBuffer(best_t, points, best_n, best_p, best_tri)

    def intersect(self, ray):
        buf = self.intersect_rays(ray.origin[None], ray.direction[None])
        if not buf.hit[0]:
            return None
        k = int(buf.primitive[0])
        return Hit(float(buf.t[0]), buf.points[0], buf.normals[0],
                   bool(self.background_flags[k]), k, int(buf.triangle[0]))


def intersect(scene, ray):
    return scene.intersect(ray)


# --- meshes -----------------------------------------------------------------

def load_mesh(path):
    """Read an ASCII ``TRI`` mesh: header ``TRI``, triangle count, then 9 numbers per line."""
    lines = Path(path).read_text().splitlines()
    body = [(i + 1, ln.strip()) for i, ln in enumerate(lines)
            if ln.strip() and not ln.strip().startswith("#")]
    if not body:
        raise FormatError(f"{path}: empty mesh file")
    lineno, header = body[0]
    if header != "TRI":
        raise FormatError(f"{path}:{lineno}: expected header 'TRI', got {header!r}")
    if len(body) < 2:
        raise FormatError(f"{path}:{lineno}: missing triangle count")
    lineno, count_s = body[1]
    try:
        count = int(count_s)
    except ValueError:
        raise FormatError(f"{path}:{lineno}: invalid triangle count {count_s!r}") from None
    if count <= 0:
        raise FormatError(f"{path}:{lineno}: triangle count must be positive")
    rows = body[2:]
    if len(rows) != count:
        raise FormatError(f"{path}: header declares {count} triangles, found {len(rows)}")
    tris = np.empty((count, 9))
    for k, (lineno, text) in enumerate(rows):
        parts = text.split()
        if len(parts) != 9:
            raise FormatError(f"{path}:{lineno}: expected 9 numbers, got {len(parts)}")
        try:
            vals = [float(x) for x in parts]
        except ValueError:
            raise FormatError(f"{path}:{lineno}: non-numeric coordinate") from None
        if not all(math.isfinite(x) for x in vals):
            raise FormatError(f"{path}:{lineno}: non-finite coordinate")
        tris[k] = vals
    return tris.reshape(-1, 3, 3)


def save_mesh(triangles, path):
    tri = as_triangles(triangles).reshape(-1, 9)
    lines = ["TRI", str(len(tri))]
    lines += [" ".join(repr(float(x)) for x in row) for row in tri]
    Path(path).write_text("\n".join(lines) + "\n")


def icosphere(radius=1.0, subdivisions=3):
    """Triangulated sphere: 20 * 4**subdivisions outward-facing triangles."""
    phi = (1 + 5 ** 0.5) / 2
    verts = [(-1, phi, 0), (1, phi, 0), (-1, -phi, 0), (1, -phi, 0),
             (0, -1, phi), (0, 1, phi), (0, -1, -phi), (0, 1, -phi),
             (phi, 0, -1), (phi, 0, 1), (-phi, 0, -1), (-phi, 0, 1)]
    faces = [(0, 11, 5), (0, 5, 1), (0, 1, 7), (0, 7, 10), (0, 10, 11),
             (1, 5, 9), (5, 11, 4), (11, 10, 2), (10, 7, 6), (7, 1, 8),
             (3, 9, 4), (3, 4, 2), (3, 2, 6), (3, 6, 8), (3, 8, 9),
             (4, 9, 5), (2, 4, 11), (6, 2, 10), (8, 6, 7), (9, 8, 1)]
    verts = [np.array(v, float) / np.linalg.norm(v) for v in verts]
    for _ in range(subdivisions):
        cache = {}

        def midpoint(i, j):
            key = (min(i, j), max(i, j))
            if key not in cache:
                m = verts[i] + verts[j]
                verts.append(m / np.linalg.norm(m))
                cache[key] = len(verts) - 1
            return cache[key]

        new = []
        for a, b, c in faces:
            ab, bc, ca = midpoint(a, b), midpoint(b, c), midpoint(c, a)
            new += [(a, ab, ca), (b, bc, ab), (c, ca, bc), (ab, bc, ca)]
        faces = new
    v = np.array(verts) * radius
    return v[np.array(faces)]


# --- JSON -------------------------------------------------------------------

def _pose_from_dict(doc):
    if doc is None:
        return RigidTransform()
    return RigidTransform(np.array(doc.get("rotation", np.eye(3).reshape(-1)), float).reshape(3, 3),
                          doc.get("translation_m", [0.0, 0.0, 0.0]))


def primitive_from_dict(doc, base_dir="."):
    kind = doc.get("shape")
    try:
        if kind == "plane":
            shape = InfinitePlane()
        elif kind == "sphere":
            shape = Sphere(float(doc["radius"]))
        elif kind == "box":
            shape = Box(tuple(doc["half_extents"]))
        elif kind == "cylinder":
            shape = Cylinder(float(doc["radius"]), float(doc["half_height"]))
        elif kind == "mesh":
            if "path" in doc:
                path = Path(base_dir) / doc["path"]
                shape = TriangleMesh(load_mesh(path), doc["path"])
            else:
                shape = TriangleMesh(np.array(doc["triangles"], float))
        else:
            raise FormatError(f"unknown shape kind {kind!r}")
        mat = Material(**doc.get("material", {}))
        pose = _pose_from_dict(doc.get("pose"))
    except KeyError as exc:
        raise FormatError(f"{kind} primitive missing field {exc}") from None
    except (InvalidArgument, TypeError) as exc:
        raise FormatError(f"invalid {kind} primitive: {exc}") from None
    return Primitive(shape, pose, mat, bool(doc.get("is_background", False)))


def primitive_to_dict(prim):
    doc = {"shape": prim.shape.kind, **prim.shape.params()}
    doc["pose"] = prim.pose.to_dict()
    doc["material"] = {"albedo": prim.material.albedo, "ambient": prim.material.ambient}
    doc["is_background"] = prim.is_background
    return doc


def scene_from_json(path):
    path = Path(path)
    try:
        doc = json.loads(path.read_text())
    except json.JSONDecodeError as exc:
        raise FormatError(f"{path}: {exc}") from None
    items = doc["primitives"] if isinstance(doc, dict) else doc
    return Scene([primitive_from_dict(d, path.parent) for d in items])


def scene_to_dict(scene):
    return {"primitives": [primitive_to_dict(p) for p in scene.primitives]}
