"""Multi-view dataset generation, object-level splits, masking ablation and baselines.

World frame for datasets is z-up with the background plane at z = 0; objects
sit on a turntable at the origin and each viewpoint rotates them about z in
60 degree steps.
"""
from __future__ import annotations

import json
import logging
import math
import random
import shutil
from dataclasses import dataclass, field
from pathlib import Path

import numpy as np

from .depthio import (DepthMap, Normalization, atomic_write_bytes, read_depth, read_pgm,
                      write_depth, write_pgm)
from .errors import InvalidArgument
from .geometry import (Plane, RigidTransform, look_at, pinhole_from_dict, pinhole_to_dict,
                       rotation_z, standard_rig)
from .patterns import PatternSchedule
from .reconstruct import reconstruct_pipeline
from .render import RenderConfig, fringe_filename, frames_to_u16, render_sequence
from .scene import (Box, Cylinder, InfinitePlane, Material, Primitive, Scene, Sphere,
                    TriangleMesh, icosphere, load_mesh)

log = logging.getLogger(__name__)

SCHEMA_VERSION = 1
N_VIEWPOINTS = 6
VIEW_STEP_DEG = 60.0
STAND_OFF_M = 1.8
ELEVATION_DEG = 30.0
TURNTABLE_TARGET = (0.0, 0.0, 0.08)


# --- poses and rig ----------------------------------------------------------

def viewpoint_poses(base_pose, n=N_VIEWPOINTS, step_deg=VIEW_STEP_DEG):
    """``rotation_z(i * step) ∘ base`` for i = 0..n-1."""
    return [RigidTransform(rotation_z(i * step_deg)).compose(base_pose) for i in range(n)]


def turntable_rig(width_px=960, height_px=960, stand_off_m=STAND_OFF_M, elevation_deg=ELEVATION_DEG):
    """Camera looking down at the turntable center from ``stand_off_m`` away."""
    e = math.radians(elevation_deg)
    target = np.array(TURNTABLE_TARGET)
    eye = target + stand_off_m * np.array([0.0, -math.cos(e), math.sin(e)])
    return standard_rig(width_px, height_px, look_at(eye, target, (0.0, 0.0, 1.0)), stand_off_m)


def ground_plane(material=None):
    return Primitive(InfinitePlane(), RigidTransform(), material or Material(), is_background=True)


GROUND = Plane((0.0, 0.0, 1.0), 0.0)


# --- procedural objects -----------------------------------------------------

@dataclass(frozen=True)
class ObjectSpec:
    """Object made of primitives posed in the object frame; ``base_pose`` places it in the world."""

    object_id: str
    parts: tuple
    base_pose: RigidTransform = field(default_factory=RigidTransform)

    def scene(self, view_pose=None):
        pose = view_pose or self.base_pose
        prims = [Primitive(p.shape, pose.compose(p.pose), p.material, False) for p in self.parts]
        return Scene([ground_plane()] + prims)


def superellipsoid(radii, e1, e2, n_lat=24, n_lon=48):
    """Triangulated superellipsoid; exponents < 1 give boxy shapes, > 1 pinched ones."""
    def spow(x, p):
        return np.sign(x) * np.abs(x) ** p

    eta = np.linspace(-np.pi / 2, np.pi / 2, n_lat + 1)
    omega = np.linspace(-np.pi, np.pi, n_lon + 1)
    E, W = np.meshgrid(eta, omega, indexing="ij")
    x = radii[0] * spow(np.cos(E), e1) * spow(np.cos(W), e2)
    y = radii[1] * spow(np.cos(E), e1) * spow(np.sin(W), e2)
    z = radii[2] * spow(np.sin(E), e1)
    P = np.stack([x, y, z], axis=-1)
    tris = []
    for i in range(n_lat):
        for j in range(n_lon):
            a, b, c, d = P[i, j], P[i, j + 1], P[i + 1, j + 1], P[i + 1, j]
            tris.append((a, b, c))
            tris.append((a, c, d))
    return np.array(tris)


OBJECT_KINDS = ("sphere", "box", "cylinder", "superellipsoid", "icosphere", "stack")


def procedural_object(object_id, rng, kind=None, albedo=None):
    """Random object sized for roughly 50-120 mm depth extent, resting on z = 0."""
    kind = kind or OBJECT_KINDS[rng.integers(len(OBJECT_KINDS))]
    mat = Material(albedo=float(albedo if albedo is not None else rng.uniform(0.6, 0.9)))
    off = rng.uniform(-0.03, 0.03, size=2)
    yaw = float(rng.uniform(0.0, 360.0))
    parts = []
    if kind == "sphere":
        r = rng.uniform(0.04, 0.08)
        parts.append(Primitive(Sphere(r), RigidTransform(np.eye(3), (0, 0, r)), mat))
    elif kind == "box":
        h = rng.uniform(0.03, 0.07, size=3)
        parts.append(Primitive(Box(tuple(h)), RigidTransform(np.eye(3), (0, 0, h[2])), mat))
    elif kind == "cylinder":
        r, hh = rng.uniform(0.03, 0.06), rng.uniform(0.04, 0.09)
        parts.append(Primitive(Cylinder(r, hh), RigidTransform(np.eye(3), (0, 0, hh)), mat))
    elif kind == "superellipsoid":
        radii = rng.uniform(0.04, 0.08, size=3)
        tris = superellipsoid(radii, rng.uniform(0.3, 1.5), rng.uniform(0.3, 1.5))
        parts.append(Primitive(TriangleMesh(tris), RigidTransform(np.eye(3), (0, 0, radii[2])), mat))
    elif kind == "icosphere":
        r = rng.uniform(0.04, 0.08)
        parts.append(Primitive(TriangleMesh(icosphere(r, 2)), RigidTransform(np.eye(3), (0, 0, r)), mat))
    elif kind == "stack":
        h = rng.uniform(0.03, 0.06, size=3)
        r = rng.uniform(0.02, min(h[0], h[1]))
        parts.append(Primitive(Box(tuple(h)), RigidTransform(np.eye(3), (0, 0, h[2])), mat))
        parts.append(Primitive(Sphere(r), RigidTransform(np.eye(3), (0, 0, 2 * h[2] + r)), mat))
    else:
        raise InvalidArgument(f"unknown object kind {kind!r}")
    base = RigidTransform(rotation_z(yaw), (off[0], off[1], 0.0))
    return ObjectSpec(object_id, tuple(parts), base)


def procedural_objects(n, seed=0):
    rng = np.random.default_rng(seed)
    return [procedural_object(f"obj{i:03d}", rng, OBJECT_KINDS[i % len(OBJECT_KINDS)]) for i in range(n)]


def mesh_object(object_id, path, albedo=0.8):
    """Object from a TRI mesh file, lifted so its lowest vertex rests on the ground."""
    tris = load_mesh(path)
    lift = -float(tris[..., 2].min())
    return ObjectSpec(object_id, (Primitive(TriangleMesh(tris, str(path)),
                                            RigidTransform(np.eye(3), (0, 0, lift)), Material(albedo)),))


def sphere_on_plane(radius=0.1):
    """Standard test object: a sphere resting on the background plane at the turntable center."""
    mat = Material()
    return ObjectSpec("sphere", (Primitive(Sphere(radius), RigidTransform(np.eye(3), (0, 0, radius)), mat),))


def frontal_sphere_scene(radius=0.1, center_m=1.85, background_m=1.95):
    """Standard test scene in the camera frame: sphere in front of a fronto-parallel plane."""
    bg = Primitive(InfinitePlane(), RigidTransform(np.eye(3), (0, 0, background_m)), Material(), True)
    sph = Primitive(Sphere(radius), RigidTransform(np.eye(3), (0, 0, center_m)), Material())
    return Scene([bg, sph])


def frontal_background_plane(background_m=1.95):
    return Plane((0.0, 0.0, 1.0), background_m)


# --- splits -----------------------------------------------------------------

@dataclass(frozen=True)
class SplitPolicy:
    train: float = 0.8
    val: float = 0.1
    test: float = 0.1
    seed: int = 0

    def __post_init__(self):
        if min(self.train, self.val, self.test) < 0 or abs(self.train + self.val + self.test - 1) > 1e-9:
            raise InvalidArgument("split fractions must be non-negative and sum to 1")


def split_objects(object_ids, policy=SplitPolicy()):
    """Seeded Fisher-Yates shuffle of object ids; val/test get floor(fraction * n) (at least 1)."""
    ids = sorted(object_ids)
    n = len(ids)
    if n < 3:
        raise InvalidArgument(f"need at least 3 objects to split, got {n}")
    random.Random(policy.seed).shuffle(ids)
    n_val = max(1, math.floor(policy.val * n)) if policy.val > 0 else 0
    n_test = max(1, math.floor(policy.test * n)) if policy.test > 0 else 0
    n_train = n - n_val - n_test
    out = {i: "train" for i in ids[:n_train]}
    out.update({i: "val" for i in ids[n_train:n_train + n_val]})
    out.update({i: "test" for i in ids[n_train + n_val:]})
    return out


# --- generation -------------------------------------------------------------

def gt_filename(view):
    return f"view{view}_gt.fppd"


def calib_dict(camera, projector, schedule):
    return {"camera": pinhole_to_dict(camera), "projector": pinhole_to_dict(projector),
            "schedule": schedule.to_dict(),
            "background_plane": {"normal": GROUND.normal.tolist(), "offset_m": GROUND.offset}}


def load_calib(path):
    """Camera, projector, schedule and optional background plane from a calibration JSON."""
    doc = json.loads(Path(path).read_text())
    camera = pinhole_from_dict(doc["camera"])
    projector = pinhole_from_dict(doc["projector"])
    schedule = PatternSchedule.from_dict(doc["schedule"]) if "schedule" in doc else None
    plane = None
    if doc.get("background_plane"):
        bp = doc["background_plane"]
        plane = Plane(bp["normal"], bp["offset_m"])
    return camera, projector, schedule, plane


def _dumps(doc):
    return (json.dumps(doc, indent=2, sort_keys=True) + "\n").encode()


def build_dataset(objects, camera, projector, schedule, out_dir, split_policy=SplitPolicy(),
                  config=None, threads=1):
    """Render every object x viewpoint, write frames, GT depth, calibration and manifest.

    Returns the manifest dict.  On failure no manifest is left behind.
    """
    objects = list(objects)
    if len(objects) < 3:
        raise InvalidArgument(f"need at least 3 objects, got {len(objects)}")
    ids = [o.object_id for o in objects]
    if len(set(ids)) != len(ids):
        raise InvalidArgument("object ids must be unique")
    out_dir = Path(out_dir)
    manifest_path = out_dir / "manifest.json"
    config = config or RenderConfig()
    splits = split_objects(ids, split_policy)
    entries = []
    try:
        out_dir.mkdir(parents=True, exist_ok=True)
        if manifest_path.exists():
            manifest_path.unlink()
        atomic_write_bytes(out_dir / "calib.json", _dumps(calib_dict(camera, projector, schedule)))
        for obj in sorted(objects, key=lambda o: o.object_id):
            for view, pose in enumerate(viewpoint_poses(obj.base_pose)):
                seq, gt = render_sequence(obj.scene(pose), camera, projector, schedule, config, threads)
                rel_dir = Path(obj.object_id)
                files = []
                for pid, img in zip(seq.pattern_ids, frames_to_u16(seq)):
                    rel = rel_dir / fringe_filename(view, pid.index)
                    write_pgm(img, out_dir / rel)
                    files.append(rel.as_posix())
                gt_rel = (rel_dir / gt_filename(view)).as_posix()
                write_depth(gt, out_dir / gt_rel)
                entries.append({"object_id": obj.object_id, "viewpoint_index": view,
                                "fringe_files": files, "gt_depth": gt_rel,
                                "split": splits[obj.object_id]})
                log.info("rendered %s view %d", obj.object_id, view)
        manifest = make_manifest(entries, schedule)
        atomic_write_bytes(manifest_path, _dumps(manifest))
    except BaseException:
        if manifest_path.exists():
            manifest_path.unlink()
        raise
    return manifest


def make_manifest(entries, schedule, **extra):
    n_obj = len({e["object_id"] for e in entries})
    counts = {"objects": n_obj, "samples": len(entries),
              "fringe_files": sum(len(e["fringe_files"]) for e in entries),
              "gt_maps": len(entries), "patterns_per_view": schedule.n_patterns,
              "splits": {s: sorted({e["object_id"] for e in entries if e["split"] == s})
                         for s in ("train", "val", "test")}}
    return {"schema_version": SCHEMA_VERSION, "schedule": schedule.to_dict(), "counts": counts,
            "entries": entries, **extra}


def load_manifest(path):
    doc = json.loads(Path(path).read_text())
    if doc.get("schema_version") != SCHEMA_VERSION:
        raise InvalidArgument(f"{path}: unsupported manifest schema {doc.get('schema_version')!r}")
    return doc


def check_manifest(manifest):
    """Raise if the manifest breaks the per-object / per-view / split invariants."""
    n_pat = PatternSchedule.from_dict(manifest["schedule"]).n_patterns
    by_obj = {}
    for e in manifest["entries"]:
        by_obj.setdefault(e["object_id"], []).append(e)
        if len(e["fringe_files"]) != n_pat:
            raise InvalidArgument(f"{e['object_id']} view {e['viewpoint_index']}: wrong file count")
    for oid, es in by_obj.items():
        if sorted(e["viewpoint_index"] for e in es) != list(range(N_VIEWPOINTS)):
            raise InvalidArgument(f"{oid}: expected viewpoints 0..{N_VIEWPOINTS - 1}")
        if len({e["split"] for e in es}) != 1:
            raise InvalidArgument(f"{oid}: viewpoints straddle splits")


# --- background masking ablation -------------------------------------------

def mask_background(image, gt):
    """Zero every pixel whose ground-truth depth is 0; others unchanged."""
    img = np.asarray(image)
    g = gt.values if isinstance(gt, DepthMap) else np.asarray(gt)
    if img.shape != g.shape:
        raise InvalidArgument(f"image {img.shape} and depth {g.shape} differ in shape")
    return np.where(g == 0, np.zeros((), dtype=img.dtype), img)


def mask_background_dataset(manifest_path, out_dir):
    """Write a parallel dataset whose fringe frames have background pixels zeroed."""
    manifest_path = Path(manifest_path)
    src = manifest_path.parent
    out_dir = Path(out_dir)
    manifest = load_manifest(manifest_path)
    out_manifest = out_dir / "manifest.json"
    try:
        out_dir.mkdir(parents=True, exist_ok=True)
        if (src / "calib.json").exists():
            shutil.copyfile(src / "calib.json", out_dir / "calib.json")
        for e in manifest["entries"]:
            gt = read_depth(src / e["gt_depth"])
            (out_dir / e["gt_depth"]).parent.mkdir(parents=True, exist_ok=True)
            shutil.copyfile(src / e["gt_depth"], out_dir / e["gt_depth"])
            for rel in e["fringe_files"]:
                img, maxval = read_pgm(src / rel)
                write_pgm(mask_background(img, gt), out_dir / rel, maxval)
        doc = dict(manifest)
        doc["ablation"] = "background_masked"
        atomic_write_bytes(out_manifest, _dumps(doc))
    except BaseException:
        if out_manifest.exists():
            out_manifest.unlink()
        raise
    return doc


# --- baselines --------------------------------------------------------------

BASELINES = ("zero", "constant_mean", "plane_fit", "classical")


def predict_zero(gt):
    return DepthMap(np.zeros(gt.shape), Normalization.RAW)


def training_mean_depth(gt_maps):
    vals = np.concatenate([g.values[g.values > 0] for g in gt_maps])
    if vals.size == 0:
        raise InvalidArgument("training set has no object pixels")
    return float(vals.mean())


def predict_constant_mean(gt, mean_depth_mm):
    mask = gt.values > 0
    return DepthMap(np.where(mask, mean_depth_mm, 0.0), Normalization.RAW)


def predict_plane_fit(gt):
    """Least-squares plane depth = a*u + b*v + c over the object pixels."""
    vv, uu = np.nonzero(gt.values > 0)
    if vv.size < 3:
        raise InvalidArgument("plane fit needs at least 3 object pixels")
    A = np.column_stack([uu, vv, np.ones_like(uu)]).astype(np.float64)
    coef, *_ = np.linalg.lstsq(A, gt.values[vv, uu], rcond=None)
    out = np.zeros(gt.shape)
    out[vv, uu] = A @ coef
    return DepthMap(out, Normalization.RAW)


def fill_holes(depth, mask):
    """Fill zero pixels inside ``mask`` with the value of the nearest non-zero pixel."""
    from scipy.ndimage import distance_transform_edt

    d = depth.values
    have = d > 0
    holes = mask & ~have
    if not holes.any() or not have.any():
        return depth
    _, (iy, ix) = distance_transform_edt(~have, return_indices=True)
    out = d.copy()
    out[holes] = d[iy[holes], ix[holes]]
    return DepthMap(out, Normalization.RAW)


def predict_classical(seq, camera, projector, gt=None, background_plane=None):
    """Phase-shifting reconstruction; with ``gt``, unmeasured object pixels are filled by nearest neighbour."""
    depth = reconstruct_pipeline(seq, camera, projector, background_plane)
    if gt is not None:
        depth = fill_holes(depth, gt.values > 0)
    return depth


def baseline_predict(kind, gt, seq=None, camera=None, projector=None, train_mean_mm=None,
                     background_plane=None):
    if kind == "zero":
        return predict_zero(gt)
    if kind == "constant_mean":
        if train_mean_mm is None:
            raise InvalidArgument("constant_mean needs the training-set mean depth")
        return predict_constant_mean(gt, train_mean_mm)
    if kind == "plane_fit":
        return predict_plane_fit(gt)
    if kind == "classical":
        if seq is None or camera is None or projector is None:
            raise InvalidArgument("classical baseline needs the fringe sequence and calibration")
        return predict_classical(seq, camera, projector, gt, background_plane)
    raise InvalidArgument(f"unknown baseline {kind!r}; choose from {BASELINES}")
