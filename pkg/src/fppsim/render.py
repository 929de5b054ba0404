"""Simulated fringe capture and ground-truth depth.

Every camera pixel casts a ray into the scene; the hit point is forward
projected into the projector to find its pattern column, and each scheduled
pattern is evaluated there.  Shading is single-bounce Lambertian:

    I_n = clamp(ambient + albedo * max(0, n.l) * pattern_n(x_p), 0, 1)
"""
from __future__ import annotations

import logging
import os
from concurrent.futures import ThreadPoolExecutor
from dataclasses import dataclass
from pathlib import Path
from typing import NamedTuple

import numpy as np

from .depthio import DepthMap, Normalization, read_pgm, write_pgm
from .errors import ConfigurationError, InvalidArgument
from .geometry import project_points, to_model_frame, unproject
from .patterns import pattern_values, schedule_patterns

log = logging.getLogger(__name__)

DEPTH_RANGE_MM = (1500.0, 2100.0)


@dataclass(frozen=True)
class RenderConfig:
    ambient: float = 0.05
    quantize_bits: int = 16
    samples_per_pixel: int = 1
    shadows: bool = False

    def __post_init__(self):
        if not 0.0 <= self.ambient <= 1.0:
            raise InvalidArgument("ambient must lie in [0, 1]")
        if self.quantize_bits not in (0, 8, 16):
            raise InvalidArgument("quantize_bits must be 0, 8 or 16")
        if int(self.samples_per_pixel) < 1:
            raise InvalidArgument("samples_per_pixel must be >= 1")


@dataclass(frozen=True)
class FringeSequence:
    """Stack of captured frames, shape (n_patterns, height, width), values in [0, 1]."""

    frames: np.ndarray
    schedule: object
    pattern_ids: tuple

    def __post_init__(self):
        f = np.asarray(self.frames, dtype=np.float64)
        if f.ndim != 3 or len(f) != self.schedule.n_patterns:
            raise InvalidArgument(
                f"expected {self.schedule.n_patterns} frames, got array of shape {f.shape}")
        object.__setattr__(self, "frames", f)
        object.__setattr__(self, "pattern_ids", tuple(self.pattern_ids))

    @property
    def height(self):
        return self.frames.shape[1]

    @property
    def width(self):
        return self.frames.shape[2]

    def frames_of(self, kind):
        idx = [p.index for p in self.pattern_ids if p.kind == kind]
        return self.frames[idx]

    def frame(self, kind, param=0):
        for p in self.pattern_ids:
            if p.kind == kind and p.param == param:
                return self.frames[p.index]
        raise KeyError(f"no {kind}({param}) frame in sequence")


class CameraTrace(NamedTuple):
    """Per-pixel geometry seen through the camera (all arrays H x W)."""

    x_p: np.ndarray        # projector pattern column, NaN where not illuminated
    y_p: np.ndarray
    shading: np.ndarray    # albedo * max(0, n.l); 0 where unlit
    ambient: np.ndarray
    depth_mm: np.ndarray   # camera-frame Z of the hit (NaN on misses)
    is_background: np.ndarray
    hit: np.ndarray


def _sample_offsets(spp):
    """Deterministic low-discrepancy sub-pixel offsets in [-0.5, 0.5)."""
    if spp == 1:
        return np.zeros((1, 2))
    g = 1.32471795724474602596  # plastic number (R2 sequence)
    a = np.array([1.0 / g, 1.0 / g ** 2])
    i = np.arange(spp)[:, None]
    return np.mod(0.5 + i * a, 1.0) - 0.5


def trace_pixels(scene, camera, projector, u, v, ambient, shadows=False):
    """Trace camera rays through pixel coordinates ``u``, ``v`` (flat arrays)."""
    dirs = unproject(camera, u, v)
    origins = np.broadcast_to(camera.center, dirs.shape)
    hits = scene.intersect_rays(origins, dirs)
    hit = hits.hit
    prim = np.where(hit, hits.primitive, 0)
    x_p, y_p, zp = project_points(projector, np.where(hit[:, None], hits.points, 0.0))
    lit = hit & (zp > 0) & (x_p >= 0) & (x_p < projector.width_px) & (y_p >= 0) & (y_p < projector.height_px)
    to_proj = projector.center - np.where(hit[:, None], hits.points, 0.0)
    dist = np.linalg.norm(to_proj, axis=1)
    l_hat = to_proj / np.where(dist > 0, dist, 1.0)[:, None]
    cos = np.maximum(0.0, np.einsum("ij,ij->i", hits.normals, l_hat))
    if shadows and lit.any():
        idx = np.flatnonzero(lit)
        start = hits.points[idx] + 1e-6 * hits.normals[idx]
        occ = scene.intersect_rays(start, l_hat[idx])
        blocked = occ.hit & (occ.t < dist[idx] - 1e-6)
        lit[idx[blocked]] = False
    shading = np.where(lit, scene.albedo[prim] * cos, 0.0)
    amb = np.where(hit, scene.ambient[prim], ambient)
    cam_z = to_model_frame(camera, np.where(hit[:, None], hits.points, 0.0))[:, 2]
    return CameraTrace(np.where(lit, x_p, np.nan), np.where(lit, y_p, np.nan), shading, amb,
                       np.where(hit, cam_z * 1000.0, np.nan),
                       hit & scene.background_flags[prim], hit)


def trace_camera(scene, camera, projector, ambient=0.05, shadows=False, rows=None, offset=(0.0, 0.0)):
    rows = np.arange(camera.height_px) if rows is None else np.asarray(rows)
    vv, uu = np.meshgrid(rows.astype(np.float64), np.arange(camera.width_px, dtype=np.float64),
                         indexing="ij")
    tr = trace_pixels(scene, camera, projector, uu.ravel() + offset[0], vv.ravel() + offset[1],
                      ambient, shadows)
    shape = vv.shape
    return CameraTrace(*(a.reshape(shape) for a in tr))


def shade(trace, pattern_ids, schedule):
    """Unclamped, unquantized intensities for every pattern: (n_patterns, *shape)."""
    x = np.where(np.isnan(trace.x_p), 0.0, trace.x_p)
    out = np.empty((len(pattern_ids),) + trace.shading.shape)
    for pid in pattern_ids:
        out[pid.index] = trace.ambient + trace.shading * pattern_values(pid, x, schedule)
    return out


def quantize(frames, bits):
    if bits == 0:
        return frames
    levels = float(2 ** bits - 1)
    return np.floor(frames * levels + 0.5) / levels


def _render_rows(scene, camera, projector, schedule, config, pattern_ids, rows):
    offsets = _sample_offsets(int(config.samples_per_pixel))
    center = trace_camera(scene, camera, projector, config.ambient, config.shadows, rows)
    if len(offsets) == 1:
        acc = np.clip(shade(center, pattern_ids, schedule), 0.0, 1.0)
    else:
        acc = np.zeros((len(pattern_ids), len(rows), camera.width_px))
        for off in offsets:
            tr = trace_camera(scene, camera, projector, config.ambient, config.shadows, rows, off)
            acc += np.clip(shade(tr, pattern_ids, schedule), 0.0, 1.0)
        acc /= len(offsets)
    frames = quantize(acc, config.quantize_bits)
    obj = center.hit & ~center.is_background
    depth = np.where(obj, center.depth_mm, 0.0)
    return frames, depth


def render_sequence(scene, camera, projector, schedule, config=None, threads=1, block_rows=64):
    """Render the full pattern schedule; returns ``(FringeSequence, ground-truth DepthMap)``.

    Rows are split into blocks that may be rendered on ``threads`` workers; the
    result does not depend on the partitioning.
    """
    config = config or RenderConfig()
    if sum(p.is_background for p in scene.primitives) != 1:
        raise ConfigurationError("scene must contain exactly one background primitive")
    pattern_ids = schedule_patterns(schedule)
    h, w = camera.height_px, camera.width_px
    frames = np.empty((len(pattern_ids), h, w))
    depth = np.empty((h, w))
    blocks = [np.arange(a, min(a + block_rows, h)) for a in range(0, h, block_rows)]

    def job(rows):
        f, d = _render_rows(scene, camera, projector, schedule, config, pattern_ids, rows)
        frames[:, rows] = f
        depth[rows] = d

    threads = max(1, int(threads or os.cpu_count() or 1))
    if threads == 1:
        for rows in blocks:
            job(rows)
    else:
        with ThreadPoolExecutor(threads) as pool:
            list(pool.map(job, blocks))
    return FringeSequence(frames, schedule, pattern_ids), DepthMap(depth, Normalization.RAW)


class DepthRange(NamedTuple):
    dmin_mm: float
    dmax_mm: float
    out_of_range: bool


def depth_range_check(gt, limits=DEPTH_RANGE_MM):
    v = gt.values if isinstance(gt, DepthMap) else np.asarray(gt)
    obj = v[v > 0]
    if obj.size == 0:
        raise InvalidArgument("depth map has no object pixels")
    lo, hi = float(obj.min()), float(obj.max())
    out = lo < limits[0] or hi > limits[1]
    if out:
        log.warning("object depth %.1f-%.1f mm outside %.0f-%.0f mm", lo, hi, *limits)
    return DepthRange(lo, hi, out)


def frames_to_u16(seq):
    return np.floor(np.clip(seq.frames, 0.0, 1.0) * 65535.0 + 0.5).astype(np.uint16)


def fringe_filename(view, index):
    return f"view{view}_pat{index:03d}.pgm"


def write_sequence(seq, out_dir, view=0):
    """Write every frame as a 16-bit P5 PGM; returns the written paths in schedule order."""
    out_dir = Path(out_dir)
    paths = []
    for pid, img in zip(seq.pattern_ids, frames_to_u16(seq)):
        path = out_dir / fringe_filename(view, pid.index)
        write_pgm(img, path)
        paths.append(path)
    return paths


def read_sequence(frame_dir, schedule, view=0):
    pattern_ids = schedule_patterns(schedule)
    frames = []
    for pid in pattern_ids:
        img, maxval = read_pgm(Path(frame_dir) / fringe_filename(view, pid.index))
        frames.append(img.astype(np.float64) / maxval)
    return FringeSequence(np.stack(frames), schedule, pattern_ids)
