"""Classical phase-shifting reconstruction: demodulate, decode Gray code, unwrap, triangulate."""
from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from .depthio import DepthMap, Normalization
from .errors import InvalidArgument
from .geometry import column_planes, to_model_frame, unproject
from .patterns import gray_decode, phase_shifts

MODULATION_THRESHOLD = 0.02
GRAY_MARGIN = 0.02
BACKGROUND_BAND_MM = 2.0


@dataclass(frozen=True)
class PhaseMap:
    wrapped: np.ndarray      # (-pi, pi]
    modulation: np.ndarray   # I''
    offset: np.ndarray       # I'
    valid: np.ndarray


@dataclass(frozen=True)
class GrayDecode:
    k: np.ndarray            # decoded fringe-period (cell) index
    valid: np.ndarray
    low_confidence: np.ndarray


@dataclass(frozen=True)
class AbsolutePhaseMap:
    phi_abs: np.ndarray      # wrapped + 2 pi * k on valid pixels, 0 elsewhere
    k: np.ndarray
    valid: np.ndarray


def _wrap(phi):
    """Fold into (-pi, pi]."""
    out = np.mod(phi + np.pi, 2 * np.pi) - np.pi
    return np.where(out == -np.pi, np.pi, out)


def demodulate_frames(frames, threshold=MODULATION_THRESHOLD):
    """N-step demodulation of frames I_n = I' + I'' cos(phi + 2 pi n / N), stacked on axis 0."""
    frames = np.asarray(frames, dtype=np.float64)
    n = len(frames)
    if n < 3:
        raise InvalidArgument(f"need at least 3 phase-shifted frames, got {n}")
    delta = phase_shifts(n)
    s = np.tensordot(np.sin(delta), frames, axes=1)
    c = np.tensordot(np.cos(delta), frames, axes=1)
    wrapped = _wrap(np.arctan2(-s, c))
    modulation = 2.0 / n * np.hypot(s, c)
    offset = frames.mean(axis=0)
    return PhaseMap(wrapped, modulation, offset, modulation >= threshold)


def demodulate(seq, threshold=MODULATION_THRESHOLD):
    return demodulate_frames(seq.frames_of("phase"), threshold)


def decode_gray(seq, phase_map, margin=GRAY_MARGIN):
    """Per-pixel Gray-code cell index.

    Bits are thresholded against the inverse frame when the schedule has one,
    otherwise against the demodulated offset I'.
    """
    sched = seq.schedule
    if sched.n_gray_bits == 0 or not any(p.kind == "gray" for p in seq.pattern_ids):
        raise InvalidArgument("sequence has no Gray-code frames")
    gray = seq.frames_of("gray")
    if sched.include_inverse_gray:
        ref = 0.5 * (gray + seq.frames_of("gray_inverse"))
        low = np.zeros(phase_map.valid.shape, dtype=bool)
    else:
        ref = np.broadcast_to(phase_map.offset, gray.shape)
        low = np.any(np.abs(gray - ref) < margin, axis=0)
    bits = (gray > ref).astype(np.int64)
    g = np.zeros(bits.shape[1:], dtype=np.int64)
    for b in bits:
        g = (g << 1) | b
    k = gray_decode(g)
    valid = phase_map.valid & (k < sched.n_cells())
    return GrayDecode(k, valid, low)


def unwrap(phase_map, k_gc, period_px):
    """Absolute phase from wrapped phase and Gray cell index.

    A pixel in cell ``k`` has pattern column in [k*T, (k+1)*T).  Candidate period
    counts ``m`` give columns ``x(m) = (phi / 2pi + m) * T``; the candidate
    nearest the cell center ``(k + 1/2) * T`` wins, which absorbs phase noise at
    the wrap (the wrap sits at the cell center).
    """
    k = k_gc.k if isinstance(k_gc, GrayDecode) else np.asarray(k_gc)
    kvalid = k_gc.valid if isinstance(k_gc, GrayDecode) else np.ones(k.shape, dtype=bool)
    if k.shape != phase_map.wrapped.shape:
        raise InvalidArgument(f"Gray index shape {k.shape} != phase shape {phase_map.wrapped.shape}")
    phi = phase_map.wrapped
    valid = phase_map.valid & kvalid
    frac = phi / (2.0 * np.pi)
    center = k + 0.5
    best = np.full(k.shape, np.inf)
    m_best = np.zeros(k.shape, dtype=np.int64)
    for dm in (0, 1, -1, 2):
        m = k + dm
        dist = np.abs(frac + m - center)
        better = dist < best
        best = np.where(better, dist, best)
        m_best = np.where(better, m, m_best)
    m_best = np.where(valid, m_best, 0)
    phi_abs = np.where(valid, phi + 2.0 * np.pi * m_best, 0.0)
    return AbsolutePhaseMap(phi_abs, m_best, valid)


def phase_to_column(phi_abs, period_px):
    return phi_abs / (2.0 * np.pi) * period_px


def triangulate(abs_phase, camera, projector, period_px):
    """Intersect camera pixel rays with projector column planes; raw depth in mm."""
    h, w = abs_phase.phi_abs.shape
    if (h, w) != (camera.height_px, camera.width_px):
        raise InvalidArgument("phase map does not match camera resolution")
    x_p = phase_to_column(abs_phase.phi_abs, period_px)
    valid = abs_phase.valid & (x_p >= 0) & (x_p < projector.width_px)
    depth = np.zeros((h, w))
    if not valid.any():
        return DepthMap(depth, Normalization.RAW)
    vv, uu = np.nonzero(valid)
    dirs = unproject(camera, uu.astype(np.float64), vv.astype(np.float64))
    normals, offsets = column_planes(projector, x_p[valid])
    denom = np.einsum("ij,ij->i", normals, dirs)
    with np.errstate(divide="ignore", invalid="ignore"):
        t = (offsets - normals @ camera.center) / denom
    ok = (np.abs(denom) >= 1e-12) & (t > 0)
    pts = camera.center + t[:, None] * dirs
    z = to_model_frame(camera, pts)[:, 2]
    ok &= z > 0
    depth[vv[ok], uu[ok]] = z[ok] * 1000.0
    return DepthMap(depth, Normalization.RAW)


def triangulate_points(abs_phase, camera, projector, period_px):
    """World points for every valid pixel, NaN elsewhere (H x W x 3)."""
    d = triangulate(abs_phase, camera, projector, period_px).values
    vv, uu = np.mgrid[0:camera.height_px, 0:camera.width_px]
    dirs = unproject(camera, uu.astype(np.float64), vv.astype(np.float64))
    local_z = dirs @ camera.pose.rotation[:, 2]
    t = np.where(d > 0, d / 1000.0 / local_z, np.nan)
    return camera.center + t[..., None] * dirs


@dataclass(frozen=True)
class Reconstruction:
    depth: DepthMap
    phase: PhaseMap
    gray: GrayDecode
    absolute: AbsolutePhaseMap


def reconstruct(seq, camera, projector, background_plane=None, band_mm=BACKGROUND_BAND_MM,
                modulation_threshold=MODULATION_THRESHOLD):
    """Full pipeline with intermediate products."""
    phase = demodulate(seq, modulation_threshold)
    gray = decode_gray(seq, phase)
    absolute = unwrap(phase, gray, seq.schedule.period_px)
    depth = triangulate(absolute, camera, projector, seq.schedule.period_px)
    if background_plane is not None:
        depth = zero_background(depth, camera, background_plane, band_mm)
    return Reconstruction(depth, phase, gray, absolute)


def reconstruct_pipeline(seq, camera, projector, background_plane=None, band_mm=BACKGROUND_BAND_MM,
                         modulation_threshold=MODULATION_THRESHOLD):
    return reconstruct(seq, camera, projector, background_plane, band_mm,
                       modulation_threshold).depth


def zero_background(depth, camera, plane, band_mm=BACKGROUND_BAND_MM):
    """Zero pixels whose reconstructed point lies within ``band_mm`` of ``plane``."""
    d = depth.values
    vv, uu = np.nonzero(d > 0)
    if vv.size == 0:
        return depth
    dirs = unproject(camera, uu.astype(np.float64), vv.astype(np.float64))
    local_z = dirs @ camera.pose.rotation[:, 2]
    pts = camera.center + (d[vv, uu] / 1000.0 / local_z)[:, None] * dirs
    near = np.abs(plane.signed_distance(pts)) * 1000.0 <= band_mm
    out = d.copy()
    out[vv[near], uu[near]] = 0.0
    return DepthMap(out, Normalization.RAW)
