"""Depth maps, the three normalization strategies, visualization and file I/O.

Background pixels are exact zeros in every normalization.

FPPD file layout (little-endian)::

    b"FPPD"  u8 version=1  u32 width  u32 height  u8 tag  f64 dmin_mm  f64 dmax_mm
    float32[height * width]   row-major values

tag: 0 raw mm, 1 global meters, 2 individual unit, 3 phase (debug dumps).
"""
from __future__ import annotations

import enum
import os
import struct
import tempfile
from dataclasses import dataclass, field
from pathlib import Path

import numpy as np

from .errors import FormatError, InvalidArgument, InvalidState

MAGIC = b"FPPD"
VERSION = 1
_HEADER = struct.Struct("<4sBIIBdd")
MAX_DIM = 1 << 16
DEGENERATE_RANGE_MM = 1e-6


class Normalization(enum.IntEnum):
    RAW = 0
    GLOBAL = 1
    INDIVIDUAL = 2


PHASE_TAG = 3


@dataclass(frozen=True)
class DepthMap:
    """H x W depth grid plus its normalization state.

    ``dmin_mm``/``dmax_mm`` are only meaningful for individual normalization and
    may be ``None`` when a predictor did not supply them.
    """

    values: np.ndarray
    normalization: Normalization = Normalization.RAW
    dmin_mm: float | None = None
    dmax_mm: float | None = None
    # object pixels of an individual map; needed because the nearest object pixel maps to 0
    support: np.ndarray | None = field(default=None, compare=False, repr=False)

    def __post_init__(self):
        v = np.array(self.values, dtype=np.float64)
        if v.ndim != 2:
            raise InvalidArgument(f"depth map must be 2-D, got shape {v.shape}")
        v.setflags(write=False)
        object.__setattr__(self, "values", v)
        object.__setattr__(self, "normalization", Normalization(self.normalization))
        if (self.dmin_mm is None) != (self.dmax_mm is None):
            raise InvalidArgument("dmin_mm and dmax_mm must be given together")
        if self.dmin_mm is not None and self.dmin_mm > self.dmax_mm:
            raise InvalidArgument("dmin_mm must not exceed dmax_mm")
        if self.support is not None:
            m = np.array(self.support, dtype=bool)
            if m.shape != v.shape:
                raise InvalidArgument("support mask shape does not match values")
            m.setflags(write=False)
            object.__setattr__(self, "support", m)

    @property
    def height(self):
        return self.values.shape[0]

    @property
    def width(self):
        return self.values.shape[1]

    @property
    def shape(self):
        return self.values.shape

    @property
    def object_mask(self):
        return self.values > 0

    @property
    def has_params(self):
        return self.dmin_mm is not None


def _require(d, norm, op):
    if d.normalization != norm:
        raise InvalidState(f"{op} expects a {norm.name.lower()} depth map, got {d.normalization.name.lower()}")


def _exact_inverse(norm, raw, denorm, max_steps=3):
    """Nudge normalized values by a few ulps so that ``denorm(norm) == raw`` where reachable.

    Leaves values unchanged when no neighbour within ``max_steps`` ulps round-trips.
    """
    shape = np.shape(norm)
    norm = np.array(norm, dtype=np.float64).ravel()
    raw = np.asarray(raw, dtype=np.float64).ravel()
    bad = np.flatnonzero(denorm(norm) != raw)
    for step in range(1, max_steps + 1):
        if bad.size == 0:
            break
        for direction in (np.inf, -np.inf):
            if bad.size == 0:
                break
            cand = norm[bad]
            for _ in range(step):
                cand = np.nextafter(cand, direction)
            ok = denorm(cand) == raw[bad]
            norm[bad[ok]] = cand[ok]
            bad = bad[~ok]
    return norm.reshape(shape)


def normalize_global(d):
    """Millimeters -> meters."""
    _require(d, Normalization.RAW, "normalize_global")
    raw = d.values
    g = _exact_inverse(raw / 1000.0, raw, lambda x: x * 1000.0)
    return DepthMap(g, Normalization.GLOBAL)


def normalize_individual(d):
    """Map object depths to [0, 1] using this map's own (Dmin, Dmax); background stays 0."""
    _require(d, Normalization.RAW, "normalize_individual")
    raw = d.values
    obj = raw > 0
    if not obj.any():
        raise InvalidArgument("cannot normalize an all-background depth map")
    dmin = float(raw[obj].min())
    dmax = float(raw[obj].max())
    span = dmax - dmin
    out = np.zeros_like(raw)
    if span < DEGENERATE_RANGE_MM:
        out[obj] = 1.0
    else:
        r = raw[obj]
        n = _exact_inverse((r - dmin) / span, r, lambda x: x * span + dmin)
        out[obj] = np.clip(n, 0.0, 1.0)
    return DepthMap(out, Normalization.INDIVIDUAL, dmin, dmax, support=obj)


def denormalize(d, params=None, mask=None):
    """Back to raw millimeters.

    ``params`` = (dmin_mm, dmax_mm) overrides/supplies individual parameters.
    For individual maps a normalized 0 is ambiguous (background, or the
    nearest object pixel).  Pixels in ``mask`` (default: the map's own
    ``support``, else its non-zero pixels) are always treated as object.
    """
    if d.normalization == Normalization.RAW:
        return d
    if d.normalization == Normalization.GLOBAL:
        return DepthMap(d.values * 1000.0, Normalization.RAW)
    if params is None:
        if not d.has_params:
            raise InvalidState("individually normalized map has no (dmin, dmax) parameters")
        params = (d.dmin_mm, d.dmax_mm)
    dmin, dmax = float(params[0]), float(params[1])
    v = d.values
    obj = v != 0
    if mask is not None:
        obj = obj | np.asarray(mask, dtype=bool)
    elif d.support is not None:
        obj = obj | d.support
    out = np.where(obj, v * (dmax - dmin) + dmin, 0.0)
    return DepthMap(out, Normalization.RAW)


def to_viz_u16(d):
    """Min-max scale all values (zeros included) onto [0, 65535], rounding half up."""
    v = d.values if isinstance(d, DepthMap) else np.asarray(d, dtype=np.float64)
    lo, hi = float(v.min()), float(v.max())
    if hi <= lo:
        return np.zeros(v.shape, dtype=np.uint16)
    return np.floor((v - lo) / (hi - lo) * 65535.0 + 0.5).astype(np.uint16)


# --- FPPD I/O ---------------------------------------------------------------

def atomic_write_bytes(path, data):
    """Write via a temp file in the target directory, then rename."""
    path = Path(path)
    path.parent.mkdir(parents=True, exist_ok=True)
    fd, tmp = tempfile.mkstemp(dir=path.parent, prefix=f".{path.name}.", suffix=".tmp")
    try:
        with os.fdopen(fd, "wb") as fh:
            fh.write(data)
        os.replace(tmp, path)
    except BaseException:
        if os.path.exists(tmp):
            os.unlink(tmp)
        raise


def encode_fppd(values, tag, dmin=None, dmax=None):
    v = np.asarray(values)
    h, w = v.shape
    header = _HEADER.pack(MAGIC, VERSION, w, h, int(tag),
                          0.0 if dmin is None else float(dmin), 0.0 if dmax is None else float(dmax))
    return header + np.ascontiguousarray(v, dtype="<f4").tobytes()


def decode_fppd(data, source="<bytes>"):
    if len(data) < _HEADER.size:
        raise FormatError(f"{source}: truncated header ({len(data)} bytes)")
    magic, version, w, h, tag, dmin, dmax = _HEADER.unpack_from(data)
    if magic != MAGIC:
        raise FormatError(f"{source}: bad magic {magic!r}")
    if version != VERSION:
        raise FormatError(f"{source}: unsupported version {version}")
    if not (0 < w <= MAX_DIM):
        raise FormatError(f"{source}: width {w} out of range")
    if not (0 < h <= MAX_DIM):
        raise FormatError(f"{source}: height {h} out of range")
    if tag > PHASE_TAG:
        raise FormatError(f"{source}: unknown normalization tag {tag}")
    need = _HEADER.size + 4 * w * h
    if len(data) < need:
        raise FormatError(f"{source}: truncated values (expected {need} bytes, got {len(data)})")
    if len(data) > need:
        raise FormatError(f"{source}: {len(data) - need} trailing bytes after values")
    values = np.frombuffer(data, dtype="<f4", count=w * h, offset=_HEADER.size).reshape(h, w)
    return values.astype(np.float64), tag, dmin, dmax


def depth_to_bytes(d):
    dmin, dmax = (d.dmin_mm, d.dmax_mm) if d.has_params else (None, None)
    return encode_fppd(d.values, int(d.normalization), dmin, dmax)


def write_depth(d, path):
    atomic_write_bytes(path, depth_to_bytes(d))


def read_depth(path):
    values, tag, dmin, dmax = decode_fppd(Path(path).read_bytes(), str(path))
    if tag == PHASE_TAG:
        raise FormatError(f"{path}: file holds a phase map, not a depth map")
    norm = Normalization(tag)
    if norm == Normalization.INDIVIDUAL and not (dmin == 0.0 and dmax == 0.0):
        return DepthMap(values, norm, dmin, dmax)
    return DepthMap(values, norm)


def write_phase(values, path):
    atomic_write_bytes(path, encode_fppd(values, PHASE_TAG))


def read_phase(path):
    values, tag, _, _ = decode_fppd(Path(path).read_bytes(), str(path))
    if tag != PHASE_TAG:
        raise FormatError(f"{path}: not a phase dump (tag {tag})")
    return values


# --- PGM (P5) ---------------------------------------------------------------

def pgm_bytes(image, maxval=65535):
    img = np.asarray(image)
    if img.ndim != 2:
        raise InvalidArgument("PGM images must be 2-D")
    h, w = img.shape
    dtype = ">u2" if maxval > 255 else "u1"
    header = f"P5\n{w} {h}\n{maxval}\n".encode("ascii")
    return header + np.ascontiguousarray(img, dtype=dtype).tobytes()


def write_pgm(image, path, maxval=65535):
    atomic_write_bytes(path, pgm_bytes(image, maxval))


def _pgm_tokens(data, count):
    tokens, pos = [], 2
    while len(tokens) < count:
        while pos < len(data) and data[pos:pos + 1].isspace():
            pos += 1
        if data[pos:pos + 1] == b"#":
            while pos < len(data) and data[pos:pos + 1] not in (b"\n", b"\r"):
                pos += 1
            continue
        start = pos
        while pos < len(data) and not data[pos:pos + 1].isspace() and data[pos:pos + 1] != b"#":
            pos += 1
        if start == pos:
            raise FormatError("truncated PGM header")
        tokens.append(data[start:pos])
    return tokens, pos + 1


def read_pgm(path):
    """Read a binary (P5) PGM; returns ``(image, maxval)`` with integer samples."""
    data = Path(path).read_bytes()
    if data[:2] != b"P5":
        raise FormatError(f"{path}: not a binary PGM (magic {data[:2]!r})")
    try:
        (w, h, maxval), offset = _pgm_tokens(data, 3)
        w, h, maxval = int(w), int(h), int(maxval)
    except (ValueError, FormatError) as exc:
        raise FormatError(f"{path}: bad PGM header: {exc}") from None
    if not (0 < maxval < 65536):
        raise FormatError(f"{path}: maxval {maxval} out of range")
    dtype = ">u2" if maxval > 255 else "u1"
    need = w * h * np.dtype(dtype).itemsize
    if len(data) - offset < need:
        raise FormatError(f"{path}: truncated PGM raster")
    img = np.frombuffer(data, dtype=dtype, count=w * h, offset=offset).reshape(h, w)
    return img.astype(np.uint16 if maxval > 255 else np.uint8), maxval
