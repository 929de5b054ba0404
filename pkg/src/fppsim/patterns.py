"""Fringe, Gray-code and reference patterns over projector pattern coordinates.

Patterns vary along the pattern column ``x_p`` only.  The phase-shifted
fringe is ``0.5 + 0.5 cos(2 pi x_p / period + 2 pi n / N)``, so the wrapped
phase recovered by demodulation is ``2 pi x_p / period`` folded to (-pi, pi].
Gray-code cells are one period wide, ``k = floor(x_p / period)``: code
transitions sit where the wrapped phase crosses zero, half a period away from
the phase wraps.
"""
from __future__ import annotations

import json
import math
from dataclasses import asdict, dataclass

import numpy as np

from .errors import FormatError, InvalidArgument
from .geometry import PROJECTOR_RESOLUTION


@dataclass(frozen=True)
class PatternSchedule:
    n_phase: int = 18
    period_px: float = 38.0
    n_gray_bits: int = 5
    include_inverse_gray: bool = True
    include_white_black: bool = True
    pattern_width: int = PROJECTOR_RESOLUTION[0]

    def __post_init__(self):
        if int(self.n_phase) != self.n_phase or self.n_phase < 3:
            raise InvalidArgument("n_phase must be an integer >= 3")
        if not (math.isfinite(self.period_px) and self.period_px > 2):
            raise InvalidArgument("period_px must be > 2")
        if self.n_gray_bits < self.min_gray_bits():
            raise InvalidArgument(
                f"{self.n_gray_bits} Gray bits cannot index {self.n_cells()} fringe periods")
        object.__setattr__(self, "n_phase", int(self.n_phase))
        object.__setattr__(self, "n_gray_bits", int(self.n_gray_bits))
        object.__setattr__(self, "period_px", float(self.period_px))

    def n_cells(self):
        return int(math.ceil(self.pattern_width / self.period_px))

    def min_gray_bits(self):
        return max(1, int(math.ceil(math.log2(self.pattern_width / self.period_px))))

    @property
    def n_patterns(self):
        return (self.n_phase + self.n_gray_bits * (1 + self.include_inverse_gray)
                + 2 * self.include_white_black)

    @classmethod
    def paper_parity(cls):
        """18 phase steps + 16 Gray + 16 inverse Gray + white + black = 52 frames."""
        return cls(n_phase=18, period_px=38.0, n_gray_bits=16,
                   include_inverse_gray=True, include_white_black=True)

    def to_dict(self):
        return asdict(self)

    @classmethod
    def from_dict(cls, doc):
        known = set(cls.__dataclass_fields__)
        unknown = set(doc) - known
        if unknown:
            raise FormatError(f"unknown schedule keys: {sorted(unknown)}")
        return cls(**doc)

    def to_json(self):
        return json.dumps(self.to_dict(), sort_keys=True)

    @classmethod
    def from_json(cls, text):
        return cls.from_dict(json.loads(text))


@dataclass(frozen=True)
class PatternId:
    kind: str  # "phase" | "gray" | "gray_inverse" | "white" | "black"
    param: int
    index: int

    @property
    def label(self):
        return self.kind if self.kind in ("white", "black") else f"{self.kind}({self.param})"


def schedule_patterns(schedule):
    """Ordered pattern list: phase steps, Gray bits, inverse Gray bits, white, black."""
    kinds = [("phase", n) for n in range(schedule.n_phase)]
    kinds += [("gray", b) for b in range(schedule.n_gray_bits)]
    if schedule.include_inverse_gray:
        kinds += [("gray_inverse", b) for b in range(schedule.n_gray_bits)]
    if schedule.include_white_black:
        kinds += [("white", 0), ("black", 0)]
    return [PatternId(k, p, i) for i, (k, p) in enumerate(kinds)]


def phase_shifts(n_phase):
    return 2.0 * np.pi * np.arange(n_phase) / n_phase


def fringe_value(x_p, n, schedule):
    if not 0 <= n < schedule.n_phase:
        raise InvalidArgument(f"phase step {n} outside [0, {schedule.n_phase})")
    x = np.asarray(x_p, dtype=np.float64)
    out = 0.5 + 0.5 * np.cos(2.0 * np.pi * x / schedule.period_px + 2.0 * np.pi * n / schedule.n_phase)
    return float(out) if out.ndim == 0 else out


def gray_encode(k):
    k = np.asarray(k, dtype=np.int64)
    return k ^ (k >> 1)


def gray_decode(g):
    g = np.array(g, dtype=np.int64)
    k = g.copy()
    shift = g >> 1
    while np.any(shift):
        k ^= shift
        shift >>= 1
    return k


def cell_index(x_p, schedule):
    """Gray-code cell (fringe period) index of pattern column ``x_p``."""
    x = np.asarray(x_p, dtype=np.float64)
    return np.maximum(np.floor(x / schedule.period_px), 0).astype(np.int64)


def gray_value(x_p, bit, schedule):
    """Bit ``bit`` (0 = most significant) of the Gray code of the cell containing ``x_p``."""
    if not 0 <= bit < schedule.n_gray_bits:
        raise InvalidArgument(f"Gray bit {bit} outside [0, {schedule.n_gray_bits})")
    g = gray_encode(cell_index(x_p, schedule))
    out = (g >> (schedule.n_gray_bits - 1 - bit)) & 1
    return int(out) if out.ndim == 0 else out


def pattern_values(pid, x_p, schedule):
    """Intensity of pattern ``pid`` at pattern columns ``x_p`` (unit interval)."""
    x = np.asarray(x_p, dtype=np.float64)
    if pid.kind == "phase":
        return fringe_value(x, pid.param, schedule) * np.ones_like(x)
    if pid.kind == "gray":
        return gray_value(x, pid.param, schedule).astype(np.float64)
    if pid.kind == "gray_inverse":
        return 1.0 - gray_value(x, pid.param, schedule)
    if pid.kind == "white":
        return np.ones_like(x)
    if pid.kind == "black":
        return np.zeros_like(x)
    raise InvalidArgument(f"unknown pattern kind {pid.kind!r}")


def pattern_image(pid, schedule, height):
    """Rasterize a pattern at the projector's pixel centers (width x height image)."""
    x = np.arange(schedule.pattern_width, dtype=np.float64)
    row = pattern_values(pid, x, schedule)
    return np.broadcast_to(row, (height, schedule.pattern_width)).copy()
