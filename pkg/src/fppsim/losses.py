"""Pixel losses over prediction / ground-truth grids in any normalization space.

The object mask is ``gt > 0``.  Hybrid losses are convex combinations
``alpha * masked + (1 - alpha) * global``.  Only the RMSE family adds
``epsilon`` under the square root.
"""
from __future__ import annotations

import math
from dataclasses import dataclass

import numpy as np

from .errors import InvalidArgument

FAMILIES = ("rmse", "l1", "masked_rmse", "masked_l1", "hybrid_rmse", "hybrid_l1")
EPSILON = 1e-8


@dataclass(frozen=True)
class LossSpec:
    family: str
    alpha: float | None = None
    epsilon: float = EPSILON

    def __post_init__(self):
        if self.family not in FAMILIES:
            raise InvalidArgument(f"unknown loss family {self.family!r}; choose from {FAMILIES}")
        hybrid = self.family.startswith("hybrid")
        if hybrid and self.alpha is None:
            raise InvalidArgument(f"{self.family} requires alpha")
        if not hybrid and self.alpha is not None:
            raise InvalidArgument(f"{self.family} takes no alpha")
        if hybrid and not 0.0 <= self.alpha <= 1.0:
            raise InvalidArgument("alpha must lie in [0, 1]")
        if not self.epsilon > 0:
            raise InvalidArgument("epsilon must be positive")


def _grids(pred, gt):
    p = np.asarray(getattr(pred, "values", pred), dtype=np.float64)
    g = np.asarray(getattr(gt, "values", gt), dtype=np.float64)
    if p.shape != g.shape:
        raise InvalidArgument(f"shape mismatch: {p.shape} vs {g.shape}")
    return p, g


def _mask(g, mask):
    m = g > 0 if mask is None else np.asarray(mask, dtype=bool)
    if m.shape != g.shape:
        raise InvalidArgument("mask shape does not match grids")
    if not m.any():
        raise InvalidArgument("mask is empty: masked loss undefined without object pixels")
    return m


def l1(pred, gt):
    p, g = _grids(pred, gt)
    return float(np.mean(np.abs(p - g)))


def rmse(pred, gt, epsilon=EPSILON):
    p, g = _grids(pred, gt)
    return math.sqrt(float(np.mean((p - g) ** 2)) + epsilon)


def masked_l1(pred, gt, mask=None):
    p, g = _grids(pred, gt)
    m = _mask(g, mask)
    return float(np.sum(np.abs(p - g)[m]) / np.sum(m))


def masked_rmse(pred, gt, mask=None, epsilon=EPSILON):
    p, g = _grids(pred, gt)
    m = _mask(g, mask)
    return math.sqrt(float(np.sum(((p - g) ** 2)[m]) / np.sum(m)) + epsilon)


def hybrid_l1(pred, gt, alpha, mask=None):
    return alpha * masked_l1(pred, gt, mask) + (1.0 - alpha) * l1(pred, gt)


def hybrid_rmse(pred, gt, alpha, mask=None, epsilon=EPSILON):
    return alpha * masked_rmse(pred, gt, mask, epsilon) + (1.0 - alpha) * rmse(pred, gt, epsilon)


def loss(spec, pred, gt, mask=None):
    f = spec.family
    if f == "l1":
        return l1(pred, gt)
    if f == "rmse":
        return rmse(pred, gt, spec.epsilon)
    if f == "masked_l1":
        return masked_l1(pred, gt, mask)
    if f == "masked_rmse":
        return masked_rmse(pred, gt, mask, spec.epsilon)
    if f == "hybrid_l1":
        return hybrid_l1(pred, gt, spec.alpha, mask)
    return hybrid_rmse(pred, gt, spec.alpha, mask, spec.epsilon)


def alpha_sweep(family, alphas, pairs, epsilon=EPSILON):
    """Loss for every (pair, alpha); rows of ``(pair_index, alpha, value)``."""
    if not family.startswith("hybrid"):
        raise InvalidArgument(f"alpha sweep needs a hybrid family, got {family!r}")
    rows = []
    for i, (pred, gt) in enumerate(pairs):
        for a in alphas:
            rows.append((i, float(a), loss(LossSpec(family, float(a), epsilon), pred, gt)))
    return rows
