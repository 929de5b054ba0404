"""Overall / object / background MAE and RMSE in millimeters, plus aggregation."""
from __future__ import annotations

import csv
import io
import math
from dataclasses import asdict, dataclass

import numpy as np

from .depthio import Normalization, denormalize, normalize_individual
from .errors import InvalidArgument, InvalidState

METRIC_NAMES = ("mae_overall", "rmse_overall", "mae_object", "rmse_object", "mae_bg", "rmse_bg")
CSV_COLUMNS = ("sample_id",) + METRIC_NAMES + ("n_object", "n_bg")
SUMMARY_HEADERS = ("Overall MAE", "Overall RMSE", "Object MAE", "Object RMSE",
                   "Background MAE", "Background RMSE")


@dataclass(frozen=True)
class MetricsReport:
    """Per-sample errors in mm; a region with no pixels reports ``None`` (absent)."""

    mae_overall: float
    rmse_overall: float
    mae_object: float | None
    rmse_object: float | None
    mae_bg: float | None
    rmse_bg: float | None
    n_object: int
    n_bg: int
    sample_id: str = ""

    def metrics(self):
        return {k: getattr(self, k) for k in METRIC_NAMES}

    def to_row(self):
        d = asdict(self)
        return [d[c] for c in CSV_COLUMNS]


def _params_for(pred, gt):
    """(dmin, dmax) used to denormalize an individually-normalized prediction."""
    if pred.has_params:
        return pred.dmin_mm, pred.dmax_mm
    if gt.normalization == Normalization.INDIVIDUAL:
        if not gt.has_params:
            raise InvalidState("neither prediction nor ground truth carries (dmin, dmax)")
        return gt.dmin_mm, gt.dmax_mm
    raw = denormalize(gt)
    if not raw.object_mask.any():
        raise InvalidState("cannot derive (dmin, dmax) from an all-background ground truth")
    ref = normalize_individual(raw)
    return ref.dmin_mm, ref.dmax_mm


def to_millimeters(pred, gt):
    """Denormalize ``pred`` and ``gt`` to raw mm.

    Individual predictions without their own (dmin, dmax) borrow the ground
    truth's; a normalized 0 on a ground-truth object pixel means dmin.
    """
    gt_mm = denormalize(gt).values
    if pred.normalization == Normalization.INDIVIDUAL:
        pred_mm = denormalize(pred, _params_for(pred, gt), mask=gt_mm > 0)
    else:
        pred_mm = denormalize(pred)
    return pred_mm.values, gt_mm


def _region(err, mask):
    n = int(mask.sum())
    if n == 0:
        return None, None
    e = err[mask]
    return float(np.mean(np.abs(e))), float(np.sqrt(np.mean(e * e)))


def evaluate_arrays(pred_mm, gt_mm, sample_id=""):
    pred_mm = np.asarray(pred_mm, dtype=np.float64)
    gt_mm = np.asarray(gt_mm, dtype=np.float64)
    if pred_mm.shape != gt_mm.shape:
        raise InvalidArgument(f"shape mismatch: prediction {pred_mm.shape} vs ground truth {gt_mm.shape}")
    err = pred_mm - gt_mm
    obj = gt_mm > 0
    bg = ~obj
    mae_all, rmse_all = _region(err, np.ones_like(obj))
    mae_o, rmse_o = _region(err, obj)
    mae_b, rmse_b = _region(err, bg)
    return MetricsReport(mae_all, rmse_all, mae_o, rmse_o, mae_b, rmse_b,
                         int(obj.sum()), int(bg.sum()), sample_id)


def evaluate_pair(pred, gt, sample_id=""):
    """Six-metric report; object/background masks always come from the ground truth."""
    if pred.shape != gt.shape:
        raise InvalidArgument(f"shape mismatch: prediction {pred.shape} vs ground truth {gt.shape}")
    pred_mm, gt_mm = to_millimeters(pred, gt)
    return evaluate_arrays(pred_mm, gt_mm, sample_id)


def decomposition_check(report):
    """Relative residuals of the pixel-weighted MAE and squared-RMSE identities.

    Returns ``None`` when either region is absent.
    """
    if report.mae_object is None or report.mae_bg is None:
        return None
    n_o, n_b = report.n_object, report.n_bg
    n = n_o + n_b
    mae = (n_o * report.mae_object + n_b * report.mae_bg) / n
    mse = (n_o * report.rmse_object ** 2 + n_b * report.rmse_bg ** 2) / n
    r_mae = abs(report.mae_overall - mae) / max(abs(report.mae_overall), 1e-300)
    r_mse = abs(report.rmse_overall ** 2 - mse) / max(report.rmse_overall ** 2, 1e-300)
    if report.mae_overall == 0 and mae == 0:
        r_mae = 0.0
    if report.rmse_overall == 0 and mse == 0:
        r_mse = 0.0
    return r_mae, r_mse


@dataclass(frozen=True)
class MetricSummary:
    mean: float | None
    std: float | None
    min: float | None
    max: float | None
    count: int


def aggregate(reports, pooled=False):
    """Per-metric summary across samples.

    Default: each sample weighs equally (population std).  ``pooled=True``
    instead pools pixels, weighting each sample's region by its pixel count.
    Absent regions are skipped; ``count`` records coverage.
    """
    reports = list(reports)
    if not reports:
        raise InvalidArgument("no reports to aggregate")
    out = {}
    for name in METRIC_NAMES:
        vals = np.array([getattr(r, name) for r in reports if getattr(r, name) is not None], float)
        if vals.size == 0:
            out[name] = MetricSummary(None, None, None, None, 0)
            continue
        if pooled:
            mean = _pooled(reports, name)
        else:
            mean = float(vals.mean())
        out[name] = MetricSummary(mean, float(vals.std()), float(vals.min()), float(vals.max()), vals.size)
    return out


def _pooled(reports, name):
    region = name.split("_", 1)[1]
    num = den = 0.0
    for r in reports:
        v = getattr(r, name)
        if v is None:
            continue
        n = {"overall": r.n_object + r.n_bg, "object": r.n_object, "bg": r.n_bg}[region]
        num += n * (v * v if name.startswith("rmse") else v)
        den += n
    mean = num / den
    return math.sqrt(mean) if name.startswith("rmse") else mean


# --- CSV --------------------------------------------------------------------

def _fmt(v):
    if v is None:
        return "NA"
    if isinstance(v, (float, np.floating)):
        return repr(float(v))
    if isinstance(v, (int, np.integer)):
        return str(int(v))
    return str(v)


def reports_to_csv(reports, delimiter=","):
    buf = io.StringIO()
    w = csv.writer(buf, delimiter=delimiter, lineterminator="\n")
    w.writerow(CSV_COLUMNS)
    for r in reports:
        w.writerow([_fmt(v) for v in r.to_row()])
    return buf.getvalue()


def reports_from_csv(text):
    rows = list(csv.DictReader(io.StringIO(text)))
    if rows and set(rows[0]) != set(CSV_COLUMNS):
        raise InvalidArgument(f"unexpected CSV columns {list(rows[0])}")

    def num(s):
        return None if s in ("NA", "") else float(s)

    return [MetricsReport(*(num(row[k]) for k in METRIC_NAMES), int(row["n_object"]),
                          int(row["n_bg"]), row["sample_id"]) for row in rows]


def summary_table(configs, delimiter=",", pooled=False):
    """Rows shaped like the normalization/ablation/loss tables: one per configuration.

    ``configs`` maps configuration name -> list of reports.
    """
    buf = io.StringIO()
    w = csv.writer(buf, delimiter=delimiter, lineterminator="\n")
    w.writerow(("Configuration",) + SUMMARY_HEADERS + ("Samples",))
    for name, reports in configs.items():
        agg = aggregate(reports, pooled=pooled)
        w.writerow([name] + [_fmt(agg[m].mean) for m in METRIC_NAMES] + [len(reports)])
    return buf.getvalue()

