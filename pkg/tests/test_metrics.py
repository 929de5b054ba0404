import math

import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st
from hypothesis.extra.numpy import arrays

from fppsim.depthio import DepthMap, Normalization, normalize_global, normalize_individual
from fppsim.errors import InvalidArgument, InvalidState
from fppsim.metrics import (CSV_COLUMNS, MetricsReport, aggregate, decomposition_check,
                            evaluate_arrays, evaluate_pair, reports_from_csv, reports_to_csv,
                            summary_table)

GT = np.array([[0.0, 1000.0], [2000.0, 0.0]])
PRED = np.array([[10.0, 1010.0], [1990.0, 0.0]])


def brute(pred, gt):
    """Pixel-by-pixel loop, independent of the vectorized code."""
    regions = {"overall": [], "object": [], "bg": []}
    for p, g in zip(pred.ravel(), gt.ravel()):
        e = float(p) - float(g)
        regions["overall"].append(e)
        regions["object" if g > 0 else "bg"].append(e)
    out = {}
    for name, errs in regions.items():
        if errs:
            out[f"mae_{name}"] = sum(abs(e) for e in errs) / len(errs)
            out[f"rmse_{name}"] = math.sqrt(sum(e * e for e in errs) / len(errs))
        else:
            out[f"mae_{name}"] = out[f"rmse_{name}"] = None
    return out


def test_hand_fixture():
    r = evaluate_pair(DepthMap(PRED), DepthMap(GT))
    assert r.mae_object == pytest.approx(10, abs=1e-12)
    assert r.rmse_object == pytest.approx(10, abs=1e-12)
    assert r.mae_bg == pytest.approx(5, abs=1e-12)
    assert r.rmse_bg == pytest.approx(math.sqrt(50), abs=1e-12)
    assert r.mae_overall == pytest.approx(7.5, abs=1e-12)
    assert r.rmse_overall == pytest.approx(math.sqrt(75), abs=1e-12)
    assert (r.n_object, r.n_bg) == (2, 2)
    r_mae, r_mse = decomposition_check(r)
    assert r_mae == 0.0
    assert r_mse < 1e-15  # sqrt(50)**2 is one rounding away from 50


def test_identity_is_zero():
    r = evaluate_pair(DepthMap(GT), DepthMap(GT))
    assert all(v == 0 for v in r.metrics().values())


def test_constant_offset_all_object():
    gt = np.full((4, 5), 1800.0)
    r = evaluate_pair(DepthMap(gt + 5), DepthMap(gt))
    assert r.mae_overall == r.mae_object == r.rmse_object == 5
    assert r.mae_bg is None and r.rmse_bg is None
    assert decomposition_check(r) is None


def test_shape_mismatch():
    with pytest.raises(InvalidArgument):
        evaluate_pair(DepthMap(np.zeros((2, 2))), DepthMap(np.zeros((2, 3))))


def test_mask_comes_from_gt_only():
    gt = np.array([[0.0, 1800.0]])
    r = evaluate_pair(DepthMap(np.array([[1800.0, 0.0]])), DepthMap(gt))
    assert (r.n_object, r.n_bg) == (1, 1)
    assert r.mae_object == 1800 and r.mae_bg == 1800


def test_normalized_predictions_are_denormalized():
    gt = DepthMap(np.array([[0.0, 1561.0], [2026.0, 1793.5]]))
    r = evaluate_pair(normalize_global(gt), gt)
    assert r.mae_overall < 1e-12
    ind = normalize_individual(gt)
    stripped = DepthMap(ind.values, Normalization.INDIVIDUAL)
    r = evaluate_pair(stripped, gt)
    assert r.mae_overall == 0


def test_individual_without_any_params():
    gt = DepthMap(np.array([[0.5]]), Normalization.INDIVIDUAL)
    with pytest.raises(InvalidState):
        evaluate_pair(DepthMap(np.array([[0.5]]), Normalization.INDIVIDUAL), gt)


grids = arrays(np.float64, (6, 7), elements=st.one_of(st.just(0.0), st.floats(1500, 2100)))
preds = arrays(np.float64, (6, 7), elements=st.floats(0, 2500))


@settings(max_examples=100)
@given(preds, grids)
def test_matches_brute_force_and_identities(pred, gt):
    r = evaluate_arrays(pred, gt)
    ref = brute(pred, gt)
    for k, v in ref.items():
        got = getattr(r, k)
        assert (got is None) == (v is None)
        if v is not None:
            assert got == pytest.approx(v, rel=1e-12, abs=1e-9)
    for region in ("overall", "object", "bg"):
        m, s = getattr(r, f"mae_{region}"), getattr(r, f"rmse_{region}")
        if m is not None:
            assert s >= m - 1e-12 * max(1.0, m)
    check = decomposition_check(r)
    if check is not None:
        assert check[0] < 1e-9 and check[1] < 1e-9
    assert r.n_object + r.n_bg == gt.size


def test_permutation_invariance(rng):
    gt = np.where(rng.random((20, 20)) < 0.5, 0, rng.uniform(1500, 2100, (20, 20)))
    pred = gt + rng.normal(scale=3, size=gt.shape)
    perm = rng.permutation(gt.size)
    a = evaluate_arrays(pred, gt)
    b = evaluate_arrays(pred.ravel()[perm].reshape(gt.shape), gt.ravel()[perm].reshape(gt.shape))
    for k in a.metrics():
        assert a.metrics()[k] == pytest.approx(b.metrics()[k], rel=1e-12)


def test_scale_equivariance(rng):
    gt = np.where(rng.random((20, 20)) < 0.5, 0, rng.uniform(1500, 2100, (20, 20)))
    res = rng.normal(scale=3, size=gt.shape)
    a = evaluate_arrays(gt + res, gt)
    b = evaluate_arrays(gt - 2.5 * res, gt)
    for k in a.metrics():
        assert b.metrics()[k] == pytest.approx(2.5 * a.metrics()[k], rel=1e-12)


def test_rmse_equals_mae_for_equal_magnitudes():
    gt = np.full((3, 3), 1800.0)
    pred = gt + np.array([[4, -4, 4], [-4, 4, -4], [4, 4, -4]])
    r = evaluate_arrays(pred, gt)
    assert r.rmse_object == r.mae_object == 4


def _rep(mae_object, **kw):
    base = dict(mae_overall=1.0, rmse_overall=1.0, mae_object=mae_object, rmse_object=mae_object,
                mae_bg=0.0, rmse_bg=0.0, n_object=10, n_bg=10)
    base.update(kw)
    return MetricsReport(**base)


def test_aggregate_examples():
    single = aggregate([_rep(7.0)])
    assert single["mae_object"].mean == 7.0 and single["mae_object"].std == 0.0
    two = aggregate([_rep(10.0), _rep(20.0)])
    assert two["mae_object"].mean == 15.0 and two["mae_object"].std == 5.0
    with pytest.raises(InvalidArgument):
        aggregate([])


def test_aggregate_matches_loop(rng):
    reports = [_rep(float(x), n_object=int(n)) for x, n in zip(rng.uniform(0, 20, 30), rng.integers(1, 99, 30))]
    agg = aggregate(reports)
    vals = [r.mae_object for r in reports]
    mean = sum(vals) / len(vals)
    std = math.sqrt(sum((v - mean) ** 2 for v in vals) / len(vals))
    assert agg["mae_object"].mean == pytest.approx(mean, rel=1e-12)
    assert agg["mae_object"].std == pytest.approx(std, rel=1e-12)
    assert agg["mae_object"].min == min(vals) and agg["mae_object"].max == max(vals)
    pooled = aggregate(reports, pooled=True)
    w = [r.n_object for r in reports]
    assert pooled["mae_object"].mean == pytest.approx(sum(a * b for a, b in zip(vals, w)) / sum(w))


def test_aggregate_skips_absent():
    agg = aggregate([_rep(5.0), _rep(7.0, mae_bg=None, rmse_bg=None, n_bg=0)])
    assert agg["mae_bg"].count == 1 and agg["mae_object"].count == 2


def test_csv_round_trip():
    rs = [evaluate_pair(DepthMap(PRED), DepthMap(GT), "a"),
          evaluate_pair(DepthMap(np.full((2, 2), 9.0)), DepthMap(np.full((2, 2), 5.0)), "b")]
    text = reports_to_csv(rs)
    assert text.splitlines()[0] == ",".join(CSV_COLUMNS)
    assert text.splitlines()[2].endswith(",NA,NA,4,0")
    assert reports_from_csv(text) == rs


def test_summary_table_shape():
    rs = [_rep(10.0), _rep(20.0)]
    lines = summary_table({"masked": rs, "unmasked": rs[:1]}, delimiter="\t").splitlines()
    assert lines[0].split("\t") == ["Configuration", "Overall MAE", "Overall RMSE", "Object MAE",
                                    "Object RMSE", "Background MAE", "Background RMSE", "Samples"]
    assert lines[1].split("\t")[3] == "15.0"
    assert lines[2].split("\t")[-1] == "1"
