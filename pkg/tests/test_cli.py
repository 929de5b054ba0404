import json
import subprocess
import sys

import numpy as np
import pytest

from fppsim.cli import main
from fppsim.dataset import SplitPolicy, build_dataset, load_calib, procedural_objects, turntable_rig
from fppsim.depthio import (DepthMap, depth_to_bytes, normalize_individual, read_depth,
                            write_depth)
from fppsim.losses import LossSpec, loss
from fppsim.metrics import MetricsReport, aggregate, reports_to_csv
from fppsim.patterns import PatternSchedule
from fppsim.reconstruct import reconstruct
from fppsim.render import RenderConfig, read_sequence


def run(*args):
    return main([str(a) for a in args])


@pytest.fixture(scope="module")
def gen(tmp_path_factory):
    out = tmp_path_factory.mktemp("gen") / "data"
    assert run("generate", "--objects", 3, "--out", out, "--width", 24, "--height", 24,
               "--seed", 5, "--threads", 1) == 0
    return out


@pytest.fixture
def gt_file(tmp_path):
    gt = np.array([[0.0, 1800.0, 1810.0], [1790.0, 0.0, 1805.0]])
    p = tmp_path / "gt.fppd"
    write_depth(DepthMap(gt), p)
    return p


def test_version(capsys):
    with pytest.raises(SystemExit) as e:
        run("--version")
    assert e.value.code == 0
    assert capsys.readouterr().out.startswith("fppsim ")


def test_unknown_flag(capsys):
    assert run("evaluate", "--bogus") == 2
    err = capsys.readouterr().err
    assert "usage:" in err and "--bogus" in err


def test_evaluate_identity(gt_file, capsys):
    assert run("evaluate", "--pred", gt_file, "--gt", gt_file, "--sample-id", "s0") == 0
    lines = capsys.readouterr().out.splitlines()
    assert lines[0] == "sample_id,mae_overall,rmse_overall,mae_object,rmse_object,mae_bg,rmse_bg,n_object,n_bg"
    assert lines[1] == "s0,0.0,0.0,0.0,0.0,0.0,0.0,4,2"


def test_report_matches_aggregate(tmp_path, rng, capsys):
    reps = [MetricsReport(*rng.uniform(0, 20, 6), 100, 50, f"s{i}") for i in range(30)]
    (tmp_path / "cfg.csv").write_text(reports_to_csv(reps))
    assert run("report", tmp_path / "cfg.csv", "--name", "masked") == 0
    lines = capsys.readouterr().out.splitlines()
    assert len(lines) == 2
    row = lines[1].split(",")
    agg = aggregate(reps)
    assert row[0] == "masked" and row[-1] == "30"
    names = ("mae_overall", "rmse_overall", "mae_object", "rmse_object", "mae_bg", "rmse_bg")
    for cell, name in zip(row[1:7], names):
        assert float(cell) == agg[name].mean


def test_report_tsv(tmp_path, capsys):
    reps = [MetricsReport(1.0, 2.0, 3.0, 4.0, 0.0, 0.0, 1, 1, "a")]
    (tmp_path / "x.csv").write_text(reports_to_csv(reps))
    assert run("report", tmp_path / "x.csv", "--format", "tsv") == 0
    assert capsys.readouterr().out.splitlines()[1].split("\t")[0] == "x"


def test_loss_scalar_and_sweep(tmp_path, gt_file, capsys):
    pred = tmp_path / "pred.fppd"
    write_depth(DepthMap(read_depth(gt_file).values + 2.0), pred)
    assert run("loss", "--family", "hybrid_l1", "--alpha", 0.7, "--pred", pred, "--gt", gt_file) == 0
    want = loss(LossSpec("hybrid_l1", 0.7), read_depth(pred), read_depth(gt_file))
    assert float(capsys.readouterr().out) == want
    assert run("loss", "--family", "hybrid_rmse", "--pred", pred, "--gt", gt_file, "--sweep", "0.5,0.7,0.9") == 0
    lines = capsys.readouterr().out.splitlines()
    assert lines[0] == "alpha,loss" and len(lines) == 4


def test_validation_vs_runtime_exit_codes(tmp_path, gt_file, capsys):
    # hybrid without alpha: validation
    assert run("loss", "--family", "hybrid_l1", "--pred", gt_file, "--gt", gt_file) == 2
    # missing input file: runtime
    assert run("viz", "--in", tmp_path / "nope.fppd", "--out", tmp_path / "v.pgm") == 1
    assert not (tmp_path / "v.pgm").exists()
    # corrupt file: validation, message names the file
    bad = tmp_path / "bad.fppd"
    bad.write_bytes(b"NOPE" + bytes(40))
    assert run("viz", "--in", bad, "--out", tmp_path / "v.pgm") == 2
    assert "bad.fppd" in capsys.readouterr().err


def test_json_errors(tmp_path, capsys):
    assert run("--json-errors", "viz", "--in", tmp_path / "nope.fppd", "--out", tmp_path / "v.pgm") == 1
    doc = json.loads(capsys.readouterr().err.strip().splitlines()[-1])
    assert doc["exit_code"] == 1 and doc["error"] == "FileNotFoundError"
    assert run("loss", "--json-errors", "--family", "nope", "--pred", "a", "--gt", "b") == 2
    doc = json.loads(capsys.readouterr().err.strip().splitlines()[-1])
    assert doc["exit_code"] == 2


def test_config_file(tmp_path, gt_file, capsys):
    cfg = tmp_path / "run.json"
    cfg.write_text(json.dumps({"family": "hybrid_l1", "alpha": 0.5}))
    assert run("loss", "--config", cfg, "--family", "hybrid_l1", "--pred", gt_file, "--gt", gt_file) == 0
    assert float(capsys.readouterr().out) == 0.0
    cfg.write_text(json.dumps({"alhpa": 0.5}))
    assert run("loss", "--config", cfg, "--family", "l1", "--pred", gt_file, "--gt", gt_file) == 2
    assert "alhpa" in capsys.readouterr().err


def test_normalize_and_viz_match_library(tmp_path, gt_file):
    assert run("normalize", "--mode", "individual", "--in", gt_file, "--out", tmp_path / "n.fppd") == 0
    assert (tmp_path / "n.fppd").read_bytes() == depth_to_bytes(normalize_individual(read_depth(gt_file)))
    assert run("normalize", "--mode", "raw", "--in", tmp_path / "n.fppd", "--out", tmp_path / "r.fppd") == 0
    back = read_depth(tmp_path / "r.fppd").values
    # the nearest object pixel normalizes to 0 and cannot be told from background without a mask
    orig = read_depth(gt_file).values
    keep = orig != orig[orig > 0].min()
    assert np.max(np.abs(back[keep] - orig[keep])) < 1e-3
    assert run("viz", "--in", gt_file, "--out", tmp_path / "v.pgm") == 0
    assert (tmp_path / "v.pgm").read_bytes().startswith(b"P5\n3 2\n65535\n")


def test_generate_matches_library(gen, tmp_path):
    cam, proj = turntable_rig(24, 24)
    build_dataset(procedural_objects(3, 5), cam, proj, PatternSchedule(), tmp_path / "lib",
                  SplitPolicy(seed=5), RenderConfig(), threads=1)
    for rel in ("manifest.json", "calib.json", "obj001/view3_gt.fppd", "obj002/view5_pat017.pgm"):
        assert (gen / rel).read_bytes() == (tmp_path / "lib" / rel).read_bytes()


def test_generate_thread_independent(gen, tmp_path):
    assert run("generate", "--objects", 3, "--out", tmp_path / "t", "--width", 24, "--height", 24,
               "--seed", 5, "--threads", 3) == 0
    for p in sorted(gen.rglob("*"))[:200]:
        if p.is_file():
            assert p.read_bytes() == (tmp_path / "t" / p.relative_to(gen)).read_bytes()


def test_generate_needs_three(tmp_path):
    assert run("generate", "--objects", 2, "--out", tmp_path / "x") == 2


def test_reconstruct_matches_library(gen, tmp_path):
    out = tmp_path / "rec.fppd"
    assert run("reconstruct", "--frames", gen / "obj000", "--calib", gen / "calib.json",
               "--out", out, "--view", 1, "--dump-phase", tmp_path / "ph.fppd") == 0
    cam, proj, sched, plane = load_calib(gen / "calib.json")
    rec = reconstruct(read_sequence(gen / "obj000", sched, 1), cam, proj, plane)
    assert out.read_bytes() == depth_to_bytes(rec.depth)
    assert (tmp_path / "ph.fppd").exists()


def test_baseline_evaluate_mask_pipeline(gen, tmp_path, capsys):
    for kind in ("zero", "plane_fit"):
        assert run("baseline", "--kind", kind, "--manifest", gen / "manifest.json",
                   "--out", tmp_path / kind) == 0
        assert run("evaluate", "--manifest", gen / "manifest.json", "--pred-dir", tmp_path / kind,
                   "--split", "test", "--out", tmp_path / f"{kind}.csv") == 0
    zero = (tmp_path / "zero.csv").read_text().splitlines()
    assert len(zero) == 1 + 6
    assert run("mask-background", "--manifest", gen / "manifest.json", "--out", tmp_path / "m") == 0
    assert run("evaluate", "--manifest", tmp_path / "m" / "manifest.json", "--pred-dir",
               tmp_path / "zero", "--out", tmp_path / "mz.csv") == 0
    assert len((tmp_path / "mz.csv").read_text().splitlines()) == 1 + 18


def test_console_script_subprocess(tmp_path):
    r = subprocess.run([sys.executable, "-m", "fppsim.cli", "report", str(tmp_path / "none.csv")],
                       capture_output=True, text=True)
    assert r.returncode == 1 and "none.csv" in r.stderr and r.stdout == ""
