"""Command-line entry point: ``fppsim <command> ...``.

Exit codes: 0 success, 2 validation error (bad flags, config, file format),
1 runtime error.  Logs go to stderr; data goes to files or stdout.
"""
from __future__ import annotations

import argparse
import json
import logging
import os
import sys
from dataclasses import dataclass, field
from pathlib import Path

from . import __version__
from .dataset import (BASELINES, SplitPolicy, baseline_predict, build_dataset, load_calib,
                      load_manifest, mask_background_dataset, mesh_object, procedural_objects,
                      training_mean_depth, turntable_rig)
from .depthio import (Normalization, atomic_write_bytes, denormalize, normalize_global,
                      normalize_individual, pgm_bytes, read_depth, to_viz_u16, write_depth,
                      write_phase)
from .errors import ConfigurationError, FormatError, FPPError, InvalidArgument, InvalidState
from .losses import FAMILIES, LossSpec, alpha_sweep, loss
from .metrics import evaluate_pair, reports_from_csv, reports_to_csv, summary_table
from .patterns import PatternSchedule
from .reconstruct import reconstruct
from .render import RenderConfig, read_sequence

log = logging.getLogger("fppsim")

VALIDATION_ERRORS = (InvalidArgument, ConfigurationError, FormatError, InvalidState, ValueError, KeyError)


class UsageError(Exception):
    pass


class _Parser(argparse.ArgumentParser):
    def error(self, message):
        self.print_usage(sys.stderr)
        raise UsageError(message)


@dataclass
class RunConfig:
    """Validated options for one subcommand."""

    command: str
    options: dict = field(default_factory=dict)

    @classmethod
    def from_namespace(cls, ns, parser, config_path=None):
        opts = {k: v for k, v in vars(ns).items() if k not in ("command", "func", "config")}
        if config_path:
            doc = json.loads(Path(config_path).read_text())
            if not isinstance(doc, dict):
                raise ConfigurationError(f"{config_path}: config must be a JSON object")
            unknown = sorted(set(doc) - set(opts))
            if unknown:
                raise ConfigurationError(f"{config_path}: unknown keys {unknown}")
            for k, v in doc.items():
                if opts[k] == parser.get_default(k):
                    opts[k] = v
        return cls(ns.command, opts)


def _write_text(path, text):
    if path in (None, "-"):
        sys.stdout.write(text)
    else:
        atomic_write_bytes(path, text.encode())


def _schedule(o, base=None):
    if o.get("paper_parity"):
        return PatternSchedule.paper_parity()
    s = base.to_dict() if base is not None else PatternSchedule().to_dict()
    for key, name in (("phase_steps", "n_phase"), ("period_px", "period_px"), ("gray_bits", "n_gray_bits")):
        if o.get(key) is not None:
            s[name] = o[key]
    return PatternSchedule.from_dict(s)


# --- commands ---------------------------------------------------------------

def cmd_generate(o):
    if o["objects"] < 3 and not o["mesh"]:
        raise InvalidArgument(f"--objects must be at least 3, got {o['objects']}")
    schedule = _schedule(o)
    camera, projector = turntable_rig(o["width"], o["height"])
    objects = procedural_objects(o["objects"], o["seed"])
    objects += [mesh_object(f"mesh{i:03d}", p) for i, p in enumerate(o["mesh"] or [])]
    manifest = build_dataset(objects, camera, projector, schedule, o["out"],
                             SplitPolicy(seed=o["seed"]), RenderConfig(quantize_bits=o["bits"]),
                             threads=o["threads"])
    c = manifest["counts"]
    print(f"{c['objects']} objects, {c['samples']} samples, {c['fringe_files']} fringe files")


def cmd_reconstruct(o):
    camera, projector, schedule, plane = load_calib(o["calib"])
    schedule = _schedule(o, schedule)
    seq = read_sequence(o["frames"], schedule, o["view"])
    if seq.height != camera.height_px or seq.width != camera.width_px:
        raise InvalidArgument(f"{o['frames']}: frames are {seq.width}x{seq.height}, calibration "
                              f"expects {camera.width_px}x{camera.height_px}")
    rec = reconstruct(seq, camera, projector, None if o["keep_background"] else plane, o["band_mm"])
    write_depth(rec.depth, o["out"])
    if o["dump_phase"]:
        write_phase(rec.phase.wrapped, o["dump_phase"])


def _pred_path(pred_dir, entry):
    return Path(pred_dir) / entry["gt_depth"].replace("_gt.fppd", "_pred.fppd")


def cmd_evaluate(o):
    reports = []
    if o["manifest"]:
        if not o["pred_dir"]:
            raise InvalidArgument("--manifest needs --pred-dir")
        root = Path(o["manifest"]).parent
        for e in load_manifest(o["manifest"])["entries"]:
            if o["split"] and e["split"] != o["split"]:
                continue
            gt = read_depth(root / e["gt_depth"])
            pred = read_depth(_pred_path(o["pred_dir"], e))
            reports.append(evaluate_pair(pred, gt, f"{e['object_id']}/view{e['viewpoint_index']}"))
    else:
        if not (o["pred"] and o["gt"]):
            raise InvalidArgument("give --pred and --gt, or --manifest and --pred-dir")
        reports.append(evaluate_pair(read_depth(o["pred"]), read_depth(o["gt"]),
                                     o["sample_id"] or Path(o["pred"]).stem))
    _write_text(o["out"], reports_to_csv(reports))


def cmd_loss(o):
    pred, gt = read_depth(o["pred"]), read_depth(o["gt"])
    if o["sweep"]:
        try:
            alphas = [float(a) for a in o["sweep"].split(",")]
        except ValueError:
            raise InvalidArgument(f"--sweep: expected comma-separated numbers, got {o['sweep']!r}")
        for a in alphas:
            LossSpec(o["family"], a)
        rows = alpha_sweep(o["family"], alphas, [(pred, gt)])
        _write_text(o["out"], "alpha,loss\n" + "".join(f"{a!r},{v!r}\n" for _, a, v in rows))
    else:
        _write_text(o["out"], f"{loss(LossSpec(o['family'], o['alpha']), pred, gt)!r}\n")


def cmd_mask_background(o):
    doc = mask_background_dataset(o["manifest"], o["out"])
    print(f"masked {len(doc['entries'])} samples")


def cmd_normalize(o):
    d = read_depth(o["input"])
    raw = denormalize(d) if d.normalization != Normalization.INDIVIDUAL or d.has_params else None
    if raw is None:
        raise InvalidState(f"{o['input']}: individual map without (dmin, dmax) cannot be converted")
    out = {"raw": lambda: raw, "global": lambda: normalize_global(raw),
           "individual": lambda: normalize_individual(raw)}[o["mode"]]()
    write_depth(out, o["out"])


def cmd_viz(o):
    atomic_write_bytes(o["out"], pgm_bytes(to_viz_u16(read_depth(o["input"]))))


def cmd_report(o):
    configs = {}
    for i, path in enumerate(o["csv"]):
        name = o["name"][i] if o["name"] and i < len(o["name"]) else Path(path).stem
        configs[name] = reports_from_csv(Path(path).read_text())
        if not configs[name]:
            raise InvalidArgument(f"{path}: no sample rows")
    delim = "\t" if o["format"] == "tsv" else ","
    _write_text(o["out"], summary_table(configs, delim, pooled=o["pooled"]))


def cmd_baseline(o):
    manifest_path = Path(o["manifest"])
    root = manifest_path.parent
    manifest = load_manifest(manifest_path)
    entries = manifest["entries"]
    mean = None
    if o["kind"] == "constant_mean":
        train = [read_depth(root / e["gt_depth"]) for e in entries if e["split"] == "train"]
        mean = training_mean_depth(train)
    camera = projector = plane = None
    if o["kind"] == "classical":
        camera, projector, _, plane = load_calib(root / "calib.json")
    schedule = PatternSchedule.from_dict(manifest["schedule"])
    for e in entries:
        if o["split"] and e["split"] != o["split"]:
            continue
        gt = read_depth(root / e["gt_depth"])
        seq = None
        if o["kind"] == "classical":
            seq = read_sequence(root / e["object_id"], schedule, e["viewpoint_index"])
        pred = baseline_predict(o["kind"], gt, seq, camera, projector, mean, plane)
        out = _pred_path(o["out"], e)
        out.parent.mkdir(parents=True, exist_ok=True)
        write_depth(pred, out)


# --- parser -----------------------------------------------------------------

def _add_schedule_flags(p):
    p.add_argument("--phase-steps", type=int, help="phase-shift count N")
    p.add_argument("--period-px", type=float, help="fringe period in projector pixels")
    p.add_argument("--gray-bits", type=int, help="Gray-code bit count")
    p.add_argument("--paper-parity", action="store_true", help="52-pattern preset")


def _add_common_flags(p, default):
    p.add_argument("--json-errors", action="store_true", default=default,
                   help="report errors as JSON on stderr")
    p.add_argument("-v", "--verbose", action="count", default=default)
    p.add_argument("--threads", type=int, default=default, help="worker cap (default: all cores)")
    p.add_argument("--seed", type=int, default=default, help="seed for all randomness")
    p.add_argument("--config", default=default, help="JSON file of option defaults for the subcommand")


def build_parser():
    p = _Parser(prog="fppsim", description="Virtual fringe projection profilometry toolkit.")
    p.add_argument("--version", action="version", version=f"fppsim {__version__}")
    _add_common_flags(p, None)
    p.set_defaults(json_errors=False, verbose=0, threads=os.cpu_count() or 1, seed=0, config=None)
    # common flags are accepted before or after the subcommand name
    common = argparse.ArgumentParser(add_help=False)
    _add_common_flags(common, argparse.SUPPRESS)
    sub = p.add_subparsers(dest="command", required=True, parser_class=_Parser)
    _add = sub.add_parser

    def add_parser(name, **kw):
        return _add(name, parents=[common], **kw)

    sub.add_parser = add_parser

    g = sub.add_parser("generate", help="render a multi-view dataset")
    g.add_argument("--objects", type=int, required=True)
    g.add_argument("--out", required=True)
    g.add_argument("--mesh", action="append", help="extra TRI mesh object (repeatable)")
    g.add_argument("--width", type=int, default=480)
    g.add_argument("--height", type=int, default=480)
    g.add_argument("--bits", type=int, default=16, help="quantization bits, 0 = none")
    _add_schedule_flags(g)
    g.set_defaults(func=cmd_generate)

    r = sub.add_parser("reconstruct", help="classical phase-shifting reconstruction")
    r.add_argument("--frames", required=True)
    r.add_argument("--calib", required=True)
    r.add_argument("--out", required=True)
    r.add_argument("--view", type=int, default=0)
    r.add_argument("--band-mm", type=float, default=2.0)
    r.add_argument("--keep-background", action="store_true")
    r.add_argument("--dump-phase", help="write the wrapped phase map here")
    _add_schedule_flags(r)
    r.set_defaults(func=cmd_reconstruct)

    e = sub.add_parser("evaluate", help="per-sample metrics CSV")
    e.add_argument("--pred")
    e.add_argument("--gt")
    e.add_argument("--sample-id")
    e.add_argument("--manifest")
    e.add_argument("--pred-dir")
    e.add_argument("--split", choices=("train", "val", "test"))
    e.add_argument("--out", default="-")
    e.set_defaults(func=cmd_evaluate)

    lo = sub.add_parser("loss", help="evaluate a loss function")
    lo.add_argument("--family", required=True, choices=FAMILIES)
    lo.add_argument("--alpha", type=float)
    lo.add_argument("--pred", required=True)
    lo.add_argument("--gt", required=True)
    lo.add_argument("--sweep", help="comma-separated alphas")
    lo.add_argument("--out", default="-")
    lo.set_defaults(func=cmd_loss)

    m = sub.add_parser("mask-background", help="write a background-masked copy of a dataset")
    m.add_argument("--manifest", required=True)
    m.add_argument("--out", required=True)
    m.set_defaults(func=cmd_mask_background)

    n = sub.add_parser("normalize", help="convert a depth map between normalizations")
    n.add_argument("--mode", required=True, choices=("raw", "global", "individual"))
    n.add_argument("--in", dest="input", required=True)
    n.add_argument("--out", required=True)
    n.set_defaults(func=cmd_normalize)

    v = sub.add_parser("viz", help="16-bit PGM visualization of a depth map")
    v.add_argument("--in", dest="input", required=True)
    v.add_argument("--out", required=True)
    v.set_defaults(func=cmd_viz)

    rp = sub.add_parser("report", help="summary table over per-sample CSVs")
    rp.add_argument("csv", nargs="+")
    rp.add_argument("--name", action="append", help="configuration name per CSV")
    rp.add_argument("--format", choices=("csv", "tsv"), default="csv")
    rp.add_argument("--pooled", action="store_true")
    rp.add_argument("--out", default="-")
    rp.set_defaults(func=cmd_report)

    b = sub.add_parser("baseline", help="write baseline predictions for a dataset")
    b.add_argument("--kind", required=True, choices=BASELINES)
    b.add_argument("--manifest", required=True)
    b.add_argument("--out", required=True)
    b.add_argument("--split", choices=("train", "val", "test"))
    b.set_defaults(func=cmd_baseline)
    return p


def _fail(args_json, code, exc):
    msg = str(exc)
    if args_json:
        sys.stderr.write(json.dumps({"error": type(exc).__name__, "message": msg, "exit_code": code}) + "\n")
    else:
        sys.stderr.write(f"fppsim: error: {msg}\n")
    return code


def main(argv=None):
    argv = sys.argv[1:] if argv is None else list(argv)
    json_errors = "--json-errors" in argv
    parser = build_parser()
    try:
        ns = parser.parse_args(argv)
    except UsageError as exc:
        return _fail(json_errors, 2, exc)
    logging.basicConfig(stream=sys.stderr, format="%(levelname)s %(name)s: %(message)s",
                        level=logging.WARNING - 10 * min(ns.verbose, 2))
    sub = parser._subparsers._group_actions[0].choices[ns.command]
    try:
        if ns.threads < 1:
            raise InvalidArgument("--threads must be at least 1")
        cfg = RunConfig.from_namespace(ns, sub, ns.config)
        ns.func(cfg.options)
    except VALIDATION_ERRORS as exc:
        return _fail(json_errors, 2, exc)
    except (FPPError, OSError, RuntimeError) as exc:
        return _fail(json_errors, 1, exc)
    return 0


if __name__ == "__main__":
    sys.exit(main())
