"""Command-line entry point: ``multiradar {simulate,run,evaluate,compare,report}``."""

from __future__ import annotations

import argparse
import json
import logging
import sys
from pathlib import Path

from . import kernels
from .config import ConfigError, PipelineConfig, load_config
from .pipeline import (STAGES, SchemaMismatch, StageError, evaluate_report, load_report, run,
                       simulate, write_artifacts)
from .scene import ground_truth

log = logging.getLogger("multiradar")


def _load(args) -> PipelineConfig:
    cfg = load_config(args.config)
    if args.seed is not None:
        cfg = cfg.with_seed(args.seed)
    return cfg


def cmd_simulate(args) -> int:
    cfg = _load(args)
    out = simulate(cfg, args.out)
    print(f"wrote cubes and truth to {out}")
    return 0


def cmd_run(args) -> int:
    cfg = _load(args)
    if args.disable_radar:
        cfg.disabled_radars = sorted(set(cfg.disabled_radars) | set(args.disable_radar))
    if args.image_dumps:
        cfg.image_dumps = True
    out = Path(args.out or cfg.output_dir or "multiradar_out")
    report = run(cfg, out, until=args.until)
    print(f"backend={kernels.BACKEND} stages={','.join(report.stages)} time={report.runtime['total']:.2f}s")
    if report.detection:
        _print_tables(report.to_dict())
    print(f"artifacts in {out}")
    return 0


def _truth_for(report_dict):
    cfg = PipelineConfig.from_dict(report_dict["config"])
    if isinstance(cfg.scene, str):
        path = Path(cfg.scene) / "truth.json"
        if not path.exists():
            raise FileNotFoundError(f"no ground truth at {path}")
        return json.loads(path.read_text())
    return ground_truth(cfg.scene_config())


def cmd_evaluate(args) -> int:
    report = load_report(args.run_dir)
    if not report.fused:
        print("run has no selection results; rerun through the 'select' stage", file=sys.stderr)
        return 2
    truth = json.loads(Path(args.truth).read_text()) if args.truth else _truth_for(report.to_dict())
    evaluate_report(report, truth, args.gate)
    if "evaluate" not in report.stages:
        report.stages.append("evaluate")
    write_artifacts(report, Path(args.run_dir))
    _print_tables(report.to_dict())
    return 0


def cmd_compare(args) -> int:
    from .pipeline import compare

    a = json.loads(_report_path(args.a).read_text())
    b = json.loads(_report_path(args.b).read_text())
    try:
        diffs = compare(a, b, rtol=args.rtol, atol=args.atol)
    except SchemaMismatch as exc:
        print(f"schema mismatch: {exc}", file=sys.stderr)
        return 2
    for d in diffs[: args.max_lines]:
        print(f"{d.path}: {d.a!r} != {d.b!r}")
    if len(diffs) > args.max_lines:
        print(f"... {len(diffs) - args.max_lines} more")
    print(f"{len(diffs)} difference(s)")
    return 1 if diffs else 0


def _report_path(p) -> Path:
    p = Path(p)
    return p / "report.json" if p.is_dir() else p


def _fmt(v, nd=2):
    return "-" if v is None else (f"{v:.{nd}f}" if isinstance(v, float) else str(v))


def _print_tables(d: dict) -> None:
    if d.get("detection"):
        tids = sorted(d["detection"]["fused"], key=int)
        print("\ndetection rate (%)")
        print("source     " + " ".join(f"{t:>6}" for t in tids))
        for src in sorted(d["detection"], key=lambda k: (k == "fused", k)):
            row = d["detection"][src]
            name = "proposed" if src == "fused" else src
            print(f"{name:<10} " + " ".join(f"{_fmt(row[t], 0):>6}" for t in tids))
    if d.get("rpm_error"):
        per = d["rpm_error"]["per_target"]
        print("\nrate error (rpm)")
        print("target     " + " ".join(f"{t:>6}" for t in sorted(per, key=int)) + "   mean")
        print("           " + " ".join(f"{_fmt(per[t]):>6}" for t in sorted(per, key=int))
              + f" {_fmt(d['rpm_error']['mean']):>6}")


def cmd_report(args) -> int:
    d = load_report(args.run_dir).to_dict()
    print(f"radars {d['radars']}, {d['n_windows']} window(s), stages {','.join(d['stages'])}")
    for rid, cl in d["clusters"].items():
        print(f"radar {rid} clusters per window: {[len(c) for c in cl]}")
    for rid, al in d["alignment"].items():
        c = al["correlation"]
        print(f"\ncorrelation, radar 1 rows x radar {rid} columns")
        print("    " + " ".join(f"{l:>5}" for l in c["labels2"]))
        for lab, row in zip(c["labels1"], c["values"]):
            print(f"{lab:>3} " + " ".join(f"{v:5.2f}" for v in row))
        for stage in ("seed", "refined"):
            t = al[stage]
            print(f"{stage:>8}: x={t['x']:.3f} m  y={t['y']:.3f} m  theta={t['theta']:.3f} rad"
                  f"  residual={al[stage + '_residual']:.4f} m")
        a = al["association"]
        print("pairs: " + " ".join(f"({p},{q})" for p, q in a["pairs"])
              + f"  unpaired radar 1: {a['unpaired_1']}  unpaired radar {rid}: {a['unpaired_2']}")
        if al["low_confidence"]:
            print("warning: fewer than two gated pairs, seed transform kept")
    _print_tables(d)
    return 0


def build_parser() -> argparse.ArgumentParser:
    p = argparse.ArgumentParser(prog="multiradar", description=__doc__)
    p.add_argument("--log-level", default="WARNING", help="logging level (default WARNING)")
    sub = p.add_subparsers(dest="command", required=True)

    def with_config(sp):
        sp.add_argument("-c", "--config", required=True, help="pipeline config file (.cfg)")
        sp.add_argument("--seed", type=int, default=None, help="override the config seed")

    sp = sub.add_parser("simulate", help="synthesize radar cubes and ground truth")
    with_config(sp)
    sp.add_argument("-o", "--out", required=True, help="directory for cubes, truth.json, scene.cfg")
    sp.set_defaults(func=cmd_simulate)

    sp = sub.add_parser("run", help="run the pipeline and write CSV/JSON artifacts")
    with_config(sp)
    sp.add_argument("-o", "--out", default=None, help="output directory (default: config output_dir)")
    sp.add_argument("--until", choices=STAGES, default="evaluate", help="last stage to run")
    sp.add_argument("--disable-radar", type=int, action="append", default=[],
                    help="drop a radar by id (repeatable)")
    sp.add_argument("--image-dumps", action="store_true", help="write per-window image containers")
    sp.set_defaults(func=cmd_run)

    sp = sub.add_parser("evaluate", help="score a finished run against ground truth")
    sp.add_argument("run_dir")
    sp.add_argument("--truth", default=None, help="truth.json (default: from the run's config)")
    sp.add_argument("--gate", type=float, default=0.5, help="match distance in meters")
    sp.set_defaults(func=cmd_evaluate)

    sp = sub.add_parser("compare", help="diff two reports; exit 1 if they differ")
    sp.add_argument("a")
    sp.add_argument("b")
    sp.add_argument("--rtol", type=float, default=0.0)
    sp.add_argument("--atol", type=float, default=0.0)
    sp.add_argument("--max-lines", type=int, default=50)
    sp.set_defaults(func=cmd_compare)

    sp = sub.add_parser("report", help="print the tables of a finished run")
    sp.add_argument("run_dir")
    sp.set_defaults(func=cmd_report)
    return p


def main(argv=None) -> int:
    args = build_parser().parse_args(argv)
    logging.basicConfig(level=getattr(logging, str(args.log_level).upper(), logging.WARNING),
                        format="%(levelname)s %(name)s: %(message)s")
    try:
        return args.func(args)
    except StageError as exc:
        print(f"error: {exc}", file=sys.stderr)
        return 3
    except (ConfigError, FileNotFoundError) as exc:
        print(f"error: {exc}", file=sys.stderr)
        return 2


if __name__ == "__main__":
    sys.exit(main())
