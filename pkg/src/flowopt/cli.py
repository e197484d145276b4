"""Command-line interface: estimate, evaluate, synth, ablate, sequence.

Configuration precedence is built-in defaults < named profile < JSON config
file < command-line flags. The worker-thread count falls back to the
OPTFLOW_THREADS environment variable. Exit codes: 0 success, 1 validation
error, 2 I/O error.
"""

from __future__ import annotations

import argparse
import dataclasses
import json
import os
import sys
import time
from pathlib import Path

from .core import (FlowOptError, Hyperparams, InvalidConfig, PointCloud,
                   PROFILES)
from .io import read_flow, read_point_cloud, write_flow, write_point_cloud
from .metrics import MetricsReport, eped, evaluate_flow
from .optimizer import FlowEstimate, optimize_batched, optimize_pair, optimize_sequence
from .synth import PRESETS, gen_scene, gen_sequence, preset, total_flow

_HP_FIELDS = {f.name for f in dataclasses.fields(Hyperparams)}


def load_hyperparams(config_path: str | None, profile_name: str | None,
                     **overrides) -> Hyperparams:
    """Merge defaults, profile, config document, and explicit overrides."""
    doc: dict = {}
    if config_path:
        doc = json.loads(Path(config_path).read_text(encoding="utf-8"))
        if not isinstance(doc, dict):
            raise InvalidConfig(f"{config_path}: config must be a JSON object")
        unknown = sorted(set(doc) - _HP_FIELDS - {"profile"})
        if unknown:
            raise InvalidConfig(f"{config_path}: unknown config key {unknown[0]!r}")

    values: dict = {}
    name = profile_name or doc.get("profile")
    if name is not None:
        if name not in PROFILES:
            raise InvalidConfig(
                f"unknown profile {name!r}; expected one of {sorted(PROFILES)}")
        values.update(PROFILES[name])
    values.update({k: v for k, v in doc.items() if k != "profile"})
    values.update({k: v for k, v in overrides.items() if v is not None})
    return Hyperparams(**values)


def _report_json(report: MetricsReport) -> str:
    def sig(x: float) -> float:
        return float(f"{x:.6g}")

    ordered = {
        "epe": sig(report.epe),
        "acc_strict": sig(report.acc_strict),
        "acc_relax": sig(report.acc_relax),
        "angle_error": sig(report.angle_error),
        "outlier_frac": sig(report.outlier_frac),
        "n_points": report.n_points,
        "skipped_angle_pairs": report.skipped_angle_pairs,
    }
    return json.dumps(ordered, indent=2)


def _diagnostics_json(est: FlowEstimate) -> str:
    diag = est.diagnostics
    return json.dumps({
        "stop_reason": diag.stop_reason,
        "wall_time": diag.wall_time,
        "iterations": len(diag.records),
        "warnings": list(diag.warnings),
        "trace": [dataclasses.asdict(r) for r in diag.records],
    }, indent=2)


def _threads(args) -> int:
    if args.threads is not None:
        return args.threads
    return int(os.environ.get("OPTFLOW_THREADS", "1"))


# -- subcommands --------------------------------------------------------------

def cmd_estimate(args) -> int:
    hp = load_hyperparams(args.config, args.profile, seed=args.seed)
    source = read_point_cloud(args.source)
    target = read_point_cloud(args.target)
    threads = _threads(args)
    if args.batched:
        est = optimize_batched(source, target, hp, threads=threads,
                               workers=threads)
    else:
        est = optimize_pair(source, target, hp, workers=threads)
    out = Path(args.out)
    write_flow(out, total_flow(est.flow, est.motion, source), est.motion)
    Path(str(out) + ".diag.json").write_text(_diagnostics_json(est),
                                             encoding="utf-8")
    return 0


def cmd_evaluate(args) -> int:
    est_flow, _ = read_flow(args.est)
    gt_flow, _ = read_flow(args.gt)
    text = _report_json(evaluate_flow(est_flow, gt_flow))
    if args.out:
        Path(args.out).write_text(text + "\n", encoding="utf-8")
    else:
        print(text)
    return 0


def cmd_synth(args) -> int:
    cfg = preset(args.preset)
    out_dir = Path(args.out_dir)
    out_dir.mkdir(parents=True, exist_ok=True)

    manifest = {
        "preset": args.preset,
        "seed": args.seed,
        "config": dataclasses.asdict(cfg),
        "gt_motion": {"r": None, "t": None},
        "files": {},
    }

    if cfg.frames == 2:
        scene = gen_scene(cfg, args.seed)
        write_point_cloud(out_dir / "source.ofpc", scene.source)
        write_point_cloud(out_dir / "target.ofpc", scene.target)
        write_flow(out_dir / "gt_flow.offl", scene.gt_flow, scene.gt_motion)
        manifest["gt_motion"] = {"r": scene.gt_motion.r.tolist(),
                                 "t": scene.gt_motion.t.tolist()}
        manifest["files"] = {"source": "source.ofpc", "target": "target.ofpc",
                             "gt_flow": "gt_flow.offl"}
        manifest["n_source"] = len(scene.source)
        manifest["n_target"] = len(scene.target)
        manifest["object_count"] = cfg.object_count
        manifest["n_dynamic"] = int(scene.dynamic_mask.sum())
    else:
        seq = gen_sequence(cfg, args.seed)
        clouds = []
        flows = []
        for i, cloud in enumerate(seq.clouds):
            name = f"cloud_{i:02d}.ofpc"
            write_point_cloud(out_dir / name, cloud)
            clouds.append(name)
        for i, fl in enumerate(seq.gt_flows):
            name = f"gt_flow_{i:02d}.offl"
            write_flow(out_dir / name, fl, seq.gt_motion)
            flows.append(name)
        manifest["gt_motion"] = {"r": seq.gt_motion.r.tolist(),
                                 "t": seq.gt_motion.t.tolist()}
        manifest["files"] = {"clouds": clouds, "gt_flows": flows}
        manifest["n_points"] = len(seq.clouds[0])
        manifest["object_count"] = cfg.object_count
        manifest["n_dynamic"] = int(seq.dynamic_masks[0].sum())

    (out_dir / "scene.json").write_text(json.dumps(manifest, indent=2),
                                        encoding="utf-8")
    return 0


def run_ablations(source: PointCloud, target: PointCloud, hp: Hyperparams,
                  workers: int = 1) -> dict[str, FlowEstimate]:
    """The four standard configurations, same seed and inputs for each."""
    return {
        "full": optimize_pair(source, target, hp, workers=workers),
        "no_egomotion": optimize_pair(source, target, hp,
                                      with_egomotion=False, workers=workers),
        "fixed_threshold": optimize_pair(
            source, target,
            hp.with_overrides(d_init=2.0, d_floor=2.0), workers=workers),
        "hard_correspondence": optimize_pair(
            source, target, hp.with_overrides(k_local=1), workers=workers),
    }


def cmd_ablate(args) -> int:
    hp = load_hyperparams(args.config, args.profile, seed=args.seed)
    source = read_point_cloud(args.source)
    target = read_point_cloud(args.target)
    gt_flow, _ = read_flow(args.gt)

    table: dict[str, dict] = {}
    for name, est in run_ablations(source, target, hp,
                                   workers=_threads(args)).items():
        report = evaluate_flow(total_flow(est.flow, est.motion, source), gt_flow)
        table[name] = json.loads(_report_json(report))
    Path(args.out).write_text(json.dumps(table, indent=2), encoding="utf-8")
    return 0


def cmd_sequence(args) -> int:
    if len(args.clouds) < 2:
        raise InvalidConfig("sequence mode needs at least 2 cloud files")
    hp = load_hyperparams(args.config, args.profile, seed=args.seed)
    clouds = [read_point_cloud(p) for p in args.clouds]
    out_dir = Path(args.out_dir)
    out_dir.mkdir(parents=True, exist_ok=True)

    estimates = optimize_sequence(clouds, hp, warm_iters=args.warm_iters,
                                  workers=_threads(args))
    summary: dict = {"warm_iters": args.warm_iters, "pairs": []}
    for i, est in enumerate(estimates):
        write_flow(out_dir / f"flow_{i:02d}.offl",
                   total_flow(est.flow, est.motion, clouds[i]), est.motion)
        summary["pairs"].append({
            "pair": i,
            "wall_time": est.diagnostics.wall_time,
            "iterations": len(est.diagnostics.records),
            "stop_reason": est.diagnostics.stop_reason,
        })

    if args.eped:
        values = []
        for i in range(1, len(estimates)):
            full = optimize_pair(clouds[i], clouds[i + 1], hp,
                                 workers=_threads(args))
            warm_total = total_flow(estimates[i].flow, estimates[i].motion,
                                    clouds[i])
            full_total = total_flow(full.flow, full.motion, clouds[i])
            values.append(eped(full_total, warm_total))
        summary["eped"] = values

    (out_dir / "sequence.json").write_text(json.dumps(summary, indent=2),
                                           encoding="utf-8")
    return 0


# -- parser -------------------------------------------------------------------

def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(
        prog="flowopt",
        description="Runtime-optimized scene flow estimation for point cloud pairs")
    sub = parser.add_subparsers(dest="command", required=True)

    def common(p):
        # Choice validation happens in load_hyperparams/preset so that bad
        # names exit with the validation code (1), not argparse's 2.
        p.add_argument("--config", help="JSON config file")
        p.add_argument("--profile", help="named hyperparameter profile")
        p.add_argument("--threads", type=int, default=None,
                       help="worker threads (default $OPTFLOW_THREADS or 1)")
        p.add_argument("--seed", type=int, default=None)

    p = sub.add_parser("estimate", help="estimate flow for one cloud pair")
    p.add_argument("--source", required=True)
    p.add_argument("--target", required=True)
    p.add_argument("--out", required=True, help="output flow file")
    p.add_argument("--batched", action="store_true",
                   help="chunk large sources into 8192-point batches")
    common(p)
    p.set_defaults(func=cmd_estimate)

    p = sub.add_parser("evaluate", help="compare a flow file against ground truth")
    p.add_argument("--est", required=True)
    p.add_argument("--gt", required=True)
    p.add_argument("--out", help="write metrics JSON here instead of stdout")
    p.set_defaults(func=cmd_evaluate)

    p = sub.add_parser("synth", help="generate a synthetic scene")
    p.add_argument("--preset", required=True,
                   help=f"one of {', '.join(sorted(PRESETS))}")
    p.add_argument("--seed", type=int, default=0)
    p.add_argument("--out-dir", required=True)
    p.set_defaults(func=cmd_synth)

    p = sub.add_parser("ablate", help="run the four standard configurations")
    p.add_argument("--source", required=True)
    p.add_argument("--target", required=True)
    p.add_argument("--gt", required=True)
    p.add_argument("--out", required=True)
    common(p)
    p.set_defaults(func=cmd_ablate)

    p = sub.add_parser("sequence", help="warm-started multi-frame estimation")
    p.add_argument("--clouds", nargs="+", required=True)
    p.add_argument("--warm-iters", type=int, default=30)
    p.add_argument("--out-dir", required=True)
    p.add_argument("--eped", action="store_true",
                   help="also report warm-vs-full flow differences")
    common(p)
    p.set_defaults(func=cmd_sequence)

    return parser


def main(argv=None) -> int:
    args = build_parser().parse_args(argv)
    try:
        return args.func(args)
    except OSError as exc:
        print(f"error: {exc}", file=sys.stderr)
        return 2
    except FlowOptError as exc:
        print(f"error: {exc}", file=sys.stderr)
        return 1


if __name__ == "__main__":
    raise SystemExit(main())
