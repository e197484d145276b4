"""The command-line workflow end to end, driven from Python.

synth -> estimate -> evaluate -> ablate, exercising the binary cloud/flow
formats on disk. Equivalent shell commands are printed as it goes.

Run: python demos/06_file_formats_and_cli.py
"""

import json
import tempfile
from pathlib import Path

from flowopt.cli import main

work = Path(tempfile.mkdtemp(prefix="flowopt_demo_"))
print(f"working in {work}\n")


def sh(args):
    print("$ flowopt " + " ".join(args))
    code = main(args)
    assert code == 0, f"exit {code}"


scene_dir = work / "scene"
sh(["synth", "--preset", "occluded", "--seed", "5", "--out-dir", str(scene_dir)])
manifest = json.loads((scene_dir / "scene.json").read_text())
print(f"  -> {manifest['n_source']} source points, "
      f"{manifest['n_target']} target points after occlusion drop\n")

cfg = work / "hp.json"
cfg.write_text(json.dumps({"profile": "kitti", "max_iters": 300}))
flow_file = work / "estimated.offl"
sh(["estimate", "--source", str(scene_dir / "source.ofpc"),
    "--target", str(scene_dir / "target.ofpc"),
    "--out", str(flow_file), "--config", str(cfg)])
diag = json.loads(Path(str(flow_file) + ".diag.json").read_text())
print(f"  -> {diag['iterations']} iterations, stop: {diag['stop_reason']}, "
      f"{diag['wall_time']:.1f}s\n")

sh(["evaluate", "--est", str(flow_file), "--gt", str(scene_dir / "gt_flow.offl"),
    "--out", str(work / "metrics.json")])
print("  -> " + (work / "metrics.json").read_text().replace("\n", " ") + "\n")

sh(["ablate", "--source", str(scene_dir / "source.ofpc"),
    "--target", str(scene_dir / "target.ofpc"),
    "--gt", str(scene_dir / "gt_flow.offl"),
    "--out", str(work / "ablation.json"), "--config", str(cfg)])
table = json.loads((work / "ablation.json").read_text())
print("  config               EPE")
for name, entry in table.items():
    print(f"  {name:20s} {entry['epe']:.4f}")
