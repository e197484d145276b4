"""Near-real-time mode: warm-starting along a cloud sequence.

Only the first pair of a stream pays the full optimization cost. Every
later pair copies its initial flow from the nearest neighbor in the
previous frame and keeps the previous sensor-motion estimate, so ~30
iterations suffice.

Run: python demos/04_sequence_warm_start.py
"""

import numpy as np

from flowopt import epe, eped, gen_sequence, optimize_pair, optimize_sequence, preset, profile, total_flow

seq = gen_sequence(preset("sequence5"), seed=7)
print(f"{len(seq.clouds)} frames of {len(seq.clouds[0])} points, "
      "constant object velocity")

hp = profile("kitti")
estimates = optimize_sequence(seq.clouds, hp, warm_iters=30)

print("\npair  iterations  wall(s)  EPE vs ground truth")
first = estimates[0].diagnostics.wall_time
for i, est in enumerate(estimates):
    flows = total_flow(est.flow, est.motion, seq.clouds[i])
    err = epe(flows, seq.gt_flows[i])
    d = est.diagnostics
    print(f"  {i}    {len(d.records):4d}      {d.wall_time:6.2f}   {err:.4f}"
          + ("" if i == 0 else f"   ({d.wall_time / first:4.0%} of first pair)"))

print("\nHow much accuracy does the 30-iteration shortcut cost?")
for i in range(1, len(estimates)):
    full = optimize_pair(seq.clouds[i], seq.clouds[i + 1], hp)
    warm_flow = total_flow(estimates[i].flow, estimates[i].motion, seq.clouds[i])
    full_flow = total_flow(full.flow, full.motion, seq.clouds[i])
    print(f"  pair {i}: flow difference warm-vs-full {eped(full_flow, warm_flow):.4f} m")
