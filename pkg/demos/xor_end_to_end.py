"""XOR from characterization to pulse-level verification.

1. characterize the XOR neuron preset and fit its activation;
2. train a 2-2-1 rate network (behind two fixed input normalizers);
3. lower the trained weights onto synapses, mergers, splitters and neurons;
4. simulate the four logic corners at pulse level and report energy;
5. sweep both inputs to draw a coarse phase diagram.
"""

import time

import numpy as np
from scipy import ndimage

from sfqnn import EngineConfig, RATE_NORM_GHZ, energy_report, serialize, simulate
from sfqnn.trainer import TrainConfig, XorLevels, forward, xor_pipeline

t0 = time.perf_counter()
levels = XorLevels()
run = xor_pipeline(TrainConfig(seed=1), levels)
print(f"fit rms {run.fit.rms:.3f} GHz; trained {len(run.curve) - 1} epochs, "
      f"final loss {run.curve[-1]:.3g} ({time.perf_counter() - t0:.2f} s)")

spec = run.spec
kinds = {}
for n in spec.nodes:
    kinds[n.kind] = kinds.get(n.kind, 0) + 1
print("lowered network:", ", ".join(f"{v} {k}" for k, v in sorted(kinds.items())))
print("\nfirst lines of the netlist:")
print("\n".join(serialize(spec).splitlines()[:6]), "\n...")

print(f"\n{'corner':>6} {'rate model':>11} {'pulse sim':>10} {'switches':>9} {'energy J':>10}")
lo, hi = levels.low, levels.high
cfg = EngineConfig(duration=spec.duration, seed=spec.seed)
for a, b in ((lo, lo), (lo, hi), (hi, lo), (hi, hi)):
    driven = spec.with_source_rates({"in0": a * RATE_NORM_GHZ, "in1": b * RATE_NORM_GHZ})
    result = simulate(driven, cfg)
    report = energy_report(result)
    predicted = float(forward(run.mlp, [[a, b]])[0, 0])
    measured = result.probe_rates["out0"] / RATE_NORM_GHZ
    label = f"{int(a > 1)}{int(b > 1)}"
    print(f"{label:>6} {predicted:11.3f} {measured:10.3f} {report.total_switches:9d} {report.joules:10.3g}")

axis = np.linspace(0.0, 2.0, 9)
grid = np.zeros((axis.size, axis.size))
short = EngineConfig(duration=4000.0, seed=spec.seed)
for i, a in enumerate(axis):
    for j, b in enumerate(axis):
        driven = spec.with_source_rates({"in0": a * RATE_NORM_GHZ, "in1": b * RATE_NORM_GHZ})
        grid[i, j] = simulate(driven, short).probe_rates["out0"] / RATE_NORM_GHZ

print("\nphase diagram (rows: in0 from 0 to 2, columns: in1 from 0 to 2, '#' = output >= 0.75)")
for row in grid:
    print("  " + "".join("#" if v >= 0.75 else "." for v in row))
_, regions = ndimage.label(grid >= 0.75)
print(f"{regions} high-output region(s)")
