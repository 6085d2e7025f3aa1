"""Stochastic synapse: pass probability across the comparator grey zone.

A synapse is a biased comparator that lets each arriving fluxon through with
a probability set by its bias current.  This script sweeps the bias, counts
how many pulses of a regular train survive, and prints the empirical fraction
next to the Gaussian-CDF model.  It then shows how a target weight maps back
to a bias.
"""

import numpy as np

from sfqnn import SynapseParams
from sfqnn.devices import bias_for_weight, pass_probability, synapse_gate
from sfqnn.pulsecore import regular_train

N_PULSES = 20_000
base = SynapseParams()
train = regular_train(20.0, N_PULSES * 50.0)  # 20 GHz, one pulse every 50 ps
print(f"grey zone centered at {base.i_center} uA, width {base.sigma_gz} uA; {len(train)} pulses per point\n")

print(f"{'bias uA':>8} {'measured':>9} {'model':>8} {'z-score':>8}")
for k, i_b in enumerate(np.linspace(55.0, 145.0, 10)):
    p = base.with_bias(float(i_b))
    kept = synapse_gate(p, train, seed=[7, k])
    p_emp = len(kept) / len(train)
    p_mod = pass_probability(p)
    sd = np.sqrt(max(p_mod * (1 - p_mod), 1e-12) / len(train))
    print(f"{i_b:8.1f} {p_emp:9.4f} {p_mod:8.4f} {(p_emp - p_mod) / sd:8.2f}")

print("\nweight -> bias current")
for w in (0.0, 0.1, 0.5, 0.9, 1.0):
    i_b = bias_for_weight(base, w)
    print(f"  w={w:.1f}  i_b={i_b:7.2f} uA  (pass probability {pass_probability(base.with_bias(i_b)):.4f})")
