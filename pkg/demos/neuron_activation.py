"""Neuron rate transfer and the fitted activation curve.

The leaky integrate-and-fire loop is driven by a regular source at a range of
input rates.  The measured output rates trace out a rectifier that saturates
near 1/t_ref.  A smooth activation model is fitted to the measurements and
the residuals are printed side by side.
"""

import numpy as np

from sfqnn import EngineConfig, NeuronParams, RATE_NORM_GHZ, fit_activation
from sfqnn.ratemodel import characterize_neuron

neuron = NeuronParams()  # theta 1.5, tau_leak 40 ps, t_ref 30 ps
cfg = EngineConfig(duration=20_000.0, seed=3)
grid = np.linspace(0.0, 2.0, 21) * RATE_NORM_GHZ

samples = characterize_neuron(neuron, grid, cfg)
fit = fit_activation(samples)
m = fit.model
print(f"fitted model: r_sat={m.r_sat:.2f} GHz  r_thr={m.r_thr:.2f} GHz  gain={m.gain:.3f}  beta={m.beta:.3f}")
print(f"rms residual {fit.rms:.3f} GHz ({fit.rms / m.r_sat:.1%} of saturation)")
print(f"refractory ceiling 1/t_ref = {1e3 / neuron.t_ref:.2f} GHz\n")

print(f"{'r_in':>6} {'measured':>9} {'model':>8}   (normalized to {RATE_NORM_GHZ} GHz)")
for r_in, r_out in samples:
    print(f"{r_in / RATE_NORM_GHZ:6.2f} {r_out / RATE_NORM_GHZ:9.3f} {float(m(r_in)) / RATE_NORM_GHZ:8.3f}")
