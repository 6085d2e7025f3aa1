"""How well does the steady-state rate model track the pulse simulation?

Two situations are compared.  The first is a merger fed by independent
Poisson sources, where the dead-time formula holds.  The second is a neuron
whose input reaches a merger along two equal-delay paths: the copies arrive
together, the merger collapses them, and the independence assumption behind
the rate model breaks down.
"""

from sfqnn import EngineConfig, parse_netlist, propagate_rates, simulate
from sfqnn.ratemodel import merger_rate

cfg = EngineConfig(duration=200_000.0, seed=11)

print("merger with 5 ps dead time (drop mode), two Poisson sources")
print(f"{'each GHz':>9} {'model':>8} {'events':>8}")
for rate in (5.0, 20.0, 50.0, 100.0):
    text = (f"node source a rate={rate}GHz process=poisson\n"
            f"node source b rate={rate}GHz process=poisson\n"
            "node merger m t_dead=5ps mode=drop\nnode probe p\n"
            "edge a m\nedge b m\nedge m p\n")
    spec, diags = parse_netlist(text)
    assert not diags, diags
    model = float(merger_rate(5.0, [rate, rate], "drop"))
    print(f"{rate:9.1f} {model:8.2f} {simulate(spec, cfg).probe_rates['p']:8.2f}")

text = """\
node source s rate=20GHz
node splitter sp fanout=2 delay=5ps
node synapse w1 i_b=200uA
node synapse w2 i_b=200uA
node merger m t_dead=1ps mode=hold
node probe p
edge s sp
edge sp.0 w1
edge sp.1 w2
edge w1 m
edge w2 m
edge m p
"""
spec, diags = parse_netlist(text)
assert not diags, diags
model = propagate_rates(spec, {})["p"]
events = simulate(spec, cfg).probe_rates["p"]
print(f"\nreconvergent fan-out of a 20 GHz train: model {model:.1f} GHz, events {events:.1f} GHz")
print("both copies arrive in the same instant, so the merger passes one pulse, not two")
