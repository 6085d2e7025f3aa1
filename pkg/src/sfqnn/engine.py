"""Deterministic event-driven execution of a validated network.

Events are ordered by ``(time, node rank, port priority, sequence)`` where the
node rank is the node's position in a topological order.  Because synapses,
mergers and neurons add no delay, every event a node will ever receive at
time ``t`` has been queued before the node handles its first event at ``t``;
inhibitory inputs are then handled before excitatory ones.  This makes each
node behave exactly like the corresponding whole-train function in
:mod:`sfqnn.devices`.
"""

from __future__ import annotations

import csv
import heapq
import io
import zlib
from dataclasses import dataclass, field
from pathlib import Path

from . import devices as dv
from .netgraph import (NetlistError, NetworkSpec, errors, in_port, splitter_params,
                       topological_order, validate)
from .pulsecore import E_SWITCH_J, PulseTrain, measure_rate, poisson_train, regular_train

DEFAULT_EVENT_CAP = 10**8

# port priorities: stored merger pulses first, then inhibitory, then the rest
_RELEASE, _INH, _IN = 0, 1, 2


class EventOverflow(RuntimeError):
    """The event budget of a simulation was exhausted."""


@dataclass(frozen=True)
class EngineConfig:
    duration: float = 10_000.0
    seed: int = 0
    transient_skip_fraction: float = 0.2
    trace_states: bool = False
    event_cap: int = DEFAULT_EVENT_CAP

    def __post_init__(self):
        if not self.duration > 0:
            raise ValueError(f"duration must be > 0, got {self.duration}")
        if not 0 <= self.transient_skip_fraction < 1:
            raise ValueError("transient_skip_fraction must lie in [0, 1)")

    @classmethod
    def from_spec(cls, spec: NetworkSpec, **overrides) -> "EngineConfig":
        return cls(**{"duration": spec.duration, "seed": spec.seed, **overrides})


@dataclass
class SimResult:
    probe_trains: dict[str, PulseTrain]
    probe_rates: dict[str, float]
    switch_count: int
    energy: float
    node_switches: dict[str, int] = field(default_factory=dict)
    traces: dict[str, dv.NeuronTrace] | None = None
    window: tuple[float, float] = (0.0, 0.0)


@dataclass(frozen=True)
class EnergyReport:
    per_node: dict[str, int]
    total_switches: int
    joules: float


def node_seed(seed: int, name: str) -> list[int]:
    """RNG seed for one node; independent of every other node in the graph."""
    return [int(seed), zlib.crc32(name.encode("utf-8"))]


def synapse_params(params: dict) -> dv.SynapseParams:
    base = dv.SynapseParams(
        i_c=params.get("i_c", 150.0),
        i_center=params.get("i_center", 100.0),
        sigma_gz=params.get("sigma_gz", 15.0),
    )
    if "weight" in params:
        return base.with_bias(dv.bias_for_weight(base, params["weight"]))
    return base.with_bias(params["i_b"])


def neuron_params(params: dict) -> dv.NeuronParams:
    return dv.NeuronParams(params["theta"], params["tau_leak"], params["t_ref"],
                           params.get("clamp_floor", 0.0))


def merger_params(params: dict) -> dv.MergerParams:
    return dv.MergerParams(params.get("t_dead", 30.0), params.get("mode", "hold"))


def source_train(name: str, params: dict, cfg: EngineConfig) -> PulseTrain:
    rate = params["rate"]
    if params.get("process", "regular") == "poisson":
        return poisson_train(rate, cfg.duration, node_seed(cfg.seed, name))
    phase = params.get("phase", 0.0)
    return regular_train(rate, cfg.duration, phase if rate > 0 else 0.0)


def simulate(spec: NetworkSpec, cfg: EngineConfig | None = None) -> SimResult:
    """Run ``spec`` and return probe trains, steady-state rates and switch counts."""
    if cfg is None:
        cfg = EngineConfig.from_spec(spec)
    diags = validate(spec)
    if errors(diags):
        raise NetlistError(diags)

    order = topological_order(spec)
    rank = {name: i for i, name in enumerate(order)}
    nodes = {n.name: n for n in spec.nodes}
    fanout: dict[tuple[str, int | None], tuple[int, str, int]] = {}
    for e in spec.edges:
        dst = nodes[e.dst]
        port = _INH if in_port(dst.kind, e.dst_port) == "inh" else _IN
        fanout[(e.src, e.src_port)] = (rank[e.dst], e.dst, port)

    state: dict[str, object] = {}
    for name in order:
        n = nodes[name]
        if n.kind == "synapse":
            state[name] = dv.SynapseState(synapse_params(n.params), node_seed(cfg.seed, name))
        elif n.kind == "neuron":
            state[name] = dv.NeuronState(neuron_params(n.params), record=cfg.trace_states)
        elif n.kind == "merger":
            state[name] = dv.MergerState(merger_params(n.params))
        elif n.kind == "splitter":
            state[name] = splitter_params(n)
        elif n.kind == "source":
            state[name] = iter(source_train(name, n.params, cfg).times.tolist())
    probes: dict[str, list[float]] = {name: [] for name in order if nodes[name].kind == "probe"}
    switches = dict.fromkeys(order, 0)
    fired: dict[str, list[float]] = {name: [] for name in order if nodes[name].kind == "neuron"}

    heap: list[tuple] = []
    seq = 0
    duration = cfg.duration

    def push(t: float, r: int, name: str, port: int) -> None:
        nonlocal seq
        if t < duration:
            heapq.heappush(heap, (t, r, port, seq, name))
            seq += 1

    def emit(name: str, t: float, branch: int | None = None) -> None:
        target = fanout.get((name, branch))
        if target is not None:
            push(t, target[0], target[1], target[2])

    def next_source_pulse(name: str) -> None:
        t = next(state[name], None)
        if t is not None:
            push(t, rank[name], name, _IN)

    for name in order:
        if nodes[name].kind == "source":
            next_source_pulse(name)

    processed = 0
    while heap:
        t, _, port, _, name = heapq.heappop(heap)
        processed += 1
        if processed > cfg.event_cap:
            raise EventOverflow(f"more than {cfg.event_cap} events; raise event_cap or shorten the run")
        kind = nodes[name].kind
        st = state.get(name)
        if kind == "source":
            emit(name, t)
            next_source_pulse(name)
        elif kind == "synapse":
            switches[name] += 1
            if st.feed(t):
                emit(name, t)
        elif kind == "neuron":
            switches[name] += 1
            if st.feed(t, dv.INH if port == _INH else dv.EXC):
                switches[name] += 1
                fired[name].append(t)
                emit(name, t)
        elif kind == "merger":
            if port == _RELEASE:
                due = st.pending if st.pending == t else None
                if due is not None:
                    st.release(t)
                    switches[name] += 1
                    emit(name, t)
                continue
            out, stored = st.feed(t)
            for u in out:
                switches[name] += 1
                emit(name, u)
            if stored is not None:
                push(stored, rank[name], name, _RELEASE)
        elif kind == "splitter":
            switches[name] += st.fanout
            for branch in range(st.fanout):
                emit(name, t + st.delay, branch)
        elif kind == "probe":
            probes[name].append(t)

    start, end = cfg.transient_skip_fraction * duration, duration
    trains = {k: PulseTrain(v, duration) for k, v in probes.items()}
    rates = {k: measure_rate(tr, start, end).rate for k, tr in trains.items()}
    total = int(sum(switches.values()))
    traces = None
    if cfg.trace_states:
        traces = {name: dv.NeuronTrace(state[name].samples, PulseTrain(times, duration))
                  for name, times in fired.items()}
    return SimResult(trains, rates, total, total * E_SWITCH_J, switches, traces, (start, end))


def energy_report(result: SimResult) -> EnergyReport:
    per_node = {k: v for k, v in result.node_switches.items() if v}
    total = int(sum(per_node.values()))
    return EnergyReport(per_node, total, total * E_SWITCH_J)


def rates_csv(result: SimResult, path: str | Path | None = None) -> str:
    buf = io.StringIO()
    w = csv.writer(buf, lineterminator="\n")
    w.writerow(["probe", "rate_ghz"])
    for name in sorted(result.probe_rates):
        w.writerow([name, repr(result.probe_rates[name])])
    text = buf.getvalue()
    if path is not None:
        Path(path).write_text(text)
    return text


def trace_csv(trace: dv.NeuronTrace, path: str | Path | None = None) -> str:
    buf = io.StringIO()
    w = csv.writer(buf, lineterminator="\n")
    w.writerow(["t_ps", "state"])
    for t, s in trace.samples:
        w.writerow([repr(t), repr(s)])
    text = buf.getvalue()
    if path is not None:
        Path(path).write_text(text)
    return text


def run_many(jobs, workers: int | None = None) -> list[SimResult]:
    """Simulate independent ``(spec, cfg)`` pairs, in parallel when ``workers > 1``."""
    jobs = list(jobs)
    if not workers or workers <= 1 or len(jobs) < 2:
        return [simulate(s, c) for s, c in jobs]
    from concurrent.futures import ProcessPoolExecutor
    with ProcessPoolExecutor(max_workers=workers) as pool:
        return list(pool.map(_simulate_job, jobs, chunksize=max(1, len(jobs) // (4 * workers))))


def _simulate_job(job):
    return simulate(*job)


__all__ = [
    "EngineConfig", "EnergyReport", "EventOverflow", "SimResult", "energy_report",
    "node_seed", "rates_csv", "run_many", "simulate", "trace_csv",
]
