"""Behavioral models of the SFQ primitives.

Each device exists in two forms: a small stateful stepper that consumes one
pulse at a time (used by the event engine) and a pure function over whole
pulse trains built on top of that stepper.  Sharing the stepper keeps the two
forms identical by construction.
"""

from __future__ import annotations

import math
from dataclasses import dataclass, field

import numpy as np
from scipy.special import ndtr, ndtri

from .pulsecore import PulseTrain

GREY_ZONE_CLAMP = 6.0
"""Exact weights 0 and 1 map to biases this many grey-zone widths off center."""


@dataclass(frozen=True)
class SynapseParams:
    i_c: float = 150.0
    i_center: float = 100.0
    sigma_gz: float = 15.0
    i_b: float = 100.0

    def __post_init__(self):
        if not self.sigma_gz > 0:
            raise ValueError(f"sigma_gz must be > 0, got {self.sigma_gz}")

    def with_bias(self, i_b: float) -> "SynapseParams":
        return SynapseParams(self.i_c, self.i_center, self.sigma_gz, i_b)


@dataclass(frozen=True)
class NeuronParams:
    """LIF loop parameters in units of stored fluxons.

    ``tau_leak`` may be ``math.inf`` for a lossless loop.
    """

    theta: float = 1.5
    tau_leak: float = 40.0
    t_ref: float = 30.0
    clamp_floor: float = 0.0

    def __post_init__(self):
        if not self.theta > 0:
            raise ValueError(f"theta must be > 0, got {self.theta}")
        if not self.tau_leak > 0:
            raise ValueError(f"tau_leak must be > 0, got {self.tau_leak}")
        if not self.t_ref >= 0:
            raise ValueError(f"t_ref must be >= 0, got {self.t_ref}")


@dataclass(frozen=True)
class MergerParams:
    """Confluence buffer.

    In ``hold`` mode a pulse arriving while the output stage recovers is
    stored and released once ``t_dead`` has elapsed; any further pulse that
    arrives while one is stored is absorbed.  In ``drop`` mode every pulse
    inside the dead time is absorbed.  Coincident pulses always collapse.
    """

    t_dead: float = 30.0
    mode: str = "hold"

    def __post_init__(self):
        if not self.t_dead >= 0:
            raise ValueError(f"t_dead must be >= 0, got {self.t_dead}")
        if self.mode not in ("hold", "drop"):
            raise ValueError(f"merger mode must be 'hold' or 'drop', got {self.mode!r}")


@dataclass(frozen=True)
class SplitterParams:
    delay: float = 5.0
    fanout: int = 2

    def __post_init__(self):
        if not self.delay >= 0:
            raise ValueError(f"delay must be >= 0, got {self.delay}")
        if int(self.fanout) != self.fanout or self.fanout < 2:
            raise ValueError(f"fanout must be an integer >= 2, got {self.fanout}")


@dataclass
class NeuronTrace:
    samples: list[tuple[float, float]] = field(default_factory=list)
    output: PulseTrain = field(default_factory=PulseTrain)


# -- synapse -----------------------------------------------------------------

def pass_probability(p: SynapseParams) -> float:
    """Probability that the comparator passes a fluxon at bias ``p.i_b``."""
    return float(ndtr((p.i_b - p.i_center) / p.sigma_gz))


def bias_for_weight(p: SynapseParams, w: float) -> float:
    """Bias current (uA) whose pass probability equals ``w``."""
    if not 0 <= w <= 1:
        raise ValueError(f"weight must lie in [0, 1], got {w}")
    if w == 0:
        return p.i_center - GREY_ZONE_CLAMP * p.sigma_gz
    if w == 1:
        return p.i_center + GREY_ZONE_CLAMP * p.sigma_gz
    return float(p.i_center + p.sigma_gz * ndtri(w))


class SynapseState:
    """Bernoulli gate drawing one uniform per arriving pulse."""

    def __init__(self, p: SynapseParams, seed):
        self.p_pass = pass_probability(p)
        self.rng = np.random.default_rng(seed)

    def feed(self, t: float) -> bool:
        return self.rng.random() < self.p_pass


def synapse_gate(p: SynapseParams, train: PulseTrain, seed) -> PulseTrain:
    """Keep each pulse independently with the synapse's pass probability."""
    rng = np.random.default_rng(seed)
    u = rng.random(len(train))
    keep = u < pass_probability(p)
    return PulseTrain(train.times[keep], train.duration)


# -- neuron ------------------------------------------------------------------

EXC, INH = +1, -1


class NeuronState:
    """Leaky integrate-and-fire loop with soft reset and a refractory window.

    Between events the stored flux decays exponentially with ``tau_leak``.
    Each input adds or removes one fluxon and the state is clamped at
    ``clamp_floor``.  Whenever the state reaches ``theta`` it is reduced by
    ``theta``; an output pulse is emitted only outside the refractory window,
    and at most one per input event.
    """

    def __init__(self, p: NeuronParams, record: bool = False):
        self.p = p
        self.state = 0.0
        self.t_last = 0.0
        self.last_out = -math.inf
        self.samples: list[tuple[float, float]] | None = [] if record else None

    def _decay_to(self, t: float) -> None:
        if self.state != 0.0 and math.isfinite(self.p.tau_leak):
            self.state *= math.exp(-(t - self.t_last) / self.p.tau_leak)
        self.t_last = t

    def feed(self, t: float, sign: int) -> bool:
        p = self.p
        self._decay_to(t)
        if self.samples is not None:
            self.samples.append((t, self.state))
        self.state = max(self.state + sign, p.clamp_floor)
        fired = False
        if self.state >= p.theta:
            fired = t - self.last_out >= p.t_ref
            while self.state >= p.theta:
                self.state -= p.theta
            if fired:
                self.last_out = t
        if self.samples is not None:
            self.samples.append((t, self.state))
        return fired


def merge_ports(excitatory: PulseTrain, inhibitory: PulseTrain) -> list[tuple[float, int]]:
    """Time-ordered (t, sign) events, inhibitory first on ties."""
    ev = [(t, 0) for t in inhibitory] + [(t, 1) for t in excitatory]
    ev.sort()
    return [(t, EXC if k else INH) for t, k in ev]


def neuron_process(p: NeuronParams, excitatory: PulseTrain,
                   inhibitory: PulseTrain | None = None) -> NeuronTrace:
    if inhibitory is None:
        inhibitory = PulseTrain((), excitatory.duration)
    duration = max(excitatory.duration, inhibitory.duration)
    cell = NeuronState(p, record=True)
    out = [t for t, sign in merge_ports(excitatory, inhibitory) if cell.feed(t, sign)]
    return NeuronTrace(cell.samples, PulseTrain(out, duration))


# -- merger ------------------------------------------------------------------

class MergerState:
    """Dead-time confluence buffer; see :class:`MergerParams`."""

    def __init__(self, p: MergerParams):
        self.p = p
        self.last_emit = -math.inf
        self.pending: float | None = None

    def release(self, t: float) -> float | None:
        """Emit the stored pulse if it is due at or before ``t``."""
        if self.pending is not None and self.pending <= t:
            due, self.pending = self.pending, None
            self.last_emit = due
            return due
        return None

    def feed(self, t: float) -> tuple[list[float], float | None]:
        """Consume a pulse at ``t``.

        Returns the pulses emitted so far (a stored pulse that became due,
        then possibly ``t`` itself) and the time of a newly stored pulse.
        """
        emitted = []
        due = self.release(t)
        if due is not None:
            emitted.append(due)
        if self.pending is not None or t == self.last_emit:
            return emitted, None
        if t - self.last_emit >= self.p.t_dead:
            self.last_emit = t
            emitted.append(t)
            return emitted, None
        if self.p.mode == "hold":
            self.pending = self.last_emit + self.p.t_dead
            return emitted, self.pending
        return emitted, None


def merger_process(p: MergerParams, inputs: list[PulseTrain]) -> PulseTrain:
    if not inputs:
        raise ValueError("merger needs at least one input train")
    duration = max(tr.duration for tr in inputs)
    events = np.sort(np.concatenate([tr.times for tr in inputs]))
    buf = MergerState(p)
    out: list[float] = []
    for t in events.tolist():
        emitted, _ = buf.feed(t)
        out.extend(emitted)
    tail = buf.pending
    if tail is not None and tail < duration:
        out.append(tail)
    return PulseTrain(out, duration)


# -- splitter ----------------------------------------------------------------

def splitter_process(p: SplitterParams, train: PulseTrain) -> list[PulseTrain]:
    """Copy the train onto every branch, delayed by one stage."""
    t = train.times + p.delay
    t = t[t < train.duration]
    return [PulseTrain(t, train.duration) for _ in range(p.fanout)]
