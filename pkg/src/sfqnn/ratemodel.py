"""Steady-state rate abstraction of spiking networks.

Under rate coding a synapse multiplies its input rate by its pass
probability, a confluence buffer adds rates up to its dead-time limit and a
neuron maps its net input rate through a saturating activation.  This module
provides those maps in differentiable form, evaluates them over a network
graph, and measures and fits neuron activation curves from event-driven runs.
"""

from __future__ import annotations

import math
from dataclasses import asdict, dataclass
from pathlib import Path

import numpy as np
from scipy.optimize import least_squares
from scipy.special import expit

from . import devices as dv
from .engine import EngineConfig, merger_params, run_many, synapse_params
from .netgraph import Edge, NetworkSpec, NodeDecl, in_port, topological_order
from .pulsecore import GHZ_PER_INV_PS, RATE_NORM_GHZ


@dataclass(frozen=True)
class ActivationModel:
    r_sat: float = RATE_NORM_GHZ
    r_thr: float = 10.0
    gain: float = 1.0
    beta: float = 1.0

    def __post_init__(self):
        for key in ("r_sat", "gain", "beta"):
            if not getattr(self, key) > 0:
                raise ValueError(f"{key} must be > 0, got {getattr(self, key)}")

    def __call__(self, r_net):
        return activation(self, r_net)

    def to_text(self) -> str:
        return "".join(f"{k}={v!r}\n" for k, v in asdict(self).items())

    @classmethod
    def from_text(cls, text: str) -> "ActivationModel":
        values = {}
        for line in text.splitlines():
            line = line.split("#", 1)[0].strip()
            if line:
                key, _, val = line.partition("=")
                values[key.strip()] = float(val)
        return cls(**values)

    def save(self, path: str | Path) -> None:
        Path(path).write_text(self.to_text())

    @classmethod
    def load(cls, path: str | Path) -> "ActivationModel":
        return cls.from_text(Path(path).read_text())


def _softplus(x, beta):
    z = np.asarray(x, dtype=float) / beta
    return beta * np.logaddexp(0.0, z)


def activation(m: ActivationModel, r_net):
    """Output rate (GHz) for net input rate ``r_net`` (GHz).

    A softplus rectifier of width ``beta`` around ``r_thr`` followed by a
    tanh cap at ``r_sat``.
    """
    u = m.gain * _softplus(np.asarray(r_net, dtype=float) - m.r_thr, m.beta) / m.r_sat
    out = m.r_sat * np.tanh(u)
    return float(out) if np.ndim(out) == 0 else out


def activation_grad(m: ActivationModel, r_net):
    """Derivative of :func:`activation` with respect to ``r_net``."""
    x = np.asarray(r_net, dtype=float) - m.r_thr
    u = m.gain * _softplus(x, m.beta) / m.r_sat
    e = np.exp(-2.0 * u)  # u >= 0, so this form of sech^2 cannot overflow
    g = m.gain * expit(x / m.beta) * 4.0 * e / (1.0 + e) ** 2
    return float(g) if np.ndim(g) == 0 else g


def merger_rate(t_dead: float, rates, mode: str = "drop"):
    """Output rate (GHz) of a confluence buffer fed by independent trains.

    ``drop`` (the default) is the non-paralyzable dead-time law
    ``R / (1 + R t_dead)``.
    ``hold`` adds the one-pulse store: after each emission the next one
    follows after ``t_dead`` if anything arrived meanwhile, giving
    ``1 / (t_dead + exp(-R t_dead) / R)`` for Poisson arrivals.
    """
    total = np.sum(np.asarray(rates, dtype=float), axis=0)
    return _merger(t_dead, total, mode)[0]


def merger_rate_grad(t_dead: float, total, mode: str = "drop"):
    """Derivative of the merger output rate with respect to the summed input rate."""
    return _merger(t_dead, np.asarray(total, dtype=float), mode)[1]


def _merger(t_dead, total, mode):
    if mode not in ("hold", "drop"):
        raise ValueError(f"unknown merger mode {mode!r}")
    R = np.maximum(np.asarray(total, dtype=float), 0.0) / GHZ_PER_INV_PS
    tau = float(t_dead)
    if mode == "drop":
        out = R / (1.0 + R * tau)
        grad = 1.0 / (1.0 + R * tau) ** 2
    else:
        pos = R * tau > 1e-9
        # below this the buffer is transparent to double precision
        Rs = np.where(pos, R, 1.0)
        e = np.exp(-Rs * tau)
        g = tau + e / Rs
        dg = -e * (tau * Rs + 1.0) / Rs**2
        out = np.where(pos, 1.0 / g, R)
        grad = np.where(pos, -dg / g**2, 1.0)
    out = out * GHZ_PER_INV_PS
    if np.ndim(out) == 0:
        return float(out), float(grad)
    return out, grad


# -- network-level propagation ----------------------------------------------

def propagate_rates(spec: NetworkSpec, models: dict[str, ActivationModel]) -> dict[str, float]:
    """Steady-state output rate of every node, evaluated in topological order."""
    nodes = {n.name: n for n in spec.nodes}
    inputs: dict[tuple[str, str], list[float]] = {}
    out: dict[str, float] = {}
    by_src: dict[str, list[Edge]] = {}
    for e in spec.edges:
        by_src.setdefault(e.src, []).append(e)

    for name in topological_order(spec):
        n = nodes[name]
        if n.kind == "source":
            r = float(n.params["rate"])
        elif n.kind == "synapse":
            r = sum(inputs.get((name, "in"), [])) * dv.pass_probability(synapse_params(n.params))
        elif n.kind == "merger":
            mp = merger_params(n.params)
            r = merger_rate(mp.t_dead, inputs.get((name, "in"), [0.0]), mp.mode)
        elif n.kind == "neuron":
            if name not in models:
                raise KeyError(f"no activation model for neuron {name!r}")
            net = sum(inputs.get((name, "exc"), [])) - sum(inputs.get((name, "inh"), []))
            r = activation(models[name], net)
        else:  # splitter copies, probe observes
            r = sum(inputs.get((name, "in"), []))
        out[name] = float(r)
        for e in by_src.get(name, ()):
            key = (e.dst, in_port(nodes[e.dst].kind, e.dst_port))
            inputs.setdefault(key, []).append(out[name])
    return out


# -- characterization and fitting -------------------------------------------

def neuron_test_bench(p: dv.NeuronParams, rate: float, process: str = "regular") -> NetworkSpec:
    """source -> neuron -> probe network driving one neuron at ``rate`` GHz."""
    neuron = {"theta": p.theta, "tau_leak": p.tau_leak, "t_ref": p.t_ref,
              "clamp_floor": p.clamp_floor}
    source = {"rate": float(rate)}
    if process != "regular":
        source["process"] = process
    return NetworkSpec(
        nodes=(NodeDecl("src", "source", source), NodeDecl("n", "neuron", neuron),
               NodeDecl("out", "probe", {})),
        edges=(Edge("src", "n"), Edge("n", "out")),
    )


def characterize_neuron(p: dv.NeuronParams, grid, cfg: EngineConfig = EngineConfig(),
                        process: str = "regular", workers: int | None = None
                        ) -> list[tuple[float, float]]:
    """Measured steady-state (r_in, r_out) pairs in GHz, one engine run per grid point."""
    grid = [float(r) for r in grid]
    if any(r < 0 for r in grid):
        raise ValueError("input rates must be >= 0")
    jobs = [(neuron_test_bench(p, r, process), cfg) for r in grid]
    results = run_many(jobs, workers)
    return [(r, res.probe_rates["out"]) for r, res in zip(grid, results)]


@dataclass(frozen=True)
class ActivationFit:
    model: ActivationModel
    rms: float


def fit_activation(samples, r_sat: float | None = None) -> ActivationFit:
    """Least-squares fit of an :class:`ActivationModel` to (r_in, r_out) samples.

    Pass ``r_sat`` to hold the saturation rate fixed.
    """
    data = np.asarray(samples, dtype=float)
    if data.ndim != 2 or data.shape[0] < 8 or data.shape[1] != 2:
        raise ValueError("need at least 8 (r_in, r_out) samples")
    x, y = data[:, 0], data[:, 1]
    if not np.any(y > 0):
        raise ValueError("cannot fit an activation to all-zero outputs")
    y_max = float(y.max())
    above = x[y > 0.05 * y_max]
    thr0 = float(above.min()) if above.size else float(np.median(x))
    span = max(float(x.max() - x.min()), 1e-9)
    p0 = [thr0, 1.0, 0.05 * span]

    def unpack(v):
        sat = math.exp(v[3]) if r_sat is None else r_sat
        return ActivationModel(float(sat), float(v[0]), math.exp(v[1]), math.exp(v[2]))

    start = [p0[0], math.log(p0[1]), math.log(p0[2])]
    if r_sat is None:
        start.append(math.log(1.05 * y_max))

    def resid(v):
        return activation(unpack(v), x) - y

    best = None
    for gain0 in (0.5, 1.0, 2.0):
        v0 = list(start)
        v0[1] = math.log(gain0)
        sol = least_squares(resid, v0, method="lm", xtol=1e-14, ftol=1e-14, gtol=1e-14, max_nfev=20000)
        if best is None or sol.cost < best.cost:
            best = sol
    model = unpack(best.x)
    rms = float(np.sqrt(np.mean(resid(best.x) ** 2)))
    return ActivationFit(model, rms)


def characterization_csv(samples, path: str | Path | None = None, norm: float | None = None) -> str:
    """``r_in_ghz,r_out_ghz`` table, or normalized columns when ``norm`` is given."""
    if norm is None:
        lines = ["r_in_ghz,r_out_ghz"] + [f"{a!r},{b!r}" for a, b in samples]
    else:
        lines = ["r_in_norm,r_out_norm"] + [f"{a / norm!r},{b / norm!r}" for a, b in samples]
    text = "\n".join(lines) + "\n"
    if path is not None:
        Path(path).write_text(text)
    return text


def read_characterization(path: str | Path, norm: float = RATE_NORM_GHZ) -> list[tuple[float, float]]:
    """Read either characterization CSV flavor back as GHz pairs."""
    rows = Path(path).read_text().split()
    header = rows[0].strip()
    scale = {"r_in_ghz,r_out_ghz": 1.0, "r_in_norm,r_out_norm": norm}.get(header)
    if scale is None:
        raise ValueError(f"unrecognized characterization header {header!r}")
    out = []
    for row in rows[1:]:
        a, b = row.split(",")
        out.append((float(a) * scale, float(b) * scale))
    return out
