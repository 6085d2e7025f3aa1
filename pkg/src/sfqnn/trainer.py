"""Backprop training of rate-coded networks and lowering to SFQ netlists.

Rates inside the surrogate are normalized: 1.0 equals ``rate_norm`` GHz.
A weight is a signed pass probability; its sign selects the excitatory or
inhibitory port of the target neuron.  A bias is a signed normalized rate
supplied by a dedicated bias source.
"""

from __future__ import annotations

import math
import re
from dataclasses import dataclass, field, replace
from pathlib import Path

import numpy as np

from . import devices as dv
from .netgraph import Edge, NetworkSpec, NodeDecl, errors, expand_fanout, validate
from .pulsecore import RATE_NORM_GHZ
from .engine import EngineConfig
from .ratemodel import (ActivationFit, ActivationModel, _merger, activation, activation_grad,
                        characterize_neuron, fit_activation)


class DivergenceError(ArithmeticError):
    """Training produced a non-finite loss."""


@dataclass
class MLPSpec:
    sizes: list[int]
    weights: list[np.ndarray]
    biases: list[np.ndarray]
    activations: list[ActivationModel]
    trainable: list[bool] = None
    merger: dv.MergerParams = field(default_factory=dv.MergerParams)
    rate_norm: float = RATE_NORM_GHZ

    def __post_init__(self):
        n = len(self.sizes) - 1
        if n < 1 or any(s < 1 for s in self.sizes):
            raise ValueError("need at least two layers of size >= 1")
        self.weights = [np.array(w, dtype=float) for w in self.weights]
        self.biases = [np.array(b, dtype=float) for b in self.biases]
        if self.trainable is None:
            self.trainable = [True] * n
        if not (len(self.weights) == len(self.biases) == len(self.activations)
                == len(self.trainable) == n):
            raise ValueError("one weight matrix, bias vector, activation and flag per layer")
        for k, (w, b) in enumerate(zip(self.weights, self.biases)):
            if w.shape != (self.sizes[k], self.sizes[k + 1]) or b.shape != (self.sizes[k + 1],):
                raise ValueError(f"layer {k} parameter shapes do not match sizes")
            if np.any(np.abs(w) > 1):
                raise ValueError(f"layer {k} has |w| > 1")

    def copy(self) -> "MLPSpec":
        return replace(self, weights=[w.copy() for w in self.weights],
                       biases=[b.copy() for b in self.biases], trainable=list(self.trainable))

    def flat(self) -> np.ndarray:
        """Trainable parameters as one vector (weights then biases per layer)."""
        parts = []
        for k, on in enumerate(self.trainable):
            if on:
                parts += [self.weights[k].ravel(), self.biases[k]]
        return np.concatenate(parts) if parts else np.zeros(0)

    def set_flat(self, v: np.ndarray) -> None:
        i = 0
        for k, on in enumerate(self.trainable):
            if on:
                w = self.weights[k]
                self.weights[k] = v[i:i + w.size].reshape(w.shape).copy()
                i += w.size
                nb = self.biases[k].size
                self.biases[k] = v[i:i + nb].copy()
                i += nb


@dataclass(frozen=True)
class TrainConfig:
    learning_rate: float = 0.2
    max_epochs: int = 5000
    target_loss: float = 1e-3
    seed: int = 1
    weight_clip: float = 1.0
    bias_clip: float = 3.0

    def __post_init__(self):
        if not self.learning_rate > 0:
            raise ValueError("learning rate must be > 0")


@dataclass
class Dataset:
    inputs: np.ndarray
    targets: np.ndarray

    def __post_init__(self):
        self.inputs = np.atleast_2d(np.asarray(self.inputs, dtype=float))
        self.targets = np.atleast_2d(np.asarray(self.targets, dtype=float))
        if len(self.inputs) != len(self.targets):
            raise ValueError("inputs and targets differ in length")
        for arr in (self.inputs, self.targets):
            if np.any(arr < 0) or np.any(arr > 2):
                raise ValueError("normalized rates must lie in [0, 2]")

    def __len__(self) -> int:
        return len(self.inputs)


# -- forward and backward ----------------------------------------------------

def _saturate(total, count, mp: dv.MergerParams):
    """Merger map applied only where two or more trains share a port."""
    out, grad = _merger(mp.t_dead, total, mp.mode)
    use = count >= 2
    return np.where(use, out, total), np.where(use, grad, 1.0)


def _layer(mlp: MLPSpec, k: int, r: np.ndarray):
    w, b = mlp.weights[k], mlp.biases[k]
    norm = mlp.rate_norm
    wp, wn = np.where(w > 0, w, 0.0), np.where(w < 0, -w, 0.0)
    bp, bn = np.where(b > 0, b, 0.0), np.where(b < 0, -b, 0.0)
    cp = (w > 0).sum(axis=0) + (b > 0)
    cn = (w < 0).sum(axis=0) + (b < 0)
    pos, dpos = _saturate(r @ wp + bp * norm, cp, mlp.merger)
    neg, dneg = _saturate(r @ wn + bn * norm, cn, mlp.merger)
    net = pos - neg
    m = mlp.activations[k]
    out = activation(m, net)
    cache = (r, wp, wn, dpos, dneg, activation_grad(m, net))
    return np.asarray(out), cache


def forward(mlp: MLPSpec, inputs) -> np.ndarray:
    """Normalized output rates for normalized input rates (one row per sample)."""
    x = np.asarray(inputs, dtype=float)
    single = x.ndim == 1
    x = np.atleast_2d(x)
    if x.shape[1] != mlp.sizes[0]:
        raise ValueError(f"expected {mlp.sizes[0]} inputs, got {x.shape[1]}")
    r = x * mlp.rate_norm
    for k in range(len(mlp.weights)):
        r, _ = _layer(mlp, k, r)
    y = r / mlp.rate_norm
    return y[0] if single else y


def loss_and_grad(mlp: MLPSpec, data: Dataset) -> tuple[float, np.ndarray]:
    """Mean squared error over samples and outputs, and its gradient w.r.t. ``mlp.flat()``."""
    r = data.inputs * mlp.rate_norm
    caches = []
    for k in range(len(mlp.weights)):
        r, cache = _layer(mlp, k, r)
        caches.append(cache)
    y = r / mlp.rate_norm
    diff = y - data.targets
    loss = float(np.mean(diff ** 2))

    norm = mlp.rate_norm
    delta = 2.0 * diff / diff.size / norm       # dL/d(output rate in GHz)
    grads: list[tuple[np.ndarray, np.ndarray] | None] = [None] * len(caches)
    for k in reversed(range(len(caches))):
        r_in, wp, wn, dpos, dneg, dact = caches[k]
        d_net = delta * dact
        d_pos = d_net * dpos
        d_neg = -d_net * dneg
        w, b = mlp.weights[k], mlp.biases[k]
        if mlp.trainable[k]:
            gw = np.where(w < 0, -(r_in.T @ d_neg), r_in.T @ d_pos)
            gb = np.where(b < 0, -d_neg.sum(axis=0), d_pos.sum(axis=0)) * norm
            grads[k] = (gw, gb)
        delta = d_pos @ wp.T + d_neg @ wn.T
    parts = []
    for k, on in enumerate(mlp.trainable):
        if on:
            parts += [grads[k][0].ravel(), grads[k][1]]
    return loss, (np.concatenate(parts) if parts else np.zeros(0))


def init_params(mlp: MLPSpec, seed: int, scale: float = 1.0,
                data: Dataset | None = None, candidates: int = 32) -> MLPSpec:
    """Random trainable weights in ``[-scale, scale]``.

    Biases start at the layer's threshold rate so that every neuron begins
    on the rising part of its activation instead of the flat zero region.
    With ``data``, ``candidates`` draws are made and the one with the lowest
    loss is returned; rectifying units that start silent on every pattern
    never receive a gradient, and screening draws avoids most such starts.
    """
    rng = np.random.default_rng(seed)
    best, best_loss = None, math.inf
    for _ in range(candidates if data is not None else 1):
        out = mlp.copy()
        for k, on in enumerate(out.trainable):
            if on:
                out.weights[k] = rng.uniform(-scale, scale, out.weights[k].shape)
                thr = max(out.activations[k].r_thr, 0.0) / out.rate_norm
                out.biases[k] = np.full_like(out.biases[k], thr)
        if data is None:
            return out
        loss, _ = loss_and_grad(out, data)
        if loss < best_loss:
            best, best_loss = out, loss
    return best


def train(mlp: MLPSpec, data: Dataset, cfg: TrainConfig = TrainConfig()
          ) -> tuple[MLPSpec, list[float]]:
    """Full-batch gradient descent on the MSE, clipping |w| to ``weight_clip``.

    Returns the trained copy and the loss recorded before every step (plus
    the final loss).
    """
    net = mlp.copy()
    v = net.flat()
    lo, hi = _clip_bounds(net, cfg)
    v = np.clip(v, lo, hi)
    net.set_flat(v)
    curve: list[float] = []
    for _ in range(cfg.max_epochs):
        loss, g = loss_and_grad(net, data)
        if not math.isfinite(loss) or not np.all(np.isfinite(g)):
            raise DivergenceError(f"loss became non-finite ({loss}); try a smaller learning rate")
        curve.append(loss)
        if loss < cfg.target_loss:
            break
        v = np.clip(v - cfg.learning_rate * g, lo, hi)
        net.set_flat(v)
    else:
        loss, _ = loss_and_grad(net, data)
        curve.append(loss)
    return net, curve


def _clip_bounds(mlp: MLPSpec, cfg: TrainConfig):
    lo, hi = [], []
    for k, on in enumerate(mlp.trainable):
        if on:
            nw, nb = mlp.weights[k].size, mlp.biases[k].size
            lo += [-cfg.weight_clip] * nw + [-cfg.bias_clip] * nb
            hi += [cfg.weight_clip] * nw + [cfg.bias_clip] * nb
    return np.array(lo), np.array(hi)


# -- XOR case study ----------------------------------------------------------

@dataclass(frozen=True)
class XorLevels:
    """Normalized input rates for logic 0/1 and the trained output targets."""

    low: float = 0.2
    high: float = 1.8
    target_off: float = 0.0
    target_on: float = 1.5


# Device preset for the XOR network.  A unity threshold with a stored
# inhibition floor makes each neuron compute roughly relu(exc - inh) with unit
# slope, and the short refractory time keeps it linear over the [0, 2]
# normalized input range (1/12 ps = 2.5 normalized).
XOR_NEURON = dv.NeuronParams(theta=1.0, tau_leak=100.0, t_ref=12.0, clamp_floor=-3.0)
XOR_MERGER = dv.MergerParams(t_dead=5.0, mode="hold")
XOR_GRID_POINTS = 41


def build_xor(hidden: ActivationModel, output: ActivationModel | None = None,
              normalizer: ActivationModel | None = None,
              levels: XorLevels = XorLevels(),
              merger: dv.MergerParams = dv.MergerParams(),
              rate_norm: float = RATE_NORM_GHZ) -> tuple[MLPSpec, Dataset]:
    """Two input normalizers, two hidden neurons and one output neuron.

    The normalizers pass their input through fixed unit-weight synapses and
    have no bias; the three remaining neurons each get a trainable bias.
    Weights start at zero; use :func:`init_params` before training.
    """
    normalizer = normalizer or hidden
    output = output or hidden
    mlp = MLPSpec(
        sizes=[2, 2, 2, 1],
        weights=[np.eye(2), np.zeros((2, 2)), np.zeros((2, 1))],
        biases=[np.zeros(2), np.zeros(2), np.zeros(1)],
        activations=[normalizer, hidden, output],
        trainable=[False, True, True],
        merger=merger,
        rate_norm=rate_norm,
    )
    lo, hi = levels.low, levels.high
    data = Dataset(
        inputs=[[lo, lo], [lo, hi], [hi, lo], [hi, hi]],
        targets=[[levels.target_off], [levels.target_on], [levels.target_on], [levels.target_off]],
    )
    return mlp, data


# -- lowering ----------------------------------------------------------------

def lower_to_network(mlp: MLPSpec, dev: dv.SynapseParams = dv.SynapseParams(),
                     neuron=dv.NeuronParams(), mp: dv.MergerParams | None = None,
                     sp: dv.SplitterParams = dv.SplitterParams(),
                     input_rates=None, seed: int = 0, duration: float = 10_000.0
                     ) -> NetworkSpec:
    """Map a rate network onto sources, synapses, mergers, neurons and probes.

    ``neuron`` is one :class:`NeuronParams` or a sequence with one entry per
    layer.  Inputs become sources ``in0, in1, ...`` and outputs are observed
    by probes ``out0, out1, ...``; neurons are named ``n<layer>_<index>``.
    """
    mp = mp or mlp.merger
    layers = len(mlp.weights)
    per_layer = list(neuron) if isinstance(neuron, (list, tuple)) else [neuron] * layers
    if len(per_layer) != layers:
        raise ValueError("need one NeuronParams per layer")
    if input_rates is None:
        input_rates = [0.0] * mlp.sizes[0]
    norm = mlp.rate_norm

    nodes: list[NodeDecl] = []
    edges: list[Edge] = []
    prev = []
    for i, x in enumerate(input_rates):
        name = f"in{i}"
        nodes.append(NodeDecl(name, "source", {"rate": float(x) * norm}))
        prev.append(name)

    def synapse(name: str, w: float) -> NodeDecl:
        i_b = dv.bias_for_weight(dev, abs(float(w)))
        return NodeDecl(name, "synapse", {"i_b": i_b, "i_center": dev.i_center,
                                          "sigma_gz": dev.sigma_gz, "i_c": dev.i_c})

    for k in range(layers):
        w, b = mlp.weights[k], mlp.biases[k]
        if np.any(np.abs(w) > 1):
            raise ValueError(f"layer {k} has |w| > 1; pass probabilities cannot exceed 1")
        npk = per_layer[k]
        cur = []
        for j in range(mlp.sizes[k + 1]):
            nname = f"n{k + 1}_{j}"
            ports: dict[str, list[str]] = {"exc": [], "inh": []}
            for i, src in enumerate(prev):
                wij = float(w[i, j])
                if wij == 0.0:
                    continue
                sname = f"s{k + 1}_{i}_{j}"
                nodes.append(synapse(sname, wij))
                edges.append(Edge(src, sname))
                ports["exc" if wij > 0 else "inh"].append(sname)
            bj = float(b[j])
            if bj != 0.0:
                bname = f"b{k + 1}_{j}"
                nodes.append(NodeDecl(bname, "source", {"rate": abs(bj) * norm}))
                ports["exc" if bj > 0 else "inh"].append(bname)
            nodes.append(NodeDecl(nname, "neuron", {
                "theta": npk.theta, "tau_leak": npk.tau_leak, "t_ref": npk.t_ref,
                "clamp_floor": npk.clamp_floor}))
            for port, drivers in ports.items():
                if len(drivers) == 1:
                    edges.append(Edge(drivers[0], nname, None, port))
                elif len(drivers) > 1:
                    mname = f"m{k + 1}_{j}_{port}"
                    nodes.append(NodeDecl(mname, "merger", {"t_dead": mp.t_dead, "mode": mp.mode}))
                    edges.extend(Edge(d, mname) for d in drivers)
                    edges.append(Edge(mname, nname, None, port))
            cur.append(nname)
        prev = cur
    for j, src in enumerate(prev):
        pname = f"out{j}"
        nodes.append(NodeDecl(pname, "probe", {}))
        edges.append(Edge(src, pname))

    spec = expand_fanout(NetworkSpec(tuple(nodes), tuple(edges), seed, duration), sp)
    bad = errors(validate(spec))
    if bad:
        raise AssertionError(f"lowering produced an invalid network: {bad}")
    return spec


def activation_models_for(mlp: MLPSpec, spec: NetworkSpec) -> dict[str, ActivationModel]:
    """Per-neuron activation models for a network produced by :func:`lower_to_network`."""
    models = {}
    for name in spec.names("neuron"):
        layer = int(name[1:].split("_")[0]) - 1
        models[name] = mlp.activations[layer]
    return models


# -- model text format -------------------------------------------------------

def model_text(mlp: MLPSpec) -> str:
    lines = [f"sizes: {' '.join(str(s) for s in mlp.sizes)}",
             f"rate_norm: {mlp.rate_norm!r}",
             f"merger: t_dead={mlp.merger.t_dead!r} mode={mlp.merger.mode}"]
    for k, (w, b) in enumerate(zip(mlp.weights, mlp.biases)):
        m = mlp.activations[k]
        lines.append(f"layer {k}: trainable={int(mlp.trainable[k])} r_sat={m.r_sat!r} "
                     f"r_thr={m.r_thr!r} gain={m.gain!r} beta={m.beta!r}")
        for i in range(w.shape[0]):
            for j in range(w.shape[1]):
                lines.append(f"layer {k}: w[{i}][{j}]={float(w[i, j])!r}")
        for j in range(b.shape[0]):
            lines.append(f"layer {k}: bias[{j}]={float(b[j])!r}")
    return "\n".join(lines) + "\n"


_W = re.compile(r"^layer (\d+): w\[(\d+)\]\[(\d+)\]=(\S+)$")
_B = re.compile(r"^layer (\d+): bias\[(\d+)\]=(\S+)$")
_L = re.compile(r"^layer (\d+): trainable=(\d) (.*)$")


def parse_model(text: str) -> MLPSpec:
    sizes, norm, merger = None, RATE_NORM_GHZ, dv.MergerParams()
    acts, flags, wvals, bvals = {}, {}, [], []
    for line in text.splitlines():
        line = line.strip()
        if not line:
            continue
        if line.startswith("sizes:"):
            sizes = [int(s) for s in line.split(":", 1)[1].split()]
        elif line.startswith("rate_norm:"):
            norm = float(line.split(":", 1)[1])
        elif line.startswith("merger:"):
            kv = dict(item.split("=") for item in line.split(":", 1)[1].split())
            merger = dv.MergerParams(float(kv["t_dead"]), kv["mode"])
        elif m := _L.match(line):
            kv = dict(item.split("=") for item in m.group(3).split())
            acts[int(m.group(1))] = ActivationModel(**{k: float(v) for k, v in kv.items()})
            flags[int(m.group(1))] = bool(int(m.group(2)))
        elif m := _W.match(line):
            wvals.append((int(m.group(1)), int(m.group(2)), int(m.group(3)), float(m.group(4))))
        elif m := _B.match(line):
            bvals.append((int(m.group(1)), int(m.group(2)), float(m.group(3))))
        else:
            raise ValueError(f"unrecognized model line: {line!r}")
    if sizes is None:
        raise ValueError("model file has no 'sizes:' line")
    n = len(sizes) - 1
    weights = [np.zeros((sizes[k], sizes[k + 1])) for k in range(n)]
    biases = [np.zeros(sizes[k + 1]) for k in range(n)]
    for k, i, j, v in wvals:
        weights[k][i, j] = v
    for k, j, v in bvals:
        biases[k][j] = v
    return MLPSpec(sizes, weights, biases, [acts[k] for k in range(n)],
                   [flags[k] for k in range(n)], merger, norm)


def save_model(mlp: MLPSpec, path: str | Path) -> None:
    Path(path).write_text(model_text(mlp))


def load_model(path: str | Path) -> MLPSpec:
    return parse_model(Path(path).read_text())


# -- XOR pipeline ------------------------------------------------------------

@dataclass
class XorRun:
    samples: list[tuple[float, float]]
    fit: ActivationFit
    mlp: MLPSpec
    curve: list[float]
    spec: NetworkSpec


def xor_pipeline(cfg: TrainConfig = TrainConfig(), levels: XorLevels = XorLevels(),
                 neuron: dv.NeuronParams = XOR_NEURON, merger: dv.MergerParams = XOR_MERGER,
                 splitter: dv.SplitterParams = dv.SplitterParams(),
                 synapse: dv.SynapseParams = dv.SynapseParams(),
                 rate_norm: float = RATE_NORM_GHZ, engine: EngineConfig | None = None,
                 grid_points: int = XOR_GRID_POINTS) -> XorRun:
    """Characterize the neuron, fit its activation, train and lower the XOR network.

    The lowered network has both inputs at the logic-low rate; use
    :meth:`NetworkSpec.with_source_rates` to drive other corners.
    """
    engine = engine or EngineConfig(seed=cfg.seed)
    grid = np.linspace(0.0, 2.0, grid_points) * rate_norm
    samples = characterize_neuron(neuron, grid, engine)
    fit = fit_activation(samples)
    mlp, data = build_xor(fit.model, levels=levels, merger=merger, rate_norm=rate_norm)
    start = init_params(mlp, cfg.seed, data=data)
    trained, curve = train(start, data, cfg)
    spec = lower_to_network(trained, synapse, neuron, merger, splitter,
                            input_rates=[levels.low, levels.low], seed=engine.seed,
                            duration=engine.duration)
    return XorRun(samples, fit, trained, curve, spec)
