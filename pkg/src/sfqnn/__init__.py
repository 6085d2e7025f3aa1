"""Event-driven simulation, rate-model training and netlist lowering for
spiking networks built from single-flux-quantum primitives."""

from .devices import MergerParams, NeuronParams, SplitterParams, SynapseParams
from .engine import EngineConfig, SimResult, energy_report, simulate
from .netgraph import NetworkSpec, load_netlist, parse_netlist, serialize, validate
from .pulsecore import CONSTANTS, RATE_NORM_GHZ, PulseTrain, measure_rate
from .ratemodel import ActivationModel, fit_activation, propagate_rates
from .trainer import MLPSpec, TrainConfig, build_xor, lower_to_network, train

__version__ = "0.1.0"

__all__ = [
    "ActivationModel", "CONSTANTS", "EngineConfig", "MLPSpec", "MergerParams", "NetworkSpec",
    "NeuronParams", "PulseTrain", "RATE_NORM_GHZ", "SimResult", "SplitterParams",
    "SynapseParams", "TrainConfig", "build_xor", "energy_report", "fit_activation",
    "load_netlist", "lower_to_network", "measure_rate", "parse_netlist", "propagate_rates",
    "serialize", "simulate", "train", "validate",
]
