"""Command-line entry point: ``sfqnn <subcommand> [options]``.

Every subcommand writes its outputs into ``--out`` together with a
``<subcommand>.manifest.json`` recording the command line, the resolved
parameters and the files produced.  ``sfqnn rerun <manifest>`` replays it.

Exit codes: 0 success, 1 domain error (invalid network, failed fit, training
that misses its loss target), 2 usage or I/O error.
"""

from __future__ import annotations

import argparse
import json
import sys
from dataclasses import asdict
from pathlib import Path

import numpy as np
from scipy import ndimage

from . import __version__
from . import devices as dv
from .engine import EngineConfig, EventOverflow, energy_report, rates_csv, run_many, simulate, trace_csv
from .netgraph import NetlistError, load_netlist, serialize
from .pulsecore import E_SWITCH_J, RATE_NORM_GHZ, PulseTrain, regular_train
from .ratemodel import characterization_csv, characterize_neuron, fit_activation, read_characterization
from .trainer import (XOR_MERGER, XOR_NEURON, DivergenceError, TrainConfig, XorLevels,
                      load_model, lower_to_network, model_text, xor_pipeline)

EXIT_OK, EXIT_DOMAIN, EXIT_USAGE = 0, 1, 2


class UsageError(Exception):
    """Bad command-line value detected after argument parsing."""


# -- helpers -----------------------------------------------------------------

def _assignment(text: str) -> tuple[str, float]:
    name, eq, value = text.partition("=")
    if not eq or not name:
        raise argparse.ArgumentTypeError(f"expected NAME=VALUE, got {text!r}")
    try:
        return name, float(value)
    except ValueError:
        raise argparse.ArgumentTypeError(f"not a number: {value!r}") from None


def _name_list(text: str) -> list[str]:
    names = [t for t in text.split(",") if t]
    if len(names) != 2:
        raise argparse.ArgumentTypeError("expected two comma-separated source names")
    return names


def _float_list(text: str) -> list[float]:
    try:
        return [float(t) for t in text.split(",") if t]
    except ValueError:
        raise argparse.ArgumentTypeError(f"expected comma-separated numbers, got {text!r}") from None


class Run:
    """Collects parameters and outputs of one subcommand and writes its manifest."""

    def __init__(self, args: argparse.Namespace, argv: list[str]):
        self.command = args.command
        self.argv = list(argv)
        self.out = Path(args.out)
        self.params: dict = {}
        self.inputs: list[str] = []
        self.outputs: list[str] = []

    def write(self, name: str, text: str) -> Path:
        self.out.mkdir(parents=True, exist_ok=True)
        path = self.out / name
        path.write_text(text, encoding="utf-8")
        self.outputs.append(str(path))
        return path

    def manifest(self) -> Path:
        doc = {
            "subcommand": self.command,
            "argv": self.argv,
            "parameters": self.params,
            "seed": self.params.get("seed"),
            "inputs": self.inputs,
            "outputs": self.outputs,
            "version": __version__,
        }
        self.out.mkdir(parents=True, exist_ok=True)
        path = self.out / f"{self.command}.manifest.json"
        path.write_text(json.dumps(doc, indent=2, sort_keys=True, default=_jsonable) + "\n")
        return path


def _jsonable(obj):
    if isinstance(obj, (np.floating, np.integer)):
        return obj.item()
    if isinstance(obj, Path):
        return str(obj)
    raise TypeError(f"cannot serialize {type(obj).__name__}")


def _neuron_from(args) -> dv.NeuronParams:
    return dv.NeuronParams(args.theta, args.tau_leak_ps, args.t_ref_ps, args.clamp_floor)


def _add_neuron_flags(p: argparse.ArgumentParser, base: dv.NeuronParams) -> None:
    p.add_argument("--theta", type=float, default=base.theta, help="firing threshold in fluxons")
    p.add_argument("--tau-leak-ps", type=float, default=base.tau_leak)
    p.add_argument("--t-ref-ps", type=float, default=base.t_ref)
    p.add_argument("--clamp-floor", type=float, default=base.clamp_floor)


def _add_merger_flags(p: argparse.ArgumentParser, base: dv.MergerParams) -> None:
    p.add_argument("--t-dead-ps", type=float, default=base.t_dead)
    p.add_argument("--merger-mode", choices=("hold", "drop"), default=base.mode)


def _engine(args, seed=None, duration=None) -> EngineConfig:
    return EngineConfig(duration=args.duration_ps if duration is None else duration,
                        seed=args.seed if seed is None else seed)


# -- subcommands ---------------------------------------------------------------

def cmd_characterize_synapse(args, run: Run) -> int:
    base = dv.SynapseParams(args.i_c_ua, args.i_center_ua, args.sigma_gz_ua)
    if args.points < 2 or args.pulses < 1 or not args.i_max_ua > args.i_min_ua:
        raise UsageError("need --points >= 2, --pulses >= 1 and --i-max-ua > --i-min-ua")
    period = 1e3 / args.input_rate_ghz
    train = regular_train(args.input_rate_ghz, args.pulses * period)
    train = PulseTrain(train.times[:args.pulses], train.duration)
    rows = ["i_b_ua,p_emp,p_model"]
    for k, i_b in enumerate(np.linspace(args.i_min_ua, args.i_max_ua, args.points)):
        p = base.with_bias(float(i_b))
        kept = dv.synapse_gate(p, train, [args.seed, k])
        rows.append(f"{float(i_b)!r},{len(kept) / len(train)!r},{dv.pass_probability(p)!r}")
    run.params.update(seed=args.seed, synapse=asdict(base), points=args.points, pulses=args.pulses,
                      input_rate_ghz=args.input_rate_ghz, i_min_ua=args.i_min_ua,
                      i_max_ua=args.i_max_ua)
    path = run.write("synapse.csv", "\n".join(rows) + "\n")
    print(f"wrote {path}")
    return EXIT_OK


def cmd_characterize_neuron(args, run: Run) -> int:
    p = _neuron_from(args)
    norm = args.rate_norm_ghz
    grid = np.linspace(0.0, args.max_norm, args.points) * norm
    cfg = _engine(args)
    samples = characterize_neuron(p, grid, cfg, process=args.process, workers=args.workers)
    run.params.update(seed=args.seed, neuron=asdict(p), points=args.points, max_norm=args.max_norm,
                      process=args.process, duration_ps=cfg.duration, rate_norm_ghz=norm)
    path = run.write("neuron.csv", characterization_csv(samples, norm=norm))
    top = samples[-1][1] / norm
    print(f"wrote {path}; output at r_in={args.max_norm:g}: {top:.4f} normalized")
    return EXIT_OK


def cmd_fit_activation(args, run: Run) -> int:
    samples = read_characterization(args.input, norm=args.rate_norm_ghz)
    run.inputs.append(str(args.input))
    fit = fit_activation(samples, r_sat=args.r_sat_ghz)
    run.params.update(seed=args.seed, rate_norm_ghz=args.rate_norm_ghz, r_sat_ghz=args.r_sat_ghz,
                      model=asdict(fit.model), rms_ghz=fit.rms)
    path = run.write("activation.txt", fit.model.to_text())
    print(f"wrote {path}; rms {fit.rms:.4g} GHz ({fit.rms / fit.model.r_sat:.2%} of r_sat)")
    return EXIT_OK


def cmd_train_xor(args, run: Run) -> int:
    neuron = _neuron_from(args)
    merger = dv.MergerParams(args.t_dead_ps, args.merger_mode)
    splitter = dv.SplitterParams(args.splitter_delay_ps, 2)
    levels = XorLevels(args.low, args.high, args.target_off, args.target_on)
    cfg = TrainConfig(learning_rate=args.learning_rate, max_epochs=args.epochs,
                      target_loss=args.target_loss, seed=args.seed)
    result = xor_pipeline(cfg, levels, neuron, merger, splitter,
                          rate_norm=args.rate_norm_ghz, engine=_engine(args))
    norm = args.rate_norm_ghz
    run.write("xor_neuron.csv", characterization_csv(result.samples, norm=norm))
    run.write("xor_activation.txt", result.fit.model.to_text())
    run.write("xor_model.txt", model_text(result.mlp))
    run.write("loss.csv", "epoch,loss\n" + "".join(f"{i},{v!r}\n" for i, v in enumerate(result.curve)))
    run.write("xor.net", serialize(result.spec))
    final = result.curve[-1]
    run.params.update(seed=args.seed, neuron=asdict(neuron), merger=asdict(merger),
                      splitter=asdict(splitter), levels=asdict(levels), train=asdict(cfg),
                      rate_norm_ghz=norm, duration_ps=args.duration_ps, epochs_run=len(result.curve) - 1,
                      final_loss=final, max_loss=args.max_loss)
    print(f"final loss {final:.6g} after {len(result.curve) - 1} epochs; wrote {run.out / 'xor.net'}")
    if not final < args.max_loss:
        print(f"error: final loss {final:.6g} is not below {args.max_loss:g}", file=sys.stderr)
        return EXIT_DOMAIN
    return EXIT_OK


def cmd_lower(args, run: Run) -> int:
    mlp = load_model(args.model)
    run.inputs.append(str(args.model))
    neuron = _neuron_from(args)
    rates = args.inputs if args.inputs is not None else [0.0] * mlp.sizes[0]
    if len(rates) != mlp.sizes[0]:
        raise UsageError(f"--inputs needs {mlp.sizes[0]} values")
    mp = dv.MergerParams(args.t_dead_ps, args.merger_mode) if args.t_dead_ps is not None else None
    spec = lower_to_network(mlp, neuron=neuron, mp=mp,
                            sp=dv.SplitterParams(args.splitter_delay_ps, 2),
                            input_rates=rates, seed=args.seed, duration=args.duration_ps)
    run.params.update(seed=args.seed, neuron=asdict(neuron), input_rates_norm=rates,
                      merger=asdict(mp or mlp.merger), duration_ps=args.duration_ps)
    path = run.write(args.name, serialize(spec))
    print(f"wrote {path} ({len(spec.nodes)} nodes, {len(spec.edges)} edges)")
    return EXIT_OK


def _load_spec(args, run: Run):
    spec = load_netlist(args.netlist)
    run.inputs.append(str(args.netlist))
    seed = spec.seed if args.seed is None else args.seed
    duration = spec.duration if args.duration_ps is None else args.duration_ps
    return spec, EngineConfig(duration=duration, seed=seed, trace_states=getattr(args, "trace", False))


def cmd_simulate(args, run: Run) -> int:
    spec, cfg = _load_spec(args, run)
    norm = args.rate_norm_ghz
    overrides = dict(args.rate or [])
    overrides.update({k: v * norm for k, v in (args.input or [])})
    spec = spec.with_source_rates(overrides)
    result = simulate(spec, cfg)
    report = energy_report(result)
    run.params.update(seed=cfg.seed, duration_ps=cfg.duration, source_rates_ghz=overrides,
                      rate_norm_ghz=norm, switch_count=report.total_switches,
                      energy_j=report.joules)
    run.write("rates.csv", rates_csv(result))
    lines = ["node,switches,energy_j"]
    lines += [f"{k},{v},{v * E_SWITCH_J!r}" for k, v in sorted(report.per_node.items())]
    lines.append(f"total,{report.total_switches},{report.joules!r}")
    run.write("energy.csv", "\n".join(lines) + "\n")
    if args.pulses:
        for name in sorted(result.probe_trains):
            run.write(f"pulses_{name}.csv", result.probe_trains[name].to_csv())
    if result.traces:
        for name in sorted(result.traces):
            run.write(f"trace_{name}.csv", trace_csv(result.traces[name]))
    for name in sorted(result.probe_rates):
        r = result.probe_rates[name]
        print(f"{name}: {r:.4f} GHz ({r / norm:.4f} normalized)")
    print(f"switches {report.total_switches}, energy {report.joules:.4g} J")
    return EXIT_OK


def cmd_phase_diagram(args, run: Run) -> int:
    spec, cfg = _load_spec(args, run)
    a, b = args.inputs
    norm = args.rate_norm_ghz
    axis = np.linspace(args.min_norm, args.max_norm, args.points)
    jobs, cells = [], []
    for ra in axis:
        for rb in axis:
            jobs.append((spec.with_source_rates({a: ra * norm, b: rb * norm}), cfg))
            cells.append((float(ra), float(rb)))
    results = run_many(jobs, args.workers)
    out = np.array([res.probe_rates[args.probe] / norm for res in results])
    rows = ["r_a_norm,r_b_norm,r_out_norm"]
    rows += [f"{ra!r},{rb!r},{float(v)!r}" for (ra, rb), v in zip(cells, out)]
    _, lobes = ndimage.label(out.reshape(args.points, args.points) >= args.threshold)
    run.params.update(seed=cfg.seed, duration_ps=cfg.duration, inputs=[a, b], probe=args.probe,
                      points=args.points, min_norm=args.min_norm, max_norm=args.max_norm,
                      threshold=args.threshold, high_regions=int(lobes), rate_norm_ghz=norm)
    path = run.write("phase.csv", "\n".join(rows) + "\n")
    print(f"wrote {path}; {lobes} connected region(s) with output >= {args.threshold:g}")
    return EXIT_OK


def cmd_rerun(args, argv) -> int:
    doc = json.loads(Path(args.manifest).read_text(encoding="utf-8"))
    if "argv" not in doc:
        raise UsageError(f"{args.manifest} is not a run manifest")
    return main(doc["argv"])


# -- parser --------------------------------------------------------------------

def build_parser() -> argparse.ArgumentParser:
    common = argparse.ArgumentParser(add_help=False)
    common.add_argument("--out", default=".", help="output directory (created if missing)")
    common.add_argument("--rate-norm-ghz", type=float, default=RATE_NORM_GHZ,
                        help="rate that normalized values are relative to")
    common.add_argument("--workers", type=int, default=None, help="worker processes for sweeps")

    def fixed(p):
        p.add_argument("--seed", type=int, default=1)
        p.add_argument("--duration-ps", type=float, default=10_000.0)

    def from_netlist(p):
        p.add_argument("--seed", type=int, default=None, help="default: the netlist's seed")
        p.add_argument("--duration-ps", type=float, default=None,
                       help="default: the netlist's duration")

    parser = argparse.ArgumentParser(prog="sfqnn", description=__doc__.splitlines()[0])
    parser.add_argument("--version", action="version", version=f"%(prog)s {__version__}")
    sub = parser.add_subparsers(dest="command", required=True, metavar="COMMAND")

    p = sub.add_parser("characterize-synapse", parents=[common],
                       help="empirical pass probability across a bias sweep")
    fixed(p)
    d = dv.SynapseParams()
    p.add_argument("--i-min-ua", type=float, default=d.i_center - 4 * d.sigma_gz)
    p.add_argument("--i-max-ua", type=float, default=d.i_center + 4 * d.sigma_gz)
    p.add_argument("--points", type=int, default=25)
    p.add_argument("--pulses", type=int, default=10_000, help="input pulses per bias point")
    p.add_argument("--input-rate-ghz", type=float, default=50.0)
    p.add_argument("--i-center-ua", type=float, default=d.i_center)
    p.add_argument("--sigma-gz-ua", type=float, default=d.sigma_gz)
    p.add_argument("--i-c-ua", type=float, default=d.i_c)
    p.set_defaults(func=cmd_characterize_synapse)

    p = sub.add_parser("characterize-neuron", parents=[common],
                       help="steady-state output rate over an input-rate grid")
    fixed(p)
    _add_neuron_flags(p, dv.NeuronParams())
    p.add_argument("--points", type=int, default=20)
    p.add_argument("--max-norm", type=float, default=2.0, help="largest normalized input rate")
    p.add_argument("--process", choices=("regular", "poisson"), default="regular")
    p.set_defaults(func=cmd_characterize_neuron)

    p = sub.add_parser("fit-activation", parents=[common],
                       help="fit an activation model to a characterization CSV")
    fixed(p)
    p.add_argument("input", type=Path, help="CSV written by characterize-neuron")
    p.add_argument("--r-sat-ghz", type=float, default=None, help="hold the saturation rate fixed")
    p.set_defaults(func=cmd_fit_activation)

    p = sub.add_parser("train-xor", parents=[common],
                       help="characterize, fit, train and lower the XOR network")
    fixed(p)
    _add_neuron_flags(p, XOR_NEURON)
    _add_merger_flags(p, XOR_MERGER)
    lv, tc = XorLevels(), TrainConfig()
    p.add_argument("--splitter-delay-ps", type=float, default=dv.SplitterParams().delay)
    p.add_argument("--low", type=float, default=lv.low, help="normalized rate for logic 0")
    p.add_argument("--high", type=float, default=lv.high, help="normalized rate for logic 1")
    p.add_argument("--target-on", type=float, default=lv.target_on)
    p.add_argument("--target-off", type=float, default=lv.target_off)
    p.add_argument("--learning-rate", type=float, default=tc.learning_rate)
    p.add_argument("--epochs", type=int, default=tc.max_epochs)
    p.add_argument("--target-loss", type=float, default=tc.target_loss,
                   help="stop training once the loss drops below this")
    p.add_argument("--max-loss", type=float, default=0.01,
                   help="exit with status 1 if the final loss is not below this")
    p.set_defaults(func=cmd_train_xor)

    p = sub.add_parser("lower", parents=[common], help="turn a trained model file into a netlist")
    fixed(p)
    p.add_argument("model", type=Path)
    _add_neuron_flags(p, XOR_NEURON)
    p.add_argument("--t-dead-ps", type=float, default=None, help="default: the model's merger")
    p.add_argument("--merger-mode", choices=("hold", "drop"), default="hold")
    p.add_argument("--splitter-delay-ps", type=float, default=dv.SplitterParams().delay)
    p.add_argument("--inputs", type=_float_list, default=None,
                   help="normalized source rates, comma separated")
    p.add_argument("--name", default="network.net", help="output file name")
    p.set_defaults(func=cmd_lower)

    p = sub.add_parser("simulate", parents=[common], help="event-driven run of a netlist")
    from_netlist(p)
    p.add_argument("netlist", type=Path)
    p.add_argument("--rate", type=_assignment, action="append", metavar="SOURCE=GHZ",
                   help="override a source rate in GHz")
    p.add_argument("--input", type=_assignment, action="append", metavar="SOURCE=NORM",
                   help="override a source rate in normalized units")
    p.add_argument("--trace", action="store_true", help="write neuron state traces")
    p.add_argument("--pulses", action="store_true", help="write every probe's pulse times")
    p.set_defaults(func=cmd_simulate)

    p = sub.add_parser("phase-diagram", parents=[common],
                       help="output rate over a grid of two input rates")
    from_netlist(p)
    p.add_argument("netlist", type=Path)
    p.add_argument("--inputs", type=_name_list, default=["in0", "in1"], metavar="A,B")
    p.add_argument("--probe", default="out0")
    p.add_argument("--points", type=int, default=21)
    p.add_argument("--min-norm", type=float, default=0.0)
    p.add_argument("--max-norm", type=float, default=2.0)
    p.add_argument("--threshold", type=float, default=0.75,
                   help="normalized level for counting high-output regions")
    p.set_defaults(func=cmd_phase_diagram)

    p = sub.add_parser("rerun", help="repeat the run recorded in a manifest")
    p.add_argument("manifest", type=Path)
    p.set_defaults(func=None)
    return parser


def main(argv: list[str] | None = None) -> int:
    argv = list(sys.argv[1:] if argv is None else argv)
    parser = build_parser()
    try:
        args = parser.parse_args(argv)
    except SystemExit as exc:
        return int(exc.code or 0)
    try:
        if args.command == "rerun":
            return cmd_rerun(args, argv)
        run = Run(args, argv)
        code = args.func(args, run)
        run.manifest()
        return code
    except UsageError as exc:
        print(f"sfqnn {args.command}: {exc}", file=sys.stderr)
        return EXIT_USAGE
    except OSError as exc:
        print(f"sfqnn {args.command}: {exc}", file=sys.stderr)
        return EXIT_USAGE
    except (NetlistError, DivergenceError, EventOverflow, ValueError, KeyError) as exc:
        print(f"sfqnn {args.command}: error: {exc}", file=sys.stderr)
        return EXIT_DOMAIN


if __name__ == "__main__":
    sys.exit(main())
