"""Network description, netlist text format, validation and fan-out expansion.

Netlist grammar (one statement per line, ``#`` starts a comment)::

    set seed=<int>
    set duration=<number>ps
    node <kind> <name> key=value ...
    edge <from>[.<branch>] <to>[.exc|.inh]

Dimensioned values carry a mandatory unit suffix (``GHz``, ``ps``, ``uA``);
dimensionless ones (``theta``, ``weight``, ``fanout``, ``clamp_floor``) are
bare numbers.
"""

from __future__ import annotations

import math
import re
from collections import defaultdict
from dataclasses import dataclass, field, replace
from graphlib import CycleError, TopologicalSorter
from pathlib import Path

from .devices import SplitterParams

KINDS = ("source", "synapse", "merger", "splitter", "neuron", "probe")
IDENT = re.compile(r"^[A-Za-z_][A-Za-z0-9_]*$")
NUMBER = r"[+-]?(?:\d+\.?\d*(?:[eE][+-]?\d+)?|\.\d+(?:[eE][+-]?\d+)?|inf)"
VALUE = re.compile(rf"^({NUMBER})([A-Za-z]*)$")

# key -> unit ("" = dimensionless number, None = word)
PARAM_UNITS: dict[str, dict[str, str | None]] = {
    "source": {"rate": "GHz", "phase": "ps", "process": None},
    "synapse": {"weight": "", "i_b": "uA", "i_center": "uA", "sigma_gz": "uA", "i_c": "uA"},
    "merger": {"t_dead": "ps", "mode": None},
    "splitter": {"delay": "ps", "fanout": ""},
    "neuron": {"theta": "", "tau_leak": "ps", "t_ref": "ps", "clamp_floor": ""},
    "probe": {},
}
REQUIRED = {
    "source": ("rate",),
    "neuron": ("theta", "tau_leak", "t_ref"),
}
WORDS = {"process": ("regular", "poisson"), "mode": ("hold", "drop")}
INTEGER_KEYS = ("fanout",)


class NetlistError(ValueError):
    """Raised when a netlist or spec has error diagnostics."""

    def __init__(self, diagnostics):
        self.diagnostics = list(diagnostics)
        super().__init__("\n".join(str(d) for d in self.diagnostics if d.severity == "error"))


@dataclass(frozen=True)
class NodeDecl:
    name: str
    kind: str
    params: dict = field(default_factory=dict, hash=False)
    line: int | None = field(default=None, compare=False)


@dataclass(frozen=True)
class Edge:
    src: str
    dst: str
    src_port: int | None = None
    dst_port: str | None = None
    line: int | None = field(default=None, compare=False)

    def __str__(self) -> str:
        a = self.src if self.src_port is None else f"{self.src}.{self.src_port}"
        b = self.dst if self.dst_port is None else f"{self.dst}.{self.dst_port}"
        return f"{a} -> {b}"


@dataclass(frozen=True)
class NetworkSpec:
    nodes: tuple[NodeDecl, ...] = ()
    edges: tuple[Edge, ...] = ()
    seed: int = 0
    duration: float = 10_000.0

    def node(self, name: str) -> NodeDecl:
        for n in self.nodes:
            if n.name == name:
                return n
        raise KeyError(name)

    def names(self, kind: str | None = None) -> list[str]:
        return [n.name for n in self.nodes if kind is None or n.kind == kind]

    def with_source_rates(self, rates: dict[str, float]) -> "NetworkSpec":
        """Copy of the spec with the given source rates (GHz) replaced."""
        unknown = set(rates) - set(self.names("source"))
        if unknown:
            raise KeyError(f"not source nodes: {sorted(unknown)}")
        nodes = tuple(
            replace(n, params={**n.params, "rate": float(rates[n.name])}) if n.name in rates else n
            for n in self.nodes
        )
        return replace(self, nodes=nodes)


@dataclass(frozen=True)
class Diagnostic:
    severity: str
    ref: str
    message: str
    line: int | None = None

    def __str__(self) -> str:
        where = f"line {self.line}: " if self.line is not None else ""
        return f"{self.severity}: {where}{self.ref}: {self.message}"


def _parse_value(kind: str, key: str, raw: str) -> float | int | str:
    unit = PARAM_UNITS[kind][key]
    if unit is None:
        if raw not in WORDS[key]:
            raise ValueError(f"{key} must be one of {', '.join(WORDS[key])}")
        return raw
    m = VALUE.match(raw)
    if not m:
        raise ValueError(f"malformed number {raw!r}")
    number, suffix = m.groups()
    if suffix.lower() != unit.lower():
        if unit:
            raise ValueError(f"{key} needs unit {unit}, got {raw!r}")
        raise ValueError(f"{key} is dimensionless, got unit {suffix!r}")
    value = float(number)
    if math.isnan(value):
        raise ValueError(f"malformed number {raw!r}")
    if key in INTEGER_KEYS:
        if value != int(value):
            raise ValueError(f"{key} must be an integer")
        return int(value)
    return value


def parse_netlist(text: str) -> tuple[NetworkSpec, list[Diagnostic]]:
    """Parse netlist text.

    Returns the spec built from every well-formed statement together with the
    diagnostics found; callers must treat the spec as unusable when any
    diagnostic is an error.
    """
    diags: list[Diagnostic] = []
    nodes: dict[str, NodeDecl] = {}
    raw_edges: list[tuple[str, str, int]] = []
    seed, duration = 0, 10_000.0

    def err(line, ref, msg):
        diags.append(Diagnostic("error", ref, msg, line))

    for lineno, raw in enumerate(text.splitlines(), start=1):
        words = raw.split("#", 1)[0].split()
        if not words:
            continue
        head, rest = words[0], words[1:]
        if head == "set":
            for item in rest:
                key, eq, val = item.partition("=")
                try:
                    if not eq:
                        raise ValueError(f"expected key=value, got {item!r}")
                    if key == "seed":
                        if not re.fullmatch(r"[+-]?\d+", val):
                            raise ValueError(f"seed must be an integer, got {val!r}")
                        seed = int(val)
                    elif key == "duration":
                        m = VALUE.match(val)
                        if not m or m.group(2).lower() != "ps":
                            raise ValueError(f"duration needs unit ps, got {val!r}")
                        duration = float(m.group(1))
                        if not (duration > 0 and math.isfinite(duration)):
                            raise ValueError("duration must be finite and > 0")
                    else:
                        raise ValueError(f"unknown setting {key!r}")
                except ValueError as exc:
                    err(lineno, "set", str(exc))
        elif head == "node":
            if len(rest) < 2:
                err(lineno, "node", "expected 'node <kind> <name> key=value ...'")
                continue
            kind, name = rest[0], rest[1]
            if kind not in KINDS:
                err(lineno, name, f"unknown kind {kind!r}")
                continue
            if not IDENT.match(name):
                err(lineno, name, "invalid identifier")
                continue
            if name in nodes:
                err(lineno, name, f"duplicate name (first declared on line {nodes[name].line})")
                continue
            params, ok = {}, True
            for item in rest[2:]:
                key, eq, val = item.partition("=")
                if not eq:
                    err(lineno, name, f"expected key=value, got {item!r}")
                    ok = False
                elif key not in PARAM_UNITS[kind]:
                    err(lineno, name, f"unknown key {key!r} for {kind}")
                    ok = False
                elif key in params:
                    err(lineno, name, f"key {key!r} given twice")
                    ok = False
                else:
                    try:
                        params[key] = _parse_value(kind, key, val)
                    except ValueError as exc:
                        err(lineno, name, str(exc))
                        ok = False
            if ok:
                nodes[name] = NodeDecl(name, kind, params, lineno)
        elif head == "edge":
            if len(rest) != 2:
                err(lineno, "edge", "expected 'edge <from> <to>'")
                continue
            raw_edges.append((rest[0], rest[1], lineno))
        else:
            err(lineno, head, f"unknown directive {head!r}")

    edges = []
    for a, b, lineno in raw_edges:
        try:
            edges.append(_parse_edge(a, b, nodes, lineno))
        except ValueError as exc:
            err(lineno, f"{a} {b}", str(exc))
    spec = NetworkSpec(tuple(nodes.values()), tuple(edges), seed, duration)
    return spec, diags


def _parse_edge(a: str, b: str, nodes: dict[str, NodeDecl], lineno: int) -> Edge:
    src, _, sport = a.partition(".")
    dst, _, dport = b.partition(".")
    for name in (src, dst):
        if name not in nodes:
            raise ValueError(f"unknown node {name!r}")
    src_port = None
    if sport:
        if not sport.isdigit():
            raise ValueError(f"output port must be a branch index, got {sport!r}")
        src_port = int(sport)
    dst_port = dport or None
    if dst_port is not None and dst_port not in ("exc", "inh"):
        raise ValueError(f"input port must be exc or inh, got {dport!r}")
    return Edge(src, dst, src_port, dst_port, lineno)


def load_netlist(path: str | Path) -> NetworkSpec:
    """Read and parse a netlist file, raising :class:`NetlistError` on errors."""
    spec, diags = parse_netlist(Path(path).read_text(encoding="utf-8"))
    if any(d.severity == "error" for d in diags):
        raise NetlistError(diags)
    return spec


def _format_value(kind: str, key: str, value) -> str:
    unit = PARAM_UNITS[kind][key]
    if unit is None or isinstance(value, int):
        return f"{key}={value}"
    return f"{key}={float(value)!r}{unit}"


def serialize(spec: NetworkSpec) -> str:
    lines = [f"set seed={spec.seed}", f"set duration={float(spec.duration)!r}ps"]
    for n in spec.nodes:
        kv = " ".join(_format_value(n.kind, k, v) for k, v in n.params.items())
        lines.append(f"node {n.kind} {n.name}" + (f" {kv}" if kv else ""))
    for e in spec.edges:
        a = e.src if e.src_port is None else f"{e.src}.{e.src_port}"
        b = e.dst if e.dst_port is None else f"{e.dst}.{e.dst_port}"
        lines.append(f"edge {a} {b}")
    return "\n".join(lines) + "\n"


# -- validation --------------------------------------------------------------

def in_port(spec_kind: str, port: str | None) -> str:
    """Canonical input port name for a target of the given kind."""
    if spec_kind == "neuron":
        return port or "exc"
    return "in"


def out_port(node: NodeDecl, port: int | None) -> str:
    return "out" if port is None else str(port)


def splitter_params(node: NodeDecl) -> SplitterParams:
    return SplitterParams(node.params.get("delay", 5.0), node.params.get("fanout", 2))


def topological_order(spec: NetworkSpec) -> list[str]:
    """Node names in a deterministic topological order (raises CycleError)."""
    ts = TopologicalSorter({n.name: set() for n in spec.nodes})
    for e in spec.edges:
        ts.add(e.dst, e.src)
    ts.prepare()
    rank = {n.name: i for i, n in enumerate(spec.nodes)}
    order = []
    while ts.is_active():
        ready = sorted(ts.get_ready(), key=rank.__getitem__)
        order.extend(ready)
        ts.done(*ready)
    return order


def validate(spec: NetworkSpec) -> list[Diagnostic]:
    diags: list[Diagnostic] = []
    by_name: dict[str, NodeDecl] = {}

    def add(sev, ref, msg, line=None):
        diags.append(Diagnostic(sev, ref, msg, line))

    for n in spec.nodes:
        if n.name in by_name:
            add("error", n.name, "duplicate name", n.line)
        by_name[n.name] = n
        if n.kind not in KINDS:
            add("error", n.name, f"unknown kind {n.kind!r}", n.line)
            continue
        for key in REQUIRED.get(n.kind, ()):
            if key not in n.params:
                add("error", n.name, f"{n.kind} requires {key}", n.line)
        if n.kind == "synapse" and ("weight" in n.params) == ("i_b" in n.params):
            add("error", n.name, "synapse needs exactly one of weight or i_b", n.line)
        if n.kind == "synapse" and not 0 <= n.params.get("weight", 0.0) <= 1:
            add("error", n.name, "weight must lie in [0, 1]", n.line)
        if n.kind == "source" and not n.params.get("rate", 0.0) >= 0:
            add("error", n.name, "rate must be >= 0", n.line)
        if n.kind == "splitter":
            try:
                splitter_params(n)
            except ValueError as exc:
                add("error", n.name, str(exc), n.line)

    drivers: dict[tuple[str, str], list[Edge]] = defaultdict(list)
    loads: dict[tuple[str, str], list[Edge]] = defaultdict(list)
    for e in spec.edges:
        src, dst = by_name.get(e.src), by_name.get(e.dst)
        if src is None or dst is None:
            add("error", str(e), "edge references an unknown node", e.line)
            continue
        if src.kind == "probe":
            add("error", str(e), "a probe has no output", e.line)
            continue
        if dst.kind == "source":
            add("error", str(e), "a source has no input", e.line)
            continue
        if src.kind == "splitter":
            fanout = src.params.get("fanout", 2)
            if e.src_port is None or not 0 <= e.src_port < fanout:
                add("error", str(e), f"splitter output must be a branch .0 .. .{fanout - 1}", e.line)
                continue
        elif e.src_port is not None:
            add("error", str(e), f"{src.kind} has a single output; branch ports are for splitters",
                e.line)
            continue
        if e.dst_port is not None and dst.kind != "neuron":
            add("error", str(e), f"{dst.kind} has no port {e.dst_port!r}", e.line)
            continue
        loads[(e.src, out_port(src, e.src_port))].append(e)
        drivers[(e.dst, in_port(dst.kind, e.dst_port))].append(e)

    for (name, port), es in loads.items():
        if len(es) > 1:
            add("error", name if port == "out" else f"{name}.{port}",
                f"fan-out requires splitter ({len(es)} loads)", es[1].line)
    for (name, port), es in drivers.items():
        if len(es) > 1 and by_name[name].kind != "merger":
            add("error", name if port == "in" else f"{name}.{port}",
                f"input has {len(es)} drivers; fan-in requires a merger", es[1].line)
    for n in spec.nodes:
        if n.kind in ("synapse", "merger", "splitter", "probe") and (n.name, "in") not in drivers:
            add("warning", n.name, "input is not driven", n.line)
        if n.kind == "neuron" and (n.name, "exc") not in drivers and (n.name, "inh") not in drivers:
            add("warning", n.name, "neuron has no driven input", n.line)

    try:
        topological_order(replace(spec, edges=tuple(
            e for e in spec.edges if e.src in by_name and e.dst in by_name)))
    except CycleError as exc:
        cycle = exc.args[1] if len(exc.args) > 1 else []
        add("error", " -> ".join(cycle), "graph contains a cycle; only feed-forward networks are supported")
    return diags


def errors(diags: list[Diagnostic]) -> list[Diagnostic]:
    return [d for d in diags if d.severity == "error"]


# -- fan-out expansion -------------------------------------------------------

def _tree_groups(n: int, fanout: int) -> list[int]:
    """Split ``n`` sinks into at most ``fanout`` groups for a minimal-depth tree."""
    if n <= fanout:
        return [1] * n
    depth = math.ceil(math.log(n, fanout) - 1e-12)
    cap = fanout ** (depth - 1)
    groups = []
    left = n
    for k in range(fanout):
        # leave enough sinks for the remaining branches to be non-empty
        take = min(cap, left - (fanout - k - 1))
        groups.append(take)
        left -= take
    return [g for g in groups if g > 0]


def expand_fanout(spec: NetworkSpec, sp: SplitterParams = SplitterParams()) -> NetworkSpec:
    """Route every output port with several loads through a splitter tree."""
    by_name = {n.name: n for n in spec.nodes}
    used = set(by_name)
    loads: dict[tuple[str, int | None], list[Edge]] = defaultdict(list)
    for e in spec.edges:
        loads[(e.src, e.src_port)].append(e)

    new_nodes = list(spec.nodes)
    new_edges: list[Edge] = []
    counter = defaultdict(int)

    def fresh(base: str) -> str:
        while True:
            name = f"{base}_fo{counter[base]}"
            counter[base] += 1
            if name not in used:
                used.add(name)
                return name

    def build(src: str, port: int | None, sinks: list[Edge], base: str) -> None:
        if len(sinks) == 1:
            e = sinks[0]
            new_edges.append(Edge(src, e.dst, port, e.dst_port, e.line))
            return
        name = fresh(base)
        new_nodes.append(NodeDecl(name, "splitter", {"delay": float(sp.delay), "fanout": int(sp.fanout)}))
        new_edges.append(Edge(src, name, port, None))
        i = 0
        for branch, size in enumerate(_tree_groups(len(sinks), sp.fanout)):
            build(name, branch, sinks[i:i + size], base)
            i += size

    done = set()
    for e in spec.edges:
        key = (e.src, e.src_port)
        if key in done:
            continue
        done.add(key)
        sinks = loads[key]
        base = e.src if e.src_port is None else f"{e.src}_{e.src_port}"
        build(e.src, e.src_port, sinks, base)
    return replace(spec, nodes=tuple(new_nodes), edges=tuple(new_edges))
