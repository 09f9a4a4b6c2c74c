"""Structural rules for resolved models.

Codes (frozen):

E-CONTAIN        a streamer declares a capsule part
E-CAPSULE-DPORT  a capsule reads a DPort, or a capsule DPort is not wired straight through
E-FLOWTYPE       the source flow type is not a subset of the sink flow type
E-FLOWDIR        a flow runs output->output or input->input
E-FANIN          an input DPort has more than one incoming flow
E-RELAY-ARITY    a relay without exactly one source and two sinks
E-PROTOCOL       a binding that does not join base and conjugate ends of one protocol
E-ALGLOOP        a cycle of direct-feedthrough dependencies
W-UNWIRED        an input field with no source; it reads as zero
"""

from __future__ import annotations

from dataclasses import dataclass

from hrt.continuous import feedthrough_edges
from hrt.diagnostics import NO_SPAN, Diagnostic, error, sort_diagnostics, warning
from hrt.expr import field_refs
from hrt.graph import find_cycle
from hrt.lowering import (
    InstanceTree, LoweringError, instantiate, splice_wires,
)
from hrt.metamodel import (
    Assign, CapsuleDef, ConnectorKind, Definition, Direction, Endpoint, ModelDefinition, Send,
    StreamerDef, flow_subset,
)


@dataclass(frozen=True)
class ValidationReport:
    diagnostics: tuple[Diagnostic, ...]

    @property
    def passed(self) -> bool:
        return not any(d.is_error for d in self.diagnostics)

    @property
    def errors(self) -> list[Diagnostic]:
        return [d for d in self.diagnostics if d.is_error]

    @property
    def codes(self) -> list[str]:
        return [d.code for d in self.diagnostics]


def _definitions(m: ModelDefinition) -> list[Definition]:
    return [d for _, d in sorted(m.definitions.items())]


def check_containment(m: ModelDefinition) -> list[Diagnostic]:
    out = []
    for d in m.streamers():
        for part in d.parts:
            if isinstance(part.definition, CapsuleDef):
                out.append(error("E-CONTAIN", f"streamer {d.name} contains capsule part "
                                 f"'{part.name}' ({part.definition.name})", part.span))
    return out


def _role(d: Definition, ep: Endpoint) -> str | None:
    """'source' or 'sink' as seen from inside ``d``; None for an unknown port."""
    port = d.endpoint_port(ep)
    if port is None or not port.is_dport:
        return None
    outward = port.direction is Direction.OUTPUT
    if ep.part is None:
        outward = not outward
    return "source" if outward else "sink"


def _capsule_expressions(d: CapsuleDef):
    for v in d.variables:
        yield v.init
    if d.machine is None:
        return

    def actions(acts):
        for a in acts:
            if isinstance(a, Assign):
                yield a.expr
            elif isinstance(a, Send):
                yield from a.args

    for s in d.machine.states:
        yield from actions(s.entry)
        yield from actions(s.exit)
    for t in d.machine.transitions:
        if t.guard is not None:
            yield t.guard
        yield from actions(t.action)


def check_capsule_dports(m: ModelDefinition) -> list[Diagnostic]:
    out = []
    for d in m.capsules():
        dports = {p.name: p for p in d.dports()}
        if not dports:
            continue
        for e in _capsule_expressions(d):
            for ref in field_refs(e):
                if ref.base in dports:
                    out.append(error("E-CAPSULE-DPORT", f"capsule {d.name} reads DPort field "
                                     f"'{ref.key}'; capsule DPorts only relay data", ref.span))
        uses = {name: 0 for name in dports}
        for c in d.connectors:
            if c.kind is ConnectorKind.BIND:
                continue
            for ep in (c.source, *c.sinks):
                if ep.part is None and ep.port in uses:
                    uses[ep.port] += 1
        for name, n in uses.items():
            if n != 1:
                p = dports[name]
                side = "inner sink" if p.direction is Direction.INPUT else "inner source"
                out.append(error("E-CAPSULE-DPORT", f"capsule {d.name} DPort '{name}' must be wired "
                                 f"straight through to exactly one {side}, found {n}", p.span))
    return out


def check_flow_connections(m: ModelDefinition) -> list[Diagnostic]:
    out = []
    for d in _definitions(m):
        incoming: dict[tuple, list] = {}
        for c in d.connectors:
            if c.kind is ConnectorKind.BIND:
                continue
            if c.kind is ConnectorKind.RELAY and len(c.sinks) != 2:
                out.append(error("E-RELAY-ARITY", f"relay from '{c.source}' must have exactly two "
                                 f"sinks, found {len(c.sinks)}", c.span))
            src_port = d.endpoint_port(c.source)
            if _role(d, c.source) != "source":
                out.append(error("E-FLOWDIR", f"'{c.source}' cannot drive a flow here "
                                 f"(it is an input as seen from {d.name})", c.source.span))
                continue
            for sink in c.sinks:
                key = (sink.part, sink.port)
                incoming.setdefault(key, []).append(c)
                role = _role(d, sink)
                if role != "sink" or (isinstance(d, StreamerDef) and sink.part is None):
                    out.append(error("E-FLOWDIR", f"'{sink}' cannot receive a flow here "
                                     f"(it is an output as seen from {d.name})", sink.span))
                    continue
                dst_port = d.endpoint_port(sink)
                if not flow_subset(src_port.flowtype, dst_port.flowtype):
                    out.append(error("E-FLOWTYPE", f"flow type {src_port.type.name} of "
                                     f"'{c.source}' is not a subset of {dst_port.type.name} of "
                                     f"'{sink}'", c.span))
        for (part, port), cs in incoming.items():
            if len(cs) > 1:
                name = port if part is None else f"{part}.{port}"
                out.append(error("E-FANIN", f"input '{name}' in {d.name} has {len(cs)} incoming "
                                 "flows", cs[1].span, [c.span for c in cs[:1]]))
    return out


def check_signal_bindings(m: ModelDefinition) -> list[Diagnostic]:
    out = []
    for d in _definitions(m):
        bound: dict[tuple, object] = {}
        for c in d.connectors:
            if c.kind is not ConnectorKind.BIND:
                continue
            a, b = c.source, c.sinks[0]
            pa, pb = d.endpoint_port(a), d.endpoint_port(b)
            if pa.type.name != pb.type.name or pa.type != pb.type:
                out.append(error("E-PROTOCOL", f"'{a}' ({pa.type.name}) and '{b}' ({pb.type.name}) "
                                 "carry different protocols", c.span))
            elif pa.direction is pb.direction:
                out.append(error("E-PROTOCOL", f"'{a}' and '{b}' are both {pa.direction.value}; "
                                 "a binding joins base and conjugate ends", c.span))
            for ep in (a, b):
                key = (ep.part, ep.port)
                if key in bound:
                    out.append(error("E-PROTOCOL", f"SPort '{ep}' is bound more than once", c.span))
                bound[key] = c
    return out


def _flatten(m: ModelDefinition):
    instances = instantiate(m)
    wires, unwired = splice_wires(instances)
    return InstanceTree(instances, wires, {}, (), unwired)


def check_algebraic_loops(m: ModelDefinition) -> list[Diagnostic]:
    try:
        tree = _flatten(m)
    except LoweringError:
        return []
    edges = feedthrough_edges(tree)
    cycle = find_cycle([i.path for i in tree.streamers()], edges)
    if not cycle:
        return []
    span = tree.instances[cycle[0]].definition.span
    names = ", ".join(cycle)
    return [error("E-ALGLOOP", f"algebraic loop through {names}", span)]


def check_unwired(m: ModelDefinition) -> list[Diagnostic]:
    try:
        tree = _flatten(m)
    except LoweringError:
        return []
    out = []
    for path, port, fld in tree.unwired:
        p = tree.instances[path].definition.port_map[port]
        out.append(warning("W-UNWIRED", f"{path}.{port}.{fld} has no source and reads as zero",
                           p.span if p.span is not None else NO_SPAN))
    return out


def validate_all(m: ModelDefinition) -> ValidationReport:
    """All structural checks in a fixed order; loop detection needs sound wiring first."""
    diags: list[Diagnostic] = []
    diags += check_containment(m)
    diags += check_capsule_dports(m)
    diags += check_flow_connections(m)
    diags += check_signal_bindings(m)
    if not any(d.is_error for d in diags):
        diags += check_algebraic_loops(m)
        diags += check_unwired(m)
    return ValidationReport(tuple(sort_diagnostics(diags)))
