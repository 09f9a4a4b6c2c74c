"""Flatten a resolved model into wired runtime instances and export the plan.

Instance paths are ``/`` + system name, then ``/part`` per nesting level.
Capsule DPorts only relay data, so they vanish here: every wire in the plan
runs from a streamer output field straight to a streamer input field.
"""

from __future__ import annotations

import os
from dataclasses import dataclass, field
from functools import cached_property
from typing import Mapping

from hrt.metamodel import (
    CapsuleDef, ConnectorKind, Definition, Direction, Endpoint, ModelDefinition,
    PortDef, StreamerDef,
)

PLAN_HEADER = "hrtplan v1"
DISCRETE = "discrete"
CONTINUOUS = "continuous"


class LoweringError(RuntimeError):
    """The model reached lowering with a structural defect the validator should have caught."""


@dataclass(frozen=True)
class Instance:
    path: str
    definition: Definition
    parent: str | None = None

    @property
    def kind(self) -> str:
        return self.definition.kind

    @property
    def unit(self) -> str:
        return DISCRETE if isinstance(self.definition, CapsuleDef) else CONTINUOUS


@dataclass(frozen=True, order=True)
class Wire:
    src_path: str
    src_port: str
    src_field: str
    dst_path: str
    dst_port: str
    dst_field: str

    @property
    def source_key(self) -> str:
        return f"{self.src_port}.{self.src_field}"

    @property
    def sink_key(self) -> str:
        return f"{self.dst_port}.{self.dst_field}"

    def __str__(self) -> str:
        return (f"{self.src_path}.{self.src_port}.{self.src_field} -> "
                f"{self.dst_path}.{self.dst_port}.{self.dst_field}")


PortNode = tuple[str, str]  # (instance path, port name)


@dataclass(frozen=True)
class InstanceTree:
    instances: Mapping[str, Instance]
    wires: tuple[Wire, ...] = ()
    routes: Mapping[PortNode, PortNode] = field(default_factory=dict)
    eval_order: tuple[str, ...] = ()
    unwired: tuple[tuple[str, str, str], ...] = ()

    @cached_property
    def units(self) -> dict[str, str]:
        return {p: inst.unit for p, inst in self.instances.items()}

    def capsules(self) -> list[Instance]:
        return [i for i in self.instances.values() if i.unit == DISCRETE]

    def streamers(self) -> list[Instance]:
        return [i for i in self.instances.values() if i.unit == CONTINUOUS]

    @cached_property
    def wires_into(self) -> dict[str, tuple[Wire, ...]]:
        out: dict[str, list[Wire]] = {}
        for w in self.wires:
            out.setdefault(w.dst_path, []).append(w)
        return {k: tuple(v) for k, v in out.items()}


# -- flattening -------------------------------------------------------------


def instantiate(model: ModelDefinition) -> dict[str, Instance]:
    """Every runtime instance under the system root, keyed and sorted by path."""
    out: dict[str, Instance] = {}
    if model.system is None:
        return out

    def expand(path: str, definition: Definition, parent: str | None) -> None:
        out[path] = Instance(path, definition, parent)
        for part in definition.parts:
            expand(f"{path}/{part.name}", part.definition, path)

    expand("/" + model.system.name, model.system.definition, None)
    return dict(sorted(out.items()))


def endpoint_node(inst: Instance, ep: Endpoint) -> PortNode:
    return (inst.path if ep.part is None else f"{inst.path}/{ep.part}", ep.port)


def node_port(instances: Mapping[str, Instance], node: PortNode) -> PortDef:
    return instances[node[0]].definition.port_map[node[1]]


def connector_edges(instances: Mapping[str, Instance]):
    """(kind, source node, sink node, owner path, connector) for every flow, relay branch and bind."""
    for inst in instances.values():
        for c in inst.definition.connectors:
            src = endpoint_node(inst, c.source)
            for sink in c.sinks:
                yield c.kind, src, endpoint_node(inst, sink), inst.path, c


def _is_real_source(instances, node: PortNode) -> bool:
    inst = instances[node[0]]
    port = inst.definition.port_map[node[1]]
    return isinstance(inst.definition, StreamerDef) and port.direction is Direction.OUTPUT


def _is_real_sink(instances, node: PortNode) -> bool:
    inst = instances[node[0]]
    port = inst.definition.port_map[node[1]]
    return isinstance(inst.definition, StreamerDef) and port.direction is Direction.INPUT


def splice_wires(instances: Mapping[str, Instance]):
    """Resolve every streamer input DPort back to the streamer output that drives it.

    Returns (wires, unwired fields). Relay-only junctions are walked through;
    fan-in or a junction loop raises LoweringError.
    """
    incoming: dict[PortNode, list[PortNode]] = {}
    for kind, src, dst, _, _ in connector_edges(instances):
        if kind is not ConnectorKind.BIND:
            incoming.setdefault(dst, []).append(src)

    wires: list[Wire] = []
    unwired: list[tuple[str, str, str]] = []
    for inst in instances.values():
        if not isinstance(inst.definition, StreamerDef):
            continue
        for port in inst.definition.dports():
            if port.direction is not Direction.INPUT:
                continue
            node = (inst.path, port.name)
            source = _trace_back(instances, incoming, node)
            src_fields = {}
            if source is not None:
                src_fields = node_port(instances, source).flowtype.field_kinds
            for f in port.flowtype.fields:
                if src_fields.get(f.name) is f.kind:
                    wires.append(Wire(source[0], source[1], f.name, node[0], node[1], f.name))
                else:
                    unwired.append((node[0], node[1], f.name))
    return tuple(sorted(wires)), tuple(sorted(unwired))


def _trace_back(instances, incoming, node: PortNode) -> PortNode | None:
    seen = {node}
    cur = node
    while True:
        preds = incoming.get(cur, [])
        if not preds:
            return None
        if len(preds) > 1:
            raise LoweringError(f"fan-in at {cur[0]}.{cur[1]}")
        prev = preds[0]
        if _is_real_source(instances, prev):
            return prev
        if prev in seen:
            raise LoweringError(f"relay loop through {prev[0]}.{prev[1]}")
        seen.add(prev)
        cur = prev


def signal_routes(instances: Mapping[str, Instance]) -> dict[PortNode, PortNode]:
    routes: dict[PortNode, PortNode] = {}
    for kind, a, b, _, _ in connector_edges(instances):
        if kind is not ConnectorKind.BIND:
            continue
        for x, y in ((a, b), (b, a)):
            if x in routes:
                raise LoweringError(f"SPort {x[0]}.{x[1]} bound twice")
            routes[x] = y
    return dict(sorted(routes.items()))


def lower_to_plan(model: ModelDefinition) -> InstanceTree:
    """Flatten ``model`` (which must already pass validation) into an InstanceTree."""
    from hrt.continuous import build_eval_order

    instances = instantiate(model)
    for kind, src, dst, owner, _ in connector_edges(instances):
        for node in (src, dst):
            if node[0] not in instances or node[1] not in instances[node[0]].definition.port_map:
                raise LoweringError(f"unresolvable endpoint {node[0]}.{node[1]} in {owner}")
    wires, unwired = splice_wires(instances)
    routes = signal_routes(instances)
    tree = InstanceTree(instances, wires, routes, (), unwired)
    return InstanceTree(instances, wires, routes, build_eval_order(tree), unwired)


# -- plan document ----------------------------------------------------------

PLAN_SECTIONS = ("instances", "wiring", "evalorder", "units")


def emit_plan(plan: InstanceTree) -> str:
    """Canonical line-oriented plan text; identical plans give identical bytes."""
    lines = [PLAN_HEADER, "[instances]"]
    for path, inst in plan.instances.items():
        lines.append(f"{path} {inst.kind} {inst.definition.name}")
    lines.append("[wiring]")
    for w in plan.wires:
        lines.append(f"flow {w}")
    for (a, ap), (b, bp) in plan.routes.items():
        lines.append(f"signal {a}.{ap} -> {b}.{bp}")
    lines.append("[evalorder]")
    lines.extend(plan.eval_order)
    lines.append("[units]")
    for path, unit in sorted(plan.units.items()):
        lines.append(f"{path} {unit}")
    return "\n".join(lines) + "\n"


def parse_plan(text: str) -> dict[str, list[str]]:
    """Split a plan document into its sections (lists of raw lines)."""
    lines = text.splitlines()
    if not lines or lines[0] != PLAN_HEADER:
        raise ValueError(f"not a plan document (expected header {PLAN_HEADER!r})")
    sections: dict[str, list[str]] = {}
    current = None
    for line in lines[1:]:
        if line.startswith("[") and line.endswith("]"):
            current = line[1:-1]
            if current in sections:
                raise ValueError(f"section [{current}] repeated")
            sections[current] = []
        elif current is None:
            raise ValueError(f"line outside any section: {line!r}")
        elif line:
            sections[current].append(line)
    missing = [s for s in PLAN_SECTIONS if s not in sections]
    if missing:
        raise ValueError(f"missing plan sections: {missing}")
    return sections


# -- graph export -----------------------------------------------------------


def _q(text: str) -> str:
    return '"' + text.replace("\\", "\\\\").replace('"', '\\"') + '"'


def emit_dot(model: ModelDefinition) -> str:
    """Graphviz text: one cluster per instance, DPorts as circles, SPorts as squares."""
    instances = instantiate(model)
    title = model.system.name if model.system else "model"
    out = [f"digraph {_q(title)} {{", "  compound=true;", "  node [fontsize=10];"]

    children: dict[str | None, list[Instance]] = {}
    for inst in instances.values():
        children.setdefault(inst.parent, []).append(inst)

    def cluster(inst: Instance, depth: int) -> None:
        pad = "  " * depth
        d = inst.definition
        out.append(f"{pad}subgraph {_q('cluster_' + inst.path)} {{")
        name = inst.path.rsplit("/", 1)[-1]
        out.append(f"{pad}  label={_q(f'{name} : {d.name} <<{d.kind}>>')};")
        out.append(f"{pad}  style={'rounded' if d.kind == 'streamer' else 'solid'};")
        for port in d.ports:
            shape = "circle" if port.is_dport else "square"
            out.append(f"{pad}  {_q(inst.path + '.' + port.name)} "
                       f"[shape={shape}, label={_q(port.name)}];")
        if not d.ports:
            # graphviz drops empty clusters
            out.append(f"{pad}  {_q(inst.path)} [shape=point, style=invis];")
        for child in children.get(inst.path, []):
            cluster(child, depth + 1)
        out.append(f"{pad}}}")

    for root in children.get(None, []):
        cluster(root, 1)

    for kind, src, dst, _, _ in connector_edges(instances):
        a, b = _q(f"{src[0]}.{src[1]}"), _q(f"{dst[0]}.{dst[1]}")
        if kind is ConnectorKind.FLOW:
            out.append(f"  {a} -> {b};")
        elif kind is ConnectorKind.RELAY:
            out.append(f"  {a} -> {b} [label=\"relay\"];")
        else:
            out.append(f"  {a} -> {b} [dir=none, style=dashed];")
    out.append("}")
    return "\n".join(out) + "\n"


def write_atomic(path: str, text: str) -> None:
    """Write via a temp file and rename so a failure never leaves partial output."""
    tmp = f"{path}.tmp{os.getpid()}"
    try:
        with open(tmp, "w", encoding="utf-8", newline="") as fh:
            fh.write(text)
        os.replace(tmp, path)
    finally:
        if os.path.exists(tmp):
            os.remove(tmp)
