"""In-memory model of capsules, streamers, ports, flows, relays and solvers.

All values here are immutable once built; lookups that need a mapping are
cached on first use.
"""

from __future__ import annotations

import math
from dataclasses import dataclass, field, replace
from enum import Enum
from functools import cached_property
from typing import Mapping, Union

from hrt.diagnostics import NO_SPAN, SourceSpan
from hrt.expr import Expr, Kind, Value, evaluate


class MetamodelError(ValueError):
    """A definition violates a structural invariant of the metamodel."""


# -- data and signal types --------------------------------------------------


@dataclass(frozen=True)
class FieldDef:
    name: str
    kind: Kind
    span: SourceSpan = field(default=NO_SPAN, compare=False, repr=False)


@dataclass(frozen=True)
class FlowType:
    name: str
    fields: tuple[FieldDef, ...] = ()
    span: SourceSpan = field(default=NO_SPAN, compare=False, repr=False)

    def __post_init__(self) -> None:
        names = [f.name for f in self.fields]
        if len(set(names)) != len(names):
            raise MetamodelError(f"flowtype {self.name} has duplicate field names")

    @cached_property
    def field_kinds(self) -> dict[str, Kind]:
        return {f.name: f.kind for f in self.fields}

    @property
    def field_names(self) -> tuple[str, ...]:
        return tuple(f.name for f in self.fields)


def flow_subset(a: FlowType, b: FlowType) -> bool:
    """True iff every (name, kind) field of ``a`` also occurs in ``b``.

    Structural and exact on kinds: an int field never matches a real one.
    """
    kinds = b.field_kinds
    return all(kinds.get(f.name) is f.kind for f in a.fields)


IN = "in"
OUT = "out"


def flip(direction: str) -> str:
    return OUT if direction == IN else IN


@dataclass(frozen=True)
class SignalDef:
    name: str
    direction: str
    payload: FlowType | None = None
    span: SourceSpan = field(default=NO_SPAN, compare=False, repr=False)


@dataclass(frozen=True)
class Protocol:
    name: str
    signals: tuple[SignalDef, ...] = ()
    span: SourceSpan = field(default=NO_SPAN, compare=False, repr=False)

    def __post_init__(self) -> None:
        names = [s.name for s in self.signals]
        if len(set(names)) != len(names):
            raise MetamodelError(f"protocol {self.name} has duplicate signal names")

    @cached_property
    def by_name(self) -> dict[str, SignalDef]:
        return {s.name: s for s in self.signals}


def protocol_conjugate(p: Protocol) -> Protocol:
    """The protocol as seen from the other end: every direction flipped."""
    return replace(p, signals=tuple(replace(s, direction=flip(s.direction)) for s in p.signals))


# -- ports and connectors ---------------------------------------------------


class PortKind(str, Enum):
    DPORT = "dport"
    SPORT = "sport"


class Direction(str, Enum):
    INPUT = "in"
    OUTPUT = "out"
    BASE = "base"
    CONJUGATE = "conjugate"


@dataclass(frozen=True)
class PortDef:
    name: str
    kind: PortKind
    direction: Direction
    type: Union[FlowType, Protocol]
    relay_only: bool = False
    span: SourceSpan = field(default=NO_SPAN, compare=False, repr=False)

    def __post_init__(self) -> None:
        if self.kind is PortKind.DPORT:
            if not isinstance(self.type, FlowType):
                raise MetamodelError(f"DPort {self.name} must carry a flowtype")
            if self.direction not in (Direction.INPUT, Direction.OUTPUT):
                raise MetamodelError(f"DPort {self.name} must be in or out")
        else:
            if not isinstance(self.type, Protocol):
                raise MetamodelError(f"SPort {self.name} must carry a protocol")
            if self.direction not in (Direction.BASE, Direction.CONJUGATE):
                raise MetamodelError(f"SPort {self.name} must be base or conjugate")

    @property
    def is_dport(self) -> bool:
        return self.kind is PortKind.DPORT

    @property
    def flowtype(self) -> FlowType:
        assert isinstance(self.type, FlowType)
        return self.type

    def signal_direction(self, signal: str) -> str | None:
        """Direction of ``signal`` as seen by the owner of this SPort."""
        if self.kind is not PortKind.SPORT:
            return None
        sig = self.type.by_name.get(signal)
        if sig is None:
            return None
        return sig.direction if self.direction is Direction.BASE else flip(sig.direction)


@dataclass(frozen=True)
class Endpoint:
    """A port on the enclosing definition (``part is None``) or on one of its parts."""

    part: str | None
    port: str
    span: SourceSpan = field(default=NO_SPAN, compare=False, repr=False)

    def __str__(self) -> str:
        return self.port if self.part is None else f"{self.part}.{self.port}"


class ConnectorKind(str, Enum):
    FLOW = "flow"
    RELAY = "relay"
    BIND = "bind"


@dataclass(frozen=True)
class Connector:
    kind: ConnectorKind
    source: Endpoint
    sinks: tuple[Endpoint, ...]
    span: SourceSpan = field(default=NO_SPAN, compare=False, repr=False)


@dataclass(frozen=True)
class Part:
    name: str
    definition: "Definition"
    span: SourceSpan = field(default=NO_SPAN, compare=False, repr=False)


# -- behaviour --------------------------------------------------------------


@dataclass(frozen=True)
class Assign:
    target: str
    expr: Expr
    span: SourceSpan = field(default=NO_SPAN, compare=False, repr=False)


@dataclass(frozen=True)
class Send:
    port: str
    signal: str
    args: tuple[Expr, ...] = ()
    span: SourceSpan = field(default=NO_SPAN, compare=False, repr=False)


@dataclass(frozen=True)
class Raise:
    signal: str
    span: SourceSpan = field(default=NO_SPAN, compare=False, repr=False)


Action = Union[Assign, Send, Raise]


@dataclass(frozen=True)
class State:
    name: str
    parent: str | None = None
    initial: bool = False
    entry: tuple[Action, ...] = ()
    exit: tuple[Action, ...] = ()
    span: SourceSpan = field(default=NO_SPAN, compare=False, repr=False)


@dataclass(frozen=True)
class Transition:
    index: int
    source: str
    target: str
    trigger: str | None = None
    timeout: float | None = None
    guard: Expr | None = None
    action: tuple[Action, ...] = ()
    span: SourceSpan = field(default=NO_SPAN, compare=False, repr=False)

    def describe(self) -> str:
        how = f"on {self.trigger}" if self.trigger is not None else f"after {self.timeout!r}"
        return f"{self.source} -> {self.target} {how}"


@dataclass(frozen=True)
class StateMachine:
    states: tuple[State, ...]
    transitions: tuple[Transition, ...] = ()

    def __post_init__(self) -> None:
        names = [s.name for s in self.states]
        if len(set(names)) != len(names):
            raise MetamodelError("state names must be unique within a machine")
        known = set(names)
        for s in self.states:
            if s.parent is not None and s.parent not in known:
                raise MetamodelError(f"state {s.name} has unknown parent {s.parent}")
        levels: dict[str | None, list[State]] = {}
        for s in self.states:
            levels.setdefault(s.parent, []).append(s)
        for parent, kids in levels.items():
            if sum(k.initial for k in kids) != 1:
                where = "top level" if parent is None else f"state {parent}"
                raise MetamodelError(f"{where} needs exactly one initial state")
        for tr in self.transitions:
            if tr.source not in known or tr.target not in known:
                raise MetamodelError(f"transition {tr.describe()} names an unknown state")
            if (tr.trigger is None) == (tr.timeout is None):
                raise MetamodelError("a transition has exactly one of trigger or timeout")
            if tr.timeout is not None and not tr.timeout > 0:
                raise MetamodelError(f"timeout must be positive, got {tr.timeout}")

    @cached_property
    def by_name(self) -> dict[str, State]:
        return {s.name: s for s in self.states}

    @cached_property
    def children(self) -> dict[str | None, tuple[str, ...]]:
        out: dict[str | None, list[str]] = {}
        for s in self.states:
            out.setdefault(s.parent, []).append(s.name)
        return {k: tuple(v) for k, v in out.items()}

    def initial_child(self, parent: str | None) -> str | None:
        for name in self.children.get(parent, ()):
            if self.by_name[name].initial:
                return name
        return None

    def ancestors(self, name: str) -> list[str]:
        """``name`` and its ancestors, innermost first."""
        chain = []
        cur: str | None = name
        while cur is not None:
            chain.append(cur)
            cur = self.by_name[cur].parent
        return chain

    def qualified(self, name: str) -> str:
        return ".".join(reversed(self.ancestors(name)))

    @cached_property
    def outgoing(self) -> dict[str, tuple[Transition, ...]]:
        out: dict[str, list[Transition]] = {}
        for tr in self.transitions:
            out.setdefault(tr.source, []).append(tr)
        return {k: tuple(v) for k, v in out.items()}


class SolverMethod(str, Enum):
    EULER = "euler"
    RK4 = "rk4"


@dataclass(frozen=True)
class SolverSpec:
    method: SolverMethod = SolverMethod.RK4
    step: float | None = None

    def __post_init__(self) -> None:
        if self.step is not None and not (self.step > 0 and math.isfinite(self.step)):
            raise MetamodelError(f"solver step must be positive, got {self.step}")


@dataclass(frozen=True)
class Variable:
    name: str
    kind: Kind
    init: Expr
    span: SourceSpan = field(default=NO_SPAN, compare=False, repr=False)


@dataclass(frozen=True)
class OutputEquation:
    port: str
    field: str
    expr: Expr
    span: SourceSpan = field(default=NO_SPAN, compare=False, repr=False)

    @property
    def key(self) -> str:
        return f"{self.port}.{self.field}"


@dataclass(frozen=True)
class Handler:
    signal: str
    assignments: tuple[Assign, ...]
    span: SourceSpan = field(default=NO_SPAN, compare=False, repr=False)


@dataclass(frozen=True)
class Emitter:
    """Sends ``signal`` on ``port`` each time ``condition`` turns true."""

    port: str
    signal: str
    condition: Expr
    args: tuple[Expr, ...] = ()
    span: SourceSpan = field(default=NO_SPAN, compare=False, repr=False)


# -- definitions ------------------------------------------------------------


@dataclass(frozen=True)
class _DefinitionBase:
    name: str
    ports: tuple[PortDef, ...] = ()
    parts: tuple[Part, ...] = ()
    connectors: tuple[Connector, ...] = ()

    @cached_property
    def port_map(self) -> dict[str, PortDef]:
        return {p.name: p for p in self.ports}

    @cached_property
    def part_map(self) -> dict[str, Part]:
        return {p.name: p for p in self.parts}

    def dports(self) -> list[PortDef]:
        return [p for p in self.ports if p.is_dport]

    def sports(self) -> list[PortDef]:
        return [p for p in self.ports if not p.is_dport]

    def endpoint_port(self, ep: Endpoint) -> PortDef | None:
        if ep.part is None:
            return self.port_map.get(ep.port)
        part = self.part_map.get(ep.part)
        return None if part is None else part.definition.port_map.get(ep.port)

    def signal_payload(self, signal: str, direction: str = IN) -> FlowType | None:
        for p in self.sports():
            if p.signal_direction(signal) == direction:
                return p.type.by_name[signal].payload
        return None


@dataclass(frozen=True)
class CapsuleDef(_DefinitionBase):
    variables: tuple[Variable, ...] = ()
    machine: StateMachine | None = None
    span: SourceSpan = field(default=NO_SPAN, compare=False, repr=False)

    kind = "capsule"

    def __post_init__(self) -> None:
        for p in self.ports:
            if p.is_dport and not p.relay_only:
                raise MetamodelError(f"capsule {self.name}: DPort {p.name} must be relay-only")


@dataclass(frozen=True)
class StreamerDef(_DefinitionBase):
    solver: SolverSpec = SolverSpec()
    parameters: tuple[Variable, ...] = ()
    states: tuple[Variable, ...] = ()
    derivatives: tuple[tuple[str, Expr], ...] = ()
    outputs: tuple[OutputEquation, ...] = ()
    handlers: tuple[Handler, ...] = ()
    emitters: tuple[Emitter, ...] = ()
    span: SourceSpan = field(default=NO_SPAN, compare=False, repr=False)

    kind = "streamer"

    def __post_init__(self) -> None:
        # capsule parts are legal to construct; the validator reports them (E-CONTAIN)
        state_names = [s.name for s in self.states]
        der_names = [n for n, _ in self.derivatives]
        if sorted(state_names) != sorted(der_names) or len(set(der_names)) != len(der_names):
            raise MetamodelError(
                f"streamer {self.name}: each state variable needs exactly one derivative equation"
            )
        required = {
            f"{p.name}.{f}" for p in self.ports if p.is_dport and p.direction is Direction.OUTPUT
            for f in p.flowtype.field_names
        }
        given = [o.key for o in self.outputs]
        if sorted(given) != sorted(required):
            raise MetamodelError(
                f"streamer {self.name}: each output field needs exactly one output equation"
            )

    @cached_property
    def derivative_map(self) -> dict[str, Expr]:
        return dict(self.derivatives)

    @cached_property
    def handler_map(self) -> dict[str, Handler]:
        return {h.signal: h for h in self.handlers}


Definition = Union[CapsuleDef, StreamerDef]


@dataclass(frozen=True)
class SystemDef:
    name: str
    definition: Definition
    span: SourceSpan = field(default=NO_SPAN, compare=False, repr=False)


@dataclass(frozen=True)
class SimulationDefaults:
    t_end: float | None = None
    step: float | None = None
    decimation: int | None = None


@dataclass(frozen=True)
class ModelDefinition:
    """A fully resolved model. Top-level maps compare independently of declaration order."""

    flowtypes: Mapping[str, FlowType] = field(default_factory=dict)
    protocols: Mapping[str, Protocol] = field(default_factory=dict)
    definitions: Mapping[str, Definition] = field(default_factory=dict)
    system: SystemDef | None = None
    simulation: SimulationDefaults = SimulationDefaults()

    def capsules(self) -> list[CapsuleDef]:
        return [d for _, d in sorted(self.definitions.items()) if isinstance(d, CapsuleDef)]

    def streamers(self) -> list[StreamerDef]:
        return [d for _, d in sorted(self.definitions.items()) if isinstance(d, StreamerDef)]


# -- clock ------------------------------------------------------------------


@dataclass(frozen=True)
class SimClock:
    """Read-only view of simulation time handed to model code."""

    t: float = 0.0
    h: float = 0.01

    def __post_init__(self) -> None:
        if not self.h > 0:
            raise ValueError(f"macro step must be positive, got {self.h}")

    @classmethod
    def at_boundary(cls, k: int, h: float) -> SimClock:
        # k*h by multiplication, never accumulation
        return cls(k * h, h)


def expr_eval(e: Expr, env: Mapping[str, Value], clock: SimClock) -> Value:
    """Evaluate an expression with ``time`` bound to the clock."""
    return evaluate(e, env, clock.t)
