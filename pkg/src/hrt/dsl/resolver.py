"""Name resolution and static checking: ModelAst -> ModelDefinition.

Diagnostic codes produced here:

E-UNRESOLVED  unknown name
E-DUPLICATE   a name declared twice in one namespace
E-SELFPART    a definition contains itself, directly or transitively
E-PORTKIND    a flow/relay on an SPort or a bind on a DPort
E-TYPE        expression kind mismatch
E-SIGNAL      a signal used against its direction on the port
E-EQUATION    missing or repeated derivative/output equations
E-INITIAL     not exactly one initial state at some level
E-TIMEOUT     non-constant or non-positive ``after`` duration
E-SOLVER      bad solver step
E-SIM         bad simulation defaults
"""

from __future__ import annotations

from typing import Iterable

from hrt.diagnostics import Diagnostic, DiagnosticError, SourceSpan, error
from hrt.dsl import ast
from hrt.expr import (
    RESERVED, Expr, ExprError, ExprTypeError, Kind, UnboundSymbolError, assignable, evaluate,
    infer_kind,
)
from hrt.metamodel import (
    IN, OUT, Assign, CapsuleDef, Connector, ConnectorKind, Definition, Direction, Emitter,
    Endpoint, FieldDef, FlowType, Handler, MetamodelError, ModelDefinition, OutputEquation,
    Part, PortDef, PortKind, Protocol, Raise, Send, SignalDef, SimulationDefaults, SolverMethod,
    SolverSpec, State, StateMachine, StreamerDef, SystemDef, Transition, Variable,
)


class _Broken(Exception):
    """A definition had errors; dependants are skipped without further noise."""


class _Resolver:
    def __init__(self) -> None:
        self.diags: list[Diagnostic] = []
        self.flowtypes: dict[str, FlowType] = {}
        self.protocols: dict[str, Protocol] = {}
        self.definitions: dict[str, Definition] = {}
        self.broken: set[str] = set()

    def err(self, code: str, message: str, span: SourceSpan, related=()) -> None:
        self.diags.append(error(code, message, span, related))

    def unique(self, items: Iterable, what: str) -> dict:
        """Map name -> item, reporting E-DUPLICATE for repeats (first wins)."""
        seen: dict = {}
        for item in items:
            if item.name in seen:
                first = seen[item.name]
                self.err("E-DUPLICATE", f"{what} '{item.name}' already declared at "
                         f"{first.span.line}:{first.span.column}", item.span, (first.span,))
            elif item.name in RESERVED:
                self.err("E-DUPLICATE", f"'{item.name}' is reserved", item.span)
            else:
                seen[item.name] = item
        return seen

    def check_expr(self, e: Expr, scope: dict[str, Kind], want: Kind | None = None,
                   what: str = "expression") -> Kind | None:
        try:
            k = infer_kind(e, scope)
        except UnboundSymbolError as exc:
            self.err("E-UNRESOLVED", f"unknown name '{exc.name}' in {what}", exc.span)
            return None
        except ExprTypeError as exc:
            self.err("E-TYPE", f"{exc.message} in {what}", exc.span)
            return None
        if want is not None and not assignable(want, k):
            self.err("E-TYPE", f"{what} must be {want}, got {k}", e.span)
            return None
        return k

    # -- top level --

    def run(self, model: ast.ModelAst) -> ModelDefinition:
        flow_decls = [d for d in model.decls if isinstance(d, ast.FlowTypeDecl)]
        proto_decls = [d for d in model.decls if isinstance(d, ast.ProtocolDecl)]
        def_decls = [d for d in model.decls if isinstance(d, (ast.CapsuleDecl, ast.StreamerDecl))]
        systems = [d for d in model.decls if isinstance(d, ast.SystemDecl)]
        sims = [d for d in model.decls if isinstance(d, ast.SimulationDecl)]

        for name, d in sorted(self.unique(flow_decls, "flowtype").items()):
            self.flowtypes[name] = self.flowtype(d)
        for name, d in sorted(self.unique(proto_decls, "protocol").items()):
            p = self.protocol(d)
            if p is not None:
                self.protocols[name] = p

        decls = self.unique(def_decls, "definition")
        for name in self.dependency_order(decls):
            if name in self.broken:
                continue
            try:
                self.definitions[name] = self.definition(decls[name])
            except _Broken:
                self.broken.add(name)

        system = None
        if len(systems) > 1:
            for s in systems[1:]:
                self.err("E-DUPLICATE", "only one system may be declared", s.span, (systems[0].span,))
        if systems:
            s = systems[0]
            target = self.definitions.get(s.type_name)
            if target is not None:
                system = SystemDef(s.name, target, s.span)
            elif s.type_name not in decls:
                self.err("E-UNRESOLVED", f"unknown definition '{s.type_name}'", s.span)

        if len(sims) > 1:
            for s in sims[1:]:
                self.err("E-DUPLICATE", "only one simulation block may be declared", s.span)
        simulation = self.simulation(sims[0]) if sims else SimulationDefaults()

        if any(d.is_error for d in self.diags):
            raise DiagnosticError(self.diags)
        return ModelDefinition(
            flowtypes=self.flowtypes,
            protocols=self.protocols,
            definitions=dict(sorted(self.definitions.items())),
            system=system,
            simulation=simulation,
        )

    def flowtype(self, d: ast.FlowTypeDecl) -> FlowType:
        fields = self.unique(d.fields, f"field of {d.name}")
        return FlowType(d.name, tuple(FieldDef(f.name, Kind(f.kind), f.span) for f in fields.values()),
                        d.span)

    def protocol(self, d: ast.ProtocolDecl) -> Protocol | None:
        signals = []
        ok = True
        for s in self.unique(d.signals, f"signal of {d.name}").values():
            payload = None
            if s.payload is not None:
                payload = self.flowtypes.get(s.payload)
                if payload is None:
                    self.err("E-UNRESOLVED", f"unknown flowtype '{s.payload}'", s.span)
                    ok = False
            signals.append(SignalDef(s.name, s.direction, payload, s.span))
        return Protocol(d.name, tuple(signals), d.span) if ok else None

    def simulation(self, d: ast.SimulationDecl) -> SimulationDefaults:
        values: dict = {}
        for key, value in d.settings:
            if key in values:
                self.err("E-DUPLICATE", f"simulation setting '{key}' repeated", d.span)
            if key == "decimation":
                if not isinstance(value, int) or value < 1:
                    self.err("E-SIM", "decimation must be a positive integer", d.span)
                values[key] = int(value)
            else:
                if not value > 0:
                    self.err("E-SIM", f"{key} must be positive", d.span)
                values[key] = float(value)
        return SimulationDefaults(values.get("t_end"), values.get("step"), values.get("decimation"))

    def dependency_order(self, decls: dict) -> list[str]:
        """Definitions ordered so parts come before their containers.

        Reports E-UNRESOLVED for unknown part types and E-SELFPART for cycles.
        """
        deps: dict[str, list[ast.PartDecl]] = {}
        for name, d in decls.items():
            deps[name] = [i for i in d.items if isinstance(i, ast.PartDecl)]
            for p in deps[name]:
                if p.type_name not in decls:
                    self.err("E-UNRESOLVED", f"unknown definition '{p.type_name}'", p.span)
                    self.broken.add(name)

        order: list[str] = []
        state: dict[str, int] = {}  # 1 visiting, 2 done
        cyclic: set[str] = set()

        def visit(name: str, stack: list[str]) -> None:
            state[name] = 1
            stack.append(name)
            for p in deps[name]:
                t = p.type_name
                if t not in decls:
                    continue
                if state.get(t) == 1:
                    cycle = stack[stack.index(t):]
                    self.err("E-SELFPART", f"'{t}' contains itself via "
                             + " -> ".join(cycle + [t]), p.span)
                    cyclic.update(cycle)
                elif state.get(t) is None:
                    visit(t, stack)
            stack.pop()
            state[name] = 2
            order.append(name)

        for name in sorted(decls):
            if name not in state:
                visit(name, [])
        self.broken |= cyclic
        return [n for n in order if n not in cyclic]

    # -- definitions --

    def definition(self, d) -> Definition:
        for i in d.items:
            if isinstance(i, ast.PartDecl) and i.type_name not in self.definitions:
                raise _Broken()
        n_before = len(self.diags)
        members = [i for i in d.items if isinstance(i, (ast.DPortDecl, ast.SPortDecl, ast.PartDecl,
                                                        ast.VarDecl, ast.ParamDecl, ast.StateVarDecl))]
        self.unique(members, f"member of {d.name}")
        ports = self.ports(d, is_capsule=isinstance(d, ast.CapsuleDecl))
        parts = tuple(Part(i.name, self.definitions[i.type_name], i.span)
                      for i in d.items if isinstance(i, ast.PartDecl))
        scratch = _Scratch(d.name, ports, parts)
        connectors = self.connectors(d, scratch)
        if isinstance(d, ast.CapsuleDecl):
            built = self.capsule(d, ports, parts, connectors)
        else:
            built = self.streamer(d, ports, parts, connectors)
        if len(self.diags) > n_before or built is None:
            raise _Broken()
        return built

    def ports(self, d, is_capsule: bool) -> tuple[PortDef, ...]:
        out = []
        for i in d.items:
            if isinstance(i, ast.DPortDecl):
                ft = self.flowtypes.get(i.type_name)
                if ft is None:
                    self.err("E-UNRESOLVED", f"unknown flowtype '{i.type_name}'", i.span)
                    continue
                direction = Direction.INPUT if i.direction == IN else Direction.OUTPUT
                out.append(PortDef(i.name, PortKind.DPORT, direction, ft, is_capsule, i.span))
            elif isinstance(i, ast.SPortDecl):
                proto = self.protocols.get(i.protocol)
                if proto is None:
                    self.err("E-UNRESOLVED", f"unknown protocol '{i.protocol}'", i.span)
                    continue
                direction = Direction.CONJUGATE if i.conjugate else Direction.BASE
                out.append(PortDef(i.name, PortKind.SPORT, direction, proto, False, i.span))
        return tuple(out)

    def connectors(self, d, scratch: "_Scratch") -> tuple[Connector, ...]:
        out = []
        for i in d.items:
            if isinstance(i, ast.ConnectDecl):
                kind, refs = ConnectorKind.FLOW, [i.source, i.target]
            elif isinstance(i, ast.RelayDecl):
                kind, refs = ConnectorKind.RELAY, [i.source, *i.sinks]
            elif isinstance(i, ast.BindDecl):
                kind, refs = ConnectorKind.BIND, [i.left, i.right]
            else:
                continue
            eps = []
            for r in refs:
                ep = Endpoint(r.part, r.port, r.span)
                port = scratch.endpoint_port(ep)
                if port is None:
                    if r.part is not None and r.part not in scratch.part_map:
                        self.err("E-UNRESOLVED", f"unknown part '{r.part}'", r.span)
                    else:
                        self.err("E-UNRESOLVED", f"unknown port '{ep}'", r.span)
                    continue
                if (kind is ConnectorKind.BIND) == port.is_dport:
                    need = "an SPort" if kind is ConnectorKind.BIND else "a DPort"
                    self.err("E-PORTKIND", f"{kind.value} endpoint '{ep}' must be {need}", r.span)
                    continue
                eps.append(ep)
            if len(eps) == len(refs):
                out.append(Connector(kind, eps[0], tuple(eps[1:]), i.span))
        return tuple(out)

    # -- capsules --

    def capsule(self, d: ast.CapsuleDecl, ports, parts, connectors) -> CapsuleDef | None:
        scope: dict[str, Kind] = {}
        for p in ports:
            if p.is_dport:
                for f in p.flowtype.fields:
                    scope[f"{p.name}.{f.name}"] = f.kind
        variables = []
        for i in d.items:
            if isinstance(i, ast.VarDecl):
                kind = Kind(i.kind)
                self.check_expr(i.init, dict(scope), kind, f"initial value of '{i.name}'")
                scope[i.name] = kind
                variables.append(Variable(i.name, kind, i.init, i.span))
        machines = [i for i in d.items if isinstance(i, ast.StateMachineDecl)]
        for extra in machines[1:]:
            self.err("E-DUPLICATE", f"capsule {d.name} has more than one statemachine", extra.span)
        machine = None
        if machines:
            machine = self.machine(machines[0], d.name, ports, scope)
        try:
            return CapsuleDef(d.name, ports, parts, connectors, tuple(variables), machine, d.span)
        except MetamodelError as exc:
            self.err("E-TYPE", str(exc), d.span)
            return None

    def machine(self, m: ast.StateMachineDecl, owner: str, ports, scope) -> StateMachine | None:
        states: list[State] = []
        by_name: dict[str, ast.StateDecl] = {}
        parents: dict[str, str | None] = {}
        var_kinds = {k: v for k, v in scope.items()}
        raised: set[str] = set()

        def collect_raises(stmts):
            for s in stmts or ():
                if isinstance(s, ast.RaiseStmt):
                    raised.add(s.signal)

        def walk(decls, parent: str | None):
            inits = [s for s in decls if s.initial]
            if decls and len(inits) != 1:
                where = "top level" if parent is None else f"state '{parent}'"
                span = decls[0].span if decls else m.span
                self.err("E-INITIAL", f"{where} of {owner} needs exactly one initial state, "
                         f"found {len(inits)}", inits[1].span if len(inits) > 1 else span)
            for s in decls:
                if s.name in by_name:
                    first = by_name[s.name].span
                    self.err("E-DUPLICATE", f"state '{s.name}' already declared at "
                             f"{first.line}:{first.column}", s.span, (first,))
                    continue
                by_name[s.name] = s
                parents[s.name] = parent
                collect_raises(s.entry)
                collect_raises(s.exit)
                walk(s.children, s.name)

        walk(m.states, None)
        for t in m.transitions:
            collect_raises(t.action)

        for s in _preorder(m.states):
            if by_name.get(s.name) is not s:
                continue
            parent = parents[s.name]
            entry = self.actions(s.entry or (), var_kinds, ports, f"entry of state {s.name}")
            exit_ = self.actions(s.exit or (), var_kinds, ports, f"exit of state {s.name}")
            states.append(State(s.name, parent, s.initial, entry, exit_, s.span))

        transitions = []
        for idx, t in enumerate(m.transitions):
            for name in (t.source, t.target):
                if name not in by_name:
                    self.err("E-UNRESOLVED", f"unknown state '{name}'", t.span)
            local = dict(var_kinds)
            timeout = None
            if t.trigger is not None:
                in_ports = [p for p in ports if p.signal_direction(t.trigger) == IN]
                if in_ports:
                    payload = in_ports[0].type.by_name[t.trigger].payload
                    if payload is not None:
                        for f in payload.fields:
                            local[f"msg.{f.name}"] = f.kind
                elif t.trigger not in raised:
                    if any(p.signal_direction(t.trigger) == OUT for p in ports):
                        self.err("E-SIGNAL", f"'{t.trigger}' is an outgoing signal of {owner} "
                                 "and cannot trigger a transition", t.span)
                    else:
                        self.err("E-UNRESOLVED", f"unknown trigger signal '{t.trigger}'", t.span)
            else:
                timeout = self.timeout(t)
            if t.guard is not None:
                self.check_expr(t.guard, local, Kind.BOOL, "guard")
            action = self.actions(t.action or (), local, ports, "transition action")
            transitions.append(Transition(idx, t.source, t.target, t.trigger, timeout, t.guard,
                                          action, t.span))
        try:
            return StateMachine(tuple(states), tuple(transitions))
        except MetamodelError as exc:
            if not any(d.is_error for d in self.diags):
                self.err("E-INITIAL", str(exc), m.span)
            return None

    def timeout(self, t: ast.TransitionDecl) -> float | None:
        try:
            infer_kind(t.after, {})
            value = evaluate(t.after, {})
        except ExprError:
            self.err("E-TIMEOUT", "'after' needs a constant duration", t.after.span)
            return None
        if isinstance(value, bool) or not value > 0:
            self.err("E-TIMEOUT", f"'after' duration must be positive, got {value!r}", t.after.span)
            return None
        return float(value)

    def actions(self, stmts, scope: dict[str, Kind], ports, what: str):
        out = []
        port_map = {p.name: p for p in ports}
        for s in stmts:
            if isinstance(s, ast.AssignStmt):
                if s.target not in scope or "." in s.target:
                    self.err("E-UNRESOLVED", f"assignment to undeclared variable '{s.target}'", s.span)
                    continue
                self.check_expr(s.expr, scope, scope[s.target], f"assignment to '{s.target}'")
                out.append(Assign(s.target, s.expr, s.span))
            elif isinstance(s, ast.SendStmt):
                if self.outgoing(port_map, s.port, s.signal, s.args, scope, s.span):
                    out.append(Send(s.port, s.signal, s.args, s.span))
            else:
                out.append(Raise(s.signal, s.span))
        return tuple(out)

    def outgoing(self, port_map, port_name, signal, args, scope, span) -> bool:
        """Check a send/emit against the port's protocol; True if well-formed."""
        port = port_map.get(port_name)
        if port is None or port.is_dport:
            self.err("E-UNRESOLVED", f"unknown SPort '{port_name}'", span)
            return False
        direction = port.signal_direction(signal)
        if direction is None:
            self.err("E-UNRESOLVED", f"protocol {port.type.name} has no signal '{signal}'", span)
            return False
        if direction != OUT:
            self.err("E-SIGNAL", f"'{signal}' is incoming on port '{port_name}' and cannot be sent",
                     span)
            return False
        payload = port.type.by_name[signal].payload
        fields = payload.fields if payload is not None else ()
        if len(args) != len(fields):
            self.err("E-TYPE", f"'{signal}' takes {len(fields)} payload value(s), got {len(args)}",
                     span)
            return False
        ok = True
        for f, a in zip(fields, args):
            ok &= self.check_expr(a, scope, f.kind, f"payload field '{f.name}'") is not None
        return ok

    # -- streamers --

    def streamer(self, d: ast.StreamerDecl, ports, parts, connectors) -> StreamerDef | None:
        scope: dict[str, Kind] = {}
        for p in ports:
            if p.is_dport and p.direction is Direction.INPUT:
                for f in p.flowtype.fields:
                    scope[f"{p.name}.{f.name}"] = f.kind
        params, states = [], []
        for i in d.items:
            if isinstance(i, ast.ParamDecl):
                self.check_expr(i.init, {k: v for k, v in scope.items() if "." not in k}, Kind.REAL,
                                f"initial value of '{i.name}'")
                scope[i.name] = Kind.REAL
                params.append(Variable(i.name, Kind.REAL, i.init, i.span))
        for i in d.items:
            if isinstance(i, ast.StateVarDecl):
                self.check_expr(i.init, {k: v for k, v in scope.items() if "." not in k}, Kind.REAL,
                                f"initial value of '{i.name}'")
                states.append(Variable(i.name, Kind.REAL, i.init, i.span))
        for s in states:
            scope[s.name] = Kind.REAL
        state_names = {s.name for s in states}

        derivatives: dict[str, Expr] = {}
        outputs: dict[str, OutputEquation] = {}
        handlers: dict[str, Handler] = {}
        emitters = []
        solver = None
        port_map = {p.name: p for p in ports}
        for i in d.items:
            if isinstance(i, ast.DerDecl):
                if i.name not in state_names:
                    self.err("E-UNRESOLVED", f"'{i.name}' is not a state variable", i.span)
                elif i.name in derivatives:
                    self.err("E-EQUATION", f"second derivative equation for '{i.name}'", i.span)
                else:
                    self.check_expr(i.expr, scope, Kind.REAL, f"derivative of '{i.name}'")
                    derivatives[i.name] = i.expr
            elif isinstance(i, ast.OutDecl):
                port = port_map.get(i.port)
                if port is None or not port.is_dport or port.direction is not Direction.OUTPUT:
                    self.err("E-UNRESOLVED", f"'{i.port}' is not an output DPort", i.span)
                    continue
                kind = port.flowtype.field_kinds.get(i.field)
                if kind is None:
                    self.err("E-UNRESOLVED", f"flowtype {port.type.name} has no field '{i.field}'",
                             i.span)
                    continue
                key = f"{i.port}.{i.field}"
                if key in outputs:
                    self.err("E-EQUATION", f"second output equation for '{key}'", i.span)
                    continue
                self.check_expr(i.expr, scope, kind, f"output '{key}'")
                outputs[key] = OutputEquation(i.port, i.field, i.expr, i.span)
            elif isinstance(i, ast.HandlerDecl):
                h = self.handler(i, ports, scope, {p.name for p in params})
                if h is None:
                    continue
                if h.signal in handlers:
                    self.err("E-DUPLICATE", f"second handler for '{h.signal}'", i.span)
                    continue
                handlers[h.signal] = h
            elif isinstance(i, ast.EmitDecl):
                self.check_expr(i.condition, scope, Kind.BOOL, "emit condition")
                if self.outgoing(port_map, i.port, i.signal, i.args, scope, i.span):
                    emitters.append(Emitter(i.port, i.signal, i.condition, i.args, i.span))
            elif isinstance(i, ast.SolverDecl):
                if solver is not None:
                    self.err("E-DUPLICATE", f"streamer {d.name} has more than one solver", i.span)
                    continue
                if i.step is not None and not i.step > 0:
                    self.err("E-SOLVER", f"solver step must be positive, got {i.step!r}", i.span)
                    continue
                solver = SolverSpec(SolverMethod(i.method), i.step)

        for s in states:
            if s.name not in derivatives:
                self.err("E-EQUATION", f"state variable '{s.name}' has no derivative equation", s.span)
        for p in ports:
            if p.is_dport and p.direction is Direction.OUTPUT:
                for f in p.flowtype.fields:
                    if f"{p.name}.{f.name}" not in outputs:
                        self.err("E-EQUATION", f"output field '{p.name}.{f.name}' has no equation",
                                 p.span)
        try:
            return StreamerDef(
                d.name, ports, parts, connectors,
                solver=solver or SolverSpec(),
                parameters=tuple(params),
                states=tuple(states),
                derivatives=tuple((s.name, derivatives[s.name]) for s in states if s.name in derivatives),
                outputs=tuple(outputs.values()),
                handlers=tuple(handlers.values()),
                emitters=tuple(emitters),
                span=d.span,
            )
        except MetamodelError:
            return None

    def handler(self, h: ast.HandlerDecl, ports, scope, params: set[str]) -> Handler | None:
        in_ports = [p for p in ports if p.signal_direction(h.signal) == IN]
        if not in_ports:
            if any(p.signal_direction(h.signal) == OUT for p in ports):
                self.err("E-SIGNAL", f"'{h.signal}' is outgoing and cannot be handled", h.span)
            else:
                self.err("E-UNRESOLVED", f"unknown signal '{h.signal}'", h.span)
            return None
        local = dict(scope)
        payload = in_ports[0].type.by_name[h.signal].payload
        if payload is not None:
            for f in payload.fields:
                local[f"msg.{f.name}"] = f.kind
        assigns = []
        for a in h.assignments:
            if a.target not in params:
                self.err("E-UNRESOLVED", f"assignment to undeclared parameter '{a.target}'", a.span)
                continue
            self.check_expr(a.expr, local, Kind.REAL, f"assignment to '{a.target}'")
            assigns.append(Assign(a.target, a.expr, a.span))
        return Handler(h.signal, tuple(assigns), h.span)


class _Scratch:
    """Just enough of a definition to resolve connector endpoints before it exists."""

    def __init__(self, name, ports, parts):
        self.name = name
        self.port_map = {p.name: p for p in ports}
        self.part_map = {p.name: p for p in parts}

    def endpoint_port(self, ep: Endpoint):
        if ep.part is None:
            return self.port_map.get(ep.port)
        part = self.part_map.get(ep.part)
        return None if part is None else part.definition.port_map.get(ep.port)


def _preorder(states):
    for s in states:
        yield s
        yield from _preorder(s.children)


def resolve(model: ast.ModelAst) -> ModelDefinition:
    """Bind every name in ``model``; raises DiagnosticError when anything fails to resolve."""
    return _Resolver().run(model)
