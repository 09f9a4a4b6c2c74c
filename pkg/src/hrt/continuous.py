"""The solver: integrates streamer equations and applies parameter signals.

Every function here is pure: it takes a StreamerState and returns a new one.
Inputs are held constant over a step, RK4 inner stages included.
"""

from __future__ import annotations

import math
from dataclasses import dataclass, field, replace
from typing import TYPE_CHECKING, Callable, Mapping

from hrt.events import Event, SimulationError
from hrt.expr import ExprError, Kind, Value, coerce, evaluate, symbols
from hrt.graph import CycleError, topological_order
from hrt.metamodel import Direction, Emitter, SimClock, SolverMethod, StreamerDef

if TYPE_CHECKING:
    from hrt.lowering import InstanceTree

_ZERO = {Kind.REAL: 0.0, Kind.INT: 0, Kind.BOOL: False}


@dataclass(frozen=True)
class StreamerState:
    path: str
    x: Mapping[str, float]
    params: Mapping[str, float]
    u: Mapping[str, Value] = field(default_factory=dict)
    y: Mapping[str, Value] = field(default_factory=dict)
    # last value of each emitter condition, for edge detection
    conditions: tuple[bool, ...] = ()

    def env(self) -> dict[str, Value]:
        return {**self.params, **self.x, **self.u}


def _eval(expr, env, t, path: str, what: str) -> Value:
    try:
        return evaluate(expr, env, t)
    except ExprError as exc:
        raise SimulationError("E-EVAL", f"{what}: {exc.message}", t, path) from None


def init_streamer(path: str, d: StreamerDef) -> StreamerState:
    """Parameters then state variables, each initialised in declaration order at t=0."""
    env: dict[str, Value] = {}
    params = {}
    for p in d.parameters:
        params[p.name] = float(_eval(p.init, env, 0.0, path, f"parameter {p.name}"))
        env[p.name] = params[p.name]
    x = {}
    for s in d.states:
        x[s.name] = float(_eval(s.init, env, 0.0, path, f"state {s.name}"))
        env[s.name] = x[s.name]
    u = {
        f"{p.name}.{f.name}": _ZERO[f.kind]
        for p in d.dports() if p.direction is Direction.INPUT
        for f in p.flowtype.fields
    }
    return StreamerState(path, x, params, u, {}, tuple(False for _ in d.emitters))


def with_inputs(s: StreamerState, values: Mapping[str, Value]) -> StreamerState:
    """Zero-order hold: latch the current upstream samples into ``u``."""
    return replace(s, u={**s.u, **values})


def derivatives(s: StreamerState, d: StreamerDef, x: Mapping[str, float], t: float) -> dict[str, float]:
    env = {**s.params, **s.u, **x}
    out = {}
    for name, expr in d.derivatives:
        v = float(_eval(expr, env, t, s.path, f"derivative of {name}"))
        if not math.isfinite(v):
            raise SimulationError("E-NONFINITE", f"derivative of state '{name}' is {v!r}", t, s.path)
        out[name] = v
    return out


def integrate_step(s: StreamerState, d: StreamerDef, clock: SimClock,
                   observe: Callable[[float], None] | None = None) -> StreamerState:
    """Advance ``x`` from ``clock.t`` to ``clock.t + clock.h`` with the streamer's method."""
    if not d.states:
        return s
    t, h = clock.t, clock.h
    x = s.x
    if observe:
        observe(t)
    k1 = derivatives(s, d, x, t)
    if d.solver.method is SolverMethod.EULER:
        new = {n: x[n] + h * k1[n] for n in x}
    else:
        half = t + h / 2
        if observe:
            observe(half)
        k2 = derivatives(s, d, {n: x[n] + h / 2 * k1[n] for n in x}, half)
        k3 = derivatives(s, d, {n: x[n] + h / 2 * k2[n] for n in x}, half)
        if observe:
            observe(t + h)
        k4 = derivatives(s, d, {n: x[n] + h * k3[n] for n in x}, t + h)
        new = {n: x[n] + h / 6 * (k1[n] + 2 * k2[n] + 2 * k3[n] + k4[n]) for n in x}
    for n, v in new.items():
        if not math.isfinite(v):
            raise SimulationError("E-NONFINITE", f"state '{n}' became {v!r}", t + h, s.path)
    return replace(s, x=new)


def eval_outputs(s: StreamerState, d: StreamerDef, clock: SimClock) -> StreamerState:
    """Compute every output field from the current x, u, parameters and time."""
    env = s.env()
    kinds = {p.name: p.flowtype.field_kinds for p in d.dports() if p.direction is Direction.OUTPUT}
    y = {}
    for eq in d.outputs:
        v = _eval(eq.expr, env, clock.t, s.path, f"output {eq.key}")
        y[eq.key] = coerce(v, kinds[eq.port][eq.field])
    return replace(s, y=y)


def apply_signal(s: StreamerState, d: StreamerDef, ev: Event) -> tuple[StreamerState, bool]:
    """Run the handler for ``ev.signal``; returns (state, handled).

    Assignments apply in order and only touch parameters; ``x`` is never modified.
    """
    h = d.handler_map.get(ev.signal)
    if h is None:
        return s, False
    params = dict(s.params)
    msg = {f"msg.{k}": v for k, v in ev.payload.items()}
    for a in h.assignments:
        if a.target not in params:
            raise SimulationError("E-EVAL", f"assignment to undeclared parameter '{a.target}'",
                                  ev.timestamp, s.path)
        env = {**params, **s.x, **s.u, **msg}
        params[a.target] = float(_eval(a.expr, env, ev.timestamp, s.path, f"handler {ev.signal}"))
    return replace(s, params=params), True


def check_emitters(s: StreamerState, d: StreamerDef, clock: SimClock
                   ) -> tuple[StreamerState, list[tuple[Emitter, dict[str, Value]]]]:
    """Emitters whose condition went from false to true since the last check."""
    env = {**s.env(), **s.y}
    fired = []
    now = []
    for em, before in zip(d.emitters, s.conditions):
        cond = bool(_eval(em.condition, env, clock.t, s.path, f"emit {em.signal}"))
        now.append(cond)
        if cond and not before:
            payload_type = d.port_map[em.port].type.by_name[em.signal].payload
            payload = {}
            if payload_type is not None:
                for f, a in zip(payload_type.fields, em.args):
                    payload[f.name] = coerce(_eval(a, env, clock.t, s.path, "emit payload"), f.kind)
            fired.append((em, payload))
    return replace(s, conditions=tuple(now)), fired


# -- evaluation order -------------------------------------------------------


def feedthrough_inputs(d: StreamerDef) -> set[str]:
    """Input fields (``port.field``) that some output equation reads directly."""
    inputs = {f"{p.name}.{f.name}" for p in d.dports() if p.direction is Direction.INPUT
              for f in p.flowtype.fields}
    used = set()
    for eq in d.outputs:
        used |= symbols(eq.expr) & inputs
    return used


def feedthrough_edges(plan: "InstanceTree") -> set[tuple[str, str]]:
    edges = set()
    fed = {inst.path: feedthrough_inputs(inst.definition) for inst in plan.streamers()}
    for w in plan.wires:
        if w.sink_key in fed.get(w.dst_path, ()):
            edges.add((w.src_path, w.dst_path))
    return edges


def build_eval_order(plan: "InstanceTree") -> tuple[str, ...]:
    """Streamer paths with every feedthrough predecessor first; ties by path."""
    nodes = [inst.path for inst in plan.streamers()]
    try:
        return tuple(topological_order(nodes, feedthrough_edges(plan)))
    except CycleError as exc:
        raise SimulationError("E-ALGLOOP", "algebraic loop through " + ", ".join(exc.cycle)) from None
