"""Run-to-completion execution of capsule state machines.

``dispatch`` consumes one event: it fires at most one transition for it, then
drains every internal event raised along the way before returning. Actions
are the capsule's difference equations (``n := n + 1``) plus ``send`` and
``raise``. Emitted signals are stamped with the current boundary time and
returned to the caller for routing.
"""

from __future__ import annotations

import math
from collections import deque
from dataclasses import dataclass, field
from typing import Mapping

from hrt.events import (
    DROP, SIGNAL, STATE_ENTER, STATE_EXIT, TRANSITION, Event, SimulationError, TraceRecord,
)
from hrt.expr import ExprError, Value, coerce, evaluate
from hrt.metamodel import Assign, CapsuleDef, Raise, Send, SimClock, Transition

MAX_CASCADE = 10_000

# tolerance on d/h so that e.g. 0.3/0.1 == 2.9999999999999996 still snaps to 3 steps
_SNAP_EPS = 1e-9


@dataclass(frozen=True, order=True)
class Timeout:
    due: int  # boundary index at which it fires
    deadline: float
    transition: int
    state: str


@dataclass(frozen=True)
class CapsuleState:
    path: str
    definition: CapsuleDef
    active: tuple[str, ...] = ()  # outermost first
    env: Mapping[str, Value] = field(default_factory=dict)
    timeouts: tuple[Timeout, ...] = ()
    seq: int = 0

    @property
    def leaf(self) -> str | None:
        return self.active[-1] if self.active else None


def boundary_index(clock: SimClock) -> int:
    return round(clock.t / clock.h)


def steps_until(duration: float, h: float) -> int:
    """Macro steps from arming to firing: the first boundary at or after the deadline."""
    if not duration > 0:
        raise ValueError(f"timeout duration must be positive, got {duration}")
    return max(1, math.ceil(duration / h - _SNAP_EPS))


class _Run:
    """Mutable working copy of a CapsuleState for one init or dispatch call."""

    def __init__(self, state: CapsuleState, clock: SimClock):
        self.path = state.path
        self.d = state.definition
        self.m = state.definition.machine
        self.clock = clock
        self.active = list(state.active)
        self.env = dict(state.env)
        self.timeouts = list(state.timeouts)
        self.seq = state.seq
        self.emitted: list[Event] = []
        self.records: list[TraceRecord] = []
        self.queue: deque[Event] = deque()
        self.kinds = {v.name: v.kind for v in self.d.variables}

    def result(self) -> tuple[CapsuleState, list[Event], list[TraceRecord]]:
        new = CapsuleState(self.path, self.d, tuple(self.active), self.env,
                           tuple(sorted(self.timeouts)), self.seq)
        return new, self.emitted, self.records

    def record(self, kind: str, detail: str) -> None:
        self.records.append(TraceRecord(self.clock.t, kind, self.path, detail))

    def fail(self, where: str, exc: ExprError) -> SimulationError:
        return SimulationError("E-EVAL", f"{where}: {exc.message}", self.clock.t, self.path)

    # -- actions --

    def run_actions(self, actions, msg: Mapping[str, Value], where: str) -> None:
        for a in actions:
            try:
                if isinstance(a, Assign):
                    v = evaluate(a.expr, {**self.env, **msg}, self.clock.t)
                    self.env[a.target] = coerce(v, self.kinds[a.target])
                elif isinstance(a, Send):
                    self.send(a, msg)
                elif isinstance(a, Raise):
                    self.queue.append(Event(self.clock.t, a.signal, {}, self.path, 0, self.path))
            except ExprError as exc:
                raise self.fail(where, exc) from None

    def send(self, a: Send, msg: Mapping[str, Value]) -> None:
        port = self.d.port_map[a.port]
        payload_type = port.type.by_name[a.signal].payload
        payload = {}
        if payload_type is not None:
            env = {**self.env, **msg}
            for f, arg in zip(payload_type.fields, a.args):
                payload[f.name] = coerce(evaluate(arg, env, self.clock.t), f.kind)
        self.seq += 1
        self.emitted.append(Event(self.clock.t, a.signal, payload, self.path, self.seq, "", a.port))

    # -- states --

    def enter(self, name: str) -> None:
        self.active.append(name)
        self.record(STATE_ENTER, self.m.qualified(name))
        st = self.m.by_name[name]
        self.run_actions(st.entry, {}, f"entry of state {name}")
        k = boundary_index(self.clock)
        for tr in self.m.outgoing.get(name, ()):
            if tr.timeout is not None:
                self.timeouts.append(Timeout(k + steps_until(tr.timeout, self.clock.h),
                                             self.clock.t + tr.timeout, tr.index, name))

    def exit_innermost(self) -> None:
        name = self.active[-1]
        st = self.m.by_name[name]
        self.run_actions(st.exit, {}, f"exit of state {name}")
        self.timeouts = [t for t in self.timeouts if t.state != name]
        self.record(STATE_EXIT, self.m.qualified(name))
        self.active.pop()

    def enter_initial_below(self, name: str | None) -> None:
        child = self.m.initial_child(name)
        while child is not None:
            self.enter(child)
            child = self.m.initial_child(child)

    def fire(self, tr: Transition, msg: Mapping[str, Value]) -> None:
        m = self.m
        target_anc = m.ancestors(tr.target)[1:]
        lca = next((a for a in m.ancestors(tr.source)[1:] if a in target_anc), None)
        keep = 0 if lca is None else self.active.index(lca) + 1
        while len(self.active) > keep:
            self.exit_innermost()
        self.record(TRANSITION, tr.describe())
        self.run_actions(tr.action, msg, f"action of {tr.describe()}")
        down = m.ancestors(tr.target)
        down = down[: down.index(lca)] if lca is not None else down
        for name in reversed(down):
            self.enter(name)
        self.enter_initial_below(tr.target)

    # -- events --

    def deliver(self, ev: Event) -> None:
        self.record(SIGNAL, ev.describe())
        if self.m is None:
            self.record(DROP, f"{ev.describe()}: capsule has no state machine")
            return
        msg = {f"msg.{k}": v for k, v in ev.payload.items()}
        for name in reversed(self.active):
            for tr in self.m.outgoing.get(name, ()):
                if ev.timeout is not None:
                    if tr.index != ev.timeout:
                        continue
                elif tr.trigger != ev.signal:
                    continue
                if tr.guard is not None:
                    try:
                        ok = evaluate(tr.guard, {**self.env, **msg}, self.clock.t)
                    except ExprError as exc:
                        raise self.fail(f"guard of {tr.describe()} in state {name}", exc) from None
                    if not ok:
                        continue
                self.fire(tr, msg)
                return
        self.record(DROP, f"{ev.describe()}: no enabled transition in {self.active[-1]}")

    def drain(self) -> None:
        steps = 0
        while self.queue:
            steps += 1
            if steps > MAX_CASCADE:
                raise SimulationError("E-RTC-DIVERGE", f"internal event cascade exceeded "
                                      f"{MAX_CASCADE} steps", self.clock.t, self.path)
            self.deliver(self.queue.popleft())


def init_capsule(path: str, d: CapsuleDef, clock: SimClock | None = None
                 ) -> tuple[CapsuleState, list[Event], list[TraceRecord]]:
    """Initialise variables, enter the initial configuration, and run entry actions."""
    clock = clock or SimClock(0.0)
    env: dict[str, Value] = {}
    for v in d.variables:
        try:
            env[v.name] = coerce(evaluate(v.init, env, clock.t), v.kind)
        except ExprError as exc:
            raise SimulationError("E-EVAL", f"initial value of '{v.name}': {exc.message}",
                                  clock.t, path) from None
    state = CapsuleState(path, d, (), env)
    if d.machine is None:
        return state, [], []
    run = _Run(state, clock)
    run.enter_initial_below(None)
    run.drain()
    return run.result()


def dispatch(state: CapsuleState, ev: Event, clock: SimClock
             ) -> tuple[CapsuleState, list[Event], list[TraceRecord]]:
    """Process ``ev`` to completion; returns the new state, emitted signals, and trace records."""
    run = _Run(state, clock)
    run.deliver(ev)
    run.drain()
    return run.result()


def arm_timeout(state: CapsuleState, duration: float, transition: int, clock: SimClock
                ) -> CapsuleState:
    """Arm a timeout for ``transition`` owned by the current leaf state."""
    k = boundary_index(clock)
    tr = state.definition.machine.transitions[transition]
    t = Timeout(k + steps_until(duration, clock.h), clock.t + duration, transition, tr.source)
    return CapsuleState(state.path, state.definition, state.active, state.env,
                        tuple(sorted((*state.timeouts, t))), state.seq)


def fire_timeouts(state: CapsuleState, clock: SimClock
                  ) -> tuple[CapsuleState, list[Event], list[TraceRecord]]:
    """Dispatch every timeout due at this boundary, earliest deadline first.

    Each firing is an ordinary run-to-completion dispatch, so a transition
    that exits a state cancels that state's remaining timeouts before they fire.
    """
    k = boundary_index(clock)
    emitted: list[Event] = []
    records: list[TraceRecord] = []
    while True:
        due = [t for t in state.timeouts if t.due <= k]
        if not due:
            return state, emitted, records
        first = min(due)
        state = CapsuleState(state.path, state.definition, state.active, state.env,
                             tuple(t for t in state.timeouts if t != first), state.seq)
        tr = state.definition.machine.transitions[first.transition]
        ev = Event(first.deadline, f"after({tr.timeout!r})", {}, state.path, 0, state.path,
                   timeout=first.transition)
        state, em, rec = dispatch(state, ev, clock)
        emitted += em
        records += rec
