"""Co-simulation master: owns the clock and mediates capsule/streamer traffic.

Each macro boundary t_k = k*h runs in a fixed order:

1. deliver pending events stamped <= t_k, ordered by (timestamp, source, seq);
   capsule-bound ones are dispatched run-to-completion, streamer-bound ones
   update parameters;
2. fire due capsule timeouts;
3. evaluate streamer outputs in feedthrough order, check emitters, sample,
   then integrate one step to t_{k+1}.

Anything emitted during a boundary is delivered at the next one. Capsules run
on a discrete execution unit and streamers on a continuous one; in
``concurrent`` mode each unit is its own thread and they exchange only
messages through the scheduler. ``lockstep`` runs both on the caller's thread
and is the reference; both modes produce byte-identical traces.
"""

from __future__ import annotations

import csv
import io
import math
import queue
import threading
from dataclasses import dataclass, field, replace
from typing import Callable, Iterable

from hrt.continuous import (
    StreamerState, apply_signal, check_emitters, eval_outputs, init_streamer, integrate_step,
    with_inputs,
)
from hrt.discrete import CapsuleState, dispatch, fire_timeouts, init_capsule
from hrt.events import (
    DROP, SAMPLE, SIGNAL, STIMULUS_SOURCE, Event, SimulationError, TraceRecord, format_value,
)
from hrt.expr import Kind, Value
from hrt.lowering import DISCRETE, InstanceTree
from hrt.metamodel import ModelDefinition, SimClock

LOCKSTEP = "lockstep"
CONCURRENT = "concurrent"
MAX_STEPS = 10**9


class ConfigError(ValueError):
    def __init__(self, code: str, message: str):
        super().__init__(f"{code}: {message}")
        self.code = code
        self.message = message


@dataclass(frozen=True)
class SimConfig:
    t_end: float
    h: float = 0.01
    mode: str = LOCKSTEP
    decimation: int = 1

    def __post_init__(self) -> None:
        if not (self.t_end > 0 and math.isfinite(self.t_end)):
            raise ConfigError("E-STEP", f"t_end must be positive, got {self.t_end!r}")
        if not (self.h > 0 and math.isfinite(self.h)):
            raise ConfigError("E-STEP", f"step must be positive, got {self.h!r}")
        if self.mode not in (LOCKSTEP, CONCURRENT):
            raise ConfigError("E-MODE", f"mode must be {LOCKSTEP} or {CONCURRENT}")
        if not (isinstance(self.decimation, int) and self.decimation >= 1):
            raise ConfigError("E-STEP", "decimation must be a positive integer")
        n = round(self.t_end / self.h)
        if n > MAX_STEPS:
            raise ConfigError("E-STEP", f"{n} steps exceeds the limit of {MAX_STEPS}")
        if n < 1 or abs(n * self.h - self.t_end) > n * math.ulp(self.t_end):
            raise ConfigError("E-STEP", f"step {self.h!r} does not divide t_end {self.t_end!r}")

    @property
    def steps(self) -> int:
        return round(self.t_end / self.h)

    @classmethod
    def from_model(cls, model: ModelDefinition, **overrides) -> SimConfig:
        """Defaults from the model's ``simulation`` block, with explicit overrides winning."""
        sim = model.simulation
        values = {"t_end": sim.t_end, "h": sim.step, "decimation": sim.decimation}
        values.update({k: v for k, v in overrides.items() if v is not None})
        values = {k: v for k, v in values.items() if v is not None}
        if "t_end" not in values:
            raise ConfigError("E-STEP", "no t_end given and the model declares none")
        return cls(**values)


# -- trace ------------------------------------------------------------------


CSV_HEADER = ("t", "kind", "instance", "detail")


@dataclass
class Trace:
    records: list[TraceRecord] = field(default_factory=list)

    def to_csv(self) -> str:
        buf = io.StringIO()
        w = csv.writer(buf, lineterminator="\n")
        w.writerow(CSV_HEADER)
        for r in self.records:
            w.writerow((repr(float(r.t)), r.kind, r.instance, r.detail))
        return buf.getvalue()

    @classmethod
    def from_csv(cls, text: str) -> Trace:
        rows = list(csv.reader(io.StringIO(text)))
        if not rows or tuple(rows[0]) != CSV_HEADER:
            raise ValueError("not a trace CSV")
        return cls([TraceRecord(float(t), k, i, d) for t, k, i, d in rows[1:]])

    def of_kind(self, kind: str) -> list[TraceRecord]:
        return [r for r in self.records if r.kind == kind]

    def samples(self) -> list[tuple[float, dict[str, Value]]]:
        """Sampled continuous values per boundary as ``{"/path.var": value}``."""
        return [(r.t, parse_sample(r.detail)) for r in self.of_kind(SAMPLE)]

    def series(self, key: str) -> list[tuple[float, Value]]:
        return [(t, vals[key]) for t, vals in self.samples() if key in vals]

    def __len__(self) -> int:
        return len(self.records)


def parse_sample(detail: str) -> dict[str, Value]:
    out: dict[str, Value] = {}
    for item in filter(None, detail.split(";")):
        key, _, text = item.rpartition("=")
        if text in ("true", "false"):
            out[key] = text == "true"
        else:
            try:
                out[key] = int(text)
            except ValueError:
                out[key] = float(text)
    return out


# -- exchange ---------------------------------------------------------------


def _tolerance(h: float) -> float:
    return h * 1e-9


def exchange_boundary(pending: Iterable[Event], t_k: float, tol: float = 0.0
                      ) -> tuple[list[Event], list[Event]]:
    """Split ``pending`` into (due now in delivery order, still pending).

    An event is due when its timestamp is <= t_k (+ ``tol`` for decimal
    stimulus times). Delivery order is (timestamp, source, sequence number).
    """
    due, rest = [], []
    for ev in pending:
        (due if ev.timestamp <= t_k + tol else rest).append(ev)
    due.sort(key=Event.order_key)
    last: dict[str, Event] = {}
    for ev in due:
        prev = last.get(ev.source)
        if prev is not None and ev.seq <= prev.seq:
            raise SimulationError("E-ORDER", f"sequence numbers from {ev.source} do not increase "
                                  f"with time ({prev.seq} then {ev.seq})", t_k, ev.source)
        last[ev.source] = ev
    return due, rest


# -- execution units --------------------------------------------------------


def _route(plan: InstanceTree, ev: Event, records: list[TraceRecord]) -> Event | None:
    peer = plan.routes.get((ev.source, ev.port))
    if peer is None:
        records.append(TraceRecord(ev.timestamp, DROP, ev.source,
                                   f"{ev.describe()}: port {ev.port} is not bound"))
        return None
    return replace(ev, target=peer[0], port=peer[1])


class DiscreteUnit:
    """Owns every capsule instance."""

    def __init__(self, plan: InstanceTree):
        self.plan = plan
        self.states: dict[str, CapsuleState] = {}

    def start(self, h: float) -> tuple[list[TraceRecord], list[Event]]:
        records: list[TraceRecord] = []
        out: list[Event] = []
        clock = SimClock.at_boundary(0, h)
        for inst in self.plan.capsules():
            state, emitted, recs = init_capsule(inst.path, inst.definition, clock)
            self.states[inst.path] = state
            records += recs
            out += self._route_all(emitted, records)
        return records, out

    def _route_all(self, emitted, records) -> list[Event]:
        routed = (_route(self.plan, ev, records) for ev in emitted)
        return [ev for ev in routed if ev is not None]

    def boundary(self, batch: list[tuple[int, Event]], clock: SimClock):
        """Deliveries then timeouts; returns (indexed delivery records, timeout records, emitted)."""
        indexed = []
        out: list[Event] = []
        for idx, ev in batch:
            state, emitted, recs = dispatch(self.states[ev.target], ev, clock)
            self.states[ev.target] = state
            out += self._route_all(emitted, recs)
            indexed.append((idx, recs))
        timeout_records: list[TraceRecord] = []
        for path in sorted(self.states):
            state, emitted, recs = fire_timeouts(self.states[path], clock)
            self.states[path] = state
            timeout_records += recs
            out += self._route_all(emitted, timeout_records)
        return indexed, timeout_records, out


class ContinuousUnit:
    """Owns every streamer instance."""

    def __init__(self, plan: InstanceTree, observe: Callable[[float], None] | None = None):
        self.plan = plan
        self.observe = observe
        self.states: dict[str, StreamerState] = {}
        self.seq: dict[str, int] = {}

    def start(self) -> None:
        for inst in self.plan.streamers():
            self.states[inst.path] = init_streamer(inst.path, inst.definition)
            self.seq[inst.path] = 0

    def _inputs(self, path: str) -> dict[str, Value]:
        values = {}
        for w in self.plan.wires_into.get(path, ()):
            y = self.states[w.src_path].y
            if w.source_key in y:
                values[w.sink_key] = y[w.source_key]
        return values

    def boundary(self, batch: list[tuple[int, Event]], clock: SimClock, sample: bool,
                 integrate: bool):
        """Apply signals, evaluate, emit, sample, integrate.

        Returns (indexed delivery records, other records, emitted events).
        """
        t = clock.t
        indexed = []
        for idx, ev in batch:
            inst = self.plan.instances[ev.target]
            recs = [TraceRecord(t, SIGNAL, ev.target, ev.describe())]
            state, handled = apply_signal(self.states[ev.target], inst.definition, ev)
            self.states[ev.target] = state
            if not handled:
                recs.append(TraceRecord(t, DROP, ev.target, f"{ev.describe()}: no handler"))
            indexed.append((idx, recs))

        defs = {p: self.plan.instances[p].definition for p in self.plan.eval_order}
        # outputs: feedthrough predecessors come first, so their samples are fresh
        for path in self.plan.eval_order:
            s = with_inputs(self.states[path], self._inputs(path))
            self.states[path] = eval_outputs(s, defs[path], clock)
        records: list[TraceRecord] = []
        out: list[Event] = []
        for path in self.plan.eval_order:
            # second pass: every upstream output of this boundary is now known
            s = with_inputs(self.states[path], self._inputs(path))
            s, fired = check_emitters(s, defs[path], clock)
            self.states[path] = s
            for em, payload in fired:
                self.seq[path] += 1
                ev = Event(t, em.signal, payload, path, self.seq[path], "", em.port)
                routed = _route(self.plan, ev, records)
                if routed is not None:
                    out.append(routed)
        if sample:
            records.append(TraceRecord(t, SAMPLE, "/", self.sample_detail()))
        if integrate:
            for path in self.plan.eval_order:
                self.states[path] = integrate_step(self.states[path], defs[path], clock, self.observe)
        return indexed, records, out

    def sample_detail(self) -> str:
        items = []
        for path in sorted(self.states):
            s = self.states[path]
            items += [f"{path}.{k}={format_value(v)}" for k, v in s.x.items()]
            items += [f"{path}.{k}={format_value(v)}" for k, v in s.y.items()]
        return ";".join(items)


class _Worker:
    """One execution unit thread fed through an ordered message channel."""

    def __init__(self, name: str):
        self.inbox: queue.Queue = queue.Queue()
        self.outbox: queue.Queue = queue.Queue()
        self.thread = threading.Thread(target=self._loop, name=name, daemon=True)
        self.thread.start()

    def _loop(self) -> None:
        while True:
            job = self.inbox.get()
            if job is None:
                return
            fn, args = job
            try:
                self.outbox.put((True, fn(*args)))
            except BaseException as exc:  # handed back to the scheduler thread
                self.outbox.put((False, exc))

    def submit(self, fn, *args) -> None:
        self.inbox.put((fn, args))

    def result(self):
        return self.outbox.get()

    def close(self) -> None:
        self.inbox.put(None)
        self.thread.join()


def _unwrap(*results):
    for ok, value in results:
        if not ok:
            raise value
    return [value for _, value in results]


# -- driver -----------------------------------------------------------------


class Simulation:
    """One run of a plan. ``run()`` returns the Trace; ``current_time()`` reads the clock."""

    def __init__(self, plan: InstanceTree, cfg: SimConfig, stimulus: Iterable[Event] = ()):
        self.plan = plan
        self.cfg = cfg
        self.stimulus = list(stimulus)
        self._now = 0.0
        self._lock = threading.Lock()
        for inst in plan.streamers():
            step = inst.definition.solver.step
            if step is not None and abs(step - cfg.h) > 1e-12 * cfg.h:
                raise ConfigError("E-STEP", f"{inst.path} declares solver step {step!r} but the "
                                  f"macro step is {cfg.h!r}; they must be equal")
        for ev in self.stimulus:
            if ev.target not in plan.instances:
                raise ConfigError("E-STIMULUS", f"stimulus targets unknown instance {ev.target}")

    def current_time(self) -> float:
        with self._lock:
            return self._now

    def _advance(self, t: float) -> None:
        with self._lock:
            if t > self._now:
                self._now = t

    def run(self) -> Trace:
        plan, cfg = self.plan, self.cfg
        n = cfg.steps
        tol = _tolerance(cfg.h)
        disc = DiscreteUnit(plan)
        cont = ContinuousUnit(plan, self._advance)
        records, pending = disc.start(cfg.h)
        pending += self.stimulus
        cont.start()

        workers = None
        if cfg.mode == CONCURRENT:
            workers = (_Worker("hrt-discrete"), _Worker("hrt-continuous"))
        try:
            for k in range(n + 1):
                clock = SimClock.at_boundary(k, cfg.h)
                self._advance(clock.t)
                due, pending = exchange_boundary(pending, clock.t, tol)
                d_batch, c_batch = [], []
                for idx, ev in enumerate(due):
                    unit = plan.units[ev.target]
                    (d_batch if unit == DISCRETE else c_batch).append((idx, ev))
                sample = k % cfg.decimation == 0 or k == n
                integrate = k < n
                if workers is None:
                    d_res = disc.boundary(d_batch, clock)
                    c_res = cont.boundary(c_batch, clock, sample, integrate)
                else:
                    workers[0].submit(disc.boundary, d_batch, clock)
                    workers[1].submit(cont.boundary, c_batch, clock, sample, integrate)
                    d_res, c_res = _unwrap(workers[0].result(), workers[1].result())
                d_indexed, d_timeouts, d_out = d_res
                c_indexed, c_records, c_out = c_res
                for _, recs in sorted(d_indexed + c_indexed, key=lambda item: item[0]):
                    records += recs
                records += d_timeouts
                records += c_records
                pending += d_out + c_out
        finally:
            if workers is not None:
                for w in workers:
                    w.close()
        return Trace(records)


def run_simulation(plan: InstanceTree, cfg: SimConfig, stimulus: Iterable[Event] = ()) -> Trace:
    return Simulation(plan, cfg, stimulus).run()


# -- stimulus files ---------------------------------------------------------


def parse_stimulus(text: str, plan: InstanceTree) -> list[Event]:
    """Parse ``t,instance,signal,payload...`` lines into external events.

    Payload values are matched positionally to the payload fields of the
    signal as received by the target. Blank lines and ``#`` comments are skipped.
    """
    rows = []
    for lineno, row in enumerate(csv.reader(io.StringIO(text)), 1):
        if not row or not "".join(row).strip() or row[0].lstrip().startswith("#"):
            continue
        if len(row) < 3:
            raise ConfigError("E-STIMULUS", f"line {lineno}: expected t,instance,signal[,payload...]")
        try:
            t = float(row[0])
        except ValueError:
            raise ConfigError("E-STIMULUS", f"line {lineno}: bad time {row[0]!r}") from None
        if not (t >= 0 and math.isfinite(t)):
            raise ConfigError("E-STIMULUS", f"line {lineno}: time must be >= 0")
        target, signal = row[1].strip(), row[2].strip()
        inst = plan.instances.get(target)
        if inst is None:
            raise ConfigError("E-STIMULUS", f"line {lineno}: unknown instance {target}")
        values = [v.strip() for v in row[3:]]
        while values and values[-1] == "":
            values.pop()
        payload_type = inst.definition.signal_payload(signal)
        fields = payload_type.fields if payload_type is not None else ()
        if len(values) != len(fields):
            raise ConfigError("E-STIMULUS", f"line {lineno}: '{signal}' takes {len(fields)} payload "
                              f"value(s), got {len(values)}")
        payload = {f.name: _parse_value(v, f.kind, lineno) for f, v in zip(fields, values)}
        rows.append((t, lineno, target, signal, payload))
    rows.sort(key=lambda r: (r[0], r[1]))
    return [Event(t, signal, payload, STIMULUS_SOURCE, seq, target)
            for seq, (t, _, target, signal, payload) in enumerate(rows, 1)]


def _parse_value(text: str, kind: Kind, lineno: int) -> Value:
    try:
        if kind is Kind.BOOL:
            if text not in ("true", "false"):
                raise ValueError(text)
            return text == "true"
        if kind is Kind.INT:
            return int(text)
        return float(text)
    except ValueError:
        raise ConfigError("E-STIMULUS", f"line {lineno}: {text!r} is not a valid {kind}") from None
