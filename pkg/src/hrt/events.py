"""Signal events, trace records, and runtime errors shared by both engines."""

from __future__ import annotations

from dataclasses import dataclass, field
from typing import Mapping

from hrt.expr import Value

STATE_ENTER = "state-enter"
STATE_EXIT = "state-exit"
TRANSITION = "transition"
SIGNAL = "signal"
DROP = "drop"
SAMPLE = "sample"

TRACE_KINDS = (STATE_ENTER, STATE_EXIT, TRANSITION, SIGNAL, DROP, SAMPLE)

STIMULUS_SOURCE = "<stimulus>"


@dataclass(frozen=True)
class Event:
    """A timestamped signal travelling between instances.

    ``target``/``port`` are filled in by routing; internal events raised by a
    capsule to itself leave ``port`` empty. ``timeout`` holds the transition
    index for timeout events.
    """

    timestamp: float
    signal: str
    payload: Mapping[str, Value] = field(default_factory=dict)
    source: str = ""
    seq: int = 0
    target: str = ""
    port: str = ""
    timeout: int | None = None

    def order_key(self) -> tuple:
        return (self.timestamp, self.source, self.seq)

    def describe(self) -> str:
        if not self.payload:
            return f"{self.signal} from {self.source}"
        body = ";".join(f"{k}={format_value(v)}" for k, v in self.payload.items())
        return f"{self.signal}({body}) from {self.source}"


@dataclass(frozen=True)
class TraceRecord:
    t: float
    kind: str
    instance: str
    detail: str = ""

    def __post_init__(self) -> None:
        if self.kind not in TRACE_KINDS:
            raise ValueError(f"unknown trace record kind {self.kind!r}")


def format_value(v: Value) -> str:
    """Shortest round-trip text for a scalar (``repr`` for floats)."""
    if isinstance(v, bool):
        return "true" if v else "false"
    return repr(v)


class SimulationError(RuntimeError):
    """A run aborted; carries a stable code, the time, and the instance path."""

    def __init__(self, code: str, message: str, t: float | None = None, path: str = ""):
        self.code = code
        self.message = message
        self.t = t
        self.path = path
        where = f" at t={t!r}" if t is not None else ""
        inst = f" in {path}" if path else ""
        super().__init__(f"{code}{where}{inst}: {message}")
