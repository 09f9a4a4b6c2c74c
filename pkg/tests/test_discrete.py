from dataclasses import replace

import pytest

from conftest import model_from
from hrt.discrete import (
    MAX_CASCADE, arm_timeout, dispatch, fire_timeouts, init_capsule, steps_until,
)
from hrt.events import DROP, STATE_ENTER, STATE_EXIT, TRANSITION, Event, SimulationError
from hrt.metamodel import SimClock

H = 0.1


def capsule(body, protocol="protocol Cmd { in flip; in bump; out ready; }"):
    m = model_from(f"{protocol}\ncapsule C {{ sport cmd: Cmd; {body} }}")
    return m.definitions["C"]


def clock(k):
    return SimClock.at_boundary(k, H)


TOGGLE = """var n: int = 7;
statemachine {
  initial state Off { entry { n := 0; } }
  state On;
  transition Off -> On on flip;
  transition On -> Off on flip;
  transition Off -> Off on bump { n := n + 1; }
}"""


def test_init_enters_initial_state_and_runs_entry():
    state, emitted, records = init_capsule("/c", capsule(TOGGLE), clock(0))
    assert state.active == ("Off",) and state.env["n"] == 0
    assert emitted == [] and [r.kind for r in records] == [STATE_ENTER]


def test_entry_send_emits_at_time_zero():
    d = capsule("statemachine { initial state A { entry { send cmd.ready(); } } }")
    _, emitted, _ = init_capsule("/c", d, clock(0))
    assert [(e.signal, e.timestamp, e.port) for e in emitted] == [("ready", 0.0, "cmd")]


def test_capsule_without_machine_is_inert():
    state, emitted, records = init_capsule("/c", capsule("var n: int = 1;"), clock(0))
    assert state.active == () and emitted == [] and records == []


def test_flip_moves_to_on():
    state, _, _ = init_capsule("/c", capsule(TOGGLE), clock(0))
    state, emitted, records = dispatch(state, Event(0.1, "flip", source="x"), clock(1))
    assert state.active == ("On",) and emitted == []
    assert [r.kind for r in records] == ["signal", STATE_EXIT, TRANSITION, STATE_ENTER]


def test_unmatched_event_is_dropped():
    state, _, _ = init_capsule("/c", capsule(TOGGLE), clock(0))
    state, _, _ = dispatch(state, Event(0.1, "flip", source="x"), clock(1))
    after, _, records = dispatch(state, Event(0.2, "bump", source="x"), clock(2))
    assert after == state and records[-1].kind == DROP


def test_transition_action_increments():
    d = capsule("var n: int = 4; statemachine { initial state A; state B; "
                "transition A -> B on bump { n := n + 1; } }")
    state, _, _ = init_capsule("/c", d, clock(0))
    state, _, _ = dispatch(state, Event(0.1, "bump", source="x"), clock(1))
    assert state.env["n"] == 5


@pytest.mark.parametrize("duration, fires_at", [(0.5, 5), (0.25, 3), (0.3, 3), (0.05, 1)])
def test_timeout_snaps_to_first_boundary_at_or_after_deadline(duration, fires_at):
    assert steps_until(duration, H) == fires_at
    d = capsule(f"statemachine {{ initial state A; state B; transition A -> B after {duration}; }}")
    state, _, _ = init_capsule("/c", d, clock(0))
    for k in range(1, fires_at):
        state, _, recs = fire_timeouts(state, clock(k))
        assert recs == [] and state.active == ("A",)
    state, _, recs = fire_timeouts(state, clock(fires_at))
    assert state.active == ("B",) and recs[0].t == clock(fires_at).t


def test_exiting_a_state_cancels_its_timeout():
    d = capsule("statemachine { initial state A; state B; "
                "transition A -> B after 0.5; transition A -> B on flip; transition B -> A on bump; }")
    state, _, _ = init_capsule("/c", d, clock(0))
    state, _, _ = dispatch(state, Event(0.1, "flip", source="x"), clock(1))
    assert state.timeouts == ()
    for k in range(2, 8):
        state, _, recs = fire_timeouts(state, clock(k))
        assert recs == []


def test_arm_timeout_directly():
    d = capsule("statemachine { initial state A; state B; transition A -> B after 1.0; }")
    state, _, _ = init_capsule("/c", d, clock(0))
    state = replace(state, timeouts=())
    state = arm_timeout(state, 0.25, 0, clock(2))
    state, _, _ = fire_timeouts(state, clock(4))
    assert state.active == ("A",)
    state, _, _ = fire_timeouts(state, clock(5))
    assert state.active == ("B",)


HSM = """statemachine {
  initial state Top {
    entry { send cmd.ready(); }
    initial state Inner;
    state Other;
  }
  transition Inner -> Other on flip;
  state Away;
  transition Top -> Away on flip;
  transition Top -> Away on bump;
  transition Other -> Inner on bump;
}"""


def test_innermost_transition_wins_and_lca_is_respected():
    state, emitted, records = init_capsule("/c", capsule(HSM), clock(0))
    assert state.active == ("Top", "Inner") and len(emitted) == 1
    state, emitted, records = dispatch(state, Event(0.1, "flip", source="x"), clock(1))
    assert state.active == ("Top", "Other")
    # Top is the common ancestor: it is neither exited nor re-entered
    assert [(r.kind, r.detail) for r in records if r.kind != "signal"] == [
        (STATE_EXIT, "Top.Inner"), (TRANSITION, "Inner -> Other on flip"),
        (STATE_ENTER, "Top.Other"),
    ]
    assert emitted == []
    state, _, _ = dispatch(state, Event(0.2, "bump", source="x"), clock(2))
    assert state.active == ("Top", "Inner")


def test_outer_transition_exits_inner_first():
    state, _, _ = init_capsule("/c", capsule(HSM), clock(0))
    state, _, records = dispatch(state, Event(0.1, "bump", source="x"), clock(1))
    assert state.active == ("Away",)
    exits = [r.detail for r in records if r.kind == STATE_EXIT]
    assert exits == ["Top.Inner", "Top"]


def test_internal_events_complete_before_returning():
    d = capsule("statemachine { initial state A; state B; state C; "
                "transition A -> B on flip { raise go; } transition B -> C on go; }")
    state, _, _ = init_capsule("/c", d, clock(0))
    state, _, records = dispatch(state, Event(0.1, "flip", source="x"), clock(1))
    assert state.active == ("C",)
    assert [r.detail for r in records if r.kind == TRANSITION] == ["A -> B on flip", "B -> C on go"]


def test_runaway_cascade_aborts():
    d = capsule("statemachine { initial state A; transition A -> A on flip { raise flip; } }")
    state, _, _ = init_capsule("/c", d, clock(0))
    with pytest.raises(SimulationError) as info:
        dispatch(state, Event(0.1, "flip", source="x"), clock(1))
    assert info.value.code == "E-RTC-DIVERGE" and info.value.path == "/c"
    assert str(MAX_CASCADE) in info.value.message


def test_guard_sees_payload_and_time():
    proto = "flowtype V { v: int }\nprotocol Cmd { in set(V); }"
    d = capsule("var n: int = 0; statemachine { initial state A; "
                "transition A -> A on set [msg.v > 2 and time >= 0.3] { n := msg.v; } }", proto)
    state, _, _ = init_capsule("/c", d, clock(0))
    state, _, recs = dispatch(state, Event(0.3, "set", {"v": 5}, "x"), clock(3))
    assert state.env["n"] == 5
    state, _, recs = dispatch(state, Event(0.2, "set", {"v": 9}, "x"), clock(2))
    assert state.env["n"] == 5 and recs[-1].kind == DROP
