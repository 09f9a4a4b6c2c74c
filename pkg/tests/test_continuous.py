import pytest

from conftest import model_from, plan_of
from hrt.continuous import (
    apply_signal, build_eval_order, derivatives, eval_outputs, init_streamer, integrate_step,
    with_inputs,
)
from hrt.events import Event, SimulationError
from hrt.metamodel import SimClock


def streamer(body, name="S"):
    m = model_from(f"flowtype P {{ y: real }}\nprotocol Cmd {{ in setGain(P); in twice; }}\n"
                   f"streamer {name} {{ {body} }}")
    return m.definitions[name]


DECAY = "state x = 1.0; der x = -x; solver {method};"


def step(method, h=0.1):
    d = streamer(DECAY.format(method=method))
    s = init_streamer("/s", d)
    return integrate_step(s, d, SimClock(0.0, h)).x["x"]


def test_euler_single_step():
    assert step("euler") == pytest.approx(0.9, abs=1e-15)


def test_rk4_single_step_matches_hand_computation():
    # four stages for x' = -x with h = 0.1
    h = 0.1
    k1 = -1.0
    k2 = -(1 + h / 2 * k1)
    k3 = -(1 + h / 2 * k2)
    k4 = -(1 + h * k3)
    oracle = 1 + h / 6 * (k1 + 2 * k2 + 2 * k3 + k4)
    assert oracle == pytest.approx(0.9048375, abs=1e-7)
    assert step("rk4") == pytest.approx(oracle, abs=1e-15)


@pytest.mark.parametrize("method", ["euler", "rk4"])
def test_zero_derivative_is_a_fixed_point(method):
    d = streamer(f"state x = 3.5; der x = 0.0; solver {method};")
    s = init_streamer("/s", d)
    for h in (0.001, 0.1, 7.0):
        assert integrate_step(s, d, SimClock(0.0, h)).x["x"] == 3.5


def test_rk4_stage_times_and_held_inputs():
    seen = []
    d = streamer("dport in u: P; state x = 0.0; der x = u.y + time; solver rk4;")
    s = with_inputs(init_streamer("/s", d), {"u.y": 2.0})
    out = integrate_step(s, d, SimClock(1.0, 0.5), seen.append)
    assert seen == [1.0, 1.25, 1.5]
    # exact for a linear right-hand side: integral of (2 + t) over [1, 1.5]
    assert out.x["x"] == pytest.approx(2.0 * 0.5 + (1.5**2 - 1.0) / 2, abs=1e-12)


def test_outputs_and_time():
    d = streamer("dport out p: P; state x = 3.0; der x = 0.0; out p.y = 2.0 * x;")
    assert eval_outputs(init_streamer("/s", d), d, SimClock(0.0)).y == {"p.y": 6.0}
    d = streamer("dport out p: P; out p.y = time;")
    assert eval_outputs(init_streamer("/s", d), d, SimClock(1.5)).y == {"p.y": 1.5}


def test_handlers_assign_parameters_in_order():
    d = streamer("sport c: Cmd; param k = 1.0; state x = 0.0; der x = k; "
                 "on setGain { k := msg.y; } on twice { k := k + 1.0; k := k * 2.0; }")
    s = init_streamer("/s", d)
    s1, handled = apply_signal(s, d, Event(0.0, "setGain", {"y": 2.0}))
    assert handled and s1.params["k"] == 2.0 and s1.x == s.x
    s2, _ = apply_signal(s1, d, Event(0.0, "twice"))
    assert s2.params["k"] == 6.0


def test_unhandled_signal_leaves_state_alone():
    d = streamer("sport c: Cmd; param k = 1.0;")
    s = init_streamer("/s", d)
    assert apply_signal(s, d, Event(0.0, "twice")) == (s, False)


def test_nonfinite_state_aborts():
    d = streamer("state x = 1.0; der x = x * x * 1.0e200; solver euler;")
    s = init_streamer("/s", d)
    with pytest.raises(SimulationError) as info:
        for k in range(10):
            s = integrate_step(s, d, SimClock(k * 1.0, 1.0))
    assert info.value.code == "E-NONFINITE" and info.value.path == "/s"


def test_nonfinite_derivative_aborts():
    d = streamer("state x = 0.0; der x = 1.0 / x;")
    with pytest.raises(SimulationError, match="E-NONFINITE"):
        derivatives(init_streamer("/s", d), d, {"x": 0.0}, 0.0)


def test_unwired_input_reads_zero():
    d = streamer("dport in u: P; dport out p: P; out p.y = u.y + 1.0;")
    assert eval_outputs(init_streamer("/s", d), d, SimClock(0.0)).y == {"p.y": 1.0}


def _chain(edges_src):
    g = "streamer G { dport in u: L; dport out y: L; out y.x = u.x; }\n"
    return plan_of("flowtype L { x: real }\n" + g + edges_src)


def test_eval_order_chain_and_ties():
    plan = _chain("capsule Top { part c: G; part b: G; part a: G; "
                  "connect a.y -> b.u; connect b.y -> c.u; }\nsystem top: Top;")
    assert build_eval_order(plan) == ("/top/a", "/top/b", "/top/c")
    plan = _chain("streamer Two { dport in u: L; dport in v: L; dport out y: L; out y.x = u.x + v.x; }\n"
                  "capsule Top { part c: Two; part b: G; part a: G; "
                  "connect a.y -> c.u; connect b.y -> c.v; }\nsystem top: Top;")
    assert build_eval_order(plan) == ("/top/a", "/top/b", "/top/c")
    single = _chain("system g: G;")
    assert build_eval_order(single) == ("/g",)


def test_relay_duplicates_values_exactly():
    from hrt.scheduler import SimConfig, run_simulation
    plan = plan_of("flowtype L { x: real }\n"
                   "streamer K { dport out y: L; out y.x = 1.0; }\n"
                   "streamer G { dport in u: L; dport out y: L; out y.x = u.x; }\n"
                   "capsule Top { part k: K; part a: G; part b: G; relay k.y -> (a.u, b.u); }\n"
                   "system top: Top;")
    (_, values), = run_simulation(plan, SimConfig(0.1, 0.1)).samples()[-1:]
    assert values["/top/a.y.x"] == 1.0 and values["/top/b.y.x"] == 1.0
