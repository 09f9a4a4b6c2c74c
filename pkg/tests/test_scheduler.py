import pytest

from conftest import load, plan_of
from hrt.events import SAMPLE, STIMULUS_SOURCE, Event, SimulationError
from hrt.lowering import lower_to_plan
from hrt.scheduler import (
    CONCURRENT, LOCKSTEP, ConfigError, SimConfig, Simulation, Trace, exchange_boundary,
    parse_stimulus, run_simulation,
)


def test_exchange_orders_by_time_source_seq():
    b, a = Event(0.1, "s", source="B", seq=1), Event(0.1, "s", source="A", seq=1)
    late = Event(0.2, "s", source="A", seq=2)
    due, rest = exchange_boundary([late, b, a], 0.1)
    assert due == [a, b] and rest == [late]


def test_exchange_empty():
    assert exchange_boundary([], 0.0) == ([], [])


def test_exchange_asserts_per_source_monotonicity():
    with pytest.raises(SimulationError, match="E-ORDER"):
        exchange_boundary([Event(0.05, "s", source="A", seq=2), Event(0.1, "s", source="A", seq=1)],
                          0.1)


def test_config_validation():
    assert SimConfig(1.0, 0.1).steps == 10
    assert SimConfig(0.3, 0.1).steps == 3
    for bad in [(1.0, 0.3), (0.0, 0.1), (1.0, -0.1), (1e9, 1e-3)]:
        with pytest.raises(ConfigError) as info:
            SimConfig(*bad)
        assert info.value.code == "E-STEP"
    with pytest.raises(ConfigError):
        SimConfig(1.0, 0.1, mode="fast")


def test_empty_model_samples_every_boundary():
    trace = run_simulation(plan_of(""), SimConfig(1.0, 0.1))
    assert [r.kind for r in trace.records] == [SAMPLE] * 11
    assert trace.records[-1].t == 1.0


def test_decay_final_sample():
    trace = run_simulation(lower_to_plan(load("clean", "decay.hrt")), SimConfig(1.0, 0.01))
    t, values = trace.samples()[-1]
    assert t == 1.0
    assert values["/decay.x"] == pytest.approx(0.36787944, abs=1e-7)


@pytest.mark.parametrize("name", ["thermostat.hrt", "oscillator.hrt", "hierarchy.hrt"])
def test_modes_agree(name):
    m = load("clean", name)
    plan = lower_to_plan(m)
    lock = run_simulation(plan, SimConfig.from_model(m, mode=LOCKSTEP)).to_csv()
    conc = run_simulation(plan, SimConfig.from_model(m, mode=CONCURRENT)).to_csv()
    assert lock == conc


def test_current_time():
    sim = Simulation(plan_of(""), SimConfig(1.0, 0.1))
    assert sim.current_time() == 0.0
    sim.run()
    assert sim.current_time() == 1.0


def test_guard_reads_boundary_time():
    plan = plan_of("protocol C { in go; }\ncapsule K { sport c: C; var seen: real = 0.0; "
                   "statemachine { initial state A; state B; "
                   "transition A -> B on go [time > 0.25] { seen := time; } } }\nsystem k: K;")
    stim = parse_stimulus("0.1,/k,go\n0.3,/k,go\n", plan)
    trace = run_simulation(plan, SimConfig(0.5, 0.1), stim)
    (tr,) = [r for r in trace.records if r.kind == "transition"]
    assert tr.t == pytest.approx(0.3)
    assert [r.kind for r in trace.records if r.t < 0.25 and r.kind != SAMPLE][-1] == "drop"


def test_stimulus_snaps_to_next_boundary():
    m = load("clean", "toggle.hrt")
    plan = lower_to_plan(m)
    stim = parse_stimulus("0.25,/root/ctl,flip,\n", plan)
    assert stim == [Event(0.25, "flip", {}, STIMULUS_SOURCE, 1, "/root/ctl")]
    trace = run_simulation(plan, SimConfig(1.0, 0.1), stim)
    first = next(r for r in trace.records if r.kind == "signal")
    assert first.t == pytest.approx(0.3) and first.t == 3 * 0.1


def test_stimulus_errors():
    plan = lower_to_plan(load("clean", "toggle.hrt"))
    for text in ["x,/root/ctl,flip", "0.1,/nowhere,flip", "0.1,/root/ctl,flip,3"]:
        with pytest.raises(ConfigError, match="E-STIMULUS"):
            parse_stimulus(text, plan)
    assert parse_stimulus("# comment\n\n", plan) == []


def test_stimulus_payload_kinds():
    plan = plan_of("flowtype V { n: int, x: real, b: bool }\nprotocol C { in set(V); }\n"
                   "capsule K { sport c: C; }\nsystem k: K;")
    (ev,) = parse_stimulus("0,/k,set,3,1.5,true", plan)
    assert ev.payload == {"n": 3, "x": 1.5, "b": True}


def test_decimation_keeps_the_final_boundary():
    trace = run_simulation(plan_of(""), SimConfig(1.0, 0.1, decimation=3))
    assert [round(r.t, 9) for r in trace.records] == [0.0, 0.3, 0.6, 0.9, 1.0]


def test_trace_csv_round_trip():
    m = load("clean", "toggle.hrt")
    plan = lower_to_plan(m)
    trace = run_simulation(plan, SimConfig(1.0, 0.1),
                           parse_stimulus("0.25,/root/ctl,flip\n", plan))
    text = trace.to_csv()
    assert text.startswith("t,kind,instance,detail\n")
    assert Trace.from_csv(text).to_csv() == text


@pytest.mark.parametrize("mode", [LOCKSTEP, CONCURRENT])
def test_runtime_abort_carries_time_and_path(mode):
    plan = plan_of("streamer S { state x = 1.0; der x = x * x; solver euler; }\nsystem s: S;")
    with pytest.raises(SimulationError) as info:
        run_simulation(plan, SimConfig(100.0, 0.5, mode=mode))
    assert info.value.code == "E-NONFINITE" and info.value.path == "/s"
    assert info.value.t is not None


def test_solver_step_must_match_macro_step():
    plan = plan_of("streamer S { state x = 1.0; der x = -x; solver rk4 step 0.05; }\nsystem s: S;")
    with pytest.raises(ConfigError, match="E-STEP"):
        run_simulation(plan, SimConfig(1.0, 0.1))
    run_simulation(plan, SimConfig(1.0, 0.05))


def test_unbound_emission_is_dropped_in_trace():
    m = load("clean", "hierarchy.hrt")
    plan = lower_to_plan(m)
    trace = run_simulation(plan, SimConfig.from_model(m), parse_stimulus("0.1,/house/lock,open", plan))
    assert any(r.kind == "drop" and "not bound" in r.detail for r in trace.records)


def test_signal_from_capsule_reaches_streamer_next_boundary():
    m = load("clean", "thermostat.hrt")
    trace = run_simulation(lower_to_plan(m), SimConfig(1.0, 0.01))
    sigs = [r for r in trace.records if r.kind == "signal"]
    cold = next(r for r in sigs if r.detail.startswith("too_cold"))
    heat = next(r for r in sigs if r.detail.startswith("heat_on"))
    assert round((heat.t - cold.t) / 0.01) == 1
