from conftest import load, model_from, plan_of
from hrt.lowering import PLAN_SECTIONS, emit_dot, emit_plan, lower_to_plan, parse_plan

LEVEL = "flowtype L { x: real }\n"
TANK = "streamer Tank { dport out y: L; state x = 1.0; der x = -x; out y.x = x; }\n"
GAUGE = "streamer Gauge { dport in u: L; state x = 0.0; der x = u.x; }\n"


def test_instance_paths():
    plan = plan_of("streamer S { state x = 0.0; der x = 1.0; }\ncapsule R { part s: S; }\n"
                   "system root: R;")
    assert list(plan.instances) == ["/root", "/root/s"]
    assert plan.units == {"/root": "discrete", "/root/s": "continuous"}


def test_relay_dport_is_spliced_away():
    plan = plan_of(LEVEL + TANK + GAUGE + "capsule Box { dport in u: L; part g: Gauge; "
                   "connect u -> g.u; }\ncapsule Top { part t: Tank; part b: Box; connect t.y -> b.u; }"
                   "\nsystem top: Top;")
    assert [str(w) for w in plan.wires] == ["/top/t.y.x -> /top/b/g.u.x"]


def test_relay_expands_to_two_edges():
    plan = plan_of(LEVEL + TANK + GAUGE + "capsule Top { part t: Tank; part a: Gauge; part b: Gauge; "
                   "relay t.y -> (a.u, b.u); }\nsystem top: Top;")
    assert [str(w) for w in plan.wires] == ["/top/t.y.x -> /top/a.u.x", "/top/t.y.x -> /top/b.u.x"]


def test_empty_plan_has_four_empty_sections():
    sections = parse_plan(emit_plan(plan_of("")))
    assert list(sections) == list(PLAN_SECTIONS)
    assert all(v == [] for v in sections.values())


def test_thermostat_plan():
    text = emit_plan(lower_to_plan(load("clean", "thermostat.hrt")))
    assert text.startswith("hrtplan v1\n")
    sections = parse_plan(text)
    units = [line.split()[1] for line in sections["units"]]
    assert sorted(units) == ["continuous", "discrete"]
    assert len(sections["wiring"]) == 2
    assert text == emit_plan(lower_to_plan(load("clean", "thermostat.hrt")))


def test_eval_order_follows_feedthrough():
    g = "streamer G { dport in u: L; dport out y: L; out y.x = u.x; }\n"
    plan = plan_of(LEVEL + TANK + g + "capsule Top { part t: Tank; part c: G; part b: G; part a: G;"
                   " connect t.y -> c.u; connect c.y -> b.u; connect b.y -> a.u; }\nsystem top: Top;")
    # c reads its input directly, so its producer t must be evaluated first
    assert plan.eval_order == ("/top/t", "/top/c", "/top/b", "/top/a")


def test_unwired_fields_recorded():
    plan = plan_of(LEVEL + GAUGE + "system g: Gauge;")
    assert plan.unwired == (("/g", "u", "x"),)


def test_dot_clusters_edges_and_shapes():
    m = model_from(LEVEL + TANK + GAUGE + "capsule Top { part t: Tank; part g: Gauge; "
                   "connect t.y -> g.u; }\nsystem top: Top;")
    dot = emit_dot(m)
    assert dot.count("subgraph") == 3  # the capsule plus its two streamers
    assert dot.count(" -> ") == 1
    assert "shape=circle" in dot
    thermo = emit_dot(load("clean", "thermostat.hrt"))
    assert "shape=square" in thermo


def test_dot_relay_fan_out():
    dot = emit_dot(load("splice", "fanout_flat.hrt"))
    assert dot.count('"/rig/src.y" -> ') == 2
