import pytest

from conftest import CORPUS, load, model_from
from hrt.validator import (
    check_algebraic_loops, check_capsule_dports, check_containment, check_flow_connections,
    check_signal_bindings, validate_all,
)

BAD = {
    "contain.hrt": "E-CONTAIN",
    "capsule_dport.hrt": "E-CAPSULE-DPORT",
    "flowtype.hrt": "E-FLOWTYPE",
    "flowdir.hrt": "E-FLOWDIR",
    "fanin.hrt": "E-FANIN",
    "relay_arity.hrt": "E-RELAY-ARITY",
    "protocol.hrt": "E-PROTOCOL",
    "algloop.hrt": "E-ALGLOOP",
}

LEVEL = "flowtype L { x: real }\nflowtype LL { x: real, y: real }\n"
TANK = "streamer Tank { dport out y: L; state x = 1.0; der x = -x; out y.x = x; }\n"


def codes(diags):
    return [d.code for d in diags]


@pytest.mark.parametrize("name, code", sorted(BAD.items()))
def test_each_bad_fixture_has_exactly_its_code(name, code):
    assert validate_all(load("bad", name)).codes == [code]


@pytest.mark.parametrize("path", sorted((CORPUS / "clean").glob("*.hrt")), ids=lambda p: p.name)
def test_clean_corpus_passes(path):
    report = validate_all(load("clean", path.name))
    assert report.passed and not report.errors


def test_empty_model():
    assert validate_all(model_from("")).diagnostics == ()


def test_nested_streamers_in_capsule_allowed():
    m = model_from("streamer Inner { state x = 0.0; der x = 1.0; }\n"
                   "streamer Outer { part i: Inner; }\n"
                   "capsule Top { part o: Outer; }\nsystem top: Top;")
    assert check_containment(m) == [] and validate_all(m).diagnostics == ()


def test_capsule_dport_relay_use_is_fine():
    m = model_from(LEVEL + "streamer G { dport in u: L; state x = 0.0; der x = u.x; }\n"
                   "capsule Box { dport in u: L; part g: G; connect u -> g.u; }")
    assert check_capsule_dports(m) == []


def test_capsule_dport_left_dangling():
    m = model_from(LEVEL + "capsule Box { dport in u: L; }")
    assert codes(check_capsule_dports(m)) == ["E-CAPSULE-DPORT"]


def test_subset_flow_is_accepted():
    m = model_from(LEVEL + TANK + "streamer G { dport in u: LL; state x = 0.0; der x = u.y; }\n"
                   "capsule Top { part a: Tank; part g: G; connect a.y -> g.u; }")
    assert check_flow_connections(m) == []


def test_input_to_input_is_a_direction_error():
    m = model_from(LEVEL + "streamer G { dport in u: L; state x = 0.0; der x = u.x; }\n"
                   "capsule Top { part a: G; part b: G; connect a.u -> b.u; }")
    assert "E-FLOWDIR" in codes(check_flow_connections(m))


PING = "protocol P { out ping; }\nprotocol Q { out ping; }\n"


@pytest.mark.parametrize("ports, expected", [
    ("sport s: P;|sport s: P conjugate;", []),
    ("sport s: P;|sport s: P;", ["E-PROTOCOL"]),
    ("sport s: P;|sport s: Q conjugate;", ["E-PROTOCOL"]),
])
def test_signal_bindings(ports, expected):
    a, b = ports.split("|")
    m = model_from(PING + f"capsule A {{ {a} }}\ncapsule B {{ {b} }}\n"
                   "capsule Top { part a: A; part b: B; bind a.s <-> b.s; }")
    assert codes(check_signal_bindings(m)) == expected


def test_loop_names_both_blocks():
    (d,) = check_algebraic_loops(load("bad", "algloop.hrt"))
    assert "/top/a" in d.message and "/top/b" in d.message


def test_integrator_breaks_the_loop():
    m = model_from(LEVEL + "streamer I { dport in u: L; dport out y: L; state x = 0.0; "
                   "der x = u.x; out y.x = x; }\n"
                   "streamer G { dport in u: L; dport out y: L; out y.x = 2.0 * u.x; }\n"
                   "capsule Top { part i: I; part g: G; connect i.y -> g.u; connect g.y -> i.u; }\n"
                   "system top: Top;")
    assert validate_all(m).diagnostics == ()


def test_feedthrough_chain_is_not_a_loop():
    g = "streamer G { dport in u: L; dport out y: L; out y.x = u.x; }\n"
    m = model_from(LEVEL + TANK + g + "capsule Top { part t: Tank; part a: G; part b: G; part c: G;"
                   " connect t.y -> a.u; connect a.y -> b.u; connect b.y -> c.u; }\nsystem top: Top;")
    assert validate_all(m).diagnostics == ()


def test_two_violations_both_reported():
    m = model_from(LEVEL + TANK + "capsule Idle { }\n"
                   "streamer S { part c: Idle; dport in u: L; state x = 0.0; der x = u.x; }\n"
                   "capsule Top { part a: Tank; part b: Tank; part s: S; "
                   "connect a.y -> s.u; connect b.y -> s.u; }\nsystem top: Top;")
    assert sorted(set(validate_all(m).codes)) == ["E-CONTAIN", "E-FANIN"]


def test_unwired_input_is_a_warning():
    m = model_from(LEVEL + "streamer G { dport in u: L; state x = 0.0; der x = u.x; }\n"
                   "system g: G;")
    report = validate_all(m)
    assert report.passed and report.codes == ["W-UNWIRED"]
