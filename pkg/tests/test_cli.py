import pytest

from conftest import CORPUS
from hrt.cli import main

CLEAN = CORPUS / "clean"


def run(capsys, *argv):
    code = main([str(a) for a in argv])
    out, err = capsys.readouterr()
    return code, out, err


def test_check_clean(capsys):
    code, out, _ = run(capsys, "check", CLEAN / "thermostat.hrt")
    assert code == 0 and "error" not in out


def test_check_flowtype_fixture(capsys):
    code, out, _ = run(capsys, "check", CORPUS / "bad" / "flowtype.hrt")
    assert code == 1
    assert [line for line in out.splitlines() if "E-FLOWTYPE" in line] == out.splitlines()
    assert len(out.splitlines()) == 1


def test_check_missing_file(capsys, tmp_path):
    code, _, err = run(capsys, "check", tmp_path / "nope.hrt")
    assert code == 2 and "cannot read" in err


def test_check_syntax_error(capsys, tmp_path):
    f = tmp_path / "broken.hrt"
    f.write_text("capsule {")
    code, out, _ = run(capsys, "check", f)
    assert code == 2 and "E-SYNTAX" in out


def test_check_resolution_error_is_a_model_error(capsys, tmp_path):
    f = tmp_path / "m.hrt"
    f.write_text("system s: Missing;")
    assert run(capsys, "check", f)[0] == 1


def test_sim_decay(capsys, tmp_path):
    out = tmp_path / "trace.csv"
    code, _, _ = run(capsys, "sim", CLEAN / "decay.hrt", "--t-end", "1", "--step", "0.01", "--out", out)
    assert code == 0
    last = out.read_text().splitlines()[-1]
    x = float(last.split(",")[3].split(";")[0].split("=")[1])
    assert x == pytest.approx(0.36787944, abs=1e-7)


def test_sim_modes_identical_bytes(capsys, tmp_path):
    a, b = tmp_path / "a.csv", tmp_path / "b.csv"
    model = CLEAN / "thermostat.hrt"
    assert run(capsys, "sim", model, "--mode", "lockstep", "--out", a)[0] == 0
    assert run(capsys, "sim", model, "--mode", "concurrent", "--out", b)[0] == 0
    assert a.read_bytes() == b.read_bytes()


def test_sim_stimulus(capsys, tmp_path):
    stim = tmp_path / "s.csv"
    stim.write_text("0.25,/root/ctl,flip,\n")
    code, out, _ = run(capsys, "sim", CLEAN / "toggle.hrt", "--step", "0.1", "--stimulus", stim)
    assert code == 0
    first = next(line for line in out.splitlines() if ",signal," in line)
    assert first.startswith("0.30000000000000004,signal,/root/ctl,flip")


def test_sim_bad_step(capsys, tmp_path):
    out = tmp_path / "t.csv"
    code, _, err = run(capsys, "sim", CLEAN / "decay.hrt", "--step", "0.03", "--out", out)
    assert code == 2 and "E-STEP" in err and not out.exists()


def test_sim_runtime_abort(capsys, tmp_path):
    out = tmp_path / "t.csv"
    code, _, err = run(capsys, "sim", CORPUS / "rtc" / "diverge.hrt", "--t-end", "1", "--out", out)
    assert code == 3 and "E-RTC-DIVERGE" in err and "/echo" in err and "t=0.0" in err
    assert not out.exists()


def test_sim_invalid_model(capsys, tmp_path):
    out = tmp_path / "t.csv"
    assert run(capsys, "sim", CORPUS / "bad" / "algloop.hrt", "--t-end", "1", "--out", out)[0] == 1
    assert not out.exists()


def test_plan(capsys, tmp_path):
    out = tmp_path / "plan.txt"
    assert run(capsys, "plan", CLEAN / "thermostat.hrt", "--out", out)[0] == 0
    assert out.read_text().startswith("hrtplan v1\n")
    assert list(tmp_path.iterdir()) == [out]


def test_plan_invalid_writes_nothing(capsys, tmp_path):
    out = tmp_path / "plan.txt"
    assert run(capsys, "plan", CORPUS / "bad" / "fanin.hrt", "--out", out)[0] == 1
    assert not out.exists()


def test_graph_relay_fan_out(capsys):
    code, out, _ = run(capsys, "graph", CORPUS / "splice" / "fanout_flat.hrt")
    assert code == 0
    assert sum('"/rig/src.y" -> ' in line for line in out.splitlines()) == 2


def test_usage_errors(capsys):
    assert run(capsys)[0] == 2
    assert run(capsys, "sim")[0] == 2
    assert run(capsys, "sim", CLEAN / "decay.hrt", "--mode", "turbo")[0] == 2
