import time
from pathlib import Path

import pytest

from hrt.diagnostics import DiagnosticError
from hrt.dsl import parse_model, resolve
from hrt.lowering import lower_to_plan

ROOT = Path(__file__).resolve().parent.parent
CORPUS = ROOT / "corpus"


def corpus_file(*parts: str) -> Path:
    return CORPUS.joinpath(*parts)


def model_from(text: str, file: str = "test.hrt"):
    return resolve(parse_model(text, file))


def load(*parts: str):
    path = corpus_file(*parts)
    return resolve(parse_model(path.read_text(), str(path)))


def front_end_codes(text: str) -> list[str]:
    try:
        model_from(text)
    except DiagnosticError as exc:
        return exc.codes
    return []


def plan_of(text: str):
    return lower_to_plan(model_from(text))


@pytest.fixture
def corpus():
    return CORPUS


# -- acceptance reporting ---------------------------------------------------

ACCEPTANCE: list[str] = []
SUITE_BUDGET_S = 60.0


def acceptance(criterion: int, ok: bool, detail: str) -> None:
    line = f"[{'PASS' if ok else 'FAIL'}] criterion {criterion}: {detail}"
    ACCEPTANCE.append(line)
    print(line)


def pytest_sessionstart(session):
    session.config._hrt_started = time.perf_counter()


def pytest_sessionfinish(session, exitstatus):
    if not ACCEPTANCE:
        return
    elapsed = time.perf_counter() - session.config._hrt_started
    ok = elapsed < SUITE_BUDGET_S
    ACCEPTANCE.append(f"[{'PASS' if ok else 'FAIL'}] criterion 9: whole suite ran in "
                      f"{elapsed:.1f} s (budget {SUITE_BUDGET_S:.0f} s)")
    if not ok and exitstatus == 0:
        session.exitstatus = 1


def pytest_terminal_summary(terminalreporter, exitstatus, config):
    if ACCEPTANCE:
        terminalreporter.section("acceptance criteria")
        for line in ACCEPTANCE:
            terminalreporter.write_line(line)
