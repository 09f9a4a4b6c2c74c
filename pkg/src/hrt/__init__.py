"""Model compiler and co-simulation engine for capsule/streamer hybrid models."""

from __future__ import annotations

from pathlib import Path

from hrt.dsl import parse_model, resolve
from hrt.lowering import InstanceTree, lower_to_plan
from hrt.metamodel import ModelDefinition
from hrt.scheduler import SimConfig, Trace, parse_stimulus, run_simulation
from hrt.validator import ValidationReport, validate_all

__all__ = [
    "InstanceTree", "ModelDefinition", "SimConfig", "Trace", "ValidationReport", "load_model",
    "lower_to_plan", "parse_model", "parse_stimulus", "resolve", "run_simulation", "simulate",
    "validate_all",
]


def load_model(path: str | Path) -> ModelDefinition:
    """Parse and resolve a ``.hrt`` file; raises DiagnosticError on front-end errors."""
    path = Path(path)
    return resolve(parse_model(path.read_text(encoding="utf-8"), str(path)))


def simulate(model: ModelDefinition, stimulus: str = "", **config) -> Trace:
    """Lower ``model`` and run it; ``config`` overrides the model's simulation block."""
    plan = lower_to_plan(model)
    cfg = SimConfig.from_model(model, **config)
    return run_simulation(plan, cfg, parse_stimulus(stimulus, plan) if stimulus else ())
