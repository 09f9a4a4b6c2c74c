"""Syntax tree for ``.hrt`` model files.

Names are unresolved strings here. Spans never take part in equality, so two
trees parsed from differently formatted text compare equal.
"""

from __future__ import annotations

from dataclasses import dataclass, field
from typing import Union

from hrt.diagnostics import NO_SPAN, SourceSpan
from hrt.expr import Expr


def _span():
    return field(default=NO_SPAN, compare=False, repr=False)


@dataclass(frozen=True)
class FieldDecl:
    name: str
    kind: str
    span: SourceSpan = _span()


@dataclass(frozen=True)
class FlowTypeDecl:
    name: str
    fields: tuple[FieldDecl, ...]
    span: SourceSpan = _span()


@dataclass(frozen=True)
class SignalDecl:
    direction: str
    name: str
    payload: str | None = None
    span: SourceSpan = _span()


@dataclass(frozen=True)
class ProtocolDecl:
    name: str
    signals: tuple[SignalDecl, ...]
    span: SourceSpan = _span()


@dataclass(frozen=True)
class Ref:
    part: str | None
    port: str
    span: SourceSpan = _span()


@dataclass(frozen=True)
class DPortDecl:
    direction: str  # "in" | "out"
    name: str
    type_name: str
    span: SourceSpan = _span()


@dataclass(frozen=True)
class SPortDecl:
    name: str
    protocol: str
    conjugate: bool = False
    span: SourceSpan = _span()


@dataclass(frozen=True)
class PartDecl:
    name: str
    type_name: str
    span: SourceSpan = _span()


@dataclass(frozen=True)
class ConnectDecl:
    source: Ref
    target: Ref
    span: SourceSpan = _span()


@dataclass(frozen=True)
class RelayDecl:
    source: Ref
    sinks: tuple[Ref, ...]
    span: SourceSpan = _span()


@dataclass(frozen=True)
class BindDecl:
    left: Ref
    right: Ref
    span: SourceSpan = _span()


@dataclass(frozen=True)
class AssignStmt:
    target: str
    expr: Expr
    span: SourceSpan = _span()


@dataclass(frozen=True)
class SendStmt:
    port: str
    signal: str
    args: tuple[Expr, ...] = ()
    span: SourceSpan = _span()


@dataclass(frozen=True)
class RaiseStmt:
    signal: str
    span: SourceSpan = _span()


Stmt = Union[AssignStmt, SendStmt, RaiseStmt]


@dataclass(frozen=True)
class StateDecl:
    name: str
    initial: bool = False
    entry: tuple[Stmt, ...] | None = None
    exit: tuple[Stmt, ...] | None = None
    children: tuple["StateDecl", ...] = ()
    span: SourceSpan = _span()


@dataclass(frozen=True)
class TransitionDecl:
    source: str
    target: str
    trigger: str | None = None
    after: Expr | None = None
    guard: Expr | None = None
    action: tuple[Stmt, ...] | None = None
    span: SourceSpan = _span()


@dataclass(frozen=True)
class StateMachineDecl:
    states: tuple[StateDecl, ...]
    transitions: tuple[TransitionDecl, ...]
    span: SourceSpan = _span()


@dataclass(frozen=True)
class VarDecl:
    name: str
    kind: str
    init: Expr
    span: SourceSpan = _span()


@dataclass(frozen=True)
class ParamDecl:
    name: str
    init: Expr
    span: SourceSpan = _span()


@dataclass(frozen=True)
class StateVarDecl:
    name: str
    init: Expr
    span: SourceSpan = _span()


@dataclass(frozen=True)
class DerDecl:
    name: str
    expr: Expr
    span: SourceSpan = _span()


@dataclass(frozen=True)
class OutDecl:
    port: str
    field: str
    expr: Expr
    span: SourceSpan = _span()


@dataclass(frozen=True)
class HandlerDecl:
    signal: str
    assignments: tuple[AssignStmt, ...]
    span: SourceSpan = _span()


@dataclass(frozen=True)
class EmitDecl:
    port: str
    signal: str
    condition: Expr
    args: tuple[Expr, ...] = ()
    span: SourceSpan = _span()


@dataclass(frozen=True)
class SolverDecl:
    method: str
    step: float | None = None
    span: SourceSpan = _span()


CapsuleItem = Union[DPortDecl, SPortDecl, VarDecl, PartDecl, ConnectDecl, RelayDecl, BindDecl,
                    StateMachineDecl]
StreamerItem = Union[DPortDecl, SPortDecl, ParamDecl, StateVarDecl, DerDecl, OutDecl, HandlerDecl,
                     EmitDecl, SolverDecl, PartDecl, ConnectDecl, RelayDecl, BindDecl]


@dataclass(frozen=True)
class CapsuleDecl:
    name: str
    items: tuple[CapsuleItem, ...]
    span: SourceSpan = _span()


@dataclass(frozen=True)
class StreamerDecl:
    name: str
    items: tuple[StreamerItem, ...]
    span: SourceSpan = _span()


@dataclass(frozen=True)
class SystemDecl:
    name: str
    type_name: str
    span: SourceSpan = _span()


@dataclass(frozen=True)
class SimulationDecl:
    settings: tuple[tuple[str, float | int], ...]
    span: SourceSpan = _span()


TopDecl = Union[FlowTypeDecl, ProtocolDecl, CapsuleDecl, StreamerDecl, SystemDecl, SimulationDecl]


@dataclass(frozen=True)
class ModelAst:
    decls: tuple[TopDecl, ...]

    def count(self, cls) -> int:
        return sum(isinstance(d, cls) for d in self.decls)
