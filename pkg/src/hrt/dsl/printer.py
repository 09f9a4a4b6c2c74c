"""Canonical pretty-printer for model syntax trees; output reparses to an equal tree."""

from __future__ import annotations

from hrt.dsl import ast
from hrt.expr import Kind, format_number, to_source

INDENT = "    "


def _ref(r: ast.Ref) -> str:
    return r.port if r.part is None else f"{r.part}.{r.port}"


def _args(args) -> str:
    return "(" + ", ".join(to_source(a) for a in args) + ")" if args else ""


def _stmt(s: ast.Stmt) -> str:
    if isinstance(s, ast.AssignStmt):
        return f"{s.target} := {to_source(s.expr)};"
    if isinstance(s, ast.SendStmt):
        return f"send {s.port}.{s.signal}{_args(s.args)};"
    return f"raise {s.signal};"


def _block(stmts, depth: int) -> list[str]:
    if not stmts:
        return ["{ }"]
    pad = INDENT * (depth + 1)
    return ["{"] + [pad + _stmt(s) for s in stmts] + [INDENT * depth + "}"]


def _join_block(head: str, stmts, depth: int) -> list[str]:
    lines = _block(stmts, depth)
    lines[0] = head + " " + lines[0]
    return lines


def _state(s: ast.StateDecl, depth: int) -> list[str]:
    pad = INDENT * depth
    head = f"{pad}{'initial ' if s.initial else ''}state {s.name}"
    if s.entry is None and s.exit is None and not s.children:
        return [head + ";"]
    lines = [head + " {"]
    inner = INDENT * (depth + 1)
    if s.entry is not None:
        lines += _join_block(inner + "entry", s.entry, depth + 1)
    if s.exit is not None:
        lines += _join_block(inner + "exit", s.exit, depth + 1)
    for c in s.children:
        lines += _state(c, depth + 1)
    lines.append(pad + "}")
    return lines


def _transition(t: ast.TransitionDecl, depth: int) -> list[str]:
    head = f"{INDENT * depth}transition {t.source} -> {t.target}"
    head += f" on {t.trigger}" if t.trigger is not None else f" after {to_source(t.after)}"
    if t.guard is not None:
        head += f" [{to_source(t.guard)}]"
    if t.action is None:
        return [head + ";"]
    return _join_block(head, t.action, depth)


def _item(item, depth: int) -> list[str]:
    pad = INDENT * depth
    if isinstance(item, ast.DPortDecl):
        return [f"{pad}dport {item.direction} {item.name}: {item.type_name};"]
    if isinstance(item, ast.SPortDecl):
        conj = " conjugate" if item.conjugate else ""
        return [f"{pad}sport {item.name}: {item.protocol}{conj};"]
    if isinstance(item, ast.VarDecl):
        return [f"{pad}var {item.name}: {item.kind} = {to_source(item.init)};"]
    if isinstance(item, ast.ParamDecl):
        return [f"{pad}param {item.name} = {to_source(item.init)};"]
    if isinstance(item, ast.StateVarDecl):
        return [f"{pad}state {item.name} = {to_source(item.init)};"]
    if isinstance(item, ast.DerDecl):
        return [f"{pad}der {item.name} = {to_source(item.expr)};"]
    if isinstance(item, ast.OutDecl):
        return [f"{pad}out {item.port}.{item.field} = {to_source(item.expr)};"]
    if isinstance(item, ast.HandlerDecl):
        return _join_block(f"{pad}on {item.signal}", item.assignments, depth)
    if isinstance(item, ast.EmitDecl):
        return [f"{pad}emit {item.port}.{item.signal}{_args(item.args)} when {to_source(item.condition)};"]
    if isinstance(item, ast.SolverDecl):
        step = f" step {format_number(item.step, Kind.REAL)}" if item.step is not None else ""
        return [f"{pad}solver {item.method}{step};"]
    if isinstance(item, ast.PartDecl):
        return [f"{pad}part {item.name}: {item.type_name};"]
    if isinstance(item, ast.ConnectDecl):
        return [f"{pad}connect {_ref(item.source)} -> {_ref(item.target)};"]
    if isinstance(item, ast.RelayDecl):
        sinks = ", ".join(_ref(s) for s in item.sinks)
        return [f"{pad}relay {_ref(item.source)} -> ({sinks});"]
    if isinstance(item, ast.BindDecl):
        return [f"{pad}bind {_ref(item.left)} <-> {_ref(item.right)};"]
    if isinstance(item, ast.StateMachineDecl):
        lines = [f"{pad}statemachine {{"]
        for s in item.states:
            lines += _state(s, depth + 1)
        for t in item.transitions:
            lines += _transition(t, depth + 1)
        lines.append(pad + "}")
        return lines
    raise TypeError(f"unknown item {item!r}")


def _number(v) -> str:
    return format_number(v, Kind.INT if isinstance(v, int) else Kind.REAL)


def print_model(model: ast.ModelAst) -> str:
    out: list[str] = []
    for d in model.decls:
        if isinstance(d, ast.FlowTypeDecl):
            fields = ", ".join(f"{f.name}: {f.kind}" for f in d.fields)
            out.append(f"flowtype {d.name} {{ {fields} }}" if fields else f"flowtype {d.name} {{ }}")
        elif isinstance(d, ast.ProtocolDecl):
            lines = [f"protocol {d.name} {{"]
            for s in d.signals:
                payload = f"({s.payload})" if s.payload else ""
                lines.append(f"{INDENT}{s.direction} {s.name}{payload};")
            lines.append("}")
            out.append("\n".join(lines))
        elif isinstance(d, (ast.CapsuleDecl, ast.StreamerDecl)):
            word = "capsule" if isinstance(d, ast.CapsuleDecl) else "streamer"
            lines = [f"{word} {d.name} {{"]
            for item in d.items:
                lines += _item(item, 1)
            lines.append("}")
            out.append("\n".join(lines))
        elif isinstance(d, ast.SystemDecl):
            out.append(f"system {d.name}: {d.type_name};")
        elif isinstance(d, ast.SimulationDecl):
            lines = ["simulation {"]
            for key, value in d.settings:
                lines.append(f"{INDENT}{key} {_number(value)};")
            lines.append("}")
            out.append("\n".join(lines))
        else:
            raise TypeError(f"unknown declaration {d!r}")
    return "\n\n".join(out) + ("\n" if out else "")
