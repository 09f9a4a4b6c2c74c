"""Recursive-descent parser for ``.hrt`` model files.

Keywords are contextual: apart from the expression words ``and or not true
false time`` any keyword may also be used as a name.
"""

from __future__ import annotations

from hrt.diagnostics import DiagnosticError, error
from hrt.dsl import ast
from hrt.dsl.lexer import EOF, IDENT, INT, PUNCT, REAL, Token, tokenize
from hrt.expr import (
    BUILTINS, CMP_OPS, RESERVED, Binary, BoolLit, Call, Expr, FieldRef, Kind, Name, Num, Unary,
)

KINDS = ("real", "int", "bool")


class _Parser:
    def __init__(self, tokens: list[Token]):
        self.toks = tokens
        self.pos = 0

    # -- token plumbing --

    @property
    def tok(self) -> Token:
        return self.toks[self.pos]

    def peek(self, offset: int = 1) -> Token:
        return self.toks[min(self.pos + offset, len(self.toks) - 1)]

    def advance(self) -> Token:
        t = self.toks[self.pos]
        if t.kind != EOF:
            self.pos += 1
        return t

    def at(self, text: str) -> bool:
        t = self.tok
        return t.text == text and t.kind in (PUNCT, IDENT)

    def at_keyword(self, *words: str) -> bool:
        return self.tok.kind == IDENT and self.tok.text in words

    def fail(self, expected) -> DiagnosticError:
        if isinstance(expected, str):
            expected = [expected]
        want = ", ".join(sorted(expected))
        tok = self.tok
        return DiagnosticError([
            error("E-SYNTAX", f"expected {want} but found {tok}", tok.span)
        ])

    def expect(self, text: str) -> Token:
        if not self.at(text):
            raise self.fail(f"'{text}'")
        return self.advance()

    def accept(self, text: str) -> bool:
        if self.at(text):
            self.advance()
            return True
        return False

    def ident(self, what: str = "identifier") -> Token:
        if self.tok.kind != IDENT or self.tok.text in RESERVED:
            raise self.fail(what)
        return self.advance()

    def one_of(self, *words: str) -> Token:
        if not self.at_keyword(*words):
            raise self.fail([f"'{w}'" for w in words])
        return self.advance()

    def number(self) -> float | int:
        neg = self.accept("-")
        t = self.tok
        if t.kind == INT:
            self.advance()
            return -int(t.text) if neg else int(t.text)
        if t.kind == REAL:
            self.advance()
            return -float(t.text) if neg else float(t.text)
        raise self.fail("number")

    # -- top level --

    def model(self) -> ast.ModelAst:
        decls = []
        while self.tok.kind != EOF:
            decls.append(self.top_decl())
        return ast.ModelAst(tuple(decls))

    def top_decl(self):
        handlers = {
            "flowtype": self.flowtype,
            "protocol": self.protocol,
            "capsule": self.capsule,
            "streamer": self.streamer,
            "system": self.system,
            "simulation": self.simulation,
        }
        if self.tok.kind == IDENT and self.tok.text in handlers:
            return handlers[self.tok.text]()
        raise self.fail([f"'{k}'" for k in handlers])

    def flowtype(self) -> ast.FlowTypeDecl:
        start = self.advance().span
        name = self.ident("flowtype name").text
        self.expect("{")
        fields = []
        while not self.at("}"):
            ftok = self.ident("field name")
            self.expect(":")
            ktok = self.one_of(*KINDS)
            fields.append(ast.FieldDecl(ftok.text, ktok.text, ftok.span.to(ktok.span)))
            if not self.accept(","):
                self.accept(";")
        end = self.expect("}").span
        return ast.FlowTypeDecl(name, tuple(fields), start.to(end))

    def protocol(self) -> ast.ProtocolDecl:
        start = self.advance().span
        name = self.ident("protocol name").text
        self.expect("{")
        signals = []
        while not self.at("}"):
            dtok = self.one_of("in", "out")
            sname = self.ident("signal name").text
            payload = None
            if self.accept("("):
                payload = self.ident("flowtype name").text
                self.expect(")")
            end = self.expect(";").span
            signals.append(ast.SignalDecl(dtok.text, sname, payload, dtok.span.to(end)))
        end = self.expect("}").span
        return ast.ProtocolDecl(name, tuple(signals), start.to(end))

    def system(self) -> ast.SystemDecl:
        start = self.advance().span
        name = self.ident("system name").text
        self.expect(":")
        type_name = self.ident("definition name").text
        end = self.expect(";").span
        return ast.SystemDecl(name, type_name, start.to(end))

    def simulation(self) -> ast.SimulationDecl:
        start = self.advance().span
        self.expect("{")
        settings = []
        while not self.at("}"):
            key = self.one_of("t_end", "step", "decimation").text
            settings.append((key, self.number()))
            self.expect(";")
        end = self.expect("}").span
        return ast.SimulationDecl(tuple(settings), start.to(end))

    # -- definitions --

    def capsule(self) -> ast.CapsuleDecl:
        start = self.advance().span
        name = self.ident("capsule name").text
        self.expect("{")
        items = []
        dispatch = {
            "dport": self.dport, "sport": self.sport, "var": self.var, "part": self.part,
            "connect": self.connect, "relay": self.relay, "bind": self.bind,
            "statemachine": self.statemachine,
        }
        while not self.at("}"):
            if not self.at_keyword(*dispatch):
                raise self.fail([f"'{k}'" for k in dispatch] + ["'}'"])
            items.append(dispatch[self.tok.text]())
        end = self.expect("}").span
        return ast.CapsuleDecl(name, tuple(items), start.to(end))

    def streamer(self) -> ast.StreamerDecl:
        start = self.advance().span
        name = self.ident("streamer name").text
        self.expect("{")
        items = []
        dispatch = {
            "dport": self.dport, "sport": self.sport, "param": self.param, "state": self.state_var,
            "der": self.der, "out": self.out_eq, "on": self.handler, "emit": self.emit,
            "solver": self.solver, "part": self.part, "connect": self.connect,
            "relay": self.relay, "bind": self.bind,
        }
        while not self.at("}"):
            if not self.at_keyword(*dispatch):
                raise self.fail([f"'{k}'" for k in dispatch] + ["'}'"])
            items.append(dispatch[self.tok.text]())
        end = self.expect("}").span
        return ast.StreamerDecl(name, tuple(items), start.to(end))

    def dport(self) -> ast.DPortDecl:
        start = self.advance().span
        direction = self.one_of("in", "out").text
        name = self.ident("port name").text
        self.expect(":")
        type_name = self.ident("flowtype name").text
        end = self.expect(";").span
        return ast.DPortDecl(direction, name, type_name, start.to(end))

    def sport(self) -> ast.SPortDecl:
        start = self.advance().span
        name = self.ident("port name").text
        self.expect(":")
        proto = self.ident("protocol name").text
        conjugate = False
        if self.at_keyword("conjugate"):
            self.advance()
            conjugate = True
        end = self.expect(";").span
        return ast.SPortDecl(name, proto, conjugate, start.to(end))

    def var(self) -> ast.VarDecl:
        start = self.advance().span
        name = self.ident("variable name").text
        self.expect(":")
        kind = self.one_of(*KINDS).text
        self.expect("=")
        init = self.expr()
        end = self.expect(";").span
        return ast.VarDecl(name, kind, init, start.to(end))

    def param(self) -> ast.ParamDecl:
        start = self.advance().span
        name = self.ident("parameter name").text
        self.expect("=")
        init = self.expr()
        end = self.expect(";").span
        return ast.ParamDecl(name, init, start.to(end))

    def state_var(self) -> ast.StateVarDecl:
        start = self.advance().span
        name = self.ident("state variable name").text
        self.expect("=")
        init = self.expr()
        end = self.expect(";").span
        return ast.StateVarDecl(name, init, start.to(end))

    def der(self) -> ast.DerDecl:
        start = self.advance().span
        name = self.ident("state variable name").text
        self.expect("=")
        e = self.expr()
        end = self.expect(";").span
        return ast.DerDecl(name, e, start.to(end))

    def out_eq(self) -> ast.OutDecl:
        start = self.advance().span
        port = self.ident("port name").text
        self.expect(".")
        fld = self.ident("field name").text
        self.expect("=")
        e = self.expr()
        end = self.expect(";").span
        return ast.OutDecl(port, fld, e, start.to(end))

    def handler(self) -> ast.HandlerDecl:
        start = self.advance().span
        signal = self.ident("signal name").text
        self.expect("{")
        assigns = []
        while not self.at("}"):
            tok = self.ident("parameter name")
            self.expect(":=")
            e = self.expr()
            end = self.tok.span
            self.accept(";")
            assigns.append(ast.AssignStmt(tok.text, e, tok.span.to(end)))
        end = self.expect("}").span
        return ast.HandlerDecl(signal, tuple(assigns), start.to(end))

    def emit(self) -> ast.EmitDecl:
        start = self.advance().span
        port = self.ident("port name").text
        self.expect(".")
        signal = self.ident("signal name").text
        args = self.call_args() if self.at("(") else ()
        self.one_of("when")
        cond = self.expr()
        end = self.expect(";").span
        return ast.EmitDecl(port, signal, cond, args, start.to(end))

    def solver(self) -> ast.SolverDecl:
        start = self.advance().span
        method = self.one_of("euler", "rk4").text
        step = None
        if self.at_keyword("step"):
            self.advance()
            step = float(self.number())
        end = self.expect(";").span
        return ast.SolverDecl(method, step, start.to(end))

    def part(self) -> ast.PartDecl:
        start = self.advance().span
        name = self.ident("part name").text
        self.expect(":")
        type_name = self.ident("definition name").text
        end = self.expect(";").span
        return ast.PartDecl(name, type_name, start.to(end))

    def ref(self) -> ast.Ref:
        first = self.ident("port reference")
        if self.accept("."):
            second = self.ident("port name")
            return ast.Ref(first.text, second.text, first.span.to(second.span))
        return ast.Ref(None, first.text, first.span)

    def connect(self) -> ast.ConnectDecl:
        start = self.advance().span
        src = self.ref()
        self.expect("->")
        dst = self.ref()
        end = self.expect(";").span
        return ast.ConnectDecl(src, dst, start.to(end))

    def relay(self) -> ast.RelayDecl:
        start = self.advance().span
        src = self.ref()
        self.expect("->")
        self.expect("(")
        sinks = [self.ref()]
        while self.accept(","):
            sinks.append(self.ref())
        self.expect(")")
        end = self.expect(";").span
        return ast.RelayDecl(src, tuple(sinks), start.to(end))

    def bind(self) -> ast.BindDecl:
        start = self.advance().span
        left = self.ref()
        self.expect("<->")
        right = self.ref()
        end = self.expect(";").span
        return ast.BindDecl(left, right, start.to(end))

    # -- state machines --

    def statemachine(self) -> ast.StateMachineDecl:
        start = self.advance().span
        self.expect("{")
        states, transitions = [], []
        while not self.at("}"):
            if self.at_keyword("initial", "state"):
                states.append(self.state_decl())
            elif self.at_keyword("transition"):
                transitions.append(self.transition())
            else:
                raise self.fail(["'initial'", "'state'", "'transition'", "'}'"])
        end = self.expect("}").span
        return ast.StateMachineDecl(tuple(states), tuple(transitions), start.to(end))

    def state_decl(self) -> ast.StateDecl:
        start = self.tok.span
        initial = False
        if self.at_keyword("initial"):
            self.advance()
            initial = True
        self.one_of("state")
        name = self.ident("state name").text
        entry = exit_ = None
        children = []
        if self.accept(";"):
            return ast.StateDecl(name, initial, span=start.to(self.toks[self.pos - 1].span))
        self.expect("{")
        while not self.at("}"):
            if self.at_keyword("entry"):
                self.advance()
                entry = self.block()
            elif self.at_keyword("exit"):
                self.advance()
                exit_ = self.block()
            elif self.at_keyword("initial", "state"):
                children.append(self.state_decl())
            else:
                raise self.fail(["'entry'", "'exit'", "'initial'", "'state'", "'}'"])
        end = self.expect("}").span
        return ast.StateDecl(name, initial, entry, exit_, tuple(children), start.to(end))

    def transition(self) -> ast.TransitionDecl:
        start = self.advance().span
        source = self.ident("state name").text
        self.expect("->")
        target = self.ident("state name").text
        trigger = after = guard = action = None
        kw = self.one_of("on", "after")
        if kw.text == "on":
            trigger = self.ident("signal name").text
        else:
            after = self.expr()
        if self.accept("["):
            guard = self.expr()
            self.expect("]")
        if self.at("{"):
            action = self.block()
        end = self.tok.span
        self.accept(";")
        return ast.TransitionDecl(source, target, trigger, after, guard, action, start.to(end))

    def block(self) -> tuple[ast.Stmt, ...]:
        self.expect("{")
        stmts = []
        while not self.at("}"):
            stmts.append(self.stmt())
        self.expect("}")
        return tuple(stmts)

    def stmt(self) -> ast.Stmt:
        start = self.tok.span
        if self.at_keyword("send") and self.peek().text != ":=":
            self.advance()
            port = self.ident("port name").text
            self.expect(".")
            signal = self.ident("signal name").text
            args = self.call_args() if self.at("(") else ()
            end = self.toks[self.pos - 1].span
            self.accept(";")
            return ast.SendStmt(port, signal, args, start.to(end))
        if self.at_keyword("raise") and self.peek().text != ":=":
            self.advance()
            sig = self.ident("signal name")
            self.accept(";")
            return ast.RaiseStmt(sig.text, start.to(sig.span))
        target = self.ident("statement")
        self.expect(":=")
        e = self.expr()
        end = self.toks[self.pos - 1].span
        self.accept(";")
        return ast.AssignStmt(target.text, e, start.to(end))

    def call_args(self) -> tuple[Expr, ...]:
        self.expect("(")
        args = []
        if not self.at(")"):
            args.append(self.expr())
            while self.accept(","):
                args.append(self.expr())
        self.expect(")")
        return tuple(args)

    # -- expressions --

    def expr(self) -> Expr:
        return self.or_expr()

    def or_expr(self) -> Expr:
        left = self.and_expr()
        while self.at_keyword("or"):
            self.advance()
            right = self.and_expr()
            left = Binary("or", left, right, left.span.to(right.span))
        return left

    def and_expr(self) -> Expr:
        left = self.not_expr()
        while self.at_keyword("and"):
            self.advance()
            right = self.not_expr()
            left = Binary("and", left, right, left.span.to(right.span))
        return left

    def not_expr(self) -> Expr:
        if self.at_keyword("not"):
            start = self.advance().span
            operand = self.not_expr()
            return Unary("not", operand, start.to(operand.span))
        return self.comparison()

    def comparison(self) -> Expr:
        left = self.additive()
        if self.tok.kind == PUNCT and self.tok.text in CMP_OPS:
            op = self.advance().text
            right = self.additive()
            return Binary(op, left, right, left.span.to(right.span))
        return left

    def additive(self) -> Expr:
        left = self.multiplicative()
        while self.tok.kind == PUNCT and self.tok.text in ("+", "-"):
            op = self.advance().text
            right = self.multiplicative()
            left = Binary(op, left, right, left.span.to(right.span))
        return left

    def multiplicative(self) -> Expr:
        left = self.unary()
        while self.tok.kind == PUNCT and self.tok.text in ("*", "/"):
            op = self.advance().text
            right = self.unary()
            left = Binary(op, left, right, left.span.to(right.span))
        return left

    def unary(self) -> Expr:
        if self.at("-"):
            start = self.advance().span
            operand = self.unary()
            return Unary("-", operand, start.to(operand.span))
        return self.atom()

    def atom(self) -> Expr:
        t = self.tok
        if t.kind == INT:
            self.advance()
            return Num(int(t.text), Kind.INT, t.span)
        if t.kind == REAL:
            self.advance()
            return Num(float(t.text), Kind.REAL, t.span)
        if self.at("("):
            self.advance()
            e = self.expr()
            self.expect(")")
            return e
        if t.kind == IDENT:
            if t.text in ("true", "false"):
                self.advance()
                return BoolLit(t.text == "true", t.span)
            if t.text in ("and", "or", "not"):
                raise self.fail("expression")
            self.advance()
            if self.at("(") and t.text in BUILTINS:
                args = self.call_args()
                return Call(t.text, args, t.span.to(self.toks[self.pos - 1].span))
            if self.at("."):
                self.advance()
                f = self.ident("field name")
                return FieldRef(t.text, f.text, t.span.to(f.span))
            return Name(t.text, t.span)
        raise self.fail("expression")


def parse_model(source: str, file: str = "<input>") -> ast.ModelAst:
    """Parse model text; raises DiagnosticError with E-LEX / E-SYNTAX diagnostics."""
    return _Parser(tokenize(source, file)).model()


def parse_expr(source: str, file: str = "<expr>") -> Expr:
    p = _Parser(tokenize(source, file))
    e = p.expr()
    if p.tok.kind != EOF:
        raise p.fail("end of input")
    return e
