from __future__ import annotations

import re
from dataclasses import dataclass

from hrt.diagnostics import DiagnosticError, SourceSpan, error

IDENT = "ident"
INT = "int"
REAL = "real"
PUNCT = "punct"
EOF = "eof"

_PUNCT = ["<->", "->", ":=", "<=", ">=", "==", "!=", "{", "}", "(", ")", "[", "]",
          ":", ";", ",", ".", "=", "+", "-", "*", "/", "<", ">"]

_TOKEN_RE = re.compile(
    r"(?P<ws>[ \t\r\f]+)"
    r"|(?P<nl>\n)"
    r"|(?P<comment>//[^\n]*)"
    r"|(?P<real>(?:\d+\.\d*|\.\d+)(?:[eE][+-]?\d+)?|\d+[eE][+-]?\d+)"
    r"|(?P<int>\d+)"
    r"|(?P<ident>[A-Za-z_][A-Za-z0-9_]*)"
    r"|(?P<punct>" + "|".join(re.escape(p) for p in _PUNCT) + ")"
)


@dataclass(frozen=True)
class Token:
    kind: str
    text: str
    span: SourceSpan

    def __str__(self) -> str:
        return "end of input" if self.kind == EOF else f"'{self.text}'"


def tokenize(source: str, file: str = "<input>") -> list[Token]:
    """Split ``source`` into tokens; raises DiagnosticError (E-LEX) on a bad character."""
    tokens: list[Token] = []
    line, line_start, pos = 1, 0, 0
    while pos < len(source):
        m = _TOKEN_RE.match(source, pos)
        col = pos - line_start + 1
        if m is None:
            ch = source[pos]
            span = SourceSpan(file, line, col, line, col + 1)
            raise DiagnosticError([error("E-LEX", f"unexpected character {ch!r}", span)])
        kind = m.lastgroup
        text = m.group()
        end = m.end()
        if kind == "nl":
            line += 1
            line_start = end
        elif kind not in ("ws", "comment"):
            span = SourceSpan(file, line, col, line, col + len(text))
            tokens.append(Token(kind, text, span))
        pos = end
    col = pos - line_start + 1
    tokens.append(Token(EOF, "", SourceSpan(file, line, col, line, col)))
    return tokens
