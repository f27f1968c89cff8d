"""Text format for programs.

    fn f(x: f64[3], y: f64) -> f64
     t = mul x, y
     s = slice t {start=0, stop=2}
     u = sum s
     return u

Equations end at a newline; newlines inside brackets, braces and
parentheses are ignored, as is everything after ``#``.  Float literals are
printed in shortest round-trip form so ``parse(print(p)) == p`` bit for bit;
hex floats (``0x1.8p+1``) are accepted as well.
"""
from __future__ import annotations

import re
from dataclasses import dataclass

import numpy as np

from .ir import (Equation, Literal, Program, Shape, Var, as_tensor, format_tensor,
                 shape_str)
from .rules import PRIMITIVES, ShapeError, infer_shape


class ParseError(ValueError):
    def __init__(self, message: str, line: int, col: int, expected=()):
        self.line, self.col, self.expected = line, col, tuple(expected)
        where = f"{line}:{col}: {message}"
        if expected:
            where += f" (expected {' or '.join(expected)})"
        super().__init__(where)


@dataclass(frozen=True)
class Token:
    kind: str
    text: str
    line: int
    col: int


_NUMBER = (r"[-+]?(?:0[xX](?:[0-9a-fA-F]+\.?[0-9a-fA-F]*|\.[0-9a-fA-F]+)[pP][-+]?\d+"
           r"|(?:\d+\.?\d*|\.\d+)(?:[eE][-+]?\d+)?|inf\b|nan\b)")
_TOKEN_RE = re.compile(
    rf"(?P<ws>[ \t\r]+)|(?P<comment>#[^\n]*)|(?P<newline>\n)"
    rf"|(?P<arrow>->)|(?P<number>{_NUMBER})"
    r"|(?P<ident>[A-Za-z_][A-Za-z0-9_]*)|(?P<punct>[()\[\]{},:=])"
    r"|(?P<error>.)"
)
_OPEN, _CLOSE = "([{", ")]}"


def tokenize(text: str) -> list[Token]:
    tokens: list[Token] = []
    line, line_start, depth = 1, 0, 0
    for m in _TOKEN_RE.finditer(text):
        kind, s = m.lastgroup, m.group()
        col = m.start() - line_start + 1
        if kind == "newline":
            if depth == 0:
                tokens.append(Token("newline", s, line, col))
            line, line_start = line + 1, m.end()
        elif kind == "error":
            raise ParseError(f"unexpected character {s!r}", line, col)
        elif kind not in ("ws", "comment"):
            if kind == "punct":
                if s in _OPEN:
                    depth += 1
                elif s in _CLOSE:
                    depth = max(depth - 1, 0)
            tokens.append(Token(kind, s, line, col))
    tokens.append(Token("newline", "", line, len(text) - line_start + 1))
    tokens.append(Token("eof", "", line, len(text) - line_start + 1))
    return tokens


def _float(s: str) -> float:
    body = s.lstrip("+-")
    if body[:2].lower() == "0x":
        v = float.fromhex(body)
        return -v if s.startswith("-") else v
    return float(s)


class _Parser:
    def __init__(self, text: str):
        self.toks = tokenize(text)
        self.i = 0

    @property
    def tok(self) -> Token:
        return self.toks[self.i]

    def error(self, message: str, *expected: str):
        raise ParseError(message, self.tok.line, self.tok.col, expected)

    def at(self, text: str) -> bool:
        return self.tok.text == text and self.tok.kind in ("punct", "arrow", "ident")

    def next(self) -> Token:
        t = self.tok
        self.i += 1
        return t

    def expect(self, text: str) -> Token:
        if not self.at(text):
            self.error(f"found {self.tok.text or self.tok.kind!r}", repr(text))
        return self.next()

    def expect_kind(self, kind: str, what: str) -> Token:
        if self.tok.kind != kind:
            self.error(f"found {self.tok.text or self.tok.kind!r}", what)
        return self.next()

    def skip_newlines(self):
        while self.tok.kind == "newline":
            self.next()

    def end_of_line(self):
        if self.tok.kind != "newline":
            self.error(f"found {self.tok.text!r}", "end of line")
        self.next()
        self.skip_newlines()

    def integer(self) -> int:
        t = self.expect_kind("number", "an integer")
        if not t.text.isdigit():
            raise ParseError(f"{t.text!r} is not a non-negative integer", t.line, t.col)
        return int(t.text)

    # type := "f64" | "f64[" INT "]" | "f64[" INT "," INT "]"
    def type_(self) -> Shape:
        self.expect("f64")
        if not self.at("["):
            return ()
        self.next()
        dims = [self.integer()]
        if self.at(","):
            self.next()
            dims.append(self.integer())
        self.expect("]")
        return tuple(dims)

    def typelist(self) -> list[Shape]:
        if self.at("("):
            self.next()
            types = [] if self.at(")") else self._comma_sep(self.type_)
            self.expect(")")
            return types
        return self._comma_sep(self.type_)

    def _comma_sep(self, item):
        items = [item()]
        while self.at(","):
            self.next()
            items.append(item())
        return items

    def number(self) -> float:
        return _float(self.expect_kind("number", "a number").text)

    def tensor(self):
        if self.tok.kind == "number":
            return self.number()
        self.expect("[")
        if self.at("]"):
            self.next()
            return []
        if self.at("["):
            rows = self._comma_sep(self.tensor_row)
            self.expect("]")
            if len({len(r) for r in rows}) > 1:
                self.error("ragged matrix literal")
            return rows
        vals = self._comma_sep(self.number)
        self.expect("]")
        return vals

    def tensor_row(self):
        self.expect("[")
        if self.at("]"):
            self.next()
            return []
        vals = self._comma_sep(self.number)
        self.expect("]")
        return vals

    def atom(self, env: dict[str, Shape]):
        if self.tok.kind == "ident":
            name = self.next().text
            return Var(name, env.get(name, ()))
        if self.tok.kind == "number" or self.at("["):
            value = self.tensor()
            return Literal(as_tensor(np.array(value, dtype=np.float64).reshape(_shape_of(value))))
        self.error(f"found {self.tok.text or self.tok.kind!r}", "a variable", "a literal")

    def attrs(self) -> dict[str, int]:
        self.expect("{")
        params = {}
        while True:
            key = self.expect_kind("ident", "an attribute name")
            if key.text in params:
                raise ParseError(f"duplicate attribute {key.text}", key.line, key.col)
            self.expect("=")
            params[key.text] = self.integer()
            if not self.at(","):
                break
            self.next()
        self.expect("}")
        return params

    def program(self) -> Program:
        self.skip_newlines()
        self.expect("fn")
        name = self.expect_kind("ident", "a function name").text
        self.expect("(")
        inputs = []
        if not self.at(")"):
            def param():
                n = self.expect_kind("ident", "a parameter name").text
                self.expect(":")
                return Var(n, self.type_())
            inputs = self._comma_sep(param)
        self.expect(")")
        self.expect("->")
        out_tok = self.tok
        out_types = self.typelist()
        self.end_of_line()

        env = {v.name: v.shape for v in inputs}
        eqns = []
        ill_shaped = False
        while not self.at("return"):
            if self.tok.kind == "eof":
                self.error("unexpected end of input", "'return'")
            out = self.expect_kind("ident", "an equation or 'return'")
            self.expect("=")
            prim = self.expect_kind("ident", "a primitive name")
            if prim.text not in PRIMITIVES:
                raise ParseError(f"unknown primitive {prim.text!r}", prim.line, prim.col,
                                 sorted(PRIMITIVES))
            args = self._comma_sep(lambda: self.atom(env))
            params = self.attrs() if self.at("{") else {}
            try:
                shape = infer_shape(prim.text, [a.shape for a in args], params)
            except ShapeError:
                shape, ill_shaped = (), True  # reported by validate
            env.setdefault(out.text, shape)
            eqns.append(Equation(Var(out.text, shape), prim.text, tuple(args), params))
            self.end_of_line()
        self.expect("return")
        outputs = [] if self.tok.kind == "newline" else self._comma_sep(lambda: self.atom(env))
        self.end_of_line()
        self.expect_kind("eof", "end of input")

        shapes = [a.shape for a in outputs]
        if shapes != out_types and not ill_shaped:
            raise ParseError(
                f"declared return types {[shape_str(s) for s in out_types]} do not match "
                f"returned values {[shape_str(s) for s in shapes]}", out_tok.line, out_tok.col)
        return Program(tuple(inputs), tuple(eqns), tuple(outputs), name)


def _shape_of(value) -> Shape:
    if not isinstance(value, list):
        return ()
    if value and isinstance(value[0], list):
        return (len(value), len(value[0]))
    return (len(value),)


def parse_program(text: str) -> Program:
    """Parse program text; semantic errors are left to ``validate``."""
    return _Parser(text).program()


def parse_tensor(text: str) -> np.ndarray:
    """Parse one inline tensor literal such as ``[[1, 2], [3, 4]]``."""
    p = _Parser(text)
    value = p.tensor()
    if p.tok.kind != "newline":
        p.error(f"trailing input {p.tok.text!r}")
    return as_tensor(np.array(value, dtype=np.float64).reshape(_shape_of(value)))


def _ordered_params(eqn: Equation) -> dict[str, int]:
    order = PRIMITIVES[eqn.prim].param_names if eqn.prim in PRIMITIVES else ()
    rank = {k: i for i, k in enumerate(order)}
    return {k: eqn.params[k] for k in sorted(eqn.params, key=lambda k: (rank.get(k, 99), k))}


def print_program(prog: Program) -> str:
    params = ", ".join(f"{v.name}: {shape_str(v.shape)}" for v in prog.inputs)
    outs = [shape_str(a.shape) for a in prog.outputs]
    ret = "()" if not outs else ", ".join(outs)
    lines = [f"fn {prog.name}({params}) -> {ret}"]
    for eqn in prog.eqns:
        canon = Equation(eqn.out, eqn.prim, eqn.inputs, _ordered_params(eqn))
        lines.append(f" {canon}")
    lines.append(" return" + ("" if not prog.outputs else " " + ", ".join(map(str, prog.outputs))))
    return "\n".join(lines) + "\n"


__all__ = ["ParseError", "parse_program", "parse_tensor", "print_program", "tokenize",
           "format_tensor"]
