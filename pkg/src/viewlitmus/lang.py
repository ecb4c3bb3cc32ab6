"""Litmus-test surface syntax: lexer, parser, AST and pretty-printer.

A litmus file looks like::

    test COH
    vars x=0
    thread T0 { x := 1; a := x; }
    thread T1 { x := 2; b := x; }
    allowed   { a == 2 && b == 2 }
    forbidden { a == 2 && b == 1 }

An optional ``protocols { ... }`` block may follow ``vars``; its tokens are
kept verbatim and handed to :mod:`viewlitmus.protocol`.
"""

from __future__ import annotations

import re
from dataclasses import dataclass, field
from typing import Union

__all__ = [
    "LitmusSyntaxError",
    "Token",
    "ThreadId",
    "Location",
    "Register",
    "Reg",
    "Store",
    "Load",
    "Rmw",
    "Thread",
    "Expectation",
    "ProtocolBlock",
    "LitmusProgram",
    "tokenize",
    "parse_litmus",
    "free_registers",
    "format_program",
]

INT64_MIN = -(2**63)
INT64_MAX = 2**63 - 1


class LitmusSyntaxError(Exception):
    """Parse or validation error carrying a 1-based source position."""

    def __init__(self, message, line=0, col=0):
        self.message = message
        self.line = line
        self.col = col
        super().__init__(f"{line}:{col}: {message}" if line else message)


@dataclass(frozen=True)
class Token:
    kind: str
    text: str
    line: int
    col: int
    start: int
    end: int


_TOKEN_RE = re.compile(
    r"""
    (?P<ws>\s+)
  | (?P<comment>//[^\n]*)
  | (?P<arrow>->)
  | (?P<assign>:=)
  | (?P<eqeq>==)
  | (?P<andand>&&)
  | (?P<int>\d+)
  | (?P<ident>[A-Za-z_][A-Za-z0-9_]*)
  | (?P<punct>[{}(),;=+\-])
    """,
    re.VERBOSE,
)

KEYWORDS = frozenset(
    {"test", "vars", "thread", "rmw", "allowed", "forbidden", "protocols"}
)


def tokenize(source):
    """Split *source* into tokens, dropping whitespace and comments."""
    tokens = []
    pos = 0
    line = 1
    line_start = 0
    n = len(source)
    while pos < n:
        m = _TOKEN_RE.match(source, pos)
        if m is None:
            raise LitmusSyntaxError(
                f"unexpected character {source[pos]!r}", line, pos - line_start + 1
            )
        kind = m.lastgroup
        text = m.group()
        if kind not in ("ws", "comment"):
            tokens.append(Token(kind, text, line, pos - line_start + 1, pos, m.end()))
        nl = text.count("\n")
        if nl:
            line += nl
            line_start = pos + text.rindex("\n") + 1
        pos = m.end()
    tokens.append(Token("eof", "", line, pos - line_start + 1, pos, pos))
    return tokens


# --------------------------------------------------------------------------
# AST


@dataclass(frozen=True, order=True)
class ThreadId:
    index: int
    name: str

    def __str__(self):
        return self.name


@dataclass(frozen=True)
class Location:
    name: str
    initial_value: int = 0


@dataclass(frozen=True, order=True)
class Register:
    name: str
    owner: int


@dataclass(frozen=True)
class Reg:
    """A register operand inside an expression."""

    name: str

    def __str__(self):
        return self.name


Expr = Union[int, Reg]


@dataclass(frozen=True)
class Store:
    loc: str
    value: Expr

    def __str__(self):
        return f"{self.loc} := {self.value}"


@dataclass(frozen=True)
class Load:
    dst: str
    loc: str

    def __str__(self):
        return f"{self.dst} := {self.loc}"


@dataclass(frozen=True)
class Rmw:
    loc: str
    expected: Expr
    new: Expr
    result: str | None = None

    def __str__(self):
        call = f"rmw({self.loc}, {self.expected}, {self.new})"
        return f"{self.result} := {call}" if self.result else call


Statement = Union[Store, Load, Rmw]


@dataclass(frozen=True)
class Thread:
    tid: ThreadId
    body: tuple


@dataclass(frozen=True)
class Expectation:
    polarity: str  # "allowed" | "forbidden"
    clause: tuple  # ((register, value), ...)

    def clause_text(self):
        return " && ".join(f"{r} == {v}" for r, v in self.clause)

    def __str__(self):
        return f"{self.polarity} {{ {self.clause_text()} }}"


@dataclass(frozen=True)
class ProtocolBlock:
    """Raw tokens between the braces of a ``protocols`` block."""

    tokens: tuple

    def text(self):
        return " ".join(t.text for t in self.tokens)

    # Positions are kept for error messages but are not part of the structure.
    def __eq__(self, other):
        if not isinstance(other, ProtocolBlock):
            return NotImplemented
        return [(t.kind, t.text) for t in self.tokens] == [(t.kind, t.text) for t in other.tokens]

    def __hash__(self):
        return hash(tuple((t.kind, t.text) for t in self.tokens))


@dataclass(frozen=True)
class LitmusProgram:
    name: str
    locations: tuple
    threads: tuple
    expectations: tuple = ()
    declared_protocols: ProtocolBlock | None = None
    registers: tuple = field(default=(), compare=False)

    def location(self, name):
        for loc in self.locations:
            if loc.name == name:
                return loc
        raise KeyError(name)

    @property
    def location_names(self):
        return tuple(loc.name for loc in self.locations)

    @property
    def thread_ids(self):
        return tuple(th.tid for th in self.threads)

    def thread_by_name(self, name):
        for th in self.threads:
            if th.tid.name == name:
                return th
        raise KeyError(name)


# --------------------------------------------------------------------------
# Parser


class _Parser:
    def __init__(self, source):
        self.tokens = tokenize(source)
        self.i = 0

    @property
    def tok(self):
        return self.tokens[self.i]

    def error(self, msg, tok=None):
        tok = tok or self.tok
        return LitmusSyntaxError(msg, tok.line, tok.col)

    def peek(self, text, offset=0):
        t = self.tokens[min(self.i + offset, len(self.tokens) - 1)]
        return t.kind != "eof" and t.text == text

    def advance(self):
        t = self.tok
        if t.kind != "eof":
            self.i += 1
        return t

    def expect(self, text):
        if not self.peek(text):
            found = self.tok.text or "end of input"
            raise self.error(f"expected {text!r}, found {found!r}")
        return self.advance()

    def ident(self, what="identifier"):
        t = self.tok
        if t.kind != "ident" or t.text in KEYWORDS:
            found = t.text or "end of input"
            raise self.error(f"expected {what}, found {found!r}")
        return self.advance()

    def integer(self):
        start = self.tok
        sign = 1
        if self.peek("-"):
            self.advance()
            sign = -1
        t = self.tok
        if t.kind != "int":
            raise self.error(f"expected integer, found {t.text or 'end of input'!r}")
        self.advance()
        value = sign * int(t.text)
        if not INT64_MIN <= value <= INT64_MAX:
            raise self.error("integer out of 64-bit range", start)
        return value

    def test_name(self):
        # Names like 2+2W or COH-p1 are glued from adjacent tokens.
        first = self.tok
        if first.kind == "eof" or first.text in "{}();,":
            raise self.error("expected test name")
        parts = [self.advance()]
        while self.tok.start == parts[-1].end and (
            self.tok.kind in ("ident", "int") or self.tok.text in ("+", "-")
        ):
            parts.append(self.advance())
        return "".join(p.text for p in parts)

    # program := test vars protocols? thread+ expect*
    def program(self):
        self.expect("test")
        name = self.test_name()
        self.expect("vars")
        locations = [self.var_decl()]
        while self.peek(","):
            self.advance()
            locations.append(self.var_decl())
        seen = set()
        for tok, loc in locations:
            if loc.name in seen:
                raise self.error(f"location {loc.name!r} declared twice", tok)
            seen.add(loc.name)
        protocols = None
        if self.peek("protocols"):
            protocols = self.protocol_block()
        threads = []
        while self.peek("thread"):
            threads.append(self.thread())
        if not threads:
            raise self.error("expected at least one 'thread'")
        expectations = []
        while self.peek("allowed") or self.peek("forbidden"):
            expectations.append(self.expectation())
        if self.tok.kind != "eof":
            raise self.error(f"unexpected {self.tok.text!r}")
        return name, [loc for _, loc in locations], protocols, threads, expectations

    def var_decl(self):
        tok = self.ident("location name")
        self.expect("=")
        return tok, Location(tok.text, self.integer())

    def protocol_block(self):
        self.expect("protocols")
        self.expect("{")
        depth = 1
        body = []
        while True:
            t = self.tok
            if t.kind == "eof":
                raise self.error("unterminated 'protocols' block")
            if t.text == "{":
                depth += 1
            elif t.text == "}":
                depth -= 1
                if depth == 0:
                    self.advance()
                    break
            body.append(self.advance())
        return ProtocolBlock(tuple(body))

    def thread(self):
        self.expect("thread")
        name_tok = self.ident("thread name")
        self.expect("{")
        body = []
        while not self.peek("}"):
            if self.tok.kind == "eof":
                raise self.error("unterminated thread body")
            body.append(self.statement())
        self.expect("}")
        return name_tok, body

    def expr(self):
        if self.tok.kind == "int" or self.peek("-"):
            return self.integer(), None
        tok = self.ident("value or register")
        return Reg(tok.text), tok

    def rmw_call(self):
        self.expect("rmw")
        self.expect("(")
        loc_tok = self.ident("location")
        self.expect(",")
        expected = self.expr()
        self.expect(",")
        new = self.expr()
        self.expect(")")
        return loc_tok, expected, new

    def statement(self):
        if self.tok.text in ("if", "while", "for"):
            raise self.error("control flow is not supported; thread bodies are straight-line")
        if self.peek("rmw"):
            call = self.rmw_call()
            self.expect(";")
            return ("rmw", None, call)
        lhs = self.ident("statement")
        self.expect(":=")
        if self.peek("rmw"):
            call = self.rmw_call()
            self.expect(";")
            return ("rmw", lhs, call)
        rhs = self.expr()
        self.expect(";")
        return ("assign", lhs, rhs)

    def expectation(self):
        polarity = self.advance().text
        self.expect("{")
        clause = [self.equality()]
        while self.peek("&&"):
            self.advance()
            clause.append(self.equality())
        self.expect("}")
        return polarity, clause

    def equality(self):
        tok = self.ident("register")
        self.expect("==")
        return tok, self.integer()


def _build(name, locations, protocols, raw_threads, raw_expectations):
    loc_names = {loc.name for loc in locations}
    thread_names = {}
    reg_owner = {}

    def err(msg, tok):
        return LitmusSyntaxError(msg, tok.line, tok.col)

    # Pass 1: thread names and the registers each thread assigns.
    for idx, (name_tok, body) in enumerate(raw_threads):
        if name_tok.text in thread_names:
            raise err(f"thread {name_tok.text!r} declared twice", name_tok)
        if name_tok.text in loc_names:
            raise err(f"thread name {name_tok.text!r} clashes with a location", name_tok)
        thread_names[name_tok.text] = idx
        for kind, lhs, _ in body:
            if lhs is None or lhs.text in loc_names:
                continue
            owner = reg_owner.setdefault(lhs.text, idx)
            if owner != idx:
                raise err(f"register {lhs.text!r} used across threads", lhs)

    used_names = set(reg_owner) | loc_names | set(thread_names)
    fresh_counter = [0]

    def fresh():
        while f"r{fresh_counter[0]}" in used_names:
            fresh_counter[0] += 1
        reg = f"r{fresh_counter[0]}"
        used_names.add(reg)
        return reg

    def operand(value, tok, idx):
        if tok is None:
            return value
        if value.name in loc_names:
            raise err(f"location {value.name!r} cannot be used as a value here", tok)
        owner = reg_owner.get(value.name)
        if owner is None:
            raise err(f"undeclared register {value.name!r}", tok)
        if owner != idx:
            raise err(f"register {value.name!r} used across threads", tok)
        return value

    threads = []
    registers = []
    for idx, (name_tok, body) in enumerate(raw_threads):
        tid = ThreadId(idx, name_tok.text)
        stmts = []
        for kind, lhs, payload in body:
            if kind == "rmw":
                loc_tok, (exp_v, exp_tok), (new_v, new_tok) = payload
                if loc_tok.text not in loc_names:
                    raise err(f"undeclared location {loc_tok.text!r}", loc_tok)
                if lhs is not None and lhs.text in loc_names:
                    raise err(f"cannot load into location {lhs.text!r}", lhs)
                stmts.append(
                    Rmw(
                        loc_tok.text,
                        operand(exp_v, exp_tok, idx),
                        operand(new_v, new_tok, idx),
                        lhs.text if lhs is not None else None,
                    )
                )
                continue
            rhs_v, rhs_tok = payload
            if lhs.text in loc_names:
                if rhs_tok is not None and rhs_v.name in loc_names:
                    # x := y on two atomics: load into a fresh register, then store it.
                    tmp = fresh()
                    reg_owner[tmp] = idx
                    stmts.append(Load(tmp, rhs_v.name))
                    stmts.append(Store(lhs.text, Reg(tmp)))
                else:
                    stmts.append(Store(lhs.text, operand(rhs_v, rhs_tok, idx)))
            else:
                if rhs_tok is None:
                    raise err(
                        f"register {lhs.text!r} must be assigned from a location", lhs
                    )
                if rhs_v.name not in loc_names:
                    if rhs_v.name in reg_owner:
                        raise err(
                            f"register {lhs.text!r} must be assigned from a location", lhs
                        )
                    raise err(f"undeclared location {rhs_v.name!r}", rhs_tok)
                stmts.append(Load(lhs.text, rhs_v.name))
        threads.append(Thread(tid, tuple(stmts)))
    for reg, owner in sorted(reg_owner.items(), key=lambda kv: (kv[1], kv[0])):
        registers.append(Register(reg, owner))

    expectations = []
    for polarity, clause in raw_expectations:
        pairs = []
        for tok, value in clause:
            if tok.text not in reg_owner:
                raise err(f"expectation mentions undeclared register {tok.text!r}", tok)
            pairs.append((tok.text, value))
        expectations.append(Expectation(polarity, tuple(pairs)))

    return LitmusProgram(
        name=name,
        locations=tuple(locations),
        threads=tuple(threads),
        expectations=tuple(expectations),
        declared_protocols=protocols,
        registers=tuple(registers),
    )


def parse_litmus(source):
    """Parse and validate litmus text, returning a :class:`LitmusProgram`."""
    parser = _Parser(source)
    return _build(*parser.program())


def free_registers(program):
    """Registers written by loads or rmw results, as a frozenset of Register."""
    out = set()
    for th in program.threads:
        for st in th.body:
            if isinstance(st, Load):
                out.add(Register(st.dst, th.tid.index))
            elif isinstance(st, Rmw) and st.result is not None:
                out.add(Register(st.result, th.tid.index))
    return frozenset(out)


def format_program(program):
    """Render *program* back into litmus syntax (parses to the same AST)."""
    lines = [f"test {program.name}"]
    lines.append(
        "vars " + ", ".join(f"{loc.name}={loc.initial_value}" for loc in program.locations)
    )
    if program.declared_protocols is not None:
        lines.append("protocols { " + program.declared_protocols.text() + " }")
    for th in program.threads:
        body = " ".join(f"{st};" for st in th.body)
        lines.append(f"thread {th.tid.name} {{ {body} }}" if body else f"thread {th.tid.name} {{ }}")
    for exp in program.expectations:
        lines.append(str(exp))
    return "\n".join(lines) + "\n"
