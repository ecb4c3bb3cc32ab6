"""Per-thread, per-location protocol trees.

A protocol for thread ``t`` and location ``x`` is a value-labelled tree whose
edges are the values ``t`` may store to ``x``, in order.  Each state carries
the value of the write that leads into it; the root carries the location's
initial value.
"""

from __future__ import annotations

import logging
from dataclasses import dataclass, field

from .lang import Reg, Rmw, Store

log = logging.getLogger(__name__)

__all__ = [
    "StateId",
    "Protocol",
    "ProtocolTable",
    "ProtocolError",
    "UnknownStateError",
    "validate_protocol",
    "reachable",
    "leq",
    "derive_chain_protocols",
    "parse_protocol_block",
    "resolve_protocols",
]


class ProtocolError(Exception):
    """Protocol derivation, parsing or validation failure."""

    def __init__(self, message, violations=(), line=0, col=0):
        self.violations = list(violations)
        self.line = line
        self.col = col
        super().__init__(f"{line}:{col}: {message}" if line else message)


class UnknownStateError(KeyError):
    pass


@dataclass(frozen=True, order=True)
class StateId:
    """A protocol state; ``(location, thread)`` names the owning protocol."""

    location: str
    thread: int
    index: int

    def __post_init__(self):
        # States are hashed constantly during exploration.
        object.__setattr__(self, "_hash", hash((self.location, self.thread, self.index)))

    def __hash__(self):
        return self._hash

    def __str__(self):
        return f"{self.location}{self.thread}_{self.index}"

    __repr__ = __str__


@dataclass(frozen=True, eq=False)
class Protocol:
    thread: int
    location: str
    states: tuple
    initial: StateId
    edges: tuple  # ((src, value, dst), ...)
    accepting: frozenset
    value_of: dict
    names: dict = field(default_factory=dict)

    def __post_init__(self):
        children = {s: [] for s in self.states}
        for src, value, dst in self.edges:
            children.setdefault(src, []).append((value, dst))
        object.__setattr__(self, "_children", children)
        object.__setattr__(self, "_reach", {})

    @property
    def owner(self):
        return (self.thread, self.location)

    def name(self, s):
        return self.names.get(s, str(s))

    def successors(self, s):
        return self._children.get(s, ())

    def step(self, s, value):
        """Target of the edge ``s -value->``, or None."""
        for label, dst in self.successors(s):
            if label == value:
                return dst
        return None

    def reachable(self, s):
        if s not in self._children:
            raise UnknownStateError(s)
        cached = self._reach.get(s)
        if cached is None:
            seen = {s}
            stack = [s]
            while stack:
                for _, nxt in self._children.get(stack.pop(), ()):
                    if nxt not in seen:
                        seen.add(nxt)
                        stack.append(nxt)
            cached = frozenset(seen)
            self._reach[s] = cached
        return cached

    def leq(self, s, s2):
        if s2 not in self._children:
            raise UnknownStateError(s2)
        return s2 in self.reachable(s)


def reachable(p, s):
    """All states reachable from ``s`` in ``p`` (reflexive)."""
    return p.reachable(s)


def leq(p, s, s2):
    """The tree order: ``s <= s2`` iff ``s2`` is reachable from ``s``."""
    return p.leq(s, s2)


def validate_protocol(p, initial_value=None):
    """Return the list of violated protocol invariants (empty when valid)."""
    problems = []
    states = set(p.states)
    if len(states) != len(p.states):
        problems.append("duplicate state declarations")
    for s in p.states:
        if (s.location, s.thread) != (p.location, p.thread):
            problems.append(f"state {p.name(s)} belongs to another protocol")
        if s not in p.value_of:
            problems.append(f"state {p.name(s)} has no value")
    if p.initial not in states:
        problems.append(f"initial state {p.name(p.initial)} is not a state")
    for s in sorted(p.accepting - states):
        problems.append(f"accepting state {p.name(s)} is not a state")

    incoming = {s: 0 for s in states}
    labels = set()
    for src, value, dst in p.edges:
        if src not in states or dst not in states:
            problems.append(f"edge {p.name(src)} -{value}-> {p.name(dst)} uses an unknown state")
            continue
        incoming[dst] += 1
        if p.value_of.get(dst) != value:
            problems.append(
                f"edge/value mismatch: {p.name(src)} -{value}-> {p.name(dst)} "
                f"but {p.name(dst)} has value {p.value_of.get(dst)}"
            )
        if (src, value) in labels:
            problems.append(f"state {p.name(src)} has two edges labelled {value}")
        labels.add((src, value))
    for s in sorted(states):
        if s == p.initial:
            if incoming[s]:
                problems.append(f"initial state {p.name(s)} has an incoming edge")
        elif incoming[s] != 1:
            problems.append(
                f"state {p.name(s)} has {incoming[s]} incoming edges (tree requires 1)"
            )
    if p.initial in states and not problems:
        unreachable = states - p.reachable(p.initial)
        for s in sorted(unreachable):
            problems.append(f"state {p.name(s)} is unreachable from the initial state")
    if initial_value is not None and p.value_of.get(p.initial) != initial_value:
        problems.append(
            f"initial state {p.name(p.initial)} has value {p.value_of.get(p.initial)}, "
            f"location starts at {initial_value}"
        )
    return problems


class ProtocolTable:
    """Map ``(thread index, location) -> Protocol``; missing entries are bottom."""

    def __init__(self, protocols=(), source="derived", warnings=()):
        self._by_owner = {}
        for p in protocols:
            if p.owner in self._by_owner:
                raise ProtocolError(f"two protocols for thread {p.thread} on {p.location}")
            self._by_owner[p.owner] = p
        self.source = source
        self.warnings = list(warnings)
        self._initials = {}
        for p in self._by_owner.values():
            self._initials.setdefault(p.location, set()).add(p.initial)

    def __len__(self):
        return len(self._by_owner)

    def __iter__(self):
        return iter(sorted(self._by_owner.values(), key=lambda p: (p.location, p.thread)))

    def __contains__(self, owner):
        return owner in self._by_owner

    def get(self, thread, location):
        return self._by_owner.get((thread, location))

    def protocol_of(self, s):
        """Protocol owning state ``s``."""
        p = self._by_owner.get((s.thread, s.location))
        if p is None or s not in p.value_of:
            raise UnknownStateError(s)
        return p

    def value(self, s):
        return self.protocol_of(s).value_of[s]

    def initial_states(self, location):
        return frozenset(self._initials.get(location, ()))

    def locations(self):
        return sorted({p.location for p in self._by_owner.values()})

    def name(self, s):
        try:
            return self.protocol_of(s).name(s)
        except UnknownStateError:
            return str(s)


# --------------------------------------------------------------------------
# Derivation for literal stores


def _literal(expr, stmt, thread):
    if isinstance(expr, Reg):
        raise ProtocolError(
            f"register-valued store requires explicit protocol: "
            f"{thread.tid.name}: {stmt}"
        )
    return expr


def derive_chain_protocols(program):
    """Build a protocol per (thread, location) the thread writes to.

    A thread of plain literal stores gets a chain whose last state accepts.
    An rmw may fail, so it forks: one branch skips the write.  State indices
    run per thread across locations in declaration order (``x0_0, x0_1, y0_2``).
    """
    protocols = []
    for th in program.threads:
        t = th.tid.index
        counter = 0
        for loc in program.locations:
            writes = []
            for st in th.body:
                if isinstance(st, Store) and st.loc == loc.name:
                    writes.append((_literal(st.value, st, th), False))
                elif isinstance(st, Rmw) and st.loc == loc.name:
                    _literal(st.expected, st, th)
                    writes.append((_literal(st.new, st, th), True))
            if not writes:
                continue
            root = StateId(loc.name, t, counter)
            counter += 1
            states = [root]
            value_of = {root: loc.initial_value}
            edges = []
            frontier = [root]
            out = {}  # (src, value) -> dst
            for value, optional in writes:
                nxt = []
                for src in frontier:
                    dst = out.get((src, value))
                    if dst is None:
                        # A skipped rmw can meet an equal write on another branch;
                        # the sequences coincide, so the edge is shared.
                        dst = StateId(loc.name, t, counter)
                        counter += 1
                        states.append(dst)
                        value_of[dst] = value
                        edges.append((src, value, dst))
                        out[(src, value)] = dst
                    nxt.append(dst)
                merged = frontier + nxt if optional else nxt
                frontier = list(dict.fromkeys(merged))
            protocols.append(
                Protocol(
                    thread=t,
                    location=loc.name,
                    states=tuple(states),
                    initial=root,
                    edges=tuple(edges),
                    accepting=frozenset(frontier),
                    value_of=value_of,
                )
            )
    return ProtocolTable(protocols, source="derived")


# --------------------------------------------------------------------------
# Explicit protocol blocks


class _BlockParser:
    def __init__(self, tokens):
        self.tokens = list(tokens)
        self.i = 0

    @property
    def tok(self):
        return self.tokens[self.i] if self.i < len(self.tokens) else None

    def error(self, msg):
        t = self.tok or (self.tokens[-1] if self.tokens else None)
        return ProtocolError(msg, line=t.line if t else 0, col=t.col if t else 0)

    def peek(self, text):
        return self.tok is not None and self.tok.text == text

    def expect(self, text):
        if not self.peek(text):
            found = self.tok.text if self.tok else "end of block"
            raise self.error(f"expected {text!r}, found {found!r}")
        t = self.tok
        self.i += 1
        return t

    def ident(self):
        t = self.tok
        if t is None or t.kind != "ident":
            raise self.error(f"expected identifier, found {t.text if t else 'end of block'!r}")
        self.i += 1
        return t

    def integer(self):
        sign = 1
        if self.peek("-"):
            self.i += 1
            sign = -1
        t = self.tok
        if t is None or t.kind != "int":
            raise self.error("expected integer")
        self.i += 1
        return sign * int(t.text)

    def protos(self):
        out = []
        while self.tok is not None:
            out.append(self.proto())
        return out

    def proto(self):
        head = self.expect("protocol")
        thread = self.ident()
        loc = self.ident()
        self.expect("{")
        decls = []
        edges = []
        while not self.peek("}"):
            if self.tok is None:
                raise self.error("unterminated protocol")
            if self.peek("state"):
                decls.append(self.statedecl())
            else:
                edges.append(self.edge())
        self.expect("}")
        return head, thread, loc, decls, edges

    def statedecl(self):
        self.expect("state")
        name = self.ident()
        attrs = [self.attr()]
        while self.peek(","):
            self.i += 1
            attrs.append(self.attr())
        self.expect(";")
        return name, attrs

    def attr(self):
        t = self.tok
        if t is not None and t.text in ("init", "accepting"):
            self.i += 1
            return (t.text, None)
        if self.peek("val"):
            self.i += 1
            self.expect("=")
            return ("val", self.integer())
        raise self.error(f"expected state attribute, found {t.text if t else 'end of block'!r}")

    def edge(self):
        src = self.ident()
        self.expect("-")
        value = self.integer()
        self.expect("->")
        dst = self.ident()
        self.expect(";")
        return src, value, dst


def parse_protocol_block(block, program):
    """Turn a raw ``protocols`` block into Protocol objects (unvalidated)."""
    parsed = _BlockParser(block.tokens).protos()
    thread_index = {th.tid.name: th.tid.index for th in program.threads}
    loc_names = set(program.location_names)
    protocols = []
    for head, thread_tok, loc_tok, decls, edges in parsed:

        def fail(msg, tok):
            return ProtocolError(msg, line=tok.line, col=tok.col)

        if thread_tok.text not in thread_index:
            raise fail(f"unknown thread {thread_tok.text!r}", thread_tok)
        if loc_tok.text not in loc_names:
            raise fail(f"unknown location {loc_tok.text!r}", loc_tok)
        t = thread_index[thread_tok.text]
        by_name = {}
        names = {}
        value_of = {}
        accepting = set()
        initial = []
        for k, (name_tok, attrs) in enumerate(decls):
            if name_tok.text in by_name:
                raise fail(f"state {name_tok.text!r} declared twice", name_tok)
            sid = StateId(loc_tok.text, t, k)
            by_name[name_tok.text] = sid
            names[sid] = name_tok.text
            for key, val in attrs:
                if key == "init":
                    initial.append(sid)
                elif key == "accepting":
                    accepting.add(sid)
                else:
                    value_of[sid] = val
            if sid not in value_of:
                raise fail(f"state {name_tok.text!r} needs 'val'", name_tok)
        if len(initial) != 1:
            raise fail(
                f"protocol {thread_tok.text} {loc_tok.text} needs exactly one init state",
                head,
            )
        edge_list = []
        for src, value, dst in edges:
            for tok in (src, dst):
                if tok.text not in by_name:
                    raise fail(f"unknown state {tok.text!r}", tok)
            edge_list.append((by_name[src.text], value, by_name[dst.text]))
        protocols.append(
            Protocol(
                thread=t,
                location=loc_tok.text,
                states=tuple(by_name.values()),
                initial=initial[0],
                edges=tuple(edge_list),
                accepting=frozenset(accepting),
                value_of=value_of,
                names=names,
            )
        )
    return protocols


def _writers(program):
    out = set()
    for th in program.threads:
        for st in th.body:
            if isinstance(st, (Store, Rmw)):
                out.add((th.tid.index, st.loc))
    return out


def resolve_protocols(program):
    """Explicit protocols when the file declares them, else derived chains.

    Raises ProtocolError when any protocol violates the tree invariants or
    the protocols of one location disagree on the initial value.
    """
    names = {th.tid.index: th.tid.name for th in program.threads}
    if program.declared_protocols is None:
        table = derive_chain_protocols(program)
    else:
        protocols = parse_protocol_block(program.declared_protocols, program)
        table = ProtocolTable(protocols, source="explicit")
        writers = _writers(program)
        for p in table:
            if p.owner not in writers:
                msg = f"protocol {names[p.thread]} {p.location} declared but the thread never writes {p.location}"
                table.warnings.append(msg)
                log.warning(msg)
    violations = []
    for p in table:
        init = program.location(p.location).initial_value
        for problem in validate_protocol(p, init):
            violations.append(f"protocol {names[p.thread]} {p.location}: {problem}")
    if violations:
        raise ProtocolError("invalid protocols", violations)
    return table
