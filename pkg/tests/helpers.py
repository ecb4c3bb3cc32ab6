"""Shared fixtures-by-import for the test suite: litmus loading and generators."""

from __future__ import annotations

import random
from pathlib import Path

from hypothesis import strategies as st

from viewlitmus.lang import Load, Store, parse_litmus
from viewlitmus.protocol import Protocol, StateId, resolve_protocols
from viewlitmus.semantics import (
    EmptyReadSet,
    NoTransition,
    init_state,
    reset_pi,
    step_read,
    step_rmw,
    step_write,
)

LITMUS_DIR = Path(__file__).resolve().parent.parent / "litmus"

# file stem -> test name, for all thirteen shipped examples
EXAMPLES = {
    "arm-weak": "ARM-weak",
    "coh": "COH",
    "coh-c": "COH-c",
    "coh-v": "COH-V",
    "coh2": "COH2",
    "coh3": "COH3",
    "corr2": "CoRR2",
    "dcas": "dCAS",
    "lb": "LB",
    "sb": "SB",
    "2+2w": "2+2W",
    "coh-p1": "COH-p1",
    "coh-p2": "COH-p2",
}

ORACLE_FRAGMENT = ["coh", "coh-c", "coh-v", "coh2", "coh3", "corr2", "sb"]


def litmus_path(stem):
    return LITMUS_DIR / f"{stem}.lit"


def load(stem):
    program = parse_litmus(litmus_path(stem).read_text())
    return program, resolve_protocols(program)


def load_source(source):
    program = parse_litmus(source)
    return program, resolve_protocols(program)


def random_literal_source(rng, max_threads=3, max_locations=2, max_stores=3, max_loads=2,
                          values=(0, 1, 2, 3), rmw=False):
    """A random straight-line program; every store writes a literal.

    With ``rmw`` some statements become literal rmws with a result register.
    """
    locs = ["x", "y"][: rng.randint(1, max_locations)]
    lines = ["test R", "vars " + ", ".join(f"{x}=0" for x in locs)]
    reg = 0
    for t in range(rng.randint(1, max_threads)):
        ops = ["s"] * rng.randint(0, max_stores) + ["r"] * rng.randint(0, max_loads)
        if rmw:
            ops += ["c"] * rng.randint(0, 1)
        rng.shuffle(ops)
        body = []
        for op in ops:
            x = rng.choice(locs)
            if op == "s":
                body.append(f"{x} := {rng.choice(values)};")
            elif op == "r":
                body.append(f"a{reg} := {x};")
                reg += 1
            else:
                body.append(f"a{reg} := rmw({x}, {rng.choice(values)}, {rng.choice(values)});")
                reg += 1
        lines.append(f"thread T{t} {{ {' '.join(body)} }}")
    return "\n".join(lines)


@st.composite
def literal_programs(draw, rmw=False, max_threads=3):
    seed = draw(st.integers(min_value=0, max_value=2**32 - 1))
    rng = random.Random(seed)
    if rmw:
        # keep rmw programs small; the derived protocols fork on every rmw
        return random_literal_source(rng, max_threads=max_threads, max_stores=2, max_loads=1,
                                     values=(0, 1, 2), rmw=True)
    return random_literal_source(rng, max_threads=max_threads)


@st.composite
def random_trees(draw, max_states=9):
    """A valid protocol tree for thread 0 on ``x`` with random shape and labels."""
    n = draw(st.integers(min_value=1, max_value=max_states))
    states = [StateId("x", 0, i) for i in range(n)]
    value_of = {states[0]: 0}
    edges = []
    used = set()
    for i in range(1, n):
        parent = states[draw(st.integers(min_value=0, max_value=i - 1))]
        label = draw(st.integers(min_value=0, max_value=20).filter(lambda v: (parent, v) not in used))
        used.add((parent, label))
        edges.append((parent, label, states[i]))
        value_of[states[i]] = label
    accepting = frozenset(s for s in states if draw(st.booleans()))
    return Protocol(0, "x", tuple(states), states[0], tuple(edges), accepting, value_of)


def S(name):
    """``"y1_3"`` -> StateId("y", 1, 3)."""
    loc, rest = name[0], name[1:]
    t, i = rest.split("_")
    return StateId(loc, int(t), int(i))


def names(states):
    return {str(s) for s in states}


def start(stem, t):
    program, table = load(stem)
    state = init_state(table, range(len(program.threads)), program.location_names)
    return program, table, reset_pi(state, t, table)


def _successors(state, table, t, stmt):
    """(kind, new_state, source, value, success) for every enabled step."""
    if isinstance(stmt, Store):
        try:
            return [("write", step_write(state, table, t, stmt.loc, stmt.value), None, stmt.value, None)]
        except NoTransition:
            return []
    if isinstance(stmt, Load):
        try:
            return [("read", c.state, c.source, c.value, None) for c in step_read(state, table, t, stmt.loc)]
        except EmptyReadSet:
            return []
    return [
        ("rmw", c.state, c.source, c.value, c.success)
        for c in step_rmw(state, table, t, stmt.loc, stmt.expected, stmt.new)
    ]


def walk(data, src):
    """Drive one random path; yield (table, t, stmt, before, kind, after, source, value, success)."""
    program = parse_litmus(src)
    table = resolve_protocols(program)
    n = len(program.threads)
    order = data.draw(st.permutations(range(n)))
    state = init_state(table, range(n), program.location_names)
    for t in order:
        state = reset_pi(state, t, table)
        for stmt in program.threads[t].body:
            options = _successors(state, table, t, stmt)
            if not options:
                return
            kind, nxt, source, value, success = options[data.draw(st.integers(0, len(options) - 1))]
            yield table, t, stmt, state, kind, nxt, source, value, success
            state = nxt
