"""Brute-force axiomatic reference: SC-per-location (coherence) only.

For each location, every reads-from map and every modification order over
its writes (initial write first) is tried; a combination is kept when
``po-loc | rf | mo | fr`` is acyclic.  Locations do not constrain each
other, so the outcome set is the product of the per-location results.

Two shortcuts keep this tractable; neither changes the answer.  Orders
that put a write before an earlier write of the same thread are never
generated (they close a two-edge cycle with po-loc).  Reads are assigned one
at a time, and a partial assignment is dropped once its edges hold a cycle.

Only programs with literal stores and no rmw are supported.
"""

from __future__ import annotations

import itertools
from dataclasses import dataclass

from .lang import Load, Reg, Rmw, Store

__all__ = ["Event", "OracleError", "axiomatic_outcomes", "events_of"]


class OracleError(ValueError):
    pass


@dataclass(frozen=True)
class Event:
    id: int
    thread: int  # -1 for Init
    kind: str  # "W" | "R" | "Init"
    location: str
    value: int | None  # written value; None for reads
    po_index: int
    register: str | None = None


def events_of(program):
    events = []
    for loc in program.locations:
        events.append(Event(len(events), -1, "Init", loc.name, loc.initial_value, -1))
    for th in program.threads:
        for i, st in enumerate(th.body):
            if isinstance(st, Rmw):
                raise OracleError("rmw statements are outside the oracle's fragment")
            if isinstance(st, Store):
                if isinstance(st.value, Reg):
                    raise OracleError(f"register-valued store `{st}` is outside the oracle's fragment")
                events.append(Event(len(events), th.tid.index, "W", st.loc, st.value, i))
            elif isinstance(st, Load):
                events.append(Event(len(events), th.tid.index, "R", st.loc, None, i, st.dst))
    return events


def _acyclic(nodes, edges):
    succ = {n: [] for n in nodes}
    for a, b in edges:
        succ[a].append(b)
    WHITE, GREY, BLACK = 0, 1, 2
    color = dict.fromkeys(nodes, WHITE)

    def visit(n):
        color[n] = GREY
        for m in succ[n]:
            if color[m] == GREY:
                return False
            if color[m] == WHITE and not visit(m):
                return False
        color[n] = BLACK
        return True

    return all(color[n] != WHITE or visit(n) for n in nodes)


def _location_outcomes(events, x):
    init = next(e for e in events if e.kind == "Init" and e.location == x)
    writes = [e for e in events if e.kind == "W" and e.location == x]
    reads = [e for e in events if e.kind == "R" and e.location == x]
    accesses = [e for e in events if e.kind in ("W", "R") and e.location == x]
    nodes = [init.id] + [e.id for e in accesses]
    po_loc = [
        (a.id, b.id)
        for a, b in itertools.permutations(accesses, 2)
        if a.thread == b.thread and a.po_index < b.po_index
    ]
    threads = sorted({w.thread for w in writes})
    results = set()
    for perm in _interleavings([[w for w in writes if w.thread == t] for t in threads]):
        mo_seq = [init] + list(perm)
        mo = [(a.id, b.id) for a, b in itertools.combinations(mo_seq, 2)]
        base = po_loc + mo
        # Every final edge set contains this one; a cycle here rules out all rf maps.
        if not _acyclic(nodes, base):
            continue
        _assign_reads(nodes, base, mo_seq, reads, 0, [], results)
    return results


def _interleavings(chains):
    chains = [c for c in chains if c]
    if not chains:
        yield ()
        return
    for k, chain in enumerate(chains):
        rest = chains[:k] + [chain[1:]] + chains[k + 1 :]
        for tail in _interleavings(rest):
            yield (chain[0],) + tail


def _assign_reads(nodes, edges, mo_seq, reads, k, sources, results):
    # Backtracking over rf; each prefix adds rf and fr edges for one more read.
    if k == len(reads):
        results.add(tuple((r.register, src.value) for src, r in zip(sources, reads)))
        return
    r = reads[k]
    for i, src in enumerate(mo_seq):
        extra = [(src.id, r.id)] + [(r.id, w.id) for w in mo_seq[i + 1 :]]
        if _acyclic(nodes, edges + extra):
            _assign_reads(nodes, edges + extra, mo_seq, reads, k + 1, sources + [src], results)


def axiomatic_outcomes(program):
    """Set of register valuations (sorted ``((reg, value), ...)`` tuples)."""
    events = events_of(program)
    per_location = [_location_outcomes(events, loc.name) for loc in program.locations]
    out = set()
    for combo in itertools.product(*per_location):
        regs = {}
        for part in combo:
            regs.update(part)
        out.add(tuple(sorted(regs.items())))
    return out
