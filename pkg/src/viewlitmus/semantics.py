"""Verification states and the step rules for store, load and rmw.

A :class:`VerificationState` is the tuple ``<L, pi, tau, sigma>``:

* ``views[(t, x)]`` is thread ``t``'s view of location ``x``: a tuple indexed
  by thread holding the protocol state it believes that thread reached, or
  ``None`` when that thread has no protocol for ``x``.
* ``pi[x]`` is the most recently observed write to ``x`` in the current pass.
* ``tau[x]`` is the observed modification order between states of ``x``.
* ``sigma`` counts how often each state was consumed by a successful rmw.

States are never mutated; each step returns a new one.
"""

from __future__ import annotations

from dataclasses import dataclass
from types import MappingProxyType

__all__ = [
    "VerificationState",
    "NoTransition",
    "EmptyReadSet",
    "ReadChoice",
    "RmwChoice",
    "init_state",
    "reset_pi",
    "tau_plus",
    "tau_before",
    "tau_is_acyclic",
    "tau_stays_acyclic",
    "pread",
    "read_set",
    "step_write",
    "step_read",
    "step_rmw",
]


class NoTransition(Exception):
    """The writing thread's protocol has no edge for the stored value."""

    def __init__(self, thread, location, value, state):
        self.thread = thread
        self.location = location
        self.value = value
        self.state = state
        where = "no protocol" if state is None else f"state {state}"
        super().__init__(
            f"thread {thread} cannot write {value} to {location}: {where} has no such transition"
        )


class EmptyReadSet(Exception):
    """No write to the location is observable."""

    def __init__(self, thread, location):
        self.thread = thread
        self.location = location
        super().__init__(f"thread {thread} has nothing to read from {location}")


def _frozen(d):
    return MappingProxyType(dict(d))


@dataclass(frozen=True)
class VerificationState:
    views: MappingProxyType  # (t, x) -> tuple[StateId | None, ...]
    pi: MappingProxyType  # x -> StateId | None
    tau: MappingProxyType  # x -> frozenset[(StateId, StateId)]
    sigma: MappingProxyType  # StateId -> int

    def view(self, t, x):
        return self.views[(t, x)]

    def replace(self, views=None, pi=None, tau=None, sigma=None):
        return VerificationState(
            views if views is not None else self.views,
            pi if pi is not None else self.pi,
            tau if tau is not None else self.tau,
            sigma if sigma is not None else self.sigma,
        )

    def key(self):
        """Hashable canonical form."""
        return (
            tuple(sorted(self.views.items())),
            tuple(sorted(self.pi.items(), key=lambda kv: kv[0])),
            tuple(sorted((x, tuple(sorted(r))) for x, r in self.tau.items())),
            tuple(sorted(self.sigma.items())),
        )

    def __eq__(self, other):
        if not isinstance(other, VerificationState):
            return NotImplemented
        return self.key() == other.key()

    def __hash__(self):
        return hash(self.key())


@dataclass(frozen=True)
class ReadChoice:
    source: object  # StateId read from
    value: int
    state: VerificationState


@dataclass(frozen=True)
class RmwChoice:
    source: object
    value: int
    success: bool
    state: VerificationState
    written: object = None  # StateId reached by the write on success


def _locations(table, locations):
    return tuple(locations) if locations is not None else tuple(table.locations())


def init_state(table, threads, locations=None):
    """Every view points at the initial states; pi bottom, tau and sigma empty.

    ``threads`` is a sequence of thread indices (or ThreadIds).  Locations
    default to those with at least one protocol.
    """
    idx = [getattr(t, "index", t) for t in threads]
    n = max(idx) + 1 if idx else 0
    locs = _locations(table, locations)
    views = {}
    for x in locs:
        row = tuple(
            (table.get(t2, x).initial if table.get(t2, x) is not None else None)
            for t2 in range(n)
        )
        for t in idx:
            views[(t, x)] = row
    return VerificationState(
        _frozen(views),
        _frozen({x: None for x in locs}),
        _frozen({x: frozenset() for x in locs}),
        _frozen({}),
    )


def reset_pi(state, t, table):
    """Start a pass of thread ``t``: pi(x) is t's initial state of x, or bottom."""
    pi = {}
    for x in state.pi:
        p = table.get(t, x)
        pi[x] = p.initial if p is not None else None
    return state.replace(pi=_frozen(pi))


def tau_plus(pairs, a, b):
    """True iff ``(a, b)`` is in the transitive closure of ``pairs``."""
    succ = {}
    for u, v in pairs:
        succ.setdefault(u, []).append(v)
    seen = set()
    stack = list(succ.get(a, ()))
    while stack:
        n = stack.pop()
        if n == b:
            return True
        if n in seen:
            continue
        seen.add(n)
        stack.extend(succ.get(n, ()))
    return False


def tau_before(pairs, b):
    """All ``a`` with ``(a, b)`` in the transitive closure of ``pairs``."""
    pred = {}
    for u, v in pairs:
        pred.setdefault(v, []).append(u)
    out = set()
    stack = list(pred.get(b, ()))
    while stack:
        n = stack.pop()
        if n not in out:
            out.add(n)
            stack.extend(pred.get(n, ()))
    return out


def tau_is_acyclic(pairs):
    indeg = {}
    succ = {}
    for u, v in pairs:
        succ.setdefault(u, []).append(v)
        indeg[v] = indeg.get(v, 0) + 1
        indeg.setdefault(u, 0)
    ready = [n for n, d in indeg.items() if d == 0]
    seen = 0
    while ready:
        n = ready.pop()
        seen += 1
        for m in succ.get(n, ()):
            indeg[m] -= 1
            if indeg[m] == 0:
                ready.append(m)
    return seen == len(indeg)


def tau_stays_acyclic(old, new):
    """Given acyclic ``old`` and ``new`` a superset, is ``new`` still acyclic?

    Only the added pairs can close a cycle, so each is checked against the
    relation built so far.
    """
    added = new - old
    if not added:
        return True
    current = set(old)
    for a, b in added:
        if a == b or tau_plus(current, b, a):
            return False
        current.add((a, b))
    return True


def _row(state, t, x):
    try:
        return state.views[(t, x)]
    except KeyError:
        return ()


def pread(state, table, t, x):
    """States thread ``t`` could read for ``x`` before the initial-value rule."""
    t = getattr(t, "index", t)
    pi = state.pi.get(x)
    blocked = tau_before(state.tau.get(x, ()), pi) if pi is not None else set()
    out = set()
    for t2, s0 in enumerate(_row(state, t, x)):
        if t2 == t or s0 is None:
            continue
        out.update(table.protocol_of(s0).reachable(s0) - blocked)
    if pi is not None:
        out.add(pi)
    return frozenset(out)


def read_set(state, table, t, x):
    """Readable states: once a non-initial write is observed, initials drop out."""
    t = getattr(t, "index", t)
    candidates = pread(state, table, t, x)
    pi = state.pi.get(x)
    if pi is None or pi in table.initial_states(x):
        return candidates
    initials = {
        table.get(t2, x).initial for t2, s in enumerate(_row(state, t, x)) if s is not None
    }
    return candidates - initials


def _add_pair(pairs, a, b):
    if a is None or a == b:
        return pairs
    return pairs | {(a, b)}


def _with(state, t, x, row_updates, new_pi, new_pairs, sigma=None):
    row = list(state.views[(t, x)])
    for t2, s in row_updates:
        row[t2] = s
    views = dict(state.views)
    views[(t, x)] = tuple(row)
    pi = dict(state.pi)
    pi[x] = new_pi
    tau = dict(state.tau)
    tau[x] = new_pairs
    return state.replace(
        views=_frozen(views),
        pi=_frozen(pi),
        tau=_frozen(tau),
        sigma=_frozen(sigma) if sigma is not None else None,
    )


def step_write(state, table, t, x, v):
    """Store ``v`` to ``x``: follow t's own protocol edge labelled ``v``."""
    t = getattr(t, "index", t)
    cur = _row(state, t, x)[t] if _row(state, t, x) else None
    p = table.get(t, x)
    nxt = p.step(cur, v) if (p is not None and cur is not None) else None
    if nxt is None:
        raise NoTransition(t, x, v, cur)
    old_pi = state.pi.get(x)
    return _with(state, t, x, [(t, nxt)], nxt, _add_pair(state.tau[x], old_pi, nxt))


def step_read(state, table, t, x):
    """One successor per readable state, in canonical StateId order."""
    t = getattr(t, "index", t)
    choices = read_set(state, table, t, x)
    if not choices:
        raise EmptyReadSet(t, x)
    old_pi = state.pi.get(x)
    out = []
    for s in sorted(choices):
        nxt = _with(state, t, x, [(s.thread, s)], s, _add_pair(state.tau[x], old_pi, s))
        out.append(ReadChoice(s, table.value(s), nxt))
    return out


def step_rmw(state, table, t, x, expected, new):
    """Successful and failing rmw branches.

    Success reads a state holding ``expected`` and then writes ``new`` along
    t's own protocol; the read-from state is added to sigma.  Failure reads a
    state holding anything else and behaves like a load.
    """
    t = getattr(t, "index", t)
    choices = read_set(state, table, t, x)
    old_pi = state.pi.get(x)
    pairs = state.tau.get(x, frozenset())
    p = table.get(t, x)
    out = []
    for s in sorted(choices):
        value = table.value(s)
        if value == expected:
            own = _row(state, t, x)[t] if _row(state, t, x) else None
            dst = p.step(own, new) if (p is not None and own is not None) else None
            if dst is None:
                continue
            updates = [(s.thread, s), (t, dst)]
            new_pairs = _add_pair(_add_pair(pairs, old_pi, s), s, dst)
            sigma = dict(state.sigma)
            sigma[s] = sigma.get(s, 0) + 1
            nxt = _with(state, t, x, updates, dst, new_pairs, sigma)
            out.append(RmwChoice(s, value, True, nxt, dst))
        else:
            nxt = _with(state, t, x, [(s.thread, s)], s, _add_pair(pairs, old_pi, s))
            out.append(RmwChoice(s, value, False, nxt))
    return out
