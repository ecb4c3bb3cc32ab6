"""Consistency checks CC1-CC4 over verification states.

Bottom view entries (no protocol) are skipped everywhere.
"""

from __future__ import annotations

from .semantics import tau_is_acyclic

__all__ = [
    "check_cc1",
    "check_cc2",
    "check_cc3",
    "check_cc4",
    "check_tau_acyclic",
    "check_all",
]


def check_cc1(state, table):
    """Every thread's own view of its protocols sits in an accepting state."""
    for (t, x), row in state.views.items():
        own = row[t] if t < len(row) else None
        if own is not None and own not in table.get(t, x).accepting:
            return False
    return True


def check_cc2(state, table, owners=None):
    """Speculation about another thread's writes never overtakes its real progress.

    For every ``t``, ``t'`` and ``x``: ``L_x^t(t') ->* L_x^t'(t')``.  With
    ``owners`` given, only threads ``t'`` in that collection are checked; the
    explorer passes the threads whose pass has finished, because an
    unfinished owner's view is still moving.
    """
    for (t, x), row in state.views.items():
        for t2, s in enumerate(row):
            if s is None or t2 == t:
                continue
            if owners is not None and t2 not in owners:
                continue
            actual = state.views[(t2, x)][t2]
            if not table.get(t2, x).leq(s, actual):
                return False
    return True


def check_cc3(state):
    """No state is consumed by two successful rmws."""
    return all(n <= 1 for n in state.sigma.values())


def check_cc4(state, table):
    """At most one initial state per location is consumed by a successful rmw."""
    used = {}
    for s, n in state.sigma.items():
        if n == 1 and s in table.initial_states(s.location):
            used[s.location] = used.get(s.location, 0) + 1
    return all(n <= 1 for n in used.values())


def check_tau_acyclic(state):
    """The observed modification order of every location is a strict order."""
    return all(tau_is_acyclic(pairs) for pairs in state.tau.values())


def check_all(state, table):
    return (
        check_cc1(state, table)
        and check_cc2(state, table)
        and check_cc3(state)
        and check_cc4(state, table)
    )
