"""Verify relaxed-atomics litmus tests against per-thread write protocols."""

from .consistency import check_all, check_cc1, check_cc2, check_cc3, check_cc4
from .explorer import (
    ExploreOptions,
    OutcomeSet,
    Report,
    ResourceLimitExceeded,
    check_expectations,
    explore,
    query,
    replay,
)
from .lang import LitmusProgram, LitmusSyntaxError, format_program, parse_litmus
from .oracle import axiomatic_outcomes
from .protocol import Protocol, ProtocolError, ProtocolTable, StateId, resolve_protocols

__version__ = "0.1.0"

__all__ = [
    "ExploreOptions",
    "LitmusProgram",
    "LitmusSyntaxError",
    "OutcomeSet",
    "Protocol",
    "ProtocolError",
    "ProtocolTable",
    "Report",
    "ResourceLimitExceeded",
    "StateId",
    "axiomatic_outcomes",
    "check_all",
    "check_cc1",
    "check_cc2",
    "check_cc3",
    "check_cc4",
    "check_expectations",
    "explore",
    "format_program",
    "parse_litmus",
    "query",
    "replay",
    "resolve_protocols",
]
