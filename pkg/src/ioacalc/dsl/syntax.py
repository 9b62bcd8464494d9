"""Syntax tree of ``.ioa`` documents.

Nodes compare structurally; source spans are carried along but ignored by
equality so that a re-parsed canonical text equals the original tree.
"""
from __future__ import annotations

from dataclasses import dataclass, field
from typing import Union


@dataclass(frozen=True)
class Span:
    start: int  # byte offset, inclusive
    end: int  # byte offset, exclusive
    line: int  # 1-based
    column: int  # 1-based

    def __str__(self) -> str:
        return f"{self.line}:{self.column}"

    def cover(self, other: "Span") -> "Span":
        return Span(self.start, max(self.end, other.end), self.line, self.column)


def _span():
    return field(default=None, compare=False, repr=False)


@dataclass(frozen=True)
class Diagnostic:
    message: str
    span: Span
    kind: str = "syntax"  # lexical | syntax | resolution
    source: str = ""

    def __str__(self) -> str:
        where = f"{self.source}:{self.span}" if self.source else str(self.span)
        return f"{where}: {self.kind} error: {self.message}"


# -- automata -----------------------------------------------------------------


@dataclass(frozen=True)
class Item:
    """``component.symbol`` inside a transition vector."""

    component: str
    symbol: str
    span: Span = _span()


@dataclass(frozen=True)
class TransitionDecl:
    label: str
    src: str
    dst: str
    inputs: tuple = ()  # of Item; empty means eps
    outputs: tuple = ()
    guard: str = ""
    span: Span = _span()


@dataclass(frozen=True)
class ComponentDecl:
    name: str
    symbols: tuple
    span: Span = _span()


@dataclass(frozen=True)
class AcceptDecl:
    kind: str  # finite | muller
    sets: tuple  # finite: one set; muller: the family
    span: Span = _span()


@dataclass(frozen=True)
class AutomatonDecl:
    name: str
    states: tuple = ()
    initial: str | None = None
    accept: AcceptDecl | None = None
    inputs: tuple = ()
    outputs: tuple = ()
    transitions: tuple = ()
    span: Span = _span()
    kind = "automaton"


# -- systems and functions ----------------------------------------------------


@dataclass(frozen=True)
class MapEntry:
    state: object
    input: object  # None for eps
    next_state: object
    output: object
    span: Span = _span()


@dataclass(frozen=True)
class SystemDecl:
    name: str
    states: tuple = ()
    initial: object = None
    inputs: tuple = ()
    outputs: tuple = ()
    clocked: bool = False
    maps: tuple = ()
    span: Span = _span()
    kind = "system"


@dataclass(frozen=True)
class FunctionDecl:
    name: str
    params: tuple
    body: str
    span: Span = _span()
    kind = "function"


# -- protocols, rules, processes ----------------------------------------------


@dataclass(frozen=True)
class ChannelDecl:
    name: str
    src_role: str
    src_component: str
    dst_role: str
    dst_component: str
    span: Span = _span()
    kind = "channel"


@dataclass(frozen=True)
class ProtocolDecl:
    name: str
    roles: tuple
    channels: tuple
    tree: bool = False
    span: Span = _span()
    kind = "protocol"


@dataclass(frozen=True)
class GuardDecl:
    role: str
    op: str  # in | not in | = | !=
    states: tuple
    span: Span = _span()


@dataclass(frozen=True)
class RuleDecl:
    name: str
    guards: tuple = ()
    on: str | None = None
    forbid: tuple = ()
    span: Span = _span()


@dataclass(frozen=True)
class RulesDecl:
    name: str
    rules: tuple
    span: Span = _span()
    kind = "rules"


@dataclass(frozen=True)
class ProcessDecl:
    name: str
    roles: tuple
    rule_sets: tuple = ()
    bindings: tuple = ()  # (role, counterparty)
    span: Span = _span()
    kind = "process"


Declaration = Union[AutomatonDecl, SystemDecl, FunctionDecl, ChannelDecl, ProtocolDecl, RulesDecl, ProcessDecl]

KINDS = ("automaton", "system", "function", "channel", "protocol", "rules", "process")


@dataclass(frozen=True)
class Document:
    declarations: tuple = ()

    def by_kind(self, kind: str) -> list:
        return [d for d in self.declarations if d.kind == kind]

    def find(self, kind: str, name: str):
        for d in self.declarations:
            if d.kind == kind and d.name == name:
                return d
        return None
