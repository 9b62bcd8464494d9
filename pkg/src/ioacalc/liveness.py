"""Acceptance reachability over the reachable graph of an automaton.

Used both for protocol consistency (on the channel-restricted automaton) and
for acceptance retention of coordinated automata.
"""
from __future__ import annotations

import itertools
from collections import deque
from dataclasses import dataclass
from typing import Callable

import networkx as nx

from .automata import (
    NIOA,
    Finite,
    accepts_at_halt,
    acceptance_parts,
    has_finite_semantics,
)


@dataclass(frozen=True)
class LivenessResult:
    order: tuple  # reachable states in BFS order
    good: frozenset  # reachable states that can still reach acceptance
    bad: tuple  # the remaining reachable states, BFS order
    deadlocks: tuple  # bad states without any continuation
    livelocks: tuple  # cyclic strongly connected sets of bad states

    @property
    def ok(self) -> bool:
        return not self.bad


def bfs_order(a: NIOA) -> tuple:
    seen = {a.initial}
    order = [a.initial]
    queue = deque([a.initial])
    while queue:
        q = queue.popleft()
        for t in a.outgoing.get(q, ()):
            if t.dst not in seen:
                seen.add(t.dst)
                order.append(t.dst)
                queue.append(t.dst)
    return tuple(order)


def _graph(a: NIOA, nodes) -> nx.DiGraph:
    g = nx.DiGraph()
    g.add_nodes_from(nodes)
    for q in nodes:
        for t in a.outgoing.get(q, ()):
            g.add_edge(q, t.dst)
    return g


def _cyclic(g: nx.DiGraph, scc) -> bool:
    if len(scc) > 1:
        return True
    (q,) = scc
    return g.has_edge(q, q)


def accepting_targets(a: NIOA, order, quiescent: Callable[[str], bool]) -> set:
    """States where an accepted run can settle.

    With only finite acceptance parts that is every quiescent state accepted at
    halt.  Otherwise a run settles either by halting in an accepting quiescent
    state, or by cycling inside a strongly connected set whose per-factor
    infinity sets satisfy every acceptance part.
    """
    if has_finite_semantics(a):
        return {q for q in order if quiescent(q) and accepts_at_halt(a, q)}

    targets = {q for q in order if not a.outgoing.get(q) and quiescent(q) and accepts_at_halt(a, q)}
    parts = acceptance_parts(a)

    def comp(q, k):
        return q if k is None else a.components[q][k]

    choices = [
        [None] if isinstance(part, Finite) else sorted(part.family, key=sorted)
        for part, _ in parts
    ]
    full = _graph(a, order)
    for pick in itertools.product(*choices):
        allowed = []
        for q in order:
            for (part, k), m in zip(parts, pick):
                c = comp(q, k)
                if (isinstance(part, Finite) and c not in part.states) or (m is not None and c not in m):
                    break
            else:
                allowed.append(q)
        sub = full.subgraph(allowed)
        for scc in nx.strongly_connected_components(sub):
            if not _cyclic(sub, scc):
                continue
            # states were restricted to each chosen set, so equality is the only open question
            if all(
                m is None or frozenset(comp(q, k) for q in scc) == m
                for (part, k), m in zip(parts, pick)
            ):
                targets |= scc
    return targets


def analyze(a: NIOA, quiescent: Callable[[str], bool] = lambda q: True) -> LivenessResult:
    order = bfs_order(a)
    targets = accepting_targets(a, order, quiescent)
    g = _graph(a, order)
    good = set(targets)
    rev = g.reverse(copy=False)
    queue = deque(targets)
    while queue:
        q = queue.popleft()
        for p in rev.successors(q):
            if p not in good:
                good.add(p)
                queue.append(p)
    bad = tuple(q for q in order if q not in good)
    deadlocks = tuple(q for q in bad if not a.outgoing.get(q))
    rank = {q: i for i, q in enumerate(order)}
    sub = g.subgraph(bad)
    livelocks = [
        tuple(sorted(scc, key=rank.__getitem__))
        for scc in nx.strongly_connected_components(sub)
        if _cyclic(sub, scc)
    ]
    livelocks.sort(key=lambda c: rank[c[0]])
    return LivenessResult(order, frozenset(good), bad, deadlocks, tuple(livelocks))


def cycle_through(a: NIOA, start: str, within) -> tuple:
    """Shortest transition cycle from ``start`` back to itself, staying inside ``within``."""
    within = set(within)
    parent = {}
    queue = deque()
    for t in a.outgoing.get(start, ()):
        if t.dst == start:
            return (t,)
        if t.dst in within and t.dst not in parent:
            parent[t.dst] = t
            queue.append(t.dst)
    while queue:
        q = queue.popleft()
        for t in a.outgoing.get(q, ()):
            if t.dst == start:
                path = [t]
                while q != start:
                    path.append(parent[q])
                    q = parent[q].src
                return tuple(reversed(path))
            if t.dst in within and t.dst not in parent:
                parent[t.dst] = t
                queue.append(t.dst)
    return ()
