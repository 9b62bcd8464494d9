"""Shannon channels, channel-based restricted (CBR) execution and protocol checks.

A channel ``(k, l)`` identifies output component ``k`` with input component
``l`` of the same (product) automaton.  A character emitted on ``k`` must be
consumed at ``l`` by the very next transition; while nothing is pending on a
channel, the next transition must leave ``l`` empty.  The pending character
is reified as part of the CBR state so the restricted automaton is finite and
can be explored exhaustively.
"""
from __future__ import annotations

from collections import deque
from dataclasses import dataclass, field
from functools import cached_property
from typing import Iterable, Sequence

import networkx as nx

from . import liveness
from .automata import (
    EPS,
    NIOA,
    Conjunction,
    StateCapExceeded,
    Transition,
    shortest_path,
    weakly_synchronized_product,
)
from .report import FAIL, PASS, UNKNOWN, CheckReport, Witness

DEFAULT_CBR_CAP = 10**5


class ChannelError(Exception):
    pass


class ChannelTypeError(ChannelError):
    pass


class OpenCoupling(ChannelError):
    pass


class NotLinearExecutable(ChannelError):
    pass


@dataclass(frozen=True)
class ShannonChannel:
    out_component: int
    in_component: int
    name: str = ""


def channel(base: NIOA, out_name: str, in_name: str, name: str = "") -> ShannonChannel:
    """Channel between named components, e.g. ``channel(p, "buyer.order", "seller.order")``."""
    return ShannonChannel(base.output_index(out_name), base.input_index(in_name), name or f"{out_name}->{in_name}")


def _vector_linear(vec) -> bool:
    return sum(s is not EPS for s in vec) <= 1


def is_linear_executable(x) -> bool:
    """At most one non-empty component in every input and every output vector."""
    transitions = x.as_nioa().transitions if isinstance(x, CBRAutomaton) else x.transitions
    return all(_vector_linear(t.inp) and _vector_linear(t.out) for t in transitions)


@dataclass(frozen=True)
class CBRStep:
    src: tuple
    dst: tuple
    transition: Transition


@dataclass(frozen=True, eq=False)
class CBRAutomaton:
    """Reachable part of ``base`` under channel-restricted execution.

    A configuration is ``(base state, pending)`` where ``pending`` is a sorted
    tuple of ``(channel index, symbol)``.
    """

    base: NIOA
    channels: tuple
    initial: tuple
    configs: tuple
    steps: tuple
    tree: bool = False
    capped: bool = False

    @cached_property
    def successors(self) -> dict:
        out: dict[tuple, list] = {c: [] for c in self.configs}
        for s in self.steps:
            out[s.src].append(s)
        return {c: tuple(v) for c, v in out.items()}

    def channel_name(self, ci: int) -> str:
        ch = self.channels[ci]
        return ch.name or f"c{ci}"

    def config_id(self, cfg: tuple) -> str:
        q, pending = cfg
        if not pending:
            return q
        return q + "[" + ",".join(f"{self.channel_name(ci)}={s}" for ci, s in pending) + "]"

    @cached_property
    def by_id(self) -> dict:
        return {self.config_id(c): c for c in self.configs}

    def pending_of(self, cid: str) -> tuple:
        return self.by_id[cid][1]

    @cached_property
    def _nioa(self) -> NIOA:
        b = self.base
        if b.factors:
            factors, parts = b.factors, b.acceptance.parts
            comps = {self.config_id(c): b.components[c[0]] for c in self.configs}
        else:
            factors, parts = (b.name,), (b.acceptance,)
            comps = {self.config_id(c): (c[0],) for c in self.configs}
        ts = []
        for s in self.steps:
            t = s.transition
            ts.append(Transition(self.config_id(s.src), self.config_id(s.dst), t.inp, t.out, t.label, t.guard))
        return NIOA(
            name=b.name,
            states=tuple(comps),
            inputs=b.inputs,
            outputs=b.outputs,
            initial=self.config_id(self.initial),
            acceptance=Conjunction(parts),
            transitions=tuple(ts),
            factors=factors,
            components=comps,
        )

    def as_nioa(self) -> NIOA:
        """The CBR automaton as a plain NIOA whose states are configuration ids."""
        return self._nioa


def cbr_successor(channels: Sequence[ShannonChannel], t: Transition, pending: tuple, tree: bool = False):
    """Pending map after taking ``t`` under the channel rules, or None if ``t`` may not fire."""
    waiting = dict(pending)
    consumed = None
    for ci, ch in enumerate(channels):
        sym = t.inp[ch.in_component]
        if ci in waiting:
            if sym == waiting[ci]:
                if consumed is not None:
                    return None
                consumed = ci
            elif sym is not EPS:
                return None
            elif not tree:
                return None
        elif sym is not EPS:
            if any(c2 in waiting and channels[c2].in_component == ch.in_component and waiting[c2] == sym
                   for c2 in range(len(channels))):
                continue
            return None
    if waiting and consumed is None:
        return None
    if consumed is not None:
        del waiting[consumed]
    for ci, ch in enumerate(channels):
        o = t.out[ch.out_component]
        if o is not EPS:
            if ci in waiting:
                return None
            waiting[ci] = o
    return tuple(sorted(waiting.items()))


def attach_channels(
    base: NIOA,
    channels: Iterable[ShannonChannel],
    *,
    tree: bool = False,
    cap: int = DEFAULT_CBR_CAP,
    truncate: bool = False,
) -> CBRAutomaton:
    """Build the CBR automaton of ``base`` for the given channels.

    Non-linear-executable bases are refused unless ``tree`` is set; then every
    order of the forced receives is explored.  Exceeding ``cap`` configurations
    raises :class:`StateCapExceeded`, or with ``truncate`` returns a partial
    automaton flagged ``capped``.
    """
    channels = tuple(channels)
    for ch in channels:
        out_a = base.outputs[ch.out_component]
        in_a = base.inputs[ch.in_component]
        if not out_a.symbols <= in_a.symbols:
            extra = ", ".join(sorted(out_a.symbols - in_a.symbols))
            raise ChannelTypeError(f"channel {ch.name or (ch.out_component, ch.in_component)}: "
                                   f"{out_a.name} emits {extra} not accepted by {in_a.name}")
    if not tree and not is_linear_executable(base):
        raise NotLinearExecutable(f"{base.name} is tree-executable; pass tree=True to explore it")

    start = (base.initial, ())
    seen = {start}
    order = [start]
    steps = []
    queue = deque([start])
    capped = False
    while queue:
        cfg = queue.popleft()
        q, pending = cfg
        for t in base.outgoing.get(q, ()):
            nxt_pending = cbr_successor(channels, t, pending, tree)
            if nxt_pending is None:
                continue
            nxt = (t.dst, nxt_pending)
            if nxt not in seen:
                if len(seen) >= cap:
                    if not truncate:
                        raise StateCapExceeded(cap, "CBR states")
                    capped = True
                    continue
                seen.add(nxt)
                order.append(nxt)
                queue.append(nxt)
            steps.append(CBRStep(cfg, nxt, t))
    return CBRAutomaton(base, channels, start, tuple(order), tuple(steps), tree, capped)


# -- protocols ----------------------------------------------------------------


@dataclass(frozen=True, eq=False)
class Protocol:
    name: str
    roles: tuple
    channels: tuple
    base: NIOA
    cbr: CBRAutomaton
    warnings: tuple = field(default=())

    @property
    def role_names(self) -> tuple:
        return tuple(r.name for r in self.roles)


def _resolve_channel(base: NIOA, c) -> ShannonChannel:
    if isinstance(c, ShannonChannel):
        return c
    out_name, in_name, *rest = c
    return channel(base, out_name, in_name, rest[0] if rest else "")


def build_protocol(
    roles: Sequence[NIOA],
    channels: Iterable,
    *,
    name: str = "protocol",
    tree: bool = False,
    cap: int = DEFAULT_CBR_CAP,
) -> Protocol:
    """Close the product of ``roles`` with ``channels``.

    Channels are :class:`ShannonChannel` values or ``(out, in[, name])`` pairs
    of qualified component names such as ``"buyer.order"``.
    """
    base = weakly_synchronized_product(roles, name=name)
    chans = tuple(_resolve_channel(base, c) for c in channels)
    wired_in = {c.in_component for c in chans}
    wired_out = {c.out_component for c in chans}
    for k, a in enumerate(base.inputs):
        if k not in wired_in:
            raise OpenCoupling(f"open coupling: input component {a.name} is not connected")
    for k, a in enumerate(base.outputs):
        if k not in wired_out:
            raise OpenCoupling(f"open coupling: output component {a.name} is not connected")

    warnings = []
    if len(roles) == 1:
        warnings.append("degenerate: single-party protocol")
    for c in chans:
        src = base.outputs[c.out_component].name.split(".")[0]
        dst = base.inputs[c.in_component].name.split(".")[0]
        if src == dst and len(roles) > 1:
            warnings.append(f"role {src} is coupled to itself by {c.name}")
    if not is_linear_executable(base):
        if not tree:
            raise NotLinearExecutable(
                f"protocol {name} is tree-executable; results would depend on the execution strategy"
            )
        warnings.append("tree-executable: all orders of forced receives are explored")
    cbr = attach_channels(base, chans, tree=tree, cap=cap, truncate=True)
    return Protocol(name, tuple(roles), chans, base, cbr, tuple(warnings))


def _unknown(check: str, p: Protocol) -> CheckReport:
    return CheckReport(check, p.name, UNKNOWN, explored=len(p.cbr.configs), capped=True,
                       automaton=p.cbr.as_nioa())


def check_well_formed(p: Protocol) -> CheckReport:
    """Safety: every character pending on a channel has a receiving transition."""
    cbr = p.cbr
    if cbr.capped:
        return _unknown("wellformed", p)
    a = cbr.as_nioa()
    bad = []
    for cfg in cbr.configs:
        for ci, sym in cfg[1]:
            l = cbr.channels[ci].in_component
            if not any(s.transition.inp[l] == sym for s in cbr.successors[cfg]):
                bad.append((cfg, ci, sym))
    if not bad:
        return CheckReport("wellformed", p.name, PASS, explored=len(cbr.configs), automaton=a)
    order = {c: i for i, c in enumerate(cbr.configs)}
    cfg, ci, sym = min(bad, key=lambda b: order[b[0]])
    target = cbr.config_id(cfg)
    path = shortest_path(a, lambda q: q == target)
    w = Witness("unreceived", path, (),
                f"{cbr.channel_name(ci)}={sym} pending at {cfg[0]} has no receiving transition")
    return CheckReport("wellformed", p.name, FAIL, (w,), explored=len(cbr.configs), automaton=a)


def _pending_cycles(cbr: CBRAutomaton, a: NIOA) -> list:
    """Cycles made only of states with a pending character: chains that never terminate."""
    g = nx.DiGraph()
    busy = [cbr.config_id(c) for c in cbr.configs if c[1]]
    g.add_nodes_from(busy)
    busy_set = set(busy)
    for q in busy:
        for t in a.outgoing.get(q, ()):
            if t.dst in busy_set:
                g.add_edge(q, t.dst)
    rank = {cbr.config_id(c): i for i, c in enumerate(cbr.configs)}
    cycles = []
    for scc in nx.strongly_connected_components(g):
        if len(scc) > 1 or any(g.has_edge(q, q) for q in scc):
            cycles.append(min(scc, key=rank.__getitem__))
    return sorted(cycles, key=rank.__getitem__), busy_set


def check_consistent(p: Protocol) -> CheckReport:
    """Liveness: acceptance stays reachable from every reachable state and chains terminate.

    Accepting CBR states must be quiescent (no pending character).  Reports a
    deadlock witness (a state without continuation) or a livelock witness
    (a cycle from which acceptance is unreachable), whichever is met first.
    """
    if p.cbr.capped:
        return _unknown("consistent", p)
    wf = check_well_formed(p)
    if not wf.passed:
        return CheckReport("consistent", p.name, wf.verdict, wf.witnesses, wf.explored, wf.capped,
                           ("not well formed",), automaton=wf.automaton)
    cbr = p.cbr
    a = cbr.as_nioa()
    res = liveness.analyze(a, lambda q: not cbr.pending_of(q))
    witnesses = []
    if res.deadlocks:
        q = res.deadlocks[0]
        witnesses.append(Witness("deadlock", shortest_path(a, lambda x: x == q), (),
                                 f"no continuation at {q}"))
    if res.livelocks:
        scc = res.livelocks[0]
        q = scc[0]
        witnesses.append(Witness("livelock", shortest_path(a, lambda x: x == q),
                                 liveness.cycle_through(a, q, scc),
                                 f"acceptance unreachable from cycle through {q}"))
    if res.bad and not witnesses:
        # bad states that drain into a bad region reported above; keep a generic witness
        q = res.bad[0]
        witnesses.append(Witness("livelock", shortest_path(a, lambda x: x == q), (),
                                 f"acceptance unreachable from {q}"))
    cycles, busy = _pending_cycles(cbr, a)
    if cycles:
        q = cycles[0]
        witnesses.append(Witness("unterminated-chain", shortest_path(a, lambda x: x == q),
                                 liveness.cycle_through(a, q, busy),
                                 f"interaction chain through {q} never terminates"))
    verdict = FAIL if witnesses else PASS
    return CheckReport("consistent", p.name, verdict, tuple(witnesses), len(cbr.configs), automaton=a)
