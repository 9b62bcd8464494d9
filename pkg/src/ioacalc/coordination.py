"""Coordination of one system's roles by forbidding transitions under guards.

The weakly synchronized product of a system's roles is in general not
quasi-deterministic.  Coordination rules remove transitions of the product
whenever a guard over the role states (and optionally the input document
class) holds.  A restriction is accepted only when it is quasi-deterministic,
keeps acceptance reachable from every reachable state and still projects
onto every role.
"""
from __future__ import annotations

from dataclasses import dataclass, field
from functools import cached_property
from itertools import combinations
from typing import Iterable, Mapping, Sequence

from . import liveness
from .automata import (
    EPS,
    EPS_NAME,
    NIOA,
    ProjectionMap,
    doc_class,
    isomorphic,
    project,
    quasi_determinism_violation,
    reachable_states,
    role_projection,
    shortest_path,
    trim,
    weakly_synchronized_product,
)
from .channels import Protocol, ShannonChannel, attach_channels, check_consistent, is_linear_executable
from .report import FAIL, PASS, CheckReport, Witness


class CoordinationError(Exception):
    def __init__(self, report: CheckReport):
        super().__init__(report.to_text().strip())
        self.report = report


class UnknownTransitionClass(Exception):
    pass


class SynthesisBudgetError(Exception):
    pass


class ProcessCompositionError(Exception):
    pass


@dataclass(frozen=True)
class Guard:
    """Holds when ``role`` is in one of ``states`` (or in none of them when ``negate``)."""

    role: str
    states: frozenset
    negate: bool = False

    def __post_init__(self):
        object.__setattr__(self, "states", frozenset(self.states))

    def holds(self, product: NIOA, q: str) -> bool:
        inside = product.components[q][product.factor_index(self.role)] in self.states
        return inside != self.negate


@dataclass(frozen=True)
class CoordinationRule:
    """Forbid the transitions labelled ``forbid`` (``role.transition``) while every guard holds.

    ``on`` further restricts the rule to transitions whose input document
    class matches; ``eps`` selects spontaneous transitions and None any.
    """

    name: str
    when: tuple = ()
    on: str | None = None
    forbid: frozenset = frozenset()

    def __post_init__(self):
        object.__setattr__(self, "when", tuple(self.when))
        object.__setattr__(self, "forbid", frozenset(self.forbid))

    def removes(self, product: NIOA, t) -> bool:
        if t.label not in self.forbid:
            return False
        if self.on is not None and input_class(t) != self.on:
            return False
        return all(g.holds(product, t.src) for g in self.when)


def input_class(t) -> str:
    syms = [s for s in t.inp if s is not EPS]
    if not syms:
        return EPS_NAME
    return ",".join(doc_class(s)[0] for s in syms)


def _check_rule_refs(base: NIOA, rules: Sequence[CoordinationRule]) -> None:
    labels = base.labels()
    for r in rules:
        for lab in sorted(r.forbid - labels):
            raise UnknownTransitionClass(f"rule {r.name}: unknown transition {lab}")
        for g in r.when:
            try:
                k = base.factor_index(g.role)
            except KeyError:
                raise UnknownTransitionClass(f"rule {r.name}: unknown role {g.role}") from None
            known = {c[k] for c in base.components.values()}
            for s in sorted(g.states - known):
                raise UnknownTransitionClass(f"rule {r.name}: role {g.role} has no state {s}")


@dataclass(frozen=True, eq=False)
class CoordinatedAutomaton:
    base: NIOA
    roles: tuple
    rules: tuple
    result: NIOA

    @property
    def role_names(self) -> tuple:
        return tuple(r.name for r in self.roles)

    @cached_property
    def role_projections(self) -> tuple:
        return tuple(role_projection(self.result, r.name) for r in self.roles)

    @cached_property
    def report(self) -> CheckReport:
        return check_coordinated(self)

    @property
    def ok(self) -> bool:
        return self.report.passed


def restrict(base: NIOA, rules: Sequence[CoordinationRule], name: str | None = None) -> NIOA:
    kept = [t for t in base.transitions if not any(r.removes(base, t) for r in rules)]
    return base.with_transitions(kept, name=name)


def apply_rules(
    base: NIOA,
    roles: Sequence[NIOA],
    rules: Sequence[CoordinationRule],
    *,
    strict: bool = True,
) -> CoordinatedAutomaton:
    """Remove every transition forbidden by a firing rule and verify the retention conditions.

    With ``strict`` a failed verification raises :class:`CoordinationError`
    carrying the report; otherwise the automaton is returned and its
    ``report`` tells what failed.
    """
    rules = tuple(rules)
    _check_rule_refs(base, rules)
    c = CoordinatedAutomaton(base, tuple(roles), rules, restrict(base, rules))
    if strict and not c.ok:
        raise CoordinationError(c.report)
    return c


def _path_to(a: NIOA, q: str):
    return shortest_path(a, lambda x: x == q) or ()


def check_coordinated(c: CoordinatedAutomaton) -> CheckReport:
    """Re-verify every invariant of a coordinated automaton from scratch.

    Checked in order: restriction of the base, quasi-determinism, acceptance
    retention from every reachable state, and projection onto every role.
    The first violated condition is reported with a witness path.
    """
    a, base = c.result, c.base
    name = a.name
    explored = len(reachable_states(a))

    def fail(kind, path, note, cycle=()):
        return CheckReport("coordinated", name, FAIL, (Witness(kind, tuple(path), tuple(cycle), note),),
                           explored, messages=(f"{kind} violated",), automaton=a)

    base_ts = set(base.transitions)
    same_shape = (a.states, a.inputs, a.outputs, a.initial, a.acceptance) == (
        base.states, base.inputs, base.outputs, base.initial, base.acceptance)
    extra = [t for t in a.transitions if t not in base_ts]
    if extra or not same_shape:
        note = f"transition {extra[0]} not in the base" if extra else "states, alphabets or acceptance differ from the base"
        return fail("subset", (), note)

    v = quasi_determinism_violation(a)
    if v is not None:
        q, ts = v
        labels = ", ".join(t.label for t in ts)
        return fail("quasi-determinism", _path_to(a, q), f"{q} has competing transitions {labels}")

    res = liveness.analyze(a)
    if res.bad:
        q = res.deadlocks[0] if res.deadlocks else res.bad[0]
        return fail("acceptance", _path_to(a, q), f"acceptance unreachable from {q}")

    reach = trim(a)
    for role in c.roles:
        img = project(reach, role_projection(reach, role.name), name=role.name)
        target = trim(role)
        if isomorphic(img, target, labels=True) is None:
            k = a.factor_index(role.name)
            images = {(t.src, t.label) for t in img.transitions}
            lost = [t for t in target.transitions if (t.src, t.label) not in images]
            if lost:
                t = lost[0]
                path = shortest_path(a, lambda x, t=t: a.components[x][k] == t.src) or ()
                return fail("projection", path, f"role {role.name} loses transition {t.label} at {t.src}")
            return fail("projection", (), f"projection onto {role.name} is not isomorphic to the role")
    return CheckReport("coordinated", name, PASS, (), explored, automaton=a)


# -- synthesis ----------------------------------------------------------------


@dataclass(frozen=True)
class SynthesisResult:
    status: str  # found | exhausted | budget
    rules: tuple = ()
    candidates: int = 0
    coordinated: CoordinatedAutomaton | None = field(default=None, compare=False, repr=False)


def _unit_rule(base: NIOA, k: int, t) -> CoordinationRule:
    comps = base.components[t.src]
    guards = tuple(Guard(r, {comps[i]}) for i, r in enumerate(base.factors))
    return CoordinationRule(f"r{k}", guards, None, {t.label})


def synthesize_rules(base: NIOA, roles: Sequence[NIOA], budget: int = 10**4) -> SynthesisResult:
    """Bounded search for a restriction passing :func:`check_coordinated`.

    Candidates are sets of transitions taken from the quasi-determinism
    clashes of the reachable base (removing anything else cannot repair a
    clash).  Smaller sets are tried first, in transition order.  A set that
    removes every base transition carrying some role transition is pruned
    unchecked.  The first passing set is returned as one forbid rule per
    removed transition, guarded by the exact global state.
    """
    if len(base.transitions) > budget:
        raise SynthesisBudgetError(f"product has {len(base.transitions)} transitions, budget is {budget}")
    roles = tuple(roles)
    reach = reachable_states(base)
    units = []
    for q in sorted(reach):
        groups: dict = {}
        for t in base.outgoing.get(q, ()):
            groups.setdefault(t.inp, []).append(t)
        for ts in groups.values():
            if len(ts) > 1:
                units.extend(ts)
    carriers: dict = {}
    for t in base.transitions:
        if t.src in reach:
            carriers.setdefault(t.label, set()).add(t)

    checked = 0
    for size in range(len(units) + 1):
        for combo in combinations(units, size):
            removed = set(combo)
            if any(ts <= removed for ts in carriers.values()):
                continue
            if checked >= budget:
                return SynthesisResult("budget", (), checked)
            checked += 1
            result = base.with_transitions(t for t in base.transitions if t not in removed)
            c = CoordinatedAutomaton(base, roles, (), result)
            if c.ok:
                rules = tuple(_unit_rule(base, k, t) for k, t in enumerate(combo))
                return SynthesisResult("found", rules, checked, CoordinatedAutomaton(base, roles, rules, result))
    return SynthesisResult("exhausted", (), checked)


# -- processes ----------------------------------------------------------------


@dataclass(frozen=True, eq=False)
class ProcessSpec:
    """A coordinated system plus, for each role, the counterparty it interacts with."""

    name: str
    coordinated: CoordinatedAutomaton
    bindings: Mapping = field(default_factory=dict)

    def problems(self) -> list[str]:
        out = []
        names = set(self.coordinated.role_names)
        for role in sorted(set(self.bindings) - names):
            out.append(f"binding for unknown role {role}")
        if len(set(self.bindings)) < 2 or len(set(self.bindings.values())) < 2:
            out.append("a process needs at least two roles bound to two distinct counterparties")
        return out


def compose_processes(p1: ProcessSpec, p2: ProcessSpec, via: Protocol, *, name: str | None = None) -> ProcessSpec:
    """Merge two processes interacting through ``via`` into one process.

    ``via`` must be consistent and connect one role of each process.  The
    connected roles' channel components are hidden, so their interaction
    becomes internal steps of the merged process.  When the remaining
    external interactions of both processes share a counterparty the
    processes form a closed chain and composition is rejected.
    """
    for p in (p1, p2):
        if not is_linear_executable(p.coordinated.result):
            raise ProcessCompositionError(f"process {p.name} is not linear-executable")
    if len(via.roles) != 2:
        raise ProcessCompositionError(f"protocol {via.name} must connect exactly two roles")
    names1, names2 = set(p1.coordinated.role_names), set(p2.coordinated.role_names)
    r1 = [r for r in via.role_names if r in names1]
    r2 = [r for r in via.role_names if r in names2]
    if len(r1) != 1 or len(r2) != 1 or r1 == r2:
        raise ProcessCompositionError(f"protocol {via.name} does not connect one role of {p1.name} and one of {p2.name}")
    r1, r2 = r1[0], r2[0]
    if not check_consistent(via).passed:
        raise ProcessCompositionError(f"connecting protocol {via.name} is not consistent")

    ext1 = {r: cp for r, cp in p1.bindings.items() if r != r1}
    ext2 = {r: cp for r, cp in p2.bindings.items() if r != r2}
    if not ext1 or not ext2:
        raise ProcessCompositionError("each process must keep an external interaction")
    shared = sorted(set(ext1.values()) & set(ext2.values()))
    if shared:
        raise ProcessCompositionError(f"closed chain: both processes also interact with {', '.join(shared)}")

    product = weakly_synchronized_product([p1.coordinated.result, p2.coordinated.result],
                                          name=name or f"{p1.name}+{p2.name}")
    chans = []
    for ch in via.channels:
        out_name = via.base.outputs[ch.out_component].name
        in_name = via.base.inputs[ch.in_component].name
        chans.append(ShannonChannel(product.output_index(out_name), product.input_index(in_name), ch.name))
    cbr = attach_channels(product, chans).as_nioa()
    hidden_in = {c.in_component for c in chans}
    hidden_out = {c.out_component for c in chans}
    keep_in = tuple(i for i in range(len(cbr.inputs)) if i not in hidden_in)
    keep_out = tuple(i for i in range(len(cbr.outputs)) if i not in hidden_out)
    merged = project(
        cbr,
        ProjectionMap({q: q for q in cbr.states}, keep_in, keep_out),
        drop_stutter=False,
        name=product.name,
    )
    remaining = tuple(r for r in p1.coordinated.roles + p2.coordinated.roles if r.name not in (r1, r2))
    coordinated = CoordinatedAutomaton(merged, remaining, p1.coordinated.rules + p2.coordinated.rules, merged)
    return ProcessSpec(product.name, coordinated, {**ext1, **ext2})


def process_from_roles(
    name: str,
    roles: Sequence[NIOA],
    rules: Iterable[CoordinationRule],
    bindings: Mapping,
    *,
    strict: bool = True,
) -> ProcessSpec:
    base = weakly_synchronized_product(roles, name=name)
    return ProcessSpec(name, apply_rules(base, roles, tuple(rules), strict=strict), dict(bindings))
