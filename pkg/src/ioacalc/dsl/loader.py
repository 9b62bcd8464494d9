"""Resolve parsed documents into automata, systems, protocols, rules and processes.

Resolution runs after every file is parsed, so declarations may refer to
names declared later or in another file.  Each faulty declaration yields a
spanned diagnostic and is left out; the rest of the model stays usable.
"""
from __future__ import annotations

from dataclasses import dataclass, field
from pathlib import Path
from typing import Iterable

from ..automata import EPS, EPS_NAME, NIOA, Alphabet, Finite, Muller, Transition, doc_class
from ..channels import DEFAULT_CBR_CAP, Protocol, build_protocol
from ..coordination import CoordinationRule, Guard, ProcessSpec, process_from_roles
from ..expr import ExprError, compile_function
from ..systems import SystemSpec, SystemSpecError
from .parser import parse
from .syntax import (
    AutomatonDecl,
    ChannelDecl,
    Diagnostic,
    Document,
    FunctionDecl,
    ProcessDecl,
    ProtocolDecl,
    RulesDecl,
    SystemDecl,
)

WILDCARD = "*"


class ResolutionError(Exception):
    def __init__(self, diagnostics):
        super().__init__("\n".join(str(d) for d in diagnostics))
        self.diagnostics = list(diagnostics)


class _Bad(Exception):
    def __init__(self, message, span):
        self.message = message
        self.span = span


@dataclass
class Model:
    automata: dict = field(default_factory=dict)
    systems: dict = field(default_factory=dict)
    functions: dict = field(default_factory=dict)
    channels: dict = field(default_factory=dict)
    protocols: dict = field(default_factory=dict)
    rule_sets: dict = field(default_factory=dict)
    processes: dict = field(default_factory=dict)
    decls: dict = field(default_factory=dict)  # (kind, name) -> declaration

    def kinds_of(self, name: str) -> list:
        return [k for (k, n) in self.decls if n == name]

    def protocol(self, name: str, *, tree: bool = False, cap: int = DEFAULT_CBR_CAP) -> Protocol:
        d = self.protocols[name]
        roles = [self.automata[r] for r in d.roles]
        chans = []
        for c in d.channels:
            ch = self.channels[c]
            chans.append((f"{ch.src_role}.{ch.src_component}", f"{ch.dst_role}.{ch.dst_component}", ch.name))
        return build_protocol(roles, chans, name=name, tree=tree or d.tree, cap=cap)

    def process(self, name: str, *, strict: bool = True) -> ProcessSpec:
        d = self.processes[name]
        roles = [self.automata[r] for r in d.roles]
        rules = [r for rs in d.rule_sets for r in self.rule_sets[rs]]
        return process_from_roles(name, roles, rules, dict(d.bindings), strict=strict)


# -- automata -----------------------------------------------------------------


def _match(pattern: str, s: str):
    """Text matched by the single ``*`` of ``pattern`` in ``s``, or None."""
    pre, _, post = pattern.partition(WILDCARD)
    if len(s) >= len(pre) + len(post) and s.startswith(pre) and s.endswith(post):
        return s[len(pre):len(s) - len(post)]
    return None


def _expand(d: AutomatonDecl, t, states, comps_in, comps_out):
    """Concrete transitions of a possibly class-level transition declaration.

    ``mode/*`` in the source ranges over the states of that mode and binds
    the rest; ``Cls(*)`` on an input ranges over the symbols of that document
    class and binds the parameter.  A ``*`` in the target or an output is
    replaced by the bound value.  The condition ``match`` keeps only
    combinations whose parameter equals the state rest.
    """
    srcs = []
    if WILDCARD in t.src:
        srcs = [(q, _match(t.src, q)) for q in states if _match(t.src, q) is not None]
    else:
        srcs = [(t.src, None)]

    in_choices = [[]]
    param = None
    for it in t.inputs:
        syms = comps_in[it.component]
        if it.symbol.endswith(f"({WILDCARD})"):
            cls = doc_class(it.symbol)[0]
            opts = [(s, doc_class(s)[1]) for s in syms if doc_class(s)[0] == cls and s != it.symbol]
            param = True
        else:
            opts = [(it.symbol, None)]
        in_choices = [prev + [(it.component, s, p)] for prev in in_choices for s, p in opts]

    out = []
    for src, rest in srcs:
        for choice in in_choices:
            bound = next((p for _, _, p in choice if p is not None), None)
            if t.guard == "match" and param and rest is not None and bound != rest:
                continue
            dst = t.dst.replace(WILDCARD, rest) if WILDCARD in t.dst and rest is not None else t.dst
            outs = []
            for it in t.outputs:
                sym = it.symbol
                if sym.endswith(f"({WILDCARD})"):
                    fill = bound if bound is not None else rest
                    if fill is None:
                        raise _Bad("output parameter '*' is not bound by the input or the source state", it.span)
                    sym = sym[: -len(f"({WILDCARD})")] + f"({fill})"
                    if sym not in comps_out[it.component]:
                        continue
                outs.append((it.component, sym))
            if len(outs) != len(t.outputs):
                continue
            out.append((src, dst, choice, outs))
    return out


def _automaton(d: AutomatonDecl) -> NIOA:
    if not d.states:
        raise _Bad(f"automaton {d.name} declares no states", d.span)
    states = list(d.states)
    state_set = set(states)
    if len(state_set) != len(states):
        raise _Bad(f"automaton {d.name} declares a state twice", d.span)
    if d.initial is None:
        raise _Bad(f"automaton {d.name} has no initial state", d.span)
    if d.initial not in state_set:
        raise _Bad(f"initial state {d.initial} is not declared", d.span)
    comps_in, comps_out = {}, {}
    for comps, decls in ((comps_in, d.inputs), (comps_out, d.outputs)):
        for c in decls:
            if c.name in comps:
                raise _Bad(f"component {c.name} declared twice", c.span)
            if EPS_NAME in c.symbols:
                raise _Bad(f"component {c.name} lists eps as a symbol", c.span)
            comps[c.name] = c.symbols
    if d.accept is None:
        acc = Finite(state_set)
    else:
        for s in d.accept.sets:
            for q in s:
                if q not in state_set:
                    raise _Bad(f"accepting state {q} is not declared", d.accept.span)
        if d.accept.kind == "finite":
            acc = Finite(d.accept.sets[0] if d.accept.sets else ())
        else:
            if any(not s for s in d.accept.sets):
                raise _Bad("empty set in Muller family", d.accept.span)
            acc = Muller(d.accept.sets)

    in_names, out_names = list(comps_in), list(comps_out)
    transitions = []
    for t in d.transitions:
        for end in (t.src, t.dst):
            if WILDCARD not in end and end not in state_set:
                raise _Bad(f"transition {t.label}: undeclared state {end}", t.span)
        for items, comps, what in ((t.inputs, comps_in, "input"), (t.outputs, comps_out, "output")):
            used = set()
            for it in items:
                if it.component not in comps:
                    raise _Bad(f"transition {t.label}: undeclared {what} channel {it.component}", it.span)
                if it.component in used:
                    raise _Bad(f"transition {t.label}: channel {it.component} used twice", it.span)
                used.add(it.component)
                if not it.symbol.endswith(f"({WILDCARD})") and it.symbol not in comps[it.component]:
                    raise _Bad(f"transition {t.label}: symbol {it.symbol} not in {it.component}", it.span)
        for src, dst, choice, outs in _expand(d, t, states, comps_in, comps_out):
            if dst not in state_set:
                raise _Bad(f"transition {t.label}: undeclared state {dst}", t.span)
            inp = [EPS] * len(in_names)
            for comp, sym, _ in choice:
                inp[in_names.index(comp)] = sym
            out = [EPS] * len(out_names)
            for comp, sym in outs:
                out[out_names.index(comp)] = sym
            guard = t.guard
            transitions.append(Transition(src, dst, tuple(inp), tuple(out), t.label, guard))
    return NIOA(
        name=d.name,
        states=tuple(states),
        inputs=tuple(Alphabet(n, comps_in[n]) for n in in_names),
        outputs=tuple(Alphabet(n, comps_out[n]) for n in out_names),
        initial=d.initial,
        acceptance=acc,
        transitions=tuple(transitions),
    )


def _system(d: SystemDecl) -> SystemSpec:
    if d.initial is None:
        raise _Bad(f"system {d.name} has no initial state", d.span)
    ins, outs = set(d.inputs), set(d.outputs)
    table = {}
    for m in d.maps:
        if m.input is EPS and not d.clocked:
            raise _Bad(f"system {d.name} is unclocked: no spontaneous activity on eps", m.span)
        if m.input is not EPS and m.input not in ins:
            raise _Bad(f"input {m.input!r} is not declared", m.span)
        if m.output is not EPS and m.output not in outs:
            raise _Bad(f"output {m.output!r} is not declared", m.span)
        if d.states and (m.state not in d.states or m.next_state not in d.states):
            raise _Bad("map uses an undeclared state", m.span)
        if (m.state, m.input) in table:
            raise _Bad(f"duplicate map entry for ({m.state!r}, {m.input!r})", m.span)
        table[(m.state, m.input)] = (m.next_state, m.output)
    try:
        return SystemSpec.from_table(table, d.initial, inputs=ins, outputs=outs, clocked=d.clocked, name=d.name)
    except (SystemSpecError, ValueError) as e:
        raise _Bad(str(e), d.span) from None


def _rules(d: RulesDecl) -> tuple:
    out = []
    names = set()
    for r in d.rules:
        if r.name in names:
            raise _Bad(f"rule {r.name} declared twice", r.span)
        names.add(r.name)
        guards = tuple(Guard(g.role, g.states, g.op in ("not in", "!=")) for g in r.guards)
        if not r.forbid:
            raise _Bad(f"rule {r.name} forbids nothing", r.span)
        out.append(CoordinationRule(r.name, guards, r.on, frozenset(r.forbid)))
    return tuple(out)


def resolve(documents, sources: Iterable[str] | None = None):
    """Build a :class:`Model` from one or more documents; returns ``(model, diagnostics)``."""
    if isinstance(documents, Document):
        documents = [documents]
    documents = list(documents)
    sources = list(sources) if sources is not None else [""] * len(documents)
    model = Model()
    errors = []
    located = []
    for doc, src in zip(documents, sources):
        for d in doc.declarations:
            key = (d.kind, d.name)
            if key in model.decls:
                errors.append(Diagnostic(f"duplicate {d.kind} {d.name}", d.span, "resolution", src))
                continue
            model.decls[key] = d
            located.append((d, src))

    def attempt(d, src, fn):
        try:
            fn(d)
        except _Bad as b:
            errors.append(Diagnostic(b.message, b.span or d.span, "resolution", src))

    for d, src in located:
        if isinstance(d, AutomatonDecl):
            attempt(d, src, lambda d: model.automata.__setitem__(d.name, _automaton(d)))
        elif isinstance(d, SystemDecl):
            attempt(d, src, lambda d: model.systems.__setitem__(d.name, _system(d)))
        elif isinstance(d, FunctionDecl):
            def fn(d):
                try:
                    model.functions[d.name] = compile_function(d.params, d.body)
                except ExprError as e:
                    raise _Bad(str(e), d.span) from None
            attempt(d, src, fn)
        elif isinstance(d, RulesDecl):
            attempt(d, src, lambda d: model.rule_sets.__setitem__(d.name, _rules(d)))

    def check_channel(d: ChannelDecl):
        for role, comp, side in ((d.src_role, d.src_component, "outputs"), (d.dst_role, d.dst_component, "inputs")):
            a = model.automata.get(role)
            if a is None:
                raise _Bad(f"channel {d.name}: unknown automaton {role}", d.span)
            if comp not in {x.name for x in getattr(a, side)}:
                kind = "output" if side == "outputs" else "input"
                raise _Bad(f"channel {d.name}: {role} has no {kind} component {comp}", d.span)
        model.channels[d.name] = d

    def check_protocol(d: ProtocolDecl):
        if not d.roles:
            raise _Bad(f"protocol {d.name} has no roles", d.span)
        for r in d.roles:
            if r not in model.automata:
                raise _Bad(f"protocol {d.name}: unknown role {r}", d.span)
        if len(set(d.roles)) != len(d.roles):
            raise _Bad(f"protocol {d.name}: role listed twice", d.span)
        for c in d.channels:
            ch = model.channels.get(c)
            if ch is None:
                raise _Bad(f"protocol {d.name}: unknown channel {c}", d.span)
            if ch.src_role not in d.roles or ch.dst_role not in d.roles:
                raise _Bad(f"protocol {d.name}: channel {c} connects a role outside the protocol", d.span)
        model.protocols[d.name] = d

    def check_process(d: ProcessDecl):
        if not d.roles:
            raise _Bad(f"process {d.name} has no roles", d.span)
        for r in d.roles:
            if r not in model.automata:
                raise _Bad(f"process {d.name}: unknown role {r}", d.span)
        for rs in d.rule_sets:
            if rs not in model.rule_sets:
                raise _Bad(f"process {d.name}: unknown rule set {rs}", d.span)
        for role, _ in d.bindings:
            if role not in d.roles:
                raise _Bad(f"process {d.name}: binding for role {role} outside the process", d.span)
        model.processes[d.name] = d

    for d, src in located:
        if isinstance(d, ChannelDecl):
            attempt(d, src, check_channel)
    for d, src in located:
        if isinstance(d, ProtocolDecl):
            attempt(d, src, check_protocol)
        elif isinstance(d, ProcessDecl):
            attempt(d, src, check_process)
    return model, errors


def load_texts(texts: Iterable[tuple[str, str]]):
    """Parse and resolve ``(source name, text)`` pairs; returns ``(model, diagnostics)``."""
    docs, names, errors = [], [], []
    for name, text in texts:
        res = parse(text)
        errors.extend(Diagnostic(e.message, e.span, e.kind, name) for e in res.errors)
        docs.append(res.document)
        names.append(name)
    model, res_errors = resolve(docs, names)
    return model, errors + res_errors


def load_files(paths: Iterable) -> tuple:
    items = []
    for p in paths:
        p = Path(p)
        items.append((str(p), p.read_text(encoding="utf-8")))
    return load_texts(items)
