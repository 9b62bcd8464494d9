"""Canonical ``.ioa`` text and DOT graph export."""
from __future__ import annotations

import re

from ..automata import EPS, NIOA, Muller, acceptance_parts, accepts_at_halt, has_finite_semantics, render_vector
from ..channels import CBRAutomaton, Protocol
from ..coordination import CoordinatedAutomaton
from ..systems import SystemSpec, ordered
from .parser import FORMAT_VERSION
from .syntax import (
    AcceptDecl,
    AutomatonDecl,
    ComponentDecl,
    Item,
    MapEntry,
    TransitionDecl,
    ChannelDecl,
    Document,
    FunctionDecl,
    ProcessDecl,
    ProtocolDecl,
    RulesDecl,
    SystemDecl,
)

RESERVED = frozenset(
    "format automaton system function channel protocol rules rule process states initial accept "
    "finite muller in out when on forbid not eps roles channels bind map clocked tree".split()
)
_PLAIN_NAME = re.compile(r"[A-Za-z_][A-Za-z0-9_]*\Z")
_ATOM = r"(?:[A-Za-z_][A-Za-z0-9_]*|-?[0-9]+)"
_PLAIN_SYMBOL = re.compile(rf"{_ATOM}(?:\((?:{_ATOM}|\*)?\))?\Z")


def quote(s: str) -> str:
    return '"' + s.replace("\\", "\\\\").replace('"', '\\"') + '"'


def fmt_name(s: str) -> str:
    return s if _PLAIN_NAME.match(s) and s not in RESERVED else quote(s)


def fmt_symbol(s: str) -> str:
    return s if _PLAIN_SYMBOL.match(s) else quote(s)


def fmt_value(v) -> str:
    if v is None:
        return "eps"
    if isinstance(v, bool):
        raise TypeError("booleans are not values")
    if isinstance(v, int):
        return str(v)
    if isinstance(v, tuple):
        return "(" + ", ".join(fmt_value(x) for x in v) + ")"
    return fmt_name(v)


def _names(xs) -> str:
    return ", ".join(fmt_name(x) for x in xs)


def _vector(items, keyword: str) -> str:
    if not items:
        return "eps"
    return f"{keyword} " + ", ".join(f"{fmt_name(i.component)}.{fmt_symbol(i.symbol)}" for i in items)


def _automaton(d: AutomatonDecl) -> list[str]:
    out = [f"automaton {fmt_name(d.name)} {{"]
    if d.states:
        out.append(f"  states {_names(d.states)};")
    if d.initial is not None:
        out.append(f"  initial {fmt_name(d.initial)};")
    if d.accept is not None:
        if d.accept.kind == "finite":
            body = "{" + _names(d.accept.sets[0] if d.accept.sets else ()) + "}"
        else:
            body = "{" + ", ".join("{" + _names(s) + "}" for s in d.accept.sets) + "}"
        out.append(f"  accept {d.accept.kind} {body};")
    for direction, comps in (("in", d.inputs), ("out", d.outputs)):
        for c in comps:
            syms = ", ".join(fmt_symbol(s) for s in c.symbols)
            out.append(f"  {direction} {fmt_name(c.name)}: {{{syms}}};")
    for t in d.transitions:
        ins = _vector(t.inputs, "in")
        if t.guard:
            ins += f" when {fmt_name(t.guard)}"
        out.append(
            f"  {fmt_name(t.label)}: {fmt_name(t.src)} -[{ins} / {_vector(t.outputs, 'out')}]-> {fmt_name(t.dst)};"
        )
    out.append("}")
    return out


def _system(d: SystemDecl) -> list[str]:
    out = [f"system {fmt_name(d.name)} {{"]
    if d.states:
        out.append("  states " + ", ".join(fmt_value(v) for v in d.states) + ";")
    if d.initial is not None:
        out.append(f"  initial {fmt_value(d.initial)};")
    out.append("  in {" + ", ".join(fmt_value(v) for v in d.inputs) + "};")
    out.append("  out {" + ", ".join(fmt_value(v) for v in d.outputs) + "};")
    if d.clocked:
        out.append("  clocked;")
    for m in d.maps:
        out.append(
            f"  map {fmt_value(m.state)}, {fmt_value(m.input)} -> {fmt_value(m.next_state)}, {fmt_value(m.output)};"
        )
    out.append("}")
    return out


def _rules(d: RulesDecl) -> list[str]:
    out = [f"rules {fmt_name(d.name)} {{"]
    for r in d.rules:
        out.append(f"  rule {fmt_name(r.name)} {{")
        for g in r.guards:
            if g.op in ("in", "not in"):
                out.append(f"    when {fmt_name(g.role)} {g.op} {{{_names(g.states)}}};")
            else:
                out.append(f"    when {fmt_name(g.role)} {g.op} {fmt_name(g.states[0])};")
        if r.on is not None:
            out.append(f"    on {fmt_name(r.on)};")
        if r.forbid:
            labels = ", ".join(".".join(fmt_name(p) for p in lab.split(".", 1)) for lab in r.forbid)
            out.append(f"    forbid {labels};")
        out.append("  }")
    out.append("}")
    return out


def serialize(doc: Document) -> str:
    """Canonical text; declarations and list elements keep their order."""
    blocks = [[f"format {FORMAT_VERSION};"]]
    for d in doc.declarations:
        if isinstance(d, AutomatonDecl):
            blocks.append(_automaton(d))
        elif isinstance(d, SystemDecl):
            blocks.append(_system(d))
        elif isinstance(d, FunctionDecl):
            blocks.append([f"function {fmt_name(d.name)}({_names(d.params)}) = {quote(d.body)};"])
        elif isinstance(d, ChannelDecl):
            blocks.append([
                f"channel {fmt_name(d.name)}: {fmt_name(d.src_role)}.{fmt_name(d.src_component)} -> "
                f"{fmt_name(d.dst_role)}.{fmt_name(d.dst_component)};"
            ])
        elif isinstance(d, ProtocolDecl):
            lines = [f"protocol {fmt_name(d.name)} {{"]
            if d.roles:
                lines.append(f"  roles {_names(d.roles)};")
            if d.channels:
                lines.append(f"  channels {_names(d.channels)};")
            if d.tree:
                lines.append("  tree;")
            lines.append("}")
            blocks.append(lines)
        elif isinstance(d, RulesDecl):
            blocks.append(_rules(d))
        elif isinstance(d, ProcessDecl):
            lines = [f"process {fmt_name(d.name)} {{"]
            if d.roles:
                lines.append(f"  roles {_names(d.roles)};")
            if d.rule_sets:
                lines.append(f"  rules {_names(d.rule_sets)};")
            for role, cp in d.bindings:
                lines.append(f"  bind {fmt_name(role)} -> {fmt_name(cp)};")
            lines.append("}")
            blocks.append(lines)
        else:
            raise TypeError(f"cannot serialize {type(d).__name__}")
    return "\n\n".join("\n".join(b) for b in blocks) + "\n"


# -- model objects to declarations --------------------------------------------


def _items(vec, alphabets) -> tuple:
    return tuple(Item(alphabets[k].name, sym) for k, sym in enumerate(vec) if sym is not EPS)


def automaton_decl(a: NIOA) -> AutomatonDecl:
    """Declaration describing ``a``; conjunctive finite acceptance is flattened to the accepting states."""
    parts = acceptance_parts(a)
    if has_finite_semantics(a):
        accept = AcceptDecl("finite", (tuple(q for q in a.states if accepts_at_halt(a, q)),))
    elif len(parts) == 1 and isinstance(parts[0][0], Muller) and parts[0][1] is None:
        family = sorted(tuple(sorted(s)) for s in parts[0][0].family)
        accept = AcceptDecl("muller", tuple(family))
    else:
        raise TypeError(f"acceptance of {a.name} mixes Muller parts across components; no flat form exists")
    return AutomatonDecl(
        a.name,
        tuple(a.states),
        a.initial,
        accept,
        tuple(ComponentDecl(x.name, tuple(sorted(x.symbols))) for x in a.inputs),
        tuple(ComponentDecl(x.name, tuple(sorted(x.symbols))) for x in a.outputs),
        tuple(
            TransitionDecl(t.label, t.src, t.dst, _items(t.inp, a.inputs), _items(t.out, a.outputs), t.guard)
            for t in a.transitions
        ),
    )


def system_decl(s: SystemSpec, name: str | None = None) -> SystemDecl:
    """Declaration listing the reachable function table of ``s``."""
    states = s.reachable()
    maps = tuple(MapEntry(q, i, *s.fn(q, i)) for q in states for i in s.input_domain())
    return SystemDecl(
        name or s.name,
        tuple(states),
        s.initial,
        tuple(ordered(s.inputs)),
        tuple(ordered(s.outputs)),
        s.clocked,
        maps,
    )


# -- DOT ----------------------------------------------------------------------


def _dot_id(s: str) -> str:
    return '"' + s.replace("\\", "\\\\").replace('"', '\\"') + '"'


def export_dot(x) -> str:
    """DOT digraph: one node per state (accepting ones double-circled), edges labelled ``in / out``."""
    quiescent = lambda q: True  # noqa: E731
    if isinstance(x, Protocol):
        x = x.cbr
    if isinstance(x, CBRAutomaton):
        cbr = x
        x = cbr.as_nioa()
        quiescent = lambda q: not cbr.pending_of(q)  # noqa: E731
    elif isinstance(x, CoordinatedAutomaton):
        x = x.result
    if not isinstance(x, NIOA):
        raise TypeError(f"cannot export {type(x).__name__}")
    lines = [
        f"digraph {_dot_id(x.name)} {{",
        "  rankdir=LR;",
        "  node [shape=circle];",
        '  "__start" [shape=point, label=""];',
    ]
    for q in x.states:
        shape = "doublecircle" if quiescent(q) and accepts_at_halt(x, q) else "circle"
        lines.append(f"  {_dot_id(q)} [shape={shape}];")
    lines.append(f'  "__start" -> {_dot_id(x.initial)};')
    for t in x.transitions:
        label = f"{render_vector(t.inp, x.inputs)} / {render_vector(t.out, x.outputs)}"
        lines.append(f"  {_dot_id(t.src)} -> {_dot_id(t.dst)} [label={_dot_id(label)}];")
    lines.append("}")
    return "\n".join(lines) + "\n"
