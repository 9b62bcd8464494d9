"""Nondeterministic I/O automata.

An automaton ``(Q, I, O, q0, Acc, Delta)`` has vector-valued input and output
alphabets.  Every position of an input or output vector holds either a symbol
of the matching component alphabet or the empty character, represented here
by ``None`` (:data:`EPS`).

Everything in this module is immutable; functions return new automata.
"""
from __future__ import annotations

import math
from collections import deque
from dataclasses import dataclass, field, replace
from functools import cached_property
from typing import Callable, Iterable, Mapping, Sequence, Union

import networkx as nx
from networkx.algorithms import isomorphism

EPS = None
EPS_NAME = "eps"

DEFAULT_PRODUCT_CAP = 10**6

Vector = tuple  # tuple[str | None, ...]


class AutomatonError(Exception):
    pass


class AlphabetCollision(AutomatonError):
    pass


class StateCapExceeded(AutomatonError):
    def __init__(self, cap: int, what: str = "states"):
        super().__init__(f"state cap exceeded: more than {cap} {what}")
        self.cap = cap


class ProjectionError(AutomatonError):
    pass


class PartitionError(AutomatonError):
    pass


@dataclass(frozen=True)
class Alphabet:
    """One component of a vector alphabet."""

    name: str
    symbols: frozenset = frozenset()

    def __post_init__(self):
        object.__setattr__(self, "symbols", frozenset(self.symbols))

    def __contains__(self, symbol) -> bool:
        return symbol in self.symbols

    def sorted(self) -> list[str]:
        return sorted(self.symbols)


def render_vector(vec: Sequence, alphabets: Sequence[Alphabet] | None = None) -> str:
    """``a.x,b.y`` for the non-empty positions, ``eps`` when all are empty."""
    parts = []
    for k, sym in enumerate(vec):
        if sym is EPS:
            continue
        if alphabets is not None:
            parts.append(f"{alphabets[k].name}.{sym}")
        else:
            parts.append(f"{k}:{sym}")
    return ",".join(parts) if parts else EPS_NAME


def eps_vector(n: int) -> tuple:
    return (EPS,) * n


def _vec_key(vec: Sequence) -> tuple:
    return tuple("" if s is EPS else "\x01" + s for s in vec)


@dataclass(frozen=True)
class Transition:
    """``src -[inp/out]-> dst``; ``label`` names the transition class, ``guard`` is descriptive."""

    src: str
    dst: str
    inp: Vector
    out: Vector
    label: str = ""
    guard: str = ""

    def __post_init__(self):
        object.__setattr__(self, "inp", tuple(self.inp))
        object.__setattr__(self, "out", tuple(self.out))

    @property
    def spontaneous(self) -> bool:
        return all(s is EPS for s in self.inp)

    @property
    def silent(self) -> bool:
        return self.spontaneous and all(s is EPS for s in self.out)

    def sort_key(self) -> tuple:
        return (self.src, self.dst, _vec_key(self.inp), _vec_key(self.out), self.label, self.guard)

    def __str__(self) -> str:
        return f"{self.src} -[{render_vector(self.inp)} / {render_vector(self.out)}]-> {self.dst}"


# -- acceptance components ----------------------------------------------------


@dataclass(frozen=True)
class Finite:
    states: frozenset = frozenset()

    def __post_init__(self):
        object.__setattr__(self, "states", frozenset(self.states))


@dataclass(frozen=True)
class Muller:
    family: frozenset = frozenset()

    def __post_init__(self):
        object.__setattr__(self, "family", frozenset(frozenset(s) for s in self.family))


@dataclass(frozen=True)
class Conjunction:
    """Per-factor acceptance of a product; aligned with ``NIOA.factors``."""

    parts: tuple = ()

    def __post_init__(self):
        object.__setattr__(self, "parts", tuple(self.parts))


Acceptance = Union[Finite, Muller, Conjunction]


def referenced_states(acc: Acceptance) -> set[str]:
    if isinstance(acc, Finite):
        return set(acc.states)
    if isinstance(acc, Muller):
        return set().union(*acc.family) if acc.family else set()
    return set()


# -- the automaton ------------------------------------------------------------


@dataclass(frozen=True)
class NIOA:
    name: str
    states: tuple
    inputs: tuple
    outputs: tuple
    initial: str
    acceptance: Acceptance
    transitions: tuple
    factors: tuple = ()
    components: Mapping | None = field(default=None, compare=False, repr=False)

    def __post_init__(self):
        object.__setattr__(self, "states", tuple(sorted(set(self.states))))
        object.__setattr__(self, "inputs", tuple(self.inputs))
        object.__setattr__(self, "outputs", tuple(self.outputs))
        ts = {t: None for t in self.transitions}
        object.__setattr__(self, "transitions", tuple(sorted(ts, key=Transition.sort_key)))
        object.__setattr__(self, "factors", tuple(self.factors))

    @cached_property
    def outgoing(self) -> dict:
        out: dict[str, list] = {q: [] for q in self.states}
        for t in self.transitions:
            out.setdefault(t.src, []).append(t)
        return {q: tuple(ts) for q, ts in out.items()}

    @cached_property
    def state_set(self) -> frozenset:
        return frozenset(self.states)

    def input_index(self, name: str) -> int:
        for k, a in enumerate(self.inputs):
            if a.name == name:
                return k
        raise KeyError(f"{self.name}: no input component {name!r}")

    def output_index(self, name: str) -> int:
        for k, a in enumerate(self.outputs):
            if a.name == name:
                return k
        raise KeyError(f"{self.name}: no output component {name!r}")

    def factor_index(self, role: str) -> int:
        factors = self.factors or (self.name,)
        try:
            return factors.index(role)
        except ValueError:
            raise KeyError(f"{self.name}: no factor {role!r}") from None

    def component(self, state: str, k: int) -> str:
        if self.components is None:
            if k != 0:
                raise KeyError(k)
            return state
        return self.components[state][k]

    def labels(self) -> set[str]:
        return {t.label for t in self.transitions}

    def with_transitions(self, transitions: Iterable[Transition], name: str | None = None) -> "NIOA":
        return replace(self, transitions=tuple(transitions), name=name or self.name)


def validate(a: NIOA) -> list[str]:
    """Return every invariant violation found in ``a``; an empty list means ok."""
    problems = []
    if not a.states:
        problems.append("empty state set")
    if a.initial not in a.state_set:
        problems.append(f"initial not in states: {a.initial}")
    for alph in a.inputs + a.outputs:
        if EPS_NAME in alph.symbols or EPS in alph.symbols:
            problems.append(f"epsilon listed as a symbol of {alph.name}")
    for s in sorted(referenced_states(a.acceptance) - a.state_set):
        problems.append(f"acceptance references unknown state: {s}")
    if isinstance(a.acceptance, Muller) and any(not s for s in a.acceptance.family):
        problems.append("empty Muller set")
    for t in a.transitions:
        for end in (t.src, t.dst):
            if end not in a.state_set:
                problems.append(f"dangling state id: {end} in {t}")
        if len(t.inp) != len(a.inputs):
            problems.append(f"input vector has wrong arity in {t}")
        else:
            for sym, alph in zip(t.inp, a.inputs):
                if sym is not EPS and sym not in alph:
                    problems.append(f"untyped input: {sym} not in {alph.name} in {t}")
        if len(t.out) != len(a.outputs):
            problems.append(f"output vector has wrong arity in {t}")
        else:
            for sym, alph in zip(t.out, a.outputs):
                if sym is not EPS and sym not in alph:
                    problems.append(f"untyped output: {sym} not in {alph.name} in {t}")
    return problems


def is_deterministic(a: NIOA) -> bool:
    seen = set()
    for t in a.transitions:
        if t.spontaneous:
            return False
        key = (t.src, t.inp)
        if key in seen:
            return False
        seen.add(key)
    return True


def quasi_determinism_violation(a: NIOA, states: Iterable[str] | None = None):
    """First reachable state breaking quasi-determinism, with the clashing transitions."""
    for q in sorted(reachable_states(a) if states is None else states):
        by_input: dict[tuple, list] = {}
        for t in a.outgoing.get(q, ()):
            by_input.setdefault(t.inp, []).append(t)
        for ts in by_input.values():
            if len(ts) > 1:
                return q, tuple(ts)
    return None


def is_quasi_deterministic(a: NIOA) -> bool:
    # the spontaneous input vector is one more key: at most one transition per key
    return quasi_determinism_violation(a) is None


def reachable_states(a: NIOA) -> frozenset:
    seen = {a.initial}
    todo = [a.initial]
    while todo:
        q = todo.pop()
        for t in a.outgoing.get(q, ()):
            if t.dst not in seen:
                seen.add(t.dst)
                todo.append(t.dst)
    return frozenset(seen)


def shortest_path(a: NIOA, goal: Callable[[str], bool], start: str | None = None):
    """Shortest transition path from ``start`` (default initial) to a state satisfying ``goal``."""
    start = a.initial if start is None else start
    parent: dict[str, Transition | None] = {start: None}
    queue = deque([start])
    while queue:
        q = queue.popleft()
        if goal(q):
            path = []
            while parent[q] is not None:
                path.append(parent[q])
                q = parent[q].src
            return tuple(reversed(path))
        for t in a.outgoing.get(q, ()):
            if t.dst not in parent:
                parent[t.dst] = t
                queue.append(t.dst)
    return None


def trim(a: NIOA) -> NIOA:
    """Restrict to the reachable part."""
    reach = reachable_states(a)
    acc = a.acceptance
    if isinstance(acc, Finite):
        acc = Finite(acc.states & reach)
    elif isinstance(acc, Muller):
        acc = Muller(s for s in acc.family if s <= reach)
    return replace(
        a,
        states=tuple(reach),
        acceptance=acc,
        transitions=tuple(t for t in a.transitions if t.src in reach),
    )


# -- acceptance evaluation ----------------------------------------------------


def acceptance_parts(a: NIOA) -> list[tuple]:
    """``[(part, k)]`` where ``k`` indexes ``a.components`` (or None for the plain state)."""
    if isinstance(a.acceptance, Conjunction):
        return [(p, k) for k, p in enumerate(a.acceptance.parts)]
    return [(a.acceptance, None)]


def has_finite_semantics(a: NIOA) -> bool:
    return all(isinstance(p, Finite) for p, _ in acceptance_parts(a))


def _comp(a: NIOA, state: str, k):
    return state if k is None else a.components[state][k]


def accepts_at_halt(a: NIOA, state: str) -> bool:
    """A halted run is read as stuttering forever in its last state."""
    for part, k in acceptance_parts(a):
        c = _comp(a, state, k)
        if isinstance(part, Finite):
            if c not in part.states:
                return False
        elif frozenset([c]) not in part.family:
            return False
    return True


def accepts_cycle(a: NIOA, states: Iterable[str]) -> bool:
    """Acceptance of an infinite run whose infinity set is ``states``."""
    states = list(states)
    for part, k in acceptance_parts(a):
        comps = frozenset(_comp(a, s, k) for s in states)
        if isinstance(part, Finite):
            if not comps <= part.states:
                return False
        elif comps not in part.family:
            return False
    return True


# -- weakly synchronized product ---------------------------------------------


def _flat(a: NIOA):
    """Factor names, per-state component tuples and acceptance parts of ``a``."""
    if a.factors:
        return a.factors, a.components, a.acceptance.parts
    return (a.name,), None, (a.acceptance,)


def weakly_synchronized_product(
    automata: Sequence[NIOA],
    *,
    name: str | None = None,
    merge_names: bool = False,
    cap: int = DEFAULT_PRODUCT_CAP,
) -> NIOA:
    """Interleaving product: every product step is one step of exactly one factor.

    Alphabet components are qualified by factor name (``role.channel``) unless
    ``merge_names`` is set, in which case clashing names raise
    :class:`AlphabetCollision`.  Factors that are products themselves are
    flattened, so ``factors`` and ``components`` always list the leaf roles.
    Only the reachable part is built.
    """
    automata = list(automata)
    if not automata:
        raise ValueError("product of no automata")
    factor_names: list[str] = []
    for a in automata:
        factor_names.extend(_flat(a)[0])
    if len(set(factor_names)) != len(factor_names):
        raise AlphabetCollision(f"duplicate factor names: {factor_names}")

    def qualify(a: NIOA, alph: Alphabet) -> Alphabet:
        if merge_names or a.factors:
            return alph
        return Alphabet(f"{a.name}.{alph.name}", alph.symbols)

    inputs = [qualify(a, x) for a in automata for x in a.inputs]
    outputs = [qualify(a, x) for a in automata for x in a.outputs]
    for kind, alphs in (("input", inputs), ("output", outputs)):
        names = [x.name for x in alphs]
        if len(set(names)) != len(names):
            dup = sorted({n for n in names if names.count(n) > 1})
            raise AlphabetCollision(f"{kind} components clash: {', '.join(dup)}")

    in_off = [0]
    out_off = [0]
    for a in automata:
        in_off.append(in_off[-1] + len(a.inputs))
        out_off.append(out_off[-1] + len(a.outputs))
    n_in, n_out = in_off[-1], out_off[-1]

    bound = math.prod(len(reachable_states(a)) for a in automata)
    if bound > cap:
        raise StateCapExceeded(cap)

    def comps_of(a: NIOA, q: str) -> tuple:
        return a.components[q] if a.factors else (q,)

    def sid(vec: tuple) -> str:
        return "(" + "|".join(vec) + ")"

    start = tuple(a.initial for a in automata)
    components = {sid(start): sum((comps_of(a, q) for a, q in zip(automata, start)), ())}
    seen = {start}
    queue = deque([start])
    transitions = []
    while queue:
        vec = queue.popleft()
        src = sid(vec)
        for k, a in enumerate(automata):
            for t in a.outgoing.get(vec[k], ()):
                nxt = vec[:k] + (t.dst,) + vec[k + 1:]
                inp = [EPS] * n_in
                inp[in_off[k]:in_off[k + 1]] = t.inp
                out = [EPS] * n_out
                out[out_off[k]:out_off[k + 1]] = t.out
                label = t.label if a.factors else f"{a.name}.{t.label}"
                transitions.append(Transition(src, sid(nxt), tuple(inp), tuple(out), label, t.guard))
                if nxt not in seen:
                    seen.add(nxt)
                    components[sid(nxt)] = sum((comps_of(b, q) for b, q in zip(automata, nxt)), ())
                    queue.append(nxt)

    parts = tuple(p for a in automata for p in _flat(a)[2])
    return NIOA(
        name=name or "*".join(a.name for a in automata),
        states=tuple(components),
        inputs=tuple(inputs),
        outputs=tuple(outputs),
        initial=sid(start),
        acceptance=Conjunction(parts),
        transitions=tuple(transitions),
        factors=tuple(factor_names),
        components=components,
    )


# -- projection ---------------------------------------------------------------


@dataclass(frozen=True)
class ProjectionMap:
    """Maps states, keeps a subset of I/O components (optionally renamed) and renames symbols.

    ``factor`` selects the acceptance part of a product to carry over;
    ``strip_label_prefix`` removes a role qualifier from transition labels.
    """

    state_map: Mapping
    keep_inputs: tuple = ()
    keep_outputs: tuple = ()
    input_names: tuple | None = None
    output_names: tuple | None = None
    symbol_map: Mapping = field(default_factory=dict)
    factor: int | None = None
    strip_label_prefix: str = ""

    def is_idempotent(self) -> bool:
        for m in (self.state_map, self.symbol_map):
            for x, y in m.items():
                if y in m and m[y] != y:
                    return False
        return True

    def sym(self, s):
        return s if s is EPS else self.symbol_map.get(s, s)


def identity_projection(a: NIOA) -> ProjectionMap:
    return ProjectionMap(
        state_map={q: q for q in a.states},
        keep_inputs=tuple(range(len(a.inputs))),
        keep_outputs=tuple(range(len(a.outputs))),
    )


def role_projection(product: NIOA, role: str) -> ProjectionMap:
    """Projection of a product onto the components belonging to ``role``."""
    k = product.factor_index(role)
    prefix = role + "."
    keep_in = tuple(i for i, x in enumerate(product.inputs) if x.name.startswith(prefix))
    keep_out = tuple(i for i, x in enumerate(product.outputs) if x.name.startswith(prefix))
    return ProjectionMap(
        state_map={q: product.components[q][k] for q in product.states},
        keep_inputs=keep_in,
        keep_outputs=keep_out,
        input_names=tuple(product.inputs[i].name[len(prefix):] for i in keep_in),
        output_names=tuple(product.outputs[i].name[len(prefix):] for i in keep_out),
        factor=k,
        strip_label_prefix=prefix,
    )


def project(a: NIOA, p: ProjectionMap, *, drop_stutter: bool = True, name: str | None = None) -> NIOA:
    """Image of ``a`` under ``p``.

    Duplicate images are merged.  With ``drop_stutter`` the images that are
    silent self-loops (another role moving) are left out, since they carry no
    event of the projected automaton.
    """
    if not p.is_idempotent():
        raise ProjectionError("projection map is not idempotent")
    missing = [q for q in a.states if q not in p.state_map or p.state_map[q] is None]
    if missing:
        raise ProjectionError(f"projection not total on states: {missing[:5]}")

    def rename(alphs, keep, names):
        out = []
        for j, i in enumerate(keep):
            src = alphs[i]
            out.append(Alphabet(names[j] if names else src.name, {p.sym(s) for s in src.symbols}))
        return tuple(out)

    ts = []
    for t in a.transitions:
        label = t.label
        if p.strip_label_prefix and label.startswith(p.strip_label_prefix):
            label = label[len(p.strip_label_prefix):]
        img = Transition(
            p.state_map[t.src],
            p.state_map[t.dst],
            tuple(p.sym(t.inp[i]) for i in p.keep_inputs),
            tuple(p.sym(t.out[i]) for i in p.keep_outputs),
            label,
            t.guard,
        )
        if drop_stutter and img.silent and img.src == img.dst:
            continue
        ts.append(img)

    acc = a.acceptance
    if isinstance(acc, Conjunction):
        if p.factor is not None:
            acc = acc.parts[p.factor]
        elif has_finite_semantics(a):
            acc = Finite(p.state_map[q] for q in a.states if accepts_at_halt(a, q))
        else:
            raise ProjectionError("projecting product acceptance needs a factor index")
    elif isinstance(acc, Finite):
        acc = Finite(p.state_map[q] for q in acc.states)
    else:
        acc = Muller(frozenset(p.state_map[q] for q in s) for s in acc.family)

    identity = all(p.state_map[q] == q for q in a.states)
    return NIOA(
        name=name or a.name,
        states=tuple(p.state_map[q] for q in a.states),
        inputs=rename(a.inputs, p.keep_inputs, p.input_names),
        outputs=rename(a.outputs, p.keep_outputs, p.output_names),
        initial=p.state_map[a.initial],
        acceptance=acc,
        transitions=tuple(ts),
        factors=a.factors if identity else (),
        components=a.components if identity else None,
    )


def isomorphic(a: NIOA, b: NIOA, *, labels: bool = False):
    """State bijection witnessing ``a`` and ``b`` are isomorphic as labelled graphs, else None.

    Alphabets must agree component-wise; initial and halting-accepting states
    must correspond; edges are matched on their I/O vectors (and labels if asked).
    """
    if a.inputs != b.inputs or a.outputs != b.outputs or len(a.states) != len(b.states):
        return None

    def graph(x: NIOA):
        g = nx.MultiDiGraph()
        for q in x.states:
            g.add_node(q, init=q == x.initial, acc=accepts_at_halt(x, q))
        for t in x.transitions:
            g.add_edge(t.src, t.dst, io=(t.inp, t.out, t.label if labels else ""))
        return g

    ga, gb = graph(a), graph(b)
    matcher = isomorphism.MultiDiGraphMatcher(
        ga,
        gb,
        node_match=isomorphism.categorical_node_match(["init", "acc"], [False, False]),
        edge_match=isomorphism.categorical_multiedge_match("io", None),
    )
    if matcher.is_isomorphic():
        return dict(matcher.mapping)
    return None


# -- transition partitions (extended automata) --------------------------------


def doc_class(symbol: str) -> tuple[str, str]:
    """``Order(c1)`` -> ``("Order", "c1")``; plain symbols have an empty parameter."""
    if symbol.endswith(")") and "(" in symbol:
        cls, _, rest = symbol.partition("(")
        return cls, rest[:-1]
    return symbol, ""


def mode_split(state: str) -> tuple[str, str]:
    """``listening/c1`` -> ``("listening", "c1")``."""
    mode, _, rest = state.partition("/")
    return mode, rest


@dataclass(frozen=True)
class TransitionPartition:
    """Descriptive equivalence of transitions.

    ``doc_class_of`` maps each symbol to ``(document class, parameter)`` and
    ``mode_of`` each state to ``(mode, rest)``; left as None they default to
    :func:`doc_class` and :func:`mode_split`.  ``conditions`` maps an input
    document class to ``(condition name, predicate(rest, param))``.
    """

    doc_class_of: Mapping | None = None
    mode_of: Mapping | None = None
    conditions: Mapping = field(default_factory=dict)

    def classify_symbol(self, sym: str) -> tuple[str, str]:
        if self.doc_class_of is None:
            return doc_class(sym)
        try:
            return self.doc_class_of[sym]
        except KeyError:
            raise PartitionError(f"no document class for symbol {sym!r}") from None

    def classify_state(self, q: str) -> tuple[str, str]:
        if self.mode_of is None:
            return mode_split(q)
        try:
            return self.mode_of[q]
        except KeyError:
            raise PartitionError(f"no mode assignment for state {q!r}") from None


@dataclass(frozen=True, order=True)
class ClassKey:
    in_class: str
    out_class: str
    src_mode: str
    dst_mode: str
    condition: str

    def __str__(self) -> str:
        cond = f", {self.condition}" if self.condition else ""
        return f"{self.src_mode} -[{self.in_class}{cond} / {self.out_class}]-> {self.dst_mode}"


def _vector_class(tp: TransitionPartition, vec: Vector):
    syms = [s for s in vec if s is not EPS]
    if not syms:
        return EPS_NAME, ""
    classified = [tp.classify_symbol(s) for s in syms]
    return ",".join(c for c, _ in classified), ",".join(p for _, p in classified)


def transition_class(tp: TransitionPartition, t: Transition) -> ClassKey:
    in_cls, in_param = _vector_class(tp, t.inp)
    out_cls, _ = _vector_class(tp, t.out)  # output parameters are not part of the class
    src_mode, src_rest = tp.classify_state(t.src)
    dst_mode, _ = tp.classify_state(t.dst)
    cond = t.guard
    if in_cls in tp.conditions:
        cname, pred = tp.conditions[in_cls]
        cond = cname if pred(src_rest, in_param) else "!" + cname
    return ClassKey(in_cls, out_cls, src_mode, dst_mode, cond)


def partition_transitions(a: NIOA, tp: TransitionPartition) -> dict:
    """Group the transitions of ``a`` into descriptive equivalence classes."""
    classes: dict[ClassKey, list] = {}
    for t in a.transitions:
        classes.setdefault(transition_class(tp, t), []).append(t)
    return {k: frozenset(v) for k, v in sorted(classes.items())}
