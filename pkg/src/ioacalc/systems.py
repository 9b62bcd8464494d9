"""Discrete systems given by a step function and their composition operators.

A system maps ``(state, input)`` to ``(next state, output)``.  Unclocked
systems only react to an applied input; clocked systems also step on the empty
input ``EPS``.  Compositions are again systems, except that the loop and
while operators terminate through an external budget and report their value.
"""
from __future__ import annotations

from collections import deque
from dataclasses import dataclass, field
from itertools import combinations
from typing import Any, Callable, Hashable, Iterable, Mapping

from .automata import EPS, NIOA, Alphabet, Finite, Transition

MAX_NATURAL = 2**63 - 1
TICK = "tick"


class SystemSpecError(Exception):
    pass


class NoSpontaneousActivity(SystemSpecError):
    pass


class AlphabetMismatch(SystemSpecError):
    pass


class BudgetExhausted(SystemSpecError):
    pass


class NaturalOverflow(SystemSpecError):
    pass


class SearchCapExceeded(SystemSpecError):
    pass


def ordered(xs: Iterable) -> list:
    """Deterministic order for mixed symbol sets."""
    xs = list(xs)
    try:
        return sorted(xs)
    except TypeError:
        return sorted(xs, key=repr)


@dataclass(frozen=True, eq=False)
class SystemSpec:
    """``fn(q, i) -> (q', o)``; ``inputs``/``outputs`` of None mean unbounded (e.g. the naturals)."""

    fn: Callable[[Any, Any], tuple]
    initial: Hashable
    inputs: frozenset | None = frozenset()
    outputs: frozenset | None = frozenset()
    clocked: bool = False
    name: str = "S"
    meta: Mapping = field(default_factory=dict)

    def input_domain(self) -> list:
        if self.inputs is None:
            raise ValueError(f"{self.name}: unbounded input alphabet cannot be enumerated")
        dom = ordered(self.inputs)
        return dom + [EPS] if self.clocked else dom

    def reachable(self, cap: int = 10**5) -> list:
        """Internal states reachable from the initial state, in BFS order."""
        seen = {self.initial}
        order = [self.initial]
        queue = deque([self.initial])
        dom = self.input_domain()
        while queue:
            q = queue.popleft()
            for i in dom:
                nq, _ = self.fn(q, i)
                if nq not in seen:
                    if len(seen) >= cap:
                        raise SearchCapExceeded(f"{self.name}: more than {cap} reachable states")
                    seen.add(nq)
                    order.append(nq)
                    queue.append(nq)
        return order

    def table(self) -> dict:
        """Function graph over reachable states and the whole input domain."""
        return {(q, i): self.fn(q, i) for q in self.reachable() for i in self.input_domain()}

    def is_stateless(self) -> bool:
        return len(self.reachable()) == 1

    @classmethod
    def from_table(
        cls,
        table: Mapping,
        initial,
        *,
        inputs=None,
        outputs=None,
        clocked: bool | None = None,
        name: str = "S",
    ) -> "SystemSpec":
        """System given by ``{(q, i): (q', o)}``; totality over the declared domain is checked."""
        table = dict(table)
        if clocked is None:
            clocked = any(i is EPS for _, i in table)
        if not clocked and any(i is EPS for _, i in table):
            raise NoSpontaneousActivity(f"{name}: unclocked system maps the empty input")
        ins = frozenset(i for _, i in table if i is not EPS) if inputs is None else frozenset(inputs)
        outs = frozenset(o for _, o in table.values() if o is not EPS) if outputs is None else frozenset(outputs)
        states = {q for q, _ in table} | {nq for nq, _ in table.values()} | {initial}
        dom = ordered(ins) + ([EPS] if clocked else [])
        missing = [(q, i) for q in ordered(states) for i in dom if (q, i) not in table]
        if missing:
            raise ValueError(f"{name}: function not total, missing {missing[:3]}")
        for (q, i), (nq, o) in table.items():
            if o is not EPS and o not in outs:
                raise AlphabetMismatch(f"{name}: output {o!r} not in output alphabet")

        def fn(q, i):
            return table[(q, i)]

        return cls(fn, initial, ins, outs, clocked, name, {"table": table})


def step(s: SystemSpec, q, i):
    """One time step: ``(f_int(q, i), f_ext(q, i))``."""
    if i is EPS and not s.clocked:
        raise NoSpontaneousActivity(f"no spontaneous activity: {s.name} is unclocked and got the empty input")
    if i is not EPS and s.inputs is not None and i not in s.inputs:
        raise AlphabetMismatch(f"{s.name}: input {i!r} not in its input alphabet")
    return s.fn(q, i)


def stateless(f: Callable, inputs, outputs=None, *, name: str = "S") -> SystemSpec:
    inputs = frozenset(inputs)
    if outputs is None:
        outputs = frozenset(f(i) for i in inputs)
    return SystemSpec(lambda q, i: (q, f(i)), 0, inputs, frozenset(outputs), False, name)


def identity_system(alphabet, *, name: str = "id") -> SystemSpec:
    return stateless(lambda i: i, alphabet, alphabet, name=name)


def state_name(x) -> str:
    return x if isinstance(x, str) else repr(x)


def to_diofa(s: SystemSpec) -> NIOA:
    """Deterministic automaton whose transitions are exactly the graph of the step function.

    The empty input of a clocked system is spelled with the ``tick`` symbol so
    that the result stays deterministic (no spontaneous transitions).
    """
    if s.clocked and s.inputs is not None and TICK in s.inputs:
        raise AlphabetMismatch(f"{s.name}: input alphabet already uses the clock symbol {TICK!r}")
    tab = s.table()
    ins = {state_name(i) for i in s.inputs}
    if s.clocked:
        ins.add(TICK)
    outs = {state_name(o) for (_, o) in tab.values() if o is not EPS} | {state_name(o) for o in s.outputs or ()}
    ts = []
    for (q, i), (nq, o) in tab.items():
        sym = TICK if i is EPS else state_name(i)
        ts.append(Transition(state_name(q), state_name(nq), (sym,), (EPS if o is EPS else state_name(o),)))
    states = tuple(state_name(q) for q in s.reachable())
    return NIOA(
        name=s.name,
        states=states,
        inputs=(Alphabet("in", ins),),
        outputs=(Alphabet("out", outs),),
        initial=state_name(s.initial),
        acceptance=Finite(states),
        transitions=tuple(ts),
    )


# -- sequential, parallel, U --------------------------------------------------


def compose_sequential(s1: SystemSpec, s2: SystemSpec, *, name: str | None = None) -> SystemSpec:
    """``s2 ∘ s1``: within one composed step ``s1`` fires and its output is fed to ``s2``.

    The composed state is ``(q1, o1, q2)`` with ``o1`` the last output of ``s1``.
    An empty output of ``s1`` lets a clocked ``s2`` step on the empty input and
    leaves an unclocked ``s2`` idle.
    """
    if s1.outputs is not None and s2.inputs is not None and not s1.outputs <= s2.inputs:
        extra = ordered(s1.outputs - s2.inputs)
        raise AlphabetMismatch(
            f"output alphabet of {s1.name} not contained in input alphabet of {s2.name}: extra {extra}"
        )

    def fn(q, i):
        q1, _, q2 = q
        n1, o1 = s1.fn(q1, i)
        if o1 is EPS and not s2.clocked:
            n2, o2 = q2, EPS
        else:
            n2, o2 = s2.fn(q2, o1)
        return (n1, o1, n2), o2

    return SystemSpec(
        fn,
        (s1.initial, EPS, s2.initial),
        s1.inputs,
        s2.outputs,
        s1.clocked,
        name or f"{s2.name}∘{s1.name}",
        {"op": "seq", "parts": (s1, s2)},
    )


def compose_parallel(s1: SystemSpec, s2: SystemSpec, *, name: str | None = None) -> SystemSpec:
    """Both systems step on the same input; output is the pair of outputs."""
    if s1.inputs != s2.inputs or s1.clocked != s2.clocked:
        raise AlphabetMismatch(f"input alphabets of {s1.name} and {s2.name} differ")

    def fn(q, i):
        n1, o1 = s1.fn(q[0], i)
        n2, o2 = s2.fn(q[1], i)
        out = EPS if o1 is EPS and o2 is EPS else (o1, o2)
        return (n1, n2), out

    outs = None
    if s1.outputs is not None and s2.outputs is not None:
        o1s = list(s1.outputs) + [EPS]
        o2s = list(s2.outputs) + [EPS]
        outs = frozenset((a, b) for a in o1s for b in o2s if not (a is EPS and b is EPS))
    return SystemSpec(
        fn,
        (s1.initial, s2.initial),
        s1.inputs,
        outs,
        s1.clocked,
        name or f"({s1.name}||{s2.name})",
        {"op": "par", "parts": (s1, s2)},
    )


def compose_u(s1: SystemSpec, s2: SystemSpec, s3: SystemSpec, *, name: str | None = None) -> SystemSpec:
    """``s3 ∘ s2 ∘ s1``.  The outer pair ``(s1, s3)`` alone does not form a system."""
    inner = compose_sequential(s1, s2)
    whole = compose_sequential(inner, s3, name=name or f"U({s1.name},{s2.name},{s3.name})")
    meta = dict(whole.meta)
    meta.update(
        op="u",
        parts=(s1, s2, s3),
        note=f"{s1.name} and {s3.name} taken together are not a system; "
             f"all three are subsystems of the composed chain",
    )
    return SystemSpec(whole.fn, whole.initial, whole.inputs, whole.outputs, whole.clocked, whole.name, meta)


# -- loop and while -----------------------------------------------------------


def check_natural(x) -> Any:
    if isinstance(x, int) and not isinstance(x, bool) and x > MAX_NATURAL:
        raise NaturalOverflow(f"value {x} exceeds {MAX_NATURAL}")
    return x


def counter_system(limit: int | None = None, *, name: str = "I") -> SystemSpec:
    """Clocked iterator without input: ``(q, out) <- (q + 1, q)``."""

    def fn(q, i):
        if limit is not None and q >= limit:
            raise BudgetExhausted(f"{name}: counter limit {limit} reached")
        return check_natural(q + 1), q

    return SystemSpec(fn, 0, frozenset(), None, True, name, {"limit": limit})


def loop_body(h: Callable, g: Callable, *, name: str = "S") -> SystemSpec:
    """Body whose state is the parameter ``a``; input ``(b, c)`` with ``c`` fed back.

    ``g`` is kept as the value preloaded on the feedback line.
    """

    def fn(q, i):
        b, c = i
        return q, check_natural(h(q, b, c))

    return SystemSpec(fn, None, None, None, False, name, {"preload": g, "h": h})


def zero_finder(g: Callable, *, name: str = "S") -> SystemSpec:
    """Stateless body computing ``g(a, b)`` for the counter value ``b``; its state is ``a``."""
    return SystemSpec(lambda q, b: (q, check_natural(g(q, b))), None, None, None, False, name, {"g": g})


@dataclass(frozen=True)
class LoopRun:
    value: Any
    rows: tuple  # (step, counter value, body output)


def run_loop(iterator: SystemSpec, body: SystemSpec, a, n: int) -> LoopRun:
    if n < 0:
        raise ValueError("loop count must be a natural number")
    c = check_natural(body.meta["preload"](a))
    rows = [(0, None, c)]
    qi, qs = iterator.initial, a
    for j in range(1, n + 1):
        qi, b = iterator.fn(qi, EPS)
        qs, c = body.fn(qs, (b, c))
        rows.append((j, b, c))
    return LoopRun(c, tuple(rows))


def compose_loop(iterator: SystemSpec, body: SystemSpec, a, n: int, *, name: str | None = None) -> SystemSpec:
    """The loop system ``Loop_{a,n}``: one outer step spans ``n`` inner steps.

    ``a`` and ``n`` are configuration; the result is a stateless clocked
    system whose output is ``f(a, n)`` with ``f(a, 0) = g(a)`` and
    ``f(a, b + 1) = h(a, b, f(a, b))``.
    """
    run = run_loop(iterator, body, a, n)
    value = run.value
    return SystemSpec(
        lambda q, i: (q, value),
        0,
        frozenset(),
        frozenset([value]),
        True,
        name or f"Loop[{a},{n}]({iterator.name},{body.name})",
        {"op": "loop", "a": a, "n": n, "value": value, "rows": run.rows, "parts": (iterator, body)},
    )


@dataclass(frozen=True)
class WhileResult:
    delta: int | None
    steps: int
    exhausted: bool


def compose_while(iterator: SystemSpec, finder: SystemSpec, a, budget: int) -> WhileResult:
    """Smallest counter value ``b`` with ``g(a, b) = 0`` found within ``budget`` inner steps."""
    if budget <= 0:
        raise ValueError("budget must be positive")
    qi = iterator.initial
    for k in range(budget):
        try:
            qi, b = iterator.fn(qi, EPS)
        except BudgetExhausted:
            return WhileResult(None, k, True)
        _, v = finder.fn(a, b)
        if v == 0:
            return WhileResult(b, k + 1, False)
    return WhileResult(None, budget, True)


# -- functional equivalence ---------------------------------------------------


@dataclass(frozen=True)
class EquivalenceResult:
    """``phi`` maps reachable extended states ``(q, i, o)``; ``phi_out`` maps outputs.

    The time map is always the index shift.  ``counterexample`` is the input
    sequence after which the correspondence breaks.
    """

    equivalent: bool
    phi: Mapping = field(default_factory=dict)
    phi_out: Mapping = field(default_factory=dict)
    counterexample: tuple = ()
    reason: str = ""
    complete: bool = True
    time_map: str = "index shift"

    @property
    def verified(self) -> bool:
        return self.equivalent and self.complete

    def __bool__(self) -> bool:
        return self.equivalent


def functionally_equivalent(s1: SystemSpec, s2: SystemSpec, horizon: int = 64, cap: int = 10**5) -> EquivalenceResult:
    """Search a bijection between reachable extended states commuting with both step functions.

    Inputs correspond by identity; outputs by a bijection fixed on first
    sight (the empty output only matches itself).  Pairs are explored
    breadth-first with inputs in sorted order, so the first failure found is a
    shortest distinguishing input sequence.
    """
    if s1.inputs != s2.inputs or s1.clocked != s2.clocked:
        return EquivalenceResult(False, reason="input alphabets differ")
    dom = s1.input_domain()
    x1 = (s1.initial, EPS, EPS)
    x2 = (s2.initial, EPS, EPS)
    phi = {x1: x2}
    inv = {x2: x1}
    phi_out: dict = {}
    out_inv: dict = {}
    queue = deque([(x1, x2, ())])
    complete = True
    while queue:
        y1, y2, path = queue.popleft()
        if len(path) >= horizon:
            complete = False
            continue
        for i in dom:
            n1, o1 = s1.fn(y1[0], i)
            n2, o2 = s2.fn(y2[0], i)
            trace = path + (i,)
            if (o1 is EPS) != (o2 is EPS):
                return EquivalenceResult(False, counterexample=trace, reason="output presence differs")
            if o1 is not EPS:
                if phi_out.setdefault(o1, o2) != o2 or out_inv.setdefault(o2, o1) != o1:
                    return EquivalenceResult(False, counterexample=trace, reason=f"outputs {o1!r} and {o2!r} do not correspond")
            z1, z2 = (n1, i, o1), (n2, i, o2)
            known1, known2 = phi.get(z1), inv.get(z2)
            if known1 is None and known2 is None:
                if len(phi) >= cap:
                    raise SearchCapExceeded(f"more than {cap} extended states")
                phi[z1] = z2
                inv[z2] = z1
                queue.append((z1, z2, trace))
            elif known1 != z2 or known2 != z1:
                return EquivalenceResult(False, counterexample=trace, reason="state correspondence is not bijective")
    return EquivalenceResult(True, phi, phi_out, complete=complete)


# -- compositionality ---------------------------------------------------------


@dataclass(frozen=True)
class CompositionalityReport:
    op: str
    verdict: str  # compositional | emergent | failed
    checked: int
    details: tuple = ()


def _reconstruct_seq(t1: dict, t2: dict, clocked2: bool, q, i):
    q1, _, q2 = q
    n1, o1 = t1[(q1, i)]
    if o1 is EPS and not clocked2:
        return (n1, o1, q2), EPS
    n2, o2 = t2[(q2, o1)]
    return (n1, o1, n2), o2


def _reconstruct_par(t1: dict, t2: dict, q, i):
    n1, o1 = t1[(q[0], i)]
    n2, o2 = t2[(q[1], i)]
    return (n1, n2), (EPS if o1 is EPS and o2 is EPS else (o1, o2))


def check_compositionality(op: str, instances: Iterable) -> CompositionalityReport:
    """Decide for each instance whether the composed function follows from the parts' functions.

    ``seq``/``par`` instances are ``(s1, s2)``: the composed table is rebuilt
    from the factor tables and the wiring alone and compared entry by entry.
    ``loop`` instances are ``(iterator, body, a, n)``: the loop value is rebuilt
    by feeding the factor functions through the wiring.  ``while`` instances
    are ``(iterator, finder, a, budget)``: a second zero finder agreeing with
    the first on every counter value below the found ``delta`` is built; a
    different ``delta`` for it shows the time step is not derivable from any
    bounded table (emergent).
    """
    instances = list(instances)
    details = []
    if op in ("seq", "par"):
        for s1, s2 in instances:
            composed = compose_sequential(s1, s2) if op == "seq" else compose_parallel(s1, s2)
            t1, t2 = s1.table(), s2.table()
            for key, val in composed.table().items():
                q, i = key
                rebuilt = _reconstruct_seq(t1, t2, s2.clocked, q, i) if op == "seq" else _reconstruct_par(t1, t2, q, i)
                if rebuilt != val:
                    details.append(f"{composed.name}: entry {key!r} rebuilt as {rebuilt!r}, composed gives {val!r}")
                    return CompositionalityReport(op, "failed", len(instances), tuple(details))
            details.append(f"{composed.name}: {len(t1)}+{len(t2)} factor entries rebuild the composed table")
        return CompositionalityReport(op, "compositional", len(instances), tuple(details))
    if op == "loop":
        for iterator, body, a, n in instances:
            composed = compose_loop(iterator, body, a, n)
            f_i = iterator.fn
            f_s = body.fn
            c = body.meta["preload"](a)
            qi = iterator.initial
            for _ in range(n):
                qi, b = f_i(qi, EPS)
                _, c = f_s(a, (b, c))
            if c != composed.meta["value"]:
                details.append(f"{composed.name}: rebuilt {c!r}, composed gives {composed.meta['value']!r}")
                return CompositionalityReport(op, "failed", len(instances), tuple(details))
            details.append(f"{composed.name}: value {c!r} rebuilt from the factor functions and n={n}")
        return CompositionalityReport(op, "compositional", len(instances), tuple(details))
    if op == "while":
        for iterator, finder, a, budget in instances:
            res = compose_while(iterator, finder, a, budget)
            if res.delta is None:
                details.append(f"no zero within budget {budget}: time step unknown")
                continue
            delta = res.delta
            g = finder.fn

            def g2(q, b, g=g, delta=delta):
                if b < delta:
                    return g(q, b)[1]
                return 0 if b == delta + 2 else 1

            other = compose_while(iterator, zero_finder(g2, name=finder.name + "'"), a, budget + 2)
            if other.delta == delta:
                return CompositionalityReport(op, "failed", len(instances), tuple(details))
            details.append(
                f"finders agree on b<{delta} but their zeros are {delta} and {other.delta}: "
                f"the time step is emergent"
            )
        return CompositionalityReport(op, "emergent", len(instances), tuple(details))
    raise ValueError(f"unknown composition kind {op!r}")


# -- normal form --------------------------------------------------------------


@dataclass(frozen=True)
class NormalForm:
    coordinates: tuple  # input coordinates read by the P_k
    combiner: Mapping  # projected tuple -> output
    system: SystemSpec
    equivalence: EquivalenceResult


def _project_coord(k: int, inputs, *, name: str) -> SystemSpec:
    return stateless(lambda i: i[k], inputs, name=name)


def normal_form(s: SystemSpec) -> NormalForm | None:
    """Equivalent ``S ∘ (P1 || ... || Pn)`` for a finite stateless system, by bounded search.

    Inputs that are tuples are split into coordinates; each ``P_k`` reads one
    coordinate and ``S`` is a table over the projected values.  Smaller
    coordinate sets are tried first.  Returns None when no candidate passes
    the equivalence check.
    """
    if not s.is_stateless():
        raise ValueError(f"{s.name} is not stateless")
    q = s.initial
    ins = ordered(s.inputs)
    f = {i: s.fn(q, i)[1] for i in ins}
    arity = len(ins[0]) if ins and all(isinstance(i, tuple) for i in ins) and len({len(i) for i in ins}) == 1 else 0
    if arity == 0:
        candidates = [None]
    else:
        candidates = [c for r in range(1, arity + 1) for c in combinations(range(arity), r)]
    for coords in candidates:
        if coords is None:
            parts = [identity_system(s.inputs, name="P1")]
            proj = {i: i for i in ins}
        else:
            parts = [_project_coord(k, s.inputs, name=f"P{k + 1}") for k in coords]
            proj = {i: tuple(i[k] for k in coords) for i in ins}
        combiner: dict = {}
        if any(combiner.setdefault(proj[i], f[i]) != f[i] for i in ins):
            continue
        front = parts[0]
        for p in parts[1:]:
            front = compose_parallel(front, p)
        # S reads the (nested) output of the parallel front
        wired = {front.fn(front.initial, i)[1]: combiner[proj[i]] for i in ins}
        # pairs the front never emits are mapped to an arbitrary fixed output
        fallback = ordered(s.outputs)[0] if s.outputs else EPS
        back = stateless(lambda x, wired=wired: wired.get(x, fallback), front.outputs, s.outputs, name="S")
        nf = compose_sequential(front, back, name=f"NF({s.name})")
        eq = functionally_equivalent(s, nf)
        if eq.equivalent:
            return NormalForm(tuple(coords) if coords else (), dict(combiner), nf, eq)
    return None
