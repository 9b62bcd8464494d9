from itertools import combinations

import pytest

from conftest import load
from ioacalc.automata import NIOA, Alphabet, Finite, Transition, is_quasi_deterministic, isomorphic, project, reachable_states, weakly_synchronized_product
from ioacalc.coordination import (
    CoordinatedAutomaton,
    CoordinationError,
    CoordinationRule,
    Guard,
    ProcessCompositionError,
    UnknownTransitionClass,
    apply_rules,
    check_coordinated,
    compose_processes,
    synthesize_rules,
)
from ioacalc.liveness import analyze


@pytest.fixture(scope="module")
def gate(gatekeeper):
    roles = [gatekeeper.automata["A"], gatekeeper.automata["B"]]
    return roles, weakly_synchronized_product(roles, name="gatekeeper")


def test_gatekeeper_product_needs_coordination(gate):
    roles, base = gate
    assert len(base.states) == 6
    assert not is_quasi_deterministic(base)


def test_declared_rule_coordinates_gatekeeper(gatekeeper, gate):
    roles, base = gate
    rules = gatekeeper.rule_sets["gate"]
    c = apply_rules(base, roles, rules)
    a = c.result
    assert len(reachable_states(a)) <= 12
    assert is_quasi_deterministic(a)
    for role, pmap in zip(roles, c.role_projections):
        assert isomorphic(project(a, pmap), role) is not None
    assert analyze(a).ok
    assert check_coordinated(c).passed


def test_forbidding_notify_everywhere_loses_acceptance(gate):
    roles, base = gate
    rule = CoordinationRule("never", (), None, {"B.notify"})
    with pytest.raises(CoordinationError) as e:
        apply_rules(base, roles, [rule])
    w = e.value.report.witnesses[0]
    assert w.kind in ("acceptance", "projection")


def test_unknown_label_is_rejected(gate):
    roles, base = gate
    with pytest.raises(UnknownTransitionClass):
        apply_rules(base, roles, [CoordinationRule("x", (), None, {"B.shout"})])


def test_guard_negation_and_on_class(gate):
    roles, base = gate
    rule = CoordinationRule("x", (Guard("A", {"a0"}, negate=True),), "eps", {"B.notify"})
    q = next(t for t in base.transitions if t.label == "B.notify" and base.components[t.src][0] == "a1")
    assert rule.removes(base, q)
    other = CoordinationRule("y", (), "Request", {"B.notify"})
    assert not other.removes(base, q)


def _passing_removals(base, roles):
    """Every set of base transitions whose removal passes the coordination check, by size."""
    ts = [t for t in base.transitions if t.src in reachable_states(base)]
    found = {}
    for k in range(len(ts) + 1):
        for drop in combinations(ts, k):
            kept = [t for t in base.transitions if t not in drop]
            c = CoordinatedAutomaton(base, tuple(roles), (), base.with_transitions(kept))
            if check_coordinated(c).passed:
                found.setdefault(k, []).append(frozenset(drop))
        if found:
            return found
    return found


def test_synthesis_finds_a_minimum_restriction(gate):
    roles, base = gate
    res = synthesize_rules(base, roles, budget=10**4)
    assert res.status == "found"
    assert check_coordinated(res.coordinated).passed
    removed = frozenset(set(base.transitions) - set(res.coordinated.result.transitions))
    oracle = _passing_removals(base, roles)
    k = min(oracle)
    assert len(removed) == k and removed in oracle[k]


def test_synthesis_finds_the_only_restriction():
    # B may always notify; A's single grant clashes with it, and only dropping the early notify works
    a = NIOA("A", ("a0", "a1"), (), (Alphabet("g", {"Grant"}),), "a0", Finite({"a1"}),
             (Transition("a0", "a1", (), ("Grant",), "grant"),))
    b = NIOA("B", ("n0",), (), (Alphabet("note", {"N"}),), "n0", Finite({"n0"}),
             (Transition("n0", "n0", (), ("N",), "notify"),))
    base = weakly_synchronized_product([a, b])
    oracle = _passing_removals(base, [a, b])
    assert [len(v) for v in oracle.values()] == [1]
    res = synthesize_rules(base, [a, b])
    removed = frozenset(set(base.transitions) - set(res.coordinated.result.transitions))
    assert removed == oracle[1][0]
    (t,) = removed
    assert t.label == "B.notify" and t.src == "(a0|n0)"


def test_process_composition_hides_the_connecting_protocol(network):
    merged = compose_processes(network.process("buyer"), network.process("seller"), network.protocol("order_protocol"))
    assert set(merged.coordinated.role_names) == {"buyer_pay", "seller_stock"}
    assert merged.bindings == {"buyer_pay": "bank", "seller_stock": "stock"}
    a = merged.coordinated.result
    assert {x.name for x in a.inputs} == {"buyer_pay.receipt"}
    assert {x.name for x in a.outputs} == {"buyer_pay.pay", "seller_stock.ship"}
    # the remaining roles are still recovered by projection
    for role, pmap in zip(merged.coordinated.roles, merged.coordinated.role_projections):
        img = project(a, pmap)
        assert {t.label for t in img.transitions} == {t.label for t in role.transitions}


def test_closed_triangle_is_rejected():
    m = load("triangle.ioa")
    for p1, p2, via in (("P", "Q", "link_pq"), ("Q", "R", "link_qr"), ("R", "P", "link_rp")):
        with pytest.raises(ProcessCompositionError, match="closed chain"):
            compose_processes(m.process(p1), m.process(p2), m.protocol(via))


def test_process_problems(network):
    assert network.process("buyer").problems() == []
