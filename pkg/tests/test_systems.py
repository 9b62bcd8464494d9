import pytest
from hypothesis import given
from hypothesis import strategies as st

from conftest import load, stateless_table
from oracles import mu, recursion
from ioacalc.automata import EPS, is_deterministic
from ioacalc.systems import (
    MAX_NATURAL,
    AlphabetMismatch,
    BudgetExhausted,
    NaturalOverflow,
    NoSpontaneousActivity,
    SystemSpec,
    check_compositionality,
    compose_loop,
    compose_parallel,
    compose_sequential,
    compose_u,
    compose_while,
    counter_system,
    functionally_equivalent,
    identity_system,
    loop_body,
    normal_form,
    stateless,
    step,
    to_diofa,
    zero_finder,
)

BITS2 = [(x, y) for x in range(4) for y in range(4)]


def toggle(name="T", states=("q0", "q1")):
    a, b = states
    return SystemSpec.from_table({(a, "a"): (b, "z"), (b, "a"): (a, "z")}, a, name=name)


def multiplier(inputs=BITS2):
    return stateless(lambda i: (i[0] * i[1]) % 2**31, inputs, name="mul")


def run_system(s, inputs):
    q, outs = s.initial, []
    for i in inputs:
        q, o = step(s, q, i)
        outs.append(o)
    return outs


def test_step_examples():
    bits3 = [(x, y) for x in range(8) for y in range(8)]
    assert step(multiplier(bits3), 0, (3, 4)) == (0, 12)
    ident = identity_system({"x", "y"})
    assert step(ident, 0, "x") == (0, "x")
    t = toggle()
    assert step(t, "q0", "a") == ("q1", "z")
    assert step(t, "q1", "a") == ("q0", "z")


def test_unclocked_system_has_no_spontaneous_activity():
    with pytest.raises(NoSpontaneousActivity, match="no spontaneous activity"):
        step(toggle(), "q0", EPS)
    with pytest.raises(NoSpontaneousActivity):
        SystemSpec.from_table({("q", EPS): ("q", 1)}, "q", clocked=False)


def test_from_table_checks_totality():
    with pytest.raises(ValueError, match="not total"):
        SystemSpec.from_table({("a", 0): ("b", 0)}, "a", inputs={0})


def test_to_diofa_sizes():
    d = to_diofa(toggle())
    assert len(d.states) == 2 and len(d.transitions) == 2 and is_deterministic(d)
    m = to_diofa(multiplier())
    assert len(m.states) == 1 and len(m.transitions) == 16
    assert not any(t.spontaneous for t in d.transitions)


def test_to_diofa_clocked_uses_tick():
    par = load("systems.ioa").systems["parity"]
    d = to_diofa(par)
    assert is_deterministic(d)
    assert "tick" in d.inputs[0]


@given(stateless_table(inputs=(0, 1, 2, 3)), stateless_table(inputs=(0, 1, 2, 3)))
def test_sequential_stateless_is_function_composition(f, g):
    s = compose_sequential(f, g)
    for i in range(4):
        assert step(s, s.initial, i)[1] == g.fn("s", f.fn("s", i)[1])[1]


def test_sequential_alphabet_mismatch():
    f = stateless(lambda i: i + 10, range(2))
    g = identity_system(range(2))
    with pytest.raises(AlphabetMismatch, match="extra"):
        compose_sequential(f, g)


def test_toggle_after_toggle_unrolled():
    # s1 fires, its output feeds s2 within the same composed step
    t1 = toggle("A")
    t2 = SystemSpec.from_table({("p", "z"): ("r", "y"), ("r", "z"): ("p", "w")}, "p", name="B")
    s = compose_sequential(t1, t2)
    q = s.initial
    seen = []
    for _ in range(4):
        q, o = step(s, q, "a")
        seen.append((q, o))
    assert seen == [
        (("q1", "z", "r"), "y"),
        (("q0", "z", "p"), "w"),
        (("q1", "z", "r"), "y"),
        (("q0", "z", "p"), "w"),
    ]


def test_parallel_and_xor():
    bits = [(x, y) for x in (0, 1) for y in (0, 1)]
    and_ = stateless(lambda i: i[0] & i[1], bits, name="and")
    xor = stateless(lambda i: i[0] ^ i[1], bits, name="xor")
    p = compose_parallel(and_, xor)
    assert step(p, p.initial, (1, 1))[1] == (1, 0)
    assert p.is_stateless()


def test_parallel_duplicates_output():
    t = toggle()
    p = compose_parallel(t, t)
    assert run_system(p, ["a"] * 3) == [("z", "z")] * 3


def test_parallel_input_mismatch():
    with pytest.raises(AlphabetMismatch):
        compose_parallel(identity_system(range(2)), identity_system(range(3)))


def test_u_composition():
    dbl = stateless(lambda i: 2 * i, range(4), name="dbl")
    inc = stateless(lambda i: i + 1, range(0, 7, 2), name="inc")
    sq = stateless(lambda i: i * i, range(1, 8, 2), name="sq")
    u = compose_u(dbl, inc, sq)
    assert step(u, u.initial, 2)[1] == 25
    assert "not a system" in u.meta["note"]
    ref = compose_sequential(compose_sequential(dbl, inc), sq)
    for i in range(4):
        assert step(u, u.initial, i)[1] == step(ref, ref.initial, i)[1]


def test_u_of_identities_is_identity():
    ident = identity_system(range(3))
    u = compose_u(ident, ident, ident)
    assert functionally_equivalent(u, ident).verified


TRI_G = lambda a: a  # noqa: E731
TRI_H = lambda a, b, c: c + b + 1  # noqa: E731


def test_loop_examples():
    body = loop_body(TRI_H, TRI_G)
    assert compose_loop(counter_system(), body, 0, 3).meta["value"] == 6
    assert compose_loop(counter_system(), body, 5, 0).meta["value"] == 5
    # f(a, 1) = h(a, 0, g(a))
    assert compose_loop(counter_system(), body, 5, 1).meta["value"] == TRI_H(5, 0, TRI_G(5))
    rows = compose_loop(counter_system(), body, 0, 3).meta["rows"]
    assert [r[2] for r in rows] == [0, 1, 3, 6]


@given(st.integers(0, 8), st.integers(0, 8))
def test_loop_matches_recursion(a, n):
    g = lambda a: 2 * a + 1  # noqa: E731
    h = lambda a, b, c: (a * c + b) % 97  # noqa: E731
    assert compose_loop(counter_system(), loop_body(h, g), a, n).meta["value"] == recursion(g, h, a, n)


def test_loop_budget_and_overflow():
    with pytest.raises(BudgetExhausted):
        compose_loop(counter_system(limit=2), loop_body(TRI_H, TRI_G), 0, 3)
    with pytest.raises(NaturalOverflow):
        compose_loop(counter_system(), loop_body(lambda a, b, c: c * 2**40, lambda a: 1), 0, 2)
    assert MAX_NATURAL == 2**63 - 1


def test_while_examples():
    z = compose_while(counter_system(), zero_finder(lambda a, b: abs(b - 3)), 17, 10)
    assert z.delta == 3 and not z.exhausted
    assert compose_while(counter_system(), zero_finder(lambda a, b: b), 0, 10).delta == 0
    none = compose_while(counter_system(), zero_finder(lambda a, b: 1), 0, 10)
    assert none.exhausted and none.delta is None


@given(st.integers(0, 40), st.integers(0, 5))
def test_while_is_minimal(delta, a):
    g = lambda a, b: 0 if b in (delta, delta + 3) else b + 1  # noqa: E731
    res = compose_while(counter_system(), zero_finder(g), a, 60)
    assert res.delta == mu(g, a, 60) == delta
    assert all(g(a, b) != 0 for b in range(res.delta))


def test_equivalence_self_and_renaming():
    t = toggle()
    r = functionally_equivalent(t, t)
    assert r.verified and all(k == v for k, v in r.phi.items())
    ren = toggle(states=("x", "y"))
    r2 = functionally_equivalent(t, ren)
    assert r2.verified
    assert {k[0]: v[0] for k, v in r2.phi.items()} == {"q0": "x", "q1": "y"}


def test_equivalence_counterexample():
    a = stateless(lambda i: i % 2, range(4))
    b = stateless(lambda i: 0 if i == 3 else i % 2, range(4))
    r = functionally_equivalent(a, b)
    assert not r.equivalent and r.counterexample


@given(stateless_table(), st.data())
def test_identity_after_system_is_equivalent(s, data):
    ident = identity_system(s.outputs)
    assert functionally_equivalent(compose_sequential(s, ident), s).verified


@given(st.data())
def test_right_distribution(data):
    sys_ = data.draw(stateless_table(inputs=(0, 1, 2)))
    dom = tuple(sorted(sys_.outputs))
    p1 = data.draw(stateless_table(inputs=dom))
    p2 = data.draw(stateless_table(inputs=dom))
    left = compose_sequential(sys_, compose_parallel(p1, p2))
    right = compose_parallel(compose_sequential(sys_, p1), compose_sequential(sys_, p2))
    assert functionally_equivalent(left, right).verified


@given(st.data())
def test_sequential_is_associative(data):
    a = data.draw(stateless_table(inputs=(0, 1, 2)))
    b = data.draw(stateless_table(inputs=tuple(sorted(a.outputs))))
    c = data.draw(stateless_table(inputs=tuple(sorted(b.outputs))))
    x = compose_sequential(compose_sequential(a, b), c)
    y = compose_sequential(a, compose_sequential(b, c))
    assert functionally_equivalent(x, y).verified


def test_compositionality_reports():
    f = stateless(lambda i: (i + 1) % 4, range(4))
    g = stateless(lambda i: (2 * i) % 4, range(4))
    assert check_compositionality("seq", [(f, g)]).verdict == "compositional"
    assert check_compositionality("par", [(f, g)]).verdict == "compositional"
    body = loop_body(TRI_H, TRI_G)
    assert check_compositionality("loop", [(counter_system(), body, 0, 3)]).verdict == "compositional"


def test_while_is_emergent_with_explicit_pair():
    # the two finders agree below 5, then find zeros at 5 and 7
    m = load("systems.ioa")
    g5, g7 = m.functions["zero5"], m.functions["zero7"]
    assert all(g5(0, b) == g7(0, b) for b in range(5))
    d5 = compose_while(counter_system(), zero_finder(g5), 0, 20).delta
    d7 = compose_while(counter_system(), zero_finder(g7), 0, 20).delta
    assert (d5, d7) == (5, 7)
    rep = check_compositionality("while", [(counter_system(), zero_finder(g5), 0, 20)])
    assert rep.verdict == "emergent"


@given(stateless_table(inputs=BITS2[:4] + BITS2[8:12]))
def test_normal_form_found_for_stateless_tuple_systems(s):
    nf = normal_form(s)
    assert nf is not None, f"no normal form for {s.table()}"
    assert functionally_equivalent(s, nf.system).verified


def test_normal_form_coordinates():
    bits = [(x, y) for x in (0, 1) for y in (0, 1)]
    first = stateless(lambda i: i[0], bits)
    assert normal_form(first).coordinates == (0,)
    both = stateless(lambda i: i[0] & i[1], bits)
    assert normal_form(both).coordinates == (0, 1)
