import pytest
from hypothesis import given
from hypothesis import strategies as st

from conftest import load, small_nioa, toggle_nioa
from oracles import product_bfs
from ioacalc.automata import (
    EPS,
    NIOA,
    AlphabetCollision,
    Alphabet,
    Finite,
    Muller,
    ProjectionError,
    ProjectionMap,
    StateCapExceeded,
    Transition,
    TransitionPartition,
    accepts_at_halt,
    accepts_cycle,
    identity_projection,
    is_deterministic,
    is_quasi_deterministic,
    isomorphic,
    partition_transitions,
    project,
    quasi_determinism_violation,
    reachable_states,
    role_projection,
    shortest_path,
    trim,
    validate,
    weakly_synchronized_product,
)


def test_corpus_roles_are_valid(buyer_seller):
    for a in buyer_seller.automata.values():
        assert validate(a) == []


def test_validate_reports_dangling_and_untyped():
    a = toggle_nioa()
    bad = a.with_transitions(a.transitions + (Transition("off", "nowhere", ("push",), ("blue",)),))
    problems = validate(bad)
    assert any("dangling" in p for p in problems)
    assert any("untyped output" in p for p in problems)


def test_validate_rejects_eps_symbol_and_empty_muller_set():
    a = NIOA("x", ("q",), (Alphabet("i", {"eps"}),), (), "q", Muller([()]), ())
    problems = validate(a)
    assert any("epsilon" in p for p in problems)
    assert any("empty Muller" in p for p in problems)


def test_toggle_is_deterministic():
    a = toggle_nioa()
    assert is_deterministic(a)
    assert is_quasi_deterministic(a)


def test_quasi_determinism_allows_input_choice_but_not_duplicates():
    a = toggle_nioa()
    dup = a.with_transitions(a.transitions + (Transition("off", "off", ("push",), (EPS,)),))
    q, clash = quasi_determinism_violation(dup)
    assert q == "off" and len(clash) == 2


def test_product_of_toggles_has_four_states():
    p = weakly_synchronized_product([toggle_nioa("a"), toggle_nioa("b")])
    assert len(p.states) == 4
    assert [x.name for x in p.inputs] == ["a.press", "b.press"]
    assert p.factors == ("a", "b")
    for t in p.transitions:
        # exactly one factor moves
        assert sum(s is not EPS for s in t.inp) == 1


def test_product_rejects_duplicate_factors_and_merged_clash():
    with pytest.raises(AlphabetCollision):
        weakly_synchronized_product([toggle_nioa(), toggle_nioa()])
    with pytest.raises(AlphabetCollision):
        weakly_synchronized_product([toggle_nioa("a"), toggle_nioa("b")], merge_names=True)


def test_product_cap():
    with pytest.raises(StateCapExceeded):
        weakly_synchronized_product([toggle_nioa("a"), toggle_nioa("b")], cap=3)


def test_three_role_product_matches_bfs_oracle(network):
    roles = [network.automata[r] for r in ("buyer_order", "seller_order", "bank")]
    p = weakly_synchronized_product(roles)
    assert len(p.states) == len(product_bfs(roles)) == 27


def test_projection_recovers_buyer(buyer_seller):
    buyer, seller = buyer_seller.automata["buyer"], buyer_seller.automata["seller"]
    p = weakly_synchronized_product([buyer, seller])
    img = project(p, role_projection(p, "buyer"), name="buyer")
    assert set(img.transitions) == set(buyer.transitions)
    assert img.states == buyer.states and img.initial == buyer.initial
    assert img.acceptance == buyer.acceptance


def test_projection_dropping_all_io_gives_silent_moves():
    a = toggle_nioa()
    img = project(a, ProjectionMap({q: q for q in a.states}), drop_stutter=False)
    assert all(t.silent for t in img.transitions)
    assert len(img.transitions) == 2


def test_projection_must_be_idempotent_and_total():
    a = toggle_nioa()
    with pytest.raises(ProjectionError):
        project(a, ProjectionMap({"off": "on", "on": "off"}))
    with pytest.raises(ProjectionError):
        project(a, ProjectionMap({"off": "off"}))


def test_isomorphic_renaming():
    a = toggle_nioa()
    ren = {"off": "0", "on": "1"}
    b = NIOA("t2", ("0", "1"), a.inputs, a.outputs, "0", Finite({"0", "1"}),
             tuple(Transition(ren[t.src], ren[t.dst], t.inp, t.out, t.label) for t in a.transitions))
    assert isomorphic(a, b) == ren
    c = b.with_transitions(b.transitions[:1])
    assert isomorphic(a, c) is None


def test_acceptance_stutter_semantics():
    a = NIOA("m", ("p", "q"), (), (), "p", Muller([{"p"}, {"p", "q"}]),
             (Transition("p", "q", (), ()), Transition("q", "p", (), ())))
    assert accepts_at_halt(a, "p")
    assert not accepts_at_halt(a, "q")
    assert accepts_cycle(a, ["p", "q"])
    assert not accepts_cycle(a, ["q"])


def test_shortest_path_and_trim():
    a = toggle_nioa()
    path = shortest_path(a, lambda q: q == "on")
    assert [t.label for t in path] == ["up"]
    extra = NIOA("x", ("a", "b", "c"), (), (), "a", Finite({"c"}), (Transition("a", "b", (), ()),))
    t = trim(extra)
    assert t.states == ("a", "b") and t.acceptance == Finite()


def test_partition_groups_by_mode_and_class():
    m = load("gatekeeper.ioa")
    a = m.automata["A"]
    parts = partition_transitions(a, TransitionPartition())
    assert sum(len(v) for v in parts.values()) == len(a.transitions)


@given(small_nioa("A"), small_nioa("B"))
def test_product_out_degree_is_sum_of_factors(a, b):
    p = weakly_synchronized_product([a, b])
    oracle = product_bfs([a, b])
    assert len(p.states) == len(oracle)
    for q in p.states:
        assert len(p.outgoing[q]) == oracle[p.components[q]]


@given(small_nioa("A"), small_nioa("B"))
def test_projection_of_product_is_the_reachable_role(a, b):
    p = weakly_synchronized_product([a, b])
    img = project(p, role_projection(p, "A"))
    ra = reachable_states(a)
    expected = {t for t in a.transitions if t.src in ra and not (t.silent and t.src == t.dst)}
    assert set(img.transitions) == expected


@given(small_nioa())
def test_identity_projection_is_identity(a):
    img = project(a, identity_projection(a), drop_stutter=False)
    assert img == a


@given(small_nioa(), st.permutations(["q0", "q1", "q2", "q3"]))
def test_isomorphic_under_any_renaming(a, perm):
    ren = {q: f"r{perm[i][1]}" for i, q in enumerate(a.states)}
    b = NIOA("b", tuple(ren.values()), a.inputs, a.outputs, ren[a.initial],
             Finite(ren[q] for q in a.acceptance.states),
             tuple(Transition(ren[t.src], ren[t.dst], t.inp, t.out, t.label) for t in a.transitions))
    assert isomorphic(a, b) is not None
