import pytest
from hypothesis import given
from hypothesis import strategies as st

from conftest import load, toggle_nioa
from oracles import replay_cbr
from ioacalc.automata import EPS, NIOA, Finite, Transition, weakly_synchronized_product
from ioacalc.coordination import CoordinatedAutomaton
from ioacalc.execution import (
    ACCEPTED,
    REJECTED,
    UNDETERMINED,
    InputRejected,
    QuasiDeterminismError,
    SchedulerConfig,
    check_fairness,
    run,
    validate_cbr_trace,
)


@pytest.fixture(scope="module")
def pingpong():
    return load("pingpong.ioa").protocol("pingpong")


def _sends(step):
    return any(x is not EPS for x in step.transition.out)


@pytest.mark.parametrize("seed", range(100))
def test_pingpong_alternates(pingpong, seed):
    tr = run(pingpong, SchedulerConfig(seed=seed, max_steps=20))
    kinds = [_sends(s) for s in tr.steps]
    assert kinds == [True, False] * 10


def test_same_seed_same_trace(pingpong):
    cfg = SchedulerConfig(seed=7, max_steps=50)
    assert run(pingpong, cfg).to_text() == run(pingpong, cfg).to_text()


def test_trace_text_layout(pingpong):
    text = run(pingpong, SchedulerConfig(seed=7, max_steps=4)).to_text()
    lines = text.splitlines()
    assert lines[0] == "# target pingpong"
    assert lines[3] == "0|(a0|b0)|eps|A.fwd.p|-"
    assert lines[4] == "1|(a1|b0)|B.fwd.p|eps|fwd=p"
    assert lines[-1] == "# acceptance accepted"  # four steps close the cycle


def test_muller_acceptance_on_lasso(pingpong):
    assert run(pingpong, SchedulerConfig(max_steps=12)).accepted == ACCEPTED


def test_finite_acceptance_at_halt():
    p = load("pingpong_stop.ioa").protocol("pingpong_stop")
    outcomes = {run(p, SchedulerConfig(seed=s, max_steps=200)).accepted for s in range(30)}
    assert outcomes == {ACCEPTED}
    d = load("deadlock.ioa").protocol("deadlock")
    tr = run(d, SchedulerConfig(max_steps=10))
    assert tr.halted and tr.accepted == REJECTED and tr.steps == ()


def test_open_automaton_never_halts_undetermined():
    assert run(toggle_nioa(), SchedulerConfig(max_steps=5)).accepted == UNDETERMINED


def test_script_drives_inputs():
    tr = run(toggle_nioa(), SchedulerConfig(max_steps=10), ["press.push", "press.push", "press.push"])
    assert [s.transition.label for s in tr.steps] == ["up", "down", "up"]
    assert tr.halted


def test_script_rejects_illegal_input():
    with pytest.raises(InputRejected, match="input rejected at step 0"):
        run(toggle_nioa(), SchedulerConfig(), ["press.pull"])
    lamp = toggle_nioa().with_transitions(toggle_nioa().transitions[:1])
    with pytest.raises(InputRejected, match="input rejected at step 1"):
        run(lamp, SchedulerConfig(), ["press.push", "press.push"])


def test_coordinated_target_must_be_quasi_deterministic():
    a = NIOA("A", ("a0", "a1", "a2"), (), (), "a0", Finite({"a1", "a2"}),
             (Transition("a0", "a1", (), (), "x"), Transition("a0", "a2", (), (), "y")))
    c = CoordinatedAutomaton(a, (a,), (), a)
    with pytest.raises(QuasiDeterminismError, match="at a0"):
        run(c, SchedulerConfig())


def _chooser(n_loops):
    ts = tuple(Transition("q", "q", (), (), f"l{k}") for k in range(n_loops))
    return NIOA("C", ("q",), (), (), "q", Finite({"q"}), ts)


@pytest.mark.parametrize("policy", ["weak", "strong"])
def test_fair_policies_pass_the_fairness_check(policy):
    a = _chooser(4)
    tr = run(a, SchedulerConfig(seed=3, policy=policy, max_steps=400))
    assert check_fairness(tr, a, policy, window=4).fair


def test_fairness_check_flags_starvation():
    a = _chooser(2)
    tr = run(a, SchedulerConfig(seed=0, max_steps=1))
    starved = tr.__class__(**{**tr.__dict__, "steps": tr.steps * 0 + tuple(
        type(tr.steps[0])(i, "q", (), a.transitions[0]) for i in range(10))})
    r = check_fairness(starved, a, "weak", window=5)
    assert not r.fair and r.key == "eps:l1"


@given(st.integers(0, 10**6))
def test_runs_satisfy_channel_rules(seed):
    p = load("buyer_seller_bank.ioa").protocol("purchase")
    tr = run(p, SchedulerConfig(seed=seed, max_steps=60))
    assert validate_cbr_trace(tr, p.base, p.cbr.channels) == []
    pairs = [(c.out_component, c.in_component) for c in p.cbr.channels]
    assert replay_cbr(p.base, pairs, [(s.state, s.transition.inp, s.transition.out) for s in tr.steps]) == []


def test_validator_catches_tampering(pingpong):
    tr = run(pingpong, SchedulerConfig(seed=1, max_steps=6))
    base = pingpong.base
    swapped = tr.steps[:1] + tr.steps[2:]
    bad = tr.__class__(**{**tr.__dict__, "steps": swapped})
    assert validate_cbr_trace(bad, base, pingpong.cbr.channels)


def test_product_run_without_channels():
    p = weakly_synchronized_product([toggle_nioa("a"), toggle_nioa("b")])
    tr = run(p, SchedulerConfig(seed=2, max_steps=10))
    assert len(tr.steps) == 10
