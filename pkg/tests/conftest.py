from pathlib import Path

import pytest
from hypothesis import settings
from hypothesis import strategies as st

from ioacalc.automata import EPS, NIOA, Alphabet, Finite, Transition
from ioacalc.dsl import load_files
from ioacalc.systems import SystemSpec

ROOT = Path(__file__).resolve().parent.parent
CORPUS = ROOT / "corpus"
GOLDEN = Path(__file__).resolve().parent / "golden"

settings.register_profile("default", deadline=None, max_examples=60)
settings.load_profile("default")


def corpus_files():
    return sorted(CORPUS.glob("*.ioa"))


def load(*names):
    model, errors = load_files([CORPUS / n for n in names])
    assert not errors, [str(e) for e in errors]
    return model


@pytest.fixture(scope="session")
def buyer_seller():
    return load("buyer_seller.ioa")


@pytest.fixture(scope="session")
def network():
    return load("buyer_seller_bank.ioa")


@pytest.fixture(scope="session")
def gatekeeper():
    return load("gatekeeper.ioa")


def toggle_nioa(name="toggle"):
    return NIOA(
        name,
        ("off", "on"),
        (Alphabet("press", {"push"}),),
        (Alphabet("lamp", {"lit", "dark"}),),
        "off",
        Finite({"off", "on"}),
        (
            Transition("off", "on", ("push",), ("lit",), "up"),
            Transition("on", "off", ("push",), ("dark",), "down"),
        ),
    )


@st.composite
def small_nioa(draw, name="A", max_states=4):
    """Random automaton with one input and one output component."""
    n = draw(st.integers(1, max_states))
    states = [f"q{i}" for i in range(n)]
    ins = ("a", "b")
    outs = ("x", "y")
    trans = draw(st.lists(
        st.tuples(
            st.sampled_from(states),
            st.sampled_from(states),
            st.sampled_from((EPS,) + ins),
            st.sampled_from((EPS,) + outs),
        ),
        max_size=8,
    ))
    acc = draw(st.sets(st.sampled_from(states)))
    ts = [Transition(s, d, (i,), (o,), f"t{k}") for k, (s, d, i, o) in enumerate(trans)]
    return NIOA(name, tuple(states), (Alphabet("in", ins),), (Alphabet("out", outs),), "q0", Finite(acc), tuple(ts))


@st.composite
def stateless_table(draw, inputs=None, max_out=4):
    """Random stateless system over a tiny integer alphabet, as a table-backed SystemSpec."""
    if inputs is None:
        inputs = tuple(range(draw(st.integers(1, 4))))
    outs = tuple(range(draw(st.integers(1, max_out))))
    f = {i: draw(st.sampled_from(outs)) for i in inputs}
    table = {("s", i): ("s", f[i]) for i in inputs}
    return SystemSpec.from_table(table, "s", inputs=inputs, outputs=set(f.values()), name="P")


# -- acceptance summary: one line per criterion --------------------------------

_criteria = {}


def pytest_configure(config):
    config.addinivalue_line("markers", "criterion(number, title): acceptance criterion")


@pytest.hookimpl(hookwrapper=True)
def pytest_runtest_makereport(item, call):
    outcome = yield
    rep = outcome.get_result()
    mark = item.get_closest_marker("criterion")
    if mark is None or rep.when not in ("setup", "call"):
        return
    number, title = mark.args
    if rep.failed or (rep.when == "call" and number not in _criteria):
        _criteria[number] = (title, "FAIL" if rep.failed else "PASS")


def pytest_terminal_summary(terminalreporter):
    if not _criteria:
        return
    terminalreporter.section("acceptance criteria")
    for number in sorted(_criteria):
        title, verdict = _criteria[number]
        terminalreporter.write_line(f"criterion {number:2d} {verdict}: {title}")
