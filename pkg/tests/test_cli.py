import json

import pytest

from conftest import CORPUS, load
from ioacalc.cli import main
from ioacalc.dsl import load_files


def cli(capsys, *argv):
    code = main([str(a) for a in argv])
    out = capsys.readouterr()
    return code, out.out, out.err


@pytest.mark.parametrize("name,target,code", [
    ("buyer_seller.ioa", "order_protocol", 0),
    ("pingpong.ioa", "pingpong", 0),
    ("deadlock.ioa", "deadlock", 1),
    ("livelock.ioa", "livelock", 1),
    ("gatekeeper.ioa", "gatekeeper", 0),
])
def test_check_verdicts(capsys, name, target, code):
    assert cli(capsys, "check", CORPUS / name, "--target", target)[0] == code


def test_check_usage_errors(capsys, tmp_path):
    assert cli(capsys, "check", CORPUS / "toggle.ioa", "--target", "nope")[0] == 2
    assert cli(capsys, "check", CORPUS / "toggle.ioa", "--target", "toggle")[0] == 2
    assert cli(capsys, "check", tmp_path / "missing.ioa", "--target", "x")[0] == 2
    bad = tmp_path / "bad.ioa"
    bad.write_text("automaton {")
    code, _, err = cli(capsys, "check", bad, "--target", "x")
    assert code == 2 and "bad.ioa:1:" in err
    assert cli(capsys, "check")[0] == 2


def test_check_cap_gives_unknown(capsys):
    code, out, _ = cli(capsys, "check", CORPUS / "buyer_seller_bank.ioa", "--target", "purchase", "--cap", "3")
    assert code == 3 and "verdict: unknown (capped)" in out


def test_check_report(capsys, tmp_path):
    rep = tmp_path / "r.json"
    cli(capsys, "check", CORPUS / "deadlock.ioa", "--target", "deadlock", "--report", rep)
    data = json.loads(rep.read_text())
    assert data["report_version"] == 1 and data["verdict"] == "fail"
    assert any(c["witnesses"] for c in data["checks"])


def test_compose_seq_matches_function_composition(capsys, tmp_path):
    out = tmp_path / "c.ioa"
    code, text, _ = cli(capsys, "compose", CORPUS / "systems.ioa", "--op", "seq", "--operands", "inc4", "dbl4",
                        "--out", out)
    assert code == 0 and "seq composition is compositional" in text
    model, errors = load_files([out])
    assert errors == []
    s = model.systems["seq_inc4_dbl4"]
    base = load("systems.ioa").systems
    for i in range(4):
        mid = base["inc4"].fn("s", i)[1]
        assert s.fn(s.initial, i)[1] == base["dbl4"].fn("s", mid)[1]


def test_compose_loop_and_while(capsys):
    code, text, _ = cli(capsys, "compose", CORPUS / "systems.ioa", "--op", "loop", "--operands", "tri_h", "tri_g",
                        "--a", "0", "--n", "3")
    assert code == 0 and "value=6" in text
    code, text, _ = cli(capsys, "compose", CORPUS / "systems.ioa", "--op", "while", "--operands", "zero3")
    assert code == 0 and "δ=3" in text
    code, text, _ = cli(capsys, "compose", CORPUS / "systems.ioa", "--op", "while", "--operands", "zero3",
                        "--budget", "2")
    assert code == 3 and "exhausted" in text
    assert cli(capsys, "compose", CORPUS / "systems.ioa", "--op", "loop", "--operands", "tri_g", "tri_g")[0] == 2


def test_compose_processes(capsys):
    code, text, _ = cli(capsys, "compose", CORPUS / "buyer_seller_bank.ioa", "--op", "process",
                        "--operands", "buyer", "seller", "--via", "order_protocol")
    assert code == 0 and "remaining roles: buyer_pay, seller_stock" in text
    code, _, err = cli(capsys, "compose", CORPUS / "triangle.ioa", "--op", "process",
                       "--operands", "P", "Q", "--via", "link_pq")
    assert code == 2 and "closed chain" in err


def test_compose_incompatible_alphabets(capsys):
    code, _, err = cli(capsys, "compose", CORPUS / "systems.ioa", "--op", "seq", "--operands", "inc4", "parity")
    assert code == 2 and "output alphabet of inc4" in err


def test_simulate_is_reproducible(capsys, tmp_path):
    a, b = tmp_path / "a.txt", tmp_path / "b.txt"
    for path in (a, b):
        code, out, _ = cli(capsys, "simulate", CORPUS / "pingpong.ioa", "--target", "pingpong", "--seed", "7",
                           "--steps", "20", "--trace", path)
        assert code == 0
    assert a.read_bytes() == b.read_bytes()
    steps = [line.rsplit("|", 3) for line in a.read_text().splitlines() if not line.startswith("#")]
    assert len(steps) == 20
    assert all((s[2] != "eps") == (k % 2 == 0) for k, s in enumerate(steps))
    assert "acceptance: accepted" in out


def test_simulate_script(capsys, tmp_path):
    script = tmp_path / "s.txt"
    script.write_text("press.push  # on\npress.push\n")
    code, out, _ = cli(capsys, "simulate", CORPUS / "toggle.ioa", "--target", "toggle", "--script", script)
    assert code == 0 and "steps: 2" in out
    script.write_text("press.pull\n")
    code, out, _ = cli(capsys, "simulate", CORPUS / "toggle.ioa", "--target", "toggle", "--script", script)
    assert code == 1 and "input rejected at step 0" in out


def test_simulate_uncoordinated_process(capsys, tmp_path):
    text = (CORPUS / "gatekeeper.ioa").read_text().replace("  rules gate;\n", "")
    f = tmp_path / "g.ioa"
    f.write_text(text)
    code, out, _ = cli(capsys, "simulate", f, "--target", "gatekeeper")
    assert code == 1 and "quasi-determinism violated at" in out


def test_coordinate(capsys, tmp_path):
    dot = tmp_path / "g.dot"
    code, out, _ = cli(capsys, "coordinate", CORPUS / "gatekeeper.ioa", "--target", "gatekeeper", "--dot", dot)
    assert code == 0 and dot.read_text().startswith("digraph")
    rules = tmp_path / "r.ioa"
    code, out, _ = cli(capsys, "coordinate", CORPUS / "gatekeeper.ioa", "--target", "gatekeeper", "--synthesize",
                       "--out", rules)
    assert code == 0 and "synthesis: found" in out
    assert load_files([rules])[1] == []


def test_export(capsys, tmp_path):
    code, out, _ = cli(capsys, "export", CORPUS / "toggle.ioa", "--target", "toggle")
    assert code == 0 and out.count("->") == 3
    dot = tmp_path / "p.dot"
    code, out, _ = cli(capsys, "export", CORPUS / "buyer_seller.ioa", "--target", "order_protocol", "--dot", dot)
    assert code == 0 and dot.exists()
    assert cli(capsys, "export", CORPUS / "systems.ioa", "--target", "parity")[0] == 0
    assert cli(capsys, "export", CORPUS / "toggle.ioa", "--target", "missing")[0] == 2
