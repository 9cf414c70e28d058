import io
import json

import pytest

from pmps.cli import run
from tests.conftest import TWOBUYERS

F = str(TWOBUYERS)
QUERY = 'sent(as,"The Art of War") | sent(as,0195014766) & chose(ab, quote/3)'


def call(*argv):
    out, err = io.StringIO(), io.StringIO()
    code = run(list(argv), out, err)
    return code, out.getvalue(), err.getvalue()


def test_check():
    code, out, _ = call("check", F)
    assert code == 0
    assert "TwoBuyers: well-typed, Delta = {}" in out


def test_check_failure(tmp_path):
    bad = tmp_path / "bad.pmps"
    bad.write_text(TWOBUYERS.read_text().replace("0.2: as!<0195014766>", "0.3: as!<0195014766>"))
    code, out, _ = call("check", str(bad), "--system", "TwoBuyers")
    assert code == 1
    assert "probability-sum" in out


def test_parse_error_exit_code(tmp_path):
    bad = tmp_path / "bad.pmps"
    bad.write_text("proc P = k!<1\n")
    code, _, err = call("check", str(bad))
    assert code == 2
    assert "1:" in err


def test_missing_file():
    assert call("check", "/nonexistent.pmps")[0] == 2


def test_project_alice():
    code, out, _ = call("project", F, "--role", "1")
    assert code == 0
    assert out.strip() == ("[0.7,0.9]: as!<string>. as?(int). 1: ab!<int>. end"
                           " + [0.15,0.25]: as!<nat>. as?(int). 1: ab!<int>. end")


def test_project_by_role_name():
    assert call("project", F, "--role", "Alice")[1] == call("project", F, "--role", "1")[1]


def test_project_unknown_role():
    assert call("project", F, "--role", "Carol")[0] == 1


def test_simplify():
    code, out, _ = call("simplify", F)
    assert code == 0 and out.startswith("Purchase = Alice ->[0.7,0.9] Seller")


def test_step_lists_par1():
    code, out, _ = call("step", F, "--process", "Open")
    assert code == 0
    assert "Com+Par1 p=1/5" in out


def test_graph_writes_dot(tmp_path):
    dot = tmp_path / "g.dot"
    code, out, _ = call("graph", F, "--depth", "20", "--dot", str(dot))
    assert code == 0
    assert dot.read_text().startswith("digraph")
    assert "0 error edges" in out


def test_prob():
    code, out, _ = call("prob", F, "--depth", "20", "--query", QUERY)
    assert (code, out.strip()) == (0, "7/50 (0.14)")


def test_prob_bad_query():
    assert call("prob", F, "--query", "sent(as")[0] == 2


def test_prob_records():
    code, out, _ = call("prob", F, "--query", QUERY, "--format", "records")
    rec = json.loads(out)
    assert rec["lo"] == "7/50" and rec["result"] == "Exact"


def test_depth_from_environment(monkeypatch):
    monkeypatch.setenv("PMPS_DEPTH", "2")
    code, out, _ = call("prob", F, "--query", "true")
    assert code == 0 and "depth bound reached" in out


def test_mc_deterministic():
    a = call("mc", F, "--query", QUERY, "--runs", "2000", "--seed", "3")
    b = call("mc", F, "--query", QUERY, "--runs", "2000", "--seed", "3")
    assert a == b and a[0] == 0
    assert "±" in a[1]


def test_meta(tmp_path):
    code, out, _ = call("meta", F, "--depth", "12", "--process", "TwoBuyers")
    assert code == 0
    assert "subject reduction: ok" in out


def test_meta_records():
    code, out, _ = call("meta", F, "--depth", "12", "--process", "TwoBuyers", "--format", "records")
    lines = [json.loads(line) for line in out.splitlines()]
    assert code == 0 and lines and all(r["ok"] for r in lines)


def test_unknown_command():
    with pytest.raises(SystemExit):
        run(["frobnicate", F])
