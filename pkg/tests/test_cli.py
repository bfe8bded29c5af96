import csv
import io
import json
from fractions import Fraction

import pytest

from fragmc.casegen import fx_intro, gen_fx
from fragmc.cli import (
    EXIT_OK,
    EXIT_PARSE,
    EXIT_SOLVE,
    EXIT_USAGE,
    EXIT_VERIFY,
    RunConfig,
    main,
    parse_alpha_range,
    parse_point,
)
from fragmc.compose import evaluate_system, system_from_json
from fragmc.model import parse_model, render_model
from fragmc.oracle import oracle_reach


@pytest.fixture
def seq_r2(tmp_path):
    p = tmp_path / "seq_r2.pm"
    p.write_text(render_model(gen_fx("SEQ_R", 2)))
    return p


@pytest.fixture
def intro(tmp_path):
    p = tmp_path / "intro.pm"
    p.write_text(render_model(fx_intro()))
    return p


def run(capsys, *argv):
    rc = main([str(a) for a in argv])
    out = capsys.readouterr()
    return rc, out.out, out.err


def test_check_writes_system(capsys, seq_r2, tmp_path):
    out_json = tmp_path / "sys.json"
    rc, out, _ = run(capsys, "check", seq_r2, "-t", "successFX", "-a", 6, "-o", out_json)
    assert rc == EXIT_OK
    assert "fragments:" in out and "op_count:" in out and "states/transitions: 29/58 ->" in out
    assert "time fragmentation:" in out and "time total:" in out
    data = json.loads(out_json.read_text())
    assert data["result"] == "result"
    m = gen_fx("SEQ_R", 2)
    sys_ = system_from_json(out_json.read_text())
    pt = {i: Fraction(1, 2) for i in range(len(m.params))}
    assert evaluate_system(sys_, pt) == oracle_reach(m, m.states_with_label("successFX"), pt)


def test_check_alpha_one_all_single(capsys, tmp_path):
    # SEQ_R k=2 at alpha=1 is a monolithic elimination that exceeds the term budget
    p = tmp_path / "seq1.pm"
    p.write_text(render_model(gen_fx("SEQ", 1)))
    rc, out, _ = run(capsys, "check", p, "-t", "successFX", "-a", 1)
    assert rc == EXIT_OK
    assert "(0 multi-state)" in out


def test_check_missing_label(capsys, seq_r2):
    rc, _, err = run(capsys, "check", seq_r2, "-t", "nowhere")
    assert rc != EXIT_OK and rc == EXIT_PARSE
    assert "EmptyTarget" in err


def test_check_unparseable_model(capsys, tmp_path):
    p = tmp_path / "bad.pm"
    p.write_text("init 0\ntrans 0 x 1\n")
    rc, _, err = run(capsys, "check", p, "-t", "0")
    assert rc == EXIT_PARSE and "ModelSyntaxError" in err


def test_fragment_explain_and_report(capsys, seq_r2, tmp_path):
    rc, out, _ = run(capsys, "fragment", seq_r2, "-t", "successFX", "-a", 6, "--explain")
    assert rc == EXIT_OK and "fragments:" in out and len(out.splitlines()) > 2
    rep = tmp_path / "rep.json"
    rc, _, _ = run(capsys, "fragment", seq_r2, "-t", "successFX", "-a", 6, "-o", rep)
    data = json.loads(rep.read_text())
    assert data["n_fragments"] >= 1 and data["n_states"] >= 29


def test_eval_intro(capsys, intro, tmp_path):
    s = tmp_path / "intro.json"
    assert run(capsys, "check", intro, "-t", "success", "-o", s)[0] == EXIT_OK
    rc, out, _ = run(capsys, "eval", s, "--point", "p1=0.95,p2=0.8")
    assert rc == EXIT_OK and out.startswith("99/100")
    rc, _, err = run(capsys, "eval", s, "--point", "p1=0.95")
    assert rc == EXIT_USAGE and "missing" in err


def test_verify_pass(capsys, seq_r2, intro):
    rc, out, _ = run(capsys, "verify", seq_r2, "-t", "successFX", "-n", 20)
    assert rc == EXIT_OK and "pass" in out
    rc, out, _ = run(capsys, "verify", intro, "-t", "success", "-n", 20)
    assert rc == EXIT_OK and "max relative error 0" in out


def test_verify_corrupted_system_fails(capsys, seq_r2, tmp_path):
    s = tmp_path / "sys.json"
    assert run(capsys, "check", seq_r2, "-t", "successFX", "-a", 6, "-o", s)[0] == EXIT_OK
    data = json.loads(s.read_text())
    last = data["bindings"][-1]
    last["formula"] = f"({last['formula']}) * 9/10"
    s.write_text(json.dumps(data))
    rc, _, err = run(capsys, "verify", seq_r2, "-t", "successFX", "--system", s, "-n", 5)
    assert rc == EXIT_VERIFY and "relative error" in err


def test_verify_parameter_mismatch(capsys, seq_r2, intro, tmp_path):
    s = tmp_path / "intro.json"
    run(capsys, "check", intro, "-t", "success", "-o", s)
    rc, _, err = run(capsys, "verify", seq_r2, "-t", "successFX", "--system", s)
    assert rc == EXIT_VERIFY and "parameters" in err


def test_bench_rows(capsys, seq_r2, tmp_path):
    out_csv = tmp_path / "b.csv"
    rc, _, _ = run(capsys, "bench", seq_r2, "-t", "successFX", "--alpha-range", "4..6",
                   "-n", 3, "-o", out_csv)
    assert rc == EXIT_OK
    rows = list(csv.DictReader(io.StringIO(out_csv.read_text())))
    assert [int(r["alpha"]) for r in rows] == [4, 5, 6]
    assert all(r["verified"] == "pass" and int(r["op_count"]) > 0 and float(r["time"]) >= 0 for r in rows)


def test_bench_no_time_is_deterministic(capsys, intro):
    args = ("bench", intro, "-t", "success", "--alpha-range", "1..3", "-n", 2, "--no-time")
    rc1, a, _ = run(capsys, *args)
    rc2, b, _ = run(capsys, *args)
    assert rc1 == rc2 == EXIT_OK and a == b
    assert a.splitlines()[0] == "alpha,time,op_count,n_fragments,verified"


def test_bench_reports_solver_failure(capsys, tmp_path):
    p = tmp_path / "seq_r3.pm"
    p.write_text(render_model(gen_fx("SEQ_R", 3)))
    rc, out, _ = run(capsys, "bench", p, "-t", "successFX", "--alpha-range", "1", "-n", 1, "--no-time")
    assert rc == EXIT_SOLVE and "error:" in out


def test_gen_fx_and_sweep(capsys, tmp_path):
    out = tmp_path / "g.pm"
    assert run(capsys, "gen", "--strategy", "PROB", "--services", 5, "-o", out)[0] == EXIT_OK
    m = parse_model(out.read_text())
    assert (m.n_states, m.n_transitions) == (41, 100)
    rc, text, _ = run(capsys, "gen", "--strategy", "SEQ_R", "--sweep-fraction", 0.1, "--seed", 4)
    assert rc == EXIT_OK and len(parse_model(text).params) == 3
    rc, text, _ = run(capsys, "gen", "--loop-chain", 4)
    assert len(parse_model(text).params) == 4


def test_gen_seed_from_environment(capsys, monkeypatch):
    args = ("gen", "--strategy", "SEQ", "--services", 3, "--sweep-fraction", 0.5)
    monkeypatch.setenv("FRAGMC_SEED", "11")
    a = run(capsys, *args)[1]
    b = run(capsys, *args, "--seed", 11)[1]
    c = run(capsys, *args, "--seed", 12)[1]
    assert a == b != c


def test_usage_errors(capsys, seq_r2):
    with pytest.raises(SystemExit) as e:
        main(["check", str(seq_r2), "-t", "successFX", "-a", "0"])
    assert e.value.code == EXIT_USAGE
    rc, _, _ = run(capsys, "check", "/nonexistent/model.pm", "-t", "x")
    assert rc == EXIT_USAGE
    with pytest.raises(ValueError):
        RunConfig("check", samples=0)
    with pytest.raises(ValueError):
        parse_alpha_range("5..2")
    assert parse_alpha_range("3") == range(3, 4)
    with pytest.raises(ValueError):
        parse_point("q=1", ["p"])
