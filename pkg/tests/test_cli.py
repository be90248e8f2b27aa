import json
from pathlib import Path

import pytest

from sds.cli import main

GOLDEN = Path(__file__).parent / "golden"
SENTENCE = "a player was holding a bat"


def run(capsys, *argv):
    code = main(list(argv))
    out = capsys.readouterr()
    return code, out.out, out.err


def test_validate_ok(capsys):
    code, out, _ = run(capsys, "validate", "examples/sleep.kb.json")
    assert code == 0 and out.startswith("OK")


def test_validate_reports_every_error(tmp_path, capsys):
    bad = tmp_path / "bad.kb.json"
    bad.write_text(json.dumps({"alpha": 0.5, "scenarios": {"s": {"a": 0.9}, "t": {"b": 1.0}},
                               "concepts": {"a": {"preds": {"a": 1}}}}))
    code, out, _ = run(capsys, "validate", str(bad))
    assert code == 1
    assert "sums to 0.9" in out and "undeclared concept 'b'" in out


def test_validate_missing_file(capsys):
    code, out, _ = run(capsys, "validate", "no/such/file.kb.json")
    assert code == 2


def test_validate_malformed_json(tmp_path, capsys):
    p = tmp_path / "x.json"
    p.write_text("{not json")
    assert run(capsys, "validate", str(p))[0] == 1


def test_interpret_rejection(capsys):
    code, out, _ = run(capsys, "interpret", "--kb", "examples/player_bat_2scen.kb.json",
                       "--sentence", SENTENCE, "--alpha-override", "0.5", "--query", "sense:y")
    rep = json.loads(out)
    assert code == 0
    assert rep["queries"][0]["distribution"]["bat_stick"] == pytest.approx(0.75, abs=0.04)
    assert rep["stats"]["accepted"] == 2000 and rep["stats"]["attempts"] >= 2000
    assert rep["seed"] == 42


def test_interpret_exact(capsys):
    code, out, _ = run(capsys, "interpret", "--kb", "player_bat_2scen", "--sentence", SENTENCE,
                       "--alpha-override", "0.5", "--query", "sense:y", "--mode", "exact")
    dist = json.loads(out)["queries"][0]["distribution"]
    assert abs(dist["bat_stick"] - 0.75) < 1e-9


def test_interpret_tsv_and_query_kinds(capsys):
    code, out, _ = run(capsys, "interpret", "--kb", "vampire_eating", "--sentence",
                       "a vampire was eating", "--mode", "exact", "--format", "tsv",
                       "--query", "role:e:eat_Location", "--query", "entailment:x:vampire",
                       "--query", "topk:2")
    assert code == 0
    lines = out.splitlines()
    assert "role:e:eat_Location\t<realized>\t0.200000" in lines
    assert "entailment:x:vampire\t1.000000" in lines
    assert sum(l.startswith("topk:2\t") for l in lines) == 2


def test_interpret_drs_input(capsys):
    code, out, _ = run(capsys, "interpret", "--kb", "sleep", "--drs",
                       "drs([e,x],[sleep(e),bat(x),Theme(e,x)])", "--mode", "exact",
                       "--query", "sense:x")
    assert json.loads(out)["queries"][0]["distribution"] == {"bat_animal": 1.0}


@pytest.mark.parametrize("argv, needle", [
    (["--sentence", "a zebra slept"], "unknown word"),
    (["--drs", "drs([x],[bat(y)])"], "undeclared"),
    (["--sentence", "a bat slept", "--query", "sense"], "bad query"),
    (["--sentence", "a bat slept", "--query", "sense:q"], "unknown referent"),
    (["--sentence", "a bat slept", "--query", "topk:0"], "at least 1"),
    (["--sentence", "a bat slept", "--samples", "0"], "at least 1"),
])
def test_interpret_errors(capsys, argv, needle):
    code, _, err = run(capsys, "interpret", "--kb", "sleep", *argv)
    assert code == 1 and needle in err


def test_interpret_starvation_exit_code(capsys):
    code, out, err = run(capsys, "interpret", "--kb", "player_bat_2scen", "--sentence", SENTENCE,
                         "--max-attempts", "50")
    assert code == 3
    assert json.loads(out)["attempts"] == 50
    assert "starvation" in err


def test_interpret_is_byte_identical(capsys):
    argv = ["interpret", "--kb", "astronomer", "--sentence", "an astronomer married a star",
            "--samples", "500", "--seed", "3", "--query", "sense:y", "--query", "topk:3"]
    outs = {run(capsys, *argv)[1] for _ in range(3)}
    assert len(outs) == 1


@pytest.mark.parametrize("name, argv", [
    ("player_bat_exact", ["--kb", "player_bat_2scen", "--sentence", SENTENCE, "--mode", "exact",
                          "--query", "sense:y", "--query", "topk:4"]),
    ("player_bat_rejection", ["--kb", "player_bat_2scen", "--sentence", SENTENCE,
                              "--samples", "300", "--seed", "7", "--query", "sense:y"]),
    ("vampire_exact", ["--kb", "vampire_eating", "--sentence", "a vampire was eating",
                       "--mode", "exact", "--query", "role:e:eat_Theme",
                       "--query", "role:e:eat_Location"]),
])
def test_golden_outputs(capsys, name, argv, request):
    _, out, _ = run(capsys, "interpret", *argv)
    path = GOLDEN / f"{name}.json"
    if request.config.getoption("--update-golden"):
        path.write_text(out)
    assert out == path.read_text()


def test_reproduce(capsys):
    code, out, _ = run(capsys, "reproduce", "astronomer")
    assert code == 0
    assert "0.4615" in out and "4/4 cells pass" in out


def test_reproduce_unknown_table(capsys):
    code, _, err = run(capsys, "reproduce", "nope")
    assert code == 1 and "unknown table" in err


def test_sample(capsys):
    code, out, _ = run(capsys, "sample", "--kb", "sleep", "--n", "5", "--seed", "1")
    assert code == 0 and len(out.splitlines()) == 5
    assert out == run(capsys, "sample", "--kb", "sleep", "--n", "5", "--seed", "1")[1]
