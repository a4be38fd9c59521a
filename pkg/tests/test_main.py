import json

import pytest

from popdiff import __version__
from popdiff.core import counterexample
from popdiff.database.db_connector import get_db
from popdiff.database.models import RunLog
from popdiff.database.save_data import fetch_reports
from popdiff.main import dispatch


@pytest.fixture(autouse=True)
def workdir(tmp_path, monkeypatch):
    monkeypatch.chdir(tmp_path)
    return tmp_path


def _report(capsys):
    lines = capsys.readouterr().out.strip().splitlines()
    return json.loads(lines[-1])


def _config(tmp_path, sqlite_url, extra=""):
    path = tmp_path / "config.yaml"
    path.write_text(f"db:\n  url: \"{sqlite_url}\"\n{extra}", encoding="utf-8")
    return str(path)


def test_check_rotated_square(capsys):
    assert dispatch(["check", "--spec", "rotated-square.json"]) == 0
    report = _report(capsys)
    assert report["tool"] == "popdiff"
    assert report["version"] == __version__
    assert report["subcommand"] == "check"
    assert report["result"]["admissible"] is True
    assert report["result"]["spectral"] is False
    assert "wall_time_s" in report


def test_version_flag(capsys):
    assert dispatch(["--version"]) == 0
    assert __version__ in capsys.readouterr().out


def test_unknown_command(capsys):
    assert dispatch(["frobnicate"]) == 1
    assert "usage" in capsys.readouterr().err


def test_guard_limit_exceeded(capsys):
    assert dispatch(["popular", "--spec", "ap4", "--n", "6", "--guard", "1000"]) == 1
    assert "TooLarge" in capsys.readouterr().err


def test_wrong_difference_length(capsys):
    assert dispatch(["count", "--spec", "ap4", "--d", "1,2,3"]) == 1


def test_count_from_file(workdir, capsys):
    assert dispatch(["fnio", "write", "f.plgf", "--p", "5", "--k", "1", "--n", "2"]) == 0
    written = _report(capsys)["result"]
    assert written["bytes"] == 18 + 25 * 16
    assert dispatch(["fnio", "read", "f.plgf", "--deterministic"]) == 0
    mean = _report(capsys)["result"]["mean"]
    assert dispatch(["count", "--spec", "ap4", "--fn", "f.plgf", "--d", "0,0"]) == 0
    result = _report(capsys)["result"]
    assert result["beta"] == result["alpha"] == mean


def test_fn_file_must_match_pattern(capsys):
    dispatch(["fnio", "write", "g.plgf", "--k", "2", "--n", "1"])
    capsys.readouterr()
    assert dispatch(["count", "--spec", "ap4", "--fn", "g.plgf", "--d", "1"]) == 1


def test_missing_fn_file(capsys):
    assert dispatch(["popular", "--spec", "ap4", "--fn", "missing.plgf"]) == 1


def test_cex_core(capsys):
    assert dispatch(["cex", "core", "--deterministic"]) == 0
    report = _report(capsys)
    assert report["subcommand"] == "cex core"
    assert report["result"]["sup"] == "73/3125"
    assert report["result"]["mean"] == "2/5"
    assert report["result"]["strict"] is True
    assert "wall_time_s" not in report


def test_failed_check_exits_with_two(monkeypatch, capsys):
    original = counterexample.build_core
    monkeypatch.setattr(counterexample, "build_core", lambda: original(S=((0, 0),)))
    assert dispatch(["cex", "core"]) == 2
    assert _report(capsys)["result"]["strict"] is False


def test_deterministic_output_is_stable(capsys):
    outputs = []
    for _ in range(2):
        assert dispatch(["cex", "hypergraph", "--L", "5", "--deterministic"]) == 0
        outputs.append(capsys.readouterr().out)
    assert outputs[0] == outputs[1]


def test_json_output_file(workdir, capsys):
    assert dispatch(["threept", "bohr", "--S", "1", "--delta", "0.25", "--json", "out.jsonl"]) == 0
    assert capsys.readouterr().out == ""
    report = json.loads((workdir / "out.jsonl").read_text(encoding="utf-8"))
    assert report["subcommand"] == "threept bohr"
    assert report["result"]["measure"] == "51/101"
    assert report["result"]["members"][0] == 0


def test_threept_commands(capsys):
    assert dispatch(["threept", "count"]) == 0
    assert _report(capsys)["result"]["gap"] <= 1e-9
    assert dispatch(["threept", "search", "--density", "0.4"]) == 0
    assert _report(capsys)["result"]["points"] == 3
    assert dispatch(["threept", "lift", "--N", "30", "--eps", "0.1"]) == 0
    result = _report(capsys)["result"]
    assert result["p"] == 31
    assert result["audit_passed"] is True


def test_threept_bad_group(capsys):
    assert dispatch(["threept", "bohr", "--group", '{"kind": "Z_N", "N": 10, "M1": 2, "M2": 3}']) == 1
    assert "NotAutomorphism" in capsys.readouterr().err


def test_subspaces_and_equidist(capsys):
    assert dispatch(["subspaces", "--spec", "ap4", "--verify"]) == 0
    assert all(_report(capsys)["result"]["verified"].values())
    assert dispatch(["equidist", "--spec", "ap4", "--kind", "linear-quadratic", "--n", "3"]) == 0
    assert _report(capsys)["result"]["support_ok"] is True


def test_bad_backend_in_config(workdir, sqlite_url, capsys):
    config = _config(workdir, sqlite_url, "run:\n  backend: \"fast\"\n")
    assert dispatch(["--config", config, "check"]) == 1
    assert "ConfigError" in capsys.readouterr().err


def test_reports_are_archived(workdir, sqlite_url, monkeypatch, capsys):
    config = _config(workdir, sqlite_url)
    assert dispatch(["--config", config, "check", "--db", "--seed", "11"]) == 0
    original = counterexample.build_core
    monkeypatch.setattr(counterexample, "build_core", lambda: original(S=((0, 0),)))
    assert dispatch(["--config", config, "cex", "core", "--db"]) == 2
    capsys.readouterr()

    db = next(get_db(sqlite_url))
    rows = fetch_reports(db)
    assert [(r.subcommand, r.exit_code) for r in rows] == [("cex core", 2), ("check", 0)]
    assert rows[1].seed == 11
    assert json.loads(rows[1].payload)["result"]["admissible"] is True
    assert db.query(RunLog).one().level == "ERROR"
    db.close()
