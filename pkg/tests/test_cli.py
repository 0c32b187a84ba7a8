import json
import os
import subprocess
import sys

import pytest

from rffpuf.cli import main


def _cli(*args, env=None):
    return subprocess.run([sys.executable, "-m", "rffpuf", *args], capture_output=True, text=True,
                          env={**os.environ, **(env or {})})


def test_run_bundled_scenario(tmp_path, capsys):
    rep = tmp_path / "r.json"
    assert main(["run", "--config", "honest-baseline", "--report", str(rep)]) == 0
    assert "4T_PUF+18T_H" in capsys.readouterr().out
    assert json.loads(rep.read_text())["verdict"] == "pass"


def test_failed_expectation_exits_1(tmp_path, capsys):
    cfg = tmp_path / "c.json"
    cfg.write_text(json.dumps({
        "domains": [{"name": "d1", "gss": 100}],
        "drones": [{"id": 1, "domain": "d1"}],
        "sessions": [{"op": "enroll", "drone": 1, "expect": "failed"}],
    }))
    assert main(["run", "--config", str(cfg)]) == 1
    err = json.loads(capsys.readouterr().err)
    assert err["verdict"] == "fail" and "sessions[0]" in err["failures"][0]


@pytest.mark.parametrize("text", ['{"sessions": [{"op": "x"}]}', "{oops"])
def test_config_error_exits_2(tmp_path, capsys, text):
    cfg = tmp_path / "c.json"
    cfg.write_text(text)
    assert main(["run", "--config", str(cfg)]) == 2
    assert json.loads(capsys.readouterr().err)["verdict"] == "fail"


def test_missing_config_exits_2(capsys):
    assert main(["run", "--config", "/nonexistent/none.json"]) == 2


def test_seed_from_environment(tmp_path):
    a, b = tmp_path / "a.json", tmp_path / "b.json"
    _cli("run", "--config", "honest-baseline", "--report", str(a), env={"IOD_SIM_SEED": "77"})
    _cli("run", "--config", "honest-baseline", "--seed", "77", "--report", str(b))
    assert json.loads(a.read_text())["seed"] == 77
    assert a.read_bytes() == b.read_bytes()


def test_stats_and_attacks_subcommands(tmp_path, capsys):
    assert main(["stats", "--suite", "rffi", "--seed", "1"]) == 0
    assert json.loads(capsys.readouterr().out)["pass"]
    rep = tmp_path / "a.json"
    assert main(["attacks", "--suite", "replay", "--report", str(rep)]) == 0
    assert all(a["result"] == "rejected" for a in json.loads(rep.read_text())["attacks"])
