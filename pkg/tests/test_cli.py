import json
import subprocess
import sys

import pytest

from aclab.cli import ConfigError, load_config, main


def write(tmp_path, text, name="c.ini"):
    p = tmp_path / name
    p.write_text(text)
    return str(p)


def test_interaction_run_and_manifest(tmp_path, capsys):
    cfg = write(tmp_path, "[interaction]\nT_list = 4, 6, 8\n")
    assert main(["run", "interaction", cfg, "--out", str(tmp_path / "r")]) == 0
    out = capsys.readouterr().out
    assert "PASS" in out and "FAIL " not in out
    d = tmp_path / "r" / "interaction"
    rows = (d / "interaction.csv").read_text().splitlines()
    assert len(rows) == 4
    man = json.loads((d / "manifest.json").read_text())
    assert man["config"]["options"]["T_list"] == [4.0, 6.0, 8.0]
    assert man["passed"] is True
    assert {c["name"] for c in man["checks"]} >= {"relative error at largest T", "relative errors decrease"}


def test_tolerance_failure_exits_one(tmp_path, capsys):
    cfg = write(tmp_path, "[tolerances]\nrelative error at largest T = 1e-12\n")
    assert main(["run", "interaction", cfg, "--out", str(tmp_path)]) == 1
    assert "FAIL" in capsys.readouterr().out


def test_reruns_are_byte_identical(tmp_path):
    cfg = write(tmp_path, "")
    outs = []
    for k in range(2):
        assert main(["run", "toda", cfg, "--out", str(tmp_path / str(k))]) == 0
        outs.append((tmp_path / str(k) / "toda" / "toda.csv").read_bytes())
    assert outs[0] == outs[1]


@pytest.mark.parametrize(
    "text",
    [
        "[run]\ncells_per_eps = 4\n",
        "[run]\nepsilon = 0.7\n",
        "[run]\nepsilons = 0.1, -0.05\n",
        "[run]\nmargin = 0\n",
        "[run]\nepsilon = abc\n",
        "[interaction]\nbogus = 1\n",
        "[run]\npotential = /nonexistent/w.txt\n",
        "no section header\n",
    ],
)
def test_bad_configs_exit_two(tmp_path, capsys, text):
    assert main(["run", "interaction", write(tmp_path, text), "--out", str(tmp_path)]) == 2
    assert "error" in capsys.readouterr().err


def test_unknown_experiment_and_missing_file(tmp_path):
    assert main(["run", "nope", write(tmp_path, ""), "--out", str(tmp_path)]) == 2
    assert main(["run", "toda", str(tmp_path / "missing.ini"), "--out", str(tmp_path)]) == 2


def test_scans_need_two_epsilons(tmp_path):
    with pytest.raises(ConfigError):
        load_config(write(tmp_path, "[run]\nepsilons = 0.1\n"), "two-layer", str(tmp_path), None)


def test_seed_override(tmp_path):
    cfg = load_config(write(tmp_path, "[run]\nseed = 5\n"), "b-identity", str(tmp_path), 11)
    assert cfg.seed == 11
    assert load_config(write(tmp_path, "[run]\nseed = 5\n"), "b-identity", str(tmp_path), None).seed == 5


def test_loaded_potential_file(tmp_path):
    pot = tmp_path / "w.txt"
    assert main(["run", "profile", write(tmp_path, f"[run]\npotential = {pot}\n"), "--out", str(tmp_path)]) == 2
    import numpy as np

    u = [float(x) for x in np.linspace(-1, 1, 401)]
    pot.write_text("kind=poly deg=4\n" + "".join(
        f"{x!r} {(1 - x * x) ** 2 / 4!r} {x ** 3 - x!r} {3 * x * x - 1!r}\n" for x in u))
    assert main(["run", "profile", write(tmp_path, f"[run]\npotential = {pot}\n"), "--out", str(tmp_path)]) == 0


def test_module_entry_point(tmp_path):
    cfg = write(tmp_path, "[run]\ncells_per_eps = 2\n")
    p = subprocess.run([sys.executable, "-m", "aclab", "run", "toda", cfg, "--out", str(tmp_path)],
                       capture_output=True, text=True, env={"ACLAB_THREADS": "1", "PATH": ""})
    assert p.returncode == 2 and "cells_per_eps" in p.stderr


def test_verify_all_runs_each_pipeline_once(tmp_path, monkeypatch):
    from aclab import experiments as ex

    calls = []

    def fake(name):
        def fn(s, out):
            calls.append(name)
            r = ex.ExperimentResult(name)
            r.add("check", 1.0, "<=", 2.0)
            return r
        return fn

    table = {"profile": fake("profile"), "toda": fake("toda"), "verify-all": ex.run_verify_all}
    monkeypatch.setattr(ex, "EXPERIMENTS", table)
    res = ex.run_verify_all(ex.Settings(), tmp_path)
    assert calls == ["profile", "toda"] and res.passed
    rows = (tmp_path / "acceptance.csv").read_text().splitlines()
    assert rows[0] == "experiment,check,value,relation,bound,status" and len(rows) == 3
