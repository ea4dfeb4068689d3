from __future__ import annotations

import json
import subprocess
import sys
from pathlib import Path

import pytest

from couplab import __version__
from couplab.harness.cli import run_cli
from couplab.harness.io import read_rows

CONFIGS = Path(__file__).parents[1] / "configs"


def _run(tmp_path, *argv, name="out.csv"):
    out = tmp_path / name
    code = run_cli([*argv, "--out", str(out)])
    return code, out


class TestUsage:
    def test_no_arguments(self, capsys):
        assert run_cli([]) == 1
        assert "usage" in capsys.readouterr().err.lower()

    def test_unknown_subcommand(self, capsys):
        assert run_cli(["teleport"]) == 1
        assert "usage" in capsys.readouterr().err.lower()

    def test_unknown_flag(self):
        assert run_cli(["flip-prob", "--colour", "red"]) == 1

    def test_bad_number(self):
        assert run_cli(["flip-prob", "--lambda", "one"]) == 1

    def test_help_and_version(self, capsys):
        assert run_cli(["--help"]) == 0
        assert run_cli(["--version"]) == 0
        assert __version__ in capsys.readouterr().out

    def test_module_entry_point(self):
        res = subprocess.run([sys.executable, "-m", "couplab"], capture_output=True, text=True)
        assert res.returncode == 1 and "usage" in res.stderr.lower()


class TestErrors:
    def test_missing_config(self, tmp_path):
        assert run_cli(["flip-prob", "--config", str(tmp_path / "none.toml")]) == 1

    def test_invalid_config(self, tmp_path):
        cfg = tmp_path / "c.toml"
        cfg.write_text('[experiment]\nkind = "flip_probability"\ntrials = -4\n')
        assert run_cli(["flip-prob", "--config", str(cfg)]) == 1

    def test_domain_error_is_config_error(self, tmp_path):
        assert run_cli(["flip-prob", "--x", "0.1,0.2", "--trials", "10"]) == 1

    def test_unwritable_output(self, tmp_path):
        assert run_cli(["flip-prob", "--trials", "10", "--out", str(tmp_path / "no" / "dir.csv")]) == 2


class TestFlipProb:
    def test_writes_row_and_manifest(self, tmp_path):
        code, out = _run(tmp_path, "flip-prob", "--trials", "2000", "--seed", "3")
        assert code == 0
        rows = read_rows(out)
        assert len(rows) == 1
        r = rows[0]
        assert (r.experiment, r.metric, r.trials, r.seed) == ("flip_probability", "flip_probability_endpoint", 2000, 3)
        assert 0 < r.value < 1 and r.ci_half_width > 0
        manifest = json.loads((tmp_path / "out.csv.manifest.json").read_text())
        assert manifest["master_seed"] == 3 and len(manifest["config_digest"]) == 64

    def test_byte_identical_across_runs_and_threads(self, tmp_path):
        args = ("flip-prob", "--trials", "25000", "--seed", "11", "--lambda", "0,1")
        _, a = _run(tmp_path, *args, "--threads", "1", name="a.csv")
        _, b = _run(tmp_path, *args, "--threads", "1", name="b.csv")
        _, c = _run(tmp_path, *args, "--threads", "4", name="c.csv")
        assert a.read_bytes() == b.read_bytes() == c.read_bytes()

    def test_stdout_when_no_out(self, capsys):
        assert run_cli(["flip-prob", "--trials", "100"]) == 0
        assert capsys.readouterr().out.startswith("experiment,lambda,c,")


class TestOtherCommands:
    def test_purify_prints_state(self, tmp_path, capsys):
        trace = tmp_path / "t.csv"
        assert run_cli(["purify", "--x", "0.2", "--seed", "1", "--trace", str(trace)]) == 0
        assert capsys.readouterr().out.startswith("x_out = ")
        lines = trace.read_text().splitlines()
        assert lines[0] == "time,x0,p_true,p_adv" and len(lines) == 102

    def test_purify_needs_single_point(self):
        assert run_cli(["purify", "--lambda", "0,1"]) == 1

    def test_trace(self, tmp_path):
        code, out = _run(tmp_path, "trace", "--lambda", "1")
        assert code == 0
        lines = out.read_text().splitlines()
        assert lines[0] == "time,x0,p_true,p_adv"
        assert float(lines[1].split(",")[0]) == 0.1 and float(lines[-1].split(",")[0]) == 0.0

    def test_sweep_example_config(self, tmp_path):
        code, out = _run(tmp_path, "sweep", "--config", str(CONFIGS / "example.toml"), "--trials", "500")
        assert code == 0
        assert [r.lam for r in read_rows(out)] == [0.0, 0.5, 1.0, 2.0, 5.0, 10.0]

    @pytest.mark.parametrize("cmd", ["prop1", "bound-audit", "credibility"])
    def test_runs(self, tmp_path, cmd):
        code, out = _run(tmp_path, cmd, "--trials", "200")
        assert code == 0 and read_rows(out)

    def test_robustness_small(self, tmp_path):
        cfg = tmp_path / "r.toml"
        cfg.write_text((CONFIGS / "blobs.toml").read_text().replace("n_eval = 512", "n_eval = 16"))
        code, out = _run(tmp_path, "robustness", "--config", str(cfg))
        assert code == 0
        assert [r.metric for r in read_rows(out)] == ["clean_accuracy", "robust_accuracy", "boundary_crossings"]
