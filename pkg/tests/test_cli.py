from __future__ import annotations

import json
import subprocess
import sys
from pathlib import Path

import pytest

from conftest import build_cli_workspace, cli_command_matrix
from unitforge.cli import dispatch


@pytest.fixture(autouse=True)
def _no_ambient_cache(monkeypatch):
    monkeypatch.delenv("UNITFORGE_CACHE_DIR", raising=False)


@pytest.fixture
def workspace(tmp_path):
    return build_cli_workspace(tmp_path / "inputs")


def run_all(paths, out: Path, threads: int) -> dict[str, bytes]:
    out.mkdir(parents=True)
    for name, argv in cli_command_matrix(paths, out):
        code = dispatch(argv + ["--threads", str(threads)])
        assert code == 0, f"{name} exited {code}"
    return {f.name: f.read_bytes() for f in sorted(out.iterdir()) if f.is_file()}


class TestExitCodes:
    def test_unknown_subcommand(self, capsys):
        assert dispatch(["frobnicate"]) == 1
        assert "usage" in capsys.readouterr().err

    def test_unknown_flag_mentions_it(self, workspace, tmp_path, capsys):
        code = dispatch(["balance", "--counts", str(workspace["counts.tsv"]),
                         "--temperature", "2", "--no-such-flag"])
        assert code == 1
        assert "--no-such-flag" in capsys.readouterr().err

    def test_missing_required_parameter_named(self, capsys):
        assert dispatch(["mine", "run", "--tgt", "x.emb", "--out", "y.tsv"]) == 1
        assert "--src" in capsys.readouterr().err

    def test_validation_error_is_1(self, workspace, tmp_path, capsys):
        bad = tmp_path / "bad.tsv"
        bad.write_text("id\tlang\taudio\tduration_s\tspeaker\ttext\tunits\nu1\ten\n")
        code = dispatch(["manifest", "stats", "--in", str(bad),
                         "--out", str(tmp_path / "s.json")])
        assert code == 1
        assert "error" in capsys.readouterr().err

    def test_runtime_failure_is_2(self, tmp_path, capsys):
        code = dispatch(["manifest", "stats", "--in", str(tmp_path / "missing.tsv"),
                         "--out", str(tmp_path / "s.json")])
        assert code == 2

    def test_happy_path_balance(self, workspace, tmp_path):
        out = tmp_path / "dist.json"
        code = dispatch(["balance", "--counts", str(workspace["counts.tsv"]),
                         "--temperature", "20", "--out", str(out)])
        assert code == 0
        probs = json.loads(out.read_text())["probs"]
        assert probs["en"] == pytest.approx(0.5274377161638805, abs=1e-9)

    def test_balance_defaults_to_dist_json(self, workspace, tmp_path, monkeypatch):
        monkeypatch.chdir(tmp_path)
        assert dispatch(["balance", "--counts", str(workspace["counts.tsv"]),
                         "--temperature", "20"]) == 0
        assert (tmp_path / "dist.json").exists()

    def test_stdout_flag_prints_report(self, workspace, capsys):
        assert dispatch(["balance", "--counts", str(workspace["counts.tsv"]),
                         "--temperature", "20", "--stdout"]) == 0
        assert '"probs"' in capsys.readouterr().out

    def test_mine_shorthand_without_run(self, workspace, tmp_path):
        out = tmp_path / "pairs.tsv"
        code = dispatch(["mine", "--src", str(workspace["src.emb"]),
                         "--tgt", str(workspace["tgt.emb"]), "--knn", "2",
                         "--threshold", "1.0", "--direction", "forward",
                         "--out", str(out)])
        assert code == 0
        assert out.exists()

    def test_randomized_commands_print_seed(self, workspace, tmp_path, capsys):
        dispatch(["quantize", "fit", "--k", "2", "--seed", "7",
                  "--in", str(workspace["feats.emb"]),
                  "--out", str(tmp_path / "cb.emb")])
        assert "seed: 7" in capsys.readouterr().err


class TestModuleEntryPoint:
    def test_python_dash_m(self, workspace, tmp_path):
        out = tmp_path / "dist.json"
        proc = subprocess.run(
            [sys.executable, "-m", "unitforge", "balance",
             "--counts", str(workspace["counts.tsv"]),
             "--temperature", "1", "--out", str(out)],
            capture_output=True, text=True)
        assert proc.returncode == 0, proc.stderr
        assert json.loads(out.read_text())["probs"] == {"en": 0.9, "hok": 0.1}


class TestOutputs:
    def test_stats_report_contents(self, workspace, tmp_path):
        out = tmp_path / "stats.json"
        assert dispatch(["manifest", "stats", "--in", str(workspace["m.tsv"]),
                         "--out", str(out)]) == 0
        stats = json.loads(out.read_text())
        assert stats["hok"]["count"] == 3
        assert "total_duration_h" in stats["hok"]

    def test_convert_round_trips(self, workspace, tmp_path):
        mid = tmp_path / "m.jsonl"
        back = tmp_path / "m2.tsv"
        assert dispatch(["manifest", "convert", "--in", str(workspace["m.tsv"]),
                         "--out", str(mid)]) == 0
        assert dispatch(["manifest", "convert", "--in", str(mid),
                         "--out", str(back)]) == 0
        assert back.read_bytes() == workspace["m.tsv"].read_bytes()

    def test_asr_bleu_with_table_mock(self, workspace, tmp_path):
        out = tmp_path / "r.json"
        assert dispatch(["asr-bleu", "--manifest", str(workspace["gen.tsv"]),
                         "--ref", str(workspace["refm.tsv"]),
                         "--asr", f"mock:{workspace['transcripts.tsv']}",
                         "--tokenizer", "word13a", "--out", str(out)]) == 0
        assert json.loads(out.read_text())["bleu"] == pytest.approx(100.0)

    def test_full_matrix_runs_green(self, workspace, tmp_path):
        outputs = run_all(workspace, tmp_path / "out", threads=1)
        assert "cb.emb" in outputs and "report.json" in outputs


class TestDeterminism:
    def test_repeat_runs_byte_identical(self, workspace, tmp_path):
        first = run_all(workspace, tmp_path / "run1", threads=1)
        second = run_all(workspace, tmp_path / "run2", threads=1)
        assert first == second

    def test_threads_do_not_change_outputs(self, workspace, tmp_path):
        serial = run_all(workspace, tmp_path / "t1", threads=1)
        threaded = run_all(workspace, tmp_path / "t8", threads=8)
        assert serial == threaded
