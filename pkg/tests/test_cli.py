import json
import subprocess
import sys

import numpy as np
import pytest

from snnmap.cli import main

TINY_TRAIN = [
    "--dataset", "synthetic", "--arch", "mlpsnn", "--geometry", "12",
    "--hidden", "10,8", "--epochs", "2", "--train-samples", "80",
    "--test-samples", "40", "--separation", "4.0",
]


def run_cli(*argv):
    return main(list(argv))


class TestTrain:
    def test_writes_checkpoint_and_history(self, tmp_path, capsys):
        out = tmp_path / "run"
        assert run_cli("train", *TINY_TRAIN, "--out", str(out), "--seed", "1") == 0
        assert (out / "checkpoint").exists()
        assert (out / "history.csv").exists()
        assert (out / "config.json").exists()
        stdout = capsys.readouterr().out
        assert "test_accuracy" in stdout and "total_spikes" in stdout

    def test_bad_dataset_path_exits_2(self, tmp_path, capsys):
        code = run_cli("train", "--dataset", "mnist", "--data-dir", str(tmp_path / "nope"),
                       "--out", str(tmp_path / "r"))
        assert code == 2
        assert "missing" in capsys.readouterr().err

    def test_rerun_same_config_identical_checkpoint(self, tmp_path):
        out_a, out_b = tmp_path / "a", tmp_path / "b"
        run_cli("train", *TINY_TRAIN, "--out", str(out_a), "--seed", "7")
        run_cli("train", *TINY_TRAIN, "--out", str(out_b), "--seed", "7")
        assert (out_a / "checkpoint").read_bytes() == (out_b / "checkpoint").read_bytes()
        assert (out_a / "history.csv").read_text() == (out_b / "history.csv").read_text()

    def test_config_file_with_flag_override(self, tmp_path):
        cfg_path = tmp_path / "cfg.json"
        cfg_path.write_text(json.dumps({
            "dataset": "synthetic", "arch": "mlpsnn", "geometry": "12",
            "hidden": "10,8", "epochs": 2, "train_samples": 80, "test_samples": 40,
            "separation": 4.0, "seed": 3,
        }))
        out = tmp_path / "run"
        assert run_cli("train", "--config", str(cfg_path), "--out", str(out),
                       "--epochs", "1") == 0
        stored = json.loads((out / "config.json").read_text())
        assert stored["epochs"] == 1  # flag wins
        assert stored["seed"] == 3  # config file wins over default

    def test_unknown_config_key_exits_2(self, tmp_path, capsys):
        cfg_path = tmp_path / "cfg.json"
        cfg_path.write_text(json.dumps({"not_a_key": 1}))
        assert run_cli("train", "--config", str(cfg_path), "--out", str(tmp_path / "r")) == 2
        assert "unknown config keys" in capsys.readouterr().err


SWEEP_ARGS = TINY_TRAIN + ["--tau", "1.5,3.0", "--vth", "0.5,1.5"]


class TestSweep:
    def test_csv_and_svgs_written(self, tmp_path, capsys):
        out = tmp_path / "sweep"
        assert run_cli("sweep", *SWEEP_ARGS, "--out", str(out), "--seed", "2") == 0
        lines = (out / "sweep.csv").read_text().strip().splitlines()
        assert lines[0] == "tau,v_th,test_accuracy,total_spikes,efficiency,status"
        assert len(lines) == 5  # 4 cells
        assert (out / "sweep_accuracy.svg").exists()
        assert (out / "sweep_spikes.svg").exists()
        stdout = capsys.readouterr().out
        assert "operational," in stdout and "best-accuracy," in stdout

    def test_single_cell_grid(self, tmp_path):
        out = tmp_path / "sweep1"
        assert run_cli("sweep", *TINY_TRAIN, "--tau", "2.0", "--vth", "1.0",
                       "--out", str(out), "--seed", "2") == 0
        lines = (out / "sweep.csv").read_text().strip().splitlines()
        assert len(lines) == 2

    def test_resume_produces_identical_csv(self, tmp_path):
        out_a, out_b = tmp_path / "a", tmp_path / "b"
        run_cli("sweep", *SWEEP_ARGS, "--out", str(out_a), "--seed", "5")
        # pre-seed one completed cell, then run the "resumed" sweep
        (out_b / "cells").mkdir(parents=True)
        cell = next((out_a / "cells").glob("*.json"))
        (out_b / "cells" / cell.name).write_bytes(cell.read_bytes())
        run_cli("sweep", *SWEEP_ARGS, "--out", str(out_b), "--seed", "5")
        assert (out_a / "sweep.csv").read_text() == (out_b / "sweep.csv").read_text()

    def test_high_threshold_cell_is_silent(self, tmp_path):
        out = tmp_path / "sweep_silent"
        assert run_cli("sweep", *TINY_TRAIN, "--tau", "2.0", "--vth", "1.0,50.0",
                       "--out", str(out), "--seed", "2") == 0
        rows = (out / "sweep.csv").read_text().strip().splitlines()[1:]
        silent = [r for r in rows if r.startswith("2,50,")]
        assert len(silent) == 1
        assert silent[0].split(",")[3] == "0"  # total_spikes column


PERTURB_TRAIN = [
    "--dataset", "synthetic", "--arch", "mlpsnn", "--geometry", "12",
    "--hidden", "10,8", "--classes", "4", "--train-samples", "120",
    "--test-samples", "60", "--separation", "4.0", "--vth", "0.6",
    "--loss", "cross-entropy", "--encoding", "repeat", "--lr", "0.01",
    "--epochs", "14", "--patience", "20",
]


class TestPerturb:
    @pytest.fixture()
    def trained(self, tmp_path):
        out = tmp_path / "trained"
        run_cli("train", *PERTURB_TRAIN, "--out", str(out), "--seed", "4")
        return out

    def test_minimal_campaign(self, trained, tmp_path, capsys):
        out = tmp_path / "campaign"
        code = run_cli("perturb", *PERTURB_TRAIN, "--checkpoint", str(trained / "checkpoint"),
                       "--samples", "5", "--out", str(out), "--seed", "6")
        assert code == 0
        assert (out / "stats.csv").exists()
        assert (out / "failures.csv").exists()
        stdout = capsys.readouterr().out
        assert "analyzed" in stdout

    def test_missing_checkpoint_exits_2(self, tmp_path, capsys):
        code = run_cli("perturb", *PERTURB_TRAIN, "--checkpoint", str(tmp_path / "ghost"),
                       "--samples", "3", "--out", str(tmp_path / "c"))
        assert code == 2

    def test_same_seed_identical_stats(self, trained, tmp_path):
        out_a, out_b = tmp_path / "ca", tmp_path / "cb"
        for out in (out_a, out_b):
            run_cli("perturb", *PERTURB_TRAIN, "--checkpoint", str(trained / "checkpoint"),
                    "--samples", "6", "--out", str(out), "--seed", "6")
        assert (out_a / "stats.csv").read_text() == (out_b / "stats.csv").read_text()


class TestReport:
    def test_sweep_report_byte_identical_svgs(self, tmp_path):
        out = tmp_path / "sweep"
        run_cli("sweep", *SWEEP_ARGS, "--out", str(out), "--seed", "2")
        before = {
            name: (out / name).read_bytes()
            for name in ("sweep_accuracy.svg", "sweep_spikes.svg")
        }
        (out / "sweep_accuracy.svg").unlink()
        assert run_cli("report", str(out)) == 0
        for name, payload in before.items():
            assert (out / name).read_bytes() == payload

    def test_empty_dir_exits_2(self, tmp_path, capsys):
        empty = tmp_path / "empty"
        empty.mkdir()
        assert run_cli("report", str(empty)) == 2
        assert "nothing to report" in capsys.readouterr().err

    def test_missing_dir_exits_2(self, tmp_path):
        assert run_cli("report", str(tmp_path / "ghost")) == 2

    def test_campaign_report_regenerates_svgs(self, tmp_path):
        trained = tmp_path / "trained"
        run_cli("train", *PERTURB_TRAIN, "--out", str(trained), "--seed", "4")
        out = tmp_path / "campaign"
        run_cli("perturb", *PERTURB_TRAIN, "--checkpoint", str(trained / "checkpoint"),
                "--samples", "5", "--out", str(out), "--seed", "6")
        svgs = sorted((out / "corr").glob("*.svg"))
        assert svgs
        before = svgs[0].read_bytes()
        svgs[0].unlink()
        assert run_cli("report", str(out)) == 0
        assert svgs[0].read_bytes() == before


def test_console_entry_point_smoke(tmp_path):
    # exercise the installed script path end to end in a real subprocess
    out = tmp_path / "run"
    proc = subprocess.run(
        [sys.executable, "-m", "snnmap.cli", "train", *TINY_TRAIN,
         "--out", str(out), "--seed", "1"],
        capture_output=True, text=True, timeout=300,
    )
    assert proc.returncode == 0, proc.stderr
    assert "test_accuracy" in proc.stdout
