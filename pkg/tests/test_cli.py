"""Command-line behavior: exit codes, summaries, and error reporting."""

import os
import pathlib
import subprocess
import sys

import numpy as np
import pytest

from evmx.events import EventStream, SensorGeometry, load_evm, save_evm


def run_cli(*args, cwd=None):
    env = dict(os.environ, EVMX_THREADS="1")
    return subprocess.run(
        [sys.executable, "-m", "evmx", *map(str, args)],
        capture_output=True, text=True, cwd=cwd, env=env, timeout=300,
    )


def write_csv(path, rows):
    path.write_text("".join(f"{x},{y},{t},{p}\n" for x, y, t, p in rows))


@pytest.fixture()
def small_evm(tmp_path):
    g = SensorGeometry(16, 16)
    rng = np.random.default_rng(0)
    n = 200
    stream = EventStream(
        g,
        rng.integers(0, 16, n),
        rng.integers(0, 16, n),
        np.sort(rng.integers(0, 70_000, n)),
        rng.integers(0, 2, n) * 2 - 1,
    )
    p = tmp_path / "clip.evm"
    save_evm(p, stream)
    return p, stream


class TestTopLevel:
    def test_no_command_is_usage_error(self):
        r = run_cli()
        assert r.returncode == 2

    def test_version(self):
        r = run_cli("--version")
        assert r.returncode == 0
        assert "evmx" in r.stdout

    def test_help_lists_commands(self):
        r = run_cli("--help")
        assert r.returncode == 0
        for cmd in ("ingest", "frames", "synth", "train-snn", "eval-snn",
                    "train-cvae", "eval-cvae"):
            assert cmd in r.stdout


class TestIngest:
    def test_csv_to_evm(self, tmp_path):
        csv = tmp_path / "a.csv"
        write_csv(csv, [(1, 2, 0, 1), (3, 4, 10, 0), (5, 6, 20, 1)])
        out = tmp_path / "out"
        r = run_cli("ingest", csv, "--out-dir", out, "--geometry", "16x16")
        assert r.returncode == 0, r.stderr
        assert "ingested files=1 events=3" in r.stdout
        stream = load_evm(out / "a.evm")
        assert len(stream) == 3
        assert stream[1].p == -1

    def test_evm_revalidation(self, tmp_path, small_evm):
        p, stream = small_evm
        out = tmp_path / "out"
        r = run_cli("ingest", p, "--out-dir", out)
        assert r.returncode == 0
        assert load_evm(out / "clip.evm") == stream

    def test_batch_summary_counts(self, tmp_path):
        for i in range(3):
            write_csv(tmp_path / f"c{i}.csv", [(0, 0, j, 1) for j in range(i + 1)])
        out = tmp_path / "out"
        r = run_cli("ingest", *(tmp_path / f"c{i}.csv" for i in range(3)),
                    "--out-dir", out, "--geometry", "8x8")
        assert r.returncode == 0
        assert "ingested files=3 events=6" in r.stdout
        assert len(list(out.glob("*.evm"))) == 3

    def test_malformed_csv_names_file_and_line(self, tmp_path):
        csv = tmp_path / "bad.csv"
        csv.write_text("1,2,0,1\n1,2\n")
        r = run_cli("ingest", csv, "--out-dir", tmp_path / "o", "--geometry", "8x8")
        assert r.returncode == 1
        assert "error:" in r.stderr
        assert "bad.csv" in r.stderr
        assert "line 2" in r.stderr

    def test_out_of_order_needs_sort_flag(self, tmp_path):
        csv = tmp_path / "c.csv"
        write_csv(csv, [(0, 0, 10, 1), (0, 0, 5, 1)])
        r = run_cli("ingest", csv, "--out-dir", tmp_path / "o", "--geometry", "8x8")
        assert r.returncode == 1
        r = run_cli("ingest", csv, "--out-dir", tmp_path / "o", "--geometry", "8x8",
                    "--sort")
        assert r.returncode == 0

    def test_bad_geometry_flag(self, tmp_path):
        csv = tmp_path / "c.csv"
        write_csv(csv, [(0, 0, 0, 1)])
        r = run_cli("ingest", csv, "--out-dir", tmp_path / "o", "--geometry", "wide")
        assert r.returncode == 1

    def test_missing_input_file_is_user_error(self, tmp_path):
        r = run_cli("ingest", tmp_path / "nope.evm", "--out-dir", tmp_path / "o")
        assert r.returncode == 1
        assert "error:" in r.stderr


class TestFrames:
    def test_frames_conservation_summary(self, tmp_path, small_evm):
        p, stream = small_evm
        out = tmp_path / "frames"
        r = run_cli("frames", p, "--out-dir", out, "--slice-us", "33000")
        assert r.returncode == 0, r.stderr
        assert f"events_in={len(stream)} counts_out={len(stream)} conserved=yes" in r.stdout
        assert (out / "clip.evf").exists()

    def test_empty_stream_reported_run_continues(self, tmp_path, small_evm):
        p, _ = small_evm
        empty = tmp_path / "empty.evm"
        save_evm(empty, EventStream.empty(SensorGeometry(16, 16)))
        out = tmp_path / "frames"
        r = run_cli("frames", empty, p, "--out-dir", out)
        assert r.returncode == 0
        assert "error EmptyStream" in r.stdout
        assert "empty.evm" in r.stdout
        assert (out / "clip.evf").exists()
        assert not (out / "empty.evf").exists()
        assert "files=1" in r.stdout

    def test_crop_resizes_output(self, tmp_path, small_evm):
        p, _ = small_evm
        out = tmp_path / "frames"
        r = run_cli("frames", p, "--out-dir", out, "--bbox", "0,0,8,8", "--crop", "4")
        assert r.returncode == 0
        from evmx.representation import load_evf
        seq = load_evf(out / "clip.evf")
        assert seq.data.shape[2:] == (4, 4)


class TestSynth:
    def test_writes_dataset(self, tmp_path):
        r = run_cli("synth", "--out", tmp_path / "ds", "--classes", "2",
                    "--clips-per-class", "2", "--subjects", "2",
                    "--geometry", "16x16", "--duration-us", "66000", "--seed", "3")
        assert r.returncode == 0, r.stderr
        assert "clips=4" in r.stdout
        assert (tmp_path / "ds" / "clips.txt").exists()
        assert (tmp_path / "ds" / "pairs.txt").exists()

    def test_deterministic_tree(self, tmp_path):
        args = ("--classes", "2", "--clips-per-class", "2", "--subjects", "2",
                "--geometry", "16x16", "--duration-us", "66000", "--seed", "9")
        r1 = run_cli("synth", "--out", tmp_path / "d1", *args)
        r2 = run_cli("synth", "--out", tmp_path / "d2", *args)
        assert r1.returncode == r2.returncode == 0
        files1 = sorted(f for f in (tmp_path / "d1").rglob("*") if f.is_file())
        files2 = sorted(f for f in (tmp_path / "d2").rglob("*") if f.is_file())
        assert [f.name for f in files1] == [f.name for f in files2]
        for a, b in zip(files1, files2):
            assert a.read_bytes() == b.read_bytes()


# 32x32 keeps every clip nonempty; 16x16 draws leave some clips without events
@pytest.fixture(scope="module")
def synth_dataset(tmp_path_factory):
    root = tmp_path_factory.mktemp("ds")
    r = run_cli("synth", "--out", root, "--classes", "2", "--clips-per-class", "6",
                "--subjects", "3", "--geometry", "32x32",
                "--duration-us", "66000", "--seed", "1")
    assert r.returncode == 0, r.stderr
    return root


class TestTrainEvalSnn:
    def test_train_then_eval(self, tmp_path, synth_dataset):
        model = tmp_path / "m.snn1"
        r = run_cli("train-snn", "--manifest", synth_dataset / "clips.txt",
                    "--out", model, "--epochs", "2", "--batch", "4",
                    "--crop", "16", "--head", "present", "--seed", "0",
                    "--encoding", "unit-max")
        assert r.returncode == 0, r.stderr
        assert model.exists()
        lines = r.stdout.strip().splitlines()
        assert any(line.startswith("1,") for line in lines)
        assert f"saved {model}" in r.stdout

        r2 = run_cli("eval-snn", "--model", model,
                     "--manifest", synth_dataset / "clips.txt")
        assert r2.returncode == 0, r2.stderr
        report = dict(line.split("=", 1) for line in r2.stdout.strip().splitlines())
        assert report["n"] == "12"
        assert 0.0 <= float(report["accuracy"]) <= 1.0
        assert float(report["top3_accuracy"]) >= float(report["accuracy"])

    def test_train_requires_out(self, synth_dataset):
        r = run_cli("train-snn", "--manifest", synth_dataset / "clips.txt",
                    "--epochs", "1", "--crop", "16", "--head", "present")
        assert r.returncode == 1
        assert "error:" in r.stderr

    def test_loocv_reports_folds_and_mean(self, synth_dataset):
        r = run_cli("train-snn", "--manifest", synth_dataset / "clips.txt",
                    "--loocv", "--epochs", "1", "--batch", "4", "--crop", "16",
                    "--head", "present", "--encoding", "unit-max")
        assert r.returncode == 0, r.stderr
        for i in range(3):  # 3 subjects
            assert f"fold={i} " in r.stdout
        assert "mean accuracy=" in r.stdout
        assert "folds=3" in r.stdout

    def test_missing_manifest(self, tmp_path):
        r = run_cli("train-snn", "--manifest", tmp_path / "none.txt",
                    "--out", tmp_path / "m.snn1")
        assert r.returncode == 1


class TestTrainEvalCvae:
    def test_train_then_eval(self, tmp_path, synth_dataset):
        model = tmp_path / "m.cva1"
        r = run_cli("train-cvae", "--pairs", synth_dataset / "pairs.txt",
                    "--out", model, "--epochs", "2", "--batch", "8",
                    "--latent", "4", "--seed", "0")
        assert r.returncode == 0, r.stderr
        assert model.exists()
        assert "pairs=24 side=32" in r.stdout

        jsonl = tmp_path / "report.jsonl"
        r2 = run_cli("eval-cvae", "--model", model,
                     "--pairs", synth_dataset / "pairs.txt", "--jsonl", jsonl)
        assert r2.returncode == 0, r2.stderr
        fields = dict(line.split("=", 1) for line in r2.stdout.strip().splitlines())
        for key in ("pairs", "mse", "rmse", "mae", "psnr_db", "ssim"):
            assert key in fields
        # six-metric report parses back losslessly
        import json
        rows = [json.loads(line) for line in jsonl.read_text().splitlines()]
        assert len(rows) == 25  # 24 pairs + summary
        assert abs(rows[-1]["summary"]["mean_mse"] - float(fields["mse"])) < 1e-6

    def test_self_check_identities(self, synth_dataset):
        r = run_cli("eval-cvae", "--pairs", synth_dataset / "pairs.txt", "--self-check")
        assert r.returncode == 0, r.stderr
        fields = dict(line.split("=", 1) for line in r.stdout.strip().splitlines())
        assert float(fields["mse"]) == 0.0
        assert float(fields["ssim"]) == pytest.approx(1.0, abs=1e-12)
        assert float(fields["psnr_db"]) == 100.0

    def test_eval_requires_model_or_self_check(self, synth_dataset):
        r = run_cli("eval-cvae", "--pairs", synth_dataset / "pairs.txt")
        assert r.returncode == 1
