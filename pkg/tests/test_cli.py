import logging

import pytest
from click.testing import CliRunner

from cli.commands import DEFAULT_SWEEP, cli
from core.errors import EXIT_DATA, EXIT_STORE, EXIT_USAGE
from core.memory_core import new_store
from db.store import load, read_header, save
from utils.settings import Settings


@pytest.fixture(autouse=True)
def restore_logging():
    root = logging.getLogger()
    handlers, level = root.handlers[:], root.level
    yield
    root.handlers[:] = handlers
    root.setLevel(level)


@pytest.fixture
def runner():
    return CliRunner()


@pytest.fixture
def store_path(tmp_path):
    return tmp_path / "memory.store"


def invoke(runner, *args):
    return runner.invoke(cli, ["-q", *map(str, args)])


def trained(runner, idx_file, store_path, *extra):
    result = invoke(runner, "train", "--images", idx_file, "--store", store_path, *extra)
    assert result.exit_code == 0, result.output
    return result


class TestTrain:
    def test_learns_every_image(self, runner, idx_file, store_path):
        result = trained(runner, idx_file, store_path)
        assert "learned patterns 0..39 (40)" in result.output
        info = read_header(str(store_path))
        assert (info.learned_count, info.capacity, info.recall_size) == (40, 40, 784)

    def test_range_and_settings(self, runner, idx_file, store_path):
        trained(runner, idx_file, store_path, "--start", 5, "--count", 10,
                "--theta", 50, "--threshold", 45, "--precision", "f32")
        memory = load(store_path)
        assert memory.learned_ids().tolist() == list(range(5, 15))
        assert memory.params.theta == 50.0
        assert memory.precision.value == "f32"

    def test_missing_images(self, runner, tmp_path, store_path):
        result = invoke(runner, "train", "--images", tmp_path / "absent", "--store", store_path)
        assert result.exit_code == EXIT_DATA
        assert not store_path.exists()

    def test_no_images_configured(self, runner, store_path):
        result = invoke(runner, "train", "--store", store_path)
        assert result.exit_code == EXIT_USAGE

    def test_range_past_end(self, runner, idx_file, store_path):
        result = invoke(runner, "train", "--images", idx_file, "--store", store_path, "--start", 35, "--count", 10)
        assert result.exit_code == EXIT_DATA
        assert not store_path.exists()

    def test_chunking_does_not_change_the_store(self, runner, idx_file, tmp_path):
        whole = tmp_path / "whole.store"
        chunked = tmp_path / "chunked.store"
        trained(runner, idx_file, whole, "--chunk-size", 1000)
        trained(runner, idx_file, chunked, "--chunk-size", 7)
        assert whole.read_bytes() == chunked.read_bytes()

    def test_training_resumes(self, runner, idx_file, tmp_path):
        whole = tmp_path / "whole.store"
        resumed = tmp_path / "resumed.store"
        trained(runner, idx_file, whole)
        trained(runner, idx_file, resumed, "--count", 15)
        trained(runner, idx_file, resumed, "--start", 15)
        assert whole.read_bytes() == resumed.read_bytes()

    def test_relearning_fails(self, runner, idx_file, store_path):
        trained(runner, idx_file, store_path, "--count", 5)
        result = invoke(runner, "train", "--images", idx_file, "--store", store_path, "--count", 5)
        assert result.exit_code == EXIT_DATA

    def test_remembers_recent_store(self, runner, idx_file, store_path, isolated_home):
        trained(runner, idx_file, store_path, "--count", 2)
        assert Settings(str(isolated_home)).get("recent_stores")[0] == str(store_path)


class TestSpectrum:
    def test_csv(self, runner, idx_file, store_path, tmp_path):
        trained(runner, idx_file, store_path, "--count", 20)
        out = tmp_path / "spectrum.csv"
        result = invoke(runner, "spectrum", 3, "--images", idx_file, "--store", store_path, "--out", out)
        assert result.exit_code == 0, result.output

        lines = out.read_text().splitlines()
        assert lines[0] == "cue_id,q"
        assert len(lines) == 21
        rows = dict(line.split(",") for line in lines[1:])
        assert rows["3"] == "100.000000"

    def test_deterministic(self, runner, idx_file, store_path, tmp_path):
        trained(runner, idx_file, store_path, "--count", 20)
        outputs = []
        for name in ("a.csv", "b.csv"):
            invoke(runner, "spectrum", 25, "--half", "--images", idx_file, "--store", store_path,
                   "--out", tmp_path / name)
            outputs.append((tmp_path / name).read_bytes())
        assert outputs[0] == outputs[1]

    def test_empty_store(self, runner, idx_file, store_path, tmp_path):
        save(new_store(784, 10), store_path)
        out = tmp_path / "spectrum.csv"
        result = invoke(runner, "spectrum", 0, "--images", idx_file, "--store", store_path, "--out", out)
        assert result.exit_code == 0
        assert out.read_text() == "cue_id,q\n"

    def test_missing_store(self, runner, idx_file, store_path):
        result = invoke(runner, "spectrum", 0, "--images", idx_file, "--store", store_path)
        assert result.exit_code == EXIT_STORE

    def test_unwritable_output(self, runner, idx_file, store_path):
        trained(runner, idx_file, store_path, "--count", 2)
        result = invoke(runner, "spectrum", 0, "--images", idx_file, "--store", store_path,
                        "--out", store_path / "spectrum.csv")
        assert result.exit_code == EXIT_STORE
        assert "error:" in result.output

    def test_probe_out_of_range(self, runner, idx_file, store_path):
        trained(runner, idx_file, store_path, "--count", 2)
        result = invoke(runner, "spectrum", 40, "--images", idx_file, "--store", store_path)
        assert result.exit_code == EXIT_DATA


class TestRecall:
    def test_memorized_probe(self, runner, idx_file, store_path, tmp_path):
        trained(runner, idx_file, store_path, "--count", 20)
        result = invoke(runner, "recall", 3, "--images", idx_file, "--store", store_path,
                        "--out", tmp_path / "out", "--montage")
        assert result.exit_code == 0, result.output
        assert "peak cue 3 q=100.000000" in result.output
        assert "1 candidates at H=90" in result.output
        assert "3\t100.000000" in result.output

        directory = tmp_path / "out" / "probe_00003"
        probe = (directory / "probe.pgm").read_bytes()
        assert probe.startswith(b"P5")
        assert (directory / "cue_00003.pgm").read_bytes() == probe
        assert (directory / "montage.pgm").exists()

    def test_unknown_probe(self, runner, idx_file, store_path, tmp_path):
        trained(runner, idx_file, store_path, "--count", 20)
        result = invoke(runner, "recall", 30, "--images", idx_file, "--store", store_path, "--out", tmp_path / "out")
        assert result.exit_code == 0
        assert "0 candidates at H=90" in result.output
        assert (tmp_path / "out" / "probe_00030" / "probe.pgm").exists()
        assert not (tmp_path / "out" / "probe_00030" / "montage.pgm").exists()

    def test_upper_half(self, runner, idx_file, store_path, tmp_path):
        trained(runner, idx_file, store_path, "--count", 20)
        result = invoke(runner, "recall", 3, "--half", "--threshold", 1, "--images", idx_file,
                        "--store", store_path, "--out", tmp_path / "out")
        assert result.exit_code == 0
        assert "probe 3 (upper half)" in result.output
        assert (tmp_path / "out" / "probe_00003_upper" / "probe.pgm").exists()

    def test_threshold_from_store(self, runner, idx_file, store_path, tmp_path):
        trained(runner, idx_file, store_path, "--count", 20, "--theta", 50, "--threshold", 40)
        result = invoke(runner, "recall", 3, "--images", idx_file, "--store", store_path, "--out", tmp_path / "out")
        assert result.exit_code == 0, result.output
        assert "1 candidates at H=40" in result.output
        assert "3\t50.000000" in result.output

    def test_threshold_above_theta(self, runner, idx_file, store_path):
        trained(runner, idx_file, store_path, "--count", 2)
        result = invoke(runner, "recall", 0, "--threshold", 150, "--images", idx_file, "--store", store_path)
        assert result.exit_code == EXIT_USAGE

    def test_unknown_option(self, runner):
        assert invoke(runner, "recall", 0, "--bogus").exit_code == EXIT_USAGE

    def test_missing_store(self, runner, idx_file, store_path):
        result = invoke(runner, "recall", 0, "--images", idx_file, "--store", store_path)
        assert result.exit_code == EXIT_STORE


class TestSweep:
    def test_counts(self, runner, idx_file, store_path, tmp_path):
        trained(runner, idx_file, store_path, "--count", 20)
        out = tmp_path / "sweep.csv"
        result = invoke(runner, "sweep", 3, "--images", idx_file, "--store", store_path, "--out", out)
        assert result.exit_code == 0

        lines = out.read_text().splitlines()
        assert lines[0] == "threshold,candidates"
        counts = [int(line.split(",")[1]) for line in lines[1:]]
        assert len(counts) == len(DEFAULT_SWEEP)
        assert counts[1] == 1
        assert counts == sorted(counts)

    def test_explicit_thresholds(self, runner, idx_file, store_path, tmp_path):
        trained(runner, idx_file, store_path, "--count", 20)
        out = tmp_path / "sweep.csv"
        invoke(runner, "sweep", 3, "--threshold", 99, "--threshold", 1,
               "--images", idx_file, "--store", store_path, "--out", out)
        assert out.read_text().splitlines()[1:] == ["99,1", "1,20"]


class TestEval:
    def test_report(self, runner, idx_file, store_path):
        trained(runner, idx_file, store_path, "--count", 20)
        result = invoke(runner, "eval", "--images", idx_file, "--store", store_path)
        assert result.exit_code == 0, result.output
        assert "patterns: 20" in result.output
        assert "hamming_max: 0" in result.output
        assert "shading_mean: 0.000000" in result.output
        assert f"memory_rate: {20 / 804:.6f}" in result.output

    def test_before_training(self, runner, idx_file, store_path):
        result = invoke(runner, "eval", "--images", idx_file, "--store", store_path)
        assert result.exit_code == EXIT_STORE


class TestInfo:
    def test_header(self, runner, idx_file, store_path):
        trained(runner, idx_file, store_path, "--count", 12)
        result = invoke(runner, "info", "--store", store_path)
        assert result.exit_code == 0
        assert "learned cues: 12" in result.output
        assert "precision: f64" in result.output
        assert "format version: 1" in result.output

    def test_store_from_settings(self, runner, idx_file, store_path, isolated_home):
        trained(runner, idx_file, store_path, "--count", 3)
        Settings(str(isolated_home)).set("store_path", str(store_path))
        result = invoke(runner, "info")
        assert "learned cues: 3" in result.output
