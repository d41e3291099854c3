# -*- coding: utf-8 -*-
# ------------------------------------------------------------------------------
#
#   Copyright 2024 Valory AG
#
#   Licensed under the Apache License, Version 2.0 (the "License");
#   you may not use this file except in compliance with the License.
#   You may obtain a copy of the License at
#
#       http://www.apache.org/licenses/LICENSE-2.0
#
#   Unless required by applicable law or agreed to in writing, software
#   distributed under the License is distributed on an "AS IS" BASIS,
#   WITHOUT WARRANTIES OR CONDITIONS OF ANY KIND, either express or implied.
#   See the License for the specific language governing permissions and
#   limitations under the License.
#
# ------------------------------------------------------------------------------


"""Tests for the command line."""

from pathlib import Path
from typing import List

import pandas as pd
import pytest
from click.testing import CliRunner, Result

from packages.valory.skills.attractor_control.cli import (
    BASIN_COLUMNS,
    RUNTIME_EXIT_CODE,
    VALIDATION_EXIT_CODE,
    cli,
)
from packages.valory.skills.attractor_control.evaluation import (
    COMPARE_COLUMNS,
    EVAL_FILENAME,
)
from packages.valory.skills.attractor_control.oracle import ORACLE_COLUMNS


FAST_CONFIG = """\
batch_size: 16
warmup_transitions: 16
buffer_capacity: 1000
target_sync_period: 50
epsilon_decay_steps: 100
trunk_widths: [16, 16]
stream_width: 8
evaluation_repeats: 2
max_interventions: 5
training_steps: 150
"""


@pytest.fixture
def fast_config(tmp_path: Path) -> Path:
    """A configuration file for quick training runs."""
    path = tmp_path / "fast.yaml"
    path.write_text(FAST_CONFIG, encoding="utf-8")
    return path


def invoke(args: List[str]) -> Result:
    """Invoke the command line without catching exceptions."""
    return CliRunner().invoke(cli, args, catch_exceptions=False)


def test_attractors(tmp_path: Path) -> None:
    """Test the attractor listing of the bundled example."""
    out = tmp_path / "attractors.txt"
    result = invoke(["--out", str(out), "attractors"])
    assert result.exit_code == 0
    assert "A3: cyclic: 1000 1010" in result.output
    assert out.read_text(encoding="utf-8") == (
        "A1: fixed: 0000\nA2: fixed: 0101\nA3: cyclic: 1000 1010\n"
    )


def test_basins(tmp_path: Path) -> None:
    """Test the basin size table."""
    out = tmp_path / "basins.csv"
    assert invoke(["--out", str(out), "basins"]).exit_code == 0
    frame = pd.read_csv(out)
    assert list(frame.columns) == BASIN_COLUMNS
    assert frame["attractor_id"].tolist() == ["A1", "A2", "A3"]
    assert frame["attractor_size"].tolist() == [1, 1, 2]
    assert frame["strong_basin_size"].tolist() == [2, 4, 4]
    assert (frame["weak_basin_size"] >= frame["strong_basin_size"]).all()


def test_oracle(tmp_path: Path) -> None:
    """Test the oracle table of the example."""
    out = tmp_path / "oracle.csv"
    assert invoke(["--out", str(out), "oracle"]).exit_code == 0
    frame = pd.read_csv(out, dtype={"strategy": str})
    assert list(frame.columns) == ORACLE_COLUMNS
    assert frame["min_length"].tolist() == [1] * 6
    assert frame["strategy"].tolist() == ["1", "0", "1", "0+3", "0", "0+1"]
    single = tmp_path / "single.csv"
    assert invoke(["--out", str(single), "oracle", "--max-flips", "1"]).exit_code == 0
    assert pd.read_csv(single)["min_length"].tolist() == [1, 1, 1, 2, 1, 2]


def test_pasip(tmp_path: Path) -> None:
    """Test the Step I registry of the example."""
    out = tmp_path / "registry.txt"
    assert invoke(["--seed", "4", "--out", str(out), "pasip"]).exit_code == 0
    states = {line.split()[0] for line in out.read_text(encoding="utf-8").splitlines()}
    assert states == {"0000", "0101", "1000", "1010"}
    result = invoke(["pasip", "--runs", "16"])
    assert "1010 step1" in result.output


def test_validation_exit_code(tmp_path: Path) -> None:
    """Test that malformed input exits with code 2."""
    broken = tmp_path / "broken.pbn"
    broken.write_text("genes: a\na: a &\n", encoding="utf-8")
    result = invoke(["--model", str(broken), "attractors"])
    assert result.exit_code == VALIDATION_EXIT_CODE
    assert "Error: line 2" in result.output
    assert invoke(["run"]).exit_code == VALIDATION_EXIT_CODE


def test_bad_config_exit_code(tmp_path: Path) -> None:
    """Test that an unknown configuration key exits with code 2."""
    config = tmp_path / "config.yaml"
    config.write_text("learning_speed: 3\n", encoding="utf-8")
    result = invoke(["--config", str(config), "attractors"])
    assert result.exit_code == VALIDATION_EXIT_CODE


def test_runtime_exit_code(tmp_path: Path) -> None:
    """Test that exceeding the exhaustive limit exits with code 3."""
    config = tmp_path / "config.yaml"
    config.write_text("stg_gene_limit: 2\n", encoding="utf-8")
    result = invoke(["--config", str(config), "attractors"])
    assert result.exit_code == RUNTIME_EXIT_CODE
    assert "exhaustive limit" in result.output


def test_train_eval_compare(tmp_path: Path, fast_config: Path) -> None:
    """Test training, evaluation and comparison through the command line."""
    checkpoints = [tmp_path / "first.bin", tmp_path / "second.bin"]
    train_dirs = [tmp_path / "train", tmp_path / "train_again"]
    for checkpoint, train_dir in zip(checkpoints, train_dirs):
        result = invoke(
            [
                "--config",
                str(fast_config),
                "--seed",
                "7",
                "--out",
                str(train_dir),
                "train",
                "--steps",
                "120",
                "--reward",
                "shifted",
                "--checkpoint",
                str(checkpoint),
            ]
        )
        assert result.exit_code == 0
        assert "Trained for 120 steps" in result.output
    assert checkpoints[0].read_bytes() == checkpoints[1].read_bytes()
    logs = [(train_dir / "training_log.csv").read_bytes() for train_dir in train_dirs]
    assert logs[0] == logs[1]
    assert (tmp_path / "train" / "registry.txt").exists()

    evaluations = []
    for name in ("eval_a", "eval_b"):
        result = invoke(
            [
                "--config",
                str(fast_config),
                "--out",
                str(tmp_path / name),
                "eval",
                "--checkpoint",
                str(checkpoints[0]),
                "--registry",
                str(tmp_path / "train" / "registry.txt"),
            ]
        )
        assert result.exit_code == 0
        assert "Success rate" in result.output
        evaluations.append(pd.read_csv(tmp_path / name / EVAL_FILENAME))
    assert (tmp_path / "eval_a" / EVAL_FILENAME).read_bytes() == (
        tmp_path / "eval_b" / EVAL_FILENAME
    ).read_bytes()
    assert len(evaluations[0]) == 12

    oracle = tmp_path / "oracle.csv"
    assert invoke(["--out", str(oracle), "oracle"]).exit_code == 0
    out = tmp_path / "compare.csv"
    eval_csv = tmp_path / "eval_a" / EVAL_FILENAME
    result = invoke(["--out", str(out), "compare", str(eval_csv), str(oracle)])
    assert result.exit_code == 0
    assert "Mean ratio" in result.output
    assert list(pd.read_csv(out).columns) == COMPARE_COLUMNS


def test_eval_rejects_corrupt_checkpoints(tmp_path: Path) -> None:
    """Test that a corrupt checkpoint exits with code 2."""
    checkpoint = tmp_path / "checkpoint.bin"
    checkpoint.write_bytes(b"BDQN")
    result = invoke(["eval", "--checkpoint", str(checkpoint)])
    assert result.exit_code == VALIDATION_EXIT_CODE


def test_run(tmp_path: Path, fast_config: Path) -> None:
    """Test the complete experiment command."""
    out = tmp_path / "run"
    result = invoke(["--config", str(fast_config), "--out", str(out), "run"])
    assert result.exit_code == 0
    steps = "load, attractors, training, evaluation, oracle, compare"
    assert f"Finished steps: {steps}" in result.output
    assert (out / "compare.csv").exists()
