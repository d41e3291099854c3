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


"""Tests for the experiment pipeline."""

from pathlib import Path
from typing import Any

import pandas as pd
import pytest

from packages.valory.skills.attractor_control.evaluation import EVAL_FILENAME
from packages.valory.skills.attractor_control.exceptions import ModelFormatError
from packages.valory.skills.attractor_control.experiment import (
    ATTRACTORS_FILENAME,
    CHECKPOINT_FILENAME,
    COMPARE_FILENAME,
    ORACLE_FILENAME,
    REGISTRY_FILENAME,
    TRAINING_LOG_FILENAME,
    Experiment,
)
from packages.valory.skills.attractor_control.models import Params, load_params
from packages.valory.skills.attractor_control.network import EXAMPLE_MODEL_PATH


def fast_params(**overrides: Any) -> Params:
    """Parameters small enough for a complete run in a unit test."""
    values = dict(
        training_steps=200,
        batch_size=16,
        warmup_transitions=16,
        buffer_capacity=1000,
        target_sync_period=50,
        epsilon_decay_steps=100,
        trunk_widths=[16, 16],
        stream_width=8,
        evaluation_repeats=2,
        max_interventions=5,
    )
    values.update(overrides)
    return load_params(**values)


def test_exact_experiment(tmp_path: Path) -> None:
    """Test the complete run on the example."""
    out_dir = tmp_path / "run"
    result = Experiment(fast_params(), out_dir).run(EXAMPLE_MODEL_PATH)
    assert result.steps == [
        "load",
        "attractors",
        "training",
        "evaluation",
        "oracle",
        "compare",
    ]
    assert (out_dir / ATTRACTORS_FILENAME).read_text(encoding="utf-8").splitlines() == [
        "A1: fixed: 0000",
        "A2: fixed: 0101",
        "A3: cyclic: 1000 1010",
    ]
    for filename in (
        REGISTRY_FILENAME,
        CHECKPOINT_FILENAME,
        TRAINING_LOG_FILENAME,
        EVAL_FILENAME,
        ORACLE_FILENAME,
        COMPARE_FILENAME,
    ):
        assert (out_dir / filename).exists(), filename
    assert len(pd.read_csv(out_dir / EVAL_FILENAME)) == 12
    assert len(pd.read_csv(out_dir / ORACLE_FILENAME)) == 6
    assert result.comparison is not None
    assert result.oracle_results is not None
    assert result.training_result.log[-1].step == 200


def test_scan_experiment(tmp_path: Path) -> None:
    """Test that models above the exhaustive limit skip the oracle."""
    out_dir = tmp_path / "run"
    experiment = Experiment(fast_params(stg_gene_limit=3), out_dir)
    result = experiment.run(EXAMPLE_MODEL_PATH)
    assert result.steps == ["load", "scan", "training", "evaluation"]
    assert result.attractors is None
    assert result.comparison is None
    assert not (out_dir / ORACLE_FILENAME).exists()
    assert set(result.registry) >= {0b0000, 0b0101, 0b1000, 0b1010}


def test_experiment_is_seeded(tmp_path: Path) -> None:
    """Test that equal seeds write equal evaluation files."""
    for name in ("a", "b"):
        Experiment(fast_params(), tmp_path / name, seed=5).run(EXAMPLE_MODEL_PATH)
    assert (tmp_path / "a" / EVAL_FILENAME).read_bytes() == (
        tmp_path / "b" / EVAL_FILENAME
    ).read_bytes()


def test_failing_experiment(tmp_path: Path) -> None:
    """Test that a failing step stops the run with its error."""
    model_path = tmp_path / "broken.pbn"
    model_path.write_text("not a model\n", encoding="utf-8")
    experiment = Experiment(fast_params(), tmp_path / "run")
    with pytest.raises(ModelFormatError):
        experiment.run(model_path)
    assert experiment.steps == []
