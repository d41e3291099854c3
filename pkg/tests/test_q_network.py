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


"""Tests for the branching dueling Q-network."""

from pathlib import Path

import numpy as np
import pytest

from packages.valory.skills.attractor_control.agent import greedy_intervention
from packages.valory.skills.attractor_control.exceptions import CheckpointError
from packages.valory.skills.attractor_control.q_network import (
    CHECKPOINT_MAGIC,
    Adam,
    QNetworkParams,
    dueling_aggregate,
    forward,
    init_params,
    load_checkpoint,
    parameter_names,
    save_checkpoint,
    td_loss,
)


def _small_params(dtype: type = np.float64, seed: int = 0) -> QNetworkParams:
    return init_params(
        3, np.random.default_rng(seed), trunk_widths=(8, 8), stream_width=6, dtype=dtype
    )


def test_parameter_shapes() -> None:
    """Test the tensor layout."""
    params = init_params(
        4, np.random.default_rng(0), trunk_widths=(16, 12), stream_width=5
    )
    assert list(params.tensors) == parameter_names(2)
    assert params.tensors["trunk.0.weight"].shape == (8, 16)
    assert params.tensors["trunk.1.weight"].shape == (16, 12)
    assert params.tensors["value.out.weight"].shape == (5, 1)
    assert params.tensors["branch.hidden.weight"].shape == (4, 12, 5)
    assert params.tensors["branch.out.bias"].shape == (4, 2)
    assert params.trunk_depth == 2
    assert params.input_width == 8
    assert params.branches == 4
    assert params.dtype == np.float32
    assert not params.tensors["trunk.0.bias"].any()


def test_forward_shapes() -> None:
    """Test single and batched evaluation."""
    params = _small_params()
    observation = np.array([1, 0, 1, 0, 0, 0], dtype=np.float32)
    single = forward(params, observation)
    batch = forward(params, np.stack([observation, observation]))
    assert single.shape == (3, 2)
    assert batch.shape == (2, 3, 2)
    assert np.allclose(batch[0], single)
    with pytest.raises(ValueError):
        forward(params, np.zeros(5))


def test_dueling_aggregate() -> None:
    """Test that advantages are centred per branch."""
    value = np.array([2.0])
    advantages = np.array([[[1.0, 3.0], [0.0, 0.0]]])
    q_values = dueling_aggregate(value, advantages)
    assert q_values.tolist() == [[[1.0, 3.0], [2.0, 2.0]]]
    assert np.allclose(q_values.mean(axis=-1), 2.0)


def test_forward_is_dueling() -> None:
    """Test that the branch means of Q equal the state value for every branch."""
    params = _small_params()
    observations = np.random.default_rng(1).integers(0, 2, size=(5, 6)).astype(float)
    q_values = forward(params, observations)
    means = q_values.mean(axis=-1)
    assert np.allclose(means, means[:, :1])


@pytest.mark.parametrize("seed", range(8))
def test_branch_offsets_leave_the_greedy_decision_unchanged(seed: int) -> None:
    """Test that a constant added to one branch's advantages changes nothing."""
    rng = np.random.default_rng(seed)
    value = rng.normal(size=1)
    advantages = rng.normal(size=(1, 5, 2))
    q_values = dueling_aggregate(value, advantages)
    decision = greedy_intervention(q_values[0], max_flips=2)
    for branch in range(5):
        shifted = advantages.copy()
        shifted[:, branch, :] += rng.uniform(-10.0, 10.0)
        shifted_q = dueling_aggregate(value, shifted)
        assert np.allclose(shifted_q, q_values)
        assert greedy_intervention(shifted_q[0], max_flips=2) == decision


@pytest.mark.parametrize("seed", range(10))
def test_gradients_match_finite_differences(seed: int) -> None:
    """Test backpropagation against central differences."""
    rng = np.random.default_rng(seed)
    params = _small_params(seed=seed)
    observations = rng.standard_normal((4, 6))
    actions = rng.integers(0, 2, size=(4, 3))
    targets = rng.standard_normal(4)
    _, grads = td_loss(params, observations, actions, targets)
    h = 1e-5
    for name, tensor in params.tensors.items():
        flat = tensor.reshape(-1)
        picks = rng.choice(flat.size, size=min(5, flat.size), replace=False)
        analytic, numeric = [], []
        for index in picks.tolist():
            original = flat[index]
            flat[index] = original + h
            plus, _ = td_loss(params, observations, actions, targets)
            flat[index] = original - h
            minus, _ = td_loss(params, observations, actions, targets)
            flat[index] = original
            analytic.append(grads[name].reshape(-1)[index])
            numeric.append((plus - minus) / (2 * h))
        scale = max(np.max(np.abs(analytic)), np.max(np.abs(numeric)), 1e-6)
        error = np.max(np.abs(np.subtract(analytic, numeric))) / scale
        assert error <= 1e-4, name


def test_gradient_shapes_follow_params() -> None:
    """Test that every tensor gets a gradient of its own shape and type."""
    params = _small_params(np.float32)
    observations = np.ones((2, 6), dtype=np.float32)
    _, grads = td_loss(params, observations, np.zeros((2, 3), dtype=int), np.zeros(2))
    assert set(grads) == set(params.tensors)
    for name, gradient in grads.items():
        assert gradient.shape == params.tensors[name].shape
        assert gradient.dtype == np.float32


def test_adam_reduces_the_loss() -> None:
    """Test that repeated optimiser steps fit a fixed batch."""
    rng = np.random.default_rng(3)
    params = _small_params()
    observations = rng.integers(0, 2, size=(8, 6)).astype(float)
    actions = rng.integers(0, 2, size=(8, 3))
    targets = rng.standard_normal(8)
    optimiser = Adam(learning_rate=1e-2)
    initial, _ = td_loss(params, observations, actions, targets)
    for _ in range(200):
        _, grads = td_loss(params, observations, actions, targets)
        optimiser.step(params, grads)
    final, _ = td_loss(params, observations, actions, targets)
    assert optimiser.steps == 200
    assert final < 0.5 * initial


def test_adam_first_step_size() -> None:
    """Test that the first update moves every parameter by about the learning rate."""
    params = _small_params()
    before = params.copy()
    grads = {name: np.full_like(value, -3.0) for name, value in params.tensors.items()}
    Adam(learning_rate=0.01).step(params, grads)
    for name, value in params.tensors.items():
        assert np.allclose(value - before.tensors[name], 0.01, atol=1e-6)


def test_copy_and_assign() -> None:
    """Test that copies are independent and assign overwrites in place."""
    params = _small_params()
    clone = params.copy()
    clone.tensors["value.out.bias"] += 1.0
    assert params.tensors["value.out.bias"][0] == 0.0
    params.assign(clone)
    assert params.tensors["value.out.bias"][0] == 1.0
    assert params.astype(np.float32).dtype == np.float32


def test_checkpoint_round_trip(tmp_path: Path) -> None:
    """Test that a saved checkpoint loads back to equal float32 tensors."""
    params = init_params(
        5, np.random.default_rng(7), trunk_widths=(12, 10, 9), stream_width=4
    )
    path = tmp_path / "checkpoint.bin"
    save_checkpoint(params, path)
    assert path.read_bytes().startswith(CHECKPOINT_MAGIC)
    loaded = load_checkpoint(path)
    assert list(loaded.tensors) == list(params.tensors)
    for name, value in params.tensors.items():
        assert loaded.tensors[name].dtype == np.float32
        assert np.array_equal(loaded.tensors[name], value)
    observation = np.zeros(10, dtype=np.float32)
    assert np.array_equal(forward(loaded, observation), forward(params, observation))


def test_checkpoint_errors(tmp_path: Path) -> None:
    """Test missing, foreign, truncated and padded files."""
    with pytest.raises(CheckpointError):
        load_checkpoint(tmp_path / "missing.bin")
    foreign = tmp_path / "foreign.bin"
    foreign.write_bytes(b"NOPE" + bytes(64))
    with pytest.raises(CheckpointError):
        load_checkpoint(foreign)
    path = tmp_path / "checkpoint.bin"
    save_checkpoint(_small_params(np.float32), path)
    data = path.read_bytes()
    truncated = tmp_path / "truncated.bin"
    truncated.write_bytes(data[:-7])
    with pytest.raises(CheckpointError):
        load_checkpoint(truncated)
    padded = tmp_path / "padded.bin"
    padded.write_bytes(data + b"\0")
    with pytest.raises(CheckpointError):
        load_checkpoint(padded)
    short = tmp_path / "short.bin"
    short.write_bytes(data[:2])
    with pytest.raises(CheckpointError):
        load_checkpoint(short)
