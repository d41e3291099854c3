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


"""Long-running end-to-end checks of training, identification and the oracle."""

from typing import List

import numpy as np
import pytest

from packages.valory.skills.attractor_control.agent import (
    AgentConfig,
    moving_average_lengths,
    train,
)
from packages.valory.skills.attractor_control.dynamics import (
    Attractor,
    Simulator,
    Stg,
    attractor_states,
    attractors,
    build_stg,
)
from packages.valory.skills.attractor_control.environment import (
    EnvironmentConfig,
    RewardScheme,
)
from packages.valory.skills.attractor_control.evaluation import compare, evaluate
from packages.valory.skills.attractor_control.network import PbnModel, random_model
from packages.valory.skills.attractor_control.oracle import (
    all_pairs_minimal_control,
    brute_force_min_length,
    oracle_frame,
)
from packages.valory.skills.attractor_control.pasip import PaRegistry


@pytest.mark.e2e
def test_training_on_the_example(
    model: PbnModel, stg: Stg, found: List[Attractor]
) -> None:
    """Test that a full training run controls every pair of the example."""
    registry = PaRegistry.from_attractors(model.n, found)
    result = train(
        model,
        registry,
        AgentConfig(),
        np.random.default_rng(0),
        50_000,
        attractors=found,
    )
    report = evaluate(result.params, model, result.registry, attractors=found)
    assert len(report.rows) == 60
    assert report.success_rate >= 90.0
    oracle = oracle_frame(all_pairs_minimal_control(stg, found))
    comparison = compare(report.frame(), oracle)
    assert not comparison.table.empty
    assert comparison.mean_ratio <= 4.0


def _first_bn_with_several_attractors(n: int) -> PbnModel:
    for seed in range(100):
        model = random_model(n, 3, 1, 5000 + seed)
        if len(attractors(build_stg(model))) >= 2:
            return model
    raise AssertionError("no random BN with two attractors")


@pytest.mark.e2e
def test_shifted_penalty_converges_on_a_random_bn() -> None:
    """Test the alternative reward on a 10-gene BN."""
    model = _first_bn_with_several_attractors(10)
    found = attractors(build_stg(model))
    registry = PaRegistry.from_attractors(model.n, found)
    result = train(
        model,
        registry,
        AgentConfig(),
        np.random.default_rng(0),
        30_000,
        environment_config=EnvironmentConfig(
            reward_scheme=RewardScheme.SHIFTED_PENALTY
        ),
        attractors=found,
    )
    assert moving_average_lengths(result.log)[-1] < 5.0


@pytest.mark.e2e
@pytest.mark.parametrize("seed", range(30))
def test_random_sweep(seed: int) -> None:
    """Test recurrence against attractors and both oracles on random models."""
    n = 4 + seed % 7
    model = random_model(n, 3, 1 + seed % 2, 7000 + seed)
    stg = build_stg(model)
    found = attractors(stg)
    truth = attractor_states(found)
    rng = np.random.default_rng(seed)
    simulator = Simulator(model)
    for start in rng.integers(2**n, size=20).tolist():
        tail = list(simulator.trajectory(start, rng, 20_000))[-2000:]
        assert set(tail) <= truth
    for result in all_pairs_minimal_control(stg, found, 3):
        expected = brute_force_min_length(
            stg, found, result.source, result.target, 3, len(found)
        )
        length = None if result.strategy is None else len(result.strategy)
        assert length == expected
