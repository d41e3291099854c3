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


"""Shared fixtures of the attractor control tests."""

from typing import List

import pytest

from packages.valory.skills.attractor_control.agent import AgentConfig
from packages.valory.skills.attractor_control.dynamics import (
    Attractor,
    Stg,
    attractors,
    build_stg,
)
from packages.valory.skills.attractor_control.network import PbnModel, example_model
from packages.valory.skills.attractor_control.pasip import PaRegistry


A1_STATES = (0b0000,)
A2_STATES = (0b0101,)
A3_STATES = (0b1000, 0b1010)


@pytest.fixture(scope="session")
def model() -> PbnModel:
    """The packaged four-gene example."""
    return example_model()


@pytest.fixture(scope="session")
def stg(model: PbnModel) -> Stg:
    """State transition graph of the example."""
    return build_stg(model)


@pytest.fixture(scope="session")
def found(stg: Stg) -> List[Attractor]:
    """Attractors of the example."""
    return attractors(stg)


@pytest.fixture
def registry(model: PbnModel, found: List[Attractor]) -> PaRegistry:
    """A fresh registry holding the attractor states of the example."""
    return PaRegistry.from_attractors(model.n, found)


def small_agent_config(**overrides: object) -> AgentConfig:
    """A fast agent configuration for unit tests."""
    values = dict(
        batch_size=16,
        target_sync_period=50,
        epsilon_decay_steps=200,
        buffer_capacity=1000,
        warmup_transitions=16,
        trunk_widths=(16, 16),
        stream_width=8,
        learning_rate=1e-3,
        log_every=10,
    )
    values.update(overrides)
    return AgentConfig(**values)  # type: ignore
