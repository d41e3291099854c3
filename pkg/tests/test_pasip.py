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


"""Tests for pseudo-attractor state identification."""

from pathlib import Path
from typing import List

import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from packages.valory.skills.attractor_control.dynamics import (
    Attractor,
    attractor_states,
    attractors,
    build_stg,
    pseudo_attractor,
    stationary_distribution,
)
from packages.valory.skills.attractor_control.exceptions import (
    ConfigurationError,
    ModelFormatError,
)
from packages.valory.skills.attractor_control.network import PbnModel, random_model
from packages.valory.skills.attractor_control.pasip import (
    DEFAULT_MAX_INITIAL_STATES,
    DiscoverySource,
    PaRegistry,
    PasipConfig,
    Step2Detector,
    identification_report,
    precision,
    recall,
    step1_scan,
    step2_feed,
)
from tests.conftest import A1_STATES, A2_STATES, A3_STATES


def test_registry_is_an_ordered_set() -> None:
    """Test that duplicates are ignored and discovery order is kept."""
    registry = PaRegistry(4)
    assert registry.register(0b1010, 3, DiscoverySource.STEP2_STUCK)
    assert registry.register(0b0001, 5, DiscoverySource.STEP2_HISTORY)
    assert not registry.register(0b1010, 9, DiscoverySource.STEP1)
    assert registry.states == (0b1010, 0b0001)
    assert len(registry) == 2
    assert 0b0001 in registry
    assert registry.log[0].step == 3
    assert registry.log[0].source == DiscoverySource.STEP2_STUCK


def test_registry_copy_is_independent(registry: PaRegistry) -> None:
    """Test that registering into a copy leaves the original untouched."""
    clone = registry.copy()
    clone.register(0b1111, 1, DiscoverySource.STEP1)
    assert 0b1111 in clone
    assert 0b1111 not in registry


def test_registry_from_attractors(registry: PaRegistry) -> None:
    """Test the registry built from exact attractors."""
    assert registry.states == A1_STATES + A2_STATES + A3_STATES
    assert registry.dumps().splitlines()[0] == "0000 exact"


def test_registry_file(tmp_path: Path) -> None:
    """Test saving and loading a registry file."""
    registry = PaRegistry(4)
    registry.register(0b0110, 0, DiscoverySource.STEP1)
    registry.register(0b0011, 7, DiscoverySource.STEP2_HISTORY)
    path = tmp_path / "registry.txt"
    registry.save(path)
    assert path.read_text(encoding="utf-8") == "0110 step1\n0011 step2-2\n"
    loaded = PaRegistry.load(path, 4)
    assert loaded.states == registry.states
    assert [entry.source for entry in loaded.log] == [
        DiscoverySource.STEP1,
        DiscoverySource.STEP2_HISTORY,
    ]


def test_registry_text_without_sources() -> None:
    """Test that bare state lines are accepted."""
    assert PaRegistry.loads("0001\n\n1000\n", 4).states == (0b0001, 0b1000)


def test_registry_text_errors() -> None:
    """Test malformed registry files."""
    with pytest.raises(ModelFormatError) as error:
        PaRegistry.loads("0001 step1\n0010 bogus\n", 4)
    assert error.value.line == 2
    with pytest.raises(ModelFormatError):
        PaRegistry.loads("001\n", 4)


@pytest.mark.parametrize(
    "overrides",
    [
        dict(step1_threshold=0.0),
        dict(step2_threshold=1.0),
        dict(burn_in=0),
        dict(history_size=-1),
        dict(workers=0),
        dict(k_initial_states=0),
    ],
)
def test_config_invariants(overrides: dict) -> None:
    """Test that invalid parameters are rejected."""
    with pytest.raises(ConfigurationError):
        PasipConfig(**overrides)


def test_initial_state_count() -> None:
    """Test the default number of Step I runs."""
    assert PasipConfig().initial_state_count(4) == 16
    assert PasipConfig().initial_state_count(12) == DEFAULT_MAX_INITIAL_STATES
    assert PasipConfig(k_initial_states=7).initial_state_count(12) == 7


def test_step1_on_example(model: PbnModel, found: List[Attractor]) -> None:
    """Test that Step I finds every attractor state of the example and nothing else."""
    registry = step1_scan(model, PasipConfig(), np.random.default_rng(0))
    assert set(registry) == attractor_states(found)
    assert {entry.source for entry in registry.log} == {DiscoverySource.STEP1}
    report = identification_report(registry, found)
    assert report.precision == 1.0
    assert report.recall == 1.0
    assert report.attractor_count == 3
    assert report.true_positives == 4
    assert report.pseudo_attractor_state_count is None


def test_step1_is_seeded(model: PbnModel) -> None:
    """Test that equal seeds give equal registries."""
    config = PasipConfig(k_initial_states=5, counted_steps=300)
    first = step1_scan(model, config, np.random.default_rng(42))
    second = step1_scan(model, config, np.random.default_rng(42))
    assert first.states == second.states


def test_step1_does_not_depend_on_workers() -> None:
    """Test that the worker count leaves the result unchanged."""
    model = random_model(8, 3, 2, 5)
    config = PasipConfig(k_initial_states=6, counted_steps=400)
    single = step1_scan(model, config, np.random.default_rng(1))
    pooled_config = PasipConfig(k_initial_states=6, counted_steps=400, workers=2)
    pooled = step1_scan(model, pooled_config, np.random.default_rng(1))
    assert single.states == pooled.states


def _detector(registry: PaRegistry, **overrides: int) -> Step2Detector:
    values = dict(stuck_steps=1000, history_size=10_000, step2_threshold=0.15)
    values.update(overrides)
    return Step2Detector(registry, PasipConfig(**values))  # type: ignore


def test_stuck_detector() -> None:
    """Test registration after the configured number of repeats."""
    registry = PaRegistry(4)
    detector = _detector(registry, stuck_steps=3)
    assert detector.feed(0b0110, 1) == []
    assert detector.feed(0b0110, 2) == []
    assert detector.feed(0b0110, 3) == [0b0110]
    assert registry.log[0].source == DiscoverySource.STEP2_STUCK
    assert registry.log[0].step == 3
    assert detector.feed(0b0110, 4) == []


def test_stuck_detector_needs_consecutive_repeats() -> None:
    """Test that an interrupted run of repeats starts over."""
    registry = PaRegistry(4)
    detector = _detector(registry, stuck_steps=3)
    for state in (0b0110, 0b0110, 0b0111, 0b0110, 0b0110):
        assert step2_feed(detector, state) == []
    assert len(registry) == 0


def test_history_detector() -> None:
    """Test that states above the share threshold register when the window fills."""
    registry = PaRegistry(4)
    detector = _detector(registry, history_size=20)
    window = [0b0001] * 8 + [0b0010] * 3 + [0b0100] * 2 + [0b1000] * 7
    new_states = []
    for step, state in enumerate(np.random.default_rng(0).permutation(window).tolist()):
        new_states += detector.feed(state, step)
    # 3 of 20 is exactly the threshold and stays out
    assert new_states == [0b0001, 0b1000]
    assert {entry.source for entry in registry.log} == {DiscoverySource.STEP2_HISTORY}


def test_history_detector_discards_windows_with_known_states() -> None:
    """Test that a window touching a registered state registers nothing."""
    registry = PaRegistry(4)
    registry.register(0b1111, 0, DiscoverySource.STEP1)
    detector = _detector(registry, history_size=10)
    window = [0b0001, 0b0010] * 4 + [0b1111, 0b0001]
    assert [detector.feed(state) for state in window] == [[]] * 10
    assert len(registry) == 1
    # the next window starts clean
    for state in [0b0001, 0b0010] * 5:
        detector.feed(state)
    assert set(registry) == {0b1111, 0b0001, 0b0010}


def test_precision_and_recall_edges() -> None:
    """Test the conventions for empty sets."""
    assert precision([], frozenset({1})) == 1.0
    assert recall([1], frozenset()) == 1.0
    assert precision([1, 2], frozenset({1})) == 0.5
    assert recall([1], frozenset({1, 2, 3, 4})) == 0.25


def test_identification_report_with_pseudo_attractors(
    model: PbnModel, found: List[Attractor]
) -> None:
    """Test the report against exact pseudo-attractor states."""
    pa_states = frozenset(
        state
        for attractor in found
        for state in pseudo_attractor(stationary_distribution(model, attractor)).states
    )
    registry = PaRegistry(4)
    registry.register(0b1000, 0, DiscoverySource.STEP1)
    registry.register(0b0011, 0, DiscoverySource.STEP1)
    report = identification_report(registry, found, pa_states)
    assert report.pseudo_attractor_state_count == 3
    assert report.true_positives == 1
    assert report.precision == 0.5
    assert report.recall == 0.25


@pytest.mark.e2e
@settings(max_examples=60, deadline=None, derandomize=True)
@given(
    st.integers(4, 10),
    st.integers(1, 2),
    st.integers(0, 2**32 - 1),
)
def test_step1_has_no_false_positives_on_random_models(
    n: int, predictors: int, seed: int
) -> None:
    """Test that Step I registers only attractor states on random models."""
    model = random_model(n, 3, predictors, seed)
    found = attractors(build_stg(model))
    registry = step1_scan(model, PasipConfig(), np.random.default_rng(seed))
    assert identification_report(registry, found).precision == 1.0
