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

"""This module contains the pseudo-attractor state identification procedure (PASIP)."""

from collections import Counter
from concurrent.futures import ProcessPoolExecutor
from dataclasses import dataclass
from enum import Enum
from logging import Logger
from pathlib import Path
from typing import (
    AbstractSet,
    Dict,
    Iterable,
    Iterator,
    List,
    Optional,
    Sequence,
    Tuple,
    Union,
)

import numpy as np
from aea.exceptions import enforce
from aea.helpers.logging import WithLogger, setup_logger

from packages.valory.skills.attractor_control import PUBLIC_ID
from packages.valory.skills.attractor_control.dynamics import Attractor, Simulator
from packages.valory.skills.attractor_control.exceptions import (
    ConfigurationError,
    ModelFormatError,
)
from packages.valory.skills.attractor_control.network import (
    PbnModel,
    State,
    format_state,
    parse_state,
)


LOGGER_NAME = f"{PUBLIC_ID.name}.pasip"
DEFAULT_MAX_INITIAL_STATES = 100

_logger = setup_logger(LOGGER_NAME)


class DiscoverySource(Enum):
    """How a pseudo-attractor state entered the registry."""

    STEP1 = "step1"
    STEP2_STUCK = "step2-1"
    STEP2_HISTORY = "step2-2"
    EXACT = "exact"

    def __str__(self) -> str:
        """Get the string value of the source."""
        return self.value


@dataclass(frozen=True)
class PasipConfig:  # pylint: disable=too-many-instance-attributes
    """
    Parameters of the identification procedure.

    `burn_in` (n0) steps of every Step I run are discarded, the next
    `counted_steps` (n1) are counted. `stuck_steps` (n2) consecutive repeats
    trigger the stuck detector, and `history_size` (n3) bounds the history
    window of the revisit detector.
    """

    k_initial_states: Optional[int] = None
    burn_in: int = 200
    counted_steps: int = 1000
    step1_threshold: float = 0.05
    stuck_steps: int = 1000
    history_size: int = 10000
    step2_threshold: float = 0.15
    workers: int = 1

    def __post_init__(self) -> None:
        """Check the invariants."""
        for name in ("step1_threshold", "step2_threshold"):
            value = getattr(self, name)
            enforce(
                0 < value < 1,
                f"{name} must lie in (0, 1), got {value}",
                ConfigurationError,
            )
        for name in (
            "burn_in",
            "counted_steps",
            "stuck_steps",
            "history_size",
            "workers",
        ):
            value = getattr(self, name)
            enforce(
                value > 0, f"{name} must be positive, got {value}", ConfigurationError
            )
        enforce(
            self.k_initial_states is None or self.k_initial_states > 0,
            f"k_initial_states must be positive, got {self.k_initial_states}",
            ConfigurationError,
        )

    def initial_state_count(self, n: int) -> int:
        """Number of Step I runs for an n-gene model."""
        if self.k_initial_states is not None:
            return self.k_initial_states
        return min(2**n, DEFAULT_MAX_INITIAL_STATES)


@dataclass(frozen=True)
class Discovery:
    """An entry of the registry's discovery log."""

    state: State
    step: int
    source: DiscoverySource


class PaRegistry:
    """Append-only ordered set of identified pseudo-attractor states."""

    def __init__(self, n: int) -> None:
        """Initialize an empty registry for n-gene states."""
        self.n = n
        self._states: Dict[State, Discovery] = {}

    @classmethod
    def from_attractors(cls, n: int, found: Iterable[Attractor]) -> "PaRegistry":
        """A registry holding every state of the given attractors."""
        registry = cls(n)
        for attractor in found:
            for state in attractor.states:
                registry.register(state, 0, DiscoverySource.EXACT)
        return registry

    def register(self, state: State, step: int, source: DiscoverySource) -> bool:
        """
        Add a state unless it is known already.

        :param state: the state.
        :param step: the training step of the discovery (0 before training).
        :param source: which part of the procedure found it.
        :return: whether the state is new.
        """
        if state in self._states:
            return False
        self._states[state] = Discovery(state, step, source)
        return True

    def __contains__(self, state: object) -> bool:
        """Whether the state is registered."""
        return state in self._states

    def __len__(self) -> int:
        """Number of registered states."""
        return len(self._states)

    def __iter__(self) -> Iterator[State]:
        """Registered states in discovery order."""
        return iter(self._states)

    @property
    def states(self) -> Tuple[State, ...]:
        """Registered states in discovery order."""
        return tuple(self._states)

    @property
    def log(self) -> Tuple[Discovery, ...]:
        """The discovery log."""
        return tuple(self._states.values())

    def copy(self) -> "PaRegistry":
        """An independent copy."""
        clone = PaRegistry(self.n)
        clone._states = dict(self._states)  # pylint: disable=protected-access
        return clone

    def dumps(self) -> str:
        """Text form: one `<bits> <source>` line per state."""
        return "".join(
            f"{format_state(entry.state, self.n)} {entry.source}\n"
            for entry in self._states.values()
        )

    @classmethod
    def loads(cls, text: str, n: int) -> "PaRegistry":
        """Parse the text form."""
        registry = cls(n)
        for number, line in enumerate(text.splitlines(), start=1):
            fields = line.split()
            if not fields:
                continue
            try:
                source = (
                    DiscoverySource(fields[1])
                    if len(fields) > 1
                    else DiscoverySource.EXACT
                )
            except ValueError as e:
                raise ModelFormatError(
                    f"unknown discovery source {fields[1]!r}", number
                ) from e
            registry.register(parse_state(fields[0], n), 0, source)
        return registry

    def save(self, path: Union[str, Path]) -> None:
        """Write the registry file."""
        Path(path).write_text(self.dumps(), encoding="utf-8")

    @classmethod
    def load(cls, path: Union[str, Path], n: int) -> "PaRegistry":
        """Read a registry file."""
        return cls.loads(Path(path).read_text(encoding="utf-8"), n)


def _scan_runs(
    model: PbnModel, runs: Sequence[Tuple[State, int]], config: PasipConfig
) -> List[Tuple[State, ...]]:
    simulator = Simulator(model)
    threshold = config.step1_threshold * config.counted_steps
    found = []
    for start, seed in runs:
        rng = np.random.default_rng(seed)
        trajectory = simulator.trajectory(
            start, rng, config.burn_in + config.counted_steps
        )
        counted = np.fromiter(trajectory, dtype=np.int64)[config.burn_in :]
        values, counts = np.unique(counted, return_counts=True)
        found.append(tuple(int(v) for v in values[counts >= threshold].tolist()))
    return found


def step1_scan(
    model: PbnModel, config: PasipConfig, rng: np.random.Generator
) -> PaRegistry:
    """
    Step I: register the states that dominate long simulation runs.

    Every run starts from a random state, discards `burn_in` steps and
    registers each state occupying at least `step1_threshold` of the next
    `counted_steps` steps of that run. Run seeds are derived up front, so the
    result does not depend on `config.workers`.

    :param model: the model.
    :param config: the procedure parameters.
    :param rng: the caller-owned random source.
    :return: the registry.
    """
    n = model.n
    k = config.initial_state_count(n)
    starts = rng.choice(2**n, size=k, replace=k > 2**n).tolist()
    seeds = rng.integers(2**63, size=k).tolist()
    runs = list(zip(starts, seeds))
    if config.workers > 1 and k > 1:
        chunks = [runs[i :: config.workers] for i in range(config.workers)]
        with ProcessPoolExecutor(max_workers=config.workers) as executor:
            parts = list(
                executor.map(
                    _scan_runs,
                    [model] * len(chunks),
                    chunks,
                    [config] * len(chunks),
                )
            )
        per_run: List[Tuple[State, ...]] = [()] * k
        for offset, part in enumerate(parts):
            per_run[offset :: config.workers] = part
    else:
        per_run = _scan_runs(model, runs, config)
    registry = PaRegistry(n)
    for states in per_run:
        for state in states:
            registry.register(state, 0, DiscoverySource.STEP1)
    _logger.info(f"Step I registered {len(registry)} states from {k} runs")
    return registry


class Step2Detector(WithLogger):
    """
    Step II online detectors fed with every state visited during training.

    The stuck detector registers a state repeated `stuck_steps` consecutive
    times. The revisit detector keeps a history of `history_size` states; when
    full, it registers every state whose share is above `step2_threshold`,
    unless an already known state was seen in the window. The history is then
    cleared.
    """

    def __init__(
        self,
        registry: PaRegistry,
        config: PasipConfig,
        logger: Optional[Logger] = None,
    ) -> None:
        """Initialize the detector."""
        super().__init__(logger=logger, default_logger_name=LOGGER_NAME)
        self.registry = registry
        self.config = config
        self._last: Optional[State] = None
        self._repeats = 0
        self._history: Counter = Counter()
        self._history_length = 0
        self._known_seen = False

    def _register(self, state: State, step: int, source: DiscoverySource) -> bool:
        added = self.registry.register(state, step, source)
        if added:
            self.logger.info(
                f"New pseudo-attractor state {format_state(state, self.registry.n)} "
                f"via {source} at step {step}"
            )
        return added

    def feed(self, state: State, step: int = 0) -> List[State]:
        """
        Feed one visited state.

        :param state: the visited state.
        :param step: the current training step, kept in the discovery log.
        :return: the states registered by this call.
        """
        new_states = []
        if state == self._last:
            self._repeats += 1
        else:
            self._last = state
            self._repeats = 1
        if self._repeats >= self.config.stuck_steps:
            if self._register(state, step, DiscoverySource.STEP2_STUCK):
                new_states.append(state)
            self._repeats = 0

        self._history[state] += 1
        self._history_length += 1
        if state in self.registry and state not in new_states:
            self._known_seen = True
        if self._history_length >= self.config.history_size:
            if not self._known_seen:
                for candidate, count in sorted(self._history.items()):
                    share = count / self._history_length
                    if share > self.config.step2_threshold and self._register(
                        candidate, step, DiscoverySource.STEP2_HISTORY
                    ):
                        new_states.append(candidate)
            else:
                self.logger.debug("History window contained a known state; discarded")
            self._clear_history()
        return new_states

    def _clear_history(self) -> None:
        self._history.clear()
        self._history_length = 0
        self._known_seen = False


def step2_feed(detector: Step2Detector, state: State, step: int = 0) -> List[State]:
    """Feed one visited state to the Step II detectors; returns the new states."""
    return detector.feed(state, step)


def precision(registry: Iterable[State], truth: AbstractSet[State]) -> float:
    """
    Share of registered states that are attractor states.

    :param registry: the registered states.
    :param truth: the attractor states.
    :return: TP / (TP + FP); 1.0 for an empty registry.
    """
    registered = set(registry)
    if not registered:
        return 1.0
    return len(registered & truth) / len(registered)


def recall(registry: Iterable[State], truth: AbstractSet[State]) -> float:
    """Share of attractor states that are registered; 1.0 when there are none."""
    if not truth:
        return 1.0
    return len(set(registry) & truth) / len(truth)


@dataclass(frozen=True)
class IdentificationReport:
    """Summary of an identification run against exact attractors."""

    attractor_count: int
    attractor_state_count: int
    pseudo_attractor_state_count: Optional[int]
    registered_count: int
    true_positives: int
    precision: float
    recall: float


def identification_report(
    registry: PaRegistry,
    found: Sequence[Attractor],
    pseudo_attractor_states: Optional[AbstractSet[State]] = None,
) -> IdentificationReport:
    """
    Compare a registry with the exact attractors of the model.

    :param registry: the registry.
    :param found: the exact attractors.
    :param pseudo_attractor_states: the exact pseudo-attractor states, if computed.
    :return: the report.
    """
    truth = frozenset(state for attractor in found for state in attractor.states)
    return IdentificationReport(
        attractor_count=len(found),
        attractor_state_count=len(truth),
        pseudo_attractor_state_count=(
            None if pseudo_attractor_states is None else len(pseudo_attractor_states)
        ),
        registered_count=len(registry),
        true_positives=len(set(registry) & truth),
        precision=precision(registry, truth),
        recall=recall(registry, truth),
    )
