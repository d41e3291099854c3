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

"""This module contains the source-target attractor control environment."""

from dataclasses import dataclass
from enum import Enum
from logging import Logger
from typing import Iterable, List, Optional, Sequence, Tuple

import numpy as np
from aea.exceptions import enforce
from aea.helpers.logging import WithLogger

from packages.valory.skills.attractor_control import PUBLIC_ID
from packages.valory.skills.attractor_control.dynamics import Attractor, Simulator
from packages.valory.skills.attractor_control.exceptions import (
    ControlError,
    InterventionError,
)
from packages.valory.skills.attractor_control.network import (
    PbnModel,
    State,
    flip_genes,
    format_state,
    state_to_bits,
)
from packages.valory.skills.attractor_control.pasip import PaRegistry, Step2Detector


LOGGER_NAME = f"{PUBLIC_ID.name}.environment"
TERMINAL_BONUS = 1000.0
PENALTY_SCALE = 100.0
GENE_SEPARATOR = "+"
STRATEGY_SEPARATOR = ";"


class RewardScheme(Enum):
    """Reward variants."""

    MIXED = "mixed"
    SHIFTED_PENALTY = "shifted"

    def __str__(self) -> str:
        """Get the string value of the scheme."""
        return self.value


def reward(scheme: RewardScheme, reached_target: bool, flips: int) -> float:
    """
    Reward of one control step.

    :param scheme: the active scheme.
    :param reached_target: whether the reached state belongs to the target.
    :param flips: the number of flipped genes.
    :return: `1000 * hit - flips` (mixed) or `-flips + 100 * (hit - 1)` (shifted).
    """
    hit = 1.0 if reached_target else 0.0
    if scheme is RewardScheme.MIXED:
        return TERMINAL_BONUS * hit - flips
    return -flips + PENALTY_SCALE * (hit - 1.0)


@dataclass(frozen=True)
class Intervention:
    """A set of genes flipped simultaneously, kept as sorted indices."""

    genes: Tuple[int, ...] = ()

    @classmethod
    def of(cls, genes: Iterable[int], n: int, max_flips: int) -> "Intervention":
        """
        Build and check an intervention.

        :param genes: the genes to flip.
        :param n: the gene count of the model.
        :param max_flips: the largest allowed number of flips.
        :return: the intervention.
        """
        listed = [int(gene) for gene in genes]
        enforce(
            len(set(listed)) == len(listed),
            f"repeated genes in {listed}",
            InterventionError,
        )
        enforce(
            all(0 <= gene < n for gene in listed),
            f"gene index out of range in {listed} for {n} genes",
            InterventionError,
        )
        enforce(
            len(listed) <= max_flips,
            f"{len(listed)} flips exceed the cap of {max_flips}",
            InterventionError,
        )
        return cls(tuple(sorted(listed)))

    @classmethod
    def parse(cls, text: str) -> "Intervention":
        """Parse the `0+2` form; the empty string is the empty intervention."""
        text = text.strip()
        if not text:
            return cls()
        try:
            return cls(tuple(sorted(int(gene) for gene in text.split(GENE_SEPARATOR))))
        except ValueError as e:
            raise InterventionError(f"malformed intervention {text!r}") from e

    def __len__(self) -> int:
        """Number of flipped genes."""
        return len(self.genes)

    def __str__(self) -> str:
        """The `0+2` form."""
        return GENE_SEPARATOR.join(str(gene) for gene in self.genes)

    def apply(self, state: State, n: int) -> State:
        """Flip the genes of a state."""
        return flip_genes(state, self.genes, n)


def format_interventions(interventions: Iterable[Intervention]) -> str:
    """Serialize a sequence of interventions as `0+2;1;...`."""
    return STRATEGY_SEPARATOR.join(str(intervention) for intervention in interventions)


def parse_interventions(text: str) -> List[Intervention]:
    """Parse the `0+2;1;...` form."""
    if not text.strip():
        return []
    return [Intervention.parse(part) for part in text.split(STRATEGY_SEPARATOR)]


@dataclass(frozen=True)
class ControlProblem:
    """A source and a target set of states with their identifiers."""

    source: Tuple[State, ...]
    target: Tuple[State, ...]
    source_id: str = "source"
    target_id: str = "target"

    def __post_init__(self) -> None:
        """Check the invariants."""
        enforce(
            bool(self.source) and bool(self.target),
            "empty source or target",
            ControlError,
        )
        enforce(
            set(self.source) != set(self.target),
            "source and target must differ",
            ControlError,
        )

    @property
    def target_representative(self) -> State:
        """The numerically smallest target state."""
        return min(self.target)


@dataclass(frozen=True)
class EnvironmentConfig:
    """Episode parameters."""

    max_flips: int = 3
    max_interventions: int = 20
    micro_step_budget: int = 10000
    reward_scheme: RewardScheme = RewardScheme.MIXED


@dataclass
class EpisodeState:
    """The mutable state of the current episode."""

    state: State
    interventions: int = 0
    done: bool = False
    success: bool = False
    at_control_state: bool = True


@dataclass(frozen=True)
class StepResult:
    """Outcome of one control step."""

    observation: np.ndarray
    reward: float
    done: bool
    success: bool
    state: State
    at_control_state: bool
    new_states: Tuple[State, ...] = ()


class ControlEnvironment(WithLogger):
    """
    Interventions are accepted at registered (pseudo-)attractor states only.

    After an intervention the network evolves asynchronously, at least one
    step, until a registered state is reached or the micro-step budget runs
    out. Every visited state is fed to the Step II detector when one is set.
    """

    def __init__(
        self,
        model: PbnModel,
        registry: PaRegistry,
        config: Optional[EnvironmentConfig] = None,
        detector: Optional[Step2Detector] = None,
        logger: Optional[Logger] = None,
    ) -> None:
        """Initialize the environment."""
        super().__init__(logger=logger, default_logger_name=LOGGER_NAME)
        self.model = model
        self.registry = registry
        self.config = config or EnvironmentConfig()
        self.detector = detector
        self.simulator = Simulator(model)
        self._problem: Optional[ControlProblem] = None
        self._episode: Optional[EpisodeState] = None

    @property
    def n(self) -> int:
        """Gene count."""
        return self.model.n

    @property
    def observation_width(self) -> int:
        """Width of the observation vector."""
        return 2 * self.model.n

    @property
    def episode(self) -> EpisodeState:
        """The current episode."""
        enforce(self._episode is not None, "reset must be called first", ControlError)
        return self._episode  # type: ignore

    @property
    def problem(self) -> ControlProblem:
        """The current control problem."""
        enforce(self._problem is not None, "reset must be called first", ControlError)
        return self._problem  # type: ignore

    def observe(self) -> np.ndarray:
        """Current state bits followed by the target representative bits."""
        return np.array(
            state_to_bits(self.episode.state, self.n)
            + state_to_bits(self.problem.target_representative, self.n),
            dtype=np.float32,
        )

    def reset(self, problem: ControlProblem, rng: np.random.Generator) -> np.ndarray:
        """
        Start an episode at a uniformly drawn source state.

        :param problem: the control problem.
        :param rng: the caller-owned random source.
        :return: the first observation.
        """
        unknown = [s for s in problem.source if s not in self.registry]
        enforce(
            not unknown,
            f"source states {[format_state(s, self.n) for s in unknown]} "
            "are not registered",
            ControlError,
        )
        state = problem.source[int(rng.integers(len(problem.source)))]
        self._problem = problem
        self._episode = EpisodeState(state)
        return self.observe()

    def _evolve(
        self, state: State, rng: np.random.Generator, step: int
    ) -> Tuple[State, bool, List[State]]:
        new_states: List[State] = []
        current = state
        for current in self.simulator.trajectory(
            state, rng, self.config.micro_step_budget
        ):
            if self.detector is not None:
                new_states.extend(self.detector.feed(current, step))
            if current in self.registry:
                return current, True, new_states
        self.logger.warning(
            "No registered state reached within "
            f"{self.config.micro_step_budget} steps; "
            f"stopped at {format_state(current, self.n)}"
        )
        return current, False, new_states

    def _finish_step(
        self,
        state: State,
        reached: bool,
        flips: int,
        new_states: Sequence[State],
    ) -> StepResult:
        episode = self.episode
        episode.state = state
        episode.at_control_state = reached
        episode.interventions += 1
        episode.success = state in self.problem.target
        episode.done = (
            episode.success
            or episode.interventions >= self.config.max_interventions
        )
        return StepResult(
            observation=self.observe(),
            reward=reward(self.config.reward_scheme, episode.success, flips),
            done=episode.done,
            success=episode.success,
            state=state,
            at_control_state=reached,
            new_states=tuple(new_states),
        )

    def apply_intervention(
        self, intervention: Intervention, rng: np.random.Generator, step: int = 0
    ) -> StepResult:
        """
        Flip the genes of the intervention, then let the network evolve.

        :param intervention: the intervention.
        :param rng: the caller-owned random source.
        :param step: the training step, passed to the detector.
        :return: the step result.
        """
        episode = self.episode
        enforce(not episode.done, "the episode is over", ControlError)
        enforce(
            episode.at_control_state and episode.state in self.registry,
            f"state {format_state(episode.state, self.n)} "
            "is not a registered pseudo-attractor state",
            ControlError,
        )
        checked = Intervention.of(intervention.genes, self.n, self.config.max_flips)
        flipped = checked.apply(episode.state, self.n)
        new_states: List[State] = []
        if self.detector is not None:
            new_states.extend(self.detector.feed(flipped, step))
        state, reached, evolved = self._evolve(flipped, rng, step)
        return self._finish_step(state, reached, len(checked), new_states + evolved)

    def resume(self, rng: np.random.Generator, step: int = 0) -> StepResult:
        """
        Continue free evolution after the micro-step budget ran out.

        No genes are flipped; the call counts toward the episode's step cap.

        :param rng: the caller-owned random source.
        :param step: the training step, passed to the detector.
        :return: the step result.
        """
        episode = self.episode
        enforce(not episode.done, "the episode is over", ControlError)
        enforce(
            not episode.at_control_state,
            "the environment awaits an intervention",
            ControlError,
        )
        state, reached, new_states = self._evolve(episode.state, rng, step)
        return self._finish_step(state, reached, 0, new_states)


def control_pairs(
    registry: PaRegistry, found: Optional[Sequence[Attractor]] = None
) -> List[ControlProblem]:
    """
    All ordered source-target pairs.

    :param registry: the registry; without attractors its states form the pairs.
    :param found: exact attractors, when known.
    :return: the control problems, in a deterministic order.
    """
    if found:
        return [
            ControlProblem(
                source.states, target.states, f"A{source.id}", f"A{target.id}"
            )
            for source in found
            for target in found
            if source.id != target.id
        ]
    states = registry.states
    return [
        ControlProblem(
            (source,),
            (target,),
            format_state(source, registry.n),
            format_state(target, registry.n),
        )
        for source in states
        for target in states
        if source != target
    ]
