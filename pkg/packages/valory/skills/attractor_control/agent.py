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

"""This module contains the deep-Q control agent and its training loop."""

from dataclasses import asdict, dataclass
from logging import Logger
from pathlib import Path
from typing import List, Optional, Sequence, Tuple, Union

import numpy as np
import pandas as pd
from aea.exceptions import enforce
from aea.helpers.logging import WithLogger

from packages.valory.skills.attractor_control import PUBLIC_ID
from packages.valory.skills.attractor_control.dynamics import Attractor
from packages.valory.skills.attractor_control.environment import (
    ControlEnvironment,
    ControlProblem,
    EnvironmentConfig,
    Intervention,
    control_pairs,
    reward,
)
from packages.valory.skills.attractor_control.exceptions import (
    ConfigurationError,
    TrainingError,
)
from packages.valory.skills.attractor_control.network import PbnModel
from packages.valory.skills.attractor_control.pasip import (
    PaRegistry,
    PasipConfig,
    Step2Detector,
)
from packages.valory.skills.attractor_control.q_network import (
    Adam,
    QNetworkParams,
    forward,
    init_params,
    td_loss,
)


LOGGER_NAME = f"{PUBLIC_ID.name}.agent"
TRAINING_LOG_COLUMNS = [
    "step",
    "episode",
    "epsilon",
    "reward",
    "episode_len",
    "n_pa_states",
]
MOVING_AVERAGE_WINDOW = 100


@dataclass(frozen=True)
class AgentConfig:  # pylint: disable=too-many-instance-attributes
    """Learning parameters of the agent."""

    gamma: float = 0.99
    learning_rate: float = 1e-4
    batch_size: int = 128
    target_sync_period: int = 1000
    epsilon_start: float = 1.0
    epsilon_end: float = 0.05
    epsilon_decay_steps: int = 3000
    epb_floor: float = 0.3
    epb_enabled: bool = True
    max_flips: int = 3
    buffer_capacity: int = 100000
    warmup_transitions: int = 1000
    trunk_widths: Tuple[int, ...] = (128, 128)
    stream_width: int = 64
    log_every: int = 100

    def __post_init__(self) -> None:
        """Check the invariants."""
        enforce(
            0 < self.gamma < 1,
            f"gamma must lie in (0, 1), got {self.gamma}",
            ConfigurationError,
        )
        enforce(
            self.epsilon_end < self.epb_floor < self.epsilon_start <= 1,
            "expected epsilon_end < epb_floor < epsilon_start <= 1, got "
            f"{self.epsilon_end}, {self.epb_floor}, {self.epsilon_start}",
            ConfigurationError,
        )
        for name in (
            "batch_size",
            "target_sync_period",
            "epsilon_decay_steps",
            "buffer_capacity",
        ):
            value = getattr(self, name)
            enforce(
                value > 0, f"{name} must be positive, got {value}", ConfigurationError
            )
        enforce(
            self.max_flips >= 0,
            f"negative max_flips {self.max_flips}",
            ConfigurationError,
        )


def epb_on_discovery(epsilon: float, floor: float = 0.3) -> float:
    """Exploration probability boost: raise epsilon to at least `floor`."""
    return max(epsilon, floor)


class EpsilonSchedule:
    """
    Linear decay from `start` to `end` over `decay_steps` steps.

    A boost lifts the value to at least the floor; the decay then continues
    with the original slope.
    """

    def __init__(
        self, start: float, end: float, decay_steps: int, floor: float
    ) -> None:
        """Initialize the schedule."""
        self.start = start
        self.end = end
        self.floor = floor
        self.slope = (start - end) / decay_steps
        self.value = start

    @classmethod
    def from_config(cls, config: AgentConfig) -> "EpsilonSchedule":
        """Build the schedule of an agent configuration."""
        return cls(
            config.epsilon_start,
            config.epsilon_end,
            config.epsilon_decay_steps,
            config.epb_floor,
        )

    def advance(self) -> float:
        """Decay by one step and return the new value."""
        self.value = max(self.end, self.value - self.slope)
        return self.value

    def boost(self) -> float:
        """Apply the exploration probability boost and return the new value."""
        self.value = epb_on_discovery(self.value, self.floor)
        return self.value


def greedy_intervention(q_values: np.ndarray, max_flips: int) -> Intervention:
    """
    Greedy decision from per-branch Q pairs.

    A branch votes flip when Q(flip) > Q(keep). Above `max_flips` votes only
    the branches with the largest margin Q(flip) - Q(keep) are kept; equal
    margins go to the lower gene index.

    :param q_values: shape (n, 2), columns keep and flip.
    :param max_flips: the flip cap.
    :return: the intervention.
    """
    margins = q_values[:, 1] - q_values[:, 0]
    voting = [int(gene) for gene in np.flatnonzero(margins > 0)]
    if len(voting) > max_flips:
        voting = sorted(voting, key=lambda gene: (-margins[gene], gene))[:max_flips]
    return Intervention(tuple(sorted(voting)))


def random_intervention(
    n: int, max_flips: int, rng: np.random.Generator
) -> Intervention:
    """Uniform size in 0..max_flips, then a uniform subset of genes of that size."""
    size = min(int(rng.integers(max_flips + 1)), n)
    genes = rng.choice(n, size=size, replace=False)
    return Intervention(tuple(sorted(int(gene) for gene in genes)))


def select_action(
    params: QNetworkParams,
    observation: np.ndarray,
    epsilon: float,
    rng: np.random.Generator,
    max_flips: int,
) -> Intervention:
    """
    Epsilon-greedy action selection.

    :param params: the online network.
    :param observation: the current observation.
    :param epsilon: the exploration probability.
    :param rng: the caller-owned random source.
    :param max_flips: the flip cap.
    :return: the intervention.
    """
    if rng.random() < epsilon:
        return random_intervention(params.branches, max_flips, rng)
    return greedy_intervention(forward(params, observation), max_flips)


def flip_vector(intervention: Intervention, n: int) -> np.ndarray:
    """0/1 per gene: the per-branch action of an intervention."""
    vector = np.zeros(n, dtype=np.int64)
    vector[list(intervention.genes)] = 1
    return vector


@dataclass(frozen=True)
class Transition:
    """One replay entry."""

    observation: np.ndarray
    actions: np.ndarray
    reward: float
    next_observation: np.ndarray
    done: bool


@dataclass(frozen=True)
class Batch:
    """A batch of replay entries as stacked arrays."""

    observations: np.ndarray
    actions: np.ndarray
    rewards: np.ndarray
    next_observations: np.ndarray
    dones: np.ndarray

    def __len__(self) -> int:
        """Number of entries."""
        return len(self.rewards)


class ReplayBuffer:
    """Fixed-capacity ring buffer with uniform sampling."""

    def __init__(self, capacity: int, observation_width: int, branches: int) -> None:
        """Initialize the buffer."""
        self.capacity = capacity
        self._observations = np.zeros((capacity, observation_width), np.float32)
        self._next_observations = np.zeros((capacity, observation_width), np.float32)
        self._actions = np.zeros((capacity, branches), dtype=np.int64)
        self._rewards = np.zeros(capacity, dtype=np.float64)
        self._dones = np.zeros(capacity, dtype=bool)
        self._next = 0
        self._size = 0

    def __len__(self) -> int:
        """Number of stored entries."""
        return self._size

    def push(self, transition: Transition) -> None:
        """Store an entry, evicting the oldest one at capacity."""
        slot = self._next
        self._observations[slot] = transition.observation
        self._actions[slot] = transition.actions
        self._rewards[slot] = transition.reward
        self._next_observations[slot] = transition.next_observation
        self._dones[slot] = transition.done
        self._next = (slot + 1) % self.capacity
        self._size = min(self._size + 1, self.capacity)

    def __getitem__(self, age: int) -> Transition:
        """The entry at position `age`, 0 being the oldest."""
        enforce(0 <= age < self._size, f"no entry {age}", IndexError)
        slot = (self._next - self._size + age) % self.capacity
        return Transition(
            self._observations[slot].copy(),
            self._actions[slot].copy(),
            float(self._rewards[slot]),
            self._next_observations[slot].copy(),
            bool(self._dones[slot]),
        )

    def sample(self, batch_size: int, rng: np.random.Generator) -> Batch:
        """Uniform sample with replacement."""
        enforce(self._size > 0, "cannot sample an empty buffer", TrainingError)
        slots = rng.integers(self._size, size=batch_size)
        return Batch(
            self._observations[slots],
            self._actions[slots],
            self._rewards[slots],
            self._next_observations[slots],
            self._dones[slots],
        )


def bellman_targets(
    rewards: np.ndarray, dones: np.ndarray, next_q_values: np.ndarray, gamma: float
) -> np.ndarray:
    """
    `r + gamma * (1 - done) * mean_d max_a Q_d(s', a)` for a batch.

    :param rewards: shape (batch,).
    :param dones: shape (batch,).
    :param next_q_values: target-network Q-values of the next observations,
        shape (batch, n, 2).
    :param gamma: the discount.
    :return: the targets, shape (batch,).
    """
    bootstrap = next_q_values.max(axis=2).mean(axis=1).astype(np.float64)
    return rewards + gamma * (1.0 - dones.astype(np.float64)) * bootstrap


def bellman_target(
    entry: Transition, target_params: QNetworkParams, gamma: float
) -> float:
    """The Bellman target of a single replay entry."""
    next_q = forward(target_params, entry.next_observation)[None, :, :]
    return float(
        bellman_targets(
            np.array([entry.reward]), np.array([entry.done]), next_q, gamma
        )[0]
    )


def train_step(
    params: QNetworkParams,
    target_params: QNetworkParams,
    batch: Batch,
    optimizer: Adam,
    gamma: float,
) -> float:
    """
    One gradient update on the mean squared Bellman error.

    :param params: the online network, updated in place.
    :param target_params: the target network.
    :param batch: the sampled entries.
    :param optimizer: the optimiser, carrying the learning rate.
    :param gamma: the discount.
    :return: the loss before the update.
    """
    enforce(len(batch) > 0, "empty batch", TrainingError)
    targets = bellman_targets(
        batch.rewards,
        batch.dones,
        forward(target_params, batch.next_observations),
        gamma,
    )
    loss, grads = td_loss(params, batch.observations, batch.actions, targets)
    if not np.isfinite(loss):
        raise TrainingError(
            f"non-finite loss {loss} after {optimizer.steps} updates "
            f"(targets in [{targets.min()}, {targets.max()}])"
        )
    optimizer.step(params, grads)
    return loss


@dataclass(frozen=True)
class LogRow:
    """One training log row, written per episode."""

    step: int
    episode: int
    epsilon: float
    reward: float
    episode_len: int
    n_pa_states: int


@dataclass
class TrainingResult:
    """Trained parameters, the log and the final exploration state."""

    params: QNetworkParams
    log: List[LogRow]
    epsilon_trace: List[float]
    registry: PaRegistry

    def log_frame(self) -> pd.DataFrame:
        """The log as a data frame."""
        return training_log_frame(self.log)


def training_log_frame(log: Sequence[LogRow]) -> pd.DataFrame:
    """The training log as a data frame with the CSV columns."""
    return pd.DataFrame([asdict(row) for row in log], columns=TRAINING_LOG_COLUMNS)


def save_training_log(log: Sequence[LogRow], path: Union[str, Path]) -> None:
    """Write the training log CSV."""
    training_log_frame(log).to_csv(path, index=False)


def moving_average_lengths(
    log: Sequence[LogRow], window: int = MOVING_AVERAGE_WINDOW
) -> np.ndarray:
    """Trailing moving average of the episode lengths."""
    lengths = pd.Series([row.episode_len for row in log], dtype=float)
    return lengths.rolling(window, min_periods=1).mean().to_numpy()


class Trainer(WithLogger):  # pylint: disable=too-many-instance-attributes
    """Runs episodes over random source-target pairs and learns from replay."""

    def __init__(  # pylint: disable=too-many-arguments
        self,
        model: PbnModel,
        registry: PaRegistry,
        config: AgentConfig,
        rng: np.random.Generator,
        environment_config: Optional[EnvironmentConfig] = None,
        pasip_config: Optional[PasipConfig] = None,
        attractors: Optional[Sequence[Attractor]] = None,
        online_detection: bool = True,
        logger: Optional[Logger] = None,
    ) -> None:
        """Initialize the trainer."""
        super().__init__(logger=logger, default_logger_name=LOGGER_NAME)
        self.model = model
        self.registry = registry
        self.config = config
        self.rng = rng
        self.attractors = list(attractors) if attractors else None
        environment_config = environment_config or EnvironmentConfig(
            max_flips=config.max_flips
        )
        detector = (
            Step2Detector(registry, pasip_config or PasipConfig(), logger=logger)
            if online_detection
            else None
        )
        self.environment = ControlEnvironment(
            model, registry, environment_config, detector, logger=logger
        )
        self.params = init_params(
            model.n, rng, config.trunk_widths, config.stream_width
        )
        self.target_params = self.params.copy()
        self.optimizer = Adam(config.learning_rate)
        self.buffer = ReplayBuffer(config.buffer_capacity, 2 * model.n, model.n)
        self.schedule = EpsilonSchedule.from_config(config)
        self.step = 0
        self.gradient_steps = 0
        self.log: List[LogRow] = []
        self.epsilon_trace: List[float] = []
        self._pairs: List[ControlProblem] = []
        self._pairs_registry_size = -1

    def _pairs_for_episode(self) -> List[ControlProblem]:
        if self.attractors:
            if not self._pairs:
                self._pairs = control_pairs(self.registry, self.attractors)
        elif self._pairs_registry_size != len(self.registry):
            self._pairs = control_pairs(self.registry)
            self._pairs_registry_size = len(self.registry)
        enforce(
            bool(self._pairs),
            f"no source-target pairs: {len(self.registry)} registered states",
            TrainingError,
        )
        return self._pairs

    def _learn(self) -> None:
        if len(self.buffer) < max(self.config.warmup_transitions, 1):
            return
        batch = self.buffer.sample(self.config.batch_size, self.rng)
        train_step(
            self.params, self.target_params, batch, self.optimizer, self.config.gamma
        )
        self.gradient_steps += 1
        if self.gradient_steps % self.config.target_sync_period == 0:
            self.target_params.assign(self.params)
            self.logger.debug(
                f"Synced target network at gradient step {self.gradient_steps}"
            )

    def run_episode(self, max_steps: int) -> LogRow:
        """
        Run one training episode, stopping early when `max_steps` is reached.

        An intervention whose evolution ran out of micro-steps is stored only
        once the resumes that follow it reach a registered state or end the
        episode. The stored transition then leads to that state and carries
        the reward of its outcome, with the intervention's flip cost. Resumes
        are never stored on their own.

        :param max_steps: the global step budget.
        :return: the episode's log row.
        """
        pairs = self._pairs_for_episode()
        problem = pairs[int(self.rng.integers(len(pairs)))]
        observation = self.environment.reset(problem, self.rng)
        scheme = self.environment.config.reward_scheme
        pending: Optional[Tuple[np.ndarray, Intervention]] = None
        total_reward = 0.0
        length = 0
        done = False
        while not done and self.step < max_steps:
            if self.environment.episode.at_control_state:
                action = select_action(
                    self.params,
                    observation,
                    self.schedule.value,
                    self.rng,
                    self.config.max_flips,
                )
                result = self.environment.apply_intervention(
                    action, self.rng, self.step
                )
                pending = (observation, action)
            else:
                result = self.environment.resume(self.rng, self.step)
            if pending is not None and (result.at_control_state or result.done):
                start, applied = pending
                self.buffer.push(
                    Transition(
                        start,
                        flip_vector(applied, self.model.n),
                        reward(scheme, result.success, len(applied)),
                        result.observation,
                        result.done,
                    )
                )
                pending = None
            self.step += 1
            length += 1
            total_reward += result.reward
            self.schedule.advance()
            if result.new_states and self.config.epb_enabled:
                self.schedule.boost()
                self.logger.info(
                    f"Exploration boosted to {self.schedule.value:.3f} "
                    f"at step {self.step}"
                )
            self.epsilon_trace.append(self.schedule.value)
            self._learn()
            observation = result.observation
            done = result.done
        row = LogRow(
            step=self.step,
            episode=len(self.log) + 1,
            epsilon=self.schedule.value,
            reward=total_reward,
            episode_len=length,
            n_pa_states=len(self.registry),
        )
        self.log.append(row)
        return row

    def train(self, steps: int) -> TrainingResult:
        """
        Train for `steps` environment steps.

        :param steps: the step budget.
        :return: the training result.
        """
        while self.step < steps:
            row = self.run_episode(steps)
            if row.episode % self.config.log_every == 0:
                recent = moving_average_lengths(self.log)[-1]
                self.logger.info(
                    f"Episode {row.episode}: step {row.step}, "
                    f"epsilon {row.epsilon:.3f}, mean length {recent:.2f}, "
                    f"{row.n_pa_states} pseudo-attractor states"
                )
        return TrainingResult(self.params, self.log, self.epsilon_trace, self.registry)


def train(  # pylint: disable=too-many-arguments
    model: PbnModel,
    registry: PaRegistry,
    config: AgentConfig,
    rng: np.random.Generator,
    steps: int,
    environment_config: Optional[EnvironmentConfig] = None,
    pasip_config: Optional[PasipConfig] = None,
    attractors: Optional[Sequence[Attractor]] = None,
    online_detection: bool = True,
) -> TrainingResult:
    """
    Train an agent over all ordered source-target pairs.

    :param model: the model.
    :param registry: the registry, grown in place by online detection.
    :param config: the agent configuration.
    :param rng: the random source; equal seeds give equal logs.
    :param steps: the number of environment steps.
    :param environment_config: the episode parameters.
    :param pasip_config: the online detection parameters.
    :param attractors: exact attractors; without them pairs come from the
        registered states.
    :param online_detection: whether the Step II detectors run.
    :return: the training result.
    """
    trainer = Trainer(
        model,
        registry,
        config,
        rng,
        environment_config,
        pasip_config,
        attractors,
        online_detection,
    )
    return trainer.train(steps)
