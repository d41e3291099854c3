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

"""This module contains the configuration model of the attractor control skill."""

from pathlib import Path
from typing import Any, Dict, Optional, Tuple, Type, Union

from aea.exceptions import enforce
from aea.helpers.yaml_utils import yaml_load

from packages.valory.skills.attractor_control.agent import AgentConfig
from packages.valory.skills.attractor_control.environment import (
    EnvironmentConfig,
    RewardScheme,
)
from packages.valory.skills.attractor_control.exceptions import ConfigurationError
from packages.valory.skills.attractor_control.pasip import PasipConfig


SKILL_CONFIG_PATH = Path(__file__).parent / "skill.yaml"
PARAMS_MODEL = "params"

TypeSpec = Union[Type, Tuple[Type, ...]]


def _matches(value: Any, type_: TypeSpec) -> bool:
    types = type_ if isinstance(type_, tuple) else (type_,)
    if isinstance(value, bool):
        return bool in types
    if isinstance(value, int) and float in types:
        return True
    return isinstance(value, types)


class Params:  # pylint: disable=too-many-instance-attributes
    """Parameters."""

    def __init__(self, **kwargs: Any) -> None:
        """Initialize the parameters object."""
        self.stg_gene_limit = self._ensure("stg_gene_limit", kwargs, int)
        self.stationary_max_iterations = self._ensure(
            "stationary_max_iterations", kwargs, int
        )
        self.stationary_tolerance = self._ensure("stationary_tolerance", kwargs, float)
        self.pasip_burn_in = self._ensure("pasip_burn_in", kwargs, int)
        self.pasip_counted_steps = self._ensure("pasip_counted_steps", kwargs, int)
        self.pasip_step1_threshold = self._ensure(
            "pasip_step1_threshold", kwargs, float
        )
        self.pasip_stuck_steps = self._ensure("pasip_stuck_steps", kwargs, int)
        self.pasip_history_size = self._ensure("pasip_history_size", kwargs, int)
        self.pasip_step2_threshold = self._ensure(
            "pasip_step2_threshold", kwargs, float
        )
        # null means min(2^n, 100)
        initial_states: Optional[int] = kwargs.pop("pasip_initial_states", None)
        enforce(
            initial_states is None or _matches(initial_states, int),
            "'pasip_initial_states' must be an integer or null",
            ConfigurationError,
        )
        self.pasip_initial_states = initial_states
        self.pasip_workers = self._ensure("pasip_workers", kwargs, int)
        self.max_flips = self._ensure("max_flips", kwargs, int)
        self.max_interventions = self._ensure("max_interventions", kwargs, int)
        self.micro_step_budget = self._ensure("micro_step_budget", kwargs, int)
        reward_scheme = self._ensure("reward_scheme", kwargs, str)
        try:
            self.reward_scheme = RewardScheme(reward_scheme)
        except ValueError as e:
            raise ConfigurationError(
                "'reward_scheme' must be one of "
                f"{[s.value for s in RewardScheme]}, got {reward_scheme!r}"
            ) from e
        self.gamma = self._ensure("gamma", kwargs, float)
        self.learning_rate = self._ensure("learning_rate", kwargs, float)
        self.batch_size = self._ensure("batch_size", kwargs, int)
        self.target_sync_period = self._ensure("target_sync_period", kwargs, int)
        self.epsilon_start = self._ensure("epsilon_start", kwargs, float)
        self.epsilon_end = self._ensure("epsilon_end", kwargs, float)
        self.epsilon_decay_steps = self._ensure("epsilon_decay_steps", kwargs, int)
        self.epb_floor = self._ensure("epb_floor", kwargs, float)
        self.epb_enabled = self._ensure("epb_enabled", kwargs, bool)
        self.buffer_capacity = self._ensure("buffer_capacity", kwargs, int)
        self.warmup_transitions = self._ensure("warmup_transitions", kwargs, int)
        self.trunk_widths = tuple(self._ensure("trunk_widths", kwargs, (list, tuple)))
        enforce(
            bool(self.trunk_widths)
            and all(_matches(w, int) and w > 0 for w in self.trunk_widths),
            "'trunk_widths' must be a nonempty list of positive integers",
            ConfigurationError,
        )
        self.stream_width = self._ensure("stream_width", kwargs, int)
        self.online_detection = self._ensure("online_detection", kwargs, bool)
        self.evaluation_repeats = self._ensure("evaluation_repeats", kwargs, int)
        self.training_steps = self._ensure("training_steps", kwargs, int)
        self.log_every = self._ensure("log_every", kwargs, int)
        enforce(not kwargs, f"unknown parameters: {sorted(kwargs)}", ConfigurationError)

    @staticmethod
    def _ensure(key: str, kwargs: Dict[str, Any], type_: TypeSpec) -> Any:
        """Pop a required key and check its type."""
        value = kwargs.pop(key, None)
        enforce(
            value is not None,
            f"'{key}' required, but it is not set",
            ConfigurationError,
        )
        enforce(
            _matches(value, type_),
            f"'{key}' must be a {type_}, but type {type(value)} was found",
            ConfigurationError,
        )
        if type_ is float:
            return float(value)
        return value

    @property
    def stg_limit(self) -> int:
        """Largest gene count for exhaustive state transition graphs."""
        return self.stg_gene_limit

    @property
    def pasip_config(self) -> PasipConfig:
        """Parameters of the identification procedure."""
        return PasipConfig(
            k_initial_states=self.pasip_initial_states,
            burn_in=self.pasip_burn_in,
            counted_steps=self.pasip_counted_steps,
            step1_threshold=self.pasip_step1_threshold,
            stuck_steps=self.pasip_stuck_steps,
            history_size=self.pasip_history_size,
            step2_threshold=self.pasip_step2_threshold,
            workers=self.pasip_workers,
        )

    @property
    def environment_config(self) -> EnvironmentConfig:
        """Episode parameters."""
        return EnvironmentConfig(
            max_flips=self.max_flips,
            max_interventions=self.max_interventions,
            micro_step_budget=self.micro_step_budget,
            reward_scheme=self.reward_scheme,
        )

    @property
    def agent_config(self) -> AgentConfig:
        """Learning parameters."""
        return AgentConfig(
            gamma=self.gamma,
            learning_rate=self.learning_rate,
            batch_size=self.batch_size,
            target_sync_period=self.target_sync_period,
            epsilon_start=self.epsilon_start,
            epsilon_end=self.epsilon_end,
            epsilon_decay_steps=self.epsilon_decay_steps,
            epb_floor=self.epb_floor,
            epb_enabled=self.epb_enabled,
            max_flips=self.max_flips,
            buffer_capacity=self.buffer_capacity,
            warmup_transitions=self.warmup_transitions,
            trunk_widths=self.trunk_widths,
            stream_width=self.stream_width,
            log_every=self.log_every,
        )


def _read_args(path: Union[str, Path]) -> Dict[str, Any]:
    try:
        with open(path, "r", encoding="utf-8") as stream:
            content = yaml_load(stream) or {}
    except OSError as e:
        raise ConfigurationError(f"cannot read configuration {path}: {e}") from e
    enforce(
        isinstance(content, dict),
        f"{path} does not hold a mapping",
        ConfigurationError,
    )
    if "models" in content:
        content = content["models"].get(PARAMS_MODEL, {}).get("args", {})
    enforce(
        isinstance(content, dict),
        f"{path}: params args must be a mapping",
        ConfigurationError,
    )
    return dict(content)


def default_args() -> Dict[str, Any]:
    """The parameter defaults declared in skill.yaml."""
    return _read_args(SKILL_CONFIG_PATH)


def load_params(
    config_path: Optional[Union[str, Path]] = None, **overrides: Any
) -> Params:
    """
    Build the parameters: skill.yaml defaults, then the config file, then overrides.

    The config file has the shape of skill.yaml (`models.params.args`) or is
    a flat mapping; it may set any subset of the keys. Overrides set to None
    are ignored.

    :param config_path: optional user configuration file.
    :param overrides: final values, e.g. from command line flags.
    :return: the parameters.
    """
    args = default_args()
    if config_path is not None:
        user_args = _read_args(config_path)
        unknown = sorted(set(user_args) - set(args))
        enforce(
            not unknown,
            f"unknown parameters in {config_path}: {unknown}",
            ConfigurationError,
        )
        args.update(user_args)
    args.update({key: value for key, value in overrides.items() if value is not None})
    return Params(**args)
