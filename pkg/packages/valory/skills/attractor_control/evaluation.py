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

"""This module contains the evaluation harness and the comparison with the oracle."""

from concurrent.futures import ProcessPoolExecutor
from dataclasses import asdict, dataclass
from pathlib import Path
from typing import List, Optional, Sequence, Tuple, Union

import numpy as np
import pandas as pd
from aea.exceptions import enforce
from aea.helpers.logging import setup_logger

from packages.valory.skills.attractor_control import PUBLIC_ID
from packages.valory.skills.attractor_control.agent import select_action
from packages.valory.skills.attractor_control.dynamics import Attractor
from packages.valory.skills.attractor_control.environment import (
    ControlEnvironment,
    ControlProblem,
    EnvironmentConfig,
    Intervention,
    control_pairs,
    format_interventions,
)
from packages.valory.skills.attractor_control.exceptions import (
    CheckpointError,
    EvaluationError,
)
from packages.valory.skills.attractor_control.network import PbnModel
from packages.valory.skills.attractor_control.pasip import PaRegistry
from packages.valory.skills.attractor_control.q_network import QNetworkParams


PAIR_KEYS = ["source_id", "target_id"]
EVAL_COLUMNS = PAIR_KEYS + ["repeat", "success", "length", "interventions"]
REPORT_COLUMNS = PAIR_KEYS + ["repeats", "successes", "success_rate", "mean_length"]
HISTOGRAM_COLUMNS = ["bin", "count"]
COMPARE_COLUMNS = PAIR_KEYS + ["agent_mean_length", "oracle_length", "ratio"]

EVAL_FILENAME = "eval.csv"
REPORT_FILENAME = "report.csv"
HISTOGRAM_FILENAME = "histogram.csv"

_logger = setup_logger(f"{PUBLIC_ID.name}.evaluation")


@dataclass(frozen=True)
class EvalRow:
    """
    One greedy evaluation run.

    `length` is the number of environment steps of the run: every applied
    intervention, the empty one included, plus every resume after a
    micro-step budget ran out. `interventions` lists the applied
    interventions only, so it can be shorter than `length`.
    """

    source_id: str
    target_id: str
    repeat: int
    success: bool
    length: int
    interventions: str


@dataclass
class EvalReport:
    """All evaluation runs with their aggregates."""

    rows: List[EvalRow]

    def frame(self) -> pd.DataFrame:
        """The runs in CSV layout."""
        frame = pd.DataFrame([asdict(row) for row in self.rows], columns=EVAL_COLUMNS)
        frame["success"] = frame["success"].astype(int)
        return frame

    @property
    def successful_lengths(self) -> List[int]:
        """Lengths of the successful runs."""
        return [row.length for row in self.rows if row.success]

    @property
    def success_rate(self) -> float:
        """Percentage of successful runs."""
        if not self.rows:
            return 0.0
        return 100.0 * len(self.successful_lengths) / len(self.rows)

    @property
    def mean_length(self) -> float:
        """Average length of the successful runs; NaN without any."""
        lengths = self.successful_lengths
        return float(np.mean(lengths)) if lengths else float("nan")

    def pair_report(self) -> pd.DataFrame:
        """Per-pair success counts and average successful length."""
        frame = self.frame()
        if frame.empty:
            return pd.DataFrame(columns=REPORT_COLUMNS)
        grouped = frame.groupby(PAIR_KEYS, sort=False)
        report = grouped.agg(
            repeats=("repeat", "count"), successes=("success", "sum")
        ).reset_index()
        report["success_rate"] = 100.0 * report["successes"] / report["repeats"]
        successful = (
            frame[frame["success"] == 1].groupby(PAIR_KEYS, sort=False)["length"].mean()
        )
        report = report.merge(
            successful.rename("mean_length").reset_index(), on=PAIR_KEYS, how="left"
        )
        return report[REPORT_COLUMNS]

    def histogram(self) -> pd.DataFrame:
        """Counts of successful runs per strategy length."""
        lengths = self.successful_lengths
        if not lengths:
            return pd.DataFrame(columns=HISTOGRAM_COLUMNS)
        counts = np.bincount(lengths)
        bins = np.arange(1, len(counts))
        return pd.DataFrame(
            {"bin": bins, "count": counts[1:]}, columns=HISTOGRAM_COLUMNS
        )

    def save(self, directory: Union[str, Path]) -> None:
        """Write the run, report and histogram CSVs."""
        directory = Path(directory)
        directory.mkdir(parents=True, exist_ok=True)
        self.frame().to_csv(directory / EVAL_FILENAME, index=False)
        self.pair_report().to_csv(directory / REPORT_FILENAME, index=False)
        self.histogram().to_csv(directory / HISTOGRAM_FILENAME, index=False)


def run_greedy_episode(
    environment: ControlEnvironment,
    problem: ControlProblem,
    params: QNetworkParams,
    rng: np.random.Generator,
    max_flips: int,
) -> Tuple[bool, int, List[Intervention]]:
    """
    Run one episode with the greedy policy.

    :param environment: the environment.
    :param problem: the control problem.
    :param params: the trained network.
    :param rng: the random source of the episode.
    :param max_flips: the flip cap.
    :return: success, the number of steps and the applied interventions.
    """
    observation = environment.reset(problem, rng)
    applied: List[Intervention] = []
    done = False
    while not done:
        if environment.episode.at_control_state:
            action = select_action(params, observation, 0.0, rng, max_flips)
            result = environment.apply_intervention(action, rng)
            applied.append(action)
        else:
            result = environment.resume(rng)
        observation = result.observation
        done = result.done
    return environment.episode.success, environment.episode.interventions, applied


def _evaluate_pair(  # pylint: disable=too-many-arguments
    params: QNetworkParams,
    model: PbnModel,
    registry: PaRegistry,
    config: EnvironmentConfig,
    problem: ControlProblem,
    pair_seed: np.random.SeedSequence,
    repeats: int,
) -> List[EvalRow]:
    rng = np.random.default_rng(pair_seed)
    environment = ControlEnvironment(model, registry.copy(), config)
    rows = []
    for repeat in range(1, repeats + 1):
        success, length, applied = run_greedy_episode(
            environment, problem, params, rng, config.max_flips
        )
        rows.append(
            EvalRow(
                problem.source_id,
                problem.target_id,
                repeat,
                success,
                length,
                format_interventions(applied),
            )
        )
    return rows


def evaluate(  # pylint: disable=too-many-arguments,too-many-locals
    params: QNetworkParams,
    model: PbnModel,
    registry: PaRegistry,
    repeats: int = 10,
    seed: int = 0,
    attractors: Optional[Sequence[Attractor]] = None,
    environment_config: Optional[EnvironmentConfig] = None,
    workers: int = 1,
) -> EvalReport:
    """
    Greedy evaluation over every ordered source-target pair.

    Every pair gets its own random source spawned from `seed` and its own
    copy of the registry, so pairs run independently. With `workers > 1`
    they run in a process pool; rows are merged in pair order and the
    report does not depend on the worker count.

    :param params: the trained network.
    :param model: the model.
    :param registry: the registry.
    :param repeats: runs per pair.
    :param seed: the evaluation seed.
    :param attractors: exact attractors; without them pairs come from the
        registered states.
    :param environment_config: the episode parameters.
    :param workers: number of worker processes.
    :return: the report.
    """
    enforce(
        params.input_width == 2 * model.n and params.branches == model.n,
        f"checkpoint expects {params.input_width // 2} genes "
        f"but the model has {model.n}",
        CheckpointError,
    )
    enforce(workers >= 1, "workers must be at least 1", EvaluationError)
    config = environment_config or EnvironmentConfig()
    pairs = control_pairs(registry, attractors)
    enforce(bool(pairs), "no source-target pairs to evaluate", EvaluationError)
    seeds = np.random.SeedSequence(seed).spawn(len(pairs))
    count = len(pairs)
    if workers > 1 and count > 1:
        with ProcessPoolExecutor(max_workers=min(workers, count)) as executor:
            per_pair = list(
                executor.map(
                    _evaluate_pair,
                    [params] * count,
                    [model] * count,
                    [registry] * count,
                    [config] * count,
                    pairs,
                    seeds,
                    [repeats] * count,
                )
            )
    else:
        per_pair = [
            _evaluate_pair(params, model, registry, config, problem, pair_seed, repeats)
            for problem, pair_seed in zip(pairs, seeds)
        ]
    rows: List[EvalRow] = []
    for problem, pair_rows in zip(pairs, per_pair):
        successes = sum(row.success for row in pair_rows)
        _logger.info(
            f"{problem.source_id} -> {problem.target_id}: "
            f"{successes}/{repeats} successful"
        )
        rows.extend(pair_rows)
    return EvalReport(rows)


def _as_frame(table: Union[str, Path, pd.DataFrame]) -> pd.DataFrame:
    if isinstance(table, pd.DataFrame):
        return table
    return pd.read_csv(table, dtype={"source_id": str, "target_id": str})


@dataclass
class Comparison:
    """Per-pair overhead of the agent over the oracle."""

    table: pd.DataFrame
    missing_pairs: List[Tuple[str, str]]

    @property
    def mean_ratio(self) -> float:
        """Average ratio over the compared pairs."""
        if self.table.empty:
            return float("nan")
        return float(self.table["ratio"].mean())


def compare(
    evaluation: Union[str, Path, pd.DataFrame],
    oracle: Union[str, Path, pd.DataFrame],
) -> Comparison:
    """
    Compare agent strategy lengths with the oracle optimum.

    Pairs without successful agent runs or without an oracle row are left
    out with a warning.

    :param evaluation: the evaluation CSV or frame.
    :param oracle: the oracle CSV or frame.
    :return: the comparison.
    """
    runs = _as_frame(evaluation)
    optimum = _as_frame(oracle)
    successful = runs[runs["success"].astype(bool)]
    agent = (
        successful.groupby(PAIR_KEYS)["length"]
        .mean()
        .rename("agent_mean_length")
        .reset_index()
    )
    optimum = optimum.rename(columns={"min_length": "oracle_length"})
    optimum = optimum[PAIR_KEYS + ["oracle_length"]]
    merged = agent.merge(optimum, on=PAIR_KEYS, how="outer", indicator=True)
    missing = [
        (str(row.source_id), str(row.target_id))
        for row in merged[merged["_merge"] != "both"].itertuples()
    ]
    for source_id, target_id in missing:
        _logger.warning(
            f"Pair {source_id} -> {target_id} is missing from one of the inputs; "
            "skipped"
        )
    table = merged[merged["_merge"] == "both"].drop(columns="_merge").copy()
    table["ratio"] = table["agent_mean_length"] / table["oracle_length"]
    table = table.sort_values(PAIR_KEYS).reset_index(drop=True)
    return Comparison(table[COMPARE_COLUMNS], missing)
