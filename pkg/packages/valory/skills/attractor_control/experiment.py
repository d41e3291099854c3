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

"""This module contains the end-to-end experiment pipeline."""

from dataclasses import dataclass, field
from logging import Logger
from pathlib import Path
from typing import List, Optional, Tuple, Union

import numpy as np
from aea.helpers.logging import WithLogger

from packages.valory.skills.attractor_control import PUBLIC_ID
from packages.valory.skills.attractor_control.agent import (
    Trainer,
    TrainingResult,
    save_training_log,
)
from packages.valory.skills.attractor_control.dynamics import (
    Attractor,
    Stg,
    attractors,
    build_stg,
)
from packages.valory.skills.attractor_control.evaluation import (
    Comparison,
    EvalReport,
    compare,
    evaluate,
)
from packages.valory.skills.attractor_control.models import Params
from packages.valory.skills.attractor_control.network import PbnModel, load_model
from packages.valory.skills.attractor_control.oracle import (
    PairControl,
    all_pairs_minimal_control,
    oracle_frame,
)
from packages.valory.skills.attractor_control.pasip import PaRegistry, step1_scan
from packages.valory.skills.attractor_control.q_network import save_checkpoint


LOGGER_NAME = f"{PUBLIC_ID.name}.experiment"
ATTRACTORS_FILENAME = "attractors.txt"
REGISTRY_FILENAME = "registry.txt"
CHECKPOINT_FILENAME = "checkpoint.bin"
TRAINING_LOG_FILENAME = "training_log.csv"
ORACLE_FILENAME = "oracle.csv"
COMPARE_FILENAME = "compare.csv"


@dataclass
class ExperimentResult:  # pylint: disable=too-many-instance-attributes
    """Everything one experiment produced."""

    model: PbnModel
    registry: PaRegistry
    training_result: TrainingResult
    eval_report: EvalReport
    stg: Optional[Stg] = None
    attractors: Optional[List[Attractor]] = None
    oracle_results: Optional[List[PairControl]] = None
    comparison: Optional[Comparison] = None
    steps: List[str] = field(default_factory=list)


class Experiment(WithLogger):
    """
    Runs load, attractor identification, training and evaluation in order.

    Attractors are computed exactly when the model is within the STG limit,
    and only then are the oracle and the comparison added. Each step writes
    its outputs to the output directory before the next one starts, so a
    failing step leaves the earlier files in place.
    """

    def __init__(
        self,
        params: Params,
        out_dir: Union[str, Path],
        seed: int = 0,
        logger: Optional[Logger] = None,
    ) -> None:
        """Initialize the experiment."""
        super().__init__(logger=logger, default_logger_name=LOGGER_NAME)
        self.params = params
        self.out_dir = Path(out_dir)
        self.seed = seed
        self.steps: List[str] = []

    def _done(self, step: str) -> None:
        self.steps.append(step)
        self.logger.info(f"Finished step '{step}'")

    def load(self, model_path: Union[str, Path]) -> PbnModel:
        """Load the model and create the output directory."""
        model = load_model(model_path)
        self.out_dir.mkdir(parents=True, exist_ok=True)
        exact = model.n <= self.params.stg_limit
        self.logger.info(
            f"Loaded a {model.n}-gene {'BN' if model.is_bn else 'PBN'}; "
            f"{'exact attractors' if exact else 'PASIP scan'} follow"
        )
        self._done("load")
        return model

    def exact_attractors(
        self, model: PbnModel
    ) -> Tuple[Stg, List[Attractor], PaRegistry]:
        """Compute the STG, its attractors and the registry of their states."""
        stg = build_stg(model, self.params.stg_limit)
        found = attractors(stg)
        lines = "".join(f"{attractor.describe(model.n)}\n" for attractor in found)
        (self.out_dir / ATTRACTORS_FILENAME).write_text(lines, encoding="utf-8")
        registry = PaRegistry.from_attractors(model.n, found)
        registry.save(self.out_dir / REGISTRY_FILENAME)
        self.logger.info(f"Found {len(found)} attractors with {len(registry)} states")
        self._done("attractors")
        return stg, found, registry

    def scan(self, model: PbnModel) -> PaRegistry:
        """Run the Step I scan for models beyond the exhaustive limit."""
        registry = step1_scan(
            model, self.params.pasip_config, np.random.default_rng(self.seed)
        )
        registry.save(self.out_dir / REGISTRY_FILENAME)
        self._done("scan")
        return registry

    def train(
        self,
        model: PbnModel,
        registry: PaRegistry,
        found: Optional[List[Attractor]],
    ) -> TrainingResult:
        """Train the agent and store the checkpoint and the training log."""
        trainer = Trainer(
            model,
            registry,
            self.params.agent_config,
            np.random.default_rng(self.seed),
            environment_config=self.params.environment_config,
            pasip_config=self.params.pasip_config,
            attractors=found,
            online_detection=self.params.online_detection,
            logger=self.logger,
        )
        result = trainer.train(self.params.training_steps)
        save_checkpoint(result.params, self.out_dir / CHECKPOINT_FILENAME)
        save_training_log(result.log, self.out_dir / TRAINING_LOG_FILENAME)
        result.registry.save(self.out_dir / REGISTRY_FILENAME)
        self.logger.info(
            f"Trained for {trainer.step} steps over {len(result.log)} episodes; "
            f"{len(result.registry)} pseudo-attractor states known"
        )
        self._done("training")
        return result

    def evaluate(
        self,
        model: PbnModel,
        training_result: TrainingResult,
        found: Optional[List[Attractor]],
    ) -> EvalReport:
        """Evaluate the greedy policy on every ordered pair."""
        report = evaluate(
            training_result.params,
            model,
            training_result.registry,
            repeats=self.params.evaluation_repeats,
            seed=self.seed,
            attractors=found,
            environment_config=self.params.environment_config,
            workers=self.params.pasip_workers,
        )
        report.save(self.out_dir)
        self.logger.info(
            f"Success rate {report.success_rate:.1f}%, "
            f"mean successful length {report.mean_length:.2f}"
        )
        self._done("evaluation")
        return report

    def oracle(self, stg: Stg, found: List[Attractor]) -> List[PairControl]:
        """Compute the minimal guaranteed strategies."""
        results = all_pairs_minimal_control(stg, found, self.params.max_flips)
        oracle_frame(results).to_csv(self.out_dir / ORACLE_FILENAME, index=False)
        self._done("oracle")
        return results

    def compare(
        self, report: EvalReport, oracle_results: List[PairControl]
    ) -> Comparison:
        """Compare the agent with the oracle."""
        comparison = compare(report.frame(), oracle_frame(oracle_results))
        comparison.table.to_csv(self.out_dir / COMPARE_FILENAME, index=False)
        self.logger.info(
            f"Mean overhead ratio over the oracle: {comparison.mean_ratio:.2f}"
        )
        self._done("compare")
        return comparison

    def run(self, model_path: Union[str, Path]) -> ExperimentResult:
        """
        Run the whole experiment.

        :param model_path: the model file.
        :return: the outputs of every step that ran.
        """
        self.steps = []
        model = self.load(model_path)
        stg: Optional[Stg] = None
        found: Optional[List[Attractor]] = None
        if model.n <= self.params.stg_limit:
            stg, found, registry = self.exact_attractors(model)
        else:
            registry = self.scan(model)
        training_result = self.train(model, registry, found)
        report = self.evaluate(model, training_result, found)
        result = ExperimentResult(
            model,
            training_result.registry,
            training_result,
            report,
            stg=stg,
            attractors=found,
        )
        # the oracle needs exact attractors
        if stg is not None and found:
            result.oracle_results = self.oracle(stg, found)
            result.comparison = self.compare(report, result.oracle_results)
        result.steps = list(self.steps)
        return result
