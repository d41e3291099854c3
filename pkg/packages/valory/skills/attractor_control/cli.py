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

"""Command line entry point of the attractor control experiments."""

import logging
from dataclasses import dataclass
from logging import Logger
from pathlib import Path
from typing import Any, List, Optional, Tuple

import click
import numpy as np
import pandas as pd
from aea.helpers.logging import setup_logger

from packages.valory.skills.attractor_control import PUBLIC_ID
from packages.valory.skills.attractor_control.agent import Trainer, save_training_log
from packages.valory.skills.attractor_control.dynamics import (
    Attractor,
    Stg,
    attractors,
    build_stg,
    pseudo_attractor,
    stationary_distribution,
    strong_basin_masks,
    weak_basin_mask,
)
from packages.valory.skills.attractor_control.evaluation import compare, evaluate
from packages.valory.skills.attractor_control.exceptions import (
    ConfigurationError,
    RuntimeFailure,
    ValidationFailure,
)
from packages.valory.skills.attractor_control.experiment import (
    REGISTRY_FILENAME,
    TRAINING_LOG_FILENAME,
    Experiment,
)
from packages.valory.skills.attractor_control.models import Params, load_params
from packages.valory.skills.attractor_control.network import (
    EXAMPLE_MODEL_PATH,
    PbnModel,
    load_model,
)
from packages.valory.skills.attractor_control.oracle import (
    all_pairs_minimal_control,
    oracle_frame,
)
from packages.valory.skills.attractor_control.pasip import (
    PaRegistry,
    identification_report,
    step1_scan,
)
from packages.valory.skills.attractor_control.q_network import (
    load_checkpoint,
    save_checkpoint,
)


VALIDATION_EXIT_CODE = 2
RUNTIME_EXIT_CODE = 3
BASIN_COLUMNS = [
    "attractor_id",
    "attractor_size",
    "weak_basin_size",
    "strong_basin_size",
]
LOG_LEVELS = ["DEBUG", "INFO", "WARNING", "ERROR"]


@dataclass
class CliContext:
    """Options shared by every subcommand."""

    model_path: Path
    seed: int
    out: Optional[Path]
    config_path: Optional[Path]
    logger: Logger

    def model(self) -> PbnModel:
        """Load the model."""
        return load_model(self.model_path)

    def params(self, **overrides: Any) -> Params:
        """Load the parameters with the command line overrides."""
        return load_params(self.config_path, **overrides)

    def rng(self) -> np.random.Generator:
        """A fresh random source for the global seed."""
        return np.random.default_rng(self.seed)


class ExperimentGroup(click.Group):
    """Group that maps the error families onto exit codes."""

    def invoke(self, ctx: click.Context) -> Any:
        """Invoke the subcommand."""
        try:
            return super().invoke(ctx)
        except ValidationFailure as e:
            click.echo(f"Error: {e}", err=True)
            ctx.exit(VALIDATION_EXIT_CODE)
        except RuntimeFailure as e:
            click.echo(f"Error: {e}", err=True)
            ctx.exit(RUNTIME_EXIT_CODE)
        return None


def _write_or_echo(frame: pd.DataFrame, out: Optional[Path]) -> None:
    if out is None:
        click.echo(frame.to_csv(index=False), nl=False)
        return
    out.parent.mkdir(parents=True, exist_ok=True)
    frame.to_csv(out, index=False)


def _exact(model: PbnModel, params: Params) -> Tuple[Stg, List[Attractor]]:
    stg = build_stg(model, params.stg_limit)
    return stg, attractors(stg)


def _prepare_registry(
    context: CliContext,
    model: PbnModel,
    params: Params,
    registry_path: Optional[Path],
) -> Tuple[Optional[List[Attractor]], PaRegistry]:
    """Exact attractors when the model is small enough, and the starting registry."""
    found: Optional[List[Attractor]] = None
    if model.n <= params.stg_limit:
        _, found = _exact(model, params)
    if registry_path is not None:
        return found, PaRegistry.load(registry_path, model.n)
    if found is not None:
        return found, PaRegistry.from_attractors(model.n, found)
    context.logger.info(
        f"{model.n} genes exceed the exhaustive limit; running the Step I scan"
    )
    return found, step1_scan(model, params.pasip_config, context.rng())


@click.group(name="attractor-control", cls=ExperimentGroup)
@click.option(
    "--model",
    "model_path",
    type=click.Path(exists=True, dir_okay=False, path_type=Path),
    default=EXAMPLE_MODEL_PATH,
    show_default="bundled example1.pbn",
    help="Model file.",
)
@click.option(
    "--seed",
    type=click.IntRange(min=0),
    default=0,
    show_default=True,
    help="Random seed.",
)
@click.option(
    "--out",
    type=click.Path(path_type=Path),
    default=None,
    help="Output file, or output directory for train, eval and run.",
)
@click.option(
    "--config",
    "config_path",
    type=click.Path(exists=True, dir_okay=False, path_type=Path),
    default=None,
    help="YAML file overriding the parameter defaults.",
)
@click.option(
    "--log-level",
    type=click.Choice(LOG_LEVELS, case_sensitive=False),
    default="INFO",
    show_default=True,
    help="Logging level.",
)
@click.pass_context
def cli(  # pylint: disable=too-many-arguments
    ctx: click.Context,
    model_path: Path,
    seed: int,
    out: Optional[Path],
    config_path: Optional[Path],
    log_level: str,
) -> None:
    """Attractor control of Boolean networks with deep reinforcement learning."""
    level = getattr(logging, log_level.upper())
    logger = logging.getLogger(PUBLIC_ID.name)
    if not logger.handlers:
        logger = setup_logger(PUBLIC_ID.name, level=level)
    logger.setLevel(level)
    ctx.obj = CliContext(Path(model_path), seed, out, config_path, logger)


@cli.command(name="attractors")
@click.pass_obj
def attractors_command(context: CliContext) -> None:
    """Print the exact attractors of the model."""
    model = context.model()
    _, found = _exact(model, context.params())
    lines = "".join(f"{attractor.describe(model.n)}\n" for attractor in found)
    if context.out is not None:
        context.out.write_text(lines, encoding="utf-8")
    click.echo(lines, nl=False)


@cli.command(name="basins")
@click.pass_obj
def basins_command(context: CliContext) -> None:
    """Print the weak and strong basin sizes of every attractor."""
    model = context.model()
    stg, found = _exact(model, context.params())
    strong = strong_basin_masks(stg, found)
    rows = [
        {
            "attractor_id": f"A{attractor.id}",
            "attractor_size": len(attractor.states),
            "weak_basin_size": int(weak_basin_mask(stg, attractor).sum()),
            "strong_basin_size": int(mask.sum()),
        }
        for attractor, mask in zip(found, strong)
    ]
    _write_or_echo(pd.DataFrame(rows, columns=BASIN_COLUMNS), context.out)


@cli.command(name="pasip")
@click.option(
    "--runs",
    type=click.IntRange(min=1),
    default=None,
    help="Number of Step I initial states; defaults to min(2^n, 100).",
)
@click.pass_obj
def pasip_command(context: CliContext, runs: Optional[int]) -> None:
    """Identify pseudo-attractor states by simulation (Step I)."""
    model = context.model()
    params = context.params(pasip_initial_states=runs)
    registry = step1_scan(model, params.pasip_config, context.rng())
    if context.out is None:
        click.echo(registry.dumps(), nl=False)
    else:
        registry.save(context.out)
    if model.n <= params.stg_limit:
        found = _exact(model, params)[1]
        pa_states = frozenset(
            state
            for attractor in found
            for state in pseudo_attractor(
                stationary_distribution(
                    model,
                    attractor,
                    params.stationary_max_iterations,
                    params.stationary_tolerance,
                )
            ).states
        )
        report = identification_report(registry, found, pa_states)
        context.logger.info(
            f"Registered {report.registered_count} states "
            f"({report.attractor_state_count} attractor states, "
            f"{report.pseudo_attractor_state_count} pseudo-attractor states); "
            f"precision {report.precision:.3f}, recall {report.recall:.3f}"
        )


@cli.command(name="oracle")
@click.option(
    "--max-flips",
    type=click.IntRange(min=1),
    default=None,
    help="Flip cap per intervention.",
)
@click.pass_obj
def oracle_command(context: CliContext, max_flips: Optional[int]) -> None:
    """Compute the minimal guaranteed control strategy of every attractor pair."""
    model = context.model()
    params = context.params(max_flips=max_flips)
    stg, found = _exact(model, params)
    results = all_pairs_minimal_control(stg, found, params.max_flips)
    _write_or_echo(oracle_frame(results), context.out)


@cli.command(name="train")
@click.option(
    "--steps", type=click.IntRange(min=1), default=None, help="Environment steps."
)
@click.option(
    "--reward",
    type=click.Choice(["mixed", "shifted"]),
    default=None,
    help="Reward scheme.",
)
@click.option(
    "--max-flips",
    type=click.IntRange(min=1),
    default=None,
    help="Flip cap per intervention.",
)
@click.option(
    "--checkpoint",
    type=click.Path(dir_okay=False, path_type=Path),
    required=True,
    help="Where to write the trained network.",
)
@click.option(
    "--registry",
    "registry_path",
    type=click.Path(exists=True, dir_okay=False, path_type=Path),
    default=None,
    help="Registry file from the pasip command.",
)
@click.pass_obj
def train_command(  # pylint: disable=too-many-arguments
    context: CliContext,
    steps: Optional[int],
    reward: Optional[str],
    max_flips: Optional[int],
    checkpoint: Path,
    registry_path: Optional[Path],
) -> None:
    """Train the agent; the training log and registry go to --out."""
    model = context.model()
    params = context.params(
        training_steps=steps, reward_scheme=reward, max_flips=max_flips
    )
    found, registry = _prepare_registry(context, model, params, registry_path)
    trainer = Trainer(
        model,
        registry,
        params.agent_config,
        context.rng(),
        environment_config=params.environment_config,
        pasip_config=params.pasip_config,
        attractors=found,
        online_detection=params.online_detection,
        logger=context.logger,
    )
    result = trainer.train(params.training_steps)
    checkpoint.parent.mkdir(parents=True, exist_ok=True)
    save_checkpoint(result.params, checkpoint)
    if context.out is not None:
        context.out.mkdir(parents=True, exist_ok=True)
        save_training_log(result.log, context.out / TRAINING_LOG_FILENAME)
        result.registry.save(context.out / REGISTRY_FILENAME)
    click.echo(f"Trained for {trainer.step} steps over {len(result.log)} episodes")


@cli.command(name="eval")
@click.option(
    "--checkpoint",
    type=click.Path(exists=True, dir_okay=False, path_type=Path),
    required=True,
    help="Trained network.",
)
@click.option(
    "--repeats", type=click.IntRange(min=1), default=None, help="Runs per pair."
)
@click.option(
    "--registry",
    "registry_path",
    type=click.Path(exists=True, dir_okay=False, path_type=Path),
    default=None,
    help="Registry file, e.g. the one written by train.",
)
@click.pass_obj
def eval_command(
    context: CliContext,
    checkpoint: Path,
    repeats: Optional[int],
    registry_path: Optional[Path],
) -> None:
    """Evaluate the greedy policy; the CSVs go to --out."""
    model = context.model()
    params = context.params(evaluation_repeats=repeats)
    found, registry = _prepare_registry(context, model, params, registry_path)
    report = evaluate(
        load_checkpoint(checkpoint),
        model,
        registry,
        repeats=params.evaluation_repeats,
        seed=context.seed,
        attractors=found,
        environment_config=params.environment_config,
        workers=params.pasip_workers,
    )
    if context.out is not None:
        report.save(context.out)
    click.echo(
        f"Success rate {report.success_rate:.1f}%, "
        f"mean successful length {report.mean_length:.2f}"
    )


@cli.command(name="compare")
@click.argument(
    "eval_csv", type=click.Path(exists=True, dir_okay=False, path_type=Path)
)
@click.argument(
    "oracle_csv", type=click.Path(exists=True, dir_okay=False, path_type=Path)
)
@click.pass_obj
def compare_command(context: CliContext, eval_csv: Path, oracle_csv: Path) -> None:
    """Compare evaluation lengths with the oracle optimum."""
    comparison = compare(eval_csv, oracle_csv)
    _write_or_echo(comparison.table, context.out)
    if context.out is not None:
        click.echo(f"Mean ratio {comparison.mean_ratio:.2f}")


@cli.command(name="run")
@click.pass_obj
def run_command(context: CliContext) -> None:
    """Run the whole experiment into the --out directory."""
    if context.out is None:
        raise ConfigurationError("the run command needs --out")
    experiment = Experiment(
        context.params(), context.out, seed=context.seed, logger=context.logger
    )
    result = experiment.run(context.model_path)
    click.echo(f"Finished steps: {', '.join(result.steps)}")
    click.echo(f"Outputs written to {experiment.out_dir}")


def main() -> None:
    """Run the command line."""
    cli()  # pylint: disable=no-value-for-parameter


if __name__ == "__main__":
    main()  # pragma: nocover
