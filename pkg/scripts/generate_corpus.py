#!/usr/bin/env python3
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

"""
Script for generating a corpus of random models.

This script

- Draws BNs and PBNs with the requested gene counts
- Writes one model file per draw, named after its shape and seed
- Prints the attractor count of every model small enough for the STG
"""

from pathlib import Path
from typing import Tuple

import click
from aea.helpers.logging import setup_logger

from packages.valory.skills.attractor_control.dynamics import (
    DEFAULT_STG_GENE_LIMIT,
    attractors,
    build_stg,
)
from packages.valory.skills.attractor_control.network import random_model, save_model


_logger = setup_logger("generate_corpus")


@click.command(name="generate-corpus")
@click.option(
    "--out",
    "out_dir",
    type=click.Path(file_okay=False, path_type=Path),
    required=True,
    help="Directory for the model files.",
)
@click.option(
    "-n",
    "--genes",
    type=click.IntRange(min=1),
    multiple=True,
    default=(4, 6, 8, 10),
    show_default=True,
    help="Gene counts to draw.",
)
@click.option(
    "--count",
    type=click.IntRange(min=1),
    default=5,
    show_default=True,
    help="Models per shape.",
)
@click.option(
    "--max-parents",
    type=click.IntRange(min=1),
    default=3,
    show_default=True,
    help="Parents per predictor.",
)
@click.option(
    "--predictors",
    type=click.IntRange(min=1),
    multiple=True,
    default=(1, 2),
    show_default=True,
    help="Predictors per gene; 1 gives BNs.",
)
@click.option(
    "--seed",
    type=click.IntRange(min=0),
    default=0,
    show_default=True,
    help="First seed.",
)
def main(  # pylint: disable=too-many-arguments
    out_dir: Path,
    genes: Tuple[int, ...],
    count: int,
    max_parents: int,
    predictors: Tuple[int, ...],
    seed: int,
) -> None:
    """Generate random models for the equivalence sweeps."""

    out_dir.mkdir(parents=True, exist_ok=True)
    current_seed = seed
    for n in genes:
        for predictors_per_gene in predictors:
            for _ in range(count):
                model = random_model(
                    n, min(max_parents, n), predictors_per_gene, current_seed
                )
                kind = "bn" if model.is_bn else "pbn"
                path = out_dir / f"{kind}_{n}_{current_seed}.pbn"
                save_model(model, path)
                if n <= DEFAULT_STG_GENE_LIMIT:
                    found = attractors(build_stg(model))
                    _logger.info(f"{path.name}: {len(found)} attractors")
                current_seed += 1


if __name__ == "__main__":
    main()  # pylint: disable=no-value-for-parameter
