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

"""This module contains the exact minimal attractor-based control oracle."""

from collections import deque
from dataclasses import dataclass
from itertools import combinations
from pathlib import Path
from typing import (
    Dict,
    FrozenSet,
    Iterable,
    Iterator,
    List,
    Optional,
    Sequence,
    Tuple,
    Union,
)

import numpy as np
import pandas as pd
from aea.exceptions import enforce
from aea.helpers.logging import setup_logger

from packages.valory.skills.attractor_control import PUBLIC_ID
from packages.valory.skills.attractor_control.dynamics import (
    Attractor,
    Stg,
    reachable_mask,
    strong_basin_masks,
)
from packages.valory.skills.attractor_control.environment import (
    Intervention,
    format_interventions,
)
from packages.valory.skills.attractor_control.exceptions import ControlError
from packages.valory.skills.attractor_control.network import State, format_state


ORACLE_COLUMNS = ["source_id", "target_id", "min_length", "strategy"]

_logger = setup_logger(f"{PUBLIC_ID.name}.oracle")

Source = Union[Attractor, Iterable[State]]


@dataclass(frozen=True)
class ControlStrategy:
    """Interventions, each applied at a given attractor state."""

    steps: Tuple[Tuple[State, Intervention], ...] = ()

    def __len__(self) -> int:
        """Number of interventions."""
        return len(self.steps)

    @property
    def interventions(self) -> Tuple[Intervention, ...]:
        """The interventions in order."""
        return tuple(intervention for _, intervention in self.steps)

    def describe(self, n: int) -> str:
        """Human readable form, e.g. `1010 [0+2]`."""
        return ", ".join(
            f"{format_state(state, n)} [{intervention}]"
            for state, intervention in self.steps
        )


def flip_sets(n: int, max_flips: int) -> Iterator[Tuple[int, ...]]:
    """Nonempty flip sets of at most `max_flips` genes, by size then lexically."""
    for size in range(1, min(max_flips, n) + 1):
        yield from combinations(range(n), size)


def _flip_masks(n: int, max_flips: int) -> List[Tuple[Tuple[int, ...], int]]:
    return [
        (genes, sum(1 << (n - 1 - gene) for gene in genes))
        for genes in flip_sets(n, max_flips)
    ]


def _resolve_source(
    found: Sequence[Attractor], source: Source
) -> Tuple[Attractor, Tuple[State, ...]]:
    if isinstance(source, Attractor):
        return source, source.states
    states = tuple(sorted(set(source)))
    enforce(bool(states), "empty source", ControlError)
    for attractor in found:
        if set(states) <= set(attractor.states):
            return attractor, states
    raise ControlError("source states do not lie in a single attractor")


def minimal_control(
    stg: Stg,
    found: Sequence[Attractor],
    source: Source,
    target: Attractor,
    max_flips: int = 3,
) -> Optional[ControlStrategy]:
    """
    Shortest guaranteed control strategy from a source to a target attractor.

    Breadth-first search over attractors: A -> B when flipping some state of
    A lands in the strong basin of B. Neighbours are explored by attractor
    id, states in increasing order and flip sets by size then
    lexicographically, so the first shortest strategy is returned.

    :param stg: the state transition graph.
    :param found: the complete attractor list.
    :param source: the source attractor, or a subset of one attractor's states.
    :param target: the target attractor.
    :param max_flips: the flip cap.
    :return: the strategy, or None when no guaranteed strategy exists.
    """
    source_attractor, source_states = _resolve_source(found, source)
    if source_attractor.id == target.id:
        return ControlStrategy()
    owner = np.full(stg.state_count, -1, dtype=np.int64)
    for position, mask in enumerate(strong_basin_masks(stg, found)):
        owner[mask] = position
    position_of = {attractor.id: position for position, attractor in enumerate(found)}
    flips = _flip_masks(stg.n, max_flips)

    def edges(states: Sequence[State]) -> Dict[int, Tuple[State, Tuple[int, ...]]]:
        reached: Dict[int, Tuple[State, Tuple[int, ...]]] = {}
        for state in states:
            for genes, mask in flips:
                landing = int(owner[state ^ mask])
                if landing >= 0 and landing not in reached:
                    reached[landing] = (state, genes)
        return reached

    start = position_of[source_attractor.id]
    goal = position_of[target.id]
    parents: Dict[int, Tuple[int, State, Tuple[int, ...]]] = {}
    queue = deque([start])
    seen = {start}
    while queue:
        current = queue.popleft()
        states = source_states if current == start else found[current].states
        for landing, (state, genes) in sorted(edges(states).items()):
            if landing in seen:
                continue
            seen.add(landing)
            parents[landing] = (current, state, genes)
            if landing == goal:
                steps = []
                node = goal
                while node != start:
                    previous, at, flipped = parents[node]
                    steps.append((at, Intervention(flipped)))
                    node = previous
                return ControlStrategy(tuple(reversed(steps)))
            queue.append(landing)
    return None


def brute_force_min_length(  # pylint: disable=too-many-arguments
    stg: Stg,
    found: Sequence[Attractor],
    source: Source,
    target: Attractor,
    max_flips: int,
    max_len: int,
) -> Optional[int]:
    """
    Minimal guaranteed strategy length by exhaustive level-by-level enumeration.

    A flip is guaranteed to land in B when forward reachability from the
    flipped state meets no attractor other than B.

    :param stg: the state transition graph.
    :param found: the complete attractor list.
    :param source: the source attractor, or a subset of one attractor's states.
    :param target: the target attractor.
    :param max_flips: the flip cap.
    :param max_len: the longest strategy considered.
    :return: the minimal length, or None when none exists up to `max_len`.
    """
    source_attractor, source_states = _resolve_source(found, source)
    if source_attractor.id == target.id:
        return 0
    label = np.full(stg.state_count, -1, dtype=np.int64)
    for attractor in found:
        label[list(attractor.states)] = attractor.id
    flips = _flip_masks(stg.n, max_flips)
    outcomes: Dict[State, FrozenSet[int]] = {}

    def reachable_attractors(state: State) -> FrozenSet[int]:
        if state not in outcomes:
            mask = reachable_mask(stg.adjacency, (state,))
            outcomes[state] = frozenset(
                int(a) for a in np.unique(label[mask]) if a >= 0
            )
        return outcomes[state]

    by_id = {attractor.id: attractor for attractor in found}
    frontier = {source_attractor.id}
    visited = set(frontier)
    for length in range(1, max_len + 1):
        following = set()
        for attractor_id in sorted(frontier):
            states = (
                source_states
                if attractor_id == source_attractor.id
                else by_id[attractor_id].states
            )
            for state in states:
                for _, mask in flips:
                    outcome = reachable_attractors(state ^ mask)
                    if len(outcome) == 1:
                        following |= outcome
        if target.id in following:
            return length
        frontier = following - visited
        visited |= frontier
        if not frontier:
            return None
    return None


@dataclass(frozen=True)
class PairControl:
    """The oracle answer for one ordered attractor pair."""

    source: Attractor
    target: Attractor
    strategy: Optional[ControlStrategy]


def all_pairs_minimal_control(
    stg: Stg, found: Sequence[Attractor], max_flips: int = 3
) -> List[PairControl]:
    """Minimal control for every ordered pair of distinct attractors."""
    results = []
    for source in found:
        for target in found:
            if source.id == target.id:
                continue
            strategy = minimal_control(stg, found, source, target, max_flips)
            if strategy is None:
                _logger.warning(
                    f"A{target.id} cannot be reached from A{source.id} "
                    "with a guaranteed strategy"
                )
            results.append(PairControl(source, target, strategy))
    return results


def oracle_frame(results: Sequence[PairControl]) -> pd.DataFrame:
    """The oracle CSV rows; unreachable pairs are omitted."""
    rows = [
        {
            "source_id": f"A{result.source.id}",
            "target_id": f"A{result.target.id}",
            "min_length": len(result.strategy),
            "strategy": format_interventions(result.strategy.interventions),
        }
        for result in results
        if result.strategy is not None
    ]
    return pd.DataFrame(rows, columns=ORACLE_COLUMNS)


def save_oracle_csv(results: Sequence[PairControl], path: Union[str, Path]) -> None:
    """Write the oracle CSV."""
    oracle_frame(results).to_csv(path, index=False)
