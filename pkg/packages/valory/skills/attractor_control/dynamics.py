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

"""This module contains the asynchronous dynamics, the STG, attractors and basins."""

from dataclasses import dataclass
from functools import cached_property
from typing import (
    Dict,
    FrozenSet,
    Iterable,
    Iterator,
    List,
    Optional,
    Sequence,
    Tuple,
)

import numpy as np
from aea.exceptions import enforce
from aea.helpers.logging import setup_logger
from scipy import sparse
from scipy.sparse.csgraph import connected_components

from packages.valory.skills.attractor_control import PUBLIC_ID
from packages.valory.skills.attractor_control.exceptions import (
    StationaryDistributionError,
    StgLimitError,
)
from packages.valory.skills.attractor_control.network import (
    PbnModel,
    State,
    format_state,
    gene_columns,
    state_to_bits,
)


_logger = setup_logger(f"{PUBLIC_ID.name}.dynamics")

DEFAULT_STG_GENE_LIMIT = 20
TABLE_GENE_LIMIT = 16
STATIONARY_MAX_ITERATIONS = 10**6
STATIONARY_TOLERANCE = 1e-12
PSEUDO_ATTRACTOR_TOLERANCE = 1e-9
DRAW_BLOCK = 4096


def _choose_predictor(cumulative: np.ndarray, draw: float) -> int:
    position = int(np.searchsorted(cumulative, draw, side="right"))
    return min(position, len(cumulative) - 1)


def async_step(model: PbnModel, state: State, rng: np.random.Generator) -> State:
    """
    Apply one asynchronous update.

    A gene is drawn uniformly, then one of its predictors according to the
    selection probabilities; the gene takes the predictor's value.

    :param model: the model.
    :param state: the current state.
    :param rng: the caller-owned random source.
    :return: the next state, possibly equal to `state`.
    """
    n = model.n
    gene = int(rng.integers(n))
    predictor = _choose_predictor(
        np.cumsum(model.selection_probabilities(gene)), rng.random()
    )
    bit = model.predictors[gene][predictor].expr.evaluate(state_to_bits(state, n))
    mask = 1 << (n - 1 - gene)
    return (state | mask) if bit else (state & ~mask)


class Simulator:
    """
    Fast repeated asynchronous stepping of one model.

    Single steps consume the random source exactly like `async_step`.
    For networks of at most `TABLE_GENE_LIMIT` genes the next value of every
    (gene, predictor) pair is tabulated over the whole state space.
    """

    def __init__(self, model: PbnModel) -> None:
        """Initialize the simulator."""
        self.model = model
        self.n = model.n
        self._cumulative = [
            np.cumsum(model.selection_probabilities(gene)) for gene in range(self.n)
        ]
        self._masks = [1 << (self.n - 1 - gene) for gene in range(self.n)]
        self._tables: Optional[List[np.ndarray]] = None
        if self.n <= TABLE_GENE_LIMIT:
            columns = gene_columns(self.n)
            self._tables = [
                np.stack(
                    [
                        predictor.expr.evaluate_array(columns)
                        for predictor in model.predictors[gene]
                    ]
                )
                for gene in range(self.n)
            ]

    def _apply(self, state: State, gene: int, draw: float) -> State:
        predictor = _choose_predictor(self._cumulative[gene], draw)
        if self._tables is not None:
            bit = bool(self._tables[gene][predictor, state])
        else:
            bit = bool(
                self.model.predictors[gene][predictor].expr.evaluate(
                    state_to_bits(state, self.n)
                )
            )
        mask = self._masks[gene]
        return (state | mask) if bit else (state & ~mask)

    def step(self, state: State, rng: np.random.Generator) -> State:
        """Apply one asynchronous update."""
        gene = int(rng.integers(self.n))
        return self._apply(state, gene, rng.random())

    def trajectory(
        self, state: State, rng: np.random.Generator, steps: Optional[int] = None
    ) -> Iterator[State]:
        """
        Yield the successive states of a simulation run.

        The start state is not yielded. Random numbers are drawn in blocks.

        :param state: the start state.
        :param rng: the caller-owned random source.
        :param steps: number of steps; unbounded when None.
        :yield: the state after each step.
        """
        remaining = steps
        while remaining is None or remaining > 0:
            block = DRAW_BLOCK if remaining is None else min(DRAW_BLOCK, remaining)
            genes = rng.integers(self.n, size=block)
            draws = rng.random(block)
            for gene, draw in zip(genes.tolist(), draws.tolist()):
                state = self._apply(state, gene, draw)
                yield state
            if remaining is not None:
                remaining -= block


def transition_probability(model: PbnModel, source: State, target: State) -> float:
    """
    Probability of one asynchronous update taking `source` to `target`.

    Self-transition mass is included when `source == target`.

    :param model: the model.
    :param source: the current state.
    :param target: the next state.
    :return: the probability.
    """
    n = model.n
    bits = state_to_bits(source, n)
    total = 0.0
    for gene, functions in enumerate(model.predictors):
        mask = 1 << (n - 1 - gene)
        for predictor in functions:
            successor = (
                (source | mask) if predictor.expr.evaluate(bits) else (source & ~mask)
            )
            if successor == target:
                total += predictor.selection_probability / n
    return total


@dataclass(frozen=True, eq=False)
class Stg:
    """The state transition graph: state-changing asynchronous updates only."""

    n: int
    adjacency: sparse.csr_matrix

    @property
    def state_count(self) -> int:
        """Number of states."""
        return 2**self.n

    @cached_property
    def reverse(self) -> sparse.csr_matrix:
        """Adjacency of the transposed graph."""
        return self.adjacency.transpose().tocsr()

    def successors(self, state: State) -> Tuple[State, ...]:
        """Successors of a state in increasing order."""
        start, end = self.adjacency.indptr[state], self.adjacency.indptr[state + 1]
        return tuple(sorted(int(s) for s in self.adjacency.indices[start:end]))

    def edges(self) -> FrozenSet[Tuple[State, State]]:
        """All edges as (source, target) pairs."""
        coo = self.adjacency.tocoo()
        return frozenset(zip(coo.row.tolist(), coo.col.tolist()))


def build_stg(model: PbnModel, limit: int = DEFAULT_STG_GENE_LIMIT) -> Stg:
    """
    Build the complete state transition graph.

    :param model: the model.
    :param limit: the largest gene count accepted.
    :return: the graph.
    """
    n = model.n
    enforce(
        n <= limit,
        f"{n} genes exceed the exhaustive limit of {limit}; use PASIP instead",
        StgLimitError,
    )
    columns = gene_columns(n)
    states = np.arange(2**n, dtype=np.int64)
    sources, targets = [], []
    for gene, functions in enumerate(model.predictors):
        current = columns[gene]
        can_flip = np.zeros(2**n, dtype=bool)
        for predictor in functions:
            can_flip |= predictor.expr.evaluate_array(columns) != current
        flipping = states[can_flip]
        sources.append(flipping)
        targets.append(flipping ^ (1 << (n - 1 - gene)))
    rows = np.concatenate(sources) if sources else np.zeros(0, dtype=np.int64)
    cols = np.concatenate(targets) if targets else np.zeros(0, dtype=np.int64)
    adjacency = sparse.csr_matrix(
        (np.ones(len(rows), dtype=bool), (rows, cols)), shape=(2**n, 2**n)
    )
    _logger.debug(f"Built STG with {2 ** n} states and {adjacency.nnz} edges")
    return Stg(n, adjacency)


@dataclass(frozen=True)
class Attractor:
    """A bottom strongly connected component of the state transition graph."""

    id: int  # pylint: disable=invalid-name
    states: Tuple[State, ...]

    @property
    def is_fixed_point(self) -> bool:
        """Whether the attractor is a single state."""
        return len(self.states) == 1

    @property
    def representative(self) -> State:
        """The numerically smallest state."""
        return self.states[0]

    def __contains__(self, state: object) -> bool:
        """Membership test."""
        return state in self.states

    def describe(self, n: int) -> str:
        """One line `A<k>: fixed|cyclic: s1 s2 ...`."""
        kind = "fixed" if self.is_fixed_point else "cyclic"
        rendered = " ".join(format_state(state, n) for state in self.states)
        return f"A{self.id}: {kind}: {rendered}"


def attractors(stg: Stg) -> List[Attractor]:
    """
    Compute the attractors as the bottom strongly connected components.

    :param stg: the state transition graph.
    :return: the attractors, numbered from 1 by increasing smallest state.
    """
    count, labels = connected_components(
        stg.adjacency, directed=True, connection="strong"
    )
    coo = stg.adjacency.tocoo()
    leaving = labels[coo.row] != labels[coo.col]
    has_exit = np.zeros(count, dtype=bool)
    has_exit[labels[coo.row[leaving]]] = True
    order = np.argsort(labels, kind="stable")
    boundaries = np.cumsum(np.bincount(labels, minlength=count))[:-1]
    groups = np.split(order, boundaries)
    bottoms = sorted(
        tuple(int(state) for state in groups[component])
        for component in range(count)
        if not has_exit[component]
    )
    return [Attractor(position, states) for position, states in enumerate(bottoms, 1)]


def attractor_states(found: Iterable[Attractor]) -> FrozenSet[State]:
    """The union of the states of the given attractors."""
    return frozenset(state for attractor in found for state in attractor.states)


@dataclass(frozen=True)
class AttractorDistribution:
    """The stationary distribution of the chain restricted to one attractor."""

    attractor_id: int
    states: Tuple[State, ...]
    probabilities: Tuple[float, ...]

    def probability(self, state: State) -> float:
        """Stationary mass of a state; zero outside the attractor."""
        try:
            return self.probabilities[self.states.index(state)]
        except ValueError:
            return 0.0

    def as_dict(self) -> Dict[State, float]:
        """State to probability mapping."""
        return dict(zip(self.states, self.probabilities))


@dataclass(frozen=True)
class PseudoAttractor:
    """The high-mass states of an attractor."""

    attractor_id: int
    states: Tuple[State, ...]


def _restricted_kernel(model: PbnModel, states: Sequence[State]) -> sparse.csr_matrix:
    n = model.n
    index = {state: position for position, state in enumerate(states)}
    rows, cols, values = [], [], []
    for position, state in enumerate(states):
        bits = state_to_bits(state, n)
        for gene, functions in enumerate(model.predictors):
            mask = 1 << (n - 1 - gene)
            for predictor in functions:
                successor = (
                    (state | mask) if predictor.expr.evaluate(bits) else (state & ~mask)
                )
                enforce(
                    successor in index,
                    f"state {format_state(state, n)} leaves the attractor",
                    StationaryDistributionError,
                )
                rows.append(position)
                cols.append(index[successor])
                values.append(predictor.selection_probability / n)
    size = len(states)
    return sparse.csr_matrix((values, (rows, cols)), shape=(size, size))


def stationary_distribution(
    model: PbnModel,
    attractor: Attractor,
    max_iterations: int = STATIONARY_MAX_ITERATIONS,
    tolerance: float = STATIONARY_TOLERANCE,
) -> AttractorDistribution:
    """
    Solve the stationary distribution of the chain restricted to an attractor.

    Power iteration runs on the lazy kernel (P + I) / 2, which shares the
    stationary distribution of P and is aperiodic, starting from uniform.

    :param model: the model.
    :param attractor: the attractor.
    :param max_iterations: iteration cap.
    :param tolerance: L1 change below which iteration stops.
    :return: the distribution.
    """
    if attractor.is_fixed_point:
        return AttractorDistribution(attractor.id, attractor.states, (1.0,))
    kernel_t = _restricted_kernel(model, attractor.states).transpose().tocsr()
    size = len(attractor.states)
    distribution = np.full(size, 1.0 / size)
    for iteration in range(1, max_iterations + 1):
        updated = 0.5 * (distribution + kernel_t @ distribution)
        updated /= updated.sum()
        change = float(np.abs(updated - distribution).sum())
        distribution = updated
        if change < tolerance:
            _logger.debug(
                f"Stationary distribution of A{attractor.id} converged "
                f"after {iteration} iterations"
            )
            return AttractorDistribution(
                attractor.id,
                attractor.states,
                tuple(float(p) for p in distribution),
            )
    _logger.error(f"Power iteration on A{attractor.id} did not converge")
    raise StationaryDistributionError(
        f"power iteration on A{attractor.id} did not converge "
        f"in {max_iterations} iterations"
    )


def threshold_states(
    distribution: AttractorDistribution, fraction: float
) -> Tuple[State, ...]:
    """The states whose stationary mass is at least `fraction`."""
    return tuple(
        state
        for state, probability in zip(distribution.states, distribution.probabilities)
        if probability >= fraction
    )


def pseudo_attractor(distribution: AttractorDistribution) -> PseudoAttractor:
    """
    Compute the pseudo-attractor: the states with mass at least 1/|A|.

    :param distribution: the stationary distribution of the attractor.
    :return: the pseudo-attractor; never empty.
    """
    fraction = 1.0 / len(distribution.states) - PSEUDO_ATTRACTOR_TOLERANCE
    return PseudoAttractor(
        distribution.attractor_id, threshold_states(distribution, fraction)
    )


def pseudo_attractor_size_bound(k_percent: int, size: int) -> int:
    """
    Upper bound on the number of attractor states holding at least k% of the mass.

    :param k_percent: the threshold in percent.
    :param size: the number of attractor states.
    :return: the bound.
    """
    enforce(0 < k_percent <= 100, f"invalid threshold {k_percent}%", ValueError)
    if 100 % k_percent == 0 and size > 100 // k_percent:
        return 100 // k_percent - 1
    return 100 // k_percent


def simulate_occupancy(
    model: PbnModel, state: State, steps: int, rng: np.random.Generator
) -> Dict[State, float]:
    """Empirical visit frequencies of a simulation run of `steps` steps."""
    visited = np.fromiter(
        Simulator(model).trajectory(state, rng, steps), dtype=np.int64, count=steps
    )
    values, counts = np.unique(visited, return_counts=True)
    return {int(v): c / steps for v, c in zip(values.tolist(), counts.tolist())}


def reachable_mask(graph: sparse.csr_matrix, sources: Iterable[State]) -> np.ndarray:
    """
    Breadth-first closure of a set of states along the edges of `graph`.

    :param graph: adjacency in CSR form (the reverse graph gives backward reachability).
    :param sources: the start states; they are included.
    :return: boolean mask over all states.
    """
    visited = np.zeros(graph.shape[0], dtype=bool)
    frontier = np.unique(np.fromiter(sources, dtype=np.int64))
    visited[frontier] = True
    while frontier.size:
        neighbours = np.unique(graph[frontier].indices)
        frontier = neighbours[~visited[neighbours]]
        visited[frontier] = True
    return visited


def weak_basin_mask(stg: Stg, attractor: Attractor) -> np.ndarray:
    """Boolean mask of the states from which the attractor is reachable."""
    return reachable_mask(stg.reverse, attractor.states)


def strong_basin_masks(stg: Stg, found: Sequence[Attractor]) -> np.ndarray:
    """
    Strong basins of all attractors at once.

    :param stg: the state transition graph.
    :param found: the complete attractor list of the graph.
    :return: array of shape (len(found), 2^n), row k the strong basin of found[k].
    """
    weak = np.stack([weak_basin_mask(stg, attractor) for attractor in found])
    reach_count = weak.sum(axis=0)
    return weak & (reach_count == 1)


def weak_basin(stg: Stg, attractor: Attractor) -> FrozenSet[State]:
    """The states from which the attractor is reachable."""
    return frozenset(np.flatnonzero(weak_basin_mask(stg, attractor)).tolist())


def strong_basin(
    stg: Stg, found: Sequence[Attractor], target: Attractor
) -> FrozenSet[State]:
    """
    The states from which the target is the only reachable attractor.

    :param stg: the state transition graph.
    :param found: the complete attractor list of the graph.
    :param target: the attractor whose strong basin is wanted.
    :return: the strong basin.
    """
    position = [attractor.id for attractor in found].index(target.id)
    return frozenset(np.flatnonzero(strong_basin_masks(stg, found)[position]).tolist())
