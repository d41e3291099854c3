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

"""This module contains the (probabilistic) Boolean network model and its format."""

from abc import ABC, abstractmethod
from dataclasses import dataclass
from importlib import resources
from pathlib import Path
from typing import Dict, FrozenSet, List, Optional, Sequence, Tuple, Union

import numpy as np
from aea.helpers.logging import setup_logger
from pyparsing import (
    Literal,
    OpAssoc,
    ParseBaseException,
    ParserElement,
    Regex,
    infix_notation,
)

from packages.valory.skills.attractor_control import PUBLIC_ID
from packages.valory.skills.attractor_control.exceptions import (
    ExpressionError,
    ModelFormatError,
    ModelValidationError,
)


ParserElement.enable_packrat()

_logger = setup_logger(f"{PUBLIC_ID.name}.network")

PROBABILITY_TOLERANCE = 1e-9
GENES_HEADER = "genes"
COMMENT_CHAR = "#"
PROBABILITY_SEPARATOR = "::"
EXAMPLE_MODEL_FILENAME = "example1.pbn"
EXAMPLE_MODEL_PATH = Path(__file__).parent / "data" / EXAMPLE_MODEL_FILENAME

# precedence used when printing expressions back
_OR_PRECEDENCE = 1
_AND_PRECEDENCE = 2
_NOT_PRECEDENCE = 3
_ATOM_PRECEDENCE = 4

State = int


def state_to_bits(state: State, n: int) -> Tuple[int, ...]:
    """Decode a state code into its gene values, gene 0 first."""
    return tuple((state >> (n - 1 - gene)) & 1 for gene in range(n))


def bits_to_state(bits: Sequence[int]) -> State:
    """Encode gene values (gene 0 first) into a state code."""
    state = 0
    for bit in bits:
        state = (state << 1) | (1 if bit else 0)
    return state


def format_state(state: State, n: int) -> str:
    """Render a state as a bit-string with gene 0 leftmost."""
    return format(state, f"0{n}b") if n > 0 else ""


def parse_state(text: str, n: int) -> State:
    """
    Parse a bit-string state.

    :param text: the bit-string, gene 0 leftmost.
    :param n: the expected width.
    :return: the state code.
    """
    text = text.strip()
    if len(text) != n or any(char not in "01" for char in text):
        raise ModelFormatError(f"{text!r} is not a {n}-bit state")
    return int(text, 2)


def flip_genes(state: State, genes: Sequence[int], n: int) -> State:
    """Flip the given genes of a state simultaneously."""
    for gene in genes:
        state ^= 1 << (n - 1 - gene)
    return state


def gene_columns(n: int) -> List[np.ndarray]:
    """Return, for every gene, its value in each of the 2^n states."""
    states = np.arange(2**n, dtype=np.int64)
    return [((states >> (n - 1 - gene)) & 1).astype(bool) for gene in range(n)]


class BooleanExpr(ABC):
    """A node of a Boolean expression tree."""

    precedence: int = _ATOM_PRECEDENCE

    @abstractmethod
    def evaluate(self, bits: Sequence[int]) -> int:
        """Evaluate the expression on a full assignment of gene values."""

    @abstractmethod
    def evaluate_array(self, columns: Sequence[np.ndarray]) -> np.ndarray:
        """Evaluate on a batch of assignments, one boolean column per gene."""

    @abstractmethod
    def variables(self) -> FrozenSet[int]:
        """Return the gene indices the expression reads."""

    @abstractmethod
    def render(self, gene_names: Sequence[str]) -> str:
        """Print the expression in model-file syntax."""

    def _render_child(self, child: "BooleanExpr", gene_names: Sequence[str]) -> str:
        text = child.render(gene_names)
        if child.precedence <= self.precedence and not isinstance(child, Not):
            return f"({text})"
        return text


@dataclass(frozen=True)
class Constant(BooleanExpr):
    """A constant 0 or 1."""

    value: int

    def evaluate(self, bits: Sequence[int]) -> int:
        """Evaluate the expression on a full assignment of gene values."""
        return self.value

    def evaluate_array(self, columns: Sequence[np.ndarray]) -> np.ndarray:
        """Evaluate the expression on a batch of assignments."""
        return np.full(len(columns[0]), bool(self.value))

    def variables(self) -> FrozenSet[int]:
        """Return the gene indices the expression reads."""
        return frozenset()

    def render(self, gene_names: Sequence[str]) -> str:
        """Print the expression in model-file syntax."""
        return str(self.value)


@dataclass(frozen=True)
class Variable(BooleanExpr):
    """The current value of a gene."""

    index: int

    def evaluate(self, bits: Sequence[int]) -> int:
        """Evaluate the expression on a full assignment of gene values."""
        return 1 if bits[self.index] else 0

    def evaluate_array(self, columns: Sequence[np.ndarray]) -> np.ndarray:
        """Evaluate the expression on a batch of assignments."""
        return columns[self.index]

    def variables(self) -> FrozenSet[int]:
        """Return the gene indices the expression reads."""
        return frozenset((self.index,))

    def render(self, gene_names: Sequence[str]) -> str:
        """Print the expression in model-file syntax."""
        return gene_names[self.index]


@dataclass(frozen=True)
class Not(BooleanExpr):
    """Negation."""

    operand: BooleanExpr
    precedence = _NOT_PRECEDENCE

    def evaluate(self, bits: Sequence[int]) -> int:
        """Evaluate the expression on a full assignment of gene values."""
        return 1 - self.operand.evaluate(bits)

    def evaluate_array(self, columns: Sequence[np.ndarray]) -> np.ndarray:
        """Evaluate the expression on a batch of assignments."""
        return np.logical_not(self.operand.evaluate_array(columns))

    def variables(self) -> FrozenSet[int]:
        """Return the gene indices the expression reads."""
        return self.operand.variables()

    def render(self, gene_names: Sequence[str]) -> str:
        """Print the expression in model-file syntax."""
        text = self.operand.render(gene_names)
        if self.operand.precedence < _NOT_PRECEDENCE:
            text = f"({text})"
        return f"!{text}"


@dataclass(frozen=True)
class And(BooleanExpr):
    """Conjunction of two or more operands."""

    operands: Tuple[BooleanExpr, ...]
    precedence = _AND_PRECEDENCE

    def evaluate(self, bits: Sequence[int]) -> int:
        """Evaluate the expression on a full assignment of gene values."""
        return int(all(operand.evaluate(bits) for operand in self.operands))

    def evaluate_array(self, columns: Sequence[np.ndarray]) -> np.ndarray:
        """Evaluate the expression on a batch of assignments."""
        return np.logical_and.reduce(
            [operand.evaluate_array(columns) for operand in self.operands]
        )

    def variables(self) -> FrozenSet[int]:
        """Return the gene indices the expression reads."""
        return frozenset().union(*(operand.variables() for operand in self.operands))

    def render(self, gene_names: Sequence[str]) -> str:
        """Print the expression in model-file syntax."""
        return " & ".join(
            self._render_child(operand, gene_names) for operand in self.operands
        )


@dataclass(frozen=True)
class Or(BooleanExpr):
    """Disjunction of two or more operands."""

    operands: Tuple[BooleanExpr, ...]
    precedence = _OR_PRECEDENCE

    def evaluate(self, bits: Sequence[int]) -> int:
        """Evaluate the expression on a full assignment of gene values."""
        return int(any(operand.evaluate(bits) for operand in self.operands))

    def evaluate_array(self, columns: Sequence[np.ndarray]) -> np.ndarray:
        """Evaluate the expression on a batch of assignments."""
        return np.logical_or.reduce(
            [operand.evaluate_array(columns) for operand in self.operands]
        )

    def variables(self) -> FrozenSet[int]:
        """Return the gene indices the expression reads."""
        return frozenset().union(*(operand.variables() for operand in self.operands))

    def render(self, gene_names: Sequence[str]) -> str:
        """Print the expression in model-file syntax."""
        return " | ".join(
            self._render_child(operand, gene_names) for operand in self.operands
        )


class _RawNode:  # pylint: disable=too-few-public-methods
    """Parse-time node; gene names are resolved afterwards."""

    __slots__ = ("kind", "payload")

    def __init__(self, kind: str, payload: object) -> None:
        self.kind = kind
        self.payload = payload


def _constant_action(tokens: Sequence) -> _RawNode:
    return _RawNode("const", int(tokens[0]))


def _name_action(tokens: Sequence) -> _RawNode:
    return _RawNode("var", str(tokens[0]))


def _negation_action(tokens: Sequence) -> _RawNode:
    group = list(tokens[0])
    node = group[-1]
    for _ in group[:-1]:
        node = _RawNode("not", node)
    return node


def _conjunction_action(tokens: Sequence) -> _RawNode:
    return _RawNode("and", list(tokens[0])[0::2])


def _disjunction_action(tokens: Sequence) -> _RawNode:
    return _RawNode("or", list(tokens[0])[0::2])


_CONSTANT = Regex(r"[01](?![A-Za-z0-9_])").set_parse_action(_constant_action)
_NAME = Regex(r"[A-Za-z_][A-Za-z0-9_]*").set_parse_action(_name_action)
_EXPRESSION = infix_notation(
    _CONSTANT | _NAME,
    [
        (Literal("!"), 1, OpAssoc.RIGHT, _negation_action),
        (Literal("&"), 2, OpAssoc.LEFT, _conjunction_action),
        (Literal("|"), 2, OpAssoc.LEFT, _disjunction_action),
    ],
)


def _resolve(node: _RawNode, index: Dict[str, int]) -> BooleanExpr:
    if node.kind == "const":
        return Constant(int(node.payload))  # type: ignore
    if node.kind == "var":
        name = str(node.payload)
        if name not in index:
            raise ExpressionError(f"unknown gene name {name!r}")
        return Variable(index[name])
    if node.kind == "not":
        return Not(_resolve(node.payload, index))  # type: ignore
    operands = tuple(_resolve(child, index) for child in node.payload)  # type: ignore
    return And(operands) if node.kind == "and" else Or(operands)


def parse_expression(text: str, gene_names: Sequence[str]) -> BooleanExpr:
    """
    Parse a Boolean expression over the given genes.

    Precedence is `!` over `&` over `|`; parentheses group.

    :param text: the expression text.
    :param gene_names: gene names in declaration order.
    :return: the expression tree.
    """
    try:
        parsed = _EXPRESSION.parse_string(text, parse_all=True)
    except ParseBaseException as e:
        raise ExpressionError(f"syntax error in {text!r}: {e.msg}", e.loc) from e
    index = {name: position for position, name in enumerate(gene_names)}
    return _resolve(parsed[0], index)


def evaluate(
    expr: BooleanExpr, state: Union[State, Sequence[int]], n: Optional[int] = None
) -> int:
    """
    Evaluate an expression on a network state.

    :param expr: the expression.
    :param state: a state code (requires `n`) or a sequence of gene values.
    :param n: the state width when `state` is a code.
    :return: 0 or 1.
    """
    if isinstance(state, int):
        if n is None:
            raise ValueError("the state width is required for state codes")
        state = state_to_bits(state, n)
    return expr.evaluate(state)


@dataclass(frozen=True)
class Predictor:
    """A candidate update function of a gene together with its selection probability."""

    expr: BooleanExpr
    selection_probability: float = 1.0


@dataclass(frozen=True)
class PbnModel:
    """A probabilistic Boolean network; a BN when every gene has one predictor."""

    gene_names: Tuple[str, ...]
    predictors: Tuple[Tuple[Predictor, ...], ...]

    @property
    def n(self) -> int:
        """Number of genes."""
        return len(self.gene_names)

    @property
    def is_bn(self) -> bool:
        """Whether every gene admits a single predictor."""
        return all(len(functions) == 1 for functions in self.predictors)

    @property
    def state_count(self) -> int:
        """Size of the state space."""
        return 2**self.n

    def n_predictors(self, gene: int) -> int:
        """Number of predictors of a gene."""
        return len(self.predictors[gene])

    def selection_probabilities(self, gene: int) -> np.ndarray:
        """Selection probabilities of the predictors of a gene."""
        return np.array(
            [predictor.selection_probability for predictor in self.predictors[gene]]
        )

    def gene_index(self, name: str) -> int:
        """Index of a gene by name."""
        return self.gene_names.index(name)


@dataclass(frozen=True)
class ValidationIssue:
    """One violation found by `validate`."""

    message: str
    gene: Optional[int] = None
    predictor: Optional[int] = None

    def __str__(self) -> str:
        """Human readable form."""
        where = []
        if self.gene is not None:
            where.append(f"gene {self.gene}")
        if self.predictor is not None:
            where.append(f"predictor {self.predictor}")
        prefix = f"{', '.join(where)}: " if where else ""
        return f"{prefix}{self.message}"


def validate(model: PbnModel) -> List[ValidationIssue]:
    """
    Check the structural invariants of a model.

    :param model: the model.
    :return: one issue per violation; empty when the model is valid.
    """
    issues: List[ValidationIssue] = []
    if model.n == 0:
        issues.append(ValidationIssue("model declares no genes"))
    if len(set(model.gene_names)) != model.n:
        issues.append(ValidationIssue("duplicate gene names"))
    if len(model.predictors) != model.n:
        issues.append(
            ValidationIssue(
                f"{len(model.predictors)} predictor lists for {model.n} genes"
            )
        )
    for gene, functions in enumerate(model.predictors):
        if not functions:
            issues.append(ValidationIssue("gene has no predictors", gene))
            continue
        for position, predictor in enumerate(functions):
            if not predictor.selection_probability > 0:
                issues.append(
                    ValidationIssue(
                        f"non-positive probability {predictor.selection_probability}",
                        gene,
                        position,
                    )
                )
            elif predictor.selection_probability > 1 + PROBABILITY_TOLERANCE:
                issues.append(
                    ValidationIssue(
                        f"probability {predictor.selection_probability} exceeds 1",
                        gene,
                        position,
                    )
                )
            out_of_range = sorted(
                index
                for index in predictor.expr.variables()
                if not 0 <= index < model.n
            )
            if out_of_range:
                issues.append(
                    ValidationIssue(
                        f"variable out of range: {out_of_range}", gene, position
                    )
                )
        total = sum(predictor.selection_probability for predictor in functions)
        if abs(total - 1.0) > PROBABILITY_TOLERANCE:
            issues.append(
                ValidationIssue(f"selection probabilities sum to {total}, not 1", gene)
            )
    return issues


def _strip_comment(line: str) -> str:
    return line.split(COMMENT_CHAR, 1)[0].strip()


def loads_model(text: str) -> PbnModel:
    """
    Parse a model from its text form and validate it.

    :param text: the model file contents.
    :return: the model.
    """
    gene_names: Optional[Tuple[str, ...]] = None
    functions: List[List[Predictor]] = []
    for number, raw_line in enumerate(text.splitlines(), start=1):
        line = _strip_comment(raw_line)
        if not line:
            continue
        head, separator, rest = line.partition(":")
        if not separator:
            raise ModelFormatError(f"expected '<gene>: ...', got {line!r}", number)
        head = head.strip()
        if gene_names is None:
            if head != GENES_HEADER:
                raise ModelFormatError(
                    f"the first line must be the '{GENES_HEADER}:' header", number
                )
            gene_names = tuple(name.strip() for name in rest.split(",") if name.strip())
            functions = [[] for _ in gene_names]
            continue
        if head not in gene_names:
            raise ModelFormatError(f"unknown gene {head!r}", number)
        probability = 1.0
        expr_text = rest
        if PROBABILITY_SEPARATOR in rest:
            probability_text, _, expr_text = rest.partition(PROBABILITY_SEPARATOR)
            try:
                probability = float(probability_text)
            except ValueError as e:
                raise ModelFormatError(
                    f"bad probability {probability_text.strip()!r}", number
                ) from e
        try:
            expr = parse_expression(expr_text.strip(), gene_names)
        except ExpressionError as e:
            raise ModelFormatError(str(e), number) from e
        functions[gene_names.index(head)].append(Predictor(expr, probability))
    if gene_names is None:
        raise ModelFormatError(f"missing '{GENES_HEADER}:' header")
    model = PbnModel(gene_names, tuple(tuple(function) for function in functions))
    issues = validate(model)
    if issues:
        raise ModelValidationError(issues)
    return model


def dumps_model(model: PbnModel) -> str:
    """Render a model in the text file format."""
    lines = [f"{GENES_HEADER}: {','.join(model.gene_names)}"]
    bn = model.is_bn
    for gene, functions in enumerate(model.predictors):
        name = model.gene_names[gene]
        for predictor in functions:
            expr_text = predictor.expr.render(model.gene_names)
            if bn:
                lines.append(f"{name}: {expr_text}")
            else:
                lines.append(
                    f"{name}: {predictor.selection_probability!r} "
                    f"{PROBABILITY_SEPARATOR} {expr_text}"
                )
    return "\n".join(lines) + "\n"


def load_model(path: Union[str, Path]) -> PbnModel:
    """Load and validate a model file."""
    model = loads_model(Path(path).read_text(encoding="utf-8"))
    kind = "BN" if model.is_bn else "PBN"
    _logger.debug(f"Loaded {kind} of {model.n} genes from {path}")
    return model


def save_model(model: PbnModel, path: Union[str, Path]) -> None:
    """Write a model file."""
    Path(path).write_text(dumps_model(model), encoding="utf-8")


def example_model() -> PbnModel:
    """Return the running 4-gene example PBN shipped with the skill."""
    text = (
        resources.files("packages.valory.skills.attractor_control")
        .joinpath("data", EXAMPLE_MODEL_FILENAME)
        .read_text(encoding="utf-8")
    )
    return loads_model(text)


def _random_expression(parents: Sequence[int], rng: np.random.Generator) -> BooleanExpr:
    nodes: List[BooleanExpr] = []
    for parent in parents:
        literal: BooleanExpr = Variable(int(parent))
        if rng.random() < 0.5:
            literal = Not(literal)
        nodes.append(literal)
    rng.shuffle(nodes)  # type: ignore
    while len(nodes) > 1:
        position = int(rng.integers(len(nodes) - 1))
        operator = And if rng.random() < 0.5 else Or
        nodes[position : position + 2] = [
            operator((nodes[position], nodes[position + 1]))
        ]
    return nodes[0]


def random_model(
    n: int, max_parents: int, predictors_per_gene: int, seed: int
) -> PbnModel:
    """
    Generate a random model for testing.

    :param n: number of genes.
    :param max_parents: maximum number of parents per predictor.
    :param predictors_per_gene: predictors per gene; 1 gives a BN.
    :param seed: the seed; equal seeds give equal models.
    :return: the model, with uniform selection probabilities.
    """
    if n < 1 or not 1 <= max_parents <= n or predictors_per_gene < 1:
        raise ValueError(
            f"invalid generator arguments n={n}, max_parents={max_parents}, "
            f"predictors_per_gene={predictors_per_gene}"
        )
    rng = np.random.default_rng(seed)
    probability = 1.0 / predictors_per_gene
    functions = []
    for _ in range(n):
        gene_functions = []
        for _ in range(predictors_per_gene):
            size = int(rng.integers(1, max_parents + 1))
            parents = sorted(int(p) for p in rng.choice(n, size=size, replace=False))
            gene_functions.append(
                Predictor(_random_expression(parents, rng), probability)
            )
        functions.append(tuple(gene_functions))
    return PbnModel(tuple(f"x{i}" for i in range(n)), tuple(functions))
