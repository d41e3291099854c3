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

"""This module contains the exceptions of the attractor control skill."""

from typing import Any, Optional, Sequence


class AttractorControlError(Exception):
    """Base exception of the skill."""


class ValidationFailure(AttractorControlError):
    """Something the user supplied is malformed. The CLI exits with code 2."""


class RuntimeFailure(AttractorControlError):
    """A computation could not complete. The CLI exits with code 3."""


class ExpressionError(ValidationFailure):
    """A Boolean expression could not be parsed."""

    def __init__(self, message: str, position: Optional[int] = None) -> None:
        """
        Initialize the error.

        :param message: the error message.
        :param position: 0-based offset of the offending character, if known.
        """
        if position is not None:
            message = f"{message} (at position {position})"
        super().__init__(message)
        self.position = position


class ModelFormatError(ValidationFailure):
    """A model file is not well formed."""

    def __init__(self, message: str, line: Optional[int] = None) -> None:
        """
        Initialize the error.

        :param message: the error message.
        :param line: 1-based line number, if known.
        """
        if line is not None:
            message = f"line {line}: {message}"
        super().__init__(message)
        self.line = line


class ModelValidationError(ValidationFailure):
    """A model violates one or more structural invariants."""

    def __init__(self, issues: Sequence[Any]) -> None:
        """
        Initialize the error.

        :param issues: the validation issues found.
        """
        self.issues = list(issues)
        summary = "; ".join(str(issue) for issue in self.issues)
        super().__init__(f"model validation failed: {summary}")


class ConfigurationError(ValidationFailure):
    """A configuration value is missing or has the wrong type."""


class InterventionError(ValidationFailure):
    """An intervention is malformed for the model at hand."""


class CheckpointError(ValidationFailure):
    """A checkpoint cannot be read or does not match the model."""


class StgLimitError(RuntimeFailure):
    """The exhaustive state transition graph would be too large."""


class StationaryDistributionError(RuntimeFailure):
    """Power iteration did not converge."""


class ControlError(RuntimeFailure):
    """The control environment was driven outside its contract."""


class TrainingError(RuntimeFailure):
    """Training produced a non-finite loss."""


class EvaluationError(RuntimeFailure):
    """The evaluation harness could not run."""
