# SPDX-License-Identifier: GPL-3.0-or-later
"""Exception hierarchy shared by every upliftmail module.

Each concrete error also derives from the closest builtin so callers that
only know about ``ValueError`` or ``RuntimeError`` keep working.
"""


class UpliftMailError(Exception):
    """Root of all domain errors; the CLI maps these to exit status 1."""


class SchemaError(UpliftMailError, ValueError):
    """Raised for an invalid schema, CSV layout, or value mapping."""


class DatasetError(UpliftMailError, ValueError):
    """Raised when a dataset violates an operation's precondition."""


class GeneratorConfigError(UpliftMailError, ValueError):
    """Raised when a synthetic population description is inconsistent."""


class TreeStructureError(UpliftMailError, ValueError):
    """Raised for malformed trees or a tree in the wrong form."""


class TreeFormatError(UpliftMailError, ValueError):
    """Raised when a serialized tree cannot be decoded."""


class SchemaMismatchError(UpliftMailError, ValueError):
    """Raised when a tree and a dataset disagree on their schema."""


class ScoringError(UpliftMailError, ValueError):
    """Raised when split counts are inconsistent with their parent."""


class LearnError(UpliftMailError, RuntimeError):
    """Raised when tree growth cannot start."""


class EvaluationError(UpliftMailError, RuntimeError):
    """Raised when an offline evaluation is undefined."""


class NoMatchedRecordsError(EvaluationError):
    """No test record's logged assignment agreed with the policy."""


class NoMailedRecordsError(EvaluationError):
    """The mail-to-all baseline needs at least one mailed record."""


class ConfigError(UpliftMailError, ValueError):
    """Raised for unreadable or invalid run configuration."""
