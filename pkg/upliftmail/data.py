# SPDX-License-Identifier: GPL-3.0-or-later
"""
Schema, record table and CSV plumbing for randomized-experiment data.

Every variable is categorical. Predictor values are stored as indices into
their ``VariableSpec.values``; the treatment ``M`` and the outcome ``S`` are
stored as 0/1 where 0 is m0/s0 and 1 is m1/s1.
"""

from __future__ import annotations

import csv
import hashlib
import io
import json
import logging
import math
from collections.abc import Iterator, Sequence
from dataclasses import dataclass
from typing import Any, BinaryIO, TextIO

import numpy as np

from .errors import DatasetError, SchemaError

log = logging.getLogger(__name__)

M0 = 0
M1 = 1
S0 = 0
S1 = 1


# ---------------------------------------------------------------------------
# Schema
# ---------------------------------------------------------------------------

@dataclass(frozen=True)
class VariableSpec:
    """A categorical variable and its ordered value labels.

    Args:
        name: Column name.
        values: Value labels; position is the value index.
    """

    name: str
    values: tuple[str, ...]

    def __post_init__(self) -> None:
        if not isinstance(self.name, str) or not self.name:
            raise SchemaError("variable name must be a non-empty string")
        object.__setattr__(self, "values", tuple(self.values))
        if any(not isinstance(v, str) for v in self.values):
            raise SchemaError(f"variable {self.name!r}: value labels must be strings")
        if len(self.values) < 2:
            raise SchemaError(f"variable {self.name!r} needs at least 2 values")
        if len(set(self.values)) != len(self.values):
            raise SchemaError(f"variable {self.name!r} has duplicate value labels")

    @property
    def arity(self) -> int:
        return len(self.values)

    def index_of(self, label: str) -> int:
        """Return the value index for *label*.

        Raises:
            SchemaError: If the label is not one of the variable's values.
        """
        try:
            return self.values.index(label)
        except ValueError:
            raise SchemaError(f"unknown value {label!r} for variable {self.name!r}") from None

    def to_dict(self) -> dict[str, Any]:
        return {"name": self.name, "values": list(self.values)}


@dataclass(frozen=True)
class Schema:
    """Predictors plus the designated binary treatment and outcome.

    Split rules address variables by index: ``0..n_predictors-1`` are the
    predictors and ``treatment_index`` (== ``n_predictors``) is ``M``.
    """

    predictors: tuple[VariableSpec, ...]
    treatment: VariableSpec
    outcome: VariableSpec

    def __post_init__(self) -> None:
        object.__setattr__(self, "predictors", tuple(self.predictors))
        if self.treatment.arity != 2:
            raise SchemaError("treatment variable must be binary")
        if self.outcome.arity != 2:
            raise SchemaError("outcome variable must be binary")
        names = [v.name for v in self.predictors] + [self.treatment.name, self.outcome.name]
        if len(set(names)) != len(names):
            raise SchemaError("predictor, treatment and outcome names must be distinct")

    @property
    def n_predictors(self) -> int:
        return len(self.predictors)

    @property
    def treatment_index(self) -> int:
        return len(self.predictors)

    def variable(self, index: int) -> VariableSpec:
        """Return the predictor at *index*, or ``M`` for ``treatment_index``."""
        if index == self.treatment_index:
            return self.treatment
        if 0 <= index < len(self.predictors):
            return self.predictors[index]
        raise SchemaError(f"variable index {index} outside schema")

    def variable_index(self, name: str) -> int:
        """Return the split-rule index of a predictor or of ``M``."""
        if name == self.treatment.name:
            return self.treatment_index
        for index, spec in enumerate(self.predictors):
            if spec.name == name:
                return index
        raise SchemaError(f"unknown variable {name!r}")

    def space_size(self) -> int:
        """Number of distinct predictor assignments."""
        return math.prod(v.arity for v in self.predictors)

    def to_dict(self) -> dict[str, Any]:
        return {
            "predictors": [v.to_dict() for v in self.predictors],
            "treatment": self.treatment.to_dict(),
            "outcome": self.outcome.to_dict(),
        }

    @classmethod
    def from_dict(cls, raw: Any) -> Schema:
        """Rebuild a schema from :meth:`to_dict` output.

        Raises:
            SchemaError: If the mapping does not describe a valid schema.
        """
        try:
            return cls(
                predictors=tuple(VariableSpec(p["name"], tuple(p["values"])) for p in raw["predictors"]),
                treatment=VariableSpec(raw["treatment"]["name"], tuple(raw["treatment"]["values"])),
                outcome=VariableSpec(raw["outcome"]["name"], tuple(raw["outcome"]["values"])),
            )
        except (KeyError, TypeError) as exc:
            raise SchemaError(f"malformed schema description: {exc}") from exc

    def fingerprint(self) -> str:
        """SHA-256 over the canonical JSON form of the schema."""
        canonical = json.dumps(self.to_dict(), sort_keys=True, separators=(",", ":"))
        return hashlib.sha256(canonical.encode("utf-8")).hexdigest()


@dataclass(frozen=True)
class SchemaConfig:
    """Which CSV columns hold ``M`` and ``S`` and how their labels map.

    Args:
        treatment_column: Column holding the mailing indicator.
        treatment_labels: ``(label for m0, label for m1)``.
        outcome_column: Column holding the subscription outcome.
        outcome_labels: ``(label for s0, label for s1)``.
    """

    treatment_column: str = "M"
    treatment_labels: tuple[str, str] = ("0", "1")
    outcome_column: str = "S"
    outcome_labels: tuple[str, str] = ("0", "1")

    def __post_init__(self) -> None:
        object.__setattr__(self, "treatment_labels", tuple(self.treatment_labels))
        object.__setattr__(self, "outcome_labels", tuple(self.outcome_labels))
        if not self.treatment_column or not self.outcome_column:
            raise SchemaError("treatment and outcome column names must be non-empty")
        if self.treatment_column == self.outcome_column:
            raise SchemaError("treatment and outcome must be different columns")
        for role, labels in (("treatment", self.treatment_labels), ("outcome", self.outcome_labels)):
            if len(labels) != 2 or len(set(labels)) != 2:
                raise SchemaError(f"{role} mapping must name exactly 2 distinct values")

    def treatment_spec(self) -> VariableSpec:
        return VariableSpec(self.treatment_column, self.treatment_labels)

    def outcome_spec(self) -> VariableSpec:
        return VariableSpec(self.outcome_column, self.outcome_labels)


# ---------------------------------------------------------------------------
# Records
# ---------------------------------------------------------------------------

@dataclass(frozen=True)
class Record:
    """One person: predictor value indices, mailing and outcome."""

    predictors: tuple[int, ...]
    treatment: int
    outcome: int


class Dataset:
    """Immutable record table conforming to a :class:`Schema`.

    The arrays handed out by the properties are read-only views.
    """

    __slots__ = ("_schema", "_predictors", "_treatment", "_outcome")

    def __init__(
        self,
        schema: Schema,
        predictors: Any,
        treatment: Any,
        outcome: Any,
    ) -> None:
        m = np.array(treatment, dtype=np.int8).reshape(-1)
        s = np.array(outcome, dtype=np.int8).reshape(-1)
        if m.shape != s.shape:
            raise SchemaError("treatment and outcome columns differ in length")
        x = np.array(predictors, dtype=np.int64)
        if x.size == 0:
            x = x.reshape(len(m), schema.n_predictors)
        if x.ndim != 2 or x.shape != (len(m), schema.n_predictors):
            raise SchemaError(
                f"predictor table must have shape ({len(m)}, {schema.n_predictors}), got {x.shape}"
            )
        for j, spec in enumerate(schema.predictors):
            column = x[:, j]
            if column.size and (column.min() < 0 or column.max() >= spec.arity):
                raise SchemaError(f"predictor {spec.name!r} has a value index outside its arity")
        if m.size and not np.isin(m, (M0, M1)).all():
            raise SchemaError("treatment indices must be 0 (m0) or 1 (m1)")
        if s.size and not np.isin(s, (S0, S1)).all():
            raise SchemaError("outcome indices must be 0 (s0) or 1 (s1)")
        for array in (x, m, s):
            array.setflags(write=False)
        self._schema = schema
        self._predictors = x
        self._treatment = m
        self._outcome = s

    @property
    def schema(self) -> Schema:
        return self._schema

    @property
    def predictors(self) -> np.ndarray:
        return self._predictors

    @property
    def treatment(self) -> np.ndarray:
        return self._treatment

    @property
    def outcome(self) -> np.ndarray:
        return self._outcome

    def __len__(self) -> int:
        return int(self._treatment.shape[0])

    def __repr__(self) -> str:
        return (
            f"Dataset(records={len(self)}, predictors={self._schema.n_predictors}, "
            f"mailed={int(self._treatment.sum())})"
        )

    def record(self, index: int) -> Record:
        return Record(
            predictors=tuple(int(v) for v in self._predictors[index]),
            treatment=int(self._treatment[index]),
            outcome=int(self._outcome[index]),
        )

    def records(self) -> Iterator[Record]:
        for index in range(len(self)):
            yield self.record(index)

    def subset(self, indices: Sequence[int] | np.ndarray) -> Dataset:
        """Return the records at *indices*, in the given order."""
        idx = np.asarray(indices, dtype=np.int64)
        return Dataset(self._schema, self._predictors[idx], self._treatment[idx], self._outcome[idx])


# ---------------------------------------------------------------------------
# CSV
# ---------------------------------------------------------------------------

def _data_lines(text: str) -> Iterator[str]:
    """Yield CSV lines, dropping leading ``#`` provenance comments."""
    in_preamble = True
    for line in io.StringIO(text, newline=""):
        if in_preamble and (not line.strip() or line.lstrip().startswith("#")):
            continue
        in_preamble = False
        yield line


def load_csv(
    source: BinaryIO,
    schema_config: SchemaConfig,
    schema: Schema | None = None,
) -> Dataset:
    """Read a header-first UTF-8 CSV into a :class:`Dataset`.

    Without *schema*, predictor value sets are the distinct labels observed
    in each non-designated column, sorted lexicographically. With *schema*,
    the file is conformed to it: its predictor columns must be present,
    labels must be known, and extra columns are ignored.

    Args:
        source: Binary stream positioned at the start of the CSV.
        schema_config: Treatment/outcome column names and label maps.
        schema: Optional schema to conform to.

    Returns:
        Dataset in file row order.

    Raises:
        SchemaError: Missing designated column, unmapped or unknown label,
            ragged row, or undecodable input.
    """
    raw = source.read()
    try:
        text = raw.decode("utf-8-sig") if isinstance(raw, bytes) else str(raw)
    except UnicodeDecodeError as exc:
        raise SchemaError(f"CSV is not valid UTF-8: {exc}") from exc

    reader = csv.reader(_data_lines(text))
    header = next(reader, None)
    if header is None:
        raise SchemaError("CSV has no header row")
    header = [name.strip() for name in header]
    if len(set(header)) != len(header):
        raise SchemaError("CSV header repeats a column name")
    if schema_config.treatment_column not in header:
        raise SchemaError(f"treatment column not found: {schema_config.treatment_column!r}")
    if schema_config.outcome_column not in header:
        raise SchemaError(f"outcome column not found: {schema_config.outcome_column!r}")
    m_col = header.index(schema_config.treatment_column)
    s_col = header.index(schema_config.outcome_column)
    m_map = {label: i for i, label in enumerate(schema_config.treatment_labels)}
    s_map = {label: i for i, label in enumerate(schema_config.outcome_labels)}

    if schema is not None:
        if schema.treatment != schema_config.treatment_spec() or schema.outcome != schema_config.outcome_spec():
            raise SchemaError("schema and schema config disagree on the treatment or outcome variable")
        predictor_names = [spec.name for spec in schema.predictors]
        for name in predictor_names:
            if name not in header:
                raise SchemaError(f"predictor column not found: {name!r}")
    else:
        predictor_names = [name for name in header if name not in (header[m_col], header[s_col])]
    p_cols = [header.index(name) for name in predictor_names]

    labels: list[list[str]] = [[] for _ in p_cols]
    m_values: list[int] = []
    s_values: list[int] = []
    for row in reader:
        if not row:
            continue
        if len(row) != len(header):
            raise SchemaError(
                f"ragged row at line {reader.line_num}: expected {len(header)} fields, found {len(row)}"
            )
        m_label = row[m_col].strip()
        s_label = row[s_col].strip()
        if m_label not in m_map:
            raise SchemaError(f"unmapped treatment value {m_label!r} at line {reader.line_num}")
        if s_label not in s_map:
            raise SchemaError(f"unmapped outcome value {s_label!r} at line {reader.line_num}")
        m_values.append(m_map[m_label])
        s_values.append(s_map[s_label])
        for slot, col in enumerate(p_cols):
            labels[slot].append(row[col].strip())

    if len(set(m_values)) == 1:
        log.warning("Only one treatment value observed in CSV (%s)", schema_config.treatment_labels[m_values[0]])

    if schema is None:
        specs: list[VariableSpec] = []
        kept: list[list[str]] = []
        for name, column in zip(predictor_names, labels):
            observed = sorted(set(column))
            if len(observed) < 2:
                log.warning("Dropping predictor %r: fewer than 2 distinct values observed", name)
                continue
            specs.append(VariableSpec(name, tuple(observed)))
            kept.append(column)
        schema = Schema(tuple(specs), schema_config.treatment_spec(), schema_config.outcome_spec())
        labels = kept

    table = np.empty((len(m_values), schema.n_predictors), dtype=np.int64)
    for j, (spec, column) in enumerate(zip(schema.predictors, labels)):
        lookup = {label: i for i, label in enumerate(spec.values)}
        for i, label in enumerate(column):
            try:
                table[i, j] = lookup[label]
            except KeyError:
                raise SchemaError(f"unknown value {label!r} for predictor {spec.name!r}") from None

    log.debug("Loaded %d records with %d predictors", len(m_values), schema.n_predictors)
    return Dataset(schema, table, m_values, s_values)


def write_csv(dataset: Dataset, sink: TextIO, fingerprint: str | None = None) -> None:
    """Write *dataset* in the layout :func:`load_csv` reads.

    Args:
        dataset: Records to write.
        sink: Text stream; rows end with ``\\n``.
        fingerprint: Optional config fingerprint for the provenance comment.
    """
    schema = dataset.schema
    if fingerprint:
        sink.write(f"# config_fingerprint={fingerprint}\n")
    writer = csv.writer(sink, lineterminator="\n")
    writer.writerow([v.name for v in schema.predictors] + [schema.treatment.name, schema.outcome.name])
    m_labels = schema.treatment.values
    s_labels = schema.outcome.values
    value_labels = [spec.values for spec in schema.predictors]
    for x, m, s in zip(dataset.predictors.tolist(), dataset.treatment.tolist(), dataset.outcome.tolist()):
        writer.writerow([value_labels[j][v] for j, v in enumerate(x)] + [m_labels[m], s_labels[s]])


# ---------------------------------------------------------------------------
# Train/test partition
# ---------------------------------------------------------------------------

def split_train_test(dataset: Dataset, train_fraction: float, seed: int) -> tuple[Dataset, Dataset]:
    """Randomly partition records into training and held-out sets.

    The training set has ``round(train_fraction * N)`` records (half rounds
    up). Both parts keep the original relative record order.

    Raises:
        DatasetError: Empty dataset, fraction outside (0, 1), or negative seed.
    """
    if not 0.0 < train_fraction < 1.0:
        raise DatasetError("train_fraction must lie strictly between 0 and 1")
    if seed < 0:
        raise DatasetError("seed must be a non-negative integer")
    n = len(dataset)
    if n == 0:
        raise DatasetError("cannot split an empty dataset")
    n_train = int(math.floor(train_fraction * n + 0.5))
    order = np.random.default_rng(seed).permutation(n)
    train_idx = np.sort(order[:n_train])
    test_idx = np.sort(order[n_train:])
    log.debug("Split %d records into %d train / %d test", n, len(train_idx), len(test_idx))
    return dataset.subset(train_idx), dataset.subset(test_idx)
