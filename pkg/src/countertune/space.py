"""Tuning spaces, measured datasets, and their on-disk formats.

A tuning space is the post-constraint enumeration of parameter assignments:
whatever generated the space has already dropped invalid combinations, so
every stored configuration is runnable. A dataset pairs a space with the
measurements of an exhaustive benchmarking run on one GPU and one input,
which is what lets searches be replayed offline instead of re-executed.

File formats (CSV, UTF-8, '\n' endings, '.' decimal point):

  space file        line 1: `param:<name>` per column
                    line 2: `binary:<0|1>` per column
                    then one row of parameter values per configuration;
                    row order defines the configuration index.
  measurements file header `config_index,runtime_us,global_threads,<counter>...`
                    where counter columns are canonical abbreviations or raw
                    per-generation names resolved through the arch profile.
  arch file         `key = value` text, see counters.load_arch.

Floats are written with repr so a load/save cycle is byte-stable.
"""

import csv
import os
from dataclasses import dataclass, field
from typing import Dict, FrozenSet, List, Optional, Tuple

from . import counters
from .counters import ArchProfile
from .errors import DatasetFormatError, UnknownCounterError

SPACE_FILENAME = "space.csv"
MEASUREMENTS_FILENAME = "measurements.csv"
ARCH_FILENAME = "arch.txt"


@dataclass(frozen=True)
class TuningParameter:
    """One tuning parameter and its admissible values (ascending).

    is_binary holds exactly when the domain is the two values {0, 1}; only
    such parameters split the space into the subspaces used by the
    per-subspace regression models.
    """

    name: str
    values: Tuple[float, ...]
    is_binary: bool

    def __post_init__(self):
        if not self.values:
            raise ValueError(f"parameter {self.name!r} has no values")
        if list(self.values) != sorted(set(self.values)):
            raise ValueError(f"parameter {self.name!r} values must be distinct and ascending")
        binary = set(self.values) == {0.0, 1.0}
        if self.is_binary != binary:
            raise ValueError(
                f"parameter {self.name!r}: is_binary={self.is_binary} inconsistent with "
                f"values {list(self.values)} (binary means exactly {{0, 1}})")

    @classmethod
    def make(cls, name: str, values) -> "TuningParameter":
        vals = tuple(sorted(set(float(v) for v in values)))
        return cls(name=name, values=vals, is_binary=vals == (0.0, 1.0))


@dataclass(frozen=True)
class TuningConfiguration:
    """One full assignment of values to parameters, in declared order."""

    assignment: Tuple[float, ...]
    index: int


@dataclass(frozen=True)
class TuningSpace:
    """All valid configurations of a kernel, indexed 0..N-1."""

    parameters: Tuple[TuningParameter, ...]
    configurations: Tuple[TuningConfiguration, ...]

    def __post_init__(self):
        seen = set()
        nparams = len(self.parameters)
        for pos, conf in enumerate(self.configurations):
            if conf.index != pos:
                raise ValueError(f"configuration at position {pos} carries index {conf.index}")
            if len(conf.assignment) != nparams:
                raise ValueError(f"configuration {pos} has {len(conf.assignment)} values, "
                                 f"expected {nparams}")
            if conf.assignment in seen:
                raise ValueError(f"configuration {pos} duplicates an earlier assignment")
            seen.add(conf.assignment)
            for param, value in zip(self.parameters, conf.assignment):
                if value not in param.values:
                    raise ValueError(f"configuration {pos}: value {value!r} is outside the "
                                     f"domain of parameter {param.name!r}")

    def __len__(self):
        return len(self.configurations)

    @property
    def parameter_names(self) -> Tuple[str, ...]:
        return tuple(p.name for p in self.parameters)


@dataclass(frozen=True)
class MeasurementRecord:
    """One benchmarked configuration: runtime plus canonical counters."""

    config_index: int
    runtime_us: float
    global_threads: int
    counters: Dict[str, float]

    def __post_init__(self):
        if not self.runtime_us > 0:
            raise ValueError(f"config {self.config_index}: runtime_us must be > 0, "
                             f"got {self.runtime_us!r}")
        if self.global_threads < 1:
            raise ValueError(f"config {self.config_index}: global_threads must be >= 1")
        for abbr, value in self.counters.items():
            lo, hi = counters.VALUE_RANGES.get(abbr, (0.0, None))
            if not value >= lo or (hi is not None and value > hi):
                bound = f"<{lo}, {hi}>" if hi is not None else f">= {lo}"
                raise ValueError(f"config {self.config_index}: counter {abbr} value "
                                 f"{value!r} outside {bound}")


@dataclass
class Dataset:
    """A tuning space exhaustively measured on one GPU for one input."""

    space: TuningSpace
    arch: ArchProfile
    input_label: str
    records: Tuple[MeasurementRecord, ...]

    def __post_init__(self):
        if not self.records:
            raise ValueError("dataset has no records")
        n = len(self.space)
        seen = set()
        keys = None
        for rec in self.records:
            if not 0 <= rec.config_index < n:
                raise ValueError(f"record references configuration {rec.config_index}, "
                                 f"space has {n}")
            if rec.config_index in seen:
                raise ValueError(f"duplicate measurement for configuration {rec.config_index}")
            seen.add(rec.config_index)
            if keys is None:
                keys = set(rec.counters)
            elif set(rec.counters) != keys:
                raise ValueError(f"record {rec.config_index} has a different counter set "
                                 f"than the first record")

    @property
    def best_runtime(self) -> float:
        # Always derived from the records; files carry no best-runtime field.
        return min(r.runtime_us for r in self.records)

    @property
    def counter_names(self) -> Tuple[str, ...]:
        """Counters present in this dataset, canonical catalog order."""
        present = set(self.records[0].counters)
        return tuple(a for a in counters.ABBREVIATIONS if a in present)

    def record_for(self, config_index: int) -> MeasurementRecord:
        by_index = getattr(self, "_by_index", None)
        if by_index is None:
            by_index = {r.config_index: r for r in self.records}
            self._by_index = by_index
        return by_index[config_index]


def well_performing_set(dataset: Dataset, slack: float = 1.1) -> FrozenSet[int]:
    """Configurations whose runtime is within slack * best_runtime.

    slack 1.1 is the conventional cut for calling a configuration well
    performing. Monotone: a larger slack never shrinks the set.
    """
    if slack < 1.0:
        raise ValueError(f"slack must be >= 1.0, got {slack}")
    limit = slack * dataset.best_runtime
    return frozenset(r.config_index for r in dataset.records if r.runtime_us <= limit)


def binary_subspace_key(space: TuningSpace, config: TuningConfiguration) -> str:
    """Bitstring of the binary parameters' values, declared order.

    Configurations agreeing on every binary parameter share a key, so the
    keys partition the space; a space without binary parameters collapses
    to the single empty key.
    """
    bits = []
    for param, value in zip(space.parameters, config.assignment):
        if param.is_binary:
            bits.append("1" if value == 1.0 else "0")
    return "".join(bits)


def _fmt(value: float) -> str:
    return repr(float(value))


def load_space(path) -> TuningSpace:
    with open(path, "r", encoding="utf-8", newline="") as fh:
        reader = csv.reader(fh)
        try:
            header = next(reader)
        except StopIteration:
            raise DatasetFormatError(path, 1, "empty space file")
        names = []
        for col, cell in enumerate(header):
            if not cell.startswith("param:") or not cell[len("param:"):]:
                raise DatasetFormatError(path, 1, f"column {col + 1}: expected 'param:<name>', "
                                                  f"got {cell!r}")
            names.append(cell[len("param:"):])
        if len(set(names)) != len(names):
            raise DatasetFormatError(path, 1, "duplicate parameter name in header")
        try:
            flag_row = next(reader)
        except StopIteration:
            raise DatasetFormatError(path, 2, "missing binary flag row")
        if len(flag_row) != len(names):
            raise DatasetFormatError(path, 2, "flag row width differs from header")
        flags = []
        for col, cell in enumerate(flag_row):
            if cell not in ("binary:0", "binary:1"):
                raise DatasetFormatError(path, 2, f"column {col + 1}: expected 'binary:0' or "
                                                  f"'binary:1', got {cell!r}")
            flags.append(cell == "binary:1")

        rows: List[Tuple[float, ...]] = []
        observed: List[set] = [set() for _ in names]
        seen_rows = {}
        for lineno, row in enumerate(reader, start=3):
            if not row:
                continue
            if len(row) != len(names):
                raise DatasetFormatError(path, lineno, f"expected {len(names)} values, "
                                                       f"got {len(row)}")
            try:
                values = tuple(float(c) for c in row)
            except ValueError:
                raise DatasetFormatError(path, lineno, f"non-numeric parameter value in {row!r}")
            if values in seen_rows:
                raise DatasetFormatError(path, lineno, "duplicate configuration (first at line "
                                                       f"{seen_rows[values]})")
            seen_rows[values] = lineno
            for i, v in enumerate(values):
                if flags[i] and v not in (0.0, 1.0):
                    raise DatasetFormatError(path, lineno, f"parameter {names[i]!r} is binary "
                                                           f"but has value {row[i]!r}")
                observed[i].add(v)
            rows.append(values)
        if not rows:
            raise DatasetFormatError(path, 3, "space file has no configurations")

    params = []
    for i, name in enumerate(names):
        if flags[i]:
            values = (0.0, 1.0)
        else:
            values = tuple(sorted(observed[i]))
            if set(values) == {0.0, 1.0}:
                raise DatasetFormatError(path, 2, f"parameter {name!r} takes exactly the values "
                                                  f"0 and 1 and must be flagged binary:1")
        params.append(TuningParameter(name=name, values=values, is_binary=flags[i]))
    configs = tuple(TuningConfiguration(assignment=row, index=i) for i, row in enumerate(rows))
    return TuningSpace(parameters=tuple(params), configurations=configs)


def save_space(space: TuningSpace, path) -> None:
    lines = [
        ",".join(f"param:{p.name}" for p in space.parameters),
        ",".join(f"binary:{1 if p.is_binary else 0}" for p in space.parameters),
    ]
    for conf in space.configurations:
        lines.append(",".join(_fmt(v) for v in conf.assignment))
    with open(path, "w", encoding="utf-8", newline="\n") as fh:
        fh.write("\n".join(lines) + "\n")


def load_measurements(path, space: TuningSpace, arch: ArchProfile) -> Tuple[MeasurementRecord, ...]:
    with open(path, "r", encoding="utf-8", newline="") as fh:
        reader = csv.reader(fh)
        try:
            header = next(reader)
        except StopIteration:
            raise DatasetFormatError(path, 1, "empty measurements file")
        if header[:3] != ["config_index", "runtime_us", "global_threads"]:
            raise DatasetFormatError(path, 1, "header must start with "
                                              "'config_index,runtime_us,global_threads'")
        columns = []
        for cell in header[3:]:
            if cell == counters.GLOBAL_THREADS:
                raise DatasetFormatError(path, 1, "GLOBAL_THREADS is carried by the "
                                                  "global_threads column, not a counter column")
            try:
                abbr, _ = counters.canonicalize(cell, 0.0, arch)
            except KeyError:
                raise UnknownCounterError(path, 1, f"unknown counter column {cell!r} for "
                                                   f"arch {arch.name!r} ({arch.generation})")
            columns.append((cell, abbr))
        abbrs = [a for _, a in columns]
        if len(set(abbrs)) != len(abbrs):
            raise DatasetFormatError(path, 1, "two counter columns canonicalize to the same "
                                              "abbreviation")

        records = []
        seen = {}
        for lineno, row in enumerate(reader, start=2):
            if not row:
                continue
            if len(row) != 3 + len(columns):
                raise DatasetFormatError(path, lineno, f"expected {3 + len(columns)} cells, "
                                                       f"got {len(row)}")
            try:
                idx = int(row[0])
            except ValueError:
                raise DatasetFormatError(path, lineno, f"config_index must be an integer, "
                                                       f"got {row[0]!r}")
            if not 0 <= idx < len(space):
                raise DatasetFormatError(path, lineno, f"config_index {idx} outside the space "
                                                       f"(0..{len(space) - 1})")
            if idx in seen:
                raise DatasetFormatError(path, lineno, f"duplicate config_index {idx} "
                                                       f"(first at line {seen[idx]})")
            seen[idx] = lineno
            try:
                runtime = float(row[1])
                threads = int(row[2])
                raw_values = [float(c) for c in row[3:]]
            except ValueError:
                raise DatasetFormatError(path, lineno, f"non-numeric cell in {row!r}")
            cmap = {}
            for (raw_name, _), value in zip(columns, raw_values):
                abbr, canon = counters.canonicalize(raw_name, value, arch)
                cmap[abbr] = canon
            try:
                rec = MeasurementRecord(config_index=idx, runtime_us=runtime,
                                        global_threads=threads, counters=cmap)
            except ValueError as exc:
                raise DatasetFormatError(path, lineno, str(exc))
            records.append(rec)
        if not records:
            raise DatasetFormatError(path, 2, "no records")
    return tuple(records)


def save_measurements(records, counter_order, path) -> None:
    """Write records in canonical form: ascending index, catalog column order."""
    header = "config_index,runtime_us,global_threads," + ",".join(counter_order)
    lines = [header.rstrip(",")]
    for rec in sorted(records, key=lambda r: r.config_index):
        cells = [str(rec.config_index), _fmt(rec.runtime_us), str(rec.global_threads)]
        cells.extend(_fmt(rec.counters[a]) for a in counter_order)
        lines.append(",".join(cells))
    with open(path, "w", encoding="utf-8", newline="\n") as fh:
        fh.write("\n".join(lines) + "\n")


def load_dataset(space_path, measurements_path, arch_path,
                 input_label: Optional[str] = None) -> Dataset:
    """Load and cross-validate the three files that make up a dataset."""
    space = load_space(space_path)
    arch = counters.load_arch(arch_path)
    records = load_measurements(measurements_path, space, arch)
    if input_label is None:
        input_label = os.path.basename(os.path.dirname(os.path.abspath(measurements_path)))
    return Dataset(space=space, arch=arch, input_label=input_label, records=records)


def load_dataset_dir(directory, input_label: Optional[str] = None) -> Dataset:
    """Load a dataset directory holding space.csv, measurements.csv, arch.txt."""
    if input_label is None:
        input_label = os.path.basename(os.path.normpath(directory))
    return load_dataset(os.path.join(directory, SPACE_FILENAME),
                        os.path.join(directory, MEASUREMENTS_FILENAME),
                        os.path.join(directory, ARCH_FILENAME),
                        input_label=input_label)


def save_dataset(dataset: Dataset, directory) -> None:
    """Write the canonical three-file form; output is byte-stable under reload."""
    os.makedirs(directory, exist_ok=True)
    save_space(dataset.space, os.path.join(directory, SPACE_FILENAME))
    save_measurements(dataset.records, dataset.counter_names,
                      os.path.join(directory, MEASUREMENTS_FILENAME))
    counters.save_arch(dataset.arch, os.path.join(directory, ARCH_FILENAME))
