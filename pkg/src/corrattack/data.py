"""Time-series containers, UCR text I/O, z-normalization and synthetic data."""

from dataclasses import dataclass, field
from pathlib import Path
from typing import Optional

import numpy as np

from .errors import (
    ConfigError,
    DegenerateSeriesError,
    EmptyInputError,
    FormatError,
    ParseError,
    ShapeError,
)
from .seeding import rng_for


def _frozen(values):
    arr = np.array(values, dtype=np.float64)
    if arr.ndim != 1:
        raise ShapeError(f"series must be one-dimensional, got shape {arr.shape}")
    if not np.all(np.isfinite(arr)):
        raise ParseError("series contains non-finite values")
    arr.setflags(write=False)
    return arr


@dataclass(frozen=True, eq=False)
class TimeSeries:
    values: np.ndarray
    label: Optional[int] = None

    def __post_init__(self):
        object.__setattr__(self, "values", _frozen(self.values))
        if self.label is not None:
            if int(self.label) != self.label or self.label < 0:
                raise ConfigError(f"label must be a non-negative integer, got {self.label!r}")
            object.__setattr__(self, "label", int(self.label))

    def __len__(self):
        return len(self.values)

    def __eq__(self, other):
        if not isinstance(other, TimeSeries):
            return NotImplemented
        return self.label == other.label and np.array_equal(self.values, other.values)

    def with_values(self, values):
        return TimeSeries(values, self.label)


@dataclass(frozen=True)
class UCRSplit:
    """One parsed UCR file: series with dense labels plus the label mapping."""

    series: list
    label_map: dict  # original label -> dense index


@dataclass(frozen=True)
class LabeledDataset:
    train: list
    test: list
    num_classes: int
    series_length: int
    label_map: dict = field(default_factory=dict)
    name: str = "dataset"

    def __post_init__(self):
        if self.num_classes < 2:
            raise ConfigError("num_classes must be >= 2")
        if self.series_length < 2:
            raise ConfigError("series_length must be >= 2")
        if not self.train or not self.test:
            raise EmptyInputError("train and test splits must be non-empty")
        for split, items in (("train", self.train), ("test", self.test)):
            for i, ts in enumerate(items):
                if len(ts) != self.series_length:
                    raise ShapeError(
                        f"{split}[{i}] has length {len(ts)}, expected {self.series_length}"
                    )
                if ts.label is None or not 0 <= ts.label < self.num_classes:
                    raise ConfigError(f"{split}[{i}] label {ts.label!r} outside [0, {self.num_classes})")

    def arrays(self, split="train"):
        """Stack a split into ``(X, y)`` arrays."""
        items = self.train if split == "train" else self.test
        X = np.stack([ts.values for ts in items])
        y = np.array([ts.label for ts in items], dtype=np.int64)
        return X, y


def _detect_delimiter(line):
    if "\t" in line:
        return "\t"
    if "," in line:
        return ","
    return None  # any whitespace


def _parse_label(field_text, row):
    try:
        value = float(field_text)
    except ValueError:
        raise ParseError(f"row {row}, column 0: label {field_text!r} is not numeric") from None
    if not np.isfinite(value) or value != int(value):
        raise ParseError(f"row {row}, column 0: label {field_text!r} is not an integer")
    return int(value)


def read_ucr_rows(path):
    """Parse a UCR text file into ``(labels, rows)`` without remapping."""
    path = Path(path)
    lines = [ln for ln in path.read_text().splitlines() if ln.strip()]
    if not lines:
        raise EmptyInputError(f"{path}: file is empty")
    delim = _detect_delimiter(lines[0])
    labels, rows = [], []
    width = None
    for r, line in enumerate(lines):
        fields = line.strip().split(delim)
        if len(fields) < 3:
            raise FormatError(f"{path}: row {r} has {len(fields) - 1} values, need at least 2")
        if width is None:
            width = len(fields)
        elif len(fields) != width:
            raise FormatError(
                f"{path}: row {r} has {len(fields) - 1} values, expected {width - 1} (ragged rows)"
            )
        labels.append(_parse_label(fields[0], r))
        values = []
        for c, text in enumerate(fields[1:], start=1):
            try:
                v = float(text)
            except ValueError:
                raise ParseError(f"{path}: row {r}, column {c}: {text!r} is not numeric") from None
            if not np.isfinite(v):
                raise ParseError(f"{path}: row {r}, column {c}: non-finite value {text!r}")
            values.append(v)
        rows.append(values)
    return labels, rows


def dense_label_map(labels):
    return {lab: i for i, lab in enumerate(sorted(set(labels)))}


def load_ucr(path, label_map=None):
    """Load one UCR-format file.

    Labels are remapped to dense 0-based indices in sorted order of the
    observed labels, unless an explicit ``label_map`` is given (used to keep
    train and test files consistent). Values are returned untouched.
    """
    labels, rows = read_ucr_rows(path)
    if label_map is None:
        label_map = dense_label_map(labels)
    missing = sorted(set(labels) - set(label_map))
    if missing:
        raise FormatError(f"{path}: labels {missing} not present in the label map")
    series = [TimeSeries(v, label_map[lab]) for lab, v in zip(labels, rows)]
    return UCRSplit(series, dict(label_map))


def load_ucr_dataset(train_path, test_path, name=None):
    train_labels, _ = read_ucr_rows(train_path)
    test_labels, _ = read_ucr_rows(test_path)
    label_map = dense_label_map(train_labels + test_labels)
    train = load_ucr(train_path, label_map)
    test = load_ucr(test_path, label_map)
    length = len(train.series[0])
    if len(test.series[0]) != length:
        raise FormatError(f"train length {length} differs from test length {len(test.series[0])}")
    return LabeledDataset(
        train=train.series,
        test=test.series,
        num_classes=len(label_map),
        series_length=length,
        label_map=label_map,
        name=name or Path(train_path).stem,
    )


def format_float(v):
    """Shortest decimal text that round-trips ``v`` exactly."""
    return repr(float(v))


def save_ucr(path, series, label_map=None, delimiter="\t"):
    """Write series in UCR format; ``label_map`` (original -> dense) is inverted on output."""
    inverse = {v: k for k, v in (label_map or {}).items()}
    lines = []
    for ts in series:
        label = inverse.get(ts.label, ts.label)
        lines.append(delimiter.join([str(label)] + [format_float(v) for v in ts.values]))
    Path(path).write_text("\n".join(lines) + "\n")


def z_normalize(x):
    """Shift to zero mean and scale to unit population (1/N) standard deviation."""
    values = x.values if isinstance(x, TimeSeries) else np.asarray(x, dtype=np.float64)
    if len(values) < 2:
        raise ShapeError("z_normalize needs at least 2 values")
    centered = values - values.mean()
    std = np.sqrt(np.mean(centered**2))
    if std == 0.0 or std < 1e-300:
        raise DegenerateSeriesError("cannot z-normalize a constant series")
    out = centered / std
    # one refinement pass keeps |mean| and |std - 1| at rounding level
    out = out - out.mean()
    out = out / np.sqrt(np.mean(out**2))
    if isinstance(x, TimeSeries):
        return x.with_values(out)
    return out


def normalize_dataset(data):
    return LabeledDataset(
        train=[z_normalize(ts) for ts in data.train],
        test=[z_normalize(ts) for ts in data.test],
        num_classes=data.num_classes,
        series_length=data.series_length,
        label_map=data.label_map,
        name=data.name,
    )


@dataclass(frozen=True)
class SyntheticSpec:
    num_classes: int = 2
    series_length: int = 128
    train_per_class: int = 50
    test_per_class: int = 50
    noise: float = 0.5

    def validate(self):
        if self.num_classes < 2:
            raise ConfigError("synthetic num_classes must be >= 2")
        if self.series_length < 16:
            raise ConfigError("synthetic series_length must be >= 16")
        if self.train_per_class < 1 or self.test_per_class < 1:
            raise ConfigError("synthetic samples per class must be >= 1")
        if not np.isfinite(self.noise) or self.noise < 0:
            raise ConfigError("synthetic noise amplitude must be finite and >= 0")


def base_waveform(c, num_classes, n):
    """Class-``c`` template: a low-frequency sinusoid with its own frequency and phase."""
    t = np.arange(n, dtype=np.float64)
    cycles = 4 * (c + 1)
    phase = np.pi * c / num_classes
    return np.sin(2.0 * np.pi * cycles * t / n + phase)


def gen_synthetic(spec=SyntheticSpec(), seed=0):
    spec.validate()
    rng = rng_for(seed, "data")
    n = spec.series_length
    bases = [base_waveform(c, spec.num_classes, n) for c in range(spec.num_classes)]

    def draw(per_class):
        out = []
        for c in range(spec.num_classes):
            for _ in range(per_class):
                values = bases[c].copy()
                if spec.noise > 0:
                    values = values + spec.noise * rng.standard_normal(n)
                out.append(TimeSeries(values, c))
        return out

    train = draw(spec.train_per_class)
    test = draw(spec.test_per_class)
    return LabeledDataset(
        train=train,
        test=test,
        num_classes=spec.num_classes,
        series_length=n,
        name="synthetic",
    )
