"""Dataset ingestion, cleaning, normalization, partitioning and splitting.

CSV files are read against a schema (JSON) that names every column, marks
features discrete or numeric, names the label column and its positive
value, and optionally lists identifier columns to drop.  Rows containing
the missing-value marker '?' are dropped and counted.  Numeric features
are min-max normalized into [0, 1]; discrete features are ordinal-mapped
into [0, 1] for the margin/sigmoid trainers and kept categorical for the
count-based trainer.
"""

import csv
import json
from dataclasses import dataclass, field

MISSING = "?"


class DataError(Exception):
    pass


@dataclass(frozen=True)
class FeatureSpec:
    name: str
    kind: str                  # "numeric" | "discrete"
    vocabulary: tuple = ()     # discrete only


@dataclass(frozen=True)
class DatasetSchema:
    features: tuple            # FeatureSpec, in column order
    label: str
    positive_label: str
    drop_columns: tuple = ()
    has_header: bool = False
    columns: tuple = ()        # full column order incl. dropped + label

    @property
    def d(self):
        return len(self.features)


def load_schema(path):
    with open(path) as f:
        doc = json.load(f)
    feats = tuple(
        FeatureSpec(name=c["name"], kind=c["kind"],
                    vocabulary=tuple(c.get("vocabulary", ())))
        for c in doc["columns"]
        if c["name"] != doc["label"] and c["name"] not in doc.get("drop", []))
    return DatasetSchema(
        features=feats,
        label=doc["label"],
        positive_label=str(doc["positive_label"]),
        drop_columns=tuple(doc.get("drop", [])),
        has_header=bool(doc.get("has_header", False)),
        columns=tuple(c["name"] for c in doc["columns"]),
    )


@dataclass
class Table:
    """Cleaned, typed rows: feature values (str for discrete, float for
    numeric) plus string labels."""

    schema: DatasetSchema
    rows: list = field(default_factory=list)     # list of feature tuples
    labels: list = field(default_factory=list)   # str
    dropped_missing: int = 0

    def __len__(self):
        return len(self.rows)


def load_csv(path, schema):
    table = Table(schema=schema)
    col_index = {name: i for i, name in enumerate(schema.columns)}
    want = [col_index[f.name] for f in schema.features]
    label_i = col_index[schema.label]
    with open(path, newline="") as f:
        reader = csv.reader(f)
        for lineno, raw in enumerate(reader, start=1):
            if not raw or (lineno == 1 and schema.has_header):
                continue
            if len(raw) != len(schema.columns):
                raise DataError(
                    f"line {lineno}: {len(raw)} fields, schema has "
                    f"{len(schema.columns)}")
            if any(raw[i].strip() == MISSING for i in range(len(raw))):
                table.dropped_missing += 1
                continue
            feats = []
            for spec, i in zip(schema.features, want):
                v = raw[i].strip()
                if spec.kind == "numeric":
                    try:
                        feats.append(float(v))
                    except ValueError:
                        raise DataError(
                            f"line {lineno}: column {spec.name!r}: "
                            f"{v!r} is not numeric") from None
                else:
                    if spec.vocabulary and v not in spec.vocabulary:
                        raise DataError(
                            f"line {lineno}: column {spec.name!r}: "
                            f"{v!r} not in vocabulary")
                    feats.append(v)
            table.rows.append(tuple(feats))
            table.labels.append(raw[label_i].strip())
    if not table.rows:
        raise DataError(f"{path}: no usable rows")
    return table


def feature_ranges(table):
    """(min, max) per feature over the given table; discrete features get
    an ordinal position map instead."""
    ranges = []
    for j, spec in enumerate(table.schema.features):
        if spec.kind == "numeric":
            vals = [r[j] for r in table.rows]
            ranges.append((min(vals), max(vals)))
        else:
            vocab = spec.vocabulary or tuple(
                sorted({r[j] for r in table.rows}))
            ranges.append({v: i for i, v in enumerate(vocab)})
    return ranges


def normalize(table, ranges):
    """Map every feature into [0, 1] using precomputed ranges (min-max for
    numeric, ordinal/(|vocab|-1) for discrete).  Constant features map to
    0.0.  Values outside the training range are clamped."""
    out = Table(schema=table.schema, dropped_missing=table.dropped_missing)
    out.labels = list(table.labels)
    for row in table.rows:
        new = []
        for v, rng in zip(row, ranges):
            if isinstance(rng, dict):
                hi = len(rng) - 1
                pos = rng.get(v, 0)
                new.append(pos / hi if hi > 0 else 0.0)
            else:
                lo, hi = rng
                if hi == lo:
                    new.append(0.0)
                else:
                    new.append(min(1.0, max(0.0, (v - lo) / (hi - lo))))
        out.rows.append(tuple(new))
    return out


def split(table, test_fraction, rng):
    """Seeded shuffle split into (train, test)."""
    if not 0 < test_fraction < 1:
        raise DataError("test fraction must be in (0, 1)")
    idx = list(range(len(table)))
    rng.shuffle(idx)
    n_test = int(round(len(idx) * test_fraction))
    if n_test == 0 or n_test == len(idx):
        raise DataError("degenerate split")
    test_idx, train_idx = idx[:n_test], idx[n_test:]
    return _take(table, train_idx), _take(table, test_idx)


def partition(table, n, rng):
    """Shuffled near-equal horizontal split into n tables (sizes differ by
    at most one, disjoint, union = input)."""
    if n > len(table):
        raise DataError(f"cannot partition {len(table)} rows into {n} parts")
    idx = list(range(len(table)))
    rng.shuffle(idx)
    base, extra = divmod(len(idx), n)
    parts, start = [], 0
    for i in range(n):
        size = base + (1 if i < extra else 0)
        parts.append(_take(table, idx[start:start + size]))
        start += size
    return parts


def _take(table, indices):
    out = Table(schema=table.schema)
    out.rows = [table.rows[i] for i in indices]
    out.labels = [table.labels[i] for i in indices]
    return out


def labels_pm1(table):
    """Labels as -1/+1 (positive label -> +1)."""
    pos = table.schema.positive_label
    return [1 if y == pos else -1 for y in table.labels]


def labels_01(table):
    pos = table.schema.positive_label
    return [1 if y == pos else 0 for y in table.labels]
