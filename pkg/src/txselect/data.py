"""Randomized-experiment datasets: loading, validation and honest splits."""

from __future__ import annotations

import csv
from dataclasses import dataclass, field
from pathlib import Path

import numpy as np

from .errors import InsufficientDataError, ParseError, SchemaError, ValidationError


@dataclass(frozen=True)
class ExperimentDataset:
    """Immutable table of experimental units.

    ``variants`` holds 0 for control and 1..J for treatments. ``outcomes``
    column 0 is the objective metric; columns 1..K are guardrails.
    ``counterfactuals`` (simulation only) has shape (n, J+1, K+1).
    """

    unit_ids: np.ndarray
    features: np.ndarray
    variants: np.ndarray
    outcomes: np.ndarray
    n_treatments: int
    feature_names: tuple[str, ...] = ()
    metric_names: tuple[str, ...] = ()
    counterfactuals: np.ndarray | None = None

    def __post_init__(self):
        ids = np.asarray(self.unit_ids).astype(str)
        X = np.asarray(self.features, dtype=float)
        v = np.asarray(self.variants)
        Y = np.asarray(self.outcomes, dtype=float)
        if X.ndim == 1:
            X = X[:, None]
        if Y.ndim == 1:
            Y = Y[:, None]
        n = ids.shape[0]
        if X.shape[0] != n or v.shape[0] != n or Y.shape[0] != n:
            raise ValidationError("features, variants and outcomes must have one row per unit")
        if not np.all(np.isfinite(X)) or not np.all(np.isfinite(Y)):
            raise ValidationError("missing or non-finite values are not allowed")
        if v.size and not np.all(v == np.round(v)):
            raise ValidationError("variant labels must be integers")
        v = v.astype(np.int64)
        J = int(self.n_treatments)
        if J < 1:
            raise ValidationError("need at least one treatment variant")
        if v.size and (v.min() < 0 or v.max() > J):
            raise ValidationError(f"variant labels must lie in 0..{J}")
        if n and not np.any(v == 0):
            raise ValidationError("control (variant 0) must be present")
        if len(np.unique(ids)) != n:
            raise ValidationError("unit ids must be unique")
        fnames = tuple(self.feature_names) or tuple(f"f{i + 1}" for i in range(X.shape[1]))
        mnames = tuple(self.metric_names) or tuple(f"y{k}" for k in range(Y.shape[1]))
        if len(fnames) != X.shape[1] or len(mnames) != Y.shape[1]:
            raise ValidationError("name lists do not match the data dimensions")
        cf = self.counterfactuals
        if cf is not None:
            cf = np.asarray(cf, dtype=float)
            if cf.shape != (n, J + 1, Y.shape[1]):
                raise ValidationError(
                    f"counterfactuals must have shape {(n, J + 1, Y.shape[1])}, got {cf.shape}"
                )
            if not np.allclose(cf[np.arange(n), v], Y, rtol=0, atol=1e-9):
                raise ValidationError("observed outcomes disagree with counterfactuals")
            cf.setflags(write=False)
        for arr in (ids, X, v, Y):
            arr.setflags(write=False)
        object.__setattr__(self, "unit_ids", ids)
        object.__setattr__(self, "features", X)
        object.__setattr__(self, "variants", v)
        object.__setattr__(self, "outcomes", Y)
        object.__setattr__(self, "n_treatments", J)
        object.__setattr__(self, "feature_names", fnames)
        object.__setattr__(self, "metric_names", mnames)
        object.__setattr__(self, "counterfactuals", cf)

    @property
    def n(self):
        return self.unit_ids.shape[0]

    @property
    def n_features(self):
        return self.features.shape[1]

    @property
    def n_metrics(self):
        return self.outcomes.shape[1]

    @property
    def K(self):
        return self.n_metrics - 1

    def __len__(self):
        return self.n

    def subset(self, idx):
        idx = np.asarray(idx)
        return ExperimentDataset(
            unit_ids=self.unit_ids[idx],
            features=self.features[idx],
            variants=self.variants[idx],
            outcomes=self.outcomes[idx],
            n_treatments=self.n_treatments,
            feature_names=self.feature_names,
            metric_names=self.metric_names,
            counterfactuals=None if self.counterfactuals is None else self.counterfactuals[idx],
        )

    def arm_counts(self):
        return np.bincount(self.variants, minlength=self.n_treatments + 1)

    def control_means(self):
        return self.outcomes[self.variants == 0].mean(axis=0)


@dataclass(frozen=True)
class CsvSchema:
    """Column roles for :func:`load_experiment_csv`."""

    variant_column: str
    feature_columns: tuple[str, ...]
    metric_columns: tuple[str, ...]
    id_column: str | None = None
    n_treatments: int | None = None
    delimiter: str = ","
    counterfactual_columns: bool = False

    def __post_init__(self):
        object.__setattr__(self, "feature_columns", tuple(self.feature_columns))
        object.__setattr__(self, "metric_columns", tuple(self.metric_columns))
        if not self.feature_columns:
            raise SchemaError("schema needs at least one feature column")
        if not self.metric_columns:
            raise SchemaError("schema needs at least one metric column")

    @classmethod
    def from_dict(cls, d):
        known = {
            "variant_column", "feature_columns", "metric_columns", "id_column",
            "n_treatments", "delimiter", "counterfactual_columns",
        }
        unknown = set(d) - known
        if unknown:
            raise SchemaError(f"unknown schema keys: {sorted(unknown)}")
        try:
            return cls(**d)
        except TypeError as exc:
            raise SchemaError(str(exc)) from None

    def to_dict(self):
        return {
            "variant_column": self.variant_column,
            "feature_columns": list(self.feature_columns),
            "metric_columns": list(self.metric_columns),
            "id_column": self.id_column,
            "n_treatments": self.n_treatments,
            "delimiter": self.delimiter,
            "counterfactual_columns": self.counterfactual_columns,
        }


def counterfactual_column(arm, metric_name):
    return f"cf{arm}__{metric_name}"


def _parse_float(cell, row, col):
    try:
        val = float(cell)
    except ValueError:
        raise ParseError(f"column {col!r}: cannot parse {cell!r} as a number", row) from None
    if not np.isfinite(val):
        raise ParseError(f"column {col!r}: non-finite value {cell!r}", row)
    return val


def load_experiment_csv(path, schema):
    """Read a CSV with a header row into an :class:`ExperimentDataset`.

    Row indices in error messages are 1-based data rows (header excluded).
    """
    path = Path(path)
    with path.open(newline="") as fh:
        reader = csv.reader(fh, delimiter=schema.delimiter)
        try:
            header = next(reader)
        except StopIteration:
            raise SchemaError(f"{path}: empty file") from None
        header = [h.strip() for h in header]
        pos = {name: i for i, name in enumerate(header)}
        needed = [schema.variant_column, *schema.feature_columns, *schema.metric_columns]
        if schema.id_column:
            needed.append(schema.id_column)
        missing = [c for c in needed if c not in pos]
        if missing:
            raise SchemaError(f"{path}: missing columns {missing}")
        rows = list(reader)

    ids, X, V, Y = [], [], [], []
    for r, row in enumerate(rows, start=1):
        if not row or all(not c.strip() for c in row):
            continue
        if len(row) != len(header):
            raise ParseError(f"expected {len(header)} cells, found {len(row)}", r)
        ids.append(row[pos[schema.id_column]].strip() if schema.id_column else str(r - 1))
        X.append([_parse_float(row[pos[c]], r, c) for c in schema.feature_columns])
        Y.append([_parse_float(row[pos[c]], r, c) for c in schema.metric_columns])
        raw = row[pos[schema.variant_column]].strip()
        label = _parse_float(raw, r, schema.variant_column)
        if label != int(label) or label < 0:
            raise ValidationError(f"row {r}: unknown variant label {raw!r}")
        if schema.n_treatments is not None and label > schema.n_treatments:
            raise ValidationError(
                f"row {r}: variant {raw!r} outside 0..{schema.n_treatments}"
            )
        V.append(int(label))

    if not V:
        raise ValidationError(f"{path}: no data rows")
    J = schema.n_treatments if schema.n_treatments is not None else max(V)
    cf = None
    if schema.counterfactual_columns:
        cols = [
            [counterfactual_column(a, m) for m in schema.metric_columns] for a in range(J + 1)
        ]
        flat = [c for arm in cols for c in arm]
        missing = [c for c in flat if c not in pos]
        if missing:
            raise SchemaError(f"{path}: missing counterfactual columns {missing[:3]}...")
        cf = np.array(
            [
                [[_parse_float(row[pos[c]], r, c) for c in arm] for arm in cols]
                for r, row in enumerate(rows, start=1)
                if row and any(c.strip() for c in row)
            ]
        )
    return ExperimentDataset(
        unit_ids=np.array(ids),
        features=np.array(X, dtype=float).reshape(len(V), len(schema.feature_columns)),
        variants=np.array(V),
        outcomes=np.array(Y, dtype=float).reshape(len(V), len(schema.metric_columns)),
        n_treatments=J,
        feature_names=schema.feature_columns,
        metric_names=schema.metric_columns,
        counterfactuals=cf,
    )


def write_experiment_csv(ds, path, delimiter=","):
    """Write ``ds`` so that :func:`load_experiment_csv` with
    :func:`default_schema` reads back an identical dataset."""
    header = ["unit_id", *ds.feature_names, "variant", *ds.metric_names]
    if ds.counterfactuals is not None:
        header += [
            counterfactual_column(a, m)
            for a in range(ds.n_treatments + 1)
            for m in ds.metric_names
        ]
    with Path(path).open("w", newline="") as fh:
        w = csv.writer(fh, delimiter=delimiter)
        w.writerow(header)
        for i in range(ds.n):
            row = [ds.unit_ids[i], *map(repr, ds.features[i].tolist()), int(ds.variants[i])]
            row += list(map(repr, ds.outcomes[i].tolist()))
            if ds.counterfactuals is not None:
                row += list(map(repr, ds.counterfactuals[i].ravel().tolist()))
            w.writerow(row)
    return default_schema(ds, delimiter=delimiter)


def default_schema(ds, delimiter=","):
    return CsvSchema(
        variant_column="variant",
        feature_columns=ds.feature_names,
        metric_columns=ds.metric_names,
        id_column="unit_id",
        n_treatments=ds.n_treatments,
        delimiter=delimiter,
        counterfactual_columns=ds.counterfactuals is not None,
    )


@dataclass(frozen=True)
class HonestSplit:
    train: ExperimentDataset
    estimate: ExperimentDataset
    fraction: float
    seed: int
    train_index: np.ndarray = field(repr=False, default=None)
    estimate_index: np.ndarray = field(repr=False, default=None)


def honest_split(ds, fraction=0.5, seed=0):
    """Stratified split into a structure-learning half and an estimation half.

    Each variant contributes ``round(fraction * n_v)`` units to ``train``
    (clamped so both halves keep at least one unit of every variant).
    Original row order is kept inside each half.
    """
    if not 0.0 < fraction < 1.0:
        raise ValueError("fraction must lie strictly between 0 and 1")
    rng = np.random.default_rng(seed)
    train_idx = []
    for arm in np.unique(ds.variants):
        members = np.flatnonzero(ds.variants == arm)
        if members.size < 2:
            raise InsufficientDataError(
                f"variant {arm} has {members.size} unit(s); need at least 2 to split"
            )
        take = int(np.floor(fraction * members.size + 0.5))
        take = min(max(take, 1), members.size - 1)
        train_idx.append(rng.permutation(members)[:take])
    train_idx = np.sort(np.concatenate(train_idx))
    mask = np.zeros(ds.n, dtype=bool)
    mask[train_idx] = True
    est_idx = np.flatnonzero(~mask)
    return HonestSplit(
        train=ds.subset(train_idx),
        estimate=ds.subset(est_idx),
        fraction=float(fraction),
        seed=int(seed),
        train_index=train_idx,
        estimate_index=est_idx,
    )
