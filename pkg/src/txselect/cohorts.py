"""Axis-aligned cohorts and per-cohort effect estimates.

A cohort is a conjunction of threshold predicates ``x[f] < t`` or
``x[f] >= t``.  Because every predicate is axis aligned, a cohort is a
box ``lower <= x < upper`` and intersection/emptiness are exact interval
operations.
"""

from __future__ import annotations

import math
from dataclasses import dataclass
from functools import cached_property

import numpy as np

from .errors import ValidationError


@dataclass(frozen=True)
class SplitRule:
    """Threshold split: ``x[feature_index] < threshold`` goes left."""

    feature_index: int
    threshold: float

    def goes_left(self, x):
        return np.asarray(x)[..., self.feature_index] < self.threshold


@dataclass(frozen=True)
class Predicate:
    feature: int
    op: str  # "<" or ">="
    threshold: float

    def __post_init__(self):
        if self.op not in ("<", ">="):
            raise ValueError(f"unknown predicate operator {self.op!r}")

    def evaluate(self, X):
        col = np.asarray(X, dtype=float)[..., self.feature]
        return col < self.threshold if self.op == "<" else col >= self.threshold

    def to_dict(self):
        return {"feature": self.feature, "op": self.op, "threshold": self.threshold}

    @classmethod
    def from_dict(cls, d):
        return cls(int(d["feature"]), d["op"], float(d["threshold"]))

    def __str__(self):
        return f"x[{self.feature}] {self.op} {self.threshold:.6g}"


@dataclass(frozen=True)
class Cohort:
    id: str
    predicates: tuple[Predicate, ...] = ()

    def bounds(self, n_features):
        lo = np.full(n_features, -np.inf)
        hi = np.full(n_features, np.inf)
        for p in self.predicates:
            if p.op == "<":
                hi[p.feature] = min(hi[p.feature], p.threshold)
            else:
                lo[p.feature] = max(lo[p.feature], p.threshold)
        return lo, hi

    def is_empty(self, n_features):
        lo, hi = self.bounds(n_features)
        return bool(np.any(lo >= hi))

    def contains(self, X):
        X = np.atleast_2d(np.asarray(X, dtype=float))
        mask = np.ones(X.shape[0], dtype=bool)
        for p in self.predicates:
            mask &= p.evaluate(X)
        return mask

    def intersect(self, other, n_features, id=None):
        """Intersection as a simplified cohort (one bound per side per feature)."""
        lo1, hi1 = self.bounds(n_features)
        lo2, hi2 = other.bounds(n_features)
        return Cohort.from_bounds(
            id if id is not None else f"{self.id}&{other.id}",
            np.maximum(lo1, lo2),
            np.minimum(hi1, hi2),
        )

    @classmethod
    def from_bounds(cls, id, lo, hi):
        preds = []
        for f, (a, b) in enumerate(zip(lo, hi)):
            if np.isfinite(a):
                preds.append(Predicate(f, ">=", float(a)))
            if np.isfinite(b):
                preds.append(Predicate(f, "<", float(b)))
        return cls(id, tuple(preds))

    def describe(self, feature_names=None):
        if not self.predicates:
            return "(all)"
        parts = []
        for p in self.predicates:
            name = feature_names[p.feature] if feature_names else f"x[{p.feature}]"
            parts.append(f"{name} {p.op} {p.threshold:.6g}")
        return " and ".join(parts)

    def to_dict(self):
        return {"id": self.id, "rules": [p.to_dict() for p in self.predicates]}

    @classmethod
    def from_dict(cls, d):
        return cls(str(d["id"]), tuple(Predicate.from_dict(r) for r in d["rules"]))


@dataclass(frozen=True)
class CohortSet:
    """Mutually exclusive, exhaustive set of cohorts over ``n_features`` dims."""

    cohorts: tuple[Cohort, ...]
    n_features: int

    def __post_init__(self):
        object.__setattr__(self, "cohorts", tuple(self.cohorts))
        if not self.cohorts:
            raise ValidationError("a cohort set needs at least one cohort")

    def __len__(self):
        return len(self.cohorts)

    def __iter__(self):
        return iter(self.cohorts)

    def __getitem__(self, i):
        return self.cohorts[i]

    @property
    def ids(self):
        return [c.id for c in self.cohorts]

    def membership(self, X):
        """Boolean matrix (n_points, n_cohorts)."""
        X = np.atleast_2d(np.asarray(X, dtype=float))
        return np.column_stack([c.contains(X) for c in self.cohorts])

    @cached_property
    def _boxes(self):
        lo = np.array([c.bounds(self.n_features)[0] for c in self.cohorts])
        hi = np.array([c.bounds(self.n_features)[1] for c in self.cohorts])
        cuts = [np.unique(np.concatenate([lo[:, f], hi[:, f]])) for f in range(self.n_features)]
        cuts = [c[np.isfinite(c)] for c in cuts]
        return lo, hi, cuts

    def assign(self, X):
        """Cohort index for each row of ``X``; raises if a row is not covered once.

        Points are first bucketed into the grid cut by every cohort
        threshold. Boxes are unions of grid cells, so only one point per
        occupied cell needs the explicit containment test.
        """
        X = np.atleast_2d(np.asarray(X, dtype=float))
        if X.shape[1] != self.n_features:
            raise ValidationError(
                f"expected {self.n_features} features, got {X.shape[1]}"
            )
        lo, hi, cuts = self._boxes
        cells = np.column_stack(
            [np.searchsorted(cuts[f], X[:, f], side="right") for f in range(self.n_features)]
        ) if X.shape[0] else np.zeros((0, self.n_features), dtype=np.int64)
        cells[~np.isfinite(X)] = -1
        _, first, inverse = np.unique(cells, axis=0, return_index=True, return_inverse=True)
        reps = X[first]
        cell_idx = np.empty(reps.shape[0], dtype=np.int64)
        # chunked so memory stays bounded for many cohorts
        step = max(1, 2_000_000 // max(1, len(self.cohorts) * self.n_features))
        for s in range(0, reps.shape[0], step):
            blk = reps[s : s + step, None, :]
            inside = np.all((blk >= lo[None]) & (blk < hi[None]), axis=2)
            counts = inside.sum(axis=1)
            if np.any(counts != 1):
                r = s + int(np.flatnonzero(counts != 1)[0])
                bad = int(np.flatnonzero(inverse.ravel() == r)[0])
                raise ValidationError(
                    f"point {bad} falls in {counts[r - s]} cohorts; not a partition"
                )
            cell_idx[s : s + step] = inside.argmax(axis=1)
        return cell_idx[inverse.ravel()]

    def check_partition(self, probe):
        """Validate exclusivity exactly and exhaustiveness on ``probe`` points."""
        for a in range(len(self.cohorts)):
            for b in range(a + 1, len(self.cohorts)):
                inter = self.cohorts[a].intersect(self.cohorts[b], self.n_features)
                if not inter.is_empty(self.n_features):
                    raise ValidationError(
                        f"cohorts {self.cohorts[a].id!r} and {self.cohorts[b].id!r} overlap"
                    )
        self.assign(probe)

    def to_dict(self):
        return {"n_features": self.n_features, "cohorts": [c.to_dict() for c in self.cohorts]}

    @classmethod
    def from_dict(cls, d):
        return cls(tuple(Cohort.from_dict(c) for c in d["cohorts"]), int(d["n_features"]))

    @classmethod
    def whole_space(cls, n_features, id="all"):
        return cls((Cohort(id),), n_features)


def assign_cohort(cohorts, features):
    """Index of the unique cohort containing a single feature vector."""
    return int(cohorts.assign(np.asarray(features, dtype=float).reshape(1, -1))[0])


def probe_points(cohort_sets, n_features, n_random=2000, seed=0, scale=None):
    """Probe points that hit every threshold, both sides of it, and random spots.

    Used to check exhaustiveness; exclusivity is checked exactly elsewhere.
    """
    rng = np.random.default_rng(seed)
    thresholds = [set() for _ in range(n_features)]
    for cs in cohort_sets:
        for c in cs:
            for p in c.predicates:
                thresholds[p.feature].add(p.threshold)
    cols = []
    for f in range(n_features):
        t = np.array(sorted(thresholds[f]), dtype=float)
        if t.size:
            spread = max(1.0, float(np.ptp(t)))
            eps = 1e-9 * max(1.0, float(np.max(np.abs(t))))
            vals = np.concatenate(
                [t, t - eps, t + eps, (t[:-1] + t[1:]) / 2, [t[0] - spread, t[-1] + spread]]
            )
        else:
            vals = np.array([0.0])
        cols.append(vals)
    lo = np.array([c.min() for c in cols])
    hi = np.array([c.max() for c in cols])
    if scale is not None:
        lo, hi = np.minimum(lo, -scale), np.maximum(hi, scale)
    pts = rng.uniform(lo, hi + 1e-12, size=(n_random, n_features))
    # random picks from the per-feature critical values exercise the boundaries
    crit = np.column_stack([rng.choice(c, size=n_random) for c in cols])
    return np.vstack([pts, crit])


@dataclass(frozen=True)
class EffectEstimate:
    """Treatment-minus-control mean difference for one cohort/treatment/metric.

    ``var`` is the variance of ``tau`` itself (squared standard error), built
    from unbiased per-arm sample variances.
    """

    tau: float
    var: float
    n_treat: int
    n_control: int
    var_treat: float
    var_control: float

    @classmethod
    def from_samples(cls, y_treat, y_control):
        y_treat = np.asarray(y_treat, dtype=float)
        y_control = np.asarray(y_control, dtype=float)
        nt, nc = y_treat.size, y_control.size
        if nt < 1 or nc < 1:
            raise ValidationError("both arms need at least one unit")
        vt = float(np.var(y_treat, ddof=1)) if nt > 1 else 0.0
        vc = float(np.var(y_control, ddof=1)) if nc > 1 else 0.0
        return cls.from_moments(float(y_treat.mean()) - float(y_control.mean()), vt, vc, nt, nc)

    @classmethod
    def from_moments(cls, tau, var_treat, var_control, n_treat, n_control):
        return cls(
            tau=float(tau),
            var=var_treat / n_treat + var_control / n_control,
            n_treat=int(n_treat),
            n_control=int(n_control),
            var_treat=float(var_treat),
            var_control=float(var_control),
        )

    @property
    def se(self):
        return math.sqrt(self.var)

    def to_dict(self):
        return {
            "tau": self.tau,
            "var": self.var,
            "n_treat": self.n_treat,
            "n_control": self.n_control,
            "var_treat": self.var_treat,
            "var_control": self.var_control,
        }

    @classmethod
    def from_dict(cls, d):
        return cls(
            float(d["tau"]),
            float(d["var"]),
            int(d["n_treat"]),
            int(d["n_control"]),
            float(d["var_treat"]),
            float(d["var_control"]),
        )
