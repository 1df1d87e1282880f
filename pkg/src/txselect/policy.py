"""Deployable policy files and scoring.

A policy file is versioned JSON. Cohort policies carry the cohort rules
(conjunctions of threshold predicates), one probability vector per cohort
and the effect table behind it. Member policies carry one probability
vector per unit id. Column 0 of every probability vector is control.
"""

from __future__ import annotations

import hashlib
import json
from dataclasses import dataclass, field
from pathlib import Path

import numpy as np

from .cohorts import CohortSet, probe_points
from .errors import ValidationError
from .problem import check_policy

FORMAT = "txselect-policy"
VERSION = 1


def config_hash(config):
    """Stable SHA-256 of a JSON-serializable config."""
    blob = json.dumps(config, sort_keys=True, separators=(",", ":"), default=str)
    return hashlib.sha256(blob.encode()).hexdigest()


@dataclass
class PolicyFile:
    kind: str  # "cohort" or "member"
    method: str
    n_treatments: int
    probabilities: np.ndarray
    cohorts: CohortSet | None = None
    unit_ids: list | None = None
    feature_names: tuple = ()
    metric_names: tuple = ()
    effects: list | None = None
    bias_corrected: bool = False
    provenance: dict = field(default_factory=dict)
    version: int = VERSION

    def __post_init__(self):
        self.probabilities = np.asarray(self.probabilities, dtype=float)
        self.validate()

    def validate(self):
        if self.kind not in ("cohort", "member"):
            raise ValidationError(f"unknown policy kind {self.kind!r}")
        P = self.probabilities
        if P.ndim != 2 or P.shape[1] != self.n_treatments + 1:
            raise ValidationError(
                f"probabilities must have {self.n_treatments + 1} columns (control first)"
            )
        check_policy(P, atol=1e-8)
        if self.kind == "cohort":
            if self.cohorts is None or len(self.cohorts) != P.shape[0]:
                raise ValidationError("cohort policy needs one probability row per cohort")
        else:
            if self.unit_ids is None or len(self.unit_ids) != P.shape[0]:
                raise ValidationError("member policy needs one probability row per unit id")
            if len(set(self.unit_ids)) != len(self.unit_ids):
                raise ValidationError("member policy unit ids must be unique")
        return self

    def check_rules(self, n_random=2000, seed=0):
        """Exclusive/exhaustive check of cohort rules on probe points."""
        if self.kind == "cohort":
            cs = self.cohorts
            cs.check_partition(probe_points([cs], cs.n_features, n_random=n_random, seed=seed))

    @property
    def n_rows(self):
        return self.probabilities.shape[0]

    def to_dict(self):
        d = {
            "format": FORMAT,
            "version": self.version,
            "kind": self.kind,
            "method": self.method,
            "n_treatments": self.n_treatments,
            "feature_names": list(self.feature_names),
            "metric_names": list(self.metric_names),
            "probabilities": self.probabilities.tolist(),
            "bias_corrected": bool(self.bias_corrected),
            "provenance": self.provenance,
        }
        if self.kind == "cohort":
            d["cohorts"] = self.cohorts.to_dict()
        else:
            d["unit_ids"] = [str(u) for u in self.unit_ids]
        if self.effects is not None:
            d["effects"] = self.effects
        return d

    @classmethod
    def from_dict(cls, d):
        if d.get("format") != FORMAT:
            raise ValidationError("not a policy file")
        if int(d.get("version", 0)) > VERSION:
            raise ValidationError(f"policy file version {d['version']} is newer than supported")
        return cls(
            kind=d["kind"],
            method=d.get("method", ""),
            n_treatments=int(d["n_treatments"]),
            probabilities=np.array(d["probabilities"], dtype=float),
            cohorts=CohortSet.from_dict(d["cohorts"]) if d.get("cohorts") else None,
            unit_ids=list(d["unit_ids"]) if d.get("unit_ids") is not None else None,
            feature_names=tuple(d.get("feature_names", ())),
            metric_names=tuple(d.get("metric_names", ())),
            effects=d.get("effects"),
            bias_corrected=bool(d.get("bias_corrected", False)),
            provenance=dict(d.get("provenance", {})),
            version=int(d["version"]),
        )

    def dumps(self):
        return json.dumps(self.to_dict(), indent=2, sort_keys=True)

    def write(self, path):
        Path(path).write_text(self.dumps() + "\n")

    @classmethod
    def read(cls, path):
        try:
            return cls.from_dict(json.loads(Path(path).read_text()))
        except json.JSONDecodeError as exc:
            raise ValidationError(f"{path}: invalid JSON ({exc})") from None

    # -------------------------------------------------------------- scoring

    def probabilities_for(self, features=None, unit_ids=None):
        """Probability vectors for feature rows (cohort policy) or unit ids
        (member policy)."""
        if self.kind == "cohort":
            if features is None:
                raise ValidationError("cohort policies are scored from features")
            X = np.atleast_2d(np.asarray(features, dtype=float))
            if X.shape[1] != self.cohorts.n_features:
                raise ValidationError(
                    f"expected {self.cohorts.n_features} features, got {X.shape[1]}"
                )
            return self.probabilities[self.cohorts.assign(X)]
        if unit_ids is None:
            raise ValidationError("member policies are scored by unit id")
        pos = {u: i for i, u in enumerate(self.unit_ids)}
        try:
            rows = [pos[str(u)] for u in np.atleast_1d(unit_ids)]
        except KeyError as exc:
            raise ValidationError(f"unit id {exc.args[0]!r} not in policy") from None
        return self.probabilities[rows]


def score(policy, features=None, unit_ids=None, draw=False, seed=0):
    """Probability vectors, or one sampled arm per row when ``draw``.

    Sampling uses inverse-CDF draws from a generator seeded with ``seed``.
    """
    P = policy.probabilities_for(features, unit_ids)
    if not draw:
        return P
    u = np.random.default_rng(seed).random(P.shape[0])
    cdf = np.cumsum(P, axis=1)
    cdf[:, -1] = 1.0
    return (u[:, None] >= cdf).sum(axis=1)
