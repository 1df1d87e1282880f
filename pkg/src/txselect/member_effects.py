"""Member-level effect estimators: causal forests and the two-model baseline."""

from __future__ import annotations

import math
from dataclasses import dataclass, replace

import numpy as np
from sklearn.ensemble import RandomForestRegressor

from .causal_tree import CausalTree, CausalTreeConfig, fit_causal_tree
from .data import honest_split
from .errors import ConfigError, InsufficientDataError


@dataclass(frozen=True)
class CausalForest:
    trees: tuple[CausalTree, ...]
    n_trees: int
    subsample_fraction: float
    seed: int

    def predict(self, X):
        """Per-row ``(tau, var)``: mean of tree taus and between-tree variance
        of that mean."""
        taus = np.stack([t.predict(X)[0] for t in self.trees])
        tau = taus.mean(axis=0)
        if len(self.trees) > 1:
            var = taus.var(axis=0, ddof=1) / len(self.trees)
        else:
            var = np.zeros_like(tau)
        return tau, var

    def to_dict(self):
        return {
            "kind": "causal_forest",
            "n_trees": self.n_trees,
            "subsample_fraction": self.subsample_fraction,
            "seed": self.seed,
            "trees": [t.to_dict() for t in self.trees],
        }

    @classmethod
    def from_dict(cls, d):
        return cls(
            tuple(CausalTree.from_dict(t) for t in d["trees"]),
            int(d["n_trees"]),
            float(d["subsample_fraction"]),
            int(d["seed"]),
        )


def fit_causal_forest(ds, j, k, n_trees=50, cfg=None, subsample_fraction=0.5, seed=0):
    """Ensemble of honest causal trees, each on a fresh subsample and split.

    Subsamples are drawn without replacement and stratified by arm. Unless
    ``cfg.max_features`` is set, each node considers ``ceil(sqrt(M))`` features.
    """
    if n_trees < 1:
        raise ConfigError("n_trees must be at least 1")
    if not 0.0 < subsample_fraction <= 1.0:
        raise ConfigError("subsample_fraction must lie in (0, 1]")
    cfg = cfg or CausalTreeConfig()
    if cfg.max_features is None:
        cfg = replace(cfg, max_features=math.ceil(math.sqrt(ds.n_features)))
    cfg.validate()
    counts = ds.arm_counts()
    need = 2 * cfg.min_leaf_per_arm
    if counts[j] < need or counts[0] < need:
        raise InsufficientDataError(
            f"causal forest needs {need} units in treatment {j} and control; "
            f"have {counts[j]} and {counts[0]}"
        )
    keep = np.flatnonzero((ds.variants == j) | (ds.variants == 0))
    arms = ds.variants[keep]
    ss = np.random.SeedSequence([seed, j, k])
    trees = []
    for child in ss.spawn(n_trees):
        rng = np.random.default_rng(child)
        parts = []
        for arm in (0, j):
            members = keep[arms == arm]
            take = max(2, int(round(subsample_fraction * members.size)))
            parts.append(rng.choice(members, size=min(take, members.size), replace=False))
        sub = ds.subset(np.sort(np.concatenate(parts)))
        tree_seed = int(rng.integers(2**31))
        split = honest_split(sub, 0.5, seed=tree_seed)
        trees.append(fit_causal_tree(split, j, k, replace(cfg, seed=tree_seed)))
    return CausalForest(tuple(trees), n_trees, float(subsample_fraction), int(seed))


def forest_effect(forest, features):
    """``(tau, var)`` for a single feature vector."""
    tau, var = forest.predict(np.asarray(features, dtype=float).reshape(1, -1))
    return float(tau[0]), float(var[0])


@dataclass(frozen=True)
class RegressorConfig:
    """Bagged regression trees (a random forest that tries every feature)."""

    n_estimators: int = 50
    max_depth: int = 8
    min_samples_leaf: int = 5
    seed: int = 0
    n_jobs: int | None = None

    def build(self):
        return RandomForestRegressor(
            n_estimators=self.n_estimators,
            max_depth=self.max_depth,
            min_samples_leaf=self.min_samples_leaf,
            max_features=1.0,
            bootstrap=True,
            random_state=self.seed,
            n_jobs=self.n_jobs,
        )


@dataclass
class TwoModel:
    model_treat: object
    model_control: object
    j: int
    k: int

    def predict(self, X):
        X = np.atleast_2d(np.asarray(X, dtype=float))
        return self.model_treat.predict(X) - self.model_control.predict(X)


def fit_outcome_model(ds, arm, k, cfg=None):
    """Regress metric ``k`` on features using only units in ``arm``."""
    cfg = cfg or RegressorConfig()
    rows = ds.variants == arm
    if not rows.any():
        raise InsufficientDataError(f"arm {arm} has no units")
    model = cfg.build()
    model.fit(ds.features[rows], ds.outcomes[rows, k])
    return model


def fit_two_model(ds, j, k, cfg=None, control_model=None):
    """Separate outcome regressions for treatment ``j`` and control.

    Both regressors use the same seed, so swapping arm labels exactly
    negates the predicted effect. A pre-fitted ``control_model`` can be
    shared across treatments.
    """
    cfg = cfg or RegressorConfig()
    treat = fit_outcome_model(ds, j, k, cfg)
    control = control_model if control_model is not None else fit_outcome_model(ds, 0, k, cfg)
    return TwoModel(treat, control, j, k)


def two_model_effect(tm, features):
    return float(tm.predict(np.asarray(features, dtype=float).reshape(1, -1))[0])
