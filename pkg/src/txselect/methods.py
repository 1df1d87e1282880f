"""Estimator/optimizer pairings used by the pipeline and the simulation study.

Cohort-level methods (``HT.ST``, ``CT.ST``) estimate effects per cohort and
solve the stochastic program with MCSA. Member-level methods (``CF.DT``,
``TM.DT``) predict an effect for every unit and solve the plug-in LP.
``Global`` assigns one treatment to everybody.

Every policy returned here has ``J + 1`` columns, control first.
"""

from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np

from .causal_tree import CausalTreeConfig, fit_causal_tree, tree_cohorts
from .cohorts import Cohort, CohortSet, EffectEstimate, Predicate
from .data import honest_split
from .deterministic import saa_solve
from .errors import ConfigError, InfeasibleError, InsufficientDataError, NormalizationError
from .member_effects import RegressorConfig, fit_causal_forest, fit_outcome_model
from .merge import EffectTable, default_source_order, merge_cohort_sets
from .problem import StochasticProblem, build_problem, constraint_rows
from .stochastic import McsaConfig, mcsa_solve

COHORT_METHODS = ("HT.ST", "CT.ST")
MEMBER_METHODS = ("CF.DT", "TM.DT")
METHODS = ("Global",) + COHORT_METHODS + MEMBER_METHODS


def control_normalizer(ds):
    m = ds.control_means()
    if np.any(m == 0):
        raise NormalizationError("a metric has zero control mean; cannot normalize effects")
    return m


# ---------------------------------------------------------------- cohorts


def heuristic_cohorts(ds, columns):
    """Median split on each listed feature; ``2**len(columns)`` cohorts."""
    columns = list(columns)
    if not columns:
        raise ConfigError("heuristic cohorts need at least one feature column")
    med = np.median(ds.features[:, columns], axis=0)
    cohorts = []
    for code in range(2 ** len(columns)):
        preds, tag = [], ""
        for b, (f, m) in enumerate(zip(columns, med)):
            high = (code >> (len(columns) - 1 - b)) & 1
            preds.append(Predicate(int(f), ">=" if high else "<", float(m)))
            tag += "H" if high else "L"
        cohorts.append(Cohort(f"bin:{tag}", tuple(preds)))
    return CohortSet(tuple(cohorts), ds.n_features)


def cohort_effect_table(ds, cohort_set):
    """Difference-in-means estimates per cohort for every (treatment, metric)."""
    labels = default_source_order(ds.n_treatments, ds.n_metrics)
    idx = cohort_set.assign(ds.features)
    rows = []
    for i in range(len(cohort_set)):
        inside = idx == i
        ctrl = ds.outcomes[inside & (ds.variants == 0)]
        row = []
        for j, k in labels:
            treat = ds.outcomes[inside & (ds.variants == j), k]
            if treat.size == 0 or ctrl.shape[0] == 0:
                raise InsufficientDataError(
                    f"cohort {cohort_set.cohorts[i].id} has no units in treatment {j} or control"
                )
            row.append(EffectEstimate.from_samples(treat, ctrl[:, k]))
        rows.append(row)
    return EffectTable(rows, labels)


@dataclass
class CohortModel:
    cohorts: CohortSet
    table: EffectTable
    trees: list = field(default_factory=list)


def causal_tree_cohorts(ds, cfg=None, fraction=0.5, seed=0, single_tree_objective=False):
    """Fit one honest tree per (treatment, metric) and merge their leaves.

    With ``single_tree_objective`` only the objective-metric tree of the
    first treatment defines cohorts; all effects are then re-estimated on
    those cohorts by difference in means.
    """
    cfg = cfg or CausalTreeConfig(seed=seed)
    split = honest_split(ds, fraction, seed=seed)
    pairs = default_source_order(ds.n_treatments, ds.n_metrics)
    if single_tree_objective:
        pairs = [(1, 0)]
    trees, sources = [], []
    for j, k in pairs:
        tree = fit_causal_tree(split, j, k, cfg)
        trees.append(tree)
        sources.append(tree_cohorts(tree))
    if single_tree_objective:
        cs = sources[0][0]
        return CohortModel(cs, cohort_effect_table(split.estimate, cs), trees)
    cs, table = merge_cohort_sets(sources, pairs, seed=seed)
    return CohortModel(cs, table, trees)


def cohort_problem(model, ds, constraints, normalizer=None):
    """Stochastic program over merged cohorts weighted by population share."""
    arr = model.table.arrays(ds.n_treatments, ds.n_metrics)
    share = np.bincount(model.cohorts.assign(ds.features), minlength=len(model.cohorts)) / ds.n
    norm = control_normalizer(ds) if normalizer is None else normalizer
    return build_problem(arr["tau"], arr["var"], share, constraints, norm), arr


def solve_cohort_policy(model, ds, constraints, mcsa_cfg=None, normalizer=None):
    """MCSA on the cohort problem; returns ``(x (n_cohorts, J+1), trace)``."""
    prob, _ = cohort_problem(model, ds, constraints, normalizer)
    return mcsa_solve(prob, mcsa_cfg or McsaConfig())


# ---------------------------------------------------------------- members


def forest_predictions(ds, X, n_trees=20, cfg=None, seed=0):
    """Causal-forest effects at ``X``: ``(tau, var)`` each ``(K+1, n, J)``."""
    X = np.asarray(X, dtype=float)
    shape = (ds.n_metrics, X.shape[0], ds.n_treatments)
    tau, var = np.zeros(shape), np.zeros(shape)
    forests = {}
    for k in range(ds.n_metrics):
        for j in range(1, ds.n_treatments + 1):
            f = fit_causal_forest(ds, j, k, n_trees=n_trees, cfg=cfg, seed=seed)
            forests[(j, k)] = f
            tau[k, :, j - 1], var[k, :, j - 1] = f.predict(X)
    return tau, var, forests


def two_model_predictions(ds, X, cfg=None):
    """Two-model effects at ``X``; one regressor per (arm, metric)."""
    X = np.asarray(X, dtype=float)
    cfg = cfg or RegressorConfig()
    pred = np.zeros((ds.n_metrics, X.shape[0], ds.n_treatments + 1))
    models = {}
    for k in range(ds.n_metrics):
        for arm in range(ds.n_treatments + 1):
            m = fit_outcome_model(ds, arm, k, cfg)
            models[(arm, k)] = m
            pred[k, :, arm] = m.predict(X)
    return pred[:, :, 1:] - pred[:, :, :1], models


def solve_member_policy(tau, constraints, normalizer, method="auto"):
    """Plug-in LP over members, each weighted ``1/n``; returns ``(x, LpSolution)``."""
    n = tau.shape[1]
    prob = build_problem(tau, np.zeros_like(tau), np.full(n, 1.0 / n), constraints, normalizer)
    sol = saa_solve(prob.deterministic(), method=method)
    if not sol.optimal:
        raise InfeasibleError(
            "the plug-in program is infeasible; relax the constraints or use a "
            "cohort-level estimator with the stochastic solver"
        )
    return sol.x, sol


# ---------------------------------------------------------------- global


@dataclass(frozen=True)
class GlobalChoice:
    arm: int
    feasible: bool
    violation: float
    objective: float

    def policy(self, n_rows, n_treatments):
        x = np.zeros((n_rows, n_treatments + 1))
        x[:, self.arm] = 1.0
        return x


def global_best_policy(ate, constraints, normalizer=None, tol=0.0):
    """Best single treatment for everyone.

    ``ate`` has shape ``(K+1, J)`` (raw units). A treatment is feasible when
    every constraint holds within ``tol``; the feasible one with the largest
    objective wins. Without any feasible treatment the one with the smallest
    total violation is returned with ``feasible=False``.
    """
    ate = np.asarray(ate, dtype=float)
    norm = np.ones(ate.shape[0]) if normalizer is None else np.asarray(normalizer, dtype=float)
    eff = ate / norm[:, None]
    rows = constraint_rows(constraints)
    J = ate.shape[1]
    viol = np.zeros(J)
    for k, s, b in rows:
        viol += np.maximum(s * eff[k] - b - tol, 0.0)
    obj = eff[0]
    feas = viol <= 0
    if feas.any():
        cand = np.flatnonzero(feas)
        j = int(cand[np.argmax(obj[cand])])
        return GlobalChoice(j + 1, True, 0.0, float(obj[j]))
    j = int(np.lexsort((-obj, viol))[0])
    return GlobalChoice(j + 1, False, float(viol[j]), float(obj[j]))


def average_effects(ds):
    """Difference-in-means ATE per (metric, treatment): shape ``(K+1, J)``."""
    ctrl = ds.outcomes[ds.variants == 0].mean(axis=0)
    out = np.zeros((ds.n_metrics, ds.n_treatments))
    for j in range(1, ds.n_treatments + 1):
        rows = ds.variants == j
        if not rows.any():
            raise InsufficientDataError(f"treatment {j} has no units")
        out[:, j - 1] = ds.outcomes[rows].mean(axis=0) - ctrl
    return out


__all__ = [
    "COHORT_METHODS", "MEMBER_METHODS", "METHODS", "CohortModel", "GlobalChoice",
    "StochasticProblem", "average_effects", "causal_tree_cohorts", "cohort_effect_table",
    "cohort_problem", "control_normalizer", "forest_predictions", "global_best_policy",
    "heuristic_cohorts", "solve_cohort_policy", "solve_member_policy", "two_model_predictions",
]
