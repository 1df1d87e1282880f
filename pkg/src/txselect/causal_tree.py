"""Honest causal trees for one (treatment, metric) pair.

Structure is grown greedily on the train half of an :class:`HonestSplit`;
leaf effects are estimated on the disjoint estimation half only.

Split score for a candidate partition into children ``c``::

    alpha * sum_c n_c * tau_c**2  -  (1 - alpha) * sum_c n_c * var(tau_c)

where ``tau_c`` is the treatment-minus-control mean difference and
``var(tau_c)`` its two-sample variance, both on train-half units. A split is
kept only when it beats the same score of the unsplit node, so smaller
``alpha`` weights the variance term more and yields fewer, tighter cohorts.
"""

from __future__ import annotations

from dataclasses import asdict, dataclass

import numpy as np

from .cohorts import Cohort, CohortSet, EffectEstimate, Predicate, SplitRule
from .errors import ConfigError, InsufficientDataError


@dataclass(frozen=True)
class CausalTreeConfig:
    alpha: float = 0.5
    min_leaf_per_arm: int = 50
    max_depth: int = 5
    candidate_thresholds_per_feature: int = 32
    seed: int = 0
    # features sampled per node; None means all (forests use ceil(sqrt(M)))
    max_features: int | None = None
    # after the quantile scan, retry observed-value midpoints inside the
    # winning bracket
    refine: bool = True

    def validate(self):
        if not 0.0 <= self.alpha <= 1.0:
            raise ConfigError("alpha must lie in [0, 1]")
        if self.min_leaf_per_arm < 2:
            raise ConfigError("min_leaf_per_arm must be at least 2")
        if self.max_depth < 0:
            raise ConfigError("max_depth must be non-negative")
        if self.candidate_thresholds_per_feature < 1:
            raise ConfigError("need at least one candidate threshold per feature")
        if self.max_features is not None and self.max_features < 1:
            raise ConfigError("max_features must be positive")
        return self

    @classmethod
    def from_dict(cls, d):
        try:
            return cls(**d).validate()
        except TypeError as exc:
            raise ConfigError(f"causal tree config: {exc}") from None


@dataclass
class Node:
    rule: SplitRule | None = None
    left: int = -1
    right: int = -1
    estimate: EffectEstimate | None = None
    depth: int = 0

    @property
    def is_leaf(self):
        return self.rule is None


@dataclass(frozen=True)
class CausalTree:
    treatment: int
    metric: int
    nodes: tuple[Node, ...]
    config: CausalTreeConfig
    n_features: int

    @property
    def leaves(self):
        return [i for i, nd in enumerate(self.nodes) if nd.is_leaf]

    @property
    def n_leaves(self):
        return len(self.leaves)

    @property
    def depth(self):
        return max(nd.depth for nd in self.nodes)

    def apply(self, X):
        """Leaf node index reached by each row of ``X``."""
        X = np.atleast_2d(np.asarray(X, dtype=float))
        feat = np.array([nd.rule.feature_index if nd.rule else -1 for nd in self.nodes])
        thr = np.array([nd.rule.threshold if nd.rule else 0.0 for nd in self.nodes])
        left = np.array([nd.left for nd in self.nodes])
        right = np.array([nd.right for nd in self.nodes])
        pos = np.zeros(X.shape[0], dtype=np.int64)
        rows = np.arange(X.shape[0])
        for _ in range(self.depth):
            f = feat[pos]
            internal = f >= 0
            if not internal.any():
                break
            go_left = X[rows, np.where(internal, f, 0)] < thr[pos]
            pos = np.where(internal, np.where(go_left, left[pos], right[pos]), pos)
        return pos

    def predict(self, X):
        """Leaf ``(tau, var)`` arrays for each row of ``X``."""
        leaf = self.apply(X)
        tau = np.array([nd.estimate.tau if nd.is_leaf else np.nan for nd in self.nodes])
        var = np.array([nd.estimate.var if nd.is_leaf else np.nan for nd in self.nodes])
        return tau[leaf], var[leaf]

    def to_dict(self):
        nodes = []
        for nd in self.nodes:
            nodes.append(
                {
                    "feature": nd.rule.feature_index if nd.rule else None,
                    "threshold": nd.rule.threshold if nd.rule else None,
                    "left": nd.left,
                    "right": nd.right,
                    "depth": nd.depth,
                    "estimate": nd.estimate.to_dict() if nd.estimate else None,
                }
            )
        return {
            "kind": "causal_tree",
            "treatment": self.treatment,
            "metric": self.metric,
            "n_features": self.n_features,
            "config": asdict(self.config),
            "nodes": nodes,
        }

    @classmethod
    def from_dict(cls, d):
        nodes = []
        for nd in d["nodes"]:
            rule = None
            if nd["feature"] is not None:
                rule = SplitRule(int(nd["feature"]), float(nd["threshold"]))
            est = EffectEstimate.from_dict(nd["estimate"]) if nd["estimate"] else None
            nodes.append(Node(rule, int(nd["left"]), int(nd["right"]), est, int(nd["depth"])))
        return cls(
            int(d["treatment"]),
            int(d["metric"]),
            tuple(nodes),
            CausalTreeConfig(**d["config"]),
            int(d["n_features"]),
        )


def _arm_view(ds, j, k):
    keep = (ds.variants == j) | (ds.variants == 0)
    return ds.features[keep], ds.variants[keep] == j, ds.outcomes[keep, k]


def _sums(b, treat, y, nb):
    """Per-bin (count, sum, sum of squares) for treated and control units."""
    out = []
    for arm in (treat, ~treat):
        bb, yy = b[arm], y[arm]
        out.append(
            (
                np.bincount(bb, minlength=nb).astype(float),
                np.bincount(bb, weights=yy, minlength=nb),
                np.bincount(bb, weights=yy * yy, minlength=nb),
            )
        )
    return out


def _moments(n, s, ss):
    with np.errstate(divide="ignore", invalid="ignore"):
        mean = np.where(n > 0, s / np.maximum(n, 1), 0.0)
        var = np.where(n > 1, (ss - s * s / np.maximum(n, 1)) / np.maximum(n - 1, 1), 0.0)
    return mean, np.maximum(var, 0.0)


def _node_score(n_t, s_t, ss_t, n_c, s_c, ss_c, alpha):
    mt, vt = _moments(n_t, s_t, ss_t)
    mc, vc = _moments(n_c, s_c, ss_c)
    with np.errstate(divide="ignore", invalid="ignore"):
        v = vt / np.maximum(n_t, 1) + vc / np.maximum(n_c, 1)
    n = n_t + n_c
    tau = mt - mc
    return alpha * n * tau**2 - (1.0 - alpha) * n * v


class _Grower:
    def __init__(self, X, w, y, Xe, we, ye, cfg, rng):
        self.X, self.w, self.y = X, w, y
        self.Xe, self.we, self.ye = Xe, we, ye
        self.cfg = cfg
        self.rng = rng
        self.nodes: list[Node] = []

    def leaf_estimate(self, est_idx):
        wt = self.we[est_idx]
        ye = self.ye[est_idx]
        return EffectEstimate.from_samples(ye[wt], ye[~wt])

    def _scores(self, thr, x, w, y, xe, wt_e):
        """Split scores for every candidate threshold of one feature."""
        m = self.cfg.min_leaf_per_arm
        nb = thr.size + 1
        b = np.searchsorted(thr, x, side="right")
        (ct, st, sst), (cc, sc, ssc) = _sums(b, w, y, nb)
        Lt = [np.cumsum(a)[:-1] for a in (ct, st, sst)]
        Lc = [np.cumsum(a)[:-1] for a in (cc, sc, ssc)]
        Rt = [a.sum() - l for a, l in zip((ct, st, sst), Lt)]
        Rc = [a.sum() - l for a, l in zip((cc, sc, ssc), Lc)]
        be = np.searchsorted(thr, xe, side="right")
        et = np.cumsum(np.bincount(be[wt_e], minlength=nb))[:-1]
        ec = np.cumsum(np.bincount(be[~wt_e], minlength=nb))[:-1]
        n_et, n_ec = wt_e.sum(), (~wt_e).sum()
        ok = (
            (Lt[0] >= m) & (Lc[0] >= m) & (Rt[0] >= m) & (Rc[0] >= m)
            & (et >= m) & (ec >= m) & (n_et - et >= m) & (n_ec - ec >= m)
        )
        score = _node_score(*Lt, *Lc, self.cfg.alpha) + _node_score(*Rt, *Rc, self.cfg.alpha)
        return np.where(ok, score, -np.inf)

    def best_split(self, idx, est_idx):
        cfg = self.cfg
        w, y = self.w[idx], self.y[idx]
        wt_e = self.we[est_idx]
        n_t, n_c = w.sum(), (~w).sum()
        base = _node_score(
            np.float64(n_t), y[w].sum(), (y[w] ** 2).sum(),
            np.float64(n_c), y[~w].sum(), (y[~w] ** 2).sum(),
            cfg.alpha,
        )
        M = self.X.shape[1]
        feats = np.arange(M)
        if cfg.max_features is not None and cfg.max_features < M:
            feats = np.sort(self.rng.choice(M, size=cfg.max_features, replace=False))
        best = None
        probs = np.linspace(0.0, 1.0, cfg.candidate_thresholds_per_feature + 2)[1:-1]
        for f in feats:
            x = self.X[idx, f]
            xe = self.Xe[est_idx, f]
            thr = np.unique(np.quantile(x, probs))
            # a threshold at the minimum leaves nothing on the left
            thr = thr[thr > x.min()]
            if thr.size == 0:
                continue
            score = self._scores(thr, x, w, y, xe, wt_e)
            i = int(np.argmax(score))  # first max = lowest threshold
            if not np.isfinite(score[i]):
                continue
            # refine inside the winning quantile bracket using observed midpoints
            lo = thr[i - 1] if i > 0 else x.min()
            hi = thr[i + 1] if i + 1 < thr.size else np.inf
            vals = np.unique(x[(x >= lo) & (x <= hi)]) if cfg.refine else x[:0]
            if vals.size > 1:
                fine = np.union1d((vals[:-1] + vals[1:]) / 2.0, thr[i : i + 1])
                fs = self._scores(fine, x, w, y, xe, wt_e)
                r = int(np.argmax(fs))
                if fs[r] > score[i]:
                    thr, score, i = fine, fs, r
            if best is None or score[i] > best[0]:
                best = (float(score[i]), int(f), float(thr[i]))
        if best is None:
            return None
        tol = 1e-12 * max(1.0, abs(base))
        if best[0] > base + tol:
            return SplitRule(best[1], best[2])
        return None

    def grow(self, idx, est_idx, depth):
        node_id = len(self.nodes)
        self.nodes.append(Node(depth=depth))
        rule = None
        if depth < self.cfg.max_depth:
            rule = self.best_split(idx, est_idx)
        if rule is None:
            self.nodes[node_id].estimate = self.leaf_estimate(est_idx)
            return node_id
        goes = self.X[idx, rule.feature_index] < rule.threshold
        goes_e = self.Xe[est_idx, rule.feature_index] < rule.threshold
        left = self.grow(idx[goes], est_idx[goes_e], depth + 1)
        right = self.grow(idx[~goes], est_idx[~goes_e], depth + 1)
        nd = self.nodes[node_id]
        nd.rule, nd.left, nd.right = rule, left, right
        return node_id


def fit_causal_tree(split, j, k, cfg=None):
    """Grow an honest causal tree for treatment ``j`` versus control on metric ``k``."""
    cfg = (cfg or CausalTreeConfig()).validate()
    if not 1 <= j <= split.train.n_treatments:
        raise ConfigError(f"treatment index {j} out of range")
    if not 0 <= k < split.train.n_metrics:
        raise ConfigError(f"metric index {k} out of range")
    X, w, y = _arm_view(split.train, j, k)
    Xe, we, ye = _arm_view(split.estimate, j, k)
    if we.sum() < 1 or (~we).sum() < 1:
        raise InsufficientDataError(
            f"estimation half lacks units in treatment {j} or control"
        )
    g = _Grower(X, w, y, Xe, we, ye, cfg, np.random.default_rng(cfg.seed))
    m = cfg.min_leaf_per_arm
    enough = min(w.sum(), (~w).sum(), we.sum(), (~we).sum()) >= m
    if enough:
        g.grow(np.arange(len(y)), np.arange(len(ye)), 0)
    else:
        g.nodes.append(Node(estimate=g.leaf_estimate(np.arange(len(ye)))))
    return CausalTree(j, k, tuple(g.nodes), cfg, split.train.n_features)


def tree_cohorts(tree, prefix=None):
    """Leaves of ``tree`` as a cohort partition plus their effect estimates."""
    prefix = prefix if prefix is not None else f"t{tree.treatment}m{tree.metric}"
    cohorts, effects = [], []

    def walk(i, preds, path):
        nd = tree.nodes[i]
        if nd.is_leaf:
            cohorts.append(Cohort(f"{prefix}:{path or '*'}", tuple(preds)))
            effects.append(nd.estimate)
            return
        r = nd.rule
        walk(nd.left, preds + [Predicate(r.feature_index, "<", r.threshold)], path + "L")
        walk(nd.right, preds + [Predicate(r.feature_index, ">=", r.threshold)], path + "R")

    walk(0, [], "")
    return CohortSet(tuple(cohorts), tree.n_features), effects
