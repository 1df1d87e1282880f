"""Synthetic randomized experiments with known potential outcomes.

Every unit carries ``M`` standard-normal heterogeneity variables ``H``.
Treatment ``j`` acts through ``H[m(j)]**2``; the potential outcome of
metric ``k`` under arm ``a`` is

    Y_k(a) = b_k + (sum_j W[j, k]) * U + eps_k + W[a, k] * H[m(a)]**2   (a >= 1)
    Y_k(0) = b_k + (sum_j W[j, k]) * U + eps_k

with ``U ~ N(0, (w s_U)^2)`` and ``eps_k ~ N(0, (w s_Y)^2)`` shared by all
arms of a unit, so individual effects are noise free while observed
outcomes get noisier as the uncertainty weight ``w`` grows. The baseline
``b_k`` keeps control means away from zero so that normalized effects are
defined.
"""

from __future__ import annotations

import csv
import json
import time
from dataclasses import asdict, dataclass, field
from pathlib import Path

import numpy as np

from .causal_tree import CausalTreeConfig
from .data import ExperimentDataset
from .errors import ConfigError, NormalizationError, TxSelectError
from .member_effects import RegressorConfig
from .methods import (
    METHODS,
    average_effects,
    causal_tree_cohorts,
    cohort_effect_table,
    control_normalizer,
    forest_predictions,
    global_best_policy,
    heuristic_cohorts,
    solve_cohort_policy,
    solve_member_policy,
    two_model_predictions,
    CohortModel,
)
from .problem import Constraint
from .stochastic import McsaConfig


def draw_weights(J, K, rng, min_abs=0.3, max_tries=10_000):
    """Random ``(J, K+1)`` effect weights with opposing metrics.

    Entries are uniform on ``[-1, 1]`` with ``|W| >= min_abs``. Objective
    weights are made positive, and draws are rejected until the origin lies
    strictly inside the convex hull of the treatments' guardrail vectors
    (``W[:, 1:]``): every treatment harms some guardrail, yet a mixture can
    cancel them all out.
    """
    from scipy.optimize import linprog

    for _ in range(max_tries):
        mag = rng.uniform(min_abs, 1.0, size=(J, K + 1))
        W = mag * rng.choice([-1.0, 1.0], size=(J, K + 1))
        W[:, 0] = np.abs(W[:, 0])
        if K == 0:
            return W
        # origin strictly inside the hull: lambda >= t, sum lambda = 1, G^T lambda = 0, max t > 0
        G = W[:, 1:]
        c = np.zeros(J + 1)
        c[-1] = -1.0
        A_eq = np.zeros((K + 1, J + 1))
        A_eq[:K, :J] = G.T
        A_eq[K, :J] = 1.0
        b_eq = np.zeros(K + 1)
        b_eq[K] = 1.0
        A_ub = np.hstack([-np.eye(J), np.ones((J, 1))])
        res = linprog(c, A_ub=A_ub, b_ub=np.zeros(J), A_eq=A_eq, b_eq=b_eq,
                      bounds=[(0, None)] * J + [(None, 1.0)], method="highs")
        if res.status == 0 and -res.fun > 0.05:
            return W
    raise ConfigError("could not draw weights with the origin inside the guardrail hull")


@dataclass(frozen=True)
class SimConfig:
    J: int = 3
    K: int = 2
    M: int = 4
    n: int = 20_000
    W: tuple | None = None
    uncertainty_weight: float = 0.0
    # feature index driving each 0-based treatment j; default j -> j mod M
    h_assignment: tuple[int, ...] | None = None
    baseline: float = 4.0
    s_U: float = 1.0
    s_Y: float = 1.0
    seed: int = 0

    def validate(self):
        if self.J < 1 or self.K < 0 or self.M < 1 or self.n < 2:
            raise ConfigError("need J >= 1, K >= 0, M >= 1 and n >= 2")
        if self.uncertainty_weight < 0:
            raise ConfigError("uncertainty_weight must be non-negative")
        if self.W is not None and np.asarray(self.W).shape != (self.J, self.K + 1):
            raise ConfigError(f"W must have shape ({self.J}, {self.K + 1})")
        h = self.heterogeneity_index()
        if len(h) != self.J or min(h) < 0 or max(h) >= self.M:
            raise ConfigError("h_assignment needs one feature index in 0..M-1 per treatment")
        return self

    def heterogeneity_index(self):
        if self.h_assignment is None:
            return tuple((j % self.M) for j in range(self.J))
        return tuple(int(m) for m in self.h_assignment)

    def weights(self):
        if self.W is not None:
            return np.asarray(self.W, dtype=float)
        rng = np.random.default_rng(np.random.SeedSequence([self.seed, 7919]))
        return draw_weights(self.J, self.K, rng)

    @classmethod
    def from_dict(cls, d):
        d = dict(d)
        if d.get("W") is not None:
            d["W"] = tuple(tuple(float(v) for v in row) for row in d["W"])
        if d.get("h_assignment") is not None:
            d["h_assignment"] = tuple(d["h_assignment"])
        try:
            return cls(**d).validate()
        except TypeError as exc:
            raise ConfigError(f"simulation config: {exc}") from None


def generate_dataset(cfg):
    """Draw a dataset with full counterfactuals; deterministic given ``cfg``.

    Heterogeneity variables, arm labels and standardized noise come from
    separate streams, so changing only the uncertainty weight rescales the
    same noise draws.
    """
    cfg = cfg.validate()
    W = cfg.weights()
    n, J, K, M = cfg.n, cfg.J, cfg.K, cfg.M
    s_h, s_v, s_u, s_e = np.random.SeedSequence(cfg.seed).spawn(4)
    H = np.random.default_rng(s_h).standard_normal((n, M))
    variants = np.random.default_rng(s_v).integers(0, J + 1, size=n)
    w = cfg.uncertainty_weight
    U = np.random.default_rng(s_u).standard_normal(n) * (w * cfg.s_U)
    eps = np.random.default_rng(s_e).standard_normal((n, K + 1)) * (w * cfg.s_Y)
    base = cfg.baseline + U[:, None] * W.sum(axis=0)[None, :] + eps
    cf = np.repeat(base[:, None, :], J + 1, axis=1)
    h = cfg.heterogeneity_index()
    for j in range(1, J + 1):
        cf[:, j, :] += H[:, h[j - 1], None] ** 2 * W[j - 1][None, :]
    outcomes = cf[np.arange(n), variants]
    return ExperimentDataset(
        unit_ids=np.arange(n),
        features=H,
        variants=variants,
        outcomes=outcomes,
        n_treatments=J,
        feature_names=tuple(f"H{m + 1}" for m in range(M)),
        metric_names=tuple(f"Y{k}" for k in range(K + 1)),
        counterfactuals=cf,
    )


@dataclass(frozen=True)
class PolicyEvaluation:
    """Normalized average individual effect of a policy, per metric."""

    tau_normalized: np.ndarray
    raw_effect: np.ndarray
    control_mean: np.ndarray
    std_across_runs: np.ndarray | None = None

    def to_dict(self):
        d = {
            "tau_normalized": self.tau_normalized.tolist(),
            "raw_effect": self.raw_effect.tolist(),
            "control_mean": self.control_mean.tolist(),
        }
        if self.std_across_runs is not None:
            d["std_across_runs"] = self.std_across_runs.tolist()
        return d


def evaluate_policy(x, ds):
    """Counterfactual effect of member-level policy ``x`` (shape ``(n, J+1)``).

    ``tau_k = mean_i sum_j (Y_k(j) - Y_k(0)) x_ij / mean_i Y_k(0)``.
    """
    if ds.counterfactuals is None:
        raise ConfigError("policy evaluation needs counterfactual outcomes")
    x = np.asarray(x, dtype=float)
    cf = ds.counterfactuals
    if x.shape != cf.shape[:2]:
        raise ConfigError(f"policy must have shape {cf.shape[:2]}, got {x.shape}")
    ite = cf - cf[:, :1, :]
    raw = np.einsum("ijk,ij->k", ite, x) / ds.n
    mu0 = cf[:, 0, :].mean(axis=0)
    if np.any(mu0 == 0):
        raise NormalizationError("control mean is zero; normalized effect undefined")
    return PolicyEvaluation(raw / mu0, raw, mu0)


# ------------------------------------------------------------- comparison


@dataclass(frozen=True)
class ComparisonConfig:
    J: int = 3
    K: int = 2
    M: int = 4
    n_train: int = 20_000
    n_test: int = 20_000
    weights: tuple[float, ...] = (0.0, 0.5, 1.0, 2.0, 4.0)
    repeats: int = 10
    methods: tuple[str, ...] = METHODS
    seed: int = 0
    baseline: float = 4.0
    # guardrails: |normalized effect| <= band for every metric 1..K
    band: float = 0.0
    eta0: float = 0.02
    global_tol: float = 0.02
    honest_fraction: float = 0.5
    tree: dict = field(default_factory=lambda: {"alpha": 0.1, "min_leaf_per_arm": 100,
                                                "max_depth": 5, "refine": False})
    forest_trees: int = 10
    forest_tree: dict = field(default_factory=lambda: {"alpha": 0.5, "min_leaf_per_arm": 50,
                                                       "max_depth": 6})
    regressor: dict = field(default_factory=lambda: {"n_estimators": 20, "max_depth": 8,
                                                     "min_samples_leaf": 20})
    mcsa: dict = field(default_factory=lambda: {"N": 2000, "L": 50, "prox": "adagrad",
                                                "gamma0": 5.0})
    heuristic_columns: tuple[int, ...] | None = None

    def validate(self):
        unknown = set(self.methods) - set(METHODS)
        if unknown:
            raise ConfigError(f"unknown methods: {sorted(unknown)}")
        if self.repeats < 1 or not self.weights:
            raise ConfigError("need at least one repeat and one weight")
        if any(w < 0 for w in self.weights):
            raise ConfigError("uncertainty weights must be non-negative")
        return self

    @classmethod
    def from_dict(cls, d):
        d = dict(d)
        for key in ("weights", "methods", "heuristic_columns"):
            if d.get(key) is not None:
                d[key] = tuple(d[key])
        try:
            return cls(**d).validate()
        except TypeError as exc:
            raise ConfigError(f"comparison config: {exc}") from None

    def constraints(self):
        return [Constraint(k, "band", self.band) for k in range(1, self.K + 1)]


def run_method(method, train, test, cfg, seed=0):
    """Fit ``method`` on ``train`` and return its member-level policy on ``test``."""
    cons = cfg.constraints()
    norm = control_normalizer(train)
    info = {}
    if method == "Global":
        choice = global_best_policy(average_effects(train), cons, norm, tol=cfg.global_tol)
        info = {"arm": choice.arm, "feasible": choice.feasible}
        return choice.policy(test.n, test.n_treatments), info
    if method in ("HT.ST", "CT.ST"):
        if method == "HT.ST":
            cols = cfg.heuristic_columns or tuple(range(train.n_features))
            cs = heuristic_cohorts(train, cols)
            model = CohortModel(cs, cohort_effect_table(train, cs))
        else:
            tcfg = CausalTreeConfig(**{**cfg.tree, "seed": seed})
            model = causal_tree_cohorts(train, tcfg, cfg.honest_fraction, seed)
        mcfg = McsaConfig(**{"eta0": cfg.eta0, **cfg.mcsa, "seed": seed})
        x, trace = solve_cohort_policy(model, train, cons, mcfg, norm)
        info = {"cohorts": len(model.cohorts), "objective_steps": trace.n_objective_steps}
        return x[model.cohorts.assign(test.features)], info
    if method == "CF.DT":
        fcfg = CausalTreeConfig(**{**cfg.forest_tree, "seed": seed})
        tau, _, _ = forest_predictions(train, test.features, cfg.forest_trees, fcfg, seed)
    elif method == "TM.DT":
        tau, _ = two_model_predictions(train, test.features, RegressorConfig(**{**cfg.regressor,
                                                                                "seed": seed}))
    else:
        raise ConfigError(f"unknown method {method!r}")
    x, sol = solve_member_policy(tau, cons, norm)
    info = {"lp_method": sol.method}
    return x, info


@dataclass
class ComparisonResult:
    runs: list
    summary: list
    manifest: dict

    def write(self, out_dir):
        out = Path(out_dir)
        out.mkdir(parents=True, exist_ok=True)
        K1 = self.manifest["config"]["K"] + 1
        with (out / "runs.csv").open("w", newline="") as fh:
            w = csv.writer(fh)
            w.writerow(["method", "weight", "repeat", "metric", "tau", "status"])
            for r in self.runs:
                for k in range(K1):
                    tau = r["tau"][k] if r["tau"] is not None else float("nan")
                    w.writerow([r["method"], r["weight"], r["repeat"], k, repr(tau), r["status"]])
        with (out / "summary.csv").open("w", newline="") as fh:
            w = csv.writer(fh)
            w.writerow(["method", "weight", "n_ok",
                        *[f"tau{k}_mean" for k in range(K1)], *[f"tau{k}_sd" for k in range(K1)]])
            for s in self.summary:
                w.writerow([s["method"], s["weight"], s["n_ok"],
                            *map(repr, s["mean"]), *map(repr, s["sd"])])
        (out / "manifest.json").write_text(json.dumps(self.manifest, indent=2, sort_keys=True))

    def taus(self, method, weight):
        """``(repeats, K+1)`` array of normalized effects (NaN for failed cells)."""
        rows = [r for r in self.runs if r["method"] == method and r["weight"] == weight]
        rows.sort(key=lambda r: r["repeat"])
        K1 = self.manifest["config"]["K"] + 1
        return np.array([r["tau"] if r["tau"] is not None else [np.nan] * K1 for r in rows])


def run_comparison(cfg=None, progress=None):
    """All methods on fresh train/test draws for every (repeat, weight).

    Within a repeat the effect weights and the seeds of both datasets are
    fixed, so weights differ only in noise scale. Errors in a cell are
    recorded and the run continues.
    """
    cfg = (cfg or ComparisonConfig()).validate()
    runs, Ws = [], []
    t0 = time.time()
    for r in range(cfg.repeats):
        W = draw_weights(cfg.J, cfg.K, np.random.default_rng(np.random.SeedSequence([cfg.seed, r, 2])))
        Ws.append(W.tolist())
        tr_seed, te_seed, fit_seed = (int(s.generate_state(1)[0])
                                      for s in np.random.SeedSequence([cfg.seed, r]).spawn(3))
        for wgt in cfg.weights:
            common = dict(J=cfg.J, K=cfg.K, M=cfg.M, W=tuple(map(tuple, W)),
                          uncertainty_weight=wgt, baseline=cfg.baseline)
            train = generate_dataset(SimConfig(n=cfg.n_train, seed=tr_seed, **common))
            test = generate_dataset(SimConfig(n=cfg.n_test, seed=te_seed, **common))
            for m in cfg.methods:
                t1 = time.time()
                try:
                    x, info = run_method(m, train, test, cfg, fit_seed)
                    ev = evaluate_policy(x, test)
                    row = {"tau": ev.tau_normalized.tolist(), "status": "ok", **info}
                except TxSelectError as exc:
                    row = {"tau": None, "status": f"failed: {type(exc).__name__}: {exc}"}
                row.update(method=m, weight=wgt, repeat=r, seconds=time.time() - t1)
                runs.append(row)
                if progress:
                    progress(row)
    summary = []
    for m in cfg.methods:
        for wgt in cfg.weights:
            taus = np.array([r["tau"] for r in runs
                             if r["method"] == m and r["weight"] == wgt and r["tau"] is not None])
            K1 = cfg.K + 1
            if taus.size:
                mean, sd = taus.mean(axis=0), taus.std(axis=0, ddof=1) if len(taus) > 1 else np.zeros(K1)
            else:
                mean = sd = np.full(K1, np.nan)
            summary.append({"method": m, "weight": wgt, "n_ok": int(len(taus)),
                            "mean": [float(v) for v in mean], "sd": [float(v) for v in sd]})
    manifest = {"config": asdict(cfg), "W": Ws, "seconds": time.time() - t0}
    return ComparisonResult(runs, summary, manifest)
