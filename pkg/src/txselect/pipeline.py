"""End-to-end treatment selection: estimate, merge, optimize, bias-correct.

Each stage reads and writes plain JSON artifacts so the CLI can run stages
one at a time:

``effects.json``  per-(treatment, metric) cohort partitions (``CT.ST``), a
                  finished cohort table (``HT.ST``), member-level predictions
                  (``CF.DT``/``TM.DT``) or average effects (``Global``)
``merged.json``   common cohort refinement with its effect table
``policy.json``   the deployable :class:`~txselect.policy.PolicyFile`
"""

from __future__ import annotations

import json
import time
from dataclasses import asdict, dataclass, field
from pathlib import Path

import numpy as np

from .bootstrap import BootstrapInput, run_bootstrap
from .causal_tree import CausalTreeConfig, fit_causal_tree, tree_cohorts
from .cohorts import CohortSet, EffectEstimate
from .data import CsvSchema, ExperimentDataset, honest_split, load_experiment_csv
from .deterministic import saa_solve
from .errors import ConfigError, InfeasibleError, TxSelectError, ValidationError
from .member_effects import RegressorConfig
from .merge import EffectTable, default_source_order, merge_cohort_sets
from .methods import (
    COHORT_METHODS,
    METHODS,
    average_effects,
    cohort_effect_table,
    control_normalizer,
    forest_predictions,
    global_best_policy,
    heuristic_cohorts,
    two_model_predictions,
)
from .policy import PolicyFile, config_hash
from .problem import Constraint, build_problem
from .simulate import SimConfig, generate_dataset
from .stochastic import McsaConfig, mcsa_solve

PREFERRED_OPTIMIZER = {
    "HT.ST": "stochastic",
    "CT.ST": "stochastic",
    "CF.DT": "deterministic",
    "TM.DT": "deterministic",
    "Global": None,
}


@dataclass
class PipelineConfig:
    """Everything needed to go from experiment data to a policy file.

    ``data`` is either ``{"path": ..., "schema": {...}}`` for a CSV or
    ``{"simulate": {...}}`` for a generated dataset. Metric indices refer to
    the dataset's metric columns; ``objective_metric`` is moved to the front
    internally.
    """

    data: dict
    method: str = "CT.ST"
    objective_metric: int = 0
    constraints: list = field(default_factory=list)
    # estimator settings: "tree", "forest_trees", "forest_tree", "regressor",
    # "heuristic_columns", "honest_fraction"
    estimator: dict = field(default_factory=dict)
    # "kind" (stochastic/deterministic), "mcsa", "lp_method", "global_tol"
    optimizer: dict = field(default_factory=dict)
    bootstrap: dict = field(default_factory=dict)
    single_tree_objective: bool = False
    allow_unpaired: bool = False
    out: str = "out"
    seed: int = 0
    threads: int | None = None
    base_dir: str = "."

    def validate(self):
        if self.method not in METHODS:
            raise ConfigError(f"unknown method {self.method!r}; choose from {list(METHODS)}")
        kind = self.optimizer_kind
        preferred = PREFERRED_OPTIMIZER[self.method]
        if kind not in (None, "stochastic", "deterministic"):
            raise ConfigError(f"unknown optimizer kind {kind!r}")
        if preferred is not None and kind != preferred and not self.allow_unpaired:
            raise ConfigError(
                f"{self.method} pairs with the {preferred} optimizer; set "
                f"allow_unpaired to use the {kind} one"
            )
        if self.single_tree_objective and self.method != "CT.ST":
            raise ConfigError("single_tree_objective applies to CT.ST only")
        if "path" not in self.data and "simulate" not in self.data:
            raise ConfigError("data needs either 'path' (+ 'schema') or 'simulate'")
        B = int(self.bootstrap.get("B", 0))
        if B < 0:
            raise ConfigError("bootstrap B must be non-negative")
        if B and self.method not in COHORT_METHODS:
            raise ConfigError("the bootstrap is available for cohort-level methods only")
        self.constraint_objects()
        return self

    @property
    def optimizer_kind(self):
        return self.optimizer.get("kind", PREFERRED_OPTIMIZER.get(self.method))

    def constraint_objects(self):
        """Constraints re-indexed to the objective-first metric order."""
        out = []
        for c in self.constraints:
            d = c.to_dict() if isinstance(c, Constraint) else dict(c)
            try:
                metric = int(d["metric"])
            except (KeyError, TypeError, ValueError):
                raise ConfigError(f"bad constraint {c!r}: needs an integer 'metric'") from None
            if metric == self.objective_metric:
                raise ConfigError("the objective metric cannot also be constrained")
            if metric < 0:
                raise ConfigError(f"bad constraint {c!r}: negative metric index")
            out.append(_constraint_from_dict({**d, "metric": self._position(metric)}))
        return out

    def _position(self, metric):
        o = self.objective_metric
        if metric == o:
            return 0
        return metric + 1 if metric < o else metric

    def to_dict(self):
        d = asdict(self)
        d.pop("base_dir")
        d["constraints"] = [c.to_dict() if isinstance(c, Constraint) else c
                            for c in self.constraints]
        return d

    def hashable_dict(self):
        """The settings that determine the policy (output location and threads excluded)."""
        d = self.to_dict()
        d.pop("out")
        d.pop("threads")
        return d

    @classmethod
    def from_dict(cls, d, base_dir="."):
        d = dict(d)
        known = set(cls.__dataclass_fields__) - {"base_dir"}
        unknown = set(d) - known
        if unknown:
            raise ConfigError(f"unknown config keys: {sorted(unknown)}")
        if "data" not in d:
            raise ConfigError("config needs a 'data' section")
        return cls(**d, base_dir=str(base_dir)).validate()

    @classmethod
    def load(cls, path):
        path = Path(path)
        try:
            d = json.loads(path.read_text())
        except (OSError, json.JSONDecodeError) as exc:
            raise ConfigError(f"cannot read config {path}: {exc}") from None
        return cls.from_dict(d, base_dir=path.parent)


def _constraint_from_dict(d):
    try:
        return Constraint.from_dict(d)
    except (KeyError, TypeError, ValueError) as exc:
        raise ConfigError(f"bad constraint {d!r}: {exc}") from None


class _stage:
    """Prefix errors raised inside a stage with its name."""

    def __init__(self, name):
        self.name = name

    def __enter__(self):
        return self

    def __exit__(self, exc_type, exc, tb):
        if exc is not None and isinstance(exc, TxSelectError) and not getattr(exc, "stage", None):
            exc.stage = self.name
            if exc.args:
                exc.args = (f"[{self.name}] {exc.args[0]}", *exc.args[1:])
        return False


# ------------------------------------------------------------------ data


def load_data(cfg):
    """Load (or simulate) the dataset with the objective metric first."""
    d = cfg.data
    if "simulate" in d:
        sim = SimConfig.from_dict({"seed": cfg.seed, **d["simulate"]})
        ds = generate_dataset(sim)
    else:
        path = Path(d["path"])
        if not path.is_absolute():
            path = Path(cfg.base_dir) / path
        schema = d.get("schema")
        if schema is None:
            schema_path = path.with_suffix(".schema.json")
            if not schema_path.exists():
                raise ConfigError(f"no schema given and {schema_path} not found")
            schema = json.loads(schema_path.read_text())
        ds = load_experiment_csv(path, CsvSchema.from_dict(schema))
    return reorder_metrics(ds, cfg.objective_metric)


def reorder_metrics(ds, objective):
    if not 0 <= objective < ds.n_metrics:
        raise ConfigError(f"objective metric {objective} out of range")
    if objective == 0:
        return ds
    order = [objective] + [k for k in range(ds.n_metrics) if k != objective]
    cf = None if ds.counterfactuals is None else ds.counterfactuals[:, :, order]
    return ExperimentDataset(ds.unit_ids, ds.features, ds.variants, ds.outcomes[:, order],
                             ds.n_treatments, ds.feature_names,
                             tuple(ds.metric_names[k] for k in order), cf)


# --------------------------------------------------------------- effects


def fit_effects(cfg, ds):
    """Stage 2 of the pipeline: effect estimates as a JSON-ready dict."""
    est = cfg.estimator
    seed = cfg.seed
    base = {"method": cfg.method, "n_treatments": ds.n_treatments, "n_metrics": ds.n_metrics,
            "n_features": ds.n_features}
    if cfg.method == "Global":
        return {**base, "kind": "global", "ate": average_effects(ds).tolist()}
    if cfg.method == "HT.ST":
        cols = est.get("heuristic_columns") or list(range(ds.n_features))
        cs = heuristic_cohorts(ds, cols)
        return {**base, "kind": "merged", **_table_dict(cs, cohort_effect_table(ds, cs))}
    if cfg.method == "CT.ST":
        tcfg = CausalTreeConfig.from_dict({**est.get("tree", {}), "seed": seed})
        split = honest_split(ds, float(est.get("honest_fraction", 0.5)), seed=seed)
        pairs = [(1, 0)] if cfg.single_tree_objective else default_source_order(
            ds.n_treatments, ds.n_metrics)
        if cfg.single_tree_objective:
            tree = fit_causal_tree(split, 1, 0, tcfg)
            cs, _ = tree_cohorts(tree)
            return {**base, "kind": "merged", "trees": [tree.to_dict()],
                    **_table_dict(cs, cohort_effect_table(split.estimate, cs))}
        sources = []
        for j, k in pairs:
            tree = fit_causal_tree(split, j, k, tcfg)
            cs, eff = tree_cohorts(tree)
            sources.append({"treatment": j, "metric": k, "cohorts": cs.to_dict(),
                            "effects": [e.to_dict() for e in eff], "tree": tree.to_dict()})
        return {**base, "kind": "sources", "sources": sources}
    if cfg.method == "CF.DT":
        fcfg = CausalTreeConfig.from_dict({**est.get("forest_tree", {}), "seed": seed})
        tau, var, _ = forest_predictions(ds, ds.features, int(est.get("forest_trees", 20)),
                                         fcfg, seed)
    else:
        rcfg = RegressorConfig(**{**est.get("regressor", {}), "seed": seed,
                                  "n_jobs": cfg.threads})
        tau, _ = two_model_predictions(ds, ds.features, rcfg)
        var = np.zeros_like(tau)
    return {**base, "kind": "member", "unit_ids": ds.unit_ids.tolist(),
            "tau": tau.tolist(), "var": var.tolist()}


def _table_dict(cs, table):
    return {"cohorts": cs.to_dict(), "sources": [list(s) for s in table.sources],
            "effects": table.to_list()}


def _table_from_dict(d):
    cs = CohortSet.from_dict(d["cohorts"])
    table = EffectTable([[EffectEstimate.from_dict(e) for e in row] for row in d["effects"]],
                        [tuple(s) for s in d["sources"]])
    return cs, table


def merge_effects(effects, seed=0):
    """Stage 3: merge per-source partitions. Other artifact kinds pass through."""
    if effects["kind"] != "sources":
        return effects
    sources, labels = [], []
    for s in effects["sources"]:
        cs = CohortSet.from_dict(s["cohorts"])
        sources.append((cs, [EffectEstimate.from_dict(e) for e in s["effects"]]))
        labels.append((int(s["treatment"]), int(s["metric"])))
    cs, table = merge_cohort_sets(sources, labels, seed=seed)
    out = {k: v for k, v in effects.items() if k != "sources"}
    return {**out, "kind": "merged", **_table_dict(cs, table)}


# -------------------------------------------------------------- optimize


@dataclass
class OptimizeResult:
    policy: PolicyFile
    details: dict
    trace: object = None
    bootstrap: object = None


def _mcsa_config(cfg):
    return McsaConfig.from_dict({"prox": "adagrad", "gamma0": 5.0, **cfg.optimizer.get("mcsa", {}),
                                 "seed": cfg.seed})


def optimize(cfg, ds, effects):
    """Stage 4: turn merged effects into a policy (before bias correction)."""
    cons = cfg.constraint_objects()
    norm = control_normalizer(ds)
    J = ds.n_treatments
    prov = {"config_hash": config_hash(cfg.hashable_dict()), "seed": cfg.seed}
    kind = effects["kind"]
    if kind == "global":
        choice = global_best_policy(np.array(effects["ate"]), cons, norm,
                                    tol=float(cfg.optimizer.get("global_tol", 0.0)))
        cs = CohortSet.whole_space(ds.n_features)
        x = choice.policy(1, J)
        pol = PolicyFile("cohort", cfg.method, J, x, cohorts=cs,
                         feature_names=ds.feature_names, metric_names=ds.metric_names,
                         effects=[{"ate": effects["ate"]}], provenance=prov)
        details = {"arm": choice.arm, "feasible": choice.feasible,
                   "violation": choice.violation, "objective": choice.objective}
        return OptimizeResult(pol, details)

    if kind == "merged":
        cs, table = _table_from_dict(effects)
        arr = table.arrays(J, ds.n_metrics)
        share = np.bincount(cs.assign(ds.features), minlength=len(cs)) / ds.n
        prob = build_problem(arr["tau"], arr["var"], share, cons, norm)
        x, trace, details = _solve(cfg, prob)
        pol = PolicyFile("cohort", cfg.method, J, x, cohorts=cs,
                         feature_names=ds.feature_names, metric_names=ds.metric_names,
                         effects=table.to_list(), provenance=prov)
        details.update(cohorts=len(cs), expected=_expected(prob, x))
        return OptimizeResult(pol, details, trace)

    if kind == "member":
        tau, var = np.array(effects["tau"]), np.array(effects["var"])
        n = tau.shape[1]
        prob = build_problem(tau, var, np.full(n, 1.0 / n), cons, norm)
        x, trace, details = _solve(cfg, prob)
        member_eff = {"tau": effects["tau"], "var": effects["var"]}
        pol = PolicyFile("member", cfg.method, J, x, unit_ids=list(effects["unit_ids"]),
                         feature_names=ds.feature_names, metric_names=ds.metric_names,
                         effects=[member_eff], provenance=prov)
        details.update(members=n, expected=_expected(prob, x))
        return OptimizeResult(pol, details, trace)
    raise ValidationError(f"unknown effects artifact kind {kind!r}")


def _expected(prob, x):
    return {"objective": prob.objective(x),
            "constraint_slack": (-prob.constraint_values(x)).tolist()}


def _solve(cfg, prob):
    if cfg.optimizer_kind == "deterministic":
        sol = saa_solve(prob.deterministic(), method=cfg.optimizer.get("lp_method", "auto"))
        if not sol.optimal:
            raise InfeasibleError(
                "the plug-in program is infeasible; the stochastic optimizer with a "
                "cohort-level estimator tolerates noisy constraints better"
            )
        return sol.x, None, {"solver": f"lp-{sol.method}", "duality_gap": sol.gap,
                             "iterations": sol.iterations}
    x, trace = mcsa_solve(prob, _mcsa_config(cfg))
    return x, trace, {"solver": "mcsa", **trace.summary()}


# ------------------------------------------------------------- bootstrap


def bootstrap_policy(cfg, ds, effects, x_hat):
    """Parametric bootstrap of a cohort policy; returns a BootstrapResult."""
    if effects["kind"] != "merged":
        raise ConfigError("the bootstrap needs merged cohort effects")
    cons = cfg.constraint_objects()
    norm = control_normalizer(ds)
    cs, table = _table_from_dict(effects)
    arr = table.arrays(ds.n_treatments, ds.n_metrics)
    share = np.bincount(cs.assign(ds.features), minlength=len(cs)) / ds.n
    deterministic = cfg.optimizer_kind == "deterministic"
    mcfg = _mcsa_config(cfg)

    def solver(mu, vt, vc, nt, nc):
        prob = build_problem(mu, vt / nt + vc / nc, share, cons, norm)
        if deterministic:
            sol = saa_solve(prob.deterministic(), method=cfg.optimizer.get("lp_method", "auto"))
            if not sol.optimal:
                raise InfeasibleError("bootstrap re-solve infeasible")
            return sol.x
        return mcsa_solve(prob, mcfg)[0]

    # the solver returns policies with a leading control column
    inp = BootstrapInput(
        arr["tau"], arr["var_treat"], arr["var_control"], arr["n_treat"], arr["n_control"], solver,
        B=int(cfg.bootstrap.get("B", 200)), seed=cfg.seed, means_only=deterministic,
        max_failure_rate=float(cfg.bootstrap.get("max_failure_rate", 0.2)),
    )
    return run_bootstrap(inp, x_hat=x_hat)


# ------------------------------------------------------------------ run


@dataclass
class PipelineResult:
    policy: PolicyFile
    report: dict
    paths: dict


def run_pipeline(cfg, write=True):
    """Load data, estimate, merge, optimize and (optionally) bias-correct."""
    cfg.validate()
    t0 = time.time()
    with _stage("data"):
        ds = load_data(cfg)
    with _stage("fit-effects"):
        effects = fit_effects(cfg, ds)
    with _stage("merge"):
        merged = merge_effects(effects, cfg.seed)
    with _stage("optimize"):
        res = optimize(cfg, ds, merged)
    policy = res.policy
    boot = None
    if int(cfg.bootstrap.get("B", 0)) > 0:
        with _stage("bootstrap"):
            boot = bootstrap_policy(cfg, ds, merged, policy.probabilities)
            policy.probabilities = boot.x_corrected
            policy.bias_corrected = True
            policy.validate()
    report = build_report(cfg, ds, merged, res, boot)
    report["seconds"] = time.time() - t0
    paths = {}
    if write:
        out = Path(cfg.out)
        if not out.is_absolute():
            out = Path(cfg.base_dir) / out
        out.mkdir(parents=True, exist_ok=True)
        policy.provenance["created"] = time.strftime("%Y-%m-%dT%H:%M:%SZ", time.gmtime())
        paths["policy"] = out / "policy.json"
        policy.write(paths["policy"])
        paths["report"] = out / "report.json"
        paths["report"].write_text(json.dumps(report, indent=2, sort_keys=True) + "\n")
        paths["report_text"] = out / "report.txt"
        paths["report_text"].write_text(format_report(report))
        if res.trace is not None:
            paths["trace"] = out / "trace.csv"
            res.trace.to_csv(paths["trace"])
        if boot is not None:
            paths["bootstrap"] = out / "bootstrap.json"
            boot.write_report(paths["bootstrap"])
    return PipelineResult(policy, report, paths)


def build_report(cfg, ds, effects, res, boot=None):
    rep = {
        "method": cfg.method,
        "optimizer": cfg.optimizer_kind,
        "units": ds.n,
        "arm_counts": ds.arm_counts().tolist(),
        "metrics": list(ds.metric_names),
        "control_means": ds.control_means().tolist(),
        "constraints": [c.to_dict() for c in cfg.constraint_objects()],
        "average_effects": average_effects(ds).tolist(),
        "optimizer_summary": res.details,
        "policy_rows": policy_rows(res.policy),
        "bias_corrected": boot is not None,
    }
    if boot is not None:
        b = boot.bias_hat.reshape(boot.x_hat.shape)
        rep["bootstrap"] = {
            "failures": boot.failures,
            "bias_l1_mean": float(np.abs(b).sum(axis=1).mean()),
            "bias_l1_max": float(np.abs(b).sum(axis=1).max()),
        }
    return rep


def policy_rows(policy):
    return {"rows": policy.n_rows,
            "mean_allocation": policy.probabilities.mean(axis=0).tolist()}


def format_report(rep):
    lines = [f"method: {rep['method']} (optimizer: {rep['optimizer']})",
             f"units: {rep['units']}  arm counts: {rep['arm_counts']}",
             f"metrics: {', '.join(rep['metrics'])}",
             "average effects by treatment (rows = metrics):"]
    for name, row in zip(rep["metrics"], rep["average_effects"]):
        lines.append(f"  {name}: " + "  ".join(f"{v:+.4g}" for v in row))
    lines.append("optimizer:")
    for k, v in rep["optimizer_summary"].items():
        lines.append(f"  {k}: {v}")
    lines.append(f"policy rows: {rep['policy_rows']['rows']}  mean allocation: "
                 + "  ".join(f"{v:.3f}" for v in rep["policy_rows"]["mean_allocation"]))
    if "bootstrap" in rep:
        b = rep["bootstrap"]
        lines.append(f"bootstrap: failures {b['failures']}, bias L1 per row mean "
                     f"{b['bias_l1_mean']:.4g} max {b['bias_l1_max']:.4g}")
    return "\n".join(lines) + "\n"
