"""Command-line interface: ``txselect <subcommand> [options]``.

Exit codes: 0 success, 2 configuration error, 3 infeasible problem or
unstable bootstrap, 4 data error, 1 anything else raised by the package.
"""

from __future__ import annotations

import argparse
import csv
import json
import logging
import os
import sys
from pathlib import Path

import numpy as np

from .data import CsvSchema, load_experiment_csv, write_experiment_csv
from .errors import ConfigError, ParseError, SchemaError, TxSelectError
from .pipeline import (
    PipelineConfig,
    bootstrap_policy,
    build_report,
    fit_effects,
    format_report,
    load_data,
    merge_effects,
    optimize,
    run_pipeline,
    _stage,
)
from .policy import PolicyFile, score
from .simulate import ComparisonConfig, SimConfig, evaluate_policy, generate_dataset, run_comparison

log = logging.getLogger("txselect")


def _read_json(path, what="file"):
    try:
        return json.loads(Path(path).read_text())
    except OSError as exc:
        raise ConfigError(f"cannot read {what} {path}: {exc}") from None
    except json.JSONDecodeError as exc:
        raise ConfigError(f"{what} {path} is not valid JSON: {exc}") from None


def _write_json(path, obj):
    Path(path).parent.mkdir(parents=True, exist_ok=True)
    Path(path).write_text(json.dumps(obj, indent=2, sort_keys=True) + "\n")


def _pipeline_config(args):
    cfg = PipelineConfig.load(args.config)
    if args.seed is not None:
        cfg.seed = args.seed
    if args.out is not None:
        cfg.out = str(Path(args.out).resolve())
    if args.threads is not None:
        cfg.threads = args.threads
    if getattr(args, "single_tree_objective", False):
        cfg.single_tree_objective = True
    return cfg.validate()


def _out_dir(cfg):
    out = Path(cfg.out)
    if not out.is_absolute():
        out = Path(cfg.base_dir) / out
    out.mkdir(parents=True, exist_ok=True)
    return out


# ------------------------------------------------------------ commands


def cmd_simulate(args):
    d = _read_json(args.config, "config") if args.config else {}
    out = Path(args.out or "sim")
    out.mkdir(parents=True, exist_ok=True)
    if args.compare:
        d = d.get("comparison", d)
        if args.seed is not None:
            d["seed"] = args.seed
        cfg = ComparisonConfig.from_dict(d)
        res = run_comparison(cfg, progress=lambda r: log.info(
            "%s weight=%s repeat=%s %s", r["method"], r["weight"], r["repeat"], r["status"]))
        res.write(out)
        print(f"wrote {out / 'summary.csv'}, {out / 'runs.csv'}, {out / 'manifest.json'}")
        return 0
    d = d.get("simulate", d)
    if args.seed is not None:
        d["seed"] = args.seed
    cfg = SimConfig.from_dict(d)
    ds = generate_dataset(cfg)
    schema = write_experiment_csv(ds, out / "data.csv")
    _write_json(out / "data.schema.json", schema.to_dict())
    _write_json(out / "simulation.json", {"config": {**d, "seed": cfg.seed},
                                          "W": cfg.weights().tolist()})
    print(f"wrote {out / 'data.csv'} ({ds.n} units)")
    return 0


def cmd_fit_effects(args):
    cfg = _pipeline_config(args)
    with _stage("data"):
        ds = load_data(cfg)
    with _stage("fit-effects"):
        eff = fit_effects(cfg, ds)
    path = _out_dir(cfg) / "effects.json"
    _write_json(path, eff)
    print(f"wrote {path}")
    return 0


def cmd_merge(args):
    cfg = _pipeline_config(args)
    out = _out_dir(cfg)
    eff = _read_json(args.effects or out / "effects.json", "effects")
    with _stage("merge"):
        merged = merge_effects(eff, cfg.seed)
    path = out / "merged.json"
    _write_json(path, merged)
    print(f"wrote {path}")
    return 0


def cmd_optimize(args):
    cfg = _pipeline_config(args)
    out = _out_dir(cfg)
    eff = _read_json(args.effects or out / "merged.json", "effects")
    with _stage("data"):
        ds = load_data(cfg)
    with _stage("optimize"):
        res = optimize(cfg, ds, merge_effects(eff, cfg.seed))
    res.policy.write(out / "policy.json")
    if res.trace is not None:
        res.trace.to_csv(out / "trace.csv")
    rep = build_report(cfg, ds, eff, res)
    _write_json(out / "report.json", rep)
    (out / "report.txt").write_text(format_report(rep))
    print(f"wrote {out / 'policy.json'}")
    return 0


def cmd_bootstrap(args):
    cfg = _pipeline_config(args)
    out = _out_dir(cfg)
    eff = _read_json(args.effects or out / "merged.json", "effects")
    pol = PolicyFile.read(args.policy or out / "policy.json")
    if args.B is not None:
        cfg.bootstrap = {**cfg.bootstrap, "B": args.B}
    cfg.bootstrap.setdefault("B", 200)
    with _stage("data"):
        ds = load_data(cfg)
    with _stage("bootstrap"):
        boot = bootstrap_policy(cfg, ds, merge_effects(eff, cfg.seed), pol.probabilities)
    boot.write_report(out / "bootstrap.json")
    pol.probabilities = boot.x_corrected
    pol.bias_corrected = True
    pol.validate()
    pol.write(out / "policy_corrected.json")
    print(f"wrote {out / 'bootstrap.json'} and {out / 'policy_corrected.json'}")
    return 0


def cmd_evaluate(args):
    pol = PolicyFile.read(args.policy)
    if args.data:
        schema = CsvSchema.from_dict(_read_json(args.schema or Path(args.data).with_suffix(
            ".schema.json"), "schema"))
        ds = load_experiment_csv(args.data, schema)
    elif args.config:
        ds = load_data(_pipeline_config(args))
    else:
        raise ConfigError("give --data or a --config whose data section has counterfactuals")
    if ds.counterfactuals is None:
        raise ConfigError("evaluation needs a dataset with counterfactual columns")
    if pol.kind == "cohort":
        x = pol.probabilities_for(features=ds.features)
    else:
        x = pol.probabilities_for(unit_ids=ds.unit_ids)
    ev = evaluate_policy(x, ds)
    result = {"policy": str(args.policy), "units": ds.n, **ev.to_dict()}
    if args.out:
        _write_json(Path(args.out) / "evaluation.json", result)
    print(json.dumps(result, indent=2, sort_keys=True))
    return 0


def cmd_pipeline(args):
    cfg = _pipeline_config(args)
    res = run_pipeline(cfg)
    print(format_report(res.report), end="")
    for name, p in res.paths.items():
        print(f"{name}: {p}")
    return 0


def cmd_score(args):
    pol = PolicyFile.read(args.policy)
    ids = None
    if args.features:
        with Path(args.features).open(newline="") as fh:
            rows = list(csv.DictReader(fh))
        names = list(pol.feature_names)
        if not rows:
            raise SchemaError("feature file has no rows")
        missing = [n for n in names if n not in rows[0]]
        if pol.kind == "cohort" and missing:
            raise SchemaError(f"feature file lacks columns {missing}")
        if pol.kind == "cohort":
            X = np.empty((len(rows), len(names)))
            for i, r in enumerate(rows):
                try:
                    X[i] = [float(r[n]) for n in names]
                except ValueError as exc:
                    raise ParseError(f"non-numeric feature value ({exc})", row=i + 1) from None
        else:
            key = args.id_column
            ids = [r[key] for r in rows]
            X = None
    elif args.unit_ids:
        X, ids = None, args.unit_ids
    else:
        raise ConfigError("give --features or --unit-ids")
    res = score(pol, features=X, unit_ids=ids, draw=args.draw, seed=args.seed)
    if args.draw:
        rows = [["row", "arm"], *[[i, int(a)] for i, a in enumerate(res)]]
    else:
        rows = [["row", *[f"p{j}" for j in range(res.shape[1])]],
                *[[i, *map(repr, p.tolist())] for i, p in enumerate(res)]]
    if args.out:
        with open(args.out, "w", newline="") as fh:
            csv.writer(fh).writerows(rows)
    else:
        csv.writer(sys.stdout).writerows(rows)
    return 0


# -------------------------------------------------------------- parser


def build_parser():
    p = argparse.ArgumentParser(prog="txselect", description=__doc__.splitlines()[0])
    p.add_argument("-v", "--verbose", action="store_true", help="log progress to stderr")
    sub = p.add_subparsers(dest="command", required=True)

    def common(sp, config_required=True):
        sp.add_argument("--config", required=config_required, help="JSON config file")
        sp.add_argument("--seed", type=int, default=None, help="override the config seed")
        sp.add_argument("--out", default=None, help="output directory")
        sp.add_argument("--threads", type=int, default=None,
                        help="worker threads for the regressors (default: 1)")
        sp.add_argument("--single-tree-objective", action="store_true",
                        help="CT.ST only: fit one tree on the objective metric and skip merging")
        return sp

    s = common(sub.add_parser("simulate", help="generate a synthetic experiment"), False)
    s.add_argument("--compare", action="store_true",
                   help="run the method comparison across uncertainty weights")
    s.set_defaults(func=cmd_simulate)

    common(sub.add_parser("fit-effects", help="estimate treatment effects")).set_defaults(
        func=cmd_fit_effects)

    s = common(sub.add_parser("merge", help="merge per-source cohort partitions"))
    s.add_argument("--effects", help="effects.json (default: <out>/effects.json)")
    s.set_defaults(func=cmd_merge)

    s = common(sub.add_parser("optimize", help="solve for the assignment policy"))
    s.add_argument("--effects", help="merged effects (default: <out>/merged.json)")
    s.set_defaults(func=cmd_optimize)

    s = common(sub.add_parser("bootstrap", help="bootstrap and bias-correct a cohort policy"))
    s.add_argument("--effects", help="merged effects (default: <out>/merged.json)")
    s.add_argument("--policy", help="policy file (default: <out>/policy.json)")
    s.add_argument("-B", type=int, default=None, help="bootstrap replicates")
    s.set_defaults(func=cmd_bootstrap)

    s = common(sub.add_parser("evaluate", help="counterfactual effect of a policy"), False)
    s.add_argument("--policy", required=True)
    s.add_argument("--data", help="CSV with counterfactual columns")
    s.add_argument("--schema", help="schema JSON (default: <data>.schema.json)")
    s.set_defaults(func=cmd_evaluate)

    common(sub.add_parser("pipeline", help="run every stage end to end")).set_defaults(
        func=cmd_pipeline)

    s = sub.add_parser("score", help="probabilities or sampled arms for new rows")
    s.add_argument("--policy", required=True)
    s.add_argument("--features", help="CSV with the policy's feature columns")
    s.add_argument("--unit-ids", nargs="*", help="unit ids (member-level policies)")
    s.add_argument("--id-column", default="unit_id")
    s.add_argument("--draw", action="store_true", help="sample an arm per row")
    s.add_argument("--seed", type=int, default=0)
    s.add_argument("--out", help="output CSV (default: stdout)")
    s.set_defaults(func=cmd_score)
    return p


def main(argv=None):
    parser = build_parser()
    args = parser.parse_args(argv)
    logging.basicConfig(level=logging.INFO if args.verbose else logging.WARNING,
                        format="%(levelname)s %(message)s")
    try:
        return args.func(args)
    except TxSelectError as exc:
        print(f"error: {exc}", file=sys.stderr)
        return exc.exit_code
    except BrokenPipeError:
        # the reader (e.g. `head`) closed stdout early; not an error
        sys.stdout = open(os.devnull, "w")
        return 0


if __name__ == "__main__":
    sys.exit(main())
