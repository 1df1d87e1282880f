"""Constrained treatment selection from randomized experiments.

Estimate heterogeneous effects (honest causal trees, causal forests or
two-model regressions), merge per-metric cohorts into a common partition,
choose a randomized assignment that maximizes one metric while keeping
guardrail metrics in bounds, and quantify the assignment's bias with a
parametric bootstrap.
"""

from .bootstrap import BootstrapInput, BootstrapResult, bias_correct, bootstrap_assignments, resample_estimates, run_bootstrap
from .causal_tree import CausalTree, CausalTreeConfig, fit_causal_tree, tree_cohorts
from .cohorts import Cohort, CohortSet, EffectEstimate, Predicate, assign_cohort
from .data import CsvSchema, ExperimentDataset, HonestSplit, honest_split, load_experiment_csv, write_experiment_csv
from .deterministic import DeterministicProblem, LpSolution, saa_solve
from .errors import (
    BootstrapUnstableError,
    CertificationError,
    ConfigError,
    DataError,
    InfeasibleError,
    InsufficientDataError,
    NoFeasibleProgressError,
    NormalizationError,
    ParseError,
    SchemaError,
    TxSelectError,
    ValidationError,
)
from .member_effects import CausalForest, RegressorConfig, fit_causal_forest, fit_two_model
from .merge import EffectTable, merge_cohort_sets
from .pipeline import PipelineConfig, run_pipeline
from .policy import PolicyFile, score
from .problem import Constraint, StochasticProblem, build_problem
from .simulate import ComparisonConfig, SimConfig, evaluate_policy, generate_dataset, run_comparison
from .stochastic import McsaConfig, McsaTrace, mcsa_solve

__all__ = [
    "BootstrapInput", "BootstrapResult", "bias_correct", "bootstrap_assignments",
    "resample_estimates", "run_bootstrap", "CausalTree", "CausalTreeConfig",
    "fit_causal_tree", "tree_cohorts", "Cohort", "CohortSet", "EffectEstimate",
    "Predicate", "assign_cohort", "CsvSchema", "ExperimentDataset", "HonestSplit",
    "honest_split", "load_experiment_csv", "write_experiment_csv",
    "DeterministicProblem", "LpSolution", "saa_solve", "BootstrapUnstableError",
    "CertificationError", "ConfigError", "DataError", "InfeasibleError",
    "InsufficientDataError", "NoFeasibleProgressError", "NormalizationError",
    "ParseError", "SchemaError", "TxSelectError", "ValidationError", "CausalForest",
    "RegressorConfig", "fit_causal_forest", "fit_two_model", "EffectTable",
    "merge_cohort_sets", "PipelineConfig", "run_pipeline", "PolicyFile", "score",
    "Constraint", "StochasticProblem", "build_problem", "ComparisonConfig", "SimConfig",
    "evaluate_policy", "generate_dataset", "run_comparison", "McsaConfig", "McsaTrace",
    "mcsa_solve",
]

__version__ = "0.1.0"
