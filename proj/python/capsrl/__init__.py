"""Constraint-adaptive policy switching for offline safe RL.

Thin Python surface over the C++ core: build finite-horizon CMDPs, solve
exact value tables, generate offline datasets, train switching artifacts,
select budget-aware actions, and verify the safety bound.
"""

from ._core import (
    AdmissibilityReport,
    Algo,
    BehaviorSpec,
    BoundReport,
    Cmdp,
    Decision,
    EvalConfig,
    EvalMode,
    EvalReport,
    ExactArtifacts,
    OfflineDataset,
    ThresholdRow,
    TrainConfig,
    TrainedArtifacts,
    Transition,
    ValueTables,
    check_admissible,
    dataset_hash,
    evaluate,
    evaluate_exact_artifacts,
    generate_dataset,
    lambda_schedule,
    load_artifacts,
    load_cmdp,
    load_dataset,
    make_chain3,
    make_exact_artifacts,
    make_hazard_gridworld,
    make_random_cmdp,
    save_artifacts,
    save_cmdp,
    save_dataset,
    solve_all,
    train,
    verify_theorem_bound,
)

__version__ = "0.1.0"

__all__ = [
    "AdmissibilityReport",
    "Algo",
    "BehaviorSpec",
    "BoundReport",
    "Cmdp",
    "Decision",
    "EvalConfig",
    "EvalMode",
    "EvalReport",
    "ExactArtifacts",
    "OfflineDataset",
    "ThresholdRow",
    "TrainConfig",
    "TrainedArtifacts",
    "Transition",
    "ValueTables",
    "check_admissible",
    "dataset_hash",
    "evaluate",
    "evaluate_exact_artifacts",
    "generate_dataset",
    "lambda_schedule",
    "load_artifacts",
    "load_cmdp",
    "load_dataset",
    "make_chain3",
    "make_exact_artifacts",
    "make_hazard_gridworld",
    "make_random_cmdp",
    "save_artifacts",
    "save_cmdp",
    "save_dataset",
    "solve_all",
    "train",
    "verify_theorem_bound",
]
