"""skillnet: continual skill learning for a single recurrent network.

Control skills are acquired by black-box weight search on copies of the
network, prediction skills by gradient descent, and everything is folded
back into the one network by replaying stored behavioral traces -- no
further environment interaction needed.
"""

from .consolidate import (
    ConsolidationConfig,
    ConsolidationReport,
    UsageMap,
    VarianceTracker,
    build_batch,
    build_targets,
    consolidate,
    retention_check,
    variance_lr_scale,
)
from .curriculum import CurriculumReport, SolveRecord, run_curriculum
from .envs import (
    GridMaze,
    GridMazeSpec,
    Observation,
    SuccessCriterion,
    TaskDescription,
    check_success,
    corner_tasks,
    goal_encoding,
    make_env,
)
from .evolve import Budget, EsConfig, SearchOutcome, evaluate_candidate, perturb, try_solve_task
from .network import (
    NetConfig,
    Network,
    StepOutput,
    TrialTargets,
    apply_regularizer,
    batch_loss,
    bptt_gradient,
    cumulative_reward,
    init_network,
    initial_state,
    load_checkpoint,
    save_checkpoint,
    total_reward,
)
from .rollout import evaluate_policy, run_trial
from .traces import ReplayPolicy, StoreDims, TimestepRecord, TraceFormatError, TraceStore, Trial

__version__ = "0.1.0"

__all__ = [
    "Budget",
    "ConsolidationConfig",
    "ConsolidationReport",
    "CurriculumReport",
    "EsConfig",
    "GridMaze",
    "GridMazeSpec",
    "NetConfig",
    "Network",
    "Observation",
    "ReplayPolicy",
    "SearchOutcome",
    "SolveRecord",
    "StepOutput",
    "StoreDims",
    "SuccessCriterion",
    "TaskDescription",
    "TimestepRecord",
    "TraceFormatError",
    "TraceStore",
    "Trial",
    "TrialTargets",
    "UsageMap",
    "VarianceTracker",
    "apply_regularizer",
    "batch_loss",
    "bptt_gradient",
    "build_batch",
    "build_targets",
    "check_success",
    "consolidate",
    "corner_tasks",
    "cumulative_reward",
    "evaluate_candidate",
    "evaluate_policy",
    "goal_encoding",
    "init_network",
    "initial_state",
    "load_checkpoint",
    "make_env",
    "perturb",
    "retention_check",
    "run_curriculum",
    "run_trial",
    "save_checkpoint",
    "total_reward",
    "try_solve_task",
    "variance_lr_scale",
]
