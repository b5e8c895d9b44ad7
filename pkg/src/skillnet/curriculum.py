"""Automatic task ordering: round-robin attempts with budget doubling.

Each pass walks the unsolved task list giving every task the same search
budget c. A solved task is immediately consolidated into the network (dream
budget proportional to c) and leaves the list. If a whole pass solves
nothing, c doubles; after any pass with progress, c resets to its original
value. A total-budget guard makes unsolvable curricula terminate.

The network that accumulates everything is only changed by consolidation;
search arms work on copies and contribute traces.
"""

from __future__ import annotations

from dataclasses import dataclass, field, replace

import numpy as np

from .consolidate import (
    ConsolidationConfig,
    UsageMap,
    VarianceTracker,
    changed_indices,
    consolidate,
    retention_check,
)
from .envs import TaskDescription
from .evolve import Budget, EsConfig, try_solve_task
from .network import NetConfig
from .traces import ReplayPolicy, TraceStore


@dataclass
class SolveRecord:
    task_id: str
    pass_number: int
    budget_amount: float
    winner: str
    relevant_trial_ids: list[int]


@dataclass
class CurriculumReport:
    solved: list[SolveRecord]
    unsolved_task_ids: list[str]
    pass_count: int
    final_budget: float
    total_search_spent: float
    consolidations: int
    events: list[dict] = field(default_factory=list)


def _attempt_seed(seed: int, attempt: int) -> int:
    return int(np.random.SeedSequence(entropy=seed, spawn_key=(attempt,)).generate_state(1)[0])


def run_curriculum(tasks, budget_c0: float, dream_multiplier: float,
                   initial_weights: np.ndarray, store: TraceStore, *,
                   net_config: NetConfig, es_config: EsConfig,
                   consolidation_config: ConsolidationConfig,
                   replay_policy: ReplayPolicy,
                   budget_unit: str = "env_steps",
                   max_total_budget: float | None = None,
                   dream_steps_per_unit: float = 1.0,
                   original_weights: np.ndarray | None = None,
                   retest_affected: bool = True,
                   workers: int = 1,
                   seed: int = 0,
                   solver=None, consolidator=None, on_event=None):
    """Run the whole curriculum; returns (final_weights, CurriculumReport).

    dream_multiplier couples each consolidation's budget to the solve budget:
    a solve at budget c earns round(dream_multiplier * c * dream_steps_per_unit)
    gradient steps of dreaming.
    """
    if not tasks:
        raise ValueError("curriculum needs at least one task")
    if budget_c0 <= 0 or dream_multiplier <= 0:
        raise ValueError("budget_c0 and dream_multiplier must be positive")

    weights = np.asarray(initial_weights, dtype=np.float64).copy()
    original = (np.asarray(original_weights, dtype=np.float64).copy()
                if original_weights is not None else weights.copy())

    tracker = VarianceTracker(net_config.n_params)
    usage = UsageMap()

    if solver is None:
        def solver(*, current_weights, original_weights, task, budget, es, store):
            return try_solve_task(current_weights, original_weights, task, budget,
                                  es, store, config=net_config,
                                  variance_tracker=tracker, usage_map=usage,
                                  workers=workers)

    if consolidator is None:
        def consolidator(*, weights, store, steps):
            return consolidate(weights, store, replay_policy, consolidation_config,
                               net_config=net_config, steps=steps, tracker=tracker)

    events: list[dict] = []

    def emit(event: dict) -> None:
        events.append(event)
        if on_event is not None:
            on_event(event)

    unsolved = list(tasks)
    solved: list[SolveRecord] = []
    solved_tasks: dict[str, TaskDescription] = {}
    budget_c = float(budget_c0)
    pass_number = 0
    attempt_index = 0
    total_spent = 0.0
    consolidations = 0
    out_of_budget = False

    while unsolved and not out_of_budget:
        pass_number += 1
        solved_this_pass = 0
        for task in list(unsolved):
            if max_total_budget is not None and total_spent >= max_total_budget:
                out_of_budget = True
                break
            es = replace(es_config, seed=_attempt_seed(seed, attempt_index))
            attempt_index += 1
            outcome = solver(
                current_weights=weights, original_weights=original, task=task,
                budget=Budget(budget_unit, budget_c), es=es, store=store,
            )
            total_spent += outcome.total_spent
            emit({
                "event": "task_attempt",
                "task_id": task.task_id,
                "pass_number": pass_number,
                "budget": budget_c,
                "status": outcome.status,
                "winner": outcome.winner,
                "budget_spent_warm": outcome.budget_spent["warm"],
                "budget_spent_scratch": outcome.budget_spent["scratch"],
                "evaluations_warm": outcome.evaluations["warm"],
                "evaluations_scratch": outcome.evaluations["scratch"],
                "trials_recorded": len(outcome.all_trial_ids),
                "max_batch_cost": outcome.max_batch_cost,
            })
            if not outcome.solved:
                continue

            solved_this_pass += 1
            record = SolveRecord(
                task_id=task.task_id, pass_number=pass_number,
                budget_amount=budget_c, winner=outcome.winner,
                relevant_trial_ids=list(outcome.relevant_trial_ids),
            )
            solved.append(record)
            solved_tasks[task.task_id] = task
            unsolved.remove(task)
            emit({
                "event": "solve",
                "task_id": task.task_id,
                "pass_number": pass_number,
                "budget": budget_c,
                "winner": outcome.winner,
                "relevant_trial_ids": list(outcome.relevant_trial_ids),
            })

            dream_steps = max(1, round(dream_multiplier * budget_c * dream_steps_per_unit))
            pre_dream = weights
            weights, report = consolidator(weights=weights, store=store,
                                           steps=dream_steps)
            consolidations += 1
            emit({
                "event": "consolidation",
                "task_id": task.task_id,
                "pass_number": pass_number,
                "steps": report.steps_run,
                "initial_loss": report.initial,
                "final_loss": report.final,
            })

            if retest_affected:
                changed = changed_indices(pre_dream, weights)
                affected = usage.affected_tasks(changed) & set(solved_tasks)
                for task_id in sorted(affected):
                    results = retention_check(
                        weights, [solved_tasks[task_id]], net_config,
                        base_seed=seed,
                    )
                    res = results[task_id]
                    emit({
                        "event": "retention_check",
                        "task_id": task_id,
                        "pass_number": pass_number,
                        "passed": bool(res.passed),
                        "success_rate": res.success_rate,
                        "mean_return": res.mean_return,
                        "mean_length": res.mean_length,
                    })

        if out_of_budget:
            break
        if solved_this_pass == 0:
            emit({
                "event": "budget_double",
                "pass_number": pass_number,
                "old_budget": budget_c,
                "new_budget": budget_c * 2,
            })
            budget_c *= 2
        else:
            budget_c = float(budget_c0)

    report = CurriculumReport(
        solved=solved,
        unsolved_task_ids=[t.task_id for t in unsolved],
        pass_count=pass_number,
        final_budget=budget_c,
        total_search_spent=total_spent,
        consolidations=consolidations,
        events=events,
    )
    return weights, report
