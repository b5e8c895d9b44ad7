"""Black-box acquisition of a new control skill: a two-arm (1+lambda)
evolution-strategy race.

One arm starts from the network's current weights (the "warm" arm, which can
reuse anything already learned); the other starts from the original untrained
weights (the "scratch" arm, a safety belt in case the trained net is too
biased). The arms alternate by spent budget, so their consumption never
drifts apart by more than one generation. The first arm whose incumbent
passes the task's success criterion wins; every evaluation episode, winning
or not, is recorded in the trace store.

The caller's weight vectors are never mutated; the search works on copies.
"""

from __future__ import annotations

import time
from concurrent.futures import ThreadPoolExecutor
from dataclasses import dataclass, field

import numpy as np

from .envs import TaskDescription, check_success
from .network import NetConfig, Network
from .rollout import run_trial, trial_env_steps
from .traces import TraceStore, Trial

BUDGET_UNITS = ("env_steps", "evaluations", "wall_seconds")

WARM, SCRATCH = "warm", "scratch"


@dataclass(frozen=True)
class Budget:
    """Per-arm search budget. env_steps and evaluations are exact counters;
    wall_seconds is best-effort."""

    unit: str
    amount: float

    def __post_init__(self):
        if self.unit not in BUDGET_UNITS:
            raise ValueError(f"unit must be one of {BUDGET_UNITS}, got {self.unit!r}")
        if self.amount <= 0:
            raise ValueError(f"amount must be positive, got {self.amount}")


@dataclass(frozen=True)
class EsConfig:
    population: int = 8     # children per generation
    sigma: float = 0.1      # Gaussian mutation scale
    elitism: bool = True    # keep the parent unless a child strictly improves
    seed: int = 0

    def __post_init__(self):
        if self.population < 1:
            raise ValueError(f"population must be >= 1, got {self.population}")
        if self.sigma <= 0:
            raise ValueError(f"sigma must be positive, got {self.sigma}")


@dataclass
class SearchOutcome:
    status: str                        # "solved" | "failed"
    winner: str                        # "warm" | "scratch" | "none"
    final_weights: np.ndarray | None
    relevant_trial_ids: list[int]
    all_trial_ids: list[int]
    budget_spent: dict[str, float]     # per arm, in budget units
    batch_costs: dict[str, list[float]]
    best_fitness: dict[str, list[float]]
    evaluations: dict[str, int]

    @property
    def solved(self) -> bool:
        return self.status == "solved"

    @property
    def max_batch_cost(self) -> float:
        costs = self.batch_costs[WARM] + self.batch_costs[SCRATCH]
        return max(costs) if costs else 0.0

    @property
    def total_spent(self) -> float:
        return self.budget_spent[WARM] + self.budget_spent[SCRATCH]


def perturb(weights: np.ndarray, sigma: float, rng: np.random.Generator) -> np.ndarray:
    """Add independent zero-mean Gaussian noise of scale sigma."""
    if sigma < 0:
        raise ValueError(f"sigma must be >= 0, got {sigma}")
    weights = np.asarray(weights, dtype=np.float64)
    if sigma == 0:
        return weights.copy()
    return weights + rng.normal(0.0, sigma, size=weights.shape)


def evaluate_candidate(weights: np.ndarray, task: TaskDescription, n_trials: int,
                       store: TraceStore | None = None, record: bool = True, *,
                       config: NetConfig, base_seed: int = 0):
    """Run n_trials episodes with a constant goal input; fitness is the mean
    final return. With record=True every trial (failures included) lands in
    the store. Returns (fitness, trial_ids)."""
    if n_trials < 1:
        raise ValueError(f"n_trials must be >= 1, got {n_trials}")
    net = Network(config, weights)
    trials = [run_trial(net, task, seed=base_seed + i) for i in range(n_trials)]
    fitness = float(np.mean([t.final_return for t in trials]))
    trial_ids = []
    if record:
        if store is None:
            raise ValueError("record=True requires a store")
        trial_ids = [store.append(t) for t in trials]
    return fitness, trial_ids


@dataclass
class _Arm:
    name: str
    parent: np.ndarray
    mutate_rng: np.random.Generator
    seed_rng: np.random.Generator
    parent_fitness: float = -np.inf
    parent_trials: list[Trial] = field(default_factory=list)
    parent_evaluated: bool = False
    spent: float = 0.0
    batch_costs: list[float] = field(default_factory=list)
    best_fitness: list[float] = field(default_factory=list)
    evaluations: int = 0


def _rollout_batch(config, candidates, task, n_trials, seeds, workers):
    """Evaluate candidates (pure rollouts, nothing recorded yet)."""

    def one(idx):
        net = Network(config, candidates[idx])
        return [run_trial(net, task, seed=seeds[idx] + i) for i in range(n_trials)]

    if workers > 1 and len(candidates) > 1:
        with ThreadPoolExecutor(max_workers=workers) as pool:
            return list(pool.map(one, range(len(candidates))))
    return [one(i) for i in range(len(candidates))]


def try_solve_task(current_weights: np.ndarray, original_weights: np.ndarray,
                   task: TaskDescription, budget: Budget, es: EsConfig,
                   store: TraceStore, *, config: NetConfig,
                   variance_tracker=None, usage_map=None,
                   workers: int = 1) -> SearchOutcome:
    """Race a warm-started and a from-scratch (1+lambda) ES on one task.

    Stops at the first arm whose incumbent passes the task's success
    criterion, or once both arms have exhausted their budget. On success the
    task's earlier relevant traces are superseded and the winner's
    validation trials are marked: just the final successful one when the
    environment is deterministic, every successful one otherwise.
    """
    current_weights = np.asarray(current_weights, dtype=np.float64)
    original_weights = np.asarray(original_weights, dtype=np.float64)
    n_trials = task.criterion.min_success_trials
    deterministic = getattr(task.env_spec, "deterministic", True)

    warm_ss, scratch_ss = np.random.SeedSequence(es.seed).spawn(2)
    arms = {}
    for name, weights, ss in ((WARM, current_weights, warm_ss),
                              (SCRATCH, original_weights, scratch_ss)):
        mutate_ss, seed_ss = ss.spawn(2)
        arms[name] = _Arm(
            name=name, parent=weights.copy(),
            mutate_rng=np.random.default_rng(mutate_ss),
            seed_rng=np.random.default_rng(seed_ss),
        )

    all_trial_ids: list[int] = []
    solved_arm: _Arm | None = None

    def run_batch(arm: _Arm) -> None:
        if not arm.parent_evaluated:
            candidates = [arm.parent]
        else:
            candidates = [perturb(arm.parent, es.sigma, arm.mutate_rng)
                          for _ in range(es.population)]
        seeds = [int(arm.seed_rng.integers(0, 2**31)) for _ in candidates]

        started = time.monotonic()
        results = _rollout_batch(config, candidates, task, n_trials, seeds, workers)
        elapsed = time.monotonic() - started

        cost = 0.0
        best_idx, best_fit = -1, -np.inf
        per_candidate_trials = []
        for idx, trials in enumerate(results):
            for t in trials:
                t.trial_id = store.append(t)
                all_trial_ids.append(t.trial_id)
            per_candidate_trials.append(trials)
            if variance_tracker is not None:
                for _ in trials:
                    variance_tracker.update(candidates[idx])
            arm.evaluations += 1
            if budget.unit == "env_steps":
                cost += sum(trial_env_steps(t) for t in trials)
            elif budget.unit == "evaluations":
                cost += 1
            fit = float(np.mean([t.final_return for t in trials]))
            if fit > best_fit:
                best_idx, best_fit = idx, fit
        if budget.unit == "wall_seconds":
            cost = elapsed

        if not arm.parent_evaluated:
            arm.parent_evaluated = True
            arm.parent_fitness = best_fit
            arm.parent_trials = results[0]
        else:
            promote = best_fit > arm.parent_fitness if es.elitism else True
            if promote:
                arm.parent = candidates[best_idx]
                arm.parent_fitness = best_fit
                arm.parent_trials = per_candidate_trials[best_idx]

        arm.spent += cost
        arm.batch_costs.append(cost)
        arm.best_fitness.append(arm.parent_fitness)

    while solved_arm is None:
        open_arms = [a for a in (arms[WARM], arms[SCRATCH]) if a.spent < budget.amount]
        if not open_arms:
            break
        arm = min(open_arms, key=lambda a: (a.spent, a.name != WARM))
        run_batch(arm)
        if check_success(arm.parent_trials, task.criterion):
            solved_arm = arm

    relevant_ids: list[int] = []
    if solved_arm is not None:
        store.supersede_task(task.task_id)
        successful = [t for t in solved_arm.parent_trials if t.success]
        to_mark = successful[-1:] if deterministic else successful
        for t in to_mark:
            store.mark_relevant(t.trial_id)
            relevant_ids.append(t.trial_id)
        if usage_map is not None:
            start = current_weights if solved_arm.name == WARM else original_weights
            usage_map.record(task.task_id, start, solved_arm.parent)

    return SearchOutcome(
        status="solved" if solved_arm is not None else "failed",
        winner=solved_arm.name if solved_arm is not None else "none",
        final_weights=solved_arm.parent.copy() if solved_arm is not None else None,
        relevant_trial_ids=relevant_ids,
        all_trial_ids=all_trial_ids,
        budget_spent={name: arm.spent for name, arm in arms.items()},
        batch_costs={name: arm.batch_costs for name, arm in arms.items()},
        best_fitness={name: arm.best_fitness for name, arm in arms.items()},
        evaluations={name: arm.evaluations for name, arm in arms.items()},
    )
