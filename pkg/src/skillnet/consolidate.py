"""Gradient-based consolidation: retrain the network on stored traces.

The dream phase replays stored trials and descends a joint masked
squared-error loss with three terms:

  * behavioral cloning of recorded actions, only on trials currently flagged
    relevant;
  * next-step prediction of (observation, reward), on every trial including
    failures;
  * remaining-reward prediction, masked like the action term.

Superseded and failed trials therefore keep training the predictive pathway
while their actions are never cloned. No environment interaction happens
here; everything is driven by the trace store.

Also home to the two protection heuristics: per-weight learning rates from
end-of-trial weight variance, and a task -> used-weights map that tells the
caller which solved tasks to re-test after weights move.
"""

from __future__ import annotations

import time
from dataclasses import dataclass, field

import numpy as np

from .network import NetConfig, Network, TrialTargets, apply_regularizer, batch_loss, bptt_gradient
from .rollout import evaluate_policy
from .traces import ReplayPolicy, TraceStore, Trial


@dataclass(frozen=True)
class ConsolidationConfig:
    base_lr: float = 0.05
    momentum: float = 0.9
    action_weight: float = 1.0
    pred_weight: float = 1.0
    return_weight: float = 1.0
    reg_interval: int = 0       # apply the regularizer every N steps; 0 = off
    reg_strength: float = 0.0
    reg_kind: str = "decay"
    use_variance_lr: bool = False
    variance_lr_floor: float = 0.1

    def __post_init__(self):
        if self.base_lr <= 0:
            raise ValueError(f"base_lr must be positive, got {self.base_lr}")
        if not (0.0 <= self.momentum < 1.0):
            raise ValueError(f"momentum must be in [0, 1), got {self.momentum}")
        if self.reg_interval < 0 or self.reg_strength < 0:
            raise ValueError("regularizer settings must be non-negative")
        if not (0.0 < self.variance_lr_floor <= 1.0):
            raise ValueError(
                f"variance_lr_floor must be in (0, 1], got {self.variance_lr_floor}"
            )

    @property
    def term_weights(self) -> tuple[float, float, float]:
        return (self.action_weight, self.pred_weight, self.return_weight)


def build_targets(trial: Trial, relevant_now: bool, config: NetConfig) -> TrialTargets:
    """Turn one stored trial into replay inputs, targets and masks.

    Prediction targets exist for every step but the last (there is no
    successor observation at the final step). Action and remaining-reward
    targets follow the same mask but only when the trial is currently
    relevant; otherwise they are fully masked out.
    """
    t_len = len(trial.timesteps)
    senses = np.stack([
        np.concatenate([ts.obs, ts.goal, ts.reward]) for ts in trial.timesteps
    ])
    actions = np.stack([ts.action for ts in trial.timesteps])
    rewards = np.stack([ts.reward for ts in trial.timesteps])

    pred_target = np.zeros((t_len, config.pred_width))
    if t_len > 1:
        pred_target[:-1] = np.concatenate(
            [np.stack([ts.obs for ts in trial.timesteps[1:]]), rewards[1:]], axis=1
        )
    pred_mask = np.ones(t_len)
    pred_mask[-1] = 0.0

    # remaining per-channel reward sums and the remaining total return
    tail = np.flip(np.cumsum(np.flip(rewards, 0), axis=0), 0)
    tail = np.vstack([tail[1:], np.zeros((1, config.reward_dim))])
    return_target = np.concatenate([tail, tail.sum(axis=1, keepdims=True)], axis=1)

    cloned_mask = pred_mask.copy() if relevant_now else np.zeros(t_len)
    return TrialTargets(
        senses=senses,
        action_target=actions,
        pred_target=pred_target,
        return_target=return_target,
        action_mask=cloned_mask,
        pred_mask=pred_mask,
        return_mask=cloned_mask.copy(),
    )


def build_batch(trials, config: NetConfig) -> list[TrialTargets]:
    """Replay entries for a list of stored trials, honoring current flags."""
    return [build_targets(t, t.relevant, config) for t in trials]


def term_stats(net: Network, batch, term_weights=(1.0, 1.0, 1.0)) -> dict:
    """Per-term loss sums plus masked-timestep counts over a batch."""
    total, per_term = batch_loss(net, batch, term_weights)
    counts = {"action_steps": 0, "pred_steps": 0, "return_steps": 0}
    for trial in batch:
        counts["action_steps"] += int(trial.action_mask.sum())
        counts["pred_steps"] += int(trial.pred_mask.sum())
        counts["return_steps"] += int(trial.return_mask.sum())
    return {"total": total, **per_term, **counts}


@dataclass
class ConsolidationReport:
    steps_run: int
    initial: dict | None    # term_stats on the probe batch before training
    final: dict | None      # ... and after
    probe_trial_ids: list[int] = field(default_factory=list)


def consolidate(weights: np.ndarray, store: TraceStore, policy: ReplayPolicy,
                config: ConsolidationConfig, *, net_config: NetConfig,
                steps: int | None = None, seconds: float | None = None,
                tracker: "VarianceTracker | None" = None):
    """Dream phase: gradient descent on replayed traces, no environment.

    The budget is either a gradient-step count or a wall-clock allowance.
    Returns (new_weights, report); the report's initial/final losses are
    measured on a fixed probe batch (the first replay selection).
    """
    if (steps is None) == (seconds is None):
        raise ValueError("specify exactly one of steps or seconds")
    if steps is not None and steps < 0:
        raise ValueError(f"steps must be >= 0, got {steps}")
    if seconds is not None and seconds < 0:
        raise ValueError(f"seconds must be >= 0, got {seconds}")

    weights = np.asarray(weights, dtype=np.float64).copy()
    if steps == 0 or (seconds is not None and seconds == 0):
        return weights, ConsolidationReport(steps_run=0, initial=None, final=None)

    rng = np.random.default_rng(policy.rng_seed)
    net = Network(net_config, weights)
    target_cache: dict[tuple[int, bool], TrialTargets] = {}

    def select_batch():
        trials = store.sample_replay(policy, rng=rng)
        if not trials:
            raise ValueError(f"replay policy {policy.mode!r} selected no trials")
        batch = []
        ids = []
        for trial in trials:
            key = (trial.trial_id, trial.relevant)
            if key not in target_cache:
                target_cache[key] = build_targets(trial, trial.relevant, net_config)
            batch.append(target_cache[key])
            ids.append(trial.trial_id)
        return batch, ids

    probe_batch, probe_ids = select_batch()
    initial = term_stats(net, probe_batch, config.term_weights)

    if config.use_variance_lr and tracker is not None:
        lr = variance_lr_scale(tracker, config.base_lr, config.variance_lr_floor)
    else:
        lr = config.base_lr
    velocity = np.zeros_like(weights)
    deadline = time.monotonic() + seconds if seconds is not None else None

    step_idx = 0
    while True:
        if steps is not None and step_idx >= steps:
            break
        if deadline is not None and time.monotonic() >= deadline:
            break
        batch = probe_batch if step_idx == 0 else select_batch()[0]
        grad, loss = bptt_gradient(net, batch, config.term_weights)
        if not np.isfinite(loss):
            raise RuntimeError(
                f"consolidation diverged: non-finite loss at gradient step {step_idx}"
            )
        velocity = config.momentum * velocity + grad
        weights = weights - lr * velocity
        if not np.all(np.isfinite(weights)):
            raise RuntimeError(
                f"consolidation diverged: non-finite weights at gradient step {step_idx}"
            )
        if config.reg_interval > 0 and (step_idx + 1) % config.reg_interval == 0:
            weights = apply_regularizer(weights, config.reg_strength, config.reg_kind)
        net.set_weights(weights)
        step_idx += 1

    final = term_stats(net, probe_batch, config.term_weights)
    report = ConsolidationReport(
        steps_run=step_idx, initial=initial, final=final, probe_trial_ids=probe_ids
    )
    return weights, report


# ---------------------------------------------------------------------------
# weight-variance learning-rate heuristic


class VarianceTracker:
    """Running per-weight mean/variance of end-of-trial weight snapshots
    (Welford). Low-variance weights look load-bearing across tasks and get
    scaled-down learning rates."""

    def __init__(self, n_params: int):
        self.n_params = n_params
        self.count = 0
        self._mean = np.zeros(n_params)
        self._m2 = np.zeros(n_params)

    def update(self, weights: np.ndarray) -> None:
        weights = np.asarray(weights, dtype=np.float64)
        if weights.shape != (self.n_params,):
            raise ValueError(f"expected shape ({self.n_params},), got {weights.shape}")
        self.count += 1
        delta = weights - self._mean
        self._mean += delta / self.count
        self._m2 += delta * (weights - self._mean)

    def variance(self) -> np.ndarray:
        if self.count == 0:
            return np.zeros(self.n_params)
        return self._m2 / self.count


def variance_lr_scale(tracker: VarianceTracker, base_lr: float, floor: float) -> np.ndarray:
    """Per-weight learning rates: base_lr * clamp(var / median_var, floor, 1).

    With fewer than two snapshots there is no variance signal and every
    weight gets base_lr.
    """
    rates = np.full(tracker.n_params, base_lr)
    if tracker.count < 2:
        return rates
    var = tracker.variance()
    median = float(np.median(var))
    if median <= 0.0:
        return rates
    return base_lr * np.clip(var / median, floor, 1.0)


# ---------------------------------------------------------------------------
# task -> used-weights tracking


class UsageMap:
    """Which weight indices each task's search visibly moved. After
    consolidation shifts some weights, only tasks whose usage sets intersect
    the change need re-testing."""

    def __init__(self, change_threshold: float = 1e-8):
        self.change_threshold = change_threshold
        self._usage: dict[str, frozenset[int]] = {}

    def record(self, task_id: str, before: np.ndarray, after: np.ndarray) -> frozenset[int]:
        delta = np.abs(np.asarray(after) - np.asarray(before))
        used = frozenset(np.flatnonzero(delta > self.change_threshold).tolist())
        self._usage[task_id] = used
        return used

    def usage(self, task_id: str) -> frozenset[int]:
        return self._usage.get(task_id, frozenset())

    def affected_tasks(self, changed) -> set[str]:
        changed = set(changed)
        return {task for task, used in self._usage.items() if used & changed}


def changed_indices(before: np.ndarray, after: np.ndarray,
                    threshold: float = 1e-8) -> set[int]:
    delta = np.abs(np.asarray(after) - np.asarray(before))
    return set(np.flatnonzero(delta > threshold).tolist())


# ---------------------------------------------------------------------------
# retention


@dataclass
class RetentionResult:
    passed: bool
    success_rate: float
    mean_return: float
    mean_length: float


def retention_check(weights: np.ndarray, tasks, net_config: NetConfig, *,
                    n_trials: int | None = None, threshold: float | None = None,
                    base_seed: int = 0) -> dict[str, RetentionResult]:
    """Evaluate the consolidated network itself on previously solved tasks,
    each with its own goal input."""
    results = {}
    for task in tasks:
        k = n_trials if n_trials is not None else task.criterion.min_success_trials
        bar = threshold if threshold is not None else task.criterion.success_rate_threshold
        stats = evaluate_policy(weights, net_config, task, k, base_seed=base_seed)
        results[task.task_id] = RetentionResult(
            passed=stats["success_rate"] >= bar,
            success_rate=stats["success_rate"],
            mean_return=stats["mean_return"],
            mean_length=stats["mean_length"],
        )
    return results
