"""Append-only lifelong storage of trial traces, with relevance flags and
selective replay sampling.

Every trial ever run (successful or not) is kept at full resolution. The only
mutation allowed after append is clearing a trial's `relevant` flag when its
task is solved again by a newer controller; the timestep data itself is
frozen. Selection policies are applied at read time.

File format (JSON Lines, UTF-8): line 1 is a header object
``{"format_version": 1, "m": ..., "p": ..., "n": ..., "o": ...}``; each
following line is one trial object with keys trial_id, task_id, success,
relevant, final_cr and timesteps, where each timestep has keys
in/goal/r/out/pred/pr. Floats are serialized at full round-trip precision, so
save/load is bit-exact.
"""

from __future__ import annotations

import json
from dataclasses import dataclass
from pathlib import Path

import numpy as np

from .network import NetConfig, cumulative_reward

FORMAT_VERSION = 1

FINAL_RETURN_TOL = 1e-9

REPLAY_MODES = ("all", "relevant_only", "uniform_sample", "recent")


class TraceFormatError(ValueError):
    """Raised when a trace file cannot be parsed; carries the failing line."""

    def __init__(self, line_no: int, message: str):
        super().__init__(f"line {line_no}: {message}")
        self.line_no = line_no


def _frozen(values, dtype=np.float64) -> np.ndarray:
    arr = np.asarray(values, dtype=dtype).copy()
    arr.setflags(write=False)
    return arr


@dataclass
class TimestepRecord:
    """One time step of a trace: what the net saw and what it emitted."""

    obs: np.ndarray          # R^m, serialized as "in"
    goal: np.ndarray         # R^p
    reward: np.ndarray       # R^n, serialized as "r"
    action: np.ndarray       # R^o, serialized as "out"
    pred: np.ndarray         # R^{m+n}
    return_pred: np.ndarray  # R^{n+1}, serialized as "pr"

    def __eq__(self, other):
        if not isinstance(other, TimestepRecord):
            return NotImplemented
        return all(
            np.array_equal(getattr(self, f), getattr(other, f))
            for f in ("obs", "goal", "reward", "action", "pred", "return_pred")
        )


@dataclass
class Trial:
    """A complete episode trace plus its bookkeeping flags.

    `relevant` marks trials whose actions serve as cloning targets during
    consolidation; only successful trials may carry it.
    """

    task_id: str
    success: bool
    relevant: bool
    timesteps: list[TimestepRecord]
    final_return: float      # serialized as "final_cr"
    trial_id: int = 0        # assigned by the store on append

    def __len__(self) -> int:
        return len(self.timesteps)

    def __eq__(self, other):
        if not isinstance(other, Trial):
            return NotImplemented
        return (
            self.trial_id == other.trial_id
            and self.task_id == other.task_id
            and self.success == other.success
            and self.relevant == other.relevant
            and self.final_return == other.final_return
            and self.timesteps == other.timesteps
        )

    def rewards(self) -> np.ndarray:
        return np.stack([ts.reward for ts in self.timesteps])


@dataclass(frozen=True)
class ReplayPolicy:
    """How consolidation selects trials for replay."""

    mode: str = "all"
    k: int | None = None
    rng_seed: int = 0

    def __post_init__(self):
        if self.mode not in REPLAY_MODES:
            raise ValueError(f"mode must be one of {REPLAY_MODES}, got {self.mode!r}")
        if self.mode in ("uniform_sample", "recent"):
            if self.k is None or self.k < 1:
                raise ValueError(f"mode {self.mode!r} requires k >= 1, got {self.k}")


@dataclass(frozen=True)
class StoreDims:
    """The store header: widths every trial must agree with."""

    obs_dim: int
    goal_dim: int
    reward_dim: int
    action_dim: int

    @classmethod
    def from_net_config(cls, cfg: NetConfig) -> "StoreDims":
        return cls(cfg.obs_dim, cfg.goal_dim, cfg.reward_dim, cfg.action_dim)

    @property
    def pred_dim(self) -> int:
        return self.obs_dim + self.reward_dim

    @property
    def return_pred_dim(self) -> int:
        return self.reward_dim + 1


class TraceStore:
    """In-memory trial store with JSONL persistence.

    Single writer, any number of readers; `append` never exposes a partially
    built trial and already-stored timestep data is immutable.
    """

    def __init__(self, dims: StoreDims):
        self.dims = dims
        self._trials: list[Trial] = []
        self._by_id: dict[int, Trial] = {}
        self._next_id = 1

    def __len__(self) -> int:
        return len(self._trials)

    def __iter__(self):
        return iter(self._trials)

    @property
    def trials(self) -> tuple[Trial, ...]:
        return tuple(self._trials)

    def get(self, trial_id: int) -> Trial:
        try:
            return self._by_id[trial_id]
        except KeyError:
            raise KeyError(f"no trial with id {trial_id}") from None

    def relevant_trials(self) -> list[Trial]:
        return [t for t in self._trials if t.relevant]

    def task_trials(self, task_id: str) -> list[Trial]:
        return [t for t in self._trials if t.task_id == task_id]

    def _validate(self, trial: Trial) -> None:
        if not trial.timesteps:
            raise ValueError("trial has no timesteps")
        if trial.relevant and not trial.success:
            raise ValueError("only successful trials may be marked relevant")
        d = self.dims
        widths = {
            "obs": d.obs_dim,
            "goal": d.goal_dim,
            "reward": d.reward_dim,
            "action": d.action_dim,
            "pred": d.pred_dim,
            "return_pred": d.return_pred_dim,
        }
        for i, ts in enumerate(trial.timesteps):
            for name, width in widths.items():
                arr = np.asarray(getattr(ts, name))
                if arr.shape != (width,):
                    raise ValueError(
                        f"timestep {i}: {name} must have shape ({width},), got {arr.shape}"
                    )
                if not np.all(np.isfinite(arr)):
                    raise ValueError(f"timestep {i}: {name} contains non-finite entries")
        recomputed = float(cumulative_reward(trial.rewards())[-1])
        if abs(recomputed - trial.final_return) > FINAL_RETURN_TOL:
            raise ValueError(
                f"final_return {trial.final_return!r} does not match rewards "
                f"(recomputed {recomputed!r})"
            )

    def append(self, trial: Trial) -> int:
        """Persist a trial (copying its arrays) and return its assigned id."""
        self._validate(trial)
        frozen_steps = [
            TimestepRecord(
                obs=_frozen(ts.obs),
                goal=_frozen(ts.goal),
                reward=_frozen(ts.reward),
                action=_frozen(ts.action),
                pred=_frozen(ts.pred),
                return_pred=_frozen(ts.return_pred),
            )
            for ts in trial.timesteps
        ]
        stored = Trial(
            task_id=trial.task_id,
            success=trial.success,
            relevant=trial.relevant,
            timesteps=frozen_steps,
            final_return=float(trial.final_return),
            trial_id=self._next_id,
        )
        self._next_id += 1
        self._trials.append(stored)
        self._by_id[stored.trial_id] = stored
        return stored.trial_id

    def supersede_task(self, task_id: str) -> int:
        """Clear the relevant flag on all trials of a task; returns how many.

        The traces stay in the store and keep feeding prediction training.
        """
        count = 0
        for trial in self._trials:
            if trial.task_id == task_id and trial.relevant:
                trial.relevant = False
                count += 1
        return count

    def mark_relevant(self, trial_id: int) -> None:
        """Flag a stored successful trial as a cloning source. Search outcomes
        call this once a candidate's validation trials have passed."""
        trial = self.get(trial_id)
        if not trial.success:
            raise ValueError(f"trial {trial_id} was not successful; cannot mark relevant")
        trial.relevant = True

    def sample_replay(self, policy: ReplayPolicy, rng: np.random.Generator | None = None) -> list[Trial]:
        """Select trials for replay. Deterministic given policy.rng_seed when
        no generator is passed; callers that sample repeatedly can hand in a
        persistent generator instead."""
        if policy.mode == "all":
            return list(self._trials)
        if policy.mode == "relevant_only":
            return self.relevant_trials()
        if policy.mode == "recent":
            return list(self._trials[-policy.k:])
        # uniform_sample: min(k, size) distinct trials, in id order
        if not self._trials:
            return []
        if rng is None:
            rng = np.random.default_rng(policy.rng_seed)
        k = min(policy.k, len(self._trials))
        idx = rng.choice(len(self._trials), size=k, replace=False)
        return [self._trials[i] for i in sorted(idx)]

    # -- persistence --------------------------------------------------------

    def save(self, path) -> None:
        with open(path, "w", encoding="utf-8") as fh:
            header = {
                "format_version": FORMAT_VERSION,
                "m": self.dims.obs_dim,
                "p": self.dims.goal_dim,
                "n": self.dims.reward_dim,
                "o": self.dims.action_dim,
            }
            fh.write(json.dumps(header) + "\n")
            for trial in self._trials:
                fh.write(json.dumps(trial_to_json(trial)) + "\n")

    @classmethod
    def load(cls, path) -> "TraceStore":
        lines = Path(path).read_text(encoding="utf-8").splitlines()
        if not lines:
            raise TraceFormatError(1, "empty trace file (missing header)")
        try:
            header = json.loads(lines[0])
        except json.JSONDecodeError as exc:
            raise TraceFormatError(1, f"invalid header JSON: {exc}") from exc
        if not isinstance(header, dict) or "format_version" not in header:
            raise TraceFormatError(1, "header missing format_version")
        if header["format_version"] != FORMAT_VERSION:
            raise TraceFormatError(
                1, f"unsupported format_version {header['format_version']!r}"
            )
        try:
            dims = StoreDims(
                obs_dim=header["m"],
                goal_dim=header["p"],
                reward_dim=header["n"],
                action_dim=header["o"],
            )
        except KeyError as exc:
            raise TraceFormatError(1, f"header missing dimension key {exc}") from exc
        store = cls(dims)
        for line_no, line in enumerate(lines[1:], start=2):
            if not line.strip():
                continue
            try:
                obj = json.loads(line)
            except json.JSONDecodeError as exc:
                raise TraceFormatError(line_no, f"invalid trial JSON: {exc}") from exc
            try:
                trial = trial_from_json(obj)
            except (KeyError, TypeError, ValueError) as exc:
                raise TraceFormatError(line_no, f"malformed trial object: {exc}") from exc
            try:
                store._validate(trial)
            except ValueError as exc:
                raise TraceFormatError(line_no, str(exc)) from exc
            if trial.trial_id < store._next_id:
                raise TraceFormatError(
                    line_no, f"trial ids must be strictly increasing, got {trial.trial_id}"
                )
            trial.timesteps = [
                TimestepRecord(
                    obs=_frozen(ts.obs), goal=_frozen(ts.goal), reward=_frozen(ts.reward),
                    action=_frozen(ts.action), pred=_frozen(ts.pred),
                    return_pred=_frozen(ts.return_pred),
                )
                for ts in trial.timesteps
            ]
            store._trials.append(trial)
            store._by_id[trial.trial_id] = trial
            store._next_id = trial.trial_id + 1
        return store


def trial_to_json(trial: Trial) -> dict:
    return {
        "trial_id": trial.trial_id,
        "task_id": trial.task_id,
        "success": trial.success,
        "relevant": trial.relevant,
        "final_cr": trial.final_return,
        "timesteps": [
            {
                "in": ts.obs.tolist(),
                "goal": ts.goal.tolist(),
                "r": ts.reward.tolist(),
                "out": ts.action.tolist(),
                "pred": ts.pred.tolist(),
                "pr": ts.return_pred.tolist(),
            }
            for ts in trial.timesteps
        ],
    }


def trial_from_json(obj: dict) -> Trial:
    timesteps = [
        TimestepRecord(
            obs=np.asarray(ts["in"], dtype=np.float64),
            goal=np.asarray(ts["goal"], dtype=np.float64),
            reward=np.asarray(ts["r"], dtype=np.float64),
            action=np.asarray(ts["out"], dtype=np.float64),
            pred=np.asarray(ts["pred"], dtype=np.float64),
            return_pred=np.asarray(ts["pr"], dtype=np.float64),
        )
        for ts in obj["timesteps"]
    ]
    return Trial(
        trial_id=int(obj["trial_id"]),
        task_id=str(obj["task_id"]),
        success=bool(obj["success"]),
        relevant=bool(obj["relevant"]),
        timesteps=timesteps,
        final_return=float(obj["final_cr"]),
    )
