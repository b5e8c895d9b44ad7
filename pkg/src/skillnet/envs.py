"""Task abstraction and built-in benchmark environments.

A task couples an environment spec with a unique one-hot goal encoding and a
success criterion. The standard benchmark is a deterministic grid maze with
corner-goal tasks; an action-slip probability turns it stochastic, and a
small two-channel chain environment exercises vector-valued rewards.

Environments are duck-typed: anything with `obs_dim`, `reward_dim`,
`deterministic`, `reset(seed)` and `step(action)` works. All built-in
environments bump the module-level `step_counter` on every transition, which
lets tests prove that consolidation never touches an environment.
"""

from __future__ import annotations

from dataclasses import dataclass, replace

import numpy as np


class StepCounter:
    """Global transition counter used to instrument environment contact."""

    def __init__(self):
        self.count = 0

    def increment(self) -> None:
        self.count += 1

    def reset(self) -> None:
        self.count = 0


step_counter = StepCounter()

# direction order for action decoding: argmax over the first four action
# units, ties broken by lowest index
DIRECTIONS = ("N", "E", "S", "W")
_MOVES = {"N": (0, 1), "E": (1, 0), "S": (0, -1), "W": (-1, 0)}


@dataclass
class Observation:
    """What the environment hands the network at the start of a step."""

    obs: np.ndarray
    reward: np.ndarray
    done: bool
    reached: bool = False


@dataclass(frozen=True)
class SuccessCriterion:
    """User-given bar for calling a task solved: of the K most recent
    evaluation trials, at least a fraction rho must reach the goal."""

    min_success_trials: int = 1
    success_rate_threshold: float = 1.0
    max_steps_per_trial: int | None = None

    def __post_init__(self):
        if self.min_success_trials < 1:
            raise ValueError(f"min_success_trials must be >= 1, got {self.min_success_trials}")
        if not (0.0 < self.success_rate_threshold <= 1.0):
            raise ValueError(
                f"success_rate_threshold must be in (0, 1], got {self.success_rate_threshold}"
            )


@dataclass(frozen=True)
class GridMazeSpec:
    """A rectangular maze: one-hot cell observations, four movement actions,
    a step penalty and a terminal goal bonus. slip_prob > 0 replaces the
    chosen direction with a uniformly random one."""

    width: int
    height: int
    start: tuple[int, int]
    goal_cell: tuple[int, int]
    step_reward: float = -0.01
    goal_reward: float = 1.0
    episode_cap: int | None = None
    slip_prob: float = 0.0

    def __post_init__(self):
        if self.width < 1 or self.height < 1:
            raise ValueError("maze must be at least 1x1")
        for name in ("start", "goal_cell"):
            x, y = getattr(self, name)
            if not (0 <= x < self.width and 0 <= y < self.height):
                raise ValueError(f"{name} {(x, y)} is outside the {self.width}x{self.height} grid")
        if tuple(self.start) == tuple(self.goal_cell):
            raise ValueError("start and goal_cell must differ")
        if not (0.0 <= self.slip_prob <= 1.0):
            raise ValueError(f"slip_prob must be in [0, 1], got {self.slip_prob}")
        if self.episode_cap is not None and self.episode_cap < 1:
            raise ValueError("episode_cap must be >= 1")

    @property
    def effective_cap(self) -> int:
        return self.episode_cap if self.episode_cap is not None else 4 * self.width * self.height

    @property
    def deterministic(self) -> bool:
        return self.slip_prob == 0.0

    def build(self) -> "GridMaze":
        return GridMaze(self)


class GridMaze:
    """The maze environment. Cell (x, y) maps to one-hot index y * width + x;
    north is +y, east is +x. Blocked moves leave the agent in place."""

    def __init__(self, spec: GridMazeSpec):
        self.spec = spec
        self.obs_dim = spec.width * spec.height
        self.reward_dim = 1
        self.deterministic = spec.deterministic
        self._pos = None
        self._steps = 0
        self._done = True
        self._rng = None

    def _observe(self, reward: float, reached: bool) -> Observation:
        onehot = np.zeros(self.obs_dim)
        x, y = self._pos
        onehot[y * self.spec.width + x] = 1.0
        return Observation(
            obs=onehot, reward=np.array([reward]), done=self._done, reached=reached
        )

    def reset(self, seed: int = 0) -> Observation:
        self._pos = tuple(self.spec.start)
        self._steps = 0
        self._done = False
        self._rng = np.random.default_rng(seed)
        return self._observe(0.0, reached=False)

    def step(self, action: np.ndarray) -> Observation:
        if self._done:
            raise RuntimeError("episode is finished; call reset first")
        action = np.asarray(action)
        if action.shape[0] < 4:
            raise ValueError("maze actions need at least 4 action units")
        step_counter.increment()
        d = int(np.argmax(action[:4]))
        if self.spec.slip_prob > 0.0 and self._rng.random() < self.spec.slip_prob:
            d = int(self._rng.integers(4))
        dx, dy = _MOVES[DIRECTIONS[d]]
        x, y = self._pos
        nx, ny = x + dx, y + dy
        if 0 <= nx < self.spec.width and 0 <= ny < self.spec.height:
            self._pos = (nx, ny)
        self._steps += 1
        reached = self._pos == tuple(self.spec.goal_cell)
        reward = self.spec.goal_reward if reached else self.spec.step_reward
        self._done = reached or self._steps >= self.spec.effective_cap
        return self._observe(reward, reached)


@dataclass(frozen=True)
class VectorRewardChainSpec:
    """A 1-D chain with a two-channel reward: channel 0 carries the per-move
    cost, channel 1 the terminal goal bonus. Demonstrates vector rewards."""

    length: int = 4
    move_reward: float = -0.01
    goal_reward: float = 1.0
    episode_cap: int | None = None

    def __post_init__(self):
        if self.length < 2:
            raise ValueError("chain needs at least 2 positions")

    @property
    def effective_cap(self) -> int:
        return self.episode_cap if self.episode_cap is not None else 4 * self.length

    @property
    def deterministic(self) -> bool:
        return True

    def build(self) -> "VectorRewardChain":
        return VectorRewardChain(self)


class VectorRewardChain:
    """Chain environment: argmax over the first two action units picks
    forward/back; the goal is the last position."""

    def __init__(self, spec: VectorRewardChainSpec):
        self.spec = spec
        self.obs_dim = spec.length
        self.reward_dim = 2
        self.deterministic = True
        self._pos = 0
        self._steps = 0
        self._done = True

    def _observe(self, reward, reached) -> Observation:
        onehot = np.zeros(self.obs_dim)
        onehot[self._pos] = 1.0
        return Observation(obs=onehot, reward=np.asarray(reward, dtype=np.float64),
                           done=self._done, reached=reached)

    def reset(self, seed: int = 0) -> Observation:
        self._pos = 0
        self._steps = 0
        self._done = False
        return self._observe([0.0, 0.0], reached=False)

    def step(self, action: np.ndarray) -> Observation:
        if self._done:
            raise RuntimeError("episode is finished; call reset first")
        action = np.asarray(action)
        if action.shape[0] < 2:
            raise ValueError("chain actions need at least 2 action units")
        step_counter.increment()
        move = 1 if int(np.argmax(action[:2])) == 0 else -1
        self._pos = min(max(self._pos + move, 0), self.spec.length - 1)
        self._steps += 1
        reached = self._pos == self.spec.length - 1
        reward = [0.0, self.spec.goal_reward] if reached else [self.spec.move_reward, 0.0]
        self._done = reached or self._steps >= self.spec.effective_cap
        return self._observe(reward, reached)


@dataclass(frozen=True)
class TaskDescription:
    """A control task: environment, unique goal-input slot, success bar."""

    task_id: str
    goal_index: int
    env_spec: object
    criterion: SuccessCriterion

    def __post_init__(self):
        if self.goal_index < 0:
            raise ValueError(f"goal_index must be >= 0, got {self.goal_index}")


def goal_encoding(task: TaskDescription, goal_dim: int) -> np.ndarray:
    """The task's constant one-hot goal input vector."""
    if not (0 <= task.goal_index < goal_dim):
        raise ValueError(
            f"goal_index {task.goal_index} out of range for goal_dim {goal_dim}"
        )
    vec = np.zeros(goal_dim)
    vec[task.goal_index] = 1.0
    return vec


def make_env(task: TaskDescription):
    """Build the task's environment, applying any per-trial step limit from
    the success criterion as the episode cap."""
    spec = task.env_spec
    cap = task.criterion.max_steps_per_trial
    if cap is not None and hasattr(spec, "episode_cap"):
        spec = replace(spec, episode_cap=cap)
    return spec.build()


def check_success(trials, criterion: SuccessCriterion) -> bool:
    """True iff the K most recent trials exist and their success fraction
    meets the threshold."""
    k = criterion.min_success_trials
    if len(trials) < k:
        return False
    recent = trials[-k:]
    rate = sum(1 for t in recent if t.success) / k
    return rate >= criterion.success_rate_threshold


def corner_tasks(width: int = 5, height: int = 5, start: tuple[int, int] = (0, 0),
                 criterion: SuccessCriterion | None = None, slip_prob: float = 0.0,
                 corners: tuple[str, ...] = ("NE", "NW", "SE")) -> list[TaskDescription]:
    """The standard curriculum: one task per requested corner of a single
    maze, each with its own goal-input slot. The start cell is skipped if it
    coincides with a corner."""
    criterion = criterion or SuccessCriterion()
    corner_cells = {
        "NE": (width - 1, height - 1),
        "NW": (0, height - 1),
        "SE": (width - 1, 0),
        "SW": (0, 0),
    }
    tasks = []
    for i, name in enumerate(corners):
        cell = corner_cells[name]
        if cell == tuple(start):
            continue
        spec = GridMazeSpec(width=width, height=height, start=start, goal_cell=cell,
                            slip_prob=slip_prob)
        tasks.append(TaskDescription(
            task_id=f"corner_{name.lower()}", goal_index=i, env_spec=spec,
            criterion=criterion,
        ))
    return tasks
