"""Shared environment machinery: specs, levels, episodes, and a BFS oracle.

Every environment is deterministic, episodic, and exposes the same surface:
an initial (state, goal) pair, a pure ``transition(state, action)`` function,
a goal-conditioned ``reward(mission, s, a, s_next)`` function, and a
state-dependent action enumerator. Dynamics never depend on the goal.
"""

from __future__ import annotations

from collections import deque
from dataclasses import dataclass
from typing import Callable, Optional

from codeworld.core import Action, Context, ContractViolation, State
from codeworld.runtime.program import (
    EvalOutcome,
    FAULT_RUNTIME,
    WorldModelProgram,
)

DEFAULT_MAX_STEPS = {"sokoban": 50, "sokoban_teleport": 50,
                     "gridworld": 100, "household": 50}


class GeneratorError(Exception):
    pass


@dataclass(frozen=True)
class EnvSpec:
    """Declarative description of an environment family."""

    kind: str  # sokoban | sokoban_teleport | gridworld | household
    width: int = 7
    height: int = 7
    n_boxes: int = 1
    mission_family: str = "empty"
    seed: int = 0
    max_steps: int = 0  # 0 means the per-kind default

    def __post_init__(self):
        if self.kind not in DEFAULT_MAX_STEPS:
            raise ContractViolation(f"unknown environment kind {self.kind!r}")
        if self.width < 3 or self.height < 3:
            raise ContractViolation("width and height must be >= 3")
        if self.max_steps < 0:
            raise ContractViolation("max_steps must be >= 1")

    @property
    def step_limit(self) -> int:
        return self.max_steps or DEFAULT_MAX_STEPS[self.kind]

    def to_json(self) -> dict:
        return {"kind": self.kind, "width": self.width, "height": self.height,
                "n_boxes": self.n_boxes, "mission_family": self.mission_family,
                "seed": self.seed, "max_steps": self.max_steps}

    @staticmethod
    def from_json(obj: dict) -> "EnvSpec":
        return EnvSpec(**obj)


@dataclass
class Truth:
    """Opaque handle to an environment's ground-truth dynamics."""

    transition: Callable[[State, Action], State]
    reward: Callable[[str, State, Action, State], tuple[float, bool]]
    actions: Callable[[State], list[Action]]


@dataclass
class Level:
    initial: State
    context: Context
    truth: Truth
    spec: EnvSpec

    def to_json(self) -> dict:
        return {"state": self.initial.to_json(), "context": self.context.text,
                "spec": self.spec.to_json()}


class GroundTruthProgram(WorldModelProgram):
    """A level's true dynamics behind the world-model program interface.

    Used to inject oracle models into planners and the agent; faults are
    captured rather than raised, like any other backend.
    """

    def __init__(self, truth: Truth):
        self.source = None
        self._truth = truth

    def covers(self, c: Context) -> bool:
        return True

    def eval_transition(self, s: State, a: Action) -> EvalOutcome:
        try:
            return EvalOutcome.of_state(self._truth.transition(s, a))
        except Exception as exc:
            return EvalOutcome.of_fault(FAULT_RUNTIME, repr(exc))

    def eval_reward(self, c: Context, s: State, a: Action, s_next: State) -> EvalOutcome:
        try:
            r, d = self._truth.reward(c.text, s, a, s_next)
            return EvalOutcome.of_reward(r, d)
        except Exception as exc:
            return EvalOutcome.of_fault(FAULT_RUNTIME, repr(exc))


class Episode:
    """A live episode over one level, with the step cap enforced."""

    def __init__(self, level: Level):
        self.level = level
        self.state = level.initial
        self.context = level.context
        self.steps = 0
        self.done = False
        self.truncated = False
        self.total_reward = 0.0

    @property
    def finished(self) -> bool:
        return self.done or self.truncated

    def actions(self) -> list[Action]:
        return self.level.truth.actions(self.state)

    def step(self, a: Action) -> tuple[State, float, bool]:
        if self.finished:
            raise ContractViolation("episode already finished")
        s_next = self.level.truth.transition(self.state, a)
        r, d = self.level.truth.reward(self.context.text, self.state, a, s_next)
        self.state = s_next
        self.steps += 1
        self.total_reward += r
        self.done = d
        if self.steps >= self.level.spec.step_limit and not d:
            self.truncated = True
        return s_next, r, d


def bfs_solve(level: Level, max_depth: Optional[int] = None) -> Optional[list[Action]]:
    """Shortest action sequence reaching (r > 0, done) under ground truth.

    Independent of any planner: plain breadth-first search over the true
    transition graph, deduplicating by canonical state key.
    """
    depth_cap = max_depth if max_depth is not None else level.spec.step_limit
    truth = level.truth
    mission = level.context.text
    start = level.initial
    seen = {start.canonical_key}
    queue: deque[tuple[State, list[Action]]] = deque([(start, [])])
    while queue:
        state, path = queue.popleft()
        if len(path) >= depth_cap:
            continue
        for a in truth.actions(state):
            s_next = truth.transition(state, a)
            r, d = truth.reward(mission, state, a, s_next)
            if d and r > 0:
                return path + [a]
            if d:
                continue  # terminal without positive reward: dead end
            key = s_next.canonical_key
            if key not in seen:
                seen.add(key)
                queue.append((s_next, path + [a]))
    return None
