"""The episodic agent loop: act, record, and resynthesize when constraints break.

Each episode starts by storing its (initial state, goal) pair. Before every
action, if the current best model no longer fits the replay buffer (or, with
optimism on, admits no plan to positive reward from the stored starts) and
enough data has accumulated, the synthesis loop runs. Actions are planner
outputs with epsilon-greedy random exploration mixed in; before any model
exists the agent acts randomly.
"""

from __future__ import annotations

import csv
import io
import random
import time
from dataclasses import dataclass, field
from typing import Optional

from codeworld.core import (
    Action,
    ContractViolation,
    Context,
    EpisodeStart,
    ReplayBuffer,
    State,
    TransitionRecord,
    stable_seed,
)
from codeworld.envs.base import Episode, EnvSpec, Level
from codeworld.envs import generate_level
from codeworld.planners import (
    Bm25Corpus,
    PlanConfig,
    uct_search,
    value_iteration_plan,
)
from codeworld.runtime.program import ProgramSource, WorldModelProgram
from codeworld.synthesis import (
    CandidateProgram,
    ProgramPool,
    SynthesisError,
    SynthesizerBackend,
    synthesize,
)

METRICS_COLUMNS = ["episode", "steps", "total_reward", "synth_calls",
                   "pool_size", "wallclock_ms"]


@dataclass
class AgentConfig:
    epsilon: float = 0.05
    min_data_size: int = 10
    synth_budget: int = 50
    optimism: bool = True
    planner: PlanConfig = field(default_factory=PlanConfig)
    planner_kind: str = "value_iteration"  # or "mcts"
    transfer_source: Optional[ProgramSource] = None
    horizon: int = 50
    optimism_scope: str = "current+solved"  # or "all"

    def __post_init__(self):
        if not (0.0 <= self.epsilon <= 1.0):
            raise ContractViolation("epsilon must be in [0, 1]")
        if self.planner_kind not in ("value_iteration", "mcts"):
            raise ContractViolation("planner_kind must be value_iteration or mcts")


@dataclass
class EpisodeRow:
    episode: int
    steps: int
    total_reward: float
    synth_calls: int
    pool_size: int
    wallclock_ms: float


@dataclass
class RunMetrics:
    rows: list[EpisodeRow] = field(default_factory=list)
    backend_calls: int = 0
    synth_events: list[dict] = field(default_factory=list)

    def to_csv(self, include_wallclock: bool = False) -> str:
        out = io.StringIO()
        writer = csv.writer(out, lineterminator="\n")
        writer.writerow(METRICS_COLUMNS)
        for row in self.rows:
            wallclock = round(row.wallclock_ms, 3) if include_wallclock else 0
            writer.writerow([row.episode, row.steps, round(row.total_reward, 9),
                             row.synth_calls, row.pool_size, wallclock])
        return out.getvalue()


class LevelSource:
    """Deterministic per-episode level supply for one environment spec."""

    def __init__(self, spec: EnvSpec, run_seed: int = 0):
        self.spec = spec
        self.run_seed = run_seed

    def get(self, episode: int) -> Level:
        return generate_level(self.spec, stable_seed(self.run_seed, episode))


def select_action(s: State, model: Optional[WorldModelProgram], c: Context,
                  cfg: AgentConfig, rng: random.Random, actions: list[Action],
                  provider=None) -> Action:
    """Planner action with epsilon-greedy exploration; random with no model.

    ``actions`` is the choice set in the current state (the random branch
    draws from it); ``provider`` supplies per-state action sets during
    planning, which matters wherever they are state-dependent.
    """
    if model is None or rng.random() < cfg.epsilon:
        return rng.choice(actions)
    if provider is None:
        provider = lambda _s: actions
    if cfg.planner_kind == "mcts":
        return uct_search(s, model, c, Bm25Corpus(), provider,
                          cfg.planner, seed=rng.randrange(2 ** 31))
    return value_iteration_plan(s, model, c, provider, cfg.planner)


class Agent:
    """Carries the replay buffer, candidate pool, and current model across episodes."""

    def __init__(self, cfg: AgentConfig, backend: SynthesizerBackend, seed: int = 0,
                 model_override: Optional[WorldModelProgram] = None):
        self.cfg = cfg
        self.backend = backend
        self.seed = seed
        self.buffer = ReplayBuffer()
        self.pool = ProgramPool()
        self.model: Optional[WorldModelProgram] = None
        self.solved_contexts: set[str] = set()
        self.metrics = RunMetrics()
        self.frozen = False
        self._rng = random.Random(stable_seed(seed, "agent"))
        self._stale_since: Optional[int] = None  # buffer size at last failed synth
        if model_override is not None:
            self.model = model_override
            self.frozen = True
        elif cfg.transfer_source is not None:
            cand = CandidateProgram(cfg.transfer_source)
            self.pool.add(cand)
            self.model = cand.program

    def relevant_starts(self, context: Context) -> list[EpisodeStart]:
        if self.cfg.optimism_scope == "all":
            return list(self.buffer.starts)
        keep = {context.text} | self.solved_contexts
        return [s for s in self.buffer.starts if s.c.text in keep]

    def model_satisfied(self, context: Context, actions) -> bool:
        best = self.pool.best_compiled()
        if best is None:
            return False
        starts = self.relevant_starts(context) if self.cfg.optimism else []
        h = best.rescore(self.buffer.data, starts, actions, self.cfg.horizon)
        return h >= 1.0

    def maybe_synthesize(self, episode: int, step: int, context: Context, actions):
        if self.frozen or len(self.buffer) < self.cfg.min_data_size:
            return
        if self.model_satisfied(context, actions):
            self.model = self.pool.best_compiled().program
            self._stale_since = None
            return
        # A failed synthesis is retried only once a new counterexample (or a
        # new episode start) arrives; burning budget on an unchanged problem
        # helps nobody.
        if self._stale_since is not None:
            data_len, starts_len = self._stale_since
            best = self.pool.best_compiled()
            no_new_start = len(self.buffer.starts) == starts_len
            if best is not None and no_new_start and all(
                    v.entails
                    for v in best.verdicts(self.buffer.data)[data_len:]):
                return
            if best is None and no_new_start and len(self.buffer) == data_len:
                return
        starts = self.relevant_starts(context) if self.cfg.optimism else []
        calls_before = self.backend.calls
        best_before = self.pool.best_compiled()
        h_before = best_before.h_score if best_before is not None else None
        try:
            self.model, _ = synthesize(
                self.pool, self.backend, self.buffer.data, starts, actions,
                budget=self.cfg.synth_budget, optimism=self.cfg.optimism,
                horizon=self.cfg.horizon,
                seed=stable_seed(self.seed, "synth", episode, step))
        except SynthesisError:
            self.model = None
        self.metrics.synth_events.append(
            {"episode": episode, "step": step, "buffer_size": len(self.buffer),
             "h_before": h_before,
             "calls": self.backend.calls - calls_before})
        if self.model_satisfied(context, actions):
            self._stale_since = None
        else:
            self._stale_since = (len(self.buffer), len(self.buffer.starts))

    def ensure_reward_coverage(self, context: Context, actions):
        """A new goal with a working dynamics model asks only for a reward extension."""
        if self.frozen:
            return
        best = self.pool.best_compiled()
        if best is None or best.program.covers(context) or best.source is None:
            return
        new_src = self.backend.propose_reward_for_context(
            best.source, context, list(self.buffer.starts))
        cand = CandidateProgram(new_src)
        starts = self.relevant_starts(context) if self.cfg.optimism else []
        if self.buffer.data or starts:
            cand.rescore(self.buffer.data, starts, actions, self.cfg.horizon)
        self.pool.add(cand)
        if cand.program is not None:
            self.model = cand.program

    def run_episode(self, level: Level, episode: int) -> EpisodeRow:
        started = time.monotonic()
        ep = Episode(level)
        context = level.context
        provider = level.truth.actions
        self.buffer.record_start(EpisodeStart(level.initial, context))
        self.ensure_reward_coverage(context, provider)
        calls_before = self.backend.calls
        while not ep.finished:
            self.maybe_synthesize(episode, ep.steps, context, provider)
            s = ep.state
            a = select_action(s, self.model, context, self.cfg, self._rng,
                              ep.actions(), provider=provider)
            s_next, r, d = ep.step(a)
            self.buffer.record(TransitionRecord(s, a, r, s_next, context, d))
            if d and r > 0:
                self.solved_contexts.add(context.text)
        wallclock_ms = (time.monotonic() - started) * 1000.0
        return EpisodeRow(episode, ep.steps, ep.total_reward,
                          self.backend.calls - calls_before,
                          len(self.pool.candidates), wallclock_ms)


def run(source: LevelSource, cfg: AgentConfig, episodes: int, seed: int,
        backend: SynthesizerBackend,
        model_override: Optional[WorldModelProgram] = None) -> RunMetrics:
    """Run the agent for a number of episodes; deterministic given the seed.

    ``model_override`` injects a fixed model (e.g. the ground truth) and
    disables synthesis, for oracle baselines.
    """
    if episodes < 1:
        raise ContractViolation("episodes must be >= 1")
    agent = Agent(cfg, backend, seed, model_override=model_override)
    for episode in range(episodes):
        level = source.get(episode)
        row = agent.run_episode(level, episode)
        agent.metrics.rows.append(row)
    agent.metrics.backend_calls = agent.backend.calls
    return agent.metrics
