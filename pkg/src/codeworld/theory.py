"""Brute-force oracles for the sample-complexity analysis, plus a bound harness.

Everything here works on small explicit MDPs: integer states, tabular
deterministic transitions, and tabular rewards. The oracles compute the
diameter of the transition graph, whether a dataset is mutually independent
with respect to a model class, and the class's logical dimensionality (the
largest mutually independent dataset size). The harness runs an agent that
always acts under some data-consistent, optimistic model from the class and
checks that its actions-to-first-reward never exceed diameter * (K + 1).
"""

from __future__ import annotations

import math
import random
from collections import deque
from dataclasses import dataclass, field
from typing import Optional

from codeworld.core import Action, ContractViolation, Context, TransitionRecord
from codeworld.objectives import entails_record
from codeworld.runtime.program import EvalOutcome, WorldModelProgram

UNREACHABLE = math.inf

THEORY_CONTEXT = Context("reach the goal")


@dataclass(frozen=True)
class TableModel:
    """One hypothesis: a full transition table and a sparse reward table.

    ``transition[s][a]`` is the successor state; ``rewards`` maps
    (s, a, s') to (reward, done), defaulting to (0.0, False), which keeps
    the model total over all triples.
    """

    label: str
    transition: tuple[tuple[int, ...], ...]
    rewards: tuple[tuple[tuple[int, int, int], tuple[float, bool]], ...] = ()

    def step(self, s: int, a: int) -> int:
        return self.transition[s][a]

    def reward(self, s: int, a: int, s_next: int) -> tuple[float, bool]:
        for key, value in self.rewards:
            if key == (s, a, s_next):
                return value
        return (0.0, False)


@dataclass(frozen=True)
class EnumeratedModelClass:
    models: tuple[TableModel, ...]

    def __post_init__(self):
        if len(self.models) > 64:
            raise ContractViolation("model class capped at 64 models")

    @property
    def labels(self) -> list[str]:
        return [m.label for m in self.models]


class TableProgram(WorldModelProgram):
    """A table model behind the world-model interface, so the shared
    per-datum verdict applies unchanged."""

    def __init__(self, model: TableModel):
        self.source = None
        self.model = model

    def covers(self, c: Context) -> bool:
        return True

    def eval_transition(self, s, a: Action) -> EvalOutcome:
        return EvalOutcome.of_state(self.model.step(s, int(a.name)))

    def eval_reward(self, c, s, a: Action, s_next) -> EvalOutcome:
        r, d = self.model.reward(s, int(a.name), s_next)
        return EvalOutcome.of_reward(r, d)


def make_record(s: int, a: int, r: float, s_next: int, d: bool) -> TransitionRecord:
    return TransitionRecord(s, Action(str(a)), r, s_next, THEORY_CONTEXT, d)


def entails(model: TableModel, rec: TransitionRecord) -> bool:
    return entails_record(TableProgram(model), rec).entails


# ---------------------------------------------------------------------------
# Diameter
# ---------------------------------------------------------------------------

@dataclass
class DiameterReport:
    value: float  # max shortest path over all pairs; inf when any unreachable
    reachable_value: int  # max over mutually reachable pairs
    unreachable_pairs: list[tuple[int, int]] = field(default_factory=list)


def diameter(n_states: int, n_actions: int,
             transition: tuple[tuple[int, ...], ...]) -> DiameterReport:
    """All-pairs shortest path length over the deterministic graph."""
    dist = [[UNREACHABLE] * n_states for _ in range(n_states)]
    for s in range(n_states):
        dist[s][s] = 0
        queue = deque([s])
        while queue:
            u = queue.popleft()
            for a in range(n_actions):
                v = transition[u][a]
                if dist[s][v] == UNREACHABLE:
                    dist[s][v] = dist[s][u] + 1
                    queue.append(v)
    worst = 0
    unreachable = []
    for s in range(n_states):
        for t in range(n_states):
            if dist[s][t] == UNREACHABLE:
                unreachable.append((s, t))
            else:
                worst = max(worst, int(dist[s][t]))
    return DiameterReport(UNREACHABLE if unreachable else float(worst),
                          worst, unreachable)


def reachable_diameter(n_states: int, n_actions: int, transition,
                       s0: int) -> int:
    """Diameter restricted to states reachable from the start state."""
    reached = {s0}
    queue = deque([s0])
    while queue:
        u = queue.popleft()
        for a in range(n_actions):
            v = transition[u][a]
            if v not in reached:
                reached.add(v)
                queue.append(v)
    worst = 0
    for s in reached:
        dist = _bfs_dist(n_actions, transition, s)
        for t in reached:
            if dist[t] != UNREACHABLE:
                worst = max(worst, int(dist[t]))
    return worst


def _bfs_dist(n_actions, transition, s: int) -> dict[int, float]:
    dist = {s: 0}
    queue = deque([s])
    while queue:
        u = queue.popleft()
        for a in range(n_actions):
            v = transition[u][a]
            if v not in dist:
                dist[v] = dist[u] + 1
                queue.append(v)
    return {t: dist.get(t, UNREACHABLE) for t in range(len(transition))}


# ---------------------------------------------------------------------------
# Mutual independence and logical dimensionality
# ---------------------------------------------------------------------------

def mutually_independent(data: list[TransitionRecord],
                         model_class: EnumeratedModelClass
                         ) -> tuple[bool, dict[int, Optional[str]]]:
    """For every datum, some model must misfit it while fitting all others.

    Returns the verdict plus, per datum index, the label of the witnessing
    model (or None where no witness exists).
    """
    witnesses: dict[int, Optional[str]] = {}
    ok = True
    for i, d in enumerate(data):
        witness = None
        for m in model_class.models:
            if entails(m, d):
                continue
            if all(entails(m, other) for j, other in enumerate(data) if j != i):
                witness = m.label
                break
        witnesses[i] = witness
        if witness is None:
            ok = False
    return ok, witnesses


def candidate_universe(model_class: EnumeratedModelClass, n_states: int,
                       n_actions: int) -> list[TransitionRecord]:
    """Every data point some model in the class could produce."""
    seen = set()
    out = []
    for s in range(n_states):
        for a in range(n_actions):
            for m in model_class.models:
                s_next = m.step(s, a)
                r, d = m.reward(s, a, s_next)
                key = (s, a, s_next, r, d)
                if key not in seen:
                    seen.add(key)
                    out.append(make_record(s, a, r, s_next, d))
    return out


def logical_dimensionality(model_class: EnumeratedModelClass,
                           universe: list[TransitionRecord],
                           universe_cap: int = 4096) -> int:
    """Largest mutually independent subset of the universe.

    Mutual independence is downward closed, so a depth-first search that
    only extends still-independent sets is exhaustive; the model-class size
    is an admissible upper bound that prunes the search.
    """
    if len(universe) > universe_cap:
        raise ContractViolation(
            f"universe of {len(universe)} exceeds the search cap {universe_cap}")
    cap = len(model_class.models)  # no mutually independent set can be larger
    entail_rows = [tuple(entails(m, d) for d in universe)
                   for m in model_class.models]
    n = len(universe)
    best = 0

    def is_independent(chosen: list[int]) -> bool:
        for i in chosen:
            found = False
            for row in entail_rows:
                if row[i]:
                    continue
                if all(row[j] for j in chosen if j != i):
                    found = True
                    break
            if not found:
                return False
        return True

    def extend(chosen: list[int], start: int):
        nonlocal best
        best = max(best, len(chosen))
        if len(chosen) >= cap:
            return
        for nxt in range(start, n):
            if len(chosen) + (n - nxt) <= best:
                break  # not enough elements left to beat the best
            candidate = chosen + [nxt]
            if is_independent(candidate):
                extend(candidate, nxt + 1)

    extend([], 0)
    return best


# ---------------------------------------------------------------------------
# Bound harness
# ---------------------------------------------------------------------------

@dataclass
class TheoryInstance:
    """A small explicit MDP with its hypothesis class (truth included)."""

    name: str
    n_states: int
    n_actions: int
    truth: TableModel
    model_class: EnumeratedModelClass
    s0: int = 0

    def __post_init__(self):
        if self.truth not in self.model_class.models:
            raise ContractViolation("the true model must be in the class")


@dataclass
class BoundRunReport:
    seed: int
    actions_taken: int
    counterexamples: int
    bound: int
    ok: bool
    independence_ok: bool


@dataclass
class TheoremReport:
    instance: str
    diameter: int
    dimensionality: int
    bound: int
    runs: list[BoundRunReport] = field(default_factory=list)
    random_actions: list[int] = field(default_factory=list)

    @property
    def all_ok(self) -> bool:
        return all(r.ok and r.independence_ok for r in self.runs)

    @property
    def max_ratio(self) -> float:
        return max(r.actions_taken / r.bound for r in self.runs)

    def to_json(self) -> dict:
        return {"instance": self.instance, "diameter": self.diameter,
                "K": self.dimensionality, "bound": self.bound,
                "per_seed_actions": [r.actions_taken for r in self.runs],
                "per_seed_counterexamples": [r.counterexamples for r in self.runs],
                "random_actions": list(self.random_actions),
                "max_ratio": self.max_ratio,
                "pass": self.all_ok}


def _plan(model: TableModel, s: int, n_actions: int,
          horizon: int) -> Optional[list[int]]:
    """Shortest action sequence to a positive-reward episode end under the model."""
    seen = {s}
    queue = deque([(s, [])])
    while queue:
        u, path = queue.popleft()
        if len(path) >= horizon:
            continue
        for a in range(n_actions):
            v = model.step(u, a)
            r, d = model.reward(u, a, v)
            if d and r > 0:
                return path + [a]
            if d:
                continue
            if v not in seen:
                seen.add(v)
                queue.append((v, path + [a]))
    return None


def run_bound_check(instance: TheoryInstance, seed: int, bound: int,
                    horizon: Optional[int] = None,
                    hard_cap: Optional[int] = None) -> BoundRunReport:
    """One seeded run of the optimistic agent; see the module docstring.

    The model order is shuffled per seed (the bound must hold for any
    choice among satisfying models); the first data-consistent model that
    still admits a plan from the current state is used at every step.
    """
    rng = random.Random(seed)
    order = list(instance.model_class.models)
    rng.shuffle(order)
    horizon = horizon or instance.n_states + 1
    hard_cap = hard_cap or 50 * bound + 100
    data: list[TransitionRecord] = []
    counterexamples: list[TransitionRecord] = []
    independence_ok = True
    s = instance.s0
    actions_taken = 0
    while actions_taken < hard_cap:
        model = next((m for m in order
                      if all(entails(m, d) for d in data)
                      and _plan(m, s, instance.n_actions, horizon) is not None),
                     None)
        if model is None:
            break  # cannot happen when truth reaches the goal from everywhere
        plan = _plan(model, s, instance.n_actions, horizon)
        a = plan[0]
        s_next = instance.truth.step(s, a)
        r, d = instance.truth.reward(s, a, s_next)
        rec = make_record(s, a, r, s_next, d)
        actions_taken += 1
        if d and r > 0:
            # The run ends here; a mismatch on the winning step is never
            # collected, since no further learning consumes it.
            return BoundRunReport(seed, actions_taken, len(counterexamples),
                                  bound, actions_taken <= bound, independence_ok)
        if not entails(model, rec):
            counterexamples.append(rec)
            ok, _ = mutually_independent(counterexamples, instance.model_class)
            independence_ok = independence_ok and ok
        data.append(rec)
        s = instance.s0 if d else s_next
    return BoundRunReport(seed, actions_taken, len(counterexamples), bound,
                          False, independence_ok)


def run_random_baseline(instance: TheoryInstance, seed: int,
                        hard_cap: int = 100_000) -> int:
    """Actions-to-first-reward for uniformly random action choice."""
    rng = random.Random(seed)
    s = instance.s0
    for step_count in range(1, hard_cap + 1):
        a = rng.randrange(instance.n_actions)
        s_next = instance.truth.step(s, a)
        r, d = instance.truth.reward(s, a, s_next)
        if d and r > 0:
            return step_count
        s = instance.s0 if d else s_next
    return hard_cap


def theorem_bound_check(instance: TheoryInstance, seeds: list[int],
                        with_random: bool = True) -> TheoremReport:
    diam = reachable_diameter(instance.n_states, instance.n_actions,
                              instance.truth.transition, instance.s0)
    universe = candidate_universe(instance.model_class, instance.n_states,
                                  instance.n_actions)
    k = logical_dimensionality(instance.model_class, universe)
    bound = max(1, diam) * (k + 1)
    report = TheoremReport(instance.name, diam, k, bound)
    for seed in seeds:
        report.runs.append(run_bound_check(instance, seed, bound))
        if with_random:
            report.random_actions.append(run_random_baseline(instance, seed))
    return report


# ---------------------------------------------------------------------------
# Bundled instances
# ---------------------------------------------------------------------------

def corridor_instance(length: int = 4, wrong_rewards: int = 2,
                      wrong_transitions: int = 1, name: Optional[str] = None
                      ) -> TheoryInstance:
    """A two-action corridor: goal at the right end, reward only there.

    The hypothesis class adds models that misplace the reward and models
    with a broken edge, so the agent must rule hypotheses out one by one.
    """
    n = length
    left = tuple(max(0, s - 1) for s in range(n))
    right = tuple(min(n - 1, s + 1) for s in range(n))
    transition = tuple((left[s], right[s]) for s in range(n))
    goal_edge = ((n - 2, 1, n - 1), (1.0, True))
    truth = TableModel("truth", transition, (goal_edge,))
    models = [truth]
    for i in range(wrong_rewards):
        s = i % max(1, n - 2)
        models.append(TableModel(
            f"reward-at-{s}", transition, (((s + 1, 0, s), (1.0, True)),)))
    for i in range(wrong_transitions):
        s = 1 + (i % max(1, n - 2))
        rows = [list(row) for row in transition]
        rows[s][1] = s  # broken right edge: bumps into a wall instead
        models.append(TableModel(
            f"blocked-at-{s}", tuple(tuple(r) for r in rows), (goal_edge,)))
    return TheoryInstance(name or f"corridor-{n}", n, 2, truth,
                          EnumeratedModelClass(tuple(models)))


def cycle_instance(length: int = 6, name: Optional[str] = None) -> TheoryInstance:
    """A one-way ring plus a stay action; reward on the last edge."""
    n = length
    fwd = tuple((s + 1) % n for s in range(n))
    stay = tuple(range(n))
    transition = tuple((fwd[s], stay[s]) for s in range(n))
    goal_edge = ((n - 1, 0, 0), (1.0, True))
    truth = TableModel("truth", transition, (goal_edge,))
    models = [truth]
    for s in (1, n // 2):
        models.append(TableModel(
            f"reward-at-{s}", transition, (((s - 1, 0, s), (1.0, True)),)))
    rows = [list(row) for row in transition]
    rows[n // 2][0] = n // 2
    models.append(TableModel("stuck-mid", tuple(tuple(r) for r in rows),
                             (goal_edge,)))
    return TheoryInstance(name or f"cycle-{n}", n, 2, truth,
                          EnumeratedModelClass(tuple(models)))


def grid_instance(side: int = 3, extra_hypotheses: bool = False,
                  name: Optional[str] = None) -> TheoryInstance:
    """A four-action open grid with the goal in the far corner."""
    n = side * side

    def at(x: int, y: int) -> int:
        return y * side + x

    def move(s: int, dx: int, dy: int) -> int:
        x, y = s % side, s // side
        nx, ny = min(side - 1, max(0, x + dx)), min(side - 1, max(0, y + dy))
        return at(nx, ny)

    deltas = ((1, 0), (-1, 0), (0, 1), (0, -1))
    transition = tuple(tuple(move(s, dx, dy) for dx, dy in deltas)
                       for s in range(n))

    def goal_model(cell: int, label: str) -> TableModel:
        edges = tuple(((s, a, cell), (1.0, True))
                      for s in range(n) for a in range(4)
                      if transition[s][a] == cell and s != cell)
        return TableModel(label, transition, edges)

    truth = goal_model(at(side - 1, side - 1), "truth")
    hypotheses = [at(0, side - 1), at(side - 1, 0)]
    if extra_hypotheses:
        hypotheses.append(at(side // 2, side // 2))
    models = [truth] + [goal_model(c, f"goal-at-{c}") for c in hypotheses]
    return TheoryInstance(name or f"grid-{side}x{side}", n, 4, truth,
                          EnumeratedModelClass(tuple(models)))


def bundled_instances() -> list[TheoryInstance]:
    """Twenty small instances for the bound check."""
    out = []
    for length in range(5, 12):
        out.append(corridor_instance(length))
    for length in (6, 7, 8, 9, 10):
        out.append(corridor_instance(length, wrong_rewards=3, wrong_transitions=2,
                                     name=f"corridor-hard-{length}"))
    for length in (6, 8, 9, 10, 12):
        out.append(cycle_instance(length))
    out.append(grid_instance(3))
    out.append(grid_instance(3, extra_hypotheses=True, name="grid-3x3-wide"))
    out.append(corridor_instance(12, wrong_rewards=4, wrong_transitions=1,
                                 name="corridor-12"))
    return out[:20]
