"""The learning objective as logic: fit the replayed data, and stay optimistic.

A program entails a record when its predicted next state matches exactly
(canonical state equality) and its predicted (reward, done) matches the
observation (rewards within 1e-9). The optimism check asks whether, from a
stored episode start, the program's own dynamics admit a plan that ends an
episode with positive reward. Evaluation faults count against the program,
never against the caller.
"""

from __future__ import annotations

from collections import deque
from dataclasses import dataclass
from typing import Callable, Optional

from codeworld.core import Action, ContractViolation, EpisodeStart, State, TransitionRecord
from codeworld.runtime.program import Fault, WorldModelProgram

REWARD_TOLERANCE = 1e-9
DEFAULT_HORIZON = 50

ActionProvider = Callable[[State], list[Action]]


def state_key(s):
    """Canonical dedup key; plain hashable states stand for themselves."""
    return s.canonical_key if isinstance(s, State) else s


@dataclass(frozen=True)
class RecordVerdict:
    """Per-record entailment result, split by routine for refinement prompts."""

    entails: bool
    transition_ok: bool
    reward_ok: bool
    predicted_state: Optional[State] = None
    predicted_reward: Optional[float] = None
    predicted_done: Optional[bool] = None
    fault: Optional[Fault] = None


@dataclass
class FitReport:
    """Outcome of checking the data-consistency constraint over a buffer view."""

    satisfied: bool
    verdicts: list[RecordVerdict]
    counterexamples: list[tuple[int, TransitionRecord, RecordVerdict]]

    def to_json(self) -> dict:
        return {
            "satisfied": self.satisfied,
            "entailed": sum(1 for v in self.verdicts if v.entails),
            "total": len(self.verdicts),
            "counterexamples": [
                {"index": i,
                 "action": rec.a.render(),
                 "transition_ok": v.transition_ok,
                 "reward_ok": v.reward_ok,
                 "predicted_state": None if v.predicted_state is None
                 else v.predicted_state.to_json(),
                 "predicted_reward": v.predicted_reward,
                 "predicted_done": v.predicted_done,
                 "fault": None if v.fault is None
                 else {"kind": v.fault.kind, "message": v.fault.message}}
                for i, rec, v in self.counterexamples],
        }


@dataclass(frozen=True)
class PlanWitness:
    """An imagined trajectory ending an episode with positive reward."""

    actions: tuple[Action, ...]
    states: tuple[State, ...]
    final_reward: float

    @property
    def length(self) -> int:
        return len(self.actions)

    def to_json(self) -> dict:
        return {"actions": [a.to_json() for a in self.actions],
                "states": [s.to_json() for s in self.states],
                "final_reward": self.final_reward}


@dataclass
class OptimismResult:
    witness: Optional[PlanWitness]
    uncovered: bool = False

    @property
    def satisfied(self) -> bool:
        return self.witness is not None


def entails_record(program: WorldModelProgram, rec: TransitionRecord,
                   tolerance: float = REWARD_TOLERANCE) -> RecordVerdict:
    """Does the program predict this observation exactly?"""
    fault = None
    t = program.eval_transition(rec.s, rec.a)
    if t.ok:
        transition_ok = t.state == rec.s_next
        predicted_state = t.state
    else:
        transition_ok = False
        predicted_state = None
        fault = t.fault
    w = program.eval_reward(rec.c, rec.s, rec.a, rec.s_next)
    if w.ok:
        reward_ok = abs(w.reward - rec.r) <= tolerance and w.done == rec.d
        predicted_reward, predicted_done = w.reward, w.done
    else:
        reward_ok = False
        predicted_reward = predicted_done = None
        fault = fault or w.fault
    return RecordVerdict(transition_ok and reward_ok, transition_ok, reward_ok,
                         predicted_state, predicted_reward, predicted_done, fault)


def check_fit(program: WorldModelProgram,
              records: list[TransitionRecord]) -> FitReport:
    """Check the fit-data constraint: every record must be entailed."""
    verdicts = [entails_record(program, rec) for rec in records]
    counterexamples = [(i, records[i], v) for i, v in enumerate(verdicts)
                       if not v.entails]
    return FitReport(not counterexamples, verdicts, counterexamples)


def check_optimism(program: WorldModelProgram, start: EpisodeStart,
                   actions: ActionProvider,
                   horizon: int = DEFAULT_HORIZON) -> OptimismResult:
    """Search the program's imagined dynamics for a positive-reward episode end.

    Breadth-first over the deterministic transition graph from the episode
    start, deduplicating states by canonical key, at most ``horizon`` actions
    deep; the returned witness is shortest. An uncovered goal means no
    witness and flags that the reward model must be extended first.
    """
    if horizon < 1:
        raise ContractViolation("horizon must be >= 1")
    if not program.covers(start.c):
        return OptimismResult(None, uncovered=True)
    root = start.s0
    seen = {state_key(root)}
    queue: deque[tuple[State, tuple[Action, ...], tuple[State, ...]]] = \
        deque([(root, (), ())])
    while queue:
        state, acts, states = queue.popleft()
        if len(acts) >= horizon:
            continue
        for a in actions(state):
            t = program.eval_transition(state, a)
            if not t.ok:
                continue  # faulting edge: prune
            s_next = t.state
            w = program.eval_reward(start.c, state, a, s_next)
            if w.ok and w.done and w.reward > 0:
                return OptimismResult(PlanWitness(acts + (a,), states + (s_next,),
                                                  w.reward))
            if w.ok and w.done:
                continue  # episode ends without positive reward: dead end
            key = state_key(s_next)
            if key not in seen:
                seen.add(key)
                queue.append((s_next, acts + (a,), states + (s_next,)))
    return OptimismResult(None)


def progress_score(program: WorldModelProgram, records: list[TransitionRecord],
                   starts: list[EpisodeStart], actions: ActionProvider,
                   horizon: int = DEFAULT_HORIZON,
                   fit: Optional[FitReport] = None) -> float:
    """Fraction of buffer constraints satisfied, optimism gated behind full fit.

    score = [#entailed records + 1(all entailed) * #starts with a witness]
            / (#records + #starts)
    """
    if not records and not starts:
        raise ContractViolation("progress score needs a nonempty buffer view")
    if fit is None:
        fit = check_fit(program, records)
    entailed = sum(1 for v in fit.verdicts if v.entails)
    score = float(entailed)
    if fit.satisfied:
        score += sum(1 for s in starts
                     if check_optimism(program, s, actions, horizon).satisfied)
    return score / (len(records) + len(starts))
