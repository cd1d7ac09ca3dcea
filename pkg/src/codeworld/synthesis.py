"""Refinement-based program search over a pool of candidate world models.

A bandit picks which candidate to refine next, trading off candidates that
score well against candidates that have not been refined much: each candidate
is scored by a Thompson draw from Beta(1 + C*h, 1 + C*(1-h) + refinements)
with C = 20, and the best draw wins. Refinement is delegated to a pluggable
backend; the bundled enumerative backend repairs rule-DSL programs against
counterexamples with a bounded, deterministic edit search, standing in for a
code-writing assistant so the whole loop runs offline.
"""

from __future__ import annotations

import itertools
import random
from dataclasses import dataclass, field
from typing import Optional

from codeworld.core import (
    Action,
    ContractViolation,
    Context,
    Entity,
    EpisodeStart,
    State,
    TransitionRecord,
    stable_seed,
)
from codeworld.objectives import (
    ActionProvider,
    DEFAULT_HORIZON,
    RecordVerdict,
    check_optimism,
    entails_record,
)
from codeworld.runtime import dsl
from codeworld.runtime.program import (
    CompileError,
    EvalOutcome,
    FAULT_RUNTIME,
    FAULT_UNCOVERED,
    ProgramSource,
    WorldModelProgram,
    compile_program,
)

SELECTION_CONCENTRATION = 20.0
DEFAULT_BUDGET = 50
MAX_RULES = 64


class SynthesisError(Exception):
    pass


# ---------------------------------------------------------------------------
# Pool
# ---------------------------------------------------------------------------

class CandidateProgram:
    """A pool entry: source, compiled form (when it compiles), and caches."""

    def __init__(self, source: ProgramSource, parent: Optional[int] = None,
                 runner_command: Optional[list[str]] = None):
        self.source = source
        self.parent = parent
        self.refine_count = 0
        self.h_score = 0.0
        self.stuck = False
        self.compile_error: Optional[str] = None
        self.program: Optional[WorldModelProgram] = None
        self._verdicts: list[RecordVerdict] = []
        self._witness_cache: dict[tuple[bytes, str], bool] = {}
        try:
            self.program = compile_program(source, runner_command)
        except CompileError as exc:
            self.compile_error = str(exc)

    def verdicts(self, records: list[TransitionRecord]) -> list[RecordVerdict]:
        """Entailment verdicts, extended incrementally as the buffer grows."""
        if self.program is None:
            return [RecordVerdict(False, False, False) for _ in records]
        while len(self._verdicts) < len(records):
            self._verdicts.append(
                entails_record(self.program, records[len(self._verdicts)]))
        return self._verdicts[:len(records)]

    def has_witness(self, start: EpisodeStart, actions: ActionProvider,
                    horizon: int = DEFAULT_HORIZON) -> bool:
        """Cached optimism check; the program and start fully determine it."""
        key = (start.s0.canonical_key, start.c.text)
        if key not in self._witness_cache:
            self._witness_cache[key] = check_optimism(
                self.program, start, actions, horizon).satisfied
        return self._witness_cache[key]

    def rescore(self, records: list[TransitionRecord], starts: list[EpisodeStart],
                actions: ActionProvider, horizon: int = DEFAULT_HORIZON) -> float:
        """Recompute the progress score h against the current buffer view."""
        if self.program is None:
            self.h_score = 0.0
            return 0.0
        if not records and not starts:
            raise ContractViolation("cannot score against an empty buffer view")
        verdicts = self.verdicts(records)
        entailed = sum(1 for v in verdicts if v.entails)
        score = float(entailed)
        if entailed == len(records):
            score += sum(1.0 for start in starts
                         if self.has_witness(start, actions, horizon))
        self.h_score = score / (len(records) + len(starts))
        return self.h_score


class ProgramPool:
    def __init__(self):
        self.candidates: list[CandidateProgram] = []

    def add(self, candidate: CandidateProgram) -> int:
        self.candidates.append(candidate)
        return len(self.candidates) - 1

    @property
    def best(self) -> int:
        if not self.candidates:
            raise ContractViolation("empty pool has no best candidate")
        best_idx = 0
        for i, c in enumerate(self.candidates):
            if c.h_score > self.candidates[best_idx].h_score:
                best_idx = i
        return best_idx

    def best_compiled(self) -> Optional[CandidateProgram]:
        compiled = [c for c in self.candidates if c.program is not None]
        if not compiled:
            return None
        best = compiled[0]
        for c in compiled[1:]:
            if c.h_score > best.h_score:
                best = c
        return best

    def to_json(self) -> list[dict]:
        return [{"index": i, "parent": c.parent, "h": c.h_score,
                 "refine_count": c.refine_count, "stuck": c.stuck,
                 "compile_error": c.compile_error,
                 "fingerprint": c.source.fingerprint(),
                 "transition_fingerprint": c.source.transition_fingerprint(),
                 "source": c.source.to_json()}
                for i, c in enumerate(self.candidates)]


def thompson_select(pool: ProgramPool, seed: int,
               concentration: float = SELECTION_CONCENTRATION) -> int:
    """Thompson-sampled pool index; favors high h and few refinements."""
    if not pool.candidates:
        raise ContractViolation("cannot select from an empty pool")
    rng = random.Random(seed)
    best_idx, best_draw = 0, -1.0
    for i, cand in enumerate(pool.candidates):
        h = min(max(cand.h_score, 0.0), 1.0)
        alpha = 1.0 + concentration * h
        beta = 1.0 + concentration * (1.0 - h) + cand.refine_count
        draw = rng.betavariate(alpha, beta)
        if draw > best_draw:
            best_idx, best_draw = i, draw
    return best_idx


# ---------------------------------------------------------------------------
# Refinement failures handed to backends
# ---------------------------------------------------------------------------

@dataclass
class RefinementFailure:
    """What is wrong with the selected candidate, fit failures first."""

    kind: str  # "fit" or "optimism"
    record: Optional[TransitionRecord] = None
    verdict: Optional[RecordVerdict] = None
    entailed_sample: list[TransitionRecord] = field(default_factory=list)
    start: Optional[EpisodeStart] = None
    uncovered: bool = False
    records: list[TransitionRecord] = field(default_factory=list)
    actions: Optional[ActionProvider] = None
    horizon: int = DEFAULT_HORIZON


def describe_failure(candidate: CandidateProgram, records: list[TransitionRecord],
                     starts: list[EpisodeStart], actions: ActionProvider,
                     horizon: int = DEFAULT_HORIZON,
                     optimism: bool = True) -> Optional[RefinementFailure]:
    """First fit counterexample, else the first start without a witness."""
    verdicts = candidate.verdicts(records)
    entailed = [records[i] for i, v in enumerate(verdicts) if v.entails]
    for i, v in enumerate(verdicts):
        if not v.entails:
            return RefinementFailure(
                "fit", record=records[i], verdict=v,
                entailed_sample=entailed[:3], records=records,
                actions=actions, horizon=horizon)
    if optimism and candidate.program is not None:
        for start in starts:
            if not candidate.has_witness(start, actions, horizon):
                uncovered = not candidate.program.covers(start.c)
                return RefinementFailure(
                    "optimism", start=start, uncovered=uncovered,
                    entailed_sample=entailed[:3], records=records,
                    actions=actions, horizon=horizon)
    return None


class SynthesizerBackend:
    """Interface every synthesizer backend provides; ``calls`` counts uses."""

    calls: int = 0

    def propose_initial(self, records: list[TransitionRecord],
                        starts: list[EpisodeStart], actions: ActionProvider,
                        seed: int = 0) -> ProgramSource:
        raise NotImplementedError

    def refine(self, source: ProgramSource,
               failure: RefinementFailure) -> ProgramSource:
        raise NotImplementedError

    def propose_reward_for_context(self, base: ProgramSource, context: Context,
                                   starts: list[EpisodeStart]) -> ProgramSource:
        """Extend the reward model to a new goal, keeping the dynamics as-is."""
        raise NotImplementedError


# ---------------------------------------------------------------------------
# Synthesize loop
# ---------------------------------------------------------------------------

def synthesize(pool: ProgramPool, backend: SynthesizerBackend,
               records: list[TransitionRecord], starts: list[EpisodeStart],
               actions: ActionProvider, budget: int = DEFAULT_BUDGET,
               optimism: bool = True, horizon: int = DEFAULT_HORIZON,
               seed: int = 0) -> tuple[WorldModelProgram, ProgramPool]:
    """Refine candidates until h = 1 or the backend-call budget is spent.

    With optimism disabled, starts are ignored entirely: the score reduces to
    the entailed fraction and refinement is driven by fit failures alone.
    """
    effective_starts = starts if optimism else []
    calls_at_entry = backend.calls

    def remaining() -> int:
        return budget - (backend.calls - calls_at_entry)

    if not pool.candidates:
        if remaining() <= 0:
            raise SynthesisError("no candidates and no budget to propose one")
        src = backend.propose_initial(records, effective_starts, actions,
                                      seed=stable_seed(seed, "init"))
        pool.add(CandidateProgram(src))
    for cand in pool.candidates:
        cand.rescore(records, effective_starts, actions, horizon)

    iteration = 0
    max_iterations = 4 * budget + 16  # guards against no-call loop paths
    while iteration < max_iterations:
        best = pool.candidates[pool.best]
        if best.h_score >= 1.0 and best.program is not None:
            break
        if remaining() <= 0:
            break
        idx = thompson_select(pool, stable_seed(seed, "select", iteration))
        iteration += 1
        cand = pool.candidates[idx]
        failure = describe_failure(cand, records, effective_starts, actions,
                                   horizon, optimism)
        if failure is None:
            cand.refine_count += 1
            if cand.program is not None:
                cand.rescore(records, effective_starts, actions, horizon)
            continue
        new_source = backend.refine(cand.source, failure)
        cand.refine_count += 1
        new_cand = CandidateProgram(new_source, parent=idx)
        new_cand.stuck = new_source.fingerprint() == cand.source.fingerprint()
        new_cand.rescore(records, effective_starts, actions, horizon)
        pool.add(new_cand)
        if new_cand.stuck and new_cand.h_score <= cand.h_score:
            break  # refinement is out of ideas; act and wait for new evidence

    winner = pool.best_compiled()
    if winner is None:
        raise SynthesisError("every candidate in the pool failed to compile")
    return winner.program, pool


# ---------------------------------------------------------------------------
# Enumerative backend: bounded counterexample-guided edits over the rule DSL
# ---------------------------------------------------------------------------

class _AstProgram(WorldModelProgram):
    """Rule ASTs behind the program interface, for cheap candidate checks."""

    def __init__(self, transition: dsl.RuleProgram,
                 rewards: dict[str, dsl.RuleProgram]):
        self.source = None
        self._transition = transition
        self._rewards = rewards

    def covers(self, c: Context) -> bool:
        return c.text in self._rewards

    def eval_transition(self, s: State, a: Action) -> EvalOutcome:
        try:
            return EvalOutcome.of_state(dsl.eval_transition_rules(self._transition, s, a))
        except Exception as exc:
            return EvalOutcome.of_fault(FAULT_RUNTIME, repr(exc))

    def eval_reward(self, c: Context, s: State, a: Action, s_next: State) -> EvalOutcome:
        rules = self._rewards.get(c.text)
        if rules is None:
            return EvalOutcome.of_fault(FAULT_UNCOVERED, c.text)
        try:
            r, d = dsl.eval_reward_rules(rules, c.text, s, a, s_next)
            return EvalOutcome.of_reward(r, d)
        except Exception as exc:
            return EvalOutcome.of_fault(FAULT_RUNTIME, repr(exc))


_CHECK_SAMPLE_CAP = 24


class EnumerativeBackend(SynthesizerBackend):
    """Deterministic repair search over the rule DSL.

    Each refinement looks for the smallest single-rule edit (add, replace,
    or delete) that makes the program entail the counterexample while
    preserving a cached sample of previously entailed records. Conditions
    are drawn from a bounded vocabulary over the counterexample's entities:
    presence and absence of entity kinds at the actor's own, faced, and
    nearby cells, field equality, and carrying tests.
    """

    def __init__(self, actor: str = "Agent", max_extra_conds: int = 2,
                 max_rules: int = MAX_RULES, max_edits: int = 64):
        self.calls = 0
        self.actor = actor
        self.max_extra_conds = max_extra_conds
        self.max_rules = max_rules
        self.max_edits = max_edits

    # -- backend interface ---------------------------------------------------

    def propose_initial(self, records, starts, actions, seed: int = 0) -> ProgramSource:
        self.calls += 1
        rng = random.Random(seed)
        sample = list(records)
        if len(sample) > 7:
            sample = [sample[i] for i in sorted(rng.sample(range(len(sample)), 7))]
        transition = dsl.RuleProgram(actor=self.actor)
        rewards: dict[str, dsl.RuleProgram] = {}
        transition, rewards = self._repair_all(transition, rewards, sample, sample)
        return self._materialize(transition, rewards, lineage=None)

    def refine(self, source: ProgramSource, failure: RefinementFailure) -> ProgramSource:
        """One debugging response: repair until the buffer view is entailed.

        Mirrors how a code-writing assistant answers a counterexample prompt
        with a whole corrected program, not a single patched line: the inner
        single-edit repair runs until no counterexample is left or the edit
        search gets stuck.
        """
        self.calls += 1
        if source.dialect != "rule_dsl":
            raise SynthesisError("the enumerative backend edits rule_dsl sources only")
        transition = dsl.parse_program(source.transition_text)
        rewards = {ctx: dsl.parse_program(text)
                   for ctx, text in source.reward_texts.items()}
        sample = self._sample_records(failure)
        if failure.kind == "fit":
            new_t, new_r = self._repair_all(transition, rewards,
                                            failure.records, sample)
        else:
            new_t, new_r = self._repair_optimism(transition, rewards, failure, sample)
        stuck = new_t is transition and new_r is rewards
        out = self._materialize(new_t, new_r, lineage=source.fingerprint())
        if stuck:
            out.transition_text = source.transition_text
            out.reward_texts = dict(source.reward_texts)
        return out

    def propose_reward_for_context(self, base: ProgramSource, context: Context,
                                   starts) -> ProgramSource:
        self.calls += 1
        start_state = None
        for s in starts:
            if s.c.text == context.text:
                start_state = s.s0
                break
        templates = self._reward_templates(context.text, start_state)
        rules = tuple(dsl.RewardRule(context.text, conds, 1.0, True)
                      for conds in templates[:1])
        reward_texts = dict(base.reward_texts)
        reward_texts[context.text] = dsl.pretty_print(
            dsl.RuleProgram(actor=self.actor, reward_rules=rules))
        return ProgramSource("rule_dsl", base.transition_text, reward_texts,
                             lineage=base.fingerprint())

    # -- candidate evaluation ------------------------------------------------

    def _sample_records(self, failure: RefinementFailure) -> list[TransitionRecord]:
        records = failure.records
        if len(records) <= _CHECK_SAMPLE_CAP:
            return list(records)
        step_by = len(records) / _CHECK_SAMPLE_CAP
        return [records[int(i * step_by)] for i in range(_CHECK_SAMPLE_CAP)]

    def _entails(self, transition: dsl.RuleProgram, rewards: dict[str, dsl.RuleProgram],
                 rec: TransitionRecord) -> tuple[bool, bool]:
        try:
            predicted = dsl.eval_transition_rules(transition, rec.s, rec.a)
            t_ok = predicted == rec.s_next
        except Exception:
            t_ok = False
        rules = rewards.get(rec.c.text)
        if rules is None:
            r_ok = False
        else:
            try:
                r, d = dsl.eval_reward_rules(rules, rec.c.text, rec.s, rec.a, rec.s_next)
                r_ok = abs(r - rec.r) <= 1e-9 and d == rec.d
            except Exception:
                r_ok = False
        return t_ok, r_ok

    def _fits_sample(self, transition, rewards, sample, check_rewards=True) -> bool:
        for rec in sample:
            t_ok, r_ok = self._entails(transition, rewards, rec)
            if not t_ok or (check_rewards and not r_ok):
                return False
        return True

    # -- fit repair ------------------------------------------------------------

    def _repair_all(self, transition, rewards, records, sample):
        """Repeat single-record repairs until fit or stuck on some record."""
        keep = list(sample)
        given_up: set[int] = set()
        for _ in range(self.max_edits):
            cx = next((i for i, r in enumerate(records)
                       if i not in given_up
                       and self._entails(transition, rewards, r) != (True, True)),
                      None)
            if cx is None:
                break
            new_t, new_r = self._repair_once(transition, rewards, records[cx], keep)
            if new_t is transition and new_r is rewards:
                given_up.add(cx)
                continue
            transition, rewards = new_t, new_r
            if records[cx] not in keep:
                keep.append(records[cx])
        return transition, rewards

    def _repair_once(self, transition, rewards, rec, sample, verdict=None):
        """One counterexample-guided edit; returns inputs unchanged when stuck."""
        t_ok, r_ok = self._entails(transition, rewards, rec)
        if verdict is not None:
            t_ok, r_ok = verdict.transition_ok, verdict.reward_ok
        if not t_ok:
            repaired = self._repair_transition(transition, rewards, rec, sample)
            if repaired is not None:
                transition = repaired
                t_ok, r_ok = self._entails(transition, rewards, rec)
        if not r_ok:
            repaired = self._repair_reward(transition, rewards, rec, sample)
            if repaired is not None:
                rewards = repaired
        return transition, rewards

    def _repair_transition(self, transition, rewards, rec, sample):
        plans = self._effect_encodings(rec)
        vocabulary = self._condition_vocabulary(rec.s)
        entailed = [r for r in sample
                    if self._entails(transition, rewards, r)[0]]
        for mandatory, effects in plans:
            free = [c for c in vocabulary if c not in mandatory]
            for size in range(self.max_extra_conds + 1):
                for extra in itertools.combinations(free, size):
                    rule = dsl.TransitionRule(rec.a.name,
                                              tuple(mandatory) + extra, effects)
                    for edited in self._rule_edits(transition, rule):
                        if len(edited.rules) > self.max_rules:
                            continue
                        if not self._entails(edited, rewards, rec)[0]:
                            continue
                        if all(self._entails(edited, rewards, r)[0] for r in entailed):
                            return edited
        return None

    def _rule_edits(self, program: dsl.RuleProgram, rule: dsl.TransitionRule):
        yield dsl.RuleProgram(program.actor, (rule,) + program.rules,
                              program.reward_rules)
        for i, old in enumerate(program.rules):
            if old.action == rule.action:
                new_rules = program.rules[:i] + (rule,) + program.rules[i + 1:]
                yield dsl.RuleProgram(program.actor, new_rules, program.reward_rules)

    def _repair_reward(self, transition, rewards, rec, sample):
        ctx = rec.c.text
        current = rewards.get(ctx, dsl.RuleProgram(actor=self.actor))
        entailed = [r for r in sample if r.c.text == ctx
                    and self._entails(transition, rewards, r)[1]]
        vocabulary = self._condition_vocabulary(rec.s_next, mode="reward")
        candidates: list[tuple[dsl.RuleProgram, ...]] = []

        def try_rules(rule_tuple) -> Optional[dict]:
            trial = dict(rewards)
            trial[ctx] = dsl.RuleProgram(self.actor, (), rule_tuple)
            if not self._entails(transition, trial, rec)[1]:
                return None
            if all(self._entails(transition, trial, r)[1] for r in entailed):
                return trial
        # Deleting a misfiring rule is the smallest edit of all.
        for i in range(len(current.reward_rules)):
            trial = try_rules(current.reward_rules[:i] + current.reward_rules[i + 1:])
            if trial is not None:
                return trial
        for size in range(self.max_extra_conds + 1):
            for conds in itertools.combinations(vocabulary, size):
                rule = dsl.RewardRule(ctx, conds, rec.r, rec.d)
                trial = try_rules((rule,) + current.reward_rules)
                if trial is not None:
                    return trial
        return None

    # -- optimism repair -------------------------------------------------------

    def _repair_optimism(self, transition, rewards, failure: RefinementFailure, sample):
        start = failure.start
        ctx = start.c.text
        templates = self._reward_templates(ctx, start.s0)[:8]
        speculative = [()] + self._speculative_transitions(start.s0)
        current_rules = rewards.get(ctx, dsl.RuleProgram(actor=self.actor)).reward_rules
        ctx_sample = [r for r in sample if r.c.text == ctx]
        for extra_rules in speculative:
            new_t = transition
            if extra_rules:
                # Imagined rules go first so stale catch-alls cannot shadow
                # them; the sample check rejects speculation the data refutes.
                merged = tuple(r for r in extra_rules
                               if r not in transition.rules) + transition.rules
                if len(merged) > self.max_rules:
                    continue
                new_t = dsl.RuleProgram(transition.actor, merged,
                                        transition.reward_rules)
                if not self._fits_sample(new_t, rewards, sample, check_rewards=False):
                    continue
            # One optimistic traversal per dynamics hypothesis; every reward
            # option is then screened against the collected edges before the
            # expensive exact check confirms it.
            edges = self._reachable_edges(new_t, start.s0, failure.actions,
                                          failure.horizon)
            reward_options = [current_rules] if current_rules else []
            reward_options += [
                (dsl.RewardRule(ctx, conds, 1.0, True),) + current_rules
                for conds in templates]
            for rule_tuple in reward_options:
                trial_rewards = dict(rewards)
                trial_rewards[ctx] = dsl.RuleProgram(self.actor, (), rule_tuple)
                if not any(self._positive_done(trial_rewards[ctx], ctx, s, a, s2)
                           for s, a, s2 in edges):
                    continue
                if not self._fits_sample(new_t, trial_rewards, ctx_sample):
                    continue
                program = _AstProgram(new_t, trial_rewards)
                if check_optimism(program, start, failure.actions,
                                  failure.horizon).satisfied:
                    return new_t, trial_rewards
        return transition, rewards

    def _reachable_edges(self, transition, s0: State, actions, horizon: int,
                         cap: int = 4000):
        """Edges reachable from the start, ignoring episode termination.

        A superset of what any reward model allows, so screening against it
        never misses a witness; hits still need the exact check.
        """
        from collections import deque

        seen = {s0.canonical_key}
        queue = deque([(s0, 0)])
        edges = []
        while queue and len(edges) < cap:
            state, depth = queue.popleft()
            if depth >= horizon:
                continue
            for a in actions(state):
                try:
                    s_next = dsl.eval_transition_rules(transition, state, a)
                except Exception:
                    continue
                edges.append((state, a, s_next))
                key = s_next.canonical_key
                if key not in seen:
                    seen.add(key)
                    queue.append((s_next, depth + 1))
        return edges

    def _positive_done(self, reward_rules, ctx, s, a, s_next) -> bool:
        try:
            r, d = dsl.eval_reward_rules(reward_rules, ctx, s, a, s_next)
        except Exception:
            return False
        return d and r > 0

    def _speculative_transitions(self, state: State) -> list[tuple]:
        """Imagined ability rules, tried when the data alone admits no plan."""
        directions = [(0, -1), (-1, 0), (0, 1), (1, 0)]
        groups: list[tuple] = []
        actor = next((e for e in state.entities if e.name == self.actor), None)
        if actor is None:
            return groups
        blockers = ("Wall", "Box", "Ball", "Lava", "Key")
        move_rules = tuple(
            dsl.TransitionRule("move forward", (
                dsl.FieldCond("SELF", "direction", "=", d),
                *(dsl.AbsentCond(dsl.EntityPattern(b), dsl.RelPlace(d[0], d[1]))
                  for b in blockers),
                dsl.AbsentCond(dsl.EntityPattern("Door", (("state", "locked"),)),
                               dsl.RelPlace(d[0], d[1]))),
                (dsl.MoveEffect("SELF", d[0], d[1]),))
            for d in directions)
        ring = directions
        turn_rules = tuple(
            dsl.TransitionRule(action, (dsl.FieldCond("SELF", "direction", "=", ring[i]),),
                               (dsl.SetEffect("SELF", "direction",
                                              ring[(i + delta) % 4]),))
            for action, delta in (("turn right", -1), ("turn left", 1))
            for i in range(4))
        pickup_rules = tuple(
            dsl.TransitionRule("pick up", (
                dsl.CarryingCond("nothing"),
                dsl.ExistsCond(dsl.EntityPattern(kind), dsl.FacingPlace(), "it")),
                (dsl.CarryEffect("it"),))
            for kind in ("Key", "Box", "Ball"))
        colors = sorted({e.get("color") for e in state.entities
                         if e.get("color") is not None})
        toggle_rules = tuple(
            dsl.TransitionRule("toggle", (
                dsl.CarryingCond("pattern", dsl.EntityPattern("ANY", (("color", c),))),
                dsl.ExistsCond(dsl.EntityPattern("Door", (("color", c),)),
                               dsl.FacingPlace(), "d")),
                (dsl.SetEffect("d", "state", "open"),))
            for c in colors)
        if any(e.name == "Door" for e in state.entities):
            groups.append(move_rules + turn_rules + pickup_rules + toggle_rules)
        groups.append(move_rules)
        groups.append(move_rules + turn_rules)
        groups.append(move_rules + turn_rules + pickup_rules)
        return groups

    # -- vocabularies ----------------------------------------------------------

    def _condition_vocabulary(self, state: State,
                              mode: str = "transition") -> list[dsl.Cond]:
        """Predicates over the state's entities, all true in that state.

        Transition repairs lead with the actor's direction (turn and move
        rules hinge on it); reward repairs lead with carrying tests and the
        actor's own cell, and skip faraway cells.
        """
        actor = next((e for e in state.entities if e.name == self.actor), None)
        vocabulary: list[dsl.Cond] = []
        if actor is None:
            return vocabulary
        direction = actor.get("direction")
        direction_cond = None
        if isinstance(direction, tuple):
            direction_cond = dsl.FieldCond("SELF", "direction", "=", direction)
        carrying_cond = None
        if "carrying" in actor.extras:
            carried = actor.get("carrying")
            if carried is None:
                carrying_cond = dsl.CarryingCond("nothing")
            else:
                constraints = tuple(sorted(
                    (k, v) for k, v in carried.extras.items()
                    if not isinstance(v, Entity) and k != "carrying"))
                carrying_cond = dsl.CarryingCond(
                    "pattern", dsl.EntityPattern(carried.name, constraints))
        if mode == "transition":
            vocabulary.extend(c for c in (direction_cond, carrying_cond) if c)
            places: list[dsl.Place] = []
            if isinstance(direction, tuple):
                places.append(dsl.FacingPlace())
            places.append(dsl.SelfPlace())
            places.extend(dsl.RelPlace(dx, dy) for dx, dy in
                          ((1, 0), (-1, 0), (0, 1), (0, -1),
                           (2, 0), (-2, 0), (0, 2), (0, -2)))
        else:
            vocabulary.extend(c for c in (carrying_cond,) if c)
            places = [dsl.SelfPlace()]
            if isinstance(direction, tuple):
                places.append(dsl.FacingPlace())
        if actor.x is None:
            return vocabulary
        names = sorted({e.name for e in state.entities if e.name != self.actor})
        for place in places:
            cell = self._cell_of(actor, place)
            if cell is None:
                continue
            here = [e for e in state.at(cell[0], cell[1]) if e.name != self.actor]
            present = {e.name for e in here}
            for name in names:
                pattern = dsl.EntityPattern(name)
                if name in present:
                    vocabulary.append(dsl.ExistsCond(pattern, place))
                    match = next(e for e in here if e.name == name)
                    state_field = match.get("state")
                    if state_field is not None:
                        vocabulary.append(dsl.ExistsCond(
                            dsl.EntityPattern(name, (("state", state_field),)), place))
                else:
                    vocabulary.append(dsl.AbsentCond(pattern, place))
        if mode != "transition" and direction_cond is not None:
            vocabulary.append(direction_cond)
        return vocabulary

    @staticmethod
    def _cell_of(actor: Entity, place: dsl.Place) -> Optional[tuple[int, int]]:
        if isinstance(place, dsl.SelfPlace):
            return (actor.x, actor.y)
        if isinstance(place, dsl.RelPlace):
            return (actor.x + place.dx, actor.y + place.dy)
        d = actor.get("direction")
        if not isinstance(d, tuple):
            return None
        return (actor.x + d[0], actor.y + d[1])

    def _place_options(self, actor: Entity, cell: tuple[int, int]) -> list[dsl.Place]:
        options: list[dsl.Place] = []
        if actor.x is None or actor.y is None:
            return options
        d = actor.get("direction")
        if isinstance(d, tuple) and cell == (actor.x + d[0], actor.y + d[1]):
            options.append(dsl.FacingPlace())
        if cell == (actor.x, actor.y):
            options.append(dsl.SelfPlace())
        else:
            options.append(dsl.RelPlace(cell[0] - actor.x, cell[1] - actor.y))
        return options

    def _effect_encodings(self, rec: TransitionRecord):
        """Ways to express the observed diff as (mandatory conds, effects)."""
        before = list(rec.s.entities)
        after = list(rec.s_next.entities)
        actor_before = next((e for e in before if e.name == self.actor), None)
        actor_after = next((e for e in after if e.name == self.actor), None)
        if actor_before is None or actor_after is None:
            return []
        gone = [e for e in before if e not in after and e.name != self.actor]
        new = [e for e in after if e not in before and e.name != self.actor]

        plans: list[tuple[list[dsl.Cond], list[dsl.Effect]]] = [([], [])]

        def extend(options: list[tuple[list[dsl.Cond], list[dsl.Effect]]]):
            nonlocal plans
            plans = [(pc + oc, pe + oe) for pc, pe in plans for oc, oe in options]

        # Actor movement and field changes.
        if (actor_before.x, actor_before.y) != (actor_after.x, actor_after.y):
            dx = actor_after.x - actor_before.x
            dy = actor_after.y - actor_before.y
            extend([([], [dsl.MoveEffect("SELF", dx, dy)])])
        carried_before = actor_before.get("carrying")
        carried_after = actor_after.get("carrying")
        for key in sorted(set(actor_before.extras) | set(actor_after.extras)):
            if key == "carrying":
                continue
            if actor_before.get(key) != actor_after.get(key):
                extend([([], [dsl.SetEffect("SELF", key, actor_after.get(key))])])

        bind_counter = itertools.count()

        def bindings_for(entity: Entity, constraints_from: Entity):
            name = f"x{next(bind_counter)}"
            constraints = tuple(sorted(
                (k, v) for k, v in constraints_from.extras.items()
                if not isinstance(v, Entity)))
            options = []
            for place in self._place_options(actor_before, (entity.x, entity.y)):
                cond = dsl.ExistsCond(
                    dsl.EntityPattern(constraints_from.name, constraints), place, name)
                options.append((name, cond))
            return options

        # Carrying changes.
        if carried_before != carried_after:
            if carried_before is None and carried_after is not None:
                picked = next((e for e in gone
                               if e.name == carried_after.name
                               and e.replace(x=None, y=None) == carried_after), None)
                if picked is None:
                    return []
                gone.remove(picked)
                options = [([cond], [dsl.CarryEffect(name)])
                           for name, cond in bindings_for(picked, picked)]
                extend(options)
            elif carried_after is None and carried_before is not None:
                dropped = next((e for e in new
                                if e.replace(x=None, y=None) == carried_before), None)
                if dropped is None:
                    return []
                new.remove(dropped)
                options = [([], [dsl.UncarryEffect(place)])
                           for place in self._place_options(
                               actor_before, (dropped.x, dropped.y))]
                extend(options)
            else:
                return []  # swapped carried item: out of vocabulary

        # Moved or mutated non-actor entities: pair leftovers by kind.
        for old in list(gone):
            partner = next((e for e in new if e.name == old.name), None)
            if partner is None:
                continue
            new.remove(partner)
            gone.remove(old)
            effects: list[dsl.Effect] = []
            same_cell = (old.x, old.y) == (partner.x, partner.y)
            options = []
            for name, cond in bindings_for(old, old):
                per_binding: list[dsl.Effect] = []
                if not same_cell:
                    per_binding.append(dsl.MoveEffect(
                        name, partner.x - old.x, partner.y - old.y))
                for key in sorted(set(old.extras) | set(partner.extras)):
                    if old.get(key) != partner.get(key):
                        per_binding.append(dsl.SetEffect(name, key, partner.get(key)))
                options.append(([cond], per_binding))
            extend(options)

        for old in gone:
            options = [([cond], [dsl.RemoveEffect(name)])
                       for name, cond in bindings_for(old, old)]
            extend(options)
        for added in new:
            constraints = tuple(sorted(
                (k, v) for k, v in added.extras.items() if not isinstance(v, Entity)))
            options = [([], [dsl.AddEffect(
                dsl.EntityPattern(added.name, constraints), place)])
                for place in self._place_options(actor_before, (added.x, added.y))]
            if not options:
                return []
            extend(options)

        out = []
        for conds, effects in plans:
            if not effects:
                effects = [dsl.NoopEffect()]
            out.append((conds, tuple(effects)))
        return out

    def _reward_templates(self, mission: str, state: Optional[State]):
        """Candidate goal conditions, ordered by word overlap with the mission."""
        mission_words = set(_words(mission))
        scored: list[tuple[float, int, tuple]] = []
        entries: list[tuple[str, tuple]] = []
        names = sorted({e.name for e in state.entities}) if state else []
        for name in names:
            if name == self.actor:
                continue
            entries.append((name, (dsl.ExistsCond(dsl.EntityPattern(name),
                                                  dsl.SelfPlace()),)))
        if state is not None:
            for e in state.entities:
                color = e.get("color")
                if e.name == self.actor:
                    continue
                label = f"{color} {e.name}" if color else e.name
                constraints = (("color", color),) if color else ()
                entries.append((label, (dsl.CarryingCond(
                    "pattern", dsl.EntityPattern(e.name, constraints)),)))
        for i, (label, conds) in enumerate(entries):
            overlap = len(mission_words & set(_words(label)))
            scored.append((-float(overlap), i, conds))
        scored.sort(key=lambda t: (t[0], t[1]))
        seen = set()
        out = []
        for _, _, conds in scored:
            if conds not in seen:
                seen.add(conds)
                out.append(conds)
        return out

    def _materialize(self, transition: dsl.RuleProgram,
                     rewards: dict[str, dsl.RuleProgram],
                     lineage: Optional[str]) -> ProgramSource:
        return ProgramSource(
            "rule_dsl", dsl.pretty_print(transition),
            {ctx: dsl.pretty_print(rules) for ctx, rules in rewards.items()},
            lineage=lineage)


def _words(text: str) -> list[str]:
    return [w for w in "".join(c.lower() if c.isalnum() else " "
                               for c in text).split() if w]
