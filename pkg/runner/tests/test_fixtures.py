"""The generated-code fixtures must agree with the primary's rule-set truth.

These tests import the primary package deliberately: the comparison needs its
entailment verdicts and environments, but the runner itself only ever speaks
the wire protocol.
"""

import random

import pytest

from codeworld.core import Context, TransitionRecord
from codeworld.envs import EnvSpec, generate_level, sokoban
from codeworld.objectives import check_fit, entails_record
from codeworld.runtime import dsl
from codeworld.runtime.program import ExternalProgram, ProgramSource
from codeworld.synthesis import _AstProgram

from tests.conftest import (
    GRID_MODEL,
    GRID_REWARD,
    PRIMARY_FIXTURES,
    RUNNER_CMD,
    SOKOBAN_MODEL,
    SOKOBAN_REWARD,
)

MISSION = "use the key to open the door and then get to the goal"


@pytest.fixture
def grid_program():
    source = ProgramSource("external", GRID_MODEL, {MISSION: GRID_REWARD})
    program = ExternalProgram(source, RUNNER_CMD, check_determinism="first",
                              timeout=10.0)
    yield program
    program.close()


@pytest.fixture
def sokoban_program():
    source = ProgramSource("external", SOKOBAN_MODEL,
                           {"win the game": SOKOBAN_REWARD})
    program = ExternalProgram(source, RUNNER_CMD, check_determinism="first",
                              timeout=10.0)
    yield program
    program.close()


def grid_truth_program():
    rules = dsl.parse_program(
        (PRIMARY_FIXTURES / "gridworld_rules.dsl").read_text())
    reward = dsl.parse_program(
        f'GOAL "{MISSION}" WHEN EXISTS Goal AT SELF THEN REWARD 1.0 DONE true')
    return _AstProgram(rules, {MISSION: reward})


def sokoban_truth_program():
    rules = dsl.parse_program(
        (PRIMARY_FIXTURES / "sokoban_rules.dsl").read_text())
    return _AstProgram(rules, {})


class TestGridVerdictEquivalence:
    def test_same_verdicts_as_the_rule_truth_on_the_shared_buffer(
            self, grid_program, doorkey_fixture):
        records = [TransitionRecord.from_json(r)
                   for r in doorkey_fixture["init_transition"]
                   + doorkey_fixture["init_reward"]]
        truth = grid_truth_program()
        runner_report = check_fit(grid_program, records)
        truth_report = check_fit(truth, records)
        assert runner_report.satisfied and truth_report.satisfied
        for mine, theirs in zip(runner_report.verdicts, truth_report.verdicts):
            assert mine.entails == theirs.entails
            assert mine.transition_ok == theirs.transition_ok
            assert mine.reward_ok == theirs.reward_ok

    def test_turn_state_is_reproduced_field_exact(self, grid_program,
                                                  doorkey_fixture):
        block = next(r for r in doorkey_fixture["init_transition"]
                     if r["a"]["name"] == "turn right")
        rec = TransitionRecord.from_json(block)
        out = grid_program.eval_transition(rec.s, rec.a)
        assert out.ok and out.state == rec.s_next


class TestSokobanVerdictEquivalence:
    def scripted_records(self, n_levels=3, steps=25):
        records = []
        rng = random.Random(5)
        for seed in range(n_levels):
            level = generate_level(EnvSpec(kind="sokoban", width=6, height=6,
                                           n_boxes=1), seed)
            state = level.initial
            for _ in range(steps):
                action = rng.choice(sokoban.ACTIONS)
                s_next, r, d = sokoban.step(state, action)
                records.append(TransitionRecord(state, action, r, s_next,
                                                Context("win the game"), d))
                if d:
                    break
                state = s_next
        return records

    def test_transition_verdicts_match_the_rule_truth(self, sokoban_program):
        # The rule language cannot express box-on-target rewards, so the
        # shared sokoban comparison covers the dynamics verdicts.
        records = self.scripted_records()
        truth = sokoban_truth_program()
        for rec in records:
            mine = entails_record(sokoban_program, rec)
            theirs = entails_record(truth, rec)
            assert mine.transition_ok and theirs.transition_ok

    def test_reward_routine_reproduces_the_final_push(self, sokoban_program):
        level = generate_level(EnvSpec(kind="sokoban", width=6, height=6,
                                       n_boxes=1), 1)
        from codeworld.envs import bfs_solve

        plan = bfs_solve(level)
        state = level.initial
        for action in plan[:-1]:
            state, _, _ = sokoban.step(state, action)
        s_next, r, d = sokoban.step(state, plan[-1])
        out = sokoban_program.eval_reward(Context("win the game"), state,
                                          plan[-1], s_next)
        assert out.ok and abs(out.reward - r) < 1e-9 and out.done == d
        assert abs(out.reward - 10.9) < 1e-9

    def test_full_entailment_on_scripted_runs(self, sokoban_program):
        # With its own generated reward routine the loaded model entails the
        # whole scripted buffer, rewards included.
        records = self.scripted_records(n_levels=2, steps=15)
        report = check_fit(sokoban_program, records)
        assert report.satisfied
