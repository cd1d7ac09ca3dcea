import json
import sys
from pathlib import Path

import pytest

from codeworld.core import Context, EpisodeStart, State, TransitionRecord
from codeworld.envs import gridworld, household
from codeworld.envs.base import EnvSpec, GroundTruthProgram, Level, Truth
from codeworld.runtime import dsl

FIXTURES = Path(__file__).parent / "fixtures"


@pytest.fixture(scope="session")
def doorkey_fixture() -> dict:
    return json.loads((FIXTURES / "doorkey_experience.json").read_text())


@pytest.fixture(scope="session")
def doorkey_records(doorkey_fixture) -> list[TransitionRecord]:
    """All distinct experience records from the door-key prompt fixtures."""
    records = []
    seen = set()
    blocks = (doorkey_fixture["init_transition"] + doorkey_fixture["init_reward"]
              + doorkey_fixture["refine_transition"]["passing"]
              + [doorkey_fixture["refine_transition"]["failing"]]
              + doorkey_fixture["refine_reward"]["passing"]
              + [doorkey_fixture["refine_reward"]["failing"]])
    for obj in blocks:
        rec = TransitionRecord.from_json(obj)
        key = (rec.s.canonical_key, rec.a.render(), rec.s_next.canonical_key)
        if key not in seen:
            seen.add(key)
            records.append(rec)
    return records


@pytest.fixture(scope="session")
def doorkey_start(doorkey_fixture) -> EpisodeStart:
    block = doorkey_fixture["optimism_start"]
    return EpisodeStart(State.from_json(block["state"]), Context(block["context"]))


@pytest.fixture(scope="session")
def gridworld_truth() -> GroundTruthProgram:
    return GroundTruthProgram(Truth(gridworld.transition, gridworld.reward,
                                    gridworld.actions))


@pytest.fixture(scope="session")
def gridworld_rules() -> dsl.RuleProgram:
    return dsl.parse_program((FIXTURES / "gridworld_rules.dsl").read_text())


@pytest.fixture(scope="session")
def sokoban_rules() -> dsl.RuleProgram:
    return dsl.parse_program((FIXTURES / "sokoban_rules.dsl").read_text())


@pytest.fixture(scope="session")
def household_level() -> Level:
    obj = json.loads((FIXTURES / "household_level.json").read_text())
    return Level(State.from_json(obj["state"]), Context(obj["context"]),
                 Truth(household.transition, household.reward, household.actions),
                 EnvSpec.from_json(obj["spec"]))


@pytest.fixture
def echo_runner_cmd() -> list[str]:
    return [sys.executable, str(FIXTURES / "echo_runner.py")]
