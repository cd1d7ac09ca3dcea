import random

import pytest

from codeworld.agent import Agent, AgentConfig, LevelSource, run, select_action
from codeworld.core import ContractViolation
from codeworld.envs import EnvSpec, bfs_solve, generate_level, gridworld, household
from codeworld.envs.base import GroundTruthProgram, Truth
from codeworld.planners import PlanConfig
from codeworld.runtime.program import ProgramSource
from codeworld.synthesis import EnumerativeBackend

EMPTY_ROOM = EnvSpec(kind="gridworld", width=5, height=5, mission_family="empty")


def truth_program():
    return GroundTruthProgram(Truth(gridworld.transition, gridworld.reward,
                                    gridworld.actions))


class TestSelectAction:
    def test_epsilon_one_is_uniform(self):
        # Chi-squared over 10,000 fixed-seed draws against the uniform law
        # at the 0.1% level (critical value for 6 dof is 22.46).
        level = generate_level(EMPTY_ROOM, 0)
        cfg = AgentConfig(epsilon=1.0)
        rng = random.Random(123)
        actions = gridworld.ACTIONS
        counts = {a.name: 0 for a in actions}
        for _ in range(10_000):
            a = select_action(level.initial, truth_program(), level.context,
                              cfg, rng, actions)
            counts[a.name] += 1
        expected = 10_000 / len(actions)
        chi2 = sum((c - expected) ** 2 / expected for c in counts.values())
        assert chi2 < 22.46, counts

    def test_epsilon_zero_with_model_is_deterministic(self):
        level = generate_level(EMPTY_ROOM, 1)
        cfg = AgentConfig(epsilon=0.0, planner=PlanConfig(depth=10))
        first = select_action(level.initial, truth_program(), level.context,
                              cfg, random.Random(0), gridworld.ACTIONS)
        second = select_action(level.initial, truth_program(), level.context,
                               cfg, random.Random(99), gridworld.ACTIONS)
        assert first == second

    def test_no_model_means_random_regardless_of_epsilon(self):
        level = generate_level(EMPTY_ROOM, 2)
        cfg = AgentConfig(epsilon=0.0)
        seen = {select_action(level.initial, None, level.context, cfg,
                              random.Random(s), gridworld.ACTIONS).name
                for s in range(40)}
        assert len(seen) > 1  # planner output would be a single action

    def test_epsilon_bounds_are_enforced(self):
        with pytest.raises(ContractViolation):
            AgentConfig(epsilon=1.5)


class TestRun:
    def test_steps_sum_matches_the_buffer(self):
        agent = Agent(AgentConfig(planner=PlanConfig(depth=12)),
                      EnumerativeBackend("Agent"), seed=0)
        source = LevelSource(EMPTY_ROOM, run_seed=0)
        for episode in range(3):
            agent.metrics.rows.append(
                agent.run_episode(source.get(episode), episode))
        assert sum(r.steps for r in agent.metrics.rows) == len(agent.buffer)

    def test_synthesis_triggers_only_below_threshold_and_with_data(self):
        cfg = AgentConfig(planner=PlanConfig(depth=12), min_data_size=10)
        metrics = run(LevelSource(EMPTY_ROOM, run_seed=1), cfg, 4, 1,
                      EnumerativeBackend("Agent"))
        assert metrics.synth_events, "learning never triggered"
        for event in metrics.synth_events:
            assert event["buffer_size"] >= cfg.min_data_size
            assert event["h_before"] is None or event["h_before"] < 1.0

    def test_pre_learning_phase_is_all_random(self):
        cfg = AgentConfig(min_data_size=10 ** 6)
        metrics = run(LevelSource(EMPTY_ROOM, run_seed=2), cfg, 2, 2,
                      EnumerativeBackend("Agent"))
        assert metrics.backend_calls == 0 and not metrics.synth_events

    def test_ground_truth_model_walks_the_optimal_path(self):
        cfg = AgentConfig(epsilon=0.0, planner=PlanConfig(depth=14))
        for seed in range(4):
            source = LevelSource(EMPTY_ROOM, run_seed=seed)
            metrics = run(source, cfg, 2, seed, EnumerativeBackend("Agent"),
                          model_override=truth_program())
            for episode, row in enumerate(metrics.rows):
                optimum = len(bfs_solve(source.get(episode)))
                assert row.steps == optimum, (seed, episode)

    def test_mcts_planner_solves_household_tasks_optimally(self):
        # Action sets are state-dependent here: the planner must query them
        # per node, not reuse the root's.
        spec = EnvSpec(kind="household", mission_family="put")
        source = LevelSource(spec, run_seed=1)
        truth = GroundTruthProgram(source.get(0).truth)
        cfg = AgentConfig(epsilon=0.0, planner_kind="mcts",
                          planner=PlanConfig(mcts_budget=1500))
        metrics = run(source, cfg, 2, 0, EnumerativeBackend("agent1"),
                      model_override=truth)
        for episode, row in enumerate(metrics.rows):
            assert row.total_reward > 0
            assert row.steps == len(bfs_solve(source.get(episode)))

    def test_transfer_source_keeps_the_transition_frozen(self):
        warm = ProgramSource(
            "rule_dsl", open("tests/fixtures/gridworld_rules.dsl").read(), {})
        spec = EnvSpec(kind="gridworld", width=6, height=5,
                       mission_family="unlockpickup", seed=5)
        cfg = AgentConfig(planner=PlanConfig(depth=16), transfer_source=warm,
                          horizon=30)
        agent = Agent(cfg, EnumerativeBackend("Agent"), seed=3)
        source = LevelSource(spec, run_seed=3)
        for episode in range(3):
            agent.metrics.rows.append(
                agent.run_episode(source.get(episode), episode))
        fingerprints = {c.source.transition_fingerprint()
                        for c in agent.pool.candidates}
        assert fingerprints == {warm.transition_fingerprint()}
        assert any(r.total_reward > 0 for r in agent.metrics.rows)

    def test_runs_are_deterministic(self):
        cfg = AgentConfig(planner=PlanConfig(depth=12))

        def fingerprint():
            m = run(LevelSource(EMPTY_ROOM, run_seed=4), cfg, 3, 4,
                    EnumerativeBackend("Agent"))
            return [(r.steps, r.total_reward, r.synth_calls, r.pool_size)
                    for r in m.rows]

        assert fingerprint() == fingerprint()

    def test_csv_shape(self):
        cfg = AgentConfig(planner=PlanConfig(depth=12))
        metrics = run(LevelSource(EMPTY_ROOM, run_seed=5), cfg, 2, 5,
                      EnumerativeBackend("Agent"))
        lines = metrics.to_csv().splitlines()
        assert lines[0] == "episode,steps,total_reward,synth_calls,pool_size,wallclock_ms"
        assert len(lines) == 3
        assert all(line.endswith(",0") for line in lines[1:])  # no timings

    def test_episodes_must_be_positive(self):
        with pytest.raises(ContractViolation):
            run(LevelSource(EMPTY_ROOM, run_seed=0), AgentConfig(), 0, 0,
                EnumerativeBackend("Agent"))
