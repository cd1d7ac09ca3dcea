import random

import pytest

from codeworld.core import Action, ContractViolation, Entity, State
from codeworld.envs import (
    Episode,
    EnvSpec,
    bfs_solve,
    generate_level,
    gridworld,
    household,
    sokoban,
)

from tests.reference_impls import push_step, things_equal_state


def box_room(player, boxes, targets, extra_walls=(), gates=(), w=5, h=5):
    entities = [Entity("Wall", x, y) for x in range(w) for y in range(h)
                if x in (0, w - 1) or y in (0, h - 1)]
    entities += [Entity("Wall", x, y) for x, y in extra_walls]
    entities += [Entity("Box", x, y) for x, y in boxes]
    entities += [Entity("Target", x, y) for x, y in targets]
    entities += [Entity("Gate", x, y) for x, y in gates]
    entities.append(Entity("Player", player[0], player[1]))
    return State(entities)


class TestSokoban:
    def test_final_push_pays_out_and_ends(self):
        state = box_room(player=(1, 2), boxes=[(2, 2)], targets=[(3, 2)])
        s2, r, d = sokoban.step(state, Action("move right"))
        assert abs(r - 10.9) < 1e-9 and d
        assert s2.by_name("Box")[0].x == 3

    def test_wall_bump_leaves_state_unchanged(self):
        state = box_room(player=(1, 1), boxes=[(2, 2)], targets=[(3, 3)])
        s2, r, d = sokoban.step(state, Action("move up"))
        assert s2 == state and abs(r + 0.1) < 1e-9 and not d

    def test_plain_step_costs_a_tenth(self):
        state = box_room(player=(1, 2), boxes=[(3, 3)], targets=[(1, 3)])
        s2, r, d = sokoban.step(state, Action("move down"))
        assert s2 != state and abs(r + 0.1) < 1e-9 and not d

    def test_push_off_then_back_nets_minus_point_two(self):
        # The two pushing steps pair -1 and +1 with two -0.1 base terms.
        state = box_room(player=(1, 2), boxes=[(2, 2)], targets=[(2, 2)],
                         w=6, h=5)
        s2, r_off, d = sokoban.step(state, Action("move right"))
        assert not d
        walk = [Action("move up"), Action("move right"), Action("move right"),
                Action("move down")]
        s = s2
        for a in walk:
            s, _, _ = sokoban.step(s, a)
        assert s.one("Player").x == 4 and s.one("Player").y == 2
        s3, r_on, d = sokoban.step(s, Action("move left"))
        assert d  # single box back on the single target
        assert abs((r_off + (r_on - 10)) - (-0.2)) < 1e-9

    def test_unknown_action_is_a_contract_violation(self):
        state = box_room(player=(1, 1), boxes=[(2, 2)], targets=[(3, 3)])
        with pytest.raises(ContractViolation):
            sokoban.transition(state, Action("fly"))

    def test_blocked_push_is_identity(self):
        state = box_room(player=(1, 2), boxes=[(2, 2), (3, 2)], targets=[(1, 1), (1, 3)])
        s2, r, d = sokoban.step(state, Action("move right"))
        assert s2 == state and abs(r + 0.1) < 1e-9

    def test_matches_transcription_on_scripted_runs(self):
        rng = random.Random(2)
        for seed in range(5):
            level = generate_level(EnvSpec(kind="sokoban", width=7, height=7,
                                           n_boxes=2), seed)
            state = level.initial
            for _ in range(40):
                action = rng.choice(sokoban.ACTIONS)
                expected_things, expected_r, expected_d = push_step(state, action)
                s2, r, d = sokoban.step(state, action)
                assert things_equal_state(expected_things, s2)
                assert abs(r - expected_r) < 1e-9 and d == expected_d
                if d:
                    break
                state = s2


class TestTeleporters:
    def test_active_gate_relocates_the_player(self):
        state = box_room(player=(1, 1), boxes=[(3, 3)], targets=[(1, 3)],
                         gates=[(2, 1), (3, 1)])
        s2, _, _ = sokoban.step(state, Action("move right"))
        player = s2.one("Player")
        assert (player.x, player.y) == (3, 1)

    def test_gate_blocked_by_box_on_partner_is_inactive(self):
        state = box_room(player=(1, 1), boxes=[(3, 1)], targets=[(1, 3)],
                         gates=[(2, 1), (3, 1)])
        s2, _, _ = sokoban.step(state, Action("move right"))
        player = s2.one("Player")
        assert (player.x, player.y) == (2, 1)  # stepped on, not transported

    def test_boxes_do_not_teleport(self):
        state = box_room(player=(1, 1), boxes=[(2, 1)], targets=[(1, 3)],
                         gates=[(3, 1), (3, 3)])
        s2, _, _ = sokoban.step(state, Action("move right"))
        assert (s2.by_name("Box")[0].x, s2.by_name("Box")[0].y) == (3, 1)
        # The pushing player lands on a plain cell, not a gate.
        assert (s2.one("Player").x, s2.one("Player").y) == (2, 1)

    def test_generated_teleport_levels_have_exactly_two_gates(self):
        for seed in range(20):
            level = generate_level(EnvSpec(kind="sokoban_teleport",
                                           width=7, height=7, n_boxes=1), seed)
            assert len(level.initial.by_name("Gate")) == 2


def key_room(direction, door_state="locked", carrying=None):
    entities = [Entity("Wall", x, y) for x in range(5) for y in range(5)
                if x in (0, 4) or y in (0, 4)]
    entities += [Entity("Wall", 2, 1), Entity("Wall", 2, 3)]
    entities.append(Entity("Agent", 1, 2, direction=direction, carrying=carrying))
    entities.append(Entity("Door", 2, 2, color="yellow", state=door_state))
    entities.append(Entity("Key", 1, 3, color="yellow"))
    entities.append(Entity("Goal", 3, 3))
    return State(entities)


class TestGridworld:
    def test_turn_right_steps_the_ring_down(self):
        s2 = gridworld.transition(key_room((-1, 0)), Action("turn right"))
        assert s2.one("Agent").get("direction") == (0, -1)

    def test_turn_left_steps_the_ring_up(self):
        s2 = gridworld.transition(key_room((0, 1)), Action("turn left"))
        assert s2.one("Agent").get("direction") == (1, 0)

    def test_toggle_with_empty_hands_does_nothing(self):
        state = key_room((1, 0))  # facing the locked door
        s2, r, d = gridworld.step(state, Action("toggle"),
                                  "use the key to open the door and then get to the goal")
        assert s2 == state and r == 0.0 and not d

    def test_toggle_with_matching_key_opens_the_door(self):
        state = key_room((1, 0), carrying=Entity("Key", None, None, color="yellow"))
        s2 = gridworld.transition(state, Action("toggle"))
        assert s2.one("Door").get("state") == "open"

    def test_toggle_with_wrong_color_does_nothing(self):
        state = key_room((1, 0), carrying=Entity("Key", None, None, color="red"))
        s2 = gridworld.transition(state, Action("toggle"))
        assert s2.one("Door").get("state") == "locked"

    def test_pick_up_green_box_rewards_and_ends(self):
        entities = [Entity("Wall", x, y) for x in range(5) for y in range(5)
                    if x in (0, 4) or y in (0, 4)]
        entities.append(Entity("Agent", 1, 1, direction=(1, 0), carrying=None))
        entities.append(Entity("Box", 2, 1, color="green"))
        state = State(entities)
        s2, r, d = gridworld.step(state, Action("pick up"), "pick up the green box")
        carried = s2.one("Agent").get("carrying")
        assert carried is not None and carried.name == "Box"
        assert r == 1.0 and d

    def test_forward_blocked_by_key(self):
        state = key_room((0, 1))  # key is directly below the agent
        s2 = gridworld.transition(state, Action("move forward"))
        assert s2 == state

    def test_locked_door_blocks_open_door_does_not(self):
        locked = key_room((1, 0))
        assert gridworld.transition(locked, Action("move forward")) == locked
        opened = key_room((1, 0), door_state="open")
        s2 = gridworld.transition(opened, Action("move forward"))
        assert (s2.one("Agent").x, s2.one("Agent").y) == (2, 2)

    def test_drop_requires_an_empty_cell(self):
        carrying = Entity("Key", None, None, color="yellow")
        state = key_room((1, 0), carrying=carrying)  # facing the door cell
        assert gridworld.transition(state, Action("drop")) == state
        state_free = key_room((0, -1), carrying=carrying)  # facing empty (1, 1)
        s2 = gridworld.transition(state_free, Action("drop"))
        assert s2.one("Agent").get("carrying") is None
        assert s2.by_name("Key") and any(k.x == 1 and k.y == 1
                                         for k in s2.by_name("Key"))

    def test_transition_is_independent_of_the_mission(self):
        state = key_room((0, 1))
        for action in gridworld.ACTIONS:
            s_a, _, _ = gridworld.step(state, action, "get to the goal")
            s_b, _, _ = gridworld.step(state, action, "pick up the green box")
            assert s_a == s_b

    def test_reward_fixture_records_hold(self, doorkey_records, gridworld_truth):
        for rec in doorkey_records:
            out = gridworld_truth.eval_reward(rec.c, rec.s, rec.a, rec.s_next)
            assert out.ok and abs(out.reward - rec.r) < 1e-9 and out.done == rec.d


class TestHousehold:
    def setup_method(self):
        self.entities = [
            Entity("microwave1", loc="loc1", isopen=False),
            Entity("fridge1", loc="loc2", isopen=False),
            Entity("desk1", loc="loc3"),
            Entity("egg1", loc="loc3", in_on="desk1",
                   ishot=False, iscool=False, isclean=False),
            Entity("agent1", loc="loc3", holding=None),
        ]

    def state(self, **agent_fields):
        entities = list(self.entities)
        if agent_fields:
            entities[-1] = entities[-1].replace(**agent_fields)
        return State(entities)

    def test_goto_relocates_the_agent(self):
        s2, r, d = household.step(self.state(), Action.make("Goto", dest="desk1"),
                                  "put a hot egg in fridge")
        agent = next(e for e in s2 if e.name == "agent1")
        assert agent.get("loc") == "loc3" and r == 0.0 and not d

    def test_heat_sets_the_hot_fluent(self):
        state = self.state(holding="egg1")
        s2 = household.transition(state, Action.make("Heat", obj="egg1",
                                                     receptacle="microwave1"))
        egg = next(e for e in s2 if e.name == "egg1")
        assert egg.get("ishot") is True and egg.get("iscool") is False

    def test_put_hot_egg_in_fridge_rewards_and_ends(self):
        state = self.state(holding="egg1", loc="loc2")
        entities = [e if e.name != "egg1" else
                    e.replace(ishot=True, loc=None, in_on=None)
                    for e in state]
        entities = [e if e.name != "fridge1" else e.replace(isopen=True)
                    for e in entities]
        state = State(entities)
        s2, r, d = household.step(state, Action.make("Put", obj="egg1",
                                                     receptacle="fridge1"),
                                  "put a hot egg in fridge")
        egg = next(e for e in s2 if e.name == "egg1")
        assert egg.get("in_on") == "fridge1"
        assert r == 1.0 and d

    def test_put_while_holding_nothing_is_a_noop(self):
        state = self.state()
        s2, r, d = household.step(state, Action.make("Put", obj="egg1",
                                                     receptacle="desk1"),
                                  "put a hot egg in fridge")
        assert s2 == state and r == 0.0 and not d

    def test_pickup_from_closed_receptacle_fails(self):
        entities = [e if e.name != "egg1" else e.replace(loc="loc2", in_on="fridge1")
                    for e in self.entities]
        entities[-1] = entities[-1].replace(loc="loc2")
        state = State(entities)
        s2 = household.transition(state, Action.make("Pickup", obj="egg1",
                                                     receptacle="fridge1"))
        assert s2 == state

    def test_unknown_action_is_a_contract_violation(self):
        with pytest.raises(ContractViolation):
            household.transition(self.state(), Action.make("Dance", obj="egg1"))


class TestGeneration:
    def test_generation_is_deterministic(self):
        spec = EnvSpec(kind="sokoban", width=7, height=7, n_boxes=1)
        a, b = generate_level(spec, 0), generate_level(spec, 0)
        assert a.initial == b.initial and a.context == b.context

    def test_every_generated_level_is_solvable(self):
        # The BFS oracle re-verifies what the generators promise.
        specs = [
            (EnvSpec(kind="sokoban", width=6, height=6, n_boxes=1), 120),
            (EnvSpec(kind="sokoban_teleport", width=6, height=6, n_boxes=1), 60),
            (EnvSpec(kind="gridworld", width=5, height=5,
                     mission_family="empty"), 120),
            (EnvSpec(kind="gridworld", width=6, height=5,
                     mission_family="doorkey"), 60),
            (EnvSpec(kind="gridworld", width=6, height=5,
                     mission_family="unlockpickup"), 60),
            (EnvSpec(kind="household", mission_family="put"), 60),
            (EnvSpec(kind="household", mission_family="put_hot"), 30),
        ]
        for spec, n in specs:
            for seed in range(n):
                level = generate_level(spec, seed)
                plan = bfs_solve(level)
                assert plan is not None, (spec.kind, seed)
                assert len(plan) <= level.spec.step_limit

    def test_step_determinism(self):
        level = generate_level(EnvSpec(kind="sokoban", width=7, height=7,
                                       n_boxes=2), 3)
        for action in sokoban.ACTIONS:
            once = sokoban.step(level.initial, action)
            twice = sokoban.step(level.initial, action)
            assert once == twice

    def test_episode_respects_the_step_cap(self):
        level = generate_level(EnvSpec(kind="gridworld", width=5, height=5,
                                       mission_family="empty", max_steps=4), 1)
        ep = Episode(level)
        while not ep.finished:
            ep.step(Action("nothing"))
        assert ep.truncated and ep.steps == 4

    def test_spec_validation(self):
        with pytest.raises(ContractViolation):
            EnvSpec(kind="chess")
        with pytest.raises(ContractViolation):
            EnvSpec(kind="sokoban", width=2)
