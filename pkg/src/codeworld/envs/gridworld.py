"""Key/door gridworld with an oriented agent that can carry one item.

The agent turns through the direction ring [(0,-1), (-1,0), (0,1), (1,0)]
(turn right steps the ring index down, turn left up). Moving forward is
blocked by walls, boxes, balls, lava, keys, and any door that is not open.
Picking up works on the agent's own cell first, then the faced cell, only
with empty hands; dropping needs an empty faced cell; toggling opens a faced
door exactly when the carried item's color matches the door's.
"""

from __future__ import annotations

import random
import re

from codeworld.core import Action, Context, ContractViolation, Entity, State, stable_seed
from codeworld.envs.base import EnvSpec, GeneratorError, Level, Truth, bfs_solve

ACTIONS = [Action("turn left"), Action("turn right"), Action("move forward"),
           Action("pick up"), Action("drop"), Action("toggle"), Action("nothing")]

DIRECTION_RING = [(0, -1), (-1, 0), (0, 1), (1, 0)]

BLOCKING = ("Wall", "Box", "Ball", "Lava", "Key")
NOT_PICKABLE_HERE = ("Door", "Wall", "Agent")
NOT_PICKABLE_AHEAD = ("Door", "Wall")

COLORS = ["yellow", "green", "red", "blue", "purple", "grey"]

_PICKUP_MISSION = re.compile(r"pick up the (\w+) (\w+)")


def transition(state: State, action: Action) -> State:
    if action.name not in {a.name for a in ACTIONS}:
        raise ContractViolation(f"unknown gridworld action {action.name!r}")
    entities = list(state.entities)
    agent_idx = next(i for i, e in enumerate(entities) if e.name == "Agent")
    agent = entities[agent_idx]
    direction = agent.get("direction")
    fx, fy = agent.x + direction[0], agent.y + direction[1]

    if action.name in ("turn left", "turn right"):
        idx = DIRECTION_RING.index(direction)
        step_by = -1 if action.name == "turn right" else 1
        new_dir = DIRECTION_RING[(idx + step_by) % 4]
        entities[agent_idx] = agent.replace(direction=new_dir)
    elif action.name == "move forward":
        ahead = [e for e in entities if e.x == fx and e.y == fy]
        blocked = any(e.name in BLOCKING or
                      (e.name == "Door" and e.get("state") != "open")
                      for e in ahead)
        if not blocked:
            entities[agent_idx] = agent.replace(x=fx, y=fy)
    elif action.name == "pick up":
        if agent.get("carrying") is None:
            here = [i for i, e in enumerate(entities)
                    if e.x == agent.x and e.y == agent.y
                    and e.name not in NOT_PICKABLE_HERE]
            ahead = [i for i, e in enumerate(entities)
                     if e.x == fx and e.y == fy
                     and e.name not in NOT_PICKABLE_AHEAD]
            pickable = here or ahead
            if pickable:
                item = entities.pop(pickable[0])
                if pickable[0] < agent_idx:
                    agent_idx -= 1
                entities[agent_idx] = agent.replace(
                    carrying=item.replace(x=None, y=None))
    elif action.name == "drop":
        carried = agent.get("carrying")
        ahead = [e for e in entities if e.x == fx and e.y == fy]
        if carried is not None and not ahead:
            entities[agent_idx] = agent.replace(carrying=None)
            entities.append(carried.replace(x=fx, y=fy))
    elif action.name == "toggle":
        carried = agent.get("carrying")
        doors = [i for i, e in enumerate(entities)
                 if e.name == "Door" and e.x == fx and e.y == fy]
        if doors and carried is not None and \
                entities[doors[0]].get("color") == carried.get("color"):
            entities[doors[0]] = entities[doors[0]].replace(state="open")
    # "nothing" falls through
    return State(entities)


def reward(mission: str, state: State, action: Action, next_state: State) -> tuple[float, bool]:
    agent = next_state.one("Agent")
    m = _PICKUP_MISSION.search(mission)
    if m:
        color, kind = m.group(1), m.group(2)
        carried = agent.get("carrying")
        if isinstance(carried, Entity) and carried.name.lower() == kind.lower() \
                and carried.get("color") == color:
            return 1.0, True
        return 0.0, False
    if "the goal" in mission:
        if any(e.name == "Goal" for e in next_state.at(agent.x, agent.y)):
            return 1.0, True
        return 0.0, False
    return 0.0, False


def step(state: State, action: Action, mission: str) -> tuple[State, float, bool]:
    s_next = transition(state, action)
    r, d = reward(mission, state, action, s_next)
    return s_next, r, d


def actions(state: State) -> list[Action]:
    return list(ACTIONS)


def generate(spec: EnvSpec, seed: int, attempts: int = 300) -> Level:
    rng = random.Random(stable_seed("gridworld", spec.width, spec.height,
                                    spec.mission_family, spec.seed, seed))
    for _ in range(attempts):
        level = _sample_level(spec, rng)
        if level is None:
            continue
        if bfs_solve(level) is not None:
            return level
    raise GeneratorError(f"no solvable gridworld level after {attempts} attempts")


def _border(w: int, h: int) -> list[Entity]:
    return [Entity("Wall", x, y) for x in range(w) for y in range(h)
            if x in (0, w - 1) or y in (0, h - 1)]


def _sample_level(spec: EnvSpec, rng: random.Random):
    w, h = spec.width, spec.height
    family = spec.mission_family
    if family == "empty":
        cells = [(x, y) for x in range(1, w - 1) for y in range(1, h - 1)]
        agent_cell, goal_cell = rng.sample(cells, 2)
        entities = _border(w, h)
        entities.append(Entity("Agent", agent_cell[0], agent_cell[1],
                               direction=rng.choice(DIRECTION_RING), carrying=None))
        entities.append(Entity("Goal", goal_cell[0], goal_cell[1]))
        mission = "get to the goal"
    elif family in ("doorkey", "unlockpickup"):
        if w < 5 or h < 4:
            return None
        split = rng.randrange(2, w - 2)
        color = rng.choice(COLORS)
        entities = _border(w, h)
        door_y = rng.randrange(1, h - 1)
        for y in range(1, h - 1):
            if y != door_y:
                entities.append(Entity("Wall", split, y))
        entities.append(Entity("Door", split, door_y, color=color, state="locked"))
        left = [(x, y) for x in range(1, split) for y in range(1, h - 1)]
        right = [(x, y) for x in range(split + 1, w - 1) for y in range(1, h - 1)]
        if len(left) < 2 or len(right) < 1:
            return None
        agent_cell, key_cell = rng.sample(left, 2)
        target_cell = rng.choice(right)
        entities.append(Entity("Agent", agent_cell[0], agent_cell[1],
                               direction=rng.choice(DIRECTION_RING), carrying=None))
        entities.append(Entity("Key", key_cell[0], key_cell[1], color=color))
        if family == "doorkey":
            entities.append(Entity("Goal", target_cell[0], target_cell[1]))
            mission = "use the key to open the door and then get to the goal"
        else:
            box_color = rng.choice([c for c in COLORS if c != color])
            entities.append(Entity("Box", target_cell[0], target_cell[1],
                                   color=box_color))
            mission = f"pick up the {box_color} box"
    else:
        raise GeneratorError(f"unknown gridworld mission family {family!r}")
    return Level(State(entities), Context(mission),
                 Truth(transition, reward, actions), spec)
