"""Box-pushing puzzle environment, optionally with a pair of teleport gates.

Dynamics: the player moves one cell per action unless a wall blocks it; a box
in the way is pushed unless the cell behind holds a wall or another box, in
which case nothing moves. Rewards: -0.1 per step, +1 for each box newly on a
target, -1 for each box leaving a target, and +10 with episode end once every
box sits on a target.

Teleport variant: after movement resolves, a player standing on a gate is
relocated to the partner gate, unless a box occupies either gate cell (a
blocked gate pair is inactive).
"""

from __future__ import annotations

import random

from codeworld.core import Action, Context, ContractViolation, Entity, State, stable_seed
from codeworld.envs.base import EnvSpec, GeneratorError, Level, Truth, bfs_solve

ACTIONS = [Action("move up"), Action("move down"),
           Action("move left"), Action("move right")]

DELTAS = {"move right": (1, 0), "move left": (-1, 0),
          "move up": (0, -1), "move down": (0, 1)}

MISSION = "win the game"


def transition(state: State, action: Action) -> State:
    if action.name not in DELTAS:
        raise ContractViolation(f"unknown sokoban action {action.name!r}")
    dx, dy = DELTAS[action.name]
    entities = list(state.entities)
    player_idx = next(i for i, e in enumerate(entities) if e.name == "Player")
    player = entities[player_idx]
    nx, ny = player.x + dx, player.y + dy

    def has(name: str, x: int, y: int) -> bool:
        return any(e.name == name and e.x == x and e.y == y for e in entities)

    if has("Wall", nx, ny):
        return state
    box_idx = next((i for i, e in enumerate(entities)
                    if e.name == "Box" and e.x == nx and e.y == ny), None)
    if box_idx is not None:
        bx, by = nx + dx, ny + dy
        if has("Wall", bx, by) or has("Box", bx, by):
            return state
        box = entities[box_idx]
        entities[box_idx] = box.replace(x=bx, y=by)
    entities[player_idx] = player.replace(x=nx, y=ny)

    gates = [e for e in entities if e.name == "Gate"]
    if len(gates) == 2:
        here = next((g for g in gates if g.x == nx and g.y == ny), None)
        if here is not None:
            partner = gates[0] if gates[1] is here else gates[1]
            blocked = any(e.name == "Box" and (e.x, e.y) in
                          ((here.x, here.y), (partner.x, partner.y))
                          for e in entities)
            if not blocked:
                entities[player_idx] = entities[player_idx].replace(
                    x=partner.x, y=partner.y)
    return State(entities)


def reward(mission: str, state: State, action: Action, next_state: State) -> tuple[float, bool]:
    r = -0.1
    done = False
    on_target_prev = _boxes_on_targets(state)
    on_target_next = _boxes_on_targets(next_state)
    for pos in on_target_next:
        if pos not in on_target_prev:
            r += 1
    for pos in on_target_prev:
        if pos not in on_target_next:
            r -= 1
    boxes_next = next_state.by_name("Box")
    targets = {(t.x, t.y) for t in next_state.by_name("Target")}
    if all((b.x, b.y) in targets for b in boxes_next):
        r += 10
        done = True
    return r, done


def _boxes_on_targets(state: State) -> set[tuple[int, int]]:
    targets = {(t.x, t.y) for t in state.by_name("Target")}
    return {(b.x, b.y) for b in state.by_name("Box") if (b.x, b.y) in targets}


def step(state: State, action: Action, mission: str = MISSION) -> tuple[State, float, bool]:
    s_next = transition(state, action)
    r, d = reward(mission, state, action, s_next)
    return s_next, r, d


def actions(state: State) -> list[Action]:
    return list(ACTIONS)


def generate(spec: EnvSpec, seed: int, attempts: int = 300) -> Level:
    """Deterministic solvable level for the given spec and seed."""
    rng = random.Random(stable_seed("sokoban", spec.kind, spec.width, spec.height,
                                    spec.n_boxes, spec.seed, seed))
    with_gates = spec.kind == "sokoban_teleport"
    for _ in range(attempts):
        level = _sample_level(spec, rng, with_gates)
        if level is None:
            continue
        if bfs_solve(level) is not None:
            return level
    raise GeneratorError(f"no solvable sokoban level after {attempts} attempts")


def _sample_level(spec: EnvSpec, rng: random.Random, with_gates: bool):
    w, h = spec.width, spec.height
    entities = [Entity("Wall", x, y)
                for x in range(w) for y in range(h)
                if x in (0, w - 1) or y in (0, h - 1)]
    # Interior cells one step away from walls are safe box destinations;
    # boxes starting against a wall are often dead immediately.
    interior = [(x, y) for x in range(1, w - 1) for y in range(1, h - 1)]
    deep = [(x, y) for x in range(2, w - 2) for y in range(2, h - 2)]
    if len(deep) < spec.n_boxes or len(interior) < 2 * spec.n_boxes + 3:
        return None
    boxes = rng.sample(deep, spec.n_boxes)
    rest = [c for c in interior if c not in boxes]
    targets = rng.sample(rest, spec.n_boxes)
    if set(targets) == set(boxes):
        return None
    rest = [c for c in rest if c not in targets]
    player = rng.choice(rest)
    rest = [c for c in rest if c != player]
    for x, y in boxes:
        entities.append(Entity("Box", x, y))
    for x, y in targets:
        entities.append(Entity("Target", x, y))
    entities.append(Entity("Player", player[0], player[1]))
    if with_gates:
        if len(rest) < 2:
            return None
        g1, g2 = rng.sample(rest, 2)
        entities.append(Entity("Gate", g1[0], g1[1]))
        entities.append(Entity("Gate", g2[0], g2[1]))
    return Level(State(entities), Context(MISSION),
                 Truth(transition, reward, actions), spec)
