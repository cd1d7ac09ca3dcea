"""Independent reference implementations used only as test oracles.

``push_transition``/``push_reward`` are a line-for-line transcription of the
box-pusher world-model code that the environment module implements natively,
kept deliberately close to its original imperative, mutating style so the two
code paths share nothing. ``naive_transition``/``naive_reward`` re-implement
the rule-language semantics from scratch in a plain recursive style.
"""

from __future__ import annotations

import copy

from codeworld.core import Action, Entity, State
from codeworld.runtime import dsl


# ---------------------------------------------------------------------------
# Box-pusher transcription (mutating entity objects, like the original)
# ---------------------------------------------------------------------------

class Thing:
    def __init__(self, name, x, y):
        self.name = name
        self.x = x
        self.y = y


def get_entities_by_name(entities, name):
    return [entity for entity in entities if entity.name == name]


def get_entities_by_position(entities, x, y):
    return [entity for entity in entities if entity.x == x and entity.y == y]


def push_transition(state, action):
    action_to_delta = {
        "move right": (1, 0),
        "move left": (-1, 0),
        "move up": (0, -1),
        "move down": (0, 1),
    }
    player = get_entities_by_name(state, "Player")[0]
    boxes = get_entities_by_name(state, "Box")
    walls = get_entities_by_name(state, "Wall")
    delta_x, delta_y = action_to_delta[action]
    new_player_x = player.x + delta_x
    new_player_y = player.y + delta_y
    if get_entities_by_position(walls, new_player_x, new_player_y):
        pass
    else:
        pushed_box = get_entities_by_position(boxes, new_player_x, new_player_y)
        if pushed_box:
            pushed_box_x = pushed_box[0].x + delta_x
            pushed_box_y = pushed_box[0].y + delta_y
            if get_entities_by_position(boxes + walls, pushed_box_x, pushed_box_y):
                pass
            else:
                pushed_box[0].x += delta_x
                pushed_box[0].y += delta_y
                player.x += delta_x
                player.y += delta_y
        else:
            player.x += delta_x
            player.y += delta_y
    return state


def push_reward(state, action, next_state):
    reward = -0.1
    done = False
    boxes_prev = get_entities_by_name(state, "Box")
    targets_prev = get_entities_by_name(state, "Target")
    boxes_next = get_entities_by_name(next_state, "Box")
    targets_next = get_entities_by_name(next_state, "Target")
    for box in boxes_next:
        if any(box.x == target.x and box.y == target.y for target in targets_next):
            if not any(box.x == prev_box.x and box.y == prev_box.y
                       for prev_box in boxes_prev
                       if any(prev_box.x == prev_target.x and prev_box.y == prev_target.y
                              for prev_target in targets_prev)):
                reward += 1
    for box in boxes_prev:
        if any(box.x == target.x and box.y == target.y for target in targets_prev):
            if not any(box.x == next_box.x and box.y == next_box.y
                       for next_box in boxes_next
                       if any(next_box.x == next_target.x and next_box.y == next_target.y
                              for next_target in targets_next)):
                reward -= 1
    if all(any(box.x == target.x and box.y == target.y for target in targets_next)
           for box in boxes_next):
        reward += 10
        done = True
    return reward, done


def things_from_state(state: State) -> list[Thing]:
    return [Thing(e.name, e.x, e.y) for e in state]


def push_step(state: State, action: Action) -> tuple[list[Thing], float, bool]:
    """Step the transcription: deep-copies first, like the runner would."""
    before = things_from_state(state)
    after = push_transition(copy.deepcopy(before), action.name)
    r, d = push_reward(before, action.name, after)
    return after, r, d


def things_equal_state(things: list[Thing], state: State) -> bool:
    left = sorted((t.name, t.x, t.y) for t in things)
    right = sorted((e.name, e.x, e.y) for e in state)
    return left == right


# ---------------------------------------------------------------------------
# Naive rule-language evaluator (recursive, no interpreter machinery shared)
# ---------------------------------------------------------------------------

def _naive_cell(place, actor):
    if isinstance(place, dsl.SelfPlace):
        return (actor.x, actor.y)
    if isinstance(place, dsl.RelPlace):
        return (actor.x + place.dx, actor.y + place.dy)
    d = actor.get("direction")
    if not isinstance(d, tuple):
        return None
    return (actor.x + d[0], actor.y + d[1])


def _naive_cond(cond, entities, actor, bindings):
    if isinstance(cond, dsl.ExistsCond) or isinstance(cond, dsl.AbsentCond):
        cell = _naive_cell(cond.place, actor) if actor.x is not None else None
        found = []
        if cell is not None:
            found = [e for e in entities
                     if (e.x, e.y) == cell and cond.pattern.matches(e)]
        if isinstance(cond, dsl.AbsentCond):
            return not found
        if not found:
            return False
        if cond.bind:
            bindings[cond.bind] = found[0]
        return True
    if isinstance(cond, dsl.FieldCond):
        target = actor if cond.ref == "SELF" else bindings.get(cond.ref)
        if target is None:
            return False
        value = target.get(cond.field_name)
        return value == cond.literal if cond.op == "=" else value != cond.literal
    carried = actor.get("carrying")
    if cond.kind == "nothing":
        return carried is None
    if cond.kind == "any":
        return carried is not None
    return carried is not None and cond.pattern.matches(carried)


def naive_transition(program: dsl.RuleProgram, state: State, action: Action) -> State:
    actors = state.by_name(program.actor)
    if len(actors) != 1:
        return state
    for rule in program.rules:
        if rule.action != action.name:
            continue
        actor = actors[0]
        bindings: dict[str, Entity] = {}
        if not all(_naive_cond(c, list(state), actor, bindings) for c in rule.conds):
            continue
        entities = list(state)
        renames = {id(e): e for e in entities}

        def current(ref):
            if ref == "SELF":
                matches = [e for e in entities if e.name == program.actor]
                return matches[0] if len(matches) == 1 else None
            original = bindings.get(ref)
            if original is None:
                return None
            for e in entities:
                if e is original:
                    return e
            for e in entities:
                if e == original:
                    return e
            return None

        for eff in rule.effects:
            if isinstance(eff, dsl.NoopEffect):
                continue
            if isinstance(eff, dsl.MoveEffect):
                target = current(eff.ref)
                if target is None or target.x is None:
                    continue
                moved = target.replace(x=target.x + eff.dx, y=target.y + eff.dy)
                entities[entities.index(target)] = moved
                if eff.ref != "SELF":
                    bindings[eff.ref] = moved
            elif isinstance(eff, dsl.SetEffect):
                target = current(eff.ref)
                if target is None:
                    continue
                updated = target.replace(**{eff.field_name: eff.literal})
                entities[entities.index(target)] = updated
                if eff.ref != "SELF":
                    bindings[eff.ref] = updated
            elif isinstance(eff, dsl.RemoveEffect):
                target = current(eff.ref)
                if target is not None and target in entities:
                    entities.remove(target)
            elif isinstance(eff, dsl.AddEffect):
                me = current("SELF")
                cell = _naive_cell(eff.place, me) if me is not None else None
                if cell is not None:
                    entities.append(Entity(eff.pattern.name, cell[0], cell[1],
                                           **dict(eff.pattern.constraints)))
            elif isinstance(eff, dsl.CarryEffect):
                me = current("SELF")
                target = current(eff.ref)
                if me is None or target is None or target is me:
                    continue
                entities.remove(target)
                carried = target.replace(x=None, y=None)
                entities[entities.index(me)] = me.replace(carrying=carried)
            elif isinstance(eff, dsl.UncarryEffect):
                me = current("SELF")
                if me is None:
                    continue
                carried = me.get("carrying")
                cell = _naive_cell(eff.place, me)
                if carried is None or cell is None:
                    continue
                entities[entities.index(me)] = me.replace(carrying=None)
                entities.append(carried.replace(x=cell[0], y=cell[1]))
        return State(entities)
    return state


def naive_reward(program: dsl.RuleProgram, context: str, next_state: State
                 ) -> tuple[float, bool]:
    actors = next_state.by_name(program.actor)
    for rule in program.reward_rules:
        if rule.context != context:
            continue
        if len(actors) != 1:
            continue
        bindings: dict[str, Entity] = {}
        if all(_naive_cond(c, list(next_state), actors[0], bindings)
               for c in rule.conds):
            return (rule.reward, rule.done)
    return (0.0, False)
