"""One-room task-planning world over fluent-style entities.

Entities have no grid coordinates; receptacles sit at named locations and
objects live in or on receptacles. The agent navigates between receptacle
locations, carries at most one object, and uses appliances to change object
fluents (hot/cool/clean). Appliances relocate the agent to themselves when
used; pickup and put require standing at the right location.
"""

from __future__ import annotations

import random
import re

from codeworld.core import Action, Context, ContractViolation, Entity, State, stable_seed
from codeworld.envs.base import EnvSpec, GeneratorError, Level, Truth, bfs_solve

ACTION_NAMES = {"Goto", "Open", "Close", "Pickup", "Put", "Heat", "Cool", "Clean"}

RECEPTACLE_TYPES = {
    "fridge": {"openable": True, "cools": True},
    "microwave": {"openable": True, "heats": True},
    "sink": {"cleans": True},
    "drawer": {"openable": True},
    "cabinet": {"openable": True},
    "desk": {},
    "sidetable": {},
    "shelf": {},
    "garbagecan": {},
}

OBJECT_TYPES = ["egg", "apple", "alarmclock", "mug", "book", "plate",
                "tomato", "pen", "cloth", "bowl", "spoon", "watch"]

_PUT_MISSION = re.compile(r"^put an? (?:(hot|cool|clean) )?(\w+?)s? in (?:the )?(\w+)$")


def entity_type(name: str) -> str:
    return name.rstrip("0123456789")


def _capability(name: str) -> dict:
    return RECEPTACLE_TYPES.get(entity_type(name), {})


def _find(entities: list[Entity], name: str) -> int | None:
    return next((i for i, e in enumerate(entities) if e.name == name), None)


def transition(state: State, action: Action) -> State:
    if action.name not in ACTION_NAMES:
        raise ContractViolation(f"unknown household action {action.name!r}")
    entities = list(state.entities)
    agent_idx = next(i for i, e in enumerate(entities)
                     if entity_type(e.name) == "agent")
    agent = entities[agent_idx]

    if action.name == "Goto":
        dest = _find(entities, action.arg("dest"))
        if dest is not None:
            entities[agent_idx] = agent.replace(loc=entities[dest].get("loc"))
        return State(entities)

    if action.name in ("Open", "Close"):
        idx = _find(entities, action.arg("obj"))
        if idx is not None:
            rec = entities[idx]
            if _capability(rec.name).get("openable") and \
                    rec.get("loc") == agent.get("loc"):
                want_open = action.name == "Open"
                if rec.get("isopen") != want_open:
                    entities[idx] = rec.replace(isopen=want_open)
        return State(entities)

    obj_idx = _find(entities, action.arg("obj"))
    rec_idx = _find(entities, action.arg("receptacle"))
    if obj_idx is None or rec_idx is None:
        return State(entities)
    obj, rec = entities[obj_idx], entities[rec_idx]

    if action.name == "Pickup":
        container = _find(entities, obj.get("in_on") or "")
        container_open = True
        if container is not None and _capability(entities[container].name).get("openable"):
            container_open = bool(entities[container].get("isopen"))
        if agent.get("holding") is None and obj.get("loc") == agent.get("loc") \
                and entity_type(obj.name) in OBJECT_TYPES and container_open:
            entities[agent_idx] = agent.replace(holding=obj.name)
            entities[obj_idx] = obj.replace(loc=None, in_on=None)
    elif action.name == "Put":
        openable = _capability(rec.name).get("openable")
        if agent.get("holding") == obj.name and rec.get("loc") == agent.get("loc") \
                and (not openable or rec.get("isopen")):
            entities[agent_idx] = agent.replace(holding=None)
            entities[obj_idx] = obj.replace(loc=rec.get("loc"), in_on=rec.name)
    elif action.name in ("Heat", "Cool", "Clean"):
        needed = {"Heat": "heats", "Cool": "cools", "Clean": "cleans"}[action.name]
        if _capability(rec.name).get(needed):
            # Appliances pull the agent to themselves before operating.
            agent = agent.replace(loc=rec.get("loc"))
            entities[agent_idx] = agent
            if agent.get("holding") == obj.name:
                if action.name == "Heat":
                    entities[obj_idx] = obj.replace(ishot=True, iscool=False)
                elif action.name == "Cool":
                    entities[obj_idx] = obj.replace(iscool=True, ishot=False)
                else:
                    entities[obj_idx] = obj.replace(isclean=True)
    return State(entities)


def reward(mission: str, state: State, action: Action, next_state: State) -> tuple[float, bool]:
    m = _PUT_MISSION.match(mission.strip().lower())
    if not m:
        return 0.0, False
    fluent, obj_type, rec_type = m.group(1), m.group(2), m.group(3)
    flag = {"hot": "ishot", "cool": "iscool", "clean": "isclean"}.get(fluent)
    for e in next_state.entities:
        if entity_type(e.name) != obj_type:
            continue
        container = e.get("in_on")
        if container is None or entity_type(container) != rec_type:
            continue
        if flag is None or e.get(flag) is True:
            return 1.0, True
    return 0.0, False


def step(state: State, action: Action, mission: str) -> tuple[State, float, bool]:
    s_next = transition(state, action)
    r, d = reward(mission, state, action, s_next)
    return s_next, r, d


def actions(state: State) -> list[Action]:
    """Applicable-ish actions: navigation everywhere, manipulation at the agent's spot."""
    agent = next(e for e in state.entities if entity_type(e.name) == "agent")
    loc = agent.get("loc")
    holding = agent.get("holding")
    receptacles = sorted((e for e in state.entities
                          if entity_type(e.name) in RECEPTACLE_TYPES),
                         key=lambda e: e.name)
    objects = sorted((e for e in state.entities
                      if entity_type(e.name) in OBJECT_TYPES),
                     key=lambda e: e.name)
    out = [Action.make("Goto", dest=r.name) for r in receptacles]
    here = [r for r in receptacles if r.get("loc") == loc]
    for r in here:
        if _capability(r.name).get("openable"):
            out.append(Action.make("Open", obj=r.name))
            out.append(Action.make("Close", obj=r.name))
    for o in objects:
        if o.get("loc") == loc and o.get("in_on") is not None:
            out.append(Action.make("Pickup", obj=o.name, receptacle=o.get("in_on")))
    if holding is not None:
        for r in here:
            out.append(Action.make("Put", obj=holding, receptacle=r.name))
            caps = _capability(r.name)
            if caps.get("heats"):
                out.append(Action.make("Heat", obj=holding, receptacle=r.name))
            if caps.get("cools"):
                out.append(Action.make("Cool", obj=holding, receptacle=r.name))
            if caps.get("cleans"):
                out.append(Action.make("Clean", obj=holding, receptacle=r.name))
    return out


def generate(spec: EnvSpec, seed: int, attempts: int = 300) -> Level:
    rng = random.Random(stable_seed("household", spec.mission_family, spec.seed, seed))
    for _ in range(attempts):
        level = _sample_level(spec, rng)
        if level is not None and bfs_solve(level) is not None:
            return level
    raise GeneratorError(f"no solvable household level after {attempts} attempts")


def _sample_level(spec: EnvSpec, rng: random.Random):
    fluent = {"put": None, "put_hot": "hot", "put_cool": "cool",
              "put_clean": "clean"}.get(spec.mission_family, None)
    required = {"hot": "microwave", "cool": "fridge", "clean": "sink"}.get(fluent)
    rec_types = [t for t in RECEPTACLE_TYPES if t != required]
    chosen = rng.sample(rec_types, min(5, len(rec_types)))
    if required:
        chosen.append(required)
    entities: list[Entity] = []
    rec_names: list[str] = []
    for i, rtype in enumerate(sorted(chosen)):
        name = f"{rtype}1"
        fields = {"loc": f"loc{i + 1}"}
        if RECEPTACLE_TYPES[rtype].get("openable"):
            fields["isopen"] = False
        entities.append(Entity(name, **fields))
        rec_names.append(name)
    obj_types = rng.sample(OBJECT_TYPES, min(4, len(OBJECT_TYPES)))
    target_obj = obj_types[0]
    plain = [r for r in rec_names
             if not RECEPTACLE_TYPES[entity_type(r)] and r != required]
    if len(plain) < 2:
        return None
    source_rec = rng.choice(plain)
    dest_rec = rng.choice([r for r in plain if r != source_rec])
    for i, otype in enumerate(sorted(obj_types)):
        home = source_rec if otype == target_obj else rng.choice(rec_names)
        home_ent = entities[rec_names.index(home)]
        entities.append(Entity(f"{otype}1", loc=home_ent.get("loc"),
                               in_on=home, ishot=False, iscool=False, isclean=False))
    start = rng.choice([r for r in rec_names if r != source_rec])
    start_loc = entities[rec_names.index(start)].get("loc")
    entities.append(Entity("agent1", loc=start_loc, holding=None))
    mission = f"put a {'' if fluent is None else fluent + ' '}{target_obj} " \
              f"in {entity_type(dest_rec)}"
    return Level(State(entities), Context(mission),
                 Truth(transition, reward, actions), spec)
