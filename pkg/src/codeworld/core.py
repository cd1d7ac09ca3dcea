"""Core domain types: object-set states, actions, goals, and the replay buffer.

States are finite multisets of typed entities. Identity is canonical: two
states with the same entity multiset compare equal regardless of the order
entities were listed in. All record types are immutable value objects.
"""

from __future__ import annotations

import hashlib
import json
import random
from dataclasses import dataclass
from typing import Any, Iterable, Iterator, Optional

# Entity field values: str | int | bool | (dx, dy) pair | nested Entity | None.
FieldValue = Any


class ContractViolation(Exception):
    """An operation was called outside its declared contract."""


def stable_seed(*parts: Any) -> int:
    """Platform-stable 63-bit seed derived from the given parts."""
    text = "\x1f".join(str(p) for p in parts)
    digest = hashlib.sha256(text.encode()).digest()
    return int.from_bytes(digest[:8], "big") >> 1


def _encode_value(v: FieldValue) -> Any:
    if isinstance(v, Entity):
        return v.to_json()
    if isinstance(v, tuple):
        return [int(v[0]), int(v[1])]
    if v is None or isinstance(v, (str, bool, int)):
        return v
    raise ContractViolation(f"unsupported entity field value: {v!r}")


def _decode_value(v: Any) -> FieldValue:
    if isinstance(v, dict):
        return Entity.from_json(v)
    if isinstance(v, list):
        if len(v) != 2 or not all(isinstance(i, int) for i in v):
            raise ContractViolation(f"expected a 2-int pair, got {v!r}")
        return (v[0], v[1])
    return v


class Entity:
    """A typed object with a kind name, optional cell coordinates, and extra fields.

    ``extras`` is an ordered mapping; nested entities (e.g. a carried item)
    may appear as values but only one level deep.
    """

    __slots__ = ("name", "x", "y", "extras", "_key")

    def __init__(self, name: str, x: Optional[int] = None, y: Optional[int] = None,
                 **extras: FieldValue):
        if not name:
            raise ContractViolation("entity name must be nonempty")
        for v in extras.values():
            if isinstance(v, Entity):
                for nested in v.extras.values():
                    if isinstance(nested, Entity):
                        raise ContractViolation("nested entities beyond depth 1")
        object.__setattr__(self, "name", name)
        object.__setattr__(self, "x", x)
        object.__setattr__(self, "y", y)
        object.__setattr__(self, "extras", dict(extras))
        object.__setattr__(self, "_key", None)

    def __setattr__(self, key, value):
        raise AttributeError("Entity is immutable; use replace()")

    def replace(self, **changes: FieldValue) -> "Entity":
        """Return a copy with coordinate or extra fields replaced."""
        x = changes.pop("x", self.x)
        y = changes.pop("y", self.y)
        extras = dict(self.extras)
        extras.update(changes)
        return Entity(self.name, x, y, **extras)

    def get(self, field_name: str) -> FieldValue:
        if field_name == "name":
            return self.name
        if field_name == "x":
            return self.x
        if field_name == "y":
            return self.y
        return self.extras.get(field_name)

    @property
    def key(self) -> bytes:
        k = object.__getattribute__(self, "_key")
        if k is None:
            k = json.dumps(self.to_json(), sort_keys=True,
                           separators=(",", ":")).encode()
            object.__setattr__(self, "_key", k)
        return k

    def to_json(self) -> dict:
        out: dict[str, Any] = {"name": self.name, "x": self.x, "y": self.y}
        for k, v in self.extras.items():
            out[k] = _encode_value(v)
        return out

    @staticmethod
    def from_json(obj: dict) -> "Entity":
        extras = {k: _decode_value(v) for k, v in obj.items()
                  if k not in ("name", "x", "y")}
        return Entity(obj["name"], obj.get("x"), obj.get("y"), **extras)

    def render(self) -> str:
        """Compact display form, e.g. ``Agent(1, 2, direction=(0, -1), carrying=None)``."""
        parts = []
        for k, v in self.extras.items():
            if isinstance(v, Entity):
                parts.append(f"{k}={v.render()}")
            elif isinstance(v, tuple):
                parts.append(f"{k}=({v[0]}, {v[1]})")
            else:
                parts.append(f"{k}={v}")
        attrs = ", ".join(parts)
        if attrs:
            return f"{self.name}({self.x}, {self.y}, {attrs})"
        return f"{self.name}({self.x}, {self.y})"

    def __repr__(self) -> str:
        return self.render()

    def __eq__(self, other) -> bool:
        return isinstance(other, Entity) and self.key == other.key

    def __hash__(self) -> int:
        return hash(self.key)


def _entity_sort_key(e: Entity):
    # e.key is cached per entity and already covers the extras (key-sorted).
    return (e.name, e.x is None, e.x or 0, e.y is None, e.y or 0, e.key)


class State:
    """An immutable multiset of entities with a derived canonical key."""

    __slots__ = ("entities", "canonical_key")

    def __init__(self, entities: Iterable[Entity]):
        ents = tuple(sorted(entities, key=_entity_sort_key))
        object.__setattr__(self, "entities", ents)
        object.__setattr__(self, "canonical_key",
                           b"\n".join(e.key for e in ents))

    def __setattr__(self, key, value):
        raise AttributeError("State is immutable")

    def __iter__(self) -> Iterator[Entity]:
        return iter(self.entities)

    def __len__(self) -> int:
        return len(self.entities)

    def by_name(self, name: str) -> list[Entity]:
        return [e for e in self.entities if e.name == name]

    def at(self, x: int, y: int) -> list[Entity]:
        return [e for e in self.entities if e.x == x and e.y == y]

    def one(self, name: str) -> Entity:
        found = self.by_name(name)
        if len(found) != 1:
            raise ContractViolation(f"expected exactly one {name}, found {len(found)}")
        return found[0]

    def to_json(self) -> list[dict]:
        return [e.to_json() for e in self.entities]

    @staticmethod
    def from_json(obj: list) -> "State":
        return State(Entity.from_json(d) for d in obj)

    def __eq__(self, other) -> bool:
        return isinstance(other, State) and self.canonical_key == other.canonical_key

    def __hash__(self) -> int:
        return hash(self.canonical_key)

    def __repr__(self) -> str:
        return "State[" + "; ".join(e.render() for e in self.entities) + "]"


def canonicalize(state: State) -> bytes:
    """Canonical byte key of a state: equal entity multisets give equal bytes."""
    return state.canonical_key


@dataclass(frozen=True)
class Action:
    """A named action with optional string arguments (empty for grid actions)."""

    name: str
    args: tuple[tuple[str, str], ...] = ()

    @staticmethod
    def make(name: str, **args: str) -> "Action":
        return Action(name, tuple(args.items()))

    def arg(self, key: str) -> str:
        for k, v in self.args:
            if k == key:
                return v
        raise ContractViolation(f"action {self.name} has no argument {key!r}")

    def render(self) -> str:
        if not self.args:
            return self.name
        inner = ", ".join(f"{k}={v}" for k, v in self.args)
        return f"{self.name}({inner})"

    def to_json(self) -> dict:
        return {"name": self.name, "args": dict(self.args)}

    @staticmethod
    def from_json(obj: dict) -> "Action":
        return Action(obj["name"], tuple((obj.get("args") or {}).items()))

    def __repr__(self) -> str:
        return self.render()


@dataclass(frozen=True)
class Context:
    """A natural-language goal."""

    text: str

    def __post_init__(self):
        if not self.text:
            raise ContractViolation("context text must be nonempty")


@dataclass(frozen=True)
class TransitionRecord:
    """One observed interaction: (s, a, r, s', c, d)."""

    s: State
    a: Action
    r: float
    s_next: State
    c: Context
    d: bool

    def to_json(self) -> dict:
        return {"s": self.s.to_json(), "a": self.a.to_json(), "r": self.r,
                "s_next": self.s_next.to_json(), "c": self.c.text, "d": self.d}

    @staticmethod
    def from_json(obj: dict) -> "TransitionRecord":
        return TransitionRecord(State.from_json(obj["s"]), Action.from_json(obj["a"]),
                                float(obj["r"]), State.from_json(obj["s_next"]),
                                Context(obj["c"]), bool(obj["d"]))


@dataclass(frozen=True)
class EpisodeStart:
    """An episode's initial state and goal."""

    s0: State
    c: Context

    def to_json(self) -> dict:
        return {"s0": self.s0.to_json(), "c": self.c.text}

    @staticmethod
    def from_json(obj: dict) -> "EpisodeStart":
        return EpisodeStart(State.from_json(obj["s0"]), Context(obj["c"]))


class ReplayBuffer:
    """Append-only experience log plus a deduplicated set of episode starts."""

    def __init__(self):
        self.data: list[TransitionRecord] = []
        self.starts: list[EpisodeStart] = []
        self._start_keys: set[tuple[bytes, str]] = set()

    def record(self, rec: TransitionRecord) -> None:
        self.data.append(rec)

    def record_start(self, start: EpisodeStart) -> None:
        key = (start.s0.canonical_key, start.c.text)
        if key not in self._start_keys:
            self._start_keys.add(key)
            self.starts.append(start)

    def sample_for_prompt(self, k: int = 7, seed: int = 0) -> list[TransitionRecord]:
        """Uniform sample without replacement; returns all records when |data| < k."""
        if k < 1:
            raise ContractViolation("k must be >= 1")
        if not self.data:
            return []
        rng = random.Random(seed)
        n = min(k, len(self.data))
        return [self.data[i] for i in sorted(rng.sample(range(len(self.data)), n))]

    def __len__(self) -> int:
        return len(self.data)
