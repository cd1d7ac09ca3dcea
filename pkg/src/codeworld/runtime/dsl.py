"""A small rule language for world models, with a total deterministic interpreter.

A program is a list of ordered rules. Transition rules have the shape

    ON "move forward" WHEN FIELD SELF.direction = (1, 0), ABSENT Wall AT REL 1 0
        THEN MOVE SELF BY (1, 0)

and reward rules the shape

    GOAL "pick up the green box" WHEN CARRYING Box(color=green)
        THEN REWARD 1.0 DONE true

For a given action the first transition rule whose conditions all hold fires
and applies every effect; if none fires the state is unchanged. Reward rules
are matched against the next state; no match yields (0.0, false). Conditions
are evaluated relative to a single anchor entity (the actor, declared with
``ACTOR Name``, default ``Agent``); a rule can never fire in a state without
exactly one actor.
"""

from __future__ import annotations

import re
from dataclasses import dataclass, field
from typing import Optional, Union

from codeworld.core import Action, Entity, State

MAX_INTERPRETER_STEPS = 100_000

Literal = Union[str, int, float, bool, tuple, None]


class DslParseError(Exception):
    def __init__(self, message: str, line: int, col: int):
        super().__init__(f"{message} (line {line}, column {col})")
        self.line = line
        self.col = col


class DslBudgetExceeded(Exception):
    pass


# ---------------------------------------------------------------------------
# AST
# ---------------------------------------------------------------------------

@dataclass(frozen=True)
class EntityPattern:
    """Entity kind plus field-equality constraints; name "ANY" matches all kinds."""

    name: str
    constraints: tuple[tuple[str, Literal], ...] = ()

    def matches(self, e: Entity) -> bool:
        if self.name != "ANY" and e.name != self.name:
            return False
        return all(e.get(k) == v for k, v in self.constraints)


@dataclass(frozen=True)
class SelfPlace:
    pass


@dataclass(frozen=True)
class RelPlace:
    dx: int
    dy: int


@dataclass(frozen=True)
class FacingPlace:
    """The actor's cell displaced by its ``direction`` field."""


Place = Union[SelfPlace, RelPlace, FacingPlace]


@dataclass(frozen=True)
class ExistsCond:
    pattern: EntityPattern
    place: Place
    bind: Optional[str] = None


@dataclass(frozen=True)
class AbsentCond:
    pattern: EntityPattern
    place: Place


@dataclass(frozen=True)
class FieldCond:
    ref: str  # "SELF" or a bound name
    field_name: str
    op: str  # "=" or "!="
    literal: Literal


@dataclass(frozen=True)
class CarryingCond:
    # kind: "pattern" (carrying matches pattern), "nothing", or "any"
    kind: str
    pattern: Optional[EntityPattern] = None

    def __post_init__(self):
        # An unconstrained ANY pattern is the same test as "any"; keep one form.
        if self.kind == "pattern" and self.pattern == EntityPattern("ANY"):
            object.__setattr__(self, "kind", "any")
            object.__setattr__(self, "pattern", None)


Cond = Union[ExistsCond, AbsentCond, FieldCond, CarryingCond]


@dataclass(frozen=True)
class MoveEffect:
    ref: str
    dx: int
    dy: int


@dataclass(frozen=True)
class SetEffect:
    ref: str
    field_name: str
    literal: Literal


@dataclass(frozen=True)
class RemoveEffect:
    ref: str


@dataclass(frozen=True)
class AddEffect:
    pattern: EntityPattern
    place: Place


@dataclass(frozen=True)
class CarryEffect:
    ref: str


@dataclass(frozen=True)
class UncarryEffect:
    place: Place


@dataclass(frozen=True)
class NoopEffect:
    pass


Effect = Union[MoveEffect, SetEffect, RemoveEffect, AddEffect, CarryEffect,
               UncarryEffect, NoopEffect]


@dataclass(frozen=True)
class TransitionRule:
    action: str
    conds: tuple[Cond, ...]
    effects: tuple[Effect, ...]


@dataclass(frozen=True)
class RewardRule:
    context: str
    conds: tuple[Cond, ...]
    reward: float
    done: bool


@dataclass(frozen=True)
class RuleProgram:
    actor: str = "Agent"
    rules: tuple[TransitionRule, ...] = ()
    reward_rules: tuple[RewardRule, ...] = ()

    def rules_for(self, action_name: str) -> tuple[TransitionRule, ...]:
        # Lazy per-action index; lives outside the compared dataclass fields.
        index = self.__dict__.get("_by_action")
        if index is None:
            index = {}
            for rule in self.rules:
                index.setdefault(rule.action, []).append(rule)
            index = {k: tuple(v) for k, v in index.items()}
            object.__setattr__(self, "_by_action", index)
        return index.get(action_name, ())


# ---------------------------------------------------------------------------
# Lexer
# ---------------------------------------------------------------------------

_TOKEN_RE = re.compile(r"""
    (?P<ws>[ \t]+)
  | (?P<comment>\#[^\n]*)
  | (?P<newline>\n)
  | (?P<string>"(?:[^"\\]|\\.)*")
  | (?P<number>-?\d+\.\d+|-?\d+)
  | (?P<ident>[A-Za-z_][A-Za-z0-9_]*)
  | (?P<op>!=|=|[(),.;])
""", re.VERBOSE)

_KEYWORDS = {
    "ACTOR", "ON", "WHEN", "THEN", "GOAL", "EXISTS", "ABSENT", "AT", "AS",
    "SELF", "REL", "FACING", "FIELD", "CARRYING", "NOTHING", "ANY", "MOVE",
    "BY", "SET", "REMOVE", "ADD", "CARRY", "UNCARRY", "NOOP", "REWARD", "DONE",
}


@dataclass
class _Token:
    kind: str  # keyword | ident | string | number | op | newline | eof
    value: str
    line: int
    col: int


def _lex(text: str) -> list[_Token]:
    tokens: list[_Token] = []
    line, col, pos = 1, 1, 0
    while pos < len(text):
        m = _TOKEN_RE.match(text, pos)
        if not m:
            raise DslParseError(f"unexpected character {text[pos]!r}", line, col)
        kind = m.lastgroup
        value = m.group()
        if kind == "newline":
            tokens.append(_Token("newline", value, line, col))
            line += 1
            col = 1
        elif kind in ("ws", "comment"):
            col += len(value)
        else:
            if kind == "ident" and value in _KEYWORDS:
                kind = "keyword"
            tokens.append(_Token(kind, value, line, col))
            col += len(value)
        pos = m.end()
    tokens.append(_Token("eof", "", line, col))
    return tokens


# ---------------------------------------------------------------------------
# Parser
# ---------------------------------------------------------------------------

class _Parser:
    def __init__(self, text: str):
        self.tokens = _lex(text)
        self.pos = 0

    def peek(self) -> _Token:
        return self.tokens[self.pos]

    def next(self) -> _Token:
        tok = self.tokens[self.pos]
        self.pos += 1
        return tok

    def fail(self, message: str):
        tok = self.peek()
        shown = tok.value or "<end of input>"
        raise DslParseError(f"{message}, got {shown!r}", tok.line, tok.col)

    def expect(self, kind: str, value: Optional[str] = None) -> _Token:
        tok = self.peek()
        if tok.kind != kind or (value is not None and tok.value != value):
            self.fail(f"expected {value or kind}")
        return self.next()

    def skip_separators(self):
        while self.peek().kind == "newline" or \
                (self.peek().kind == "op" and self.peek().value == ";"):
            self.next()

    def at_keyword(self, word: str) -> bool:
        tok = self.peek()
        return tok.kind == "keyword" and tok.value == word

    def parse_program(self) -> RuleProgram:
        actor = "Agent"
        rules: list[TransitionRule] = []
        reward_rules: list[RewardRule] = []
        self.skip_separators()
        if self.at_keyword("ACTOR"):
            self.next()
            actor = self.expect("ident").value
            self.skip_separators()
        while self.peek().kind != "eof":
            if self.at_keyword("ON"):
                rules.append(self.parse_transition_rule())
            elif self.at_keyword("GOAL"):
                reward_rules.append(self.parse_reward_rule())
            else:
                self.fail("expected ON or GOAL")
            self.skip_separators()
        return RuleProgram(actor, tuple(rules), tuple(reward_rules))

    def parse_transition_rule(self) -> TransitionRule:
        self.expect("keyword", "ON")
        action = self.parse_string()
        conds = self.parse_when_clause()
        self.expect("keyword", "THEN")
        effects = [self.parse_effect()]
        while self.peek().kind == "op" and self.peek().value == ",":
            self.next()
            effects.append(self.parse_effect())
        return TransitionRule(action, tuple(conds), tuple(effects))

    def parse_reward_rule(self) -> RewardRule:
        self.expect("keyword", "GOAL")
        context = self.parse_string()
        conds = self.parse_when_clause()
        self.expect("keyword", "THEN")
        self.expect("keyword", "REWARD")
        reward = self.parse_number()
        self.expect("keyword", "DONE")
        done = self.parse_bool()
        return RewardRule(context, tuple(conds), reward, done)

    def parse_when_clause(self) -> list[Cond]:
        conds: list[Cond] = []
        if self.at_keyword("WHEN"):
            self.next()
            conds.append(self.parse_cond())
            while self.peek().kind == "op" and self.peek().value == ",":
                self.next()
                conds.append(self.parse_cond())
        return conds

    def parse_cond(self) -> Cond:
        if self.at_keyword("EXISTS"):
            self.next()
            pattern = self.parse_pattern()
            self.expect("keyword", "AT")
            place = self.parse_place()
            bind = None
            if self.at_keyword("AS"):
                self.next()
                bind = self.expect("ident").value
            return ExistsCond(pattern, place, bind)
        if self.at_keyword("ABSENT"):
            self.next()
            pattern = self.parse_pattern()
            self.expect("keyword", "AT")
            return AbsentCond(pattern, self.parse_place())
        if self.at_keyword("FIELD"):
            self.next()
            ref = self.parse_ref()
            self.expect("op", ".")
            field_name = self.expect("ident").value
            op = self.expect("op").value
            if op not in ("=", "!="):
                self.fail("expected = or != after field")
            return FieldCond(ref, field_name, op, self.parse_literal())
        if self.at_keyword("CARRYING"):
            self.next()
            if self.at_keyword("NOTHING"):
                self.next()
                return CarryingCond("nothing")
            if self.at_keyword("ANY") and not self._any_starts_pattern():
                self.next()
                return CarryingCond("any")
            return CarryingCond("pattern", self.parse_pattern())
        self.fail("expected a condition")

    def _any_starts_pattern(self) -> bool:
        nxt = self.tokens[self.pos + 1]
        return nxt.kind == "op" and nxt.value == "("

    def parse_effect(self) -> Effect:
        if self.at_keyword("MOVE"):
            self.next()
            ref = self.parse_ref()
            self.expect("keyword", "BY")
            self.expect("op", "(")
            dx = self.parse_int()
            self.expect("op", ",")
            dy = self.parse_int()
            self.expect("op", ")")
            return MoveEffect(ref, dx, dy)
        if self.at_keyword("SET"):
            self.next()
            ref = self.parse_ref()
            self.expect("op", ".")
            field_name = self.expect("ident").value
            self.expect("op", "=")
            return SetEffect(ref, field_name, self.parse_literal())
        if self.at_keyword("REMOVE"):
            self.next()
            return RemoveEffect(self.parse_ref())
        if self.at_keyword("ADD"):
            self.next()
            pattern = self.parse_pattern()
            self.expect("keyword", "AT")
            return AddEffect(pattern, self.parse_place())
        if self.at_keyword("CARRY"):
            self.next()
            return CarryEffect(self.expect("ident").value)
        if self.at_keyword("UNCARRY"):
            self.next()
            self.expect("keyword", "AT")
            return UncarryEffect(self.parse_place())
        if self.at_keyword("NOOP"):
            self.next()
            return NoopEffect()
        self.fail("expected an effect")

    def parse_pattern(self) -> EntityPattern:
        tok = self.peek()
        if tok.kind == "keyword" and tok.value == "ANY":
            self.next()
            name = "ANY"
        else:
            name = self.expect("ident").value
        constraints: list[tuple[str, Literal]] = []
        if self.peek().kind == "op" and self.peek().value == "(":
            self.next()
            while True:
                key = self.expect("ident").value
                self.expect("op", "=")
                constraints.append((key, self.parse_literal()))
                tok = self.next()
                if tok.kind == "op" and tok.value == ")":
                    break
                if not (tok.kind == "op" and tok.value == ","):
                    self.fail("expected , or ) in pattern")
        return EntityPattern(name, tuple(constraints))

    def parse_place(self) -> Place:
        if self.at_keyword("SELF"):
            self.next()
            return SelfPlace()
        if self.at_keyword("FACING"):
            self.next()
            return FacingPlace()
        if self.at_keyword("REL"):
            self.next()
            dx = self.parse_int()
            dy = self.parse_int()
            return RelPlace(dx, dy)
        self.fail("expected SELF, FACING, or REL dx dy")

    def parse_ref(self) -> str:
        if self.at_keyword("SELF"):
            self.next()
            return "SELF"
        return self.expect("ident").value

    def parse_string(self) -> str:
        tok = self.expect("string")
        return tok.value[1:-1].replace('\\"', '"').replace("\\\\", "\\")

    def parse_int(self) -> int:
        tok = self.expect("number")
        if "." in tok.value:
            self.fail("expected an integer")
        return int(tok.value)

    def parse_number(self) -> float:
        return float(self.expect("number").value)

    def parse_bool(self) -> bool:
        tok = self.expect("ident")
        if tok.value not in ("true", "false"):
            self.fail("expected true or false")
        return tok.value == "true"

    def parse_literal(self) -> Literal:
        tok = self.peek()
        if tok.kind == "string":
            return self.parse_string()
        if tok.kind == "number":
            self.next()
            return int(tok.value) if "." not in tok.value else float(tok.value)
        if tok.kind == "op" and tok.value == "(":
            self.next()
            dx = self.parse_int()
            self.expect("op", ",")
            dy = self.parse_int()
            self.expect("op", ")")
            return (dx, dy)
        if tok.kind == "ident":
            self.next()
            if tok.value == "true":
                return True
            if tok.value == "false":
                return False
            if tok.value == "none":
                return None
            return tok.value
        self.fail("expected a literal")


def parse_program(text: str) -> RuleProgram:
    return _Parser(text).parse_program()


# ---------------------------------------------------------------------------
# Pretty-printer (parse(pretty(p)) == p)
# ---------------------------------------------------------------------------

_BARE_RE = re.compile(r"[A-Za-z_][A-Za-z0-9_]*$")


def _fmt_literal(v: Literal) -> str:
    if isinstance(v, bool):
        return "true" if v else "false"
    if v is None:
        return "none"
    if isinstance(v, tuple):
        return f"({v[0]}, {v[1]})"
    if isinstance(v, (int, float)):
        return repr(v)
    if _BARE_RE.fullmatch(v) and v not in ("true", "false", "none"):
        return v
    return '"' + v.replace("\\", "\\\\").replace('"', '\\"') + '"'


def _fmt_pattern(p: EntityPattern) -> str:
    if not p.constraints:
        return p.name
    inner = ", ".join(f"{k}={_fmt_literal(v)}" for k, v in p.constraints)
    return f"{p.name}({inner})"


def _fmt_place(place: Place) -> str:
    if isinstance(place, SelfPlace):
        return "SELF"
    if isinstance(place, FacingPlace):
        return "FACING"
    return f"REL {place.dx} {place.dy}"


def _fmt_cond(c: Cond) -> str:
    if isinstance(c, ExistsCond):
        out = f"EXISTS {_fmt_pattern(c.pattern)} AT {_fmt_place(c.place)}"
        return out + (f" AS {c.bind}" if c.bind else "")
    if isinstance(c, AbsentCond):
        return f"ABSENT {_fmt_pattern(c.pattern)} AT {_fmt_place(c.place)}"
    if isinstance(c, FieldCond):
        return f"FIELD {c.ref}.{c.field_name} {c.op} {_fmt_literal(c.literal)}"
    if c.kind == "nothing":
        return "CARRYING NOTHING"
    if c.kind == "any":
        return "CARRYING ANY"
    return f"CARRYING {_fmt_pattern(c.pattern)}"


def _fmt_effect(e: Effect) -> str:
    if isinstance(e, MoveEffect):
        return f"MOVE {e.ref} BY ({e.dx}, {e.dy})"
    if isinstance(e, SetEffect):
        return f"SET {e.ref}.{e.field_name} = {_fmt_literal(e.literal)}"
    if isinstance(e, RemoveEffect):
        return f"REMOVE {e.ref}"
    if isinstance(e, AddEffect):
        return f"ADD {_fmt_pattern(e.pattern)} AT {_fmt_place(e.place)}"
    if isinstance(e, CarryEffect):
        return f"CARRY {e.ref}"
    if isinstance(e, UncarryEffect):
        return f"UNCARRY AT {_fmt_place(e.place)}"
    return "NOOP"


def _fmt_string(s: str) -> str:
    return '"' + s.replace("\\", "\\\\").replace('"', '\\"') + '"'


def pretty_print(program: RuleProgram) -> str:
    lines = [f"ACTOR {program.actor}"]
    for r in program.rules:
        when = ""
        if r.conds:
            when = " WHEN " + ", ".join(_fmt_cond(c) for c in r.conds)
        effects = ", ".join(_fmt_effect(e) for e in r.effects)
        lines.append(f"ON {_fmt_string(r.action)}{when} THEN {effects}")
    for r in program.reward_rules:
        when = ""
        if r.conds:
            when = " WHEN " + ", ".join(_fmt_cond(c) for c in r.conds)
        done = "true" if r.done else "false"
        lines.append(f"GOAL {_fmt_string(r.context)}{when} "
                     f"THEN REWARD {r.reward!r} DONE {done}")
    return "\n".join(lines) + "\n"


# ---------------------------------------------------------------------------
# Interpreter
# ---------------------------------------------------------------------------

class _Budget:
    __slots__ = ("left",)

    def __init__(self, steps: int = MAX_INTERPRETER_STEPS):
        self.left = steps

    def spend(self, n: int = 1):
        self.left -= n
        if self.left < 0:
            raise DslBudgetExceeded("interpreter step budget exceeded")


class _Scope:
    """Mutable working copy of a state during effect application.

    A prebuilt (x, y) -> indices map may be shared across the condition
    phase of several rule attempts over the same state; effects never use it.
    """

    def __init__(self, state: State, actor_name: str,
                 cell_index: Optional[dict] = None,
                 actor_index: Optional[int] = None):
        self.entities: list[Entity] = list(state.entities)
        if actor_index is None:
            actors = [i for i, e in enumerate(self.entities)
                      if e.name == actor_name]
            actor_index = actors[0] if len(actors) == 1 else None
        self.actor_index = actor_index
        self.bindings: dict[str, int] = {}
        self._cell_index = cell_index

    @property
    def actor(self) -> Optional[Entity]:
        if self.actor_index is None:
            return None
        return self.entities[self.actor_index]

    def resolve_cell(self, place: Place) -> Optional[tuple[int, int]]:
        actor = self.actor
        if actor is None or actor.x is None or actor.y is None:
            return None
        if isinstance(place, SelfPlace):
            return (actor.x, actor.y)
        if isinstance(place, RelPlace):
            return (actor.x + place.dx, actor.y + place.dy)
        d = actor.get("direction")
        if not isinstance(d, tuple):
            return None
        return (actor.x + d[0], actor.y + d[1])

    def resolve_ref(self, ref: str) -> Optional[int]:
        if ref == "SELF":
            return self.actor_index
        return self.bindings.get(ref)

    def entities_at(self, cell: tuple[int, int]) -> list[int]:
        if self._cell_index is not None:
            return self._cell_index.get(cell, [])
        return [i for i, e in enumerate(self.entities)
                if e.x == cell[0] and e.y == cell[1]]


def _build_cell_index(state: State) -> tuple[dict, dict[str, list[int]]]:
    cells: dict[tuple[int, int], list[int]] = {}
    by_name: dict[str, list[int]] = {}
    for i, e in enumerate(state.entities):
        if e.x is not None and e.y is not None:
            cells.setdefault((e.x, e.y), []).append(i)
        by_name.setdefault(e.name, []).append(i)
    return cells, by_name


def _check_cond(scope: _Scope, cond: Cond, budget: _Budget) -> bool:
    budget.spend()
    if isinstance(cond, (ExistsCond, AbsentCond)):
        cell = scope.resolve_cell(cond.place)
        if cell is None:
            return isinstance(cond, AbsentCond)
        candidates = scope.entities_at(cell)
        matches = [i for i in candidates
                   if cond.pattern.matches(scope.entities[i])]
        budget.spend(len(candidates) + 1)
        if isinstance(cond, AbsentCond):
            return not matches
        if not matches:
            return False
        if cond.bind:
            scope.bindings[cond.bind] = matches[0]
        return True
    if isinstance(cond, FieldCond):
        idx = scope.resolve_ref(cond.ref)
        if idx is None:
            return False
        value = scope.entities[idx].get(cond.field_name)
        return (value == cond.literal) if cond.op == "=" else (value != cond.literal)
    # CarryingCond
    actor = scope.actor
    if actor is None:
        return False
    carried = actor.get("carrying")
    if cond.kind == "nothing":
        return carried is None
    if cond.kind == "any":
        return isinstance(carried, Entity)
    return isinstance(carried, Entity) and cond.pattern.matches(carried)


def _apply_effect(scope: _Scope, effect: Effect, budget: _Budget):
    budget.spend()
    if isinstance(effect, NoopEffect):
        return
    if isinstance(effect, MoveEffect):
        idx = scope.resolve_ref(effect.ref)
        if idx is None:
            return
        e = scope.entities[idx]
        if e.x is None or e.y is None:
            return
        scope.entities[idx] = e.replace(x=e.x + effect.dx, y=e.y + effect.dy)
        return
    if isinstance(effect, SetEffect):
        idx = scope.resolve_ref(effect.ref)
        if idx is None:
            return
        scope.entities[idx] = scope.entities[idx].replace(
            **{effect.field_name: effect.literal})
        return
    if isinstance(effect, RemoveEffect):
        idx = scope.resolve_ref(effect.ref)
        if idx is None:
            return
        scope.entities.pop(idx)
        _shift_indexes(scope, idx)
        return
    if isinstance(effect, AddEffect):
        cell = scope.resolve_cell(effect.place)
        if cell is None:
            return
        extras = dict(effect.pattern.constraints)
        scope.entities.append(Entity(effect.pattern.name, cell[0], cell[1], **extras))
        return
    if isinstance(effect, CarryEffect):
        idx = scope.resolve_ref(effect.ref)
        actor = scope.actor
        if idx is None or actor is None or idx == scope.actor_index:
            return
        item = scope.entities[idx].replace(x=None, y=None)
        scope.entities[scope.actor_index] = actor.replace(carrying=item)
        scope.entities.pop(idx)
        _shift_indexes(scope, idx)
        return
    if isinstance(effect, UncarryEffect):
        actor = scope.actor
        if actor is None:
            return
        carried = actor.get("carrying")
        cell = scope.resolve_cell(effect.place)
        if not isinstance(carried, Entity) or cell is None:
            return
        scope.entities[scope.actor_index] = actor.replace(carrying=None)
        scope.entities.append(carried.replace(x=cell[0], y=cell[1]))
        return


def _shift_indexes(scope: _Scope, removed: int):
    if scope.actor_index is not None and scope.actor_index > removed:
        scope.actor_index -= 1
    for k, v in list(scope.bindings.items()):
        if v == removed:
            del scope.bindings[k]
        elif v > removed:
            scope.bindings[k] = v - 1


def eval_transition_rules(program: RuleProgram, state: State, action: Action,
                          budget_steps: int = MAX_INTERPRETER_STEPS) -> State:
    """Apply the first matching rule for the action; identity when none match."""
    rules = program.rules_for(action.name)
    if not rules:
        return state
    budget = _Budget(budget_steps)
    cells, by_name = _build_cell_index(state)
    actors = by_name.get(program.actor, [])
    actor_index = actors[0] if len(actors) == 1 else None
    for rule in rules:
        budget.spend()
        scope = _Scope(state, program.actor, cell_index=cells,
                       actor_index=actor_index)
        if all(_check_cond(scope, c, budget) for c in rule.conds):
            scope._cell_index = None  # effects mutate; the shared index is stale
            for eff in rule.effects:
                _apply_effect(scope, eff, budget)
            return State(scope.entities)
    return state


def eval_reward_rules(program: RuleProgram, context_text: str, state: State,
                      action: Action, next_state: State,
                      budget_steps: int = MAX_INTERPRETER_STEPS) -> tuple[float, bool]:
    """First matching reward rule for the context wins; default (0.0, False).

    Conditions are evaluated against the next state (goals are judged on
    what the action produced).
    """
    budget = _Budget(budget_steps)
    cells = None
    for rule in program.reward_rules:
        budget.spend()
        if rule.context != context_text:
            continue
        if cells is None:
            cells, _ = _build_cell_index(next_state)
        scope = _Scope(next_state, program.actor, cell_index=cells)
        if all(_check_cond(scope, c, budget) for c in rule.conds):
            return (rule.reward, rule.done)
    return (0.0, False)
