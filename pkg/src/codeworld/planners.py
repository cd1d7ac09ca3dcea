"""Acting on a learned model: value iteration and heuristic tree search.

Dense-reward grids use depth-limited value iteration over the model's
deterministic transition graph. Sparse-reward long-horizon tasks use UCT
without rollouts: each new leaf is scored by textual similarity between the
trajectory so far and the mission, using BM25 with corpus statistics that
accumulate online over the trajectories scored during the search. Finding a
positive-reward episode end anywhere in the tree ends the search immediately.
"""

from __future__ import annotations

import logging
import math
import random
import re
from dataclasses import dataclass, field
from typing import Callable, Optional

from codeworld.core import Action, ContractViolation, Context, State
from codeworld.runtime.program import WorldModelProgram

log = logging.getLogger(__name__)

ActionProvider = Callable[[State], list[Action]]


@dataclass
class PlanConfig:
    gamma: float = 0.99
    depth: int = 20
    mcts_budget: int = 2000
    mcts_c: float = 1.0
    heuristic: str = "bm25"  # "none" or "bm25"

    def __post_init__(self):
        if not (0.0 < self.gamma <= 1.0):
            raise ContractViolation("gamma must be in (0, 1]")
        if self.depth < 1 or self.mcts_budget < 1 or self.mcts_c < 0:
            raise ContractViolation("depth/budget must be >= 1 and c >= 0")
        if self.heuristic not in ("none", "bm25"):
            raise ContractViolation("heuristic must be 'none' or 'bm25'")


# ---------------------------------------------------------------------------
# Trajectory narration and tokenization
# ---------------------------------------------------------------------------

_TOKEN_SPLIT = re.compile(r"[^0-9a-z]+|(?<=[a-z])(?=[0-9])|(?<=[0-9])(?=[a-z])")


def tokenize(text: str) -> list[str]:
    """Lowercase, split on non-alphanumerics and letter-digit boundaries.

    Splitting instance suffixes off ("alarmclock1" -> "alarmclock", "1") is
    what lets trajectory text match mission words at all.
    """
    return [t for t in _TOKEN_SPLIT.split(text.lower()) if t]


def _position(e) -> str:
    if "loc" in e.extras:
        return str(e.get("loc"))
    return f"({e.x}, {e.y})"


_FLUENT_WORDS = {"ishot": ("hot", None), "iscool": ("cool", None),
                 "isclean": ("clean", None), "isopen": ("open", "closed")}


def narrate_delta(state: State, next_state: State) -> str:
    """One or more field-level diff sentences, or "Nothing happened"."""
    sentences: list[str] = []
    names = sorted({e.name for e in state} | {e.name for e in next_state})
    for name in names:
        before = state.by_name(name)
        after = next_state.by_name(name)
        if before == after:
            continue
        if len(before) == 1 and len(after) == 1:
            sentences.extend(_narrate_entity(before[0], after[0]))
        else:
            gone = sorted(_position(e) for e in before
                          if e not in after)
            new = sorted(_position(e) for e in after
                         if e not in before)
            for old_pos, new_pos in zip(gone, new):
                sentences.append(f"The {name} at {old_pos} is now at {new_pos}.")
    if not sentences:
        return "Nothing happened"
    return " ".join(sentences)


def _narrate_entity(before, after) -> list[str]:
    out: list[str] = []
    name = before.name
    if _position(before) != _position(after):
        out.append(f"The {name} at {_position(before)} is now at {_position(after)}.")
    keys = set(before.extras) | set(after.extras)
    for key in sorted(keys - {"loc"}):
        old, new = before.get(key), after.get(key)
        if old == new:
            continue
        if key in ("carrying", "holding"):
            if new is None:
                out.append(f"The {name} is no longer holding anything.")
            else:
                held = new.name if hasattr(new, "name") else new
                out.append(f"The {name} is now holding {held}.")
        elif key in _FLUENT_WORDS:
            on_word, off_word = _FLUENT_WORDS[key]
            word = on_word if new else off_word
            if word:
                out.append(f"The {name} at {_position(after)} is now {word}.")
        else:
            shown = f"({new[0]}, {new[1]})" if isinstance(new, tuple) else str(new)
            out.append(f"The {name} at {_position(after)} is now {key}={shown}.")
    if not out:
        out.append(f"The {name} changed.")
    return out


def step_tokens(action: Action, state: State, next_state: State) -> list[str]:
    return tokenize(action.render()) + tokenize(narrate_delta(state, next_state))


# ---------------------------------------------------------------------------
# Online BM25
# ---------------------------------------------------------------------------

@dataclass
class Bm25Corpus:
    """Trajectory statistics accumulated over one search."""

    k1: float = 1.5
    b: float = 0.75
    N: int = 0
    Nt: dict[str, int] = field(default_factory=dict)
    l_D: float = 0.0


def bm25_score(trajectory_tokens: list[str], mission_tokens: list[str],
               corpus: Bm25Corpus) -> float:
    """Score a trajectory against the mission, updating corpus stats first.

    The corpus sees the trajectory before scoring: token document counts,
    the running mean trajectory length, and the trajectory count all move,
    so scoring the same trajectory twice gives two different values.
    """
    if not mission_tokens:
        raise ContractViolation("mission tokens must be nonempty")
    for t in set(trajectory_tokens):
        corpus.Nt[t] = corpus.Nt.get(t, 0) + 1
    corpus.l_D = (corpus.l_D * corpus.N + len(trajectory_tokens)) / (corpus.N + 1)
    corpus.N += 1
    score = 0.0
    m_len = len(mission_tokens)
    for t in set(mission_tokens):
        n_tau = trajectory_tokens.count(t)
        if n_tau == 0:
            continue
        n_m = mission_tokens.count(t)
        nt = corpus.Nt.get(t, 0)
        idf = math.log((corpus.N - nt + 0.5) / (nt + 0.5) + 1)
        tf = (n_tau * (corpus.k1 + 1)) / \
             (n_tau + corpus.k1 * (1 - corpus.b + corpus.b * len(trajectory_tokens) / corpus.l_D))
        score += (n_m / m_len) * idf * tf
    return score


def bm25_breakdown(trajectory_tokens: list[str], mission_tokens: list[str],
                   corpus: Bm25Corpus) -> list[dict]:
    """Per-mission-token contributions for the same update-then-score pass."""
    rows = []
    for t in set(trajectory_tokens):
        corpus.Nt[t] = corpus.Nt.get(t, 0) + 1
    corpus.l_D = (corpus.l_D * corpus.N + len(trajectory_tokens)) / (corpus.N + 1)
    corpus.N += 1
    m_len = len(mission_tokens)
    for t in sorted(set(mission_tokens)):
        n_tau = trajectory_tokens.count(t)
        n_m = mission_tokens.count(t)
        nt = corpus.Nt.get(t, 0)
        idf = math.log((corpus.N - nt + 0.5) / (nt + 0.5) + 1)
        if n_tau:
            tf = (n_tau * (corpus.k1 + 1)) / \
                 (n_tau + corpus.k1 * (1 - corpus.b + corpus.b * len(trajectory_tokens) / corpus.l_D))
        else:
            tf = 0.0
        rows.append({"token": t, "n_tau": n_tau, "n_m": n_m, "idf": idf,
                     "tf": tf, "contribution": (n_m / m_len) * idf * tf})
    return rows


# ---------------------------------------------------------------------------
# Depth-limited value iteration
# ---------------------------------------------------------------------------

def value_iteration_plan(s: State, model: WorldModelProgram, c: Context,
                         actions: ActionProvider, cfg: PlanConfig) -> Action:
    """Best first action by backward induction over the model's graph.

    The graph is expanded breadth-first from the root up to ``cfg.depth``,
    deduplicating states by canonical key; episode-ending edges are
    absorbing. Ties break toward the lexicographically smallest action.
    """
    root_key = s.canonical_key
    edges: dict[bytes, list[tuple[Action, bytes, float, bool]]] = {}
    states = {root_key: s}
    frontier = [root_key]
    for _ in range(cfg.depth):
        next_frontier = []
        for key in frontier:
            if key in edges:
                continue
            state = states[key]
            outgoing = []
            for a in sorted(actions(state), key=lambda a: a.render()):
                t = model.eval_transition(state, a)
                if not t.ok:
                    log.warning("pruning faulting edge %s: %s", a.render(),
                                t.fault.message)
                    continue
                w = model.eval_reward(c, state, a, t.state)
                if not w.ok:
                    log.warning("pruning edge with reward fault %s: %s",
                                a.render(), w.fault.message)
                    continue
                nk = t.state.canonical_key
                outgoing.append((a, nk, w.reward, w.done))
                if not w.done and nk not in states:
                    states[nk] = t.state
                    next_frontier.append(nk)
            edges[key] = outgoing
        frontier = next_frontier
    root_edges = edges.get(root_key, [])
    if not root_edges:
        log.warning("no usable edges from the root; defaulting to first action")
        return sorted(actions(s), key=lambda a: a.render())[0]
    if all(done for _, _, _, done in root_edges):
        log.warning("every root action ends the episode; state looks terminal")
        return sorted(actions(s), key=lambda a: a.render())[0]

    values: dict[bytes, float] = {key: 0.0 for key in states}
    for _ in range(cfg.depth - 1):
        new_values = {}
        for key in states:
            outgoing = edges.get(key, [])
            if not outgoing:
                new_values[key] = 0.0
                continue
            new_values[key] = max(
                r + cfg.gamma * (0.0 if done else values.get(nk, 0.0))
                for _, nk, r, done in outgoing)
        values = new_values

    best_action, best_value = None, -math.inf
    for a, nk, r, done in root_edges:
        q = r + cfg.gamma * (0.0 if done else values.get(nk, 0.0))
        if q > best_value + 1e-12:
            best_action, best_value = a, q
    return best_action


# ---------------------------------------------------------------------------
# UCT search without rollouts
# ---------------------------------------------------------------------------

@dataclass
class SearchNode:
    state: State
    incoming_action: Optional[Action] = None
    parent: Optional["SearchNode"] = None
    Q: float = 0.0
    N: int = 0
    children: dict[str, "SearchNode"] = field(default_factory=dict)
    untried: list[Action] = field(default_factory=list)
    terminal: bool = False
    tokens: list[str] = field(default_factory=list)

    @property
    def fully_expanded(self) -> bool:
        return not self.untried


def uct_score(q: float, n: int, parent_n: int, c: float) -> float:
    """The tree-policy criterion: Q/N plus c * sqrt(2 ln N_parent / N)."""
    exploit = q / n
    if c == 0.0:
        return exploit
    return exploit + c * math.sqrt(2.0 * math.log(parent_n) / n)


def best_child(v: SearchNode, c: float) -> SearchNode:
    if not v.children:
        raise ContractViolation("best_child on a node with no children")
    items = sorted(v.children.items())  # ties toward smallest action text
    best, best_score = None, -math.inf
    for _, child in items:
        score = uct_score(child.Q, child.N, v.N, c)
        if score > best_score + 1e-15:
            best, best_score = child, score
    return best


def _backup(node: SearchNode, delta: float):
    while node is not None:
        node.N += 1
        node.Q += delta
        node = node.parent


def _first_action(node: SearchNode) -> Action:
    while node.parent is not None and node.parent.parent is not None:
        node = node.parent
    return node.incoming_action


def uct_search(s0: State, model: WorldModelProgram, mission: Context,
               corpus: Bm25Corpus, actions: ActionProvider, cfg: PlanConfig,
               seed: int = 0) -> Action:
    """Rollout-free UCT: expand, score the leaf trajectory, back up.

    The moment any expansion shows a positive-reward episode end under the
    model, the first action of that trajectory is returned. Otherwise, after
    the expansion budget, the root child with the best mean value wins.
    """
    rng = random.Random(seed)
    mission_tokens = tokenize(mission.text)
    root = SearchNode(state=s0, untried=list(actions(s0)))
    for _ in range(cfg.mcts_budget):
        node = root
        # Tree policy: descend until a node with untried actions (expand it)
        # or a terminal leaf (rescore it).
        while node.fully_expanded and node.children and not node.terminal:
            node = best_child(node, cfg.mcts_c)
        leaf = None
        if not node.terminal:
            leaf = _expand(node, model, mission, rng, actions)
            if isinstance(leaf, Action):
                return leaf  # positive-reward episode end discovered
        target = leaf if leaf is not None else node
        if cfg.heuristic == "bm25":
            delta = bm25_score(target.tokens, mission_tokens, corpus)
        else:
            delta = 0.0
        _backup(target, delta)
    if not root.children:
        log.warning("search produced no children; defaulting to first action")
        return sorted(actions(s0), key=lambda a: a.render())[0]
    return best_child(root, 0.0).incoming_action


def _expand(node: SearchNode, model: WorldModelProgram, mission: Context,
            rng: random.Random, actions: ActionProvider):
    """Try untried actions (seeded random order) until one yields a child.

    Returns the new child node, the winning first action when the new edge
    ends an episode with positive reward, or None when every untried action
    faults.
    """
    while node.untried:
        a = node.untried.pop(rng.randrange(len(node.untried)))
        t = model.eval_transition(node.state, a)
        if not t.ok:
            continue
        w = model.eval_reward(mission, node.state, a, t.state)
        if not w.ok:
            continue
        child = SearchNode(
            state=t.state, incoming_action=a, parent=node,
            untried=[] if w.done else list(actions(t.state)),
            terminal=w.done,
            tokens=node.tokens + step_tokens(a, node.state, t.state))
        node.children[a.render()] = child
        if w.done and w.reward > 0:
            return _first_action(child)
        return child
    if not node.children:
        node.terminal = True  # dead end: every action faulted
    return None
