"""Chat-completion synthesizer backend with record/replay cassettes.

Prompts are built from fixed templates with named slots; experience data is
rendered as grid blocks with a one-line description of what changed. Every
request/response pair can be recorded to a cassette file keyed by a prompt
fingerprint, and replay mode serves stored responses byte-exact with no
network access, so the whole loop is testable offline.
"""

from __future__ import annotations

import hashlib
import json
import os
import re
from dataclasses import dataclass
from pathlib import Path
from typing import Optional

from codeworld.core import Context, Entity, State, TransitionRecord
from codeworld.planners import Bm25Corpus, bm25_score, tokenize
from codeworld.runtime.program import ProgramSource
from codeworld.synthesis import RefinementFailure, SynthesizerBackend

TEMPLATE_IDS = ("init_transition", "init_reward", "refine_transition",
                "refine_reward", "reward_new_goal", "optimism_refine")

GOAL_CRITERION = ("def criterion(state, mission, action, next_state, reward, done,):\n"
                  "    return reward > 0 and done")

_PREAMBLE = ("You are a robot exploring in an object-centric environment. "
             "Your goal is to model the logic of the world in python.")


class RenderError(Exception):
    pass


class CassetteMiss(Exception):
    pass


@dataclass(frozen=True)
class PromptTemplate:
    id: str
    skeleton: str
    required_slots: tuple[str, ...]

    def render(self, **slots: str) -> str:
        missing = [s for s in self.required_slots if s not in slots]
        if missing:
            raise RenderError(f"{self.id}: missing slots {missing}")
        try:
            return self.skeleton.format(**slots)
        except KeyError as exc:
            raise RenderError(f"{self.id}: missing slot {exc}") from exc


TEMPLATES: dict[str, PromptTemplate] = {
    "init_transition": PromptTemplate(
        "init_transition",
        _PREAMBLE + " You will be given experiences as (state, action,"
        " next_state) tuples, each with a short sentence summarizing how the"
        " state changed. Implement a `transition` function that can be run"
        " directly on (state, action) and returns the next state, matching"
        " every experience.\n\nHere are the experiences:\n\n{experiences}\n"
        "Implement the code now. The valid actions are {valid_actions}.\n",
        ("experiences", "valid_actions")),
    "init_reward": PromptTemplate(
        "init_reward",
        _PREAMBLE + " You will be given experiences as (state, action,"
        " next_state, reward, done) tuples for the mission \"{mission}\","
        " each with a short sentence summarizing how the state changed."
        " Implement a `reward_func` function that can be run directly on"
        " (state, action, next_state) and returns (reward, done), matching"
        " every experience.\n\nHere are the experiences:\n\n{experiences}\n"
        "Implement the code now.\n",
        ("experiences", "mission")),
    "refine_transition": PromptTemplate(
        "refine_transition",
        _PREAMBLE + " You wrote a partially correct `transition` function:"
        " it models some experiences but fails on others. Improve it so that"
        " it models all of them.\n\nYour current code:\n\n```\n{code}\n```\n\n"
        "Experiences the code already models:\n\n{experiences}\n"
        "An experience the code fails to model:\n\n{counterexample}\n"
        "Fix the `transition` function so it models every experience.\n",
        ("code", "experiences", "counterexample")),
    "refine_reward": PromptTemplate(
        "refine_reward",
        _PREAMBLE + " You wrote a partially correct `reward_func` for the"
        " mission \"{mission}\": it models some experiences but fails on"
        " others. Improve it so that it models all of them.\n\n"
        "Your current code:\n\n```\n{code}\n```\n\n"
        "Experiences the code already models:\n\n{experiences}\n"
        "An experience the code fails to model:\n\n{counterexample}\n"
        "Fix the `reward_func` so it models every experience.\n",
        ("code", "experiences", "counterexample", "mission")),
    "reward_new_goal": PromptTemplate(
        "reward_new_goal",
        _PREAMBLE + " Specifically, implement the reward function mapping"
        " (state, action, next_state) to (reward, done) for the mission"
        " \"{mission}\". Below are reward functions you already wrote for"
        " other missions in this world; generalize from them.\n\n"
        "{retrieved_rewards}\n"
        "Implement the reward function for mission \"{mission}\" now.\n",
        ("mission", "retrieved_rewards")),
    "optimism_refine": PromptTemplate(
        "optimism_refine",
        _PREAMBLE + " Your current world model (transition and reward"
        " functions) cannot achieve the mission \"{mission}\" from the"
        " initial state below: no action sequence it admits ends the episode"
        " with positive reward. Keep it consistent with everything observed,"
        " but revise it so the mission becomes achievable.\n\n"
        "Your current code:\n\n```\n{code}\n```\n\n"
        "The initial state:\n\n```\n{initial_state}\n```\n\n"
        "The measurement for achieving the mission:\n\n```\n{criterion}\n```\n\n"
        "The valid actions are {valid_actions}.\n"
        "Revise the code so the mission can be achieved from the initial"
        " state.\n",
        ("mission", "code", "initial_state", "criterion", "valid_actions")),
}


# ---------------------------------------------------------------------------
# Experience rendering
# ---------------------------------------------------------------------------

def render_state(state: State) -> str:
    """Grid layout when entities have coordinates, one entity per line otherwise."""
    placed = [e for e in state if e.x is not None and e.y is not None]
    if not placed:
        return "\n".join(e.render() + " ;" for e in state)
    width = max(e.x for e in placed) + 1
    height = max(e.y for e in placed) + 1
    rows = []
    for y in range(height):
        cells = []
        for x in range(width):
            here = [e.render() for e in placed if e.x == x and e.y == y]
            cells.append(" ".join(here) if here else "empty")
        rows.append(" ;\t".join(cells) + " ;")
    return "\n".join(rows)


def prompt_delta(state: State, next_state: State) -> str:
    """One-sentence change summary in the experience-block style."""
    if state == next_state:
        return "Nothing happened"
    sentences = []
    names = sorted({e.name for e in state} | {e.name for e in next_state})
    for name in names:
        before, after = state.by_name(name), next_state.by_name(name)
        if before == after:
            continue
        if len(before) == 1 and len(after) == 1:
            b, a = before[0], after[0]
            changed = {k for k in set(b.extras) | set(a.extras)
                       if b.get(k) != a.get(k)}
            pos = f"pos ({b.x}, {b.y})"
            if (b.x, b.y) != (a.x, a.y):
                sentences.append(
                    f"The {name.lower()} at {pos} is now at pos ({a.x}, {a.y}).")
            for k in sorted(changed):
                old_v, new_v = _fmt(b.get(k)), _fmt(a.get(k))
                sentences.append(
                    f"The {name.lower()} ({k}={old_v}) at {pos} becomes a"
                    f" {name.lower()} ({k}={new_v}).")
        else:
            sentences.append(f"The set of {name.lower()} entities changed.")
    return " ".join(sentences) if sentences else "Nothing happened"


def _fmt(v) -> str:
    if isinstance(v, tuple):
        return f"({v[0]}, {v[1]})"
    if isinstance(v, Entity):
        return v.render()
    return str(v)


def render_experience(rec: TransitionRecord, with_reward: bool = False) -> str:
    block = (f'The action "{rec.a.render()}" transforms the state from\n'
             f"```\n{render_state(rec.s)}\n```\nto\n"
             f"```\n{render_state(rec.s_next)}\n```\n"
             f'The difference is\n"""\n{prompt_delta(rec.s, rec.s_next)}\n"""\n')
    if with_reward:
        done = "True" if rec.d else "False"
        block += f", the returned reward is ` {rec.r} ` and the returned done is ` {done} `\n"
    return block


def render_counterexample(rec: TransitionRecord, verdict) -> str:
    """The failing experience plus what the wrong code actually produced."""
    block = render_experience(rec, with_reward=verdict.transition_ok)
    if not verdict.transition_ok:
        if verdict.predicted_state is not None:
            block += ("However, the implementation is wrong because it returns"
                      f" state as\n```\n{render_state(verdict.predicted_state)}\n```\n")
        elif verdict.fault is not None:
            block += ("However, the implementation fails with error: "
                      f"{verdict.fault.message}\n")
    elif not verdict.reward_ok:
        if verdict.predicted_reward is not None:
            block += ("However, the implementation is wrong because it returns"
                      f" the predicted reward as ` {verdict.predicted_reward} `"
                      f" and done as ` {verdict.predicted_done} ` instead of"
                      f" ` {rec.r} ` and ` {rec.d} `.\n")
        elif verdict.fault is not None:
            block += ("However, the implementation fails with error: "
                      f"{verdict.fault.message}\n")
    return block


def retrieve_reward_sources(reward_texts: dict[str, str], goal: str,
                            k: int = 3) -> list[tuple[str, str]]:
    """Top-k previously learned reward sources by goal-text similarity."""
    corpus = Bm25Corpus()
    scored = []
    for ctx in sorted(reward_texts):
        score = bm25_score(tokenize(ctx), tokenize(goal), corpus)
        scored.append((-score, ctx))
    scored.sort()
    return [(ctx, reward_texts[ctx]) for _, ctx in scored[:k]]


def render_retrieved(retrieved: list[tuple[str, str]]) -> str:
    sections = []
    for ctx, src in retrieved:
        sections.append(f'The reward function code for mission "{ctx}" is:\n'
                        f"```\n{src}\n```\n")
    return "\n".join(sections)


# ---------------------------------------------------------------------------
# Code extraction
# ---------------------------------------------------------------------------

_FENCE_RE = re.compile(r"```[^\n]*\n(.*?)```", re.DOTALL)
_CODE_START_RE = re.compile(r"^(def |class |import |from |@|ACTOR|ON |GOAL )")


def extract_code(response: str) -> str:
    """Last fenced code block; without fences, the text from the first
    code-looking line onward."""
    blocks = _FENCE_RE.findall(response)
    if blocks:
        return blocks[-1].strip("\n")
    lines = response.splitlines()
    for i, line in enumerate(lines):
        if _CODE_START_RE.match(line):
            return "\n".join(lines[i:]).strip("\n")
    return response.strip()


# ---------------------------------------------------------------------------
# Cassette and completion
# ---------------------------------------------------------------------------

def fingerprint(template_id: str, prompt: str) -> str:
    h = hashlib.sha256()
    h.update(template_id.encode())
    h.update(b"\x00")
    h.update(prompt.encode())
    return h.hexdigest()


class Cassette:
    """JSON-lines store of {fingerprint, template_id, response}."""

    def __init__(self, path: Optional[Path] = None, mode: str = "replay"):
        if mode not in ("record", "replay", "passthrough"):
            raise RenderError(f"unknown cassette mode {mode!r}")
        self.path = Path(path) if path else None
        self.mode = mode
        self.entries: dict[str, str] = {}
        if self.path and self.path.exists():
            with open(self.path, encoding="utf-8") as fh:
                for line in fh:
                    if line.strip():
                        obj = json.loads(line)
                        self.entries[obj["fingerprint"]] = obj["response"]

    def lookup(self, fp: str) -> Optional[str]:
        return self.entries.get(fp)

    def store(self, fp: str, template_id: str, response: str):
        self.entries[fp] = response
        if self.path:
            with open(self.path, "a", encoding="utf-8") as fh:
                fh.write(json.dumps({"fingerprint": fp, "template_id": template_id,
                                     "response": response}) + "\n")


@dataclass
class LlmConfig:
    endpoint: str = ""
    api_key: str = ""
    model: str = ""
    temperature: float = 1.0
    dialect: str = "external"

    @staticmethod
    def from_env() -> "LlmConfig":
        return LlmConfig(endpoint=os.environ.get("CODEWORLD_LLM_ENDPOINT", ""),
                         api_key=os.environ.get("CODEWORLD_LLM_API_KEY", ""),
                         model=os.environ.get("CODEWORLD_LLM_MODEL", ""))


def complete(prompt: str, template_id: str, cassette: Cassette,
             config: LlmConfig) -> str:
    """One model response, through the cassette according to its mode."""
    fp = fingerprint(template_id, prompt)
    if cassette.mode == "replay":
        stored = cassette.lookup(fp)
        if stored is None:
            raise CassetteMiss(f"no recorded response for {template_id} ({fp[:12]}…)")
        return stored
    response = _post_chat(prompt, config)
    if cassette.mode == "record":
        cassette.store(fp, template_id, response)
    return response


def _post_chat(prompt: str, config: LlmConfig) -> str:
    import requests

    if not config.endpoint:
        raise RenderError("no endpoint configured for live completion")
    reply = requests.post(
        config.endpoint,
        headers={"Authorization": f"Bearer {config.api_key}",
                 "Content-Type": "application/json"},
        json={"model": config.model, "temperature": config.temperature,
              "messages": [{"role": "user", "content": prompt}]},
        timeout=120)
    reply.raise_for_status()
    return reply.json()["choices"][0]["message"]["content"]


# ---------------------------------------------------------------------------
# Backend
# ---------------------------------------------------------------------------

class LlmBackend(SynthesizerBackend):
    """SynthesizerBackend over a chat-completion endpoint (or its cassette)."""

    def __init__(self, cassette: Cassette, config: Optional[LlmConfig] = None,
                 valid_actions: Optional[list[str]] = None):
        self.calls = 0
        self.cassette = cassette
        self.config = config or LlmConfig.from_env()
        self.valid_actions = valid_actions or []

    def _complete(self, template_id: str, **slots: str) -> str:
        prompt = TEMPLATES[template_id].render(**slots)
        self.calls += 1
        return complete(prompt, template_id, self.cassette, self.config)

    def _actions_text(self) -> str:
        return "{" + ", ".join(repr(a) for a in self.valid_actions) + "}"

    def propose_initial(self, records, starts, actions, seed: int = 0) -> ProgramSource:
        import random as _random

        sample = list(records)
        if len(sample) > 7:
            rng = _random.Random(seed)
            sample = [sample[i] for i in sorted(rng.sample(range(len(sample)), 7))]
        experiences = "\n".join(render_experience(r) for r in sample)
        transition_text = extract_code(self._complete(
            "init_transition", experiences=experiences,
            valid_actions=self._actions_text()))
        reward_texts = {}
        contexts = sorted({r.c.text for r in sample})
        for ctx in contexts:
            ctx_records = [r for r in sample if r.c.text == ctx]
            reward_experiences = "\n".join(
                render_experience(r, with_reward=True) for r in ctx_records)
            reward_texts[ctx] = extract_code(self._complete(
                "init_reward", experiences=reward_experiences, mission=ctx))
        return ProgramSource(self.config.dialect, transition_text, reward_texts)

    def refine(self, source: ProgramSource, failure: RefinementFailure) -> ProgramSource:
        if failure.kind == "fit":
            return self._refine_fit(source, failure)
        return self._refine_optimism(source, failure)

    def _refine_fit(self, source, failure) -> ProgramSource:
        rec, verdict = failure.record, failure.verdict
        entailed = "\n".join(render_experience(r, with_reward=verdict.transition_ok)
                             for r in failure.entailed_sample)
        counterexample = render_counterexample(rec, verdict)
        if not verdict.transition_ok:
            new_code = extract_code(self._complete(
                "refine_transition", code=source.transition_text,
                experiences=entailed, counterexample=counterexample))
            return ProgramSource(source.dialect, new_code,
                                 dict(source.reward_texts),
                                 lineage=source.fingerprint())
        ctx = rec.c.text
        new_code = extract_code(self._complete(
            "refine_reward", code=source.reward_texts.get(ctx, ""),
            experiences=entailed, counterexample=counterexample, mission=ctx))
        reward_texts = dict(source.reward_texts)
        reward_texts[ctx] = new_code
        return ProgramSource(source.dialect, source.transition_text, reward_texts,
                             lineage=source.fingerprint())

    def _refine_optimism(self, source, failure) -> ProgramSource:
        ctx = failure.start.c.text
        code = source.transition_text
        if ctx in source.reward_texts:
            code += "\n\n" + source.reward_texts[ctx]
        response = self._complete(
            "optimism_refine", mission=ctx, code=code,
            initial_state=render_state(failure.start.s0),
            criterion=GOAL_CRITERION, valid_actions=self._actions_text())
        new_code = extract_code(response)
        transition_text, reward_text = _split_revision(new_code, source)
        reward_texts = dict(source.reward_texts)
        if reward_text is not None:
            reward_texts[ctx] = reward_text
        return ProgramSource(source.dialect, transition_text, reward_texts,
                             lineage=source.fingerprint())

    def propose_reward_for_context(self, base: ProgramSource, context: Context,
                                   starts) -> ProgramSource:
        retrieved = retrieve_reward_sources(base.reward_texts, context.text)
        response = self._complete(
            "reward_new_goal", mission=context.text,
            retrieved_rewards=render_retrieved(retrieved))
        reward_texts = dict(base.reward_texts)
        reward_texts[context.text] = extract_code(response)
        return ProgramSource(base.dialect, base.transition_text, reward_texts,
                             lineage=base.fingerprint())


def _split_revision(code: str, source: ProgramSource) -> tuple[str, Optional[str]]:
    """A combined revision carries both routines; split on the reward marker.

    Python sources split before `def reward_func`; rule sources split before
    the first goal rule. Revisions with no reward part keep the old reward.
    """
    for marker in ("\ndef reward_func", "\nGOAL "):
        idx = code.find(marker)
        if idx >= 0:
            return code[:idx].strip("\n"), code[idx + 1:].strip("\n")
    if code.startswith(("def reward_func", "GOAL ")):
        return source.transition_text, code
    return code, None
