"""Backend-neutral executable world models.

A compiled program exposes a transition evaluator and a context-keyed reward
evaluator. Two backends exist: the embedded rule-DSL interpreter, and an
external runner subprocess speaking newline-delimited JSON. Evaluation never
raises for bad programs; every failure is reported as a fault outcome so
callers can treat it as "does not entail".
"""

from __future__ import annotations

import hashlib
import json
import select
import subprocess
import time
from dataclasses import dataclass, field
from typing import Optional

from codeworld.core import Action, Context, State
from codeworld.runtime import dsl

FAULT_PARSE = "parse"
FAULT_RUNTIME = "runtime"
FAULT_TIMEOUT = "timeout"
FAULT_PROTOCOL = "protocol"
FAULT_NONDETERMINISM = "nondeterminism"
FAULT_UNCOVERED = "uncovered-context"

EVAL_TIMEOUT_SECONDS = 1.0


class CompileError(Exception):
    pass


@dataclass(frozen=True)
class Fault:
    kind: str
    message: str


@dataclass(frozen=True)
class EvalOutcome:
    """Either a successful value or a fault, never both."""

    ok: bool
    state: Optional[State] = None
    reward: Optional[float] = None
    done: Optional[bool] = None
    fault: Optional[Fault] = None

    @staticmethod
    def of_state(state: State) -> "EvalOutcome":
        return EvalOutcome(ok=True, state=state)

    @staticmethod
    def of_reward(reward: float, done: bool) -> "EvalOutcome":
        return EvalOutcome(ok=True, reward=reward, done=done)

    @staticmethod
    def of_fault(kind: str, message: str) -> "EvalOutcome":
        return EvalOutcome(ok=False, fault=Fault(kind, message))


@dataclass
class ProgramSource:
    """Source text for a world model: one transition routine plus per-goal rewards."""

    dialect: str  # "rule_dsl" or "external"
    transition_text: str
    reward_texts: dict[str, str] = field(default_factory=dict)
    lineage: Optional[str] = None

    def __post_init__(self):
        if not self.transition_text:
            raise CompileError("transition_text must be nonempty")

    def fingerprint(self) -> str:
        h = hashlib.sha256()
        h.update(self.dialect.encode())
        h.update(b"\x00")
        h.update(self.transition_text.encode())
        for ctx in sorted(self.reward_texts):
            h.update(b"\x00" + ctx.encode() + b"\x00")
            h.update(self.reward_texts[ctx].encode())
        return h.hexdigest()

    def transition_fingerprint(self) -> str:
        return hashlib.sha256(self.transition_text.encode()).hexdigest()

    def to_json(self) -> dict:
        return {"dialect": self.dialect, "transition_text": self.transition_text,
                "reward_texts": dict(self.reward_texts), "lineage": self.lineage}

    @staticmethod
    def from_json(obj: dict) -> "ProgramSource":
        return ProgramSource(obj["dialect"], obj["transition_text"],
                             dict(obj.get("reward_texts") or {}), obj.get("lineage"))


class WorldModelProgram:
    """Interface shared by all compiled world models."""

    source: Optional[ProgramSource] = None

    def covers(self, c: Context) -> bool:
        raise NotImplementedError

    def eval_transition(self, s: State, a: Action) -> EvalOutcome:
        raise NotImplementedError

    def eval_reward(self, c: Context, s: State, a: Action, s_next: State) -> EvalOutcome:
        raise NotImplementedError

    def close(self):
        pass


class DslProgram(WorldModelProgram):
    """Rule-DSL backend: transition rules plus one parsed rule set per goal."""

    def __init__(self, source: ProgramSource):
        self.source = source
        try:
            self._transition = dsl.parse_program(source.transition_text)
        except dsl.DslParseError as exc:
            raise CompileError(f"transition: {exc}") from exc
        self._rewards: dict[str, dsl.RuleProgram] = {}
        for ctx, text in source.reward_texts.items():
            try:
                self._rewards[ctx] = dsl.parse_program(text)
            except dsl.DslParseError as exc:
                raise CompileError(f"reward[{ctx!r}]: {exc}") from exc

    def covers(self, c: Context) -> bool:
        return c.text in self._rewards

    def eval_transition(self, s: State, a: Action) -> EvalOutcome:
        try:
            return EvalOutcome.of_state(dsl.eval_transition_rules(self._transition, s, a))
        except dsl.DslBudgetExceeded as exc:
            return EvalOutcome.of_fault(FAULT_TIMEOUT, str(exc))
        except Exception as exc:  # interpreter bugs must not kill the caller
            return EvalOutcome.of_fault(FAULT_RUNTIME, repr(exc))

    def eval_reward(self, c: Context, s: State, a: Action, s_next: State) -> EvalOutcome:
        program = self._rewards.get(c.text)
        if program is None:
            return EvalOutcome.of_fault(FAULT_UNCOVERED,
                                        f"no reward rules for context {c.text!r}")
        try:
            r, d = dsl.eval_reward_rules(program, c.text, s, a, s_next)
            return EvalOutcome.of_reward(r, d)
        except dsl.DslBudgetExceeded as exc:
            return EvalOutcome.of_fault(FAULT_TIMEOUT, str(exc))
        except Exception as exc:
            return EvalOutcome.of_fault(FAULT_RUNTIME, repr(exc))


class ExternalProgram(WorldModelProgram):
    """External backend: one runner subprocess per program handle.

    Requests are serialized per subprocess; each call gets a wall-clock
    budget. The first call of each kind is issued twice and compared as a
    nondeterminism spot check (``check_determinism="always"`` checks every
    call).
    """

    def __init__(self, source: ProgramSource, command: list[str],
                 check_determinism: str = "first",
                 timeout: float = EVAL_TIMEOUT_SECONDS):
        self.source = source
        self._command = list(command)
        self._check = check_determinism
        self._timeout = timeout
        self._next_id = 0
        self._checked: set[str] = set()
        self._proc: Optional[subprocess.Popen] = None
        self._spawn_and_load()

    def _spawn_and_load(self):
        try:
            self._proc = subprocess.Popen(
                self._command, stdin=subprocess.PIPE, stdout=subprocess.PIPE,
                text=True, bufsize=1)
        except OSError as exc:
            raise CompileError(f"cannot spawn runner {self._command!r}: {exc}") from exc
        reply = self._request({"op": "load",
                               "transition_src": self.source.transition_text,
                               "reward_srcs": dict(self.source.reward_texts)},
                              timeout=5.0)
        if not reply.ok:
            self.close()
            raise CompileError(f"runner rejected program: {reply.fault.message}")

    def _request(self, payload: dict, timeout: Optional[float] = None) -> EvalOutcome:
        if self._proc is None or self._proc.poll() is not None:
            return EvalOutcome.of_fault(FAULT_PROTOCOL, "runner process is not running")
        self._next_id += 1
        payload = {"id": self._next_id, **payload}
        try:
            self._proc.stdin.write(json.dumps(payload) + "\n")
            self._proc.stdin.flush()
        except (BrokenPipeError, OSError) as exc:
            return EvalOutcome.of_fault(FAULT_PROTOCOL, f"write failed: {exc}")
        line = self._read_line(timeout or self._timeout)
        if line is None:
            self.close()
            return EvalOutcome.of_fault(FAULT_TIMEOUT, "runner did not answer in time")
        try:
            reply = json.loads(line)
        except json.JSONDecodeError as exc:
            return EvalOutcome.of_fault(FAULT_PROTOCOL, f"bad reply line: {exc}")
        if reply.get("id") != payload["id"]:
            return EvalOutcome.of_fault(FAULT_PROTOCOL, "reply id mismatch")
        if not reply.get("ok"):
            return EvalOutcome.of_fault(FAULT_RUNTIME, str(reply.get("error")))
        if "state" in reply:
            try:
                return EvalOutcome.of_state(State.from_json(reply["state"]))
            except Exception as exc:
                return EvalOutcome.of_fault(FAULT_PROTOCOL, f"bad state payload: {exc}")
        if "reward" in reply:
            return EvalOutcome.of_reward(float(reply["reward"]), bool(reply["done"]))
        return EvalOutcome(ok=True)

    def _read_line(self, timeout: float) -> Optional[str]:
        deadline = time.monotonic() + timeout
        buf = ""
        fd = self._proc.stdout.fileno()
        while True:
            remaining = deadline - time.monotonic()
            if remaining <= 0:
                return None
            ready, _, _ = select.select([fd], [], [], remaining)
            if not ready:
                return None
            line = self._proc.stdout.readline()
            if line == "":
                return None
            buf += line
            if buf.endswith("\n"):
                return buf

    def _checked_request(self, kind: str, payload: dict) -> EvalOutcome:
        first = self._request(payload)
        if not first.ok:
            return first
        if self._check == "always" or (self._check == "first" and kind not in self._checked):
            self._checked.add(kind)
            second = self._request(payload)
            if second != first:
                return EvalOutcome.of_fault(
                    FAULT_NONDETERMINISM, "repeated call returned a different value")
        return first

    def covers(self, c: Context) -> bool:
        return c.text in self.source.reward_texts

    def eval_transition(self, s: State, a: Action) -> EvalOutcome:
        return self._checked_request("transition", {
            "op": "transition", "state": s.to_json(), "action": a.to_json()})

    def eval_reward(self, c: Context, s: State, a: Action, s_next: State) -> EvalOutcome:
        if not self.covers(c):
            return EvalOutcome.of_fault(FAULT_UNCOVERED,
                                        f"no reward routine for context {c.text!r}")
        return self._checked_request("reward", {
            "op": "reward", "context": c.text, "state": s.to_json(),
            "action": a.to_json(), "next_state": s_next.to_json()})

    def close(self):
        if self._proc is not None:
            try:
                self._proc.stdin.close()
            except OSError:
                pass
            try:
                self._proc.wait(timeout=2.0)
            except subprocess.TimeoutExpired:
                self._proc.kill()
            self._proc = None


DEFAULT_RUNNER_COMMAND = ["runner", "--serve"]


def compile_program(source: ProgramSource,
                    runner_command: Optional[list[str]] = None,
                    check_determinism: str = "first") -> WorldModelProgram:
    """Compile source into an evaluable world model.

    ``rule_dsl`` sources parse in-process; ``external`` sources spawn the
    runner subprocess (by default ``runner --serve``) and load the source
    over the wire.
    """
    if source.dialect == "rule_dsl":
        return DslProgram(source)
    if source.dialect == "external":
        return ExternalProgram(source, runner_command or DEFAULT_RUNNER_COMMAND,
                               check_determinism)
    raise CompileError(f"unknown dialect {source.dialect!r}")
