"""Wire-protocol server executing generated world-model code under restrictions.

One JSON request per line on stdin, one JSON reply per line on stdout:

    {"id": 1, "op": "load", "transition_src": "...", "reward_srcs": {"goal": "..."}}
    {"id": 2, "op": "transition", "state": [...], "action": {"name": "...", "args": {}}}
    {"id": 3, "op": "reward", "context": "goal", "state": [...],
     "action": {...}, "next_state": [...]}

Loaded code runs in a restricted namespace (no filesystem, no network, import
whitelist, print routed to stderr) with a one-second wall budget and a
process-wide memory cap. Any exception, timeout, or allocation failure turns
into an error reply; the process stays up for the next request. Inputs are
deep-copied before every invocation so mutating routines stay pure from the
protocol's point of view.
"""

from __future__ import annotations

import argparse
import builtins
import copy
import json
import signal
import sys
from typing import Any, Optional

REQUEST_SECONDS = 1.0
MEMORY_CAP_BYTES = 1 << 30

GRID_CLASS_NAMES = ("Agent", "Key", "Door", "Goal", "Wall", "Box", "Ball", "Lava")
ACTION_CLASS_NAMES = ("Goto", "Open", "Close", "Examine", "Use", "Pickup",
                      "Put", "Clean", "Heat", "Cool")

_IMPORT_WHITELIST = {"copy", "math", "itertools", "functools", "collections", "re"}


class RequestTimeout(Exception):
    pass


def _alarm(signum, frame):
    raise RequestTimeout("request exceeded its time budget")


def _limited_import(name, globals=None, locals=None, fromlist=(), level=0):
    if name.split(".")[0] not in _IMPORT_WHITELIST:
        raise ImportError(f"import of {name!r} is not allowed here")
    return __import__(name, globals, locals, fromlist, level)


def _stderr_print(*args, **kwargs):
    kwargs.pop("file", None)
    print(*args, file=sys.stderr, **kwargs)


_SAFE_BUILTIN_NAMES = [
    "abs", "all", "any", "bool", "bytearray", "bytes", "callable", "chr",
    "dict", "divmod",
    "enumerate", "filter", "float", "frozenset", "getattr", "hasattr", "hash",
    "int", "isinstance", "issubclass", "iter", "len", "list", "map", "max",
    "min", "next", "object", "ord", "pow", "range", "repr", "reversed",
    "round", "set", "setattr", "slice", "sorted", "str", "sum", "super",
    "tuple", "type", "zip", "ValueError", "TypeError", "KeyError",
    "IndexError", "AttributeError", "StopIteration", "RuntimeError",
    "ZeroDivisionError", "ArithmeticError", "LookupError", "NotImplementedError",
    "Exception", "BaseException", "MemoryError", "RecursionError", "NotImplemented",
]


def _safe_builtins() -> dict:
    safe = {name: getattr(builtins, name) for name in _SAFE_BUILTIN_NAMES}
    safe["__import__"] = _limited_import
    safe["__build_class__"] = builtins.__build_class__
    safe["__name__"] = "worldmodel"
    safe["print"] = _stderr_print
    return safe


_PRELUDE = '''
class Entity:
    def __init__(self, x, y, **kwargs):
        self.name = self.__class__.__name__
        self.x = x
        self.y = y
        for key, value in kwargs.items():
            setattr(self, key, value)
    def __repr__(self):
        attr = ', '.join(f'{key}={value}' for key, value in self.__dict__.items()
                         if key not in ('name', 'x', 'y'))
        if attr:
            return f"{self.name}({self.x}, {self.y}, {attr})"
        return f"{self.name}({self.x}, {self.y})"
    def __eq__(self, other):
        return all(getattr(self, key) == getattr(other, key, None)
                   for key in self.__dict__.keys())
    def __hash__(self):
        return hash(tuple(sorted((k, str(v)) for k, v in self.__dict__.items())))
class Agent(Entity): pass
class Key(Entity): pass
class Door(Entity): pass
class Goal(Entity): pass
class Wall(Entity): pass
class Box(Entity): pass
class Ball(Entity): pass
class Lava(Entity): pass
def get_entities_by_name(entities, name):
    return [entity for entity in entities if entity.name == name]
def get_entities_by_position(entities, x, y):
    return [entity for entity in entities if entity.x == x and entity.y == y]
'''


def _exec_source(source: str) -> dict:
    namespace: dict[str, Any] = {"__builtins__": _safe_builtins()}
    exec(compile(_PRELUDE, "<prelude>", "exec"), namespace)
    exec(compile(source, "<worldmodel>", "exec"), namespace)
    return namespace


def _decode_value(namespace: dict, value):
    if isinstance(value, list) and len(value) == 2 and \
            all(isinstance(v, int) for v in value):
        return (value[0], value[1])
    if isinstance(value, dict) and "name" in value:
        return _decode_entity(namespace, value)
    return value


_DYNAMIC_CLASSES: dict[str, type] = {}


def _class_for(namespace: dict, name: str) -> type:
    cls = namespace.get(name)
    if isinstance(cls, type):
        return cls
    if name not in _DYNAMIC_CLASSES:
        _DYNAMIC_CLASSES[name] = type(name, (), {
            "__repr__": lambda self: f"{self.name}",
            "__eq__": lambda self, other: self.__dict__ == getattr(other, "__dict__", None),
            "__hash__": lambda self: hash(tuple(sorted(
                (k, str(v)) for k, v in self.__dict__.items()))),
        })
    return _DYNAMIC_CLASSES[name]


def _decode_entity(namespace: dict, obj: dict):
    # Hydrate without calling __init__: generated code may define entity
    # classes with any constructor signature, but always reads attributes.
    cls = _class_for(namespace, obj["name"])
    entity = cls.__new__(cls)
    entity.name = obj["name"]
    entity.x = obj.get("x")
    entity.y = obj.get("y")
    for key, value in obj.items():
        if key in ("name", "x", "y"):
            continue
        setattr(entity, key, _decode_value(namespace, value))
    return entity


def _decode_state(namespace: dict, state_json: list) -> list:
    return [_decode_entity(namespace, obj) for obj in state_json]


def _decode_action(namespace: dict, action_json: dict):
    name = action_json.get("name", "")
    args = action_json.get("args") or {}
    if not args:
        return name  # grid actions are plain strings
    cls = _class_for(namespace, name)
    action = cls.__new__(cls)
    action.name = name.lower()
    for key, value in args.items():
        setattr(action, key, value)
    return action


def _encode_value(value):
    if isinstance(value, tuple) and len(value) == 2 and \
            all(isinstance(v, int) for v in value):
        return [value[0], value[1]]
    if hasattr(value, "__dict__") and getattr(value, "name", None) is not None:
        return _encode_entity(value)
    if value is None or isinstance(value, (bool, int, str)):
        return value
    if isinstance(value, float) and value.is_integer():
        return int(value)
    return str(value)


def _encode_entity(entity) -> dict:
    out = {"name": entity.name, "x": getattr(entity, "x", None),
           "y": getattr(entity, "y", None)}
    for key in sorted(vars(entity)):
        if key in ("name", "x", "y"):
            continue
        out[key] = _encode_value(getattr(entity, key))
    return out


def _encode_state(entities) -> list:
    return [_encode_entity(e) for e in entities]


class ModelHost:
    """Holds the loaded routines and serves individual requests."""

    def __init__(self):
        self.transition_ns: Optional[dict] = None
        self.reward_ns: dict[str, dict] = {}

    def load(self, request: dict) -> dict:
        try:
            transition_ns = _exec_source(request.get("transition_src") or "")
            if "transition" not in transition_ns:
                return {"ok": False, "error": "source defines no transition function"}
            reward_ns = {}
            for context, source in (request.get("reward_srcs") or {}).items():
                namespace = _exec_source(source)
                if "reward_func" not in namespace:
                    return {"ok": False,
                            "error": f"reward source for {context!r} defines no reward_func"}
                reward_ns[context] = namespace
        except Exception as exc:
            return {"ok": False, "error": f"{type(exc).__name__}: {exc}"}
        self.transition_ns = transition_ns
        self.reward_ns = reward_ns
        return {"ok": True, "contexts": sorted(reward_ns)}

    def transition(self, request: dict) -> dict:
        if self.transition_ns is None:
            return {"ok": False, "error": "no model loaded"}
        state = _decode_state(self.transition_ns, request["state"])
        action = _decode_action(self.transition_ns, request["action"])
        result = self.transition_ns["transition"](copy.deepcopy(state), action)
        return {"ok": True, "state": _encode_state(result)}

    def reward(self, request: dict) -> dict:
        context = request.get("context")
        namespace = self.reward_ns.get(context)
        if namespace is None:
            if self.transition_ns is None:
                return {"ok": False, "error": "no model loaded"}
            return {"ok": False, "error": f"no reward routine for context {context!r}"}
        state = _decode_state(namespace, request["state"])
        next_state = _decode_state(namespace, request["next_state"])
        action = _decode_action(namespace, request["action"])
        reward, done = namespace["reward_func"](
            copy.deepcopy(state), action, copy.deepcopy(next_state))
        return {"ok": True, "reward": float(reward), "done": bool(done)}


def _set_memory_cap():
    try:
        import resource

        soft, hard = resource.getrlimit(resource.RLIMIT_AS)
        cap = MEMORY_CAP_BYTES if hard == resource.RLIM_INFINITY \
            else min(MEMORY_CAP_BYTES, hard)
        resource.setrlimit(resource.RLIMIT_AS, (cap, hard))
    except (ImportError, ValueError, OSError):
        pass  # stay serviceable on platforms without rlimits


def serve(stdin=None, stdout=None) -> int:
    stdin = stdin or sys.stdin
    stdout = stdout or sys.stdout
    host = ModelHost()
    signal.signal(signal.SIGALRM, _alarm)
    for line in stdin:
        line = line.strip()
        if not line:
            continue
        try:
            request = json.loads(line)
        except json.JSONDecodeError as exc:
            _write(stdout, {"id": None, "ok": False, "error": f"bad request: {exc}"})
            continue
        request_id = request.get("id")
        op = request.get("op")
        handler = {"load": host.load, "transition": host.transition,
                   "reward": host.reward}.get(op)
        if handler is None:
            _write(stdout, {"id": request_id, "ok": False,
                            "error": f"unknown op {op!r}"})
            continue
        signal.setitimer(signal.ITIMER_REAL, REQUEST_SECONDS)
        try:
            reply = handler(request)
        except RequestTimeout:
            reply = {"ok": False, "error": "request exceeded its time budget"}
        except MemoryError:
            reply = {"ok": False, "error": "request exceeded its memory budget"}
        except RecursionError:
            reply = {"ok": False, "error": "recursion limit exceeded"}
        except Exception as exc:  # generated code can fail arbitrarily
            reply = {"ok": False, "error": f"{type(exc).__name__}: {exc}"}
        finally:
            signal.setitimer(signal.ITIMER_REAL, 0.0)
        _write(stdout, {"id": request_id, **reply})
    return 0


def _write(stdout, payload: dict):
    stdout.write(json.dumps(payload) + "\n")
    stdout.flush()


def main(argv: Optional[list] = None) -> int:
    parser = argparse.ArgumentParser(
        prog="runner", description="serve the world-model wire protocol")
    parser.add_argument("--serve", action="store_true",
                        help="serve requests on stdin/stdout")
    args = parser.parse_args(argv)
    if not args.serve:
        parser.error("nothing to do; pass --serve")
    _set_memory_cap()
    return serve()


if __name__ == "__main__":
    sys.exit(main())
