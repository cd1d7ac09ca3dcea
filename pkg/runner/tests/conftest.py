import json
import subprocess
import sys
from pathlib import Path

import pytest

FIXTURES = Path(__file__).parent / "fixtures"
PRIMARY_FIXTURES = Path(__file__).resolve().parents[2] / "tests" / "fixtures"

GRID_MODEL = (FIXTURES / "grid_model.py").read_text()
GRID_REWARD = (FIXTURES / "grid_reward.py").read_text()
SOKOBAN_MODEL = (FIXTURES / "sokoban_model.py").read_text()
SOKOBAN_REWARD = (FIXTURES / "sokoban_reward.py").read_text()

RUNNER_CMD = [sys.executable, "-m", "wmrunner", "--serve"]


class RunnerClient:
    """Minimal protocol client for tests; talks to a live runner process."""

    def __init__(self):
        self.proc = subprocess.Popen(RUNNER_CMD, stdin=subprocess.PIPE,
                                     stdout=subprocess.PIPE, text=True, bufsize=1)
        self._next_id = 0

    def rpc(self, op: str, timeout: float = 10.0, **payload) -> dict:
        self._next_id += 1
        request = {"id": self._next_id, "op": op, **payload}
        self.proc.stdin.write(json.dumps(request) + "\n")
        self.proc.stdin.flush()
        import select as _select

        ready, _, _ = _select.select([self.proc.stdout], [], [], timeout)
        assert ready, "runner did not answer in time"
        return json.loads(self.proc.stdout.readline())

    def send_raw(self, line: str) -> dict:
        self.proc.stdin.write(line + "\n")
        self.proc.stdin.flush()
        return json.loads(self.proc.stdout.readline())

    def load(self, transition_src: str, reward_srcs: dict) -> dict:
        return self.rpc("load", transition_src=transition_src,
                        reward_srcs=reward_srcs)

    def alive(self) -> bool:
        return self.proc.poll() is None

    def close(self):
        if self.proc.poll() is None:
            self.proc.stdin.close()
            try:
                self.proc.wait(timeout=5)
            except subprocess.TimeoutExpired:
                self.proc.kill()


@pytest.fixture
def runner():
    client = RunnerClient()
    yield client
    client.close()


@pytest.fixture(scope="session")
def doorkey_fixture() -> dict:
    return json.loads((PRIMARY_FIXTURES / "doorkey_experience.json").read_text())
