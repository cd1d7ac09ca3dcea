import subprocess

from tests.conftest import (
    FIXTURES,
    GRID_MODEL,
    GRID_REWARD,
    RUNNER_CMD,
)

MISSION = "use the key to open the door and then get to the goal"


class TestBasicFlow:
    def test_transition_before_load_is_an_error(self, runner):
        reply = runner.rpc("transition", state=[],
                           action={"name": "x", "args": {}})
        assert reply == {"id": 1, "ok": False, "error": "no model loaded"}

    def test_load_then_transition(self, runner, doorkey_fixture):
        assert runner.load(GRID_MODEL, {MISSION: GRID_REWARD})["ok"]
        block = next(r for r in doorkey_fixture["init_transition"]
                     if r["a"]["name"] == "turn right")
        reply = runner.rpc("transition", state=block["s"], action=block["a"])
        assert reply["ok"]
        agent = next(e for e in reply["state"] if e["name"] == "Agent")
        expected = next(e for e in block["s_next"] if e["name"] == "Agent")
        assert agent["direction"] == expected["direction"]
        assert agent["x"] == expected["x"] and agent["y"] == expected["y"]

    def test_reward_round_trip(self, runner, doorkey_fixture):
        runner.load(GRID_MODEL, {MISSION: GRID_REWARD})
        block = doorkey_fixture["init_reward"][0]
        reply = runner.rpc("reward", context=MISSION, state=block["s"],
                           action=block["a"], next_state=block["s_next"])
        assert reply["ok"] and reply["reward"] == 0.0 and reply["done"] is False

    def test_unknown_context_is_an_error(self, runner, doorkey_fixture):
        runner.load(GRID_MODEL, {MISSION: GRID_REWARD})
        block = doorkey_fixture["init_reward"][0]
        reply = runner.rpc("reward", context="nope", state=block["s"],
                           action=block["a"], next_state=block["s_next"])
        assert not reply["ok"] and "nope" in reply["error"]

    def test_malformed_json_gets_a_null_id_error(self, runner):
        reply = runner.send_raw("this is not json")
        assert reply["id"] is None and not reply["ok"]
        assert runner.alive()

    def test_unknown_op_is_reported(self, runner):
        reply = runner.rpc("warp", state=[])
        assert not reply["ok"] and "warp" in reply["error"]

    def test_reload_replaces_the_model(self, runner, doorkey_fixture):
        runner.load(GRID_MODEL, {})
        identity = "def transition(state, action):\n    return state\n"
        assert runner.load(identity, {})["ok"]
        block = doorkey_fixture["init_transition"][2]  # a turn that moves
        reply = runner.rpc("transition", state=block["s"], action=block["a"])
        agent = next(e for e in reply["state"] if e["name"] == "Agent")
        original = next(e for e in block["s"] if e["name"] == "Agent")
        assert agent["direction"] == original["direction"]

    def test_load_reports_missing_entry_points(self, runner):
        reply = runner.load("x = 1", {})
        assert not reply["ok"] and "transition" in reply["error"]
        reply = runner.load("def transition(s, a):\n    return s\n",
                            {"goal": "y = 2"})
        assert not reply["ok"] and "reward_func" in reply["error"]

    def test_eof_exits_cleanly(self, runner):
        runner.proc.stdin.close()
        assert runner.proc.wait(timeout=5) == 0


class TestGoldenTranscript:
    def test_recorded_session_replays_byte_exact(self):
        requests = (FIXTURES / "transcripts" / "session_requests.jsonl").read_bytes()
        expected = (FIXTURES / "transcripts" / "session_responses.jsonl").read_bytes()
        proc = subprocess.run(RUNNER_CMD, input=requests, capture_output=True,
                              timeout=60)
        assert proc.returncode == 0
        assert proc.stdout == expected
