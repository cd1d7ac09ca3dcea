import math

import pytest
from hypothesis import given, settings, strategies as st

from codeworld.core import (
    Action,
    Context,
    ContractViolation,
    Entity,
    EpisodeStart,
    ReplayBuffer,
    State,
    TransitionRecord,
    canonicalize,
)


def make_state(direction=(0, -1), door_state="locked"):
    return State([
        Entity("Wall", 0, 0),
        Entity("Agent", 1, 2, direction=direction, carrying=None),
        Entity("Door", 2, 2, color="yellow", state=door_state),
    ])


class TestCanonicalize:
    def test_permutations_share_a_key(self):
        entities = [Entity("Wall", 0, 0), Entity("Key", 1, 3, color="yellow"),
                    Entity("Agent", 1, 2, direction=(0, 1), carrying=None)]
        keys = {canonicalize(State(order))
                for order in (entities, entities[::-1],
                              [entities[1], entities[0], entities[2]])}
        assert len(keys) == 1

    def test_field_change_changes_the_key(self):
        assert canonicalize(make_state(door_state="locked")) != \
            canonicalize(make_state(door_state="open"))

    def test_turn_changes_the_key(self, doorkey_fixture):
        block = next(r for r in doorkey_fixture["init_transition"]
                     if r["a"]["name"] == "turn right")
        before = State.from_json(block["s"])
        after = State.from_json(block["s_next"])
        assert canonicalize(before) != canonicalize(after)

    def test_equality_is_congruent_with_keys(self):
        a, b = make_state(), make_state()
        assert a == b and canonicalize(a) == canonicalize(b)
        c = make_state(direction=(1, 0))
        assert a != c and canonicalize(a) != canonicalize(c)

    @given(st.permutations(range(6)), st.randoms(use_true_random=False))
    @settings(max_examples=60, deadline=None)
    def test_random_permutation_round_trips(self, order, rng):
        entities = [
            Entity("Wall", 0, 0), Entity("Wall", 0, 1),
            Entity("Box", rng.randrange(5), rng.randrange(5), color="green"),
            Entity("Key", 2, 2, color="red"),
            Entity("Agent", 1, 1, direction=(0, 1),
                   carrying=Entity("Key", None, None, color="red")),
            Entity("Goal", 3, 3),
        ]
        shuffled = [entities[i] for i in order]
        assert State(entities) == State(shuffled)
        assert canonicalize(State(entities)) == canonicalize(State(shuffled))


class TestEntity:
    def test_name_must_be_nonempty(self):
        with pytest.raises(ContractViolation):
            Entity("")

    def test_nesting_depth_capped_at_one(self):
        inner = Entity("Key", None, None, color="red")
        Entity("Agent", 1, 1, carrying=inner)  # fine
        with pytest.raises(ContractViolation):
            Entity("Agent", 1, 1, carrying=Entity("Box", None, None, inner=inner))

    def test_render_matches_display_convention(self):
        e = Entity("Agent", 1, 2, direction=(0, -1), carrying=None)
        assert e.render() == "Agent(1, 2, direction=(0, -1), carrying=None)"

    def test_json_round_trip(self):
        e = Entity("Agent", 1, 2, direction=(0, -1),
                   carrying=Entity("Key", None, None, color="red"))
        assert Entity.from_json(e.to_json()) == e

    def test_immutability(self):
        e = Entity("Wall", 0, 0)
        with pytest.raises(AttributeError):
            e.x = 5


class TestReplayBuffer:
    def record(self, r=0.0):
        s = make_state()
        return TransitionRecord(s, Action("nothing"), r, s,
                                Context("get to the goal"), False)

    def test_record_appends(self):
        buf = ReplayBuffer()
        buf.record(self.record())
        assert len(buf.data) == 1

    def test_duplicates_are_kept(self):
        buf = ReplayBuffer()
        rec = self.record()
        buf.record(rec)
        buf.record(rec)
        assert len(buf.data) == 2

    def test_min_data_gate(self):
        buf = ReplayBuffer()
        for _ in range(10):
            buf.record(self.record())
        assert len(buf) >= 10

    def test_never_forgets(self):
        buf = ReplayBuffer()
        records = [self.record(r=float(i)) for i in range(20)]
        for rec in records:
            buf.record(rec)
        assert buf.data == records

    def test_start_dedup(self):
        buf = ReplayBuffer()
        start = EpisodeStart(make_state(), Context("get to the goal"))
        buf.record_start(start)
        buf.record_start(EpisodeStart(make_state(), Context("get to the goal")))
        assert len(buf.starts) == 1
        buf.record_start(EpisodeStart(make_state(), Context("another goal")))
        assert len(buf.starts) == 2


class TestSampleForPrompt:
    def filled(self, n):
        buf = ReplayBuffer()
        for i in range(n):
            s = make_state()
            buf.record(TransitionRecord(s, Action("nothing"), float(i), s,
                                        Context("g"), False))
        return buf

    def test_returns_all_when_fewer_than_k(self):
        buf = self.filled(3)
        assert len(buf.sample_for_prompt(7, seed=0)) == 3

    def test_deterministic_given_seed(self):
        buf = self.filled(100)
        assert buf.sample_for_prompt(7, seed=42) == buf.sample_for_prompt(7, seed=42)

    def test_empty_buffer_gives_empty_sample(self):
        assert ReplayBuffer().sample_for_prompt(7, seed=0) == []

    def test_k_must_be_positive(self):
        with pytest.raises(ContractViolation):
            self.filled(3).sample_for_prompt(0)

    def test_sampling_is_uniform_within_three_sigma(self):
        # Inclusion of each record is Binomial(trials, k/n); every count must
        # sit within three standard deviations for this fixed seed stream.
        n, k, trials = 20, 7, 10_000
        buf = self.filled(n)
        counts = [0] * n
        for seed in range(trials):
            for rec in buf.sample_for_prompt(k, seed=seed):
                counts[int(rec.r)] += 1
        p = k / n
        mean = trials * p
        sigma = math.sqrt(trials * p * (1 - p))
        assert all(abs(c - mean) <= 3 * sigma for c in counts), counts


class TestActionAndContext:
    def test_context_must_be_nonempty(self):
        with pytest.raises(ContractViolation):
            Context("")

    def test_action_render_with_args(self):
        a = Action.make("Goto", dest="desk1")
        assert a.render() == "Goto(dest=desk1)"
        assert Action.from_json(a.to_json()) == a

    def test_record_json_round_trip(self):
        s = make_state()
        rec = TransitionRecord(s, Action.make("Pickup", obj="egg1",
                                              receptacle="fridge1"),
                               -0.1, make_state(direction=(1, 0)),
                               Context("win the game"), True)
        assert TransitionRecord.from_json(rec.to_json()) == rec
