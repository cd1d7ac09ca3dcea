"""The two learning constraints: explain the data, and keep a path to reward.

Run me:  python3 demos/03_objectives.py
"""

from codeworld.core import Action, Context, Entity, EpisodeStart, State, TransitionRecord
from codeworld.envs import gridworld
from codeworld.envs.base import GroundTruthProgram, Truth
from codeworld.objectives import check_fit, check_optimism, progress_score
from codeworld.runtime.program import ProgramSource, compile_program


def doorkey_state(direction):
    cells = [Entity("Wall", x, y) for x in range(5) for y in range(5)
             if x in (0, 4) or y in (0, 4)]
    cells += [Entity("Wall", 2, 1), Entity("Wall", 2, 3),
              Entity("Door", 2, 2, color="yellow", state="locked"),
              Entity("Key", 1, 3, color="yellow"), Entity("Goal", 3, 3),
              Entity("Agent", 1, 2, direction=direction, carrying=None)]
    return State(cells)


mission = Context("use the key to open the door and then get to the goal")
truth = GroundTruthProgram(Truth(gridworld.transition, gridworld.reward,
                                 gridworld.actions))

# Record a couple of experiences from the true dynamics.
records = []
for action_name, direction in [("turn right", (-1, 0)), ("toggle", (0, -1)),
                               ("nothing", (0, 1))]:
    s = doorkey_state(direction)
    s2, r, d = gridworld.step(s, Action(action_name), mission.text)
    records.append(TransitionRecord(s, Action(action_name), r, s2, mission, d))

# A model that never changes anything cannot explain the turn.
identity = compile_program(ProgramSource(
    "rule_dsl", "ACTOR Agent\n",
    {mission.text: f'GOAL "{mission.text}" THEN REWARD 0.0 DONE false'}))
report = check_fit(identity, records)
print("identity model satisfies the data constraint:", report.satisfied)
for index, rec, verdict in report.counterexamples:
    print(f"  record #{index} ({rec.a.name!r}) misfit; "
          f"transition ok: {verdict.transition_ok}")

# The true dynamics admit a plan to positive reward from the episode start:
# that existence is the optimism constraint, and its witness is a real plan.
start = EpisodeStart(doorkey_state((0, 1)), mission)
result = check_optimism(truth, start, gridworld.actions, horizon=20)
print("\nwitness found:", result.satisfied)
print("plan:", " -> ".join(a.name for a in result.witness.actions))

# The refinement heuristic is the satisfied fraction of both constraint
# families, with the optimism half gated behind a full data fit.
h = progress_score(truth, records, [start], gridworld.actions, horizon=20)
print("progress score of the true model:", h)
h_bad = progress_score(identity, records, [start], gridworld.actions, horizon=20)
print("progress score of the identity model:", round(h_bad, 3))
