"""Two planners: exact value iteration, and heuristic tree search without rollouts.

Run me:  python3 demos/05_planning.py
"""

from codeworld.core import Context, Entity, State
from codeworld.envs import EnvSpec, generate_level, household, sokoban
from codeworld.envs.base import Episode, GroundTruthProgram, Truth
from codeworld.planners import (
    Bm25Corpus,
    PlanConfig,
    bm25_score,
    tokenize,
    uct_search,
    value_iteration_plan,
)

# Dense rewards: depth-limited value iteration walks a box puzzle optimally.
level = generate_level(EnvSpec(kind="sokoban", width=6, height=6, n_boxes=1), 3)
model = GroundTruthProgram(level.truth)
episode = Episode(level)
cfg = PlanConfig(depth=18)
while not episode.finished:
    action = value_iteration_plan(episode.state, model, level.context,
                                  level.truth.actions, cfg)
    episode.step(action)
print(f"value iteration solved the puzzle in {episode.steps} steps "
      f"(total reward {episode.total_reward:+.1f})")

# Sparse rewards and long horizons: tree search scores each new leaf by the
# textual overlap between the trajectory so far and the mission, with corpus
# statistics that build up online during the search.
corpus = Bm25Corpus()
print("\nonline scoring, same trajectory twice (the corpus moves):")
tau = tokenize("Goto(dest=sidetable1) The agent1 at loc4 is now at loc2.")
mission_tokens = tokenize("put a alarmclock in desk")
print("  first :", round(bm25_score(tau, mission_tokens, corpus), 6))
print("  second:", round(bm25_score(tau, mission_tokens, corpus), 6))

house = [
    Entity("desk1", loc="loc1"), Entity("sidetable1", loc="loc2"),
    Entity("garbagecan1", loc="loc3"), Entity("shelf1", loc="loc4"),
    Entity("alarmclock1", loc="loc2", in_on="sidetable1",
           ishot=False, iscool=False, isclean=False),
    Entity("book1", loc="loc1", in_on="desk1",
           ishot=False, iscool=False, isclean=False),
    Entity("agent1", loc="loc3", holding=None),
]
mission = Context("put a alarmclock in desk")
truth = Truth(household.transition, household.reward, household.actions)
model = GroundTruthProgram(truth)
state = State(house)
print(f"\nmission: {mission.text!r}")
for step_index in range(6):
    action = uct_search(state, model, mission, Bm25Corpus(), truth.actions,
                        PlanConfig(mcts_budget=1500), seed=step_index)
    s2, r, d = household.step(state, action, mission.text)
    print(f"  {action.render():<46} reward {r:+.1f} done={d}")
    state = s2
    if d:
        break
