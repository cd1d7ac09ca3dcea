"""States are sets of typed entities; environments step them deterministically.

Run me:  python3 demos/01_states_and_environments.py
"""

from codeworld.core import Entity, State, canonicalize
from codeworld.envs import Episode, EnvSpec, bfs_solve, generate_level, sokoban

# A state is just a bag of entities. Order never matters: the canonical key
# is derived from the sorted multiset.
a = State([Entity("Player", 1, 2), Entity("Box", 2, 2), Entity("Target", 3, 2)])
b = State([Entity("Target", 3, 2), Entity("Player", 1, 2), Entity("Box", 2, 2)])
print("same canonical key despite different construction order:",
      canonicalize(a) == canonicalize(b))

# Generated levels are verified solvable before they are handed out.
spec = EnvSpec(kind="sokoban", width=7, height=7, n_boxes=1)
level = generate_level(spec, seed=0)
print(f"\nmission: {level.context.text!r}")
plan = bfs_solve(level)
print("shortest solution:", " -> ".join(act.name for act in plan))

# Replay the optimal plan and watch the reward structure: -0.1 per step,
# then the final push pays +1 (box newly on target) and +10 (all boxes home).
episode = Episode(level)
for act in plan:
    _, reward, done = episode.step(act)
    print(f"  {act.name:<12} reward {reward:+.1f}  done={done}")
print("total:", round(episode.total_reward, 3))

# The teleport variant adds a pair of gates; stepping on an unblocked gate
# relocates the player to its partner.
warp = generate_level(EnvSpec(kind="sokoban_teleport", width=7, height=7,
                              n_boxes=1), seed=2)
gates = warp.initial.by_name("Gate")
print("\nteleport level gates:", [(g.x, g.y) for g in gates])
