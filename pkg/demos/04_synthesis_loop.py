"""Counterexample-guided refinement under a bandit, fully offline.

Run me:  python3 demos/04_synthesis_loop.py
"""

import random

from codeworld.core import EpisodeStart, TransitionRecord
from codeworld.envs import EnvSpec, generate_level, gridworld
from codeworld.synthesis import EnumerativeBackend, ProgramPool, synthesize

# Collect a random walk through a small room: this is all the learner sees.
level = generate_level(EnvSpec(kind="gridworld", width=5, height=5,
                               mission_family="empty"), seed=1)
print("mission:", level.context.text)
rng = random.Random(0)
records = []
state = level.initial
for _ in range(25):
    action = rng.choice(gridworld.ACTIONS)
    s2, r, d = gridworld.step(state, action, level.context.text)
    records.append(TransitionRecord(state, action, r, s2, level.context, d))
    state = level.initial if d else s2
starts = [EpisodeStart(level.initial, level.context)]
print(f"observed {len(records)} transitions, none rewarded:",
      all(rec.r == 0.0 for rec in records))

# The enumerative backend stands in for a code-writing assistant: it repairs
# rule programs against counterexamples and, when the data admits no path to
# reward, imagines ability rules that the data cannot refute.
backend = EnumerativeBackend(actor="Agent")
program, pool = synthesize(ProgramPool(), backend, records, starts,
                           gridworld.actions, budget=50, seed=0)

best = pool.candidates[pool.best]
print(f"\nbackend calls used: {backend.calls}")
print(f"pool grew to {len(pool.candidates)} candidates; best h = {best.h_score}")
print("\nlearned dynamics:")
print(best.source.transition_text)
# Without ever seeing a reward, the optimism constraint forces the learner
# to place an imagined one somewhere the data cannot refute; acting on that
# belief is what eventually produces the refuting (or confirming) evidence.
print("reward model (imagined until the environment weighs in):")
for context, text in best.source.reward_texts.items():
    print(f"# {context}\n{text}")
