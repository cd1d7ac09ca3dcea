"""World models are executable programs; the bundled dialect is a rule language.

Run me:  python3 demos/02_rule_programs.py
"""

from codeworld.core import Action, Context, Entity, State
from codeworld.runtime import dsl
from codeworld.runtime.program import ProgramSource, compile_program

# A program is an ordered rule list, one rule per line: for each action the
# first rule whose conditions hold fires all of its effects; no match leaves
# the state alone.
SOURCE = """
ACTOR Player
ON "move right" WHEN ABSENT Wall AT REL 1 0, EXISTS Box AT REL 1 0 AS b, ABSENT Wall AT REL 2 0, ABSENT Box AT REL 2 0 THEN MOVE b BY (1, 0), MOVE SELF BY (1, 0)
ON "move right" WHEN ABSENT Wall AT REL 1 0, ABSENT Box AT REL 1 0 THEN MOVE SELF BY (1, 0)
"""

# Reward rules are judged on the next state: here, a box resting on the
# target one cell ahead of the player means the push just won. Each reward
# source is its own program, so it declares its own anchor entity.
REWARD = ('ACTOR Player\n'
          'GOAL "win the game" WHEN EXISTS Box AT REL 1 0, '
          'EXISTS Target AT REL 1 0 THEN REWARD 1.0 DONE true')

program = compile_program(ProgramSource("rule_dsl", SOURCE,
                                        {"win the game": REWARD}))

state = State([Entity("Player", 1, 1), Entity("Box", 2, 1),
               Entity("Wall", 4, 1), Entity("Target", 3, 1)])
print("before:", state)

out = program.eval_transition(state, Action("move right"))
print("after move right (push):", out.state)

# Pushing against the wall cannot fire either rule: identity.
blocked = program.eval_transition(out.state, Action("move right"))
print("pushed into the wall, state unchanged:", blocked.state == out.state)

# Reward models are keyed by goal text; asking about an unknown goal is a
# distinct fault that the learning loop treats as "extend the reward model".
win = program.eval_reward(Context("win the game"), state, Action("move right"),
                          out.state)
print("reward on the push:", (win.reward, win.done))
unknown = program.eval_reward(Context("juggle"), state, Action("move right"),
                              out.state)
print("unknown goal fault:", unknown.fault.kind)

# Programs round-trip through their printed form.
ast = dsl.parse_program(SOURCE)
assert dsl.parse_program(dsl.pretty_print(ast)) == ast
print("\npretty-printed form:\n" + dsl.pretty_print(ast))
