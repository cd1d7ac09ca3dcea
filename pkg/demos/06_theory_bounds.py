"""Brute-force oracles for the actions-to-reward bound: diameter x (K + 1).

Run me:  python3 demos/06_theory_bounds.py
"""

import statistics

from codeworld.theory import (
    candidate_universe,
    corridor_instance,
    logical_dimensionality,
    mutually_independent,
    reachable_diameter,
    theorem_bound_check,
)

# A corridor with hypotheses that misplace the reward or break an edge.
instance = corridor_instance(length=8, wrong_rewards=3, wrong_transitions=2)
print("hypotheses:", instance.model_class.labels)

diameter = reachable_diameter(instance.n_states, instance.n_actions,
                              instance.truth.transition, instance.s0)
universe = candidate_universe(instance.model_class, instance.n_states,
                              instance.n_actions)
k = logical_dimensionality(instance.model_class, universe)
print(f"diameter D = {diameter}, logical dimensionality K = {k}")
print(f"bound: D x (K + 1) = {diameter * (k + 1)} actions")

# Mutual independence is what makes counterexamples count: each datum in an
# independent set rules out at least one hypothesis the others cannot.
from codeworld.theory import make_record

goal_edge = make_record(instance.n_states - 2, 1, 1.0, instance.n_states - 1, True)
ok, witnesses = mutually_independent([goal_edge], instance.model_class)
print("\nthe goal edge alone is independent (misplaced-reward hypotheses "
      "misfit it):", ok)

# An agent that always acts under a data-consistent, optimistic hypothesis
# stays under the bound on every seed; random exploration does not.
report = theorem_bound_check(instance, seeds=list(range(50)))
agent = [r.actions_taken for r in report.runs]
print(f"\nagent actions over 50 seeds: max {max(agent)}, "
      f"median {statistics.median(agent)} (bound {report.bound})")
print(f"random baseline median: {statistics.median(report.random_actions)}")
print("bound held on every seed:", report.all_ok)
print("counterexamples never exceeded K:",
      max(r.counterexamples for r in report.runs) <= k)
