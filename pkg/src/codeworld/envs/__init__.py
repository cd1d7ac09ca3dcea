"""Ground-truth environments: sokoban, gridworld, household."""

from codeworld.envs import gridworld, household, sokoban
from codeworld.envs.base import (
    Episode,
    EnvSpec,
    GeneratorError,
    GroundTruthProgram,
    Level,
    Truth,
    bfs_solve,
)

_GENERATORS = {
    "sokoban": sokoban.generate,
    "sokoban_teleport": sokoban.generate,
    "gridworld": gridworld.generate,
    "household": household.generate,
}


def generate_level(spec: EnvSpec, seed: int) -> Level:
    """Deterministic, BFS-verified solvable level for the spec and seed."""
    return _GENERATORS[spec.kind](spec, seed)


__all__ = [
    "Episode",
    "EnvSpec",
    "GeneratorError",
    "GroundTruthProgram",
    "Level",
    "Truth",
    "bfs_solve",
    "generate_level",
    "gridworld",
    "household",
    "sokoban",
]
