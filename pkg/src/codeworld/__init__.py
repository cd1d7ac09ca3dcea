"""Learning world models as executable programs, and acting on them by planning."""

from codeworld.core import (
    Action,
    Context,
    Entity,
    EpisodeStart,
    ReplayBuffer,
    State,
    TransitionRecord,
    canonicalize,
)

__all__ = [
    "Action",
    "Context",
    "Entity",
    "EpisodeStart",
    "ReplayBuffer",
    "State",
    "TransitionRecord",
    "canonicalize",
]

__version__ = "0.1.0"
