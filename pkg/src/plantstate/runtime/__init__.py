"""Live run service: synthetic plant, sessions, and the HTTP/SSE API."""

from plantstate.runtime.plant import PlantSpec, SyntheticPlant, synth_step
from plantstate.runtime.session import (
    Session,
    SessionConfig,
    SessionLog,
    SessionRunner,
    TickEvent,
    replay_mismatches,
    run_session,
    whatif,
)

__all__ = [
    "PlantSpec", "Session", "SessionConfig", "SessionLog", "SessionRunner",
    "SyntheticPlant", "TickEvent", "replay_mismatches", "run_session",
    "synth_step", "whatif",
]
