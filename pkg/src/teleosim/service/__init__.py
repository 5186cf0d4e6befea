"""HTTP/WebSocket service around the simulator.

The experiment endpoints run one evaluation per request; live sessions
host an interactive simulation that console clients steer over the
telemetry channel and BCI decoders steer over raw UDP.
"""
from .app import create_app
from .session import LiveSession, SessionRegistry

__all__ = ["create_app", "LiveSession", "SessionRegistry"]
