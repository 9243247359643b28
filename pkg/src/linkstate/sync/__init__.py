"""Real-time collaboration: relay, client engines, wire format, simulator."""

from .client import ClientEngine
from .relay import Relay
from .sim import load_script, run_simulation
from .wire import Framer, Message, decode_frame, encode_frame

__all__ = [
    "ClientEngine",
    "Framer",
    "Message",
    "Relay",
    "decode_frame",
    "encode_frame",
    "load_script",
    "run_simulation",
]
