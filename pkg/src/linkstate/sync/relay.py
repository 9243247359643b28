"""Relay server: authoritative session state and the serverSeq total order.

The relay never instantiates live objects. It folds incoming diffs into a
value-level state tree in arrival order, stamps each with the next serverSeq,
and rebroadcasts. The sender receives its own diff back as an Ack so every
participant applies the identical totally-ordered stream.
"""

from __future__ import annotations

import hashlib
import logging
from dataclasses import dataclass, field
from typing import Any

from ..errors import MalformedMessage
from ..statetree import StateNode, apply_diff, encode, to_plain
from .wire import Message

log = logging.getLogger(__name__)


def state_hash(state: StateNode) -> str:
    return "sha256:" + hashlib.sha256(encode(state).encode("utf-8")).hexdigest()


@dataclass
class _Session:
    session_id: str
    state: StateNode = field(default_factory=list)  # root hash maps serialize to entry lists
    server_seq: int = 0
    members: dict[str, None] = field(default_factory=dict)  # insertion-ordered set
    applied: list[tuple[int, str, Any]] = field(default_factory=list)  # (seq, sender, diff)


class Relay:
    """Single-threaded relay actor. handle() maps one inbound message to the
    outbound (targetClientId, Message) list; transports do the routing."""

    def __init__(self):
        self._sessions: dict[str, _Session] = {}

    def session_ids(self) -> list[str]:
        return list(self._sessions)

    def session_state(self, session_id: str) -> StateNode:
        return self._sessions[session_id].state

    def session_seq(self, session_id: str) -> int:
        return self._sessions[session_id].server_seq

    def applied_log(self, session_id: str) -> list[tuple[int, str, Any]]:
        return list(self._sessions[session_id].applied)

    def handle(self, msg: Message) -> list[tuple[str, Message]]:
        try:
            return self._dispatch(msg)
        except MalformedMessage as e:
            log.warning("dropping malformed message from %r: %s", msg.sender_id, e)
            return []

    def _dispatch(self, msg: Message) -> list[tuple[str, Message]]:
        if not msg.session_id or not msg.sender_id:
            raise MalformedMessage("empty sessionId or senderId")
        if msg.kind not in ("Hello", "Diff"):
            raise MalformedMessage(f"clients may not send {msg.kind!r}")
        session = self._sessions.setdefault(msg.session_id, _Session(msg.session_id))

        if msg.kind == "Hello":
            # First contact gets Welcome; later Hellos are resync requests.
            rejoin = msg.sender_id in session.members
            session.members[msg.sender_id] = None
            reply = Message(
                kind="FullState" if rejoin else "Welcome",
                session_id=session.session_id,
                sender_id="server",
                server_seq=session.server_seq,
                payload=session.state,
            )
            return [(msg.sender_id, reply)]

        session.members.setdefault(msg.sender_id, None)
        try:
            # keep the authoritative tree as plain JSON values so it can go
            # straight onto the wire in Welcome/FullState replies
            session.state = to_plain(apply_diff(session.state, msg.payload, remove_missing=False))
        except (TypeError, ValueError) as e:
            raise MalformedMessage(f"diff payload does not apply: {e}") from e
        session.server_seq += 1
        session.applied.append((session.server_seq, msg.sender_id, msg.payload))
        out = []
        for member in session.members:
            out.append(
                (
                    member,
                    Message(
                        kind="Ack" if member == msg.sender_id else "Diff",
                        session_id=session.session_id,
                        sender_id=msg.sender_id,
                        server_seq=session.server_seq,
                        payload=msg.payload,
                    ),
                )
            )
        return out
