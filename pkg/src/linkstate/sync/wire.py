"""Sync wire format: length-prefixed UTF-8 JSON messages.

Each frame is a 4-byte big-endian payload length followed by one JSON object
with the fields `kind`, `sessionId`, `senderId`, `serverSeq`, `payload`.
Documented in docs/protocol.md.
"""

from __future__ import annotations

import json
import struct
from dataclasses import dataclass
from typing import Any, Iterator

from ..errors import MalformedMessage

KINDS = frozenset({"Hello", "Welcome", "Diff", "FullState", "Ack"})

MAX_FRAME_BYTES = 64 * 1024 * 1024  # refuse absurd length prefixes

_LENGTH = struct.Struct(">I")


@dataclass(frozen=True)
class Message:
    kind: str
    session_id: str
    sender_id: str
    server_seq: int = 0
    payload: Any = None


def encode_frame(msg: Message) -> bytes:
    if msg.kind not in KINDS:
        raise MalformedMessage(f"unknown message kind {msg.kind!r}")
    body = json.dumps(
        {
            "kind": msg.kind,
            "sessionId": msg.session_id,
            "senderId": msg.sender_id,
            "serverSeq": msg.server_seq,
            "payload": msg.payload,
        },
        ensure_ascii=False,
        allow_nan=False,
        separators=(",", ":"),
    ).encode("utf-8")
    return _LENGTH.pack(len(body)) + body


def decode_body(body: bytes) -> Message:
    try:
        data = json.loads(body.decode("utf-8"))
    except (UnicodeDecodeError, json.JSONDecodeError) as e:
        raise MalformedMessage(f"undecodable frame body: {e}") from e
    if not isinstance(data, dict):
        raise MalformedMessage("frame body must be a JSON object")
    kind = data.get("kind")
    session_id = data.get("sessionId")
    sender_id = data.get("senderId")
    server_seq = data.get("serverSeq", 0)
    if kind not in KINDS:
        raise MalformedMessage(f"unknown message kind {kind!r}")
    if not isinstance(session_id, str) or not isinstance(sender_id, str):
        raise MalformedMessage("sessionId and senderId must be strings")
    if not isinstance(server_seq, int) or isinstance(server_seq, bool) or server_seq < 0:
        raise MalformedMessage("serverSeq must be a non-negative integer")
    return Message(kind, session_id, sender_id, server_seq, data.get("payload"))


def decode_frame(frame: bytes) -> Message:
    """Decode one complete frame (prefix plus body)."""
    if len(frame) < _LENGTH.size:
        raise MalformedMessage("frame shorter than its length prefix")
    (length,) = _LENGTH.unpack_from(frame)
    if length > MAX_FRAME_BYTES:
        raise MalformedMessage(f"frame length {length} exceeds limit")
    body = frame[_LENGTH.size :]
    if len(body) != length:
        raise MalformedMessage(f"frame body is {len(body)} bytes, prefix says {length}")
    return decode_body(body)


class Framer:
    """Reassembles messages from an arbitrary-chunked byte stream."""

    def __init__(self):
        self._buf = bytearray()

    def feed(self, data: bytes) -> Iterator[Message]:
        self._buf.extend(data)
        while True:
            if len(self._buf) < _LENGTH.size:
                return
            (length,) = _LENGTH.unpack_from(self._buf)
            if length > MAX_FRAME_BYTES:
                raise MalformedMessage(f"frame length {length} exceeds limit")
            end = _LENGTH.size + length
            if len(self._buf) < end:
                return
            body = bytes(self._buf[_LENGTH.size : end])
            del self._buf[:end]
            yield decode_body(body)
