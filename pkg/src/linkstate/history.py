"""Undo history: a baseline snapshot plus a list of invertible diff steps.

The log attaches to a live root and records through a grouped callback, so
however many edits land within one frame flush, they coalesce into a single
step holding a forward and a backward diff. Undo/redo/jump apply one of those
diffs back to the root; the resulting flush sees no difference against the
log's own snapshot and records nothing, which is what keeps undo from
re-recording itself.

Exported logs are version-1 JSON documents (docs/history-format.md).
"""

from __future__ import annotations

import json
import time
from dataclasses import dataclass, field
from typing import Any, Callable

from .errors import (
    AlreadyAttached,
    IndexOutOfRange,
    NothingToRedo,
    NothingToUndo,
    ParseError,
    VersionMismatch,
)
from .linkable import LinkableObject
from .statetree import (
    StateNode,
    apply_diff,
    diff,
    from_plain,
    is_empty_diff,
    state_equivalent,
    to_plain,
)

FORMAT_VERSION = 1


@dataclass
class HistoryStep:
    forward: Any
    backward: Any
    timestamp_ms: int
    label: str = ""


class HistoryLog:
    """Undo/redo log over one root object's session state."""

    def __init__(self, clock_ms: Callable[[], int] | None = None):
        self._clock = clock_ms or (lambda: int(time.time() * 1000))
        self._root: LinkableObject | None = None
        self._recorder = None
        self._baseline: StateNode = None
        self._steps: list[HistoryStep] = []
        self._cursor = 0
        self._last: StateNode = None
        self._capturing = True
        self._next_label = ""

    # -- introspection ----------------------------------------------------------

    @property
    def steps(self) -> tuple[HistoryStep, ...]:
        return tuple(self._steps)

    @property
    def cursor(self) -> int:
        return self._cursor

    @property
    def baseline(self) -> StateNode:
        return self._baseline

    @property
    def can_undo(self) -> bool:
        return self._cursor > 0

    @property
    def can_redo(self) -> bool:
        return self._cursor < len(self._steps)

    @property
    def capturing(self) -> bool:
        return self._capturing

    @capturing.setter
    def capturing(self, on: bool) -> None:
        # Edits made while paused are absorbed silently on resume; that is
        # how remote sync changes stay out of the local undo log.
        on = bool(on)
        if on and not self._capturing and self._root is not None and not self._root.disposed:
            self._last = self._root.get_session_state()
        self._capturing = on

    def set_next_label(self, label: str) -> None:
        self._next_label = label

    # -- attachment -----------------------------------------------------------------

    def attach(self, root: LinkableObject) -> None:
        """Start recording root. A log with imported content requires the
        root's current state to match the state at the log's cursor."""
        if self._root is not None:
            raise AlreadyAttached("this log already records a root")
        root._check_live()
        current = root.get_session_state()
        if self._baseline is None and not self._steps:
            self._baseline = current
        elif not state_equivalent(self.state_at(self._cursor), current):
            raise ValueError("root state does not match the log at its cursor")
        self._root = root
        self._last = current
        self._recorder = root.callbacks.add_grouped_callback(self._record)

    def detach(self) -> None:
        if self._root is None:
            return
        if not self._root.callbacks.disposed:
            self._root.callbacks.remove_callback(self._recorder)
        self._root = None
        self._recorder = None

    def _require_attached(self) -> LinkableObject:
        if self._root is None or self._root.disposed:
            raise ValueError("history log is not attached to a live root")
        return self._root

    # -- recording -----------------------------------------------------------------

    def _record(self) -> None:
        if self._root is None or self._root.disposed or not self._capturing:
            return
        current = self._root.get_session_state()
        forward = diff(self._last, current)
        if is_empty_diff(forward):
            return
        backward = diff(current, self._last)
        del self._steps[self._cursor :]
        self._steps.append(HistoryStep(forward, backward, int(self._clock()), self._next_label))
        self._next_label = ""
        self._cursor = len(self._steps)
        self._last = current

    # -- navigation ------------------------------------------------------------------

    def undo(self) -> None:
        root = self._require_attached()
        if self._cursor == 0:
            raise NothingToUndo("already at the beginning of the log")
        step = self._steps[self._cursor - 1]
        self._apply(root, step.backward)
        self._cursor -= 1

    def redo(self) -> None:
        root = self._require_attached()
        if self._cursor >= len(self._steps):
            raise NothingToRedo("already at the end of the log")
        step = self._steps[self._cursor]
        self._apply(root, step.forward)
        self._cursor += 1

    def jump_to(self, index: int) -> None:
        """Go to the state after index steps, as one composite application."""
        root = self._require_attached()
        if not 0 <= index <= len(self._steps):
            raise IndexOutOfRange(f"step index {index} outside [0, {len(self._steps)}]")
        target = self.state_at(index)
        d = diff(root.get_session_state(), target)
        if not is_empty_diff(d):
            self._apply(root, d)
        self._cursor = index

    def _apply(self, root: LinkableObject, d: Any) -> None:
        root.set_session_state(d, remove_missing=True)
        self._last = root.get_session_state()

    def state_at(self, index: int) -> StateNode:
        """Value-level replay: baseline advanced by the first index steps."""
        if not 0 <= index <= len(self._steps):
            raise IndexOutOfRange(f"step index {index} outside [0, {len(self._steps)}]")
        state = self._baseline
        for step in self._steps[:index]:
            state = apply_diff(state, step.forward, remove_missing=True)
        return state

    def verify(self) -> list[int]:
        """Replay every step and test its inverse; returns bad step indices."""
        bad = []
        state = self._baseline
        for i, step in enumerate(self._steps):
            advanced = apply_diff(state, step.forward, remove_missing=True)
            reverted = apply_diff(advanced, step.backward, remove_missing=True)
            if not state_equivalent(reverted, state):
                bad.append(i)
            state = advanced
        return bad

    # -- persistence ------------------------------------------------------------------

    def export_json(self) -> str:
        payload = {
            "version": FORMAT_VERSION,
            "baseline": to_plain(self._baseline),
            "cursor": self._cursor,
            "steps": [
                {
                    "forward": s.forward,
                    "backward": s.backward,
                    "timestampMs": s.timestamp_ms,
                    "label": s.label,
                }
                for s in self._steps
            ],
        }
        return json.dumps(payload, ensure_ascii=False, allow_nan=False, separators=(",", ":"))

    @classmethod
    def import_json(cls, text: str, clock_ms: Callable[[], int] | None = None) -> "HistoryLog":
        """Parse an exported log into a detached HistoryLog."""
        try:
            data = json.loads(text)
        except json.JSONDecodeError as e:
            raise ParseError(f"malformed history log: {e}") from e
        if not isinstance(data, dict):
            raise ParseError("history log must be a JSON object")
        version = data.get("version")
        if version != FORMAT_VERSION:
            raise VersionMismatch(f"unsupported history format version {version!r}")
        steps_data = data.get("steps")
        cursor = data.get("cursor")
        if not isinstance(steps_data, list) or not isinstance(cursor, int):
            raise ParseError("history log needs integer 'cursor' and list 'steps'")
        if not 0 <= cursor <= len(steps_data):
            raise ParseError(f"cursor {cursor} outside [0, {len(steps_data)}]")
        log = cls(clock_ms)
        log._baseline = from_plain(data.get("baseline"))
        log._cursor = cursor
        for i, raw in enumerate(steps_data):
            if not isinstance(raw, dict) or "forward" not in raw or "backward" not in raw:
                raise ParseError(f"step {i} needs 'forward' and 'backward' diffs")
            log._steps.append(
                HistoryStep(
                    forward=raw["forward"],
                    backward=raw["backward"],
                    timestamp_ms=int(raw.get("timestampMs", 0)),
                    label=str(raw.get("label", "")),
                )
            )
        return log
