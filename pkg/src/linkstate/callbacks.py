"""Observer primitives: callback collections and frame-grouped scheduling.

Every observable object owns a CallbackCollection. Triggering a collection
runs its immediate callbacks, schedules its grouped callbacks for the next
frame flush, then bubbles the trigger to registered parent collections.
Delay/resume nesting collapses any number of triggers into one run.

Recursion is prohibited per callback, not per collection: a callback that
re-triggers its own collection is skipped for the nested pass while the
collection's other callbacks still run.

Set LINKSTATE_TRACE=1 to emit one trace line per callback invocation on
stderr.
"""

from __future__ import annotations

import os
import sys
import threading
from typing import Callable

from .errors import Disposed, DuplicateCallback, ReentrantFlush, ResumeWithoutDelay, UnknownHandle


def _trace(kind: str, fn: Callable) -> None:
    if os.environ.get("LINKSTATE_TRACE", "") == "1":
        name = getattr(fn, "__qualname__", None) or repr(fn)
        print(f"linkstate-trace: {kind} {name}", file=sys.stderr)


class CallbackEntry:
    """Registration handle. Holds the liveness and per-callback running flag."""

    __slots__ = ("fn", "grouped", "alive", "running")

    def __init__(self, fn: Callable, grouped: bool):
        self.fn = fn
        self.grouped = grouped
        self.alive = True
        self.running = False


class FrameScheduler:
    """Runs grouped callbacks once per frame flush.

    Grouped callbacks are deduplicated by function identity: the same function
    scheduled from any number of collections within one frame runs once.
    Callbacks scheduled during a flush run at the next flush.
    """

    def __init__(self):
        self._pending: dict[int, tuple[Callable, list[CallbackEntry]]] = {}
        self._flushing = False
        self._frame_count = 0

    @property
    def frame_count(self) -> int:
        return self._frame_count

    @property
    def has_pending(self) -> bool:
        return bool(self._pending)

    def schedule(self, entry: CallbackEntry) -> None:
        key = id(entry.fn)
        slot = self._pending.get(key)
        if slot is None:
            self._pending[key] = (entry.fn, [entry])
        else:
            slot[1].append(entry)

    def flush_frame(self) -> None:
        """Run the pending grouped callbacks, in first-scheduled order."""
        if self._flushing:
            raise ReentrantFlush("flush_frame() called from inside a frame flush")
        self._flushing = True
        try:
            batch = self._pending
            self._pending = {}
            for fn, entries in batch.values():
                # A removed callback scheduled earlier in the frame does not
                # run, unless another live registration scheduled it too.
                if any(e.alive for e in entries):
                    _trace("grouped", fn)
                    fn()
            self._frame_count += 1
        finally:
            self._flushing = False


_default_scheduler = FrameScheduler()


def default_scheduler() -> FrameScheduler:
    """The process-wide scheduler used when none is given explicitly."""
    return _default_scheduler


class CallbackCollection:
    """An ordered set of callbacks with delay/resume and parent bubbling."""

    def __init__(self, scheduler: FrameScheduler | None = None):
        self._immediate: list[CallbackEntry] = []
        self._grouped: list[CallbackEntry] = []
        self._parents: list[CallbackCollection] = []
        self._scheduler = scheduler or default_scheduler()
        self._delay = 0
        self._pending = False
        self._counter = 0
        self._disposed = False
        self._thread = threading.get_ident()

    # -- introspection ------------------------------------------------------

    @property
    def trigger_counter(self) -> int:
        """Number of effective trigger runs (delayed triggers collapse)."""
        return self._counter

    @property
    def disposed(self) -> bool:
        return self._disposed

    @property
    def scheduler(self) -> FrameScheduler:
        return self._scheduler

    def _set_scheduler(self, scheduler: FrameScheduler) -> None:
        self._scheduler = scheduler

    def _check_live(self) -> None:
        if self._disposed:
            raise Disposed("operation on a disposed callback collection")

    # -- registration ---------------------------------------------------------

    def add_immediate_callback(self, fn: Callable, run_now: bool = False) -> CallbackEntry:
        self._check_live()
        assert threading.get_ident() == self._thread, "callback collection used across threads"
        if any(e.alive and e.fn is fn for e in self._immediate):
            raise DuplicateCallback(f"{fn!r} is already an immediate callback here")
        entry = CallbackEntry(fn, grouped=False)
        self._immediate.append(entry)
        if run_now:
            _trace("immediate", fn)
            fn()
        return entry

    def add_grouped_callback(self, fn: Callable) -> CallbackEntry:
        self._check_live()
        entry = CallbackEntry(fn, grouped=True)
        self._grouped.append(entry)
        return entry

    def remove_callback(self, handle: CallbackEntry) -> None:
        self._check_live()
        for bucket in (self._immediate, self._grouped):
            for e in bucket:
                if e is handle and e.alive:
                    e.alive = False
                    bucket.remove(e)
                    return
        raise UnknownHandle("handle is not registered on this collection")

    # -- parents ----------------------------------------------------------------

    def _add_parent(self, parent: "CallbackCollection") -> None:
        if parent is not self and all(p is not parent for p in self._parents):
            self._parents.append(parent)

    def _remove_parent(self, parent: "CallbackCollection") -> None:
        self._parents = [p for p in self._parents if p is not parent]

    # -- triggering ----------------------------------------------------------------

    def trigger(self) -> None:
        self._check_live()
        assert threading.get_ident() == self._thread, "callback collection used across threads"
        if self._delay > 0:
            self._pending = True
            return
        self._run_now(set())

    def delay(self) -> None:
        self._check_live()
        self._delay += 1

    def resume(self) -> None:
        self._check_live()
        if self._delay == 0:
            raise ResumeWithoutDelay("resume() without a matching delay()")
        self._delay -= 1
        if self._delay == 0 and self._pending:
            self._pending = False
            self._run_now(set())

    def _run_now(self, visited: set[int]) -> None:
        # visited spans one bubble pass: reference structures can make the
        # parent graph cyclic, and a pass must touch each collection once.
        # A nested trigger() from a callback starts a fresh pass.
        visited.add(id(self))
        self._counter += 1
        for entry in list(self._immediate):
            # Skipping entries that are mid-run is the recursion guard; a
            # callback removed earlier in this pass no longer runs either.
            if entry.alive and not entry.running:
                entry.running = True
                try:
                    _trace("immediate", entry.fn)
                    entry.fn()
                finally:
                    entry.running = False
        for entry in list(self._grouped):
            if entry.alive:
                self._scheduler.schedule(entry)
        for parent in list(self._parents):
            if parent.disposed or id(parent) in visited:
                continue
            if parent._delay > 0:
                parent._pending = True
            else:
                parent._run_now(visited)

    # -- teardown ----------------------------------------------------------------

    def dispose(self) -> None:
        if self._disposed:
            return
        self._disposed = True
        for e in self._immediate + self._grouped:
            e.alive = False
        self._immediate.clear()
        self._grouped.clear()
        self._parents.clear()
