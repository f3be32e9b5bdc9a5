"""Time travel over a checkpoint store.

:func:`state_at` reconstructs the network at an arbitrary instant by
snapshotting the latest checkpoint at or before that instant and
applying the subsequent logs.  :class:`ReplaySession` wraps that into an
interactive cursor: single steps in both directions, seeking, and timed
playback that emits state diffs at the original inter-arrival spacing
scaled by a speed factor.

Each session owns a private state copy; any number of sessions can run
concurrently against one store.  Backward stepping recomputes from the
nearest earlier checkpoint instead of keeping inverse diffs; the cost is
bounded by LogPerCheckpoint.
"""

from __future__ import annotations

import bisect
import threading
import uuid
from typing import Callable

from .checkpoint_store import LogEntry, Store
from .network_model import (
    NetworkState,
    StateDiff,
    apply_packet,
    compute_diff,
)
from .packet_codec import RawPacket, decode_packet

SPEED_CAP = 1000.0

Event = dict
Subscriber = Callable[[Event], None]


class EmptyStoreError(Exception):
    def __init__(self) -> None:
        super().__init__("store has no checkpoints and no pending logs")


def _apply_log(state: NetworkState, entry: LogEntry, store: Store) -> StateDiff:
    packet = decode_packet(RawPacket(entry.data, entry.t), store.net, store.pkts)
    return apply_packet(state, packet)


def state_at(store: Store, tau: int) -> NetworkState:
    """Network state after every log with t <= tau.

    Seeds from the latest checkpoint at or before tau, then applies the
    following logs up to and including tau (ties included).  The discard
    counter is reported as 0: discarded packets are never logged, so a
    reconstruction cannot see them.
    """
    cps = store.checkpoints
    if not cps and not store.pending:
        raise EmptyStoreError()
    times = [cp.t for cp in cps]
    idx = bisect.bisect_right(times, tau) - 1
    if idx >= 0:
        state = cps[idx].state.snapshot()
    else:
        state = NetworkState.empty()
    state.discard_count = 0
    for entry in store.logs_after_checkpoint(idx):
        if entry.t > tau:
            break
        _apply_log(state, entry, store)
    return state


def _state_at_index(store: Store, count: int) -> NetworkState:
    """State after exactly the first `count` logs of the stream."""
    cps = store.checkpoints
    base_idx = -1
    covered = 0
    for i, cp in enumerate(cps):
        if covered + len(cp.logs) <= count:
            covered += len(cp.logs)
            base_idx = i
        else:
            break
    state = cps[base_idx].state.snapshot() if base_idx >= 0 else NetworkState.empty()
    state.discard_count = 0
    logs = store.logs_after_checkpoint(base_idx)
    for entry in logs[:count - covered]:
        _apply_log(state, entry, store)
    return state


class ReplaySession:
    """A seekable cursor over the store's log stream.

    The cursor sits *after* ``cursor_index`` applied logs; ``cursor_t``
    is the timestamp of the last applied log (or the seek target).
    Subscribers receive ``diff`` events during playback and stepping,
    ``full_state`` events on seek, and an ``end`` event when playback
    drains the stream.
    """

    def __init__(self, store: Store, at: int):
        self.id = uuid.uuid4().hex[:12]
        self.store = store
        self.mode = "paused"
        self.speed = 1.0
        self._lock = threading.RLock()
        self._subscribers: list[Subscriber] = []
        self._player: threading.Thread | None = None
        self._wake = threading.Event()
        lo, hi = store.time_range()  # raises StoreError when empty
        self._position(min(max(at, lo), hi))
        self.clamped_on_create = not lo <= at <= hi

    def _position(self, tau: int) -> None:
        self.state = state_at(self.store, tau)
        logs = self.store.all_logs()
        self.cursor_index = bisect.bisect_right([e.t for e in logs], tau)
        self.cursor_t = tau

    # -- subscriptions -------------------------------------------------

    def subscribe(self, fn: Subscriber) -> None:
        with self._lock:
            self._subscribers.append(fn)

    def unsubscribe(self, fn: Subscriber) -> None:
        with self._lock:
            if fn in self._subscribers:
                self._subscribers.remove(fn)

    def _emit(self, event: Event) -> None:
        for fn in list(self._subscribers):
            fn(event)

    # -- transport -----------------------------------------------------

    def step(self, direction: str) -> StateDiff:
        """Apply (or undo) one log; empty diff at either end of the stream."""
        if direction not in ("forward", "backward"):
            raise ValueError(f"direction must be forward or backward, got {direction!r}")
        with self._lock:
            before = self.cursor_index
            if direction == "forward":
                diff = self._step_forward()
            else:
                diff = self._step_backward()
            if self.cursor_index != before:
                self._emit({"type": "diff", "session": self.id, "diff": diff})
            return diff

    def _empty_diff(self) -> StateDiff:
        return StateDiff(t=self.cursor_t, entries=(),
                         packet_count=self.state.packet_count,
                         discard_count=self.state.discard_count)

    def _step_forward(self) -> StateDiff:
        logs = self.store.all_logs()
        if self.cursor_index >= len(logs):
            return self._empty_diff()
        entry = logs[self.cursor_index]
        diff = _apply_log(self.state, entry, self.store)
        self.cursor_index += 1
        self.cursor_t = entry.t
        return diff

    def _step_backward(self) -> StateDiff:
        if self.cursor_index == 0:
            return self._empty_diff()
        logs = self.store.all_logs()
        target = self.cursor_index - 1
        new_state = _state_at_index(self.store, target)
        new_t = logs[target - 1].t if target > 0 else logs[0].t - 1
        diff = compute_diff(self.state, new_state, t=new_t)
        self.state = new_state
        self.cursor_index = target
        self.cursor_t = new_t
        return diff

    def seek(self, tau: int) -> tuple[NetworkState, bool]:
        """Jump to tau (clamped to the store range); emits a full state."""
        with self._lock:
            lo, hi = self.store.time_range()
            clamped = not lo <= tau <= hi
            target = min(max(tau, lo), hi)
            self._position(target)
            self._emit({
                "type": "full_state",
                "session": self.id,
                "state": self.state.snapshot(),
                "cursor_t": self.cursor_t,
                "clamped": clamped,
            })
            return self.state, clamped

    def play(self, speed: float = 1.0) -> None:
        """Start timed playback; diffs are emitted to subscribers."""
        if speed <= 0:
            raise ValueError("speed must be positive")
        with self._lock:
            self.speed = min(speed, SPEED_CAP)
            if self.mode == "playing":
                return
            self.mode = "playing"
            self._wake.clear()
            self._player = threading.Thread(target=self._play_loop, daemon=True)
            self._player.start()

    def pause(self) -> None:
        with self._lock:
            if self.mode != "playing":
                return
            self.mode = "paused"
        self._wake.set()
        player = self._player
        if player is not None and player is not threading.current_thread():
            player.join(timeout=2.0)

    def close(self) -> None:
        self.pause()
        with self._lock:
            self._subscribers.clear()

    def _play_loop(self) -> None:
        while True:
            with self._lock:
                if self.mode != "playing":
                    return
                logs = self.store.all_logs()
                if self.cursor_index >= len(logs):
                    self.mode = "paused"
                    self._emit({"type": "end", "session": self.id,
                                "cursor_t": self.cursor_t})
                    return
                gap_ms = max(0, logs[self.cursor_index].t - self.cursor_t)
                wait_s = gap_ms / 1000.0 / self.speed
            if wait_s > 0 and self._wake.wait(timeout=wait_s):
                return  # woken: pause or close
            with self._lock:
                if self.mode != "playing":
                    return
                diff = self._step_forward()
                self._emit({"type": "diff", "session": self.id, "diff": diff})
