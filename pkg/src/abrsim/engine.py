"""Deterministic discrete-event core.

The clock is an integer count of nanoseconds since simulation start.  Events
with equal fire time are delivered in insertion order, so a replay of the
same scenario produces a bit-identical event sequence.
"""

import heapq

NS_PER_US = 1_000
NS_PER_MS = 1_000_000
NS_PER_S = 1_000_000_000


def round_half_up(x: float) -> int:
    """Convert a non-negative physical quantity to an integer, .5 rounding up."""
    return int(x + 0.5)


class SchedulingError(Exception):
    """An event was scheduled before the current clock (programming error)."""


class Simulator:
    """Single-threaded event loop with a stable priority queue.

    Handlers are plain callables taking one argument.  `at` returns a handle
    usable with `cancel`; cancelling an already-fired handle is a no-op.
    """

    __slots__ = ("now", "_heap", "_next_seq", "_cancelled", "events_processed")

    def __init__(self) -> None:
        self.now = 0
        self._heap: list = []
        self._next_seq = 0
        self._cancelled: set = set()
        self.events_processed = 0

    def at(self, fire_time: int, handler, arg=None) -> int:
        """Schedule `handler(arg)` at `fire_time` ns; returns a cancellation handle."""
        if fire_time < self.now:
            raise SchedulingError(
                f"event scheduled at t={fire_time} ns, before clock t={self.now} ns"
            )
        seq = self._next_seq
        self._next_seq = seq + 1
        heapq.heappush(self._heap, (fire_time, seq, handler, arg))
        return seq

    def cancel(self, handle: int) -> None:
        self._cancelled.add(handle)

    def pending(self) -> int:
        """Events still queued (including not-yet-popped cancelled ones)."""
        return len(self._heap)

    def run_until(self, end: int) -> int:
        """Process every event with fire_time <= end; leaves the clock at end."""
        heap = self._heap
        cancelled = self._cancelled
        pop = heapq.heappop
        fired = 0
        while heap and heap[0][0] <= end:
            t, seq, handler, arg = pop(heap)
            if cancelled and seq in cancelled:
                cancelled.discard(seq)
                continue
            self.now = t
            handler(arg)
            fired += 1
        self.now = end
        self.events_processed += fired
        return fired
