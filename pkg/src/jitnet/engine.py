"""Minimal deterministic discrete-event loop on integer time."""

from __future__ import annotations

import heapq
from typing import Callable

# Same-instant ordering: deliveries land before a slot boundary is served,
# and new work (pulls, generations) is started last.
DELIVERY = 0
SLOT = 1
START = 2


class EventLoop:
    def __init__(self):
        self._queue: list = []
        self._seq = 0
        self.now = 0
        self._stopped = False

    def at(self, time: int, priority: int, fn: Callable, *args) -> None:
        if time < self.now:
            raise ValueError(f"cannot schedule at {time}, clock is at {self.now}")
        heapq.heappush(self._queue, (time, priority, self._seq, fn, args))
        self._seq += 1

    def stop(self) -> None:
        self._stopped = True

    def run(self, until: int | None = None) -> None:
        q = self._queue
        pop = heapq.heappop
        while q and not self._stopped:
            if until is not None and q[0][0] > until:
                break
            time, _, _, fn, args = pop(q)
            self.now = time
            fn(*args)

    def __len__(self) -> int:
        return len(self._queue)
