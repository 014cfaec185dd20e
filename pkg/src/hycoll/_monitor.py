"""Progress tracking and cancellation shared by every blocking primitive."""
import threading
import time

from .errors import Cancelled


class _Blocking:
    __slots__ = ("mon", "rank", "op", "prev")

    def __init__(self, mon, rank, op):
        self.mon, self.rank, self.op = mon, rank, op

    def __enter__(self):
        cur = self.mon.current
        self.prev = cur[self.rank]
        cur[self.rank] = self.op
        return self

    def __exit__(self, *exc):
        self.mon.current[self.rank] = self.prev
        self.mon.last_progress = time.monotonic()
        return False


class Monitor:
    """Records what every rank is blocked in, for the deadlock watchdog."""

    def __init__(self, world_size: int):
        self.cancelled = threading.Event()
        self.current = [None] * world_size
        self.last_progress = time.monotonic()

    def blocking(self, rank: int, op) -> _Blocking:
        return _Blocking(self, rank, op)

    def progress(self) -> None:
        self.last_progress = time.monotonic()

    def check(self) -> None:
        if self.cancelled.is_set():
            raise Cancelled("job cancelled")

    def cancel(self) -> None:
        self.cancelled.set()

    def blocked_ranks(self) -> dict:
        return {r: op for r, op in enumerate(self.current) if op is not None}
