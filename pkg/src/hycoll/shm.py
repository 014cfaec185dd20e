"""Per-node shared arenas.

One arena exists per node per window. The node leader allocates it; the
other on-node ranks attach to the same memory and contribute no bytes.
An arena is a single byte buffer laid out as::

    [ control block | payload ]

The control block holds the synchronization words used by
:mod:`hycoll.nodesync`, one word per 64-byte line.
"""
from __future__ import annotations

import sys
import threading
from collections import Counter
from dataclasses import dataclass

import numpy as np

from .errors import BoundsError, ResourceError, UsageError

CACHE_LINE = 64
_STRIDE = CACHE_LINE // 8

# control block slots; per-rank slots follow the fixed ones
BAR_COUNT, BAR_SENSE, STATUS, ROOT_STATUS = range(4)
_FIXED_SLOTS = 4

# pure-spin polls before falling back to the doorbell; spinning while holding
# the GIL only delays the rank that would end the wait
_gil = getattr(sys, "_is_gil_enabled", lambda: True)()
SPIN_POLLS = 8 if _gil else 1000
YIELD_TIMEOUT = 1e-3


class Arena:
    def __init__(self, key, node_id: int, nranks: int, payload_bytes: int, element_size: int):
        self.key = key
        self.node_id = node_id
        self.nranks = nranks
        self.element_size = element_size
        self.control_bytes = CACHE_LINE * (_FIXED_SLOTS + 2 * nranks)
        self.buf = np.zeros(self.control_bytes + payload_bytes, dtype=np.uint8)
        self.words = self.buf[:self.control_bytes].view(np.int64)
        self.payload = self.buf[self.control_bytes:]
        self.lock = threading.Lock()
        self.doorbell = threading.Condition(self.lock)
        self.attached = 0
        self.released = False

    def word(self, slot: int) -> int:
        return int(self.words[slot * _STRIDE])

    def set_word(self, slot: int, value: int) -> None:
        self.words[slot * _STRIDE] = value

    def ref_slot(self, local_rank: int) -> int:
        return _FIXED_SLOTS + local_rank

    def arrive_slot(self, local_rank: int) -> int:
        return _FIXED_SLOTS + self.nranks + local_rank

    def ring(self) -> None:
        with self.doorbell:
            self.doorbell.notify_all()


@dataclass(frozen=True)
class AllocationAudit:
    allocations: dict   # arena key -> number of allocations
    attached: dict      # arena key -> number of attached ranks
    nodes: dict         # arena key -> node id
    live: dict          # node id -> live arenas

    def single_copy(self) -> bool:
        return all(v == 1 for v in self.allocations.values())


class ShmRegistry:
    """Job-wide directory of arenas, plus the allocation audit trail."""

    def __init__(self):
        self._cond = threading.Condition()
        self._arenas = {}
        self._log = []
        self._live = Counter()

    def publish(self, key, arena) -> None:
        with self._cond:
            if key in self._arenas:
                raise UsageError(f"window {key} allocated twice")
            self._arenas[key] = arena
            if isinstance(arena, Arena):
                self._log.append(arena)
                self._live[arena.node_id] += 1
            self._cond.notify_all()

    def attach(self, key, monitor, rank) -> Arena:
        with monitor.blocking(rank, ("attach_window", key)):
            with self._cond:
                while key not in self._arenas:
                    monitor.check()
                    self._cond.wait(0.05)
                arena = self._arenas[key]
        if isinstance(arena, BaseException):
            raise ResourceError(f"leader failed to allocate shared window: {arena}")
        return arena

    def note_attached(self, arena: Arena) -> None:
        with self._cond:
            arena.attached += 1

    def release(self, arena: Arena) -> None:
        with self._cond:
            if arena.released:
                raise UsageError("shared window released twice")
            arena.released = True
            self._live[arena.node_id] -= 1

    def audit(self) -> AllocationAudit:
        with self._cond:
            allocs = Counter(a.key for a in self._log)
            return AllocationAudit(
                allocations=dict(allocs),
                attached={a.key: a.attached for a in self._log},
                nodes={a.key: a.node_id for a in self._log},
                live={n: c for n, c in self._live.items()},
            )


class SharedWindow:
    """One rank's attachment to its node's arena."""

    def __init__(self, arena: Arena, local_rank: int, ctx):
        self._arena = arena
        self.local_rank = local_rank
        self._ctx = ctx
        self._monitor = ctx.monitor
        self._rank = ctx.rank
        # private per-rank synchronization state
        self._sense = 0
        self._root_ref = 0
        self.freed = False
        from .nodesync import SpinCell

        self.cell = SpinCell(self)

    @property
    def node_id(self) -> int:
        return self._arena.node_id

    @property
    def control(self) -> np.ndarray:
        return self._arena.words

    @property
    def base(self) -> np.ndarray:
        """Byte view of the payload, shared by every on-node rank."""
        return self._arena.payload

    @property
    def payload_bytes(self) -> int:
        return self._arena.payload.size

    @property
    def element_size(self) -> int:
        return self._arena.element_size

    @property
    def nranks(self) -> int:
        return self._arena.nranks

    @property
    def is_leader(self) -> bool:
        return self.local_rank == 0

    def _check_live(self) -> None:
        if self.freed:
            raise UsageError("window used after free")

    def spin_until(self, pred, op) -> None:
        """Poll ``pred`` with a fence per poll until it holds.

        After ``SPIN_POLLS`` polls each further poll parks on the arena
        doorbell for at most ``YIELD_TIMEOUT`` seconds.
        """
        arena = self._arena
        lock = arena.lock
        with lock:
            pass
        if pred():
            return
        mon = self._monitor
        with mon.blocking(self._rank, op):
            polls = 0
            while True:
                with lock:
                    pass
                if pred():
                    return
                polls += 1
                if polls > SPIN_POLLS:
                    with arena.doorbell:
                        if pred():
                            return
                        mon.check()
                        arena.doorbell.wait(YIELD_TIMEOUT)
                elif polls & 1023 == 0:
                    mon.check()


@dataclass(frozen=True)
class AffinityView:
    window: SharedWindow
    offset_bytes: int
    length_bytes: int

    def array(self, dtype=np.uint8) -> np.ndarray:
        raw = self.window.base[self.offset_bytes:self.offset_bytes + self.length_bytes]
        return raw.view(dtype)


def allocate_shared(msize: int, bsize: int, flag: int, pkg) -> SharedWindow:
    """Collective over ``pkg.shmem_comm``: one zeroed arena of
    ``msize * bsize * flag`` payload bytes per node.

    Only the leader's sizes matter; children attach to the leader's arena.
    Returns once every on-node rank is attached.
    """
    comm = pkg.shmem_comm
    ctx = comm.ctx
    if ctx is None:
        raise UsageError("allocate_shared needs a communicator from a running job")
    key = (comm.context, ctx.next_seq(("window", comm.context)))
    registry = ctx.registry
    if pkg.is_leader:
        try:
            sizes = [int(msize), int(bsize), int(flag)]
            if any(v < 1 for v in sizes):
                raise ValueError(f"msize, bsize and flag must be >= 1, got {sizes}")
            arena = Arena(key, pkg.node_id, comm.size, sizes[0] * sizes[1] * sizes[2], sizes[1])
        except (ValueError, MemoryError) as exc:
            registry.publish(key, exc)
            raise ResourceError(f"shared window allocation failed: {exc}") from exc
        registry.publish(key, arena)
    else:
        arena = registry.attach(key, ctx.monitor, ctx.rank)
    registry.note_attached(arena)
    win = SharedWindow(arena, comm.my_index, ctx)
    from .nodesync import node_barrier

    node_barrier(win, pkg)
    return win


def local_view(win: SharedWindow, rank_index: int, dsize: int) -> AffinityView:
    win._check_live()
    if rank_index < 0 or dsize < 0 or (rank_index + 1) * dsize > win.payload_bytes:
        raise BoundsError(
            f"view {rank_index}*{dsize}+{dsize} exceeds payload of {win.payload_bytes} bytes")
    return AffinityView(win, rank_index * dsize, dsize)


def memory_fence(win: SharedWindow) -> None:
    """Order this rank's arena accesses against other on-node ranks."""
    with win._arena.lock:
        pass


def free_window(win: SharedWindow) -> None:
    """Collective over the node's ranks; the leader releases the arena."""
    if win.freed:
        raise UsageError("window freed twice")
    from .nodesync import node_barrier

    node_barrier(win)
    win.freed = True
    if win.is_leader:
        win._ctx.registry.release(win._arena)
