"""Node-level synchronization on a shared window.

Two patterns are provided:

* red sync, :func:`node_barrier`: every on-node rank waits for every other.
* yellow sync, :func:`leader_signal` / :func:`child_wait`: children spin on
  the leader's epoch word and never wait for each other.

Children leave the poll loop only when the epoch word *equals* their
expected value. That is safe because :func:`leader_signal` refuses to run
more than one epoch ahead of the slowest child.
"""
from __future__ import annotations

from .errors import UsageError
from .shm import BAR_COUNT, BAR_SENSE, ROOT_STATUS, STATUS, SharedWindow, memory_fence


class SpinCell:
    """Epoch word of a window plus this rank's private expected epoch."""

    def __init__(self, win: SharedWindow):
        self._win = win
        self.ref = 0

    @property
    def status(self) -> int:
        return self._win._arena.word(STATUS)

    def consumed(self, local_rank: int) -> int:
        arena = self._win._arena
        return arena.word(arena.ref_slot(local_rank))


def node_barrier(win: SharedWindow, pkg=None) -> None:
    """Centralized sense-reversing barrier over the window's ranks."""
    arena = win._arena
    nranks = arena.nranks
    if pkg is not None and pkg.shmemcomm_size != nranks:
        raise UsageError("package does not match the window's node")
    memory_fence(win)
    if nranks == 1:
        return
    sense = win._sense = 1 - win._sense
    with arena.lock:
        count = arena.word(BAR_COUNT) + 1
        last = count == nranks
        if last:
            arena.set_word(BAR_COUNT, 0)
            arena.set_word(BAR_SENSE, sense)
        else:
            arena.set_word(BAR_COUNT, count)
    if last:
        arena.ring()
    else:
        win.spin_until(lambda: arena.word(BAR_SENSE) == sense, "node_barrier")
    memory_fence(win)


def _children_at(win: SharedWindow, slot_of, epoch: int) -> bool:
    arena = win._arena
    return all(arena.word(slot_of(i)) == epoch for i in range(1, arena.nranks))


def leader_signal(cell: SpinCell, win: SharedWindow) -> None:
    """Publish the leader's preceding arena writes as the next epoch."""
    if not win.is_leader:
        raise UsageError("leader_signal called by a non-leader")
    arena = win._arena
    status = arena.word(STATUS)
    # equality exit needs every child to have consumed the current epoch
    if arena.nranks > 1 and not _children_at(win, arena.ref_slot, status):
        win.spin_until(lambda: _children_at(win, arena.ref_slot, status), "leader_signal:gate")
    with arena.lock:
        arena.set_word(STATUS, status + 1)
    arena.ring()


def child_wait(cell: SpinCell, win: SharedWindow) -> None:
    """Spin until the leader's epoch equals this child's next expected epoch."""
    if win.is_leader:
        raise UsageError("child_wait called by the leader")
    arena = win._arena
    cell.ref += 1
    ref = cell.ref
    win.spin_until(lambda: arena.word(STATUS) == ref, "child_wait")
    arena.set_word(arena.ref_slot(win.local_rank), ref)
    arena.ring()


def child_arrive(cell: SpinCell, win: SharedWindow) -> None:
    """Announce that this rank is done with every earlier epoch's data."""
    arena = win._arena
    epoch = arena.word(STATUS) if win.is_leader else cell.ref
    arena.set_word(arena.arrive_slot(win.local_rank), epoch)
    arena.ring()


def await_arrivals(cell: SpinCell, win: SharedWindow) -> None:
    """Block until every on-node rank has called :func:`child_arrive` for
    the current epoch, i.e. nobody still reads the previous result."""
    arena = win._arena
    if arena.nranks == 1:
        return
    status = arena.word(STATUS)

    def arrived():
        return all(arena.word(arena.arrive_slot(i)) == status for i in range(arena.nranks))

    win.spin_until(arrived, "await_arrivals")


def root_post(win: SharedWindow) -> None:
    """Child root -> leader edge: the root's payload is in the arena."""
    arena = win._arena
    memory_fence(win)
    with arena.lock:
        arena.set_word(ROOT_STATUS, arena.word(ROOT_STATUS) + 1)
    arena.ring()


def root_wait(win: SharedWindow) -> None:
    if not win.is_leader:
        raise UsageError("root_wait called by a non-leader")
    arena = win._arena
    win._root_ref += 1
    ref = win._root_ref
    win.spin_until(lambda: arena.word(ROOT_STATUS) == ref, "root_wait")
