"""Instrumented in-process message passing plus reference collectives.

Every rank owns one :class:`Endpoint`. Messages are matched by
``(source, tag)`` and delivered FIFO per matching key. Sent bytes are
counted per sender and classified intra-node or inter-node from the world
layout, so callers can prove which collectives touch the network at all.

The collectives operate over any :class:`~hycoll.topology.CommHandle`:

* barrier: dissemination
* bcast: binomial tree
* allgatherv: ring
* reduce: gather to root, fold in ascending member order
* allreduce: reduce to member 0, then bcast
"""
from __future__ import annotations

import threading
import time
from collections import deque
from dataclasses import astuple, dataclass

import numpy as np

from ._monitor import Monitor
from .errors import UsageError
from .ops import ReduceOp
from .topology import CommHandle, RankLayout


@dataclass(frozen=True)
class Counters:
    intra_msgs: int = 0
    intra_bytes: int = 0
    inter_msgs: int = 0
    inter_bytes: int = 0

    def __add__(self, other):
        return Counters(*(a + b for a, b in zip(astuple(self), astuple(other))))

    def __sub__(self, other):
        return Counters(*(a - b for a, b in zip(astuple(self), astuple(other))))

    @property
    def total_msgs(self) -> int:
        return self.intra_msgs + self.inter_msgs

    @property
    def total_bytes(self) -> int:
        return self.intra_bytes + self.inter_bytes


class TransportCounters:
    """Monotonic per-sender message and byte counters."""

    def __init__(self, layout: RankLayout):
        self.layout = layout
        self._lock = threading.Lock()
        # rows: sender rank; cols: intra_msgs, intra_bytes, inter_msgs, inter_bytes
        self._rows = [[0, 0, 0, 0] for _ in range(layout.world_size)]

    def record(self, src: int, dst: int, nbytes: int) -> None:
        col = 0 if self.layout.same_node(src, dst) else 2
        with self._lock:
            row = self._rows[src]
            row[col] += 1
            row[col + 1] += nbytes

    def snapshot(self, rank=None) -> Counters:
        with self._lock:
            if rank is not None:
                return Counters(*self._rows[rank])
            return Counters(*(sum(col) for col in zip(*self._rows)))


def _payload_bytes(payload) -> bytes:
    if isinstance(payload, np.ndarray):
        return np.ascontiguousarray(payload).tobytes()
    return bytes(payload)


class Transport:
    """Mailboxes of one job. Thread-safe."""

    def __init__(self, layout: RankLayout, latency_us: float = 0.0, monitor: Monitor = None):
        self.layout = layout
        self.latency = max(0.0, float(latency_us or 0.0)) * 1e-6
        self.monitor = monitor or Monitor(layout.world_size)
        self.counters = TransportCounters(layout)
        n = layout.world_size
        self._boxes = [dict() for _ in range(n)]
        self._conds = [threading.Condition() for _ in range(n)]

    def endpoint(self, rank: int) -> "Endpoint":
        self._check_rank(rank)
        return Endpoint(self, rank)

    def _check_rank(self, rank) -> None:
        if not isinstance(rank, (int, np.integer)) or not 0 <= rank < self.layout.world_size:
            raise UsageError(f"unknown rank {rank!r}")

    def _deliver(self, src: int, dst: int, tag, data: bytes) -> None:
        self._check_rank(dst)
        ready = 0.0
        if self.latency and not self.layout.same_node(src, dst):
            ready = time.monotonic() + self.latency
        self.counters.record(src, dst, len(data))
        cond = self._conds[dst]
        with cond:
            self._boxes[dst].setdefault((src, tag), deque()).append((ready, data))
            cond.notify_all()

    def _take(self, dst: int, src: int, tag) -> bytes:
        self._check_rank(src)
        mon = self.monitor
        cond = self._conds[dst]
        box = self._boxes[dst]
        key = (src, tag)
        with mon.blocking(dst, ("recv", src, tag)):
            with cond:
                while True:
                    q = box.get(key)
                    timeout = 0.05
                    if q:
                        ready, data = q[0]
                        delay = ready - time.monotonic() if ready else 0.0
                        if delay <= 0:
                            q.popleft()
                            return data
                        timeout = min(timeout, delay)
                    mon.check()
                    cond.wait(timeout)


class Endpoint:
    """Blocking, reliable send/recv for one rank."""

    def __init__(self, transport: Transport, rank: int):
        self.transport = transport
        self.rank = rank

    def send(self, dst: int, tag, payload) -> None:
        self.transport._deliver(self.rank, dst, tag, _payload_bytes(payload))

    def recv(self, src: int, tag) -> bytes:
        return self.transport._take(self.rank, src, tag)

    def counters(self) -> Counters:
        return self.transport.counters.snapshot(self.rank)


# -- collectives ------------------------------------------------------------

def _endpoint(comm: CommHandle) -> Endpoint:
    if comm.ctx is None:
        raise UsageError("communicator is not attached to a running job")
    return comm.ctx.endpoint


def _byte_view(buf: np.ndarray) -> np.ndarray:
    if not isinstance(buf, np.ndarray) or not buf.flags.c_contiguous:
        raise UsageError("buffers must be C-contiguous numpy arrays")
    return buf.reshape(-1).view(np.uint8)


def comm_barrier(comm: CommHandle) -> None:
    n = comm.size
    if n == 1:
        return
    ep = _endpoint(comm)
    me = comm.my_index
    dist = 1
    while dist < n:
        tag = (comm.context, "barrier", dist)
        ep.send(comm.members[(me + dist) % n], tag, b"")
        ep.recv(comm.members[(me - dist) % n], tag)
        dist <<= 1


def comm_bcast(comm: CommHandle, root: int, buffer: np.ndarray) -> np.ndarray:
    """Binomial-tree broadcast of ``buffer`` (in place) from member ``root``."""
    n = comm.size
    if not 0 <= root < n:
        raise UsageError(f"bcast root {root} outside communicator of {n}")
    raw = _byte_view(buffer)
    if n == 1:
        return buffer
    ep = _endpoint(comm)
    tag = (comm.context, "bcast")
    rel = (comm.my_index - root) % n
    mask = 1
    while mask < n:
        if rel & mask:
            data = ep.recv(comm.members[(rel - mask + root) % n], tag)
            if len(data) != raw.size:
                raise UsageError(f"bcast size mismatch: got {len(data)} bytes, expected {raw.size}")
            raw[:] = np.frombuffer(data, dtype=np.uint8)
            break
        mask <<= 1
    mask >>= 1
    while mask > 0:
        if rel + mask < n:
            ep.send(comm.members[(rel + mask + root) % n], tag, raw)
        mask >>= 1
    return buffer


def comm_allgatherv(comm: CommHandle, send: np.ndarray, recvcounts, displs,
                    recv: np.ndarray) -> np.ndarray:
    """Ring allgatherv; counts and displacements are in elements of ``recv``."""
    n = comm.size
    recvcounts = [int(c) for c in recvcounts]
    displs = [int(d) for d in displs]
    if len(recvcounts) != n or len(displs) != n:
        raise UsageError(f"need {n} counts/displacements, got {len(recvcounts)}/{len(displs)}")
    me = comm.my_index
    if not recv.flags.c_contiguous:
        raise UsageError("recv buffer must be C-contiguous")
    flat = recv.reshape(-1)
    send = np.asarray(send).reshape(-1)
    if send.size != recvcounts[me]:
        raise UsageError(f"send has {send.size} elements, recvcounts[{me}] = {recvcounts[me]}")
    for c, d in zip(recvcounts, displs):
        if c < 0 or d < 0 or d + c > flat.size:
            raise UsageError(f"block [{d}, {d + c}) outside recv buffer of {flat.size}")

    def block(i):
        return flat[displs[i]:displs[i] + recvcounts[i]]

    # numpy handles the in-place case where send aliases its own block
    block(me)[:] = send
    if n == 1:
        return recv
    ep = _endpoint(comm)
    tag = (comm.context, "allgatherv")
    right = comm.members[(me + 1) % n]
    left = comm.members[(me - 1) % n]
    for step in range(n - 1):
        ep.send(right, tag, block((me - step) % n))
        incoming = (me - step - 1) % n
        data = ep.recv(left, tag)
        dst = block(incoming)
        if len(data) != dst.nbytes:
            raise UsageError(f"allgatherv block {incoming}: got {len(data)} bytes, expected {dst.nbytes}")
        dst[:] = np.frombuffer(data, dtype=flat.dtype)
    return recv


def comm_allgather(comm: CommHandle, send: np.ndarray) -> np.ndarray:
    send = np.ascontiguousarray(send).reshape(-1)
    m = send.size
    recv = np.empty(m * comm.size, dtype=send.dtype)
    return comm_allgatherv(comm, send, [m] * comm.size, [i * m for i in range(comm.size)], recv)


def comm_reduce(comm: CommHandle, root: int, elements: np.ndarray, op: ReduceOp):
    """Fold every member's ``elements`` onto ``root`` in ascending member order.

    Returns the folded array on the root and None elsewhere.
    """
    n = comm.size
    if not 0 <= root < n:
        raise UsageError(f"reduce root {root} outside communicator of {n}")
    elements = np.ascontiguousarray(elements)
    op.check(elements)
    me = comm.my_index
    if me != root:
        _endpoint(comm).send(comm.members[root], (comm.context, "reduce"), elements)
        return None
    ep = _endpoint(comm) if n > 1 else None
    acc = None
    for i in range(n):
        if i == me:
            part = elements
        else:
            data = ep.recv(comm.members[i], (comm.context, "reduce"))
            if len(data) != elements.nbytes:
                raise UsageError(f"reduce: member {i} sent {len(data)} bytes, expected {elements.nbytes}")
            part = np.frombuffer(data, dtype=elements.dtype).reshape(elements.shape)
        acc = part.copy() if acc is None else op.fold(acc, part)
    return acc


def comm_allreduce(comm: CommHandle, elements: np.ndarray, op: ReduceOp) -> np.ndarray:
    elements = np.ascontiguousarray(elements)
    out = comm_reduce(comm, 0, elements, op)
    if out is None:
        out = np.empty_like(elements)
    return comm_bcast(comm, 0, out)
