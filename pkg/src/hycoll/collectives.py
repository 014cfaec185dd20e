"""Hybrid allgather, broadcast and allreduce over per-node shared arenas.

Each node keeps a single copy of the collective buffer in its shared
arena. Only leaders talk across nodes, over the bridge communicator;
children read results straight from the arena after a yellow sync.
"""
from __future__ import annotations

from dataclasses import dataclass
from functools import lru_cache

import numpy as np

from .errors import UnsupportedConfigurationError, UsageError
from .nodesync import (await_arrivals, child_arrive, child_wait, leader_signal,
                       node_barrier, root_post, root_wait)
from .ops import ReduceOp
from .shm import AffinityView, SharedWindow, local_view
from .topology import CommPackage, Placement, RankLayout, TransTables, member_groups
from .transport import comm_allgatherv, comm_allreduce, comm_bcast, comm_reduce

ALLREDUCE_CUTOFF_BYTES = 2048


@dataclass(frozen=True)
class AllgatherParam:
    """Per-node byte counts and displacements for the leaders' allgatherv."""

    recvcounts: tuple = ()
    displs: tuple = ()

    @property
    def total_bytes(self) -> int:
        return sum(self.recvcounts)


def create_allgather_param(msg: int, elem_bytes: int, pkg: CommPackage, sizes) -> AllgatherParam:
    if not pkg.is_leader:
        return AllgatherParam()
    sizes = [int(s) for s in sizes]
    if len(sizes) != pkg.bridgecomm_size:
        raise UsageError(f"{len(sizes)} node sizes for a bridge of {pkg.bridgecomm_size} nodes")
    if msg < 0 or elem_bytes < 1 or any(s < 1 for s in sizes):
        raise UsageError("message size, element size and node sizes must be positive")
    counts = [msg * elem_bytes * s for s in sizes]
    displs = [0] * len(counts)
    for i in range(1, len(counts)):
        displs[i] = displs[i - 1] + counts[i - 1]
    return AllgatherParam(tuple(counts), tuple(displs))


@lru_cache(maxsize=256)
def _contiguous_blocks(members: tuple, layout: RankLayout) -> bool:
    from .topology import CommHandle

    groups = member_groups(CommHandle(("probe",), members, 0), layout)
    flat = [r for g in groups for r in g]
    return flat == list(members)


def hy_allgather(win: SharedWindow, my_view: AffinityView, msg: int,
                 param: AllgatherParam, pkg: CommPackage) -> np.ndarray:
    """Gather every rank's view into its node's single shared copy.

    Each rank writes its ``msg`` elements into ``my_view`` beforehand; on
    return the arena holds all contributions in parent-rank order.
    """
    if pkg.layout.placement is not Placement.BLOCK or not _contiguous_blocks(
            pkg.parent.members, pkg.layout):
        raise UnsupportedConfigurationError(
            "hy_allgather needs block placement (node blocks contiguous in rank order)")
    if my_view.window is not win:
        raise UsageError("view does not belong to this window")
    if msg * win.element_size != my_view.length_bytes:
        raise UsageError(f"{msg} elements do not fill a {my_view.length_bytes}-byte view")
    if pkg.is_leader and (len(param.recvcounts) != pkg.bridgecomm_size
                          or param.total_bytes > win.payload_bytes):
        raise UsageError("allgather parameters do not match the window/bridge")
    cell = win.cell
    child_arrive(cell, win)
    node_barrier(win, pkg)
    if pkg.is_leader:
        if pkg.bridgecomm_size > 1:
            me = pkg.node_index
            lo = param.displs[me]
            block = win.base[lo:lo + param.recvcounts[me]]
            comm_allgatherv(pkg.bridge_comm, block, param.recvcounts, param.displs, win.base)
        leader_signal(cell, win)
    else:
        child_wait(cell, win)
    return win.base


def hy_bcast(win: SharedWindow, root: int, msg: int, tables: TransTables,
             pkg: CommPackage, payload=None) -> np.ndarray:
    """Broadcast ``msg`` elements from parent rank ``root`` into every node's arena.

    The root either writes the arena region ``[0, msg)`` before the call or
    passes ``payload``. Only the ``payload`` write waits until no on-node
    rank still reads the previous broadcast; a pre-written region is safe on
    first use or after a node barrier. Returns the arena region.
    """
    n = pkg.parent.size
    if not 0 <= root < n:
        raise UsageError(f"bcast root {root} outside communicator of {n}")
    if len(tables.bridge_transtable) != n or len(tables.shmem_transtable) != n:
        raise UsageError("translation tables do not match the communicator")
    nbytes = msg * win.element_size
    if nbytes > win.payload_bytes:
        raise UsageError(f"{nbytes}-byte bcast exceeds a {win.payload_bytes}-byte window")
    region = win.base[:nbytes]
    cell = win.cell
    is_root = pkg.parent.my_index == root
    root_node = tables.bridge_transtable[root]

    child_arrive(cell, win)
    if is_root and payload is not None:
        data = np.ascontiguousarray(payload).reshape(-1).view(np.uint8)
        if data.size != nbytes:
            raise UsageError(f"payload of {data.size} bytes for a {nbytes}-byte bcast")
        await_arrivals(cell, win)
        region[:] = data
    if pkg.is_leader:
        if pkg.node_index == root_node:
            if tables.shmem_transtable[root] != 0:
                root_wait(win)
        else:
            await_arrivals(cell, win)
        if pkg.bridgecomm_size > 1:
            comm_bcast(pkg.bridge_comm, root_node, region)
        leader_signal(cell, win)
    else:
        if is_root:
            root_post(win)
        child_wait(cell, win)
    return region


@dataclass(frozen=True)
class MethodPolicy:
    """How hy_allreduce reduces inside a node.

    ``force1`` reduces with messages to the leader, ``force2`` lets the
    leader fold the shared slices after a barrier, ``auto`` picks method 2
    up to ``cutoff_bytes`` inclusive and method 1 above.
    """

    mode: str = "auto"
    cutoff_bytes: int = ALLREDUCE_CUTOFF_BYTES

    def __post_init__(self):
        aliases = {"auto": "auto", "m1": "force1", "force1": "force1", "1": "force1",
                   "m2": "force2", "force2": "force2", "2": "force2"}
        mode = aliases.get(str(self.mode).lower())
        if mode is None:
            raise UsageError(f"unknown method policy {self.mode!r}")
        object.__setattr__(self, "mode", mode)


AUTO = MethodPolicy("auto")
FORCE1 = MethodPolicy("force1")
FORCE2 = MethodPolicy("force2")


def select_method(payload_bytes: int, policy: MethodPolicy = AUTO) -> int:
    if not isinstance(policy, MethodPolicy):
        policy = MethodPolicy(policy)
    if policy.mode == "force1":
        return 1
    if policy.mode == "force2":
        return 2
    return 2 if payload_bytes <= policy.cutoff_bytes else 1


@dataclass(frozen=True)
class AllreduceOut:
    slot_local: AffinityView
    slot_global: AffinityView


def allreduce_views(win: SharedWindow, msize: int, dtype, pkg: CommPackage):
    """This rank's input slice and the two output slots of an allreduce window.

    The window must hold ``msize * (shmemcomm_size + 2)`` elements, laid out
    as ``[input slice per local rank | slot_local | slot_global]``.
    """
    nbytes = msize * np.dtype(dtype).itemsize
    p = pkg.shmemcomm_size
    in_view = local_view(win, pkg.shmem_rank, nbytes)
    out = AllreduceOut(local_view(win, p, nbytes), local_view(win, p + 1, nbytes))
    return in_view, out


def hy_allreduce(in_view: AffinityView, out: AllreduceOut, msize: int, op: ReduceOp,
                 pkg: CommPackage, win: SharedWindow, policy: MethodPolicy = AUTO) -> np.ndarray:
    """Two-step allreduce; every rank reads the result from ``out.slot_global``."""
    dtype = op.dtype
    nbytes = msize * dtype.itemsize
    p = pkg.shmemcomm_size
    if in_view.window is not win or in_view.offset_bytes != pkg.shmem_rank * nbytes \
            or in_view.length_bytes != nbytes:
        raise UsageError("input view is not this rank's slice of the allreduce window")
    if out.slot_local.length_bytes != nbytes or out.slot_global.length_bytes != nbytes \
            or out.slot_local.offset_bytes < p * nbytes:
        raise UsageError("output slots do not match the allreduce window layout")
    method = select_method(nbytes, policy)
    cell = win.cell
    child_arrive(cell, win)
    local = out.slot_local.array(dtype)
    if method == 1:
        folded = comm_reduce(pkg.shmem_comm, 0, in_view.array(dtype), op)
        if pkg.is_leader:
            local[:] = folded
    else:
        node_barrier(win, pkg)
        if pkg.is_leader:
            base = win.base
            local[:] = base[:nbytes].view(dtype)
            for i in range(1, p):
                op.fold(local, base[i * nbytes:(i + 1) * nbytes].view(dtype))
    result = out.slot_global.array(dtype)
    if pkg.is_leader:
        if pkg.bridgecomm_size > 1:
            result[:] = comm_allreduce(pkg.bridge_comm, local, op)
        else:
            result[:] = local
        leader_signal(cell, win)
    else:
        child_wait(cell, win)
    return result
