"""Cluster layout, two-level communicator splitting and rank translation tables."""
from __future__ import annotations

import enum
from dataclasses import dataclass, field
from functools import cached_property
from typing import Optional

import numpy as np

from .errors import ConfigurationError, UsageError


class Placement(str, enum.Enum):
    BLOCK = "block"
    ROUND_ROBIN = "rr"

    @classmethod
    def parse(cls, value) -> "Placement":
        if isinstance(value, Placement):
            return value
        v = str(value).lower()
        if v in ("block",):
            return cls.BLOCK
        if v in ("rr", "roundrobin", "round_robin", "round-robin"):
            return cls.ROUND_ROBIN
        raise ConfigurationError(f"unknown placement {value!r}")


@dataclass(frozen=True)
class RankLayout:
    """Ranks grouped into simulated nodes.

    ``node_sizes[i]`` is the number of ranks hosted by node ``i``; sizes may
    differ between nodes.
    """

    node_sizes: tuple
    placement: Placement = Placement.BLOCK
    world_size: Optional[int] = None

    def __post_init__(self):
        sizes = tuple(int(s) for s in self.node_sizes)
        if not sizes:
            raise ConfigurationError("layout needs at least one node")
        if any(s < 1 for s in sizes):
            raise ConfigurationError(f"every node needs >= 1 rank, got {sizes}")
        total = sum(sizes)
        if self.world_size is not None and int(self.world_size) != total:
            raise ConfigurationError(
                f"world_size {self.world_size} != sum(node_sizes) {total}")
        object.__setattr__(self, "node_sizes", sizes)
        object.__setattr__(self, "placement", Placement.parse(self.placement))
        object.__setattr__(self, "world_size", total)

    @classmethod
    def uniform(cls, nodes: int, ppn: int, placement=Placement.BLOCK) -> "RankLayout":
        return cls((ppn,) * nodes, placement)

    @property
    def n_nodes(self) -> int:
        return len(self.node_sizes)

    @cached_property
    def _node_of(self) -> tuple:
        owner = []
        if self.placement is Placement.BLOCK:
            for node, size in enumerate(self.node_sizes):
                owner.extend([node] * size)
        else:
            # deal cyclically, skipping nodes that are already full
            fill = [0] * self.n_nodes
            node = 0
            for _ in range(self.world_size):
                while fill[node] == self.node_sizes[node]:
                    node = (node + 1) % self.n_nodes
                owner.append(node)
                fill[node] += 1
                node = (node + 1) % self.n_nodes
        return tuple(owner)

    def node_of(self, rank: int) -> int:
        if not 0 <= rank < self.world_size:
            raise ConfigurationError(f"rank {rank} outside world of {self.world_size}")
        return self._node_of[rank]

    def ranks_on(self, node: int) -> list:
        return [r for r, n in enumerate(self._node_of) if n == node]

    def same_node(self, a: int, b: int) -> bool:
        return self._node_of[a] == self._node_of[b]


@dataclass(frozen=True)
class CommHandle:
    """An ordered group of world ranks seen from one member.

    ``context`` identifies the communicator; every member of the same
    communicator holds an equal context and member list.
    """

    context: tuple
    members: tuple
    my_index: int
    ctx: object = field(default=None, compare=False, repr=False)

    def __post_init__(self):
        members = tuple(int(m) for m in self.members)
        if len(set(members)) != len(members):
            raise UsageError(f"duplicate members in communicator: {members}")
        if not 0 <= self.my_index < len(members):
            raise UsageError(f"my_index {self.my_index} outside communicator of {len(members)}")
        object.__setattr__(self, "members", members)

    @property
    def size(self) -> int:
        return len(self.members)

    @property
    def rank(self) -> int:
        return self.my_index

    @property
    def me(self) -> int:
        """World rank of the holder."""
        return self.members[self.my_index]

    def index_of(self, world_rank: int) -> int:
        return self.members.index(world_rank)


@dataclass(frozen=True)
class CommPackage:
    parent: CommHandle
    shmem_comm: CommHandle
    bridge_comm: Optional[CommHandle]
    shmemcomm_size: int
    bridgecomm_size: int
    # index of this rank's node inside bridge_comm
    node_index: int
    layout: RankLayout

    @property
    def is_leader(self) -> bool:
        return self.shmem_comm.my_index == 0

    @property
    def shmem_rank(self) -> int:
        return self.shmem_comm.my_index

    @property
    def node_id(self) -> int:
        return self.layout.node_of(self.shmem_comm.me)


@dataclass(frozen=True)
class TransTables:
    # both indexed by parent-communicator rank
    shmem_transtable: tuple
    bridge_transtable: tuple


def _next_seq(comm: CommHandle, kind: str) -> int:
    if comm.ctx is None:
        return 0
    return comm.ctx.next_seq((kind, comm.context))


def _node_groups(parent: CommHandle, layout: RankLayout) -> list:
    """Parent indices grouped per node, groups ordered by node index."""
    if layout.world_size <= max(parent.members):
        raise ConfigurationError(
            f"layout of {layout.world_size} ranks does not cover communicator {parent.members}")
    groups = {}
    for idx, world_rank in enumerate(parent.members):
        groups.setdefault(layout.node_of(world_rank), []).append(idx)
    # nodes contributing no rank to the parent are simply absent
    return [(node, groups[node]) for node in sorted(groups)]


def split_shmem_bridge(parent: CommHandle, layout: RankLayout) -> CommPackage:
    """Two-level split of ``parent`` into per-node and leader communicators."""
    if parent.ctx is not None and parent.ctx.layout is not layout and parent.ctx.layout != layout:
        raise ConfigurationError("layout differs from the job layout")
    seq = _next_seq(parent, "split_shmem_bridge")
    groups = _node_groups(parent, layout)
    leaders = tuple(parent.members[g[0]] for _, g in groups)
    for node_index, (node, group) in enumerate(groups):
        if parent.my_index in group:
            break
    shmem = CommHandle(
        parent.context + (("shm", seq, node),),
        tuple(parent.members[i] for i in group),
        group.index(parent.my_index),
        parent.ctx,
    )
    bridge = None
    if shmem.my_index == 0:
        bridge = CommHandle(parent.context + (("bridge", seq),), leaders, node_index, parent.ctx)
    return CommPackage(
        parent=parent,
        shmem_comm=shmem,
        bridge_comm=bridge,
        shmemcomm_size=len(group),
        bridgecomm_size=len(groups),
        node_index=node_index,
        layout=layout,
    )


def build_transtables(parent: CommHandle, pkg: CommPackage) -> TransTables:
    if pkg.parent.members != parent.members:
        raise UsageError("package was not derived from this communicator")
    shmem_t = [0] * parent.size
    bridge_t = [0] * parent.size
    for node_index, (_, group) in enumerate(_node_groups(parent, pkg.layout)):
        for local, idx in enumerate(group):
            shmem_t[idx] = local
            bridge_t[idx] = node_index
    return TransTables(tuple(shmem_t), tuple(bridge_t))


def gather_shmem_sizes(pkg: CommPackage) -> list:
    """Sizes of every node's shared-memory communicator, on leaders only."""
    if pkg.bridge_comm is None:
        return []
    from .transport import comm_allgather

    mine = np.array([pkg.shmemcomm_size], dtype=np.int64)
    return [int(s) for s in comm_allgather(pkg.bridge_comm, mine)]


def comm_split(parent: CommHandle, color, key: int = 0) -> Optional[CommHandle]:
    """MPI_Comm_split analogue; ``color=None`` opts out and returns None."""
    from .transport import comm_allgather

    seq = _next_seq(parent, "comm_split")
    c = -1 if color is None else int(color)
    if c < -1:
        raise UsageError("color must be >= 0 or None")
    pairs = comm_allgather(parent, np.array([c, int(key)], dtype=np.int64)).reshape(-1, 2)
    if color is None:
        return None
    chosen = sorted(
        (int(k), idx) for idx, (col, k) in enumerate(pairs) if col == c)
    members = tuple(parent.members[idx] for _, idx in chosen)
    my_index = [idx for _, idx in chosen].index(parent.my_index)
    return CommHandle(parent.context + (("split", seq, c),), members, my_index, parent.ctx)


def member_groups(parent: CommHandle, layout: RankLayout) -> list:
    """World ranks of each node's share of ``parent``, ordered by node."""
    return [[parent.members[i] for i in g] for _, g in _node_groups(parent, layout)]


def world_handle(layout: RankLayout, rank: int, ctx=None) -> CommHandle:
    return CommHandle(("world",), tuple(range(layout.world_size)), rank, ctx)

