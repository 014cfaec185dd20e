"""hycoll: two-level (leader + shared arena) collective communication on simulated nodes."""
from .collectives import (AUTO, FORCE1, FORCE2, AllgatherParam, AllreduceOut, MethodPolicy,
                          allreduce_views, create_allgather_param, hy_allgather, hy_allreduce,
                          hy_bcast, select_method)
from .errors import (BoundsError, Cancelled, ConfigurationError, DeadlockError, HycollError,
                     JobError, RankFailure, ResourceError, UnsupportedConfigurationError,
                     UsageError)
from .nodesync import SpinCell, child_wait, leader_signal, node_barrier
from .ops import MAX, MIN, PROD, SUM, ReduceOp
from .runtime import JobResult, RankContext, launch
from .shm import AffinityView, SharedWindow, allocate_shared, free_window, local_view, memory_fence
from .topology import (CommHandle, CommPackage, Placement, RankLayout, TransTables,
                       build_transtables, comm_split, gather_shmem_sizes, split_shmem_bridge)
from .transport import (Counters, comm_allgather, comm_allgatherv, comm_allreduce, comm_barrier,
                        comm_bcast, comm_reduce)

__version__ = "0.1.0"
