from dataclasses import dataclass, field

from ..transport import Counters


@dataclass
class KernelStats:
    mode: str
    total_s: float = 0.0
    comm_s: float = 0.0
    compute_s: float = 0.0
    phases: int = 0
    counters: Counters = field(default_factory=Counters)
    # per-phase (comm_s, compute_s), max over ranks
    phase_times: list = field(default_factory=list)
    history: list = field(default_factory=list)
    solution: object = None


def merge_rank_stats(mode: str, per_rank: list) -> KernelStats:
    """Max of times over ranks, sum of sent-message counters."""
    stats = KernelStats(mode)
    stats.total_s = max(r["total_s"] for r in per_rank)
    stats.comm_s = max(r["comm_s"] for r in per_rank)
    stats.compute_s = max(r["compute_s"] for r in per_rank)
    stats.phases = per_rank[0]["phases"]
    for r in per_rank:
        stats.counters = stats.counters + r["counters"]
    stats.phase_times = [
        (max(r["phase_times"][k][0] for r in per_rank), max(r["phase_times"][k][1] for r in per_rank))
        for k in range(len(per_rank[0]["phase_times"]))
    ]
    stats.history = list(per_rank[0].get("history", []))
    return stats


@dataclass
class KernelRecord:
    """One kernel run, flattened for CSV/JSON output."""

    kernel: str
    mode: str
    nodes: int
    ppn: str
    placement: str
    n: int
    grid: str
    seed: int
    phases: int
    error: float
    total_us: float
    comm_us: float
    compute_us: float
    intra_msgs: int
    intra_bytes: int
    inter_msgs: int
    inter_bytes: int
