"""SUMMA dense matrix multiply on a 2D process grid.

A and B are n x n doubles drawn from numpy's PCG64 generator
(``np.random.default_rng(seed)``), A first, then B, each uniform in
[-1, 1). Rank ``r`` sits at grid position ``divmod(r, grid_c)`` and owns
one block of A, B and C. Phase ``k`` broadcasts an A panel along the
process row and a B panel along the process column, then every rank
accumulates the panel product into its C block.
"""
from __future__ import annotations

import math
import time
from dataclasses import dataclass

import numpy as np

from ..collectives import hy_bcast
from ..errors import ConfigurationError
from ..runtime import launch
from ..shm import allocate_shared, free_window
from ..topology import RankLayout, build_transtables, comm_split, split_shmem_bridge
from ..transport import comm_bcast
from .stats import merge_rank_stats


@dataclass(frozen=True)
class SummaConfig:
    n: int
    grid_r: int
    grid_c: int
    mode: str = "hybrid"
    seed: int = 0

    def __post_init__(self):
        if self.n < 1 or self.grid_r < 1 or self.grid_c < 1:
            raise ConfigurationError("n and grid dimensions must be >= 1")
        if self.n % self.grid_r or self.n % self.grid_c:
            raise ConfigurationError(
                f"n={self.n} not divisible by grid {self.grid_r}x{self.grid_c}")
        if self.mode not in ("hybrid", "flat"):
            raise ConfigurationError(f"unknown mode {self.mode!r}")

    @property
    def block_shape(self) -> tuple:
        return self.n // self.grid_r, self.n // self.grid_c

    @property
    def panel_width(self) -> int:
        # one phase per grid column when the grid is square
        return math.gcd(*self.block_shape)


def summa_matrices(cfg: SummaConfig):
    rng = np.random.default_rng(cfg.seed)
    a = rng.uniform(-1.0, 1.0, size=(cfg.n, cfg.n))
    b = rng.uniform(-1.0, 1.0, size=(cfg.n, cfg.n))
    return a, b


class _Panels:
    """Moves one panel per phase along a row or column communicator."""

    def __init__(self, comm, layout, shape, hybrid):
        self.comm = comm
        self.shape = shape
        self.hybrid = hybrid
        self.count = shape[0] * shape[1]
        if hybrid:
            self.pkg = split_shmem_bridge(comm, layout)
            self.win = allocate_shared(self.count, 8, 1, self.pkg)
            self.tables = build_transtables(comm, self.pkg)

    def bcast(self, root, panel):
        if self.hybrid:
            payload = panel if self.comm.my_index == root else None
            region = hy_bcast(self.win, root, self.count, self.tables, self.pkg, payload=payload)
            return region.view(np.float64).reshape(self.shape).copy()
        buf = panel.copy() if self.comm.my_index == root else np.empty(self.shape)
        return comm_bcast(self.comm, root, buf)

    def close(self):
        if self.hybrid:
            free_window(self.win)


def _rank_body(ctx, cfg: SummaConfig, a, b):
    bm, bn = cfg.block_shape
    w = cfg.panel_width
    i, j = divmod(ctx.rank, cfg.grid_c)
    a_blk = a[i * bm:(i + 1) * bm, j * bn:(j + 1) * bn]
    b_blk = b[i * bm:(i + 1) * bm, j * bn:(j + 1) * bn]
    row = comm_split(ctx.world, i, j)
    col = comm_split(ctx.world, j, i)
    hybrid = cfg.mode == "hybrid"
    rows = _Panels(row, ctx.layout, (bm, w), hybrid)
    cols = _Panels(col, ctx.layout, (w, bn), hybrid)
    c_blk = np.zeros((bm, bn))

    phase_times = []
    ctx.harness_barrier()
    c0 = ctx.counters()
    start = time.perf_counter()
    for k in range(cfg.n // w):
        t0 = time.perf_counter()
        a_owner, a_off = divmod(k * w, bn)
        b_owner, b_off = divmod(k * w, bm)
        a_panel = np.ascontiguousarray(a_blk[:, a_off:a_off + w]) if j == a_owner else None
        b_panel = np.ascontiguousarray(b_blk[b_off:b_off + w, :]) if i == b_owner else None
        ap = rows.bcast(a_owner, a_panel)
        bp = cols.bcast(b_owner, b_panel)
        t1 = time.perf_counter()
        c_blk += ap @ bp
        phase_times.append((t1 - t0, time.perf_counter() - t1))
    total = time.perf_counter() - start
    delta = ctx.counters() - c0
    ctx.harness_barrier()
    rows.close()
    cols.close()
    return {
        "pos": (i, j),
        "C": c_blk,
        "total_s": total,
        "comm_s": sum(p[0] for p in phase_times),
        "compute_s": sum(p[1] for p in phase_times),
        "phases": len(phase_times),
        "phase_times": phase_times,
        "counters": delta,
    }


def summa_run(cfg: SummaConfig, layout: RankLayout = None, *, a=None, b=None,
              watchdog_secs: float = 30.0, latency_us: float = 0.0):
    """Multiply A and B (seeded random unless given).

    Returns ``(blocks, stats)`` where ``blocks[(i, j)]`` is grid position
    ``(i, j)``'s block of C.
    """
    layout = layout or RankLayout((cfg.grid_r * cfg.grid_c,))
    if layout.world_size != cfg.grid_r * cfg.grid_c:
        raise ConfigurationError(
            f"grid {cfg.grid_r}x{cfg.grid_c} needs {cfg.grid_r * cfg.grid_c} ranks, "
            f"layout has {layout.world_size}")
    if a is None or b is None:
        ra, rb = summa_matrices(cfg)
        a = ra if a is None else a
        b = rb if b is None else b
    a = np.asarray(a, dtype=np.float64)
    b = np.asarray(b, dtype=np.float64)
    if a.shape != (cfg.n, cfg.n) or b.shape != (cfg.n, cfg.n):
        raise ConfigurationError(f"A and B must be {cfg.n}x{cfg.n}")
    res = launch(layout, _rank_body, args=(cfg, a, b), watchdog_secs=watchdog_secs,
                 latency_us=latency_us)
    blocks = {r["pos"]: r["C"] for r in res.results}
    return blocks, merge_rank_stats(cfg.mode, res.results)


def assemble(blocks: dict, cfg: SummaConfig) -> np.ndarray:
    return np.block([[blocks[(i, j)] for j in range(cfg.grid_c)] for i in range(cfg.grid_r)])
