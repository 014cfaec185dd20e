"""Quick self-checks behind ``hycoll selftest``.

A reduced oracle sweep of the three hybrid collectives and a yellow-sync
stress run. The full versions live in the test suite.
"""
from __future__ import annotations

import math
import sys
import time

import numpy as np

from .collectives import (FORCE1, FORCE2, AUTO, allreduce_views, create_allgather_param,
                          hy_allgather, hy_allreduce, hy_bcast)
from .nodesync import child_wait, leader_signal
from .ops import ReduceOp
from .runtime import launch
from .shm import allocate_shared, free_window, local_view
from .topology import RankLayout, build_transtables, gather_shmem_sizes, split_shmem_bridge

SWEEP_LAYOUTS = ((1,), (2, 2), (3, 2), (1, 4), (2, 1, 3))
SWEEP_MSGS = (1, 8, 2048, 4096)


def _data(rank: int, nbytes: int) -> np.ndarray:
    return np.random.default_rng([7, rank, nbytes]).integers(0, 256, nbytes, dtype=np.uint8)


def _sweep_body(ctx, msg):
    n = ctx.world_size
    pkg = split_shmem_bridge(ctx.world, ctx.layout)
    failures = []

    win = allocate_shared(msg, 1, n, pkg)
    param = create_allgather_param(msg, 1, pkg, gather_shmem_sizes(pkg))
    view = local_view(win, ctx.rank, msg)
    view.array()[:] = _data(ctx.rank, msg)
    got = hy_allgather(win, view, msg, param, pkg)[:n * msg]
    if not np.array_equal(got, np.concatenate([_data(r, msg) for r in range(n)])):
        failures.append(f"allgather msg={msg}")
    free_window(win)

    win = allocate_shared(msg, 1, 1, pkg)
    tables = build_transtables(ctx.world, pkg)
    for root in range(n):
        payload = _data(1000 + root, msg) if ctx.rank == root else None
        got = hy_bcast(win, root, msg, tables, pkg, payload=payload)
        if not np.array_equal(got, _data(1000 + root, msg)):
            failures.append(f"bcast root={root} msg={msg}")
    free_window(win)

    count = math.ceil(msg / 8)
    win = allocate_shared(count, 8, pkg.shmemcomm_size + 2, pkg)
    for kind in ("sum", "prod", "max", "min"):
        op = ReduceOp(kind)
        in_view, out = allreduce_views(win, count, np.float64, pkg)
        values = [np.random.default_rng([kind.encode()[0], r, count]).uniform(0.5, 1.5, count)
                  for r in range(n)]
        expect = op.serial(values)
        for policy in (FORCE1, FORCE2, AUTO):
            in_view.array(np.float64)[:] = values[ctx.rank]
            got = hy_allreduce(in_view, out, count, op, pkg, win, policy)
            if not np.allclose(got, expect, rtol=1e-12 * n, atol=0):
                failures.append(f"allreduce {kind} {policy.mode} msg={msg}")
    free_window(win)
    return failures


def oracle_sweep(layouts=SWEEP_LAYOUTS, msgs=SWEEP_MSGS) -> list:
    """Failure descriptions (empty when every result matches the oracle)."""
    failures = []
    for sizes in layouts:
        for msg in msgs:
            res = launch(RankLayout(sizes), _sweep_body, args=(msg,))
            failures += [f"layout={list(sizes)} {f}" for rank in res.results for f in rank]
            if not res.audit.single_copy():
                failures.append(f"layout={list(sizes)} msg={msg}: extra arena allocation")
    return sorted(set(failures))


def _stress_body(ctx, epochs, seed, max_delay):
    pkg = split_shmem_bridge(ctx.world, ctx.layout)
    win = allocate_shared(2, 8, 1, pkg)
    slots = win.base[:16].view(np.int64)
    rng = np.random.default_rng([seed, ctx.rank])
    seen = []
    for e in range(1, epochs + 1):
        if rng.random() < 0.01:
            time.sleep(rng.random() * max_delay)
        if pkg.is_leader:
            slots[e % 2] = e
            leader_signal(win.cell, win)
        else:
            child_wait(win.cell, win)
            seen.append(int(slots[e % 2]))
    free_window(win)
    return seen


def sync_stress(children: int, epochs: int, seed: int = 0, max_delay: float = 1e-3) -> list:
    """Per-child list of sentinels observed, one per epoch."""
    res = launch(RankLayout((children + 1,)), _stress_body, args=(epochs, seed, max_delay))
    return res.results[1:]


def run_selftest(epochs: int = 2000, out=sys.stdout) -> int:
    failures = 0

    def report(name, ok, detail=""):
        nonlocal failures
        failures += not ok
        print(f"{'PASS' if ok else 'FAIL'}  {name}{'  ' + detail if detail else ''}", file=out)

    t = time.perf_counter()
    bad = oracle_sweep()
    report("oracle sweep", not bad, "; ".join(bad[:5]) + f" ({time.perf_counter() - t:.1f}s)")
    for children in (1, 3, 7):
        t = time.perf_counter()
        seen = sync_stress(children, epochs, seed=children)
        ok = all(s == list(range(1, epochs + 1)) for s in seen)
        report(f"sync stress, {children} children x {epochs} epochs", ok,
               f"({time.perf_counter() - t:.1f}s)")
    return failures
