"""SPMD launcher: one worker thread per rank, grouped into simulated nodes."""
from __future__ import annotations

import logging
import threading
import time
from collections import Counter
from dataclasses import dataclass

from ._monitor import Monitor
from .errors import (Cancelled, ConfigurationError, DeadlockError, RankFailure,
                     UsageError)
from .shm import AllocationAudit, ShmRegistry
from .topology import RankLayout, world_handle
from .transport import Counters, Transport

log = logging.getLogger("hycoll")


class Job:
    def __init__(self, layout: RankLayout, latency_us: float = 0.0):
        self.layout = layout
        self.monitor = Monitor(layout.world_size)
        self.transport = Transport(layout, latency_us, self.monitor)
        self.registry = ShmRegistry()
        self.barrier = threading.Barrier(layout.world_size)


class RankContext:
    """Everything a rank body can reach: its rank, the world communicator,
    its transport endpoint and the job's shared-arena registry."""

    def __init__(self, job: Job, rank: int):
        self.job = job
        self.rank = rank
        self.layout = job.layout
        self.monitor = job.monitor
        self.registry = job.registry
        self.endpoint = job.transport.endpoint(rank)
        self._seq = Counter()
        self.world = world_handle(job.layout, rank, self)

    @property
    def world_size(self) -> int:
        return self.layout.world_size

    @property
    def node_id(self) -> int:
        return self.layout.node_of(self.rank)

    def next_seq(self, key) -> int:
        value = self._seq[key]
        self._seq[key] = value + 1
        return value

    def counters(self) -> Counters:
        """Messages and bytes sent by this rank so far."""
        return self.endpoint.counters()

    def harness_barrier(self) -> None:
        """World barrier that bypasses the transport (adds no counted traffic)."""
        with self.monitor.blocking(self.rank, "harness_barrier"):
            try:
                self.job.barrier.wait()
            except threading.BrokenBarrierError:
                raise Cancelled("harness barrier aborted") from None


@dataclass
class JobResult:
    results: list
    counters: Counters
    audit: AllocationAudit
    elapsed: float


def _describe(blocked: dict, done: list) -> str:
    lines = [f"rank {r}: blocked in {op}" for r, op in sorted(blocked.items())]
    running = [r for r, d in enumerate(done) if not d and r not in blocked]
    if running:
        lines.append(f"ranks still computing: {running}")
    finished = [r for r, d in enumerate(done) if d]
    if finished:
        lines.append(f"ranks finished: {finished}")
    return "; ".join(lines)


def launch(layout, rank_body, *, args=(), watchdog_secs: float = 30.0,
           latency_us: float = 0.0) -> JobResult:
    """Run ``rank_body(ctx, *args)`` on every rank of ``layout``.

    ``layout`` may be a :class:`RankLayout` or anything with a ``layout()``
    method (a ``RunConfig``). Raises :class:`DeadlockError` when no rank makes
    progress for ``watchdog_secs``, :class:`RankFailure` when a rank raises,
    and re-raises configuration errors unchanged.
    """
    if not isinstance(layout, RankLayout):
        if not hasattr(layout, "layout"):
            raise ConfigurationError(f"cannot launch from {type(layout).__name__}")
        cfg = layout
        layout = cfg.layout()
        watchdog_secs = getattr(cfg, "watchdog_secs", watchdog_secs)
        latency_us = getattr(cfg, "inter_node_latency_us", latency_us)
    if watchdog_secs <= 0:
        raise ConfigurationError("watchdog_secs must be positive")

    job = Job(layout, latency_us)
    n = layout.world_size
    results = [None] * n
    errors = {}
    done = [False] * n

    def worker(rank):
        try:
            ctx = RankContext(job, rank)
            results[rank] = rank_body(ctx, *args)
        except BaseException as exc:  # noqa: BLE001 - reported with rank attribution
            errors[rank] = exc
            if not isinstance(exc, Cancelled):
                job.monitor.cancel()
                job.barrier.abort()
        finally:
            done[rank] = True
            job.monitor.progress()

    threads = [threading.Thread(target=worker, args=(r,), name=f"hycoll-rank-{r}", daemon=True)
               for r in range(n)]
    start = time.perf_counter()
    for t in threads:
        t.start()
    deadlock = None
    while True:
        alive = [t for t in threads if t.is_alive()]
        if not alive:
            break
        alive[0].join(0.05)
        if job.monitor.cancelled.is_set():
            grace = time.monotonic() + 5.0
            for t in threads:
                t.join(max(0.0, grace - time.monotonic()))
            break
        if time.monotonic() - job.monitor.last_progress > watchdog_secs:
            blocked = job.monitor.blocked_ranks()
            msg = f"no progress for {watchdog_secs:g}s: " + _describe(blocked, done)
            log.error("watchdog: %s", msg)
            deadlock = DeadlockError(msg, blocked)
            job.monitor.cancel()
            job.barrier.abort()
    elapsed = time.perf_counter() - start
    if deadlock is not None:
        raise deadlock
    real = {r: e for r, e in errors.items() if not isinstance(e, Cancelled)}
    if real:
        rank = min(real)
        exc = real[rank]
        if isinstance(exc, (ConfigurationError, UsageError)):
            exc.rank = rank
            raise exc
        raise RankFailure(rank, exc) from exc
    if errors:
        raise RankFailure(min(errors), errors[min(errors)])
    return JobResult(results, job.transport.counters.snapshot(), job.registry.audit(), elapsed)
