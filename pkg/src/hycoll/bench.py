"""OSU-style micro-benchmarks for the hybrid and flat collectives."""
from __future__ import annotations

import csv
import io
import dataclasses
import json
import math
import os
import tempfile
import time
from dataclasses import dataclass
from pathlib import Path

import numpy as np

from .collectives import (MethodPolicy, allreduce_views, create_allgather_param, hy_allgather,
                          hy_allreduce, hy_bcast, select_method)
from .errors import ConfigurationError, JobError
from .ops import SUM
from .runtime import launch
from .shm import allocate_shared, free_window, local_view
from .topology import (Placement, RankLayout, build_transtables, gather_shmem_sizes,
                       split_shmem_bridge)
from .transport import Counters, comm_allgatherv, comm_allreduce, comm_bcast

COLLECTIVES = ("allgather", "bcast", "allreduce")
MODES = ("hybrid", "flat")

CSV_COLUMNS = (
    "collective", "mode", "nodes", "ppn", "placement", "msg_bytes", "iters", "method",
    "mean_us", "min_us", "max_us", "intra_msgs", "intra_bytes", "inter_msgs", "inter_bytes",
    "split_us", "alloc_us", "param_us", "table_us",
)
TIMING_COLUMNS = ("mean_us", "min_us", "max_us", "split_us", "alloc_us", "param_us", "table_us")


def _int_list(value) -> tuple:
    if isinstance(value, str):
        value = [v for v in value.replace(";", ",").split(",") if v.strip()]
    elif isinstance(value, (int, np.integer)):
        value = [value]
    try:
        return tuple(int(v) for v in value)
    except (TypeError, ValueError):
        raise ConfigurationError(f"expected integers, got {value!r}") from None


@dataclass
class RunConfig:
    nodes: int = 1
    ppn: object = 1
    placement: str = "block"
    mode: str = "hybrid"
    collective: str = "allgather"
    msg_bytes: tuple = (8,)
    iters: int = 1000
    warmup: int = 100
    inter_node_latency_us: float = 0.0
    seed: int = 0
    method_policy: str = "auto"
    watchdog_secs: float = 30.0
    root: int = 0

    def __post_init__(self):
        self.ppn = _int_list(self.ppn)
        self.msg_bytes = _int_list(self.msg_bytes)
        if self.nodes < 1:
            raise ConfigurationError("nodes must be >= 1")
        if len(self.ppn) not in (1, self.nodes):
            raise ConfigurationError(
                f"ppn lists {len(self.ppn)} node sizes for {self.nodes} nodes")
        if any(p < 1 for p in self.ppn):
            raise ConfigurationError("every ppn entry must be >= 1")
        if self.iters < 1 or self.warmup < 0:
            raise ConfigurationError("iters must be >= 1 and warmup >= 0")
        if not self.msg_bytes or any(m < 1 for m in self.msg_bytes):
            raise ConfigurationError("msg_bytes entries must be >= 1")
        self.placement = Placement.parse(self.placement).value
        if self.mode not in MODES:
            raise ConfigurationError(f"mode must be one of {MODES}")
        if self.collective not in COLLECTIVES:
            raise ConfigurationError(f"collective must be one of {COLLECTIVES}")
        try:
            self.policy = MethodPolicy(self.method_policy)
        except Exception as exc:
            raise ConfigurationError(str(exc)) from None
        if self.inter_node_latency_us < 0 or self.watchdog_secs <= 0:
            raise ConfigurationError("latency must be >= 0 and watchdog_secs > 0")
        if not 0 <= self.root < self.layout().world_size:
            raise ConfigurationError(f"root {self.root} outside the world")
        if (self.collective == "allgather" and self.mode == "hybrid"
                and self.placement != Placement.BLOCK.value):
            raise ConfigurationError("hybrid allgather supports block placement only")

    @property
    def node_sizes(self) -> tuple:
        return self.ppn * self.nodes if len(self.ppn) == 1 else self.ppn

    def layout(self) -> RankLayout:
        return RankLayout(self.node_sizes, self.placement)

    @property
    def ppn_label(self) -> str:
        return ",".join(str(p) for p in self.ppn)


@dataclass
class BenchRecord:
    collective: str
    mode: str
    nodes: int
    ppn: str
    placement: str
    msg_bytes: int
    iters: int
    method: str
    mean_us: float
    min_us: float
    max_us: float
    intra_msgs: int
    intra_bytes: int
    inter_msgs: int
    inter_bytes: int
    split_us: float = 0.0
    alloc_us: float = 0.0
    param_us: float = 0.0
    table_us: float = 0.0

    @property
    def counters(self) -> Counters:
        return Counters(self.intra_msgs, self.intra_bytes, self.inter_msgs, self.inter_bytes)


def _pattern(seed: int, rank: int, nbytes: int) -> np.ndarray:
    return np.random.default_rng([seed, rank, nbytes]).integers(0, 256, nbytes, dtype=np.uint8)


def _values(seed: int, rank: int, count: int) -> np.ndarray:
    return np.random.default_rng([seed, rank, count, 1]).uniform(-1.0, 1.0, count)


class _Timer:
    def __init__(self):
        self.t = time.perf_counter()

    def lap(self) -> float:
        now = time.perf_counter()
        us, self.t = (now - self.t) * 1e6, now
        return us


def _setup_hybrid(ctx, cfg: RunConfig, msg: int):
    """One-off setup; returns (op, verify, cleanup, one-off timings, method)."""
    world = ctx.world
    n = ctx.world_size
    oneoff = dict(split_us=0.0, alloc_us=0.0, param_us=0.0, table_us=0.0)
    timer = _Timer()
    pkg = split_shmem_bridge(world, ctx.layout)
    oneoff["split_us"] = timer.lap()
    method = "-"
    if cfg.collective == "allgather":
        win = allocate_shared(msg, 1, n, pkg)
        oneoff["alloc_us"] = timer.lap()
        sizes = gather_shmem_sizes(pkg)
        param = create_allgather_param(msg, 1, pkg, sizes)
        oneoff["param_us"] = timer.lap()
        view = local_view(win, ctx.rank, msg)
        view.array()[:] = _pattern(cfg.seed, ctx.rank, msg)

        def op():
            hy_allgather(win, view, msg, param, pkg)

        def verify():
            expect = np.concatenate([_pattern(cfg.seed, r, msg) for r in range(n)])
            return np.array_equal(win.base[:n * msg], expect)
    elif cfg.collective == "bcast":
        win = allocate_shared(msg, 1, 1, pkg)
        oneoff["alloc_us"] = timer.lap()
        tables = build_transtables(world, pkg)
        oneoff["table_us"] = timer.lap()
        if ctx.rank == cfg.root:
            win.base[:msg] = _pattern(cfg.seed, cfg.root, msg)

        def op():
            hy_bcast(win, cfg.root, msg, tables, pkg)

        def verify():
            return np.array_equal(win.base[:msg], _pattern(cfg.seed, cfg.root, msg))
    else:
        count = math.ceil(msg / 8)
        win = allocate_shared(count, 8, pkg.shmemcomm_size + 2, pkg)
        oneoff["alloc_us"] = timer.lap()
        in_view, out = allreduce_views(win, count, np.float64, pkg)
        in_view.array(np.float64)[:] = _values(cfg.seed, ctx.rank, count)
        method = str(select_method(count * 8, cfg.policy))

        def op():
            hy_allreduce(in_view, out, count, SUM, pkg, win, cfg.policy)

        def verify():
            expect = SUM.serial(_values(cfg.seed, r, count) for r in range(n))
            return np.allclose(out.slot_global.array(np.float64), expect, rtol=1e-12 * n, atol=1e-12 * n)

    return op, verify, (lambda: free_window(win)), oneoff, method


def _setup_flat(ctx, cfg: RunConfig, msg: int):
    world = ctx.world
    n = ctx.world_size
    oneoff = dict(split_us=0.0, alloc_us=0.0, param_us=0.0, table_us=0.0)
    if cfg.collective == "allgather":
        send = _pattern(cfg.seed, ctx.rank, msg)
        recv = np.empty(n * msg, dtype=np.uint8)
        counts = [msg] * n
        displs = [i * msg for i in range(n)]

        def op():
            comm_allgatherv(world, send, counts, displs, recv)

        def verify():
            expect = np.concatenate([_pattern(cfg.seed, r, msg) for r in range(n)])
            return np.array_equal(recv, expect)
    elif cfg.collective == "bcast":
        buf = _pattern(cfg.seed, cfg.root, msg) if ctx.rank == cfg.root else np.zeros(msg, np.uint8)

        def op():
            comm_bcast(world, cfg.root, buf)

        def verify():
            return np.array_equal(buf, _pattern(cfg.seed, cfg.root, msg))
    else:
        count = math.ceil(msg / 8)
        mine = _values(cfg.seed, ctx.rank, count)
        result = {}

        def op():
            result["v"] = comm_allreduce(world, mine, SUM)

        def verify():
            expect = SUM.serial(_values(cfg.seed, r, count) for r in range(n))
            return np.array_equal(result["v"], expect)

    return op, verify, (lambda: None), oneoff, "-"


def _bench_body(ctx, cfg: RunConfig):
    rows = []
    setup = _setup_hybrid if cfg.mode == "hybrid" else _setup_flat
    for msg in cfg.msg_bytes:
        op, verify, cleanup, oneoff, method = setup(ctx, cfg, msg)
        for _ in range(cfg.warmup):
            op()
        ctx.harness_barrier()
        before = ctx.counters()
        start = time.perf_counter()
        for _ in range(cfg.iters):
            op()
        elapsed = time.perf_counter() - start
        delta = ctx.counters() - before
        ctx.harness_barrier()
        ok = verify()
        cleanup()
        rows.append(dict(msg=msg, latency_us=elapsed * 1e6 / cfg.iters, counters=delta,
                         oneoff=oneoff, method=method, ok=ok))
    return rows


def run_microbench(cfg: RunConfig) -> list:
    """Time ``cfg.iters`` calls of the configured collective per message size.

    Latency columns are per-call means over the timed loop (mean, min, max
    across ranks). Counter columns are the messages and bytes sent by all
    ranks inside the timed loop. One-off columns time setup separately and
    report the slowest rank.
    """
    res = launch(cfg, _bench_body, args=(cfg,))
    records = []
    for k, msg in enumerate(cfg.msg_bytes):
        per_rank = [rows[k] for rows in res.results]
        if not all(r["ok"] for r in per_rank):
            bad = [rank for rank, r in enumerate(per_rank) if not r["ok"]]
            raise JobError(f"{cfg.collective} produced a wrong result on ranks {bad} at {msg} B")
        lat = [r["latency_us"] for r in per_rank]
        total = Counters()
        for r in per_rank:
            total = total + r["counters"]
        oneoff = {key: max(r["oneoff"][key] for r in per_rank) for key in per_rank[0]["oneoff"]}
        records.append(BenchRecord(
            collective=cfg.collective, mode=cfg.mode, nodes=cfg.nodes, ppn=cfg.ppn_label,
            placement=cfg.placement, msg_bytes=msg, iters=cfg.iters, method=per_rank[0]["method"],
            mean_us=float(np.mean(lat)), min_us=min(lat), max_us=max(lat),
            intra_msgs=total.intra_msgs, intra_bytes=total.intra_bytes,
            inter_msgs=total.inter_msgs, inter_bytes=total.inter_bytes,
            **oneoff,
        ))
        # guard against float rounding in the mean
        rec = records[-1]
        rec.mean_us = min(max(rec.mean_us, rec.min_us), rec.max_us)
    return records


# -- result files -------------------------------------------------------------

def _atomic_write(path: Path, text: str) -> None:
    path = Path(path)
    path.parent.mkdir(parents=True, exist_ok=True)
    fd, tmp = tempfile.mkstemp(dir=path.parent, prefix=f".{path.name}.", suffix=".tmp")
    try:
        with os.fdopen(fd, "w", newline="") as fh:
            fh.write(text)
        os.replace(tmp, path)
    except BaseException:
        if os.path.exists(tmp):
            os.unlink(tmp)
        raise


def format_results(records, fmt: str = "csv") -> str:
    records = list(records)
    if not records:
        raise ValueError("no records to write")
    columns = [f.name for f in dataclasses.fields(records[0])]
    rows = [dataclasses.asdict(r) for r in records]
    fmt = fmt.lower()
    if fmt == "json":
        text = json.dumps({"type": type(records[0]).__name__, "records": rows}, indent=2)
    elif fmt == "csv":
        buf = io.StringIO()
        writer = csv.DictWriter(buf, fieldnames=columns, lineterminator="\n")
        writer.writeheader()
        writer.writerows(rows)
        text = buf.getvalue()
    else:
        raise ValueError(f"unknown format {fmt!r}")
    return text


def emit_results(records, path, fmt: str = None) -> Path:
    """Write records as CSV (default) or JSON, atomically."""
    path = Path(path)
    fmt = (fmt or ("json" if path.suffix.lower() == ".json" else "csv")).lower()
    _atomic_write(path, format_results(records, fmt))
    return path


def load_results(path) -> list:
    """Read back a file written by :func:`emit_results`."""
    from .kernels.stats import KernelRecord

    kinds = {"BenchRecord": BenchRecord, "KernelRecord": KernelRecord}
    path = Path(path)
    if path.suffix.lower() == ".json":
        data = json.loads(path.read_text())
        cls = kinds[data["type"]]
        return [cls(**row) for row in data["records"]]
    with open(path, newline="") as fh:
        reader = csv.DictReader(fh)
        cls = BenchRecord if tuple(reader.fieldnames) == CSV_COLUMNS else KernelRecord
        types = {f.name: getattr(f.type, "__name__", f.type) for f in dataclasses.fields(cls)}
        conv = {"int": int, "float": float, "str": str}
        return [cls(**{k: conv[types[k]](v) for k, v in row.items()}) for row in reader]
