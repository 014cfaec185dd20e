"""Command-line entry point: ``hycoll bench|kernel|selftest``."""
from __future__ import annotations

import argparse
import logging
import os
import sys

import numpy as np

from .bench import RunConfig, emit_results, format_results, run_microbench
from .errors import ConfigurationError, HycollError, UsageError
from .kernels import KernelRecord, PoissonConfig, SummaConfig, assemble, poisson_run, summa_run
from .kernels.summa import summa_matrices
from .topology import RankLayout

EXIT_OK = 0
EXIT_CONFIG = 2
EXIT_RUNTIME = 3

_LEVELS = {"error": logging.ERROR, "warn": logging.WARNING, "warning": logging.WARNING,
           "info": logging.INFO, "debug": logging.DEBUG}

log = logging.getLogger("hycoll")


def _setup_logging() -> None:
    name = os.environ.get("HYCOLL_LOG", "warn").strip().lower()
    level = _LEVELS.get(name)
    logging.basicConfig(level=level or logging.WARNING, stream=sys.stderr,
                        format="hycoll %(levelname)s: %(message)s")
    if level is None:
        log.warning("ignoring HYCOLL_LOG=%r; expected one of error,warn,info,debug", name)


def _add_layout_args(p, nodes=1, ppn="1"):
    p.add_argument("--nodes", type=int, default=nodes)
    p.add_argument("--ppn", default=ppn, help="ranks per node, or a per-node list like 3,2")
    p.add_argument("--placement", default="block", choices=["block", "rr"])
    p.add_argument("--mode", default="hybrid", choices=["hybrid", "flat"])
    p.add_argument("--latency-us", type=float, default=0.0)
    p.add_argument("--watchdog-secs", type=float, default=30.0)
    p.add_argument("--out", default=None, help="CSV or JSON path (stdout CSV when omitted)")
    p.add_argument("--format", choices=["csv", "json"], default=None)


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(prog="hycoll", description=__doc__)
    sub = parser.add_subparsers(dest="command", required=True)

    bench = sub.add_parser("bench", help="collective micro-benchmark")
    bench.add_argument("--collective", required=True, choices=["allgather", "bcast", "allreduce"])
    _add_layout_args(bench)
    bench.add_argument("--msg-bytes", default="8")
    bench.add_argument("--iters", type=int, default=1000)
    bench.add_argument("--warmup", type=int, default=100)
    bench.add_argument("--method", default="auto", choices=["auto", "m1", "m2"])
    bench.add_argument("--root", type=int, default=0, help="bcast root")
    bench.add_argument("--seed", type=int, default=0)

    kernel = sub.add_parser("kernel", help="application kernels")
    ksub = kernel.add_subparsers(dest="kernel", required=True)
    summa = ksub.add_parser("summa")
    summa.add_argument("--n", type=int, default=128)
    summa.add_argument("--grid", default="2x2")
    summa.add_argument("--seed", type=int, default=0)
    _add_layout_args(summa, nodes=2, ppn="2")
    poisson = ksub.add_parser("poisson")
    poisson.add_argument("--n", type=int, default=65)
    poisson.add_argument("--tol", type=float, default=1e-4)
    poisson.add_argument("--max-iters", type=int, default=20000)
    poisson.add_argument("--method", default="auto", choices=["auto", "m1", "m2"])
    _add_layout_args(poisson, nodes=2, ppn="2")

    selftest = sub.add_parser("selftest", help="oracle-equivalence and sync-stress checks")
    selftest.add_argument("--epochs", type=int, default=2000)
    return parser


def _layout(args) -> RankLayout:
    # reuse RunConfig's node/ppn validation
    cfg = RunConfig(nodes=args.nodes, ppn=args.ppn, placement=args.placement, mode=args.mode)
    return cfg.layout()


def _write(records, args) -> None:
    if args.out:
        path = emit_results(records, args.out, args.format)
        log.info("wrote %d records to %s", len(records), path)
    else:
        sys.stdout.write(format_results(records, args.format or "csv"))


def _cmd_bench(args) -> int:
    cfg = RunConfig(
        nodes=args.nodes, ppn=args.ppn, placement=args.placement, mode=args.mode,
        collective=args.collective, msg_bytes=args.msg_bytes, iters=args.iters,
        warmup=args.warmup, inter_node_latency_us=args.latency_us, seed=args.seed,
        method_policy=args.method, watchdog_secs=args.watchdog_secs, root=args.root,
    )
    _write(run_microbench(cfg), args)
    return EXIT_OK


def _kernel_record(kernel, args, layout, n, grid, seed, stats, error) -> KernelRecord:
    c = stats.counters
    return KernelRecord(
        kernel=kernel, mode=args.mode, nodes=layout.n_nodes, ppn=str(args.ppn),
        placement=layout.placement.value, n=n, grid=grid, seed=seed, phases=stats.phases,
        error=float(error), total_us=stats.total_s * 1e6, comm_us=stats.comm_s * 1e6,
        compute_us=stats.compute_s * 1e6, intra_msgs=c.intra_msgs, intra_bytes=c.intra_bytes,
        inter_msgs=c.inter_msgs, inter_bytes=c.inter_bytes,
    )


def _cmd_kernel(args) -> int:
    layout = _layout(args)
    if args.kernel == "summa":
        try:
            gr, gc = (int(x) for x in args.grid.lower().split("x"))
        except ValueError:
            raise ConfigurationError(f"--grid must look like RxC, got {args.grid!r}") from None
        cfg = SummaConfig(args.n, gr, gc, args.mode, args.seed)
        blocks, stats = summa_run(cfg, layout, watchdog_secs=args.watchdog_secs,
                                  latency_us=args.latency_us)
        a, b = summa_matrices(cfg)
        error = np.max(np.abs(assemble(blocks, cfg) - a @ b))
        rec = _kernel_record("summa", args, layout, args.n, args.grid, args.seed, stats, error)
    else:
        cfg = PoissonConfig(n=args.n, tol=args.tol, max_iters=args.max_iters, mode=args.mode,
                            method_policy=args.method)
        _, final, stats = poisson_run(cfg, layout, watchdog_secs=args.watchdog_secs,
                                      latency_us=args.latency_us)
        rec = _kernel_record("poisson", args, layout, args.n, "-", 0, stats, final)
    _write([rec], args)
    return EXIT_OK


def _cmd_selftest(args) -> int:
    from .selftest import run_selftest

    failures = run_selftest(epochs=args.epochs, out=sys.stdout)
    return EXIT_OK if not failures else EXIT_RUNTIME


def main(argv=None) -> int:
    _setup_logging()
    parser = build_parser()
    try:
        args = parser.parse_args(argv)
    except SystemExit as exc:
        return EXIT_OK if exc.code == 0 else EXIT_CONFIG
    commands = {"bench": _cmd_bench, "kernel": _cmd_kernel, "selftest": _cmd_selftest}
    try:
        return commands[args.command](args)
    except (ConfigurationError, UsageError) as exc:
        log.error("configuration error: %s", exc)
        return EXIT_CONFIG
    except HycollError as exc:
        log.error("%s: %s", type(exc).__name__, exc)
        return EXIT_RUNTIME


if __name__ == "__main__":
    sys.exit(main())
