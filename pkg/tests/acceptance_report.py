"""Collects one line per acceptance criterion for the terminal summary."""
import functools
import time

LINES = []


def criterion(number: int, title: str):
    def wrap(fn):
        @functools.wraps(fn)
        def run(*args, **kwargs):
            t0 = time.perf_counter()
            try:
                detail = fn(*args, **kwargs)
            except BaseException as exc:
                line = f"FAIL  criterion {number}: {title} ({type(exc).__name__}: {exc})"
                LINES.append(line)
                print(line)
                raise
            extra = f"; {detail}" if detail else ""
            line = f"PASS  criterion {number}: {title} [{time.perf_counter() - t0:.1f}s{extra}]"
            LINES.append(line)
            print(line)
        return run
    return wrap
