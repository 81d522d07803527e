"""Order-preserving fan-out of independent tasks over worker processes."""

from __future__ import annotations

import os
from concurrent.futures import ProcessPoolExecutor


def default_workers() -> int:
    try:
        return max(1, int(os.environ.get("SINAI_LAB_WORKERS", "1")))
    except ValueError:
        return 1


def _call(payload):
    func, args = payload
    return func(*args)


def map_tasks(func, arg_tuples, workers: int | None = None) -> list:
    """``[func(*a) for a in arg_tuples]``, possibly in parallel; results keep task order.

    Randomness must be keyed by task arguments, never by worker, so the output
    does not depend on ``workers``.
    """
    arg_tuples = list(arg_tuples)
    workers = default_workers() if workers is None else workers
    if workers <= 1 or len(arg_tuples) <= 1:
        return [func(*a) for a in arg_tuples]
    with ProcessPoolExecutor(max_workers=workers) as pool:
        return list(pool.map(_call, [(func, a) for a in arg_tuples]))
