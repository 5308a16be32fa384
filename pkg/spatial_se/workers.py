"""Per-utterance fan-out. Results come back in input order for any job count."""
import multiprocessing as mp
import os
from typing import Callable, List, Sequence, TypeVar

from .logging_utils import get_logger

log = get_logger("workers")

T = TypeVar("T")
R = TypeVar("R")


def init(env):
    os.environ.update(env)


def map_jobs(fn: Callable[[T], R], items: Sequence[T], jobs: int = 1) -> List[R]:
    """
    jobs <= 1 runs in-process; otherwise a process pool `map`. `fn` must be a
    module-level function and items picklable.
    """
    items = list(items)
    if jobs <= 1 or len(items) <= 1:
        return [fn(x) for x in items]
    n = min(jobs, len(items))
    log.debug(f"dispatching {len(items)} jobs over {n} processes")
    with mp.Pool(processes=n, initializer=init, initargs=(dict(os.environ),)) as pool:
        return pool.map(fn, items, chunksize=1)
