"""Ordered task map over a process pool."""

import logging
from concurrent.futures import ProcessPoolExecutor
from typing import Callable, List, Sequence, TypeVar

logger = logging.getLogger(__name__)

T = TypeVar("T")
R = TypeVar("R")


def ordered_map(fn: Callable[[T], R], tasks: Sequence[T], workers: int = 1) -> List[R]:
    """Apply ``fn`` to every task and return results in task order.

    Tasks carry their own random streams, so the merged result does not depend
    on ``workers`` or on completion order.
    """
    if workers <= 1 or len(tasks) <= 1:
        return [fn(task) for task in tasks]

    logger.debug(f"dispatching {len(tasks)} tasks to {workers} workers")
    with ProcessPoolExecutor(max_workers=workers) as ex:
        futures = [ex.submit(fn, task) for task in tasks]
        return [fut.result() for fut in futures]


def chunk_ranges(total: int, chunk_size: int) -> List[range]:
    return [range(lo, min(lo + chunk_size, total)) for lo in range(0, total, chunk_size)]
