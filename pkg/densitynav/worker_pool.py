import logging
from collections.abc import Callable, Iterable
from concurrent.futures import ThreadPoolExecutor

logger = logging.getLogger(__name__)


class WorkerPool:
    """Runs independent jobs (trajectories, time slices) on a thread pool."""

    def __init__(self, max_workers: int | None = None):
        self.max_workers = max_workers

    def map[T, R](self, fn: Callable[[T], R], items: Iterable[T]) -> list[R]:
        """Apply fn to every item; results come back in submission order."""
        items = list(items)
        if self.max_workers == 1 or len(items) <= 1:
            return [fn(item) for item in items]
        logger.debug("dispatching %d jobs to %s workers", len(items), self.max_workers or "default")
        with ThreadPoolExecutor(max_workers=self.max_workers) as executor:
            return list(executor.map(fn, items))
