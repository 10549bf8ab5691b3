"""
Thread fan-out for independent sweep points and Monte-Carlo trials.
"""

import logging
import os
from concurrent.futures import ThreadPoolExecutor
from typing import Callable, Iterable, List, TypeVar

from src.exceptions import ConfigError

logger = logging.getLogger(__name__)

T = TypeVar("T")
R = TypeVar("R")

THREADS_ENV = "NFRIS_THREADS"


def worker_count() -> int:
    """Worker threads allowed by NFRIS_THREADS (default 1, sequential)."""
    raw = os.environ.get(THREADS_ENV, "1")
    try:
        count = int(raw)
    except ValueError:
        raise ConfigError(f"must be a positive integer, got {raw!r}", THREADS_ENV) from None
    if count < 1:
        raise ConfigError(f"must be a positive integer, got {raw!r}", THREADS_ENV)
    return count


def parallel_map(func: Callable[[T], R], items: Iterable[T]) -> List[R]:
    """Map ``func`` over ``items`` preserving order; runs inline when one worker is allowed."""
    items = list(items)
    workers = min(worker_count(), max(len(items), 1))
    if workers == 1:
        return [func(item) for item in items]
    logger.debug(f"Fanning {len(items)} tasks over {workers} threads")
    with ThreadPoolExecutor(max_workers=workers) as executor:
        return list(executor.map(func, items))
