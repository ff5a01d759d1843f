"""Bounded-concurrency, rate-limited task dispatch with ordered results."""

from __future__ import annotations

import threading
import time
from concurrent.futures import ThreadPoolExecutor
from typing import Callable, Sequence, TypeVar, Union

T = TypeVar("T")


class RateLimiter:
    """Fixed-interval token bucket: successive acquisitions are spaced at
    least 60/requests_per_minute seconds apart. Thread-safe. The clock and
    sleep functions are injectable so timing contracts are testable without
    waiting."""

    def __init__(
        self,
        requests_per_minute: int | None,
        time_fn: Callable[[], float] = time.monotonic,
        sleep_fn: Callable[[float], None] = time.sleep,
    ):
        if requests_per_minute is not None and requests_per_minute <= 0:
            raise ValueError("requests_per_minute must be positive")
        self.interval = 60.0 / requests_per_minute if requests_per_minute else 0.0
        self._time = time_fn
        self._sleep = sleep_fn
        self._lock = threading.Lock()
        self._next_free = None

    def acquire(self) -> None:
        if self.interval == 0.0:
            return
        with self._lock:
            now = self._time()
            if self._next_free is None or now >= self._next_free:
                self._next_free = now + self.interval
                wait = 0.0
            else:
                wait = self._next_free - now
                self._next_free += self.interval
        if wait > 0:
            self._sleep(wait)


def rate_limited_dispatch(
    tasks: Sequence[Callable[[], T]],
    max_concurrent: int = 1,
    requests_per_minute: int | None = None,
    limiter: RateLimiter | None = None,
) -> list[Union[T, Exception]]:
    """Run tasks with at most max_concurrent in flight and a long-run rate
    of at most requests_per_minute, returning results in task order.

    A failing task yields its exception at its position; failures never
    abort the batch.
    """
    if max_concurrent <= 0:
        raise ValueError("max_concurrent must be positive")
    if limiter is None:
        limiter = RateLimiter(requests_per_minute)
    results: list[Union[T, Exception]] = [None] * len(tasks)  # type: ignore[list-item]
    if not tasks:
        return results

    def run(task: Callable[[], T]) -> Union[T, Exception]:
        try:
            return task()
        except Exception as exc:  # per-item isolation
            return exc

    def gated(task: Callable[[], T]) -> Union[T, Exception]:
        limiter.acquire()
        return run(task)

    if max_concurrent == 1:
        for i, task in enumerate(tasks):
            results[i] = gated(task)
        return results

    with ThreadPoolExecutor(max_workers=max_concurrent) as pool:
        futures = [pool.submit(gated, task) for task in tasks]
        for i, future in enumerate(futures):
            results[i] = future.result()
    return results
