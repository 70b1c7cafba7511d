from __future__ import annotations

import threading
import time
from typing import Callable, TypeVar

from prisonsim.errors import BackendError, BackendTimeout, EmptyCompletionError, TransportError

T = TypeVar("T")

DEFAULT_BACKOFF = (1.0, 2.0, 4.0)
RETRYABLE = (TransportError, BackendTimeout, EmptyCompletionError)


class TokenBucket:
    """Thread-safe token bucket; ``acquire`` blocks until a token is free."""

    def __init__(
        self,
        rate: float,
        capacity: float | None = None,
        clock: Callable[[], float] = time.monotonic,
        sleep: Callable[[float], None] = time.sleep,
    ):
        if rate <= 0:
            raise ValueError("rate must be positive")
        self.rate = float(rate)
        self.capacity = float(capacity if capacity is not None else max(1.0, rate))
        self._tokens = self.capacity
        self._clock = clock
        self._sleep = sleep
        self._last = clock()
        self._lock = threading.Lock()

    def acquire(self) -> None:
        while True:
            with self._lock:
                now = self._clock()
                self._tokens = min(self.capacity, self._tokens + (now - self._last) * self.rate)
                self._last = now
                if self._tokens >= 1.0:
                    self._tokens -= 1.0
                    return
                wait = (1.0 - self._tokens) / self.rate
            self._sleep(wait)


def call_with_retry(
    fn: Callable[[], T],
    backoff: tuple[float, ...] = DEFAULT_BACKOFF,
    sleep: Callable[[float], None] = time.sleep,
    retry_on: tuple[type[BackendError], ...] = RETRYABLE,
) -> T:
    """Call ``fn`` once plus one retry per ``backoff`` entry.

    Only ``retry_on`` errors are retried; the last error is re-raised once the
    budget is spent.
    """
    for delay in backoff:
        try:
            return fn()
        except retry_on:
            sleep(delay)
    return fn()
