"""Size-or-timeout dynamic batching."""

from __future__ import annotations

import queue
import threading
import time
from dataclasses import dataclass
from typing import Any, Iterable, Iterator

END = object()


@dataclass(frozen=True)
class BatchPolicy:
    max_batch: int = 16
    max_wait_ms: float = 10.0

    def __post_init__(self):
        if self.max_batch < 1:
            raise ValueError("max_batch must be >= 1")
        if self.max_wait_ms < 0:
            raise ValueError("max_wait_ms must be >= 0")


def batch_collect(policy: BatchPolicy, source: queue.Queue, limit: int | None = None) -> Iterator[list[Any]]:
    """Group items from ``source`` into batches until the ``END`` sentinel.

    A batch is emitted once it holds ``min(max_batch, limit)`` items or
    ``max_wait_ms`` has passed since its first item arrived.  Arrival order
    is preserved, the final partial batch is flushed, and empty batches are
    never produced.
    """
    cap = policy.max_batch if limit is None else max(1, min(policy.max_batch, limit))
    wait = policy.max_wait_ms / 1000.0
    while True:
        item = source.get()
        if item is END:
            return
        batch = [item]
        deadline = time.monotonic() + wait
        ended = False
        while len(batch) < cap:
            remaining = deadline - time.monotonic()
            try:
                item = source.get(timeout=remaining) if remaining > 0 else source.get_nowait()
            except queue.Empty:
                break
            if item is END:
                ended = True
                break
            batch.append(item)
        yield batch
        if ended:
            return


def iter_batches(policy: BatchPolicy, items: Iterable[Any], limit: int | None = None) -> Iterator[list[Any]]:
    """Batch an ordinary iterable; a feeder thread plays the producer."""
    q: queue.Queue = queue.Queue()

    def feed():
        for item in items:
            q.put(item)
        q.put(END)

    threading.Thread(target=feed, daemon=True).start()
    yield from batch_collect(policy, q, limit)
