"""Stage building blocks: specs, events, preprocessors, metrics, sample sources."""

from __future__ import annotations

import hashlib
import json
import threading
import time
from collections import defaultdict
from dataclasses import dataclass, field
from pathlib import Path
from typing import Callable, Iterable, Literal, Mapping, Protocol

import numpy as np

from alaas.data.cache import sha256_hex
from alaas.data.manager import FetchResult
from alaas.errors import EmptyPayload, FetchFailed
from alaas.inference.batcher import BatchPolicy
from alaas.inference.mock import FeatureVector
from alaas.models import STAGES, SampleRef, StageMetrics, StageStats

Mode = Literal["pipelined", "sequential_rounds", "sequential_whole"]
MODES: tuple[str, ...] = ("pipelined", "sequential_rounds", "sequential_whole")


@dataclass(frozen=True)
class StageDelays:
    """Synthetic per-stage latencies (milliseconds), injected before the real work."""

    fetch_ms: float = 0.0
    preprocess_ms: float = 0.0
    infer_ms_per_item: float = 0.0
    infer_ms_per_call: float = 0.0


@dataclass(frozen=True)
class PipelineSpec:
    mode: Mode = "pipelined"
    queue_capacity: int | None = None  # None: 4x the batch size
    fetch_workers: int = 8
    infer_workers: int = 1
    batch: BatchPolicy = field(default_factory=BatchPolicy)
    failure_policy: Literal["abort", "skip"] = "abort"
    preprocess: str = "histogram"
    delays: StageDelays = field(default_factory=StageDelays)

    def __post_init__(self):
        if self.mode not in MODES:
            raise ValueError(f"unknown pipeline mode {self.mode!r}")
        if self.queue_capacity is not None and self.queue_capacity < 1:
            raise ValueError("queue_capacity must be >= 1")
        if self.fetch_workers < 1 or self.infer_workers < 1:
            raise ValueError("worker counts must be >= 1")
        if self.failure_policy not in ("abort", "skip"):
            raise ValueError("failure_policy must be 'abort' or 'skip'")

    def capacity_for(self, batch_size: int) -> int:
        return self.queue_capacity if self.queue_capacity is not None else 4 * batch_size


@dataclass(frozen=True)
class StageEvent:
    stage: str
    id: int
    start: float
    end: float

    def to_dict(self) -> dict:
        return {"stage": self.stage, "id": self.id, "start": self.start, "end": self.end}

    @classmethod
    def from_dict(cls, d: Mapping) -> StageEvent:
        return cls(d["stage"], int(d["id"]), float(d["start"]), float(d["end"]))


def write_trace(events: Iterable[StageEvent], path: str | Path) -> None:
    """One StageEvent JSON object per line."""
    with open(path, "w") as fh:
        for ev in events:
            fh.write(json.dumps(ev.to_dict()) + "\n")


def read_trace(path: str | Path) -> list[StageEvent]:
    with open(path) as fh:
        return [StageEvent.from_dict(json.loads(line)) for line in fh if line.strip()]


def split_interval(stage: str, ids: list[int], start: float, end: float) -> list[StageEvent]:
    """Share one batch interval evenly among its items so busy time is not over-counted."""
    k = len(ids)
    step = (end - start) / k
    return [StageEvent(stage, sid, start + j * step, start + (j + 1) * step) for j, sid in enumerate(ids)]


def compute_metrics(
    events: Iterable[StageEvent],
    wall_clock: float,
    workers: Mapping[str, int] | None = None,
    items: int | None = None,
    skipped: Iterable[int] = (),
) -> StageMetrics:
    """Per-stage busy/idle time and end-to-end throughput.

    busy = sum of event durations / stage workers; idle = wall - busy,
    floored at zero; throughput = items / wall, where ``items`` defaults to
    the number of distinct sample ids seen.
    """
    events = list(events)
    workers = dict(workers or {})
    per_stage: dict[str, list[StageEvent]] = defaultdict(list)
    for ev in events:
        per_stage[ev.stage].append(ev)
    stages = {}
    for stage in STAGES:
        evs = per_stage.get(stage, [])
        busy = sum(ev.end - ev.start for ev in evs) / max(1, workers.get(stage, 1))
        stages[stage] = StageStats(len(evs), busy, max(0.0, wall_clock - busy))
    if items is None:
        items = len({ev.id for ev in events})
    throughput = items / wall_clock if wall_clock > 0 else 0.0
    return StageMetrics(stages, wall_clock, throughput, tuple(sorted(skipped)))


# -- preprocessing ------------------------------------------------------------

Preprocessor = Callable[[int, bytes], FeatureVector]


def byte_histogram(sample_id: int, payload: bytes) -> FeatureVector:
    """256-bin byte histogram normalised to unit sum."""
    if not payload:
        raise EmptyPayload(f"sample {sample_id} has an empty payload")
    counts = np.bincount(np.frombuffer(payload, dtype=np.uint8), minlength=256)
    return FeatureVector(sample_id, counts / counts.sum())


_PREPROCESSORS: dict[str, Preprocessor] = {"histogram": byte_histogram}


def register_preprocessor(name: str, fn: Preprocessor) -> None:
    _PREPROCESSORS[name] = fn


def get_preprocessor(name: str) -> Preprocessor:
    try:
        return _PREPROCESSORS[name]
    except KeyError:
        raise ValueError(f"unknown preprocessor {name!r}; known: {sorted(_PREPROCESSORS)}") from None


def preprocess(payload: bytes, sample_id: int = 0, name: str = "histogram") -> FeatureVector:
    return get_preprocessor(name)(sample_id, payload)


# -- sources ------------------------------------------------------------------


class SampleSource(Protocol):
    def fetch(self, ref: SampleRef, policy: str = "cache", dataset_id: str | None = None) -> FetchResult: ...


class SyntheticSource:
    """Deterministic in-memory payloads derived from each uri (for benchmarks and tests).

    ``fail_uris`` raise FetchFailed; ``remote_fetches`` counts every fetch.
    """

    def __init__(self, payload_size: int = 256, fail_uris: Iterable[str] = ()):
        self.payload_size = payload_size
        self.fail_uris = set(fail_uris)
        self.remote_fetches = 0
        self._lock = threading.Lock()

    def payload(self, uri: str) -> bytes:
        out = bytearray()
        counter = 0
        while len(out) < self.payload_size:
            out += hashlib.sha256(f"{uri}#{counter}".encode()).digest()
            counter += 1
        return bytes(out[: self.payload_size])

    def fetch(self, ref: SampleRef, policy: str = "cache", dataset_id: str | None = None) -> FetchResult:
        start = time.perf_counter()
        with self._lock:
            self.remote_fetches += 1
        if ref.uri in self.fail_uris:
            raise FetchFailed(ref.uri, "injected failure")
        data = self.payload(ref.uri)
        return FetchResult(ref.id, data, False, time.perf_counter() - start, sha256_hex(data))
