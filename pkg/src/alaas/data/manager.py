"""Dataset lifecycle: ingestion, id assignment, cached fetching."""

from __future__ import annotations

import json
import logging
import os
import threading
import time
from collections import Counter
from concurrent.futures import ThreadPoolExecutor
from dataclasses import dataclass
from pathlib import Path
from typing import Callable, Iterable, Literal, Sequence

from alaas.data.cache import ContentCache, atomic_write_json, sha256_hex
from alaas.data.fetchers import fetch_uri
from alaas.errors import (
    DuplicateUri,
    EmptyDataset,
    FetchFailed,
    HashMismatch,
    UnknownDataset,
)
from alaas.models import DatasetManifest, SampleRef, check_uri, new_id, utcnow, validate_manifest

log = logging.getLogger(__name__)

FetchPolicy = Literal["cache", "no_cache"]
RawFetcher = Callable[[str, float], bytes]

_FLUSH_EVERY = 64


@dataclass(frozen=True)
class FetchResult:
    id: int
    bytes: bytes
    from_cache: bool
    fetch_time: float
    content_hash: str


class DataManager:
    """Owns manifests under ``<data_dir>/datasets`` and the payload/model-output cache.

    ``remote_fetches`` counts every access to the original source (network or
    file system), which is what the cache is meant to avoid.
    """

    def __init__(
        self,
        data_dir: str | os.PathLike,
        cache_dir: str | os.PathLike | None = None,
        *,
        fetch_concurrency: int = 8,
        fetch_timeout: float = 30.0,
        s3_gateway_template: str | None = None,
        cache_max_bytes: int | None = None,
        fetcher: RawFetcher | None = None,
    ):
        self.data_dir = Path(data_dir)
        self.datasets_dir = self.data_dir / "datasets"
        self.datasets_dir.mkdir(parents=True, exist_ok=True)
        self.cache = ContentCache(cache_dir if cache_dir is not None else self.data_dir / "cache")
        self.fetch_concurrency = fetch_concurrency
        self.fetch_timeout = fetch_timeout
        self.cache_max_bytes = cache_max_bytes
        self.s3_gateway_template = s3_gateway_template
        self._fetcher = fetcher or (lambda uri, timeout: fetch_uri(uri, timeout, s3_gateway_template))

        self.remote_fetches = 0
        self.remote_by_uri: Counter[str] = Counter()
        self._lock = threading.RLock()
        self._inflight: dict[str, threading.Lock] = {}
        self._manifests: dict[str, DatasetManifest] = {}
        self._pending_hashes: dict[str, dict[int, str]] = {}
        self._unflushed = 0

    # -- manifests -----------------------------------------------------------

    def _manifest_path(self, dataset_id: str) -> Path:
        return self.datasets_dir / f"{dataset_id}.json"

    def ingest(self, uris: Sequence[str], name: str, owner: str = "") -> DatasetManifest:
        """Index ``uris`` as a new dataset with ids ``0..n-1`` in input order.

        Validation happens before anything is written, so a rejected request
        leaves no manifest behind.
        """
        uris = list(uris)
        if not uris:
            raise EmptyDataset("a dataset needs at least one uri")
        seen = set()
        for uri in uris:
            check_uri(uri)
            if uri in seen:
                raise DuplicateUri(uri)
            seen.add(uri)
        manifest = DatasetManifest(
            dataset_id=new_id(),
            name=name,
            owner=owner,
            created_at=utcnow(),
            samples=tuple(SampleRef(i, u) for i, u in enumerate(uris)),
        )
        atomic_write_json(self._manifest_path(manifest.dataset_id), manifest.to_dict())
        with self._lock:
            self._manifests[manifest.dataset_id] = manifest
        log.info("ingested dataset %s (%d samples)", manifest.dataset_id, len(uris))
        return manifest

    def get_manifest(self, dataset_id: str) -> DatasetManifest:
        with self._lock:
            manifest = self._manifests.get(dataset_id)
            if manifest is None:
                path = self._manifest_path(dataset_id)
                if not dataset_id.isalnum() or not path.exists():
                    raise UnknownDataset(f"unknown dataset {dataset_id!r}")
                manifest = DatasetManifest.from_dict(json.loads(path.read_text()))
                self._manifests[dataset_id] = manifest
            pending = self._pending_hashes.get(dataset_id)
            if pending:
                samples = list(manifest.samples)
                for sid, digest in pending.items():
                    if samples[sid].content_hash is None:
                        samples[sid] = samples[sid].with_hash(digest)
                manifest = DatasetManifest(
                    manifest.dataset_id, manifest.name, manifest.owner, manifest.created_at, tuple(samples)
                )
                self._manifests[dataset_id] = manifest
                self._pending_hashes[dataset_id] = {}
            return manifest

    def list_datasets(self) -> list[str]:
        return sorted(p.stem for p in self.datasets_dir.glob("*.json"))

    def validate_store(self) -> list[str]:
        """Re-validate every manifest file and the cache index."""
        problems = []
        for path in self.datasets_dir.glob("*.json"):
            try:
                manifest = DatasetManifest.from_dict(json.loads(path.read_text()))
            except (ValueError, KeyError, TypeError) as exc:
                problems.append(f"{path.name}: unreadable ({exc})")
                continue
            problems += [f"{path.name}: {i.code} at {i.position}" for i in validate_manifest(manifest)]
        return problems + self.cache.validate()

    def flush(self) -> None:
        """Persist recorded content hashes and the cache index."""
        with self._lock:
            dirty = [d for d, pending in self._pending_hashes.items() if pending]
            for dataset_id in dirty:
                manifest = self.get_manifest(dataset_id)
                atomic_write_json(self._manifest_path(dataset_id), manifest.to_dict())
            self.cache.flush()
            self._unflushed = 0

    # -- fetching ------------------------------------------------------------

    def _remote(self, uri: str) -> bytes:
        last: Exception | None = None
        for _ in range(2):  # one retry
            with self._lock:
                self.remote_fetches += 1
                self.remote_by_uri[uri] += 1
            try:
                return self._fetcher(uri, self.fetch_timeout)
            except Exception as exc:  # noqa: BLE001 - any transport error is a fetch failure
                last = exc
        raise FetchFailed(uri, f"{type(last).__name__}: {last}")

    def _record_hash(self, dataset_id: str | None, ref: SampleRef, digest: str) -> None:
        if dataset_id is None or ref.content_hash == digest:
            return
        with self._lock:
            self._pending_hashes.setdefault(dataset_id, {})[ref.id] = digest

    def fetch(self, ref: SampleRef, policy: FetchPolicy = "cache", dataset_id: str | None = None) -> FetchResult:
        """Return the bytes behind ``ref``.

        With ``policy="cache"`` a known, intact payload is served from disk
        without touching the source; concurrent fetches of one uri share a
        single remote access.  A corrupt cached file is evicted and fetched
        again once.
        """
        start = time.perf_counter()
        if policy == "no_cache":
            data = self._remote(ref.uri)
            digest = sha256_hex(data)
            self._check_known(ref, digest)
            return FetchResult(ref.id, data, False, time.perf_counter() - start, digest)

        with self._lock:
            gate = self._inflight.setdefault(ref.uri, threading.Lock())
        with gate:
            digest = ref.content_hash or self.cache.lookup_uri(ref.uri)
            if digest is not None and self.cache.has_payload(digest):
                try:
                    data = self.cache.read_payload(digest)
                except HashMismatch:
                    log.warning("cache entry for %s corrupt; refetching", ref.uri)
                else:
                    self._record_hash(dataset_id, ref, digest)
                    return FetchResult(ref.id, data, True, time.perf_counter() - start, digest)
            data = self._remote(ref.uri)
            digest = sha256_hex(data)
            self._check_known(ref, digest)
            self.cache.store_payload(ref.uri, data)
            self._record_hash(dataset_id, ref, digest)
        with self._lock:
            self._unflushed += 1
            flush = self._unflushed >= _FLUSH_EVERY
        if flush:
            self.flush()
        if self.cache_max_bytes is not None and self.cache.total_bytes() > self.cache_max_bytes:
            self.cache.evict(self.cache_max_bytes)
        return FetchResult(ref.id, data, False, time.perf_counter() - start, digest)

    @staticmethod
    def _check_known(ref: SampleRef, digest: str) -> None:
        if ref.content_hash is not None and ref.content_hash != digest:
            raise HashMismatch(f"{ref.uri} changed at the source (expected {ref.content_hash}, got {digest})")

    def fetch_many(
        self, refs: Iterable[SampleRef], policy: FetchPolicy = "cache", dataset_id: str | None = None
    ) -> list[FetchResult]:
        with ThreadPoolExecutor(self.fetch_concurrency) as pool:
            results = list(pool.map(lambda r: self.fetch(r, policy, dataset_id), refs))
        self.flush()
        return results

    # -- model outputs -------------------------------------------------------

    def get_cached_inference(self, content_hash: str, model_version: str):
        return self.cache.get_inference(content_hash, model_version)

    def put_cached_inference(self, content_hash: str, model_version: str, prob_row, embed_row) -> None:
        self.cache.put_inference(content_hash, model_version, prob_row, embed_row)

    def evict(self, max_bytes: int) -> int:
        return self.cache.evict(max_bytes)
