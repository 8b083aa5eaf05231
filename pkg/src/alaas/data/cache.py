"""Content-addressed payload cache plus a model-output cache.

Layout under ``cache_dir``::

    payloads/<sha256>            raw sample bytes
    index.json                   payload entries and the uri -> hash map
    inference/<model>.json       {hash: {"prob_row": [...], "embed_row": [...]}}

All JSON files are replaced atomically (write to a temp file, then rename),
so a crash leaves either the old or the new version on disk.
"""

from __future__ import annotations

import hashlib
import json
import logging
import os
import tempfile
import threading
import time
from dataclasses import dataclass
from pathlib import Path
from typing import Any
from urllib.parse import quote

import numpy as np

from alaas.errors import CacheWriteFailed, HashMismatch, MalformedRow
from alaas.models import SIMPLEX_TOL

log = logging.getLogger(__name__)

INDEX_VERSION = 1


def sha256_hex(data: bytes) -> str:
    return hashlib.sha256(data).hexdigest()


def atomic_write_json(path: Path, obj: Any) -> None:
    path.parent.mkdir(parents=True, exist_ok=True)
    fd, tmp = tempfile.mkstemp(dir=path.parent, prefix=f".{path.name}.", suffix=".tmp")
    try:
        with os.fdopen(fd, "w") as fh:
            json.dump(obj, fh, separators=(",", ":"))
            fh.flush()
            os.fsync(fh.fileno())
        os.replace(tmp, path)
    except BaseException:
        try:
            os.unlink(tmp)
        except FileNotFoundError:
            pass
        raise


@dataclass
class CacheEntry:
    content_hash: str
    payload_path: str
    size_bytes: int
    last_access: float

    def to_dict(self) -> dict[str, Any]:
        return {
            "content_hash": self.content_hash,
            "payload_path": self.payload_path,
            "size_bytes": self.size_bytes,
            "last_access": self.last_access,
        }


class ContentCache:
    def __init__(self, cache_dir: str | os.PathLike):
        self.root = Path(cache_dir)
        self.payload_dir = self.root / "payloads"
        self.inference_dir = self.root / "inference"
        self.index_path = self.root / "index.json"
        self.payload_dir.mkdir(parents=True, exist_ok=True)
        self.inference_dir.mkdir(parents=True, exist_ok=True)
        self._lock = threading.RLock()
        self._entries: dict[str, CacheEntry] = {}
        self._uris: dict[str, str] = {}
        self._inference: dict[str, dict[str, dict[str, list[float]]]] = {}
        self._clock = 0.0
        self._load_index()

    # -- index ---------------------------------------------------------------

    def _load_index(self) -> None:
        if not self.index_path.exists():
            return
        try:
            raw = json.loads(self.index_path.read_text())
            entries = raw["payloads"]
            uris = raw["uris"]
        except (OSError, ValueError, KeyError, TypeError) as exc:
            log.warning("discarding unreadable cache index %s: %s", self.index_path, exc)
            return
        for digest, e in entries.items():
            entry = CacheEntry(digest, e["payload_path"], int(e["size_bytes"]), float(e["last_access"]))
            path = self.root / entry.payload_path
            if path.is_file() and path.stat().st_size == entry.size_bytes:
                self._entries[digest] = entry
        self._uris = {u: h for u, h in uris.items() if isinstance(h, str)}
        if self._entries:
            self._clock = max(e.last_access for e in self._entries.values())

    def validate(self) -> list[str]:
        """Problems with the on-disk index; empty means consistent."""
        problems = []
        try:
            raw = json.loads(self.index_path.read_text()) if self.index_path.exists() else {
                "version": INDEX_VERSION, "payloads": {}, "uris": {}}
        except ValueError as exc:
            return [f"index.json is not valid JSON: {exc}"]
        for key in ("payloads", "uris"):
            if not isinstance(raw.get(key), dict):
                problems.append(f"index.json lacks {key!r}")
        if problems:
            return problems
        for digest, e in raw["payloads"].items():
            path = self.root / e["payload_path"]
            if not path.is_file():
                problems.append(f"payload for {digest} missing")
            elif sha256_hex(path.read_bytes()) != digest:
                problems.append(f"payload for {digest} does not match its hash")
        return problems

    def flush(self) -> None:
        with self._lock:
            snapshot = {
                "version": INDEX_VERSION,
                "payloads": {h: e.to_dict() for h, e in self._entries.items()},
                "uris": dict(self._uris),
            }
            try:
                atomic_write_json(self.index_path, snapshot)
            except OSError as exc:
                raise CacheWriteFailed(f"cannot write {self.index_path}: {exc}") from exc

    def _tick(self) -> float:
        # strictly increasing so LRU order is total even within one clock tick
        self._clock = max(self._clock + 1e-6, time.time())
        return self._clock

    # -- payloads ------------------------------------------------------------

    def lookup_uri(self, uri: str) -> str | None:
        with self._lock:
            return self._uris.get(uri)

    def has_payload(self, digest: str) -> bool:
        with self._lock:
            return digest in self._entries

    def entry(self, digest: str) -> CacheEntry | None:
        with self._lock:
            return self._entries.get(digest)

    def read_payload(self, digest: str) -> bytes:
        """Return cached bytes; a corrupt file is evicted and HashMismatch raised."""
        with self._lock:
            entry = self._entries.get(digest)
            if entry is None:
                raise KeyError(digest)
            entry.last_access = self._tick()
            path = self.root / entry.payload_path
        try:
            data = path.read_bytes()
        except OSError:
            data = None
        if data is None or sha256_hex(data) != digest:
            self.drop_payload(digest)
            raise HashMismatch(f"cached payload {digest} is corrupt")
        return data

    def store_payload(self, uri: str, data: bytes) -> str:
        digest = sha256_hex(data)
        rel = f"payloads/{digest}"
        path = self.root / rel
        with self._lock:
            if digest not in self._entries:
                tmp = path.with_name(f".{digest}.{threading.get_ident()}.tmp")
                try:
                    tmp.write_bytes(data)
                    os.replace(tmp, path)
                except OSError as exc:
                    raise CacheWriteFailed(f"cannot write payload {digest}: {exc}") from exc
                self._entries[digest] = CacheEntry(digest, rel, len(data), self._tick())
            else:
                self._entries[digest].last_access = self._tick()
            self._uris[uri] = digest
        return digest

    def drop_payload(self, digest: str) -> None:
        with self._lock:
            entry = self._entries.pop(digest, None)
            if entry is not None:
                try:
                    (self.root / entry.payload_path).unlink()
                except FileNotFoundError:
                    pass

    def total_bytes(self) -> int:
        with self._lock:
            return sum(e.size_bytes for e in self._entries.values())

    def evict(self, max_bytes: int) -> int:
        """Drop least-recently-used payloads until the total fits ``max_bytes``.

        Cached model outputs are kept.  Returns the number of payloads removed.
        """
        if max_bytes < 0:
            raise ValueError("max_bytes must be >= 0")
        evicted = 0
        with self._lock:
            total = self.total_bytes()
            for entry in sorted(self._entries.values(), key=lambda e: e.last_access):
                if total <= max_bytes:
                    break
                self.drop_payload(entry.content_hash)
                total -= entry.size_bytes
                evicted += 1
            if evicted:
                self.flush()
        return evicted

    # -- model outputs -------------------------------------------------------

    def _inference_path(self, model_version: str) -> Path:
        return self.inference_dir / f"{quote(model_version, safe='')}.json"

    def _inference_table(self, model_version: str) -> dict[str, dict[str, list[float]]]:
        table = self._inference.get(model_version)
        if table is None:
            path = self._inference_path(model_version)
            table = {}
            if path.exists():
                try:
                    table = json.loads(path.read_text())
                except ValueError as exc:
                    log.warning("discarding unreadable inference cache %s: %s", path, exc)
            self._inference[model_version] = table
        return table

    def get_inference(self, digest: str, model_version: str) -> tuple[np.ndarray, np.ndarray] | None:
        with self._lock:
            row = self._inference_table(model_version).get(digest)
        if row is None:
            return None
        return np.array(row["prob_row"], dtype=np.float64), np.array(row["embed_row"], dtype=np.float64)

    def put_inference_many(self, model_version: str, rows: dict[str, tuple]) -> None:
        """Store several ``hash -> (prob_row, embed_row)`` pairs with one durable write."""
        checked = {}
        for digest, (prob_row, embed_row) in rows.items():
            prob = np.asarray(prob_row, dtype=np.float64)
            embed = np.asarray(embed_row, dtype=np.float64)
            if (
                prob.ndim != 1
                or prob.size < 2
                or not np.all(np.isfinite(prob))
                or prob.min() < 0
                or abs(prob.sum() - 1.0) > SIMPLEX_TOL
            ):
                raise MalformedRow(f"prob_row for {digest} is not a probability distribution")
            if embed.ndim != 1 or not np.all(np.isfinite(embed)):
                raise MalformedRow(f"embed_row for {digest} is not a finite vector")
            checked[digest] = {"prob_row": prob.tolist(), "embed_row": embed.tolist()}
        with self._lock:
            table = self._inference_table(model_version)
            table.update(checked)
            try:
                atomic_write_json(self._inference_path(model_version), table)
            except OSError as exc:
                raise CacheWriteFailed(f"cannot write inference cache: {exc}") from exc

    def put_inference(self, digest: str, model_version: str, prob_row, embed_row) -> None:
        self.put_inference_many(model_version, {digest: (prob_row, embed_row)})
