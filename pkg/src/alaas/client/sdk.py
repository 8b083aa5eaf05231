"""Blocking Python client for the HTTP API.

    client = ALClient(ClientConfig("http://127.0.0.1:8081"))
    ds = client.push_dataset("./images")
    report = client.query_and_wait(ds, "LC", budget=100)
    print(report.uris)
"""

from __future__ import annotations

import os
import time
from dataclasses import dataclass
from pathlib import Path
from typing import Any, Iterable, Sequence

import httpx

from alaas.errors import (
    EmptyDataset,
    JobFailed,
    PollTimeout,
    ServerError,
    ServerUnreachable,
    ValidationFailed,
)
from alaas.models import ALReport, StrategyKind

DEFAULT_SERVER = "http://127.0.0.1:8081"


@dataclass(frozen=True)
class ClientConfig:
    server_url: str = DEFAULT_SERVER
    request_timeout_ms: float = 10_000
    poll_interval_ms: float = 200
    max_poll_time_ms: float = 3_600_000

    def __post_init__(self):
        if self.request_timeout_ms <= 0 or self.poll_interval_ms <= 0:
            raise ValueError("timeouts and poll interval must be positive")
        if self.poll_interval_ms > self.max_poll_time_ms:
            raise ValueError("poll_interval_ms must not exceed max_poll_time_ms")


def expand_directory(directory: str | os.PathLike) -> list[str]:
    """file:// URIs for every regular file under ``directory``, sorted by path."""
    root = Path(directory).resolve()
    if not root.is_dir():
        raise ValidationFailed(f"{directory} is not a directory")
    files = sorted((p for p in root.rglob("*") if p.is_file()), key=lambda p: str(p))
    return [p.as_uri() for p in files]


class ALClient:
    """Thread-safe: httpx.Client may be shared across threads."""

    def __init__(self, config: ClientConfig | str | None = None, transport: httpx.BaseTransport | None = None):
        if config is None or isinstance(config, str):
            config = ClientConfig(config or DEFAULT_SERVER)
        self.config = config
        self._http = httpx.Client(
            base_url=config.server_url.rstrip("/"),
            timeout=config.request_timeout_ms / 1000.0,
            transport=transport,
        )

    def close(self) -> None:
        self._http.close()

    def __enter__(self) -> ALClient:
        return self

    def __exit__(self, *exc) -> None:
        self.close()

    def _request(self, method: str, path: str, **kw) -> Any:
        try:
            r = self._http.request(method, path, **kw)
        except httpx.TransportError as exc:
            raise ServerUnreachable(f"{self.config.server_url}: {type(exc).__name__}: {exc}") from exc
        try:
            body = r.json()
        except ValueError:
            body = None
        if r.status_code >= 400:
            if isinstance(body, dict) and "code" in body:
                raise ServerError(r.status_code, body["code"], body.get("message", ""))
            raise ServerError(r.status_code, "HTTPError", r.text[:200])
        return body

    # -- endpoints -------------------------------------------------------------

    def health(self) -> dict:
        return self._request("GET", "/v1/health")

    def push_dataset(self, source: str | os.PathLike | Sequence[str], name: str = "", owner: str = "") -> str:
        """Register a dataset from a list of URIs or a local directory; returns its id."""
        if isinstance(source, (str, os.PathLike)) and Path(source).is_dir():
            uris = expand_directory(source)
            name = name or Path(source).name
        elif isinstance(source, (str, os.PathLike)):
            raise ValidationFailed(f"{source} is not a directory; pass a list of URIs instead")
        else:
            uris = list(source)
        if not uris:
            raise EmptyDataset("no URIs to push")
        body = self._request("POST", "/v1/datasets", json={"uris": uris, "name": name, "owner": owner})
        return body["dataset_id"]

    def get_dataset(self, dataset_id: str) -> dict:
        return self._request("GET", f"/v1/datasets/{dataset_id}")

    def submit_query(
        self,
        dataset_id: str,
        strategy: str | StrategyKind | None = None,
        budget: int | None = None,
        seed: int = 0,
        labeled_ids: Iterable[int] = (),
        batch_size: int | None = None,
    ) -> str:
        body: dict[str, Any] = {"dataset_id": dataset_id, "seed": seed, "labeled_ids": sorted(set(labeled_ids))}
        if strategy is not None:
            body["strategy"] = StrategyKind.parse(strategy).value
        if budget is not None:
            if budget < 1:
                raise ValidationFailed("budget must be a positive integer")
            body["budget"] = budget
        if batch_size is not None:
            body["batch_size"] = batch_size
        return self._request("POST", "/v1/queries", json=body)["job_id"]

    def status(self, job_id: str) -> dict:
        return self._request("GET", f"/v1/queries/{job_id}")

    def cancel(self, job_id: str) -> dict:
        return self._request("DELETE", f"/v1/queries/{job_id}")

    def wait(self, job_id: str) -> ALReport:
        deadline = time.monotonic() + self.config.max_poll_time_ms / 1000.0
        while True:
            job = self.status(job_id)
            state = job["state"]
            if state == "done":
                return ALReport.from_dict(job["report"])
            if state in ("failed", "cancelled"):
                raise JobFailed(job_id, state, job.get("error") or state)
            if time.monotonic() >= deadline:
                raise PollTimeout(f"job {job_id} still {state} after {self.config.max_poll_time_ms:.0f} ms")
            time.sleep(self.config.poll_interval_ms / 1000.0)

    def query_and_wait(
        self,
        dataset_id: str,
        strategy: str | StrategyKind | None = None,
        budget: int | None = None,
        seed: int = 0,
        labeled_ids: Iterable[int] = (),
        batch_size: int | None = None,
    ) -> ALReport:
        return self.wait(self.submit_query(dataset_id, strategy, budget, seed, labeled_ids, batch_size))
