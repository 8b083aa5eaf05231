"""Request and response bodies of the HTTP API.

``wire_schema()`` renders every model to JSON Schema; the result is shipped
as ``alaas/schemas/wire.json`` so clients can validate responses without
importing this package.  ``python -m alaas.server.schemas`` regenerates it.
"""

from __future__ import annotations

import json
from importlib import resources
from pathlib import Path
from typing import Literal

from pydantic import BaseModel, ConfigDict, Field

JobState = Literal["queued", "running", "done", "failed", "cancelled"]
TERMINAL_STATES = frozenset({"done", "failed", "cancelled"})


class _Wire(BaseModel):
    model_config = ConfigDict(extra="forbid")


class ErrorBody(_Wire):
    code: str
    message: str


class Health(_Wire):
    status: Literal["ok"]
    version: str


class DatasetCreate(_Wire):
    uris: list[str]
    name: str = ""
    owner: str = ""


class DatasetCreated(_Wire):
    dataset_id: str
    size: int


class Sample(_Wire):
    id: int
    uri: str
    content_hash: str | None


class Dataset(_Wire):
    dataset_id: str
    name: str
    owner: str
    created_at: str
    samples: list[Sample]


class QueryCreate(_Wire):
    """Omitted fields default from the server's ``active_learning`` section."""

    dataset_id: str
    strategy: str | None = None
    budget: int | None = None
    batch_size: int | None = None
    seed: int = Field(0, ge=0, le=2**64 - 1)
    labeled_ids: list[int] = Field(default_factory=list)
    beta: int | None = None


class Query(_Wire):
    dataset_id: str
    strategy: str
    budget: int
    batch_size: int
    seed: int
    labeled_ids: list[int]
    beta: int


class StageStats(_Wire):
    items: int
    busy_time: float
    idle_time: float


class Timing(_Wire):
    stages: dict[str, StageStats]
    wall_clock: float
    throughput: float
    skipped: list[int]


class SelectedSample(_Wire):
    id: int
    uri: str
    score: float | None


class Report(_Wire):
    job_id: str
    dataset_id: str
    strategy: str
    budget: int
    selected: list[SelectedSample]
    timing: Timing
    completed_at: str


class QueryAccepted(_Wire):
    job_id: str
    state: JobState


class Job(_Wire):
    job_id: str
    state: JobState
    query: Query
    report: Report | None = None
    error: str | None = None
    submitted_at: str
    updated_at: str


WIRE_MODELS: dict[str, type[BaseModel]] = {
    m.__name__: m
    for m in (ErrorBody, Health, DatasetCreate, DatasetCreated, Dataset, QueryCreate, QueryAccepted, Job, Report)
}


def wire_schema() -> dict:
    return {name: model.model_json_schema() for name, model in WIRE_MODELS.items()}


def shipped_schema() -> dict:
    return json.loads(resources.files("alaas").joinpath("schemas/wire.json").read_text())


if __name__ == "__main__":
    out = Path(__file__).resolve().parent.parent / "schemas" / "wire.json"
    out.write_text(json.dumps(wire_schema(), indent=2, sort_keys=True) + "\n")
    print(f"wrote {out}")
