"""Shared domain types.

Everything here is immutable after construction and JSON-serialisable with
snake_case field names (``to_dict`` / ``from_dict``).  Matrices hold
read-only ``float64`` numpy arrays.
"""

from __future__ import annotations

import enum
import math
import uuid
from dataclasses import dataclass, field, replace
from datetime import datetime, timezone
from typing import Any, Iterable, Mapping, Sequence
from urllib.parse import urlparse

import numpy as np

from alaas.errors import MalformedMatrix, UnknownStrategy, UnsupportedScheme

SUPPORTED_SCHEMES = ("file", "http", "https", "s3", "ftp")
MAX_SAMPLE_ID = 2**64 - 1
SIMPLEX_TOL = 1e-6
STAGES = ("fetch", "preprocess", "infer", "select")


def utcnow() -> datetime:
    return datetime.now(timezone.utc).replace(microsecond=0)


def format_time(ts: datetime) -> str:
    return ts.astimezone(timezone.utc).strftime("%Y-%m-%dT%H:%M:%SZ")


def parse_time(text: str) -> datetime:
    if text.endswith("Z"):
        text = text[:-1] + "+00:00"
    return datetime.fromisoformat(text).astimezone(timezone.utc)


def new_id() -> str:
    """Random 128-bit identifier as 32 lowercase hex digits."""
    return uuid.uuid4().hex


def check_uri(uri: str) -> str:
    """Return ``uri`` unchanged if it parses under a supported scheme."""
    if not isinstance(uri, str) or not uri:
        raise UnsupportedScheme(str(uri))
    try:
        parts = urlparse(uri)
    except ValueError:
        raise UnsupportedScheme(uri) from None
    if parts.scheme not in SUPPORTED_SCHEMES:
        raise UnsupportedScheme(uri)
    if parts.scheme == "file":
        if not parts.path or parts.path == "/":
            raise UnsupportedScheme(uri)
    elif not parts.netloc:
        raise UnsupportedScheme(uri)
    elif parts.scheme == "s3" and parts.path in ("", "/"):
        raise UnsupportedScheme(uri)
    return uri


class StrategyKind(str, enum.Enum):
    RANDOM = "Random"
    LC = "LC"
    MC = "MC"
    RC = "RC"
    ES = "ES"
    KMEANS = "KMeans"
    KCG = "KCG"
    CORESET = "CoreSet"
    DBAL = "DBAL"

    @classmethod
    def parse(cls, name: str | StrategyKind) -> StrategyKind:
        if isinstance(name, StrategyKind):
            return name
        try:
            return STRATEGY_ALIASES[name]
        except (KeyError, TypeError):
            raise UnknownStrategy(
                f"unknown strategy {name!r}; valid names: {', '.join(STRATEGY_ALIASES)}"
            ) from None

    @property
    def needs_probs(self) -> bool:
        return self in (StrategyKind.LC, StrategyKind.MC, StrategyKind.RC, StrategyKind.ES, StrategyKind.DBAL)

    @property
    def needs_embeds(self) -> bool:
        return self in (StrategyKind.KMEANS, StrategyKind.KCG, StrategyKind.CORESET, StrategyKind.DBAL)


STRATEGY_ALIASES: dict[str, StrategyKind] = {
    "LC": StrategyKind.LC,
    "LeastConfidence": StrategyKind.LC,
    "MC": StrategyKind.MC,
    "MarginConfidence": StrategyKind.MC,
    "RC": StrategyKind.RC,
    "RatioConfidence": StrategyKind.RC,
    "ES": StrategyKind.ES,
    "EntropySampling": StrategyKind.ES,
    "KMeans": StrategyKind.KMEANS,
    "KMeansSampling": StrategyKind.KMEANS,
    "KCG": StrategyKind.KCG,
    "KCenterGreedy": StrategyKind.KCG,
    "CoreSet": StrategyKind.CORESET,
    "Coreset": StrategyKind.CORESET,
    "DBAL": StrategyKind.DBAL,
    "DiverseMiniBatch": StrategyKind.DBAL,
    "Random": StrategyKind.RANDOM,
    "RandomSampling": StrategyKind.RANDOM,
}

DEFAULT_DBAL_BETA = 10


@dataclass(frozen=True)
class SampleRef:
    id: int
    uri: str
    content_hash: str | None = None

    def with_hash(self, digest: str) -> SampleRef:
        if self.content_hash is not None and self.content_hash != digest:
            raise ValueError(f"content_hash of sample {self.id} is already set")
        return replace(self, content_hash=digest)

    def to_dict(self) -> dict[str, Any]:
        return {"id": self.id, "uri": self.uri, "content_hash": self.content_hash}

    @classmethod
    def from_dict(cls, d: Mapping[str, Any]) -> SampleRef:
        return cls(id=int(d["id"]), uri=d["uri"], content_hash=d.get("content_hash"))


@dataclass(frozen=True)
class DatasetManifest:
    dataset_id: str
    name: str
    owner: str
    created_at: datetime
    samples: tuple[SampleRef, ...] = ()

    def __post_init__(self):
        object.__setattr__(self, "samples", tuple(self.samples))

    def __len__(self) -> int:
        return len(self.samples)

    @property
    def ids(self) -> list[int]:
        return [s.id for s in self.samples]

    def to_dict(self) -> dict[str, Any]:
        return {
            "dataset_id": self.dataset_id,
            "name": self.name,
            "owner": self.owner,
            "created_at": format_time(self.created_at),
            "samples": [s.to_dict() for s in self.samples],
        }

    @classmethod
    def from_dict(cls, d: Mapping[str, Any]) -> DatasetManifest:
        return cls(
            dataset_id=d["dataset_id"],
            name=d["name"],
            owner=d["owner"],
            created_at=parse_time(d["created_at"]),
            samples=tuple(SampleRef.from_dict(s) for s in d["samples"]),
        )


@dataclass(frozen=True)
class ManifestIssue:
    code: str
    position: int
    detail: str


def validate_manifest(manifest: DatasetManifest) -> list[ManifestIssue]:
    """Every invariant violation in ``manifest``; an empty list means ok."""
    issues: list[ManifestIssue] = []
    seen: dict[str, int] = {}
    for pos, ref in enumerate(manifest.samples):
        if ref.id != pos:
            issues.append(ManifestIssue("IdPositionMismatch", pos, f"sample at position {pos} has id {ref.id}"))
        try:
            check_uri(ref.uri)
        except UnsupportedScheme:
            issues.append(ManifestIssue("UnsupportedScheme", pos, f"unsupported uri {ref.uri!r}"))
        if ref.uri in seen:
            issues.append(ManifestIssue("DuplicateUri", pos, f"{ref.uri} already at position {seen[ref.uri]}"))
        else:
            seen[ref.uri] = pos
    return issues


def _frozen_matrix(data, ncols: int | None = None) -> np.ndarray:
    arr = np.array(data, dtype=np.float64)
    if arr.ndim == 1:
        if ncols is None:
            raise MalformedMatrix("flat data needs a column count")
        if ncols <= 0 or arr.size % ncols:
            raise MalformedMatrix(f"{arr.size} values do not form rows of width {ncols}")
        arr = arr.reshape(-1, ncols)
    if arr.ndim != 2:
        raise MalformedMatrix(f"expected a 2-D matrix, got shape {arr.shape}")
    arr.setflags(write=False)
    return arr


def check_simplex(data: np.ndarray, tol: float = SIMPLEX_TOL) -> None:
    """Raise MalformedMatrix unless every row is a probability distribution."""
    if data.size and (not np.all(np.isfinite(data)) or data.min() < 0.0 or data.max() > 1.0):
        bad = int(np.argwhere(~((data >= 0) & (data <= 1)))[0][0])
        raise MalformedMatrix(f"row {bad} has entries outside [0, 1]")
    sums = data.sum(axis=1)
    off = np.abs(sums - 1.0) > tol
    if off.any():
        bad = int(np.argmax(off))
        raise MalformedMatrix(f"row {bad} sums to {sums[bad]!r}, not 1")


class _Matrix:
    __slots__ = ()

    def __eq__(self, other):
        if type(other) is not type(self):
            return NotImplemented
        return self.row_ids == other.row_ids and np.array_equal(self.data, other.data)

    def __hash__(self):
        return hash((type(self).__name__, self.row_ids, self.data.tobytes()))

    def __len__(self) -> int:
        return self.data.shape[0]

    @property
    def rows(self) -> int:
        return self.data.shape[0]

    def take(self, positions: Sequence[int]):
        idx = np.asarray(positions, dtype=np.intp)
        return type(self)(self.data[idx], tuple(self.row_ids[i] for i in idx))

    def sorted_by_id(self):
        order = sorted(range(len(self.row_ids)), key=self.row_ids.__getitem__)
        if order == list(range(len(order))):
            return self
        return self.take(order)


@dataclass(frozen=True, eq=False)
class ProbabilityMatrix(_Matrix):
    data: np.ndarray
    row_ids: tuple[int, ...]

    def __post_init__(self):
        data = _frozen_matrix(self.data)
        object.__setattr__(self, "data", data)
        object.__setattr__(self, "row_ids", tuple(int(i) for i in self.row_ids))
        if data.shape[0] != len(self.row_ids):
            raise MalformedMatrix(f"{data.shape[0]} rows but {len(self.row_ids)} row_ids")
        if data.shape[1] < 2:
            raise MalformedMatrix("need at least two classes")
        check_simplex(data)

    @property
    def classes(self) -> int:
        return self.data.shape[1]

    def to_dict(self) -> dict[str, Any]:
        return {
            "rows": self.rows,
            "classes": self.classes,
            "data": self.data.ravel().tolist(),
            "row_ids": list(self.row_ids),
        }

    @classmethod
    def from_dict(cls, d: Mapping[str, Any]) -> ProbabilityMatrix:
        data = _frozen_matrix(d["data"], int(d["classes"])) if d["rows"] else np.zeros((0, int(d["classes"])))
        if data.shape[0] != int(d["rows"]):
            raise MalformedMatrix("rows field disagrees with data length")
        return cls(data, tuple(d["row_ids"]))


@dataclass(frozen=True, eq=False)
class EmbeddingMatrix(_Matrix):
    data: np.ndarray
    row_ids: tuple[int, ...]

    def __post_init__(self):
        data = _frozen_matrix(self.data)
        object.__setattr__(self, "data", data)
        object.__setattr__(self, "row_ids", tuple(int(i) for i in self.row_ids))
        if data.shape[0] != len(self.row_ids):
            raise MalformedMatrix(f"{data.shape[0]} rows but {len(self.row_ids)} row_ids")
        if data.shape[1] < 1:
            raise MalformedMatrix("embedding dimension must be >= 1")
        if not np.all(np.isfinite(data)):
            raise MalformedMatrix("embeddings must be finite")

    @property
    def dim(self) -> int:
        return self.data.shape[1]

    def to_dict(self) -> dict[str, Any]:
        return {
            "rows": self.rows,
            "dim": self.dim,
            "data": self.data.ravel().tolist(),
            "row_ids": list(self.row_ids),
        }

    @classmethod
    def from_dict(cls, d: Mapping[str, Any]) -> EmbeddingMatrix:
        data = _frozen_matrix(d["data"], int(d["dim"])) if d["rows"] else np.zeros((0, int(d["dim"])))
        if data.shape[0] != int(d["rows"]):
            raise MalformedMatrix("rows field disagrees with data length")
        return cls(data, tuple(d["row_ids"]))

    @classmethod
    def empty(cls, dim: int) -> EmbeddingMatrix:
        return cls(np.zeros((0, dim)), ())


@dataclass(frozen=True)
class ALQuery:
    dataset_id: str
    strategy: StrategyKind
    budget: int
    batch_size: int = 16
    seed: int = 0
    labeled_ids: tuple[int, ...] = ()
    beta: int = DEFAULT_DBAL_BETA

    def __post_init__(self):
        object.__setattr__(self, "strategy", StrategyKind.parse(self.strategy))
        object.__setattr__(self, "labeled_ids", tuple(int(i) for i in self.labeled_ids))
        for name in ("budget", "batch_size", "beta"):
            if int(getattr(self, name)) < 1:
                raise ValueError(f"{name} must be a positive integer")
        if not 0 <= self.seed <= MAX_SAMPLE_ID:
            raise ValueError("seed must be an unsigned 64-bit integer")

    def to_dict(self) -> dict[str, Any]:
        return {
            "dataset_id": self.dataset_id,
            "strategy": self.strategy.value,
            "budget": self.budget,
            "batch_size": self.batch_size,
            "seed": self.seed,
            "labeled_ids": list(self.labeled_ids),
            "beta": self.beta,
        }

    @classmethod
    def from_dict(cls, d: Mapping[str, Any]) -> ALQuery:
        return cls(
            dataset_id=d["dataset_id"],
            strategy=d["strategy"],
            budget=int(d["budget"]),
            batch_size=int(d.get("batch_size", 16)),
            seed=int(d.get("seed", 0)),
            labeled_ids=tuple(d.get("labeled_ids", ())),
            beta=int(d.get("beta", DEFAULT_DBAL_BETA)),
        )


@dataclass(frozen=True)
class StageStats:
    items: int = 0
    busy_time: float = 0.0
    idle_time: float = 0.0

    def to_dict(self) -> dict[str, Any]:
        return {"items": self.items, "busy_time": self.busy_time, "idle_time": self.idle_time}

    @classmethod
    def from_dict(cls, d: Mapping[str, Any]) -> StageStats:
        return cls(int(d["items"]), float(d["busy_time"]), float(d["idle_time"]))


@dataclass(frozen=True)
class StageMetrics:
    stages: Mapping[str, StageStats]
    wall_clock: float
    throughput: float
    skipped: tuple[int, ...] = ()

    def to_dict(self) -> dict[str, Any]:
        return {
            "stages": {k: v.to_dict() for k, v in self.stages.items()},
            "wall_clock": self.wall_clock,
            "throughput": self.throughput,
            "skipped": list(self.skipped),
        }

    @classmethod
    def from_dict(cls, d: Mapping[str, Any]) -> StageMetrics:
        return cls(
            stages={k: StageStats.from_dict(v) for k, v in d["stages"].items()},
            wall_clock=float(d["wall_clock"]),
            throughput=float(d["throughput"]),
            skipped=tuple(d.get("skipped", ())),
        )

    @classmethod
    def zero(cls) -> StageMetrics:
        return cls({s: StageStats() for s in STAGES}, 0.0, 0.0)


@dataclass(frozen=True)
class SelectedSample:
    id: int
    uri: str
    # None stands in for a non-finite score (first k-center pick with no labeled pool)
    score: float | None

    def to_dict(self) -> dict[str, Any]:
        return {"id": self.id, "uri": self.uri, "score": self.score}

    @classmethod
    def from_dict(cls, d: Mapping[str, Any]) -> SelectedSample:
        score = d.get("score")
        return cls(int(d["id"]), d["uri"], None if score is None else float(score))


@dataclass(frozen=True)
class ALReport:
    job_id: str
    dataset_id: str
    strategy: StrategyKind
    budget: int
    selected: tuple[SelectedSample, ...]
    timing: StageMetrics = field(default_factory=StageMetrics.zero)
    completed_at: datetime = field(default_factory=utcnow)

    def __post_init__(self):
        object.__setattr__(self, "strategy", StrategyKind.parse(self.strategy))
        object.__setattr__(self, "selected", tuple(self.selected))

    @property
    def ids(self) -> list[int]:
        return [s.id for s in self.selected]

    @property
    def uris(self) -> list[str]:
        return [s.uri for s in self.selected]

    def to_dict(self) -> dict[str, Any]:
        return {
            "job_id": self.job_id,
            "dataset_id": self.dataset_id,
            "strategy": self.strategy.value,
            "budget": self.budget,
            "selected": [s.to_dict() for s in self.selected],
            "timing": self.timing.to_dict(),
            "completed_at": format_time(self.completed_at),
        }

    @classmethod
    def from_dict(cls, d: Mapping[str, Any]) -> ALReport:
        return cls(
            job_id=d["job_id"],
            dataset_id=d["dataset_id"],
            strategy=d["strategy"],
            budget=int(d["budget"]),
            selected=tuple(SelectedSample.from_dict(s) for s in d["selected"]),
            timing=StageMetrics.from_dict(d["timing"]),
            completed_at=parse_time(d["completed_at"]),
        )


def wire_score(x: float) -> float | None:
    return float(x) if math.isfinite(x) else None


def ids_of(samples: Iterable[SampleRef]) -> list[int]:
    return [s.id for s in samples]
