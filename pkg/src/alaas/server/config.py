"""YAML service configuration.

Every section rejects unknown keys so that a typo such as ``buget`` fails at
startup instead of silently falling back to a default.  Relative paths under
``data`` are resolved against the directory holding the config file.
"""

from __future__ import annotations

import os
from pathlib import Path
from typing import Any, Literal, Mapping

import yaml
from pydantic import BaseModel, ConfigDict, Field, ValidationError, field_validator, model_validator

from alaas import __version__
from alaas.errors import InvalidValue, ParseError, UnknownKey, ValidationFailed
from alaas.inference import BackendSpec, BatchPolicy
from alaas.models import DEFAULT_DBAL_BETA, StrategyKind
from alaas.pipeline import PipelineSpec, StageDelays


class _Section(BaseModel):
    model_config = ConfigDict(extra="forbid", validate_default=True)


class ActiveLearningConfig(_Section):
    strategy: StrategyKind
    budget: int = Field(ge=1)
    batch_size: int = Field(16, ge=1)
    dbal_beta: int = Field(DEFAULT_DBAL_BETA, ge=1)

    @field_validator("strategy", mode="before")
    @classmethod
    def _alias(cls, v):
        try:
            return StrategyKind.parse(v)
        except ValidationFailed as exc:
            raise ValueError(exc.message) from None


class ServerConfig(_Section):
    host: str = "127.0.0.1"
    port: int = Field(8081, ge=0, le=65535)
    workers: int = Field(2, ge=1)


class InferConfig(_Section):
    backend: Literal["mock", "remote"] = "mock"
    endpoint: str | None = None
    model_version: str = "mock-v1"
    classes: int = Field(10, ge=2)
    embed_dim: int = Field(16, ge=1)
    batch_limit: int = Field(256, ge=1)
    timeout_ms: float = Field(10_000, gt=0)

    @model_validator(mode="after")
    def _endpoint(self):
        if self.backend == "remote" and not self.endpoint:
            raise ValueError("endpoint is required when backend is remote")
        return self

    def backend_spec(self) -> BackendSpec:
        return BackendSpec(
            kind=self.backend,
            model_version=self.model_version,
            classes=self.classes,
            embed_dim=self.embed_dim,
            endpoint=self.endpoint,
            batch_limit=self.batch_limit,
            timeout_s=self.timeout_ms / 1000.0,
        )


class DataConfig(_Section):
    data_dir: Path = Path("alaas-data")
    cache_dir: Path | None = None  # default: <data_dir>/cache
    cache_max_bytes: int | None = Field(None, ge=0)
    fetch_concurrency: int = Field(8, ge=1)
    fetch_timeout_ms: float = Field(30_000, gt=0)
    s3_gateway_template: str | None = None


class DelayConfig(_Section):
    fetch_ms: float = Field(0.0, ge=0)
    preprocess_ms: float = Field(0.0, ge=0)
    infer_ms_per_item: float = Field(0.0, ge=0)
    infer_ms_per_call: float = Field(0.0, ge=0)


class PipelineConfig(_Section):
    mode: Literal["pipelined", "sequential_rounds", "sequential_whole"] = "pipelined"
    queue_capacity: int | None = Field(None, ge=1)  # default: 4 x batch_size
    infer_workers: int = Field(1, ge=1)
    max_wait_ms: float = Field(10.0, ge=0)
    failure_policy: Literal["abort", "skip"] = "abort"
    delays: DelayConfig = Field(default_factory=DelayConfig)

    def pipeline_spec(self, fetch_workers: int, batch_size: int) -> PipelineSpec:
        return PipelineSpec(
            mode=self.mode,
            queue_capacity=self.queue_capacity,
            fetch_workers=fetch_workers,
            infer_workers=self.infer_workers,
            batch=BatchPolicy(batch_size, self.max_wait_ms),
            failure_policy=self.failure_policy,
            delays=StageDelays(**self.delays.model_dump()),
        )


class ServiceConfig(_Section):
    name: str = "alaas"
    version: str = __version__
    active_learning: ActiveLearningConfig
    server: ServerConfig = Field(default_factory=ServerConfig)
    infer: InferConfig = Field(default_factory=InferConfig)
    data: DataConfig = Field(default_factory=DataConfig)
    pipeline: PipelineConfig = Field(default_factory=PipelineConfig)


def _error_key(loc: tuple) -> str:
    return ".".join(str(p) for p in loc)


def parse_config(raw: Any, base_dir: str | os.PathLike | None = None) -> ServiceConfig:
    """Validate an already-parsed mapping."""
    if raw is None:
        raw = {}
    if not isinstance(raw, Mapping):
        raise InvalidValue("<root>", "top level must be a mapping")
    try:
        cfg = ServiceConfig.model_validate(raw)
    except ValidationError as exc:
        errors = exc.errors()
        for err in errors:
            if err["type"] == "extra_forbidden":
                raise UnknownKey(str(err["loc"][-1]), _error_key(err["loc"])) from None
        err = errors[0]
        reason = err["msg"].removeprefix("Value error, ")
        raise InvalidValue(_error_key(err["loc"]) or "<root>", reason) from None
    if base_dir is not None:
        base = Path(base_dir)
        data = cfg.data
        updates = {"data_dir": base / data.data_dir if not data.data_dir.is_absolute() else data.data_dir}
        if data.cache_dir is not None and not data.cache_dir.is_absolute():
            updates["cache_dir"] = base / data.cache_dir
        cfg = cfg.model_copy(update={"data": data.model_copy(update=updates)})
    return cfg


def load_config(path: str | os.PathLike | None = None, env: Mapping[str, str] | None = None) -> ServiceConfig:
    """Read and validate a YAML config.

    ``path`` defaults to ``$ALAAS_CONFIG``; ``$ALAAS_HOST`` and ``$ALAAS_PORT``
    override ``server.host`` / ``server.port``.
    """
    env = os.environ if env is None else env
    path = path or env.get("ALAAS_CONFIG")
    if not path:
        raise ParseError("no config path given and ALAAS_CONFIG is unset")
    path = Path(path)
    try:
        text = path.read_text()
    except OSError as exc:
        raise ParseError(f"cannot read {path}: {exc.strerror}") from exc
    try:
        raw = yaml.safe_load(text)
    except yaml.YAMLError as exc:
        mark = getattr(exc, "problem_mark", None)
        line = mark.line + 1 if mark is not None else None
        raise ParseError(f"{path}: {exc}", line) from None
    cfg = parse_config(raw, path.parent)
    overrides = {}
    if env.get("ALAAS_HOST"):
        overrides["host"] = env["ALAAS_HOST"]
    if env.get("ALAAS_PORT"):
        try:
            overrides["port"] = int(env["ALAAS_PORT"])
        except ValueError:
            raise InvalidValue("ALAAS_PORT", "not an integer") from None
    if overrides:
        cfg = cfg.model_copy(update={"server": ServerConfig(**{**cfg.server.model_dump(), **overrides})})
    return cfg


# (key, default) rows for the README defaults table
def defaults_table() -> list[tuple[str, Any]]:
    rows = []
    for section, model in [("active_learning", ActiveLearningConfig), ("server", ServerConfig),
                           ("infer", InferConfig), ("data", DataConfig), ("pipeline", PipelineConfig)]:
        for name, info in model.model_fields.items():
            default = "(required)" if info.is_required() else info.get_default(call_default_factory=True)
            if isinstance(default, BaseModel):
                for sub, sub_info in type(default).model_fields.items():
                    rows.append((f"{section}.{name}.{sub}", sub_info.default))
                continue
            rows.append((f"{section}.{name}", default))
    return rows
