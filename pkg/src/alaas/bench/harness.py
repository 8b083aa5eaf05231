"""Desk-scale efficiency benchmarks.

A scenario is a grid of (pipeline mode, batch size) cells over a synthetic
pool with injected stage latencies.  Each cell runs ``repeats`` times, in a
shuffled order shared across cells, and every run's selection is checked
against a direct strategy call so that a fast but wrong pipeline cannot
produce a result.
"""

from __future__ import annotations

import csv
import json
import logging
import random
import statistics
import time
from dataclasses import asdict, dataclass, field
from pathlib import Path
from typing import Any, Iterator, Literal, Mapping

import numpy as np

from alaas.errors import ScenarioMismatch
from alaas.inference import BackendSpec, BatchPolicy, InferenceBackend, mock_model
from alaas.inference.stub import StubState, create_stub_app
from alaas.models import ALQuery, DatasetManifest, EmbeddingMatrix, ProbabilityMatrix, SampleRef, StrategyKind, utcnow
from alaas.pipeline import MODES, PipelineSpec, StageDelays, SyntheticSource, byte_histogram, run_round
from alaas.serving import serve_in_thread
from alaas.strategies import Selection, StrategyInput, run_strategy

log = logging.getLogger(__name__)

MIN_REPEATS_FOR_STD = 3


@dataclass(frozen=True)
class BenchScenario:
    name: str = "scenario"
    pool_size: int = 1000
    budget: int = 100
    strategy: str = "LC"
    modes: tuple[str, ...] = ("pipelined", "sequential_whole")
    batch_sizes: tuple[int, ...] = (16,)
    fetch_latency_ms: float = 0.0
    preprocess_latency_ms: float = 0.0
    infer_latency_ms_per_item: float = 0.0
    infer_call_overhead_ms: float = 0.0
    repeats: int = 3
    backend: Literal["mock", "remote_stub"] = "mock"
    fetch_workers: int = 8
    infer_workers: int = 1
    max_wait_ms: float = 10.0
    classes: int = 10
    embed_dim: int = 16
    seed: int = 0

    def __post_init__(self):
        object.__setattr__(self, "modes", tuple(self.modes))
        object.__setattr__(self, "batch_sizes", tuple(int(b) for b in self.batch_sizes))
        object.__setattr__(self, "strategy", StrategyKind.parse(self.strategy).value)
        if unknown := set(self.modes) - set(MODES):
            raise ValueError(f"unknown modes {sorted(unknown)}")
        if not self.modes or not self.batch_sizes:
            raise ValueError("a scenario needs at least one mode and one batch size")
        if self.repeats < 1 or min(self.batch_sizes) < 1:
            raise ValueError("repeats and batch sizes must be positive")
        if not 1 <= self.budget <= self.pool_size:
            raise ValueError("budget must lie in 1..pool_size")
        if self.backend not in ("mock", "remote_stub"):
            raise ValueError("backend must be 'mock' or 'remote_stub'")

    @classmethod
    def from_dict(cls, d: Mapping[str, Any]) -> BenchScenario:
        return cls(**d)

    def to_dict(self) -> dict[str, Any]:
        return asdict(self)

    def comparable(self) -> dict[str, Any]:
        """The fields two results must share to be compared."""
        d = self.to_dict()
        for k in ("name", "repeats", "modes", "batch_sizes"):
            d.pop(k)
        return d


@dataclass
class CellResult:
    mode: str
    batch_size: int
    latencies_s: list[float] = field(default_factory=list)
    error: str | None = None

    @property
    def ok(self) -> bool:
        return self.error is None and bool(self.latencies_s)

    @property
    def latency_mean_s(self) -> float | None:
        return statistics.fmean(self.latencies_s) if self.latencies_s else None

    @property
    def latency_std_s(self) -> float | None:
        if len(self.latencies_s) < MIN_REPEATS_FOR_STD:
            return None
        return statistics.stdev(self.latencies_s)

    def throughput_mean(self, n: int) -> float | None:
        if not self.latencies_s:
            return None
        return statistics.fmean(n / t for t in self.latencies_s)

    def to_dict(self, n: int) -> dict[str, Any]:
        return {
            "mode": self.mode,
            "batch_size": self.batch_size,
            "latency_mean_s": self.latency_mean_s,
            "latency_std_s": self.latency_std_s,
            "throughput_mean": self.throughput_mean(n),
            "latencies_s": list(self.latencies_s),
            "error": self.error,
        }


@dataclass
class BenchResult:
    scenario: BenchScenario
    cells: dict[tuple[str, int], CellResult]

    def cell(self, mode: str, batch_size: int) -> CellResult:
        return self.cells[(mode, batch_size)]

    def throughput(self, mode: str, batch_size: int) -> float | None:
        return self.cell(mode, batch_size).throughput_mean(self.scenario.pool_size)

    def speedup(self, mode: str, baseline_mode: str, batch_size: int) -> float:
        return self.throughput(mode, batch_size) / self.throughput(baseline_mode, batch_size)

    def to_dict(self) -> dict[str, Any]:
        n = self.scenario.pool_size
        return {"scenario": self.scenario.to_dict(), "cells": [c.to_dict(n) for c in self.cells.values()]}

    @classmethod
    def from_dict(cls, d: Mapping[str, Any]) -> BenchResult:
        scenario = BenchScenario.from_dict(d["scenario"])
        cells = {}
        for c in d["cells"]:
            cell = CellResult(c["mode"], int(c["batch_size"]), list(c["latencies_s"]), c.get("error"))
            cells[(cell.mode, cell.batch_size)] = cell
        return cls(scenario, cells)

    def write(self, out_dir: str | Path) -> tuple[Path, Path]:
        """``<name>.json`` with raw runs and a gnuplot-friendly ``<name>.csv``."""
        out = Path(out_dir)
        out.mkdir(parents=True, exist_ok=True)
        json_path = out / f"{self.scenario.name}.json"
        json_path.write_text(json.dumps(self.to_dict(), indent=2) + "\n")
        csv_path = out / f"{self.scenario.name}.csv"
        n = self.scenario.pool_size
        with open(csv_path, "w", newline="") as fh:
            w = csv.writer(fh)
            w.writerow(["mode", "batch_size", "latency_mean_s", "latency_std_s", "throughput_mean", "runs", "error"])
            for c in self.cells.values():
                w.writerow([c.mode, c.batch_size, _num(c.latency_mean_s), _num(c.latency_std_s),
                            _num(c.throughput_mean(n)), len(c.latencies_s), c.error or ""])
        return json_path, csv_path


def _num(x: float | None) -> str:
    return "" if x is None else f"{x:.6f}"


def synthetic_manifest(n: int) -> DatasetManifest:
    return DatasetManifest(
        "bench", "bench", "alaas-bench", utcnow(), tuple(SampleRef(i, f"synthetic://bench/{i}") for i in range(n))
    )


def direct_selection(manifest: DatasetManifest, query: ALQuery, spec: BackendSpec,
                     source: SyntheticSource) -> Selection:
    """The selection a strategy makes when fed model outputs computed row by row."""
    rows = [mock_model(byte_histogram(r.id, source.payload(r.uri)), spec.model_version, spec.classes, spec.embed_dim)
            for r in manifest.samples]
    ids = tuple(manifest.ids)
    probs = ProbabilityMatrix(np.array([r[0] for r in rows]), ids)
    embeds = EmbeddingMatrix(np.array([r[1] for r in rows]), ids)
    inp = StrategyInput(budget=query.budget, seed=query.seed, probs=probs, embeds=embeds,
                        labeled_embeds=EmbeddingMatrix.empty(spec.embed_dim), pool_ids=ids, beta=query.beta)
    return run_strategy(query.strategy, inp)


class _Backend:
    """Context manager yielding the BackendSpec for a scenario, starting the stub when needed."""

    def __init__(self, s: BenchScenario):
        self.s = s
        self._ctx = None

    def __enter__(self) -> BackendSpec:
        s = self.s
        if s.backend == "mock":
            return BackendSpec(classes=s.classes, embed_dim=s.embed_dim, batch_limit=max(s.batch_sizes))
        state = StubState(s.classes, s.embed_dim, s.infer_call_overhead_ms, s.infer_latency_ms_per_item)
        self._ctx = serve_in_thread(create_stub_app(state))
        server = self._ctx.__enter__()
        return BackendSpec(kind="remote", endpoint=server.url, classes=s.classes, embed_dim=s.embed_dim,
                           batch_limit=max(s.batch_sizes), timeout_s=30.0)

    def __exit__(self, *exc):
        if self._ctx is not None:
            self._ctx.__exit__(*exc)


def cell_order(s: BenchScenario) -> list[tuple[str, int]]:
    """Every (mode, BS) cell ``repeats`` times, shuffled deterministically by ``seed``."""
    order = [(m, b) for m in s.modes for b in s.batch_sizes] * s.repeats
    random.Random(s.seed).shuffle(order)
    return order


def _pipeline_spec(s: BenchScenario, mode: str, bs: int) -> PipelineSpec:
    mock = s.backend == "mock"
    return PipelineSpec(
        mode=mode,
        fetch_workers=s.fetch_workers,
        infer_workers=s.infer_workers,
        batch=BatchPolicy(bs, s.max_wait_ms),
        delays=StageDelays(
            fetch_ms=s.fetch_latency_ms,
            preprocess_ms=s.preprocess_latency_ms,
            infer_ms_per_item=s.infer_latency_ms_per_item if mock else 0.0,
            infer_ms_per_call=s.infer_call_overhead_ms if mock else 0.0,
        ),
    )


def iter_runs(s: BenchScenario) -> Iterator[tuple[str, int, float | Exception]]:
    manifest = synthetic_manifest(s.pool_size)
    source = SyntheticSource()
    with _Backend(s) as spec:
        expected = direct_selection(manifest, ALQuery("bench", s.strategy, s.budget, seed=s.seed), spec, source)
        for mode, bs in cell_order(s):
            query = ALQuery("bench", s.strategy, s.budget, batch_size=bs, seed=s.seed)
            backend = InferenceBackend(spec)
            try:
                start = time.perf_counter()
                report, _ = run_round(manifest, query, _pipeline_spec(s, mode, bs), backend, SyntheticSource())
                elapsed = time.perf_counter() - start
                if report.ids != list(expected.ids):
                    raise AssertionError(f"{mode}/BS={bs} selected {report.ids[:5]}..., "
                                         f"direct call selected {list(expected.ids)[:5]}...")
                yield mode, bs, elapsed
            except Exception as exc:  # noqa: BLE001 - a failed cell must not abort the sweep
                log.error("cell %s/BS=%d failed: %s", mode, bs, exc)
                yield mode, bs, exc
            finally:
                backend.close()


def run_scenario(s: BenchScenario) -> BenchResult:
    cells = {(m, b): CellResult(m, b) for m in s.modes for b in s.batch_sizes}
    for mode, bs, outcome in iter_runs(s):
        cell = cells[(mode, bs)]
        if isinstance(outcome, Exception):
            cell.error = cell.error or f"{type(outcome).__name__}: {outcome}"
        elif cell.error is None:
            cell.latencies_s.append(outcome)
    for cell in cells.values():
        if cell.error is not None:
            cell.latencies_s.clear()
    return BenchResult(s, cells)


def _fmt(mean: float | None, std: float | None) -> str:
    if mean is None:
        return "failed"
    return f"{mean:.3f} ± {std:.3f}" if std is not None else f"{mean:.3f}"


def compare_report(result: BenchResult, baseline: BenchResult) -> str:
    """Markdown table: one row per (mode, BS) with latency, throughput and the
    throughput ratio against the same cell of ``baseline``."""
    if result.scenario.comparable() != baseline.scenario.comparable():
        a, b = result.scenario.comparable(), baseline.scenario.comparable()
        diff = sorted(k for k in a if a[k] != b[k])
        raise ScenarioMismatch(f"scenarios differ in {', '.join(diff)}")
    n = result.scenario.pool_size
    lines = [
        "| Mode | BS | Latency (s) | Throughput (items/s) | Baseline throughput (items/s) | Ratio |",
        "|---|---:|---:|---:|---:|---:|",
    ]
    for (mode, bs), cell in result.cells.items():
        base = baseline.cells.get((mode, bs))
        if base is None:
            raise ScenarioMismatch(f"baseline has no cell {mode}/BS={bs}")
        thr, base_thr = cell.throughput_mean(n), base.throughput_mean(n)
        ratio = f"{thr / base_thr:.2f}" if thr and base_thr else "n/a"
        lines.append(
            f"| {mode} | {bs} | {_fmt(cell.latency_mean_s, cell.latency_std_s)} | "
            f"{'failed' if thr is None else f'{thr:.2f}'} | "
            f"{'failed' if base_thr is None else f'{base_thr:.2f}'} | {ratio} |"
        )
    return "\n".join(lines) + "\n"


def summary_table(result: BenchResult) -> str:
    """Latency and throughput per cell, without a baseline."""
    n = result.scenario.pool_size
    lines = ["| Mode | BS | Latency (s) | Throughput (items/s) |", "|---|---:|---:|---:|"]
    for (mode, bs), cell in result.cells.items():
        thr = cell.throughput_mean(n)
        lines.append(f"| {mode} | {bs} | {_fmt(cell.latency_mean_s, cell.latency_std_s)} | "
                     f"{'failed' if thr is None else f'{thr:.2f}'} |")
    return "\n".join(lines) + "\n"
