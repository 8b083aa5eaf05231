"""One AL round over a dataset: fetch -> preprocess -> infer -> select.

``pipelined`` runs every stage on its own threads joined by bounded queues,
so sample i+k is being fetched while sample i is in inference.  The two
baselines run the stages one after another over the whole pool with a
single worker each; ``sequential_rounds`` additionally bypasses the payload
cache so every round downloads its data again.
"""

from __future__ import annotations

import logging
import queue
import threading
import time
from dataclasses import dataclass, field
from typing import Callable, Sequence

import numpy as np

from alaas.errors import (
    BudgetExceedsPool,
    Cancelled,
    FetchFailed,
    HashMismatch,
    InvalidLabeledIds,
    ValidationFailed,
)
from alaas.inference.backend import BackendSpec, InferenceBackend
from alaas.inference.batcher import END, BatchPolicy, batch_collect
from alaas.inference.mock import FeatureVector
from alaas.models import (
    ALQuery,
    ALReport,
    DatasetManifest,
    EmbeddingMatrix,
    ProbabilityMatrix,
    SampleRef,
    SelectedSample,
    StrategyKind,
    new_id,
    utcnow,
    wire_score,
)
from alaas.pipeline.stages import (
    PipelineSpec,
    SampleSource,
    StageEvent,
    compute_metrics,
    get_preprocessor,
    split_interval,
)
from alaas.strategies import StrategyInput, run_strategy

log = logging.getLogger(__name__)

_POLL = 0.05


def _sleep_ms(ms: float) -> None:
    if ms > 0:
        time.sleep(ms / 1000.0)


def check_query(manifest: DatasetManifest, query: ALQuery) -> None:
    """Fail fast on queries that cannot be satisfied by ``manifest``."""
    if query.dataset_id != manifest.dataset_id:
        raise ValidationFailed(f"query targets {query.dataset_id}, manifest is {manifest.dataset_id}")
    labeled = query.labeled_ids
    if len(set(labeled)) != len(labeled):
        raise InvalidLabeledIds("labeled_ids contains duplicates")
    n = len(manifest)
    bad = [i for i in labeled if not 0 <= i < n]
    if bad:
        raise InvalidLabeledIds(f"labeled_ids not in dataset: {bad[:5]}")
    if query.budget > n - len(labeled):
        raise BudgetExceedsPool(query.budget, n - len(labeled))


@dataclass
class _Outputs:
    probs: dict[int, np.ndarray] = field(default_factory=dict)
    embeds: dict[int, np.ndarray] = field(default_factory=dict)
    events: list[StageEvent] = field(default_factory=list)
    skipped: list[int] = field(default_factory=list)
    lock: threading.Lock = field(default_factory=threading.Lock)

    def add_events(self, evs: Sequence[StageEvent]) -> None:
        with self.lock:
            self.events.extend(evs)

    def add_rows(self, ids: Sequence[int], probs: np.ndarray, embeds: np.ndarray) -> None:
        with self.lock:
            for k, sid in enumerate(ids):
                self.probs[sid] = probs[k]
                self.embeds[sid] = embeds[k]


class Pipeline:
    """Runs rounds against one source and one backend.

    One run at a time per instance.  ``cancel()`` is cooperative: stages stop
    at their next item or batch boundary and the run raises Cancelled.
    ``cache`` is anything with ``get_cached_inference`` / ``cache.put_inference_many``
    (a DataManager); when given, model outputs are looked up by content hash
    before inference and written back afterwards.
    """

    def __init__(
        self,
        source: SampleSource,
        backend: BackendSpec | InferenceBackend,
        spec: PipelineSpec | None = None,
        cache=None,
        on_batch: Callable[[int], None] | None = None,
    ):
        self.source = source
        self.backend = backend if isinstance(backend, InferenceBackend) else InferenceBackend(backend)
        self.spec = spec or PipelineSpec()
        self.cache = cache
        self.on_batch = on_batch
        self._cancel = threading.Event()

    def cancel(self) -> None:
        self._cancel.set()

    @property
    def cancelled(self) -> bool:
        return self._cancel.is_set()

    # -- public --------------------------------------------------------------

    def run_round(self, manifest: DatasetManifest, query: ALQuery, job_id: str | None = None):
        """Returns ``(ALReport, events)``."""
        check_query(manifest, query)
        kind = query.strategy
        labeled = set(query.labeled_ids)
        needs_labeled = kind in (StrategyKind.KCG, StrategyKind.CORESET) and labeled
        refs = [r for r in manifest.samples if r.id not in labeled or needs_labeled]
        if kind is StrategyKind.RANDOM:
            refs = []  # random sampling needs no model output

        policy = BatchPolicy(min(query.batch_size, self.backend.spec.batch_limit), self.spec.batch.max_wait_ms)
        out = _Outputs()
        t0 = time.monotonic()
        if refs:
            if self.spec.mode == "pipelined":
                self._run_pipelined(manifest, refs, policy, out)
            else:
                fetch_policy = "no_cache" if self.spec.mode == "sequential_rounds" else "cache"
                self._run_sequential(manifest, refs, policy, out, fetch_policy)
        flush = getattr(self.source, "flush", None)
        if flush is not None:
            flush()
        self._check_cancel()

        skipped = set(out.skipped)
        pool = [r.id for r in manifest.samples if r.id not in labeled and r.id not in skipped]
        if query.budget > len(pool):
            raise BudgetExceedsPool(query.budget, len(pool))
        sel_start = time.monotonic()
        selection = run_strategy(kind, self._strategy_input(kind, query, pool, labeled, out))
        sel_end = time.monotonic()
        out.events.extend(split_interval("select", pool, sel_start, sel_end))
        wall = time.monotonic() - t0

        workers = self._workers()
        processed = len({ev.id for ev in out.events})
        metrics = compute_metrics(out.events, wall, workers, items=processed, skipped=skipped)
        uris = {r.id: r.uri for r in manifest.samples}
        report = ALReport(
            job_id=job_id or new_id(),
            dataset_id=manifest.dataset_id,
            strategy=kind,
            budget=query.budget,
            selected=tuple(
                SelectedSample(sid, uris[sid], wire_score(score))
                for sid, score in zip(selection.ids, selection.scores)
            ),
            timing=metrics,
            completed_at=utcnow(),
        )
        return report, sorted(out.events, key=lambda e: (e.start, e.stage, e.id))

    # -- helpers -------------------------------------------------------------

    def _workers(self) -> dict[str, int]:
        if self.spec.mode == "pipelined":
            return {"fetch": self.spec.fetch_workers, "preprocess": 1, "infer": self.spec.infer_workers, "select": 1}
        return {s: 1 for s in ("fetch", "preprocess", "infer", "select")}

    def _check_cancel(self) -> None:
        if self._cancel.is_set():
            raise Cancelled("run cancelled")

    def _strategy_input(self, kind, query, pool, labeled, out: _Outputs) -> StrategyInput:
        if kind is StrategyKind.RANDOM:
            return StrategyInput(budget=query.budget, seed=query.seed, pool_ids=tuple(pool), beta=query.beta)
        spec = self.backend.spec
        probs = ProbabilityMatrix(
            np.array([out.probs[i] for i in pool]).reshape(len(pool), spec.classes), tuple(pool)
        )
        embeds = EmbeddingMatrix(
            np.array([out.embeds[i] for i in pool]).reshape(len(pool), spec.embed_dim), tuple(pool)
        )
        labeled_embeds = None
        if kind in (StrategyKind.KCG, StrategyKind.CORESET):
            lab = sorted(i for i in labeled if i in out.embeds)
            labeled_embeds = EmbeddingMatrix(
                np.array([out.embeds[i] for i in lab]).reshape(len(lab), spec.embed_dim), tuple(lab)
            )
        return StrategyInput(
            budget=query.budget,
            seed=query.seed,
            probs=probs,
            embeds=embeds,
            labeled_embeds=labeled_embeds,
            beta=query.beta,
        )

    def _fetch_one(self, manifest, ref: SampleRef, fetch_policy: str, out: _Outputs):
        d = self.spec.delays
        start = time.monotonic()
        _sleep_ms(d.fetch_ms)
        try:
            res = self.source.fetch(ref, fetch_policy, manifest.dataset_id)
        except (FetchFailed, HashMismatch):
            if self.spec.failure_policy == "skip":
                log.warning("skipping sample %d (%s)", ref.id, ref.uri)
                with out.lock:
                    out.skipped.append(ref.id)
                return None
            raise
        out.add_events([StageEvent("fetch", ref.id, start, time.monotonic())])
        return res

    def _cached_rows(self, res) -> tuple[np.ndarray, np.ndarray] | None:
        if self.cache is None:
            return None
        return self.cache.get_cached_inference(res.content_hash, self.backend.spec.model_version)

    def _preprocess_one(self, res, out: _Outputs) -> FeatureVector | None:
        """Feature vector for ``res``, or None when its model outputs are already cached."""
        hit = self._cached_rows(res)
        if hit is not None:
            out.add_rows([res.id], hit[0][None, :], hit[1][None, :])
            return None
        start = time.monotonic()
        _sleep_ms(self.spec.delays.preprocess_ms)
        fv = get_preprocessor(self.spec.preprocess)(res.id, res.bytes)
        out.add_events([StageEvent("preprocess", res.id, start, time.monotonic())])
        return fv

    def _infer(self, batch: list[tuple[FeatureVector, str]], out: _Outputs) -> None:
        d = self.spec.delays
        start = time.monotonic()
        _sleep_ms(d.infer_ms_per_call + d.infer_ms_per_item * len(batch))
        probs, embeds = self.backend.infer_batch([fv for fv, _ in batch])
        end = time.monotonic()
        ids = [fv.id for fv, _ in batch]
        out.add_rows(ids, probs.data, embeds.data)
        out.add_events(split_interval("infer", ids, start, end))
        if self.cache is not None:
            rows = {h: (probs.data[k], embeds.data[k]) for k, (_, h) in enumerate(batch)}
            self.cache.cache.put_inference_many(self.backend.spec.model_version, rows)
        if self.on_batch is not None:
            self.on_batch(len(batch))

    # -- sequential baselines -----------------------------------------------

    def _run_sequential(self, manifest, refs, policy: BatchPolicy, out: _Outputs, fetch_policy: str) -> None:
        fetched = []
        for ref in refs:
            self._check_cancel()
            res = self._fetch_one(manifest, ref, fetch_policy, out)
            if res is not None:
                fetched.append(res)
        pending = []
        for res in fetched:
            self._check_cancel()
            fv = self._preprocess_one(res, out)
            if fv is not None:
                pending.append((fv, res.content_hash))
        for lo in range(0, len(pending), policy.max_batch):
            self._check_cancel()
            self._infer(pending[lo:lo + policy.max_batch], out)

    # -- pipelined ------------------------------------------------------------

    def _run_pipelined(self, manifest, refs, policy: BatchPolicy, out: _Outputs) -> None:
        capacity = self.spec.capacity_for(policy.max_batch)
        fetched_q: queue.Queue = queue.Queue(capacity)
        feature_q: queue.Queue = queue.Queue(capacity)
        batch_q: queue.Queue = queue.Queue(1)
        stop = threading.Event()
        errors: list[BaseException] = []
        ref_iter = iter(refs)
        ref_lock = threading.Lock()
        fetchers_left = [self.spec.fetch_workers]

        def halted() -> bool:
            return stop.is_set() or self._cancel.is_set()

        def put(q: queue.Queue, item) -> bool:
            while not halted():
                try:
                    q.put(item, timeout=_POLL)
                    return True
                except queue.Full:
                    continue
            return False

        def get(q: queue.Queue):
            while not halted():
                try:
                    return q.get(timeout=_POLL)
                except queue.Empty:
                    continue
            return END

        def guarded(fn):
            def run():
                try:
                    fn()
                except BaseException as exc:  # noqa: BLE001 - surfaced to the caller below
                    errors.append(exc)
                    stop.set()
            return run

        def fetch_worker():
            try:
                while not halted():
                    with ref_lock:
                        ref = next(ref_iter, None)
                    if ref is None:
                        break
                    res = self._fetch_one(manifest, ref, "cache", out)
                    if res is not None and not put(fetched_q, res):
                        break
            finally:
                with ref_lock:
                    fetchers_left[0] -= 1
                    last = fetchers_left[0] == 0
                if last:
                    put(fetched_q, END)

        def preprocess_worker():
            while True:
                res = get(fetched_q)
                if res is END:
                    break
                fv = self._preprocess_one(res, out)
                if fv is not None and not put(feature_q, (fv, res.content_hash)):
                    break
            put(feature_q, END)

        def batch_worker():
            for batch in batch_collect(policy, feature_q):
                if not put(batch_q, batch):
                    return
            for _ in range(self.spec.infer_workers):
                put(batch_q, END)

        def infer_worker():
            while True:
                batch = get(batch_q)
                if batch is END:
                    return
                self._infer(batch, out)

        threads = [threading.Thread(target=guarded(fetch_worker), name=f"fetch-{i}")
                   for i in range(self.spec.fetch_workers)]
        threads.append(threading.Thread(target=guarded(preprocess_worker), name="preprocess"))
        batcher = threading.Thread(target=guarded(batch_worker), name="batcher", daemon=True)
        threads += [threading.Thread(target=guarded(infer_worker), name=f"infer-{i}")
                    for i in range(self.spec.infer_workers)]
        for t in threads:
            t.start()
        batcher.start()
        for t in threads:
            t.join()
        if halted():
            # release a batcher blocked on an empty feature queue
            try:
                feature_q.put_nowait(END)
            except queue.Full:
                pass
        batcher.join(timeout=1.0)
        if errors:
            raise errors[0]
        self._check_cancel()


def run_round(
    manifest: DatasetManifest,
    query: ALQuery,
    spec: PipelineSpec,
    backend: BackendSpec | InferenceBackend,
    source: SampleSource,
    cache=None,
    job_id: str | None = None,
):
    """Convenience wrapper: a fresh :class:`Pipeline` for a single round."""
    return Pipeline(source, backend, spec, cache).run_round(manifest, query, job_id)


def run_baseline_dataflow(
    mode: str,
    manifest: DatasetManifest,
    query: ALQuery,
    spec: PipelineSpec,
    backend: BackendSpec | InferenceBackend,
    source: SampleSource,
    cache=None,
):
    if mode not in ("sequential_rounds", "sequential_whole"):
        raise ValueError(f"{mode!r} is not a baseline dataflow")
    spec = PipelineSpec(**{**spec.__dict__, "mode": mode})
    return run_round(manifest, query, spec, backend, source, cache)


def run_rounds(
    manifest: DatasetManifest,
    query: ALQuery,
    rounds: int,
    spec: PipelineSpec,
    backend: BackendSpec | InferenceBackend,
    source: SampleSource,
    cache=None,
) -> list[ALReport]:
    """Multi-round selection: each round's picks join the labeled pool of the next."""
    reports = []
    pipeline = Pipeline(source, backend, spec, cache)
    labeled = list(query.labeled_ids)
    for _ in range(rounds):
        q = ALQuery(**{**query.__dict__, "labeled_ids": tuple(labeled)})
        report, _ = pipeline.run_round(manifest, q)
        reports.append(report)
        labeled += report.ids
    return reports
