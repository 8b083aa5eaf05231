"""Shared fixtures-as-functions for pipeline, server and acceptance tests."""

import time

import numpy as np

from alaas.inference import BackendSpec, mock_model
from alaas.models import (
    ALQuery,
    DatasetManifest,
    EmbeddingMatrix,
    ProbabilityMatrix,
    SampleRef,
    StrategyKind,
    utcnow,
)
from alaas.pipeline import SyntheticSource, byte_histogram
from alaas.server import parse_config
from alaas.strategies import StrategyInput, run_strategy


def synthetic_manifest(n, dataset_id="ds", prefix="https://data.example/img"):
    samples = tuple(SampleRef(i, f"{prefix}{i}.bin") for i in range(n))
    return DatasetManifest(dataset_id, "synthetic", "tests", utcnow(), samples)


def model_outputs(payloads, spec: BackendSpec):
    """Model outputs computed one sample at a time, outside any pipeline."""
    rows = [mock_model(byte_histogram(i, p), spec.model_version, spec.classes, spec.embed_dim)
            for i, p in enumerate(payloads)]
    return np.array([r[0] for r in rows]), np.array([r[1] for r in rows])


def reference_selection(manifest, query: ALQuery, spec: BackendSpec, source=None):
    """Selection obtained by calling the strategy directly on the full pool."""
    source = source or SyntheticSource()
    probs, embeds = model_outputs([source.payload(r.uri) for r in manifest.samples], spec)
    labeled = set(query.labeled_ids)
    pool = [i for i in manifest.ids if i not in labeled]
    lab = sorted(labeled)
    inp = StrategyInput(
        budget=query.budget,
        seed=query.seed,
        probs=ProbabilityMatrix(probs[pool], tuple(pool)),
        embeds=EmbeddingMatrix(embeds[pool], tuple(pool)),
        labeled_embeds=EmbeddingMatrix(embeds[lab].reshape(len(lab), spec.embed_dim), tuple(lab)),
        pool_ids=tuple(pool),
        beta=query.beta,
    )
    if query.strategy is StrategyKind.RANDOM:
        inp = StrategyInput(budget=query.budget, seed=query.seed, pool_ids=tuple(pool))
    return run_strategy(query.strategy, inp)


def make_files(root, n, size=64):
    root.mkdir(parents=True, exist_ok=True)
    uris = []
    for i in range(n):
        p = root / f"s{i:04d}.bin"
        p.write_bytes(bytes((i * 7 + k) % 256 for k in range(size)))
        uris.append(p.as_uri())
    return uris


def config(tmp_path, **over):
    raw = {
        "active_learning": {"strategy": "LC", "budget": 5, "batch_size": 4},
        "data": {"data_dir": str(tmp_path / "data")},
        "infer": {"classes": 4, "embed_dim": 6},
    }
    for section, values in over.items():
        raw.setdefault(section, {}).update(values)
    return parse_config(raw)


def wait_done(client, job_id, timeout=30.0):
    deadline = time.monotonic() + timeout
    while time.monotonic() < deadline:
        body = client.get(f"/v1/queries/{job_id}").json()
        if body["state"] in ("done", "failed", "cancelled"):
            return body
        time.sleep(0.02)
    raise AssertionError(f"job {job_id} did not finish")
