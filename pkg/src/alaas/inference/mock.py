"""Deterministic stand-in model.

The embedding is a keyed BLAKE2b expansion of the feature bytes mapped to
[-1, 1]; the class distribution is a softmax over a fixed affine map of the
embedding.  Both the hash key and the affine weights derive from the model
version string, so changing the version changes the outputs.
"""

from __future__ import annotations

import hashlib
from dataclasses import dataclass
from functools import lru_cache

import numpy as np

from alaas.errors import MalformedMatrix


@dataclass(frozen=True, eq=False)
class FeatureVector:
    id: int
    values: np.ndarray

    def __post_init__(self):
        values = np.array(self.values, dtype=np.float64).ravel()
        if not np.all(np.isfinite(values)):
            raise MalformedMatrix(f"feature vector {self.id} has non-finite values")
        values.setflags(write=False)
        object.__setattr__(self, "values", values)

    def __eq__(self, other):
        if not isinstance(other, FeatureVector):
            return NotImplemented
        return self.id == other.id and np.array_equal(self.values, other.values)

    def __len__(self) -> int:
        return self.values.shape[0]


def _version_key(model_version: str) -> bytes:
    return hashlib.sha256(model_version.encode()).digest()


@lru_cache(maxsize=64)
def _affine(model_version: str, classes: int, dim: int) -> tuple[np.ndarray, np.ndarray]:
    seed = int.from_bytes(hashlib.sha256(b"affine:" + model_version.encode()).digest()[:16], "little")
    rng = np.random.Generator(np.random.Philox(key=seed))
    weights = rng.standard_normal((classes, dim)) * (3.0 / np.sqrt(dim))
    bias = rng.standard_normal(classes) * 0.5
    weights.setflags(write=False)
    bias.setflags(write=False)
    return weights, bias


def hash_embedding(values: np.ndarray, model_version: str, dim: int) -> np.ndarray:
    key = _version_key(model_version)
    msg = np.asarray(values, dtype="<f8").tobytes()
    words: list[np.ndarray] = []
    counter = 0
    while sum(w.size for w in words) < dim:
        block = hashlib.blake2b(msg + counter.to_bytes(8, "little"), key=key, digest_size=64).digest()
        words.append(np.frombuffer(block, dtype="<u8"))
        counter += 1
    u = np.concatenate(words)[:dim]
    # top 53 bits -> exact double in [0, 1)
    unit = (u >> np.uint64(11)).astype(np.float64) * 2.0**-53
    return unit * 2.0 - 1.0


def mock_model(feature: FeatureVector, model_version: str, classes: int, dim: int) -> tuple[np.ndarray, np.ndarray]:
    """Return ``(prob_row, embed_row)`` for one feature vector."""
    embed = hash_embedding(feature.values, model_version, dim)
    weights, bias = _affine(model_version, classes, dim)
    logits = weights @ embed + bias
    z = np.exp(logits - logits.max())
    return z / z.sum(), embed
