from alaas.inference.backend import BackendSpec, InferenceBackend, infer_batch, remote_infer_call
from alaas.inference.batcher import END, BatchPolicy, batch_collect, iter_batches
from alaas.inference.mock import FeatureVector, mock_model

__all__ = [
    "END",
    "BackendSpec",
    "BatchPolicy",
    "FeatureVector",
    "InferenceBackend",
    "batch_collect",
    "infer_batch",
    "iter_batches",
    "mock_model",
    "remote_infer_call",
]
