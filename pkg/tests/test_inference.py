import queue
import threading
import time

import numpy as np
import pytest
from hypothesis import given, settings, strategies as st

from alaas.errors import BackendUnavailable, BatchTooLarge, MalformedResponse
from alaas.inference import (
    END,
    BackendSpec,
    BatchPolicy,
    FeatureVector,
    InferenceBackend,
    batch_collect,
    infer_batch,
    iter_batches,
    mock_model,
)
from alaas.inference.stub import StubState, create_stub_app
from alaas.serving import serve_in_thread


def features(n, f=8, seed=0, start=0):
    rng = np.random.default_rng(seed)
    return [FeatureVector(start + i, rng.random(f)) for i in range(n)]


MOCK = BackendSpec(model_version="m1", classes=5, embed_dim=6, batch_limit=64)


class TestMockModel:
    def test_deterministic(self):
        fv = features(1)[0]
        a = mock_model(fv, "m1", 4, 8)
        b = mock_model(FeatureVector(99, fv.values.copy()), "m1", 4, 8)
        assert a[0].tobytes() == b[0].tobytes() and a[1].tobytes() == b[1].tobytes()

    def test_rows_are_distributions(self):
        for fv in features(1000, seed=1):
            prob, embed = mock_model(fv, "m1", 10, 16)
            assert abs(prob.sum() - 1.0) <= 1e-9
            assert prob.min() >= 0 and np.all(np.abs(embed) <= 1.0)

    def test_version_changes_outputs(self):
        changed = sum(
            not np.array_equal(mock_model(fv, "m1", 3, 4)[0], mock_model(fv, "m2", 3, 4)[0])
            for fv in features(100, seed=2)
        )
        assert changed >= 1
        assert changed == 100

    def test_embedding_longer_than_one_hash_block(self):
        _, embed = mock_model(features(1)[0], "m1", 3, 40)
        assert embed.shape == (40,) and len(set(embed.tolist())) == 40


class TestInferBatch:
    def test_shape_and_order(self):
        batch = features(7, start=10)
        probs, embeds = infer_batch(MOCK, batch)
        assert probs.row_ids == embeds.row_ids == tuple(range(10, 17))
        assert probs.data.shape == (7, 5) and embeds.data.shape == (7, 6)

    def test_mock_is_deterministic(self):
        batch = features(5)
        a, b = infer_batch(MOCK, batch), infer_batch(MOCK, batch)
        assert a[0].data.tobytes() == b[0].data.tobytes()

    def test_batch_limits(self):
        with pytest.raises(BatchTooLarge):
            infer_batch(MOCK, [])
        with pytest.raises(BatchTooLarge):
            infer_batch(BackendSpec(batch_limit=2), features(3))

    def test_backend_spec_validation(self):
        with pytest.raises(ValueError):
            BackendSpec(kind="remote")
        with pytest.raises(ValueError):
            BackendSpec(classes=1)


@settings(max_examples=25, deadline=None)
@given(st.integers(1, 40), st.integers(1, 16), st.integers(0, 1000))
def test_batching_transparency(n, bs, seed):
    fvs = features(n, seed=seed)
    engine = InferenceBackend(MOCK)
    one = [engine.infer_batch([fv]) for fv in fvs]
    chunks = [engine.infer_batch(fvs[i:i + bs]) for i in range(0, n, bs)]
    probs = np.vstack([c[0].data for c in chunks])
    embeds = np.vstack([c[1].data for c in chunks])
    ids = [i for c in chunks for i in c[0].row_ids]
    assert ids == [fv.id for fv in fvs]
    assert probs.tobytes() == np.vstack([o[0].data for o in one]).tobytes()
    assert embeds.tobytes() == np.vstack([o[1].data for o in one]).tobytes()


class TestBatcher:
    def test_flush_rule(self):
        sizes = [len(b) for b in iter_batches(BatchPolicy(4, 50), range(5))]
        assert sizes == [4, 1]

    def test_instant_arrival_single_batch(self):
        q = queue.Queue()
        for i in range(16):
            q.put(i)
        q.put(END)
        assert [len(b) for b in batch_collect(BatchPolicy(16, 10), q)] == [16]

    def test_slow_producer_hits_timeout(self):
        q = queue.Queue()

        def produce():
            for i in range(10):
                q.put(i)
                time.sleep(0.015)
            q.put(END)

        threading.Thread(target=produce).start()
        batches = list(batch_collect(BatchPolicy(4, 10), q))
        assert sum(len(b) for b in batches) == 10
        assert all(1 <= len(b) <= 4 for b in batches)
        assert [x for b in batches for x in b] == list(range(10))
        assert len(batches) > 3

    def test_limit_caps_batch(self):
        assert max(len(b) for b in iter_batches(BatchPolicy(32, 5), range(40), limit=8)) == 8

    def test_empty_stream(self):
        assert list(iter_batches(BatchPolicy(4, 1), [])) == []

    def test_policy_validation(self):
        with pytest.raises(ValueError):
            BatchPolicy(0)
        with pytest.raises(ValueError):
            BatchPolicy(1, -1)


@settings(max_examples=25, deadline=None)
@given(st.integers(0, 60), st.integers(1, 10), st.integers(1, 10))
def test_batcher_order_and_bounds(n, max_batch, limit):
    batches = list(iter_batches(BatchPolicy(max_batch, 0.5), range(n), limit=limit))
    assert [x for b in batches for x in b] == list(range(n))
    assert all(1 <= len(b) <= min(max_batch, limit) for b in batches)


@pytest.fixture
def stub():
    state = StubState(classes=5, embed_dim=6)
    with serve_in_thread(create_stub_app(state)) as server:
        yield state, BackendSpec(kind="remote", model_version="m1", classes=5, embed_dim=6,
                                 endpoint=server.url, timeout_s=0.5)


class TestRemote:
    def test_roundtrip_matches_mock(self, stub):
        state, spec = stub
        batch = features(4)
        probs, embeds = infer_batch(spec, batch)
        local = infer_batch(MOCK, batch)
        np.testing.assert_array_equal(probs.data, local[0].data)
        assert probs.row_ids == (0, 1, 2, 3)
        assert state.calls == 1

    def test_two_server_errors(self, stub):
        state, spec = stub
        state.script(("status", 500), ("status", 500))
        with pytest.raises(BackendUnavailable):
            infer_batch(spec, features(2))
        assert state.calls == 2

    def test_one_timeout_then_ok(self, stub):
        state, spec = stub
        state.script(("delay", 1.0))
        probs, _ = infer_batch(spec, features(3))
        assert probs.rows == 3
        assert state.calls == 2

    def test_bad_simplex(self, stub):
        state, spec = stub
        state.script(("bad_simplex", 0))
        with pytest.raises(MalformedResponse):
            infer_batch(spec, features(2))

    def test_wrong_row_count(self, stub):
        state, spec = stub
        state.script(("short", 0))
        with pytest.raises(MalformedResponse):
            infer_batch(spec, features(3))

    def test_unreachable(self):
        spec = BackendSpec(kind="remote", endpoint="http://127.0.0.1:9", timeout_s=0.2)
        with pytest.raises(BackendUnavailable):
            infer_batch(spec, features(1))
