"""Embeddings, adjacency normalization, the GCN with manual gradients,
and the concatenation classifier.

The forward pass and normalization are checked against explicit-loop
oracles; the analytic gradients are checked against central finite
differences.
"""
from __future__ import annotations

import math
import random

import numpy as np
import pytest

from conceptgraph.linkpred import (
    CheckpointFormatError,
    ConcatModel,
    DegenerateLabels,
    DimensionMismatch,
    EmbeddingStore,
    GcnModel,
    LinkPredError,
    MissingEmbedding,
    NonSquare,
    TrainConfig,
    bce_from_logits,
    gcn_forward,
    gcn_loss_and_grads,
    labels_from_scores,
    normalize_adjacency,
    predict_concat,
    predict_gcn,
    score_all_pairs,
    sigmoid,
    train_concat,
    train_gcn,
)
from synth import (
    FD_EPSILON,
    SEPARABLE_LR,
    SEPARABLE_MOMENTUM,
    SEPARABLE_WIDTHS,
    gradient_check_instance,
    relative_error,
    separable_task,
)


def binary_f1(preds: np.ndarray, labels: np.ndarray) -> float:
    tp = int(np.sum((preds == 1) & (labels == 1)))
    fp = int(np.sum((preds == 1) & (labels == 0)))
    fn = int(np.sum((preds == 0) & (labels == 1)))
    return 2 * tp / (2 * tp + fp + fn) if tp else 0.0


# -- embedding store -----------------------------------------------------------


def test_embedding_store_lookup_is_name_normalized():
    store = EmbeddingStore({"Hidden  Markov Model": [1.0, 2.0]})
    assert np.array_equal(store.vector("hidden markov model"), [1.0, 2.0])
    assert "HIDDEN MARKOV MODEL" in store
    assert store.dim == 2 and len(store) == 1


def test_embedding_store_validation_errors():
    with pytest.raises(DimensionMismatch):
        EmbeddingStore({"a": [1.0], "b": [1.0, 2.0]})
    with pytest.raises(LinkPredError, match="non-finite"):
        EmbeddingStore({"a": [1.0, float("nan")]})
    with pytest.raises(LinkPredError, match="duplicate"):
        EmbeddingStore({"A B": [1.0], "a  b": [2.0]})
    with pytest.raises(LinkPredError, match="empty"):
        EmbeddingStore({})
    with pytest.raises(DimensionMismatch):
        EmbeddingStore({"a": []})
    store = EmbeddingStore({"a": [1.0]})
    with pytest.raises(MissingEmbedding):
        store.vector("b")


def test_embedding_store_matrix_follows_given_order():
    store = EmbeddingStore({"b": [2.0, 0.0], "a": [1.0, 0.0]})
    assert store.names == ("a", "b")
    m = store.matrix(["b", "a"])
    assert np.array_equal(m, [[2.0, 0.0], [1.0, 0.0]])


def test_embedding_store_jsonl_round_trip(tmp_path):
    store = EmbeddingStore({"alpha": [0.5, -1.25], "beta gamma": [3.0, 4.0]})
    path = tmp_path / "emb.jsonl"
    store.save_jsonl(path)
    loaded = EmbeddingStore.load_jsonl(path)
    assert loaded.names == store.names
    for name in store.names:
        assert np.array_equal(loaded.vector(name), store.vector(name))
    path.write_text('{"concept": "x"}\n')
    with pytest.raises(LinkPredError, match="bad row"):
        EmbeddingStore.load_jsonl(path)


# -- numerics --------------------------------------------------------------------


def test_sigmoid_matches_reference_and_never_overflows():
    xs = np.array([-800.0, -5.0, -0.5, 0.0, 0.5, 5.0, 800.0])
    out = sigmoid(xs)
    for x, o in zip(xs[1:-1], out[1:-1], strict=True):
        assert o == pytest.approx(1.0 / (1.0 + math.exp(-x)), rel=1e-12)
    assert out[0] == 0.0 and out[-1] == 1.0
    assert np.all((out >= 0) & (out <= 1))


def test_bce_matches_direct_formula_and_is_stable():
    logits = np.array([-2.0, -0.3, 0.1, 1.7])
    labels = np.array([0.0, 1.0, 1.0, 0.0])
    direct = -np.mean(
        labels * np.log(sigmoid(logits)) + (1 - labels) * np.log(1 - sigmoid(logits))
    )
    assert bce_from_logits(logits, labels) == pytest.approx(direct, rel=1e-12)
    extreme = bce_from_logits(np.array([1000.0, -1000.0]), np.array([0.0, 1.0]))
    assert math.isfinite(extreme) and extreme == pytest.approx(1000.0)


def test_normalize_adjacency_matches_elementwise_oracle():
    rng = np.random.default_rng(42)
    for _ in range(20):
        n = rng.integers(2, 7)
        a = (rng.random((n, n)) < 0.5).astype(float)
        np.fill_diagonal(a, 0.0)
        got = normalize_adjacency(a)
        with_loops = a + np.eye(n)
        degrees = with_loops.sum(axis=1)
        for i in range(n):
            for j in range(n):
                want = with_loops[i, j] / math.sqrt(degrees[i] * degrees[j])
                assert got[i, j] == pytest.approx(want, abs=1e-12)


def test_normalize_adjacency_zero_degree_and_shape_guard():
    bare = np.zeros((3, 3))
    out = normalize_adjacency(bare, add_self_loops=False)
    assert np.array_equal(out, np.zeros((3, 3)))
    with_loops = normalize_adjacency(bare)
    assert np.array_equal(with_loops, np.eye(3))
    with pytest.raises(NonSquare):
        normalize_adjacency(np.zeros((2, 3)))


def test_symmetric_input_stays_symmetric():
    a = np.array([[0, 1, 1], [1, 0, 0], [1, 0, 0]], dtype=float)
    out = normalize_adjacency(a)
    assert np.allclose(out, out.T)


# -- model container ----------------------------------------------------------------


def test_gcn_init_shapes_bounds_and_determinism():
    m1 = GcnModel.init(in_dim=8, proj_width=5, layer_widths=(4, 3), seed=7)
    assert m1.w_proj.shape == (8, 5)
    assert [w.shape for w in m1.w_layers] == [(5, 4), (4, 3)]
    assert m1.r.shape == (3, 3)
    assert m1.output_dim == 3
    for arr in (m1.w_proj, *m1.w_layers, m1.r):
        assert np.all(np.abs(arr) <= 0.05)
    m2 = GcnModel.init(8, 5, (4, 3), seed=7)
    assert np.array_equal(m1.w_proj, m2.w_proj)
    m3 = GcnModel.init(8, 5, (4, 3), seed=8)
    assert not np.array_equal(m1.w_proj, m3.w_proj)


def test_gcn_model_rejects_inconsistent_shapes():
    with pytest.raises(DimensionMismatch):
        GcnModel(
            w_proj=np.zeros((4, 5)),
            w_layers=(np.zeros((6, 3)),),
            r=np.zeros((3, 3)),
        )
    with pytest.raises(DimensionMismatch):
        GcnModel(w_proj=np.zeros((4, 5)), w_layers=(), r=np.zeros((3, 3)))


def test_gcn_checkpoint_round_trip_is_exact(tmp_path):
    model = GcnModel.init(6, 4, (3,), seed=3)
    p1, p2 = tmp_path / "m1.json", tmp_path / "m2.json"
    model.save(p1)
    loaded = GcnModel.load(p1)
    assert np.array_equal(loaded.w_proj, model.w_proj)
    assert all(
        np.array_equal(a, b)
        for a, b in zip(loaded.w_layers, model.w_layers, strict=True)
    )
    assert np.array_equal(loaded.r, model.r)
    loaded.save(p2)
    assert p1.read_bytes() == p2.read_bytes()


def test_checkpoint_load_rejects_malformed_files(tmp_path):
    path = tmp_path / "bad.json"
    path.write_text("[]")
    with pytest.raises(CheckpointFormatError, match="format marker"):
        GcnModel.load(path)
    path.write_text('{"format": "conceptgraph.gcn-checkpoint", "version": 9}')
    with pytest.raises(CheckpointFormatError, match="version"):
        GcnModel.load(path)
    path.write_text("{")
    with pytest.raises(CheckpointFormatError, match="JSON"):
        GcnModel.load(path)


# -- forward pass -----------------------------------------------------------------


def loop_forward(x, a_norm, model):
    """Element-wise reference: no matrix products."""
    n = x.shape[0]

    def matmul(p, q):
        rows, inner = p.shape
        cols = q.shape[1]
        out = [[0.0] * cols for _ in range(rows)]
        for i in range(rows):
            for j in range(cols):
                out[i][j] = sum(p[i][k] * q[k][j] for k in range(inner))
        return np.array(out)

    h = matmul(x, model.w_proj)
    for w in model.w_layers:
        z = matmul(matmul(a_norm, h), w)
        h = np.where(z > 0, z, 0.0)
    return h


def test_gcn_forward_matches_loop_oracle():
    rng = np.random.default_rng(5)
    for _ in range(5):
        x = rng.normal(size=(4, 3))
        a = (rng.random((4, 4)) < 0.5).astype(float)
        np.fill_diagonal(a, 0)
        a_norm = normalize_adjacency(a)
        model = GcnModel.init(3, 3, (2,), seed=int(rng.integers(100)))
        got = gcn_forward(x, a_norm, model).output
        want = loop_forward(x, a_norm, model)
        assert np.allclose(got, want, atol=1e-12)
        assert np.all(got >= 0)


def test_gcn_forward_without_layers_is_projection_only():
    x = np.array([[1.0, 2.0], [3.0, 4.0]])
    model = GcnModel(w_proj=np.array([[1.0, 0.0], [0.0, -1.0]]), w_layers=(), r=np.eye(2))
    state = gcn_forward(x, np.eye(2), model)
    assert np.array_equal(state.output, [[1.0, -2.0], [3.0, -4.0]])


def test_score_all_pairs_matches_pairwise_loop():
    rng = np.random.default_rng(6)
    x_hat = rng.normal(size=(5, 3))
    model = GcnModel.init(3, 3, (3,), seed=1)
    got = score_all_pairs(x_hat, model)
    for i in range(5):
        for j in range(5):
            want = sigmoid(np.array([float(x_hat[i] @ model.r @ x_hat[j])]))[0]
            assert got[i, j] == pytest.approx(want, abs=1e-12)


# -- gradients ----------------------------------------------------------------------


def test_loss_is_mean_bce_of_labeled_entries():
    x, a_norm, model, batch = gradient_check_instance()
    loss, _ = gcn_loss_and_grads(x, a_norm, model, batch)
    x_hat = gcn_forward(x, a_norm, model).output
    scores = x_hat @ model.r @ x_hat.T
    logits = np.array([scores[i, j] for i, j, _ in batch])
    labels = np.array([y for _, _, y in batch], dtype=float)
    assert loss == pytest.approx(bce_from_logits(logits, labels), rel=1e-12)


def test_empty_batch_is_rejected():
    x, a_norm, model, _ = gradient_check_instance()
    with pytest.raises(DegenerateLabels):
        gcn_loss_and_grads(x, a_norm, model, [])


def test_analytic_gradients_match_finite_differences():
    x, a_norm, model, batch = gradient_check_instance()
    state = gcn_forward(x, a_norm, model)
    kink_margin = min(float(np.min(np.abs(z))) for z in state.pre_activations)
    assert kink_margin > 10 * FD_EPSILON, "instance too close to a ReLU kink"

    _, grads = gcn_loss_and_grads(x, a_norm, model, batch)
    checked = 0
    for arr, grad in [
        (model.w_proj, grads.w_proj),
        (model.r, grads.r),
        *zip(model.w_layers, grads.w_layers, strict=True),
    ]:
        it = np.nditer(arr, flags=["multi_index"])
        for _ in it:
            idx = it.multi_index
            orig = arr[idx]
            arr[idx] = orig + FD_EPSILON
            up = gcn_loss_and_grads(x, a_norm, model, batch)[0]
            arr[idx] = orig - FD_EPSILON
            down = gcn_loss_and_grads(x, a_norm, model, batch)[0]
            arr[idx] = orig
            numeric = (up - down) / (2 * FD_EPSILON)
            assert relative_error(float(grad[idx]), numeric) <= 1e-4, (
                type(arr),
                idx,
            )
            checked += 1
    assert checked == model.w_proj.size + model.r.size + sum(
        w.size for w in model.w_layers
    )


# -- training --------------------------------------------------------------------------


def test_train_gcn_is_deterministic_per_seed():
    store, rows = separable_task()
    config = TrainConfig(
        learning_rate=SEPARABLE_LR, epochs=30, seed=4, momentum=SEPARABLE_MOMENTUM
    )
    r1 = train_gcn(store, rows, config, **SEPARABLE_WIDTHS)
    r2 = train_gcn(store, rows, config, **SEPARABLE_WIDTHS)
    assert r1.losses == r2.losses
    assert np.array_equal(r1.model.r, r2.model.r)
    other = train_gcn(
        store,
        rows,
        TrainConfig(
            learning_rate=SEPARABLE_LR, epochs=30, seed=5, momentum=SEPARABLE_MOMENTUM
        ),
        **SEPARABLE_WIDTHS,
    )
    assert r1.losses != other.losses


def test_train_gcn_reaches_high_f1_on_separable_task():
    store, rows = separable_task()
    config = TrainConfig(
        learning_rate=SEPARABLE_LR,
        epochs=200,
        seed=0,
        momentum=SEPARABLE_MOMENTUM,
    )
    result = train_gcn(store, rows, config, **SEPARABLE_WIDTHS)
    assert result.losses[-1] < result.losses[0]
    pairs = [(a, b) for a, b, _ in rows]
    labels = np.array([y for _, _, y in rows])
    preds = labels_from_scores(
        predict_gcn(result.model, store, rows, pairs), config.edge_threshold
    )
    assert binary_f1(preds, labels) >= 0.95


def test_train_gcn_error_cases():
    store, rows = separable_task()
    config = TrainConfig(learning_rate=0.1, epochs=2)
    with pytest.raises(MissingEmbedding):
        train_gcn(store, [("nope", "tgt 00", 1)], config)
    with pytest.raises(DegenerateLabels, match="no positive"):
        train_gcn(store, [(a, b, 0) for a, b, _ in rows[:4]], config)
    with pytest.raises(LinkPredError, match="labels must be 0 or 1"):
        train_gcn(store, [("src 00", "tgt 00", 2)], config)
    no_negatives = [row for row in rows if row[2] == 1]
    with pytest.raises(DegenerateLabels, match="no negative"):
        train_gcn(
            store,
            no_negatives,
            TrainConfig(learning_rate=0.1, epochs=2, negative_ratio=0.0),
        )


def test_train_gcn_samples_negatives_when_rows_have_none():
    store, rows = separable_task()
    positives = [row for row in rows if row[2] == 1]
    config = TrainConfig(learning_rate=SEPARABLE_LR, epochs=5, seed=9)
    r1 = train_gcn(store, positives, config, **SEPARABLE_WIDTHS)
    r2 = train_gcn(store, positives, config, **SEPARABLE_WIDTHS)
    assert r1.losses == r2.losses
    different_seed = train_gcn(
        store,
        positives,
        TrainConfig(learning_rate=SEPARABLE_LR, epochs=5, seed=10),
        **SEPARABLE_WIDTHS,
    )
    assert r1.losses != different_seed.losses


def test_train_config_validation():
    with pytest.raises(LinkPredError):
        TrainConfig(learning_rate=0.0)
    with pytest.raises(LinkPredError):
        TrainConfig(epochs=0)
    with pytest.raises(LinkPredError):
        TrainConfig(negative_ratio=-1.0)
    with pytest.raises(LinkPredError):
        TrainConfig(momentum=1.0)


def test_predict_gcn_bounds_and_unknown_names():
    store, rows = separable_task()
    config = TrainConfig(learning_rate=SEPARABLE_LR, epochs=5, seed=0)
    result = train_gcn(store, rows, config, **SEPARABLE_WIDTHS)
    probs = predict_gcn(result.model, store, rows, [("src 00", "tgt 01")])
    assert probs.shape == (1,)
    assert 0.0 < probs[0] < 1.0
    with pytest.raises(MissingEmbedding):
        predict_gcn(result.model, store, rows, [("src 00", "mystery")])


# -- concatenation classifier --------------------------------------------------------------


def concat_task():
    store = EmbeddingStore({f"c {i}": np.eye(10)[i].tolist() for i in range(10)})
    sources = [f"c {i}" for i in range(5)]
    targets = [f"c {i}" for i in range(5, 10)]
    rows = [(a, b, 1) for a in sources for b in targets][:12]
    rows += [(b, a, 0) for a in sources for b in targets][:12]
    return store, rows


def test_train_concat_learns_separable_pairs():
    store, rows = concat_task()
    model, losses = train_concat(store, rows, TrainConfig(learning_rate=2.0, epochs=200))
    assert losses[-1] < 0.1 < losses[0]
    pairs = [(a, b) for a, b, _ in rows]
    labels = np.array([y for _, _, y in rows])
    preds = labels_from_scores(predict_concat(model, store, pairs))
    assert binary_f1(preds, labels) == 1.0


def test_train_concat_is_deterministic():
    store, rows = concat_task()
    config = TrainConfig(learning_rate=1.0, epochs=40)
    m1, l1 = train_concat(store, rows, config)
    m2, l2 = train_concat(store, rows, config)
    assert l1 == l2
    assert np.array_equal(m1.weights, m2.weights) and m1.bias == m2.bias


def test_concat_checkpoint_round_trip(tmp_path):
    store, rows = concat_task()
    model, _ = train_concat(store, rows, TrainConfig(learning_rate=1.0, epochs=5))
    path = tmp_path / "concat.json"
    model.save(path)
    loaded = ConcatModel.load(path)
    assert np.array_equal(loaded.weights, model.weights)
    assert loaded.bias == model.bias
    with pytest.raises(DimensionMismatch):
        predict_concat(
            loaded, EmbeddingStore({"a": [1.0], "b": [0.5]}), [("a", "b")]
        )


def test_labels_from_scores_threshold_and_ties():
    scores = np.array([0.1, 0.5, 0.9])
    assert labels_from_scores(scores).tolist() == [0, 1, 1]
    assert labels_from_scores(scores, threshold=0.95).tolist() == [0, 0, 0]


def test_momentum_changes_the_trajectory():
    store, rows = concat_task()
    _, plain = train_concat(store, rows, TrainConfig(learning_rate=1.0, epochs=20))
    _, heavy = train_concat(
        store, rows, TrainConfig(learning_rate=1.0, epochs=20, momentum=0.9)
    )
    assert plain != heavy
