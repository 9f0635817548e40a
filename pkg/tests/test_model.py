"""Aggregator forward/backward math and the checkpoint byte format.

The GRU and MLP forwards are re-derived here with standalone NumPy
expressions so the library implementations are checked against independent
code, and all backward passes are checked against central differences.
"""

import struct

import numpy as np
import pytest

from fdcheck import loss_grad_rel_err
from kgcl.model import (
    EmbeddingModel,
    GradientTape,
    aggregate,
    aggregate_batch,
    aggregator_param_shapes,
    backward,
    init_model,
    load_checkpoint,
    save_checkpoint,
    score,
)


def test_aggregator_param_shapes():
    assert aggregator_param_shapes("sum", 5) == []
    assert aggregator_param_shapes("mlp", 3) == [("w", (3, 6)), ("b", (3,))]
    gru = aggregator_param_shapes("gru", 2)
    assert [name for name, _ in gru] == [
        "w_z", "u_z", "b_z", "w_r", "u_r", "b_r", "w_n", "u_n", "b_n"]
    assert all(shape == (2, 2) for name, shape in gru if name.startswith(("w", "u")))
    with pytest.raises(ValueError):
        aggregator_param_shapes("nope", 2)


def test_init_model_is_seed_deterministic_and_bounded():
    a = init_model(7, 3, 5, kind="gru", seed=42, init_scale=0.1)
    b = init_model(7, 3, 5, kind="gru", seed=42, init_scale=0.1)
    np.testing.assert_array_equal(a.entity_table, b.entity_table)
    np.testing.assert_array_equal(a.relation_table, b.relation_table)
    for name in a.aggregator:
        np.testing.assert_array_equal(a.aggregator[name], b.aggregator[name])
    c = init_model(7, 3, 5, kind="gru", seed=43, init_scale=0.1)
    assert not np.array_equal(a.entity_table, c.entity_table)
    assert np.abs(a.entity_table).max() <= 0.1
    with pytest.raises(ValueError):
        init_model(0, 1, 4)


def test_model_copy_is_independent():
    a = init_model(4, 2, 3, kind="mlp", seed=0)
    b = a.copy()
    b.entity_table[0, 0] += 1.0
    b.aggregator["b"][0] += 1.0
    assert a.entity_table[0, 0] != b.entity_table[0, 0]
    assert a.aggregator["b"][0] != b.aggregator["b"][0]


# ---------------------------------------------------------------------------
# scoring


def test_score_examples():
    assert score(np.array([1.0, 0.0]), np.array([0.0, 1.0])) == 0.0
    assert score(np.array([1.0, 2.0]), np.array([3.0, 4.0])) == 11.0


def test_score_matches_summation_oracle():
    rng = np.random.default_rng(2)
    a = rng.normal(size=500)
    b = rng.normal(size=500)
    expected = sum(float(a[i]) * float(b[i]) for i in range(500))
    np.testing.assert_allclose(score(a, b), expected, rtol=1e-10)


def test_score_is_bilinear():
    rng = np.random.default_rng(3)
    a = rng.normal(size=8)
    b = rng.normal(size=8)
    np.testing.assert_allclose(score(2.5 * a, b), 2.5 * score(a, b), rtol=1e-12)


def test_score_rejects_dimension_mismatch():
    with pytest.raises(ValueError):
        score(np.zeros(3), np.zeros(4))


# ---------------------------------------------------------------------------
# aggregator forwards against standalone reimplementations


def reference_gru_query(model, head, relation):
    sigmoid = lambda v: 1.0 / (1.0 + np.exp(-v))
    p = model.aggregator
    h = np.zeros(model.dim)
    for x in (model.entity_table[head], model.relation_table[relation]):
        z = sigmoid(p["w_z"] @ x + p["u_z"] @ h + p["b_z"])
        r = sigmoid(p["w_r"] @ x + p["u_r"] @ h + p["b_r"])
        n = np.tanh(p["w_n"] @ x + p["u_n"] @ (r * h) + p["b_n"])
        h = (1.0 - z) * n + z * h
    return h


def test_sum_aggregator_adds_rows():
    model = init_model(5, 2, 4, kind="sum", seed=1)
    q = aggregate(model, 3, 1)
    np.testing.assert_array_equal(q, model.entity_table[3] + model.relation_table[1])


def test_mlp_aggregator_matches_reference():
    model = init_model(5, 2, 4, kind="mlp", seed=5, init_scale=0.7)
    q = aggregate(model, 2, 0)
    x = np.concatenate([model.entity_table[2], model.relation_table[0]])
    expected = np.tanh(model.aggregator["w"] @ x + model.aggregator["b"])
    np.testing.assert_allclose(q, expected, rtol=1e-14)


def test_gru_aggregator_matches_reference():
    model = init_model(6, 3, 5, kind="gru", seed=7, init_scale=0.8)
    for head, relation in [(0, 0), (4, 2), (5, 1)]:
        q = aggregate(model, head, relation)
        np.testing.assert_allclose(
            q, reference_gru_query(model, head, relation), rtol=1e-13)


def test_gru_with_zero_parameters_emits_zero():
    # zero gates give z=0.5 and n=tanh(0)=0 from a zero state, so the
    # hidden state never leaves zero
    model = init_model(3, 2, 4, kind="gru", seed=0)
    for name in model.aggregator:
        model.aggregator[name][...] = 0.0
    np.testing.assert_array_equal(aggregate(model, 1, 1), np.zeros(4))


def test_aggregate_batch_validates_ids_and_shapes():
    model = init_model(3, 2, 4, kind="sum", seed=0)
    with pytest.raises(ValueError):
        aggregate_batch(model, np.array([0, 1]), np.array([0]))
    with pytest.raises(ValueError):
        aggregate_batch(model, np.array([3]), np.array([0]))
    with pytest.raises(ValueError):
        aggregate_batch(model, np.array([0]), np.array([2]))


def test_aggregate_is_deterministic():
    model = init_model(5, 2, 6, kind="gru", seed=11)
    np.testing.assert_array_equal(aggregate(model, 2, 1), aggregate(model, 2, 1))


# ---------------------------------------------------------------------------
# backward


@pytest.mark.parametrize("kind", ["sum", "mlp", "gru"])
def test_backward_matches_finite_differences(kind):
    rng = np.random.default_rng(13)
    heads = np.array([0, 2, 2, 4])
    rels = np.array([1, 0, 2, 1])
    weights = rng.normal(size=(4, 5))

    def linear_probe(model, tape):
        queries, cache = aggregate_batch(model, heads, rels)
        value = float((queries * weights).sum())
        if tape is not None:
            backward(model, cache, weights, tape)
        return value

    model = init_model(5, 3, 5, kind=kind, seed=17, init_scale=0.6)
    err = loss_grad_rel_err(linear_probe, model, rng, coord_count=150)
    assert err < 1e-4


def test_backward_sum_passes_gradient_through():
    model = init_model(4, 2, 3, kind="sum", seed=0)
    queries, cache = aggregate_batch(model, np.array([1]), np.array([0]))
    tape = GradientTape(model)
    upstream = np.array([[0.5, -1.0, 2.0]])
    backward(model, cache, upstream, tape)
    np.testing.assert_array_equal(tape.entity_grad(1), upstream[0])
    np.testing.assert_array_equal(tape.relation_grad(0), upstream[0])


def test_backward_zero_upstream_gives_zero_gradients():
    model = init_model(4, 2, 3, kind="gru", seed=3)
    queries, cache = aggregate_batch(model, np.array([1, 2]), np.array([0, 1]))
    tape = GradientTape(model)
    backward(model, cache, np.zeros((2, 3)), tape)
    ids, grads = tape.entity_rows()
    assert np.all(grads == 0.0)
    for name, grad in tape.aggregator.items():
        assert np.all(grad == 0.0)


def test_backward_without_cache_is_an_error():
    model = init_model(4, 2, 3, kind="sum", seed=0)
    with pytest.raises(ValueError):
        backward(model, None, np.zeros((1, 3)), GradientTape(model))


def test_tape_coalesces_repeated_rows():
    model = init_model(5, 2, 2, kind="sum", seed=0)
    tape = GradientTape(model)
    tape.add_entity(np.array([3, 1, 3]), np.array([[1.0, 0.0], [0.5, 0.5], [2.0, 1.0]]))
    tape.add_entity(np.array([1]), np.array([[0.5, -0.5]]))
    ids, grads = tape.entity_rows()
    np.testing.assert_array_equal(ids, [1, 3])
    np.testing.assert_allclose(grads, [[1.0, 0.0], [3.0, 1.0]])
    np.testing.assert_array_equal(tape.entity_grad(0), np.zeros(2))


# ---------------------------------------------------------------------------
# checkpoints


def test_checkpoint_round_trip_is_bitwise(tmp_path):
    model = init_model(6, 3, 4, kind="gru", seed=23, init_scale=0.4)
    path = tmp_path / "model.kge"
    save_checkpoint(model, str(path))
    loaded = load_checkpoint(str(path))
    assert loaded.kind == "gru"
    np.testing.assert_array_equal(loaded.entity_table, model.entity_table)
    np.testing.assert_array_equal(loaded.relation_table, model.relation_table)
    for name in model.aggregator:
        np.testing.assert_array_equal(loaded.aggregator[name], model.aggregator[name])


def test_checkpoint_byte_layout(tmp_path):
    entity = np.array([[1.0, 2.0], [3.0, 4.0]])
    relation = np.array([[5.0, 6.0]])
    model = EmbeddingModel(entity_table=entity, relation_table=relation,
                           kind="sum", aggregator={})
    path = tmp_path / "tiny.kge"
    save_checkpoint(model, str(path))
    raw = path.read_bytes()
    expected = b"KGE v1 2 1 2 sum\n" + struct.pack("<6d", 1.0, 2.0, 3.0, 4.0, 5.0, 6.0)
    assert raw == expected


def test_checkpoint_rejects_corrupt_files(tmp_path):
    model = init_model(3, 2, 2, kind="mlp", seed=1)
    path = tmp_path / "model.kge"
    save_checkpoint(model, str(path))
    raw = path.read_bytes()

    truncated = tmp_path / "short.kge"
    truncated.write_bytes(raw[:-8])
    with pytest.raises(ValueError):
        load_checkpoint(str(truncated))

    bad_magic = tmp_path / "magic.kge"
    bad_magic.write_bytes(b"XYZ" + raw[3:])
    with pytest.raises(ValueError):
        load_checkpoint(str(bad_magic))

    not_a_checkpoint = tmp_path / "plain.txt"
    not_a_checkpoint.write_text("just some text\n")
    with pytest.raises(ValueError):
        load_checkpoint(str(not_a_checkpoint))
