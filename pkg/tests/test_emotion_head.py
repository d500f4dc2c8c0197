"""
Tests de la cabeza de emociones: pooling, forward, pérdida, gradientes
analíticos contra diferencias finitas y archivo de modelo.
"""

import math

import numpy as np
import pytest

from emovar.core.exceptions import CorruptStateError, DimensionMismatchError, EmptySequenceError, StaleIntermediatesError
from emovar.models.deep_wccn import DeepWccn, LayerMode
from emovar.models.emotion_head import (
    EmotionModel,
    HeadParameters,
    PARAM_NAMES,
    _unit_norm_backward,
    cross_entropy,
    head_backward,
    head_forward,
    stat_pool,
    total_loss,
)
from emovar.schemas.training import HeadConfig

STEP = 1e-5


# ── Pooling ──────────────────────────────────────────

def test_constant_sequence_pools_to_value_and_zero():
    pooled = stat_pool(np.tile([1.5, -2.0], (7, 1)))
    np.testing.assert_array_equal(pooled, [1.5, -2.0, 0.0, 0.0])


def test_population_std_by_hand():
    np.testing.assert_allclose(stat_pool([[0.0], [2.0]]), [1.0, 1.0])


def test_pool_dimension_and_single_frame(rng):
    for frames in (1, 3, 50):
        pooled = stat_pool(rng.normal(size=(frames, 6)))
        assert pooled.shape == (12,)
        assert np.all(pooled[6:] >= 0)
    np.testing.assert_array_equal(stat_pool([[4.0, 5.0]])[2:], [0.0, 0.0])


def test_empty_sequence():
    with pytest.raises(EmptySequenceError):
        stat_pool(np.zeros((0, 3)))


# ── Pérdida ──────────────────────────────────────────

def test_uniform_logits_cross_entropy():
    assert abs(total_loss(np.zeros((1, 4)), [0]) - math.log(4)) <= 1e-12


def test_closed_form_cross_entropy():
    expected = math.log(math.exp(2) + 3) - 2
    assert total_loss([[2.0, 0.0, 0.0, 0.0]], [0]) == pytest.approx(expected, abs=1e-12)


def test_gamma_adds_scaled_ssl_term():
    base = total_loss([[0.3, -1.0, 2.0, 0.1]], [2])
    assert total_loss([[0.3, -1.0, 2.0, 0.1]], [2], gamma=8e-4, ssl_value=5.0) == pytest.approx(
        base + 8e-4 * 5.0
    )


def test_cross_entropy_is_non_negative(rng):
    assert np.all(cross_entropy(rng.normal(size=(20, 4)) * 10, rng.integers(0, 4, 20)) >= 0)


# ── Forward ──────────────────────────────────────────

def make_setup(rng, d_z=3, d_h=5, n_classes=4, n_items=8, dropout=0.0, seed=0):
    params = HeadParameters.init(d_z, d_h, n_classes, seed=seed)
    config = HeadConfig(dropout_rate=dropout, hidden_dim=d_h)
    pooled = rng.normal(size=(n_items, 2 * d_z))
    labels = rng.integers(0, n_classes, size=n_items)
    return params, config, pooled, labels


def reference_logits(params, factor, pooled):
    """Reimplementación directa, fila por fila."""
    out = []
    for u in pooled:
        h = np.maximum(params.dense_weights @ u + params.dense_bias, 0.0)
        w = factor.T @ h
        z = w / (np.linalg.norm(w) + 1e-12)
        out.append(params.classifier_weights @ z + params.classifier_bias)
    return np.array(out)


def test_inference_matches_reference(rng):
    params, config, pooled, labels = make_setup(rng, d_z=4, d_h=2, n_classes=2, seed=3)
    wccn = DeepWccn(np.eye(2), 2, np.array([[1.2, 0.0], [0.4, 0.7]]), 0.2, mode=LayerMode.INFERENCE)
    logits, _ = head_forward(params, config, wccn, pooled, labels, LayerMode.INFERENCE)
    np.testing.assert_allclose(logits, reference_logits(params, wccn.factor, pooled), atol=1e-12)


def test_inference_is_deterministic_and_unit_norm(rng):
    params, _, pooled, labels = make_setup(rng)
    config = HeadConfig(dropout_rate=0.5, hidden_dim=5)
    first, cache = head_forward(params, config, None, pooled, labels, "inference")
    second, _ = head_forward(params, config, None, pooled, labels, "inference")
    np.testing.assert_array_equal(first, second)
    norms = np.linalg.norm(cache.normalized, axis=1)
    active = np.linalg.norm(cache.projected, axis=1) > 0
    np.testing.assert_allclose(norms[active], 1.0, atol=1e-12)


def test_shape_chain(rng):
    params, config, pooled, labels = make_setup(rng, d_z=6, d_h=4, n_items=5)
    logits, cache = head_forward(params, config, DeepWccn.init(4, 0.2), pooled, labels, "training")
    assert cache.pre_activation.shape == (5, 4)
    assert cache.dropped.shape == (5, 4)
    assert cache.projected.shape == (5, 4)
    assert logits.shape == (5, 4)


def test_training_forward_advances_wccn(rng):
    params, config, pooled, _ = make_setup(rng, n_items=8)
    labels = np.array([0, 0, 1, 1, 2, 2, 3, 3])
    wccn = DeepWccn.init(5, 0.3)
    head_forward(params, config, wccn, pooled, labels, LayerMode.TRAINING, np.random.default_rng(0))
    assert wccn.n_tot == 1
    head_forward(params, config, wccn, pooled, labels, LayerMode.INFERENCE)
    assert wccn.n_tot == 1


def test_dimension_mismatch(rng):
    params, config, _, labels = make_setup(rng)
    with pytest.raises(DimensionMismatchError):
        head_forward(params, config, None, rng.normal(size=(8, 5)), labels)


def test_dropout_expectation_matches_inference(rng):
    params, _, pooled, labels = make_setup(rng, n_items=3)
    config = HeadConfig(dropout_rate=0.3, hidden_dim=5)
    _, reference = head_forward(params, config, None, pooled, labels, "inference")
    draws = np.random.default_rng(99)
    total = np.zeros_like(reference.dropped)
    n_masks = 10_000
    for _ in range(n_masks):
        _, cache = head_forward(params, config, None, pooled, labels, "training", draws)
        total += cache.dropped
    mean = total / n_masks
    error = np.linalg.norm(mean - reference.dropped) / np.linalg.norm(reference.dropped)
    assert error <= 0.02


# ── Backward ─────────────────────────────────────────

def frozen_wccn(rng, dim):
    layer = DeepWccn.init(dim, 0.3)
    layer.forward_train(rng.normal(size=(12, dim)), np.repeat([0, 1, 2, 3], 3))
    layer.freeze()
    return layer


def relative_error(numeric, analytic) -> float:
    scale = max(np.linalg.norm(numeric), np.linalg.norm(analytic), 1e-12)
    return float(np.linalg.norm(numeric - analytic) / scale)


@pytest.mark.parametrize("use_wccn", [True, False])
def test_gradients_match_finite_differences(rng, use_wccn):
    params, _, pooled, labels = make_setup(rng, d_z=3, d_h=5, n_items=6, seed=4)
    config = HeadConfig(dropout_rate=0.3, hidden_dim=5)
    wccn = frozen_wccn(rng, 5) if use_wccn else None

    def loss_at(p, u):
        logits, _ = head_forward(p, config, wccn, u, labels, "training", np.random.default_rng(5))
        return total_loss(logits, labels)

    _, cache = head_forward(params, config, wccn, pooled, labels, "training", np.random.default_rng(5))
    grads = head_backward(cache, labels)

    for name in PARAM_NAMES:
        base = getattr(params, name)
        numeric = np.zeros_like(base)
        for idx in np.ndindex(base.shape):
            plus, minus = params.copy(), params.copy()
            getattr(plus, name)[idx] += STEP
            getattr(minus, name)[idx] -= STEP
            numeric[idx] = (loss_at(plus, pooled) - loss_at(minus, pooled)) / (2 * STEP)
        assert relative_error(numeric, getattr(grads, name)) <= 1e-4, name

    numeric = np.zeros_like(pooled)
    for idx in np.ndindex(pooled.shape):
        plus, minus = pooled.copy(), pooled.copy()
        plus[idx] += STEP
        minus[idx] -= STEP
        numeric[idx] = (loss_at(params, plus) - loss_at(params, minus)) / (2 * STEP)
    assert relative_error(numeric, grads.pooled) <= 1e-4


def test_unit_norm_gradient_is_orthogonal_to_input(rng):
    w = rng.normal(size=(3, 5))
    g = rng.normal(size=(3, 5))
    back = _unit_norm_backward(w, g)
    np.testing.assert_allclose(np.sum(back * w, axis=1), 0.0, atol=1e-10)


def test_saturated_minimum_has_vanishing_gradients(rng):
    params, config, pooled, _ = make_setup(rng, n_items=4)
    _, cache = head_forward(params, config, None, pooled, np.zeros(4, dtype=int), "training", np.random.default_rng(0))
    # Sesgo enorme hacia la clase verdadera: softmax saturado.
    cache.logits[:, 0] += 1e3
    grads = head_backward(cache, np.zeros(4, dtype=int))
    for name in PARAM_NAMES:
        assert np.abs(getattr(grads, name)).max() <= 1e-12


def test_backward_consumes_cache(rng):
    params, config, pooled, labels = make_setup(rng)
    _, cache = head_forward(params, config, None, pooled, labels, "training", np.random.default_rng(0))
    head_backward(cache, labels)
    with pytest.raises(StaleIntermediatesError):
        head_backward(cache, labels)


def test_backward_rejects_inference_cache(rng):
    params, config, pooled, labels = make_setup(rng)
    _, cache = head_forward(params, config, None, pooled, labels, "inference")
    with pytest.raises(StaleIntermediatesError):
        head_backward(cache, labels)


# ── Modelo ───────────────────────────────────────────

def test_default_hidden_dim_is_quarter_of_dz():
    model = EmotionModel.create(64, HeadConfig())
    assert model.params.dense_weights.shape == (16, 128)
    assert model.wccn.dim == 16


def test_model_without_wccn():
    model = EmotionModel.create(8, HeadConfig(use_wccn=False))
    assert model.wccn is None


def test_model_round_trip(rng, tmp_path):
    model = EmotionModel.create(6, HeadConfig(hidden_dim=3, rng_seed=2))
    model.wccn = frozen_wccn(rng, 3)
    model.save(tmp_path / "model.emohead")
    restored = EmotionModel.load(tmp_path / "model.emohead")
    assert restored.to_bytes() == model.to_bytes()
    pooled = rng.normal(size=(5, 12))
    np.testing.assert_array_equal(restored.logits(pooled), model.logits(pooled))


def test_model_round_trip_without_wccn():
    model = EmotionModel.create(4, HeadConfig(use_wccn=False))
    data = model.to_bytes()
    assert data.startswith(b"EMOHEAD1")
    assert EmotionModel.from_bytes(data).wccn is None


def test_corrupt_model():
    data = EmotionModel.create(4, HeadConfig()).to_bytes()
    with pytest.raises(CorruptStateError):
        EmotionModel.from_bytes(data[:-3])
    with pytest.raises(CorruptStateError):
        EmotionModel.from_bytes(b"NOTAHEAD" + data[8:])
