import itertools

import numpy as np
import pytest

from dropdiag.mathops import one_hot
from dropdiag.network import (
    DropoutMaskSet,
    NetworkConfig,
    backward,
    forward,
    forward_batch,
    init_params,
    loss_and_gradients,
    model_from_json,
    model_to_json,
    sample_mask_block,
    sample_masks,
)
from dropdiag.rng import RngStream


def small_config(**kw):
    defaults = dict(input_dim=4, hidden_layers=(5, 4), num_classes=3, init_seed=1)
    defaults.update(kw)
    return NetworkConfig(**defaults)


class TestConfig:
    def test_defaults_match_reference_architecture(self):
        cfg = NetworkConfig(input_dim=16)
        assert cfg.hidden_layers == (20, 20, 20, 20)
        assert cfg.num_classes == 7
        assert cfg.dropout_rate == 0.0

    def test_rejects_bad_values(self):
        with pytest.raises(ValueError):
            NetworkConfig(input_dim=0)
        with pytest.raises(ValueError):
            NetworkConfig(input_dim=2, dropout_rate=1.0)
        with pytest.raises(ValueError):
            NetworkConfig(input_dim=2, num_classes=1)
        with pytest.raises(ValueError):
            NetworkConfig(input_dim=2, hidden_layers=())


class TestInit:
    def test_deterministic(self):
        cfg = small_config()
        a, b = init_params(cfg), init_params(cfg)
        for wa, wb in zip(a.weights, b.weights):
            assert np.array_equal(wa, wb)

    def test_parameter_count_for_reference_shape(self):
        # 16*20+20 + 3*(20*20+20) + 20*7, output layer bias-free
        params = init_params(NetworkConfig(input_dim=16))
        assert params.num_parameters() == 1740

    def test_hidden_biases_zero(self):
        params = init_params(small_config())
        for b in params.biases:
            assert np.all(b == 0.0)
        assert len(params.biases) == 2  # no output bias

    def test_fan_in_bound(self):
        params = init_params(small_config())
        fan_ins = [4, 5, 4]
        for w, fan in zip(params.weights, fan_ins):
            assert np.abs(w).max() <= np.sqrt(6.0 / fan)


class TestMasks:
    def test_zero_rate_gives_all_ones(self):
        cfg = small_config(dropout_rate=0.0)
        masks = sample_masks(cfg, RngStream(0))
        assert all(np.all(m == 1.0) for m in masks.masks)

    def test_deterministic(self):
        cfg = small_config(dropout_rate=0.3)
        a = sample_masks(cfg, RngStream(5))
        b = sample_masks(cfg, RngStream(5))
        for ma, mb in zip(a.masks, b.masks):
            assert np.array_equal(ma, mb)

    def test_keep_frequency(self):
        cfg = NetworkConfig(input_dim=2, hidden_layers=(20,), num_classes=2, dropout_rate=0.1)
        block = sample_mask_block(cfg, 100_000, RngStream(1))[0]
        per_unit = block.mean(axis=0)
        assert np.all(np.abs(per_unit - 0.9) < 0.01)

    def test_mask_values_binary(self):
        cfg = small_config(dropout_rate=0.5)
        masks = sample_masks(cfg, RngStream(2))
        for m in masks.masks:
            assert set(np.unique(m)).issubset({0.0, 1.0})


class TestForward:
    def test_output_is_distribution(self):
        params = init_params(small_config())
        probs, _ = forward(params, np.array([0.5, -1.0, 2.0, 0.1]))
        assert abs(probs.sum() - 1.0) < 1e-12
        assert np.all(probs > 0)

    def test_all_ones_masks_equal_maskless(self):
        cfg = small_config(dropout_rate=0.0)
        params = init_params(cfg)
        x = np.array([1.0, 2.0, -0.5, 0.0])
        plain, _ = forward(params, x)
        masks = DropoutMaskSet(masks=[np.ones(5), np.ones(4)], keep_prob=1.0)
        masked, _ = forward(params, x, masks)
        assert np.array_equal(plain, masked)

    def test_deterministic_when_no_dropout(self):
        params = init_params(small_config())
        x = np.array([0.3, 0.1, -0.2, 0.9])
        a, _ = forward(params, x)
        b, _ = forward(params, x)
        assert np.array_equal(a, b)

    def test_dimension_mismatch_rejected(self):
        params = init_params(small_config())
        with pytest.raises(ValueError):
            forward(params, np.zeros(3))
        bad = DropoutMaskSet(masks=[np.ones(5), np.ones(3)], keep_prob=0.5)
        with pytest.raises(ValueError):
            forward(params, np.zeros(4), bad)

    def test_batch_matches_single(self):
        params = init_params(small_config())
        X = RngStream(3).normal(size=(6, 4))
        batch_probs, _, _ = forward_batch(params, X)
        for i in range(6):
            single, _ = forward(params, X[i])
            assert np.allclose(single, batch_probs[i], atol=1e-12)


def _linear_regime_params(width):
    """One hidden layer kept strictly in the positive ReLU region."""
    cfg = NetworkConfig(
        input_dim=3, hidden_layers=(width,), num_classes=3, dropout_rate=0.5, init_seed=7
    )
    params = init_params(cfg)
    params.biases[0][:] = 10.0  # pre-activations stay positive for unit inputs
    return cfg, params


@pytest.mark.parametrize("width", [4, 12])
def test_exhaustive_mask_average_unbiased_on_linear_stretch(width):
    # Inverted scaling makes the masked pass unbiased for linear maps: the
    # average of the pre-softmax activations over all 2^w masks equals the
    # unmasked activations.
    cfg, params = _linear_regime_params(width)
    x = np.array([0.5, -0.25, 0.75])
    _, plain_cache = forward(params, x)
    total = np.zeros(3)
    for bits in itertools.product([0.0, 1.0], repeat=width):
        masks = DropoutMaskSet(masks=[np.array(bits)], keep_prob=0.5)
        _, cache = forward(params, x, masks)
        total += cache.logits
    avg = total / 2**width
    assert np.allclose(avg, plain_cache.logits, atol=1e-12)


def _finite_difference_grads(params, X, Y, masks, step=1e-5):
    def loss_at():
        return loss_and_gradients(params, X, Y, masks)[0]

    fd_w = [np.zeros_like(w) for w in params.weights]
    fd_b = [np.zeros_like(b) for b in params.biases]
    for tensor, out in list(zip(params.weights, fd_w)) + list(zip(params.biases, fd_b)):
        flat = tensor.reshape(-1)
        target = out.reshape(-1)
        for i in range(flat.size):
            orig = flat[i]
            flat[i] = orig + step
            hi = loss_at()
            flat[i] = orig - step
            lo = loss_at()
            flat[i] = orig
            target[i] = (hi - lo) / (2 * step)
    return fd_w, fd_b


def _max_rel_error(analytic, numeric):
    worst = 0.0
    for a, f in zip(analytic, numeric):
        denom = np.maximum(np.maximum(np.abs(a), np.abs(f)), 1e-6)
        worst = max(worst, float((np.abs(a - f) / denom).max()))
    return worst


class TestBackward:
    @pytest.mark.parametrize(
        "arch,seed,rate",
        [
            ((4, (2,), 3), 11, 0.0),
            ((3, (5, 4), 4), 12, 0.0),
            ((5, (6, 3), 2), 13, 0.5),
        ],
    )
    def test_matches_finite_differences(self, arch, seed, rate):
        input_dim, hidden, classes = arch
        cfg = NetworkConfig(
            input_dim=input_dim, hidden_layers=hidden, num_classes=classes,
            dropout_rate=rate, init_seed=seed,
        )
        params = init_params(cfg)
        rng = RngStream(seed)
        # Zero biases put masked-out layers exactly on the ReLU kink, where
        # central differences are invalid; nudge them off it.
        for b in params.biases:
            b += 0.1 * rng.normal(size=b.shape)
        X = rng.normal(size=(5, input_dim))
        Y = one_hot(rng.integers(0, classes, 5), classes)
        masks = sample_mask_block(cfg, 5, rng.substream("m")) if rate > 0 else None

        grads = backward(params, X, Y, masks)
        fd_w, fd_b = _finite_difference_grads(params, X, Y, masks)
        assert _max_rel_error(grads.weights, fd_w) < 1e-4
        assert _max_rel_error(grads.biases, fd_b) < 1e-4

    def test_zero_input_zero_weights(self):
        cfg = small_config()
        params = init_params(cfg)
        for w in params.weights:
            w[:] = 0.0
        X = np.zeros((3, 4))
        Y = one_hot(np.array([0, 1, 2]), 3)
        grads = backward(params, X, Y)
        for g in grads.weights + grads.biases:
            assert np.all(g == 0.0)

    def test_duplicated_batch_same_mean_gradient(self):
        cfg = small_config()
        params = init_params(cfg)
        rng = RngStream(21)
        X = rng.normal(size=(4, 4))
        Y = one_hot(rng.integers(0, 3, 4), 3)
        g1 = backward(params, X, Y)
        g2 = backward(params, np.vstack([X, X]), np.vstack([Y, Y]))
        for a, b in zip(g1.weights + g1.biases, g2.weights + g2.biases):
            assert np.allclose(a, b, atol=1e-12)

    def test_rejects_empty_batch(self):
        params = init_params(small_config())
        with pytest.raises(ValueError):
            backward(params, np.zeros((0, 4)), np.zeros((0, 3)))


class TestSerialization:
    def test_round_trip_value_identical(self):
        params = init_params(small_config(dropout_rate=0.1))
        text = model_to_json(params, standardization={"mean": [0.0] * 4, "std": [1.0] * 4})
        parsed, std = model_from_json(text)
        assert model_to_json(parsed, std) == text
        for a, b in zip(params.weights, parsed.weights):
            assert np.array_equal(a, b)
        assert parsed.config == params.config

    def test_no_standardization_round_trip(self):
        params = init_params(small_config())
        parsed, std = model_from_json(model_to_json(params))
        assert std is None
        assert parsed.config == params.config

    def test_version_check(self):
        params = init_params(small_config())
        doc = model_to_json(params).replace('"format_version": 1', '"format_version": 99')
        with pytest.raises(ValueError):
            model_from_json(doc)
