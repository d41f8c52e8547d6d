import numpy as np
import pytest

from InpaintX.tta import tensor as T
from InpaintX.tta.exception import DimensionError
from InpaintX.tta.layers import (
    Activation,
    GatedConvLayer,
    SpectralConvLayer,
    dilated_block,
    gated_conv,
    make_dilated_block,
    make_discriminator_layers,
    patch_discriminator,
    spectral_conv,
)
from InpaintX.tta.losses import adv_d_loss
from InpaintX.tta.tensor import Tensor


def test_gated_conv_closed_gate_silences_output(rng):
    layer = GatedConvLayer.create(rng, 2, 3)
    layer.gate_weight.data = np.zeros_like(layer.gate_weight.data)
    layer.gate_bias.data = np.full(3, -100.0, dtype=np.float32)
    out = gated_conv(layer, Tensor(rng.standard_normal((1, 2, 6, 6))))
    assert np.abs(out.data).max() < 1e-30


def test_gated_conv_open_gate_passes_feature(rng):
    layer = GatedConvLayer.create(rng, 2, 3, activation=Activation.NONE)
    layer.gate_weight.data = np.zeros_like(layer.gate_weight.data)
    layer.gate_bias.data = np.full(3, 100.0, dtype=np.float32)
    x = Tensor(rng.standard_normal((1, 2, 6, 6)))
    expected = T.conv2d(x, layer.feature_weight, layer.feature_bias, 1, 1)
    np.testing.assert_allclose(gated_conv(layer, x).data, expected.data, atol=1e-6)


def test_gated_conv_matches_hand_composition(rng):
    layer = GatedConvLayer.create(rng, 2, 2, kernel=3, stride=2, padding=1)
    x = Tensor(rng.standard_normal((1, 2, 6, 6)))
    feature = T.elu(T.conv2d(x, layer.feature_weight, layer.feature_bias, 2, 1))
    gate = T.sigmoid(T.conv2d(x, layer.gate_weight, layer.gate_bias, 2, 1))
    np.testing.assert_allclose(gated_conv(layer, x).data, (feature.data * gate.data), atol=1e-6)


def test_gated_conv_kernel_mismatch(rng):
    a = GatedConvLayer.create(rng, 2, 2, kernel=3)
    with pytest.raises(DimensionError):
        GatedConvLayer(a.feature_weight, a.feature_bias, Tensor(np.zeros((2, 2, 5, 5))), a.gate_bias)


def test_dilated_block_keeps_shape(rng):
    layers = make_dilated_block(rng, 4, (2, 4, 8, 16))
    out = dilated_block(Tensor(rng.standard_normal((1, 4, 16, 16))), layers)
    assert out.shape == (1, 4, 16, 16)


@pytest.mark.parametrize("seed", range(5))
def test_gated_conv_gradients(seed):
    rng = np.random.default_rng(seed)
    layer = GatedConvLayer.create(rng, 2, 2, kernel=3, dilation=2)
    x = Tensor(rng.standard_normal((1, 2, 5, 5)))
    inputs = [x, layer.feature_weight, layer.feature_bias, layer.gate_weight, layer.gate_bias]

    def fn(x, fw, fb, gw, gb):
        return gated_conv(GatedConvLayer(fw, fb, gw, gb, 1, 2, 2, Activation.ELU), x)

    for report in T.check_gradients(fn, inputs, seed=seed):
        assert report.ok, f"{report.name}: {report.max_error:.2e}"


def test_power_iteration_matches_svd(rng):
    layer = SpectralConvLayer.create(rng, 2, 8, kernel=3, init_iterations=50)
    exact = np.linalg.svd(layer.weight.data.reshape(8, 18).astype(np.float64), compute_uv=False)[0]
    assert abs(layer.sigma() - exact) / exact < 1e-2


def test_normalized_weight_has_unit_spectral_norm(rng):
    for layer in make_discriminator_layers(rng, 4, (8, 16, 16), kernel=5):
        layer.power_iterate(100)
        normalized = layer.matrix() / layer.sigma()
        top = np.linalg.svd(normalized, compute_uv=False)[0]
        assert 0.9 <= top <= 1.1


def test_eval_forward_keeps_u(rng):
    layer = SpectralConvLayer.create(rng, 2, 4, kernel=3)
    before = layer.u.copy()
    spectral_conv(layer, Tensor(rng.standard_normal((1, 2, 8, 8))), train_mode=False)
    np.testing.assert_array_equal(layer.u, before)
    spectral_conv(layer, Tensor(rng.standard_normal((1, 2, 8, 8))), train_mode=True)
    assert layer.u.shape == before.shape


@pytest.mark.parametrize("seed", range(5))
def test_spectral_conv_gradients(seed):
    rng = np.random.default_rng(seed)
    layer = SpectralConvLayer.create(rng, 2, 3, kernel=3)
    x = Tensor(rng.standard_normal((1, 2, 6, 6)))

    def fn(x, w, b):
        return spectral_conv(SpectralConvLayer(w, b, layer.u, 2, 1, activation=False), x)

    for report in T.check_gradients(fn, [x, layer.weight, layer.bias], seed=seed):
        assert report.ok, f"{report.name}: {report.max_error:.2e}"


def test_discriminator_reduces_64_to_one_score(rng):
    layers = make_discriminator_layers(rng, 4, (4, 4, 4, 4, 4, 4), kernel=5)
    scores = patch_discriminator(Tensor(rng.standard_normal((2, 4, 64, 64))), layers)
    assert scores.shape == (2, 4, 1, 1)


def test_discriminator_rejects_small_input(rng):
    layers = make_discriminator_layers(rng, 4, (4, 4, 4, 4), kernel=3)
    with pytest.raises(DimensionError):
        patch_discriminator(Tensor(np.zeros((1, 4, 8, 8))), layers)


def _zero_gated(channels, dilation):
    zeros = np.zeros((channels, channels, 3, 3))
    return GatedConvLayer(Tensor.parameter(zeros), Tensor.parameter(np.zeros(channels)),
                          Tensor.parameter(zeros), Tensor.parameter(np.zeros(channels)),
                          1, dilation, dilation, Activation.NONE)


@pytest.mark.parametrize("dilations", [(2,), (2, 4), (2, 4, 8, 16)])
def test_dilated_block_with_zero_weights_outputs_zero(rng, dilations):
    layers = [_zero_gated(3, d) for d in dilations]
    out = dilated_block(Tensor(rng.standard_normal((1, 3, 16, 16))), layers)
    np.testing.assert_array_equal(out.data, np.zeros((1, 3, 16, 16)))


@pytest.mark.parametrize("dilations", [(2,), (2, 4), (2, 4, 8, 16)])
def test_dilated_block_with_center_taps_is_identity(rng, dilations):
    layers = []
    for d in dilations:
        layer = _zero_gated(3, d)
        layer.feature_weight.data[:, :, 1, 1] = np.eye(3)
        layer.gate_bias.data[:] = 20.0
        layers.append(layer)
    x = Tensor(rng.standard_normal((1, 3, 16, 16)))
    np.testing.assert_allclose(dilated_block(x, layers).data, x.data, atol=1e-6)


def _small_discriminator(seed):
    return make_discriminator_layers(np.random.default_rng(seed), 4, (6, 8, 3), kernel=3)


@pytest.mark.parametrize("seed", range(5))
def test_discriminator_hinge_ignores_weight_scale(seed):
    rng = np.random.default_rng(100 + seed)
    real, fake = Tensor(rng.standard_normal((2, 4, 16, 16))), Tensor(rng.standard_normal((2, 4, 16, 16)))
    layers = _small_discriminator(seed)
    scaled = [SpectralConvLayer(Tensor.parameter(layer.weight.data * 10.0), layer.bias, layer.u.copy(),
                                layer.stride, layer.padding, layer.activation) for layer in layers]
    expected = adv_d_loss(patch_discriminator(real, layers), patch_discriminator(fake, layers)).item()
    got = adv_d_loss(patch_discriminator(real, scaled), patch_discriminator(fake, scaled)).item()
    assert abs(got - expected) < 1e-4 * max(1.0, abs(expected))
    np.testing.assert_allclose(patch_discriminator(real, scaled).data, patch_discriminator(real, layers).data,
                               rtol=1e-4, atol=1e-5)


@pytest.mark.parametrize("seed", range(3))
def test_discriminator_with_zero_weights_scores_zero(seed):
    layers = _small_discriminator(seed)
    for layer in layers:
        layer.weight.data = np.zeros_like(layer.weight.data)
    x = Tensor(np.random.default_rng(seed).standard_normal((2, 4, 16, 16)))
    scores = patch_discriminator(x, layers)
    assert scores.shape == (2, 3, 2, 2)
    np.testing.assert_array_equal(scores.data, np.zeros(scores.shape))


@pytest.mark.parametrize("seed", range(5))
def test_duplicated_batch_duplicates_scores(seed):
    layers = _small_discriminator(seed)
    x = np.random.default_rng(seed).standard_normal((2, 4, 16, 16)).astype(np.float32)
    single = patch_discriminator(Tensor(x), layers).data
    doubled = patch_discriminator(Tensor(np.concatenate([x, x])), layers).data
    np.testing.assert_allclose(doubled[:2], single, atol=1e-6)
    np.testing.assert_allclose(doubled[2:], single, atol=1e-6)
