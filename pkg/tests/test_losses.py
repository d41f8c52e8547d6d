import numpy as np
import pytest

from InpaintX.tta import tensor as T
from InpaintX.tta.exception import ConfigError, DimensionError
from InpaintX.tta.losses import (
    ExtractorStage,
    LossParts,
    LossWeights,
    PerceptualExtractor,
    adv_d_loss,
    adv_g_loss,
    gram,
    perceptual_loss,
    rec_loss,
    style_loss,
    total_loss,
)
from InpaintX.tta.tensor import Tensor


@pytest.fixture
def extractor():
    return PerceptualExtractor.from_seed(7, 3, (4, 8, 8))


def _image(rng, n=2, size=8):
    return Tensor(rng.uniform(-1, 1, (n, 3, size, size)))


def test_identical_inputs_give_zero(rng, extractor):
    x = _image(rng)
    assert rec_loss(x, x).item() == 0.0
    assert perceptual_loss(extractor, x, x).item() == 0.0
    assert style_loss(extractor, x, x).item() == 0.0


def test_rec_loss_matches_scalar_loop(rng):
    a, b = _image(rng), _image(rng)
    total = 0.0
    for value_a, value_b in zip(a.data.ravel(), b.data.ravel()):
        total += abs(float(value_a) - float(value_b))
    assert abs(rec_loss(a, b).item() - total / a.size) < 1e-6


def test_hinge_is_zero_at_margins():
    real = Tensor(np.ones((2, 1, 2, 2)))
    fake = Tensor(-np.ones((2, 1, 2, 2)))
    assert adv_d_loss(real, fake).item() == 0.0


def test_hinge_matches_elementwise_oracle(rng):
    real = rng.standard_normal((2, 1, 3, 3)).astype(np.float32)
    fake = rng.standard_normal((2, 1, 3, 3)).astype(np.float32)
    expected = np.maximum(0, 1 - real).mean() + np.maximum(0, 1 + fake).mean()
    assert abs(adv_d_loss(Tensor(real), Tensor(fake)).item() - expected) < 1e-6
    assert abs(adv_g_loss(Tensor(fake)).item() + fake.mean()) < 1e-6


def test_gram_matches_triple_loop(rng):
    phi = rng.standard_normal((2, 3, 4, 5)).astype(np.float32)
    n, c, h, w = phi.shape
    expected = np.zeros((n, c, c))
    for i in range(n):
        for p in range(c):
            for q in range(c):
                expected[i, p, q] = (phi[i, p].astype(np.float64) * phi[i, q]).sum() / (c * h * w)
    assert np.abs(gram(Tensor(phi)).data - expected).max() < 1e-5


def test_gram_needs_feature_maps():
    with pytest.raises(DimensionError):
        gram(Tensor(np.zeros((3, 4))))


def test_perceptual_loss_per_stage(rng, extractor):
    a, b = _image(rng), _image(rng)
    expected = sum(np.abs(fa.data.astype(np.float64) - fb.data).mean()
                   for fa, fb in zip(extractor.features(a), extractor.features(b)))
    assert abs(perceptual_loss(extractor, a, b).item() - expected) < 1e-5


def test_style_loss_from_gram_oracle(rng, extractor):
    a, b = _image(rng), _image(rng)
    expected = sum(np.abs(gram(fa).data.astype(np.float64) - gram(fb).data).mean()
                   for fa, fb in zip(extractor.features(a), extractor.features(b)))
    assert abs(style_loss(extractor, a, b).item() - expected) < 1e-5


def test_identity_extractor_reduces_perceptual_to_rec(rng):
    a, b = _image(rng), _image(rng)
    identity = PerceptualExtractor.identity()
    assert abs(perceptual_loss(identity, a, b).item() - rec_loss(a, b).item()) < 1e-6


def test_unit_parts_with_default_weights():
    one = Tensor(1.0)
    assert abs(total_loss(LossWeights(), LossParts(one, one, one, one)).item() - 102.1) < 1e-4


def test_total_is_weighted_sum(rng):
    parts = rng.uniform(0, 2, 4)
    weights = rng.uniform(0, 3, 4)
    total = total_loss(LossWeights(*weights), LossParts(*(Tensor(p) for p in parts)))
    assert abs(total.item() - float(parts @ weights)) < 1e-5


def test_negative_weight_rejected():
    with pytest.raises(ConfigError, match="style"):
        LossWeights(style=-1.0).validate()


def test_extractor_is_seeded():
    a = PerceptualExtractor.from_seed(3).tensors()
    b = PerceptualExtractor.from_seed(3).tensors()
    c = PerceptualExtractor.from_seed(4).tensors()
    assert all(np.array_equal(a[k].data, b[k].data) for k in a)
    assert not np.array_equal(a["extractor/stage0/weight"].data, c["extractor/stage0/weight"].data)


@pytest.mark.parametrize("seed", range(5))
def test_loss_gradients(seed):
    rng = np.random.default_rng(seed)
    extractor = PerceptualExtractor.from_seed(seed, 3, (3, 4))
    gt = Tensor(rng.uniform(-1, 1, (1, 3, 4, 4)))
    offset = rng.uniform(0.2, 0.5, (1, 3, 4, 4)) * rng.choice([-1.0, 1.0], (1, 3, 4, 4))
    pred = Tensor(gt.data + offset)
    scores = Tensor(rng.standard_normal((1, 1, 2, 2)))
    cases = {
        "rec": (lambda p: rec_loss(gt, p), [pred]),
        "adv_g": (adv_g_loss, [scores]),
        "per": (lambda p: perceptual_loss(extractor, gt, p), [pred]),
        "style": (lambda p: style_loss(extractor, gt, p), [pred]),
    }
    for name, (fn, inputs) in cases.items():
        for report in T.check_gradients(fn, inputs, seed=seed):
            assert report.ok, f"{name}: {report.max_error:.2e}"


def test_hinge_gradients(rng):
    real = Tensor(rng.uniform(0.2, 0.8, (1, 1, 2, 2)) * rng.choice([-1.0, 1.0], (1, 1, 2, 2)))
    fake = Tensor(rng.uniform(0.2, 0.8, (1, 1, 2, 2)) * rng.choice([-1.0, 1.0], (1, 1, 2, 2)))
    for report in T.check_gradients(adv_d_loss, [real, fake]):
        assert report.ok


@pytest.mark.parametrize("seed", range(5))
def test_gram_is_symmetric_positive_semidefinite(seed):
    phi = np.random.default_rng(seed).standard_normal((2, 6, 5, 4))
    g = gram(Tensor(phi)).data.astype(np.float64)
    np.testing.assert_allclose(g, np.transpose(g, (0, 2, 1)), atol=1e-6)
    for sample in g:
        assert np.linalg.eigvalsh(sample).min() >= -1e-6


def _permuted_extractor(extractor, rng):
    """Same extractor with every stage's output channels shuffled and the next stage rewired to match."""
    stages, previous = [], None
    for stage in extractor.stages:
        weight, bias = stage.weight.data, stage.bias.data
        if previous is not None:
            weight = weight[:, previous]
        order = rng.permutation(weight.shape[0])
        stages.append(ExtractorStage(Tensor(weight[order]), Tensor(bias[order]), stage.stride, stage.padding,
                                     stage.activation))
        previous = order
    return PerceptualExtractor(stages)


@pytest.mark.parametrize("seed", range(5))
def test_style_loss_ignores_consistent_channel_order(seed, extractor):
    rng = np.random.default_rng(seed)
    comp, pred = _image(rng), _image(rng)
    shuffled = _permuted_extractor(extractor, rng)
    expected = style_loss(extractor, comp, pred).item()
    assert abs(style_loss(shuffled, comp, pred).item() - expected) < 1e-5 * max(1.0, abs(expected))


@pytest.mark.parametrize("order", [(0, 1, 2), (2, 0, 1), (1, 2, 0), (2, 1, 0)])
def test_style_loss_on_raw_pixels_ignores_color_order(rng, order):
    identity = PerceptualExtractor.identity()
    comp, pred = _image(rng), _image(rng)
    expected = style_loss(identity, comp, pred).item()
    swapped = style_loss(identity, Tensor(comp.data[:, list(order)]), Tensor(pred.data[:, list(order)])).item()
    assert abs(swapped - expected) < 1e-6
