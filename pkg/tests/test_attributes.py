import numpy as np
import pytest

from iristraverse import attributes as A
from iristraverse import autodiff as ad
from iristraverse import geometry as geo
from iristraverse.decoders import BLUR, LatentCode, ProceduralDecoder


def test_spec_validation():
    assert A.AttributeSpec("pupil_radius", 20).target == 20.0
    with pytest.raises(A.SpecError):
        A.AttributeSpec("pupil_radius")
    with pytest.raises(A.SpecError):
        A.AttributeSpec("eyelid_hold", 3.0)
    with pytest.raises(A.SpecError):
        A.AttributeSpec("gaze")
    with pytest.raises(A.SpecError):
        A.AttributeSpec("sharpness", 10.0, weight=-1.0)


def test_dog_kernel_zero_sum():
    k = A.dog_kernel()
    assert k.shape == (9, 9)
    assert abs(k.sum()) < 1e-15
    assert np.allclose(k, k.T)


def test_constant_image_scores_zero():
    x = np.full((40, 50), 0.5)
    m = geo.soft_mask(x)
    assert A.sharpness_score(x, m).item() == pytest.approx(0.0, abs=1e-12)
    assert A.loss_sharpness(x, m, 30.0).item() == pytest.approx(30.0)


def test_score_bounded_on_extreme_images(rng):
    m = np.ones((32, 32))
    for x in (rng.random((32, 32)), (rng.random((32, 32)) > 0.5).astype(float), np.zeros((32, 32))):
        s = A.sharpness_score(x, m).item()
        assert 0.0 <= s < 100.0


def test_blurred_scores_lower(decoder):
    for s in range(20):
        v = LatentCode.sample(32, s).values.copy()
        v[BLUR] = -6.0
        sharp = decoder.generate(LatentCode(v)).detach()
        v[BLUR] = 6.0
        blurred = decoder.generate(LatentCode(v)).detach()
        assert A.measure(sharp, "sharpness") > A.measure(blurred, "sharpness")


def test_loss_at_current_value_is_zero(decoder):
    x = decoder.generate(LatentCode.sample(32, 1)).detach()
    m = geo.soft_mask(x)
    t = A.sharpness_score(x, m).item()
    assert A.loss_sharpness(x, m, t).item() == 0.0
    assert A.loss_pupil(x, A.measure(x, "pupil_radius")).item() == 0.0


def test_sharpness_gradcheck(rng):
    # the normaliser is a stop-gradient; the oracle holds it at its value at x
    x = 0.5 + 0.1 * rng.standard_normal((32, 32))
    area = geo.soft_mask(x).data.sum()
    assert ad.grad_check(lambda t: A.sharpness_score(t, geo.soft_mask(t), area=area), x) <= 1e-4


def test_sharpness_normaliser_carries_no_gradient(rng):
    x = 0.5 + 0.1 * rng.standard_normal((16, 16))
    m = ad.Tensor(geo.soft_mask(x).data, requires_grad=True)
    f = A.sharpness_power(x, m)
    ad.backward(f)
    fx = ad.conv2d((255.0 * (x - x[0, 0])).reshape(1, 16, 16), A.DEFAULT_SHARPNESS.kernel,
                   padding="reflect").data[0]
    np.testing.assert_allclose(m.grad, fx ** 2 / m.data.sum(), rtol=1e-12)


def test_loss_sharpness_gradcheck_through_decoder():
    dec = ProceduralDecoder(48, 64, 8, seed=0)
    z = LatentCode.sample(8, 3).values
    x = dec.generate(z)
    area = geo.soft_mask(x).data.sum()
    t = A.measure(x, "sharpness") + 5.0

    def f(v):
        y = dec.generate(v)
        return A.loss_sharpness(y, geo.soft_mask(y), t, area=area)

    assert ad.grad_check(f, z) <= 1e-3


def test_sharpness_degenerate_mask():
    with pytest.raises(geo.DegenerateSegmentation):
        A.sharpness_score(np.full((20, 20), 0.5), np.zeros((20, 20)))


def test_sharpness_constants_configurable(decoder):
    x = decoder.generate(LatentCode.sample(32, 1)).detach()
    m = geo.soft_mask(x)
    lo = A.sharpness_score(x, m, A.SharpnessConstants(C=1e9)).item()
    hi = A.sharpness_score(x, m, A.SharpnessConstants(C=1e3)).item()
    assert lo < A.sharpness_score(x, m).item() < hi


def test_mask_bce_values():
    eps = A.BCE_EPS
    m0 = np.array([[eps, 1 - eps], [1 - eps, eps]])
    assert A.loss_mask(m0, m0).item() == pytest.approx(0.0, abs=1e-5)
    assert A.loss_mask(np.full((2, 2), 0.5), np.array([[0, 1], [1, 0]])).item() == pytest.approx(np.log(2))
    hard = np.array([[0.0, 1.0], [1.0, 0.0]])
    assert A.loss_mask(1 - hard, hard).item() == pytest.approx(-np.log(eps), rel=1e-6)
    assert -np.log(eps) == pytest.approx(16.12, abs=0.01)
    with pytest.raises(ad.ShapeError):
        A.loss_mask(np.zeros((2, 2)), np.zeros((3, 2)))


def _band_image(rows):
    x = np.ones((480, 64))
    x[100:100 + rows] = 0.5
    return x


def test_eyelid_loss():
    x = _band_image(200)
    assert A.loss_eyelid(x, x).item() == 0.0
    assert A.loss_eyelid(_band_image(150), x).item() == pytest.approx(50.0, abs=0.5)


def test_pupil_loss_on_named_geometry():
    dec = ProceduralDecoder(480, 640, 8, seed=0)
    x = dec.generate(dec.latent_for(r_pupil=60.0, r_iris=170.0))
    assert A.loss_pupil(x, 90.0).item() == pytest.approx(30.0, abs=3.0)


def test_pir_target_on_named_geometry():
    dec = ProceduralDecoder(480, 640, 8, seed=0)
    x = dec.generate(dec.latent_for(r_pupil=58.0, r_iris=174.0))
    assert A.loss_pir(x, 100 / 3).item() <= 2.0


def test_composite_validation(decoder):
    x0 = decoder.generate(LatentCode.sample(32, 0)).detach()
    with pytest.raises(A.SpecError):
        A.CompositeLoss([])
    with pytest.raises(A.SpecError, match="duplicate"):
        A.CompositeLoss([A.AttributeSpec("pupil_radius", 1), A.AttributeSpec("pupil_radius", 2)], x0)
    with pytest.raises(A.SpecError, match="x0"):
        A.CompositeLoss([A.AttributeSpec("eyelid_hold")])
    with pytest.raises(A.SpecError):
        A.CompositeLoss([A.AttributeSpec("pupil_radius", 1)], latent_weight=1.0)


def test_zero_weight_gives_zero_loss(decoder):
    loss = A.CompositeLoss([A.AttributeSpec("pupil_radius", 99.0, weight=0.0)])
    for s in range(3):
        assert loss(decoder.generate(LatentCode.sample(32, s))).item() == 0.0


def test_composite_is_weighted_sum(decoder):
    x0 = decoder.generate(LatentCode.sample(32, 0)).detach()
    x = decoder.generate(LatentCode.sample(32, 1)).detach()
    specs = [A.AttributeSpec("iris_radius", 30.0, 0.7), A.AttributeSpec("identity_hold", weight=2.5),
             A.AttributeSpec("mask_hold", weight=1.5)]
    total = A.CompositeLoss(specs, x0)(x).item()
    parts = [s.weight * A.CompositeLoss([A.AttributeSpec(s.kind, s.target)], x0)(x).item() for s in specs]
    assert total == pytest.approx(sum(parts), rel=1e-14)


def test_composite_gradient_is_sum_of_term_gradients(decoder):
    x0 = decoder.generate(LatentCode.sample(32, 0)).detach()
    z = LatentCode.sample(32, 1).values
    specs = [A.AttributeSpec("pupil_radius", 10.0), A.AttributeSpec("eyelid_hold", weight=0.5)]
    grads = []
    for use in ([specs[0]], [specs[1]], specs):
        zt = ad.Tensor(z, requires_grad=True)
        ad.backward(A.CompositeLoss(use, x0)(decoder.generate(zt)))
        grads.append(zt.grad)
    np.testing.assert_allclose(grads[0] + grads[1], grads[2], rtol=1e-10, atol=1e-12)


def test_composite_gradcheck_through_decoder():
    dec = ProceduralDecoder(48, 64, 8, seed=0)
    z0 = LatentCode.sample(8, 3)
    x0 = dec.generate(z0).detach()
    specs = [A.AttributeSpec("pupil_radius", 5.0), A.AttributeSpec("sharpness", 40.0),
             A.AttributeSpec("eyelid_hold"), A.AttributeSpec("mask_hold"), A.AttributeSpec("identity_hold")]
    z = z0.values + 0.3 * np.random.default_rng(0).standard_normal(8)
    area = geo.soft_mask(dec.generate(z)).data.sum()
    loss = A.CompositeLoss(specs, x0, sharpness_area=area)
    assert ad.grad_check(lambda t: loss(dec.generate(t)), z) <= 1e-3


def test_composite_loss_helper_and_latent_regulariser(decoder):
    z0 = LatentCode.sample(32, 0)
    x0 = decoder.generate(z0).detach()
    specs = [A.AttributeSpec("identity_hold")]
    assert A.composite_loss(z0.values, specs, x0, decoder.generate).item() == 0.0
    z = z0.values + 1.0
    plain = A.composite_loss(z, specs, x0, decoder.generate).item()
    reg = A.composite_loss(z, specs, x0, decoder.generate, latent_weight=2.0, z0=z0.values).item()
    assert reg - plain == pytest.approx(0.5 * 2.0 * 32)


def test_measure(decoder):
    z = LatentCode.sample(32, 5)
    x = decoder.generate(z).detach()
    p = decoder.params(z)
    assert A.measure(x, "pupil_radius") == pytest.approx(p.r_pupil, abs=3)
    assert A.measure(x, "pupil_iris_ratio") == pytest.approx(100 * p.r_pupil / p.r_iris, abs=5)
    assert A.measure(x, "identity_hold", x0=x) == 0.0
    assert A.measure(x, "mask_hold", x0=x) < 1e-2  # soft mask vs its own binarisation
    with pytest.raises(A.SpecError):
        A.measure(x, "mask_hold")


def test_identity_hold_measures_distance(decoder):
    x0 = decoder.generate(LatentCode.sample(32, 0)).detach()
    x1 = decoder.generate(LatentCode.sample(32, 1)).detach()
    assert A.measure(x1, "identity_hold", x0=x0) > 0
