import numpy as np
import pytest

from iristraverse import autodiff as ad
from iristraverse import decoders as D
from iristraverse.decoders import LatentCode, ProceduralDecoder
from iristraverse.geometry import hard_opening


@pytest.fixture(scope="module")
def big():
    return ProceduralDecoder(480, 640, 32, seed=0)


def test_zero_code_gives_midpoint_pupil(decoder):
    p = decoder.params(LatentCode(np.zeros(32)))
    lo, hi = D.PUPIL_RANGE
    assert p.r_pupil == pytest.approx(decoder.half_size * (lo + hi) / 2)


def test_pupil_coordinate_is_monotone(decoder):
    base = LatentCode.sample(32, 3)
    radii = []
    for step in (-1.0, 0.0, 1.0, 2.0):
        v = base.values.copy()
        v[D.PUPIL] += step
        radii.append(decoder.params(base.replace(v)).r_pupil)
    assert np.all(np.diff(radii) > 0)


def test_geometry_ordering(decoder):
    for s in range(30):
        p = decoder.params(LatentCode.sample(32, s))
        assert 0 < p.r_pupil < p.aperture < p.r_iris < decoder.half_size


def test_dark_disk_area_matches_pupil(big):
    for s in range(20):
        z = LatentCode.sample(32, s)
        x = big.render(z)
        area = np.count_nonzero(x < 0.28)
        assert area == pytest.approx(np.pi * big.params(z).r_pupil ** 2, rel=0.05)


def test_oracle_mask_landmarks(big):
    for s in range(5):
        z = LatentCode.sample(32, s)
        p, m = big.oracle(z)
        cy, cx = int(round(p.cy)), int(round(p.cx))
        assert m[cy, cx] < 1e-3
        mid = int(round(p.cx + (p.r_pupil + p.r_iris) / 2))
        assert m[cy, mid] > 0.95


def test_oracle_opening_is_twice_aperture(renders, decoder):
    for z, _ in renders:
        p, m = decoder.oracle(z)
        assert abs(hard_opening(m) - 2 * p.aperture) <= 2.0


def test_generate_deterministic_and_bounded(decoder):
    z = LatentCode.sample(32, 11)
    assert np.array_equal(decoder.generate(z).data, decoder.generate(z).data)
    rng = np.random.default_rng(0)
    for _ in range(100):
        x = decoder.generate(LatentCode(3 * rng.standard_normal(32))).data
        assert x.min() >= 0.0 and x.max() <= 1.0


def test_mean_pixel_gradcheck():
    dec = ProceduralDecoder(48, 64, 8, seed=1)
    z = LatentCode.sample(8, 2).values
    assert ad.grad_check(lambda t: ad.reduce_mean(dec.generate(t)), z) <= 1e-4


def test_mean_pixel_gradcheck_with_texture():
    dec = ProceduralDecoder(24, 32, 12, seed=1)
    z = LatentCode.sample(12, 5).values
    assert ad.grad_check(lambda t: ad.reduce_mean(ad.square(dec.generate(t))), z) <= 1e-4


def test_latent_for_hits_requested_radii():
    dec = ProceduralDecoder(480, 640, 32, seed=0)
    z = dec.latent_for(r_pupil=60.0, r_iris=170.0, aperture_fraction=0.6)
    p = dec.params(z)
    assert p.r_pupil == pytest.approx(60.0)
    assert p.r_iris == pytest.approx(170.0)
    assert (p.aperture - p.r_pupil) / (p.r_iris - p.r_pupil) == pytest.approx(0.6)
    with pytest.raises(ValueError):
        dec.latent_for(r_pupil=1000.0)
    # iris radius is capped at r_pupil + R/2 so the disk stays inside the frame
    with pytest.raises(ValueError):
        dec.latent_for(r_pupil=60.0, r_iris=180.0)


def test_mapping_network():
    dec = ProceduralDecoder(48, 64, 16, seed=4, mapping=True)
    again = ProceduralDecoder(48, 64, 16, seed=4, mapping=True)
    z = LatentCode.sample(16, 9)
    w = dec.to_w(z)
    assert w.space == D.W_SPACE
    assert np.array_equal(w.values, again.to_w(z).values)
    assert np.any(dec.mapping(LatentCode(np.zeros(16))).values != 0)
    assert np.array_equal(dec.generate_from_w(w).data, dec.generate(z).data)
    assert np.array_equal(dec.render(w), dec.render(z))


def test_space_checks():
    dec = ProceduralDecoder(48, 64, 16, seed=4, mapping=True)
    w = dec.to_w(LatentCode.sample(16, 0))
    with pytest.raises(ValueError):
        dec.generate(w)
    with pytest.raises(ValueError):
        LatentCode(np.zeros(3), "X")
    with pytest.raises(ad.ShapeError):
        dec.generate(LatentCode(np.zeros(5)))
    with pytest.raises(ValueError):
        ProceduralDecoder(48, 64, 4)


def test_latent_code_is_read_only():
    z = LatentCode.sample(8, 0)
    with pytest.raises(ValueError):
        z.values[0] = 1.0
    assert np.array_equal(LatentCode.sample(8, 0).values, z.values)


def test_conv_decoder_shape_range_and_gradient():
    dec = D.ConvDecoder(32, 48, 8, seed=2, channels=4)
    z = LatentCode.sample(8, 1)
    x = dec.generate(z).data
    assert x.shape == (32, 48) and 0 < x.min() and x.max() < 1
    assert ad.grad_check(lambda t: ad.reduce_mean(dec.generate(t)), z.values) <= 1e-4
    with pytest.raises(ValueError):
        D.ConvDecoder(30, 48, 8)


def test_weight_file_round_trip(tmp_path):
    dec = D.ConvDecoder(16, 16, 8, seed=2, channels=4)
    path = tmp_path / "w.bin"
    D.save_weights(path, dec.arrays())
    other = D.ConvDecoder(16, 16, 8, seed=99, channels=4)
    other.load_arrays(D.load_weights(path))
    z = LatentCode.sample(8, 0)
    assert np.array_equal(other.generate(z).data, dec.generate(z).data)
    (tmp_path / "bad.bin").write_bytes(b"NOPE" + bytes(12))
    with pytest.raises(ValueError, match="not a weight file"):
        D.load_weights(tmp_path / "bad.bin")
    with pytest.raises(ValueError):
        D.ConvDecoder(16, 16, 8, channels=2).load_arrays(D.load_weights(path))


def test_build_decoder():
    assert isinstance(D.build_decoder("procedural", 48, 64, 16), ProceduralDecoder)
    assert isinstance(D.build_decoder("conv", 48, 64, 16), D.ConvDecoder)
    with pytest.raises(ValueError):
        D.build_decoder("stylegan")
