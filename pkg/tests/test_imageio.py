import numpy as np
import pytest

from iristraverse import imageio


def test_zero_image_body(tmp_path):
    p = tmp_path / "z.pgm"
    imageio.write_pgm(np.zeros((3, 5)), p)
    data = p.read_bytes()
    assert data == b"P5\n5 3\n255\n" + bytes(15)


def test_header_640x480(tmp_path):
    p = tmp_path / "h.pgm"
    imageio.write_pgm(np.zeros((480, 640)), p)
    assert p.read_bytes()[:15].split() == [b"P5", b"640", b"480", b"255"]


def test_pgm_round_trip(tmp_path, rng):
    img = rng.random((17, 23))
    p = tmp_path / "r.pgm"
    imageio.write_image(img, p)
    back = imageio.read_image(p)
    assert back.shape == img.shape
    assert np.abs(back - img).max() <= 0.5 / 255 + 1e-12


def test_quantisation_and_clamping():
    u = imageio.to_uint8(np.array([-0.5, 0.0, 0.5, 1.0, 2.0]))
    assert list(u) == [0, 0, 128, 255, 255]


def test_png_round_trip(tmp_path, rng):
    img = rng.random((9, 11))
    p = tmp_path / "r.png"
    imageio.write_image(img, p)
    assert np.array_equal(imageio.read_image(p), imageio.to_uint8(img) / 255.0)


def test_pgm_with_comment(tmp_path):
    p = tmp_path / "c.pgm"
    p.write_bytes(b"P5\n# made by hand\n2 1\n255\n" + bytes([0, 255]))
    assert list(imageio.read_pgm(p)[0]) == [0.0, 1.0]


@pytest.mark.parametrize("blob", [b"P2\n2 1\n255\n01", b"P5\n2 1\n65535\n" + bytes(4), b"P5\n2 2\n255\n\x00",
                                  b"P5\n"])
def test_bad_pgm_rejected_with_path(tmp_path, blob):
    p = tmp_path / "bad.pgm"
    p.write_bytes(blob)
    with pytest.raises(ValueError, match="bad.pgm"):
        imageio.read_pgm(p)


def test_io_errors_name_the_path(tmp_path):
    missing = tmp_path / "nope" / "x.pgm"
    with pytest.raises(OSError) as info:
        imageio.write_pgm(np.zeros((2, 2)), missing)
    assert "x.pgm" in str(info.value)
    with pytest.raises(OSError) as info:
        imageio.read_image(tmp_path / "absent.pgm")
    assert "absent.pgm" in str(info.value)


def test_unknown_format(tmp_path):
    with pytest.raises(ValueError):
        imageio.write_image(np.zeros((2, 2)), tmp_path / "x.tif")
    with pytest.raises(ValueError):
        imageio.write_pgm(np.zeros((2, 2, 3)), tmp_path / "x.pgm")
