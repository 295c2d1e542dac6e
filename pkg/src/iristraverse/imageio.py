"""Image files: 8-bit binary PGM (P5) written by hand, PNG through Pillow."""
from __future__ import annotations

import os

import numpy as np


def to_uint8(img):
    return np.clip(np.rint(np.asarray(img, dtype=np.float64) * 255.0), 0, 255).astype(np.uint8)


def write_pgm(img, path):
    """Write an H x W image as P5. Float input is taken to be in [0, 1]."""
    a = np.asarray(img)
    if a.ndim != 2:
        raise ValueError(f"PGM needs a 2-D image, got shape {a.shape}")
    if a.dtype != np.uint8:
        a = to_uint8(a)
    H, W = a.shape
    with open(path, "wb") as fh:
        fh.write(f"P5\n{W} {H}\n255\n".encode("ascii"))
        fh.write(np.ascontiguousarray(a).tobytes())


def _pgm_tokens(data, count):
    tokens, pos = [], 0
    while len(tokens) < count:
        while pos < len(data) and data[pos:pos + 1].isspace():
            pos += 1
        if data[pos:pos + 1] == b"#":
            pos = data.index(b"\n", pos) + 1
            continue
        start = pos
        while pos < len(data) and not data[pos:pos + 1].isspace():
            pos += 1
        tokens.append(data[start:pos])
    return tokens, pos + 1


def read_pgm(path):
    """Read an 8-bit P5 file as float64 in [0, 1]."""
    with open(path, "rb") as fh:
        data = fh.read()
    try:
        (magic, w, h, maxval), pos = _pgm_tokens(data, 4)
        W, H, maxval = int(w), int(h), int(maxval)
    except (ValueError, IndexError) as exc:
        raise ValueError(f"{path}: malformed PGM header") from exc
    if magic != b"P5" or maxval != 255:
        raise ValueError(f"{path}: only 8-bit binary PGM (P5, maxval 255) is supported")
    if len(data) - pos < W * H:
        raise ValueError(f"{path}: truncated PGM body ({len(data) - pos} of {W * H} bytes)")
    pixels = np.frombuffer(data, dtype=np.uint8, count=W * H, offset=pos)
    return pixels.reshape(H, W).astype(np.float64) / 255.0


def write_png(img, path):
    from PIL import Image

    Image.fromarray(to_uint8(img)).save(path)


def read_png(path):
    from PIL import Image

    with Image.open(path) as im:
        return np.asarray(im.convert("L"), dtype=np.float64) / 255.0


def write_image(img, path, fmt=None):
    fmt = fmt or os.path.splitext(str(path))[1].lstrip(".").lower() or "pgm"
    if fmt == "pgm":
        write_pgm(img, path)
    elif fmt == "png":
        write_png(img, path)
    else:
        raise ValueError(f"unsupported image format {fmt!r} (pgm or png)")


def read_image(path):
    ext = os.path.splitext(str(path))[1].lower()
    if ext == ".png":
        return read_png(path)
    return read_pgm(path)
