"""Differentiable generators mapping latent codes to grayscale iris images.

Two synthesis networks share one interface:

* :class:`ProceduralDecoder` renders an eye from named latent coordinates
  (pupil radius, iris radius, eyelid aperture, blur mix, centre offsets,
  texture contrast and brightness) plus texture coordinates. Its analytic
  parameters and iris mask double as ground truth for the geometry tests.
* :class:`ConvDecoder` is a fixed random-weight upsampling conv net; it has
  no semantic structure and exists to run the traversal on an unstructured
  latent space.

Either can carry a :class:`MappingNetwork`. ``generate(z)`` then runs
``synthesize(mapping(z))`` and ``generate_from_w(w)`` runs ``synthesize(w)``
directly, so a traversal can optimise in Z or in W.
"""
from __future__ import annotations

import struct
from dataclasses import dataclass, field
from functools import cached_property

import numpy as np

from . import _kernels
from . import autodiff as ad

Z_SPACE = "Z"
W_SPACE = "W"

# named latent coordinates of the procedural renderer
PUPIL, IRIS, APERTURE, BLUR, OFFSET_X, OFFSET_Y, CONTRAST, BRIGHTNESS = range(8)
NAMED_DIMS = 8

PUPIL_LEVEL = 0.06
SCLERA_LEVEL = 0.92
LID_LEVEL = 1.0

PUPIL_RANGE = (0.08, 0.5)  # fraction of min(H, W) / 2
IRIS_MARGIN = 0.2
IRIS_SPAN = 0.3
APERTURE_RANGE = (0.35, 0.85)  # fraction of the pupil-to-limbus gap
OFFSET_RANGE = 0.05
CONTRAST_RANGE = (0.04, 0.10)
IRIS_LEVEL = 0.5
BRIGHTNESS_RANGE = 0.04


@dataclass(frozen=True)
class LatentCode:
    values: np.ndarray
    space: str = Z_SPACE
    seed: int | None = None

    def __post_init__(self):
        values = np.array(self.values, dtype=np.float64).reshape(-1)
        values.setflags(write=False)
        object.__setattr__(self, "values", values)
        if self.space not in (Z_SPACE, W_SPACE):
            raise ValueError(f"latent space must be 'Z' or 'W', got {self.space!r}")

    @classmethod
    def sample(cls, dim, seed):
        """Standard-normal Z-space draw from a seeded generator."""
        rng = np.random.default_rng(seed)
        return cls(rng.standard_normal(dim), Z_SPACE, seed)

    @property
    def dim(self):
        return self.values.size

    def replace(self, values):
        return LatentCode(values, self.space, self.seed)


@dataclass(frozen=True)
class ProceduralParams:
    r_pupil: float
    r_iris: float
    aperture: float
    blur_mix: float
    cx: float
    cy: float
    contrast: float
    brightness: float
    texture_amplitudes: np.ndarray = field(repr=False)


def _squash(v, lo, hi):
    return lo + (hi - lo) * ad.sigmoid(v)


def _gaussian_1d(sigma):
    radius = max(1, int(np.ceil(2.5 * sigma)))
    t = np.arange(-radius, radius + 1, dtype=np.float64)
    g = np.exp(-0.5 * (t / sigma) ** 2)
    return g / g.sum()


def harmonic_texture(theta, rho, u, v, angular, radial, phase):
    """``sum_k u_k cos(a_k) + v_k sin(a_k)`` over ``sqrt(K)``, ``a_k = angular_k theta + radial_k rho + phase_k``.

    One fused node: the K x N sine and cosine tables are computed once and
    reused by the backward rule.
    """
    scale = 1.0 / np.sqrt(len(angular))
    out, c, s = _kernels.harmonic_forward(theta.data, rho.data, u.data, v.data, angular, radial, phase)

    def _back(g):
        g_theta, g_rho, g_u, g_v = _kernels.harmonic_backward(c, s, u.data, v.data, angular, radial,
                                                              np.ascontiguousarray(scale * g))
        return g_theta, g_rho, g_u, g_v

    out *= scale
    return ad.Tensor._node(out, (theta, rho, u, v), _back, "harmonic_texture")


class MappingNetwork:
    """Two dense layers with tanh between them; fixed random weights."""

    def __init__(self, dim, seed=0, hidden=None):
        self.dim = dim
        hidden = hidden or dim
        rng = np.random.default_rng([seed, 0x3A9])
        self.w1 = rng.standard_normal((hidden, dim)) / np.sqrt(dim)
        self.b1 = 0.1 * rng.standard_normal((hidden, 1))
        self.w2 = 1.6 * rng.standard_normal((dim, hidden)) / np.sqrt(hidden)
        self.b2 = 0.3 * rng.standard_normal((dim, 1))
        for a in self.arrays():
            a.setflags(write=False)

    def arrays(self):
        return [self.w1, self.b1, self.w2, self.b2]

    def __call__(self, z):
        if isinstance(z, LatentCode):
            if z.space != Z_SPACE:
                raise ValueError("mapping expects a Z-space code")
            w = self.forward(ad.Tensor(z.values)).data
            return LatentCode(w, W_SPACE, z.seed)
        return self.forward(z)

    def forward(self, z):
        if z.size != self.dim:
            raise ad.ShapeError(f"mapping expects {self.dim} values, got {z.size}")
        h = ad.tanh(ad.matmul(self.w1, z.reshape(self.dim, 1)) + self.b1)
        return (ad.matmul(self.w2, h) + self.b2).reshape(self.dim)


class Decoder:
    """Shared entry points; subclasses implement :meth:`synthesize`."""

    kind = "base"

    def __init__(self, height, width, dim, seed, mapping=False):
        self.height = int(height)
        self.width = int(width)
        self.dim = int(dim)
        self.seed = int(seed)
        self.mapping = MappingNetwork(dim, seed) if mapping else None

    def synthesize(self, w):
        raise NotImplementedError

    def _as_tensor(self, code):
        t = ad.Tensor(code.values) if isinstance(code, LatentCode) else ad.as_tensor(code)
        if t.size != self.dim:
            raise ad.ShapeError(f"{self.kind} decoder expects a latent of length {self.dim}, got {t.size}")
        return t.reshape(self.dim)

    def generate(self, z):
        """Image from a Z-space code (through the mapping network when present)."""
        if isinstance(z, LatentCode) and z.space != Z_SPACE:
            raise ValueError("generate() takes a Z-space code; use generate_from_w for W")
        t = self._as_tensor(z)
        if self.mapping is not None:
            t = self.mapping.forward(t)
        return self.synthesize(t)

    def generate_from_w(self, w):
        if isinstance(w, LatentCode) and w.space != W_SPACE and self.mapping is not None:
            raise ValueError("generate_from_w() takes a W-space code")
        return self.synthesize(self._as_tensor(w))

    def to_w(self, z):
        """W-space code for a Z-space code (identity without a mapping network)."""
        if self.mapping is None:
            return LatentCode(z.values, W_SPACE, z.seed)
        return self.mapping(z)

    def render(self, code):
        """Numpy image for a Z- or W-space code."""
        if code.space == W_SPACE:
            return self.generate_from_w(code).data
        return self.generate(code).data


class ProceduralDecoder(Decoder):
    kind = "procedural"

    def __init__(self, height=480, width=640, dim=32, seed=0, tau=2.0, mapping=False):
        if dim < NAMED_DIMS:
            raise ValueError(f"procedural decoder needs dim >= {NAMED_DIMS}, got {dim}")
        super().__init__(height, width, dim, seed, mapping)
        self.tau = float(tau)
        self.n_components = (dim - NAMED_DIMS) // 2
        rng = np.random.default_rng([seed, 0x1715])
        K = self.n_components
        self.angular_freq = rng.integers(4, 25, size=K).astype(np.float64)
        self.radial_freq = rng.uniform(0.5, 3.0, size=K)
        self.phase = rng.uniform(0.0, 2 * np.pi, size=K)
        self.half_size = min(self.height, self.width) / 2.0
        self.blur_sigma = 1.5 * self.half_size / 60.0

    @cached_property
    def _grid(self):
        rows, cols = np.mgrid[0:self.height, 0:self.width].astype(np.float64)
        return rows, cols

    @cached_property
    def _blur_kernels(self):
        g = _gaussian_1d(self.blur_sigma)
        return g.reshape(1, 1, -1, 1), g.reshape(1, 1, 1, -1)

    def _params(self, w):
        R = self.half_size
        r_pupil = R * _squash(w[PUPIL], *PUPIL_RANGE)
        r_iris = r_pupil + R * _squash(w[IRIS], IRIS_MARGIN, IRIS_MARGIN + IRIS_SPAN)
        aperture = r_pupil + (r_iris - r_pupil) * _squash(w[APERTURE], *APERTURE_RANGE)
        cx = (self.width - 1) / 2.0 + OFFSET_RANGE * R * ad.tanh(w[OFFSET_X])
        cy = (self.height - 1) / 2.0 + OFFSET_RANGE * R * ad.tanh(w[OFFSET_Y])
        return {
            "r_pupil": r_pupil,
            "r_iris": r_iris,
            "aperture": aperture,
            "blur_mix": ad.sigmoid(w[BLUR]),
            "cx": cx,
            "cy": cy,
            "contrast": _squash(w[CONTRAST], *CONTRAST_RANGE),
            "brightness": IRIS_LEVEL + BRIGHTNESS_RANGE * ad.tanh(w[BRIGHTNESS]),
        }

    def _regions(self, p):
        rows, cols = self._grid
        tau = self.tau
        dx = cols - p["cx"]
        dy = rows - p["cy"]
        radius = ad.sqrt(ad.square(dx) + ad.square(dy) + 1e-6)
        pupil = ad.sigmoid((p["r_pupil"] - radius) / tau)
        disk = ad.sigmoid((p["r_iris"] - radius) / tau)
        opening = ad.sigmoid((p["aperture"] - dy) / tau) * ad.sigmoid((p["aperture"] + dy) / tau)
        return dx, dy, radius, pupil, disk, opening

    def _texture(self, w, p, dx, dy, radius):
        K = self.n_components
        if K == 0:
            return None
        n = self.height * self.width
        theta = ad.atan2(dy, dx).reshape(n)
        rho = ((radius - p["r_pupil"]) / (p["r_iris"] - p["r_pupil"])).reshape(n)
        u = ad.tanh(w[NAMED_DIMS:NAMED_DIMS + 2 * K:2])
        v = ad.tanh(w[NAMED_DIMS + 1:NAMED_DIMS + 2 * K:2])
        tex = harmonic_texture(theta, rho, u, v, self.angular_freq, 2 * np.pi * self.radial_freq, self.phase)
        tex = tex.reshape(1, self.height, self.width)
        kv, kh = self._blur_kernels
        blurred = ad.conv2d(ad.conv2d(tex, kv, padding="reflect"), kh, padding="reflect")
        mixed = tex + p["blur_mix"] * (blurred - tex)
        return mixed.reshape(self.height, self.width)

    def synthesize(self, w):
        w = self._as_tensor(w)
        p = self._params(w)
        dx, dy, radius, pupil, disk, opening = self._regions(p)
        iris = p["brightness"]
        tex = self._texture(w, p, dx, dy, radius)
        if tex is not None:
            iris = iris + p["contrast"] * tex
        eye = pupil * PUPIL_LEVEL + (1.0 - pupil) * (disk * iris + (1.0 - disk) * SCLERA_LEVEL)
        return opening * eye + (1.0 - opening) * LID_LEVEL

    def params(self, code):
        """Analytic :class:`ProceduralParams` for a code in its own space."""
        w = self._synthesis_input(code)
        p = self._params(w)
        K = self.n_components
        amps = np.tanh(w.data[NAMED_DIMS:NAMED_DIMS + 2 * K])
        return ProceduralParams(texture_amplitudes=amps, **{k: v.item() for k, v in p.items()})

    def oracle_mask(self, code):
        """The renderer's own iris-texture probability map."""
        p = self._params(self._synthesis_input(code))
        _, _, _, pupil, disk, opening = self._regions(p)
        return ((1.0 - pupil) * disk * opening).data

    def oracle(self, code):
        return self.params(code), self.oracle_mask(code)

    def _synthesis_input(self, code):
        if isinstance(code, LatentCode) and code.space == Z_SPACE and self.mapping is not None:
            return self.mapping.forward(ad.Tensor(code.values))
        return self._as_tensor(code)

    def latent_for(self, *, r_pupil=None, r_iris=None, aperture_fraction=None, base=None):
        """Z-space code (no mapping) whose analytic radii equal the requested values."""
        values = np.zeros(self.dim) if base is None else np.array(base.values, dtype=np.float64)
        R = self.half_size

        def logit(frac):
            if not 0.0 < frac < 1.0:
                raise ValueError("requested geometry is outside the renderer's range")
            return np.log(frac / (1.0 - frac))

        if r_pupil is not None:
            lo, hi = PUPIL_RANGE
            values[PUPIL] = logit((r_pupil / R - lo) / (hi - lo))
        rp = R * (PUPIL_RANGE[0] + (PUPIL_RANGE[1] - PUPIL_RANGE[0]) / (1.0 + np.exp(-values[PUPIL])))
        if r_iris is not None:
            values[IRIS] = logit(((r_iris - rp) / R - IRIS_MARGIN) / IRIS_SPAN)
        if aperture_fraction is not None:
            lo, hi = APERTURE_RANGE
            values[APERTURE] = logit((aperture_fraction - lo) / (hi - lo))
        seed = None if base is None else base.seed
        return LatentCode(values, Z_SPACE, seed)


class ConvDecoder(Decoder):
    """Dense layer to a coarse grid, three upsample+conv+tanh stages, sigmoid output."""

    kind = "conv"

    def __init__(self, height=480, width=640, dim=32, seed=0, channels=8, mapping=False):
        if height % 8 or width % 8:
            raise ValueError(f"conv decoder needs sides divisible by 8, got {width}x{height}")
        super().__init__(height, width, dim, seed, mapping)
        self.channels = channels
        self.h0, self.w0 = height // 8, width // 8
        rng = np.random.default_rng([seed, 0xC0DE])
        C = channels
        n0 = C * self.h0 * self.w0
        self.dense_w = rng.standard_normal((n0, dim)) / np.sqrt(dim)
        self.dense_b = 0.1 * rng.standard_normal((n0, 1))
        self.conv_w = [1.5 * rng.standard_normal((C, C, 3, 3)) / np.sqrt(9 * C) for _ in range(3)]
        self.conv_b = [0.05 * rng.standard_normal(C) for _ in range(3)]
        self.out_w = 2.0 * rng.standard_normal((1, C, 3, 3)) / np.sqrt(9 * C)
        self.out_b = np.zeros(1)
        self._freeze()

    def _freeze(self):
        for a in self.arrays():
            a.setflags(write=False)

    def arrays(self):
        return [self.dense_w, self.dense_b, *self.conv_w, *self.conv_b, self.out_w, self.out_b]

    def load_arrays(self, arrays):
        current = self.arrays()
        if len(arrays) != len(current) or any(a.shape != b.shape for a, b in zip(arrays, current)):
            raise ValueError("weight file does not match this conv decoder's architecture")
        copies = [np.array(a, dtype=np.float64) for a in arrays]
        self.dense_w, self.dense_b = copies[0], copies[1]
        self.conv_w = copies[2:5]
        self.conv_b = copies[5:8]
        self.out_w, self.out_b = copies[8], copies[9]
        self._freeze()

    def synthesize(self, w):
        w = self._as_tensor(w)
        h = ad.matmul(self.dense_w, w.reshape(self.dim, 1)) + self.dense_b
        h = h.reshape(self.channels, self.h0, self.w0)
        for kernel, bias in zip(self.conv_w, self.conv_b):
            h = ad.upsample2x(h)
            h = ad.conv2d(h, kernel, padding="reflect")
            h = ad.tanh(h + np.broadcast_to(bias[:, None, None], h.shape))
        h = ad.conv2d(h, self.out_w, padding="reflect") + self.out_b[0]
        return ad.sigmoid(h).reshape(self.height, self.width)


def build_decoder(kind="procedural", height=480, width=640, dim=32, seed=0, tau=2.0, mapping=False, channels=8):
    if kind == "procedural":
        return ProceduralDecoder(height, width, dim, seed, tau=tau, mapping=mapping)
    if kind == "conv":
        return ConvDecoder(height, width, dim, seed, channels=channels, mapping=mapping)
    raise ValueError(f"unknown decoder kind {kind!r}")


# ---------------------------------------------------------------------------
# weight files: 16-byte header (magic, version, tensor count, reserved) then,
# per tensor, ndim and dims as little-endian uint32 followed by float64 data.

WEIGHTS_MAGIC = b"ITRW"
WEIGHTS_VERSION = 1


def save_weights(path, arrays):
    with open(path, "wb") as fh:
        fh.write(struct.pack("<4sIII", WEIGHTS_MAGIC, WEIGHTS_VERSION, len(arrays), 0))
        for a in arrays:
            a = np.asarray(a, dtype="<f8")
            fh.write(struct.pack(f"<I{a.ndim}I", a.ndim, *a.shape))
            fh.write(np.ascontiguousarray(a).tobytes())


def load_weights(path):
    with open(path, "rb") as fh:
        blob = fh.read()
    if len(blob) < 16:
        raise ValueError(f"{path}: truncated weight file")
    magic, version, count, _ = struct.unpack_from("<4sIII", blob, 0)
    if magic != WEIGHTS_MAGIC:
        raise ValueError(f"{path}: not a weight file (magic {magic!r})")
    if version != WEIGHTS_VERSION:
        raise ValueError(f"{path}: unsupported weight file version {version}")
    offset = 16
    arrays = []
    for _ in range(count):
        (ndim,) = struct.unpack_from("<I", blob, offset)
        offset += 4
        shape = struct.unpack_from(f"<{ndim}I", blob, offset)
        offset += 4 * ndim
        n = int(np.prod(shape)) if ndim else 1
        data = np.frombuffer(blob, dtype="<f8", count=n, offset=offset)
        offset += 8 * n
        arrays.append(data.reshape(shape).astype(np.float64))
    if offset != len(blob):
        raise ValueError(f"{path}: trailing bytes after {count} tensors")
    return arrays
