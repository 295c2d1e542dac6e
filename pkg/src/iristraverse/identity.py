"""Iris identity: Gabor features on the normalised iris and a binary-code matcher.

Two banks with disjoint parameters keep design and evaluation apart: the
even-symmetric ``LOSS_BANK`` drives the differentiable identity loss, and the
odd-symmetric ``EVAL_BANK`` is binarised into iris codes compared by
fractional Hamming distance.
"""
from __future__ import annotations

import struct
from dataclasses import dataclass, field

import numpy as np

from . import _kernels
from . import autodiff as ad
from .geometry import POLAR_COLS, POLAR_ROWS, normalize

KERNEL_SIZE = 15
BORDER_ROWS = KERNEL_SIZE // 2
DEFAULT_MAX_SHIFT = 16
CODE_HEADER = struct.Struct("<HHHH")  # rows, cols, filters, reserved
PADDING = ("reflect", "wrap")  # radial, angular
PIXEL_SCALE = 255.0  # features are computed on 8-bit intensity levels


class BankMismatch(ValueError):
    pass


class DisjointValidity(ValueError):
    pass


def gabor_kernel(wavelength, orientation, parity, size=KERNEL_SIZE, sigma=None):
    """Zero-mean real Gabor kernel with unit L1 norm.

    ``orientation`` 0 modulates along columns (angle in the polar image),
    pi/2 along rows (radius). ``parity`` is ``"even"`` (cosine) or ``"odd"`` (sine).
    """
    if sigma is None:
        sigma = min(0.45 * wavelength, size / 4.0)
    r = np.arange(size) - size // 2
    yy, xx = np.meshgrid(r, r, indexing="ij")
    along = xx * np.cos(orientation) + yy * np.sin(orientation)
    env = np.exp(-(xx ** 2 + yy ** 2) / (2.0 * sigma ** 2))
    phase = 2 * np.pi * along / wavelength
    if parity == "even":
        k = env * np.cos(phase)
        k -= env * (k.sum() / env.sum())
    elif parity == "odd":
        k = env * np.sin(phase)
        k -= k.mean()
    else:
        raise ValueError(f"parity must be 'even' or 'odd', got {parity!r}")
    return k / np.abs(k).sum()


@dataclass(frozen=True)
class GaborBank:
    wavelengths: tuple
    orientations: tuple = (0.0, np.pi / 2)
    parity: str = "even"
    size: int = KERNEL_SIZE
    kernels: np.ndarray = field(init=False, repr=False, compare=False)

    def __post_init__(self):
        ks = [gabor_kernel(lam, th, self.parity, self.size)
              for lam in self.wavelengths for th in self.orientations]
        arr = np.stack(ks)[:, None]
        arr.setflags(write=False)
        object.__setattr__(self, "kernels", arr)

    @property
    def n_filters(self):
        return self.kernels.shape[0]

    def apply(self, polar):
        """Filter a 64 x 512 polar image: F x 64 x 512 responses."""
        polar = ad.as_tensor(polar)
        return ad.conv2d(polar.reshape(1, *polar.shape), self.kernels, padding=PADDING)

    def validity(self, rows=POLAR_ROWS, cols=POLAR_COLS):
        b = self.size // 2
        valid = np.zeros((self.n_filters, rows, cols), dtype=np.uint8)
        valid[:, b:rows - b, :] = 1
        return valid


LOSS_BANK = GaborBank(wavelengths=(8.0, 14.0, 24.0), parity="even")
EVAL_BANK = GaborBank(wavelengths=(10.0, 18.0, 30.0), parity="odd")


@dataclass
class IdentityFeatures:
    values: ad.Tensor  # filters x 64 x 512
    bank: GaborBank

    def detach(self):
        return IdentityFeatures(self.values.detach(), self.bank)


def phi_id(x, c, bank=LOSS_BANK):
    return IdentityFeatures(bank.apply(PIXEL_SCALE * normalize(x, c).pixels), bank)


def identity_distance(f, f0):
    """Mean absolute difference of two feature stacks from the same bank."""
    if f.bank != f0.bank or f.values.shape != f0.values.shape:
        raise BankMismatch("identity features come from different Gabor banks")
    return ad.reduce_mean(ad.absolute(f.values - f0.values.detach()))


def loss_identity(x, x0, c, c0, bank=LOSS_BANK):
    """L1 identity loss; the x0 branch is detached (cache it with :func:`phi_id`)."""
    return identity_distance(phi_id(x, c, bank), phi_id(ad.as_tensor(x0).detach(), c0.detach(), bank))


@dataclass(frozen=True)
class IrisCode:
    bits: np.ndarray  # uint8 filters x rows x cols
    valid: np.ndarray

    @property
    def shape(self):
        return self.bits.shape

    def to_bytes(self):
        F, R, C = self.bits.shape
        return (CODE_HEADER.pack(R, C, F, 0)
                + np.packbits(self.bits, axis=None).tobytes()
                + np.packbits(self.valid, axis=None).tobytes())

    @classmethod
    def from_bytes(cls, data):
        R, C, F, _ = CODE_HEADER.unpack_from(data)
        n = F * R * C
        nbytes = (n + 7) // 8
        body = np.frombuffer(data, dtype=np.uint8, offset=CODE_HEADER.size)
        if body.size != 2 * nbytes:
            raise ValueError("iris code payload does not match its header")
        bits = np.unpackbits(body[:nbytes], count=n).reshape(F, R, C)
        valid = np.unpackbits(body[nbytes:], count=n).reshape(F, R, C)
        return cls(bits, valid)

    def save(self, path):
        with open(path, "wb") as fh:
            fh.write(self.to_bytes())

    @classmethod
    def load(cls, path):
        with open(path, "rb") as fh:
            return cls.from_bytes(fh.read())


def iris_code(x, c, bank=EVAL_BANK):
    x = ad.as_tensor(x).detach()
    responses = phi_id(x, c.detach(), bank).values.data
    return IrisCode((responses > 0).astype(np.uint8), bank.validity())


def hamming_shifts(a, b, max_shift=DEFAULT_MAX_SHIFT):
    """Fractional Hamming distance for each circular shift in [-max_shift, max_shift]."""
    if a.shape != b.shape:
        raise BankMismatch(f"iris codes have different shapes {a.shape} and {b.shape}")
    shifts = np.arange(-max_shift, max_shift + 1)
    diff, count = _kernels.shifted_disagreement(
        np.ascontiguousarray(a.bits), np.ascontiguousarray(b.bits),
        np.ascontiguousarray(a.valid), np.ascontiguousarray(b.valid), shifts)
    if not np.any(count):
        raise DisjointValidity("iris codes share no jointly valid bits")
    with np.errstate(invalid="ignore", divide="ignore"):
        hd = np.where(count > 0, diff / np.maximum(count, 1), np.nan)
    return shifts, hd


def hamming(a, b, max_shift=DEFAULT_MAX_SHIFT):
    """Minimum fractional Hamming distance over circular angular shifts."""
    _, hd = hamming_shifts(a, b, max_shift)
    return float(np.nanmin(hd))
