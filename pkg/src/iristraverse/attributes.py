"""Attribute measurements, their losses, and the weighted composite loss.

Targeted kinds pull a measured attribute toward a numeric target; hold kinds
pin a property of the starting image ``x0``. Every term is built from
autodiff ops, so ``CompositeLoss`` returns a scalar tensor ready for
``backward``.
"""
from __future__ import annotations

from dataclasses import dataclass, field
from functools import cached_property

import numpy as np

from . import autodiff as ad
from . import geometry as geo
from .identity import LOSS_BANK, identity_distance, phi_id

TARGETED_KINDS = ("sharpness", "pupil_radius", "iris_radius", "pupil_iris_ratio")
HOLD_KINDS = ("eyelid_hold", "mask_hold", "identity_hold")
KINDS = TARGETED_KINDS + HOLD_KINDS

BCE_EPS = 1e-7
PIR_EPS = 1e-6


class SpecError(ValueError):
    pass


@dataclass(frozen=True)
class AttributeSpec:
    kind: str
    target: float | None = None
    weight: float = 1.0

    def __post_init__(self):
        if self.kind not in KINDS:
            raise SpecError(f"unknown attribute kind {self.kind!r}; expected one of {', '.join(KINDS)}")
        if not np.isfinite(self.weight) or self.weight < 0:
            raise SpecError(f"{self.kind}: weight must be finite and >= 0, got {self.weight}")
        if self.is_hold:
            if self.target is not None:
                raise SpecError(f"{self.kind} is a hold term and takes no target")
        else:
            if self.target is None or not np.isfinite(self.target):
                raise SpecError(f"{self.kind} needs a finite numeric target")
            object.__setattr__(self, "target", float(self.target))
        object.__setattr__(self, "weight", float(self.weight))

    @property
    def is_hold(self):
        return self.kind in HOLD_KINDS


def dog_kernel(size=9, sigma1=1.0, sigma2=2.0):
    """Symmetric zero-sum difference of two normalised Gaussians."""
    r = np.arange(size) - size // 2
    d2 = r[:, None] ** 2 + r[None, :] ** 2
    g1 = np.exp(-d2 / (2 * sigma1 ** 2))
    g2 = np.exp(-d2 / (2 * sigma2 ** 2))
    k = g1 / g1.sum() - g2 / g2.sum()
    return k - k.mean()


@dataclass(frozen=True)
class SharpnessConstants:
    """Power normaliser ``C`` and the band-pass filter.

    Images enter on a 0-255 scale. ``gain`` multiplies the unit-Gaussian DoG so
    that band-pass power of typical 160 x 120 renders lands near ``C``.
    """

    C: float = 1.8e6
    gain: float = 350.0
    size: int = 9
    sigma1: float = 1.0
    sigma2: float = 2.0

    @cached_property
    def kernel(self):
        k = self.gain * dog_kernel(self.size, self.sigma1, self.sigma2)
        return k.reshape(1, 1, self.size, self.size)


DEFAULT_SHARPNESS = SharpnessConstants()


def _check_mask(m):
    if m.data.sum() <= geo.MIN_OCCUPANCY:
        raise geo.DegenerateSegmentation("degenerate segmentation: mask area too small for sharpness")


def sharpness_power(x, m, const=DEFAULT_SHARPNESS, area=None):
    """Mask-weighted mean band-pass power P = sum(f^2 m) / sum(m).

    The normaliser sum(m) carries no gradient, so the optimiser gains nothing
    by shrinking the mask. ``area`` fixes the normaliser to a given value
    (gradient checks use it to build the matching finite-difference oracle).
    """
    x = ad.as_tensor(x)
    m = ad.as_tensor(m)
    _check_mask(m)
    H, W = x.shape
    # the kernel is zero-sum, so removing a constant level changes nothing except
    # that a flat image now filters to exact zeros instead of rounding noise
    level = float(x.data.flat[0])
    f = ad.conv2d((255.0 * (x - level)).reshape(1, H, W), const.kernel, padding="reflect").reshape(H, W)
    norm = float(m.data.sum()) if area is None else float(area)
    return ad.reduce_sum(ad.square(f) * m) / norm


def sharpness_score(x, m, const=DEFAULT_SHARPNESS, area=None):
    """100 P^2 / (P^2 + C^2), in [0, 100)."""
    p2 = ad.square(sharpness_power(x, m, const, area))
    return 100.0 * p2 / (p2 + const.C ** 2)


def loss_sharpness(x, m, t, const=DEFAULT_SHARPNESS, area=None):
    return ad.absolute(sharpness_score(x, m, const, area) - t)


def binary_mask(m, threshold=0.5):
    data = m.data if isinstance(m, ad.Tensor) else np.asarray(m)
    return (data >= threshold).astype(np.float64)


def loss_mask(m, m0):
    """Mean per-pixel binary cross-entropy of ``m`` against the reference ``m0``."""
    m = ad.as_tensor(m)
    m0 = m0.data if isinstance(m0, ad.Tensor) else np.asarray(m0, dtype=np.float64)
    if m.shape != m0.shape:
        raise ad.ShapeError(f"mask shapes differ: {m.shape} vs {m0.shape}")
    mc = ad.clip(m, BCE_EPS, 1.0 - BCE_EPS)
    bce = -(m0 * ad.log(mc) + (1.0 - m0) * ad.log(1.0 - mc))
    return ad.reduce_mean(bce)


def loss_eyelid(x, x0):
    lam0 = geo.eyelid_opening(geo.soft_mask(ad.as_tensor(x0).detach())).item()
    return ad.absolute(geo.eyelid_opening(geo.soft_mask(x)) - lam0)


def circles_of(x):
    return geo.estimate_circles(x, geo.soft_mask(x))


def pupil_iris_ratio(c):
    return 100.0 * c.r_pupil / (c.r_iris + PIR_EPS)


def loss_pupil(x, t):
    return ad.absolute(circles_of(x).r_pupil - t)


def loss_iris(x, t):
    return ad.absolute(circles_of(x).r_iris - t)


def loss_pir(x, t):
    return ad.absolute(pupil_iris_ratio(circles_of(x)) - t)


@dataclass
class Evaluation:
    total: ad.Tensor
    terms: dict  # kind -> unweighted loss tensor
    measured: dict  # kind -> float attribute value
    extras: dict = field(default_factory=dict)


class Reference:
    """Quantities of the starting image that hold terms compare against."""

    def __init__(self, x0, bank=LOSS_BANK):
        self.image = ad.as_tensor(x0).detach()
        self.bank = bank

    @cached_property
    def mask(self):
        return geo.soft_mask(self.image)

    @cached_property
    def binary_mask(self):
        return binary_mask(self.mask)

    @cached_property
    def opening(self):
        return geo.eyelid_opening(self.mask).item()

    @cached_property
    def circles(self):
        return geo.estimate_circles(self.image, self.mask).detach()

    @cached_property
    def features(self):
        return phi_id(self.image, self.circles, self.bank)


class CompositeLoss:
    """sum_k weight_k * L_k(x) (+ optional 0.5 * latent_weight * |z - z0|^2).

    One image evaluation is shared by every term; the soft mask and circles
    are computed once per call.
    """

    def __init__(self, specs, x0=None, *, sharpness=DEFAULT_SHARPNESS, bank=LOSS_BANK,
                 latent_weight=0.0, z0=None, sharpness_area=None):
        specs = list(specs)
        if not specs:
            raise SpecError("composite loss needs at least one attribute spec")
        kinds = [s.kind for s in specs]
        dup = sorted({k for k in kinds if kinds.count(k) > 1})
        if dup:
            raise SpecError(f"duplicate attribute kinds: {', '.join(dup)}")
        if any(s.is_hold for s in specs) and x0 is None:
            raise SpecError("hold terms need the starting image x0")
        if latent_weight < 0:
            raise SpecError("latent regulariser weight must be >= 0")
        if latent_weight > 0 and z0 is None:
            raise SpecError("latent regulariser needs the starting code z0")
        self.specs = specs
        self.sharpness = sharpness
        self.sharpness_area = sharpness_area  # None: sum of the current soft mask
        self.reference = Reference(x0, bank) if x0 is not None else None
        self.latent_weight = float(latent_weight)
        self.z0 = None if z0 is None else np.asarray(getattr(z0, "values", z0), dtype=np.float64)

    def evaluate(self, x, z=None):
        x = ad.as_tensor(x)
        kinds = {s.kind for s in self.specs}
        m = geo.soft_mask(x)
        need_circles = kinds & {"pupil_radius", "iris_radius", "pupil_iris_ratio", "identity_hold"}
        c = geo.estimate_circles(x, m) if need_circles else None
        terms, measured = {}, {}
        ref = self.reference
        for spec in self.specs:
            k = spec.kind
            if k == "sharpness":
                value = sharpness_score(x, m, self.sharpness, self.sharpness_area)
                loss = ad.absolute(value - spec.target)
            elif k == "pupil_radius":
                value = c.r_pupil
                loss = ad.absolute(value - spec.target)
            elif k == "iris_radius":
                value = c.r_iris
                loss = ad.absolute(value - spec.target)
            elif k == "pupil_iris_ratio":
                value = pupil_iris_ratio(c)
                loss = ad.absolute(value - spec.target)
            elif k == "eyelid_hold":
                value = geo.eyelid_opening(m)
                loss = ad.absolute(value - ref.opening)
            elif k == "mask_hold":
                loss = value = loss_mask(m, ref.binary_mask)
            else:  # identity_hold
                loss = value = identity_distance(phi_id(x, c, ref.bank), ref.features)
            terms[k] = loss
            measured[k] = value.item()
        total = ad.Tensor(0.0)
        for spec in self.specs:
            if spec.weight != 0.0:
                total = total + spec.weight * terms[spec.kind]
        if self.latent_weight > 0 and z is not None:
            diff = ad.as_tensor(z) - self.z0
            total = total + 0.5 * self.latent_weight * ad.reduce_sum(ad.square(diff))
        extras = {"circles": c.values() if c is not None else None}
        return Evaluation(total, terms, measured, extras)

    def __call__(self, x, z=None):
        return self.evaluate(x, z).total


def composite_loss(z, specs, x0, G, **kwargs):
    """Composite loss of the image ``G(z)`` (``G`` is a decoder entry point)."""
    z = ad.as_tensor(z)
    return CompositeLoss(specs, x0, z0=kwargs.pop("z0", None), **kwargs)(G(z), z)


def measure(x, kind, x0=None, sharpness=DEFAULT_SHARPNESS):
    """Value of one attribute on an image (hold kinds measure against x0)."""
    x = ad.as_tensor(x).detach()
    m = geo.soft_mask(x)
    if kind == "sharpness":
        return sharpness_score(x, m, sharpness).item()
    if kind in ("pupil_radius", "iris_radius", "pupil_iris_ratio"):
        c = geo.estimate_circles(x, m)
        return {"pupil_radius": c.r_pupil, "iris_radius": c.r_iris,
                "pupil_iris_ratio": pupil_iris_ratio(c)}[kind].item()
    if kind == "eyelid_hold":
        return geo.eyelid_opening(m).item()
    if x0 is None:
        raise SpecError(f"{kind} needs a reference image")
    spec = AttributeSpec(kind)
    return CompositeLoss([spec], x0).evaluate(x).measured[kind]
