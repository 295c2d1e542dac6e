"""Differentiable iris geometry: soft segmentation, circle radii, eyelid
opening and rubber-sheet polar normalisation.

All estimators are built from autodiff operations, so every quantity here
carries gradients back to the image pixels (and from there to the latent
code).
"""
from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from . import autodiff as ad
from .imageio import write_pgm

MASK_BAND = (0.25, 0.75)
MASK_TEMPERATURE = 0.01
DARK_THRESHOLD = 0.28
DARK_TEMPERATURE = 0.02
EYELID_BETA = 0.1
MIN_OCCUPANCY = 10.0
POLAR_ROWS = 64
POLAR_COLS = 512


class DegenerateSegmentation(ValueError):
    pass


def soft_mask(x, band=MASK_BAND, temperature=MASK_TEMPERATURE):
    """Probability that each pixel is iris texture: a soft intensity band."""
    lo, hi = band
    return ad.sigmoid((x - lo) / temperature) * ad.sigmoid((hi - x) / temperature)


def dark_occupancy(x, threshold=DARK_THRESHOLD, temperature=DARK_TEMPERATURE):
    return ad.sigmoid((threshold - x) / temperature)


@dataclass
class CircleParams:
    """Concentric pupil and iris circles; fields are scalar tensors (pixels)."""

    cx: ad.Tensor
    cy: ad.Tensor
    r_pupil: ad.Tensor
    r_iris: ad.Tensor

    @classmethod
    def from_values(cls, cx, cy, r_pupil, r_iris):
        return cls(*(ad.Tensor(float(v)) for v in (cx, cy, r_pupil, r_iris)))

    def values(self):
        return {k: getattr(self, k).item() for k in ("cx", "cy", "r_pupil", "r_iris")}

    def detach(self):
        return CircleParams(self.cx.detach(), self.cy.detach(), self.r_pupil.detach(), self.r_iris.detach())

    def is_valid(self, height, width):
        v = self.values()
        return 0 < v["r_pupil"] < v["r_iris"] < min(height, width) / 2


def band_half_rows(height):
    """Half-height of the horizontal scan band: 10 rows at 480, scaled, at least 2."""
    return max(2, int(round(10 * height / 480)))


def _band_radius(occupied, rows, cy):
    """Radius of a centred disk whose band occupancy matches ``occupied``.

    A disk of radius r has mean half-chord ``r - <dy^2> / (2 r)`` over band
    rows at offsets dy; solving for r removes the chord-curvature bias.
    """
    half_chord = occupied / (2.0 * len(rows))
    offsets = ad.Tensor(rows.astype(np.float64)) - cy
    spread = ad.reduce_mean(ad.square(offsets))
    return 0.5 * (half_chord + ad.sqrt(ad.square(half_chord) + 2.0 * spread))


def estimate_circles(x, m):
    """Pupil/iris circles from an image and its soft mask.

    The centre is the (1 - x)-weighted centroid of the dark region. Radii come
    from occupancy in a horizontal band through the centre: dark pixels for
    the pupil, dark-or-iris pixels for the iris. The band avoids the eyelids.
    """
    x = ad.as_tensor(x)
    m = ad.as_tensor(m)
    H, W = x.shape
    if not (np.all(np.isfinite(x.data)) and np.all(np.isfinite(m.data))):
        raise DegenerateSegmentation("degenerate segmentation: image or mask has non-finite values")
    if m.data.sum() <= MIN_OCCUPANCY:
        raise DegenerateSegmentation("degenerate segmentation: iris mask is (nearly) empty")
    dark = dark_occupancy(x)
    weight = (1.0 - x) * dark
    total = ad.reduce_sum(weight)
    if total.item() <= 1.0:
        raise DegenerateSegmentation("degenerate segmentation: no dark pupil region found")
    rows_grid, cols_grid = np.mgrid[0:H, 0:W].astype(np.float64)
    cx = ad.reduce_sum(weight * cols_grid) / total
    cy = ad.reduce_sum(weight * rows_grid) / total

    b = band_half_rows(H)
    centre_row = int(np.clip(round(cy.item()), b, H - 1 - b))
    rows = np.arange(centre_row - b, centre_row + b + 1)
    band = slice(rows[0], rows[-1] + 1)
    dark_band = dark[band, :]
    union = 1.0 - (1.0 - dark_band) * (1.0 - m[band, :])
    r_pupil = _band_radius(ad.reduce_sum(dark_band), rows, cy)
    r_iris = _band_radius(ad.reduce_sum(union), rows, cy)
    return CircleParams(cx, cy, r_pupil, r_iris)


def eyelid_opening(m, beta=EYELID_BETA):
    """Soft count of mask rows with iris pixels: sum_r tanh(beta * sum_c m[r, c]).

    Equals the hard extent max(r) - min(r) + 1 for a contiguous block of
    well-filled rows; for masks with gaps it counts only occupied rows.
    """
    m = ad.as_tensor(m)
    if m.data.sum() <= 0.0:
        raise DegenerateSegmentation("degenerate segmentation: eyelid opening of an empty mask")
    return ad.reduce_sum(ad.tanh(beta * ad.reduce_sum(m, axis=1)))


def hard_opening(mask, threshold=0.5):
    """Row-scan extent max(r) - min(r) + 1 of rows holding a pixel above ``threshold``."""
    rows = np.flatnonzero((np.asarray(mask) > threshold).any(axis=1))
    return 0 if rows.size == 0 else int(rows[-1] - rows[0] + 1)


@dataclass
class PolarIris:
    pixels: ad.Tensor  # POLAR_ROWS x POLAR_COLS
    clamped_fraction: float


@dataclass(frozen=True)
class _PolarGrid:
    rho: np.ndarray
    cos: np.ndarray
    sin: np.ndarray


def _polar_grid(rows=POLAR_ROWS, cols=POLAR_COLS):
    rho = (np.arange(rows) + 0.5) / rows
    theta = 2 * np.pi * np.arange(cols) / cols
    rho_grid = np.repeat(rho[:, None], cols, axis=1)
    return _PolarGrid(rho_grid, np.broadcast_to(np.cos(theta), (rows, cols)).copy(),
                      np.broadcast_to(np.sin(theta), (rows, cols)).copy())


_GRID = _polar_grid()


def normalize(x, c):
    """Rubber-sheet unwrap of the iris annulus to a 64 x 512 polar image.

    Row i samples radius r_pupil + (i + 0.5) / 64 * (r_iris - r_pupil); column j
    samples angle 2 pi j / 512 (from +x towards +y, i.e. downwards in the
    image). Samples outside the image are clamped to the border.
    """
    x = ad.as_tensor(x)
    if c.r_pupil.item() <= 0 or c.r_iris.item() <= c.r_pupil.item():
        raise ValueError(f"invalid circles for normalisation: {c.values()}")
    g = _GRID
    radius = c.r_pupil * (1.0 - g.rho) + c.r_iris * g.rho
    px = c.cx + radius * g.cos
    py = c.cy + radius * g.sin
    coords = ad.stack([px, py], axis=-1)
    H, W = x.shape
    outside = (px.data < 0) | (px.data > W - 1) | (py.data < 0) | (py.data > H - 1)
    return PolarIris(ad.grid_sample(x, coords), float(outside.mean()))


def save_mask_pgm(m, path, threshold=0.5):
    """Binary 0/255 PGM of a mask for visual inspection."""
    data = m.data if isinstance(m, ad.Tensor) else np.asarray(m)
    write_pgm(np.where(data >= threshold, 255, 0).astype(np.uint8), path)
