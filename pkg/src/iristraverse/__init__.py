"""Gradient-guided latent traversal for controlled edits of synthetic iris images.

A differentiable decoder maps a latent code to a grayscale iris image.
Differentiable attribute estimators (sharpness, pupil and iris radii, their
ratio, eyelid opening, segmentation mask) and a Gabor identity feature turn a
list of attribute targets into a scalar loss, and Adam/AdamW walks the latent
code until the measured attributes reach their targets.
"""
from . import autodiff
from .attributes import AttributeSpec, CompositeLoss, measure
from .decoders import ConvDecoder, LatentCode, MappingNetwork, ProceduralDecoder, build_decoder
from .geometry import DegenerateSegmentation, estimate_circles, eyelid_opening, normalize, soft_mask
from .identity import EVAL_BANK, LOSS_BANK, hamming, iris_code
from .traversal import TraversalConfig, TrajectoryRecord, invert, traverse

__version__ = "0.1.0"

__all__ = [
    "AttributeSpec", "CompositeLoss", "ConvDecoder", "DegenerateSegmentation", "EVAL_BANK", "LOSS_BANK",
    "LatentCode", "MappingNetwork", "ProceduralDecoder", "TrajectoryRecord", "TraversalConfig", "autodiff",
    "build_decoder", "estimate_circles", "eyelid_opening", "hamming", "invert", "iris_code", "measure",
    "normalize", "soft_mask", "traverse", "__version__",
]
