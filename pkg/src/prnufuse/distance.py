"""Pseudo-distances between a test image and reference patterns."""

from dataclasses import dataclass

import numpy as np

from .errors import DegenerateInputError, DimensionError
from .io import ImageMeta, ImagePlane
from .noiseprint import (ExtractorConfig, ExtractorType, fold_residual,
                         load_external_noiseprint)
from .residual import DenoiserConfig, residual_array

MIN_CROP = 8


@dataclass(frozen=True)
class DistancePair:
    d_prnu: float
    d_np: float
    test_meta: ImageMeta = ImageMeta()
    ref_meta: ImageMeta = ImageMeta()

    def __post_init__(self):
        if not (np.isfinite(self.d_prnu) and np.isfinite(self.d_np)):
            raise DegenerateInputError("distance pair has non-finite entries")

    @property
    def x(self):
        return np.array([self.d_prnu, self.d_np])


def _data(x):
    return x.data if hasattr(x, "data") and not isinstance(x, np.ndarray) else np.asarray(x, dtype=np.float64)


def crop_offsets(shape, d):
    h, w = shape
    if d < MIN_CROP:
        raise DimensionError(f"crop size must be >= {MIN_CROP}, got {d}")
    if d > min(h, w):
        raise DimensionError(f"crop size {d} exceeds raster {h}x{w}")
    return (h - d) // 2, (w - d) // 2


def crop_center(plane, d):
    """Centred d x d block; the same rule is used for references and tests."""
    data = _data(plane)
    top, left = crop_offsets(data.shape, d)
    return data[top:top + d, left:left + d]


def ncc(a, b):
    a = np.asarray(_data(a), dtype=np.float64).ravel()
    b = np.asarray(_data(b), dtype=np.float64).ravel()
    if a.shape != b.shape:
        raise DimensionError(f"ncc operands differ in size: {a.size} vs {b.size}")
    na = np.linalg.norm(a)
    nb = np.linalg.norm(b)
    if na == 0 or nb == 0:
        raise DegenerateInputError("ncc of an all-zero raster")
    return float(np.dot(a, b) / (na * nb))


def d_prnu(test_residual, ref, d):
    return 1.0 - ncc(crop_center(test_residual, d), crop_center(ref, d))


def d_np(test_fingerprint, ref, d):
    a = crop_center(test_fingerprint, d)
    b = crop_center(ref, d)
    if a.shape != b.shape:
        raise DimensionError(f"d_np operands differ: {a.shape} vs {b.shape}")
    return float(np.mean((b - a) ** 2))


def test_features(image, d, denoiser=DenoiserConfig(), extractor=ExtractorConfig()):
    """Residual and model fingerprint of the centre d x d crop of a test image.

    Only the crop is processed, as in the small-crop test scenario.
    """
    crop = crop_center(image, d)
    if not np.any(crop):
        raise DegenerateInputError("test crop is all zero")
    residual = residual_array(crop, denoiser)
    if extractor.kind is ExtractorType.External:
        full = load_external_noiseprint(image.meta.source_path, extractor, image.shape)
        fp = crop_center(full, d)
    else:
        fp_res = residual if extractor.denoiser == denoiser else \
            residual_array(crop, extractor.denoiser)
        fp = fold_residual(fp_res, extractor.period)
    return residual, fp


def distance_pair(test_image, device_ref, model_ref, d, denoiser=DenoiserConfig(),
                  extractor=ExtractorConfig()):
    residual, fp = test_features(test_image, d, denoiser, extractor)
    ref_meta = ImageMeta(device_ref.model_id, device_ref.device_id, "")
    meta = test_image.meta if isinstance(test_image, ImagePlane) else ImageMeta()
    return DistancePair(1.0 - ncc(residual, crop_center(device_ref, d)),
                        d_np(fp, crop_center(model_ref, d), d), meta, ref_meta)
