"""Denoising and noise residual extraction, W = I - f(I)."""

from dataclasses import dataclass, replace

import numpy as np

from . import kernels
from .errors import ArgumentError, DimensionError
from .io import ImagePlane, NoiseResidual


@dataclass(frozen=True)
class DenoiserConfig:
    """Local adaptive Wiener filter settings.

    :param window: odd neighbourhood side, >= 3
    :param noise_variance: assumed noise power in luminance^2 units
    """

    window: int = 3
    noise_variance: float = 9.0

    def __post_init__(self):
        if self.window < 3 or self.window % 2 == 0:
            raise ArgumentError(f"denoiser window must be odd and >= 3, got {self.window}")
        if not self.noise_variance > 0:
            raise ArgumentError(f"noise variance must be > 0, got {self.noise_variance}")


def _as_array(image):
    return image.data if isinstance(image, ImagePlane) else np.asarray(image, dtype=np.float64)


def denoise_array(data, cfg=DenoiserConfig()):
    data = np.asarray(data, dtype=np.float64)
    if data.ndim != 2:
        raise DimensionError(f"expected a 2-D raster, got shape {data.shape}")
    if min(data.shape) < cfg.window:
        raise DimensionError(
            f"image {data.shape[0]}x{data.shape[1]} smaller than window {cfg.window}")
    r = cfg.window // 2
    padded = np.pad(data, r, mode="symmetric")
    return kernels.local_wiener(padded, cfg.window, cfg.noise_variance)


def denoise_local_wiener(image, cfg=DenoiserConfig()):
    """Denoised copy of ``image``.

    Each pixel is pulled towards its window mean by the factor
    ``max(0, v - noise_variance) / v`` where ``v`` is the local population
    variance; borders use symmetric mirror extension.
    """
    out = denoise_array(_as_array(image), cfg)
    if isinstance(image, ImagePlane):
        return replace(image, data=out)
    return out


def residual_array(data, cfg=DenoiserConfig()):
    data = np.asarray(data, dtype=np.float64)
    return data - denoise_array(data, cfg)


def extract_residual(image, cfg=DenoiserConfig()):
    if not isinstance(image, ImagePlane):
        return residual_array(image, cfg)
    return NoiseResidual(residual_array(image.data, cfg), image.meta)
