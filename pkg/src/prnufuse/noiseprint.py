"""Per-image camera-model fingerprints and their model-level average.

Two extractors are available: ingestion of externally computed maps
(one ``.plane`` per image) and a periodic phase-folding surrogate that keeps
only the P-periodic part of the noise residual.
"""

import enum
from dataclasses import dataclass, field
from pathlib import Path

import numpy as np

from . import kernels
from .errors import ArgumentError, DimensionError, LookupFailure
from .io import ImagePlane, ModelPattern, load_plane
from .residual import DenoiserConfig, residual_array


class ExtractorType(str, enum.Enum):
    External = "external"
    SurrogatePeriodic = "surrogate"


@dataclass(frozen=True)
class ExtractorConfig:
    kind: ExtractorType = ExtractorType.SurrogatePeriodic
    period: int = 8
    denoiser: DenoiserConfig = field(default_factory=DenoiserConfig)
    external_dir: str = ""

    def __post_init__(self):
        object.__setattr__(self, "kind", ExtractorType(self.kind))
        if self.period < 2:
            raise ArgumentError(f"period must be >= 2, got {self.period}")
        if self.kind is ExtractorType.External and not self.external_dir:
            raise ArgumentError("external extractor needs external_dir")

    @property
    def extractor_id(self):
        if self.kind is ExtractorType.External:
            return "external"
        return f"surrogate-p{self.period}"


def fold_tile(residual, period):
    """P x P table of phase-bin means of a residual."""
    residual = np.asarray(residual, dtype=np.float64)
    h, w = residual.shape
    if min(h, w) < 2 * period:
        raise DimensionError(f"raster {h}x{w} too small for period {period}")
    return kernels.phase_fold(residual, period)


def tile_to(tile, shape):
    p = tile.shape[0]
    reps = (-(-shape[0] // p), -(-shape[1] // p))
    return np.tile(tile, reps)[:shape[0], :shape[1]]


def fold_residual(residual, period):
    """Phase-fold a residual and tile it back to full size."""
    residual = np.asarray(residual, dtype=np.float64)
    return tile_to(fold_tile(residual, period), residual.shape)


def extract_surrogate(image, cfg=ExtractorConfig()):
    if cfg.kind is not ExtractorType.SurrogatePeriodic:
        raise ArgumentError("extract_surrogate needs a surrogate extractor config")
    data = image.data if isinstance(image, ImagePlane) else np.asarray(image, dtype=np.float64)
    if min(data.shape) < 2 * cfg.period:
        raise DimensionError(
            f"image {data.shape[0]}x{data.shape[1]} too small for period {cfg.period}")
    return fold_residual(residual_array(data, cfg.denoiser), cfg.period)


def external_path(image_path, cfg):
    stem = Path(image_path).stem
    return Path(cfg.external_dir) / f"{stem}.plane"


def load_external_noiseprint(image_path, cfg, shape=None):
    """Noiseprint map for ``image_path`` from ``cfg.external_dir``.

    ``shape`` is the image size the map must match; when omitted the image
    itself is read to find it.
    """
    path = external_path(image_path, cfg)
    if not path.exists():
        raise LookupFailure(f"no external noiseprint for {image_path}: expected {path}")
    data = load_plane(path)
    if shape is None:
        from .io import load_image
        shape = load_image(image_path).shape
    if tuple(data.shape) != tuple(shape):
        raise DimensionError(
            f"noiseprint {path} is {data.shape[0]}x{data.shape[1]}, image is {shape[0]}x{shape[1]}")
    return data


def model_fingerprint(image, cfg=ExtractorConfig()):
    """phi(I) for an :class:`ImagePlane` with either backend."""
    if cfg.kind is ExtractorType.External:
        return load_external_noiseprint(image.meta.source_path, cfg, image.shape)
    return extract_surrogate(image, cfg)


def estimate_model_reference(fingerprints, model_id="", extractor_id="surrogate-p8"):
    fingerprints = [np.asarray(f, dtype=np.float64) for f in fingerprints]
    if not fingerprints:
        raise ArgumentError("need at least one fingerprint")
    shape = fingerprints[0].shape
    acc = np.zeros(shape)
    for f in fingerprints:
        if f.shape != shape:
            raise DimensionError(f"fingerprint dimensions differ: {shape} vs {f.shape}")
        acc += f
    return ModelPattern(acc / len(fingerprints), len(fingerprints), extractor_id, model_id)
