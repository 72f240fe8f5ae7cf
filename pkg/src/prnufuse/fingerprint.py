"""Device PRNU reference estimation and cleanup."""

from dataclasses import replace

import numpy as np

from .errors import ArgumentError, DimensionError, StateError
from .io import DevicePattern, Estimator

EPS = 1e-12


def _check_stack(items, what):
    if len(items) == 0:
        raise ArgumentError(f"need at least one {what}")
    shape = items[0].shape
    for it in items[1:]:
        if it.shape != shape:
            raise DimensionError(f"{what} dimensions differ: {shape} vs {it.shape}")
    return shape


def _ids(residuals):
    devices = {r.meta.device_id for r in residuals}
    if len(devices) > 1:
        raise ArgumentError(f"residuals come from several devices: {sorted(devices)}")
    return residuals[0].meta.device_id, residuals[0].meta.model_id


def estimate_prnu_average(residuals):
    """Plain average of the noise residuals of one device."""
    residuals = list(residuals)
    _check_stack(residuals, "residual")
    device_id, model_id = _ids(residuals)
    acc = np.zeros(residuals[0].shape)
    for r in residuals:
        acc += r.data
    return DevicePattern(acc / len(residuals), len(residuals), Estimator.Average,
                         False, device_id, model_id)


def estimate_prnu_ml(residuals, images):
    """Weighted estimate sum(W*I) / sum(I^2) under the multiplicative model."""
    residuals, images = list(residuals), list(images)
    if len(residuals) != len(images):
        raise ArgumentError(f"{len(residuals)} residuals but {len(images)} images")
    shape = _check_stack(residuals, "residual")
    if _check_stack(images, "image") != shape:
        raise DimensionError("residuals and images differ in size")
    device_id, model_id = _ids(residuals)
    num = np.zeros(shape)
    den = np.zeros(shape)
    for w, im in zip(residuals, images):
        num += w.data * im.data
        den += im.data * im.data
    return DevicePattern(num / np.maximum(den, EPS), len(residuals),
                         Estimator.MaximumLikelihood, False, device_id, model_id)


def zero_mean(raster):
    """Subtract row means, then column means of the result."""
    x = np.asarray(raster, dtype=np.float64)
    if x.ndim != 2 or min(x.shape) < 2:
        raise DimensionError(f"zero_mean needs at least 2x2, got {x.shape}")
    x = x - x.mean(axis=1, keepdims=True)
    return x - x.mean(axis=0, keepdims=True)


def _wrap_box_mean(p, window):
    r = window // 2
    acc = np.zeros_like(p)
    for du in range(-r, r + 1):
        for dv in range(-r, r + 1):
            acc += np.roll(p, (du, dv), axis=(0, 1))
    return acc / (window * window)


def wiener_dft(raster, window=3):
    """Attenuate spectral peaks of a pattern.

    The gain at each frequency is ``floor / max(local_power, floor)``.
    The floor is the median bin power divided by ln 2: periodogram bins of
    white noise are exponentially distributed, and that ratio turns their
    median into an estimate of their mean. Broadband content passes almost
    untouched while periodic components are suppressed.
    """
    freq, gain = wiener_gain(raster, window)
    return np.fft.ifft2(freq * gain).real


def wiener_gain(raster, window=3):
    """Spectrum of ``raster`` and the real, frequency-symmetric Wiener gain."""
    x = np.asarray(raster, dtype=np.float64)
    if x.ndim != 2 or min(x.shape) < window:
        raise DimensionError(f"wiener_dft needs at least {window}x{window}, got {x.shape}")
    h, w = x.shape
    freq = np.fft.fft2(x)
    power = (freq.real ** 2 + freq.imag ** 2) / (h * w)
    local = _wrap_box_mean(power, window)
    floor = np.median(power) / np.log(2.0)
    denom = np.maximum(local, floor)
    gain = np.divide(floor, denom, out=np.ones_like(denom), where=denom > 0)
    return freq, gain


def postprocess(pattern, window=3):
    if pattern.postprocessed:
        raise StateError(f"pattern for device {pattern.device_id!r} is already postprocessed")
    data = wiener_dft(zero_mean(pattern.data), window)
    return replace(pattern, data=data, postprocessed=True)
