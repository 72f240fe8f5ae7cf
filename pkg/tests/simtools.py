"""Small helpers for tests that draw on the synthetic camera model."""

import numpy as np

from prnufuse.residual import extract_residual
from prnufuse.simulator import SimConfig, build_cameras, render_image

# The scene and PRNU levels under which a single residual already
# correlates clearly with the embedded K * I0 term.
STRONG = dict(prnu_strength=0.02, scene_smoothness=6, sensor_noise_sigma=2.0)


def camera(cfg, model=0, device=0):
    return build_cameras(cfg)[model * cfg.devices_per_model + device]


def captures(cfg, cam, n, start=0):
    """(images, residuals) for ``n`` captures of one simulated camera."""
    imgs = [render_image(cam, cfg, i) for i in range(start, start + n)]
    return imgs, [extract_residual(im) for im in imgs]


def ncc(a, b):
    a, b = np.ravel(a), np.ravel(b)
    return float(a @ b / np.sqrt((a @ a) * (b @ b)))


def small(**kw):
    base = dict(n_models=2, devices_per_model=2, images_per_device=10, image_size=64)
    base.update(kw)
    return SimConfig(**base)
