import numpy as np
import pytest
from hypothesis import given, settings, strategies as st
from hypothesis.extra.numpy import arrays

from oracles import local_wiener_loops
from prnufuse import kernels
from prnufuse.errors import ArgumentError, DimensionError
from prnufuse.io import ImageMeta, ImagePlane, NoiseResidual
from prnufuse.residual import (DenoiserConfig, denoise_local_wiener, extract_residual,
                               residual_array)

images = arrays(np.float64, st.tuples(st.integers(3, 12), st.integers(3, 12)),
                elements=st.floats(0, 255, allow_nan=False))


def test_config_validation():
    with pytest.raises(ArgumentError):
        DenoiserConfig(window=4)
    with pytest.raises(ArgumentError):
        DenoiserConfig(window=1)
    with pytest.raises(ArgumentError):
        DenoiserConfig(noise_variance=0.0)


@pytest.mark.trivial
def test_constant_image_unchanged():
    img = ImagePlane(np.full((7, 9), 100.0))
    out = denoise_local_wiener(img)
    np.testing.assert_array_equal(out.data, img.data)
    np.testing.assert_array_equal(extract_residual(img).data, 0.0)


@pytest.mark.trivial
@given(st.floats(-1e3, 1e3, allow_nan=False), st.integers(3, 10), st.integers(3, 10))
def test_constant_residual_identically_zero(c, h, w):
    assert np.all(residual_array(np.full((h, w), c)) == 0.0)


def test_impulse_matches_loop_oracle():
    img = np.zeros((9, 9))
    img[4, 4] = 10.0
    cfg = DenoiserConfig(3, 1e4)
    out = denoise_local_wiener(img, cfg)
    np.testing.assert_allclose(out, local_wiener_loops(img, 3, 1e4), atol=1e-12)
    # gain is zero everywhere: impulse replaced by its local mean
    assert out[4, 4] == pytest.approx(10.0 / 9)
    assert out[0, 0] == 0.0


def test_high_variance_passes_through(rng):
    checker = (np.add.outer(np.arange(16), np.arange(16)) % 2) * 250.0
    img = checker + rng.uniform(0, 5, size=(16, 16))
    cfg = DenoiserConfig(3, 1.0)
    out = denoise_local_wiener(img, cfg)
    np.testing.assert_allclose(out, local_wiener_loops(img, 3, 1.0), atol=1e-9)
    padded = np.pad(img, 1, mode="symmetric")
    win = np.lib.stride_tricks.sliding_window_view(padded, (3, 3))
    vmin = win.var(axis=(-2, -1)).min()
    assert vmin > 1000
    assert np.abs(out - img).max() <= 1.0 / vmin * 255 + 1e-9


@pytest.mark.parametrize("window", [3, 5])
def test_random_image_matches_loop_oracle(rng, window):
    img = rng.uniform(0, 255, size=(11, 13))
    np.testing.assert_allclose(denoise_local_wiener(img, DenoiserConfig(window, 300.0)),
                               local_wiener_loops(img, window, 300.0), atol=1e-9)


@pytest.mark.trivial
@settings(max_examples=50, deadline=None)
@given(images)
def test_reconstruction_identity(img):
    cfg = DenoiserConfig()
    f = denoise_local_wiener(img, cfg)
    w = residual_array(img, cfg)
    assert np.max(np.abs(f + w - img)) <= 1e-9


@settings(max_examples=50, deadline=None)
@given(images)
def test_flip_equivariance(img):
    cfg = DenoiserConfig(3, 50.0)
    base = denoise_local_wiener(img, cfg)
    for axis in (0, 1):
        flipped = denoise_local_wiener(np.flip(img, axis), cfg)
        np.testing.assert_allclose(flipped, np.flip(base, axis), atol=1e-9)


def test_too_small_image():
    with pytest.raises(DimensionError):
        denoise_local_wiener(np.zeros((2, 5)))


def test_residual_keeps_metadata():
    img = ImagePlane(np.arange(25.0).reshape(5, 5), ImageMeta("M", "D", "x"))
    res = extract_residual(img)
    assert isinstance(res, NoiseResidual)
    assert res.meta == img.meta and res.shape == img.shape


def test_backends_agree(rng):
    if kernels.BACKEND != "cython":
        pytest.skip("compiled extension not built")
    img = rng.uniform(0, 255, size=(40, 33))
    padded = np.pad(img, 2, mode="symmetric")
    a = kernels.get_backend("python").local_wiener(padded, 5, 40.0)
    b = kernels.get_backend("cython").local_wiener(padded, 5, 40.0)
    np.testing.assert_allclose(a, b, atol=1e-10)


def test_residual_correlates_with_embedded_prnu():
    from simtools import STRONG, camera, ncc
    from prnufuse.simulator import SimConfig, render_components
    cfg = SimConfig(n_models=1, devices_per_model=1, image_size=256, **STRONG)
    cam = camera(cfg)
    scene, img = render_components(cam, cfg, 0)
    w = residual_array(img)
    assert ncc(w, cam.K * scene) > 0.2
