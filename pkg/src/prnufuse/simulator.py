"""Synthetic camera datasets with known PRNU and model artifacts.

Images follow I = (1 + K) * I0 + A + Theta, where K is the device PRNU,
A a periodic tile shared by every device of a model, and Theta sensor
noise. All random draws come from seed sequences keyed on
(seed, stream, model, device, image), so any image can be rendered on
its own and the result never depends on scheduling.
"""

from __future__ import annotations

import logging
import math
from concurrent.futures import ThreadPoolExecutor
from dataclasses import dataclass
from pathlib import Path

import numpy as np
from scipy.ndimage import uniform_filter

from .errors import ArgumentError
from .io import (DatasetManifest, ImageMeta, ImagePlane, ManifestRecord, Role,
                 encode_plane, save_manifest)

_K_STREAM, _ARTIFACT_STREAM, _IMAGE_STREAM = 1, 2, 3
SCENE_RANGE = (30.0, 220.0)
CLIP_WARN_RATE = 0.01

log = logging.getLogger(__name__)


@dataclass(frozen=True)
class SimConfig:
    n_models: int = 6
    devices_per_model: int = 3
    images_per_device: int = 10
    image_size: int = 256
    prnu_strength: float = 0.008
    artifact_period: int = 8
    artifact_strength: float = 2.0
    scene_smoothness: int = 1
    sensor_noise_sigma: float = 2.0
    seed: int = 0

    def __post_init__(self):
        for name in ("n_models", "devices_per_model", "images_per_device", "image_size"):
            if getattr(self, name) < 1:
                raise ArgumentError(f"{name} must be >= 1")
        for name in ("prnu_strength", "artifact_strength", "sensor_noise_sigma",
                     "scene_smoothness"):
            if getattr(self, name) < 0:
                raise ArgumentError(f"{name} must be >= 0")
        if self.artifact_period < 2:
            raise ArgumentError("artifact_period must be >= 2")


@dataclass(frozen=True)
class SimCamera:
    model_index: int
    device_index: int
    model_id: str
    device_id: str
    K: np.ndarray
    model_artifact: np.ndarray


def model_name(m):
    return f"M{m:02d}"


def device_name(m, d):
    return f"M{m:02d}-D{d:02d}"


def _rng(cfg, *key):
    return np.random.default_rng(np.random.SeedSequence(cfg.seed, spawn_key=key))


def build_cameras(cfg):
    size = cfg.image_size
    cams = []
    for m in range(cfg.n_models):
        tile = _rng(cfg, _ARTIFACT_STREAM, m).normal(
            0.0, 1.0, (cfg.artifact_period, cfg.artifact_period)) * cfg.artifact_strength
        tile.flags.writeable = False
        for d in range(cfg.devices_per_model):
            k = _rng(cfg, _K_STREAM, m, d).normal(0.0, 1.0, (size, size)) * cfg.prnu_strength
            k -= k.mean()
            k.flags.writeable = False
            cams.append(SimCamera(m, d, model_name(m), device_name(m, d), k, tile))
    return cams


def render_scene(rng, size, smoothness):
    """Box-blurred uniform noise stretched to the scene range."""
    raw = rng.random((size, size))
    if smoothness > 0:
        raw = uniform_filter(raw, size=2 * int(smoothness) + 1, mode="reflect")
    lo, hi = raw.min(), raw.max()
    a, b = SCENE_RANGE
    if hi <= lo:
        return np.full((size, size), 0.5 * (a + b))
    return a + (raw - lo) * ((b - a) / (hi - lo))


def _unclipped(scene, K, tile, noise):
    size = scene.shape
    reps = (-(-size[0] // tile.shape[0]), -(-size[1] // tile.shape[1]))
    artifact = np.tile(tile, reps)[:size[0], :size[1]]
    return (1.0 + K) * scene + artifact + noise


def compose(scene, K, tile, noise):
    return np.clip(_unclipped(scene, K, tile, noise), 0.0, 255.0)


def clipping_rate(scene, K, tile, noise):
    """Fraction of pixels the [0, 255] clip would alter."""
    raw = _unclipped(scene, K, tile, noise)
    return float(np.mean((raw < 0.0) | (raw > 255.0)))


def render_components(camera, cfg, image_index):
    """(scene, rendered image) for one capture."""
    rng = _rng(cfg, _IMAGE_STREAM, camera.model_index, camera.device_index, image_index)
    scene = render_scene(rng, cfg.image_size, cfg.scene_smoothness)
    noise = rng.normal(0.0, 1.0, scene.shape) * cfg.sensor_noise_sigma
    return scene, compose(scene, camera.K, camera.model_artifact, noise)


def render_image(camera, cfg, image_index):
    _, img = render_components(camera, cfg, image_index)
    return ImagePlane(img, ImageMeta(camera.model_id, camera.device_id,
                                     image_filename(camera, image_index)))


def image_filename(camera, image_index):
    return f"{camera.device_id}_{image_index:04d}.plane"


def split_roles(n):
    """Per-device role sizes (reference, train, test)."""
    n_ref = math.ceil(0.6 * n)
    n_train = (n - n_ref) // 2
    return n_ref, n_train, n - n_ref - n_train


def role_of(index, n):
    n_ref, n_train, _ = split_roles(n)
    if index < n_ref:
        return Role.reference
    if index < n_ref + n_train:
        return Role.train
    return Role.test


def generate_dataset(cfg, out_dir, threads=None):
    """Render every image to ``out_dir`` and write ``manifest.json`` there."""
    out = Path(out_dir)
    out.mkdir(parents=True, exist_ok=True)
    cams = build_cameras(cfg)
    jobs = [(c, i) for c in cams for i in range(cfg.images_per_device)]

    def work(job):
        cam, i = job
        path = out / image_filename(cam, i)
        try:
            path.write_bytes(encode_plane(render_components(cam, cfg, i)[1]))
        except OSError as exc:
            raise OSError(f"cannot write {path}: {exc}") from exc
        return ManifestRecord(path.name, cam.model_id, cam.device_id,
                              role_of(i, cfg.images_per_device))

    if threads == 1:
        records = [work(j) for j in jobs]
    else:
        with ThreadPoolExecutor(max_workers=threads) as pool:
            records = list(pool.map(work, jobs))
    manifest = DatasetManifest(records, base_dir=str(out.resolve()))
    save_manifest(manifest, out / "manifest.json")
    check_clipping(cfg, cams)
    return manifest


def check_clipping(cfg, cams=None, probe=4):
    """Measure the clip rate on a few captures; warn when it exceeds 1%."""
    cams = cams or build_cameras(cfg)
    rates = []
    for cam in cams[:probe]:
        rng = _rng(cfg, _IMAGE_STREAM, cam.model_index, cam.device_index, 0)
        scene = render_scene(rng, cfg.image_size, cfg.scene_smoothness)
        noise = rng.normal(0.0, 1.0, scene.shape) * cfg.sensor_noise_sigma
        rates.append(clipping_rate(scene, cam.K, cam.model_artifact, noise))
    rate = float(np.mean(rates))
    if rate > CLIP_WARN_RATE:
        log.warning("%.2f%% of simulated pixels are clipped to [0, 255]", 100 * rate)
    return rate


class SimulatedSource:
    """In-memory image source: renders planes on demand instead of reading files.

    Exposes the same ``manifest`` / ``load`` pair as a file-backed dataset,
    so the evaluation harness treats both alike.
    """

    def __init__(self, cfg):
        self.cfg = cfg
        self.cameras = {c.device_id: c for c in build_cameras(cfg)}
        records = []
        for cam in self.cameras.values():
            for i in range(cfg.images_per_device):
                records.append(ManifestRecord(image_filename(cam, i), cam.model_id,
                                              cam.device_id, role_of(i, cfg.images_per_device)))
        self.manifest = DatasetManifest(records)
        self._index = {r.path: int(r.path.rsplit("_", 1)[1].split(".")[0]) for r in records}

    def load(self, record):
        cam = self.cameras[record.device_id]
        img = render_components(cam, self.cfg, self._index[record.path])[1]
        return ImagePlane(img, ImageMeta(record.model_id, record.device_id, record.path))
