"""Raster and pattern types plus their on-disk formats.

Rasters are held in memory as float64 and written as little-endian float32.
Supported inputs are binary PGM (P5), binary PPM (P6, reduced to luminance)
and the raw ``.plane`` format.
"""

from __future__ import annotations

import enum
import json
import os
import struct
from dataclasses import dataclass, field, replace
from pathlib import Path

import numpy as np

from .errors import ArgumentError, DimensionError, FormatError

PLANE_MAGIC = b"PLNE"
PATTERN_MAGIC = b"PFP1"
LUMA_WEIGHTS = (0.299, 0.587, 0.114)
# separates the two identifiers packed into a pattern file's id string
ID_SEPARATOR = "\x1f"


@dataclass(frozen=True)
class ImageMeta:
    model_id: str = ""
    device_id: str = ""
    source_path: str = ""


def _frozen_array(data, name="data"):
    arr = np.array(data, dtype=np.float64, copy=True)
    if arr.ndim != 2:
        raise DimensionError(f"{name} must be 2-D, got shape {arr.shape}")
    if arr.shape[0] < 1 or arr.shape[1] < 1:
        raise DimensionError(f"{name} must be at least 1x1, got {arr.shape}")
    if not np.all(np.isfinite(arr)):
        raise ArgumentError(f"{name} contains non-finite values")
    arr.flags.writeable = False
    return arr


@dataclass(frozen=True)
class ImagePlane:
    """Single-channel luminance raster with provenance."""

    data: np.ndarray
    meta: ImageMeta = field(default_factory=ImageMeta)

    def __post_init__(self):
        object.__setattr__(self, "data", _frozen_array(self.data))

    @property
    def height(self):
        return self.data.shape[0]

    @property
    def width(self):
        return self.data.shape[1]

    @property
    def shape(self):
        return self.data.shape


@dataclass(frozen=True)
class NoiseResidual(ImagePlane):
    """Image minus its denoised version; metadata inherited from the image."""


class Estimator(enum.IntEnum):
    Average = 0
    MaximumLikelihood = 1


class ExtractorKind(enum.IntEnum):
    SurrogatePeriodic = 0
    External = 1


@dataclass(frozen=True)
class DevicePattern:
    data: np.ndarray
    n_images: int
    estimator: Estimator = Estimator.Average
    postprocessed: bool = False
    device_id: str = ""
    model_id: str = ""

    def __post_init__(self):
        object.__setattr__(self, "data", _frozen_array(self.data))
        object.__setattr__(self, "estimator", Estimator(self.estimator))
        if self.n_images < 1:
            raise ArgumentError("n_images must be >= 1")

    @property
    def height(self):
        return self.data.shape[0]

    @property
    def width(self):
        return self.data.shape[1]

    @property
    def shape(self):
        return self.data.shape


@dataclass(frozen=True)
class ModelPattern:
    data: np.ndarray
    n_images: int
    extractor_id: str = "surrogate-p8"
    model_id: str = ""

    def __post_init__(self):
        object.__setattr__(self, "data", _frozen_array(self.data))
        if self.n_images < 1:
            raise ArgumentError("n_images must be >= 1")

    @property
    def height(self):
        return self.data.shape[0]

    @property
    def width(self):
        return self.data.shape[1]

    @property
    def shape(self):
        return self.data.shape


class Role(str, enum.Enum):
    reference = "reference"
    test = "test"
    train = "train"


@dataclass(frozen=True)
class ManifestRecord:
    path: str
    model_id: str
    device_id: str
    role: Role

    @property
    def meta(self):
        return ImageMeta(self.model_id, self.device_id, self.path)


@dataclass(frozen=True)
class DatasetManifest:
    records: tuple = ()
    base_dir: str = ""

    def __post_init__(self):
        object.__setattr__(self, "records", tuple(self.records))
        seen = set()
        for rec in self.records:
            if rec.path in seen:
                raise FormatError(f"duplicate manifest path {rec.path!r}")
            seen.add(rec.path)

    def __len__(self):
        return len(self.records)

    def __iter__(self):
        return iter(self.records)

    def resolve(self, record):
        p = Path(record.path)
        if not p.is_absolute() and self.base_dir:
            p = Path(self.base_dir) / p
        return p

    def by_role(self, role):
        role = Role(role)
        return [r for r in self.records if r.role == role]

    def devices(self):
        """Sorted device ids, each with its model id."""
        out = {}
        for r in self.records:
            out.setdefault(r.device_id, r.model_id)
        return dict(sorted(out.items()))


# ---------------------------------------------------------------- images

def _read_bytes(path):
    try:
        with open(path, "rb") as fh:
            return fh.read()
    except OSError as exc:
        raise OSError(f"cannot read {path}: {exc}") from exc


def _pnm_tokens(buf, count, start):
    """Read ``count`` whitespace-separated header integers, skipping comments."""
    values = []
    pos = start
    n = len(buf)
    while len(values) < count:
        while pos < n and buf[pos] in b" \t\r\n":
            pos += 1
        if pos < n and buf[pos] == ord("#"):
            while pos < n and buf[pos] not in b"\r\n":
                pos += 1
            continue
        if pos >= n:
            raise FormatError("truncated PNM header", offset=pos)
        tok_start = pos
        while pos < n and buf[pos] not in b" \t\r\n#":
            pos += 1
        tok = buf[tok_start:pos]
        if not tok.isdigit():
            raise FormatError(f"bad PNM header token {tok!r}", offset=tok_start)
        values.append(int(tok))
    if pos >= n or buf[pos] not in b" \t\r\n":
        raise FormatError("missing whitespace after PNM header", offset=pos)
    return values, pos + 1


def decode_pnm(buf):
    """Decode binary PGM (P5) or PPM (P6) bytes to a float64 luminance array."""
    if len(buf) < 2:
        raise FormatError("file too short for a PNM header", offset=0)
    magic = bytes(buf[:2])
    if magic not in (b"P5", b"P6"):
        raise FormatError(f"unsupported magic {magic!r}", offset=0)
    (width, height, maxval), pos = _pnm_tokens(buf, 3, 2)
    if width < 1 or height < 1:
        raise FormatError("PNM dimensions must be positive", offset=2)
    if not 0 < maxval < 65536:
        raise FormatError(f"invalid maxval {maxval}", offset=pos - 1)
    channels = 1 if magic == b"P5" else 3
    dtype = np.dtype(np.uint8) if maxval < 256 else np.dtype(">u2")
    need = width * height * channels * dtype.itemsize
    if len(buf) - pos < need:
        raise FormatError(
            f"pixel data truncated: need {need} bytes, have {len(buf) - pos}",
            offset=len(buf))
    pix = np.frombuffer(buf, dtype=dtype, count=width * height * channels, offset=pos)
    pix = pix.astype(np.float64)
    if channels == 1:
        return pix.reshape(height, width)
    rgb = pix.reshape(height, width, 3)
    r, g, b = LUMA_WEIGHTS
    return r * rgb[..., 0] + g * rgb[..., 1] + b * rgb[..., 2]


def encode_pgm(data):
    arr = np.asarray(data)
    if arr.ndim != 2:
        raise DimensionError("PGM needs a 2-D array")
    pix = np.clip(np.rint(arr), 0, 255).astype(np.uint8)
    header = f"P5\n{arr.shape[1]} {arr.shape[0]}\n255\n".encode("ascii")
    return header + pix.tobytes()


def decode_plane(buf):
    if len(buf) < 12:
        raise FormatError("file too short for a plane header", offset=len(buf))
    if buf[:4] != PLANE_MAGIC:
        raise FormatError(f"bad plane magic {bytes(buf[:4])!r}", offset=0)
    height, width = struct.unpack_from("<II", buf, 4)
    if height < 1 or width < 1:
        raise FormatError("plane dimensions must be positive", offset=4)
    need = height * width * 4
    if len(buf) - 12 != need:
        raise FormatError(
            f"plane payload is {len(buf) - 12} bytes, header implies {need}",
            offset=12)
    return np.frombuffer(buf, dtype="<f4", offset=12).astype(np.float64).reshape(height, width)


def encode_plane(data):
    arr = np.asarray(data, dtype=np.float64)
    if arr.ndim != 2:
        raise DimensionError("plane needs a 2-D array")
    header = PLANE_MAGIC + struct.pack("<II", arr.shape[0], arr.shape[1])
    return header + arr.astype("<f4").tobytes()


def save_plane(data, path):
    if isinstance(data, ImagePlane):
        data = data.data
    Path(path).write_bytes(encode_plane(data))


def load_plane(path):
    """Raw ``.plane`` payload as a float64 array."""
    return decode_plane(_read_bytes(path))


def _sidecar_meta(path):
    side = Path(str(path) + ".json")
    if not side.exists():
        return ImageMeta(source_path=str(path))
    try:
        obj = json.loads(side.read_text(encoding="utf-8"))
    except ValueError as exc:
        raise FormatError(f"bad sidecar {side}: {exc}") from exc
    return ImageMeta(str(obj.get("model", "")), str(obj.get("device", "")), str(path))


def load_image(path, record=None):
    """Load an image file as an :class:`ImagePlane`.

    Metadata comes from ``record`` when given, else from a ``<path>.json``
    sidecar holding ``{"model": ..., "device": ...}``, else stays empty.
    """
    path = os.fspath(path)
    buf = _read_bytes(path)
    if len(buf) == 0:
        raise FormatError(f"{path} is empty", offset=0)
    if buf[:4] == PLANE_MAGIC:
        data = decode_plane(buf)
    else:
        data = decode_pnm(buf)
    if record is not None:
        meta = ImageMeta(record.model_id, record.device_id, path)
    else:
        meta = _sidecar_meta(path)
    return ImagePlane(data, meta)


# -------------------------------------------------------------- patterns

_HEADER = struct.Struct("<4sBIIIBBH")


def encode_pattern(pattern):
    if isinstance(pattern, DevicePattern):
        kind, tag, flag = 0, int(pattern.estimator), int(pattern.postprocessed)
        ident = pattern.model_id + ID_SEPARATOR + pattern.device_id
    elif isinstance(pattern, ModelPattern):
        kind, flag = 1, 0
        tag = int(ExtractorKind.External if pattern.extractor_id == "external"
                  else ExtractorKind.SurrogatePeriodic)
        ident = pattern.model_id + ID_SEPARATOR + pattern.extractor_id
    else:
        raise ArgumentError(f"not a pattern: {type(pattern).__name__}")
    id_bytes = ident.encode("utf-8")
    if len(id_bytes) > 0xFFFF:
        raise ArgumentError("identifier too long")
    h, w = pattern.shape
    head = _HEADER.pack(PATTERN_MAGIC, kind, h, w, pattern.n_images, tag, flag, len(id_bytes))
    return head + id_bytes + pattern.data.astype("<f4").tobytes()


def decode_pattern(buf):
    if len(buf) < _HEADER.size:
        raise FormatError("file too short for a pattern header", offset=len(buf))
    magic, kind, h, w, n_images, tag, flag, id_len = _HEADER.unpack_from(buf, 0)
    if magic != PATTERN_MAGIC:
        raise FormatError(f"bad pattern magic {magic!r}", offset=0)
    if kind not in (0, 1):
        raise FormatError(f"unknown pattern kind {kind}", offset=4)
    pos = _HEADER.size
    if len(buf) < pos + id_len:
        raise FormatError("identifier truncated", offset=len(buf))
    try:
        ident = bytes(buf[pos:pos + id_len]).decode("utf-8")
    except UnicodeDecodeError as exc:
        raise FormatError("identifier is not UTF-8", offset=pos) from exc
    pos += id_len
    need = h * w * 4
    if len(buf) - pos != need:
        raise FormatError(
            f"pattern payload is {len(buf) - pos} bytes, header implies {need} ({h}x{w})",
            offset=pos)
    if h < 1 or w < 1 or n_images < 1:
        raise FormatError("pattern header has zero dimension or image count", offset=5)
    data = np.frombuffer(buf, dtype="<f4", offset=pos).astype(np.float64).reshape(h, w)
    first, _, second = ident.partition(ID_SEPARATOR)
    if kind == 0:
        if tag not in (0, 1):
            raise FormatError(f"unknown estimator tag {tag}", offset=17)
        return DevicePattern(data, n_images, Estimator(tag), bool(flag),
                             device_id=second, model_id=first)
    return ModelPattern(data, n_images, extractor_id=second, model_id=first)


def save_pattern(pattern, path):
    Path(path).write_bytes(encode_pattern(pattern))


def load_pattern(path):
    return decode_pattern(_read_bytes(path))


# -------------------------------------------------------------- manifest

def parse_manifest(text, base_dir=""):
    try:
        items = json.loads(text)
    except ValueError as exc:
        raise FormatError(f"manifest is not valid JSON: {exc}") from exc
    if not isinstance(items, list):
        raise FormatError("manifest must be a JSON array")
    records = []
    for i, item in enumerate(items):
        if not isinstance(item, dict):
            raise FormatError(f"manifest record {i} is not an object")
        try:
            path, model, device, role = (item["path"], item["model"], item["device"], item["role"])
        except KeyError as exc:
            raise FormatError(f"manifest record {i} lacks field {exc.args[0]!r}") from None
        try:
            role = Role(role)
        except ValueError:
            raise FormatError(
                f"manifest record {i} ({path!r}) has unknown role {role!r}") from None
        records.append(ManifestRecord(str(path), str(model), str(device), role))
    return DatasetManifest(records, base_dir=base_dir)


def load_manifest(path):
    """Parse a manifest; relative record paths resolve against its directory."""
    text = Path(path).read_text(encoding="utf-8")
    return parse_manifest(text, base_dir=str(Path(path).resolve().parent))


def dump_manifest(manifest):
    items = [{"path": r.path, "model": r.model_id, "device": r.device_id, "role": r.role.value}
             for r in manifest.records]
    return json.dumps(items, indent=1) + "\n"


def save_manifest(manifest, path):
    Path(path).write_text(dump_manifest(manifest), encoding="utf-8")


def with_data(obj, data):
    """Copy of a frozen raster object with new data."""
    return replace(obj, data=data)
