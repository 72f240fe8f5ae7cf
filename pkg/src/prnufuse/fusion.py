"""Classifiers fusing the (d_prnu, d_np) distance pair.

Every scorer follows one polarity: higher score means "same device" (H1).
Trained models carry the feature standardization fitted on their training
data and apply it when scoring.
"""

from __future__ import annotations

import enum
import struct
from dataclasses import dataclass
from pathlib import Path

import numpy as np

from .errors import ArgumentError, FormatError, StateError, TrainingError
from .mcd import fast_mcd

EPS_REG = 1e-9
MODEL_MAGIC = b"FUSM"


class FusionKind(enum.IntEnum):
    SVM = 0
    LRT = 1
    RobustLRT = 2
    FLD = 3
    RobustFLD = 4
    PrnuOnly = 5
    NpOnly = 6


METHODS = {
    "svm": FusionKind.SVM,
    "lrt": FusionKind.LRT,
    "rlrt": FusionKind.RobustLRT,
    "fld": FusionKind.FLD,
    "rfld": FusionKind.RobustFLD,
    "prnu": FusionKind.PrnuOnly,
    "np": FusionKind.NpOnly,
}
METHOD_NAMES = {v: k for k, v in METHODS.items()}


class Label(enum.IntEnum):
    H0 = 0  # different device
    H1 = 1  # same device


@dataclass(frozen=True)
class LabeledPair:
    x: tuple
    label: Label


@dataclass(frozen=True)
class Standardization:
    mean: np.ndarray
    scale: np.ndarray

    def apply(self, x):
        return (np.asarray(x, dtype=np.float64) - self.mean) / self.scale

    def invert(self, z):
        return np.asarray(z, dtype=np.float64) * self.scale + self.mean


@dataclass(frozen=True)
class GaussianParams:
    mean: np.ndarray
    cov: np.ndarray


@dataclass(frozen=True)
class FusionModel:
    kind: FusionKind
    standardization: Standardization | None = None
    w: np.ndarray | None = None
    b: float | None = None
    h0: GaussianParams | None = None
    h1: GaussianParams | None = None

    @property
    def name(self):
        return METHOD_NAMES[self.kind]

    def score(self, pair):
        return score(self, pair)


def _as_xy(pairs, labels=None):
    if labels is None:
        x = np.array([p.x for p in pairs], dtype=np.float64)
        y = np.array([int(p.label) for p in pairs])
    else:
        x = np.asarray(pairs, dtype=np.float64)
        y = np.asarray(labels).astype(int)
    x = x.reshape(-1, 2)
    if len(x) != len(y):
        raise ArgumentError(f"{len(x)} feature rows but {len(y)} labels")
    if not np.all(np.isfinite(x)):
        raise ArgumentError("features must be finite")
    return x, y


# ---------------------------------------------------------- standardization

def standardize_fit(x):
    """Per-coordinate mean and population std; zero spread gets scale 1."""
    x = np.asarray(x, dtype=np.float64).reshape(-1, 2)
    mean = x.mean(axis=0)
    scale = x.std(axis=0)
    scale = np.where(scale > 0, scale, 1.0)
    return Standardization(mean, scale)


def standardize_apply(x, standardization):
    return standardization.apply(x)


# --------------------------------------------------------------------- SVM

def train_svm(pairs, labels=None, lam=1e-3, iters=2000):
    """Linear SVM by full-batch subgradient descent on the regularized hinge loss.

    The bias is handled as an extra, regularized weight on a constant
    feature. Steps are 1/(lam*t) followed by projection onto the ball of
    radius 1/sqrt(lam); the iterate with the lowest objective is returned.
    """
    x, y = _as_xy(pairs, labels)
    if len(x) < 2 or len(np.unique(y)) < 2:
        raise TrainingError("SVM training needs samples from both classes")
    std = standardize_fit(x)
    z = np.hstack([std.apply(x), np.ones((len(x), 1))])
    s = np.where(y == Label.H1, 1.0, -1.0)
    n = len(z)
    theta = np.zeros(3)
    radius = 1.0 / np.sqrt(lam)
    best, best_obj = theta.copy(), np.inf
    for t in range(1, iters + 1):
        margins = s * (z @ theta)
        viol = margins < 1.0
        obj = 0.5 * lam * theta @ theta + np.mean(np.maximum(0.0, 1.0 - margins))
        if obj < best_obj:
            best, best_obj = theta.copy(), obj
        grad = lam * theta - (s[viol] @ z[viol]) / n
        theta = theta - grad / (lam * t)
        norm = np.linalg.norm(theta)
        if norm > radius:
            theta *= radius / norm
    margins = s * (z @ theta)
    obj = 0.5 * lam * theta @ theta + np.mean(np.maximum(0.0, 1.0 - margins))
    if obj < best_obj:
        best = theta
    return FusionModel(FusionKind.SVM, std, w=best[:2].copy(), b=float(best[2]))


# --------------------------------------------------------------- Gaussians

def _regularize(cov):
    cov = 0.5 * (cov + cov.T)
    return cov + EPS_REG * np.eye(2)


def fit_gaussian_ml(xs):
    xs = np.asarray(xs, dtype=np.float64).reshape(-1, 2)
    if len(xs) < 3:
        raise ArgumentError(f"Gaussian fit needs >= 3 samples, got {len(xs)}")
    mean = xs.mean(axis=0)
    diff = xs - mean
    return GaussianParams(mean, _regularize(diff.T @ diff / len(xs)))


def fit_gaussian_mcd(xs, alpha=0.5, n_starts=500, seed=0):
    xs = np.asarray(xs, dtype=np.float64).reshape(-1, 2)
    if len(xs) < 10:
        raise ArgumentError(f"MCD fit needs >= 10 samples, got {len(xs)}")
    mean, cov, _ = fast_mcd(xs, alpha=alpha, n_starts=n_starts, seed=seed)
    return GaussianParams(mean, _regularize(cov))


def _log_pdf(z, g):
    diff = np.atleast_2d(z) - g.mean
    sol = np.linalg.solve(g.cov, diff.T).T
    quad = np.einsum("ij,ij->i", diff, sol)
    _, logdet = np.linalg.slogdet(g.cov)
    return -0.5 * quad - 0.5 * logdet - np.log(2.0 * np.pi)


def _fit_gaussians(x, y, robust, seed, **mcd_kw):
    if len(np.unique(y)) < 2:
        raise TrainingError("training needs samples from both classes")
    std = standardize_fit(x)
    z = std.apply(x)
    fit = (lambda a: fit_gaussian_mcd(a, seed=seed, **mcd_kw)) if robust else fit_gaussian_ml
    return std, fit(z[y == Label.H0]), fit(z[y == Label.H1])


def train_lrt(pairs, labels=None, robust=False, seed=0, **mcd_kw):
    x, y = _as_xy(pairs, labels)
    std, h0, h1 = _fit_gaussians(x, y, robust, seed, **mcd_kw)
    return FusionModel(FusionKind.RobustLRT if robust else FusionKind.LRT, std, h0=h0, h1=h1)


def lrt_score(model, x):
    """Log-likelihood ratio log N(x | H1) - log N(x | H0) in standardized space."""
    if model.kind not in (FusionKind.LRT, FusionKind.RobustLRT):
        raise StateError(f"lrt_score needs an LRT model, got {model.kind.name}")
    if model.h0 is None or model.h1 is None:
        raise StateError("LRT model has no Gaussian parameters")
    z = model.standardization.apply(x) if model.standardization is not None else np.asarray(x)
    out = _log_pdf(z, model.h1) - _log_pdf(z, model.h0)
    return float(out[0]) if np.ndim(x) == 1 else out


def fld_fit(h0, h1, standardization=None, robust=False):
    """Unit-norm Fisher direction (S1 + S0)^-1 (m1 - m0), oriented towards H1."""
    dmu = np.asarray(h1.mean) - np.asarray(h0.mean)
    if not np.any(dmu):
        raise TrainingError("class means coincide; Fisher direction undefined")
    w = np.linalg.solve(np.asarray(h1.cov) + np.asarray(h0.cov), dmu)
    norm = np.linalg.norm(w)
    if not norm > 0:
        raise TrainingError("degenerate Fisher direction")
    w = w / norm
    if w @ dmu < 0:
        w = -w
    kind = FusionKind.RobustFLD if robust else FusionKind.FLD
    return FusionModel(kind, standardization, w=w)


def train_fld(pairs, labels=None, robust=False, seed=0, **mcd_kw):
    x, y = _as_xy(pairs, labels)
    std, h0, h1 = _fit_gaussians(x, y, robust, seed, **mcd_kw)
    return fld_fit(h0, h1, std, robust)


def train(method, pairs, labels=None, seed=0, svm_lambda=1e-3, svm_iters=2000,
          mcd_starts=500, mcd_alpha=0.5):
    """Fit the classifier named ``method`` (see :data:`METHODS`)."""
    try:
        kind = METHODS[method] if isinstance(method, str) else FusionKind(method)
    except (KeyError, ValueError):
        raise ArgumentError(f"unknown fusion method {method!r}") from None
    mcd_kw = dict(n_starts=mcd_starts, alpha=mcd_alpha)
    if kind is FusionKind.SVM:
        return train_svm(pairs, labels, lam=svm_lambda, iters=svm_iters)
    if kind in (FusionKind.LRT, FusionKind.RobustLRT):
        return train_lrt(pairs, labels, robust=kind is FusionKind.RobustLRT, seed=seed, **mcd_kw)
    if kind in (FusionKind.FLD, FusionKind.RobustFLD):
        return train_fld(pairs, labels, robust=kind is FusionKind.RobustFLD, seed=seed, **mcd_kw)
    return FusionModel(kind)


# ----------------------------------------------------------------- scoring

def score_many(model, x):
    """Scores for an (n, 2) array of (d_prnu, d_np) rows."""
    x = np.asarray(x, dtype=np.float64).reshape(-1, 2)
    kind = model.kind
    if kind is FusionKind.PrnuOnly:
        return -x[:, 0]
    if kind is FusionKind.NpOnly:
        return -x[:, 1]
    z = model.standardization.apply(x) if model.standardization is not None else x
    if kind is FusionKind.SVM:
        if model.w is None or model.b is None:
            raise StateError("SVM model is not trained")
        return z @ model.w + model.b
    if kind in (FusionKind.FLD, FusionKind.RobustFLD):
        if model.w is None:
            raise StateError("FLD model is not trained")
        return z @ model.w
    if model.h0 is None or model.h1 is None:
        raise StateError("LRT model is not trained")
    return _log_pdf(z, model.h1) - _log_pdf(z, model.h0)


def score(model, pair):
    x = pair.x if hasattr(pair, "x") else pair
    return float(score_many(model, x)[0])


# ------------------------------------------------------------- persistence

def _param_block(model):
    if model.kind in (FusionKind.PrnuOnly, FusionKind.NpOnly):
        return []
    std = model.standardization or Standardization(np.zeros(2), np.ones(2))
    vals = list(std.mean) + list(std.scale)
    if model.w is None and model.h0 is None:
        raise StateError("cannot save an untrained model")
    if model.kind is FusionKind.SVM:
        vals += list(model.w) + [model.b]
    elif model.kind in (FusionKind.FLD, FusionKind.RobustFLD):
        vals += list(model.w)
    else:
        for g in (model.h0, model.h1):
            vals += list(g.mean) + list(np.asarray(g.cov).ravel())
    return vals


_BLOCK_LEN = {FusionKind.SVM: 7, FusionKind.LRT: 16, FusionKind.RobustLRT: 16,
              FusionKind.FLD: 6, FusionKind.RobustFLD: 6,
              FusionKind.PrnuOnly: 0, FusionKind.NpOnly: 0}


def encode_model(model):
    vals = _param_block(model)
    return MODEL_MAGIC + bytes([int(model.kind)]) + struct.pack(f"<{len(vals)}d", *vals)


def decode_model(buf):
    if len(buf) < 5 or buf[:4] != MODEL_MAGIC:
        raise FormatError("not a fusion model file (bad magic)", offset=0)
    try:
        kind = FusionKind(buf[4])
    except ValueError:
        raise FormatError(f"unknown fusion model kind {buf[4]}", offset=4) from None
    n = _BLOCK_LEN[kind]
    if len(buf) - 5 != 8 * n:
        raise FormatError(
            f"{kind.name} parameter block is {len(buf) - 5} bytes, expected {8 * n}", offset=5)
    vals = np.array(struct.unpack(f"<{n}d", buf[5:]))
    if n == 0:
        return FusionModel(kind)
    std = Standardization(vals[0:2].copy(), vals[2:4].copy())
    if kind is FusionKind.SVM:
        return FusionModel(kind, std, w=vals[4:6].copy(), b=float(vals[6]))
    if kind in (FusionKind.FLD, FusionKind.RobustFLD):
        return FusionModel(kind, std, w=vals[4:6].copy())
    h0 = GaussianParams(vals[4:6].copy(), vals[6:10].reshape(2, 2).copy())
    h1 = GaussianParams(vals[10:12].copy(), vals[12:16].reshape(2, 2).copy())
    return FusionModel(kind, std, h0=h0, h1=h1)


def save_model(model, path):
    Path(path).write_bytes(encode_model(model))


def load_model(path):
    return decode_model(Path(path).read_bytes())


# ---------------------------------------------------------------- pairs CSV

def read_pairs_csv(path):
    """Rows of ``d_prnu,d_np,label``; label is 0/1 or H0/H1, header optional."""
    xs, ys = [], []
    lines = Path(path).read_text(encoding="utf-8").splitlines()
    for lineno, line in enumerate(lines, 1):
        line = line.strip()
        if not line or line.startswith("#"):
            continue
        parts = [p.strip() for p in line.split(",")]
        if len(parts) != 3:
            raise FormatError(f"{path}:{lineno}: expected 3 columns, got {len(parts)}")
        try:
            a, b = float(parts[0]), float(parts[1])
        except ValueError:
            if lineno == 1:
                continue  # header
            raise FormatError(f"{path}:{lineno}: non-numeric distance") from None
        lab = parts[2].upper()
        if lab in ("1", "H1"):
            ys.append(1)
        elif lab in ("0", "H0"):
            ys.append(0)
        else:
            raise FormatError(f"{path}:{lineno}: bad label {parts[2]!r}")
        xs.append((a, b))
    return np.array(xs, dtype=np.float64).reshape(-1, 2), np.array(ys, dtype=int)


def write_pairs_csv(path, x, y):
    with open(path, "w", encoding="utf-8") as fh:
        fh.write("d_prnu,d_np,label\n")
        for (a, b), lab in zip(np.asarray(x), np.asarray(y)):
            fh.write(f"{float(a)!r},{float(b)!r},{int(lab)}\n")
