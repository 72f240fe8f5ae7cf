"""Closed-set and open-set experiments over crop size x reference count.

The harness works on any *source* exposing ``manifest`` and ``load(record)``:
:class:`FileSource` for manifests on disk, or
:class:`prnufuse.simulator.SimulatedSource` for in-memory synthetic data.
"""

from __future__ import annotations

import csv
import io as _io
from concurrent.futures import ThreadPoolExecutor
from dataclasses import dataclass, field
from pathlib import Path

import numpy as np

from .distance import crop_center, distance_pair
from .errors import ArgumentError, ConfigurationError, DegenerateInputError
from .fingerprint import estimate_prnu_average, estimate_prnu_ml, postprocess
from .fusion import FusionModel, METHODS, score_many, train
from .io import Estimator, NoiseResidual, Role, load_image
from .noiseprint import (ExtractorConfig, ExtractorType, estimate_model_reference,
                         fold_tile, load_external_noiseprint, tile_to)
from .residual import DenoiserConfig, residual_array

DEFAULT_METHODS = ("prnu", "np", "svm", "lrt", "rlrt", "fld", "rfld")


@dataclass(frozen=True)
class EvalCondition:
    crop_d: int
    n_ref: int
    repetitions: int | None = None

    def __post_init__(self):
        if self.crop_d < 8:
            raise ArgumentError(f"crop size must be >= 8, got {self.crop_d}")
        if self.n_ref < 1:
            raise ArgumentError(f"reference count must be >= 1, got {self.n_ref}")
        if self.repetitions is None:
            object.__setattr__(self, "repetitions", 10 if self.n_ref < 100 else 1)
        if self.repetitions < 1:
            raise ArgumentError("repetitions must be >= 1")

    @property
    def label(self):
        return f"{self.crop_d}x{self.n_ref}"


def parse_conditions(text, repetitions=None):
    """``"64:1,64:10,256:100"`` -> list of :class:`EvalCondition`."""
    out = []
    for item in text.split(","):
        item = item.strip()
        if not item:
            continue
        try:
            d, n = item.split(":")
            out.append(EvalCondition(int(d), int(n), repetitions))
        except ValueError:
            raise ArgumentError(f"bad condition {item!r}; expected d:N") from None
    if not out:
        raise ArgumentError("no conditions given")
    return out


@dataclass(frozen=True)
class PipelineConfig:
    denoiser: DenoiserConfig = field(default_factory=DenoiserConfig)
    extractor: ExtractorConfig = field(default_factory=ExtractorConfig)
    estimator: Estimator = Estimator.Average
    postprocess: bool = True
    threads: int | None = None
    svm_lambda: float = 1e-3
    svm_iters: int = 2000
    mcd_starts: int = 500
    cache_bytes: int = 512 * 2 ** 20


class FileSource:
    def __init__(self, manifest):
        self.manifest = manifest

    def load(self, record):
        return load_image(self.manifest.resolve(record), record)


def _map(fn, items, threads):
    if threads == 1 or len(items) < 2:
        return [fn(it) for it in items]
    with ThreadPoolExecutor(max_workers=threads) as pool:
        return list(pool.map(fn, items))


# -------------------------------------------------------------- references

def build_references(source, records, cfg=PipelineConfig()):
    """Device and model reference patterns of one device from the same images."""
    if not records:
        raise ConfigurationError("no reference images")
    ext = cfg.extractor

    def work(rec):
        img = source.load(rec)
        w = residual_array(img.data, cfg.denoiser)
        if ext.kind is ExtractorType.External:
            fp = load_external_noiseprint(img.meta.source_path, ext, img.shape)
        else:
            wf = w if ext.denoiser == cfg.denoiser else residual_array(img.data, ext.denoiser)
            fp = fold_tile(wf, ext.period)
        return img, w, fp

    items = _map(work, list(records), cfg.threads)
    model_id = records[0].model_id
    residuals = [NoiseResidual(w, img.meta) for img, w, _ in items]
    if cfg.estimator == Estimator.MaximumLikelihood:
        pattern = estimate_prnu_ml(residuals, [img for img, _, _ in items])
    else:
        pattern = estimate_prnu_average(residuals)
    if cfg.postprocess:
        pattern = postprocess(pattern)
    model_ref = estimate_model_reference([fp for _, _, fp in items], model_id, ext.extractor_id)
    if ext.kind is ExtractorType.SurrogatePeriodic:
        model_ref = type(model_ref)(tile_to(model_ref.data, pattern.shape), model_ref.n_images,
                                    model_ref.extractor_id, model_id)
    return pattern, model_ref


# ------------------------------------------------------- distance features

@dataclass
class RefStack:
    """Centre crops of all device references, ready for batched distances."""

    device_ids: list
    model_ids: list
    k_unit: np.ndarray      # (n_dev, d*d) unit-norm PRNU crops
    r_crops: np.ndarray     # (n_dev, d*d) model reference crops

    @classmethod
    def from_refs(cls, refs, d):
        ids = sorted(refs)
        k = np.stack([crop_center(refs[i][0], d).ravel() for i in ids])
        norms = np.linalg.norm(k, axis=1, keepdims=True)
        if np.any(norms == 0):
            bad = [i for i, n in zip(ids, norms[:, 0]) if n == 0]
            raise DegenerateInputError(f"all-zero PRNU reference crop for {bad}")
        r = np.stack([crop_center(refs[i][1], d).ravel() for i in ids])
        return cls(ids, [refs[i][0].model_id for i in ids], k / norms, r)


def test_crop_features(image, d, cfg=PipelineConfig()):
    """(unit-norm residual crop, model fingerprint crop), flattened."""
    crop = crop_center(image, d)
    if not np.any(crop):
        raise DegenerateInputError(f"all-zero test crop in {image.meta.source_path}")
    w = residual_array(crop, cfg.denoiser)
    nw = np.linalg.norm(w)
    if nw == 0:
        raise DegenerateInputError(f"zero residual for test crop of {image.meta.source_path}")
    ext = cfg.extractor
    if ext.kind is ExtractorType.External:
        full = load_external_noiseprint(image.meta.source_path, ext, image.shape)
        fp = crop_center(full, d)
    else:
        wf = w if ext.denoiser == cfg.denoiser else residual_array(crop, ext.denoiser)
        fp = tile_to(fold_tile(wf, ext.period), crop.shape)
    return (w / nw).ravel(), np.asarray(fp, dtype=np.float64).ravel()


def distances_against(features, stack):
    """(n_dev, 2) array of (d_prnu, d_np) for one test image."""
    w_unit, fp = features
    dp = 1.0 - stack.k_unit @ w_unit
    dn = np.mean((stack.r_crops - fp) ** 2, axis=1)
    return np.column_stack([dp, dn])


class FeatureBank:
    """Test-side crop features per (crop size, record), cached within a byte budget."""

    def __init__(self, source, cfg):
        self.source = source
        self.cfg = cfg
        self._cache = {}

    def features(self, records, d):
        key = (d, tuple(r.path for r in records))
        if key in self._cache:
            return self._cache[key]

        def work(rec):
            w, fp = test_crop_features(self.source.load(rec), d, self.cfg)
            return w.astype(np.float32), fp.astype(np.float32)

        feats = _map(work, records, self.cfg.threads)
        if len(records) * d * d * 8 <= self.cfg.cache_bytes:
            self._cache[key] = feats
        return feats


def distance_table(feats, stack):
    """(n_tests, n_dev, 2) distances for precomputed test features."""
    out = np.empty((len(feats), len(stack.device_ids), 2))
    for i, (w, fp) in enumerate(feats):
        out[i] = distances_against((w.astype(np.float64), fp.astype(np.float64)), stack)
    return out


# ---------------------------------------------------------------- metrics

def roc_auc(scores, labels):
    """ROC points (P_FA, P_D) and the Mann-Whitney AUC.

    Thresholds sweep the distinct scores from high to low; ties between a
    positive and a negative count one half.
    """
    scores = np.asarray(scores, dtype=np.float64).ravel()
    labels = np.asarray(labels).astype(int).ravel()
    if scores.shape != labels.shape:
        raise ArgumentError("scores and labels differ in length")
    pos = np.sort(scores[labels == 1])
    neg = np.sort(scores[labels == 0])
    if len(pos) == 0 or len(neg) == 0:
        raise ArgumentError("ROC needs both positive and negative samples")
    less = np.searchsorted(neg, pos, side="left")
    leq = np.searchsorted(neg, pos, side="right")
    greater = int(less.sum())
    ties = int((leq - less).sum())
    auc = (2 * greater + ties) / (2 * len(pos) * len(neg))
    thresholds = np.unique(scores)[::-1]
    tp = len(pos) - np.searchsorted(pos, thresholds, side="left")
    fp = len(neg) - np.searchsorted(neg, thresholds, side="left")
    roc = [(0.0, 0.0)] + [(f / len(neg), t / len(pos)) for f, t in zip(fp, tp)]
    return roc, auc


def accuracy_from_scores(scores, true_index):
    """Closed-set accuracy; argmax ties go to the first (lowest id) column."""
    scores = np.asarray(scores, dtype=np.float64)
    picks = np.argmax(scores, axis=1)
    return float(np.mean(picks == np.asarray(true_index)))


def _as_scorer(scorer):
    if isinstance(scorer, FusionModel):
        return lambda pair: float(score_many(scorer, pair.x)[0])
    return scorer


def _pair_scores(device_refs, tests, scorer, d, denoiser, extractor):
    ids = sorted(device_refs)
    scorer = _as_scorer(scorer)
    out = np.empty((len(tests), len(ids)))
    for i, img in enumerate(tests):
        for j, dev in enumerate(ids):
            k, r = device_refs[dev]
            out[i, j] = scorer(distance_pair(img, k, r, d, denoiser, extractor))
    return ids, out


def _true_index(tests, ids):
    lookup = {dev: j for j, dev in enumerate(ids)}
    idx = []
    for img in tests:
        if img.meta.device_id not in lookup:
            raise ConfigurationError(
                f"test image {img.meta.source_path!r} from device {img.meta.device_id!r}"
                " has no reference")
        idx.append(lookup[img.meta.device_id])
    return np.array(idx)


def closed_set_accuracy(device_refs, tests, scorer, d, denoiser=DenoiserConfig(),
                        extractor=ExtractorConfig()):
    """Fraction of tests whose highest-scoring device is the true one.

    ``device_refs`` maps device id to (DevicePattern, ModelPattern);
    ``scorer`` is a :class:`FusionModel` or any callable on a DistancePair.
    """
    if len(device_refs) < 2:
        raise ConfigurationError("closed-set evaluation needs at least two devices")
    ids = sorted(device_refs)
    true = _true_index(tests, ids)
    _, scores = _pair_scores(device_refs, tests, scorer, d, denoiser, extractor)
    return accuracy_from_scores(scores, true)


def open_set_evaluate(device_refs, tests, scorer, d, denoiser=DenoiserConfig(),
                      extractor=ExtractorConfig()):
    """ROC and AUC over every (test, candidate device) pair."""
    ids = sorted(device_refs)
    true = _true_index(tests, ids)
    _, scores = _pair_scores(device_refs, tests, scorer, d, denoiser, extractor)
    labels = (np.arange(len(ids))[None, :] == true[:, None]).astype(int)
    return roc_auc(scores.ravel(), labels.ravel())


# ------------------------------------------------------------------- grid

@dataclass
class CellResult:
    condition: EvalCondition
    method: str
    accuracies: list = field(default_factory=list)
    aucs: list = field(default_factory=list)
    roc: list | None = None
    n_tests: int = 0
    n_devices: int = 0

    @property
    def accuracy(self):
        return float(np.mean(self.accuracies))

    @property
    def auc(self):
        return float(np.mean(self.aucs))


@dataclass
class ConditionData:
    """Distances and labels of one repetition, kept for diagnostics."""

    test_x: np.ndarray          # (n_tests, n_dev, 2)
    test_true: np.ndarray       # (n_tests,) device column index
    test_models: list           # model id per test
    device_ids: list
    device_models: list


@dataclass
class EvalReport:
    cells: dict = field(default_factory=dict)        # (label, method) -> CellResult
    data: dict = field(default_factory=dict)         # label -> ConditionData (repetition 0)

    def cell(self, condition, method):
        label = condition if isinstance(condition, str) else condition.label
        return self.cells[(label, method)]

    def to_csv(self):
        buf = _io.StringIO()
        wr = csv.writer(buf, lineterminator="\n")
        wr.writerow(["d", "N", "method", "repetitions", "accuracy", "auc",
                     "n_tests", "n_devices"])
        for (_, method), c in self.cells.items():
            wr.writerow([c.condition.crop_d, c.condition.n_ref, method, len(c.accuracies),
                         repr(c.accuracy), repr(c.auc), c.n_tests, c.n_devices])
        return buf.getvalue()

    def write(self, out_dir):
        out = Path(out_dir)
        out.mkdir(parents=True, exist_ok=True)
        (out / "report.csv").write_text(self.to_csv(), encoding="utf-8")
        for (label, method), c in self.cells.items():
            lines = ["p_fa,p_d"] + [f"{float(a)!r},{float(b)!r}" for a, b in c.roc]
            (out / f"roc_{label}_{method}.csv").write_text("\n".join(lines) + "\n",
                                                          encoding="utf-8")


def check_roles(manifest):
    """Group records by device and role; every path may hold one role only."""
    seen = {}
    for r in manifest.records:
        if r.path in seen and seen[r.path] != r.role:
            raise ConfigurationError(f"{r.path!r} appears in roles {seen[r.path]} and {r.role}")
        seen[r.path] = r.role
    groups = {}
    for r in manifest.records:
        groups.setdefault(r.device_id, {}).setdefault(r.role, []).append(r)
    return dict(sorted(groups.items()))


def sample_references(groups, n_ref, seed, repetition):
    """Draw ``n_ref`` reference images per device without replacement.

    The draw depends only on (seed, n_ref, repetition), so repetitions are
    independent and reproducible.
    """
    rng = np.random.default_rng(np.random.SeedSequence(seed, spawn_key=(n_ref, repetition)))
    out = {}
    for dev, roles in groups.items():
        pool = roles.get(Role.reference, [])
        if len(pool) < n_ref:
            raise ConfigurationError(
                f"device {dev!r} has {len(pool)} reference images, condition needs {n_ref}"
                f" (short by {n_ref - len(pool)})")
        pick = np.sort(rng.choice(len(pool), n_ref, replace=False))
        out[dev] = [pool[i] for i in pick]
    return out


def _labels_for(true, n_dev):
    return (np.arange(n_dev)[None, :] == np.asarray(true)[:, None]).astype(int)


def training_pairs(source, d, n_ref, seed=0, cfg=PipelineConfig()):
    """Labelled (d_prnu, d_np) rows of every train-role image against every device.

    References are drawn exactly as in repetition 0 of :func:`run_grid`.
    """
    groups = check_roles(source.manifest)
    trains = [r for g in groups.values() for r in g.get(Role.train, [])]
    if not trains:
        raise ConfigurationError("manifest has no train-role images")
    picks = sample_references(groups, n_ref, seed, 0)
    refs = {dev: build_references(source, recs, cfg) for dev, recs in picks.items()}
    stack = RefStack.from_refs(refs, d)
    index = {dev: i for i, dev in enumerate(stack.device_ids)}
    true = np.array([index[r.device_id] for r in trains])
    x = distance_table(FeatureBank(source, cfg).features(trains, d), stack)
    return x.reshape(-1, 2), _labels_for(true, len(stack.device_ids)).ravel()


def run_grid(source, conditions, methods=DEFAULT_METHODS, seed=0, cfg=PipelineConfig(),
             keep_data=True, progress=None):
    """Evaluate every condition x method; metrics are averaged over repetitions."""
    methods = list(methods)
    for m in methods:
        if m not in METHODS:
            raise ArgumentError(f"unknown method {m!r}")
    groups = check_roles(source.manifest)
    if len(groups) < 2:
        raise ConfigurationError("need at least two devices")
    tests = [r for g in groups.values() for r in g.get(Role.test, [])]
    trains = [r for g in groups.values() for r in g.get(Role.train, [])]
    if not tests:
        raise ConfigurationError("manifest has no test-role images")
    if not trains and any(METHODS[m].value <= 4 for m in methods):
        raise ConfigurationError("manifest has no train-role images for fitting classifiers")
    dev_ids = list(groups)
    dev_index = {d: i for i, d in enumerate(dev_ids)}
    test_true = np.array([dev_index[r.device_id] for r in tests])
    train_true = np.array([dev_index[r.device_id] for r in trains])
    bank = FeatureBank(source, cfg)
    report = EvalReport()
    for c in conditions:
        for m in methods:
            report.cells[(c.label, m)] = CellResult(c, m)

    by_n = {}
    for c in conditions:
        by_n.setdefault(c.n_ref, []).append(c)
    for n_ref in sorted(by_n):
        conds = by_n[n_ref]
        for rep in range(max(c.repetitions for c in conds)):
            picks = sample_references(groups, n_ref, seed, rep)
            refs = {dev: build_references(source, recs, cfg) for dev, recs in picks.items()}
            for c in conds:
                if rep >= c.repetitions:
                    continue
                if progress:
                    progress(f"condition {c.label} repetition {rep + 1}/{c.repetitions}")
                stack = RefStack.from_refs(refs, c.crop_d)
                x_test = distance_table(bank.features(tests, c.crop_d), stack)
                x_train = (distance_table(bank.features(trains, c.crop_d), stack)
                           if trains else None)
                y_test = _labels_for(test_true, len(dev_ids))
                if keep_data and rep == 0:
                    report.data[c.label] = ConditionData(
                        x_test, test_true, [r.model_id for r in tests], dev_ids,
                        [groups[d][next(iter(groups[d]))][0].model_id for d in dev_ids])
                for m in methods:
                    if x_train is not None:
                        y_train = _labels_for(train_true, len(dev_ids))
                        model = train(m, x_train.reshape(-1, 2), y_train.ravel(),
                                      seed=seed + rep, svm_lambda=cfg.svm_lambda,
                                      svm_iters=cfg.svm_iters, mcd_starts=cfg.mcd_starts)
                    else:
                        model = train(m, np.zeros((0, 2)), np.zeros(0))
                    s = score_many(model, x_test.reshape(-1, 2)).reshape(len(tests), -1)
                    cell = report.cells[(c.label, m)]
                    roc, auc = roc_auc(s.ravel(), y_test.ravel())
                    cell.accuracies.append(accuracy_from_scores(s, test_true))
                    cell.aucs.append(auc)
                    if cell.roc is None:
                        cell.roc = roc
                    cell.n_tests, cell.n_devices = len(tests), len(dev_ids)
    return report
