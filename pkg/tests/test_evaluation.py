import numpy as np
import pytest
from hypothesis import assume, given, strategies as st

from oracles import auc_pairs
from simtools import small
from prnufuse import evaluation as ev
from prnufuse.errors import ArgumentError, ConfigurationError
from prnufuse.fingerprint import estimate_prnu_average, postprocess
from prnufuse.io import DatasetManifest, ManifestRecord, Role
from prnufuse.noiseprint import estimate_model_reference, extract_surrogate
from prnufuse.residual import extract_residual
from prnufuse.simulator import SimConfig, SimulatedSource

score_lists = st.lists(st.tuples(st.integers(-20, 20), st.integers(0, 1)), min_size=2,
                       max_size=200)


def trapezoid(roc):
    a = np.asarray(roc)
    return float(np.sum(np.diff(a[:, 0]) * (a[1:, 1] + a[:-1, 1]) / 2))


# ROC / AUC

@pytest.mark.trivial
def test_auc_examples():
    assert ev.roc_auc([0.9, 0.8, 0.4, 0.3], [1, 1, 0, 0])[1] == 1.0
    assert ev.roc_auc([0.9, 0.3, 0.8, 0.4], [1, 1, 0, 0])[1] == 0.5
    assert ev.roc_auc([0.5, 0.5], [1, 0])[1] == 0.5
    with pytest.raises(ArgumentError):
        ev.roc_auc([1, 2], [1, 1])


@given(score_lists)
def test_auc_matches_pair_oracle(items):
    s, y = zip(*items)
    assume(0 < sum(y) < len(y))
    roc, auc = ev.roc_auc(np.array(s) / 4.0, y)
    assert auc == auc_pairs(np.array(s) / 4.0, y)
    assert trapezoid(roc) == pytest.approx(auc, abs=1e-12)


@given(score_lists)
def test_roc_monotone(items):
    s, y = zip(*items)
    assume(0 < sum(y) < len(y))
    roc = np.asarray(ev.roc_auc(s, y)[0])
    assert np.all(np.diff(roc[:, 0]) >= 0) and np.all(np.diff(roc[:, 1]) >= 0)
    assert tuple(roc[0]) == (0.0, 0.0) and tuple(roc[-1]) == (1.0, 1.0)


@given(st.lists(st.floats(-1e6, 1e6), min_size=2, max_size=100, unique=True),
       st.randoms(use_true_random=False))
def test_auc_complement(s, rnd):
    y = [rnd.randint(0, 1) for _ in s]
    assume(0 < sum(y) < len(y))
    s = np.array(s)
    assert ev.roc_auc(s, y)[1] + ev.roc_auc(-s, y)[1] == pytest.approx(1.0, abs=1e-12)


def test_uniform_noise_auc(rng):
    y = np.r_[np.ones(1000, int), np.zeros(1000, int)]
    auc = ev.roc_auc(rng.uniform(size=2000), y)[1]
    assert abs(auc - 0.5) < 0.05


def test_accuracy_tie_break():
    scores = np.zeros((4, 3))
    assert ev.accuracy_from_scores(scores, [0, 0, 1, 2]) == 0.5


# conditions

def test_conditions():
    c = ev.parse_conditions("64:1, 256:100")
    assert [x.label for x in c] == ["64x1", "256x100"]
    assert [x.repetitions for x in c] == [10, 1]
    assert ev.parse_conditions("64:10", repetitions=3)[0].repetitions == 3
    for bad in ("", "64", "64:x", "4:1", "64:0"):
        with pytest.raises(ArgumentError):
            ev.parse_conditions(bad)


# closed and open set on explicit references

@pytest.fixture(scope="module")
def tiny_refs():
    cfg = small(n_models=2, devices_per_model=2, images_per_device=8, image_size=64)
    src = SimulatedSource(cfg)
    refs, tests = {}, []
    for dev in sorted(src.manifest.devices()):
        recs = [r for r in src.manifest.records if r.device_id == dev]
        imgs = [src.load(r) for r in recs]
        k = postprocess(estimate_prnu_average([extract_residual(i) for i in imgs[:5]]))
        m = estimate_model_reference([extract_surrogate(i) for i in imgs[:5]], recs[0].model_id)
        refs[dev] = (k, m)
        tests += imgs[5:]
    return refs, tests


@pytest.mark.trivial
def test_oracle_scorer(tiny_refs):
    refs, tests = tiny_refs

    def oracle(pair):
        return 1.0 if pair.ref_meta.device_id == pair.test_meta.device_id else 0.0

    assert ev.closed_set_accuracy(refs, tests, oracle, 32) == 1.0
    assert ev.open_set_evaluate(refs, tests, oracle, 32)[1] == 1.0


def test_constant_scorer_is_floor(tiny_refs):
    refs, tests = tiny_refs
    const = ev.closed_set_accuracy(refs, tests, lambda p: 0.0, 32)
    first = sorted(refs)[0]
    assert const == np.mean([t.meta.device_id == first for t in tests])
    assert ev.closed_set_accuracy(refs, tests, lambda p: -p.d_prnu, 32) >= const


def test_unknown_test_device(tiny_refs):
    refs, tests = tiny_refs
    some = dict(list(refs.items())[:2])
    with pytest.raises(ConfigurationError):
        ev.closed_set_accuracy(some, tests, lambda p: 0.0, 32)
    with pytest.raises(ConfigurationError):
        ev.closed_set_accuracy(dict(list(refs.items())[:1]), tests[:1], lambda p: 0.0, 32)


# grid

def tiny_source(**kw):
    kw = dict(dict(images_per_device=10, image_size=64), **kw)
    return SimulatedSource(small(**kw))


@pytest.mark.trivial
def test_grid_shape():
    rep = ev.run_grid(tiny_source(), [ev.EvalCondition(32, 2, 1)], ["fld"], seed=0)
    assert list(rep.cells) == [("32x2", "fld")]
    cell = rep.cell("32x2", "fld")
    assert 0 <= cell.accuracy <= 1 and 0 <= cell.auc <= 1
    assert cell.n_devices == 4 and cell.n_tests == 8
    assert len(rep.to_csv().strip().splitlines()) == 2


@pytest.mark.trivial
def test_grid_repetition_mean():
    c = ev.EvalCondition(32, 1)
    rep = ev.run_grid(tiny_source(), [c], ["prnu", "lrt"], seed=3)
    for m in ("prnu", "lrt"):
        cell = rep.cell(c, m)
        assert len(cell.accuracies) == 10
        assert abs(cell.accuracy - sum(cell.accuracies) / 10) < 1e-12


def test_grid_deterministic(tmp_path):
    conds = [ev.EvalCondition(32, 1, 2), ev.EvalCondition(64, 3, 1)]
    src = tiny_source(images_per_device=20)
    a = ev.run_grid(src, conds, seed=5, cfg=ev.PipelineConfig(threads=1, mcd_starts=50))
    b = ev.run_grid(src, conds, seed=5,
                    cfg=ev.PipelineConfig(threads=2, mcd_starts=50, cache_bytes=0))
    assert a.to_csv() == b.to_csv()
    a.write(tmp_path / "a")
    b.write(tmp_path / "b")
    for f in sorted((tmp_path / "a").iterdir()):
        assert f.read_bytes() == (tmp_path / "b" / f.name).read_bytes()


def test_grid_shortfall_names_device():
    with pytest.raises(ConfigurationError, match="short by"):
        ev.run_grid(tiny_source(), [ev.EvalCondition(32, 7, 1)], ["prnu"])


def test_grid_unknown_method():
    with pytest.raises(ArgumentError):
        ev.run_grid(tiny_source(), [ev.EvalCondition(32, 1, 1)], ["knn"])


def test_role_overlap_rejected():
    recs = [ManifestRecord("a", "M", "D", Role.reference)]
    man = DatasetManifest(recs)
    object.__setattr__(man, "records", recs + [ManifestRecord("a", "M", "D", Role.test)])
    with pytest.raises(ConfigurationError):
        ev.check_roles(man)


def test_reference_sampling_without_replacement():
    src = tiny_source()
    groups = ev.check_roles(src.manifest)
    picks = ev.sample_references(groups, 6, seed=0, repetition=0)
    for dev, recs in picks.items():
        assert len({r.path for r in recs}) == 6
        assert all(r.role is Role.reference for r in recs)
    a = ev.sample_references(groups, 3, seed=0, repetition=0)
    b = ev.sample_references(groups, 3, seed=0, repetition=1)
    assert a == ev.sample_references(groups, 3, seed=0, repetition=0)
    assert a != b


def test_fusion_beats_prnu_at_full_crop():
    src = SimulatedSource(SimConfig(images_per_device=20))
    c = ev.EvalCondition(256, 10, 1)
    rep = ev.run_grid(src, [c], ["prnu", "fld"], seed=1)
    assert rep.cell(c, "fld").accuracy > rep.cell(c, "prnu").accuracy
