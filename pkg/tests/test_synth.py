import json

import numpy as np
import pytest

from specal import preprocess as pp
from specal import synth
from specal.errors import ParameterError
from specal.spectra import load_csv
from specal.synth import Peak, SynthConfig, generate


@pytest.fixture(scope="module")
def default():
    return generate(SynthConfig(seed=0))


def test_default_shape(default):
    data, truth = default
    assert (data.n_samples, data.n_wavelengths) == (660, 331)
    assert np.all(data.samples > 0)
    assert np.array_equal(data.targets, truth.days)
    # every egg once per day
    for d in range(22):
        assert sorted(truth.eggs[truth.days == d]) == list(range(30))


def test_same_day_identical_without_variation():
    cfg = SynthConfig(n_eggs=4, n_days=5, noise_sd=0, scatter=False, egg_amplitude_sd=0, egg_gain_sd=0, egg_offset_sd=0)
    data, truth = generate(cfg)
    for d in range(5):
        rows = data.samples[truth.days == d]
        assert np.all(rows == rows[0])


def test_deterministic_per_seed():
    a, _ = generate(SynthConfig(n_eggs=3, n_days=4, seed=7))
    b, _ = generate(SynthConfig(n_eggs=3, n_days=4, seed=7))
    c, _ = generate(SynthConfig(n_eggs=3, n_days=4, seed=8))
    assert np.array_equal(a.samples, b.samples) and not np.array_equal(a.samples, c.samples)


def test_ridge_learnability_certificate(default):
    data, truth = default
    r2 = synth.ridge_cv_r2(pp.snv(truth.noiseless), data.targets)
    assert r2 >= 0.99


def test_snv_removes_injected_scatter():
    base = dict(noise_sd=0.0, seed=2)
    d_on, _ = generate(SynthConfig(scatter=True, **base))
    d_off, _ = generate(SynthConfig(scatter=False, **base))
    r_on = synth.ridge_cv_r2(pp.snv(d_on.samples), d_on.targets)
    r_off = synth.ridge_cv_r2(pp.snv(d_off.samples), d_off.targets)
    assert r_off - r_on < 0.05


def test_uninformative_wavelengths_carry_no_day_signal(default):
    _, truth = default
    other = np.setdiff1d(np.arange(331), truth.informative)
    X = truth.noiseless[:, other]
    # partial out the egg: what remains must not move with the day
    resid = X.copy()
    for e in range(30):
        rows = truth.eggs == e
        resid[rows] -= X[rows].mean(axis=0)
    assert np.max(np.abs(resid)) < 1e-14


def test_informative_fraction(default):
    _, truth = default
    assert truth.informative_fraction == pytest.approx(0.2, abs=0.005)
    assert np.all(np.diff(truth.informative) == 1)


def test_fixture_round_trip(tmp_path):
    data, truth = generate(SynthConfig(n_eggs=5, n_days=6, seed=1))
    csv_path, truth_path = synth.save_fixture(data, truth, tmp_path / "fx")
    back = load_csv(csv_path)
    assert np.array_equal(back.samples, data.samples)
    assert np.array_equal(back.targets, data.targets)
    t = json.loads(truth_path.read_text())
    assert t["days"] == [int(v) for v in back.targets]
    assert set(t["informative_indices"]) <= set(range(back.n_wavelengths))
    loaded, doc = synth.load_fixture(tmp_path / "fx")
    assert loaded.sample_ids == data.sample_ids and doc["schema"] == synth.TRUTH_SCHEMA


@pytest.mark.parametrize("kw", [
    dict(n_days=1), dict(noise_sd=-1), dict(informative_fraction=0), dict(peaks=(Peak(1200, 5, 0.1),)),
    dict(scatter_slope=(1.1, 0.9)), dict(band_center_nm=500),
])
def test_config_validation(kw):
    with pytest.raises(ParameterError):
        SynthConfig(**kw)
