import numpy as np
import pytest

from mpcdetect.data import load_pdp_csv
from mpcdetect.errors import ParameterError, PlacementError
from mpcdetect.synth import (
    SynthDatasetSpec,
    SynthParams,
    generate_dataset,
    generate_pdp,
    load_spec,
    save_spec,
    spec_from_text,
    spec_to_text,
)

# upper 1% point of the chi-square distribution with 5 degrees of freedom
CHI2_5_P01 = 15.086


def test_single_noiseless_peak_is_local_max():
    params = SynthParams(n_peaks=(1, 1), noise_sigma_db=0.0)
    rec = generate_pdp(params, 3)
    assert len(rec.labels) == 1
    i = rec.labels[0]
    assert rec.powers[i] > rec.powers[i - 1] and rec.powers[i] > rec.powers[i + 1]


@pytest.mark.parametrize("seed", range(40))
def test_labels_are_local_maxima_of_clean_signal(seed):
    rec, clean = generate_pdp(SynthParams(), seed, return_clean=True)
    for i in rec.labels:
        assert clean[i] > clean[i - 1] and clean[i] > clean[i + 1]
    assert np.all(np.diff(rec.labels) >= SynthParams().min_peak_separation)


def test_determinism():
    a = generate_pdp(SynthParams(), 77)
    b = generate_pdp(SynthParams(), 77)
    assert a.powers.tobytes() == b.powers.tobytes() and a.labels == b.labels


def test_peak_count_histogram_is_uniform():
    params = SynthParams()
    counts = np.zeros(6)
    for s in range(1000):
        counts[len(generate_pdp(params, s).labels) - 3] += 1
    expected = 1000 / 6
    chi2 = float(((counts - expected) ** 2 / expected).sum())
    assert chi2 < CHI2_5_P01, counts


def test_noise_floor_before_first_arrival():
    params = SynthParams()
    means = []
    for s in range(30):
        rec = generate_pdp(params, s)
        lead = params.first_arrival_index[0]
        means.append(rec.powers[:lead].mean())
    assert abs(np.mean(means) - params.noise_floor_db) <= 0.5


def test_parameter_validation():
    with pytest.raises(ParameterError):
        SynthParams(n_peaks=(0, 3))
    with pytest.raises(ParameterError):
        SynthParams(n_peaks=(5, 3))
    with pytest.raises(ParameterError):
        SynthParams(peak_power_db=(4.0, 10.0), noise_sigma_db=1.5)
    with pytest.raises(ParameterError):
        SynthParams(min_peak_separation=0)


def test_impossible_placement():
    params = SynthParams(length=120, n_peaks=(8, 8), min_peak_separation=30,
                         first_arrival_index=(20, 20))
    with pytest.raises(PlacementError):
        generate_pdp(params, 0)


def test_small_dataset():
    s = generate_dataset(SynthDatasetSpec(2, SynthParams(length=200, first_arrival_index=(10, 20))))
    assert s.ids == [0, 1] and s.length == 200


def test_reference_dataset_roundtrip(tmp_path):
    spec = SynthDatasetSpec(80, SynthParams(seed=42))
    s = generate_dataset(spec, tmp_path / "pdp.csv")
    assert len(s) == 80 and s.length == 820
    back = load_pdp_csv(tmp_path / "pdp.csv")
    assert back.ids == s.ids
    assert all(a.labels == b.labels for a, b in zip(s.records, back.records))

    reloaded = load_spec(tmp_path / "pdp_spec.txt")
    assert reloaded == spec
    generate_dataset(reloaded, tmp_path / "again.csv")
    assert (tmp_path / "again.csv").read_bytes() == (tmp_path / "pdp.csv").read_bytes()


def test_spec_text_roundtrip(tmp_path):
    spec = SynthDatasetSpec(12, SynthParams(seed=9, n_peaks=(2, 4), noise_sigma_db=1.0))
    assert spec_from_text(spec_to_text(spec)) == spec
    save_spec(spec, tmp_path / "s.txt")
    assert load_spec(tmp_path / "s.txt") == spec
