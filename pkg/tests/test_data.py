import numpy as np
import pytest

from mpcdetect.data import (
    AugmentConfig,
    ChunkConfig,
    NormalizedPdp,
    PdpRecord,
    PdpSet,
    augment_dataset,
    augment_noise,
    augment_roll,
    binary_to_labels,
    chunk_offsets,
    chunk_sequence,
    denormalize,
    label_path_for,
    labels_to_binary,
    load_pdp_csv,
    normalize_minmax,
    reassemble,
    split_alternating,
    write_pdp_csv,
)
from mpcdetect.errors import (
    DegenerateInputError,
    InsufficientDataError,
    ParameterError,
    ParseError,
    SchemaError,
    ValidationError,
)

from oracles import synth_fixture_rows


def write_pair(tmp_path, pdp_text, label_text, name="pdp.csv"):
    path = tmp_path / name
    path.write_text(pdp_text, encoding="utf-8")
    label_path_for(path).write_text(label_text, encoding="utf-8")
    return path


def norm(values, labels=(), source_id=0):
    return NormalizedPdp(np.asarray(values, dtype=float), -100.0, -50.0, source_id, tuple(labels))


# -- loading ------------------------------------------------------------------


def test_minimal_file(tmp_path):
    rows = ["id,index,power_db"]
    rows += [f"0,{i},{-90 + i}" for i in range(4)] + [f"1,{i},{-80 - i}" for i in range(4)]
    path = write_pair(tmp_path, "\n".join(rows) + "\n", "id,peak_index\n0,2\n")
    s = load_pdp_csv(path)
    assert len(s) == 2 and s.length == 4
    assert s.by_id(0).labels == (2,)
    assert s.by_id(1).labels == ()


def test_inconsistent_lengths(tmp_path):
    rows = ["id,index,power_db"] + [f"0,{i},-90" for i in range(4)] + [f"1,{i},-90" for i in range(5)]
    path = write_pair(tmp_path, "\n".join(rows) + "\n", "id,peak_index\n")
    with pytest.raises(SchemaError):
        load_pdp_csv(path)


def test_malformed_row_names_line(tmp_path):
    text = "id,index,power_db\n0,0,-90\n0,1,oops\n"
    path = write_pair(tmp_path, text, "id,peak_index\n")
    with pytest.raises(ParseError, match="3"):
        load_pdp_csv(path)


def test_label_out_of_range(tmp_path):
    text = "id,index,power_db\n0,0,-90\n0,1,-80\n"
    path = write_pair(tmp_path, text, "id,peak_index\n0,2\n")
    with pytest.raises(ValidationError):
        load_pdp_csv(path)


def test_reference_size_fixture(tmp_path):
    pdp_text, label_text = synth_fixture_rows(80, 820)
    s = load_pdp_csv(write_pair(tmp_path, pdp_text, label_text))
    assert len(s) == 80 and s.length == 820
    assert all(len(r.labels) == 3 for r in s.records)


def test_csv_roundtrip(tmp_path):
    rng = np.random.default_rng(3)
    recs = tuple(PdpRecord(i, -100 + 40 * rng.random(30), (1, 7)) for i in range(3))
    s = PdpSet(recs, 30)
    write_pdp_csv(s, tmp_path / "a.csv")
    back = load_pdp_csv(tmp_path / "a.csv")
    for a, b in zip(s.records, back.records):
        assert a.powers.tobytes() == b.powers.tobytes()
        assert a.labels == b.labels


def test_record_invariants():
    with pytest.raises(ValidationError):
        PdpRecord(0, [1.0, np.nan])
    with pytest.raises(ValidationError):
        PdpRecord(0, [1.0, 2.0, 3.0], (2, 1))
    with pytest.raises(SchemaError):
        PdpSet((PdpRecord(0, [1.0, 2.0]), PdpRecord(0, [1.0, 2.0])), 2)


def test_binary_label_conversion():
    flags = labels_to_binary((1, 4), 6)
    np.testing.assert_array_equal(flags, [0, 1, 0, 0, 1, 0])
    assert binary_to_labels(flags) == (1, 4)


# -- normalization --------------------------------------------------------------


def test_normalize_example():
    n = normalize_minmax(PdpRecord(0, [-100.0, -90.0, -80.0]))
    np.testing.assert_allclose(n.values, [0, 0.5, 1])


def test_normalize_constant_is_degenerate():
    with pytest.raises(DegenerateInputError):
        normalize_minmax(PdpRecord(0, [-90.0, -90.0]))


@pytest.mark.parametrize("seed", range(10))
def test_normalize_roundtrip_and_bounds(seed):
    powers = -110 + 50 * np.random.default_rng(seed).random(820)
    n = normalize_minmax(PdpRecord(0, powers))
    assert n.values.min() == 0.0 and n.values.max() == 1.0
    assert np.max(np.abs(denormalize(n.values, n.scale_min, n.scale_max) - powers)) < 1e-9


# -- split ----------------------------------------------------------------------


def make_set(ids, length=4):
    return PdpSet(tuple(PdpRecord(i, np.arange(length, dtype=float)) for i in ids), length)


def test_split_examples():
    train, test = split_alternating(make_set(range(6)))
    assert train.ids == [0, 2, 4] and test.ids == [1, 3, 5]
    train, test = split_alternating(make_set([7, 9]))
    assert train.ids == [7] and test.ids == [9]
    train, test = split_alternating(make_set(range(80)))
    assert len(train) == len(test) == 40


@pytest.mark.parametrize("n", [2, 3, 7, 80, 81])
def test_split_partitions(n):
    ids = list(range(100, 100 + n))
    train, test = split_alternating(make_set(ids))
    assert set(train.ids) | set(test.ids) == set(ids)
    assert not set(train.ids) & set(test.ids)
    assert len(train) - len(test) in (0, 1)


def test_split_needs_two():
    with pytest.raises(InsufficientDataError):
        split_alternating(make_set([0]))


# -- augmentation ---------------------------------------------------------------


def test_roll_example():
    r = augment_roll(norm([0.1, 0.2, 0.3, 0.4], [1]), 1)
    np.testing.assert_array_equal(r.values, [0.4, 0.1, 0.2, 0.3])
    assert r.labels == (2,)


@pytest.mark.parametrize("shift", [0, 4, -4])
def test_roll_identity(shift):
    rec = norm([0.1, 0.2, 0.3, 0.4], [1, 3])
    r = augment_roll(rec, shift)
    np.testing.assert_array_equal(r.values, rec.values)
    assert r.labels == rec.labels


def test_roll_group_law():
    rng = np.random.default_rng(0)
    L = 50
    rec = norm(rng.random(L), [3, 20, 49])
    for _ in range(50):
        a, b = (int(v) for v in rng.integers(-L + 1, L, size=2))
        lhs = augment_roll(augment_roll(rec, a), b)
        rhs = augment_roll(rec, (a + b) % L)
        np.testing.assert_array_equal(lhs.values, rhs.values)
        assert lhs.labels == rhs.labels


def test_noise_zero_sigma_and_determinism():
    rec = norm(np.linspace(0, 1, 20))
    assert augment_noise(rec, 0.0, 5).values is rec.values
    a = augment_noise(rec, 0.02, 9).values
    b = augment_noise(rec, 0.02, 9).values
    assert a.tobytes() == b.tobytes()
    assert a.min() >= 0 and a.max() <= 1
    with pytest.raises(ParameterError):
        augment_noise(rec, -0.1, 0)


def test_noise_sample_std():
    # values sit 50 sigma from both clamps, so clamping never triggers
    rec = norm(np.full(1_000_000, 0.5))
    out = augment_noise(rec, 0.01, 1234).values
    assert 0.0095 <= (out - 0.5).std() <= 0.0105


def test_augment_dataset_layout_and_reproducibility():
    rng = np.random.default_rng(1)
    recs = [norm(rng.random(100), [10, 60], source_id=i) for i in range(3)]
    cfg = AugmentConfig(seed=5)
    out = augment_dataset(recs, cfg)
    assert len(out) == 3 * 11
    assert [r.variant for r in out[:11]] == list(range(11))
    assert {r.source_id for r in out[:11]} == {0}
    again = augment_dataset(recs, cfg)
    assert all(a.values.tobytes() == b.values.tobytes() for a, b in zip(out, again))
    # labels follow the roll: every label still sits on the shifted source sample
    for r in out[1:11]:
        assert len(r.labels) == 2


# -- chunking -----------------------------------------------------------------------


def test_chunk_examples():
    assert chunk_offsets(820, 205) == (0, 205, 410, 615)
    offs = chunk_offsets(820, 85)
    assert len(offs) == 10
    assert offs == tuple(range(0, 681, 85)) + (735,)
    assert offs[-2] + 85 - offs[-1] == 30


def test_chunk_too_long():
    with pytest.raises(ParameterError):
        chunk_sequence(np.zeros(10), 11)


@pytest.mark.parametrize("chunk", [410, 205, 85, 41])
def test_chunk_roundtrip(chunk):
    x = np.random.default_rng(chunk).random((3, 820))
    chunks, plan = chunk_sequence(x, ChunkConfig(chunk))
    assert all(c.shape == (3, chunk) for c in chunks)
    np.testing.assert_array_equal(reassemble(chunks, plan), x)


def test_reassemble_later_chunk_wins():
    chunks, plan = chunk_sequence(np.arange(10.0), 4)
    assert plan.offsets == (0, 4, 6)
    marked = [np.zeros(4), np.ones(4), np.full(4, 2.0)]
    np.testing.assert_array_equal(reassemble(marked, plan), [0, 0, 0, 0, 1, 1, 2, 2, 2, 2])
