import numpy as np
import pytest

from corrattack.data import (
    LabeledDataset,
    SyntheticSpec,
    TimeSeries,
    base_waveform,
    gen_synthetic,
    load_ucr,
    load_ucr_dataset,
    save_ucr,
    z_normalize,
)
from corrattack.errors import (
    ConfigError,
    DegenerateSeriesError,
    EmptyInputError,
    FormatError,
    ParseError,
)
from corrattack.models import ClassifierModel, TrainConfig, train


def write(tmp_path, text, name="d.tsv"):
    p = tmp_path / name
    p.write_text(text)
    return p


def test_load_single_row(tmp_path):
    split = load_ucr(write(tmp_path, "2\t1.0\t2.0\t3.0\n"))
    assert split.label_map == {2: 0}
    ts = split.series[0]
    assert ts.label == 0
    np.testing.assert_array_equal(ts.values, [1.0, 2.0, 3.0])


def test_comma_delimiter(tmp_path):
    split = load_ucr(write(tmp_path, "1,0.5,0.25\n3,1.5,2.5\n", "d.csv"))
    assert [ts.label for ts in split.series] == [0, 1]
    np.testing.assert_array_equal(split.series[1].values, [1.5, 2.5])


def test_negative_labels_remapped(tmp_path):
    split = load_ucr(write(tmp_path, "-1\t0\t1\n1\t2\t3\n-1\t4\t5\n"))
    # oracle: dense index by rank in the sorted observed label set
    observed = sorted({-1, 1})
    expected = {lab: observed.index(lab) for lab in observed}
    assert split.label_map == expected == {-1: 0, 1: 1}
    assert [ts.label for ts in split.series] == [0, 1, 0]


def test_float_formatted_labels(tmp_path):
    split = load_ucr(write(tmp_path, "1.0000000e+00  0.1  0.2\n2.0000000e+00  0.3  0.4\n"))
    assert [ts.label for ts in split.series] == [0, 1]


def test_ragged_rows(tmp_path):
    with pytest.raises(FormatError, match="row 1"):
        load_ucr(write(tmp_path, "1\t1\t2\t3\t4\n1\t1\t2\t3\t4\t5\n"))


def test_non_numeric_field(tmp_path):
    with pytest.raises(ParseError, match=r"row 1, column 2"):
        load_ucr(write(tmp_path, "1\t1\t2\n1\t1\tabc\n"))


def test_empty_file(tmp_path):
    with pytest.raises(EmptyInputError):
        load_ucr(write(tmp_path, "\n\n"))


def test_too_few_values(tmp_path):
    with pytest.raises(FormatError):
        load_ucr(write(tmp_path, "1\t0.5\n"))


def test_round_trip_full_precision(tmp_path, rng):
    series = [TimeSeries(rng.standard_normal(17) * 10.0 ** rng.integers(-8, 8), lab) for lab in (0, 1, 1, 0)]
    label_map = {-3: 0, 7: 1}
    path = tmp_path / "out.tsv"
    save_ucr(path, series, label_map)
    back = load_ucr(path)
    assert back.label_map == label_map
    for a, b in zip(series, back.series):
        assert a.label == b.label
        assert np.array_equal(a.values, b.values)


def test_dataset_uses_joint_label_map(tmp_path):
    tr = write(tmp_path, "5\t1\t2\n9\t3\t4\n", "TRAIN.tsv")
    te = write(tmp_path, "9\t1\t2\n", "TEST.tsv")
    data = load_ucr_dataset(tr, te)
    assert data.num_classes == 2
    assert [ts.label for ts in data.test] == [1]


def test_z_normalize_hand_value():
    out = z_normalize(np.array([1.0, 3.0]))
    np.testing.assert_allclose(out, [-1.0, 1.0], atol=1e-15)


def test_z_normalize_constant():
    with pytest.raises(DegenerateSeriesError):
        z_normalize(np.array([5.0, 5.0, 5.0]))


def test_z_normalize_idempotent(rng):
    once = z_normalize(rng.standard_normal(50))
    np.testing.assert_allclose(z_normalize(once), once, atol=1e-10)


def test_z_normalize_preserves_label(rng):
    ts = TimeSeries(rng.standard_normal(8), 3)
    assert z_normalize(ts).label == 3


@pytest.mark.parametrize("n", [2, 3, 10, 257])
def test_z_normalize_moments(rng, n):
    x = rng.standard_normal(n) * 1e3 + 5e4
    out = z_normalize(x)
    assert abs(out.mean()) < 1e-10
    assert abs(np.sqrt(np.mean(out**2)) - 1.0) < 1e-10


def test_time_series_rejects_nan():
    with pytest.raises(ParseError):
        TimeSeries([1.0, np.nan])


def test_dataset_invariants():
    a = TimeSeries([0.0, 1.0], 0)
    with pytest.raises(ConfigError):
        LabeledDataset([a, TimeSeries([1.0, 0.0], 2)], [a], num_classes=2, series_length=2)
    with pytest.raises(EmptyInputError):
        LabeledDataset([a], [], num_classes=2, series_length=2)


def test_synthetic_zero_noise_is_template():
    spec = SyntheticSpec(num_classes=2, series_length=32, train_per_class=3, test_per_class=2, noise=0.0)
    data = gen_synthetic(spec, seed=1)
    for ts in data.train + data.test:
        np.testing.assert_array_equal(ts.values, base_waveform(ts.label, 2, 32))


def test_synthetic_deterministic():
    spec = SyntheticSpec(num_classes=3, series_length=20, train_per_class=4, test_per_class=2, noise=0.7)
    a, b = gen_synthetic(spec, seed=99), gen_synthetic(spec, seed=99)
    assert all(x == y for x, y in zip(a.train + a.test, b.train + b.test))
    c = gen_synthetic(spec, seed=100)
    assert not np.array_equal(a.train[0].values, c.train[0].values)


def test_synthetic_split_sizes_balanced():
    data = gen_synthetic(SyntheticSpec(3, 16, 5, 2, 0.1), seed=0)
    assert len(data.train) == 15 and len(data.test) == 6
    assert np.bincount([ts.label for ts in data.train]).tolist() == [5, 5, 5]


@pytest.mark.parametrize(
    "kwargs",
    [dict(num_classes=1), dict(series_length=8), dict(train_per_class=0), dict(noise=-1.0)],
)
def test_synthetic_rejects_bad_spec(kwargs):
    with pytest.raises(ConfigError):
        gen_synthetic(SyntheticSpec(**kwargs), seed=0)


def test_synthetic_is_learnable_by_linear_model():
    data = gen_synthetic(SyntheticSpec(2, 64, 50, 10, 0.5), seed=4)
    model, history = train(ClassifierModel.create("linear", 64, 2, seed=4), data, TrainConfig(seed=4))
    assert history.accuracy[-1] >= 0.95
